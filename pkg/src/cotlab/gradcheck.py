"""Finite-difference verification of every analytic gradient in the package."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .models import MlpArchitecture, backward, forward, init_model
from .numerics import Rng
from .objectives import complement_loss, cross_entropy, finite_difference_grad, max_relative_error

LOSSES = {"cross_entropy": cross_entropy, "complement_loss": complement_loss}


@dataclass
class CheckResult:
    name: str
    max_rel_error: float
    worst_case: str


def check_objectives(rng: Rng, trials: int = 1000, step: float = 1e-5, corrupt: float = 0.0) -> list[CheckResult]:
    """Compare logits gradients of both losses with central differences.

    Batches have N in [1, 8] and K in [2, 12] with N(0, 3^2) logits.  A
    nonzero ``corrupt`` scales the analytic gradient (negative control).
    """
    results = []
    for name, fn in LOSSES.items():
        worst, where = 0.0, ""
        for t in range(trials):
            n, k = int(rng.integers(1, 9)), int(rng.integers(2, 13))
            z = rng.normal((n, k), scale=3.0)
            y = rng.integers(0, k, n)
            analytic = fn(z, y).grad_logits * (1.0 + corrupt)
            err = max_relative_error(analytic, finite_difference_grad(fn, z, y, step))
            if err > worst:
                worst, where = err, f"trial {t} (N={n}, K={k})"
        results.append(CheckResult(name, worst, where))
    return results


def model_param_gradients(model, x, y, loss_fn):
    trace = forward(model, x)
    return backward(model, trace, loss_fn(trace.logits, y).grad_logits)


def numeric_param_gradients(model, x, y, loss_fn, step: float = 1e-5):
    out = []
    for w, b in model.layers:
        pair = []
        for p in (w, b):
            g = np.zeros_like(p)
            for idx in np.ndindex(*p.shape):
                orig = p[idx]
                p[idx] = orig + step
                up = loss_fn(forward(model, x).logits, y).value
                p[idx] = orig - step
                down = loss_fn(forward(model, x).logits, y).value
                p[idx] = orig
                g[idx] = (up - down) / (2 * step)
            pair.append(g)
        out.append(tuple(pair))
    return out


def check_models(rng: Rng, trials: int = 20, step: float = 1e-5, corrupt: float = 0.0) -> list[CheckResult]:
    """Parameter gradients of random small MLPs against central differences.

    Models have D <= 6, up to two hidden layers of width <= 8 and K <= 5;
    both objectives are checked on every model.
    """
    results = {name: CheckResult(f"model/{name}", 0.0, "") for name in LOSSES}
    for t in range(trials):
        d = int(rng.integers(1, 7))
        hidden = tuple(int(h) for h in rng.integers(1, 9, int(rng.integers(0, 3))))
        k = int(rng.integers(2, 6))
        n = int(rng.integers(1, 9))
        model = init_model(MlpArchitecture(d, hidden, k), rng.child(f"model{t}"))
        for w, b in model.layers:
            b += rng.normal(b.shape, scale=0.1)
        x = rng.normal((n, d))
        y = rng.integers(0, k, n)
        for name, fn in LOSSES.items():
            analytic = model_param_gradients(model, x, y, fn)
            numeric = numeric_param_gradients(model, x, y, fn, step)
            a = np.concatenate([g.ravel() for pair in analytic for g in pair]) * (1.0 + corrupt)
            m = np.concatenate([g.ravel() for pair in numeric for g in pair])
            err = max_relative_error(a, m)
            if err > results[name].max_rel_error:
                results[name] = CheckResult(f"model/{name}", err, f"trial {t} (D={d}, hidden={list(hidden)}, K={k}, N={n})")
    return list(results.values())


def run_all(seed: int = 0, objective_trials: int = 1000, model_trials: int = 20, corrupt: float = 0.0) -> list[CheckResult]:
    root = Rng(seed)
    return check_objectives(root.child("objectives"), objective_trials, corrupt=corrupt) + check_models(
        root.child("models"), model_trials, corrupt=corrupt
    )
