"""Cross entropy, complement entropy and their gradients w.r.t. logits.

The complement objective is handled as a loss to be *minimized*: the negative
complement entropy (normalized by K - 1 unless asked otherwise).  That way the
same SGD code path serves both updates of a COT step.

A useful identity: restricted to the complement classes, the renormalized
probabilities ``p_j / (1 - p_g)`` are exactly a softmax over the complement
logits.  The complement entropy therefore does not depend on the ground-truth
logit at all, and its gradient in that coordinate is zero.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .numerics import InputError, as_tensor, check_finite, log_sum_exp_rows, softmax

EPS_P = 1e-12


@dataclass
class LossResult:
    value: float
    grad_logits: np.ndarray


def check_labels(labels, n: int, k: int) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.ndim != 1 or labels.shape[0] != n:
        raise InputError(f"expected {n} labels, got shape {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise InputError(f"labels must lie in [0, {k - 1}], got range [{labels.min()}, {labels.max()}]")
    return labels.astype(np.int64)


def cross_entropy(logits, labels) -> LossResult:
    """Mean softmax cross entropy of the ground-truth classes.

    Returns the loss together with ``(softmax(logits) - onehot(labels)) / N``.
    """
    z = as_tensor(logits, 2, "logits")
    check_finite(z, "logits")
    n, k = z.shape
    g = check_labels(labels, n, k)
    rows = np.arange(n)
    lse = log_sum_exp_rows(z)
    value = float(np.mean(lse - z[rows, g]))
    grad = softmax(z)
    grad[rows, g] -= 1.0
    grad /= n
    return LossResult(max(value, 0.0), grad)


def _complement_terms(probs: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Per-sample entropy of the complement distribution, shape (N,)."""
    n, k = probs.shape
    rows = np.arange(n)
    mask = np.ones_like(probs, dtype=bool)
    mask[rows, g] = False
    comp = np.where(mask, probs, 0.0)
    mass = comp.sum(axis=1)
    live = mass > EPS_P
    q = np.zeros_like(probs)
    q[live] = comp[live] / mass[live, None]
    keep = mask & (q > EPS_P)
    plogp = np.zeros_like(q)
    plogp[keep] = q[keep] * np.log(q[keep])
    # rounding can push a uniform complement one ulp past ln(K-1)
    h = np.clip(-plogp.sum(axis=1), 0.0, np.log(k - 1) if k > 1 else 0.0)
    h[~live] = 0.0
    return h


def _check_probs(probs, labels) -> tuple[np.ndarray, np.ndarray]:
    p = as_tensor(probs, 2, "probs")
    check_finite(p, "probs")
    n, k = p.shape
    if k < 2:
        raise InputError(f"complement entropy needs K >= 2 classes, got K={k}")
    if np.any(p < 0) or np.any(np.abs(p.sum(axis=1) - 1.0) > 1e-9):
        raise InputError("probs rows must lie on the probability simplex")
    return p, check_labels(labels, n, k)


def complement_entropy(probs, labels) -> float:
    """Mean Shannon entropy of each row's complement-class distribution.

    Every row ``i`` is restricted to the classes ``j != labels[i]`` and
    renormalized by ``1 - probs[i, labels[i]]`` before taking the entropy.
    Terms with probability below ``EPS_P`` count as zero, and rows whose
    complement mass is at most ``EPS_P`` contribute zero.
    """
    p, g = _check_probs(probs, labels)
    k = p.shape[1]
    return float(min(np.mean(_complement_terms(p, g)), np.log(k - 1)))


def normalized_complement_entropy(probs, labels) -> float:
    p, _ = _check_probs(probs, labels)
    return complement_entropy(probs, labels) / (p.shape[1] - 1)


def complement_loss(logits, labels, normalized: bool = True) -> LossResult:
    """Negative (normalized) complement entropy of ``softmax(logits)``.

    Works on logits directly: the complement distribution of row ``i`` is
    ``q = softmax(z_i)`` over the classes ``j != g_i``.  With ``H`` its
    entropy, ``dH/dz_j = -q_j (log q_j + H)`` for ``j != g`` and 0 for
    ``j == g``.  The ``EPS_P`` conventions match :func:`complement_entropy`.
    """
    z = as_tensor(logits, 2, "logits")
    check_finite(z, "logits")
    n, k = z.shape
    if k < 2:
        raise InputError(f"complement loss needs K >= 2 classes, got K={k}")
    g = check_labels(labels, n, k)
    rows = np.arange(n)
    scale = 1.0 / (k - 1) if normalized else 1.0

    zc = z.copy()
    zc[rows, g] = -np.inf
    lse_c = log_sum_exp_rows(zc)
    log_q = zc - lse_c[:, None]
    log_q[rows, g] = 0.0
    q = np.exp(log_q)
    q[rows, g] = 0.0
    plogp = np.where(q > EPS_P, q * log_q, 0.0)
    h = -plogp.sum(axis=1)
    # complement mass 1 - p_g, from logits to avoid cancellation
    live = np.exp(lse_c - np.logaddexp(lse_c, z[rows, g])) > EPS_P
    h[~live] = 0.0

    grad = q * (log_q + h[:, None])
    grad[~live] = 0.0
    grad *= scale / n
    return LossResult(-float(np.mean(h)) * scale, grad)


def finite_difference_grad(
    loss_fn: Callable[[np.ndarray, np.ndarray], float | LossResult],
    logits,
    labels,
    step: float = 1e-5,
) -> np.ndarray:
    """Central-difference gradient of ``loss_fn(logits, labels)`` w.r.t. logits."""
    if not step > 0:
        raise InputError(f"finite-difference step must be positive, got {step}")
    z = as_tensor(logits, 2, "logits").copy()
    check_finite(z, "logits")

    def f(x):
        out = loss_fn(x, labels)
        return out.value if isinstance(out, LossResult) else float(out)

    grad = np.zeros_like(z)
    for idx in np.ndindex(*z.shape):
        orig = z[idx]
        z[idx] = orig + step
        up = f(z)
        z[idx] = orig - step
        down = f(z)
        z[idx] = orig
        grad[idx] = (up - down) / (2.0 * step)
    return grad


def max_relative_error(a, b) -> float:
    """Norm-wise relative error ``max|a - b| / max(max|a|, max|b|)``.

    Element-wise ratios are meaningless where a gradient entry is ~0, so the
    error is measured against the largest magnitude in either tensor.
    Two all-zero tensors have error 0.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size == 0:
        return 0.0
    scale = max(np.abs(a).max(), np.abs(b).max())
    diff = np.abs(a - b).max()
    if scale == 0.0:
        return 0.0
    return float(diff / scale)
