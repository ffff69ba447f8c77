"""FGSM / I-FGSM attacks, white-box and transfer evaluation."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .models import ModelState, backward, forward
from .numerics import DimensionError, InputError, argmax_rows, as_tensor
from .objectives import complement_loss, cross_entropy

MAX_EPSILON = 0.1
GRADIENT_MODES = ("auto", "primary_only", "primary_plus_complement")


@dataclass
class AttackConfig:
    kind: str = "fgsm"
    epsilon: float = 0.1
    iterations: int = 10
    step_size: float | None = None
    clip_range: tuple[float, float] | None = None
    gradient_mode: str = "auto"
    # "minimized": gradient of -C' (the complement loss as trained);
    # "maximized": gradient of +C'
    complement_sign: str = "minimized"
    allow_large_epsilon: bool = False

    def validate(self) -> None:
        if self.kind not in ("fgsm", "ifgsm"):
            raise InputError(f"attack kind must be fgsm or ifgsm, got {self.kind!r}")
        if self.epsilon < 0:
            raise InputError(f"epsilon must be >= 0, got {self.epsilon}")
        if self.epsilon > MAX_EPSILON and not self.allow_large_epsilon:
            raise InputError(f"epsilon {self.epsilon} exceeds {MAX_EPSILON}; set allow_large_epsilon to override")
        if self.kind == "ifgsm":
            if self.iterations < 1:
                raise InputError(f"ifgsm iterations must be >= 1, got {self.iterations}")
            if self.step_size is not None and self.step_size <= 0:
                raise InputError(f"ifgsm step_size must be > 0, got {self.step_size}")
        if self.gradient_mode not in GRADIENT_MODES:
            raise InputError(f"gradient_mode must be one of {GRADIENT_MODES}, got {self.gradient_mode!r}")
        if self.complement_sign not in ("minimized", "maximized"):
            raise InputError(f"complement_sign must be minimized or maximized, got {self.complement_sign!r}")
        if self.clip_range is not None and not self.clip_range[0] < self.clip_range[1]:
            raise InputError(f"clip_range must satisfy lo < hi, got {self.clip_range}")

    @property
    def alpha(self) -> float:
        if self.kind == "fgsm":
            return self.epsilon
        return self.step_size if self.step_size is not None else self.epsilon / self.iterations

    def resolved_mode(self, source: ModelState) -> str:
        if self.gradient_mode != "auto":
            return self.gradient_mode
        return "primary_plus_complement" if source.meta.get("mode") == "cot" else "primary_only"


@dataclass
class AttackReport:
    attack: str
    protocol: str
    num_samples: int
    clean_error: float
    adversarial_error: float
    max_perturbation: float
    perturbation_norms: list[float]
    config: dict = field(default_factory=dict)

    def summary(self) -> dict:
        d = asdict(self)
        d.pop("perturbation_norms")
        return d

    def to_json(self, extra: dict | None = None) -> str:
        payload = asdict(self)
        if extra:
            payload = {**extra, **payload}
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"

    def write_csv(self, path, header_comment: str | None = None) -> None:
        with open(path, "w", newline="") as fh:
            if header_comment:
                fh.write(f"# {header_comment}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["sample", "linf_perturbation"])
            for i, v in enumerate(self.perturbation_norms):
                w.writerow([i, repr(v)])


def input_gradient(model: ModelState, inputs, labels, objective: str = "primary", complement_sign: str = "minimized") -> np.ndarray:
    """Gradient of the chosen batch loss w.r.t. the inputs.

    ``objective`` is ``primary`` (cross entropy), ``complement`` (the
    complement loss, sign per ``complement_sign``) or ``sum`` of both fields.
    """
    if objective not in ("primary", "complement", "sum"):
        raise InputError(f"unknown objective {objective!r}")
    x = as_tensor(inputs, 2, "inputs")
    trace = forward(model, x)
    total = np.zeros_like(x)
    if objective in ("primary", "sum"):
        g = cross_entropy(trace.logits, labels).grad_logits
        total = total + backward(model, trace, g, need_input_grad=True)[1]
    if objective in ("complement", "sum"):
        if model.arch.num_classes < 2:
            raise InputError("complement gradient needs K >= 2")
        g = complement_loss(trace.logits, labels).grad_logits
        if complement_sign == "maximized":
            g = -g
        total = total + backward(model, trace, g, need_input_grad=True)[1]
    return total


def _objective_for(mode: str) -> str:
    return "sum" if mode == "primary_plus_complement" else "primary"


def _clip(x: np.ndarray, clip_range) -> np.ndarray:
    if clip_range is None:
        return x
    return np.clip(x, clip_range[0], clip_range[1])


def _project(x_adv: np.ndarray, x: np.ndarray, eps: float) -> np.ndarray:
    """Pull entries back until ``|x_adv - x| <= eps`` holds in float arithmetic.

    ``fl(x + eps) - x`` can exceed ``eps`` by an ulp; stepping such entries
    one float toward ``x`` makes the bound exact as evaluated.
    """
    x_adv = np.clip(x_adv, x - eps, x + eps)
    while True:
        over = np.abs(x_adv - x) > eps
        if not over.any():
            return x_adv
        x_adv[over] = np.nextafter(x_adv[over], x[over])


def fgsm(model: ModelState, inputs, labels, config: AttackConfig, mode: str | None = None) -> np.ndarray:
    """``x + eps * sign(grad_x L)`` with sign(0) = 0, then optional clipping."""
    config.validate()
    x = as_tensor(inputs, 2, "inputs")
    if config.epsilon == 0:
        return x.copy()
    mode = mode or config.resolved_mode(model)
    grad = input_gradient(model, x, labels, _objective_for(mode), config.complement_sign)
    return _project(_clip(x + config.epsilon * np.sign(grad), config.clip_range), x, config.epsilon)


def ifgsm(model: ModelState, inputs, labels, config: AttackConfig, mode: str | None = None) -> np.ndarray:
    """Iterated FGSM, projected onto the eps-ball around the clean input each step."""
    config.validate()
    x0 = as_tensor(inputs, 2, "inputs")
    if config.epsilon == 0:
        return x0.copy()
    mode = mode or config.resolved_mode(model)
    objective = _objective_for(mode)
    lo, hi = x0 - config.epsilon, x0 + config.epsilon
    x = x0.copy()
    for _ in range(config.iterations):
        grad = input_gradient(model, x, labels, objective, config.complement_sign)
        x = np.clip(x + config.alpha * np.sign(grad), lo, hi)
        x = _clip(x, config.clip_range)
    return _project(x, x0, config.epsilon)


def generate(model: ModelState, inputs, labels, config: AttackConfig) -> np.ndarray:
    attack = fgsm if config.kind == "fgsm" else ifgsm
    return attack(model, inputs, labels, config)


def evaluate_attack(
    target: ModelState,
    source: ModelState,
    inputs,
    labels,
    config: AttackConfig,
    protocol: str | None = None,
) -> tuple[AttackReport, np.ndarray]:
    """Craft adversarial inputs against ``source`` and classify them with ``target``.

    The protocol is ``white-box`` when both are the same model and
    ``transfer`` otherwise.  Returns the report and the adversarial inputs.
    """
    config.validate()
    if source.arch.input_dim != target.arch.input_dim or source.arch.num_classes != target.arch.num_classes:
        raise DimensionError(
            f"source model ({source.arch.input_dim}->{source.arch.num_classes}) and target "
            f"({target.arch.input_dim}->{target.arch.num_classes}) dimensions differ"
        )
    x = as_tensor(inputs, 2, "inputs")
    labels = np.asarray(labels, dtype=np.int64)
    if protocol is None:
        protocol = "white-box" if source is target else "transfer"
    x_adv = generate(source, x, labels, config)
    n = x.shape[0]
    clean_pred = argmax_rows(forward(target, x).logits)
    adv_pred = argmax_rows(forward(target, x_adv).logits)
    norms = np.abs(x_adv - x).max(axis=1) if n else np.zeros(0)
    echo = asdict(config)
    echo["gradient_mode"] = config.resolved_mode(source)
    echo["alpha"] = config.alpha
    report = AttackReport(
        attack=config.kind,
        protocol=protocol,
        num_samples=n,
        clean_error=float(np.mean(clean_pred != labels)) if n else 0.0,
        adversarial_error=float(np.mean(adv_pred != labels)) if n else 0.0,
        max_perturbation=float(norms.max()) if n else 0.0,
        perturbation_norms=[float(v) for v in norms],
        config=echo,
    )
    if report.max_perturbation > config.epsilon:
        raise RuntimeError(f"perturbation {report.max_perturbation} exceeds epsilon {config.epsilon}")
    return report, x_adv
