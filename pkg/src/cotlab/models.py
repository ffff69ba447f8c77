"""ReLU multilayer perceptron with hand-written forward and backward passes.

Checkpoint layout (all integers little-endian ``uint32``, reals ``<f8``)::

    magic        8 bytes  b"COTCKPT\\x00"
    version      uint32   (currently 1)
    input_dim    uint32
    n_hidden     uint32
    hidden_dims  n_hidden x uint32
    num_classes  uint32
    activation   uint32   (0 = relu)
    meta_len     uint32
    meta         meta_len bytes of UTF-8 JSON (provenance, training mode)
    per layer, in order: weight (out x in, row-major) then bias (out)
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .numerics import DimensionError, InputError, Rng, as_tensor, check_finite

CKPT_MAGIC = b"COTCKPT\x00"
CKPT_VERSION = 1
_ACTIVATIONS = {"relu": 0}


class CheckpointError(ValueError):
    pass


@dataclass(frozen=True)
class MlpArchitecture:
    input_dim: int
    hidden_dims: tuple[int, ...]
    num_classes: int
    activation: str = "relu"

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        if self.input_dim < 1 or any(h < 1 for h in self.hidden_dims):
            raise InputError(f"layer widths must be positive: {self.widths}")
        if self.num_classes < 2:
            raise InputError(f"num_classes must be >= 2, got {self.num_classes}")
        if self.activation not in _ACTIVATIONS:
            raise InputError(f"unsupported activation {self.activation!r}")

    @property
    def widths(self) -> list[int]:
        return [self.input_dim, *self.hidden_dims, self.num_classes]

    def layer_shapes(self) -> list[tuple[int, int]]:
        w = self.widths
        return [(w[i + 1], w[i]) for i in range(len(w) - 1)]


@dataclass
class ModelState:
    """Architecture plus ``[(weight, bias), ...]``; weights are (out, in).

    ``version`` is bumped on every in-place parameter update so a stale
    forward trace can be detected in :func:`backward`.
    """

    arch: MlpArchitecture
    layers: list[tuple[np.ndarray, np.ndarray]]
    meta: dict = field(default_factory=dict)
    version: int = 0

    def __post_init__(self):
        shapes = self.arch.layer_shapes()
        if len(shapes) != len(self.layers):
            raise DimensionError(f"expected {len(shapes)} layers, got {len(self.layers)}")
        for i, ((w, b), (o, n)) in enumerate(zip(self.layers, shapes)):
            if w.shape != (o, n) or b.shape != (o,):
                raise DimensionError(
                    f"layer {i}: expected weight {(o, n)} and bias {(o,)}, got {w.shape} and {b.shape}"
                )

    def parameters(self) -> list[np.ndarray]:
        return [p for layer in self.layers for p in layer]

    def copy(self) -> "ModelState":
        return ModelState(
            self.arch,
            [(w.copy(), b.copy()) for w, b in self.layers],
            dict(self.meta),
            self.version,
        )

    def bump(self) -> None:
        self.version += 1


@dataclass
class ForwardTrace:
    inputs: np.ndarray
    pre_activations: list[np.ndarray]
    activations: list[np.ndarray]
    logits: np.ndarray
    model_id: int
    model_version: int


def init_model(arch: MlpArchitecture, rng: Rng) -> ModelState:
    """He-normal weights (std ``sqrt(2 / fan_in)``) and zero biases."""
    layers = []
    for out_dim, in_dim in arch.layer_shapes():
        w = rng.normal((out_dim, in_dim), scale=np.sqrt(2.0 / in_dim))
        layers.append((w, np.zeros(out_dim)))
    return ModelState(arch, layers)


def zero_model(arch: MlpArchitecture) -> ModelState:
    return ModelState(arch, [(np.zeros(s), np.zeros(s[0])) for s in arch.layer_shapes()])


def forward(model: ModelState, inputs) -> ForwardTrace:
    x = as_tensor(inputs, 2, "inputs")
    if x.shape[1] != model.arch.input_dim:
        raise DimensionError(
            f"input width {x.shape[1]} does not match model input_dim {model.arch.input_dim}"
        )
    pre, act = [], []
    h = x
    last = len(model.layers) - 1
    for i, (w, b) in enumerate(model.layers):
        a = h @ w.T + b
        if i == last:
            logits = a
            break
        pre.append(a)
        h = np.maximum(a, 0.0)
        act.append(h)
    return ForwardTrace(x, pre, act, logits, id(model), model.version)


def backward(model: ModelState, trace: ForwardTrace, grad_logits, need_input_grad: bool = False):
    """Backpropagate ``grad_logits`` through the network.

    Returns a list of ``(dW, db)`` per layer, plus the gradient w.r.t. the
    inputs when ``need_input_grad`` is set.  The ReLU derivative at exactly
    zero is taken to be zero.
    """
    if trace.model_id != id(model) or trace.model_version != model.version:
        raise InputError("forward trace is stale or belongs to a different model")
    g = as_tensor(grad_logits, 2, "grad_logits")
    if g.shape != trace.logits.shape:
        raise DimensionError(f"grad_logits shape {g.shape} does not match logits {trace.logits.shape}")
    grads: list[tuple[np.ndarray, np.ndarray]] = [None] * len(model.layers)  # type: ignore[list-item]
    for i in range(len(model.layers) - 1, -1, -1):
        w, _ = model.layers[i]
        below = trace.activations[i - 1] if i > 0 else trace.inputs
        grads[i] = (g.T @ below, g.sum(axis=0))
        if i > 0:
            g = (g @ w) * (trace.pre_activations[i - 1] > 0.0)
        elif need_input_grad:
            g = g @ w
    if need_input_grad:
        return grads, g
    return grads


def embeddings(model: ModelState, inputs) -> np.ndarray:
    """Pre-softmax logit vectors, one row per input."""
    return forward(model, inputs).logits


def save_checkpoint(model: ModelState, path, meta: dict | None = None) -> None:
    arch = model.arch
    info = dict(model.meta)
    if meta:
        info.update(meta)
    blob = json.dumps(info, sort_keys=True).encode("utf-8")
    parts = [
        CKPT_MAGIC,
        struct.pack("<III", CKPT_VERSION, arch.input_dim, len(arch.hidden_dims)),
        struct.pack(f"<{len(arch.hidden_dims)}I", *arch.hidden_dims),
        struct.pack("<III", arch.num_classes, _ACTIVATIONS[arch.activation], len(blob)),
        blob,
    ]
    for w, b in model.layers:
        parts.append(np.ascontiguousarray(w, dtype="<f8").tobytes())
        parts.append(np.ascontiguousarray(b, dtype="<f8").tobytes())
    Path(path).write_bytes(b"".join(parts))


def load_checkpoint(path) -> ModelState:
    data = Path(path).read_bytes()
    if data[:8] != CKPT_MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (magic {data[:8]!r})")
    pos = 8

    def take(fmt):
        nonlocal pos
        size = struct.calcsize(fmt)
        if pos + size > len(data):
            raise CheckpointError(f"{path}: truncated checkpoint")
        out = struct.unpack_from(fmt, data, pos)
        pos += size
        return out

    version, input_dim, n_hidden = take("<III")
    if version != CKPT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    hidden = take(f"<{n_hidden}I")
    num_classes, act_code, meta_len = take("<III")
    act = {v: k for k, v in _ACTIVATIONS.items()}.get(act_code)
    if act is None:
        raise CheckpointError(f"{path}: unknown activation code {act_code}")
    meta = json.loads(data[pos : pos + meta_len].decode("utf-8"))
    pos += meta_len
    arch = MlpArchitecture(input_dim, hidden, num_classes, act)
    need = 8 * sum(o * n + o for o, n in arch.layer_shapes())
    if len(data) - pos < need:
        raise CheckpointError(f"{path}: truncated checkpoint ({len(data) - pos} of {need} parameter bytes)")
    layers = []
    for o, n in arch.layer_shapes():
        w = np.frombuffer(data, dtype="<f8", count=o * n, offset=pos).reshape(o, n).astype(np.float64)
        pos += 8 * o * n
        b = np.frombuffer(data, dtype="<f8", count=o, offset=pos).astype(np.float64)
        pos += 8 * o
        layers.append((w, b))
    if pos != len(data):
        raise CheckpointError(f"{path}: {len(data) - pos} trailing bytes")
    model = ModelState(arch, layers, meta)
    for w, b in model.layers:
        check_finite(w, "weight")
        check_finite(b, "bias")
    return model
