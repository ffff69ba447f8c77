"""Line-oriented ``key = value`` experiment configuration.

Grammar::

    line     := blank | comment | entry
    comment  := '#' anything
    entry    := key '=' value [ '#' comment ]
    key      := section ('.' section)*       e.g. train.epochs, attack.fgsm.epsilon

Lists are comma separated (``train.milestones = 100, 150``), booleans are
``true``/``false``, and an empty value means "empty list" for list keys.
Attacks are declared as named sections: ``attack.<name>.<field>``.
Every key is checked against a schema; unknown keys and duplicates are
errors reported with their line number.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path

from .adversarial import AttackConfig
from .training import TrainConfig


class ConfigError(ValueError):
    def __init__(self, message: str, source: str = "<config>", line: int | None = None):
        self.source = source
        self.line = line
        where = f"{source}:{line}: " if line is not None else f"{source}: "
        super().__init__(where + message)


def _bool(text: str) -> bool:
    low = text.lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _int_list(text: str) -> tuple[int, ...]:
    return tuple(int(t) for t in text.split(",") if t.strip()) if text.strip() else ()


def _choice(*options):
    def parse(text: str) -> str:
        if text not in options:
            raise ValueError(f"expected one of {', '.join(options)}, got {text!r}")
        return text

    return parse


def _clip(text: str):
    if text in ("none", "auto"):
        return text
    lo, hi = (float(t) for t in text.split(","))
    return (lo, hi)


SCHEMA = {
    "seed": int,
    "out": str,
    "dataset.kind": _choice("spirals", "two_moons", "idx"),
    "dataset.n": int,
    "dataset.noise": float,
    "dataset.classes": int,
    "dataset.turns": float,
    "dataset.radius": float,
    "dataset.train_fraction": float,
    "dataset.seed": int,
    "dataset.standardize": _bool,
    "dataset.train_images": str,
    "dataset.train_labels": str,
    "dataset.test_images": str,
    "dataset.test_labels": str,
    "dataset.num_classes": int,
    "dataset.train_limit": int,
    "dataset.test_limit": int,
    "model.hidden": _int_list,
    "train.mode": _choice("baseline_ce", "cot"),
    "train.epochs": int,
    "train.batch_size": int,
    "train.lr": float,
    "train.milestones": _int_list,
    "train.lr_factor": float,
    "train.momentum": float,
    "train.weight_decay": float,
    "train.shared_velocity": _bool,
    "train.complement_batch": _choice("same", "fresh"),
    "train.normalized_complement": _bool,
    "eval.export_embeddings": _bool,
    "compare.seeds": _int_list,
    "compare.figures": _bool,
}

ATTACK_SCHEMA = {
    "kind": _choice("fgsm", "ifgsm"),
    "epsilon": float,
    "iterations": int,
    "step_size": float,
    "clip": _clip,
    "gradient_mode": _choice("auto", "primary_only", "primary_plus_complement"),
    "complement_sign": _choice("minimized", "maximized"),
    "allow_large_epsilon": _bool,
    "export_idx": _bool,
}

DEFAULTS = {
    "seed": 0,
    "out": "runs/default",
    "dataset.kind": "spirals",
    "dataset.n": 2000,
    "dataset.noise": 0.25,
    "dataset.classes": 3,
    "dataset.turns": 1.0,
    "dataset.radius": 3.0,
    "dataset.train_fraction": 0.75,
    "model.hidden": (64, 64),
    "eval.export_embeddings": False,
    "compare.seeds": (1, 2, 3, 4, 5),
    "compare.figures": True,
}


@dataclass
class AttackSpec:
    name: str
    config: AttackConfig
    clip: object = "auto"
    export_idx: bool = False


@dataclass
class ExperimentConfig:
    values: dict
    attacks: list[AttackSpec] = field(default_factory=list)
    source: str = "<config>"
    text_hash: str = ""

    def get(self, key: str, default=None):
        if key in self.values:
            return self.values[key]
        return DEFAULTS.get(key, default)

    @property
    def seed(self) -> int:
        return int(self.get("seed"))

    @property
    def out_dir(self) -> Path:
        return Path(self.get("out"))

    def train_config(self, seed: int | None = None, mode: str | None = None) -> TrainConfig:
        tc = TrainConfig(seed=self.seed if seed is None else seed)
        for key, val in self.values.items():
            if key.startswith("train."):
                setattr(tc, key[len("train."):], val)
        if mode is not None:
            tc.mode = mode
        return tc

    def config_hash(self) -> str:
        """Stable hash of the effective settings.

        The seed (recorded separately) and output location are excluded so
        per-seed runs of one experiment share a hash.
        """
        lines = [f"{k}={self.values[k]!r}" for k in sorted(self.values) if k not in ("out", "seed")]
        for spec in self.attacks:
            lines.append(f"attack.{spec.name}={spec.config!r},{spec.clip!r},{spec.export_idx}")
        return hashlib.sha256("\n".join(lines).encode("utf-8")).hexdigest()[:16]

    def provenance(self, seed: int | None = None) -> dict:
        return {"config_hash": self.config_hash(), "seed": self.seed if seed is None else seed}

    def with_overrides(self, seed: int | None = None, out: str | None = None) -> "ExperimentConfig":
        values = dict(self.values)
        if seed is not None:
            values["seed"] = seed
        if out is not None:
            values["out"] = out
        return ExperimentConfig(values, self.attacks, self.source, self.text_hash)


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    values: dict = {}
    attack_fields: dict[str, dict] = {}
    seen: dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", source, lineno)
        key, value = (part.strip() for part in line.split("=", 1))
        if key in seen:
            raise ConfigError(f"duplicate key {key!r} (first set on line {seen[key]})", source, lineno)
        seen[key] = lineno
        if key.startswith("attack."):
            parts = key.split(".")
            if len(parts) != 3 or parts[2] not in ATTACK_SCHEMA or not parts[1]:
                raise ConfigError(f"unknown attack key {key!r}; use attack.<name>.<field>", source, lineno)
            parser = ATTACK_SCHEMA[parts[2]]
            target = attack_fields.setdefault(parts[1], {"_line": lineno})
            field_name = parts[2]
        elif key in SCHEMA:
            parser = SCHEMA[key]
            target = values
            field_name = key
        else:
            raise ConfigError(f"unknown key {key!r}", source, lineno)
        try:
            target[field_name] = parser(value)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r}: {exc}", source, lineno) from None

    attacks = []
    for name, fields in attack_fields.items():
        line = fields.pop("_line")
        clip = fields.pop("clip", "auto")
        export = fields.pop("export_idx", False)
        cfg = AttackConfig(**fields)
        try:
            cfg.validate()
        except ValueError as exc:
            raise ConfigError(f"attack {name!r}: {exc}", source, line) from None
        attacks.append(AttackSpec(name, cfg, clip, export))

    cfg = ExperimentConfig(values, attacks, source, hashlib.sha256(text.encode("utf-8")).hexdigest()[:16])
    try:
        cfg.train_config().validate()
    except ValueError as exc:
        named = [ln for k, ln in seen.items() if k in str(exc)]
        key_line = named[0] if named else None
        raise ConfigError(str(exc), source, key_line) from None
    if cfg.get("dataset.kind") == "idx":
        for key in ("dataset.train_images", "dataset.train_labels"):
            if key not in values:
                raise ConfigError(f"dataset.kind=idx requires {key}", source)
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", str(path)) from None
    return parse_config(text, str(path))
