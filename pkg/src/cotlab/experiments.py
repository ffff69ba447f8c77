"""End-to-end pipelines behind the ``train``, ``attack`` and ``compare`` commands."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .adversarial import AttackConfig, AttackReport, evaluate_attack
from .config import AttackSpec, ExperimentConfig
from .datasets import Dataset, gen_spirals, gen_two_moons, load_idx, split, standardize, write_idx
from .evaluation import EvalReport, evaluate, export_embeddings
from .models import MlpArchitecture, ModelState, save_checkpoint
from .numerics import Rng
from .training import TrainLog, run_training

log = logging.getLogger(__name__)


def build_datasets(cfg: ExperimentConfig, seed: int | None = None) -> tuple[Dataset, Dataset]:
    """Materialize the train/test pair described by ``dataset.*`` keys.

    Synthetic data is generated and split with streams derived from
    ``dataset.seed`` (falling back to the run seed), then standardized with
    training statistics.  IDX data is scaled by 1/255 only.
    """
    kind = cfg.get("dataset.kind")
    data_seed = cfg.get("dataset.seed", cfg.seed if seed is None else seed)
    rng = Rng(data_seed)
    if kind == "idx":
        k = cfg.get("dataset.num_classes")
        train = load_idx(cfg.get("dataset.train_images"), cfg.get("dataset.train_labels"), k)
        if cfg.get("dataset.test_images"):
            test = load_idx(cfg.get("dataset.test_images"), cfg.get("dataset.test_labels"), k or train.num_classes)
        else:
            train, test = split(train, cfg.get("dataset.train_fraction"), rng.child("split"))
        k = max(train.num_classes, test.num_classes)
        train.num_classes = test.num_classes = k
        if cfg.get("dataset.train_limit"):
            train = train.subset(slice(0, cfg.get("dataset.train_limit")))
        if cfg.get("dataset.test_limit"):
            test = test.subset(slice(0, cfg.get("dataset.test_limit")))
        if cfg.get("dataset.standardize", False):
            train, test, _ = standardize(train, test)
        return train, test

    n, noise = cfg.get("dataset.n"), cfg.get("dataset.noise")
    if kind == "two_moons":
        full = gen_two_moons(n, noise, rng.child("data"))
    else:
        full = gen_spirals(
            n, cfg.get("dataset.classes"), noise, rng.child("data"),
            turns=cfg.get("dataset.turns"), radius=cfg.get("dataset.radius"),
        )
    train, test = split(full, cfg.get("dataset.train_fraction"), rng.child("split"), stratified=True)
    if cfg.get("dataset.standardize", True):
        train, test, _ = standardize(train, test)
    return train, test


def architecture_for(cfg: ExperimentConfig, data: Dataset) -> MlpArchitecture:
    return MlpArchitecture(data.dim, tuple(cfg.get("model.hidden")), data.num_classes)


def provenance_line(cfg: ExperimentConfig, seed: int) -> str:
    return f"config_hash={cfg.config_hash()} seed={seed}"


@dataclass
class TrainOutcome:
    model: ModelState
    log: TrainLog
    report: EvalReport
    out_dir: Path


def train_pipeline(cfg: ExperimentConfig, out_dir=None, seed: int | None = None, mode: str | None = None,
                   data: tuple[Dataset, Dataset] | None = None, figures: bool = True) -> TrainOutcome:
    """Train, evaluate and write ``log.csv``, ``model.ckpt``, ``eval.json``, ``eval.csv``."""
    seed = cfg.seed if seed is None else seed
    out = Path(out_dir if out_dir is not None else cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    train, test = data if data is not None else build_datasets(cfg, seed)
    tc = cfg.train_config(seed=seed, mode=mode)
    model, trainlog = run_training(tc, architecture_for(cfg, train), train, test)
    prov = cfg.provenance(seed)
    model.meta.update(prov)
    report = evaluate(model, test)
    trainlog.write_csv(out / "log.csv", provenance_line(cfg, seed))
    save_checkpoint(model, out / "model.ckpt")
    report.write_json(out / "eval.json", {**prov, "mode": tc.mode})
    report.write_csv(out / "eval.csv", provenance_line(cfg, seed))
    if cfg.get("eval.export_embeddings"):
        export_embeddings(model, test, out / "embeddings.csv")
    if figures:
        from .plotting import plot_training_curves

        plot_training_curves({tc.mode: [trainlog]}, out / "curves.png", title=f"{tc.mode} seed {seed}", provenance=prov)
    return TrainOutcome(model, trainlog, report, out)


def resolve_attack(spec: AttackSpec, data: Dataset) -> AttackConfig:
    cfg = AttackConfig(**{**spec.config.__dict__})
    if spec.clip == "auto":
        cfg.clip_range = data.input_range
    elif spec.clip == "none":
        cfg.clip_range = None
    else:
        cfg.clip_range = spec.clip
    return cfg


def attack_pipeline(cfg: ExperimentConfig, target: ModelState, source: ModelState, out_dir,
                    white_box: bool, test: Dataset | None = None, prefix: str = "") -> list[AttackReport]:
    """Run every configured attack and write JSON/CSV reports (and IDX exports)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if test is None:
        _, test = build_datasets(cfg)
    protocol = "white-box" if white_box else "transfer"
    prov = cfg.provenance()
    reports = []
    for spec in cfg.attacks:
        ac = resolve_attack(spec, test)
        report, x_adv = evaluate_attack(target, source, test.features, test.labels, ac, protocol=protocol)
        stem = f"{prefix}attack_{spec.name}"
        (out / f"{stem}.json").write_text(report.to_json({**prov, "name": spec.name}))
        report.write_csv(out / f"{stem}.csv", f"{provenance_line(cfg, cfg.seed)} protocol={protocol}")
        if spec.export_idx:
            adv = Dataset(np.clip(x_adv, 0.0, 1.0), test.labels, test.num_classes, f"{stem}-adv")
            write_idx(adv, out / f"{stem}-images-idx3-ubyte", out / f"{stem}-labels-idx1-ubyte")
        reports.append(report)
    return reports


COMPARE_COLUMNS = ("mode", "test_error_mean", "test_error_std", "norm_complement_entropy_mean", "wall_time_ratio")
ATTACK_COLUMNS = ("seed", "attack", "clean_error_baseline", "clean_error_cot",
                  "baseline_white_box", "cot_white_box", "cot_transfer")


@dataclass
class CompareOutcome:
    table: list[dict]
    attack_rows: list[dict]
    logs: dict[str, list[TrainLog]]
    reports: dict[str, list[EvalReport]]
    epoch_seconds: dict[str, list[float]]


def compare_pipeline(cfg: ExperimentConfig, out_dir=None, figures: bool | None = None) -> CompareOutcome:
    """Train baseline and COT for every seed in ``compare.seeds`` and tabulate.

    Per-seed artifacts go to ``<out>/seed_<s>/<mode>/``.  The summary table
    ``compare.csv`` has one row per mode; ``attacks.csv`` (when attacks are
    configured) holds white-box and transfer errors per seed and attack.
    """
    out = Path(out_dir if out_dir is not None else cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    figures = cfg.get("compare.figures") if figures is None else figures
    modes = ("baseline_ce", "cot")
    logs = {m: [] for m in modes}
    reports = {m: [] for m in modes}
    secs = {m: [] for m in modes}
    attack_rows = []
    for seed in cfg.get("compare.seeds"):
        data = build_datasets(cfg, seed)
        models = {}
        for mode in modes:
            res = train_pipeline(cfg, out / f"seed_{seed}" / mode, seed=seed, mode=mode, data=data, figures=False)
            logs[mode].append(res.log)
            reports[mode].append(res.report)
            secs[mode].append(res.log.mean_epoch_seconds())
            models[mode] = res.model
            log.info("seed %d %s: test error %.4f", seed, mode, res.report.error_rate)
        if cfg.attacks:
            seed_cfg = cfg.with_overrides(seed=seed)
            sdir = out / f"seed_{seed}"
            base, cot = models["baseline_ce"], models["cot"]
            wb_base = attack_pipeline(seed_cfg, base, base, sdir, True, data[1], "baseline_white_box_")
            wb_cot = attack_pipeline(seed_cfg, cot, cot, sdir, True, data[1], "cot_white_box_")
            tr_cot = attack_pipeline(seed_cfg, cot, base, sdir, False, data[1], "cot_transfer_")
            for spec, rb, rc, rt in zip(cfg.attacks, wb_base, wb_cot, tr_cot):
                attack_rows.append({
                    "seed": seed, "attack": spec.name,
                    "clean_error_baseline": rb.clean_error, "clean_error_cot": rc.clean_error,
                    "baseline_white_box": rb.adversarial_error, "cot_white_box": rc.adversarial_error,
                    "cot_transfer": rt.adversarial_error,
                })

    base_secs = float(np.mean(secs["baseline_ce"]))
    table = []
    for mode in modes:
        errs = np.array([r.error_rate for r in reports[mode]])
        table.append({
            "mode": mode,
            "test_error_mean": float(errs.mean()),
            "test_error_std": float(errs.std(ddof=1)) if errs.size > 1 else 0.0,
            "norm_complement_entropy_mean": float(np.mean([r.mean_normalized_complement_entropy for r in reports[mode]])),
            "wall_time_ratio": float(np.mean(secs[mode]) / base_secs),
        })
    header = provenance_line(cfg, cfg.seed) + " seeds=" + ",".join(str(s) for s in cfg.get("compare.seeds"))
    _write_rows(out / "compare.csv", COMPARE_COLUMNS, table, header)
    if attack_rows:
        _write_rows(out / "attacks.csv", ATTACK_COLUMNS, attack_rows, header)
    (out / "compare.json").write_text(json.dumps(
        {**cfg.provenance(), "seeds": list(cfg.get("compare.seeds")),
         "deterministic": [{k: v for k, v in row.items() if k != "wall_time_ratio"} for row in table],
         "attacks": attack_rows},
        indent=2, sort_keys=True) + "\n")
    if figures:
        from .plotting import plot_attack_errors, plot_complement_entropy, plot_training_curves

        prov = cfg.provenance()
        plot_training_curves(logs, out / "test_error_curves.png", provenance=prov)
        plot_complement_entropy(reports, out / "complement_entropy.png", provenance=prov)
        if attack_rows:
            plot_attack_errors(attack_rows, out / "attack_errors.png", provenance=prov)
    return CompareOutcome(table, attack_rows, logs, reports, secs)


def _write_rows(path, columns, rows, header_comment: str) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# {header_comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([repr(row[c]) if isinstance(row[c], float) else row[c] for c in columns])
