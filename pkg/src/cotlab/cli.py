"""Command-line entry point: ``cotlab {train,attack,gradcheck,compare,make-digits}``.

Exit codes: 0 success, 1 runtime or criterion failure, 2 usage/config error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import ConfigError, load_config
from .models import CheckpointError, load_checkpoint

log = logging.getLogger("cotlab")

THRESHOLD = 1e-5


def _load(args):
    cfg = load_config(args.config)
    return cfg.with_overrides(seed=args.seed, out=args.out)


def cmd_train(args) -> int:
    from .experiments import train_pipeline

    cfg = _load(args)
    res = train_pipeline(cfg)
    last = res.log.records[-1]
    if not args.quiet:
        print(
            f"train mode={cfg.train_config().mode} seed={cfg.seed} epochs={len(res.log.records)} "
            f"ce_loss={last.ce_loss:.6f} test_error={res.report.error_rate:.4f} "
            f"norm_comp_entropy={res.report.mean_normalized_complement_entropy:.6f} out={res.out_dir}"
        )
    return 0


def cmd_attack(args) -> int:
    from .experiments import attack_pipeline

    cfg = _load(args)
    if not cfg.attacks:
        raise ConfigError("no attack.<name>.* sections configured", cfg.source)
    try:
        target = load_checkpoint(args.target)
        source = load_checkpoint(args.source)
    except (OSError, CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    white_box = Path(args.target).read_bytes() == Path(args.source).read_bytes()
    reports = attack_pipeline(cfg, target, target if white_box else source, cfg.out_dir, white_box)
    if not args.quiet:
        for spec, r in zip(cfg.attacks, reports):
            print(
                f"attack {spec.name} kind={r.attack} protocol={r.protocol} eps={spec.config.epsilon} "
                f"clean_error={r.clean_error:.4f} adversarial_error={r.adversarial_error:.4f} "
                f"max_linf={r.max_perturbation:.6g}"
            )
    return 0


def cmd_gradcheck(args) -> int:
    from .gradcheck import run_all

    results = run_all(
        seed=args.seed if args.seed is not None else 0,
        objective_trials=args.trials,
        model_trials=args.model_trials,
        corrupt=args.corrupt,
    )
    worst = max(results, key=lambda r: r.max_rel_error)
    if not args.quiet:
        for r in results:
            print(f"{r.name:28s} max_rel_error={r.max_rel_error:.3e}  worst={r.worst_case}")
    if worst.max_rel_error >= THRESHOLD:
        print(
            f"FAIL: {worst.name} max relative error {worst.max_rel_error:.3e} >= {THRESHOLD:g} at {worst.worst_case}",
            file=sys.stderr,
        )
        return 1
    return 0


def cmd_compare(args) -> int:
    from .experiments import compare_pipeline

    cfg = _load(args)
    res = compare_pipeline(cfg)
    if not args.quiet:
        for row in res.table:
            print(
                f"{row['mode']:12s} test_error={100 * row['test_error_mean']:.2f}% "
                f"(+/- {100 * row['test_error_std']:.2f}) norm_comp_entropy={row['norm_complement_entropy_mean']:.4f} "
                f"wall_time_ratio={row['wall_time_ratio']:.2f}"
            )
        for row in res.attack_rows:
            print(
                f"seed {row['seed']} {row['attack']}: baseline white-box={row['baseline_white_box']:.4f} "
                f"cot white-box={row['cot_white_box']:.4f} cot transfer={row['cot_transfer']:.4f}"
            )
    return 0


def cmd_make_digits(args) -> int:
    from .datasets import make_digit_idx

    paths = make_digit_idx(args.out, args.train, args.test, args.seed or 0)
    if not args.quiet:
        for key, p in paths.items():
            print(f"{key}: {p}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cotlab", description="Complement objective training lab")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="override the configured seed")
    common.add_argument("--quiet", action="store_true")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", parents=[common], help="train one model")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("attack", parents=[common], help="FGSM / I-FGSM attack a checkpoint")
    p.add_argument("--config", required=True)
    p.add_argument("--target", required=True, help="checkpoint under attack")
    p.add_argument("--source", default=None, help="checkpoint used to craft examples (default: target)")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("gradcheck", parents=[common], help="finite-difference gradient suite")
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--model-trials", type=int, default=20)
    p.add_argument("--corrupt", type=float, default=0.0, help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("compare", parents=[common], help="baseline vs COT over several seeds")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("make-digits", parents=[common], help="write the IDX digit corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--train", type=int, default=10000)
    p.add_argument("--test", type=int, default=2000)
    p.set_defaults(func=cmd_make_digits)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if getattr(args, "source", "unset") is None:
        args.source = args.target
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure
        log.debug("unhandled error", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
