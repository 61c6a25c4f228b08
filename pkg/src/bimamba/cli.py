"""Command-line entry point.

Subcommands: synth, train, cv, xeval, predict, health, report, gradcheck.
Every command prints a single JSON summary line on success.  Failures
print one machine-parseable JSON line on stderr: usage problems exit 2,
runtime problems exit 1.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import pipeline
from .data import synth_generate, synth_health_generate, write_dataset, write_health_dataset
from .errors import BimambaError, ConfigError
from .report import report_run

__all__ = ["main", "parse_ratios"]


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        print(json.dumps({"error": message, "kind": "usage"}), file=sys.stderr)
        raise SystemExit(2)


def parse_ratios(text: str) -> list[float]:
    """Accept '0.5..0.9' (step 0.1, inclusive) or a comma list '0.5,0.7'."""
    if ".." in text:
        lo_s, hi_s = text.split("..", 1)
        lo, hi = float(lo_s), float(hi_s)
        if hi < lo:
            raise ConfigError(f"ratio range is reversed: {text!r}")
        ratios = []
        r = lo
        while r <= hi + 1e-9:
            ratios.append(round(r, 10))
            r += 0.1
    else:
        ratios = [float(t) for t in text.split(",") if t.strip()]
    if not ratios:
        raise ConfigError(f"no ratios in {text!r}")
    for r in ratios:
        if not 0.0 < r < 1.0:
            raise ConfigError(f"train ratio must be in (0,1), got {r}")
    return ratios


def _load_config_file(path) -> dict:
    if path is None:
        return {}
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError("config file must hold a JSON object")
    return doc


def _training_overrides(args, config: dict) -> dict:
    overrides = dict(config.get("training", {}))
    for flag in ("epochs", "batch_size", "lr", "weight_decay"):
        v = getattr(args, flag, None)
        if v is not None:
            overrides[flag] = v
    return overrides


def _add_model_flags(p):
    p.add_argument("--epoch-samples", type=int, default=1000)
    p.add_argument("--n-bimamba", type=int, default=1)
    p.add_argument("--no-eca", action="store_true", help="drop the channel-attention stage")
    p.add_argument("--config", help="JSON file with model/training overrides")


def _add_training_flags(p):
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--weight-decay", type=float)


def _emit(doc: dict) -> None:
    print(json.dumps(doc))


def _cmd_synth(args) -> dict:
    if args.task == "health":
        hyps = synth_health_generate(
            args.subjects, args.seed,
            max_cycles=args.max_cycles, min_cycles=args.min_cycles,
            balance=args.balance,
        )
        manifest = write_health_dataset(hyps, args.out)
        return {
            "task": "synth",
            "mode": "health",
            "manifest": str(manifest),
            "subjects": len(hyps),
            "healthy": sum(1 for h in hyps if h.health == "healthy"),
        }
    subjects = synth_generate(
        args.subjects, args.epochs_per_subject, args.seed,
        channels=args.channels, epoch_samples=args.epoch_samples,
        informative=args.informative,
    )
    manifest = write_dataset(subjects, args.out, trim_last=args.trim_last)
    return {
        "task": "synth",
        "mode": "stage",
        "manifest": str(manifest),
        "subjects": len(subjects),
        "epochs_per_subject": args.epochs_per_subject,
    }


def _cmd_train(args) -> dict:
    config = _load_config_file(args.config)
    summary = pipeline.train_run(
        args.manifest, args.out, args.seed,
        epoch_samples=args.epoch_samples, n_bimamba=args.n_bimamba,
        use_eca=not args.no_eca, model_overrides=config.get("model"),
        training=_training_overrides(args, config),
    )
    return {
        "task": "train",
        "out": str(args.out),
        "best_val_accuracy": summary["report"]["best_val_accuracy"],
        "best_epoch": summary["report"]["best_epoch"],
    }


def _cmd_cv(args) -> dict:
    config = _load_config_file(args.config)
    aggregate = pipeline.cv_run(
        args.manifest, args.k, args.out, args.seed,
        epoch_samples=args.epoch_samples, n_bimamba=args.n_bimamba,
        use_eca=not args.no_eca, model_overrides=config.get("model"),
        training=_training_overrides(args, config),
    )
    mean = aggregate["mean"]
    return {
        "task": "cv",
        "out": str(args.out),
        "k": args.k,
        "mean_accuracy": mean["accuracy"],
        "mean_macro_f1": mean["macro_f1"],
        "mean_kappa": mean["kappa"],
    }


def _cmd_xeval(args) -> dict:
    config = _load_config_file(args.config)
    doc = pipeline.xeval_run(
        args.manifest, args.eval_manifest, args.out, args.seed,
        epoch_samples=args.epoch_samples, n_bimamba=args.n_bimamba,
        use_eca=not args.no_eca, model_overrides=config.get("model"),
        training=_training_overrides(args, config),
    )
    return {
        "task": "xeval",
        "out": str(args.out),
        "eval_accuracy": doc["eval"]["metrics"]["accuracy"],
        "eval_kappa": doc["eval"]["metrics"]["kappa"],
    }


def _cmd_predict(args) -> dict:
    doc = pipeline.predict_run(
        args.checkpoint, args.manifest, args.out, epoch_samples=args.epoch_samples
    )
    accs = [s["accuracy"] for s in doc["subjects"]]
    return {
        "task": "predict",
        "out": str(args.out),
        "subjects": len(accs),
        "mean_accuracy": float(np.mean(accs)) if accs else None,
    }


def _cmd_health(args) -> dict:
    config = _load_config_file(args.config)
    doc = pipeline.health_run(
        args.manifest, args.out, args.seed,
        ratios=parse_ratios(args.ratios),
        model_overrides=config.get("model"),
        training=_training_overrides(args, config),
    )
    return {
        "task": "health",
        "out": str(args.out),
        "ratios": doc["ratios"],
        "accuracy": [r["accuracy"] for r in doc["runs"]],
        "auc": [r["auc"] for r in doc["runs"]],
    }


def _cmd_report(args) -> dict:
    aggregate = report_run(args.run_dir, out=args.out)
    return {
        "task": "report",
        "out": str(args.out or args.run_dir),
        "folds": len(aggregate["folds"]),
        "mean_accuracy": aggregate["mean"]["accuracy"],
    }


def _cmd_gradcheck(args) -> dict:
    from .model import StageModelConfig, build_stage_model
    from .ssm import BiMambaBlock
    from . import tensor as T

    checks = T.primitive_gradchecks(seed=args.seed)
    rng = np.random.Generator(np.random.PCG64(args.seed))
    block = BiMambaBlock(3, 4, rng)
    xb = rng.standard_normal((3, 16))
    wout = rng.standard_normal((3, 16))
    checks["bimamba_block"] = T.grad_check(
        lambda t: T.tsum(T.mul(block.forward(t), T.Tensor(wout))), T.Tensor(xb)
    )
    cfg = StageModelConfig(
        channels=2, epoch_samples=64, n_state=4,
        cnn=((4, 5, 2), (6, 3, 2), (8, 3, 2)), dropout=0.0,
    )
    model = build_stage_model(cfg, args.seed)
    xm = rng.standard_normal((2, 2, 64))
    labels = rng.integers(0, 5, size=2)
    checks["stage_model"] = T.grad_check(
        lambda t: T.softmax_cross_entropy(model.forward(t), labels),
        T.Tensor(xm),
        eps=1e-5,
    )
    worst = max(checks.values())
    passed = all(
        err < (1e-4 if name in ("bimamba_block", "stage_model") else 1e-5)
        for name, err in checks.items()
    )
    if not passed:
        raise ConfigError(f"gradient check failed: worst {worst:.3e}")
    return {
        "task": "gradcheck",
        "checks": {k: float(f"{v:.3e}") for k, v in sorted(checks.items())},
        "worst": float(f"{worst:.3e}"),
    }


def build_parser() -> _Parser:
    parser = _Parser(prog="bimamba", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--task", choices=("stage", "health"), default="stage")
    p.add_argument("--subjects", type=int, default=4)
    p.add_argument("--epochs-per-subject", type=int, default=60)
    p.add_argument("--channels", type=int, default=10)
    p.add_argument("--epoch-samples", type=int, default=1000)
    p.add_argument("--informative", type=int, default=None,
                   help="signal-bearing channel count; rest are noise")
    p.add_argument("--trim-last", type=int, default=0)
    p.add_argument("--max-cycles", type=int, default=850)
    p.add_argument("--min-cycles", type=int, default=600)
    p.add_argument("--balance", action="store_true",
                   help="mirror the 110:100 healthy:unhealthy class totals")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("train", help="single train/validation split")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    _add_model_flags(p)
    _add_training_flags(p)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("cv", help="subject-wise k-fold cross-validation")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--k", type=int, required=True)
    _add_model_flags(p)
    _add_training_flags(p)
    p.set_defaults(func=_cmd_cv)

    p = sub.add_parser("xeval", help="train on one dataset, evaluate on another")
    p.add_argument("--manifest", required=True)
    p.add_argument("--eval-manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    _add_model_flags(p)
    _add_training_flags(p)
    p.set_defaults(func=_cmd_xeval)

    p = sub.add_parser("predict", help="render predicted hypnograms")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--epoch-samples", type=int, default=None)
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("health", help="train-ratio sweep for health classification")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--ratios", default="0.5..0.9")
    p.add_argument("--config", help="JSON file with model/training overrides")
    _add_training_flags(p)
    p.set_defaults(func=_cmd_health)

    p = sub.add_parser("report", help="aggregate a run directory")
    p.add_argument("run_dir")
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_report)

    p = sub.add_parser("gradcheck", help="finite-difference check of every primitive")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_gradcheck)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    try:
        _emit(args.func(args))
        return 0
    except BimambaError as exc:
        print(
            json.dumps({"error": str(exc), "kind": type(exc).__name__}),
            file=sys.stderr,
        )
        return 1
    except Exception as exc:  # noqa: BLE001  - the CLI boundary reports, not raises
        print(
            json.dumps({"error": str(exc), "kind": type(exc).__name__}),
            file=sys.stderr,
        )
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
