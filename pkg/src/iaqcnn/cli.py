"""Command-line front end: ``iaqcnn {synth,preprocess,train,eval,noise-exp}``.

Every command validates its resolved :class:`RunConfig` before touching the
filesystem, writes outputs atomically and stores the resolved config next to
them as ``config_<command>.txt``.  Failures print one line
``error: <ErrorClass>: <message>`` to stderr and exit non-zero.
"""
from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

from .circuit import build_model_circuit, parameter_count
from .config import RunConfig
from .data import FeatureTable, atomic_write, generate_synthetic, load_dataset
from .errors import DataError, IaqcnnError
from .metrics import MetricsReport
from .model import read_checkpoint, write_checkpoint
from .noise import SCENARIOS, NoiseSpec
from .pipeline import build_features, patient_report, predict_table, train_on_table

log = logging.getLogger("iaqcnn")

COMMANDS = ("synth", "preprocess", "train", "eval", "noise-exp")


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", default=argparse.SUPPRESS, help="flat 'key = value' config file")
    for f in dataclasses.fields(RunConfig):
        flag = "--" + f.name.replace("_", "-")
        kind = type(f.default)
        p.add_argument(flag, dest=f.name, type=kind, default=argparse.SUPPRESS,
                       help=f"(default: {f.default!r})")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    _add_config_flags(common)
    parser = argparse.ArgumentParser(prog="iaqcnn", description="IA-QCNN desk-scale experiments")
    parser.add_argument("-v", "--verbose", action="store_true")
    # global spellings; the per-command copies take precedence when both are given
    parser.add_argument("--config", default=argparse.SUPPRESS, help="flat 'key = value' config file")
    parser.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    parser.add_argument("--out", default=argparse.SUPPRESS)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("synth", parents=[common], help="write a synthetic dataset to --out")
    sub.add_parser("preprocess", parents=[common], help="--data DIR -> features.csv + pca.json in --out")
    sub.add_parser("train", parents=[common], help="--features FILE -> checkpoint.csv + history.csv in --out")
    sub.add_parser("eval", parents=[common], help="--features + --checkpoint -> metrics in --out")
    sub.add_parser("noise-exp", parents=[common], help="--data DIR -> clean/image/gate/hybrid comparison")
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    values = {k: v for k, v in vars(args).items() if k not in ("command", "verbose", "config")}
    base = RunConfig.from_file(args.config) if getattr(args, "config", None) else RunConfig()
    return base.with_overrides(values).validate()


def _save_config(cfg: RunConfig, out: Path, command: str) -> None:
    atomic_write(out / f"config_{command}.txt", cfg.to_text())


def _require(path: str, what: str) -> Path:
    if not path:
        raise DataError(f"missing --{what}")
    p = Path(path)
    if not p.exists():
        raise DataError(f"{what} {p} does not exist")
    return p


def cmd_synth(cfg: RunConfig) -> None:
    out = Path(cfg.out)
    manifest = generate_synthetic(cfg.synth_config(), out)
    _save_config(cfg, out, "synth")
    n1 = sum(p.label for p in manifest.patients)
    print(f"wrote {len(manifest.patients)} patients ({n1} methylated, {len(manifest.patients) - n1} unmethylated) "
          f"x {cfg.slices_per_patient} slices to {out}")


def cmd_preprocess(cfg: RunConfig) -> FeatureTable:
    out = Path(cfg.out)
    manifest = load_dataset(_require(cfg.data, "data"))
    table, pca = build_features(manifest, cfg.preprocess_config(), cfg.seed, cfg.image_sigma, cfg.resolved_noise_seed)
    atomic_write(out / "features.csv", table.to_csv())
    atomic_write(out / "pca.json", pca.to_json())
    _save_config(cfg, out, "preprocess")
    print(f"features: {len(table.patient_ids)} slices, d={table.d} (d_pca={pca.d_pca}, d_max={cfg.d_max})")
    return table


def _load_features(path: Path) -> FeatureTable:
    return FeatureTable.from_csv(path.read_text(encoding="utf-8"), str(path))


def _features_path(cfg: RunConfig) -> Path:
    return Path(cfg.features) if cfg.features else Path(cfg.out) / "features.csv"


def cmd_train(cfg: RunConfig):
    out = Path(cfg.out)
    table = _load_features(_require(str(_features_path(cfg)), "features"))
    build_model_circuit(table.d, cfg.levels)  # infeasible plans fail here, before training
    n = parameter_count(table.d, cfg.levels)
    print(f"trainable parameters: {n} = 6*{cfg.levels} + 3*{cfg.levels} + 2*{table.d} + 10")
    tcfg = cfg.train_config()
    params, history = train_on_table(table, cfg.levels, tcfg)
    atomic_write(out / "checkpoint.csv", write_checkpoint(params, cfg.clip, cfg.seed))
    atomic_write(out / "history.csv", history.to_csv())
    _save_config(cfg, out, "train")
    last = history.records[-1]
    print(f"stopped at epoch {history.stop_epoch}, best epoch {history.best_epoch}; "
          f"last train_acc {last.train_acc:.3f} val_acc {last.val_acc:.3f}")
    return params, history


def _write_eval(out: Path, preds, report: MetricsReport) -> None:
    rows = ["patient_id,label,mean_prob_class1,predicted"]
    rows += [f"{p.patient_id},{p.label},{p.mean_prob_class1!r},{p.predicted}" for p in preds]
    atomic_write(out / "predictions.csv", "\n".join(rows) + "\n")
    atomic_write(out / "metrics.csv", report.to_csv())
    atomic_write(out / "roc.csv", report.roc_csv())


def cmd_eval(cfg: RunConfig) -> MetricsReport:
    out = Path(cfg.out)
    checkpoint = Path(cfg.checkpoint) if cfg.checkpoint else out / "checkpoint.csv"
    table = _load_features(_require(str(_features_path(cfg)), "features"))
    params, meta = read_checkpoint(_require(str(checkpoint), "checkpoint").read_text(encoding="utf-8"))
    if meta["d"] != table.d:
        raise DataError(f"checkpoint d={meta['d']} does not match features d={table.d}")
    split = table.subset(cfg.eval_split)
    if not split.patient_ids:
        raise DataError(f"features file has no {cfg.eval_split!r} rows")
    probs1 = predict_table(split, params, meta["L"], cfg.gate_sigma, cfg.resolved_noise_seed)
    preds, report = patient_report(split, probs1)
    _write_eval(out, preds, report)
    _save_config(cfg, out, "eval")
    auc = "n/a" if report.auc is None else f"{report.auc:.3f}"
    print(report.confusion_table(), end="")
    print(f"{cfg.eval_split} patients: {len(preds)}  accuracy {report.accuracy:.3f}  auc {auc}")
    return report


NOISE_COLUMNS = ("scenario", "image_sigma", "gate_sigma", "accuracy", "auc", "precision_0", "recall_0", "f1_0",
                 "precision_1", "recall_1", "f1_1", "stop_epoch", "best_epoch", "final_train_acc", "final_val_acc")


def cmd_noise_exp(cfg: RunConfig) -> list[dict]:
    """clean / image-only / gate-only / hybrid runs sharing one base seed.

    Scenario sigmas come from --image-sigma / --gate-sigma when given (zero
    included), otherwise 0.03 / 0.02.
    """
    out = Path(cfg.out)
    _require(cfg.data, "data")
    rows = []
    for name in SCENARIOS:
        spec = NoiseSpec.scenario(name, cfg.resolved_noise_seed, cfg.image_sigma, cfg.gate_sigma)
        sdir = out / name
        scfg = dataclasses.replace(cfg, out=str(sdir), image_sigma=spec.image_sigma, gate_sigma=spec.gate_sigma,
                                   features="", checkpoint="")
        print(f"== scenario {name}: image_sigma={spec.image_sigma} gate_sigma={spec.gate_sigma}")
        cmd_preprocess(scfg)
        _, history = cmd_train(scfg)
        report = cmd_eval(scfg)
        last = history.records[-1]
        rows.append({
            "scenario": name, "image_sigma": spec.image_sigma, "gate_sigma": spec.gate_sigma,
            "accuracy": report.accuracy, "auc": report.auc if report.auc is not None else float("nan"),
            "precision_0": report.precision[0], "recall_0": report.recall[0], "f1_0": report.f1[0],
            "precision_1": report.precision[1], "recall_1": report.recall[1], "f1_1": report.f1[1],
            "stop_epoch": history.stop_epoch, "best_epoch": history.best_epoch,
            "final_train_acc": last.train_acc, "final_val_acc": last.val_acc,
        })
    lines = [",".join(NOISE_COLUMNS)]
    lines += [",".join(repr(r[c]) if isinstance(r[c], float) else str(r[c]) for c in NOISE_COLUMNS) for r in rows]
    atomic_write(out / "noise_results.csv", "\n".join(lines) + "\n")
    _save_config(cfg, out, "noise-exp")
    return rows


def _noise_exp_defaults(args: argparse.Namespace) -> None:
    if not hasattr(args, "image_sigma"):
        args.image_sigma = NoiseSpec.scenario("hybrid", 0).image_sigma
    if not hasattr(args, "gate_sigma"):
        args.gate_sigma = NoiseSpec.scenario("hybrid", 0).gate_sigma


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if args.command == "noise-exp":
            _noise_exp_defaults(args)
        cfg = resolve_config(args)
        if args.command == "synth":
            cmd_synth(cfg)
        elif args.command == "preprocess":
            cmd_preprocess(cfg)
        elif args.command == "train":
            cmd_train(cfg)
        elif args.command == "eval":
            cmd_eval(cfg)
        else:
            cmd_noise_exp(cfg)
    except IaqcnnError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: StorageError: {exc}", file=sys.stderr)
        return 6
    return 0


if __name__ == "__main__":
    sys.exit(main())
