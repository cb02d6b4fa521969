"""Command-line interface.

One subcommand per library operation, working over headerless CSV logit and
label files, JSON checkpoints/calibrators/reports, and JSON experiment
manifests. Exit codes: 0 success, 1 usage error, 2 numerical or runtime
failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import calibrators as cal
from . import harness
from .distill import (
    DEFAULT_LAMBDA,
    DEFAULT_T_CAL,
    DEFAULT_T_KD,
    KdConfig,
    distill_student,
)
from .errors import CalikdError
from .metrics import DEFAULT_M_BINS, DEFAULT_R_BINS, full_report
from .nn import HardCE, TrainConfig, load_checkpoint, save_checkpoint, train
from .probs import tempered_softmax
from .stats import r_squared, spearman
from .errors import DegenerateSeriesError


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # Usage problems exit 1, not argparse's default 2.
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(message)


def _require_file(flag: str, path: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise _UsageError(f"{flag}: file not found: {path}")
    return p


def _parse_dims(text: str) -> tuple[int, ...]:
    text = text.strip()
    if not text:
        return ()
    return tuple(int(part) for part in text.split(","))


def _load_logits(flag: str, path: str) -> np.ndarray:
    arr = np.loadtxt(_require_file(flag, path), delimiter=",", ndmin=2, dtype=np.float64)
    return arr


def _load_labels(flag: str, path: str) -> np.ndarray:
    arr = np.loadtxt(_require_file(flag, path), delimiter=",", dtype=np.int64, ndmin=1)
    return arr.reshape(-1)


def _load_dataset(flag: str, path: str):
    with open(_require_file(flag, path), encoding="utf-8") as fh:
        return harness.dataset_from_json_dict(json.load(fh))


def _write_json(path, obj) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2)
        fh.write("\n")


def _add_train_flags(p, *, epochs=60, lr0=0.1, decay="35,50", weight_decay=5e-5):
    p.add_argument("--epochs", type=int, default=epochs, help="training epochs")
    p.add_argument("--batch-size", type=int, default=64, help="SGD batch size")
    p.add_argument("--lr0", type=float, default=lr0, help="initial learning rate")
    p.add_argument("--decay-epochs", default=decay,
                   help="comma-separated epochs at which the LR is decayed")
    p.add_argument("--decay-factor", type=float, default=0.1,
                   help="LR multiplier at each decay epoch")
    p.add_argument("--momentum", type=float, default=0.9, help="SGD momentum")
    p.add_argument("--weight-decay", type=float, default=weight_decay,
                   help="L2 penalty coefficient")
    p.add_argument("--mixup-alpha", type=float, default=0.0,
                   help="Beta(alpha, alpha) mixup strength; 0 disables")
    p.add_argument("--seed", type=int, default=0, help="RNG seed for this run")


def _train_config(args) -> TrainConfig:
    return TrainConfig(
        epochs=args.epochs, batch_size=args.batch_size, lr0=args.lr0,
        lr_decay_epochs=_parse_dims(args.decay_epochs),
        lr_decay_factor=args.decay_factor, momentum=args.momentum,
        weight_decay=args.weight_decay, seed=args.seed,
        mixup_alpha=args.mixup_alpha)


def build_parser() -> _Parser:
    parser = _Parser(prog="calikd",
                     description="Calibration metrics and calibrated-teacher distillation.",
                     epilog="The CALIKD_THREADS environment variable caps sweep "
                            "parallelism (default: available cores).")
    sub = parser.add_subparsers(dest="command", required=True)
    fmt = argparse.ArgumentDefaultsHelpFormatter

    p = sub.add_parser("gen-data", formatter_class=fmt,
                       help="generate the synthetic benchmark dataset")
    p.add_argument("--n-train", type=int, default=5000, help="training samples")
    p.add_argument("--n-val", type=int, default=1000, help="validation samples")
    p.add_argument("--n-test", type=int, default=2000, help="test samples")
    p.add_argument("--d", type=int, default=32, help="feature dimension")
    p.add_argument("--k", type=int, default=10, help="number of classes")
    p.add_argument("--class-separation", type=float, default=4.5,
                   help="mean pairwise distance between cluster centers")
    p.add_argument("--label-noise", type=float, default=0.15,
                   help="train-split label flip probability")
    p.add_argument("--seed", type=int, default=7, help="dataset RNG seed")
    p.add_argument("--out", default="dataset.json", help="output dataset JSON")

    p = sub.add_parser("train-teacher", formatter_class=fmt,
                       help="train an MLP classifier on a dataset file")
    p.add_argument("--data", required=True)
    p.add_argument("--hidden", default="128", help="comma-separated hidden layer widths")
    _add_train_flags(p)
    p.add_argument("--m-bins", type=int, default=DEFAULT_M_BINS,
                   help="equal-width bins for the calibration report")
    p.add_argument("--r-bins", type=int, default=DEFAULT_R_BINS,
                   help="equal-count bins for the calibration report")
    p.add_argument("--out", default="teacher.json", help="output checkpoint JSON")
    p.add_argument("--report-out", default=None,
                   help="also write the test-split calibration report here")

    p = sub.add_parser("calibrate", formatter_class=fmt,
                       help="build or fit a calibrator for a model or logit dump")
    p.add_argument("--mode", required=True,
                   choices=["fixed-temperature", "fit-temperature", "fit-vector-scaling"])
    p.add_argument("--logits", default=None, help="headerless CSV of logits, one row per sample")
    p.add_argument("--labels", default=None, help="headerless CSV of integer labels")
    p.add_argument("--checkpoint", default=None, help="model checkpoint JSON")
    p.add_argument("--data", default=None, help="dataset JSON (fit uses its val split)")
    p.add_argument("--t", type=float, default=cal.DEFAULT_CALIBRATION_TEMPERATURE,
                   help="temperature for --mode fixed-temperature")
    p.add_argument("--lo", type=float, default=cal.DEFAULT_SEARCH_LO,
                   help="temperature search lower bound")
    p.add_argument("--hi", type=float, default=cal.DEFAULT_SEARCH_HI,
                   help="temperature search upper bound")
    p.add_argument("--tol", type=float, default=cal.DEFAULT_SEARCH_TOL,
                   help="log-temperature search width tolerance")
    p.add_argument("--steps", type=int, default=cal.DEFAULT_VECTOR_STEPS,
                   help="gradient steps for --mode fit-vector-scaling")
    p.add_argument("--lr", type=float, default=cal.DEFAULT_VECTOR_LR,
                   help="step size for --mode fit-vector-scaling")
    p.add_argument("--out", default="calibrator.json", help="output calibrator JSON")

    p = sub.add_parser("eval-calibration", formatter_class=fmt,
                       help="calibration report of a logit/label dump")
    p.add_argument("--logits", required=True, help="headerless CSV of logits")
    p.add_argument("--labels", required=True, help="headerless CSV of integer labels")
    p.add_argument("--m-bins", type=int, default=DEFAULT_M_BINS,
                   help="equal-width confidence bins")
    p.add_argument("--r-bins", type=int, default=DEFAULT_R_BINS,
                   help="equal-count bins per class")
    p.add_argument("--temperature", type=float, default=1.0,
                   help="softmax temperature applied to the logits")
    p.add_argument("--out", default="report.json", help="output report JSON")

    p = sub.add_parser("distill", formatter_class=fmt,
                       help="train a student against a frozen teacher")
    p.add_argument("--data", required=True)
    p.add_argument("--teacher", required=True, help="teacher checkpoint JSON")
    p.add_argument("--calibrator", default=None,
                   help="calibrator JSON; overrides --t-cal when given")
    p.add_argument("--t-cal", type=float, default=DEFAULT_T_CAL,
                   help="teacher calibration temperature when no --calibrator is given; "
                        "1.0 is standard distillation")
    p.add_argument("--kd-lambda", type=float, default=DEFAULT_LAMBDA,
                   help="weight of the distillation term")
    p.add_argument("--t-kd", type=float, default=DEFAULT_T_KD,
                   help="shared distillation temperature")
    p.add_argument("--no-t-squared", action="store_true",
                   help="disable the t_kd^2 scaling of the KL term")
    p.add_argument("--student-hidden", default="24",
                   help="comma-separated hidden layer widths of the student")
    _add_train_flags(p)
    p.add_argument("--m-bins", type=int, default=DEFAULT_M_BINS,
                   help="equal-width bins for the student report")
    p.add_argument("--r-bins", type=int, default=DEFAULT_R_BINS,
                   help="equal-count bins for the student report")
    p.add_argument("--out", default="student.json", help="output checkpoint JSON")
    p.add_argument("--report-out", default=None,
                   help="also write the student test-split report here")

    for name, help_text in [
            ("sweep-correlation", "teacher zoo + per-teacher distillation + correlations"),
            ("sweep-temperature", "calibration-temperature ablation for one teacher"),
            ("sweep-calibrators", "compare calibrators on the comparison teachers")]:
        p = sub.add_parser(name, formatter_class=fmt, help=help_text)
        p.add_argument("--manifest", default=None,
                       help="experiment manifest JSON (built-in default when omitted)")
        p.add_argument("--out-dir", required=True, help="output directory")
        p.add_argument("--dump-manifest", default=None,
                       help="write the effective manifest to this path")

    p = sub.add_parser("report", formatter_class=fmt,
                       help="recompute correlation summary from a records.csv")
    p.add_argument("--records", required=True, help="records.csv from a sweep")
    p.add_argument("--out", default="summary.json", help="output summary JSON")

    return parser


def _cmd_gen_data(args) -> int:
    spec = harness.SyntheticSpec(
        n_train=args.n_train, n_val=args.n_val, n_test=args.n_test,
        d=args.d, k=args.k, class_separation=args.class_separation,
        label_noise=args.label_noise, seed=args.seed)
    dataset = harness.gen_dataset(spec)
    _write_json(args.out, harness.dataset_to_json_dict(dataset, spec))
    print(f"wrote {args.out}: n={dataset.features.shape[0]} d={args.d} k={args.k}")
    return 0


def _cmd_train_teacher(args) -> int:
    dataset = _load_dataset("--data", args.data)
    dims = (dataset.features.shape[1], *_parse_dims(args.hidden), dataset.n_classes)
    cfg = _train_config(args)
    model, log = train(dims, dataset, cfg, HardCE())
    save_checkpoint(args.out, model, cfg, log.final_val_accuracy)
    report = harness.evaluate_model(model, dataset, "test", args.m_bins, args.r_bins)
    if args.report_out:
        _write_json(args.report_out, report.to_json_dict())
    print(f"wrote {args.out}: val_acc={log.final_val_accuracy:.4f} "
          f"test_acc={report.accuracy:.4f} ace={report.ace:.4f} ece_over={report.ece_over:.4f}")
    return 0


def _calibration_inputs(args):
    if args.logits or args.labels:
        if not (args.logits and args.labels):
            raise _UsageError("--logits and --labels must be given together")
        return _load_logits("--logits", args.logits), _load_labels("--labels", args.labels)
    if args.checkpoint and args.data:
        model = load_checkpoint(_require_file("--checkpoint", args.checkpoint))
        dataset = _load_dataset("--data", args.data)
        x_val, y_val = dataset.split("val")
        return model.forward(x_val), y_val
    raise _UsageError("calibrate needs --logits/--labels or --checkpoint/--data")


def _cmd_calibrate(args) -> int:
    logits, labels = _calibration_inputs(args)
    nll_before = cal.mean_nll_from_logits(logits, labels, 1.0)
    if args.mode == "fixed-temperature":
        calibrator = cal.fixed_temperature(args.t)
        meta = {"nll_before": nll_before,
                "nll_after": cal.mean_nll_from_logits(logits, labels, args.t),
                "split_seed": None}
        calibrator = cal.Calibrator(kind=calibrator.kind, t=calibrator.t, fit_metadata=meta)
    elif args.mode == "fit-temperature":
        calibrator = cal.fit_temperature(logits, labels, args.lo, args.hi, args.tol)
    else:
        calibrator = cal.fit_vector_scaling(logits, labels, args.steps, args.lr)
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(calibrator.to_json())
    meta = calibrator.fit_metadata
    print(f"wrote {args.out}: {calibrator.describe()} "
          f"nll_before={meta['nll_before']:.6f} nll_after={meta['nll_after']:.6f}")
    return 0


def _cmd_eval_calibration(args) -> int:
    logits = _load_logits("--logits", args.logits)
    labels = _load_labels("--labels", args.labels)
    probs = tempered_softmax(logits, args.temperature)
    report = full_report(probs, labels, args.m_bins, args.r_bins)
    _write_json(args.out, report.to_json_dict())
    print(f"wrote {args.out}: acc={report.accuracy:.4f} ece={report.ece:.4f} "
          f"ece_over={report.ece_over:.4f} ece_under={report.ece_under:.4f} "
          f"ace={report.ace:.4f} nll={report.nll:.4f}")
    return 0


def _cmd_distill(args) -> int:
    dataset = _load_dataset("--data", args.data)
    teacher = load_checkpoint(_require_file("--teacher", args.teacher))
    if args.calibrator:
        with open(_require_file("--calibrator", args.calibrator), encoding="utf-8") as fh:
            calibrator = cal.Calibrator.from_json_dict(json.load(fh))
    elif args.t_cal != 1.0:
        calibrator = cal.fixed_temperature(args.t_cal)
    else:
        calibrator = None
    kd_cfg = KdConfig(lam=args.kd_lambda, t_kd=args.t_kd,
                      scale_kd_by_t_squared=not args.no_t_squared)
    dims = (dataset.features.shape[1], *_parse_dims(args.student_hidden), dataset.n_classes)
    cfg = _train_config(args)
    model, log = distill_student(dims, teacher, calibrator, dataset, cfg, kd_cfg,
                                 args.m_bins, args.r_bins)
    save_checkpoint(args.out, model, cfg, log.final_val_accuracy)
    if args.report_out:
        _write_json(args.report_out, log.test_report.to_json_dict())
    report = log.test_report
    desc = calibrator.describe() if calibrator else "none"
    print(f"wrote {args.out}: calibrator={desc} test_acc={report.accuracy:.4f} "
          f"ace={report.ace:.4f} ece_over={report.ece_over:.4f}")
    return 0


def _manifest_for(args) -> dict:
    if args.manifest:
        manifest = harness.load_manifest(_require_file("--manifest", args.manifest))
    else:
        manifest = harness.default_manifest()
    if args.dump_manifest:
        _write_json(args.dump_manifest, manifest)
    return manifest


def _cmd_sweep_correlation(args) -> int:
    result = harness.run_correlation_from_manifest(_manifest_for(args), args.out_dir)
    s = result["summary"]
    print(f"wrote {args.out_dir}: records={s['n_records']} "
          f"r2_acc={s['r2_acc']} r2_ace={s['r2_ace']} spearman_ace={s['spearman_ace']}")
    return 0


def _cmd_sweep_temperature(args) -> int:
    result = harness.run_temperature_from_manifest(_manifest_for(args), args.out_dir)
    for row in result["rows"]:
        print(f"t_cal={row['t_cal']:g}: student_acc={row['mean_student_accuracy']:.4f} "
              f"+- {row['std_student_accuracy']:.4f}")
    print(f"wrote {args.out_dir}")
    return 0


def _cmd_sweep_calibrators(args) -> int:
    result = harness.run_calibrators_from_manifest(_manifest_for(args), args.out_dir)
    for row in result["summary"]["per_calibrator"]:
        print(f"{row['calibrator']}: student_acc={row['mean_student_accuracy']:.4f}")
    print(f"wrote {args.out_dir}")
    return 0


def _cmd_report(args) -> int:
    path = _require_file("--records", args.records)
    import csv as _csv

    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(_csv.DictReader(fh))
    if not rows:
        raise _UsageError("--records: file has no data rows")
    per_teacher: dict[str, dict] = {}
    for row in rows:
        entry = per_teacher.setdefault(row["teacher_id"], {
            "teacher_accuracy": float(row["teacher_accuracy"]),
            "teacher_ace": float(row["teacher_ace"]),
            "student_accs": []})
        entry["student_accs"].append(float(row["student_accuracy"]))
    t_acc = [e["teacher_accuracy"] for e in per_teacher.values()]
    t_ace = [e["teacher_ace"] for e in per_teacher.values()]
    s_acc = [float(np.mean(e["student_accs"])) for e in per_teacher.values()]

    summary = {"n_teachers": len(per_teacher), "n_records": len(rows)}
    for name, fn, xs in [("r2_acc", r_squared, t_acc), ("r2_ace", r_squared, t_ace),
                         ("spearman_ace", spearman, t_ace)]:
        try:
            summary[name] = fn(xs, s_acc)
        except (DegenerateSeriesError, CalikdError) as exc:
            summary[name] = None
            summary.setdefault("notes", []).append(f"{name}: {exc}")
    _write_json(args.out, summary)
    print(f"wrote {args.out}: r2_acc={summary['r2_acc']} r2_ace={summary['r2_ace']} "
          f"spearman_ace={summary['spearman_ace']}")
    return 0


_HANDLERS = {
    "gen-data": _cmd_gen_data,
    "train-teacher": _cmd_train_teacher,
    "calibrate": _cmd_calibrate,
    "eval-calibration": _cmd_eval_calibration,
    "distill": _cmd_distill,
    "sweep-correlation": _cmd_sweep_correlation,
    "sweep-temperature": _cmd_sweep_temperature,
    "sweep-calibrators": _cmd_sweep_calibrators,
    "report": _cmd_report,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"calikd: error: {exc}", file=sys.stderr)
        return 1
    try:
        return _HANDLERS[args.command](args)
    except _UsageError as exc:
        print(f"calikd {args.command}: error: {exc}", file=sys.stderr)
        return 1
    except CalikdError as exc:
        print(f"calikd {args.command}: failed: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"calikd {args.command}: failed: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
