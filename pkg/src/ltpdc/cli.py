"""Command-line interface.

Exit codes: 0 success, 2 parse/config error, 3 consistency error,
4 infeasible split/profile.
"""

from __future__ import annotations

import argparse
import logging
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .config import ExperimentFile, SimulateFile, load_config
from .distributions import GroupSpec, confusion_from_labels, confusion_from_log, normalize
from .errors import ConsistencyError, InfeasibleError, LTPDCError, ParseError
from .io import (
    atomic_write,
    format_confusion_csv,
    format_split,
    read_confusion_csv,
    read_counts,
    read_labels,
    read_predictions,
    sha256_file,
    write_report,
    dumps_report,
)
from .losses import logit_adjust_inference
from .ltdata import exp_profile, simulate_biased_log, subsample_indices
from .metrics import DEFAULT_ALPHA, EPSILON, evaluate_confusion, pdc_variance, restricted_group_accuracy
from .trainer import run_experiment

log = logging.getLogger("ltpdc")

HEATMAP_CHARS = " .:-=+*#%@"
REPORT_FORMAT = "ltpdc-report"
REPORT_FORMAT_VERSION = 1


def _metadata(alpha, epsilon, group_spec, group_mode="all", tau=0.0):
    return {
        "tool_version": __version__,
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "alpha": alpha,
        "epsilon": epsilon,
        "group_thresholds": {"many_min": group_spec.many_min, "few_max": group_spec.few_max},
        "group_mode": group_mode,
        "tau": tau,
    }


def _document(kind, metadata, runs, pdc_var=None, comparison=None):
    doc = {
        "format": REPORT_FORMAT,
        "format_version": REPORT_FORMAT_VERSION,
        "kind": kind,
        "metadata": metadata,
        "runs": runs,
        "pdc_variance": pdc_var,
    }
    if comparison is not None:
        doc["comparison"] = comparison
    return doc


def _run_entry(label, report, inputs=None, **extra):
    entry = {"label": label}
    if inputs is not None:
        entry["inputs"] = inputs
    entry.update(extra)
    if report is not None:
        entry["num_classes"] = len(report.predicted_counts)
        entry["n_test"] = int(sum(report.predicted_counts))
        entry["metrics"] = report.to_dict()
    return entry


def _fmt(v):
    if v is None:
        return "undefined"
    if isinstance(v, float):
        return "undefined" if v != v else repr(v)
    return str(v)


def _print_metrics(out, m):
    g = m["group_acc"]
    out.write(f"  top1_acc         {_fmt(m['top1_acc'])}\n")
    out.write(f"  group_acc        many={_fmt(g['many'])} medium={_fmt(g['medium'])} few={_fmt(g['few'])}\n")
    out.write(f"  kl_pred_target   {_fmt(m['kl_pred_target'])}\n")
    out.write(f"  kl_train_target  {_fmt(m['kl_train_target'])}\n")
    out.write(f"  pdc              {_fmt(m['pdc'])}\n")
    out.write(f"  predicted_counts {' '.join(str(c) for c in m['predicted_counts'])}\n")


def _print_runs(out, doc):
    for run in doc["runs"]:
        out.write(f"run {run['label']}\n")
        if "error" in run:
            out.write(f"  error            {run['error']}\n")
            continue
        out.write(f"  classes          {run['num_classes']}\n")
        out.write(f"  n_test           {run['n_test']}\n")
        _print_metrics(out, run["metrics"])
    if doc.get("comparison"):
        out.write("comparison\n")
        for row in doc["comparison"]:
            name = row.get("loss", "simulated")
            out.write(
                f"  {name:<16} IF={_fmt(row['imbalance_factor'])} seeds={row['n_seeds']} "
                f"pdc={_fmt(row['pdc_mean'])}+-{_fmt(row['pdc_sd'])} "
                f"acc={_fmt(row['acc_mean'])}+-{_fmt(row['acc_sd'])}\n"
            )
    var = doc.get("pdc_variance")
    if isinstance(var, dict):
        for name, v in var.items():
            out.write(f"pdc_variance {name} {_fmt(v)}\n")
    elif var is not None:
        out.write(f"pdc_variance {_fmt(var)}\n")


def _emit(doc, out_path, stdout):
    _print_runs(stdout, doc)
    if out_path:
        write_report(out_path, doc)
        log.info("wrote %s", out_path)


# ---- eval ---------------------------------------------------------------------

def _check_metric_flags(args):
    if not args.alpha > 0:
        raise ParseError(f"--alpha must be > 0, got {args.alpha}")
    if not args.epsilon > 0:
        raise ParseError(f"--epsilon must be > 0, got {args.epsilon}")
    if args.tau < 0:
        raise ParseError(f"--tau must be >= 0, got {args.tau}")
    try:
        return GroupSpec(args.many_min, args.few_max)
    except LTPDCError as exc:
        raise ParseError(str(exc)) from None


def cmd_eval(args, stdout=None):
    stdout = stdout or sys.stdout
    paths = args.inputs
    if len(paths) % 2:
        raise ParseError("eval expects PREDICTIONS TRAIN_COUNTS pairs")
    spec = _check_metric_flags(args)
    runs, reports = [], []
    for pred_path, counts_path in zip(paths[::2], paths[1::2]):
        counts = read_counts(counts_path)
        records, has_logits = read_predictions(pred_path)
        C = counts.size
        if (args.tau > 0 or args.group_mode == "restricted") and not has_logits:
            raise ParseError("--tau and --group-mode restricted need a logit prediction log", path=pred_path)
        group_acc = None
        if has_logits:
            for r in records:
                if len(r.predicted) != C:
                    raise ConsistencyError(
                        f"{pred_path}: sample {r.sample_id!r} has {len(r.predicted)} logits, "
                        f"train counts define {C} classes"
                    )
            z = np.array([r.predicted for r in records]).reshape(-1, C)
            y = np.array([r.true_label for r in records], dtype=np.int64)
            if args.tau > 0:
                z = logit_adjust_inference(z, normalize(counts), None, args.tau)
            cm = confusion_from_labels(y, np.argmax(z, axis=1), C) if y.size else confusion_from_log([], C)
            if args.group_mode == "restricted":
                group_acc = restricted_group_accuracy(z, y, counts, spec)
        else:
            cm = confusion_from_log(records, C)
        if cm.total == 0:
            raise ConsistencyError(f"{pred_path}: no prediction records")
        report = evaluate_confusion(cm, counts, alpha=args.alpha, epsilon=args.epsilon,
                                    group_spec=spec, group_acc=group_acc)
        reports.append(report)
        inputs = {
            "predictions": {"path": str(pred_path), "sha256": sha256_file(pred_path)},
            "train_counts": {"path": str(counts_path), "sha256": sha256_file(counts_path)},
        }
        runs.append(_run_entry(Path(pred_path).name, report, inputs))
    var = pdc_variance([r.pdc for r in reports]) if len(reports) >= 2 else None
    doc = _document("eval", _metadata(args.alpha, args.epsilon, spec, args.group_mode, args.tau), runs, var)
    _emit(doc, args.out, stdout)
    return doc


# ---- split --------------------------------------------------------------------

def cmd_split(args, stdout=None):
    stdout = stdout or sys.stdout
    labels = read_labels(args.labels)
    if labels.size and (labels.min() < 0 or labels.max() >= args.classes):
        raise ConsistencyError(f"labels must lie in [0, {args.classes})")
    profile = exp_profile(args.classes, args.n_max, args.imbalance_factor)
    idx = subsample_indices(labels, profile, args.seed)
    text = format_split(idx, labels)
    stats = {
        "num_classes": profile.num_classes,
        "n_max": profile.n_max,
        "requested_imbalance_factor": profile.imbalance_factor,
        "realized_imbalance_factor": profile.realized_imbalance_factor,
        "seed": args.seed,
        "total": profile.total,
        "counts": list(profile.counts),
        "labels_sha256": sha256_file(args.labels),
    }
    if args.out:
        atomic_write(args.out, text)
        atomic_write(str(args.out) + ".stats.json", dumps_report(stats))
    else:
        stdout.write(text)
    sys.stderr.write(
        f"split: {profile.total} samples over {profile.num_classes} classes, counts "
        f"{profile.counts[0]}..{profile.counts[-1]}, realized IF {profile.realized_imbalance_factor!r}\n"
    )
    return stats


# ---- simulate / experiment ----------------------------------------------------

def cmd_simulate(args, stdout=None):
    stdout = stdout or sys.stdout
    cfg = load_config(args.config, SimulateFile)
    spec = cfg.group_spec()
    runs, comparison, means = [], [], []
    for imf in cfg.imbalance_factors:
        profile = exp_profile(cfg.num_classes, cfg.n_max, imf)
        counts = np.asarray(profile.counts, dtype=np.float64)
        reports = []
        for seed in cfg.seeds:
            records = simulate_biased_log(cfg.confusability, counts, cfg.n_test_per_class, seed)
            cm = confusion_from_log(records, cfg.num_classes)
            rep = evaluate_confusion(cm, counts, alpha=cfg.alpha, epsilon=cfg.epsilon, group_spec=spec)
            reports.append(rep)
            runs.append(_run_entry(f"IF={imf:g} seed={seed}", rep, imbalance_factor=imf, seed=seed))
        comparison.append(_aggregate({"imbalance_factor": imf}, reports))
        means.append(comparison[-1]["pdc_mean"])
    var = pdc_variance(means) if len(means) >= 2 else None
    meta = _metadata(cfg.alpha, cfg.epsilon, spec)
    meta["config"] = {"path": str(args.config), "sha256": sha256_file(args.config)}
    doc = _document("simulate", meta, runs, var, comparison)
    _emit(doc, args.out, stdout)
    return doc


def _aggregate(key, reports):
    pdcs = np.array([r.pdc for r in reports])
    accs = np.array([r.top1_acc for r in reports])
    sd = (lambda a: float(np.std(a, ddof=1)) if a.size > 1 else 0.0)
    return {**key, "n_seeds": len(reports), "pdc_mean": float(pdcs.mean()), "pdc_sd": sd(pdcs),
            "acc_mean": float(accs.mean()), "acc_sd": sd(accs)}


def cmd_experiment(args, stdout=None):
    stdout = stdout or sys.stdout
    cfg = load_config(args.config, ExperimentFile)
    result = run_experiment(cfg.imbalance_factors, [l.to_spec() for l in cfg.losses], cfg.seeds,
                            cfg.experiment_config())
    runs = []
    for cell in result.cells:
        extra = {"loss": cell.loss, "imbalance_factor": cell.imbalance_factor, "seed": cell.seed}
        if cell.error is not None:
            extra["error"] = cell.error
        runs.append(_run_entry(f"{cell.loss} IF={cell.imbalance_factor:g} seed={cell.seed}", cell.report,
                               **extra))
    comparison = [
        {"loss": s.loss, "imbalance_factor": s.imbalance_factor, "n_seeds": s.n_seeds,
         "pdc_mean": s.pdc_mean, "pdc_sd": s.pdc_sd, "acc_mean": s.acc_mean, "acc_sd": s.acc_sd}
        for s in result.summary
    ]
    meta = _metadata(cfg.alpha, cfg.epsilon, cfg.group_spec())
    meta["config"] = {"path": str(args.config), "sha256": sha256_file(args.config)}
    meta["logit_adjustment"] = {l.to_spec().name: ("post-hoc" if l.tau > 0 else
                                                  "train-time" if l.family == "BalCE" else "none")
                                for l in cfg.losses}
    doc = _document("experiment", meta, runs, result.pdc_variance or None, comparison)
    _emit(doc, args.out, stdout)
    return doc


# ---- confmat ------------------------------------------------------------------

def heatmap(cm) -> str:
    """ASCII rendering of the row-normalized matrix; rows are ground truth."""
    rows = cm.row_sums()
    width = len(str(cm.num_classes - 1))
    lines = []
    for i in range(cm.num_classes):
        frac = cm.counts[i] / rows[i] if rows[i] else np.zeros(cm.num_classes)
        idx = np.minimum((frac * len(HEATMAP_CHARS)).astype(int), len(HEATMAP_CHARS) - 1)
        lines.append(f"{i:>{width}} |" + "".join(HEATMAP_CHARS[k] for k in idx) + "|")
    return "\n".join(lines) + "\n"


def cmd_confmat(args, stdout=None):
    stdout = stdout or sys.stdout
    if args.matrix:
        cm = read_confusion_csv(args.predictions)
    else:
        records, has_logits = read_predictions(args.predictions)
        C = args.classes
        if C is None:
            if has_logits and records:
                C = len(records[0].predicted)
            else:
                C = max([r.true_label for r in records] + [r.predicted_label() for r in records] + [1]) + 1
        cm = confusion_from_log(records, C)
    csv_text = format_confusion_csv(cm)
    if args.csv:
        atomic_write(args.csv, csv_text)
    else:
        stdout.write(csv_text)
    stdout.write(heatmap(cm))
    return cm


# ---- entry point --------------------------------------------------------------

def _metric_flags(p):
    p.add_argument("--alpha", type=float, default=DEFAULT_ALPHA, help="prediction-count smoothing pseudo-count")
    p.add_argument("--epsilon", type=float, default=EPSILON, help="PDC denominator stabilizer")
    p.add_argument("--many-min", type=int, default=100, help="Many: train count > this")
    p.add_argument("--few-max", type=int, default=20, help="Few: train count < this")


def build_parser():
    parser = argparse.ArgumentParser(prog="ltpdc", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"ltpdc {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("eval", help="compute accuracy, group accuracy and PDC for prediction logs")
    p.add_argument("inputs", nargs="+", metavar="PREDICTIONS TRAIN_COUNTS",
                   help="one or more prediction-log / train-count file pairs")
    _metric_flags(p)
    p.add_argument("--tau", type=float, default=0.0, help="post-hoc logit adjustment strength (logit logs only)")
    p.add_argument("--group-mode", choices=["all", "restricted"], default="all")
    p.add_argument("--out", help="write the full report document here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("split", help="draw a long-tailed subset from a label file")
    p.add_argument("labels")
    p.add_argument("--classes", "-C", type=int, required=True)
    p.add_argument("--n-max", type=int, required=True)
    p.add_argument("--imbalance-factor", "--if", dest="imbalance_factor", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="split CSV path (stats go to <out>.stats.json)")
    p.set_defaults(func=cmd_split)

    for name, func, helptext in (("simulate", cmd_simulate, "run the prior-shift bias simulator"),
                                 ("experiment", cmd_experiment, "train and compare losses on synthetic LT data")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("config", help="JSON config file")
        p.add_argument("--out", help="write the full report document here")
        p.set_defaults(func=func)

    p = sub.add_parser("confmat", help="render a confusion matrix as CSV and ASCII heatmap")
    p.add_argument("predictions")
    p.add_argument("--classes", "-C", type=int)
    p.add_argument("--matrix", action="store_true", help="input is a confusion CSV rather than a prediction log")
    p.add_argument("--csv", help="write the CSV table here instead of standard output")
    p.set_defaults(func=cmd_confmat)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except ParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except InfeasibleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except LTPDCError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
