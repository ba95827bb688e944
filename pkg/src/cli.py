"""
Command-line interface for carbospec.
=====================================

Sub-commands:
    ingest    source export / canonical CSV -> canonical CSV + rejection log
    stats     label-distribution Wasserstein distances and quartiles
    train     fit one of plsr | cubist | lssvm | mlp | cnn
    evaluate  R2 / RMSE / RPD / RPIQ on model predictions or bundled pairs
    predict   sample_id, predicted g/100g for every spectrum
    saliency  saliency SVG + peak table for MLP / CNN models
    plot      spectrum SVG with optional carbonate band markers

Reports go to stdout (key=value lines, or JSON with --json); logs go to
stderr. Exit codes: 0 success, 2 validation error, 3 I/O error,
4 numerical divergence.
"""

import argparse
import io
import json
import sys
from pathlib import Path
from typing import Any, Dict, Optional, Sequence

import numpy as np
import pandas as pd
from loguru import logger

from . import reference_data
from .config import (
    CARBOSPEC_THREADS,
    DEBUG,
    DEFAULT_SEED,
    DEFAULT_TRAIN_FRACTION,
    LOG_LEVEL,
    RunConfig,
    validate_run_config,
)
from .exceptions import InvalidParamsError, NumericalDivergenceError, StorageError, ValidationError
from .ingest import (
    AdapterOptions,
    adapt_kssl_with_log,
    adapt_lucas_with_log,
    load_canonical,
    load_many,
    load_pairs,
    merge,
    write_canonical,
    write_rejection_log,
)
from .metrics import (
    EvaluationReport,
    carbonate_agreement_report,
    evaluate,
    format_number,
    label_distance,
    quartiles,
    table1_reports,
    table2_row_check,
)
from .model_store import ModelKind, fit_model, load_model, save_model
from .plotting import plot_saliency, plot_spectrum, save_spectrogram_png
from .preprocess import apply_pipeline, standard_pipeline
from .saliency import UnsupportedModelError, coefficient_report, compare_with_reference, saliency
from .spectra import ABSORBANCE, REFLECTANCE_PCT, RejectionLog, SpectralDataset, dataset_to_absorbance, screen
from .spectrogram import render_spectrogram
from .utils import atomic_write_text, resolve_threads, setup_logging, split_indices

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_IO = 3
EXIT_DIVERGENCE = 4

INPUT_KINDS = {"absorbance": ABSORBANCE, "reflectance_pct": REFLECTANCE_PCT}


def _emit(payload: Dict[str, Any], as_json: bool) -> None:
    """Print a flat report as key=value lines or JSON."""
    if as_json:
        print(json.dumps(payload, sort_keys=True, default=str))
        return
    for key, value in payload.items():
        if isinstance(value, float):
            value = format_number(value)
        print(f"{key}={value}")


def _load(path: str, kind_name: str) -> SpectralDataset:
    return load_canonical(path, INPUT_KINDS[kind_name])


def _select(dataset: SpectralDataset, sample_id: Optional[str]) -> SpectralDataset:
    if sample_id is None:
        return dataset
    if sample_id not in dataset.sample_ids:
        raise ValidationError(f"sample {sample_id!r} not found")
    return dataset.subset([dataset.sample_ids.index(sample_id)])


# --------------------------------------------------------------------------
# ingest
# --------------------------------------------------------------------------

def cmd_ingest(args: argparse.Namespace) -> int:
    opts = AdapterOptions(
        id_column=args.id_column,
        label_column=args.label_column,
        wavelength_prefix=args.wavelength_prefix,
        wavelength_suffix=args.wavelength_suffix,
        reflectance_unit=args.reflectance_unit,
        label_unit=args.label_unit,
    )
    log = RejectionLog()
    if args.format == "kssl":
        dataset, log = adapt_kssl_with_log(args.input, opts)
    elif args.format == "lucas":
        dataset, log = adapt_lucas_with_log(args.input, opts)
    else:
        dataset = _load(args.input, args.input_kind)
        if dataset.kind == REFLECTANCE_PCT:
            dataset, log = screen(dataset)
            dataset = dataset_to_absorbance(dataset)

    for other in load_many(args.merge_with or [], ABSORBANCE, args.threads):
        dataset = merge(dataset, other)

    write_canonical(dataset, args.output)
    rejections = args.rejections or f"{args.output}.rejected.tsv"
    write_rejection_log(log, rejections)
    _emit({"samples": len(dataset), "rejected": len(log), "kind": str(dataset.kind),
           "output": args.output, "rejections": rejections}, args.json)
    return EXIT_OK


# --------------------------------------------------------------------------
# stats
# --------------------------------------------------------------------------

def _quartile_fields(prefix: str, labels: np.ndarray) -> Dict[str, Any]:
    q = quartiles(labels)
    return {f"{prefix}.n": int(labels.size), f"{prefix}.min": float(labels.min()), f"{prefix}.q1": q.q1,
            f"{prefix}.median": q.q2, f"{prefix}.q3": q.q3, f"{prefix}.max": float(labels.max())}


def cmd_stats(args: argparse.Namespace) -> int:
    first = _load(args.dataset, args.input_kind)
    report: Dict[str, Any] = _quartile_fields("a", first.labels)
    if args.other:
        second = _load(args.other, args.input_kind)
        report.update(_quartile_fields("b", second.labels))
        report["wasserstein"] = label_distance(first.labels, second.labels, args.p)
    if args.split:
        train_idx, test_idx = split_indices(len(first), args.train_fraction, args.seed)
        if test_idx.size == 0:
            raise ValidationError("split leaves no test samples")
        report.update(_quartile_fields("train", first.labels[train_idx]))
        report.update(_quartile_fields("test", first.labels[test_idx]))
        report["split.wasserstein"] = label_distance(first.labels[train_idx], first.labels[test_idx], args.p)
    _emit(report, args.json)
    return EXIT_OK


# --------------------------------------------------------------------------
# train
# --------------------------------------------------------------------------

_OVERRIDES = {
    "components": "n_components",
    "gamma": "gamma",
    "min_leaf": "min_leaf",
    "epochs": "epochs",
    "batch_size": "batch_size",
    "learning_rate": "learning_rate",
    "lr_decay": "lr_decay",
    "input_mode": "input_mode",
}


def _run_config(args: argparse.Namespace) -> RunConfig:
    config = RunConfig.from_json(Path(args.config).read_text(encoding="utf-8")) if args.config else RunConfig()
    if args.seed is not None:
        config.seed = args.seed
    if args.train_fraction is not None:
        config.train_fraction = args.train_fraction
    if args.derivative is not None:
        config.derivative = args.derivative
    config.output_dir = str(Path(args.output).parent)
    config.verbosity = args.log_level
    overrides = {key: getattr(args, flag) for flag, key in _OVERRIDES.items() if getattr(args, flag, None) is not None}
    if args.smoothing:
        overrides["smoothing"] = True
    if overrides:
        config.hyperparameters = {**config.hyperparameters,
                                  args.kind: {**config.hyperparameters.get(args.kind, {}), **overrides}}
    is_valid, message = validate_run_config(config)
    if not is_valid:
        raise InvalidParamsError(message)
    return config


def cmd_train(args: argparse.Namespace) -> int:
    config = _run_config(args)
    dataset = _load(args.dataset, args.input_kind)
    outcome = fit_model(ModelKind.parse(args.kind), dataset, config, args.threads)

    save_model(outcome.model, args.output)
    output = Path(args.output)
    config.save(output.parent / "run_config.json")
    log_text = outcome.log_text()
    if outcome.validation is not None:
        log_text += outcome.validation.to_text(prefix="final.")
    atomic_write_text(output.with_name(output.name + ".log.txt"), log_text)

    report: Dict[str, Any] = {"kind": args.kind, "model": args.output,
                              "train_samples": int(outcome.train_indices.size),
                              "val_samples": int(outcome.val_indices.size)}
    if outcome.validation is not None:
        report.update({f"val.{k}": v for k, v in outcome.validation.to_dict().items() if not isinstance(v, dict)})
    _emit(report, args.json)
    return EXIT_OK


# --------------------------------------------------------------------------
# evaluate
# --------------------------------------------------------------------------

def _report_payload(name: str, report: EvaluationReport) -> Dict[str, Any]:
    flat = {}
    for key, value in report.to_dict().items():
        if isinstance(value, dict):
            flat.update({f"{name}.{key}.{k}": v for k, v in value.items()})
        else:
            flat[f"{name}.{key}"] = value
    return flat


def cmd_evaluate(args: argparse.Namespace) -> int:
    payload: Dict[str, Any] = {}
    if args.table2:
        for row in reference_data.TABLE2_ROWS:
            check = table2_row_check(row.rmse)
            payload.update({f"{row.model}.rpd": check["rpd"], f"{row.model}.rpiq": check["rpiq"],
                            f"{row.model}.printed_rpd": row.rpd, f"{row.model}.printed_rpiq": row.rpiq})
    elif args.rmse is not None:
        check = table2_row_check(args.rmse, args.obs_std, args.iq)
        payload.update({"rpd": check["rpd"], "rpiq": check["rpiq"]})
    elif args.xrd:
        payload.update(carbonate_agreement_report())
    elif args.pairs == "table1":
        for name, report in table1_reports(by_group=args.by_group).items():
            payload.update(_report_payload(name, report))
    elif args.pairs:
        obs, pred = load_pairs(args.pairs)
        payload.update(_report_payload("all", evaluate(obs, pred)))
    elif args.model and args.dataset:
        model = load_model(args.model)
        dataset = _load(args.dataset, "reflectance_pct" if model.input_kind == REFLECTANCE_PCT else "absorbance")
        payload.update(_report_payload("all", evaluate(dataset.labels, model.predict(dataset, args.threads))))
    else:
        raise ValidationError("evaluate needs --pairs, --model with --data, --table2, --rmse or --xrd")
    _emit(payload, args.json)
    return EXIT_OK


# --------------------------------------------------------------------------
# predict
# --------------------------------------------------------------------------

def cmd_predict(args: argparse.Namespace) -> int:
    model = load_model(args.model)
    dataset = _load(args.dataset, "reflectance_pct" if model.input_kind == REFLECTANCE_PCT else "absorbance")
    predictions = model.predict(dataset, args.threads)
    frame = pd.DataFrame({"sample_id": list(dataset.sample_ids), "predicted_g100g": predictions})
    buffer = io.StringIO()
    frame.to_csv(buffer, index=False, float_format="%.17g", lineterminator="\n")
    atomic_write_text(Path(args.output), buffer.getvalue())
    _emit({"samples": len(dataset), "output": args.output}, args.json)
    return EXIT_OK


# --------------------------------------------------------------------------
# saliency / plot
# --------------------------------------------------------------------------

def cmd_saliency(args: argparse.Namespace) -> int:
    model = load_model(args.model)
    dataset = _load(args.dataset, "reflectance_pct" if model.input_kind == REFLECTANCE_PCT else "absorbance")
    processed = model.preprocess(_select(dataset, args.sample), args.threads)
    try:
        smap = saliency(model.estimator, processed.matrix, processed.grid, top=args.top)
    except UnsupportedModelError as exc:
        logger.warning(str(exc))
        print(coefficient_report(model.kind.label, model.spectral_coefficients(), processed.grid, args.top).to_text(), end="")
        return EXIT_OK

    plot_saliency(processed.matrix.mean(axis=0), smap, args.output, processed.grid,
                  title=f"{model.kind.label} saliency")
    print(smap.peaks_text(), end="")
    for row in compare_with_reference(smap):
        gap = "inf" if row["nearest_peak_nm"] is None else f"{row['gap_nm']:.1f}"
        print(f"reference_nm={row['reference_nm']:.0f} gap_nm={gap} matched={row['matched']}")
    return EXIT_OK


def cmd_plot(args: argparse.Namespace) -> int:
    dataset = _select(_load(args.dataset, args.input_kind), args.sample)
    if args.preprocess != "none":
        pipeline = standard_pipeline(1 if args.preprocess == "sg1" else 2,
                                     from_reflectance=dataset.kind == REFLECTANCE_PCT)
        dataset = apply_pipeline(dataset, pipeline, args.threads)
    values = dataset.matrix[0]
    plot_spectrum(values, args.output, dataset.grid, title=dataset.sample_ids[0],
                  markers=args.markers, ylabel=str(dataset.kind))
    if args.spectrogram:
        save_spectrogram_png(render_spectrogram(dataset.spectrum(0)), args.spectrogram)
    _emit({"sample_id": dataset.sample_ids[0], "output": args.output}, args.json)
    return EXIT_OK


# --------------------------------------------------------------------------
# Parser
# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="carbospec",
        description="Soil carbonate prediction from NIR spectra",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  python main.py ingest --format lucas lucas_wide.csv -o lucas.csv --label-column CaCO3
  python main.py stats kssl.csv lucas.csv
  python main.py train merged.csv --kind mlp -o models/mlp.cspc
  python main.py evaluate --pairs table1 --by-group
  python main.py saliency --model models/mlp.cspc local.csv -o saliency.svg
        """,
    )
    parser.add_argument("--threads", type=int, default=None,
                        help=f"Worker threads (default: CARBOSPEC_THREADS = {CARBOSPEC_THREADS})")
    parser.add_argument("--log-level", default=LOG_LEVEL, help=f"Log level (default: {LOG_LEVEL})")
    parser.add_argument("-v", "--verbose", action="store_true", help="Shortcut for --log-level DEBUG")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, handler, help_text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--json", action="store_true", help="JSON report instead of key=value lines")
        p.set_defaults(handler=handler)
        return p

    def input_kind(p: argparse.ArgumentParser) -> None:
        p.add_argument("--input-kind", choices=sorted(INPUT_KINDS), default="absorbance",
                       help="What canonical CSV values are (default: absorbance)")

    p = add("ingest", cmd_ingest, "Convert a source export to canonical CSV")
    p.add_argument("input")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--format", choices=["canonical", "kssl", "lucas"], default="canonical")
    input_kind(p)
    p.add_argument("--id-column", default="sample_id")
    p.add_argument("--label-column", default="caco3")
    p.add_argument("--wavelength-prefix", default="")
    p.add_argument("--wavelength-suffix", default="")
    p.add_argument("--reflectance-unit", choices=["percent", "fraction"], default=None,
                   help="KSSL reflectance unit (required for --format kssl)")
    p.add_argument("--label-unit", choices=["g/100g", "g/kg"], default=None)
    p.add_argument("--rejections", default=None, help="Rejection log path (default: <output>.rejected.tsv)")
    p.add_argument("--merge-with", action="append", help="Canonical CSV to append (repeatable)")

    p = add("stats", cmd_stats, "Label distribution statistics")
    p.add_argument("dataset")
    p.add_argument("other", nargs="?")
    input_kind(p)
    p.add_argument("--p", type=int, default=1, help="Wasserstein order (default: 1)")
    p.add_argument("--split", action="store_true", help="Report the train/test label distance")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--train-fraction", type=float, default=DEFAULT_TRAIN_FRACTION)

    p = add("train", cmd_train, "Train a model")
    p.add_argument("dataset")
    p.add_argument("--kind", choices=[k.label for k in ModelKind], required=True)
    p.add_argument("-o", "--output", required=True, help="Model file")
    input_kind(p)
    p.add_argument("--config", default=None, help="run_config.json to start from")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--train-fraction", type=float, default=None)
    p.add_argument("--derivative", type=int, choices=[1, 2], default=None)
    p.add_argument("--components", type=int, default=None)
    p.add_argument("--gamma", type=float, default=None)
    p.add_argument("--min-leaf", type=int, default=None)
    p.add_argument("--smoothing", action="store_true")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--learning-rate", type=float, default=None)
    p.add_argument("--lr-decay", type=float, default=None)
    p.add_argument("--input-mode", choices=["spectrogram", "spectrum"], default=None)

    p = add("evaluate", cmd_evaluate, "Compute R2, RMSE, RPD and RPIQ")
    p.add_argument("--pairs", default=None, help="'table1' or an observed,predicted CSV")
    p.add_argument("--by-group", action="store_true", help="Per-group reports for --pairs table1")
    p.add_argument("--model", default=None)
    p.add_argument("--data", dest="dataset", default=None)
    p.add_argument("--table2", action="store_true", help="RPD/RPIQ recomputed for every model comparison row")
    p.add_argument("--rmse", type=float, default=None)
    p.add_argument("--obs-std", type=float, default=reference_data.TABLE2_OBS_STD)
    p.add_argument("--iq", type=float, default=reference_data.TABLE2_IQ)
    p.add_argument("--xrd", action="store_true", help="XRD / volumetric / MLP agreement report")

    p = add("predict", cmd_predict, "Predict carbonate content")
    p.add_argument("dataset")
    p.add_argument("--model", required=True)
    p.add_argument("-o", "--output", required=True)

    p = add("saliency", cmd_saliency, "Saliency map of an MLP or CNN model")
    p.add_argument("dataset")
    p.add_argument("--model", required=True)
    p.add_argument("-o", "--output", required=True, help="SVG file")
    p.add_argument("--sample", default=None, help="Single sample id (default: average over all)")
    p.add_argument("--top", type=int, default=10)

    p = add("plot", cmd_plot, "Plot one spectrum as SVG")
    p.add_argument("dataset")
    p.add_argument("-o", "--output", required=True, help="SVG file")
    input_kind(p)
    p.add_argument("--sample", default=None)
    p.add_argument("--markers", action="store_true", help="Dashed lines at the carbonate bands")
    p.add_argument("--preprocess", choices=["none", "sg1", "sg2"], default="none")
    p.add_argument("--spectrogram", default=None, help="Also write the CNN spectrogram as PNG")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Parse arguments, run one command and map errors to exit codes."""
    args = build_parser().parse_args(argv)
    setup_logging("DEBUG" if args.verbose or DEBUG else args.log_level)
    args.threads = resolve_threads(args.threads)
    try:
        return args.handler(args)
    except ValidationError as exc:
        logger.error(str(exc))
        print(f"ERROR: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericalDivergenceError as exc:
        logger.error(str(exc))
        print(f"ERROR: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except (StorageError, OSError) as exc:
        logger.error(str(exc))
        print(f"ERROR: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
