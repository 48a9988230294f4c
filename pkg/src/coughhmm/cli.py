"""Command-line front end: ``coughhmm {extract,train,detect,evaluate,synth}``.

Exit codes: 0 on success, 1 for bad input, 2 when an internal invariant
breaks.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from . import __version__
from .annotations import LabeledSeries, align_labels, labels_to_intervals, load_labels, save_labels
from .audio import AudioError, load_wav
from .evaluation import format_report, two_fold_cv, write_roc_csv
from .features import (
    BAND_EDGES_HZ,
    BIN_DURATION_S,
    FeatureSeries,
    export_features_csv,
    export_spectrogram_csv,
    extract_features,
    import_features_csv,
)
from .hmm import (
    ENERGY_FLOOR,
    Grouping,
    Mode,
    decode,
    demo_model,
    group_scores,
    load_model,
    sample,
    save_model,
    train,
)
from .states import STATE_NAMES

logger = logging.getLogger("coughhmm")

EXIT_OK, EXIT_INPUT, EXIT_INTERNAL = 0, 1, 2


class InputError(Exception):
    pass


@dataclass(frozen=True)
class RunConfig:
    bin_duration_s: float = BIN_DURATION_S
    band_edges_hz: tuple = BAND_EDGES_HZ
    mode: str = Mode.MULTIVARIATE.value
    energy_floor: float = ENERGY_FLOOR
    seed: int = 0


def _parse_edges(text) -> tuple:
    """``0,2000,4000,22000`` -> three contiguous bands."""
    if isinstance(text, (list, tuple)):
        values = [float(v) for v in text]
    else:
        values = [float(v) for v in str(text).split(",")]
    if len(values) != 4:
        raise InputError(f"band edges need 4 comma-separated values, got {text!r}")
    return tuple(zip(values[:-1], values[1:]))


def resolve_config(args) -> RunConfig:
    """Defaults, overridden by ``--config`` JSON, overridden by flags."""
    cfg = RunConfig()
    if getattr(args, "config", None):
        try:
            with open(args.config, encoding="utf-8") as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"config {args.config}: {exc}") from exc
        known = {f.name for f in fields(RunConfig)}
        unknown = set(doc) - known
        if unknown:
            raise InputError(f"config {args.config}: unknown keys {sorted(unknown)}")
        if "band_edges_hz" in doc:
            doc["band_edges_hz"] = _parse_edges(doc["band_edges_hz"])
        cfg = replace(cfg, **doc)
    overrides = {}
    for name in ("bin_duration_s", "mode", "energy_floor", "seed"):
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = value
    if getattr(args, "band_edges", None) is not None:
        overrides["band_edges_hz"] = _parse_edges(args.band_edges)
    cfg = replace(cfg, **overrides)
    Mode(cfg.mode)
    return cfg


def _load_series(path, cfg: RunConfig) -> FeatureSeries:
    path = Path(path)
    if not path.exists():
        raise InputError(f"{path}: no such file")
    if path.suffix.lower() == ".wav":
        return extract_features(load_wav(path), cfg.bin_duration_s, cfg.band_edges_hz)
    return import_features_csv(path)


def _load_labeled(features_path, labels_path, cfg: RunConfig) -> LabeledSeries:
    series = _load_series(features_path, cfg)
    if not Path(labels_path).exists():
        raise InputError(f"{labels_path}: no such file")
    intervals = load_labels(labels_path)
    end = len(series) * series.bin_duration_s
    late = [iv for iv in intervals if iv.start_s >= end]
    if late:
        raise InputError(
            f"{labels_path}: annotation starting at {late[0].start_s} s lies beyond the "
            f"{end} s covered by {features_path}"
        )
    return align_labels(series, intervals)


def _read_manifest(path) -> list[tuple[Path, Path]]:
    path = Path(path)
    base = path.parent
    pairs = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or set(reader.fieldnames) != {"input", "labels"}:
            raise InputError(f"{path}: manifest header must be input,labels")
        for lineno, row in enumerate(reader, start=2):
            if not row["input"] or not row["labels"]:
                raise InputError(f"{path}: row {lineno}: empty path")
            pairs.append((base / row["input"].strip(), base / row["labels"].strip()))
    if not pairs:
        raise InputError(f"{path}: manifest lists no recordings")
    return pairs


# ---------------------------------------------------------------- commands


def cmd_extract(args, cfg: RunConfig) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    failed = 0
    for audio in args.audio:
        stem = Path(audio).stem
        try:
            clip = load_wav(audio)
            series = extract_features(clip, cfg.bin_duration_s, cfg.band_edges_hz)
            export_features_csv(series, out_dir / f"{stem}.features.csv")
            if args.spectrogram:
                export_spectrogram_csv(clip, cfg.bin_duration_s, out_dir / f"{stem}.spectrogram.csv")
            logger.info("%s: %d bins", audio, len(series))
        except (AudioError, ValueError, OSError) as exc:
            failed += 1
            print(f"error: {audio}: {exc}", file=sys.stderr)
    return EXIT_INPUT if failed else EXIT_OK


def cmd_train(args, cfg: RunConfig) -> int:
    pairs = [tuple(p) for p in (args.pair or [])]
    if args.manifest:
        pairs += _read_manifest(args.manifest)
    if not pairs:
        raise InputError("give at least one --pair FEATURES LABELS or a --manifest")
    data = [_load_labeled(f, l, cfg) for f, l in pairs]
    model = train(data, cfg.mode, energy_floor=cfg.energy_floor, band_edges_hz=cfg.band_edges_hz)
    save_model(model, args.out)
    logger.info("trained %s model on %d bins -> %s", cfg.mode, sum(len(d) for d in data), args.out)
    return EXIT_OK


def cmd_detect(args, cfg: RunConfig) -> int:
    model = load_model(args.model)
    if args.mode is not None and Mode(args.mode) is not model.mode:
        raise InputError(f"model is {model.mode.value} but --mode {args.mode} was requested")
    src = Path(args.input)
    if not src.exists():
        raise InputError(f"{src}: no such file")
    if src.suffix.lower() == ".wav":
        series = extract_features(
            load_wav(src),
            model.bin_duration_s or cfg.bin_duration_s,
            model.band_edges_hz or cfg.band_edges_hz,
        )
    else:
        series = import_features_csv(src)
        if model.bin_duration_s is not None and not np.isclose(series.bin_duration_s, model.bin_duration_s, rtol=1e-9):
            raise InputError(
                f"{src}: {series.bin_duration_s} s bins do not match the model's {model.bin_duration_s} s bins"
            )
    result = decode(model, series)
    cough = group_scores(result.posteriors, Grouping.COUGH)
    coughing = group_scores(result.posteriors, Grouping.COUGHING)
    chosen = cough if Grouping(args.grouping) is Grouping.COUGH else coughing
    decision = chosen >= args.threshold
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ["t_mid_s"] + [f"posterior_{s}" for s in STATE_NAMES] + ["viterbi_state", "cough_score", "coughing_score", "decision"]
        )
        for k, t in enumerate(series.t_mid_s):
            writer.writerow(
                [repr(float(t))]
                + [repr(float(p)) for p in result.posteriors[k]]
                + [STATE_NAMES[result.viterbi_path[k]], repr(float(cough[k])), repr(float(coughing[k])), int(decision[k])]
            )
    logger.info("%s: %d of %d bins positive", src, int(decision.sum()), len(series))
    return EXIT_OK


def cmd_evaluate(args, cfg: RunConfig) -> int:
    data = [_load_labeled(f, l, cfg) for f, l in _read_manifest(args.manifest)]
    report = two_fold_cv(data, cfg.mode, energy_floor=cfg.energy_floor, band_edges_hz=cfg.band_edges_hz)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    report.to_json(out_dir / "report.json")
    (out_dir / "report.txt").write_text(format_report(report), encoding="utf-8")
    for fold in report.folds:
        for split_name, split in (("train", fold.train), ("test", fold.test)):
            for name, g in split.grouped.items():
                if g is not None:
                    write_roc_csv(g.curve, out_dir / f"roc_fold{fold.fold}_{split_name}_{name}.csv")
            if split.ovo is not None:
                for pair in split.ovo.pairs:
                    write_roc_csv(pair.curve, out_dir / f"roc_fold{fold.fold}_{split_name}_ovo_{pair.first}-{pair.second}.csv")
    if not args.quiet:
        sys.stdout.write(format_report(report))
    return EXIT_OK


def cmd_synth(args, cfg: RunConfig) -> int:
    model = load_model(args.model) if args.model else demo_model(cfg.mode)
    data = sample(model, args.n_bins, cfg.seed, bin_duration_s=model.bin_duration_s or cfg.bin_duration_s)
    export_features_csv(data.features, args.features_out)
    save_labels(labels_to_intervals(data.labels, data.features.bin_duration_s), args.labels_out)
    logger.info("wrote %d synthetic bins (seed %s)", len(data), cfg.seed)
    return EXIT_OK


# ---------------------------------------------------------------- parser


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _add_common(p: argparse.ArgumentParser, features=True) -> None:
    p.add_argument("--config", help="JSON file with RunConfig keys; flags override it")
    if features:
        p.add_argument("--bin-duration", dest="bin_duration_s", type=float, help=f"bin length in seconds (default {BIN_DURATION_S})")
        p.add_argument("--band-edges", help="four comma-separated band edges in Hz (default 0,2000,4000,22000)")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="coughhmm", description="Cough detection with a five-state hidden Markov model.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("extract", help="audio -> band-energy feature CSV")
    p.add_argument("audio", nargs="+", help="WAV files")
    p.add_argument("--out-dir", required=True, help="directory for <name>.features.csv files")
    p.add_argument("--spectrogram", action="store_true", help="also write <name>.spectrogram.csv")
    _add_common(p)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("train", help="fit a model from features and labels")
    p.add_argument("--pair", nargs=2, action="append", metavar=("FEATURES", "LABELS"), help="feature CSV or WAV with its label CSV; repeatable")
    p.add_argument("--manifest", help="CSV with columns input,labels")
    p.add_argument("--mode", choices=[m.value for m in Mode], help="emission mode (default multivariate)")
    p.add_argument("--energy-floor", dest="energy_floor", type=float, help=f"added before the log (default {ENERGY_FLOOR})")
    p.add_argument("--seed", type=int, help="accepted for config symmetry; training is deterministic")
    p.add_argument("--out", required=True, help="model JSON path")
    _add_common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("detect", help="per-bin posteriors, Viterbi path and decisions")
    p.add_argument("input", help="WAV file or feature CSV")
    p.add_argument("--model", required=True, help="model JSON")
    p.add_argument("--grouping", choices=[g.value for g in Grouping], default=Grouping.COUGH.value, help="which score the decision thresholds")
    p.add_argument("--threshold", type=float, default=0.5, help="positive when score >= threshold (default 0.5)")
    p.add_argument("--mode", choices=[m.value for m in Mode], help="fail unless the model has this mode")
    p.add_argument("--out", required=True, help="detection CSV path")
    _add_common(p)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("evaluate", help="two-fold cross-validation over a manifest")
    p.add_argument("--manifest", required=True, help="CSV with columns input,labels (paths relative to the manifest)")
    p.add_argument("--mode", choices=[m.value for m in Mode], help="emission mode (default multivariate)")
    p.add_argument("--energy-floor", dest="energy_floor", type=float, help=f"added before the log (default {ENERGY_FLOOR})")
    p.add_argument("--out-dir", required=True, help="directory for report.json, report.txt and ROC CSVs")
    p.add_argument("--quiet", action="store_true", help="do not print the report table")
    _add_common(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("synth", help="sample labelled features from a model")
    p.add_argument("--model", help="model JSON (default: built-in demo model)")
    p.add_argument("--mode", choices=[m.value for m in Mode], help="mode of the demo model")
    p.add_argument("--n-bins", type=int, required=True, help="number of bins")
    p.add_argument("--seed", type=int, help="random seed (default 0)")
    p.add_argument("--features-out", required=True, help="feature CSV path")
    p.add_argument("--labels-out", required=True, help="label CSV path")
    _add_common(p, features=False)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = resolve_config(args)
        if getattr(args, "n_bins", 1) < 1:
            raise InputError("--n-bins must be at least 1")
        return args.func(args, cfg)
    except (InputError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # noqa: BLE001
        logger.exception("internal error: %s", exc)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
