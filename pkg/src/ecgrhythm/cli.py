"""Command-line pipeline: synth, preprocess, detect, segment, train, evaluate.

Every subcommand accepts the global flags ``--config FILE``, ``--seed``,
``--jobs`` and ``--out DIR``. A config file is flat ``key = value`` text
whose keys are long flag names (``batch-size`` or ``batch_size``); lines
starting with ``#`` are ignored. Precedence is total: explicit flags beat the
config file, which beats built-in defaults.

Each run writes ``manifest.json`` into its output directory with the resolved
configuration and SHA-256 hashes of every input and output file. Nothing is
written outside ``--out``.

Exit codes: 0 success, 1 user or input error, 2 internal invariant violation.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import __version__
from .metrics import report_to_json
from .models import SCHEMES, CnnBackboneConfig, ModelConfig, build_model
from .nn import checkpoint
from .preprocess import FilterSpec, design_bandpass, preprocess_record
from .qrs import DualSlopeParams, detect_r_peaks, rr_intervals
from .records import (Dataset, RecordFormatError, find_record_file, load_dataset, save_record,
                      split_dataset, write_reference)
from .segments import (SegmentConfig, build_index, load_segments, save_segments, segment_dataset,
                       segments_to_arrays)
from .synth import SynthDatasetSpec, synth_dataset
from .training import TrainConfig, TrainingError, evaluate, train

EXIT_OK, EXIT_USER, EXIT_INTERNAL = 0, 1, 2

REFERENCE = "REFERENCE.csv"
MANIFEST = "manifest.json"
SEGMENT_PACK = "segments.bin"


class UsageError(Exception):
    """Bad flags, config keys or inputs; reported with exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _int_tuple(text: str) -> tuple:
    try:
        return tuple(int(v) for v in str(text).split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _add_common(p):
    g = p.add_argument_group("global")
    g.add_argument("--config", type=Path, help="flat key = value file of flag defaults")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--jobs", type=int, default=1, help="worker processes for per-record stages")
    g.add_argument("--out", type=Path, required=True, help="output directory")


def _add_data(p, reference=True):
    p.add_argument("data_dir", type=Path, help="directory of records")
    if reference:
        p.add_argument("--reference", type=Path,
                       help=f"label file (default: DATA_DIR/{REFERENCE})")
    p.add_argument("--fs", type=float, default=300.0)
    p.add_argument("--noisy-as-other", action="store_true",
                   help="fold '~' labels into the Other class instead of dropping them")


def _add_filter(p):
    p.add_argument("--low-cut", type=float, default=3.0)
    p.add_argument("--high-cut", type=float, default=45.0)
    p.add_argument("--num-taps", type=int, default=601)
    p.add_argument("--max-len", type=int, default=9000)
    p.add_argument("--preprocessed", action="store_true",
                   help="inputs were already written by the preprocess command")


def _add_detect(p):
    d = DualSlopeParams()
    p.add_argument("--k-min", type=int, default=d.k_min)
    p.add_argument("--k-max", type=int, default=d.k_max)
    p.add_argument("--refractory", type=float, default=d.refractory)
    p.add_argument("--theta-init", type=float, default=d.theta_init)
    p.add_argument("--theta-fraction", type=float, default=d.theta_fraction)


def _add_segment(p):
    d = SegmentConfig()
    p.add_argument("--seg-len", type=int, default=d.seg_len)
    p.add_argument("--min-beats", type=int, default=d.min_beats)
    p.add_argument("--lead-in", type=int, default=d.lead_in)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ecgrhythm", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="write a labelled synthetic corpus")
    p.add_argument("--n", type=int, default=30, help="number of records")
    p.add_argument("--fs", type=float, default=300.0)
    p.add_argument("--duration", type=float, default=30.0)
    p.add_argument("--hr-min", type=float, default=85.0)
    p.add_argument("--hr-max", type=float, default=120.0)
    p.add_argument("--snr-db", type=float, default=20.0)
    p.add_argument("--noisy-snr-db", type=float, default=5.0)
    _add_common(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("preprocess", help="standardize, band-pass and truncate every record")
    _add_data(p)
    _add_filter(p)
    _add_common(p)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("detect", help="R-peak detection; one peaks CSV and RR CSV per record")
    _add_data(p)
    _add_filter(p)
    _add_detect(p)
    _add_common(p)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("segment", help="cut records into fixed-length beat groups")
    _add_data(p)
    _add_filter(p)
    _add_detect(p)
    _add_segment(p)
    _add_common(p)
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("train", help="split, segment and train a classifier")
    _add_data(p)
    _add_filter(p)
    _add_detect(p)
    _add_segment(p)
    p.add_argument("--scheme", choices=SCHEMES, default="cascade")
    p.add_argument("--channels", type=_int_tuple, default=(32, 64, 128, 256))
    p.add_argument("--kernels", type=_int_tuple, default=(7, 5, 5, 3))
    p.add_argument("--dropout", type=float, default=0.2)
    p.add_argument("--lstm-hidden", type=int, default=100)
    p.add_argument("--lstm-dropout", type=float, default=0.2)
    p.add_argument("--epochs", type=int, default=TrainConfig.epochs)
    p.add_argument("--batch-size", type=int, default=TrainConfig.batch_size)
    p.add_argument("--lr", type=float, default=TrainConfig.lr)
    p.add_argument("--gamma", type=float, default=TrainConfig.gamma)
    p.add_argument("--train-fraction", type=float, default=TrainConfig.train_fraction)
    p.add_argument("--quiet", action="store_true", help="suppress per-epoch log lines")
    _add_common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="segment- and record-level metrics for a checkpoint")
    p.add_argument("input", type=Path,
                   help="segment pack file, or a data directory to preprocess and segment")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--model-config", type=Path,
                   help="JSON sidecar (default: CHECKPOINT with .json suffix, then model.json)")
    p.add_argument("--reference", type=Path)
    p.add_argument("--fs", type=float, default=300.0)
    p.add_argument("--noisy-as-other", action="store_true")
    p.add_argument("--gamma", type=float, default=TrainConfig.gamma)
    _add_filter(p)
    _add_detect(p)
    _add_segment(p)
    _add_common(p)
    p.set_defaults(func=cmd_evaluate)
    return parser


# -- config file -------------------------------------------------------------

def read_config_file(path: Path) -> dict[str, str]:
    if not path.is_file():
        raise UsageError(f"config file not found: {path}")
    values = {}
    for lineno, raw in enumerate(path.read_text().splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise UsageError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        values[key.strip().lstrip("-").replace("-", "_")] = value.strip()
    return values


def _subparser_for(parser, command):
    for action in parser._subparsers._group_actions:
        if command in action.choices:
            return action.choices[command]
    raise UsageError(f"unknown command {command!r}")


def _apply_config(sub, values: dict[str, str], path: Path):
    actions = {a.dest: a for a in sub._actions if a.dest not in ("help", "config", "func")}
    defaults = {}
    for key, text in values.items():
        action = actions.get(key)
        if action is None:
            raise UsageError(f"{path}: unknown key {key!r} for {sub.prog}")
        if isinstance(action, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
            flag = text.lower()
            if flag not in ("true", "false", "1", "0", "yes", "no"):
                raise UsageError(f"{path}: {key} expects a boolean, got {text!r}")
            defaults[key] = flag in ("true", "1", "yes")
            continue
        conv = action.type or str
        try:
            value = conv(text)
        except (ValueError, argparse.ArgumentTypeError) as exc:
            raise UsageError(f"{path}: bad value for {key}: {exc}")
        if action.choices is not None and value not in action.choices:
            raise UsageError(f"{path}: {key} must be one of {list(action.choices)}")
        defaults[key] = value
        action.required = False
    sub.set_defaults(**defaults)


def parse_args(argv=None) -> argparse.Namespace:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    pre = _Parser(add_help=False)
    pre.add_argument("--config", type=Path)
    known, _ = pre.parse_known_args(argv)
    if known.config is not None:
        command = next((a for a in argv if not a.startswith("-")), None)
        sub = _subparser_for(parser, command)
        _apply_config(sub, read_config_file(known.config), known.config)
    args = parser.parse_args(argv)
    if args.jobs < 1:
        raise UsageError("--jobs must be >= 1")
    return args


# -- manifest ----------------------------------------------------------------

def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class RunLog:
    """Collects input/output files of a command and writes the run manifest."""

    def __init__(self, args):
        self.args = args
        self.out = Path(args.out)
        self.inputs: dict[str, str] = {}
        self.outputs: list[Path] = []

    def input(self, path: Path):
        path = Path(path)
        self.inputs[str(path)] = sha256_file(path)

    def output(self, path: Path):
        self.outputs.append(Path(path))

    def write(self):
        config = {k: (list(v) if isinstance(v, tuple) else str(v) if isinstance(v, Path) else v)
                  for k, v in sorted(vars(self.args).items()) if k != "func"}
        outputs = {p.relative_to(self.out).as_posix(): sha256_file(p)
                   for p in sorted(set(self.outputs))}
        manifest = {"command": self.args.command, "version": __version__, "config": config,
                    "inputs": dict(sorted(self.inputs.items())), "outputs": outputs}
        (self.out / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


# -- shared plumbing ---------------------------------------------------------

def _reference_path(args) -> Path:
    ref = args.reference if args.reference is not None else args.data_dir / REFERENCE
    if not ref.is_file():
        raise UsageError(f"reference file not found: {ref}")
    return ref


def _load(args, log: RunLog) -> tuple[Dataset, Path]:
    if not args.data_dir.is_dir():
        raise UsageError(f"data directory not found: {args.data_dir}")
    ref = _reference_path(args)
    ds = load_dataset(args.data_dir, ref, args.fs, args.noisy_as_other)
    if len(ds) == 0:
        raise UsageError(f"no records listed in {ref}")
    log.input(ref)
    for rec in ds:
        log.input(find_record_file(args.data_dir, rec.id))
    return ds, ref


def _filter_spec(args) -> FilterSpec:
    return FilterSpec(args.low_cut, args.high_cut, args.fs, args.num_taps)


def _detect_params(args) -> DualSlopeParams:
    return DualSlopeParams(k_min=args.k_min, k_max=args.k_max, refractory=args.refractory,
                           theta_init=args.theta_init, theta_fraction=args.theta_fraction)


def _segment_cfg(args) -> SegmentConfig:
    return SegmentConfig(args.seg_len, args.min_beats, args.lead_in)


def _preprocess_one(job):
    rec, spec, max_len = job
    return preprocess_record(rec, spec, max_len)


def _preprocessed(ds: Dataset, args) -> list:
    if args.preprocessed:
        return list(ds)
    spec = _filter_spec(args)
    if args.jobs == 1:
        filt = design_bandpass(spec)
        return [preprocess_record(rec, spec, args.max_len, filt=filt) for rec in ds]
    with ProcessPoolExecutor(args.jobs) as pool:
        return list(pool.map(_preprocess_one, [(rec, spec, args.max_len) for rec in ds]))


def _segments(ds: Dataset, args):
    recs = _preprocessed(ds, args)
    return segment_dataset(Dataset(tuple(recs)), params=_detect_params(args),
                           cfg=_segment_cfg(args), preprocessed=True)


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


# -- commands ----------------------------------------------------------------

def cmd_synth(args, log: RunLog) -> int:
    if args.n < 1:
        raise UsageError("--n must be >= 1")
    spec = SynthDatasetSpec(args.n, args.fs, args.duration, (args.hr_min, args.hr_max),
                            args.snr_db, args.noisy_snr_db, args.seed)
    ds, truth = synth_dataset(spec)
    for rec in ds:
        path = log.out / f"{rec.id}.f32"
        save_record(rec, path)
        log.output(path)
        peaks = log.out / f"{rec.id}.peaks.csv"
        _write_csv(peaks, ("index", "time_s"), ((int(i), repr(float(i) / rec.fs)) for i in truth[rec.id]))
        log.output(peaks)
    write_reference([(rec.id, rec.label) for rec in ds], log.out / REFERENCE)
    log.output(log.out / REFERENCE)
    return EXIT_OK


def cmd_preprocess(args, log: RunLog) -> int:
    ds, ref = _load(args, log)
    args.preprocessed = False
    for rec in _preprocessed(ds, args):
        path = log.out / f"{rec.id}.f32"
        save_record(rec, path)
        log.output(path)
    write_reference([(rec.id, rec.label) for rec in ds], log.out / REFERENCE)
    log.output(log.out / REFERENCE)
    return EXIT_OK


def cmd_detect(args, log: RunLog) -> int:
    ds, _ = _load(args, log)
    params = _detect_params(args)
    summary = []
    for rec in _preprocessed(ds, args):
        ann = detect_r_peaks(rec.samples, rec.fs, params)
        peaks_path = log.out / f"{rec.id}.rpeaks.csv"
        _write_csv(peaks_path, ("index", "time_s"),
                   ((int(i), repr(float(i) / rec.fs)) for i in ann.peaks))
        rr_path = log.out / f"{rec.id}.rr.csv"
        _write_csv(rr_path, ("rr_s",), ((repr(float(v)),) for v in rr_intervals(ann.peaks, rec.fs)))
        log.output(peaks_path)
        log.output(rr_path)
        summary.append((rec.id, len(ann)))
    _write_csv(log.out / "detections.csv", ("record", "num_peaks"), summary)
    log.output(log.out / "detections.csv")
    return EXIT_OK


def cmd_segment(args, log: RunLog) -> int:
    ds, _ = _load(args, log)
    segments, index = _segments(ds, args)
    save_segments(segments, log.out / SEGMENT_PACK, args.seg_len)
    log.output(log.out / SEGMENT_PACK)
    _write_index(log, index, "segments.index.json")
    return EXIT_OK


def _write_index(log: RunLog, index, name):
    path = log.out / name
    path.write_text(json.dumps({k: list(v) for k, v in index.items()}, indent=2) + "\n")
    log.output(path)


def _model_config(args) -> ModelConfig:
    n = len(args.channels)
    if len(args.kernels) != n or n == 0:
        raise UsageError("--channels and --kernels must list the same non-zero number of layers")
    pools = tuple(i < 2 for i in range(n))
    cnn = CnnBackboneConfig.with_channels(args.channels, args.kernels, pools, args.dropout)
    return ModelConfig(args.scheme, cnn, args.lstm_hidden, args.lstm_dropout,
                       input_len=args.seg_len)


def cmd_train(args, log: RunLog) -> int:
    ds, _ = _load(args, log)
    model_cfg = _model_config(args)
    train_cfg = TrainConfig(epochs=args.epochs, batch_size=args.batch_size, lr=args.lr,
                            gamma=args.gamma, seed=args.seed, train_fraction=args.train_fraction)
    if not 0 < args.train_fraction < 1:
        raise UsageError("--train-fraction must lie strictly between 0 and 1")
    train_ds, val_ds = split_dataset(ds, args.train_fraction, args.seed)
    train_segs, _ = _segments(train_ds, args)
    val_segs, val_index = _segments(val_ds, args)
    if not train_segs:
        raise UsageError("no training segments: records too short or too few beats detected")
    x_tr, y_tr = segments_to_arrays(train_segs)
    x_val, y_val = segments_to_arrays(val_segs)

    save_segments(val_segs, log.out / "val_segments.bin", args.seg_len)
    log.output(log.out / "val_segments.bin")
    split = {"train": [r.id for r in train_ds], "val": [r.id for r in val_ds]}
    (log.out / "split.json").write_text(json.dumps(split, indent=2) + "\n")
    log.output(log.out / "split.json")

    model = build_model(model_cfg, seed=args.seed)
    say = None if args.quiet else (lambda line: print(line, file=sys.stderr))
    result = train(model, x_tr, y_tr, x_val, y_val, train_cfg, log=say)

    (log.out / "model.json").write_text(model_cfg.to_json() + "\n")
    log.output(log.out / "model.json")
    for name, state in (("best", result.best_state), ("last", result.final_state)):
        checkpoint.save(state, log.out / f"{name}.ckpt")
        log.output(log.out / f"{name}.ckpt")
    (log.out / "history.csv").write_text(result.history.to_csv())
    log.output(log.out / "history.csv")

    metrics = {"best_epoch": result.best_epoch, "history": result.history.to_records(),
               "train_segments": int(len(train_segs)), "val_segments": int(len(val_segs)),
               "num_parameters": model.num_parameters()}
    if val_segs:
        model.load_state_dict(result.best_state)
        seg_rep, rec_rep = evaluate(model, x_val, y_val, val_index, gamma=args.gamma)
        metrics["best"] = {"segment": seg_rep, "record": rec_rep}
    (log.out / "metrics.json").write_text(report_to_json(metrics) + "\n")
    log.output(log.out / "metrics.json")
    return EXIT_OK


def _sidecar(args) -> Path:
    candidates = ([args.model_config] if args.model_config is not None else
                  [args.checkpoint.with_suffix(".json"), args.checkpoint.parent / "model.json"])
    for path in candidates:
        if path.is_file():
            return path
    raise UsageError(f"model config sidecar not found: {candidates[0]}")


def cmd_evaluate(args, log: RunLog) -> int:
    if not args.checkpoint.is_file():
        raise UsageError(f"checkpoint not found: {args.checkpoint}")
    sidecar = _sidecar(args)
    model_cfg = ModelConfig.from_json(sidecar.read_text())
    model = build_model(model_cfg)
    model.load_state_dict(checkpoint.load(args.checkpoint))
    log.input(args.checkpoint)
    log.input(sidecar)
    if args.input.is_file():
        segments = load_segments(args.input)
        log.input(args.input)
        index = build_index(segments)
    elif args.input.is_dir():
        args.data_dir = args.input
        ds, _ = _load(args, log)
        segments, index = _segments(ds, args)
    else:
        raise UsageError(f"input not found: {args.input}")
    if not segments:
        raise UsageError(f"no segments to evaluate in {args.input}")
    x, y = segments_to_arrays(segments)
    seg_rep, rec_rep = evaluate(model, x, y, index, gamma=args.gamma)
    (log.out / "metrics.json").write_text(report_to_json({"segment": seg_rep, "record": rec_rep}) + "\n")
    cms = {"classes": ["N", "A", "O"], "segment": seg_rep["confusion_matrix"],
           "record": rec_rep["confusion_matrix"]}
    (log.out / "confusion.json").write_text(json.dumps(cms, indent=2) + "\n")
    log.output(log.out / "metrics.json")
    log.output(log.out / "confusion.json")
    print(f"segments {len(segments)}  weighted F1 {seg_rep['weighted_f1']:.4f}  "
          f"records {rec_rep['total']}  weighted F1 {rec_rep['weighted_f1']:.4f}")
    return EXIT_OK


# -- entry point -------------------------------------------------------------

_USER_ERRORS = (UsageError, RecordFormatError, checkpoint.CheckpointError, TrainingError,
                ValueError, OSError)


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
        args.out.mkdir(parents=True, exist_ok=True)
        log = RunLog(args)
        code = args.func(args, log)
        log.write()
        return code
    except _USER_ERRORS as exc:
        print(f"error: {exc}".replace("\n", " "), file=sys.stderr)
        return EXIT_USER
    except Exception as exc:  # anything else is a broken invariant, not bad input
        print(f"internal error: {type(exc).__name__}: {exc}".replace("\n", " "), file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
