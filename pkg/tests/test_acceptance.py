"""Acceptance criteria, each run at its stated tolerance.

Every test records one PASS/FAIL line (see ``conftest.verdict``); the lines are
repeated in the pytest terminal summary. The slow criteria dominate the runtime:
the end-to-end smoke and the ten-seed scheme comparison together take tens of
minutes on one core.
"""

import csv
import json
import time

import numpy as np
import pytest

from ecgrhythm.cli import main
from ecgrhythm.losses import cross_entropy, focal_loss, focal_terms
from ecgrhythm.models import CnnBackboneConfig, ModelConfig, build_model
from ecgrhythm.nn import BiLSTM
from ecgrhythm.preprocess import FilterSpec, design_bandpass, preprocess_record
from ecgrhythm.qrs import detect_r_peaks
from ecgrhythm.records import split_dataset
from ecgrhythm.segments import SegmentConfig, segment_dataset, segment_record, segments_to_arrays
from ecgrhythm.synth import Rhythm, SynthDatasetSpec, SynthSpec, synth_dataset, synth_ecg
from ecgrhythm.training import TrainConfig, evaluate, train

from gradsuite import run_full_suite
from instrument import instrument, out_of_bounds

SMALL_CNN = CnnBackboneConfig.with_channels((8, 16, 32, 64))
SMALL_HIDDEN = 32
SMALL_FLAGS = ["--channels", "8,16,32,64", "--lstm-hidden", str(SMALL_HIDDEN)]


# -- gradients and losses -------------------------------------------------------

def test_gradient_suite(verdict):
    t = time.perf_counter()
    results = list(run_full_suite(seeds=range(20)))
    secs = time.perf_counter() - t
    failures = [(label, err, tol) for label, err, tol in results if not err < tol]
    worst = max(results, key=lambda r: r[1] / r[2])
    ok = not failures and secs < 120
    verdict("gradient suite", ok, f"{len(results)} cases over 20 seeds, {len(failures)} over tolerance, "
            f"worst {worst[0]} err/tol {worst[1] / worst[2]:.3f}, {secs:.1f} s (< 120 s)")
    assert ok, failures[:5]


def _random_probs(rng, b, k):
    z = rng.standard_normal((b, k)) * 3
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def test_focal_reduces_to_cross_entropy(verdict):
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(1000):
        b, k = int(rng.integers(1, 65)), int(rng.integers(2, 6))
        p, t = _random_probs(rng, b, k), rng.integers(0, k, b)
        worst = max(worst, abs(focal_loss(p, t, 0.0) - cross_entropy(p, t)))
    violations = 0
    for gamma in (0.5, 1.0, 2.0, 5.0):
        for _ in range(250):
            p, t = _random_probs(rng, 32, 3), rng.integers(0, 3, 32)
            ce = -np.log(np.clip(p[np.arange(32), t], 1e-12, 1.0))
            violations += int(np.sum(focal_terms(p, t, gamma) > ce))
    ok = worst <= 1e-12 and violations == 0
    verdict("focal loss reduction", ok, f"max |focal(0) - CE| = {worst:.2e} over 1000 batches (<= 1e-12); "
            f"{violations} pointwise focal > CE violations for gamma in {{0.5, 1, 2, 5}}")
    assert ok


# -- signal processing ------------------------------------------------------------

def test_filter_response(verdict):
    taps = design_bandpass(FilterSpec(3.0, 45.0, 300.0, 601)).taps.astype(np.float64)
    n = np.arange(taps.size)

    def mag(f):
        # direct DTFT sum, independent of the package's own response helper
        return abs(np.sum(taps * np.exp(-2j * np.pi * f / 300.0 * n)))

    band = np.array([mag(f) for f in np.linspace(6.0, 40.0, 341)])
    h0, h05, h60 = mag(0.0), mag(0.5), mag(60.0)
    symmetric = np.array_equal(taps, taps[::-1])
    ok = (h0 <= 0.01 and h05 <= 0.15 and band.min() >= 0.9 and band.max() <= 1.05
          and h60 <= 0.05 and symmetric)
    verdict("filter response", ok, f"|H(0)|={h0:.2e} |H(0.5)|={h05:.4f} passband [{band.min():.4f}, "
            f"{band.max():.4f}] |H(60)|={h60:.2e} symmetric={symmetric}")
    assert ok


def _match(truth, det, tol):
    # one-to-one greedy matching in time order
    used = np.zeros(det.size, bool)
    hits = 0
    for t in truth:
        if det.size == 0:
            break
        j = int(np.argmin(np.where(used, np.iinfo(np.int64).max, np.abs(det - t))))
        if not used[j] and abs(det[j] - t) <= tol:
            used[j] = True
            hits += 1
    return hits


def _detector_corpus():
    rng = np.random.default_rng(99)
    specs = []
    for i in range(100):
        rhythm = Rhythm.REGULAR if i % 2 == 0 else Rhythm.IRREGULAR
        specs.append(SynthSpec(300.0, 30.0, float(rng.uniform(50, 120)), rhythm,
                               snr_db=float(rng.uniform(15, 25)), seed=1000 + i))
    return [synth_ecg(s) for s in specs]


@pytest.fixture(scope="module")
def detector_corpus():
    return _detector_corpus()


def test_detector(detector_corpus, verdict):
    tol = round(0.050 * 300)
    t = time.perf_counter()
    tp = n_true = n_det = 0
    for rec, truth in detector_corpus:
        det = detect_r_peaks(preprocess_record(rec).samples, rec.fs).peaks
        tp += _match(truth, det, tol)
        n_true += truth.size
        n_det += det.size
    secs = time.perf_counter() - t
    se, ppv = tp / n_true, tp / n_det
    ok = se >= 0.99 and ppv >= 0.99 and secs < 60
    verdict("R-peak detector", ok, f"Se={se:.4f} PPV={ppv:.4f} over {n_true} beats in 100 records "
            f"(>= 0.99, +-50 ms), {secs:.1f} s (< 60 s)")
    assert ok


def test_segmenter(detector_corpus, verdict):
    cfg = SegmentConfig()
    n_segs = bad = oob = 0
    records = [rec for rec, _ in detector_corpus]
    # a wider heart-rate sweep so the span test is exercised on both sides
    for i, hr in enumerate(np.linspace(40, 180, 60)):
        rec, _ = synth_ecg(SynthSpec(300.0, 30.0, float(hr), list(Rhythm)[i % 3], seed=5000 + i))
        records.append(rec)
    for rec in records:
        pre = preprocess_record(rec)
        peaks = detect_r_peaks(pre.samples, pre.fs).peaks
        arr = instrument(pre)
        segs = segment_record(pre, peaks, cfg)
        oob += len(out_of_bounds(arr, len(pre)))
        n_segs += len(segs)
        bad += sum(s.samples.shape != (1000,) or s.peak_offsets.size < 5 for s in segs)
    ok = n_segs > 0 and bad == 0 and oob == 0
    verdict("segmenter invariants", ok, f"{n_segs} segments from {len(records)} records, "
            f"{bad} with length != 1000 or < 5 peaks, {oob} out-of-bounds reads")
    assert ok


# -- model contract ---------------------------------------------------------------

def test_shape_contract(verdict):
    rng = np.random.default_rng(0)
    cascade = build_model(ModelConfig("cascade"), seed=0)
    concat = build_model(ModelConfig("concat"), seed=0)
    fmap = cascade.cnn.forward(rng.standard_normal((1, 1, 1000)).astype(np.float32))
    cnn_vec = fmap.mean(axis=2).shape
    lstm = BiLSTM(5, 100, rng=rng)
    lstm_shapes = {lstm.forward(rng.standard_normal((b, t, 5)).astype(np.float32)).shape
                   for b, t in ((1, 1), (3, 17), (2, 250))}
    widths = {f"{f}x{t}": BiLSTM(f, 100, rng=rng).forward(np.zeros((2, t, f), np.float32)).shape
              for f, t in ((1, 40), (256, 12))}
    fused = concat.features(rng.standard_normal((2, 1000))).shape
    ok = (cnn_vec == (1, 256) and lstm_shapes == {(1, 100), (3, 100), (2, 100)}
          and all(s == (2, 100) for s in widths.values()) and fused == (2, 356))
    verdict("shape contract", ok, f"CNN (1,1,1000) -> {cnn_vec}; BiLSTM -> {sorted(lstm_shapes)}; "
            f"concat fusion width {fused[1]}")
    assert ok


def test_overfit_small_cascade(verdict):
    ds, _ = synth_dataset(SynthDatasetSpec(n=12, seed=0))
    segs, _ = segment_dataset(ds)
    x, y = segments_to_arrays(segs)
    pick = np.concatenate([np.flatnonzero(y == k)[:20] for k in range(3)])
    x, y = x[pick], y[pick]
    model = build_model(ModelConfig("cascade", SMALL_CNN, SMALL_HIDDEN), seed=0)
    before, _ = evaluate(model, x, y)
    t = time.perf_counter()
    train(model, x, y, cfg=TrainConfig(epochs=200, batch_size=20, seed=0))
    secs = time.perf_counter() - t
    after, _ = evaluate(model, x, y)
    ok = (len(y) == 60 and after["accuracy"] >= 0.95 and after["loss"] < 0.1 * before["loss"]
          and secs < 600)
    verdict("overfit", ok, f"train accuracy {after['accuracy']:.3f} (>= 0.95), loss {before['loss']:.4f} "
            f"-> {after['loss']:.2e} (< 0.1x), {secs:.0f} s (< 600 s)")
    assert ok


# -- end to end ---------------------------------------------------------------------

def _run(*argv):
    code = main([str(a) for a in argv])
    assert code == 0, f"{argv[0]} exited with {code}"


def test_end_to_end_smoke(tmp_path, verdict):
    data, pre, det, seg = (tmp_path / d for d in ("data", "pre", "det", "seg"))
    t = time.perf_counter()
    _run("synth", "--n", 300, "--seed", 0, "--out", data)
    _run("preprocess", data, "--out", pre)
    _run("detect", pre, "--preprocessed", "--out", det)
    _run("segment", pre, "--preprocessed", "--out", seg)
    record_f1 = {}
    for scheme in ("baseline", "concat", "cascade"):
        run, ev = tmp_path / scheme, tmp_path / f"{scheme}-eval"
        _run("train", pre, "--preprocessed", "--scheme", scheme, "--epochs", 5, "--seed", 0,
             "--quiet", *SMALL_FLAGS, "--out", run)
        _run("evaluate", run / "val_segments.bin", "--checkpoint", run / "best.ckpt", "--out", ev)
        record_f1[scheme] = json.loads((ev / "metrics.json").read_text())["record"]["weighted_f1"]
    secs = time.perf_counter() - t
    ok = all(v >= 0.80 for v in record_f1.values())
    detail = ", ".join(f"{k} {v:.3f}" for k, v in record_f1.items())
    verdict("end-to-end smoke", ok, f"all stages exit 0; record-level weighted F1 {detail} (>= 0.80); "
            f"{secs:.0f} s")
    assert ok


def _best_val_f1(scheme, seed, x_tr, y_tr, x_val, y_val):
    model = build_model(ModelConfig(scheme, SMALL_CNN, SMALL_HIDDEN), seed=seed)
    result = train(model, x_tr, y_tr, x_val, y_val, TrainConfig(epochs=5, seed=seed))
    return max(e.val_weighted_f1 for e in result.history)


def test_cascade_beats_baseline(verdict):
    rows = []
    for seed in range(10):
        ds, _ = synth_dataset(SynthDatasetSpec(n=300, seed=seed))
        train_ds, val_ds = split_dataset(ds, 0.7, seed)
        x_tr, y_tr = segments_to_arrays(segment_dataset(train_ds)[0])
        x_val, y_val = segments_to_arrays(segment_dataset(val_ds)[0])
        base = _best_val_f1("baseline", seed, x_tr, y_tr, x_val, y_val)
        casc = _best_val_f1("cascade", seed, x_tr, y_tr, x_val, y_val)
        rows.append((seed, base, casc))
        print(f"seed {seed}: baseline {base:.4f} cascade {casc:.4f}", flush=True)
    wins = sum(c >= b for _, b, c in rows)
    ok = wins >= 7
    verdict("cascade vs baseline", ok, f"cascade validation weighted F1 >= baseline in {wins}/10 seeds "
            f"(>= 7); " + " ".join(f"{s}:{b:.3f}/{c:.3f}" for s, b, c in rows))
    assert ok


# -- determinism --------------------------------------------------------------------

def test_determinism(tmp_path, verdict):
    data = tmp_path / "data"
    _run("synth", "--n", 15, "--duration", 15, "--seed", 4, "--out", data)
    tiny = ["--channels", "4,8", "--kernels", "5,3", "--lstm-hidden", 6, "--epochs", 3, "--seed", 7,
            "--quiet"]
    runs = []
    for name in ("a", "b"):
        _run("train", data, *tiny, "--out", tmp_path / name)
        runs.append(tmp_path / name)
    same_history = (runs[0] / "history.csv").read_bytes() == (runs[1] / "history.csv").read_bytes()
    same_ckpt = all((runs[0] / c).read_bytes() == (runs[1] / c).read_bytes()
                    for c in ("best.ckpt", "last.ckpt"))
    ev = tmp_path / "eval"
    _run("evaluate", runs[0] / "val_segments.bin", "--checkpoint", runs[0] / "last.ckpt", "--out", ev)
    seg = json.loads((ev / "metrics.json").read_text())["segment"]
    with open(runs[0] / "history.csv", newline="") as fh:
        last = list(csv.DictReader(fh))[-1]
    specs = [seg["per_class"][c]["specificity"] for c in ("N", "A", "O")]
    round_trip = (float(last["val_loss"]) == seg["loss"]
                  and float(last["val_weighted_f1"]) == seg["weighted_f1"]
                  and [float(last[f"val_specificity_{c}"]) for c in "NAO"] == specs)
    ok = same_history and same_ckpt and round_trip
    verdict("determinism", ok, f"history identical={same_history}, checkpoints identical={same_ckpt}, "
            f"reloaded checkpoint reproduces last epoch metrics bit-exactly={round_trip}")
    assert ok
