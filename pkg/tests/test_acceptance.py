"""Acceptance criteria, one test each.  Every test prints a single
``[PASS]``/``[FAIL]`` line; the lines are repeated in the terminal summary."""

import time
import warnings

import numpy as np
import pytest
from threadpoolctl import threadpool_limits

from cgrnn import gradcheck, layers
from cgrnn.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from cgrnn.data import SynthSpec, generate_synthetic
from cgrnn.experiments import overfit_tiny, spatial_benefit
from cgrnn.features import (
    FEATURE_DIMS,
    StereoSpectrum,
    Waveform,
    compute_imd,
    compute_ild,
    compute_ipd,
    extract,
    frame_signal,
    stft_frames,
)
from cgrnn.metrics import compute_eer
from cgrnn.model import ModelConfig, init_params, model_forward, param_shapes
from cgrnn.pipeline import FeatureLoader, fit_normalizers, predict
from cgrnn.tensor import make_rng
from cgrnn.train import TrainConfig, train_fold

from eer_oracle import brute_force_eer

RESULTS = []


def _report(number, name, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {name} ({detail})"
    RESULTS.append(line)
    print("\n" + line)
    assert ok, line


def _dft(x):
    n = len(x)
    k = np.arange(n // 2 + 1)[:, None]
    return (x[None, :] * np.exp(-2j * np.pi * k * np.arange(n)[None, :] / n)).sum(axis=1)


def test_1_gradient_suite():
    start = time.perf_counter()
    results = gradcheck.run_suite(range(20))
    model = [gradcheck.check_model(s) for s in range(20)]
    elapsed = time.perf_counter() - start
    worst = {layer: max(r.worst_error for r in res) for layer, res in results.items()}
    worst["tiny-model"] = max(r.worst_error for r in model)
    ok = all(v < 1e-5 for v in worst.values()) and len(worst) == 6 and elapsed < 60
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    _report(1, "gradient suite, 20 seeds", ok, f"{detail}; {elapsed:.0f} s")


def test_2_gru_analytic():
    r = make_rng(0)
    shapes = {"W": (4, 3), "R": (4, 4), "b": (1, 4)}
    zero = {n: np.zeros(shapes[n[0]]) for n in layers.cell_param_names("gru")}
    h_prev = r.uniform(-1, 1, 4)
    h, _ = layers.gru_cell_forward(r.standard_normal(3), h_prev, zero)
    halving = np.array_equal(h, 0.5 * h_prev)

    bounded = True
    for seed in range(5):
        rr = make_rng(seed)
        w = {n: rr.normal(0, 2.0, (6, 3) if n[0] == "W" else (6, 6) if n[0] == "R" else (1, 6))
             for n in layers.cell_param_names("gru")}
        out, _ = layers.gru_sequence_forward(rr.normal(0, 3.0, (4, 1000, 3)), w,
                                             h0=rr.uniform(-1, 1, (4, 6)))
        bounded &= bool(np.all(np.abs(out) <= 1.0))
    _report(2, "GRU zero-weight halving and boundedness", halving and bounded,
            f"halving exact={halving}, |h|<=1 over 5x1000 steps={bounded}")


def test_3_dsp_analytic():
    r = make_rng(3)
    ones = np.ones((1, 257), dtype=complex)
    ild = compute_ild(StereoSpectrum(2 * ones, ones)).data
    ipd = compute_ipd(StereoSpectrum(1j * ones, ones)).data
    imd = compute_imd(StereoSpectrum(2 * ones, ones)).data
    checks = {
        "ILD": np.max(np.abs(ild - 6.020599913279624)) <= 1e-9,
        "IPD": np.max(np.abs(ipd - np.pi / 2)) <= 1e-12,
        "IMD": bool(np.all(imd == 1.0)),
    }
    anti = True
    for _ in range(20):
        a = r.standard_normal((3, 257)) + 1j * r.standard_normal((3, 257))
        b = r.standard_normal((3, 257)) + 1j * r.standard_normal((3, 257))
        fwd, rev = StereoSpectrum(a, b), StereoSpectrum(b, a)
        anti &= np.allclose(compute_ild(rev).data, -compute_ild(fwd).data, atol=1e-9)
        anti &= np.allclose(compute_imd(rev).data, -compute_imd(fwd).data, atol=1e-12)
        anti &= np.allclose(np.angle(np.exp(1j * (compute_ipd(rev).data + compute_ipd(fwd).data))), 0,
                            atol=1e-9)
    checks["antisymmetry"] = bool(anti)

    signal = r.standard_normal(16000)
    frames = frame_signal(signal)
    spec = stft_frames(frames)
    win = np.hanning(513)[:512]  # periodic Hann, built independently of the library
    worst = 0.0
    weights = np.full(257, 2.0)
    weights[[0, -1]] = 1.0
    for i in range(0, len(frames), 10):
        xw = frames[i] * win
        oracle = _dft(xw)
        worst = max(worst, np.max(np.abs(spec[i] - oracle)) / np.max(np.abs(oracle)))
        energy = np.sum(weights * np.abs(spec[i]) ** 2) / 512
        worst = max(worst, abs(energy - np.sum(xw**2)) / np.sum(xw**2))
    checks["Parseval/DFT"] = worst <= 1e-6
    _report(3, "DSP analytic values", all(checks.values()),
            ", ".join(f"{k}={'ok' if v else 'bad'}" for k, v in checks.items()) + f"; STFT rel. err {worst:.1e}")


def test_4_shapes():
    r = make_rng(4)
    t = np.arange(64000) / 16000.0
    wave = Waveform(np.sin(2 * np.pi * 440 * t), 0.5 * np.sin(2 * np.pi * 440 * t), 16000)
    got = {k: extract(wave, k).data.shape for k in ("mfb40", "spec257", "raw512", "imd257")}
    ok = got == {"mfb40": (249, 40), "spec257": (249, 257), "raw512": (249, 512), "imd257": (249, 257)}
    cfg = ModelConfig(basic_kind="mfb40", use_imd=True)
    shapes = param_shapes(cfg)
    params = init_params(cfg, r)
    basic = extract(wave, "mfb40").data
    pooled, _ = layers.conv1d_gmp_forward(basic, params["conv.basic.W"], params["conv.basic.b"])
    pooled_s, _ = layers.conv1d_gmp_forward(extract(wave, "imd257").data, params["conv.spatial.W"],
                                            params["conv.spatial.b"])
    probs, _ = model_forward(basic[None], extract(wave, "imd257").data[None], params, cfg)
    ok &= pooled.shape == (249, 128) and pooled_s.shape == (249, 128)
    ok &= cfg.gru_input_dim == 256 and shapes["gru0.f.Wz"] == (128, 256)
    ok &= shapes["dense.W"] == (500, 256) and shapes["out.W"] == (7, 500) and probs.shape == (1, 7)
    ok &= FEATURE_DIMS["mfb40"] == 40
    _report(4, "shape conformance", bool(ok),
            f"features {got}; conv {pooled.shape[1]}+{pooled_s.shape[1]}; GRU in {cfg.gru_input_dim}; "
            f"dense {shapes['dense.W'][0]} -> {shapes['out.W'][0]}")


def test_5_eer_oracle():
    r = np.random.default_rng(5)
    mismatches = 0
    for _ in range(1000):
        n = int(r.integers(2, 60))
        labels = r.integers(0, 2, n)
        labels[:2] = [0, 1]
        # coarse scores force ties on many instances
        scores = np.round(r.random(n), int(r.integers(1, 4)))
        mismatches += compute_eer(scores, labels) != brute_force_eer(scores, labels)
    perfect = compute_eer([0.9, 0.8, 0.7, 0.1, 0.2], [1, 1, 1, 0, 0]) == 0.0
    monotone_bad = 0
    for _ in range(100):
        n = int(r.integers(2, 60))
        labels = r.integers(0, 2, n)
        labels[:2] = [0, 1]
        scores = r.random(n)
        base = compute_eer(scores, labels)
        monotone_bad += compute_eer(np.exp(4 * scores) - 2, labels) != base
    ok = mismatches == 0 and perfect and monotone_bad == 0
    _report(5, "EER oracle equivalence", ok,
            f"{mismatches}/1000 mismatches, perfect separation -> 0: {perfect}, "
            f"{monotone_bad}/100 monotone failures")


def test_6_overfit(tmp_path):
    start = time.perf_counter()
    history = overfit_tiny(0, tmp_path)
    elapsed = time.perf_counter() - start
    best = min(r.train_loss for r in history.records)
    ok = best < 0.05 and len(history.records) <= 200 and elapsed < 600
    _report(6, "overfit 20 chunks", ok,
            f"loss {best:.4f} after {len(history.records)} epochs; {elapsed:.0f} s")


@pytest.mark.slow
def test_7_spatial_benefit(tmp_path):
    start = time.perf_counter()
    results = [spatial_benefit(seed, tmp_path / f"seed{seed}") for seed in range(5)]
    elapsed = time.perf_counter() - start
    wins = sum(r.spatial_better for r in results)
    pairs = ", ".join(f"{r.eer_basic:.3f}->{r.eer_spatial:.3f}" for r in results)
    _report(7, "IMD stream lowers average EER", wins >= 4 and elapsed < 1800,
            f"{wins}/5 seeds better (mfb40 -> mfb40+IMD: {pairs}); {elapsed:.0f} s")


def _train_once(entries, loader, path):
    cfg = ModelConfig(basic_kind="mfb40", use_imd=True, spatial_filter_len=200, n_filters=4,
                      n_gru_layers=1, gru_units=4, dense_units=8)
    ckpt, history = train_fold(entries[:14], entries[14:], TrainConfig(max_epochs=3, patience=3, seed=11),
                               cfg, loader)
    save_checkpoint(path, ckpt)
    return path.read_bytes(), history.to_csv(include_time=False)


def test_8_determinism(synth20, tmp_path):
    entries = synth20[1]
    with threadpool_limits(limits=1), warnings.catch_warnings():
        warnings.simplefilter("ignore")
        a = _train_once(entries, FeatureLoader(cache_dir=False), tmp_path / "a.cgrn")
        b = _train_once(entries, FeatureLoader(cache_dir=False), tmp_path / "b.cgrn")
    ok = a[0] == b[0] and a[1] == b[1]
    _report(8, "determinism", ok,
            f"checkpoints {len(a[0])} bytes identical={a[0] == b[0]}, logs identical={a[1] == b[1]}")


def test_9_checkpoint_round_trip(tmp_path):
    entries = generate_synthetic(SynthSpec(n_chunks=10, seed=9), tmp_path / "data")
    loader = FeatureLoader(cache_dir=False)
    cfg = ModelConfig(basic_kind="mfb40", use_imd=True, n_filters=8, n_gru_layers=2, gru_units=8,
                      dense_units=16, dtype="float32")
    ckpt = Checkpoint(cfg, init_params(cfg, make_rng(9)), fit_normalizers(cfg, entries, loader))
    before = predict(ckpt, entries, loader)
    save_checkpoint(tmp_path / "m.cgrn", ckpt)
    after = predict(load_checkpoint(tmp_path / "m.cgrn"), entries, loader)
    ok = before.shape == (10, 7) and before.tobytes() == after.tobytes()
    _report(9, "checkpoint round-trip", ok, f"posteriors {before.shape} bit-identical={ok}")
