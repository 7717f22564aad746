import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cgrnn.errors import ConfigError, FormatError, InputTooShortError
from cgrnn.features import (
    LOG_FLOOR,
    FeatureSequence,
    FrameGrid,
    Normalizer,
    StereoSpectrum,
    Waveform,
    build_mel_bank,
    compute_ild,
    compute_imd,
    compute_ipd,
    decode_feature_cache,
    encode_feature_cache,
    extract_basic,
    extract_spatial,
    frame_signal,
    mel_centers,
    stft_frame,
)


def direct_dft(x):
    """O(n^2) one-sided DFT."""
    n = len(x)
    k = np.arange(n // 2 + 1)[:, None]
    t = np.arange(n)[None, :]
    return (np.asarray(x)[None, :] * np.exp(-2j * np.pi * k * t / n)).sum(axis=1)


def hann(n):
    return 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(n) / n)


class TestFraming:
    def test_four_seconds(self):
        assert frame_signal(np.zeros(64000)).shape == (249, 512)

    def test_single_frame(self, rng):
        x = rng.standard_normal(512)
        frames = frame_signal(x)
        assert frames.shape == (1, 512)
        np.testing.assert_array_equal(frames[0], x)

    def test_too_short(self):
        with pytest.raises(InputTooShortError):
            frame_signal(np.zeros(511))

    def test_frame_starts_cover_range(self):
        n = 5000
        grid = FrameGrid()
        starts = grid.starts(n)
        assert starts[0] == 0 and np.all(np.diff(starts) == grid.hop)
        assert starts[-1] <= n - grid.frame_len < starts[-1] + grid.hop
        x = np.arange(n, dtype=float)
        np.testing.assert_array_equal(frame_signal(x, grid)[:, 0], starts)

    def test_grid_validation(self):
        with pytest.raises(ConfigError):
            FrameGrid(256, 256)


class TestSTFT:
    def test_zeros(self):
        np.testing.assert_array_equal(stft_frame(np.zeros(512)), np.zeros(257))

    def test_cosine_peak_at_bin_32(self):
        x = np.cos(2 * np.pi * 1000.0 * np.arange(512) / 16000.0)
        oracle = np.abs(direct_dft(x * hann(512)))
        assert np.argmax(oracle) == 32
        assert np.argmax(np.abs(stft_frame(x))) == 32

    def test_matches_direct_dft(self, rng):
        x = rng.standard_normal(512)
        np.testing.assert_allclose(stft_frame(x), direct_dft(x * hann(512)), atol=1e-9)

    def test_parseval(self, rng):
        x = rng.standard_normal(512)
        xw = x * hann(512)
        spec = direct_dft(xw)
        weights = np.full(257, 2.0)
        weights[[0, -1]] = 1.0
        oracle_energy = np.sum(weights * np.abs(spec) ** 2) / 512
        np.testing.assert_allclose(np.sum(xw**2), oracle_energy, rtol=1e-6)
        ours = np.sum(weights * np.abs(stft_frame(x)) ** 2) / 512
        np.testing.assert_allclose(np.sum(xw**2), ours, rtol=1e-6)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.floats(-5, 5), st.floats(-5, 5))
    def test_linearity(self, seed, a, b):
        r = np.random.default_rng(seed)
        x, y = r.standard_normal(512), r.standard_normal(512)
        lhs = stft_frame(a * x + b * y)
        rhs = a * stft_frame(x) + b * stft_frame(y)
        np.testing.assert_allclose(lhs, rhs, atol=1e-9)


class TestMelBank:
    bank = build_mel_bank(40, 512, 16000, 0.0, 8000.0)

    def test_shape_and_sign(self):
        assert self.bank.shape == (40, 257)
        assert np.all(self.bank >= 0)
        assert np.all(self.bank.sum(axis=1) > 0)

    def test_centres_increasing(self):
        assert np.all(np.diff(mel_centers(40)) > 0)

    def test_single_peak(self):
        for row in self.bank:
            d = np.diff(row[row > 0])
            # rises then falls: no rise after the first fall
            signs = np.sign(d[d != 0])
            assert np.all(np.diff(signs) <= 0)

    def test_bin_coverage(self):
        centres = mel_centers(40)
        freqs = np.arange(257) * 16000 / 512
        inside = (freqs >= centres[0]) & (freqs <= centres[-1])
        covered = (self.bank > 0).any(axis=0)
        assert np.all(covered[inside])

    def test_invalid_edges(self):
        with pytest.raises(ConfigError):
            build_mel_bank(40, 512, 16000, 5000.0, 4000.0)
        with pytest.raises(ConfigError):
            build_mel_bank(40, 512, 16000, 0.0, 9000.0)


def _noise_wave(seed, n=64000):
    r = np.random.default_rng(seed)
    return Waveform(r.uniform(-0.5, 0.5, n), r.uniform(-0.5, 0.5, n))


class TestBasicFeatures:
    def test_silence_mfb(self):
        seq = extract_basic(Waveform(np.zeros(64000), np.zeros(64000)), "mfb40")
        np.testing.assert_array_equal(seq.data, np.full((249, 40), np.log(LOG_FLOOR)))

    @pytest.mark.parametrize("kind,dim", [("mfb40", 40), ("spec257", 257), ("raw512", 512)])
    def test_shapes(self, kind, dim):
        assert extract_basic(_noise_wave(0), kind).data.shape == (249, dim)

    def test_white_noise_spec_finite(self):
        assert np.all(np.isfinite(extract_basic(_noise_wave(3), "spec257").data))

    def test_raw_is_unwindowed_channel_average(self):
        w = _noise_wave(4)
        raw = extract_basic(w, "raw512").data
        np.testing.assert_array_equal(raw[1], 0.5 * (w.left + w.right)[256:768])

    def test_mfb_finite_for_any_input(self, rng):
        w = Waveform(rng.standard_normal(4000) * 1e-12, np.zeros(4000))
        assert np.all(np.isfinite(extract_basic(w, "mfb40").data))

    def test_deterministic(self):
        a = extract_basic(_noise_wave(5), "mfb40").data
        b = extract_basic(_noise_wave(5), "mfb40").data
        assert a.tobytes() == b.tobytes()

    def test_rejects_spatial_kind(self):
        with pytest.raises(ConfigError):
            extract_basic(_noise_wave(0), "imd257")


def _spectrum(left, right):
    return StereoSpectrum(np.atleast_2d(np.asarray(left, dtype=complex)),
                          np.atleast_2d(np.asarray(right, dtype=complex)))


class TestSpatial:
    def test_ild_analytic(self):
        ild = compute_ild(_spectrum(np.full(257, 2.0), np.ones(257))).data
        np.testing.assert_allclose(ild, 20 * np.log10(2.0), atol=1e-9)
        assert abs(ild[0, 0] - 6.0206) < 1e-4

    def test_ipd_analytic(self):
        ipd = compute_ipd(_spectrum(np.full(257, 1j), np.ones(257))).data
        np.testing.assert_allclose(ipd, np.pi / 2, atol=1e-12)

    def test_ipd_wrap_boundary(self):
        ipd = compute_ipd(_spectrum(np.full(257, -1.0), np.ones(257))).data
        np.testing.assert_allclose(ipd, np.pi, atol=1e-12)
        neg_zero = compute_ipd(_spectrum(np.full(257, complex(-1.0, -0.0)), np.ones(257))).data
        np.testing.assert_allclose(neg_zero, np.pi, atol=1e-12)

    def test_imd_analytic(self):
        imd = compute_imd(_spectrum(np.full(257, 2.0), np.ones(257))).data
        assert np.all(imd == 1.0)

    @pytest.mark.parametrize("fn", [compute_ild, compute_ipd, compute_imd])
    def test_identical_channels(self, fn, rng):
        x = rng.standard_normal((5, 257)) + 1j * rng.standard_normal((5, 257))
        np.testing.assert_allclose(fn(StereoSpectrum(x, x.copy())).data, 0.0, atol=1e-12)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_channel_swap_antisymmetry(self, seed):
        r = np.random.default_rng(seed)
        a = r.standard_normal((3, 257)) + 1j * r.standard_normal((3, 257))
        b = r.standard_normal((3, 257)) + 1j * r.standard_normal((3, 257))
        fwd, rev = StereoSpectrum(a, b), StereoSpectrum(b, a)
        np.testing.assert_allclose(compute_ild(rev).data, -compute_ild(fwd).data, atol=1e-9)
        np.testing.assert_allclose(compute_imd(rev).data, -compute_imd(fwd).data, atol=1e-12)
        wrapped = np.angle(np.exp(1j * (compute_ipd(rev).data + compute_ipd(fwd).data)))
        np.testing.assert_allclose(wrapped, 0.0, atol=1e-9)

    def test_ipd_range(self, rng):
        a = rng.standard_normal((4, 257)) + 1j * rng.standard_normal((4, 257))
        b = rng.standard_normal((4, 257)) + 1j * rng.standard_normal((4, 257))
        ipd = compute_ipd(StereoSpectrum(a, b)).data
        assert np.all(ipd > -np.pi) and np.all(ipd <= np.pi)

    def test_ild_silent_finite(self):
        ild = compute_ild(_spectrum(np.zeros(257), np.zeros(257))).data
        np.testing.assert_array_equal(ild, 0.0)

    def test_extract_spatial_shapes(self):
        for kind in ("imd257", "ild257", "ipd257"):
            assert extract_spatial(_noise_wave(1), kind).data.shape == (249, 257)


class TestCache:
    def test_round_trip(self, rng):
        seq = FeatureSequence("mfb40", rng.standard_normal((249, 40)))
        back = decode_feature_cache(encode_feature_cache(seq))
        assert back.kind == "mfb40"
        np.testing.assert_array_equal(back.data, seq.data.astype(np.float32))

    def test_layout(self):
        blob = encode_feature_cache(FeatureSequence("imd257", np.ones((2, 257))))
        assert blob[:4] == b"CGT1"
        assert blob[4] == 3
        assert int.from_bytes(blob[5:9], "little") == 2
        assert int.from_bytes(blob[9:13], "little") == 257
        assert len(blob) == 13 + 4 * 2 * 257

    def test_bad_magic_and_truncation(self):
        blob = encode_feature_cache(FeatureSequence("mfb40", np.ones((2, 40))))
        with pytest.raises(FormatError, match="magic"):
            decode_feature_cache(b"XXXX" + blob[4:])
        with pytest.raises(FormatError):
            decode_feature_cache(blob[:-3])


def test_normalizer_uses_given_statistics(rng):
    train = [rng.normal(3.0, 2.0, (100, 4)) for _ in range(3)]
    norm = Normalizer.fit(train)
    z = norm.apply(np.concatenate(train))
    # statistics are kept at float32 precision
    np.testing.assert_allclose(z.mean(axis=0), 0.0, atol=1e-6)
    np.testing.assert_allclose(z.std(axis=0), 1.0, atol=1e-6)
    assert np.array_equal(norm.mean.astype(np.float32).astype(np.float64), norm.mean)


def test_feature_sequence_dim_check():
    with pytest.raises(ConfigError):
        FeatureSequence("mfb40", np.zeros((3, 41)))
