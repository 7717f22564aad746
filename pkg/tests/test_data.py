import struct
import wave

import numpy as np
import pytest

from cgrnn.data import (
    SynthSpec,
    _parse_wav,
    generate_synthetic,
    parse_manifest,
    read_manifest,
    read_wav,
    resample_3to1,
    serialize_manifest,
    spatial_spec,
    write_wav,
)
from cgrnn.errors import FormatError, ParseError
from cgrnn.features import FrameGrid, Waveform, extract_spatial, frame_signal
from cgrnn.labels import LabelSet


def pcm_file(path, samples, rate, channels):
    pcm = np.clip(np.round(np.asarray(samples) * 32767), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(channels)
        fh.setsampwidth(2)
        fh.setframerate(rate)
        fh.writeframes(pcm.tobytes())


class TestReadWav:
    def test_stereo_16k(self, tmp_path, rng):
        data = rng.uniform(-0.5, 0.5, (64000, 2))
        pcm_file(tmp_path / "a.wav", data, 16000, 2)
        w = read_wav(tmp_path / "a.wav")
        assert w.n_samples == 64000 and w.sample_rate == 16000
        np.testing.assert_allclose(w.left, data[:, 0] * 32767 / 32768, atol=1 / 32768)

    def test_48k_is_decimated(self, tmp_path):
        pcm_file(tmp_path / "a.wav", np.zeros((192000, 2)), 48000, 2)
        assert read_wav(tmp_path / "a.wav").n_samples == 64000

    def test_mono_duplicated_with_warning(self, tmp_path, rng):
        pcm_file(tmp_path / "m.wav", rng.uniform(-0.5, 0.5, 1000), 16000, 1)
        with pytest.warns(UserWarning, match="mono"):
            w = read_wav(tmp_path / "m.wav")
        np.testing.assert_array_equal(w.left, w.right)

    def test_truncated(self, tmp_path):
        pcm_file(tmp_path / "a.wav", np.zeros((1000, 2)), 16000, 2)
        blob = (tmp_path / "a.wav").read_bytes()
        (tmp_path / "t.wav").write_bytes(blob[:-100])
        with pytest.raises(FormatError, match="offset"):
            read_wav(tmp_path / "t.wav")

    def test_unsupported_rate_and_codec(self, tmp_path):
        pcm_file(tmp_path / "a.wav", np.zeros((100, 2)), 44100, 2)
        with pytest.raises(FormatError, match="sample rate"):
            read_wav(tmp_path / "a.wav")
        blob = bytearray((tmp_path / "a.wav").read_bytes())
        struct.pack_into("<H", blob, 20, 3)
        with pytest.raises(FormatError, match="codec"):
            _parse_wav(bytes(blob))
        with pytest.raises(FormatError, match="RIFF"):
            _parse_wav(b"RIFX" + bytes(blob[4:]))

    def test_write_read_round_trip_within_one_lsb(self, tmp_path, rng):
        w = Waveform(rng.uniform(-0.9, 0.9, 5000), rng.uniform(-0.9, 0.9, 5000))
        write_wav(tmp_path / "r.wav", w)
        back = read_wav(tmp_path / "r.wav")
        assert np.max(np.abs(back.left - w.left)) <= 1 / 32768
        assert np.max(np.abs(back.right - w.right)) <= 1 / 32768


class TestResample:
    t48 = np.arange(192000) / 48000.0

    def test_dc(self):
        np.testing.assert_allclose(resample_3to1(np.full(4800, 0.3)), 0.3, atol=1e-6)

    def test_passband_tone(self):
        y = resample_3to1(0.5 * np.sin(2 * np.pi * 1000 * self.t48))
        assert y.size == 64000
        spec = np.abs(np.fft.rfft(y)) * 2 / y.size
        peak = int(np.argmax(spec))
        assert peak * 16000 / y.size == 1000.0
        assert abs(spec[peak] - 0.5) <= 0.005

    def test_stopband_tone(self):
        x = np.sin(2 * np.pi * 10000 * self.t48)
        y = resample_3to1(x)
        assert np.sqrt(np.mean(y**2)) < 0.05 * np.sqrt(np.mean(x**2))

    def test_no_delay(self):
        x = np.sin(2 * np.pi * 500 * self.t48)
        y = resample_3to1(x)
        expected = x[::3]
        mid = slice(1000, -1000)
        # one 48 kHz sample of delay would leave errors near 0.065
        np.testing.assert_allclose(y[mid], expected[mid], atol=5e-3)


class TestManifest:
    def test_labels(self):
        entries = parse_manifest("ch1,a.wav,cv\nch2,b.wav,\n")
        assert "c" in entries[0].labels and "v" in entries[0].labels and len(entries[0].labels) == 2
        assert len(entries[1].labels) == 0

    def test_unknown_letter(self):
        with pytest.raises(ParseError, match="line 1"):
            parse_manifest("ch3,c.wav,cx\n")

    def test_duplicate_and_missing_field(self):
        with pytest.raises(ParseError, match="line 2.*duplicate"):
            parse_manifest("a,x.wav,c\na,y.wav,m\n")
        with pytest.raises(ParseError, match="line 1"):
            parse_manifest("a,x.wav\n")

    def test_normalized_and_idempotent(self):
        text = "ch1,a.wav,vc\nch2,b.wav,\nch3,c.wav,pbm\n"
        once = serialize_manifest(parse_manifest(text))
        assert once.splitlines()[0] == "ch1,a.wav,cv"
        assert serialize_manifest(parse_manifest(once)) == once

    def test_label_vector_order(self):
        np.testing.assert_array_equal(LabelSet.from_string("cv").vector(), [1, 0, 0, 1, 0, 0, 0])


class TestSynthetic:
    def test_twenty_chunks(self, synth20):
        out, entries = synth20
        assert len(list((out / "chunks").glob("*.wav"))) == 20
        assert len((out / "manifest.csv").read_text().splitlines()) == 20
        assert (out / "synth.txt").exists()
        assert [e.chunk_id for e in read_manifest(out / "manifest.csv")] == [e.chunk_id for e in entries]

    def test_chunk_framing(self, synth20):
        for e in synth20[1][:5]:
            w = read_wav(e.path)
            assert w.n_samples == 64000
            assert frame_signal(w.left).shape[0] == 249
            assert np.max(np.abs(w.left)) <= 1.0

    def test_same_seed_byte_identical(self, tmp_path):
        spec = SynthSpec(n_chunks=3, seed=5)
        generate_synthetic(spec, tmp_path / "a")
        generate_synthetic(spec, tmp_path / "b")
        for name in ("chunk0000.wav", "chunk0001.wav", "chunk0002.wav"):
            assert (tmp_path / "a/chunks" / name).read_bytes() == (tmp_path / "b/chunks" / name).read_bytes()
        assert (tmp_path / "a/manifest.csv").read_text() == (tmp_path / "b/manifest.csv").read_text()

    def test_left_lateralised_source_has_positive_imd(self, tmp_path):
        spec = SynthSpec(n_chunks=6, seed=1, sources={"v": "band_noise"}, gains={"v": (1.0, 0.2)},
                         tag_prob=1.0)
        entries = generate_synthetic(spec, tmp_path)
        bins = slice(int(1000 / 31.25), int(2000 / 31.25))
        for e in entries:
            imd = extract_spatial(read_wav(e.path), "imd257").data
            assert imd[:, bins].mean() > 0

    def test_mirror_pair_exclusive(self, tmp_path):
        entries = generate_synthetic(spatial_spec(30, seed=2), tmp_path)
        assert not any("v" in e.labels and "o" in e.labels for e in entries)
        assert any("v" in e.labels for e in entries) and any("o" in e.labels for e in entries)

    def test_invalid_spec(self):
        with pytest.raises(ValueError):
            SynthSpec(sources={})
        with pytest.raises(ValueError):
            SynthSpec(gains={"v": (-1.0, 1.0)})
