"""WAV ingestion, 48 kHz -> 16 kHz decimation, manifests and a synthetic
stereo dataset generator."""

from __future__ import annotations

import csv
import io
import os
import struct
import warnings
import wave
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.signal import firwin

from .errors import DataError, FormatError, LabelError, ParseError
from .features import SAMPLE_RATE, Waveform
from .labels import ALPHABET, TAG_ORDER, LabelSet
from .tensor import make_rng

CHUNK_SECONDS = 4
CHUNK_SAMPLES = CHUNK_SECONDS * SAMPLE_RATE
DECIMATION_TAPS = 127


# ---------------------------------------------------------------------------
# WAV
# ---------------------------------------------------------------------------

def _parse_wav(blob: bytes):
    if len(blob) < 12:
        raise FormatError("file too short for a RIFF header", offset=len(blob))
    riff, _, wave_id = struct.unpack_from("<4sI4s", blob)
    if riff != b"RIFF" or wave_id != b"WAVE":
        raise FormatError("not a RIFF/WAVE file", offset=0)
    pos = 12
    fmt = None
    data = None
    while pos + 8 <= len(blob):
        cid, size = struct.unpack_from("<4sI", blob, pos)
        body = pos + 8
        if cid == b"fmt ":
            if size < 16 or body + 16 > len(blob):
                raise FormatError("truncated fmt chunk", offset=body)
            fmt = struct.unpack_from("<HHIIHH", blob, body)
        elif cid == b"data":
            if body + size > len(blob):
                raise FormatError(
                    f"data chunk declares {size} bytes but only {len(blob) - body} remain",
                    offset=body)
            data = (body, size)
            break
        pos = body + size + (size & 1)
    if fmt is None:
        raise FormatError("missing fmt chunk", offset=12)
    if data is None:
        raise FormatError("missing data chunk", offset=pos)
    codec, channels, rate, _, block_align, bits = fmt
    if codec != 1 or bits != 16:
        raise FormatError(f"unsupported codec {codec} / {bits}-bit; need PCM16", offset=20)
    if channels not in (1, 2):
        raise FormatError(f"unsupported channel count {channels}", offset=22)
    if rate not in (16000, 48000):
        raise FormatError(f"unsupported sample rate {rate}", offset=24)
    body, size = data
    if size % block_align:
        raise FormatError("data chunk is not a whole number of frames", offset=body)
    pcm = np.frombuffer(blob, dtype="<i2", count=size // 2, offset=body)
    return pcm.reshape(-1, channels), rate


def read_wav(path) -> Waveform:
    """Load a PCM16 mono/stereo WAV at 16 or 48 kHz as a 16 kHz stereo Waveform."""
    with open(path, "rb") as fh:
        blob = fh.read()
    pcm, rate = _parse_wav(blob)
    samples = pcm.astype(np.float64) / 32768.0
    if samples.shape[1] == 1:
        warnings.warn(f"{path}: mono file, duplicating the channel")
        samples = np.repeat(samples, 2, axis=1)
    left, right = samples[:, 0], samples[:, 1]
    if rate == 48000:
        left, right = resample_3to1(left), resample_3to1(right)
    return Waveform(left, right, SAMPLE_RATE)


def write_wav(path, wave_obj: Waveform) -> None:
    """Write PCM16 stereo; samples are clipped to [-1, 1) before quantisation."""
    stereo = np.stack([wave_obj.left, wave_obj.right], axis=1)
    pcm = np.clip(np.round(stereo * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(2)
        fh.setsampwidth(2)
        fh.setframerate(wave_obj.sample_rate)
        fh.writeframes(pcm.tobytes())


_DECIMATOR = firwin(DECIMATION_TAPS, 0.9 * 8000.0, fs=48000.0)


def resample_3to1(x) -> np.ndarray:
    """Low-pass (127-tap windowed sinc, 7.2 kHz) and keep every third sample.

    The group delay is removed by centring the filter; edges are extended
    with the end samples so constant input stays constant.
    """
    x = np.asarray(x, dtype=np.float64)
    half = DECIMATION_TAPS // 2
    padded = np.pad(x, half, mode="edge")
    filtered = np.convolve(padded, _DECIMATOR, mode="valid")
    return filtered[::3]


# ---------------------------------------------------------------------------
# Manifests
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ManifestEntry:
    chunk_id: str
    path: str
    labels: LabelSet


def parse_manifest(text: str, base_dir=None) -> list[ManifestEntry]:
    """Parse ``chunk_id,path,labels`` lines (labels like ``"cv"``, may be blank).

    Relative paths are resolved against ``base_dir`` when given.
    """
    entries, seen = [], set()
    for lineno, row in enumerate(csv.reader(io.StringIO(text)), start=1):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if row[0].startswith("#"):
            continue
        if len(row) != 3:
            raise ParseError(f"expected 3 fields 'chunk_id,path,labels', got {len(row)}", lineno)
        chunk_id, path, labels = (f.strip() for f in row)
        if not chunk_id or not path:
            raise ParseError("empty chunk id or path", lineno)
        if chunk_id in seen:
            raise ParseError(f"duplicate chunk id {chunk_id!r}", lineno)
        try:
            label_set = LabelSet.from_string(labels)
        except LabelError as exc:
            raise ParseError(str(exc), lineno) from None
        if base_dir is not None and not os.path.isabs(path):
            path = str(Path(base_dir) / path)
        seen.add(chunk_id)
        entries.append(ManifestEntry(chunk_id, path, label_set))
    return entries


def serialize_manifest(entries, base_dir=None) -> str:
    lines = []
    for e in entries:
        path = e.path
        if base_dir is not None:
            try:
                path = os.path.relpath(path, base_dir)
            except ValueError:
                pass
        lines.append(f"{e.chunk_id},{path},{e.labels}")
    return "\n".join(lines) + ("\n" if lines else "")


def read_manifest(path) -> list[ManifestEntry]:
    path = Path(path)
    return parse_manifest(path.read_text(), base_dir=path.parent)


def write_manifest(path, entries) -> None:
    path = Path(path)
    path.write_text(serialize_manifest(entries, base_dir=path.parent))


def check_disjoint(train, test) -> None:
    overlap = {e.chunk_id for e in train} & {e.chunk_id for e in test}
    if overlap:
        raise DataError(f"train and test manifests share chunks: {sorted(overlap)[:5]}")


# ---------------------------------------------------------------------------
# Synthetic stereo dataset
# ---------------------------------------------------------------------------

SOURCE_TYPES = {
    "c": "high_tones",
    "m": "low_tones",
    "f": "mid_chirps",
    "v": "band_noise",
    "p": "clicks",
    "b": "broadband",
    "o": "random_tones",
}


@dataclass
class SynthSpec:
    """Recipe for a synthetic dataset.

    ``sources`` maps each enabled tag to a source type and ``gains`` gives
    its (left, right) amplitude.  ``mirror`` names a tag that reuses another
    tag's source with the gains swapped, so the pair differs only in
    lateralisation.  With ``mirror_exclusive`` at most one tag of the pair
    is active per chunk.
    """

    n_chunks: int = 20
    seed: int = 0
    sources: dict[str, str] = field(default_factory=lambda: dict(SOURCE_TYPES))
    gains: dict[str, tuple[float, float]] = field(default_factory=dict)
    tag_prob: float = 0.35
    snr_db: tuple[float, float] = (10.0, 20.0)
    mirror: tuple[str, str] | None = None
    mirror_exclusive: bool = True
    level: float = 0.1

    def __post_init__(self):
        if self.n_chunks < 1:
            raise ValueError("n_chunks must be positive")
        if not self.sources:
            raise ValueError("at least one source type must be enabled")
        for tag, kind in self.sources.items():
            if tag not in ALPHABET:
                raise ValueError(f"unknown tag {tag!r}")
            if kind not in _GENERATORS:
                raise ValueError(f"unknown source type {kind!r}")
        for tag, (gl, gr) in self.gains.items():
            if gl < 0 or gr < 0:
                raise ValueError(f"gains for {tag!r} must be non-negative")
        if self.mirror is not None:
            src, dst = self.mirror
            if src not in self.sources or dst not in self.sources:
                raise ValueError("mirror pair must name enabled tags")

    def gain(self, tag):
        if tag in self.gains:
            return self.gains[tag]
        if self.mirror and tag == self.mirror[1] and self.mirror[0] in self.gains:
            gl, gr = self.gains[self.mirror[0]]
            return gr, gl
        return (1.0, 0.2) if self.sources[tag] == "band_noise" else (0.7, 0.7)

    def source_of(self, tag):
        if self.mirror and tag == self.mirror[1]:
            return self.sources[self.mirror[0]]
        return self.sources[tag]

    def to_text(self) -> str:
        lines = [
            f"n_chunks={self.n_chunks}",
            f"seed={self.seed}",
            "sources=" + ",".join(f"{t}:{k}" for t, k in sorted(self.sources.items())),
            "gains=" + ",".join(f"{t}:{self.gain(t)[0]}/{self.gain(t)[1]}" for t in sorted(self.sources)),
            f"tag_prob={self.tag_prob}",
            f"snr_db={self.snr_db[0]}/{self.snr_db[1]}",
            f"mirror={'' if self.mirror is None else '/'.join(self.mirror)}",
            f"mirror_exclusive={self.mirror_exclusive}",
            f"level={self.level}",
        ]
        return "\n".join(lines) + "\n"


def spatial_spec(n_chunks=250, seed=0, **kw) -> SynthSpec:
    """Dataset where tags 'v' and 'o' share one band-noise source from
    opposite sides; only interaural cues tell them apart."""
    return SynthSpec(n_chunks=n_chunks, seed=seed, mirror=("v", "o"),
                     gains={"v": (1.0, 0.2)}, **kw)


def _envelope(rng, n, min_len=0.5, max_len=2.5):
    """Random on/off segment with 20 ms ramps."""
    length = int(rng.uniform(min_len, max_len) * SAMPLE_RATE)
    length = min(length, n)
    start = int(rng.integers(0, n - length + 1))
    env = np.zeros(n)
    ramp = min(int(0.02 * SAMPLE_RATE), length // 2)
    seg = np.ones(length)
    if ramp:
        seg[:ramp] = np.linspace(0, 1, ramp)
        seg[-ramp:] = np.linspace(1, 0, ramp)
    env[start:start + length] = seg
    return env


def _tones(rng, n, lo, hi, count):
    t = np.arange(n) / SAMPLE_RATE
    out = np.zeros(n)
    for _ in range(count):
        f = rng.uniform(lo, hi)
        out += np.sin(2 * np.pi * f * t + rng.uniform(0, 2 * np.pi))
    return out / count * _envelope(rng, n)


def _high_tones(rng, n):
    return _tones(rng, n, 2500.0, 3500.0, 3)


def _low_tones(rng, n):
    t = np.arange(n) / SAMPLE_RATE
    f0 = rng.uniform(110.0, 180.0)
    sig = sum(np.sin(2 * np.pi * k * f0 * t) / k for k in (1, 2, 3))
    return sig / 1.8 * _envelope(rng, n)


def _mid_chirps(rng, n):
    t = np.arange(n) / SAMPLE_RATE
    period = rng.uniform(0.3, 0.6)
    phase_t = np.mod(t, period) / period
    f_lo, f_hi = 600.0, 1400.0
    inst = f_lo + (f_hi - f_lo) * phase_t
    phase = 2 * np.pi * np.cumsum(inst) / SAMPLE_RATE
    return np.sin(phase) * _envelope(rng, n)


def _band_noise(rng, n, lo=1000.0, hi=2000.0):
    spec = np.fft.rfft(rng.standard_normal(n))
    freqs = np.fft.rfftfreq(n, 1.0 / SAMPLE_RATE)
    spec[(freqs < lo) | (freqs > hi)] = 0.0
    sig = np.fft.irfft(spec, n)
    sig /= np.sqrt(np.mean(sig**2)) + 1e-12
    return 0.5 * sig * _envelope(rng, n, 1.5, 3.5)


def _clicks(rng, n):
    out = np.zeros(n)
    decay = np.exp(-np.arange(400) / 60.0)
    for start in rng.integers(0, n - 400, size=int(rng.integers(4, 10))):
        out[start:start + 400] += decay * rng.standard_normal(400)
    return out


def _broadband(rng, n):
    return 0.3 * rng.standard_normal(n) * _envelope(rng, n, 1.0, 3.0)


def _random_tones(rng, n):
    return _tones(rng, n, 4000.0, 6000.0, 2)


_GENERATORS = {
    "high_tones": _high_tones,
    "low_tones": _low_tones,
    "mid_chirps": _mid_chirps,
    "band_noise": _band_noise,
    "clicks": _clicks,
    "broadband": _broadband,
    "random_tones": _random_tones,
}


def synth_chunk(spec: SynthSpec, rng, labels: LabelSet) -> Waveform:
    """Mix the sources of ``labels`` with their gains over background noise."""
    n = CHUNK_SAMPLES
    left = np.zeros(n)
    right = np.zeros(n)
    for tag in TAG_ORDER:
        if tag not in spec.sources or tag not in labels:
            continue
        sig = _GENERATORS[spec.source_of(tag)](rng, n)
        gl, gr = spec.gain(tag)
        left += gl * sig
        right += gr * sig
    snr = rng.uniform(*spec.snr_db)
    signal_rms = np.sqrt(0.5 * (np.mean(left**2) + np.mean(right**2)))
    noise_rms = (signal_rms if signal_rms > 0 else 0.3) * 10 ** (-snr / 20.0)
    left += noise_rms * rng.standard_normal(n)
    right += noise_rms * rng.standard_normal(n)
    peak = max(np.max(np.abs(left)), np.max(np.abs(right)), 1e-12)
    scale = spec.level / max(signal_rms, noise_rms)
    scale = min(scale, 0.95 / peak)
    return Waveform(left * scale, right * scale, SAMPLE_RATE)


def _draw_tags(spec, rng, tags):
    present = []
    pair = spec.mirror if spec.mirror and spec.mirror_exclusive else None
    for t in tags:
        if pair and t == pair[1]:
            continue
        u = rng.random()
        if pair and t == pair[0]:
            if u < spec.tag_prob:
                present.append(pair[0])
            elif u < 2 * spec.tag_prob:
                present.append(pair[1])
        elif u < spec.tag_prob:
            present.append(t)
    return present


def generate_synthetic(spec: SynthSpec, out_dir, prefix="chunk"):
    """Write ``chunks/*.wav``, ``manifest.csv`` and ``synth.txt`` under ``out_dir``.

    Returns the manifest entries.
    """
    out_dir = Path(out_dir)
    chunk_dir = out_dir / "chunks"
    try:
        chunk_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {chunk_dir}: {exc}") from exc
    rng = make_rng(spec.seed)
    tags = [t for t in TAG_ORDER if t in spec.sources]
    entries = []
    for i in range(spec.n_chunks):
        present = _draw_tags(spec, rng, tags)
        labels = LabelSet.from_string("".join(present))
        wav = synth_chunk(spec, rng, labels)
        path = chunk_dir / f"{prefix}{i:04d}.wav"
        write_wav(path, wav)
        entries.append(ManifestEntry(f"{prefix}{i:04d}", str(path), labels))
    write_manifest(out_dir / "manifest.csv", entries)
    (out_dir / "synth.txt").write_text(spec.to_text())
    return entries
