"""Framing, STFT, mel filterbank and the basic / spatial feature extractors.

Basic features (``mfb40``, ``spec257``, ``raw512``) are computed on the
average of the two channels.  Spatial features (``imd257``, ``ild257``,
``ipd257``) compare the left and right spectra bin by bin.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.signal import get_window

from .errors import ConfigError, FormatError, InputTooShortError

SAMPLE_RATE = 16000
FRAME_LEN = 512
HOP = 256
N_FFT = 512
N_BINS = N_FFT // 2 + 1
LOG_FLOOR = 1e-10
MAG_FLOOR = 1e-10

FEATURE_DIMS = {
    "mfb40": 40,
    "spec257": N_BINS,
    "raw512": FRAME_LEN,
    "imd257": N_BINS,
    "ild257": N_BINS,
    "ipd257": N_BINS,
}
BASIC_KINDS = ("mfb40", "spec257", "raw512")
SPATIAL_KINDS = ("imd257", "ild257", "ipd257")
# u8 tags used in the feature cache header
KIND_TAGS = {kind: i for i, kind in enumerate(FEATURE_DIMS)}


@dataclass
class Waveform:
    left: np.ndarray
    right: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        self.left = np.asarray(self.left, dtype=np.float64)
        self.right = np.asarray(self.right, dtype=np.float64)
        if self.left.shape != self.right.shape or self.left.ndim != 1:
            raise ValueError("left and right channels must be 1-D and equally long")

    @property
    def n_samples(self) -> int:
        return self.left.size

    def mono(self) -> np.ndarray:
        return 0.5 * (self.left + self.right)


@dataclass(frozen=True)
class FrameGrid:
    frame_len: int = FRAME_LEN
    hop: int = HOP

    def __post_init__(self):
        if not self.frame_len > self.hop > 0:
            raise ConfigError("frame grid needs frame_len > hop > 0")

    def n_frames(self, n_samples: int) -> int:
        if n_samples < self.frame_len:
            return 0
        return (n_samples - self.frame_len) // self.hop + 1

    def starts(self, n_samples: int) -> np.ndarray:
        return np.arange(self.n_frames(n_samples)) * self.hop


@dataclass
class StereoSpectrum:
    left: np.ndarray
    right: np.ndarray


@dataclass
class FeatureSequence:
    kind: str
    data: np.ndarray

    def __post_init__(self):
        if self.kind not in FEATURE_DIMS:
            raise ConfigError(f"unknown feature kind {self.kind!r}")
        if self.data.ndim != 2 or self.data.shape[1] != FEATURE_DIMS[self.kind]:
            raise ConfigError(
                f"{self.kind} expects [n_frames x {FEATURE_DIMS[self.kind]}], got {self.data.shape}"
            )

    @property
    def n_frames(self) -> int:
        return self.data.shape[0]


def frame_signal(channel, grid: FrameGrid = FrameGrid()) -> np.ndarray:
    """Slice ``channel`` into overlapping frames; the trailing remainder is dropped."""
    x = np.asarray(channel, dtype=np.float64)
    if x.size < grid.frame_len:
        raise InputTooShortError(
            f"signal has {x.size} samples, shorter than one frame ({grid.frame_len})"
        )
    n = grid.n_frames(x.size)
    windows = np.lib.stride_tricks.sliding_window_view(x, grid.frame_len)
    return windows[:: grid.hop][:n].copy()


@lru_cache(maxsize=None)
def _window(name: str, n: int) -> np.ndarray:
    win = get_window(name, n)
    win.setflags(write=False)
    return win


def stft_frames(frames: np.ndarray, window: str = "hann") -> np.ndarray:
    """One-sided DFT of each windowed row of ``frames``."""
    frames = np.atleast_2d(frames)
    if frames.shape[-1] != N_FFT:
        raise ValueError(f"frames must have length {N_FFT}, got {frames.shape[-1]}")
    return np.fft.rfft(frames * _window(window, N_FFT), axis=-1)


def stft_frame(frame, window: str = "hann") -> np.ndarray:
    return stft_frames(np.asarray(frame, dtype=np.float64)[None, :], window)[0]


def mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def build_mel_bank(n_mels=40, n_fft=N_FFT, sr=SAMPLE_RATE, f_lo=0.0, f_hi=None) -> np.ndarray:
    """Triangular filters with centres equally spaced on the mel scale.

    Returns an ``[n_mels x n_fft//2+1]`` matrix; each row peaks at its
    centre frequency and falls linearly to zero at its neighbours' centres.
    """
    if f_hi is None:
        f_hi = sr / 2.0
    if not (0 <= f_lo < f_hi <= sr / 2.0):
        raise ConfigError(f"invalid mel band edges {f_lo}..{f_hi} Hz for sr={sr}")
    edges = mel_to_hz(np.linspace(mel(f_lo), mel(f_hi), n_mels + 2))
    freqs = np.arange(n_fft // 2 + 1) * sr / n_fft
    lower, centre, upper = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (freqs - lower) / (centre - lower)
    falling = (upper - freqs) / (upper - centre)
    return np.maximum(0.0, np.minimum(rising, falling))


def mel_centers(n_mels=40, sr=SAMPLE_RATE, f_lo=0.0, f_hi=None) -> np.ndarray:
    if f_hi is None:
        f_hi = sr / 2.0
    return mel_to_hz(np.linspace(mel(f_lo), mel(f_hi), n_mels + 2))[1:-1]


@lru_cache(maxsize=4)
def _shared_mel_bank(n_mels, f_lo, f_hi):
    bank = build_mel_bank(n_mels, f_lo=f_lo, f_hi=f_hi)
    bank.setflags(write=False)
    return bank


def stereo_spectrum(wave: Waveform, grid: FrameGrid = FrameGrid()) -> StereoSpectrum:
    return StereoSpectrum(
        stft_frames(frame_signal(wave.left, grid)),
        stft_frames(frame_signal(wave.right, grid)),
    )


def extract_basic(wave: Waveform, kind: str, grid: FrameGrid = FrameGrid(),
                  f_lo=0.0, f_hi=None) -> FeatureSequence:
    """Per-frame basic features of the channel average."""
    frames = frame_signal(wave.mono(), grid)
    if kind == "raw512":
        return FeatureSequence(kind, frames)
    spec = stft_frames(frames)
    if kind == "spec257":
        return FeatureSequence(kind, np.log(np.abs(spec) + LOG_FLOOR))
    if kind == "mfb40":
        bank = _shared_mel_bank(40, float(f_lo), float(f_hi if f_hi is not None else SAMPLE_RATE / 2))
        power = spec.real**2 + spec.imag**2
        return FeatureSequence(kind, np.log(power @ bank.T + LOG_FLOOR))
    raise ConfigError(f"{kind!r} is not a basic feature kind")


def compute_imd(spec: StereoSpectrum) -> FeatureSequence:
    """Interaural magnitude difference |X_left| - |X_right| (linear domain)."""
    return FeatureSequence("imd257", np.abs(spec.left) - np.abs(spec.right))


def compute_ild(spec: StereoSpectrum) -> FeatureSequence:
    """Interaural level difference in dB, magnitudes floored to avoid 0/0."""
    ml = np.maximum(np.abs(spec.left), MAG_FLOOR)
    mr = np.maximum(np.abs(spec.right), MAG_FLOOR)
    return FeatureSequence("ild257", 20.0 * np.log10(ml / mr))


def compute_ipd(spec: StereoSpectrum) -> FeatureSequence:
    """Phase of X_left / X_right wrapped to (-pi, pi]; zero where either bin is silent."""
    ratio = spec.left * np.conj(spec.right)
    ipd = np.angle(ratio)
    ipd = np.where(ipd <= -np.pi, ipd + 2 * np.pi, ipd)
    silent = (np.abs(spec.left) < MAG_FLOOR) | (np.abs(spec.right) < MAG_FLOOR)
    return FeatureSequence("ipd257", np.where(silent, 0.0, ipd))


_SPATIAL = {"imd257": compute_imd, "ild257": compute_ild, "ipd257": compute_ipd}


def extract_spatial(wave: Waveform, kind: str = "imd257",
                    grid: FrameGrid = FrameGrid()) -> FeatureSequence:
    if kind not in _SPATIAL:
        raise ConfigError(f"{kind!r} is not a spatial feature kind")
    return _SPATIAL[kind](stereo_spectrum(wave, grid))


def extract(wave: Waveform, kind: str, grid: FrameGrid = FrameGrid()) -> FeatureSequence:
    if kind in BASIC_KINDS:
        return extract_basic(wave, kind, grid)
    return extract_spatial(wave, kind, grid)


@dataclass
class Normalizer:
    """Per-dimension mean/std, estimated on training data only."""

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, sequences, min_std=1e-8):
        stacked = np.concatenate([np.asarray(getattr(s, "data", s)) for s in sequences], axis=0)
        mean = stacked.mean(axis=0)
        std = np.maximum(stacked.std(axis=0), min_std)
        # rounded to the on-disk precision so a reloaded checkpoint normalises identically
        return cls(mean.astype(np.float32).astype(np.float64), std.astype(np.float32).astype(np.float64))

    def apply(self, data: np.ndarray) -> np.ndarray:
        return (data - self.mean) / self.std


# Feature cache: "CGT1", kind u8, n_frames u32, dim u32, row-major float32 (all little-endian).
_CACHE_MAGIC = b"CGT1"
_CACHE_HEADER = struct.Struct("<4sBII")


def encode_feature_cache(seq: FeatureSequence) -> bytes:
    n, d = seq.data.shape
    header = _CACHE_HEADER.pack(_CACHE_MAGIC, KIND_TAGS[seq.kind], n, d)
    return header + np.ascontiguousarray(seq.data, dtype="<f4").tobytes()


def decode_feature_cache(blob: bytes) -> FeatureSequence:
    if len(blob) < _CACHE_HEADER.size:
        raise FormatError("feature cache shorter than its header", offset=len(blob))
    magic, tag, n, d = _CACHE_HEADER.unpack_from(blob)
    if magic != _CACHE_MAGIC:
        raise FormatError("bad feature cache magic", offset=0)
    kinds = {v: k for k, v in KIND_TAGS.items()}
    if tag not in kinds:
        raise FormatError(f"unknown feature kind tag {tag}", offset=4)
    expected = _CACHE_HEADER.size + 4 * n * d
    if len(blob) != expected:
        raise FormatError(f"feature cache payload is {len(blob)} bytes, expected {expected}",
                          offset=min(len(blob), expected))
    data = np.frombuffer(blob, dtype="<f4", offset=_CACHE_HEADER.size).reshape(n, d)
    return FeatureSequence(kinds[tag], data.astype(np.float64))


def write_feature_cache(path, seq: FeatureSequence) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_feature_cache(seq))


def read_feature_cache(path) -> FeatureSequence:
    with open(path, "rb") as fh:
        return decode_feature_cache(fh.read())
