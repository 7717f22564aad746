"""Glue between manifests, feature extraction and the model."""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np

from .data import CHUNK_SAMPLES, read_wav
from .errors import DataError
from .features import FeatureSequence, Normalizer, Waveform, extract, read_feature_cache, write_feature_cache
from .model import model_forward

CACHE_ENV = "CGRNN_CACHE_DIR"


def fix_length(wave: Waveform, n_samples: int = CHUNK_SAMPLES, chunk_id: str = "") -> Waveform:
    """Truncate to exactly ``n_samples``; shorter chunks are rejected."""
    if wave.n_samples < n_samples:
        raise DataError(f"chunk {chunk_id or '?'} has {wave.n_samples} samples, "
                        f"needs {n_samples}")
    return Waveform(wave.left[:n_samples], wave.right[:n_samples], wave.sample_rate)


class FeatureLoader:
    """Extract features per manifest entry, memoised in memory and
    optionally on disk (one cache file per chunk and kind)."""

    def __init__(self, cache_dir=None):
        if cache_dir is None:
            cache_dir = os.environ.get(CACHE_ENV) or None
        self.cache_dir = Path(cache_dir) if cache_dir else None
        self._memo = {}

    def _cache_path(self, entry, kind):
        return self.cache_dir / f"{entry.chunk_id}.{kind}.cgt"

    def wave(self, entry) -> Waveform:
        if not os.path.exists(entry.path):
            raise DataError(f"chunk {entry.chunk_id}: audio file not found: {entry.path}")
        return fix_length(read_wav(entry.path), CHUNK_SAMPLES, entry.chunk_id)

    def features(self, entry, kind) -> FeatureSequence:
        key = (entry.chunk_id, entry.path, kind)
        if key in self._memo:
            return self._memo[key]
        seq = None
        if self.cache_dir is not None:
            path = self._cache_path(entry, kind)
            if path.exists():
                seq = read_feature_cache(path)
        if seq is None:
            seq = extract(self.wave(entry), kind)
            if self.cache_dir is not None:
                self.cache_dir.mkdir(parents=True, exist_ok=True)
                write_feature_cache(self._cache_path(entry, kind), seq)
        self._memo[key] = seq
        return seq

    def stack(self, entries, kind) -> np.ndarray:
        return np.stack([self.features(e, kind).data for e in entries])


def model_inputs(config, entries, loader, normalizers):
    """Normalised ``(basic, spatial)`` batch arrays for ``entries``."""
    basic = loader.stack(entries, config.basic_kind)
    if "basic" in normalizers:
        basic = normalizers["basic"].apply(basic)
    spatial = None
    if config.use_imd:
        spatial = loader.stack(entries, config.spatial_kind)
        if "spatial" in normalizers:
            spatial = normalizers["spatial"].apply(spatial)
    return basic.astype(config.dtype), (None if spatial is None else spatial.astype(config.dtype))


def fit_normalizers(config, entries, loader) -> dict[str, Normalizer]:
    norms = {"basic": Normalizer.fit(loader.features(e, config.basic_kind) for e in entries)}
    if config.use_imd:
        norms["spatial"] = Normalizer.fit(loader.features(e, config.spatial_kind) for e in entries)
    return norms


def predict(checkpoint, entries, loader, batch_size=16) -> np.ndarray:
    """Posterior matrix ``[n_chunks x 7]``."""
    out = []
    for start in range(0, len(entries), batch_size):
        batch = entries[start:start + batch_size]
        basic, spatial = model_inputs(checkpoint.config, batch, loader, checkpoint.normalizers)
        probs, _ = model_forward(basic, spatial, checkpoint.params, checkpoint.config)
        out.append(np.atleast_2d(probs))
    return np.concatenate(out, axis=0)
