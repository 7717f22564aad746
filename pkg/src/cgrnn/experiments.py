"""Desk-scale experiments on synthetic data: overfitting a tiny set and the
paired with/without spatial-stream comparison."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path

from .data import SynthSpec, generate_synthetic, spatial_spec
from .metrics import evaluate
from .model import ModelConfig
from .pipeline import FeatureLoader
from .train import TrainConfig, train_fold

# small enough for a single CPU core, large enough to learn the synthetic cues
SMALL_MODEL = dict(n_filters=16, n_gru_layers=1, gru_units=16, dense_units=32, dtype="float32")


@dataclass
class PairedResult:
    seed: int
    eer_basic: float
    eer_spatial: float
    report_basic: object
    report_spatial: object

    @property
    def spatial_better(self) -> bool:
        return self.eer_spatial < self.eer_basic


def spatial_benefit(seed: int, workdir, n_train=200, n_test=50, epochs=20,
                    learning_rate=3e-3, basic_kind="mfb40", model_kwargs=None) -> PairedResult:
    """Train the same network with and without the IMD stream on a dataset
    where one tag pair differs only in lateralisation; returns test EERs."""
    workdir = Path(workdir)
    entries = generate_synthetic(spatial_spec(n_train + n_test, seed=seed), workdir)
    train, test = entries[:n_train], entries[n_train:]
    loader = FeatureLoader()
    kwargs = dict(SMALL_MODEL if model_kwargs is None else model_kwargs)
    tc = TrainConfig(max_epochs=epochs, patience=epochs, learning_rate=learning_rate, seed=seed)
    reports = []
    for use_imd in (False, True):
        mc = ModelConfig(basic_kind=basic_kind, use_imd=use_imd, **kwargs)
        ckpt, _ = train_fold(train, None, tc, mc, loader)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            reports.append(evaluate(ckpt, test, loader))
    return PairedResult(seed, reports[0].average, reports[1].average, *reports)


def overfit_tiny(seed: int, workdir, n_chunks=20, max_epochs=200, target=0.05,
                 learning_rate=3e-3):
    """Train a small model on a 20-chunk, two-tag dataset until the mean
    training loss drops below ``target``; returns the TrainLog."""
    spec = SynthSpec(n_chunks=n_chunks, seed=seed,
                     sources={"c": "high_tones", "m": "low_tones"}, tag_prob=0.5)
    entries = generate_synthetic(spec, workdir)
    mc = ModelConfig(basic_kind="mfb40", n_filters=16, n_gru_layers=1, gru_units=16, dense_units=32)
    tc = TrainConfig(max_epochs=max_epochs, patience=max_epochs, learning_rate=learning_rate,
                     seed=seed, target_loss=target)
    _, history = train_fold(entries, None, tc, mc, FeatureLoader())
    return history
