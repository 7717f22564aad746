"""Mini-batch Adam training, early stopping on validation EER and k-fold
cross-validation."""

from __future__ import annotations

import csv
import io
import logging
import time
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .checkpoint import Checkpoint
from .data import check_disjoint
from .errors import ConfigError, DataError, NumericError
from .metrics import EERReport, evaluate
from .model import ModelConfig, init_params, loss_and_grads
from .pipeline import FeatureLoader, fit_normalizers, model_inputs
from .tensor import AdamConfig, ParamGroup, adam_step, checked, make_rng

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 16
    max_epochs: int = 50
    patience: int = 5
    seed: int = 0
    learning_rate: float = 1e-3
    target_loss: float | None = None
    checked: bool = False

    def __post_init__(self):
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ConfigError("batch_size and max_epochs must be positive")
        if not 0 <= self.patience <= self.max_epochs:
            raise ConfigError("patience must lie in [0, max_epochs]")
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be positive")


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    valid_eer: float
    seconds: float


@dataclass
class TrainLog:
    records: list[EpochRecord] = field(default_factory=list)

    def to_csv(self, include_time: bool = True) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["epoch", "train_loss", "valid_eer", "seconds"][: 4 if include_time else 3])
        for r in self.records:
            row = [r.epoch, repr(r.train_loss), repr(r.valid_eer)]
            if include_time:
                row.append(f"{r.seconds:.3f}")
            w.writerow(row)
        return buf.getvalue()


def make_batches(manifest, batch_size: int, rng: np.random.Generator):
    """Shuffle ``manifest`` and cut it into batches; the last may be short."""
    if len(manifest) == 0:
        raise DataError("cannot batch an empty manifest")
    order = rng.permutation(len(manifest))
    return [[manifest[i] for i in order[s:s + batch_size]]
            for s in range(0, len(manifest), batch_size)]


def parse_config_text(text: str) -> dict[str, str]:
    """``key=value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = value
    return out


def split_config(values: dict) -> tuple[dict, dict]:
    """Separate train-config keys from model-config keys."""
    train_keys = {f.name: f for f in fields(TrainConfig)}
    model_keys = {f.name for f in fields(ModelConfig)}
    train, model = {}, {}
    for key, value in values.items():
        if key in train_keys:
            train[key] = _coerce_train(key, value)
        elif key in model_keys:
            model[key] = value
        else:
            raise ConfigError(f"unknown config key {key!r}")
    return train, model


def _coerce_train(key, value):
    if not isinstance(value, str):
        return value
    if key in ("learning_rate", "target_loss"):
        return None if value.lower() == "none" else float(value)
    if key == "checked":
        return value.lower() in ("1", "true", "yes", "on")
    try:
        return int(value)
    except ValueError:
        raise ConfigError(f"{key} expects an integer, got {value!r}") from None


class Trainer:
    """Owns the parameters and their Adam state for one training run."""

    def __init__(self, model_config: ModelConfig, train_config: TrainConfig, params=None):
        self.config = model_config
        self.train_config = train_config
        self.rng = make_rng(train_config.seed)
        self.params = params if params is not None else init_params(model_config, self.rng)
        self.groups = {k: ParamGroup(k, v) for k, v in self.params.items()}
        self.adam = AdamConfig(learning_rate=train_config.learning_rate)

    def step(self, basic, spatial, targets) -> float:
        """Forward/backward on one batch and one Adam update; returns the summed loss."""
        loss, grads, _ = loss_and_grads(basic, spatial, targets, self.params, self.config)
        if not np.isfinite(loss):
            raise NumericError("non-finite training loss")
        for name, group in self.groups.items():
            group.grad[...] = grads[name]
            adam_step(group, self.adam)
            group.zero_grad()
        return loss


def train_fold(train_manifest, valid_manifest, train_config: TrainConfig,
               model_config: ModelConfig, loader: FeatureLoader | None = None):
    """Train one model; returns ``(checkpoint, TrainLog)``.

    With a validation manifest the checkpoint with the lowest validation
    EER is kept and training stops after ``patience`` epochs without
    improvement.  Without one, the final epoch's parameters are kept.
    """
    if not train_manifest:
        raise DataError("empty training manifest")
    if valid_manifest:
        check_disjoint(train_manifest, valid_manifest)
    loader = loader or FeatureLoader()
    norms = fit_normalizers(model_config, train_manifest, loader)
    trainer = Trainer(model_config, train_config)
    targets = {e.chunk_id: e.labels.vector() for e in train_manifest}
    history = TrainLog()
    best_score, best_params, since_best = np.inf, None, 0
    with checked(train_config.checked):
        for epoch in range(train_config.max_epochs):
            start = time.perf_counter()
            total = 0.0
            for b, batch in enumerate(make_batches(train_manifest, train_config.batch_size, trainer.rng)):
                basic, spatial = model_inputs(model_config, batch, loader, norms)
                y = np.stack([targets[e.chunk_id] for e in batch])
                try:
                    total += trainer.step(basic, spatial, y)
                except NumericError as exc:
                    raise NumericError(f"training diverged at epoch {epoch}, batch {b}: {exc}") from exc
            mean_loss = total / len(train_manifest)
            ckpt = Checkpoint(model_config, {k: v.copy() for k, v in trainer.params.items()}, norms)
            if valid_manifest:
                valid_eer = evaluate(ckpt, valid_manifest, loader).average
                score = valid_eer if np.isfinite(valid_eer) else mean_loss
            else:
                valid_eer = float("nan")
                score = -epoch
            history.records.append(EpochRecord(epoch, mean_loss, valid_eer, time.perf_counter() - start))
            log.info("epoch %d loss %.4f valid EER %.4f", epoch, mean_loss, valid_eer)
            if score < best_score:
                best_score, best_params, since_best = score, ckpt, 0
            else:
                since_best += 1
            if train_config.target_loss is not None and mean_loss < train_config.target_loss:
                break
            if valid_manifest and since_best >= train_config.patience:
                break
    best_params.extras.update({"seed": str(train_config.seed), "epochs": str(len(history.records))})
    return best_params, history


@dataclass
class FoldPlan:
    folds: list[tuple[list, list]]

    def validate(self) -> None:
        if not self.folds:
            raise ConfigError("fold plan is empty")
        for i, (train, test) in enumerate(self.folds):
            try:
                check_disjoint(train, test)
            except DataError as exc:
                raise ConfigError(f"fold {i}: {exc}") from None


def cross_validate(plan: FoldPlan, train_config: TrainConfig, model_config: ModelConfig,
                   loader: FeatureLoader | None = None, valid_fraction: float = 0.0):
    """Train and evaluate one model per fold; returns ``(reports, checkpoints, logs)``.

    ``valid_fraction`` holds out part of each training split for early
    stopping; with 0 each model trains for ``max_epochs``.
    """
    plan.validate()
    loader = loader or FeatureLoader()
    reports, ckpts, logs = [], [], []
    for i, (train, test) in enumerate(plan.folds):
        valid = []
        if valid_fraction > 0:
            n_valid = max(1, int(round(len(train) * valid_fraction)))
            order = make_rng(train_config.seed + i).permutation(len(train))
            valid = [train[j] for j in order[:n_valid]]
            train = [train[j] for j in order[n_valid:]]
        ckpt, history = train_fold(train, valid, replace(train_config, seed=train_config.seed + i),
                                   model_config, loader)
        reports.append(evaluate(ckpt, test, loader))
        ckpts.append(ckpt)
        logs.append(history)
    return reports, ckpts, logs
