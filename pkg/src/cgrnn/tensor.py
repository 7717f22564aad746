"""Dense numerics shared by the model: checked matmul, Adam, seeded RNG and
a central finite-difference gradient checker.

Tensors are plain 2-D numpy arrays.  Checked mode validates shapes and
finiteness; it is on by default and can be switched off for training.
"""

from __future__ import annotations

import contextlib
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, NumericError

_CHECKED = True


def checked_mode() -> bool:
    return _CHECKED


def set_checked_mode(enabled: bool) -> None:
    global _CHECKED
    _CHECKED = bool(enabled)


@contextlib.contextmanager
def checked(enabled: bool = True):
    """Temporarily toggle checked mode."""
    global _CHECKED
    previous = _CHECKED
    _CHECKED = bool(enabled)
    try:
        yield
    finally:
        _CHECKED = previous


def tensor2(data, dtype=np.float64) -> np.ndarray:
    """Build a 2-D tensor, rejecting NaN/Inf when checked mode is on."""
    arr = np.array(data, dtype=dtype)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise DimensionError(f"expected a 2-D tensor, got shape {arr.shape}")
    if _CHECKED and not np.all(np.isfinite(arr)):
        raise NumericError("tensor contains non-finite values")
    return arr


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product with an explicit shape check."""
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def make_rng(seed: int) -> np.random.Generator:
    """Seeded generator (PCG64); identical seeds give identical streams."""
    return np.random.Generator(np.random.PCG64(int(seed)))


@dataclass
class AdamConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValueError("beta1 and beta2 must lie in (0, 1)")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")


@dataclass
class ParamGroup:
    """A learnable tensor with its gradient and Adam moments.

    ``value`` is updated in place, so a model holding a reference to the
    same array sees every step.
    """

    name: str
    value: np.ndarray
    grad: np.ndarray = field(default=None)
    adam_m: np.ndarray = field(default=None)
    adam_v: np.ndarray = field(default=None)
    step_count: int = 0

    def __post_init__(self):
        for attr in ("grad", "adam_m", "adam_v"):
            t = getattr(self, attr)
            if t is None:
                setattr(self, attr, np.zeros_like(self.value))
            elif t.shape != self.value.shape:
                raise DimensionError(
                    f"{self.name}.{attr} has shape {t.shape}, expected {self.value.shape}"
                )

    def zero_grad(self) -> None:
        self.grad[...] = 0


def adam_step(group: ParamGroup, cfg: AdamConfig) -> ParamGroup:
    """One bias-corrected Adam update of ``group`` in place.

    Entries whose gradient is exactly zero keep their value; their moments
    still decay.  The caller zeroes the gradient afterwards.
    """
    g = group.grad
    if not np.all(np.isfinite(g)):
        raise NumericError(f"non-finite gradient in parameter group '{group.name}'")
    group.step_count += 1
    t = group.step_count
    group.adam_m *= cfg.beta1
    group.adam_m += (1.0 - cfg.beta1) * g
    group.adam_v *= cfg.beta2
    group.adam_v += (1.0 - cfg.beta2) * (g * g)
    m_hat = group.adam_m / (1.0 - cfg.beta1**t)
    v_hat = group.adam_v / (1.0 - cfg.beta2**t)
    update = cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.epsilon)
    update[g == 0] = 0.0
    group.value -= update.astype(group.value.dtype, copy=False)
    return group


def finite_diff_grad(f, x: np.ndarray, h: float = 1e-5, indices=None) -> np.ndarray:
    """Central-difference gradient of scalar ``f`` at ``x``.

    ``x`` is perturbed in place and restored.  ``indices`` (flat positions)
    restricts the probe to a subset; other entries of the result stay zero.
    """
    if not h > 0:
        raise ValueError("step size must be positive")
    grad = np.zeros(x.shape, dtype=np.float64)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    if indices is None:
        indices = range(flat.size)
    for i in indices:
        orig = flat[i]
        flat[i] = orig + h
        fp = f(x)
        flat[i] = orig - h
        fm = f(x)
        flat[i] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NumericError(f"objective is non-finite near flat index {i}")
        gflat[i] = (fp - fm) / (2.0 * h)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Norm-wise relative error ``|a - n| / max(|a| + |n|, tiny)``."""
    a = np.asarray(analytic, dtype=np.float64).ravel()
    n = np.asarray(numeric, dtype=np.float64).ravel()
    denom = np.linalg.norm(a) + np.linalg.norm(n)
    if denom < 1e-12:
        return 0.0
    return float(np.linalg.norm(a - n) / denom)
