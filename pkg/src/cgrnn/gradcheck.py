"""Finite-difference verification of every hand-written backward pass."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import layers
from .model import ModelConfig, init_params, loss_and_grads
from .tensor import finite_diff_grad, make_rng, relative_error

TOLERANCE = 1e-5
LAYERS = ("conv-gmp", "gru", "simple-rnn", "dense", "bce")

# per-layer problem sizes for each preset
SIZES = {
    "tiny": {"rows": 3, "width": 8, "filters": 4, "filter_len": 3,
             "cell_in": 4, "cell_hidden": 3, "batch": 2, "steps": 3,
             "dense_in": 6, "dense_out": 5},
    "default-small": {"rows": 4, "width": 40, "filters": 8, "filter_len": 30,
                      "cell_in": 16, "cell_hidden": 8, "batch": 2, "steps": 5,
                      "dense_in": 16, "dense_out": 12},
}


@dataclass
class CheckResult:
    layer: str
    seed: int
    worst_error: float
    worst_tensor: str
    worst_index: tuple

    @property
    def passed(self) -> bool:
        return self.worst_error < TOLERANCE


def _compare(layer, seed, analytic: dict, numeric: dict) -> CheckResult:
    worst = (0.0, "", ())
    for name, a in analytic.items():
        n = numeric[name]
        err = relative_error(a, n)
        if err >= worst[0]:
            diff = np.abs(np.asarray(a, dtype=np.float64) - n)
            worst = (err, name, tuple(int(i) for i in np.unravel_index(np.argmax(diff), diff.shape)))
    return CheckResult(layer, seed, *worst)


def _inject(analytic: dict, fault: bool) -> dict:
    if fault:
        name = next(iter(analytic))
        analytic[name] = analytic[name].copy()
        analytic[name].flat[0] += 1e-2 + abs(analytic[name].flat[0])
    return analytic


def check_conv(seed: int, fault=False, size="tiny") -> CheckResult:
    sz = SIZES[size]
    rng = make_rng(seed)
    x = rng.standard_normal((sz["rows"], sz["width"]))
    w = rng.standard_normal((sz["filters"], sz["filter_len"]))
    b = rng.normal(0.5, 0.3, (1, sz["filters"]))
    c = rng.standard_normal((sz["rows"], sz["filters"]))

    def loss():
        out, _ = layers.conv1d_gmp_forward(x, w, b)
        return float(np.sum(out * c))

    _, cache = layers.conv1d_gmp_forward(x, w, b)
    gw, gb, gx = layers.conv1d_gmp_backward(cache, c)
    analytic = _inject({"W": gw, "b": gb, "frames": gx}, fault)
    numeric = {name: finite_diff_grad(lambda _: loss(), t) for name, t in (("W", w), ("b", b), ("frames", x))}
    return _compare("conv-gmp", seed, analytic, numeric)


def _check_cell(cell: str, seed: int, fault=False, size="tiny") -> CheckResult:
    sz = SIZES[size]
    rng = make_rng(seed)
    d, hidden, batch, steps = sz["cell_in"], sz["cell_hidden"], sz["batch"], sz["steps"]
    w = {}
    for name in layers.cell_param_names(cell):
        shape = (hidden, d) if name[0] == "W" else (hidden, hidden) if name[0] == "R" else (1, hidden)
        w[name] = rng.normal(0, 0.6, shape)
    xs = [rng.standard_normal((batch, d)) for _ in range(steps)]
    h0 = rng.uniform(-0.8, 0.8, (batch, hidden))
    cs = [rng.standard_normal((batch, hidden)) for _ in range(steps)]

    def loss():
        h, total = h0, 0.0
        for x, c in zip(xs, cs):
            h, _ = layers.gru_cell_forward(x, h, w, cell)
            total += float(np.sum(h * c))
        return total

    h, caches = h0, []
    for x in xs:
        h, cache = layers.gru_cell_forward(x, h, w, cell)
        caches.append(cache)
    grads = {k: np.zeros_like(v) for k, v in w.items()}
    grad_xs = [None] * steps
    dh = np.zeros_like(h0)
    for t in range(steps - 1, -1, -1):
        gx, dh, gw = layers.gru_cell_backward(caches[t], dh + cs[t], w)
        grad_xs[t] = gx
        for k in grads:
            grads[k] += gw[k]
    analytic = dict(grads)
    analytic["h0"] = dh
    analytic["x0"] = grad_xs[0]
    analytic = _inject(analytic, fault)
    numeric = {k: finite_diff_grad(lambda _: loss(), w[k]) for k in w}
    numeric["h0"] = finite_diff_grad(lambda _: loss(), h0)
    numeric["x0"] = finite_diff_grad(lambda _: loss(), xs[0])
    return _compare("gru" if cell == "gru" else "simple-rnn", seed, analytic, numeric)


def check_gru(seed: int, fault=False, size="tiny") -> CheckResult:
    return _check_cell("gru", seed, fault, size)


def check_simple(seed: int, fault=False, size="tiny") -> CheckResult:
    return _check_cell("simple", seed, fault, size)


def check_dense(seed: int, fault=False, size="tiny") -> CheckResult:
    sz = SIZES[size]
    rng = make_rng(seed)
    x = rng.standard_normal((sz["batch"] * 2, sz["dense_in"]))
    w = rng.standard_normal((sz["dense_out"], sz["dense_in"]))
    b = rng.normal(0.2, 0.5, (1, sz["dense_out"]))
    c = rng.standard_normal((sz["batch"] * 2, sz["dense_out"]))

    def loss():
        out, _ = layers.dense_forward(x, w, b, "relu")
        return float(np.sum(out * c))

    _, cache = layers.dense_forward(x, w, b, "relu")
    gw, gb, gx = layers.dense_backward(cache, c)
    analytic = _inject({"W": gw, "b": gb, "x": gx}, fault)
    numeric = {name: finite_diff_grad(lambda _: loss(), t) for name, t in (("W", w), ("b", b), ("x", x))}
    return _compare("dense", seed, analytic, numeric)


def check_bce(seed: int, fault=False, size="tiny") -> CheckResult:
    rng = make_rng(seed)
    logits = rng.normal(0, 2.0, (SIZES[size]["rows"], 7))
    ref = (rng.random(logits.shape) < 0.5).astype(float)
    _, g = layers.bce_with_logits(logits, ref)
    analytic = _inject({"logits": g}, fault)
    numeric = {"logits": finite_diff_grad(lambda z: layers.bce_with_logits(z, ref)[0], logits)}
    return _compare("bce", seed, analytic, numeric)


CHECKS = {
    "conv-gmp": check_conv,
    "gru": check_gru,
    "simple-rnn": check_simple,
    "dense": check_dense,
    "bce": check_bce,
}

TINY = ModelConfig(basic_dim=8, basic_filter_len=3, use_imd=True, spatial_dim=8,
                   spatial_filter_len=3, n_filters=4, gru_units=5, dense_units=6)


def check_model(seed: int, config: ModelConfig = TINY, frames=4, probes_per_group=4) -> CheckResult:
    """Whole-network check on a tiny configuration.

    Small groups are probed fully; larger ones at ``probes_per_group``
    seeded coordinates to keep the run short.
    """
    rng = make_rng(seed)
    params = init_params(config, rng)
    for name, v in params.items():
        if name.rsplit(".", 1)[1].startswith("b"):
            params[name] = rng.normal(0, 0.3, v.shape)
    basic = rng.standard_normal((1, frames, config.basic_input_dim))
    spatial = rng.standard_normal((1, frames, config.spatial_input_dim)) if config.use_imd else None
    targets = (rng.random((1, config.n_outputs)) < 0.5).astype(float)
    _, grads, _ = loss_and_grads(basic, spatial, targets, params, config)

    def loss(_):
        return loss_and_grads(basic, spatial, targets, params, config)[0]

    analytic, numeric = {}, {}
    for name, value in params.items():
        if value.size <= probes_per_group:
            idx = np.arange(value.size)
        else:
            idx = np.sort(rng.choice(value.size, probes_per_group, replace=False))
        num = finite_diff_grad(loss, value, indices=idx)
        analytic[name] = grads[name].reshape(-1)[idx]
        numeric[name] = num.reshape(-1)[idx]
    return _compare("model", seed, analytic, numeric)


def run_suite(seeds=range(20), faulty=(), size="tiny"):
    """Run every layer check for every seed; returns results grouped by layer."""
    if size not in SIZES:
        raise ValueError(f"unknown gradcheck preset {size!r}")
    results = {}
    for layer, fn in CHECKS.items():
        results[layer] = [fn(s, fault=(layer in faulty), size=size) for s in seeds]
    return results
