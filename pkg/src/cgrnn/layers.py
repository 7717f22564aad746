"""Forward and backward passes of the individual network layers.

Every forward returns ``(output, cache)``; the matching backward consumes
the cache.  Rows are examples (or frames): a dense layer maps ``[B x D]`` to
``[B x H]`` with ``y = x @ W.T + b`` so weight matrices are stored
``[out x in]``.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit

from .errors import DimensionError, LabelError, StateError

BCE_EPS = 1e-7


def sigmoid(x):
    return expit(x)


# ---------------------------------------------------------------------------
# 1-D convolution over the feature axis followed by global max pooling
# ---------------------------------------------------------------------------

def conv1d_gmp_forward(frames: np.ndarray, weights: np.ndarray, bias: np.ndarray):
    """Correlate every frame with ``N`` filters of length ``F`` and keep, per
    filter, the largest ReLU response over the ``M - F + 1`` positions.

    ``frames`` is ``[R x M]`` (a single M-vector is accepted too), ``weights``
    ``[N x F]``, ``bias`` ``[1 x N]``.  Ties go to the lowest position.
    """
    single = frames.ndim == 1
    x = np.atleast_2d(frames)
    n_filters, f = weights.shape
    m = x.shape[1]
    if not 1 <= f <= m:
        raise DimensionError(f"filter length {f} incompatible with input width {m}")
    if bias.size != n_filters:
        raise DimensionError(f"bias has {bias.size} entries for {n_filters} filters")
    b = bias.reshape(1, -1)
    wt = weights.T
    best = x[:, 0:f] @ wt + b
    argmax = np.zeros(best.shape, dtype=np.intp)
    for j in range(1, m - f + 1):
        pre = x[:, j:j + f] @ wt + b
        better = pre > best
        best = np.where(better, pre, best)
        argmax[better] = j
    out = np.maximum(best, 0.0)
    cache = {"x": x, "w": weights, "argmax": argmax, "best": best, "single": single}
    return (out[0] if single else out), cache


def conv1d_gmp_backward(cache, upstream: np.ndarray, need_input_grad: bool = True):
    """Gradient routed through each filter's argmax position where its
    pre-activation is positive.  Returns ``(grad_w, grad_b, grad_frames)``;
    ``grad_frames`` is None when ``need_input_grad`` is false."""
    if cache is None or "argmax" not in cache:
        raise StateError("conv1d_gmp_backward called without a forward cache")
    x, w, argmax = cache["x"], cache["w"], cache["argmax"]
    g = np.atleast_2d(upstream) * (cache["best"] > 0)
    n_filters, f = w.shape
    windows = np.lib.stride_tricks.sliding_window_view(x, f, axis=1)
    # winning window of every (row, filter): [R x N x F]
    picked = windows[np.arange(x.shape[0])[:, None], argmax]
    grad_w = np.matmul(g.T[:, None, :], picked.transpose(1, 0, 2))[:, 0]
    grad_b = g.sum(axis=0, keepdims=True)
    grad_x = None
    if need_input_grad:
        grad_x = np.zeros_like(x, dtype=np.result_type(x, g))
        for j in range(x.shape[1] - f + 1):
            gj = np.where(argmax == j, g, 0.0)
            if gj.any():
                grad_x[:, j:j + f] += gj @ w
        if cache["single"]:
            grad_x = grad_x[0]
    return grad_w, grad_b, grad_x


# ---------------------------------------------------------------------------
# Recurrent cells
# ---------------------------------------------------------------------------

GRU_INPUT = ("Wr", "Wz", "Wh")
GRU_RECURRENT = ("Rr", "Rz", "Rh")
GRU_BIAS = ("br", "bz", "bh")


def cell_param_names(cell: str):
    if cell == "gru":
        return GRU_INPUT + GRU_RECURRENT + GRU_BIAS
    if cell == "simple":
        return ("Wh", "Rh", "bh")
    raise ValueError(f"unknown cell type {cell!r}")


def _check_cell(x, h, w, cell):
    hidden, d = w["Wh"].shape
    if x.shape[-1] != d or h.shape[-1] != hidden:
        raise DimensionError(
            f"cell expects x[..., {d}] and h[..., {hidden}], got {x.shape} and {h.shape}"
        )


def cell_step(proj, h_prev, w, cell="gru"):
    """Advance one step given precomputed input projections.

    ``proj`` maps 'r', 'z', 'h' to ``x @ W*.T + b*``.  Splitting the input
    projection out lets sequence code batch it over all frames.
    """
    if cell == "simple":
        a = proj["h"] + h_prev @ w["Rh"].T
        h = np.tanh(a)
        return h, {"cell": cell, "h_prev": h_prev, "h": h}
    r = expit(proj["r"] + h_prev @ w["Rr"].T)
    z = expit(proj["z"] + h_prev @ w["Rz"].T)
    rh = h_prev @ w["Rh"].T
    h_tilde = np.tanh(proj["h"] + r * rh)
    h = z * h_prev + (1.0 - z) * h_tilde
    return h, {"cell": cell, "h_prev": h_prev, "r": r, "z": z, "rh": rh, "h_tilde": h_tilde}


def cell_step_backward(cache, grad_h, w):
    """Inverse of :func:`cell_step`.

    Returns ``(grad_proj, grad_h_prev, grad_recurrent)`` where ``grad_proj``
    holds gradients w.r.t. the input projections and ``grad_recurrent`` the
    R* gradients of this step.
    """
    h_prev = cache["h_prev"]
    if cache["cell"] == "simple":
        da = grad_h * (1.0 - cache["h"] ** 2)
        return {"h": da}, da @ w["Rh"], {"Rh": da.T @ h_prev}
    r, z, rh, ht = cache["r"], cache["z"], cache["rh"], cache["h_tilde"]
    dz = grad_h * (h_prev - ht)
    dah = grad_h * (1.0 - z) * (1.0 - ht * ht)
    drh = dah * r
    dar = dah * rh * r * (1.0 - r)
    daz = dz * z * (1.0 - z)
    grad_h_prev = grad_h * z + dar @ w["Rr"] + daz @ w["Rz"] + drh @ w["Rh"]
    grad_rec = {"Rr": dar.T @ h_prev, "Rz": daz.T @ h_prev, "Rh": drh.T @ h_prev}
    return {"r": dar, "z": daz, "h": dah}, grad_h_prev, grad_rec


def _input_projection(x, w, cell):
    gates = ("h",) if cell == "simple" else ("r", "z", "h")
    return {g: x @ w["W" + g].T + w["b" + g].reshape(-1) for g in gates}


def gru_cell_forward(x, h_prev, w, cell="gru"):
    """One recurrent step.

    ``cell='gru'``: reset/update gated unit where the reset gate scales the
    recurrent product ``Rh @ h`` (not ``h`` itself).  ``cell='simple'``:
    ``h = tanh(Wh x + Rh h + bh)``.  Accepts vectors or ``[B x .]`` rows.
    """
    x = np.asarray(x)
    h_prev = np.asarray(h_prev)
    _check_cell(x, h_prev, w, cell)
    single = x.ndim == 1
    x2, h2 = np.atleast_2d(x), np.atleast_2d(h_prev)
    h, cache = cell_step(_input_projection(x2, w, cell), h2, w, cell)
    cache["x"] = x2
    cache["single"] = single
    return (h[0] if single else h), cache


def gru_cell_backward(cache, grad_h, w):
    """Returns ``(grad_x, grad_h_prev, grad_weights)`` for one step."""
    if cache is None or "h_prev" not in cache or "x" not in cache:
        raise StateError("gru_cell_backward called without a forward cache")
    x = cache["x"]
    grad_proj, grad_h_prev, grads = cell_step_backward(cache, np.atleast_2d(grad_h), w)
    grad_x = 0.0
    for g, d in grad_proj.items():
        grads["W" + g] = d.T @ x
        grads["b" + g] = d.sum(axis=0, keepdims=True)
        grad_x = grad_x + d @ w["W" + g]
    if cache["single"]:
        return grad_x[0], grad_h_prev[0], grads
    return grad_x, grad_h_prev, grads


def gru_sequence_forward(x_seq, w, cell="gru", reverse=False, h0=None):
    """Run a cell over ``x_seq`` of shape ``[B x T x D]``; returns ``[B x T x H]``."""
    b, t, d = x_seq.shape
    hidden = w["Wh"].shape[0]
    if w["Wh"].shape[1] != d:
        raise DimensionError(f"cell expects input width {w['Wh'].shape[1]}, got {d}")
    proj = _input_projection(x_seq.reshape(b * t, d), w, cell)
    proj = {g: p.reshape(b, t, hidden) for g, p in proj.items()}
    h = np.zeros((b, hidden), dtype=x_seq.dtype) if h0 is None else h0
    out = np.empty((b, t, hidden), dtype=np.result_type(x_seq, w["Wh"]))
    caches = [None] * t
    order = range(t - 1, -1, -1) if reverse else range(t)
    for step in order:
        h, caches[step] = cell_step({g: p[:, step] for g, p in proj.items()}, h, w, cell)
        out[:, step] = h
    return out, {"x": x_seq, "caches": caches, "cell": cell, "reverse": reverse}


def gru_sequence_backward(cache, grad_out, w):
    """Backpropagation through time for :func:`gru_sequence_forward`.

    Returns ``(grad_x_seq, grad_weights)``.
    """
    x_seq, caches, cell = cache["x"], cache["caches"], cache["cell"]
    b, t, d = x_seq.shape
    hidden = w["Wh"].shape[0]
    gates = ("h",) if cell == "simple" else ("r", "z", "h")
    grad_proj = {g: np.zeros((b, t, hidden), dtype=grad_out.dtype) for g in gates}
    grads = {"R" + g: np.zeros_like(w["R" + g]) for g in gates}
    dh = np.zeros((b, hidden), dtype=grad_out.dtype)
    order = range(t) if cache["reverse"] else range(t - 1, -1, -1)
    for step in order:
        dh = dh + grad_out[:, step]
        gp, dh, grec = cell_step_backward(caches[step], dh, w)
        for g in gates:
            grad_proj[g][:, step] = gp[g]
            grads["R" + g] += grec["R" + g]
    x_flat = x_seq.reshape(b * t, d)
    grad_x = np.zeros((b * t, d), dtype=grad_out.dtype)
    for g in gates:
        gflat = grad_proj[g].reshape(b * t, hidden)
        grads["W" + g] = gflat.T @ x_flat
        grads["b" + g] = gflat.sum(axis=0, keepdims=True)
        grad_x += gflat @ w["W" + g]
    return grad_x.reshape(b, t, d), grads


# ---------------------------------------------------------------------------
# Feed-forward readout and loss
# ---------------------------------------------------------------------------

def dense_forward(x, weights, bias, activation=None):
    out = x @ weights.T + bias.reshape(1, -1)
    if activation == "relu":
        out = np.maximum(out, 0.0)
    elif activation is not None:
        raise ValueError(f"unknown activation {activation!r}")
    return out, {"x": x, "w": weights, "out": out, "activation": activation}


def dense_backward(cache, upstream):
    """Returns ``(grad_w, grad_b, grad_x)``; ReLU subgradient at 0 is 0."""
    if cache is None or "x" not in cache:
        raise StateError("dense_backward called without a forward cache")
    g = upstream
    if cache["activation"] == "relu":
        g = g * (cache["out"] > 0)
    return g.T @ cache["x"], g.sum(axis=0, keepdims=True), g @ cache["w"]


def bce_loss(predicted, reference, eps=BCE_EPS):
    """Binary cross-entropy summed over tags and batch.

    ``predicted`` are sigmoid outputs, clamped to ``[eps, 1 - eps]``.
    Returns ``(loss, grad_wrt_logits)`` where the gradient w.r.t. the
    pre-sigmoid output is ``predicted - reference``.
    """
    p = np.asarray(predicted, dtype=np.float64)
    t = np.asarray(reference, dtype=np.float64)
    if p.shape != t.shape:
        raise DimensionError(f"prediction shape {p.shape} != reference shape {t.shape}")
    if not np.all((t == 0) | (t == 1)):
        raise LabelError("reference tags must be 0 or 1")
    pc = np.clip(p, eps, 1.0 - eps)
    loss = -float(np.sum(t * np.log(pc) + (1.0 - t) * np.log(1.0 - pc)))
    return loss, (np.asarray(predicted) - t.astype(np.asarray(predicted).dtype))


def bce_with_logits(logits, reference, eps=BCE_EPS):
    return bce_loss(expit(logits), reference, eps)
