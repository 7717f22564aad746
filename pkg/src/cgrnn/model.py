"""Convolutional gated recurrent network for chunk-level audio tagging.

Pipeline per chunk: a conv + global-max-pool stream over each frame of the
basic feature (and optionally of the spatial feature), concatenation, a
stack of bidirectional recurrent layers, temporal pooling, a ReLU dense
layer and one sigmoid output per tag.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields, replace

import numpy as np
from scipy.special import expit

from . import layers
from .errors import ConfigError
from .features import FEATURE_DIMS, FeatureSequence
from .tensor import tensor2

N_TAGS = 7

# (input width, filter length) per feature kind; spatial streams follow the spectrogram
DEFAULT_FILTER_LEN = {
    "mfb40": 30,
    "spec257": 200,
    "raw512": 400,
    "imd257": 200,
    "ild257": 200,
    "ipd257": 200,
}


@dataclass(frozen=True)
class ModelConfig:
    basic_kind: str = "mfb40"
    use_imd: bool = False
    spatial_kind: str = "imd257"
    n_filters: int = 128
    basic_filter_len: int | None = None
    spatial_filter_len: int | None = None
    basic_dim: int | None = None
    spatial_dim: int | None = None
    n_gru_layers: int = 3
    gru_units: int = 128
    bidirectional: bool = True
    cell: str = "gru"
    dense_units: int = 500
    n_outputs: int = N_TAGS
    temporal_readout: str = "mean"
    dtype: str = "float64"

    def __post_init__(self):
        if self.basic_kind not in FEATURE_DIMS:
            raise ConfigError(f"unknown basic feature kind {self.basic_kind!r}")
        if self.spatial_kind not in FEATURE_DIMS:
            raise ConfigError(f"unknown spatial feature kind {self.spatial_kind!r}")
        if self.temporal_readout not in ("mean", "last"):
            raise ConfigError("temporal_readout must be 'mean' or 'last'")
        if self.cell not in ("gru", "simple"):
            raise ConfigError("cell must be 'gru' or 'simple'")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError("dtype must be float32 or float64")
        for name in ("n_filters", "n_gru_layers", "gru_units", "dense_units", "n_outputs"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        for m, f, stream in ((self.basic_input_dim, self.basic_kernel, "basic"),
                             (self.spatial_input_dim, self.spatial_kernel, "spatial")):
            if not 1 <= f <= m:
                raise ConfigError(f"{stream} stream needs 1 <= filter_len ({f}) <= input_dim ({m})")

    @property
    def basic_input_dim(self) -> int:
        return self.basic_dim if self.basic_dim is not None else FEATURE_DIMS[self.basic_kind]

    @property
    def spatial_input_dim(self) -> int:
        return self.spatial_dim if self.spatial_dim is not None else FEATURE_DIMS[self.spatial_kind]

    @property
    def basic_kernel(self) -> int:
        if self.basic_filter_len is not None:
            return self.basic_filter_len
        return DEFAULT_FILTER_LEN[self.basic_kind]

    @property
    def spatial_kernel(self) -> int:
        if self.spatial_filter_len is not None:
            return self.spatial_filter_len
        return DEFAULT_FILTER_LEN[self.spatial_kind]

    @property
    def gru_input_dim(self) -> int:
        return self.n_filters * (2 if self.use_imd else 1)

    @property
    def directions(self) -> tuple[str, ...]:
        return ("f", "b") if self.bidirectional else ("f",)

    @property
    def gru_output_dim(self) -> int:
        return self.gru_units * len(self.directions)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, values: dict) -> "ModelConfig":
        known = {f.name: f for f in fields(cls)}
        kwargs = {}
        for key, raw in values.items():
            if key not in known:
                raise ConfigError(f"unknown model config key {key!r}")
            kwargs[key] = _coerce(key, raw, cls)
        return cls(**kwargs)

    def updated(self, **changes) -> "ModelConfig":
        return replace(self, **changes)


def _coerce(key, raw, cls):
    if not isinstance(raw, str):
        return raw
    default = getattr(cls, key, None)
    text = raw.strip()
    if text.lower() in ("none", ""):
        return None
    if isinstance(default, bool):
        if text.lower() in ("1", "true", "yes", "on"):
            return True
        if text.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{key} expects a boolean, got {raw!r}")
    if isinstance(default, int) or key.endswith(("_len", "_dim")):
        try:
            return int(text)
        except ValueError:
            raise ConfigError(f"{key} expects an integer, got {raw!r}") from None
    return text


def param_shapes(config: ModelConfig) -> dict[str, tuple[int, int]]:
    """Names and shapes of every learnable tensor, in canonical order."""
    n = config.n_filters
    shapes = {
        "conv.basic.W": (n, config.basic_kernel),
        "conv.basic.b": (1, n),
    }
    if config.use_imd:
        shapes["conv.spatial.W"] = (n, config.spatial_kernel)
        shapes["conv.spatial.b"] = (1, n)
    d_in = config.gru_input_dim
    hidden = config.gru_units
    for layer in range(config.n_gru_layers):
        for direction in config.directions:
            prefix = f"gru{layer}.{direction}."
            for name in layers.cell_param_names(config.cell):
                if name.startswith("W"):
                    shapes[prefix + name] = (hidden, d_in)
                elif name.startswith("R"):
                    shapes[prefix + name] = (hidden, hidden)
                else:
                    shapes[prefix + name] = (1, hidden)
        d_in = config.gru_output_dim
    shapes["dense.W"] = (config.dense_units, config.gru_output_dim)
    shapes["dense.b"] = (1, config.dense_units)
    shapes["out.W"] = (config.n_outputs, config.dense_units)
    shapes["out.b"] = (1, config.n_outputs)
    return shapes


def glorot_limit(fan_out: int, fan_in: int) -> float:
    return float(np.sqrt(6.0 / (fan_in + fan_out)))


def orthogonal(n: int, rng: np.random.Generator) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.diag(r))


def init_params(config: ModelConfig, rng: np.random.Generator) -> dict[str, np.ndarray]:
    """Glorot-uniform input weights, orthogonal recurrent matrices, zero biases."""
    params = {}
    for name, shape in param_shapes(config).items():
        leaf = name.rsplit(".", 1)[1]
        if leaf.startswith("b"):
            value = np.zeros(shape)
        elif leaf.startswith("R"):
            value = orthogonal(shape[0], rng)
        else:
            lim = glorot_limit(*shape)
            value = rng.uniform(-lim, lim, size=shape)
        params[name] = value.astype(config.dtype)
    return params


def _as_batch(features, dtype):
    if isinstance(features, FeatureSequence):
        features = features.data
    arr = np.asarray(features, dtype=dtype)
    if arr.ndim == 2:
        return arr[None], True
    if arr.ndim != 3:
        raise ConfigError(f"features must be [T x M] or [B x T x M], got {arr.shape}")
    return arr, False


def _cell_weights(params, prefix, cell):
    return {name: params[prefix + name] for name in layers.cell_param_names(cell)}


def model_forward(basic, spatial, params, config: ModelConfig):
    """Tag posteriors for one chunk (``[T x M]``) or a batch (``[B x T x M]``).

    Returns ``(probs, cache)``; ``cache['logits']`` holds the pre-sigmoid output.
    """
    if isinstance(basic, FeatureSequence) and basic.kind != config.basic_kind and config.basic_dim is None:
        raise ConfigError(f"model expects {config.basic_kind} features, got {basic.kind}")
    if config.use_imd and spatial is None:
        raise ConfigError("model configured with a spatial stream but no spatial features given")
    if not config.use_imd and spatial is not None:
        raise ConfigError("spatial features given to a model without a spatial stream")
    if isinstance(spatial, FeatureSequence) and spatial.kind != config.spatial_kind and config.spatial_dim is None:
        raise ConfigError(f"model expects {config.spatial_kind} features, got {spatial.kind}")

    x, single = _as_batch(basic, config.dtype)
    b, t, m = x.shape
    if t < 1:
        raise ConfigError("empty feature sequence")
    if m != config.basic_input_dim:
        raise ConfigError(f"basic features have width {m}, model expects {config.basic_input_dim}")
    cache = {"single": single, "shape": (b, t)}

    pooled, cache["conv.basic"] = layers.conv1d_gmp_forward(
        x.reshape(b * t, m), params["conv.basic.W"], params["conv.basic.b"])
    streams = [pooled.reshape(b, t, -1)]
    if config.use_imd:
        s, _ = _as_batch(spatial, config.dtype)
        if s.shape[:2] != (b, t) or s.shape[2] != config.spatial_input_dim:
            raise ConfigError(f"spatial features have shape {s.shape}, expected "
                              f"{(b, t, config.spatial_input_dim)}")
        pooled_s, cache["conv.spatial"] = layers.conv1d_gmp_forward(
            s.reshape(b * t, -1), params["conv.spatial.W"], params["conv.spatial.b"])
        streams.append(pooled_s.reshape(b, t, -1))
    h = np.concatenate(streams, axis=2) if len(streams) > 1 else streams[0]

    h, cache["gru"] = bigru_stack_forward(h, params, config)

    if config.temporal_readout == "mean":
        summary = h.mean(axis=1)
    else:
        summary = h[:, -1]
    hidden, cache["dense"] = layers.dense_forward(summary, params["dense.W"], params["dense.b"], "relu")
    logits, cache["out"] = layers.dense_forward(hidden, params["out.W"], params["out.b"])
    probs = expit(logits)
    cache["logits"] = logits
    return (probs[0] if single else probs), cache


def bigru_stack_forward(seq, params, config: ModelConfig):
    """Stacked (bi)directional recurrent layers over ``[B x T x D]``.

    Each layer emits ``[forward h_t | backward h_t]`` per frame.
    """
    if seq.shape[1] < 1:
        raise ConfigError("recurrent stack needs at least one frame")
    caches = []
    h = seq
    for layer in range(config.n_gru_layers):
        outs, layer_cache = [], {}
        for direction in config.directions:
            w = _cell_weights(params, f"gru{layer}.{direction}.", config.cell)
            out, layer_cache[direction] = layers.gru_sequence_forward(
                h, w, config.cell, reverse=(direction == "b"))
            outs.append(out)
        h = np.concatenate(outs, axis=2) if len(outs) > 1 else outs[0]
        caches.append(layer_cache)
    return h, caches


def bigru_stack_backward(caches, grad_out, params, config: ModelConfig):
    grads = {}
    hidden = config.gru_units
    g = grad_out
    for layer in range(config.n_gru_layers - 1, -1, -1):
        grad_in = 0.0
        for i, direction in enumerate(config.directions):
            prefix = f"gru{layer}.{direction}."
            w = _cell_weights(params, prefix, config.cell)
            gx, gw = layers.gru_sequence_backward(
                caches[layer][direction], g[:, :, i * hidden:(i + 1) * hidden], w)
            grad_in = grad_in + gx
            for name, value in gw.items():
                grads[prefix + name] = value
        g = grad_in
    return g, grads


def model_backward(cache, grad_logits, params, config: ModelConfig):
    """Gradients of all parameters given d(loss)/d(logits)."""
    grad_logits = np.atleast_2d(grad_logits)
    b, t = cache["shape"]
    grads = {}
    grads["out.W"], grads["out.b"], g_hidden = layers.dense_backward(cache["out"], grad_logits)
    grads["dense.W"], grads["dense.b"], g_summary = layers.dense_backward(cache["dense"], g_hidden)

    d = config.gru_output_dim
    g_seq = np.zeros((b, t, d), dtype=g_summary.dtype)
    if config.temporal_readout == "mean":
        g_seq += (g_summary / t)[:, None, :]
    else:
        g_seq[:, -1] = g_summary

    g_conv, gru_grads = bigru_stack_backward(cache["gru"], g_seq, params, config)
    grads.update(gru_grads)

    n = config.n_filters
    g_basic = g_conv[:, :, :n].reshape(b * t, n)
    grads["conv.basic.W"], grads["conv.basic.b"], _ = layers.conv1d_gmp_backward(
        cache["conv.basic"], g_basic, need_input_grad=False)
    if config.use_imd:
        g_sp = g_conv[:, :, n:].reshape(b * t, n)
        grads["conv.spatial.W"], grads["conv.spatial.b"], _ = layers.conv1d_gmp_backward(
            cache["conv.spatial"], g_sp, need_input_grad=False)
    return grads


def loss_and_grads(basic, spatial, targets, params, config: ModelConfig):
    """Summed BCE over a batch plus the gradient of every parameter."""
    probs, cache = model_forward(basic, spatial, params, config)
    loss, g_logits = layers.bce_loss(np.atleast_2d(probs), np.atleast_2d(targets))
    return loss, model_backward(cache, g_logits, params, config), probs


def check_params(params, config: ModelConfig) -> None:
    expected = param_shapes(config)
    if set(params) != set(expected):
        missing = sorted(set(expected) - set(params))
        extra = sorted(set(params) - set(expected))
        raise ConfigError(f"parameter set mismatch; missing={missing} unexpected={extra}")
    for name, shape in expected.items():
        if params[name].shape != shape:
            raise ConfigError(f"{name} has shape {params[name].shape}, expected {shape}")
        tensor2(params[name], dtype=params[name].dtype)
