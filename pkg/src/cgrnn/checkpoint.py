"""Binary checkpoint format.

Layout (little-endian)::

    b"CGRN"  u32 version
    u32 config length, UTF-8 ``key=value`` lines (model config + extras)
    u32 group count
    per group: u16 name length, name bytes, u32 rows, u32 cols, float32 data

Normalisation statistics are stored as ordinary groups under ``norm.*``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError
from .features import Normalizer
from .model import ModelConfig, check_params, param_shapes

MAGIC = b"CGRN"
VERSION = 1


@dataclass
class Checkpoint:
    config: ModelConfig
    params: dict[str, np.ndarray]
    normalizers: dict[str, Normalizer] = field(default_factory=dict)
    extras: dict[str, str] = field(default_factory=dict)

    def quantized(self) -> "Checkpoint":
        """Copy with parameters rounded to float32, as stored on disk."""
        params = {k: v.astype(np.float32).astype(self.config.dtype) for k, v in self.params.items()}
        norms = {k: Normalizer(n.mean.astype(np.float32).astype(np.float64),
                               n.std.astype(np.float32).astype(np.float64))
                 for k, n in self.normalizers.items()}
        return Checkpoint(self.config, params, norms, dict(self.extras))


def _config_text(ckpt: Checkpoint) -> str:
    lines = [f"{k}={'' if v is None else v}" for k, v in ckpt.config.to_dict().items()]
    lines += [f"extra.{k}={v}" for k, v in ckpt.extras.items()]
    return "\n".join(lines) + "\n"


def encode(ckpt: Checkpoint) -> bytes:
    groups = list(ckpt.params.items())
    for stream, norm in ckpt.normalizers.items():
        groups.append((f"norm.{stream}.mean", norm.mean.reshape(1, -1)))
        groups.append((f"norm.{stream}.std", norm.std.reshape(1, -1)))
    text = _config_text(ckpt).encode("utf-8")
    parts = [MAGIC, struct.pack("<I", VERSION), struct.pack("<I", len(text)), text,
             struct.pack("<I", len(groups))]
    for name, value in groups:
        raw = name.encode("utf-8")
        value = np.atleast_2d(value)
        parts.append(struct.pack("<H", len(raw)) + raw)
        parts.append(struct.pack("<II", *value.shape))
        parts.append(np.ascontiguousarray(value, dtype="<f4").tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, blob):
        self.blob = blob
        self.pos = 0

    def take(self, n, what):
        if self.pos + n > len(self.blob):
            raise FormatError(f"checkpoint truncated while reading {what}", offset=self.pos)
        chunk = self.blob[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt, what):
        s = struct.Struct(fmt)
        return s.unpack(self.take(s.size, what))


def decode(blob: bytes) -> Checkpoint:
    r = _Reader(blob)
    if r.take(4, "magic") != MAGIC:
        raise FormatError("bad checkpoint magic", offset=0)
    (version,) = r.unpack("<I", "version")
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}", offset=4)
    (text_len,) = r.unpack("<I", "config length")
    text = r.take(text_len, "config block").decode("utf-8")
    model_kv, extras = {}, {}
    for line in text.splitlines():
        if not line.strip():
            continue
        key, _, value = line.partition("=")
        if key.startswith("extra."):
            extras[key[len("extra."):]] = value
        else:
            model_kv[key] = value
    config = ModelConfig.from_dict(model_kv)
    (count,) = r.unpack("<I", "group count")
    params, norm_parts = {}, {}
    for _ in range(count):
        (name_len,) = r.unpack("<H", "group name length")
        name = r.take(name_len, "group name").decode("utf-8")
        rows, cols = r.unpack("<II", f"shape of {name}")
        data = np.frombuffer(r.take(4 * rows * cols, f"data of {name}"), dtype="<f4")
        value = data.reshape(rows, cols).astype(config.dtype)
        if name.startswith("norm."):
            norm_parts[name] = value.astype(np.float64).reshape(-1)
        else:
            params[name] = value
    if r.pos != len(blob):
        raise FormatError("trailing bytes after last parameter group", offset=r.pos)
    missing = set(param_shapes(config)) - set(params)
    if missing:
        raise FormatError(f"checkpoint lacks parameter groups {sorted(missing)}")
    check_params(params, config)
    normalizers = {}
    for stream in sorted({n.split(".")[1] for n in norm_parts}):
        normalizers[stream] = Normalizer(norm_parts[f"norm.{stream}.mean"],
                                          norm_parts[f"norm.{stream}.std"])
    return Checkpoint(config, params, normalizers, extras)


def save_checkpoint(path, ckpt: Checkpoint) -> None:
    with open(path, "wb") as fh:
        fh.write(encode(ckpt))


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        return decode(fh.read())
