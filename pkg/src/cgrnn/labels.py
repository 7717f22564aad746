"""The seven-event label alphabet of the domestic tagging task."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import LabelError

ALPHABET = ("b", "c", "f", "m", "o", "p", "v")
# order of model outputs and report columns
TAG_ORDER = ("c", "m", "f", "v", "p", "b", "o")
DESCRIPTIONS = {
    "b": "broadband noise",
    "c": "child speech",
    "f": "adult female speech",
    "m": "adult male speech",
    "o": "other identifiable sounds",
    "p": "percussive sound events",
    "v": "TV sounds or video games",
}


@dataclass(frozen=True)
class LabelSet:
    """Bitmask over :data:`ALPHABET`; the empty set is allowed."""

    mask: int = 0

    @classmethod
    def from_string(cls, text: str) -> "LabelSet":
        mask = 0
        for ch in text.strip():
            if ch not in ALPHABET:
                raise LabelError(f"unknown tag letter {ch!r}")
            mask |= 1 << ALPHABET.index(ch)
        return cls(mask)

    @classmethod
    def from_vector(cls, vec, order=TAG_ORDER) -> "LabelSet":
        return cls.from_string("".join(t for t, v in zip(order, vec) if v))

    def __contains__(self, tag: str) -> bool:
        return tag in ALPHABET and bool(self.mask >> ALPHABET.index(tag) & 1)

    def __str__(self) -> str:
        return "".join(t for t in ALPHABET if t in self)

    def __len__(self) -> int:
        return bin(self.mask).count("1")

    def vector(self, order=TAG_ORDER) -> np.ndarray:
        return np.array([1.0 if t in self else 0.0 for t in order])
