"""Gaussian noise scenarios: pixel noise on normalized images, angle noise on rotation gates.

All randomness comes from keyed Philox streams so that a draw depends only on
(seed, key...) and never on evaluation order.
"""
from __future__ import annotations

import math
import zlib
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

SCENARIOS = ("clean", "image", "gate", "hybrid")
DEFAULT_IMAGE_SIGMA = 0.03
DEFAULT_GATE_SIGMA = 0.02


def _key_int(k) -> int:
    if isinstance(k, (int, np.integer)):
        if k < 0:
            raise ValueError(f"negative stream key {k}")
        return int(k)
    return zlib.crc32(str(k).encode("utf-8"))


def keyed_rng(seed: int, *keys) -> np.random.Generator:
    """Philox generator for the stream identified by ``(seed, *keys)``.

    String keys are hashed with CRC-32, integers are used verbatim; the key
    tuple becomes the SeedSequence spawn key.
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(_key_int(k) for k in keys))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class NoiseSpec:
    image_sigma: float = 0.0
    gate_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        for name in ("image_sigma", "gate_sigma"):
            s = getattr(self, name)
            if not math.isfinite(s) or s < 0:
                raise ConfigError(f"{name} must be finite and >= 0, got {s}")

    @classmethod
    def scenario(cls, name: str, seed: int, image_sigma: float = DEFAULT_IMAGE_SIGMA, gate_sigma: float = DEFAULT_GATE_SIGMA) -> "NoiseSpec":
        table = {
            "clean": (0.0, 0.0),
            "image": (image_sigma, 0.0),
            "gate": (0.0, gate_sigma),
            "hybrid": (image_sigma, gate_sigma),
        }
        if name not in table:
            raise ConfigError(f"unknown noise scenario {name!r}; expected one of {SCENARIOS}")
        i, g = table[name]
        return cls(i, g, seed)


def add_image_noise(image: np.ndarray, sigma: float, rng: np.random.Generator) -> np.ndarray:
    """Add pixel-wise N(0, sigma) noise, then min-max rescale back to [0, 1]."""
    from .preprocess import minmax_normalize

    if sigma < 0 or not math.isfinite(sigma):
        raise ConfigError(f"image sigma must be >= 0, got {sigma}")
    image = np.asarray(image, dtype=np.float64)
    if sigma == 0:
        return minmax_normalize(image)
    return minmax_normalize(image + rng.normal(0.0, sigma, size=image.shape))


def perturb_angle(angle, sigma: float, rng: np.random.Generator | None):
    """``angle`` plus an N(0, sigma) draw of the same shape; identity when sigma is 0."""
    if sigma == 0:
        return angle
    if rng is None:
        raise ConfigError("gate noise requested without an rng")
    return angle + rng.normal(0.0, sigma, size=np.shape(angle))
