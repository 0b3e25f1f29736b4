"""Residue protection primitives: additive and multiplicative Laplace noise, randomized response.

All vector functions consume one draw per element in index order so runs are
reproducible from the stream seed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .numeric import RngStream, sample_laplace

#: L1 sensitivity of the identity on residues in (-1, 1).
RESIDUE_SENSITIVITY = 2.0


@dataclass(frozen=True)
class AddNoiseParams:
    epsilon: float

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ConfigError("epsilon must be > 0")

    @property
    def scale(self) -> float:
        return RESIDUE_SENSITIVITY / self.epsilon


@dataclass(frozen=True)
class MultNoiseParams:
    """Parameters for the multiplicative mechanism.

    ``strict_clipping`` selects the unsigned clip outputs (``b1``/``b2`` with no
    sign); the default keeps the sign of the clipped value.
    """

    epsilon: float
    b1: float = 0.1
    b2: float = 10.0
    strict_clipping: bool = False

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ConfigError("epsilon must be > 0")
        if not 0 < self.b1 <= 1:
            raise ConfigError("b1 must lie in (0, 1]")
        if not self.b2 > 0:
            raise ConfigError("b2 must be > 0")

    @property
    def sensitivity(self) -> float:
        return 2.0 / self.b1

    @property
    def scale(self) -> float:
        return 2.0 * self.b2 / (self.b1 * self.epsilon)


@dataclass(frozen=True)
class RRParams:
    epsilon: float

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ConfigError("epsilon must be > 0")

    @property
    def keep_probability(self) -> float:
        # e^eps / (1 + e^eps) without overflow for large eps
        return 1.0 / (1.0 + math.exp(-self.epsilon))


def m_add(r, params: AddNoiseParams, rng: RngStream):
    """Residue plus Laplace(2/epsilon) noise, elementwise."""
    r = np.asarray(r, dtype=np.float64)
    noise = sample_laplace(params.scale, rng, size=r.shape or None)
    out = r + noise
    return float(out) if out.ndim == 0 else out


def _sign(x):
    # sign with sign(0) = +1 so a zero residue still maps onto the bound
    return np.where(np.asarray(x) < 0, -1.0, 1.0)


def clip1(r, b1: float, strict: bool = False):
    """Push residues with ``|r| <= b1`` out to magnitude ``b1``."""
    r = np.asarray(r, dtype=np.float64)
    bound = np.full_like(r, b1) if strict else _sign(r) * b1
    out = np.where(np.abs(r) <= b1, bound, r)
    return float(out) if out.ndim == 0 else out


def clip2(z, b2: float, strict: bool = False):
    """Cap magnitudes at ``b2``."""
    z = np.asarray(z, dtype=np.float64)
    bound = np.full_like(z, b2) if strict else _sign(z) * b2
    out = np.where(np.abs(z) >= b2, bound, z)
    return float(out) if out.ndim == 0 else out


def mult_noise(params: MultNoiseParams, rng: RngStream, size=None):
    """The multiplicative Laplace factors :func:`m_mult` applies."""
    return sample_laplace(params.scale, rng, size=size)


def m_mult_with_noise(r, noise, params: MultNoiseParams):
    """Deterministic part of the multiplicative mechanism for given noise factors."""
    clipped = clip1(r, params.b1, params.strict_clipping)
    return clip2(np.asarray(clipped) * noise, params.b2, params.strict_clipping)


def m_mult(r, params: MultNoiseParams, rng: RngStream):
    """``clip2(clip1(r) * Lap(2 b2 / (b1 eps)))``, elementwise."""
    r = np.asarray(r, dtype=np.float64)
    noise = mult_noise(params, rng, size=r.shape or None)
    return m_mult_with_noise(r, noise, params)


def random_response(bits, params: RRParams, rng: RngStream) -> np.ndarray:
    """Keep each bit with probability ``e^eps/(1+e^eps)``, otherwise flip it."""
    bits = np.asarray(bits).astype(np.int8)
    keep = rng.uniform(bits.shape) < params.keep_probability
    return np.where(keep, bits, 1 - bits).astype(np.int8)


def add_density_ratio(z, r_i: float, r_j: float, epsilon: float):
    """Density ratio of the additive mechanism's outputs at ``z`` for inputs ``r_i``, ``r_j``."""
    z = np.asarray(z, dtype=np.float64)
    return np.exp(epsilon * (np.abs(z - r_j) - np.abs(z - r_i)) / RESIDUE_SENSITIVITY)


def mult_density_ratio(z, r_i: float, r_j: float, params: MultNoiseParams):
    """Ratio bound term of the multiplicative mechanism for clipped inputs ``r_i``, ``r_j``."""
    z = np.asarray(z, dtype=np.float64)
    delta = params.sensitivity
    return np.exp(params.epsilon * (np.abs(z / r_j) - np.abs(z / r_i)) / (params.b2 * delta))
