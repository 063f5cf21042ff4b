"""Kernel functions and bandwidth rules for the Nadaraya-Watson machinery."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import quad

from .errors import ConfigError


@dataclass(frozen=True)
class KernelSpec:
    """A kernel ``K`` with its order and precomputed L2 norm.

    ``order`` is the largest ``n0`` with vanishing moments
    ``int x^k K(x) dx = 0`` for ``k = 1..n0``.  ``support`` is the radius of
    the support (``inf`` for the Gaussian).
    """

    name: str
    fn: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    order: int
    support: float
    l2_norm_sq: float

    def __call__(self, x) -> np.ndarray:
        return self.fn(np.asarray(x, dtype=np.float64))

    def moment(self, k: int) -> float:
        """Numeric moment ``int x^k K(x) dx``."""
        lim = 40.0 if math.isinf(self.support) else self.support
        val, _ = quad(lambda t: t ** k * float(self.fn(np.float64(t))), -lim, lim,
                      limit=200)
        return val


def _gaussian(x: np.ndarray) -> np.ndarray:
    return np.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)


def _epanechnikov(x: np.ndarray) -> np.ndarray:
    return np.where(np.abs(x) <= 1.0, 0.75 * (1.0 - x * x), 0.0)


GAUSSIAN = KernelSpec("gaussian", _gaussian, order=1, support=math.inf,
                      l2_norm_sq=1.0 / (2.0 * math.sqrt(math.pi)))
EPANECHNIKOV = KernelSpec("epanechnikov", _epanechnikov, order=1, support=1.0,
                          l2_norm_sq=3.0 / 5.0)

_KERNELS = {k.name: k for k in (GAUSSIAN, EPANECHNIKOV)}


def get_kernel(name: str) -> KernelSpec:
    try:
        return _KERNELS[name.lower()]
    except KeyError:
        raise ConfigError(
            f"unknown kernel {name!r}; available: {sorted(_KERNELS)}"
        ) from None


@dataclass(frozen=True)
class BandwidthRule:
    """Bandwidth ``h(N) = constant * N**(-exponent)``.

    ``N`` is the nominal number of observed parent nodes; the default
    exponent 1/5 is the rate-optimal ``1/(2*beta+1)`` at smoothness
    ``beta = 2``.
    """

    exponent: float = 0.2
    constant: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.exponent < 1.0:
            raise ConfigError(f"bandwidth exponent must be in (0,1), got {self.exponent}")
        if self.constant <= 0.0:
            raise ConfigError(f"bandwidth constant must be > 0, got {self.constant}")

    def __call__(self, n_nodes: int | float) -> float:
        if n_nodes <= 0:
            raise ConfigError("bandwidth needs a positive node count")
        return self.constant * float(n_nodes) ** (-self.exponent)


def silverman_constant(values: np.ndarray) -> float:
    """Rule-of-thumb bandwidth constant ``0.9 * min(sd, IQR/1.34)``.

    Pairs with the ``N**-1/5`` exponent; intended for ingested real data
    where no natural scale is known a priori.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.size < 2:
        raise ConfigError("Silverman constant needs at least 2 observations")
    sd = float(np.std(values))
    q75, q25 = np.percentile(values, [75.0, 25.0])
    spread = min(sd, (q75 - q25) / 1.34)
    if spread <= 0.0:
        raise ConfigError("degenerate sample: zero spread")
    return 0.9 * spread
