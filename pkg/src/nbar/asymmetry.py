"""Wald-type test for asymmetry between the two autoregressive functions.

The statistic accumulates ``nu_hat(x_l) * (f0_bar(x_l) - f1_bar(x_l))**2``
over a finite grid of distinct points, normalized so that it is
asymptotically chi-squared with one degree of freedom per grid point when
the two functions coincide there.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy.special import gammaincc, ndtri

from .errors import ConfigError, DataError
from .estimators import (
    BierensConfig,
    EstimatorConfig,
    NoiseCovarianceEstimate,
    estimate_bierens,
    estimate_invariant_density,
    estimate_noise_covariance,
    nominal_parent_count,
)
from .kernels import BandwidthRule
from .models import NoiseModel
from .trees import BinaryTreeData


def chi2_sf(w: float, k: int) -> float:
    """Upper-tail probability of the chi-squared law with ``k`` degrees."""
    if w < 0:
        raise ConfigError(f"statistic must be >= 0, got {w}")
    if k < 1:
        raise ConfigError(f"degrees of freedom must be >= 1, got {k}")
    return float(gammaincc(k / 2.0, w / 2.0))


def normal_quantile(p: float) -> float:
    if not 0.0 < p < 1.0:
        raise ConfigError(f"quantile level must be in (0,1), got {p}")
    return float(ndtri(p))


@dataclass(frozen=True)
class TestGrid:
    """Distinct, strictly increasing evaluation points."""

    __test__ = False  # not a pytest collection target

    points: tuple[float, ...]

    def __post_init__(self):
        pts = self.points
        if len(pts) < 1:
            raise ConfigError("test grid needs at least one point")
        if any(b <= a for a, b in zip(pts, pts[1:])):
            raise ConfigError("test grid points must be strictly increasing")

    @classmethod
    def from_points(cls, points: Sequence[float]) -> "TestGrid":
        return cls(tuple(float(p) for p in points))

    @classmethod
    def from_step(cls, lo: float, hi: float, step: float) -> "TestGrid":
        if step <= 0:
            raise ConfigError(f"grid step must be > 0, got {step}")
        count = int(math.floor((hi - lo) / step * (1.0 + 1e-12))) + 1
        return cls(tuple(lo + j * step for j in range(count)))

    @property
    def k(self) -> int:
        return len(self.points)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.points, dtype=np.float64)


@dataclass(frozen=True)
class VarianceInputs:
    """Noise second moments entering the statistic's normalization."""

    sigma0_sq: float
    sigma1_sq: float
    rho: float
    source: str  # "known" | "estimated"

    @property
    def scale(self) -> float:
        return (self.sigma0_sq + self.sigma1_sq
                - 2.0 * math.sqrt(self.sigma0_sq * self.sigma1_sq) * self.rho)


def _resolve_variance(tree: BinaryTreeData, config: EstimatorConfig,
                      bierens: BierensConfig, variance) -> VarianceInputs:
    if variance is None or (isinstance(variance, str) and variance == "estimate"):
        est = estimate_noise_covariance(
            tree, config, h=bierens.h_a(nominal_parent_count(tree)))
        if est.rho is None:
            raise DataError("variance estimation failed: correlation undefined")
        return VarianceInputs(est.sigma0_sq, est.sigma1_sq, est.rho, "estimated")
    if isinstance(variance, VarianceInputs):
        return variance
    if isinstance(variance, NoiseModel):
        return VarianceInputs(variance.sigma0 ** 2, variance.sigma1 ** 2,
                              variance.rho, "known")
    if isinstance(variance, NoiseCovarianceEstimate):
        if variance.rho is None:
            raise DataError("estimated covariance has undefined correlation")
        return VarianceInputs(variance.sigma0_sq, variance.sigma1_sq,
                              variance.rho, "estimated")
    try:
        s0, s1, rho = variance
    except (TypeError, ValueError):
        raise ConfigError(f"cannot interpret variance inputs {variance!r}") from None
    return VarianceInputs(float(s0) ** 2, float(s1) ** 2, float(rho), "known")


@dataclass
class TestResult:
    statistic: float
    k: int
    p_value: float
    level: float
    reject: bool
    contributions: np.ndarray
    grid: TestGrid
    variance: VarianceInputs

    def to_dict(self) -> dict:
        return {
            "statistic": self.statistic,
            "k": self.k,
            "p_value": self.p_value,
            "level": self.level,
            "reject": self.reject,
            "grid": list(self.grid.points),
            "contributions": [float(c) for c in self.contributions],
            "sigma0_sq": self.variance.sigma0_sq,
            "sigma1_sq": self.variance.sigma1_sq,
            "rho": self.variance.rho,
            "variance_source": self.variance.source,
        }


def wald_statistic(tree: BinaryTreeData, config: EstimatorConfig,
                   bierens: BierensConfig, grid: TestGrid,
                   variance=None) -> tuple[float, np.ndarray, VarianceInputs]:
    """The asymmetry statistic, its per-point contributions and the
    variance inputs used.

    ``variance`` may be a NoiseModel / (sigma0, sigma1, rho) triple (known
    covariance) or ``"estimate"``/None to plug in the residual estimates.
    """
    var = _resolve_variance(tree, config, bierens, variance)
    n_nodes = nominal_parent_count(tree)
    xs = grid.as_array()
    f0, f1, flags = estimate_bierens(tree, config, bierens, xs)
    dens_cfg = replace(config, bandwidth=BandwidthRule(
        exponent=1.0 / (2 * bierens.beta + 1), constant=bierens.const_a))
    nu = estimate_invariant_density(tree, dens_cfg, xs)
    flags = np.asarray(flags)
    if np.any(flags):
        bad = ", ".join(f"{p:g}" for p in xs[flags])
        raise DataError(f"estimator undefined at grid points: {bad}")
    contributions = np.asarray(nu) * (np.asarray(f0) - np.asarray(f1)) ** 2
    rate = float(n_nodes) ** (2.0 * bierens.rate_exponent())
    scale = var.scale * config.kernel.l2_norm_sq
    if scale <= 0:
        raise DataError("non-positive variance scale in the statistic")
    statistic = rate / scale * float(np.sum(contributions))
    return statistic, contributions, var


def asymmetry_test(tree: BinaryTreeData, config: EstimatorConfig,
                   bierens: BierensConfig, grid: TestGrid,
                   level: float = 0.05, variance=None) -> TestResult:
    """Run the asymmetry test at the given asymptotic level."""
    if not 0.0 < level < 1.0:
        raise ConfigError(f"level must be in (0,1), got {level}")
    statistic, contributions, var = wald_statistic(tree, config, bierens, grid,
                                                   variance)
    p_value = chi2_sf(statistic, grid.k)
    return TestResult(statistic=statistic, k=grid.k, p_value=p_value,
                      level=level, reject=p_value < level,
                      contributions=contributions, grid=grid, variance=var)


@dataclass(frozen=True)
class PointwiseInterval:
    """Asymptotic confidence intervals for (f0(x), f1(x)) at one point."""

    x: float
    center0: float
    center1: float
    half_width0: float
    half_width1: float

    def interval(self, iota: int) -> tuple[float, float]:
        c = (self.center0, self.center1)[iota]
        hw = (self.half_width0, self.half_width1)[iota]
        return c - hw, c + hw


def pointwise_confidence_interval(tree: BinaryTreeData, config: EstimatorConfig,
                                  bierens: BierensConfig, x: float,
                                  level: float = 0.05,
                                  variance=None) -> PointwiseInterval:
    """Intervals centered at the debiased estimates with half-width
    ``z * sqrt(|K|_2^2 * sigma_iota^2 / nu_hat(x)) / N**(beta/(2 beta+1))``.
    ``level`` is the significance level (0.05 gives 95% intervals)."""
    if not 0.0 < level <= 1.0:
        raise ConfigError(f"level must be in (0,1], got {level}")
    var = _resolve_variance(tree, config, bierens, variance)
    n_nodes = nominal_parent_count(tree)
    f0, f1, flagged = estimate_bierens(tree, config, bierens, x)
    if flagged:
        raise DataError(f"debiased estimate undefined at x={x}")
    dens_cfg = replace(config, bandwidth=BandwidthRule(
        exponent=1.0 / (2 * bierens.beta + 1), constant=bierens.const_a))
    nu = float(estimate_invariant_density(tree, dens_cfg, x))
    if nu <= 0.0:
        raise DataError(f"density estimate vanishes at x={x}")
    z = 0.0 if level == 1.0 else normal_quantile(1.0 - level / 2.0)
    rate = float(n_nodes) ** bierens.rate_exponent()
    base = math.sqrt(config.kernel.l2_norm_sq / nu) / rate
    return PointwiseInterval(
        x=float(x), center0=float(f0), center1=float(f1),
        half_width0=z * base * math.sqrt(var.sigma0_sq),
        half_width1=z * base * math.sqrt(var.sigma1_sq),
    )
