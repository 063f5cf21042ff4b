"""Kernel estimators on tree data: invariant density, autoregressive pair,
recursive and debiased variants, and the noise covariance.

All estimators index the parents over T_n with ``n = depth - 1``.  With
missing nodes, each sum runs over the complete pairs only and is normalized
by the number of terms actually summed, which reduces to the textbook
normalization ``|T_n|`` on full trees.  Grid points where a denominator
vanishes (possible for compact-support kernels) are returned as NaN and
flagged, never interpolated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .errors import ConfigError, DataError
from .kernels import GAUSSIAN, BandwidthRule, KernelSpec
from .trees import BinaryTreeData, generation_size

#: max entries of a kernel weight block (grid chunk x parents)
_BLOCK_ENTRIES = 4_000_000


@dataclass(frozen=True)
class GridSpec:
    """Regular evaluation grid ``lo + j*step <= hi``.

    ``step=None`` selects the mesh ``N**-1/2`` from the observed parent
    count, the mesh used throughout the simulation studies.
    """

    lo: float = -3.0
    hi: float = 3.0
    step: float | None = None

    def __post_init__(self):
        if self.hi < self.lo:
            raise ConfigError(f"empty grid: [{self.lo}, {self.hi}]")
        if self.step is not None and self.step <= 0:
            raise ConfigError(f"grid step must be > 0, got {self.step}")

    def resolve_step(self, n_nodes: int) -> float:
        if self.step is not None:
            return self.step
        if n_nodes <= 0:
            raise ConfigError("auto mesh needs a positive node count")
        return float(n_nodes) ** -0.5

    def points(self, n_nodes: int = 0) -> np.ndarray:
        step = self.resolve_step(n_nodes)
        count = int(math.floor((self.hi - self.lo) / step * (1.0 + 1e-12))) + 1
        return self.lo + step * np.arange(count)


@dataclass(frozen=True)
class EstimatorConfig:
    """Kernel, bandwidth rule, denominator threshold and evaluation grid."""

    kernel: KernelSpec = GAUSSIAN
    bandwidth: BandwidthRule = field(default_factory=BandwidthRule)
    threshold: float = 0.0
    grid: GridSpec = field(default_factory=GridSpec)

    def __post_init__(self):
        if self.threshold < 0.0:
            raise ConfigError(f"threshold must be >= 0, got {self.threshold}")


@dataclass(frozen=True)
class BierensConfig:
    """Two-bandwidth debiasing parameters.

    The pilot pair uses ``h_a = const_a * N**(-1/(2*beta+1))`` and
    ``h_b = const_b * N**(-delta/(2*beta+1))``; the debiased estimate is
    ``(f_a - w*f_b) / (1-w)`` with weight
    ``w = N**(-beta*(1-delta)/(2*beta+1))``.
    """

    beta: int = 2
    delta: float = 0.5
    const_a: float = 1.0
    const_b: float = 1.0

    def __post_init__(self):
        if self.beta < 1 or int(self.beta) != self.beta:
            raise ConfigError(f"beta must be an integer >= 1, got {self.beta}")
        if not 0.0 < self.delta < 1.0:
            raise ConfigError(f"delta must be in (0,1), got {self.delta}")
        if self.const_a <= 0 or self.const_b <= 0:
            raise ConfigError("bandwidth constants must be > 0")

    def h_a(self, n_nodes: int) -> float:
        return self.const_a * float(n_nodes) ** (-1.0 / (2 * self.beta + 1))

    def h_b(self, n_nodes: int) -> float:
        return self.const_b * float(n_nodes) ** (-self.delta / (2 * self.beta + 1))

    def weight(self, n_nodes: int) -> float:
        return float(n_nodes) ** (-self.beta * (1.0 - self.delta) / (2 * self.beta + 1))

    def rate_exponent(self) -> float:
        return self.beta / (2.0 * self.beta + 1.0)


@dataclass
class CurveEstimate:
    """Pointwise estimates over a grid with per-point failure flags."""

    x: np.ndarray
    nu: np.ndarray
    f0: np.ndarray
    f1: np.ndarray
    flags: np.ndarray
    kind: str
    meta: dict

    def flagged_points(self) -> np.ndarray:
        return self.x[self.flags]


@dataclass(frozen=True)
class NoiseCovarianceEstimate:
    """Residual-based second moments; ``rho`` is None when undefined."""

    sigma0_sq: float
    sigma1_sq: float
    rho: float | None
    n_pairs: tuple[int, int]
    n_twin: int

    def wald_denominator_scale(self) -> float:
        if self.rho is None:
            raise DataError("correlation undefined: a residual variance is zero")
        s0, s1 = math.sqrt(self.sigma0_sq), math.sqrt(self.sigma1_sq)
        return self.sigma0_sq + self.sigma1_sq - 2.0 * s0 * s1 * self.rho


def parent_generation(tree: BinaryTreeData) -> int:
    if tree.depth < 1:
        raise DataError("tree of depth 0 has no parent-child pairs")
    return tree.depth - 1


def nominal_parent_count(tree: BinaryTreeData) -> int:
    """Observed node count over T_{depth-1}; equals |T_n| on full trees."""
    return tree.observed_count(parent_generation(tree))


def _kernel_pass(kernel: KernelSpec, h: float, xs: np.ndarray,
                 centers: np.ndarray, weight_vectors: list[np.ndarray],
                 block_size: int | None = None
                 ) -> tuple[np.ndarray, list[np.ndarray]]:
    """One pass over the kernel weight matrix K_h(x - center).

    Returns the plain row sums and, for every weight vector, the weighted
    row sums, as extended-precision arrays.  Kernel values are computed in
    float64; the accumulation runs in long double so that cancellation in
    mixed-sign numerators stays far below the float64 result's precision.
    Each grid point's sums come from a single contiguous pass over the
    centers, so chunking the grid cannot change any value.
    """
    xs = np.atleast_1d(np.asarray(xs, dtype=np.float64))
    plain = np.zeros(xs.size, dtype=np.longdouble)
    weighted = [np.zeros(xs.size, dtype=np.longdouble) for _ in weight_vectors]
    if centers.size == 0:
        return plain, weighted
    if block_size is None:
        block_size = max(1, _BLOCK_ENTRIES // max(1, centers.size))
    wide_vectors = [np.asarray(wv, dtype=np.longdouble) for wv in weight_vectors]
    for start in range(0, xs.size, block_size):
        chunk = xs[start:start + block_size]
        w = kernel((chunk[:, None] - centers[None, :]) / h) / h
        wide = w.astype(np.longdouble)
        plain[start:start + block_size] = wide.sum(axis=1)
        for out, wv in zip(weighted, wide_vectors):
            out[start:start + block_size] = wide @ wv
    return plain, weighted


def _kernel_sums(kernel: KernelSpec, h: float, xs: np.ndarray,
                 centers: np.ndarray,
                 block_size: int | None = None) -> np.ndarray:
    return _kernel_pass(kernel, h, xs, centers, [], block_size)[0].astype(np.float64)


def estimate_invariant_density(tree: BinaryTreeData, config: EstimatorConfig,
                               x, block_size: int | None = None) -> np.ndarray:
    """Kernel density of the stationary trait law, from all observed parents."""
    n = parent_generation(tree)
    obs = tree.values_up_to(n)
    if obs.size == 0:
        raise DataError("no observed nodes over the parent generations")
    h = config.bandwidth(nominal_parent_count(tree))
    scalar = np.isscalar(x) or np.ndim(x) == 0
    vals = _kernel_sums(config.kernel, h, x, obs, block_size=block_size) / obs.size
    return float(vals[0]) if scalar else vals


def _threshold_ratio(num: np.ndarray, den: np.ndarray,
                     threshold: float) -> tuple[np.ndarray, np.ndarray]:
    den = np.maximum(den, np.longdouble(threshold))
    flags = den == 0.0
    safe = np.where(flags, np.longdouble(1.0), den)
    est = np.where(flags, np.longdouble(np.nan), num / safe)
    return est.astype(np.float64), flags


def _nw_ratio(kernel: KernelSpec, h: float, xs: np.ndarray,
              parents: np.ndarray, children: np.ndarray, threshold: float,
              block_size: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Nadaraya-Watson ratio and its failure flags over the grid."""
    count = parents.size
    den_sum, (num_sum,) = _kernel_pass(kernel, h, xs, parents, [children],
                                       block_size)
    return _threshold_ratio(num_sum / count, den_sum / count, threshold)


def estimate_autoregression(tree: BinaryTreeData, config: EstimatorConfig,
                            x, h=None,
                            block_size: int | None = None
                            ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Plain Nadaraya-Watson estimates (f0_hat, f1_hat, flags) at ``x``.

    ``h`` overrides the config bandwidth: a scalar applies to both types,
    a ``(h0, h1)`` pair smooths each type with its own bandwidth.
    """
    n = parent_generation(tree)
    if h is None:
        h = config.bandwidth(nominal_parent_count(tree))
    h0, h1 = (h, h) if np.ndim(h) == 0 else (float(h[0]), float(h[1]))
    scalar = np.isscalar(x) or np.ndim(x) == 0
    xs = np.atleast_1d(np.asarray(x, dtype=np.float64))
    if h0 == h1 and tree.is_full(n + 1):
        # all pair sets share the parent array: one matrix pass serves both
        parents = tree.values_up_to(n)
        children = [tree.pairs(iota, n)[1] for iota in (0, 1)]
        den_sum, nums = _kernel_pass(config.kernel, h0, xs, parents, children,
                                     block_size)
        count = parents.size
        f0, fl0 = _threshold_ratio(nums[0] / count, den_sum / count,
                                   config.threshold)
        f1, fl1 = _threshold_ratio(nums[1] / count, den_sum / count,
                                   config.threshold)
        flags = fl0 | fl1
    else:
        estimates = []
        flags = np.zeros(xs.size, dtype=bool)
        for iota, h_iota in ((0, h0), (1, h1)):
            parents, children = tree.pairs(iota, n)
            if parents.size == 0:
                raise DataError(f"no complete type-{iota} pairs in the tree")
            est, fl = _nw_ratio(config.kernel, h_iota, xs, parents, children,
                                config.threshold, block_size)
            estimates.append(est)
            flags |= fl
        f0, f1 = estimates
    if scalar:
        return float(f0[0]), float(f1[0]), bool(flags[0])
    return f0, f1, flags


def estimate_recursive(tree: BinaryTreeData, kernel: KernelSpec, alpha: float,
                       x, block_size: int | None = None
                       ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Recursive variant: generation ``m`` contributes with its own
    bandwidth ``h_m = |G_m|**-alpha``; a single ratio of the accumulated
    numerator and denominator, no threshold."""
    if not 0.0 < alpha < 1.0:
        raise ConfigError(f"alpha must be in (0,1), got {alpha}")
    n = parent_generation(tree)
    scalar = np.isscalar(x) or np.ndim(x) == 0
    xs = np.atleast_1d(np.asarray(x, dtype=np.float64))
    out = []
    flags = np.zeros(xs.size, dtype=bool)
    for iota in (0, 1):
        num = np.zeros(xs.size, dtype=np.longdouble)
        den = np.zeros(xs.size, dtype=np.longdouble)
        total = 0
        for m in range(n + 1):
            parents, children = tree.generation_pairs(iota, m)
            if parents.size == 0:
                continue
            total += parents.size
            h_m = float(generation_size(m)) ** -alpha
            den_sum, (num_sum,) = _kernel_pass(kernel, h_m, xs, parents,
                                               [children], block_size)
            num += num_sum
            den += den_sum
        if total == 0:
            raise DataError(f"no complete type-{iota} pairs in the tree")
        fl = den == 0.0
        est = np.where(fl, np.longdouble(np.nan),
                       num / np.where(fl, np.longdouble(1.0), den))
        out.append(est.astype(np.float64))
        flags |= fl
    f0, f1 = out
    if scalar:
        return float(f0[0]), float(f1[0]), bool(flags[0])
    return f0, f1, flags


def estimate_bierens(tree: BinaryTreeData, config: EstimatorConfig,
                     bierens: BierensConfig, x,
                     block_size: int | None = None
                     ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Debiased pair: the two-bandwidth affine combination cancels the
    leading smoothing bias while keeping the pilot rate.  NaN from either
    sub-estimate propagates."""
    n_nodes = nominal_parent_count(tree)
    w = bierens.weight(n_nodes)
    if w >= 1.0:
        raise DataError("debiasing weight is degenerate: need >= 2 observed parents")
    f0_a, f1_a, fl_a = estimate_autoregression(tree, config, x,
                                               h=bierens.h_a(n_nodes),
                                               block_size=block_size)
    f0_b, f1_b, fl_b = estimate_autoregression(tree, config, x,
                                               h=bierens.h_b(n_nodes),
                                               block_size=block_size)
    scale = 1.0 / (1.0 - w)
    f0 = scale * (np.asarray(f0_a) - w * np.asarray(f0_b))
    f1 = scale * (np.asarray(f1_a) - w * np.asarray(f1_b))
    flags = np.asarray(fl_a) | np.asarray(fl_b)
    if np.ndim(x) == 0:
        return float(f0), float(f1), bool(flags)
    return f0, f1, flags


def evaluate_curve(tree: BinaryTreeData, config: EstimatorConfig,
                   kind: str = "plain", bierens: BierensConfig | None = None,
                   alpha: float | None = None,
                   block_size: int | None = None) -> CurveEstimate:
    """Apply the chosen pointwise estimator on the configured grid."""
    n_nodes = nominal_parent_count(tree)
    xs = config.grid.points(n_nodes)
    nu = estimate_invariant_density(tree, config, xs, block_size=block_size)
    meta: dict = {"n_nodes": n_nodes, "parent_generation": parent_generation(tree),
                  "kernel": config.kernel.name, "threshold": config.threshold}
    if kind == "plain":
        f0, f1, flags = estimate_autoregression(tree, config, xs,
                                                block_size=block_size)
        meta["h"] = config.bandwidth(n_nodes)
    elif kind == "recursive":
        alpha = config.bandwidth.exponent if alpha is None else alpha
        f0, f1, flags = estimate_recursive(tree, config.kernel, alpha, xs,
                                           block_size=block_size)
        meta["alpha"] = alpha
    elif kind == "bierens":
        bierens = bierens or BierensConfig()
        f0, f1, flags = estimate_bierens(tree, config, bierens, xs,
                                         block_size=block_size)
        # density bandwidth matches the pilot bandwidth of the debiased pair
        dens_cfg = replace(config, bandwidth=BandwidthRule(
            exponent=1.0 / (2 * bierens.beta + 1), constant=bierens.const_a))
        nu = estimate_invariant_density(tree, dens_cfg, xs, block_size=block_size)
        meta.update({"h_a": bierens.h_a(n_nodes), "h_b": bierens.h_b(n_nodes),
                     "weight": bierens.weight(n_nodes), "beta": bierens.beta,
                     "delta": bierens.delta})
    else:
        raise ConfigError(f"unknown estimator kind {kind!r}")
    return CurveEstimate(x=xs, nu=nu, f0=np.asarray(f0), f1=np.asarray(f1),
                         flags=np.asarray(flags), kind=kind, meta=meta)


def _predictor_from_curve(curve: CurveEstimate) -> Callable:
    good = ~curve.flags
    if not np.any(good):
        raise DataError("curve has no valid points to interpolate")
    xs, f0, f1 = curve.x[good], curve.f0[good], curve.f1[good]

    def predict(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return np.interp(values, xs, f0), np.interp(values, xs, f1)

    return predict


def estimate_noise_covariance(tree: BinaryTreeData,
                              config: EstimatorConfig | None = None,
                              predictor: Callable | None = None,
                              curve: CurveEstimate | None = None,
                              h: float | None = None,
                              block_size: int | None = None
                              ) -> NoiseCovarianceEstimate:
    """Second moments of the empirical residuals ``child - f_hat(parent)``.

    The fitted values come from ``predictor`` (a callable mapping parent
    values to the two fitted arrays), from interpolating ``curve``, or by
    default from the plain estimator under ``config``.  The correlation
    averages over parents with both children observed and is ``None`` when
    a residual variance vanishes.
    """
    n = parent_generation(tree)
    if predictor is None and curve is not None:
        predictor = _predictor_from_curve(curve)
    if predictor is None:
        cfg = config or EstimatorConfig()

        def predictor(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
            f0, f1, flags = estimate_autoregression(tree, cfg, values, h=h,
                                                    block_size=block_size)
            if np.any(flags):
                raise DataError("fitted values undefined at some parent traits")
            return np.asarray(f0), np.asarray(f1)

    pair_data = [tree.pairs(iota, n) for iota in (0, 1)]
    for iota in (0, 1):
        if pair_data[iota][0].size == 0:
            raise DataError(f"no complete type-{iota} pairs in the tree")
    tw_parents, tw_c0, tw_c1 = tree.twin_pairs(n)

    # the three parent arrays coincide on full trees: fit each distinct one once
    fit_cache: list[tuple[np.ndarray, tuple]] = []

    def fitted_for(parents: np.ndarray) -> tuple:
        for key, res in fit_cache:
            if key.shape == parents.shape and np.array_equal(key, parents):
                return res
        res = predictor(parents)
        fit_cache.append((parents, res))
        return res

    sigma_sq = []
    counts = []
    for iota in (0, 1):
        parents, children = pair_data[iota]
        fitted = np.asarray(fitted_for(parents)[iota])
        sigma_sq.append(float(np.mean((children - fitted) ** 2)))
        counts.append(parents.size)

    if tw_parents.size:
        fit0, fit1 = fitted_for(tw_parents)
        cross = float(np.mean((tw_c0 - np.asarray(fit0)) * (tw_c1 - np.asarray(fit1))))
    else:
        cross = 0.0
    if sigma_sq[0] > 0.0 and sigma_sq[1] > 0.0 and tw_parents.size:
        rho = cross / math.sqrt(sigma_sq[0] * sigma_sq[1])
    else:
        rho = None
    return NoiseCovarianceEstimate(sigma_sq[0], sigma_sq[1], rho,
                                   (counts[0], counts[1]), int(tw_parents.size))


def empirical_relative_error(estimate: np.ndarray, truth: np.ndarray) -> float:
    """Discrete-norm relative error ||estimate - truth|| / ||truth|| over a grid."""
    estimate = np.asarray(estimate, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if estimate.shape != truth.shape:
        raise ValueError("estimate and truth grids differ in length")
    denom = math.sqrt(float(np.mean(truth ** 2)))
    if denom == 0.0:
        raise DataError("relative error undefined: zero truth norm on the grid")
    return math.sqrt(float(np.mean((estimate - truth) ** 2))) / denom
