"""Numeric checkers for the ergodicity sufficient conditions and the
many-to-one simulation oracle.

These are verifiers, not gatekeepers: simulation and estimation run
regardless of the outcome, and the reports are attached as metadata.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import quad
from scipy.optimize import minimize_scalar

from .errors import ConfigError
from .models import (
    ModelSpec,
    NoiseModel,
    replicate_seeds,
    simulate_generation_batch,
    simulate_tagged_branch_batch,
)
from .rng import derive_key

#: slack grid scanned for the contraction margin eta
ETA_GRID = (0.01, 0.05, 0.1, 0.2)

_DEFAULT_TAIL_LAMBDA = 6.0


def _require_positive_sds(noise: NoiseModel) -> None:
    if noise.sigma0 <= 0.0 or noise.sigma1 <= 0.0:
        raise ConfigError("diagnostics need non-degenerate noise marginals")


def marginal_delta(noise: NoiseModel, m: float) -> float:
    """min over the two marginals of their infimum on [-M, M].

    Centered Gaussian marginals are unimodal, so the infimum sits at the
    boundary |x| = M.
    """
    if m < 0:
        raise ConfigError(f"M must be >= 0, got {m}")
    _require_positive_sds(noise)
    return float(min(noise.marginal_density(0, m), noise.marginal_density(1, m)))


def _delta_array(noise: NoiseModel, ms: np.ndarray) -> np.ndarray:
    return np.minimum(noise.marginal_density(0, ms), noise.marginal_density(1, ms))


def tail_envelope_constant(noise: NoiseModel, lam: float) -> float:
    """Smallest r with ``g(x) <= r / (1 + |x|^lam)`` for both marginals."""
    _require_positive_sds(noise)
    r = 0.0
    for iota in (0, 1):
        sd = noise.marginal_sd(iota)
        res = minimize_scalar(
            lambda x: -float(noise.marginal_density(iota, x)) * (1.0 + abs(x) ** lam),
            bounds=(0.0, max(10.0 * sd, 10.0)), method="bounded",
        )
        r = max(r, -float(res.fun))
    return r


@dataclass(frozen=True)
class Assumption1Report:
    """Outcome of the drift/minorization scan.

    ``sup_value`` is the best value of ``2*M1*delta((1+gamma)*M1 + ell)``
    found over admissible M1; the condition asks for a value above 1/2.
    """

    m0: float
    satisfied: bool
    eta: float | None
    m1_lower: float
    m1_upper: float
    best_m1: float | None
    sup_value: float
    reason: str = ""

    def to_dict(self) -> dict:
        return {
            "m0": self.m0, "satisfied": self.satisfied, "eta": self.eta,
            "m1_scan": [self.m1_lower, self.m1_upper], "best_m1": self.best_m1,
            "sup_value": self.sup_value, "reason": self.reason,
        }


def check_assumption1(gamma: float, ell: float, noise: NoiseModel,
                      m1_span: float = 100.0, m1_step: float = 0.01,
                      eta_grid=ETA_GRID) -> Assumption1Report:
    """Scan for the geometric-ergodicity sufficient condition.

    Needs some slack ``eta > 0`` with ``gamma < 1/2 - eta`` and an
    admissible ``M1 > 2*M0 / (1/2 - eta - gamma)`` whose minorization value
    exceeds 1/2.  ``gamma >= 1/2`` is unsatisfiable outright.
    """
    if not 0.0 < gamma < 1.0:
        raise ConfigError(f"gamma must be in (0,1), got {gamma}")
    if ell <= 0.0:
        raise ConfigError(f"ell must be > 0, got {ell}")
    _require_positive_sds(noise)
    m0 = ell + noise.mean_abs_mixture()
    if gamma >= 0.5:
        return Assumption1Report(m0=m0, satisfied=False, eta=None,
                                 m1_lower=math.nan, m1_upper=math.nan,
                                 best_m1=None, sup_value=0.0,
                                 reason="gamma >= 1/2: no admissible slack exists")
    best = (-math.inf, None, None)  # value, eta, m1
    lo_all, hi_all = math.inf, -math.inf
    for eta in eta_grid:
        if gamma >= 0.5 - eta:
            continue
        lower = 2.0 * m0 / (0.5 - eta - gamma)
        m1 = lower + m1_step * np.arange(1, int(m1_span / m1_step) + 1)
        vals = 2.0 * m1 * _delta_array(noise, (1.0 + gamma) * m1 + ell)
        j = int(np.argmax(vals))
        if vals[j] > best[0]:
            best = (float(vals[j]), eta, float(m1[j]))
        lo_all = min(lo_all, float(m1[0]))
        hi_all = max(hi_all, float(m1[-1]))
    value, eta, m1_at = best
    satisfied = value > 0.5
    return Assumption1Report(
        m0=m0, satisfied=satisfied, eta=eta, m1_lower=lo_all, m1_upper=hi_all,
        best_m1=m1_at, sup_value=value,
        reason="" if satisfied else "sup of 2*M1*delta((1+gamma)*M1+ell) <= 1/2 on the scan",
    )


def eta_tail_mass(gamma: float, ell: float, noise: NoiseModel, m: float,
                  lam: float | None = None, r: float | None = None,
                  quad_tol: float = 1e-6) -> float:
    """Tail-mass bound eta(M) for the invariant law, by double quadrature.

    The integrand envelopes the noise marginals by ``r/(1+|.|^lam)``
    evaluated at the farther of the two extreme autoregressive displacements
    ``+-(gamma*|x| + ell)``; the nearer-displacement variant does not decay
    in ``y`` and its double integral diverges for every ``lam``, so it
    cannot serve as a finite bound.  Converges only for ``lam > 2``.
    """
    if m < 0:
        raise ConfigError(f"M must be >= 0, got {m}")
    _require_positive_sds(noise)
    if lam is None:
        lam = noise.tail_lambda if noise.tail_lambda is not None else _DEFAULT_TAIL_LAMBDA
    if lam <= 2.0:
        raise ConfigError(f"tail mass integral diverges for lambda <= 2 (got {lam})")
    if r is None:
        r = noise.tail_r if noise.tail_r is not None else tail_envelope_constant(noise, lam)
    # centered Gaussian marginals peak at 0, so |G_iota|_inf = G_iota(0)
    front = 0.5 * (float(noise.marginal_density(0, 0.0))
                   + float(noise.marginal_density(1, 0.0)))

    def inner(y: float) -> float:
        val, _ = quad(
            lambda x: r / (1.0 + max(abs(y - gamma * x - ell),
                                     y + gamma * x + ell) ** lam),
            0.0, np.inf, epsabs=quad_tol, epsrel=quad_tol, limit=200,
        )
        return 2.0 * val

    outer, _ = quad(inner, m, np.inf, epsabs=quad_tol, epsrel=quad_tol, limit=200)
    return front * 2.0 * outer


@dataclass(frozen=True)
class Assumption2Report:
    """Outcome of the invariant-density positivity scan."""

    satisfied: bool
    m2: float | None
    eta_m2: float | None
    m3: float | None
    delta_m3: float | None
    scanned_m2: tuple[float, ...]
    reason: str = ""

    def to_dict(self) -> dict:
        return {
            "satisfied": self.satisfied, "m2": self.m2, "eta_m2": self.eta_m2,
            "m3": self.m3, "delta_m3": self.delta_m3,
            "scanned_m2": list(self.scanned_m2), "reason": self.reason,
        }


def check_assumption2(gamma: float, ell: float, noise: NoiseModel,
                      m2_grid=None, lam: float | None = None,
                      r: float | None = None,
                      margin: float = 1.0) -> Assumption2Report:
    """Scan M2 for a tail mass below one, then report the minorization
    level at ``M3 = ell + gamma*M2 + margin``.

    Gaussian marginals are positive everywhere, so ``delta(M3) > 0`` holds
    for every finite M3 and the check reduces to finding M2.
    """
    _require_positive_sds(noise)
    if m2_grid is None:
        m2_grid = tuple(0.5 * 2 ** k for k in range(8))
    scanned = tuple(float(v) for v in m2_grid)
    for m2 in scanned:
        eta = eta_tail_mass(gamma, ell, noise, m2, lam=lam, r=r)
        if eta < 1.0:
            m3 = ell + gamma * m2 + margin
            return Assumption2Report(satisfied=True, m2=m2, eta_m2=eta, m3=m3,
                                     delta_m3=marginal_delta(noise, m3),
                                     scanned_m2=scanned)
    return Assumption2Report(satisfied=False, m2=None, eta_m2=None, m3=None,
                             delta_m3=None, scanned_m2=scanned,
                             reason="tail mass >= 1 over the scanned M2 grid")


@dataclass(frozen=True)
class FunctionClassReport:
    """Sampled check of ``|f(x)| <= gamma*|x| + ell`` with the worst point."""

    ok: bool
    worst_x: float
    worst_excess: float

    def to_dict(self) -> dict:
        return {"ok": self.ok, "worst_x": self.worst_x,
                "worst_excess": self.worst_excess}


def check_function_class(f: Callable, gamma: float, ell: float,
                         grid: np.ndarray) -> FunctionClassReport:
    grid = np.asarray(grid, dtype=np.float64)
    if grid.size == 0:
        raise ConfigError("function class check needs a nonempty grid")
    excess = np.abs(np.asarray(f(grid), dtype=np.float64)) \
        - gamma * np.abs(grid) - ell
    j = int(np.argmax(excess))
    return FunctionClassReport(ok=bool(excess[j] <= 0.0),
                               worst_x=float(grid[j]),
                               worst_excess=float(excess[j]))


@dataclass(frozen=True)
class ManyToOneReport:
    """Monte Carlo comparison of the generation average against the
    tagged-branch expectation."""

    generation_mean: float
    chain_mean: float
    generation_se: float
    chain_se: float
    replicates: int

    @property
    def discrepancy(self) -> float:
        return abs(self.generation_mean - self.chain_mean)

    @property
    def combined_se(self) -> float:
        return math.hypot(self.generation_se, self.chain_se)

    def passes(self, z: float = 3.0) -> bool:
        return self.discrepancy <= z * self.combined_se

    def to_dict(self) -> dict:
        return {
            "generation_mean": self.generation_mean, "chain_mean": self.chain_mean,
            "generation_se": self.generation_se, "chain_se": self.chain_se,
            "replicates": self.replicates, "discrepancy": self.discrepancy,
            "combined_se": self.combined_se,
        }


def many_to_one_check(spec: ModelSpec, g: Callable, m: int,
                      replicates: int = 10_000, seed: int = 0) -> ManyToOneReport:
    """Estimate E[mean of g over generation m] from independent trees and
    E[g(Y_m)] from independent tagged chains, with standard errors.

    The identity behind the check requires ``|g(x)| <= 1 + |x|`` on the
    sampled range; the caller picks g accordingly.
    """
    if m < 0:
        raise ConfigError(f"generation must be >= 0, got {m}")
    if replicates < 2:
        raise ConfigError("need at least 2 replicates for a standard error")
    tree_seeds = replicate_seeds(derive_key(seed, 0), replicates)
    chain_seeds = replicate_seeds(derive_key(seed, 1), replicates)
    gen_vals = simulate_generation_batch(spec, m, tree_seeds)
    a = np.mean(np.asarray(g(gen_vals), dtype=np.float64), axis=1)
    chains = simulate_tagged_branch_batch(spec, m, chain_seeds)
    b = np.asarray(g(chains[:, -1]), dtype=np.float64)
    return ManyToOneReport(
        generation_mean=float(np.mean(a)), chain_mean=float(np.mean(b)),
        generation_se=float(np.std(a, ddof=1) / math.sqrt(replicates)),
        chain_se=float(np.std(b, ddof=1) / math.sqrt(replicates)),
        replicates=replicates,
    )


@dataclass(frozen=True)
class ErgodicityReport:
    """Combined sufficient-condition report for a model configuration."""

    gamma: float
    ell: float
    m0: float
    mean_abs_noise: float
    assumption1: Assumption1Report
    assumption2: Assumption2Report
    notes: tuple[str, ...] = field(default_factory=tuple)

    def to_dict(self) -> dict:
        return {
            "gamma": self.gamma, "ell": self.ell, "m0": self.m0,
            "mean_abs_noise": self.mean_abs_noise,
            "assumption1": self.assumption1.to_dict(),
            "assumption2": self.assumption2.to_dict(),
            "notes": list(self.notes),
        }


def run_ergodicity_report(gamma: float, ell: float, noise: NoiseModel,
                          **kwargs) -> ErgodicityReport:
    a1 = check_assumption1(gamma, ell, noise,
                           m1_span=kwargs.get("m1_span", 100.0),
                           m1_step=kwargs.get("m1_step", 0.01))
    a2 = check_assumption2(gamma, ell, noise, lam=kwargs.get("lam"),
                           r=kwargs.get("r"))
    notes = []
    if not a1.satisfied:
        notes.append("sufficient condition 1 not verified; this does not "
                     "prove non-ergodicity")
    return ErgodicityReport(gamma=gamma, ell=ell,
                            m0=ell + noise.mean_abs_mixture(),
                            mean_abs_noise=noise.mean_abs_mixture(),
                            assumption1=a1, assumption2=a2,
                            notes=tuple(notes))
