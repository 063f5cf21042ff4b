"""Monte Carlo studies: estimation error tables, rejection rates, power
curves, confidence bands, and real-data ingestion.

Replicate ``r`` of a study always runs on the substream key
``derive_key(seed, r)``, so studies sharing a base seed see identical
trees and results do not depend on execution order or thread count.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .asymmetry import TestGrid, asymmetry_test
from .errors import ConfigError, DataError
from .estimators import (
    BierensConfig,
    CurveEstimate,
    EstimatorConfig,
    GridSpec,
    empirical_relative_error,
    evaluate_curve,
)
from .kernels import BandwidthRule, get_kernel
from .models import (
    TRIAL_F0,
    AutoregressivePair,
    ModelSpec,
    NoiseModel,
    RootLaw,
    builtin_models,
    resolve_model,
    simulate_nbar,
    trial_tau_fn,
)
from .rng import derive_key
from .trees import BinaryTreeData, full_tree_size, read_tree_csv


@dataclass(frozen=True)
class StudyConfig:
    """Shared configuration for the Monte Carlo studies."""

    model: str | dict = "paper-neq"
    generations: tuple[int, ...] = (10,)
    replicates: int = 100
    seed: int = 1
    kernel: str = "gaussian"
    bandwidth_exponent: float = 0.2
    bandwidth_constant: float = 1.0
    threshold: float = 0.0
    grid: GridSpec = field(default_factory=GridSpec)
    mesh: float = 0.5
    level: float = 0.05
    beta: int = 2
    delta: float = 0.5
    variance: str = "known"
    taus: tuple[float, ...] = ()

    def __post_init__(self):
        if self.replicates < 1:
            raise ConfigError(f"replicates must be >= 1, got {self.replicates}")
        if not self.generations:
            raise ConfigError("at least one generation index is required")
        if any(n < 0 for n in self.generations):
            raise ConfigError("generation indices must be >= 0")
        if self.variance not in ("known", "estimate"):
            raise ConfigError(f"variance must be 'known' or 'estimate', got {self.variance!r}")

    def estimator_config(self) -> EstimatorConfig:
        return EstimatorConfig(
            kernel=get_kernel(self.kernel),
            bandwidth=BandwidthRule(self.bandwidth_exponent, self.bandwidth_constant),
            threshold=self.threshold,
            grid=self.grid,
        )

    def bierens_config(self) -> BierensConfig:
        return BierensConfig(beta=self.beta, delta=self.delta)

    def test_grid(self) -> TestGrid:
        return TestGrid.from_step(self.grid.lo, self.grid.hi, self.mesh)

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "generations": list(self.generations),
            "replicates": self.replicates,
            "seed": self.seed,
            "kernel": self.kernel,
            "bandwidth_exponent": self.bandwidth_exponent,
            "bandwidth_constant": self.bandwidth_constant,
            "threshold": self.threshold,
            "grid": {"lo": self.grid.lo, "hi": self.grid.hi, "step": self.grid.step},
            "mesh": self.mesh,
            "level": self.level,
            "beta": self.beta,
            "delta": self.delta,
            "variance": self.variance,
            "taus": list(self.taus),
        }


@dataclass
class MonteCarloReport:
    """Study output: aggregates for the JSON report, tidy rows for the CSV."""

    study: str
    config: dict
    summary: list[dict]
    rows: list[dict]
    extras: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"study": self.study, "config": self.config,
                "summary": self.summary, **self.extras}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def write_json(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.to_json())

    def write_csv(self, path) -> None:
        if not self.rows:
            raise DataError("report has no tidy rows")
        fields = list(self.rows[0].keys())
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            writer = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
            writer.writeheader()
            writer.writerows(self.rows)


def _map_replicates(fn: Callable[[int], dict], count: int, threads: int) -> list:
    """Evaluate ``fn`` over replicate indices, preserving index order."""
    if threads <= 1:
        return [fn(r) for r in range(count)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(count)))


def curve_relative_errors(curve: CurveEstimate, f0: Callable,
                          f1: Callable) -> tuple[float, float]:
    """Relative errors of the two estimated curves against the truths."""
    if np.any(curve.flags):
        bad = ", ".join(f"{p:g}" for p in curve.flagged_points())
        raise DataError(f"curve undefined at grid points: {bad}")
    e0 = empirical_relative_error(curve.f0, np.asarray(f0(curve.x)))
    e1 = empirical_relative_error(curve.f1, np.asarray(f1(curve.x)))
    return e0, e1


def _simulate_for(spec: ModelSpec, n: int, key: int) -> BinaryTreeData:
    return simulate_nbar(spec, n + 1, key)


def run_error_study(config: StudyConfig, threads: int = 1,
                    kind: str = "plain") -> MonteCarloReport:
    """Mean relative estimation errors per generation, with a log-log rate
    slope when more than one generation is requested."""
    spec = resolve_model(config.model)
    est_cfg = config.estimator_config()
    summary = []
    rows = []
    mean_log: list[tuple[float, float, float]] = []
    for n in config.generations:
        def one(r: int, n: int = n) -> dict:
            key = derive_key(config.seed, r)
            tree = _simulate_for(spec, n, key)
            curve = evaluate_curve(tree, est_cfg, kind=kind,
                                   bierens=config.bierens_config())
            e0, e1 = curve_relative_errors(curve, spec.pair.f0, spec.pair.f1)
            return {"n": n, "tree_size": full_tree_size(n), "replicate": r,
                    "e0": e0, "e1": e1}

        results = _map_replicates(one, config.replicates, threads)
        rows.extend(results)
        e0s = np.array([row["e0"] for row in results])
        e1s = np.array([row["e1"] for row in results])
        ddof = 0 if config.replicates == 1 else 1
        summary.append({
            "n": n, "tree_size": full_tree_size(n),
            "mean_e0": float(np.mean(e0s)), "sd_e0": float(np.std(e0s, ddof=ddof)),
            "mean_e1": float(np.mean(e1s)), "sd_e1": float(np.std(e1s, ddof=ddof)),
            "replicates": config.replicates,
        })
        mean_log.append((math.log(full_tree_size(n)),
                         math.log(float(np.mean(e0s))),
                         math.log(float(np.mean(e1s)))))
    extras: dict = {}
    if len(config.generations) >= 2:
        logs = np.asarray(mean_log)
        extras["slope"] = {
            "e0": float(np.polyfit(logs[:, 0], logs[:, 1], 1)[0]),
            "e1": float(np.polyfit(logs[:, 0], logs[:, 2], 1)[0]),
        }
    return MonteCarloReport(study="error", config=config.to_dict(),
                            summary=summary, rows=rows, extras=extras)


def _case_model(case: str) -> ModelSpec:
    if case == "eq":
        return builtin_models("paper-eq")
    if case == "neq":
        return builtin_models("paper-neq")
    raise ConfigError(f"case must be 'eq' or 'neq', got {case!r}")


def _run_test_replicates(spec: ModelSpec, config: StudyConfig, n: int,
                         threads: int) -> list[dict]:
    est_cfg = config.estimator_config()
    bierens = config.bierens_config()
    grid = config.test_grid()
    variance = spec.noise if config.variance == "known" else "estimate"

    def one(r: int) -> dict:
        key = derive_key(config.seed, r)
        tree = _simulate_for(spec, n, key)
        result = asymmetry_test(tree, est_cfg, bierens, grid,
                                level=config.level, variance=variance)
        return {"n": n, "replicate": r, "statistic": result.statistic,
                "p_value": result.p_value, "reject": int(result.reject)}

    return _map_replicates(one, config.replicates, threads)


def run_rejection_study(config: StudyConfig, case: str | None = None,
                        threads: int = 1) -> MonteCarloReport:
    """Proportion of rejections of the symmetry hypothesis per generation."""
    spec = _case_model(case) if case is not None else resolve_model(config.model)
    summary = []
    rows = []
    for n in config.generations:
        results = _run_test_replicates(spec, config, n, threads)
        for row in results:
            row["case"] = case or spec.name
        rows.extend(results)
        stats = np.array([row["statistic"] for row in results])
        summary.append({
            "n": n, "tree_size": full_tree_size(n), "k": config.test_grid().k,
            "rejection_rate": float(np.mean([row["reject"] for row in results])),
            "mean_statistic": float(np.mean(stats)),
            "replicates": config.replicates,
        })
    return MonteCarloReport(
        study="rejection", config={**config.to_dict(), "case": case or spec.name},
        summary=summary, rows=rows)


def run_power_study(config: StudyConfig, threads: int = 1) -> MonteCarloReport:
    """Rejection proportions along the interpolation parameter tau.

    Uses the same replicate keys for every tau (and as the rejection study
    with the same seed), so the endpoints tau=1/8 and tau=1/4 reproduce the
    two-case studies exactly.
    """
    if not config.taus:
        raise ConfigError("power study needs a nonempty tau list")
    if len(config.generations) != 1:
        raise ConfigError("power study runs at a single generation")
    n = config.generations[0]
    noise = NoiseModel(sigma0=1.0, sigma1=1.0, rho=0.3)
    root = RootLaw(kind="point", x0=1.0)
    summary = []
    rows = []
    for tau in config.taus:
        pair = AutoregressivePair(TRIAL_F0, trial_tau_fn(tau), 0.25, 0.215)
        spec = ModelSpec(pair=pair, noise=noise, root=root, name=f"paper-tau({tau})")
        results = _run_test_replicates(spec, config, n, threads)
        for row in results:
            row["tau"] = tau
        rows.extend(results)
        summary.append({
            "tau": tau, "n": n, "k": config.test_grid().k,
            "rejection_rate": float(np.mean([row["reject"] for row in results])),
            "replicates": config.replicates,
        })
    return MonteCarloReport(study="power", config=config.to_dict(),
                            summary=summary, rows=rows)


def confidence_bands(curves: np.ndarray, level: float = 0.95) -> dict:
    """Per-grid-point symmetric empirical quantile envelopes.

    ``curves`` has one row per replicate; ``level`` is the coverage
    probability of the bands.
    """
    curves = np.asarray(curves, dtype=np.float64)
    if curves.ndim != 2 or curves.shape[0] < 1:
        raise ConfigError("curves must be a (replicates, grid) array")
    if not 0.0 < level < 1.0:
        raise ConfigError(f"band level must be in (0,1), got {level}")
    if curves.shape[0] < 20 and level >= 0.95:
        warnings.warn(
            f"{curves.shape[0]} replicates is thin for {level:.0%} bands",
            stacklevel=2,
        )
    alpha = (1.0 - level) / 2.0
    return {
        "lower": np.quantile(curves, alpha, axis=0),
        "upper": np.quantile(curves, 1.0 - alpha, axis=0),
        "mean": np.mean(curves, axis=0),
    }


def run_bands_study(config: StudyConfig, threads: int = 1,
                    kind: str = "plain") -> MonteCarloReport:
    """Monte Carlo confidence bands around the two estimated curves."""
    if len(config.generations) != 1:
        raise ConfigError("bands study runs at a single generation")
    n = config.generations[0]
    spec = resolve_model(config.model)
    est_cfg = config.estimator_config()

    def one(r: int) -> dict:
        key = derive_key(config.seed, r)
        tree = _simulate_for(spec, n, key)
        curve = evaluate_curve(tree, est_cfg, kind=kind,
                               bierens=config.bierens_config())
        if np.any(curve.flags):
            raise DataError(f"replicate {r}: curve undefined at some grid points")
        return {"x": curve.x, "f0": curve.f0, "f1": curve.f1}

    results = _map_replicates(one, config.replicates, threads)
    xs = results[0]["x"]
    stack0 = np.vstack([res["f0"] for res in results])
    stack1 = np.vstack([res["f1"] for res in results])
    coverage = 1.0 - config.level
    bands0 = confidence_bands(stack0, coverage)
    bands1 = confidence_bands(stack1, coverage)
    truth0 = np.asarray(spec.pair.f0(xs))
    truth1 = np.asarray(spec.pair.f1(xs))
    rows = [
        {
            "x": float(xs[j]),
            "f0_lower": float(bands0["lower"][j]), "f0_upper": float(bands0["upper"][j]),
            "f0_mean": float(bands0["mean"][j]), "f0_true": float(truth0[j]),
            "f1_lower": float(bands1["lower"][j]), "f1_upper": float(bands1["upper"][j]),
            "f1_mean": float(bands1["mean"][j]), "f1_true": float(truth1[j]),
        }
        for j in range(xs.size)
    ]
    summary = [{
        "n": n, "tree_size": full_tree_size(n), "coverage": coverage,
        "replicates": config.replicates, "grid_points": int(xs.size),
    }]
    return MonteCarloReport(study="bands", config=config.to_dict(),
                            summary=summary, rows=rows,
                            extras={"bands": rows})


_PAIR_HEADER = ["parent_node", "child_type", "child_value"]


def ingest_pairs(path, storage: str = "auto") -> tuple[BinaryTreeData, dict]:
    """Read observed data in either tree or pair CSV format.

    Tree format has header ``node,value``; pair format has header
    ``parent_node,child_type,child_value`` with one row per observed child
    (the child's path is the parent path plus the type bit).  Returns the
    tree and a small ingestion report.
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        header = next(csv.reader(fh), None)
    if header is None:
        raise DataError(f"{path}: empty file")
    header = [h.strip() for h in header]
    if header[:2] == ["node", "value"]:
        tree = read_tree_csv(path, storage=storage)
    elif header[:3] == _PAIR_HEADER:
        tree = _read_pair_csv(path, storage)
    else:
        raise DataError(f"{path}: unrecognized header {header!r}")
    pairs = tree.pair_counts() if tree.depth >= 1 else (0, 0)
    report = {
        "nodes": tree.n_observed,
        "depth": tree.depth,
        "pairs_type0": pairs[0],
        "pairs_type1": pairs[1],
    }
    return tree, report


def _read_pair_csv(path, storage: str) -> BinaryTreeData:
    mapping: dict[str, float] = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 3:
                raise DataError(f"{path}:{lineno}: expected 3 fields, got {len(row)}")
            parent = row[0].strip()
            if any(ch not in "01" for ch in parent):
                raise DataError(f"{path}:{lineno}: malformed parent path {parent!r}")
            child_type = row[1].strip()
            if child_type not in ("0", "1"):
                raise DataError(f"{path}:{lineno}: child type must be 0 or 1")
            node = parent + child_type
            if node in mapping:
                raise DataError(f"{path}:{lineno}: duplicate node {node!r}")
            try:
                mapping[node] = float(row[2])
            except ValueError:
                raise DataError(
                    f"{path}:{lineno}: value {row[2]!r} is not a decimal real"
                ) from None
    return BinaryTreeData.from_mapping(mapping, storage=storage)
