"""Cross-module consistency oracles: the estimated invariant density
against long tagged-branch chains, the recursive estimator against the
plain one, and the real-data workflow on the shipped fixture."""

import math
import pathlib

import numpy as np

from nbar.asymmetry import TestGrid, asymmetry_test
from nbar.estimators import (
    BierensConfig,
    EstimatorConfig,
    estimate_autoregression,
    estimate_invariant_density,
    estimate_recursive,
)
from nbar.kernels import GAUSSIAN, BandwidthRule, silverman_constant
from nbar.models import builtin_models, replicate_seeds, simulate_nbar, simulate_tagged_branch_batch
from nbar.rng import derive_key
from nbar.studies import ingest_pairs

FIXTURE = pathlib.Path(__file__).resolve().parents[1] / "data" / "synthetic_lineage.csv"


def test_density_matches_tagged_chain_histogram():
    # the estimator's denominator targets the stationary law of the
    # tagged-branch chain; compare at 0 via independent long chains
    spec = builtin_models("paper-neq")
    trees = 6
    tree_vals = []
    for r in range(trees):
        tree = simulate_nbar(spec, 13, seed=derive_key(50, r))
        tree_vals.append(estimate_invariant_density(tree, EstimatorConfig(), 0.0))
    nu_hat = float(np.mean(tree_vals))
    se_tree = float(np.std(tree_vals, ddof=1) / math.sqrt(trees))

    chains = simulate_tagged_branch_batch(spec, 350, replicate_seeds(51, 400))
    kept = chains[:, 100:]  # burn-in
    half_width = 0.05
    per_chain = np.mean(np.abs(kept) <= half_width, axis=1) / (2 * half_width)
    nu_chain = float(np.mean(per_chain))
    se_chain = float(np.std(per_chain, ddof=1) / math.sqrt(per_chain.size))

    combined = math.hypot(se_tree, se_chain)
    assert abs(nu_hat - nu_chain) <= 3.0 * combined + 1e-12, \
        f"nu_hat={nu_hat:.4f} chain={nu_chain:.4f} 3se={3*combined:.4f}"


def test_recursive_consistent_with_plain_at_origin():
    # both estimators target the same value at 0; their replicate means
    # agree within Monte Carlo resolution at a deep generation
    spec = builtin_models("paper-neq")
    plain_vals, rec_vals = [], []
    for r in range(50):
        tree = simulate_nbar(spec, 13, seed=derive_key(60, r))
        f0p, _, _ = estimate_autoregression(tree, EstimatorConfig(), 0.0)
        f0r, _, _ = estimate_recursive(tree, GAUSSIAN, 0.2, 0.0)
        plain_vals.append(f0p)
        rec_vals.append(f0r)
    sd = np.std(plain_vals, ddof=1)
    assert abs(np.mean(rec_vals) - np.mean(plain_vals)) <= 2.0 * sd


def test_real_data_workflow_on_shipped_fixture():
    tree, report = ingest_pairs(FIXTURE)
    assert report["nodes"] == 655
    assert report["depth"] == 9
    assert report["pairs_type0"] + report["pairs_type1"] > 500
    values = tree.values_up_to(tree.depth - 1)
    lo, hi = np.quantile(values, [0.1, 0.9])
    constant = silverman_constant(values)
    cfg = EstimatorConfig(bandwidth=BandwidthRule(0.2, constant))
    bierens = BierensConfig(const_a=constant, const_b=constant)
    grid = TestGrid.from_points(np.linspace(lo, hi, 10))
    result = asymmetry_test(tree, cfg, bierens, grid, level=0.05,
                            variance="estimate")
    assert result.k == 10
    assert result.variance.source == "estimated"
    assert result.p_value < 1e-3
    assert result.reject


def test_fixture_regeneration_matches(tmp_path):
    # the committed file is exactly what the generator script produces
    import subprocess
    import sys
    import shutil

    script = pathlib.Path(__file__).resolve().parents[1] / "tools" / "make_synthetic_lineage.py"
    workdir = tmp_path / "repo"
    (workdir / "tools").mkdir(parents=True)
    (workdir / "src").symlink_to(script.parents[1] / "src")
    shutil.copy(script, workdir / "tools" / "make_synthetic_lineage.py")
    subprocess.run([sys.executable, str(workdir / "tools" / "make_synthetic_lineage.py")],
                   check=True, capture_output=True)
    regenerated = (workdir / "data" / "synthetic_lineage.csv").read_bytes()
    assert regenerated == FIXTURE.read_bytes()
