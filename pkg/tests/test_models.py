import math

import numpy as np
import pytest

from nbar.errors import ConfigError
from nbar.models import (
    TRIAL_F0,
    AutoregressivePair,
    ModelSpec,
    NoiseModel,
    RootLaw,
    builtin_models,
    draw_noise,
    marginal_integral,
    model_from_json,
    replicate_seeds,
    simulate_generation_batch,
    simulate_nbar,
    simulate_tagged_branch,
)

ZERO = AutoregressivePair(lambda x: np.zeros_like(x), lambda x: np.zeros_like(x),
                          gamma=0.5, ell=0.01)


def test_builtin_values_at_zero_and_one():
    spec = builtin_models("paper-neq")
    assert spec.pair.f0(0.0) == 0.0
    assert spec.pair.f1(0.0) == 0.0
    assert spec.pair.f0(1.0) == pytest.approx(0.25 + math.exp(-1.0) / 2.0, abs=1e-15)
    assert spec.pair.f1(1.0) == pytest.approx(0.125 + math.exp(-1.0) / 2.0, abs=1e-15)
    assert spec.noise.rho == 0.3
    assert spec.root.x0 == 1.0


def test_tau_interpolation_endpoints():
    eq = builtin_models("paper-eq")
    tau = builtin_models("paper-tau(0.25)")
    xs = np.linspace(-5, 5, 101)
    assert np.array_equal(tau.pair.f1(xs), eq.pair.f1(xs))
    neq = builtin_models("paper-neq")
    tau = builtin_models("paper-tau:0.125")
    assert np.array_equal(tau.pair.f1(xs), neq.pair.f1(xs))


def test_tau_range_enforced():
    with pytest.raises(ConfigError):
        builtin_models("paper-tau(0.3)")
    with pytest.raises(ConfigError):
        builtin_models("paper-tau(0.1)")


def test_builtin_class_bound_on_wide_grid():
    xs = np.linspace(-100, 100, 4001)
    spec = builtin_models("paper-neq")
    for f in (spec.pair.f0, spec.pair.f1):
        assert np.all(np.abs(f(xs)) <= 0.5 * np.abs(xs) + spec.pair.ell)


def test_class_check_rejects_violations():
    with pytest.raises(ConfigError, match="leaves the class"):
        AutoregressivePair(lambda x: x, lambda x: x, gamma=0.25, ell=1.0)


def test_noise_model_validation():
    with pytest.raises(ConfigError):
        NoiseModel(rho=1.0)
    with pytest.raises(ConfigError):
        NoiseModel(sigma0=-0.5)
    NoiseModel(sigma0=1.0, sigma1=1.0, rho=0.3)  # the simulation-study config


def test_noise_covariance_matrix():
    nm = NoiseModel(sigma0=2.0, sigma1=0.5, rho=-0.4)
    expected = np.array([[4.0, -0.4], [-0.4, 0.25]])
    assert np.allclose(nm.covariance, expected)


def test_marginals_integrate_to_one():
    nm = NoiseModel(sigma0=1.3, sigma1=0.7, rho=0.2)
    for iota in (0, 1):
        assert abs(marginal_integral(nm, iota) - 1.0) < 1e-6


def test_draw_noise_statistics():
    n = 100_000
    eps = draw_noise(NoiseModel(1.0, 1.0, 0.0), n, seed=3)
    corr = np.corrcoef(eps[:, 0], eps[:, 1])[0, 1]
    assert abs(corr) < 3.0 / math.sqrt(n)
    eps = draw_noise(NoiseModel(1.0, 1.0, 0.3), n, seed=4)
    cov = np.cov(eps.T)
    assert abs(cov[0, 1] - 0.3) < 4.0 / math.sqrt(n)
    assert abs(cov[0, 0] - 1.0) < 4.0 / math.sqrt(n)


def test_simulate_zero_noise_zero_function():
    spec = ModelSpec(pair=ZERO, noise=NoiseModel(0.0, 0.0, 0.0),
                     root=RootLaw(kind="point", x0=1.0))
    tree = simulate_nbar(spec, 2, seed=1)
    vals = dict(tree.items())
    assert vals[""] == 1.0
    assert all(vals[p] == 0.0 for p in vals if p)
    assert len(vals) == 7


def test_simulate_paper_depth_15_size():
    spec = builtin_models("paper-neq")
    tree = simulate_nbar(spec, 15, seed=1)
    assert tree.n_observed == 65535


def test_simulation_deterministic():
    spec = builtin_models("paper-eq")
    a = simulate_nbar(spec, 10, seed=99)
    b = simulate_nbar(spec, 10, seed=99)
    assert np.array_equal(a.values_up_to(10), b.values_up_to(10))
    c = simulate_nbar(spec, 10, seed=100)
    assert not np.array_equal(a.values_up_to(10), c.values_up_to(10))


def test_binned_child_means_match_autoregression():
    # regression oracle: within a parent bin, mean child minus mean f(parent)
    # is a centered noise average
    spec = builtin_models("paper-neq")
    tree = simulate_nbar(spec, 12, seed=21)
    for iota, f in ((0, spec.pair.f0), (1, spec.pair.f1)):
        parents, children = tree.pairs(iota, 11)
        for lo in np.arange(-1.5, 1.5, 0.5):
            sel = (parents >= lo) & (parents < lo + 0.5)
            count = int(sel.sum())
            assert count > 50
            gap = np.mean(children[sel]) - np.mean(f(parents[sel]))
            assert abs(gap) <= 3.0 / math.sqrt(count)


def test_noise_covariance_recovered_from_tree():
    # with f0 = f1 = 0 the twin children are exactly the noise pairs
    noise = NoiseModel(1.0, 1.0, 0.3)
    spec = ModelSpec(pair=ZERO, noise=noise, root=RootLaw(kind="point", x0=0.0))
    tree = simulate_nbar(spec, 12, seed=8)
    _, c0, c1 = tree.twin_pairs(11)
    gamma_hat = np.cov(np.vstack([c0, c1]))
    bound = 4.0 / math.sqrt(4095)
    assert np.max(np.abs(gamma_hat - noise.covariance)) <= bound


def test_heteroscedastic_constant_matches_homoscedastic_bitwise():
    base = builtin_models("paper-neq")
    het = ModelSpec(pair=base.pair, noise=base.noise, root=base.root,
                    variance_fns=(lambda x: np.full_like(x, 1.0),
                                  lambda x: np.full_like(x, 1.0)))
    a = simulate_nbar(base, 9, seed=5)
    b = simulate_nbar(het, 9, seed=5)
    assert np.array_equal(a.values_up_to(9), b.values_up_to(9))


def test_heteroscedastic_variance_function_validated():
    base = builtin_models("paper-neq")
    with pytest.raises(ConfigError, match="variance function"):
        ModelSpec(pair=base.pair, noise=base.noise, root=base.root,
                  variance_fns=(lambda x: np.zeros_like(x),
                                lambda x: np.full_like(x, 1.0)))


def test_non_finite_simulation_names_node():
    base = builtin_models("paper-neq")
    huge = ModelSpec(pair=base.pair, noise=base.noise, root=base.root,
                     variance_fns=(lambda x: np.full_like(x, 1e308),
                                   lambda x: np.full_like(x, 1e308)))
    with pytest.raises(ConfigError, match="non-finite trait at node"):
        simulate_nbar(huge, 6, seed=0)


def test_tagged_branch_degenerate():
    spec = ModelSpec(pair=ZERO, noise=NoiseModel(0.0, 0.0, 0.0),
                     root=RootLaw(kind="point", x0=5.0))
    chain = simulate_tagged_branch(spec, 7, seed=2)
    assert chain.shape == (8,)
    assert chain[0] == 5.0
    assert np.all(chain[1:] == 0.0)


def test_generation_batch_matches_single_simulation():
    spec = builtin_models("paper-neq")
    seeds = replicate_seeds(17, 5)
    batch = simulate_generation_batch(spec, 4, seeds)
    assert batch.shape == (5, 16)
    for r, key in enumerate(seeds):
        tree = simulate_nbar(spec, 4, int(key))
        _, gen = tree.generation_values(4)
        assert np.array_equal(batch[r], gen)


def test_gaussian_root_law():
    spec = ModelSpec(pair=ZERO, noise=NoiseModel(0.0, 0.0, 0.0),
                     root=RootLaw(kind="gaussian", mean=2.0, sd=3.0))
    a = simulate_nbar(spec, 1, seed=11)
    b = simulate_nbar(spec, 1, seed=11)
    assert a.value_at("") == b.value_at("")
    vals = [simulate_nbar(spec, 0, seed=s).value_at("") for s in range(200)]
    assert abs(np.mean(vals) - 2.0) < 3.0 * 3.0 / math.sqrt(200)


def test_model_from_json_poly_and_points():
    spec = model_from_json({
        "f0": {"poly": [0.0, 0.25]},
        "f1": {"points": {"x": [-10.0, 10.0], "y": [-1.0, 1.0]}},
        "sigma0": 1.0, "sigma1": 2.0, "rho": 0.1,
        "root": {"point": 0.5},
    })
    assert spec.pair.f0(2.0) == pytest.approx(0.5)
    assert spec.pair.f1(5.0) == pytest.approx(0.5)
    assert spec.noise.sigma1 == 2.0
    assert spec.root.x0 == 0.5


def test_model_from_json_builtin_names():
    spec = model_from_json({"f0": "paper-f0", "f1": "paper-tau(0.2)",
                            "rho": 0.3, "root": {"point": 1.0}})
    xs = np.linspace(-3, 3, 7)
    assert np.array_equal(spec.pair.f0(xs), TRIAL_F0(xs))


def test_model_from_json_errors():
    with pytest.raises(ConfigError):
        model_from_json({"f0": "nope", "f1": "zero"})
    with pytest.raises(ConfigError):
        model_from_json({"f0": "zero"})
    with pytest.raises(ConfigError):
        model_from_json({"f0": "zero", "f1": "zero", "root": {"beta": 1}})


def test_replicate_seeds_distinct():
    seeds = replicate_seeds(1, 1000)
    assert len(set(seeds.tolist())) == 1000
