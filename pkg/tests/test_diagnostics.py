import math

import numpy as np
import pytest

from nbar.diagnostics import (
    check_assumption1,
    check_assumption2,
    check_function_class,
    eta_tail_mass,
    many_to_one_check,
    marginal_delta,
    run_ergodicity_report,
    tail_envelope_constant,
)
from nbar.errors import ConfigError
from nbar.models import TRIAL_F0, NoiseModel, builtin_models

UNIT = NoiseModel(1.0, 1.0, 0.3)


def test_marginal_delta_values():
    assert marginal_delta(UNIT, 0.0) == pytest.approx(0.398942, abs=1e-6)
    assert marginal_delta(UNIT, 1.0) == pytest.approx(0.241971, abs=1e-6)
    wide = NoiseModel(1.0, 2.0, 0.0)
    assert marginal_delta(wide, 0.0) == pytest.approx(0.199471, abs=1e-6)


def test_marginal_delta_nonincreasing():
    ms = np.linspace(0, 5, 21)
    vals = [marginal_delta(UNIT, m) for m in ms]
    assert all(a >= b for a, b in zip(vals, vals[1:]))


def test_mean_abs_noise_identity():
    assert UNIT.mean_abs_mixture() == pytest.approx(math.sqrt(2.0 / math.pi), abs=1e-12)
    mixed = NoiseModel(1.0, 3.0, 0.0)
    assert mixed.mean_abs_mixture() == pytest.approx(2.0 * math.sqrt(2.0 / math.pi))


def test_assumption1_gamma_too_large():
    report = check_assumption1(0.6, 0.5, UNIT)
    assert not report.satisfied
    assert "gamma >= 1/2" in report.reason


def test_assumption1_unverified_for_gaussian_config():
    report = check_assumption1(0.25, 0.5, UNIT)
    assert not report.satisfied
    assert report.m0 == pytest.approx(0.5 + math.sqrt(2.0 / math.pi), abs=1e-12)
    assert report.sup_value < 0.5
    # the admissible scan starts far beyond the unconstrained maximizer
    assert report.m1_lower > 10.0


def test_unconstrained_minorization_peak():
    # max over M of 2*M*delta(1.25*M + 0.5) for unit marginals is ~0.22,
    # already below the 1/2 threshold before the admissibility constraint
    ms = np.linspace(0.01, 10.0, 20000)
    vals = 2.0 * ms * np.array([marginal_delta(UNIT, 1.25 * m + 0.5) for m in ms])
    peak = float(vals.max())
    assert peak == pytest.approx(0.219, abs=2e-3)
    assert peak < 0.5


def test_assumption1_monotone_in_scan_range():
    short = check_assumption1(0.25, 0.5, UNIT, m1_span=50.0)
    full = check_assumption1(0.25, 0.5, UNIT, m1_span=100.0)
    assert full.sup_value >= short.sup_value
    assert short.satisfied == full.satisfied == False  # noqa: E712


def test_eta_tail_mass_converges_and_decreases():
    etas = [eta_tail_mass(0.25, 0.5, UNIT, m) for m in (0.5, 1.0, 2.0, 4.0)]
    assert all(e > 0 for e in etas)
    assert all(a >= b for a, b in zip(etas, etas[1:]))


def test_eta_tail_mass_rejects_heavy_tail_exponent():
    with pytest.raises(ConfigError, match="lambda"):
        eta_tail_mass(0.25, 0.5, UNIT, 1.0, lam=2.0)


def test_assumption2_scan_finds_m2():
    report = check_assumption2(0.25, 0.5, UNIT)
    assert report.satisfied
    assert report.eta_m2 is not None and report.eta_m2 < 1.0
    assert report.m3 == pytest.approx(0.5 + 0.25 * report.m2 + 1.0)
    assert report.delta_m3 > 0.0


def test_tail_envelope_dominates_marginals():
    lam = 6.0
    r = tail_envelope_constant(UNIT, lam)
    xs = np.linspace(-12, 12, 2001)
    for iota in (0, 1):
        assert np.all(UNIT.marginal_density(iota, xs) <= r / (1 + np.abs(xs) ** lam) + 1e-12)


def test_function_class_checks():
    grid = np.linspace(-100, 100, 2001)
    assert check_function_class(lambda x: x / 4.0, 0.25, 0.01, grid).ok
    report = check_function_class(lambda x: x, 0.25, 1.0, grid)
    assert not report.ok
    assert abs(report.worst_x) == pytest.approx(100.0)
    # trial function: the minimal offset at slope 1/4 is sup |x| e^{-x^2} / 2
    assert check_function_class(TRIAL_F0, 0.25, 0.22, grid).ok
    tight = check_function_class(TRIAL_F0, 0.25, 0.20, grid)
    assert not tight.ok
    assert abs(abs(tight.worst_x) - 1.0 / math.sqrt(2.0)) < 0.1


def test_many_to_one_constant_function_exact():
    spec = builtin_models("paper-neq")
    report = many_to_one_check(spec, lambda x: np.ones_like(x), m=3,
                               replicates=500, seed=1)
    assert report.discrepancy == 0.0
    assert report.combined_se == 0.0
    assert report.passes()


def test_many_to_one_identity_function():
    spec = builtin_models("paper-neq")
    report = many_to_one_check(spec, lambda x: x, m=3, replicates=4000, seed=2)
    assert report.passes(3.0)
    assert report.generation_se > 0.0


def test_many_to_one_symmetric_case_is_plain_autoregression():
    spec = builtin_models("paper-eq")
    report = many_to_one_check(spec, np.abs, m=4, replicates=4000, seed=3)
    assert report.passes(3.0)


def test_ergodicity_report_shape():
    report = run_ergodicity_report(0.25, 0.5, UNIT)
    payload = report.to_dict()
    assert payload["assumption2"]["satisfied"] is True
    assert payload["assumption1"]["satisfied"] is False
    assert payload["m0"] == pytest.approx(0.5 + math.sqrt(2.0 / math.pi))
    assert payload["notes"]


def test_diagnostics_reject_degenerate_noise():
    with pytest.raises(ConfigError):
        marginal_delta(NoiseModel(0.0, 1.0, 0.0), 1.0)
    with pytest.raises(ConfigError):
        check_assumption1(0.25, 0.5, NoiseModel(0.0, 0.0, 0.0))
