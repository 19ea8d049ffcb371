"""
Unit tests for denominators.py - small-denominator minima and tail estimates
"""
import itertools

import numpy as np
import pytest

from kgchain.denominators import (
    SigmaPattern,
    TailEstimate,
    default_epsilons,
    estimate_tail,
    min_denominator,
    verify_bound,
)
from kgchain.errors import BudgetExceededError
from kgchain.model import ModelConfig, restrict
from kgchain.spectral import solve


def brute_force_minimum(nu, coeffs):
    """min over all ordered tuples of distinct indices"""
    best = np.inf
    for idx in itertools.permutations(range(len(nu)), len(coeffs)):
        best = min(best, abs(sum(s * nu[i] for s, i in zip(coeffs, idx))))
    return best


@pytest.mark.unit
class TestSigmaPattern:
    """Test SigmaPattern validation"""

    @pytest.mark.parametrize("coeffs", [(1,), (1, 1, 1), ()])
    def test_odd_or_short_rejected(self, coeffs):
        with pytest.raises(ValueError) as exc_info:
            SigmaPattern(coeffs)
        assert "짝수" in str(exc_info.value)

    @pytest.mark.parametrize("coeffs", [(1, 0), (3, -1), (1, 1, -5, 1)])
    def test_coefficient_range(self, coeffs):
        with pytest.raises(ValueError) as exc_info:
            SigmaPattern(coeffs)
        assert "σ 성분" in str(exc_info.value)

    def test_label(self):
        assert SigmaPattern((1, -1, 2, -2)).label == "(1,-1,2,-2)"
        assert SigmaPattern((1, -1, 2, -2)).m == 4


@pytest.mark.unit
class TestMinDenominator:
    """Test min_denominator() against exhaustive enumeration"""

    @pytest.mark.parametrize("coeffs", [(1, -1), (1, 1), (2, -1)])
    def test_pairs_match_brute_force(self, eigensystem, coeffs):
        expected = brute_force_minimum(eigensystem.nu, coeffs)
        assert min_denominator(eigensystem, SigmaPattern(coeffs)) == pytest.approx(expected, abs=1e-14)

    @pytest.mark.parametrize("coeffs", [(1, 1, -1, -1), (1, -1, 1, 1), (2, -1, 3, -4)])
    def test_four_tuples_match_brute_force(self, realization, coeffs):
        """Meet-in-the-middle search on a 7-site interval"""
        es = solve(restrict(realization, (-3, 3)))
        expected = brute_force_minimum(es.nu, coeffs)
        assert min_denominator(es, SigmaPattern(coeffs)) == pytest.approx(expected, abs=1e-14)

    def test_distinct_indices_required(self, eigensystem):
        """σ=(1,-1) never pairs a mode with itself, so Q > 0"""
        assert min_denominator(eigensystem, SigmaPattern((1, -1))) > 0

    def test_interval_too_small(self, tiny_eigensystem):
        with pytest.raises(ValueError) as exc_info:
            min_denominator(tiny_eigensystem, SigmaPattern((1, 1, -1, -1)))
        assert "구간이 너무 작습니다" in str(exc_info.value)

    def test_tuple_budget(self, eigensystem):
        with pytest.raises(BudgetExceededError) as exc_info:
            min_denominator(eigensystem, SigmaPattern((1, 1, -1, -1)), cap=100)
        assert exc_info.value.reason == "budget_exceeded"
        assert exc_info.value.count == 11 * 10 * 9 * 8


@pytest.mark.unit
class TestEstimateTail:
    """Test estimate_tail() Monte-Carlo estimates"""

    def test_probabilities_monotone(self):
        cfg = ModelConfig(L=3, seed=11)
        est = estimate_tail(cfg, SigmaPattern((1, -1)), (-3, 3), trials=40)
        assert np.all(np.diff(est.probabilities) >= 0)
        assert est.interval_size == 7
        assert len(est.minima) == 40

    def test_independent_of_worker_count(self):
        """Trial streams depend only on (seed, label, trial)"""
        cfg = ModelConfig(L=3, seed=5)
        pattern = SigmaPattern((1, -1))
        one = estimate_tail(cfg, pattern, (-2, 2), trials=300, workers=1)
        two = estimate_tail(cfg, pattern, (-2, 2), trials=300, workers=2)
        np.testing.assert_array_equal(one.minima, two.minima)

    def test_label_changes_draws(self):
        cfg = ModelConfig(L=3, seed=5)
        pattern = SigmaPattern((1, 1))
        a = estimate_tail(cfg, pattern, (-2, 2), trials=10, label="a")
        b = estimate_tail(cfg, pattern, (-2, 2), trials=10, label="b")
        assert not np.array_equal(a.minima, b.minima)

    def test_unsorted_epsilons(self):
        with pytest.raises(ValueError) as exc_info:
            estimate_tail(ModelConfig(L=2), SigmaPattern((1, -1)), (-2, 2), epsilons=[0.1, 0.01], trials=5)
        assert "오름차순" in str(exc_info.value)

    def test_zero_trials(self):
        with pytest.raises(ValueError) as exc_info:
            estimate_tail(ModelConfig(L=2), SigmaPattern((1, -1)), (-2, 2), trials=0)
        assert "trials" in str(exc_info.value)

    def test_budget_checked_before_sampling(self):
        with pytest.raises(BudgetExceededError):
            estimate_tail(ModelConfig(L=20), SigmaPattern((1, 1, -1, -1)), (-20, 20), trials=1, cap=1000)

    def test_rows(self):
        est = TailEstimate(np.array([0.1, 1.0]), np.array([0.2, 0.5]), np.array([0.01, 0.02]), 100, 9)
        rows = est.rows(SigmaPattern((1, -1)))
        assert rows[1] == {
            "epsilon": 1.0, "p_hat": 0.5, "stderr": 0.02, "trials": 100,
            "interval_size": 9, "m": 2, "sigma_pattern": "(1,-1)",
        }

    def test_default_epsilons_log_spaced(self):
        eps = default_epsilons()
        ratios = eps[1:] / eps[:-1]
        np.testing.assert_allclose(ratios, ratios[0])


@pytest.mark.unit
class TestVerifyBound:
    """Test verify_bound() constant and exponent checks"""

    def test_constant_dominates_all_points(self):
        eps = np.logspace(-4, -1, 4)
        p = 0.5 * eps ** 0.5
        est = TailEstimate(eps, p, np.zeros(4), 1000, 3)
        report = verify_bound(est, SigmaPattern((1, -1)))
        envelope = 3 ** 2 * eps ** (1 / 3)
        assert np.all(p <= report.constant * envelope + 1e-15)
        assert report.slope == pytest.approx(0.5)
        assert report.passed

    def test_shallow_slope_fails(self):
        """p ~ ε^0.1 is flatter than ε^{1/3}"""
        eps = np.logspace(-4, -1, 4)
        est = TailEstimate(eps, 0.5 * eps ** 0.1, np.zeros(4), 1000, 3)
        report = verify_bound(est, SigmaPattern((1, -1)))
        assert not report.passed
        assert report.exponent == pytest.approx(1 / 3)

    def test_all_zero_probabilities(self):
        eps = np.logspace(-4, -1, 4)
        est = TailEstimate(eps, np.zeros(4), np.zeros(4), 1000, 3)
        report = verify_bound(est, SigmaPattern((1, -1)))
        assert report.constant == 0.0
        assert report.passed
        assert np.isnan(report.to_dict()["slope"])
