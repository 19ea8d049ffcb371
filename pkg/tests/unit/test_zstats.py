"""
Unit tests for zstats.py - Z(x) estimates, bad events and tail fits
"""
import numpy as np
import pytest

from kgchain.perturbation import ExpansionConfig, Source, build_expansion
from kgchain.zstats import (
    bad_event_weights,
    fit_tail_exponent,
    local_approx_study,
    z_at_site,
    z_covariance_decay,
    z_estimate,
    z_kernel_estimate,
    z_local_approx,
    z_profile,
)


@pytest.fixture
def current_expansion(tiny_eigensystem):
    return build_expansion(Source("current", 0), tiny_eigensystem, ExpansionConfig(order=2))


@pytest.mark.unit
class TestZEstimate:
    """Test z_estimate() and its breakdown"""

    def test_breakdown_sums_to_value(self, current_expansion, tiny_eigensystem):
        z = z_estimate(current_expansion, tiny_eigensystem, 0, 0.5, lam=0.2)
        assert sum(z.breakdown.values()) == pytest.approx(z.value, rel=1e-14)
        assert set(z.breakdown) == {"G", "U[1,1]", "U[1,2]", "U[2,1]", "U[2,2]"}

    def test_order_one_by_hand(self, tiny_eigensystem):
        """Z = (Σ|ĝ|^q)² + (Σ|û|^q)² with the ledger coefficients"""
        exp = build_expansion(Source("current", 1), tiny_eigensystem, ExpansionConfig(order=1))
        q = 0.4
        g = np.sum(np.abs(exp.g_ledger.coefficients) ** q)
        u = np.sum(np.abs(exp.u_ledgers[0].coefficients) ** q)
        z = z_estimate(exp, tiny_eigensystem, 1, q)
        assert z.value == pytest.approx(g ** 2 + u ** 2)

    def test_merged_coefficients_without_ledger(self, tiny_eigensystem):
        exp = build_expansion(Source("current", 1), tiny_eigensystem, ExpansionConfig(order=1, ledger=False))
        q = 0.4
        u = np.sum(np.abs(exp.u_orders[0].coeffs) ** q)
        z = z_estimate(exp, tiny_eigensystem, 1, q)
        assert z.breakdown["U[1,1]"] == pytest.approx(u ** 2)

    def test_correlation_constant_scales(self, current_expansion, tiny_eigensystem):
        base = z_estimate(current_expansion, tiny_eigensystem, 0, 0.5)
        scaled = z_estimate(current_expansion, tiny_eigensystem, 0, 0.5, corr_constant=4.0)
        assert scaled.value == pytest.approx(2.0 * base.value)

    @pytest.mark.parametrize("q", [0.0, 1.0, -0.5])
    def test_exponent_range(self, current_expansion, tiny_eigensystem, q):
        with pytest.raises(ValueError) as exc_info:
            z_estimate(current_expansion, tiny_eigensystem, 0, q)
        assert "(0, 1)" in str(exc_info.value)

    def test_source_site_mismatch(self, current_expansion, tiny_eigensystem):
        with pytest.raises(ValueError) as exc_info:
            z_estimate(current_expansion, tiny_eigensystem, 1, 0.5)
        assert "다릅니다" in str(exc_info.value)

    def test_empty_expansions(self, tiny_eigensystem):
        """No expansion means an empty ledger and Z = 0"""
        z = z_estimate([], tiny_eigensystem, 0, 0.5)
        assert z.value == 0.0
        assert sum(z.breakdown.values()) == 0.0

    @pytest.mark.parametrize("source", [Source("current", 0), Source("mode_energy", 1)])
    def test_gauge_invariant(self, tiny_eigensystem, source):
        """Flipping eigenvector signs leaves Z unchanged"""
        flipped = tiny_eigensystem.flip_signs(np.array([1.0, -1.0, -1.0]))
        cfg = ExpansionConfig(order=1, term_budget=100_000)
        x = 0 if source.kind == "current" else 1
        base = z_estimate(build_expansion(source, tiny_eigensystem, cfg), tiny_eigensystem, x, 0.3, lam=0.2)
        other = z_estimate(build_expansion(source, flipped, cfg), flipped, x, 0.3, lam=0.2)
        assert other.value == pytest.approx(base.value, rel=1e-8)

    def test_mode_energy_site(self, tiny_eigensystem):
        cfg = ExpansionConfig(order=1, ledger=False)
        z = z_at_site(tiny_eigensystem, 0, 0.5, cfg, kind="mode_energy")
        assert z.kind == "mode_energy"
        assert z.value > 0
        assert sum(z.breakdown.values()) == pytest.approx(z.value)

    def test_profile_skips_left_edge(self, tiny_eigensystem):
        profile = z_profile(tiny_eigensystem, 0.5, ExpansionConfig(order=1))
        assert sorted(profile) == [0, 1]
        assert profile[1].to_dict()["site"] == 1


@pytest.mark.unit
class TestKernelEstimate:
    """Test the factorized kernel bound for rescaled currents"""

    def test_parts_sum_to_value(self, tiny_eigensystem):
        cfg = ExpansionConfig(order=1)
        by_site = {x: build_expansion(Source("current", x), tiny_eigensystem, cfg) for x in (0, 1)}
        z = z_kernel_estimate(by_site, tiny_eigensystem, 0, 0.5, decay_rate=1.0)
        assert z.value == pytest.approx(z.breakdown["G"] + z.breakdown["U"])
        assert z.value > 0

    def test_slower_decay_is_larger(self, tiny_eigensystem):
        cfg = ExpansionConfig(order=1)
        by_site = {x: build_expansion(Source("current", x), tiny_eigensystem, cfg) for x in (0, 1)}
        fast = z_kernel_estimate(by_site, tiny_eigensystem, 0, 0.5, decay_rate=5.0)
        slow = z_kernel_estimate(by_site, tiny_eigensystem, 0, 0.5, decay_rate=0.5)
        assert slow.value > fast.value

    def test_invalid_decay_rate(self, current_expansion, tiny_eigensystem):
        with pytest.raises(ValueError) as exc_info:
            z_kernel_estimate({0: current_expansion}, tiny_eigensystem, 0, 0.5, decay_rate=0.0)
        assert "decay_rate" in str(exc_info.value)

    def test_missing_site(self, current_expansion, tiny_eigensystem):
        with pytest.raises(ValueError) as exc_info:
            z_kernel_estimate({0: current_expansion}, tiny_eigensystem, 1, 0.5, decay_rate=1.0)
        assert "전개가 없습니다" in str(exc_info.value)


@pytest.mark.unit
class TestLocalApproximation:
    """Test Z on restricted intervals"""

    def test_full_window_has_no_difference(self, tiny_realization):
        report = z_local_approx(tiny_realization, 0, 5, 0.5, ExpansionConfig(order=1))
        assert report.difference == 0.0

    def test_restricted_window(self, realization):
        cfg = ExpansionConfig(order=1, ledger=False, exact_cap=20_000)
        report = z_local_approx(realization, 0, 2, 0.5, cfg)
        assert report.ell == 2
        assert report.z_local > 0
        assert report.difference >= 0

    def test_ell_must_be_positive(self, tiny_realization):
        with pytest.raises(ValueError) as exc_info:
            z_local_approx(tiny_realization, 0, 0, 0.5, ExpansionConfig())
        assert "ell" in str(exc_info.value)

    def test_local_study_recovers_rate(self):
        ells = [1, 2, 3, 4]
        diffs = {l: [2.0 * np.exp(-0.5 * l)] * 5 for l in ells}
        fit = local_approx_study(diffs)
        assert fit.C == pytest.approx(2.0)
        assert fit.c == pytest.approx(0.5)
        assert all(f == 1.0 for f in fit.fractions.values())

    def test_local_study_empty(self):
        with pytest.raises(ValueError):
            local_approx_study({})


@pytest.mark.unit
class TestBadEventsAndTails:
    """Test bad-event weights, tail exponents and Z covariance"""

    def test_bad_event_weights(self):
        w_plus, w_minus = bad_event_weights([0.0, 5.0, 5.0, 0.0, 5.0], M=1.0)
        np.testing.assert_array_equal(w_plus, [9, 4, 1, 4, 1])
        np.testing.assert_array_equal(w_minus, [1, 1, 4, 9, 1])

    def test_all_good_sites(self):
        w_plus, w_minus = bad_event_weights(np.zeros(4), M=1.0)
        np.testing.assert_array_equal(w_plus, 1)
        np.testing.assert_array_equal(w_minus, 1)

    def test_pareto_tail(self):
        """P(Z > M) = M^{-1.5}"""
        rng = np.random.default_rng(3)
        z = (1.0 - rng.random(200_000)) ** (-1.0 / 1.5)
        tail = fit_tail_exponent(z, thresholds=np.logspace(0.1, 1.5, 8))
        assert tail.mu == pytest.approx(1.5, abs=0.1)

    def test_default_thresholds(self):
        rng = np.random.default_rng(4)
        z = (1.0 - rng.random(50_000)) ** (-1.0 / 2.0)
        tail = fit_tail_exponent(z)
        assert len(tail.thresholds) == 12
        assert tail.mu > 0

    def test_tail_needs_positive_points(self):
        with pytest.raises(ValueError) as exc_info:
            fit_tail_exponent(np.ones(10), thresholds=[2.0, 3.0])
        assert "부족합니다" in str(exc_info.value)

    def test_z_covariance_decay(self, rng):
        z = rng.standard_normal((500, 5))
        z[:, 3] = z[:, 2]
        distances, cov, _, _ = z_covariance_decay(z, np.arange(5), x0=2)
        assert distances.tolist() == [0.0, 1.0, 2.0]
        assert cov[1] == pytest.approx(cov[0])
