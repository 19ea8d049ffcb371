"""
Unit tests for dynamics.py - integrators, currents and decorrelation
"""
import numpy as np
import pytest

from kgchain.dynamics import (
    CurrentAccumulator,
    IntegratorConfig,
    accumulate_current,
    decorrelation,
    energy_drift,
    evolve,
    exact_harmonic_evolve,
    local_current,
    local_currents,
    mode_energies,
    mode_energy,
    rescaled_current,
    step,
    trajectory,
    wavepacket_width,
)
from kgchain.errors import NonFiniteStateError
from kgchain.gibbs import SamplerConfig, sample_gibbs
from kgchain.model import ChainState, DisorderLaw, ModelConfig, hamiltonian, local_energies, sample_disorder
from kgchain.streams import derive_stream


def _flip(state):
    return ChainState(state.q, -state.p, state.t)


@pytest.mark.unit
class TestIntegratorConfig:
    """Test IntegratorConfig validation"""

    def test_unknown_scheme(self):
        with pytest.raises(ValueError) as exc_info:
            IntegratorConfig(dt=0.01, scheme="rk4")
        assert "알 수 없는 적분기" in str(exc_info.value)

    @pytest.mark.parametrize("kwargs", [{"dt": 0.0}, {"dt": 0.01, "t_max": -1.0}, {"dt": 0.01, "record_every": 0}])
    def test_invalid_values(self, kwargs):
        with pytest.raises(ValueError):
            IntegratorConfig(**kwargs)

    def test_n_steps(self):
        assert IntegratorConfig(dt=0.05, t_max=1.0).n_steps == 20

    def test_stability_margin(self, realization):
        """dt·ν_+ above the margin is rejected before integrating"""
        with pytest.raises(ValueError) as exc_info:
            IntegratorConfig(dt=0.5).check_stability(realization)
        assert "안정성" in str(exc_info.value)

    def test_exact_harmonic_skips_stability(self, realization):
        IntegratorConfig(dt=10.0, scheme="exact_harmonic").check_stability(realization)


@pytest.mark.unit
class TestIntegrators:
    """Test symplectic integrators against the exact harmonic flow"""

    @pytest.mark.parametrize("scheme, tolerance", [("verlet", 1e-4), ("yoshida4", 1e-5)])
    def test_energy_conservation(self, random_state, realization, scheme, tolerance):
        cfg = IntegratorConfig(dt=0.005, scheme=scheme, t_max=5.0, record_every=20)
        drift = energy_drift(trajectory(random_state, realization, 0.5, cfg), realization, 0.5)
        assert drift < tolerance

    @pytest.mark.parametrize("scheme", ["verlet", "yoshida4"])
    def test_time_reversal(self, random_state, realization, scheme):
        """Flip momenta, integrate back, flip again: the start is recovered"""
        cfg = IntegratorConfig(dt=0.02, scheme=scheme)
        forward = evolve(random_state, realization, 0.3, cfg, 2.0)
        back = evolve(_flip(forward), realization, 0.3, cfg, 2.0)
        np.testing.assert_allclose(back.q, random_state.q, atol=1e-10)
        np.testing.assert_allclose(-back.p, random_state.p, atol=1e-10)

    @pytest.mark.parametrize("scheme, low, high", [("verlet", 3.5, 4.5), ("yoshida4", 12.0, 20.0)])
    def test_convergence_order(self, random_state, realization, eigensystem, scheme, low, high):
        """Halving dt shrinks the error by 2^order"""
        exact = exact_harmonic_evolve(random_state, eigensystem, 1.0)
        errors = []
        for dt in (0.05, 0.025):
            out = evolve(random_state, realization, 0.0, IntegratorConfig(dt=dt, scheme=scheme), 1.0)
            errors.append(np.max(np.abs(out.q - exact.q)))
        assert low < errors[0] / errors[1] < high

    def test_exact_harmonic_preserves_mode_energies(self, random_state, eigensystem):
        later = exact_harmonic_evolve(random_state, eigensystem, 7.3)
        np.testing.assert_allclose(mode_energies(later, eigensystem), mode_energies(random_state, eigensystem), rtol=1e-10)
        assert later.t == pytest.approx(7.3)

    def test_exact_harmonic_scheme_requires_lambda_zero(self, random_state, realization, eigensystem):
        cfg = IntegratorConfig(dt=0.1, scheme="exact_harmonic")
        with pytest.raises(ValueError) as exc_info:
            evolve(random_state, realization, 0.1, cfg, 1.0, eigensystem)
        assert "λ = 0" in str(exc_info.value)

    def test_exact_harmonic_scheme_requires_eigensystem(self, random_state, realization):
        with pytest.raises(ValueError) as exc_info:
            step(random_state, realization, 0.0, IntegratorConfig(dt=0.1, scheme="exact_harmonic"))
        assert "EigenSystem" in str(exc_info.value)

    def test_batch_matches_single(self, random_batch, realization):
        """Each row of a batch evolves independently"""
        cfg = IntegratorConfig(dt=0.02, scheme="yoshida4")
        batch = evolve(random_batch, realization, 0.2, cfg, 0.5)
        single = evolve(ChainState(random_batch.q[3], random_batch.p[3]), realization, 0.2, cfg, 0.5)
        np.testing.assert_allclose(batch.q[3], single.q, atol=1e-13)

    def test_trajectory_records(self, random_state, realization):
        cfg = IntegratorConfig(dt=0.01, t_max=0.1, record_every=3)
        times = [s.t for s in trajectory(random_state, realization, 0.0, cfg)]
        np.testing.assert_allclose(times, [0.0, 0.03, 0.06, 0.09, 0.1])

    def test_step_does_not_mutate_input(self, random_state, realization):
        q0 = random_state.q.copy()
        step(random_state, realization, 0.1, IntegratorConfig(dt=0.01))
        np.testing.assert_array_equal(random_state.q, q0)

    def test_non_finite_state_aborts(self, realization):
        q = np.zeros(realization.size)
        q[2] = np.nan
        with pytest.raises(NonFiniteStateError) as exc_info:
            step(ChainState(q, np.zeros(realization.size)), realization, 0.0, IntegratorConfig(dt=0.01))
        assert exc_info.value.reason == "non_finite_state"
        assert "유한하지 않은" in str(exc_info.value)


@pytest.mark.unit
class TestCurrents:
    """Test local currents and the continuity equation"""

    def test_continuity_equation(self, random_state, realization):
        """dH_x/dt = j_x - j_{x+1} with zero flux through the free ends"""
        h, lam = 1e-4, 0.4
        cfg = IntegratorConfig(dt=h, scheme="yoshida4")
        ahead = evolve(random_state, realization, lam, cfg, h)
        behind = _flip(evolve(_flip(random_state), realization, lam, cfg, h))
        dHdt = (local_energies(ahead, realization, lam) - local_energies(behind, realization, lam)) / (2 * h)
        j = np.concatenate([[0.0], local_currents(random_state, realization), [0.0]])
        np.testing.assert_allclose(dHdt, j[:-1] - j[1:], atol=1e-6)

    def test_local_current_by_site(self, random_state, realization):
        currents = local_currents(random_state, realization)
        assert local_current(random_state, realization, 0) == pytest.approx(currents[4])

    def test_left_edge_has_no_current(self, random_state, realization):
        with pytest.raises(ValueError) as exc_info:
            local_current(random_state, realization, -5)
        assert "왼쪽 끝" in str(exc_info.value)

    def test_accumulator_trapezoid(self):
        acc = CurrentAccumulator(site=None)
        for t in np.linspace(0.0, 3.0, 31):
            acc.add(t, 2.0 * t)
        assert float(acc.J) == pytest.approx(9.0)
        assert acc.elapsed == pytest.approx(3.0)
        assert acc.samples == 31

    def test_accumulator_continues(self, random_state, realization):
        """Passing the accumulator back in extends the same integral"""
        cfg = IntegratorConfig(dt=0.01, t_max=1.0)
        states = list(trajectory(random_state, realization, 0.2, cfg))
        whole = accumulate_current(states, realization, 0)
        part = accumulate_current(states[:50], realization, 0)
        part = accumulate_current(states[49:], realization, 0, part)
        assert float(part.J) == pytest.approx(float(whole.J), rel=1e-12)

    def test_accumulate_rejects_edge(self, random_state, realization):
        with pytest.raises(ValueError) as exc_info:
            accumulate_current([random_state], realization, -5)
        assert "내부 사이트" in str(exc_info.value)

    def test_rescaled_current_needs_elapsed_time(self, random_state, realization):
        with pytest.raises(ValueError) as exc_info:
            rescaled_current([random_state], realization)
        assert "t = 0" in str(exc_info.value)


@pytest.mark.unit
class TestObservables:
    """Test mode energies, decorrelation and packet width"""

    def test_mode_energies_sum_to_harmonic_energy(self, random_state, realization, eigensystem):
        total = mode_energies(random_state, eigensystem).sum()
        assert total == pytest.approx(hamiltonian(random_state, realization, 0.0), rel=1e-12)

    def test_mode_energy_index_checked(self, random_state, eigensystem):
        with pytest.raises(ValueError) as exc_info:
            mode_energy(random_state, eigensystem, eigensystem.n)
        assert "모드 인덱스" in str(exc_info.value)

    def test_decorrelation_vanishes_without_anharmonicity(self, random_batch, realization, eigensystem):
        cfg = IntegratorConfig(dt=0.1, scheme="exact_harmonic")
        result = decorrelation(realization, eigensystem, 0.0, 50.0, random_batch, cfg)
        assert result.c_bar < 1e-20
        assert np.all(result.variance_bound_ok)

    def test_decorrelation_at_time_zero(self, random_batch, realization, eigensystem):
        result = decorrelation(realization, eigensystem, 0.5, 0.0, random_batch, IntegratorConfig(dt=0.01))
        np.testing.assert_array_equal(result.c_k, 0.0)

    def test_decorrelation_grows_with_lambda(self, random_batch, realization, eigensystem):
        cfg = IntegratorConfig(dt=0.02, scheme="yoshida4")
        weak = decorrelation(realization, eigensystem, 0.05, 5.0, random_batch, cfg)
        strong = decorrelation(realization, eigensystem, 1.0, 5.0, random_batch, cfg)
        assert strong.c_bar > weak.c_bar > 0

    def test_decorrelation_exact_flow_rejects_anharmonicity(self, random_batch, realization, eigensystem):
        cfg = IntegratorConfig(dt=0.02, scheme="exact_harmonic")
        with pytest.raises(ValueError) as exc_info:
            decorrelation(realization, eigensystem, 0.5, 50.0, random_batch, cfg)
        assert "λ = 0" in str(exc_info.value)

    def test_decorrelation_empty_ensemble(self, realization, eigensystem):
        empty = ChainState(np.zeros((0, realization.size)), np.zeros((0, realization.size)))
        with pytest.raises(ValueError) as exc_info:
            decorrelation(realization, eigensystem, 0.0, 1.0, empty, IntegratorConfig(dt=0.01))
        assert "비어 있습니다" in str(exc_info.value)

    def test_wavepacket_width_of_single_site(self):
        q = np.zeros(11)
        q[8] = 0.3
        assert wavepacket_width(ChainState(q, np.zeros(11)), (-5, 5)) == pytest.approx(3.0)

    def test_wavepacket_width_of_zero_packet(self):
        with pytest.raises(ValueError) as exc_info:
            wavepacket_width(ChainState(np.zeros(3), np.zeros(3)), (0, 2))
        assert "영 패킷" in str(exc_info.value)


@pytest.mark.unit
@pytest.mark.slow
class TestLongHorizonDrift:
    """Test energy drift over t = 1e4 at dt = 0.02 from a Gibbs start (L = 50, λ = 0.1)"""

    @pytest.fixture(scope="class")
    def gibbs_start(self):
        model = ModelConfig(L=50, eta=1.0, lam=0.1, disorder=DisorderLaw("uniform", 0.5, 1.5), seed=3)
        realization = sample_disorder(model, model.interval, derive_stream(model.seed, "drift", "disorder"))
        sampler = SamplerConfig(burn_in=500, samples_per_chain=1, n_chains=1)
        samples = sample_gibbs(realization, model.lam, sampler, derive_stream(model.seed, "drift", "initial"))
        return realization, ChainState(samples.state.q[0], samples.state.p[0])

    @pytest.mark.parametrize("scheme, tolerance", [("verlet", 1e-4), ("yoshida4", 1e-5)])
    def test_energy_drift(self, gibbs_start, scheme, tolerance):
        realization, start = gibbs_start
        cfg = IntegratorConfig(dt=0.02, scheme=scheme, t_max=1e4, record_every=500)
        drift = energy_drift(trajectory(start, realization, 0.1, cfg), realization, 0.1)
        assert drift < tolerance
