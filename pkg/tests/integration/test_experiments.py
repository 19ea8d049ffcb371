"""
Integration tests for whole experiment runs.

Every experiment runs end to end through harness.run() with scaled-down
parameters; the tests read back CSV/JSON outputs the way a user would.
"""

import json

import numpy as np
import pytest

from kgchain.config import ConfigManager
from kgchain.errors import ConfigValidationError
from kgchain.harness import RunRecord, run
from kgchain.spectral import read_vectors

SMALL_SAMPLER = {"burn_in": 20, "thinning": 1}


@pytest.mark.integration
class TestSpectralExperiments:
    """spectrum / correlator / envelope / eigenmatch / minami"""

    def test_hand_made_spectrum(self, run_experiment):
        """ω² = (1, 1, 1) on three sites gives ν² = 1, 2, 4"""
        result = run_experiment("spectrum", model={"L": 1, "disorder": {"law": "fixed", "values": [1.0, 1.0, 1.0]}})
        np.testing.assert_allclose(result.column("spectrum.csv", "nu_sq"), [1.0, 2.0, 4.0], atol=1e-12)
        assert result.summary["max_residual"] < 1e-12

    def test_spectrum_dumps_vectors(self, run_experiment):
        result = run_experiment("spectrum", model={"L": 4, "seed": 2},
                                params={"n_realizations": 2, "dump_vectors": True})
        vectors, interval = read_vectors(result.out_dir / "vectors_0001.bin")
        assert vectors.shape == (9, 9)
        assert tuple(interval) == (-4, 4)
        assert "vectors_0001.bin" in result.record.files
        assert len(result.csv("spectrum.csv")) == 18

    def test_correlator(self, run_experiment):
        result = run_experiment("correlator", model={"L": 8, "seed": 3},
                                params={"n_realizations": 4, "max_distance": 4, "n_reference": 3})
        q = result.column("correlator.csv", "mean_Q")
        assert q[0] == pytest.approx(1.0)
        assert all(0 < v <= 1.0 + 1e-12 for v in q)
        assert result.summary["slope"] < 0

    def test_envelope_with_fixed_xi(self, run_experiment):
        result = run_experiment("envelope", model={"L": 6, "seed": 4},
                                params={"n_realizations": 3, "L_values": [4, 6], "xi": 1.0})
        assert set(result.summary["means"]) == {"4", "6"}
        assert all(0 < a < float("inf") for a in result.column("envelope.csv", "A"))

    def test_envelope_estimates_xi(self, run_experiment):
        result = run_experiment("envelope", model={"L": 8, "seed": 4},
                                params={"n_realizations": 4, "L_values": [8]})
        assert result.summary["xi"] > 0

    def test_envelope_site_outside(self, run_experiment):
        with pytest.raises(ConfigValidationError) as exc_info:
            run_experiment("envelope", params={"L_values": [2], "site": 5, "n_realizations": 1, "xi": 1.0})
        assert "밖에 있습니다" in str(exc_info.value)

    def test_eigenmatch(self, run_experiment):
        result = run_experiment("eigenmatch", model={"L": 10, "seed": 5},
                                params={"n_realizations": 3, "L_local": 5})
        rows = result.csv("eigenmatch.csv")
        assert len(rows) == 3
        assert all(int(r["pairs"]) > 0 for r in rows)
        assert 0 < result.summary["median_overlap_sq"] <= 1.0 + 1e-12

    def test_minami(self, run_experiment):
        result = run_experiment("minami", model={"seed": 6},
                                params={"interval_size": 6, "n_realizations": 300, "gammas": [1.0, 0.01, 0.1]})
        gammas = result.column("minami.csv", "gamma")
        p_hat = result.column("minami.csv", "p_hat")
        assert gammas == sorted(gammas)
        assert p_hat == sorted(p_hat)
        assert result.summary["realizations"] == 300


@pytest.mark.integration
class TestDenominatorExperiment:
    """denominator"""

    PARAMS = {"m": 2, "sigma": [1, -1], "interval_size": 5, "trials": 40, "epsilons": [1.0, 1e-3, 1e-2, 1e-1]}

    def test_tail_table(self, run_experiment):
        result = run_experiment("denominator", model={"L": 2, "seed": 8}, params=self.PARAMS)
        rows = result.csv("denominator.csv")
        assert [float(r["epsilon"]) for r in rows] == [1e-3, 1e-2, 1e-1, 1.0]
        assert all(r["sigma_pattern"] == "(1,-1)" for r in rows)
        assert len(result.csv("denominator_minima.csv")) == 40
        assert result.summary["sigma_pattern"] == "(1,-1)"

    def test_workers_do_not_change_results(self, run_experiment):
        one = run_experiment("denominator", model={"seed": 8}, params=self.PARAMS, label="w1")
        two = run_experiment("denominator", model={"seed": 8}, params=self.PARAMS, workers=2, label="w2")
        for name in ("denominator.csv", "denominator_minima.csv", "summary.json"):
            assert (one.out_dir / name).read_bytes() == (two.out_dir / name).read_bytes()

    def test_sigma_length_mismatch(self, run_experiment):
        with pytest.raises(ConfigValidationError) as exc_info:
            run_experiment("denominator", params={**self.PARAMS, "m": 4})
        assert "sigma 길이" in str(exc_info.value)

    def test_odd_sigma_rejected(self, run_experiment):
        with pytest.raises(ConfigValidationError):
            run_experiment("denominator", params={**self.PARAMS, "m": 3, "sigma": [1, 1, -1]})


@pytest.mark.integration
class TestGibbsAndDynamics:
    """gibbs_check / decorrelation / current / green_kubo / noneq_current / wavepacket"""

    def test_gibbs_check(self, run_experiment):
        result = run_experiment("gibbs_check", model={"L": 2, "lambda": 0.3, "seed": 9}, params={
            "n_harmonic": 4000, "n_chains": 16, "samples_per_chain": 20, "burn_in": 50, "thinning": 2,
        })
        assert len(result.csv("gibbs_harmonic.csv")) == 5
        assert len(result.csv("gibbs_virial.csv")) == 5
        assert result.summary["harmonic_max_abs_z"] < 6.0
        assert np.isfinite(result.summary["virial_max_abs_z"])

    def test_decorrelation(self, run_experiment):
        result = run_experiment("decorrelation", model={"L": 3, "seed": 10}, params={
            "lambdas": [0.0, 0.5], "t": 2.0, "n_states": 8, **SMALL_SAMPLER,
        })
        c_bar = result.summary["c_bar"]
        assert result.summary["c_bar_at_zero"] < 1e-20
        assert c_bar[1] > c_bar[0]
        assert len(result.csv("decorrelation_modes.csv")) == 2 * 7

    def test_current(self, run_experiment):
        result = run_experiment("current", model={"L": 3, "lambda": 0.1, "seed": 11}, params={
            "n_trajectories": 6, "t_max": 2.0, "record_every": 10, **SMALL_SAMPLER,
        })
        rows = result.csv("current.csv")
        assert len(rows) == 11
        assert float(rows[0]["J0_mean"]) == 0.0
        assert max(float(r["energy_drift"]) for r in rows) < 1e-2
        assert "final_decade_slope" in result.summary

    def test_current_site_at_left_edge(self, run_experiment, tmp_path):
        with pytest.raises(ConfigValidationError) as exc_info:
            run_experiment("current", model={"L": 3}, params={"x0": -3, "n_trajectories": 2, "t_max": 0.1},
                           label="edge")
        assert "내부 결합 사이트" in str(exc_info.value)
        record = RunRecord.load(tmp_path / "edge")
        assert (record.status, record.abort["reason"]) == ("aborted", "validation")

    def test_unstable_step_rejected(self, run_experiment):
        with pytest.raises(ConfigValidationError) as exc_info:
            run_experiment("current", model={"L": 3}, params={"dt": 1.0, "n_trajectories": 2, "t_max": 1.0})
        assert "안정성" in str(exc_info.value)

    def test_green_kubo_caps_time(self, run_experiment):
        result = run_experiment("green_kubo", model={"L": 3, "seed": 12}, params={
            "lambdas": [0.5, 1.0], "order": 1, "tau": 1.0, "t_cap": 1.5, "n_trajectories": 4, **SMALL_SAMPLER,
        })
        rows = result.csv("green_kubo.csv")
        assert [int(r["capped"]) for r in rows] == [1, 0]
        np.testing.assert_allclose([float(r["t"]) for r in rows], [1.5, 1.0], atol=1e-9)
        assert all(float(r["rescaled_sq_mean"]) >= 0 for r in rows)

    def test_noneq_current(self, run_experiment):
        result = run_experiment("noneq_current", model={"L": 3, "lambda": 0.1, "seed": 13}, params={
            "n_trajectories": 20, "t_max": 1.0, "record_every": 10, "x0": 1,
        })
        rows = result.csv("noneq_current.csv")
        assert len(rows) == 6
        assert float(rows[0]["J0_mean"]) == 0.0
        assert np.isfinite(result.summary["max_q4_ratio"])

    @pytest.mark.parametrize("lam, scheme", [(0.5, "verlet"), (0.0, "exact_harmonic")])
    def test_wavepacket(self, run_experiment, lam, scheme):
        result = run_experiment("wavepacket", model={"L": 5, "lambda": lam, "seed": 14}, params={
            "n_realizations": 2, "t_max": 2.0, "record_every": 20, "scheme": scheme,
        })
        rows = result.csv("wavepacket.csv")
        assert len(rows) == 6
        assert result.summary["w_initial"] == 0.0
        assert result.summary["w_final"] > 0.0
        assert result.summary["max_energy_drift"] < 1e-2

    def test_exact_harmonic_needs_zero_lambda(self, run_experiment):
        with pytest.raises(ConfigValidationError):
            run_experiment("wavepacket", model={"L": 2, "lambda": 0.1}, params={"scheme": "exact_harmonic"})


@pytest.mark.integration
class TestExpansionExperiments:
    """expansion_residual / z_stats"""

    def test_expansion_residual(self, run_experiment):
        result = run_experiment("expansion_residual", model={"lambda": 0.1, "seed": 15}, params={
            "interval_size": 3, "order": 2, "sources": ["current"], "n_states": 10, "closed_form_size": 3,
        })
        assert max(result.column("expansion_residual.csv", "relative")) < 1e-8
        assert all(d < 1e-10 for d in result.column("expansion_ledger.csv", "max_relative_diff"))
        assert result.summary["closed_form"]["max_relative_diff"] < 1e-12
        for i in (1, 2):
            lines = (result.out_dir / f"ledger_current_u{i}.jsonl").read_text(encoding="utf-8").splitlines()
            assert json.loads(lines[0])["order"] == i

    def test_unknown_source(self, run_experiment):
        with pytest.raises(ConfigValidationError) as exc_info:
            run_experiment("expansion_residual", params={"sources": ["heat"]})
        assert "알 수 없는 소스" in str(exc_info.value)

    def test_z_stats(self, run_experiment):
        result = run_experiment("z_stats", model={"lambda": 0.1, "seed": 16}, params={
            "interval_sizes": [5], "n_realizations": 4, "order": 1, "radius": 1, "ells": [1, 2],
            "decay_rate": 1.0,
        })
        rows = result.csv("z_values.csv")
        assert len(rows) == 4 * 4
        assert all(float(r["Z"]) >= 0 for r in rows)
        for r in rows:
            assert float(r["G"]) + float(r["U"]) == pytest.approx(float(r["Z"]))
        local = [r for r in result.csv("z_local.csv") if r["ell"] == "2"]
        assert all(float(r["difference"]) == 0.0 for r in local)
        assert len(result.csv("z_kernel.csv")) == 4
        assert len(result.csv("z_bad_events.csv")) == 4 * 4

    def test_z_stats_workers_do_not_change_results(self, run_experiment):
        params = {"interval_sizes": [5], "n_realizations": 3, "order": 1, "radius": 1, "ells": [1]}
        one = run_experiment("z_stats", model={"seed": 17, "lambda": 0.1}, params=params, label="w1")
        two = run_experiment("z_stats", model={"seed": 17, "lambda": 0.1}, params=params, workers=2, label="w2")
        assert (one.out_dir / "z_values.csv").read_bytes() == (two.out_dir / "z_values.csv").read_bytes()

    def test_z_stats_interval_too_small(self, run_experiment):
        with pytest.raises(ConfigValidationError):
            run_experiment("z_stats", params={"interval_sizes": [2]})


@pytest.mark.integration
@pytest.mark.slow
class TestAcceptanceScale:
    """Acceptance-scale runs (minutes)"""

    def test_commutator_identity(self, tmp_path):
        config = ConfigManager.validate({
            "experiment": "expansion_residual",
            "model": {"lambda": 0.1, "seed": 1},
            "params": {"interval_size": 5, "order": 2, "n_states": 100, "closed_form_size": 3},
        })
        run(config, tmp_path)
        summary = json.loads((tmp_path / "summary.json").read_text(encoding="utf-8"))
        for source in summary["sources"].values():
            assert source["max_relative_residual"] <= 1e-8
        assert summary["closed_form"]["max_relative_diff"] <= 1e-12
