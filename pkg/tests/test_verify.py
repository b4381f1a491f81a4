"""Tests for the verification experiments on small, fast instances.

The full-size runs with the certified budgets live in test_acceptance;
here each experiment is exercised on a shrunken instance plus its report
plumbing, so failures localize quickly.
"""

import json

import numpy as np
import pytest

from spatgames.dynamics import IntegratorConfig, euler_step
from spatgames.fixtures import standard_config, standard_ensemble, standard_fixture
from spatgames.verify import (
    DISC_SLACK_FACTOR,
    ExperimentReport,
    _run_jobs,
    cylinder_observables,
    eulerian_residual_experiment,
    flow_lipschitz_experiment,
    folk_theorem_suite,
    h_convergence_experiment,
    n_convergence_experiment,
    picard_experiment,
    stability_experiment,
    stochastic_consistency_experiment,
    write_report,
)


def _double(x):
    return 2 * x


class TestReportPlumbing:
    def test_to_dict_uses_pass_key(self):
        rep = ExperimentReport("demo", {"a": 1.0}, True, 0.5, {"k": 1})
        d = rep.to_dict()
        assert d["pass"] is True
        assert d["name"] == "demo"
        assert d["quantities"] == {"a": 1.0}

    def test_write_report_files(self, tmp_path):
        rep = ExperimentReport("demo", {"a": 1.0}, True, 0.25)
        path = write_report(rep, tmp_path)
        assert path == tmp_path / "demo.json"
        loaded = json.loads(path.read_text())
        assert loaded["pass"] is True
        write_report(ExperimentReport("other", {}, False, 0.1), tmp_path)
        lines = (tmp_path / "summary.csv").read_text().strip().splitlines()
        assert lines[0] == "name,pass,runtime_s"
        assert lines[1].startswith("demo,true,")
        assert lines[2].startswith("other,false,")


class TestRunJobs:
    def test_sequential_matches_parallel(self):
        args = [(i,) for i in range(7)]
        seq = _run_jobs(_double, args, threads=1)
        par = _run_jobs(_double, args, threads=2)
        assert seq == [0, 2, 4, 6, 8, 10, 12]
        assert par == seq

    def test_single_job_stays_in_process(self):
        assert _run_jobs(_double, [(21,)], threads=8) == [42]


class TestCylinderObservables:
    def test_names_and_mass_rate(self):
        obs = cylinder_observables(np.array([1.0, 0.0, -1.0]))
        names = [name for name, _, _ in obs]
        assert names == [
            "mass", "x1", "moment", "x1_moment", "x1_squared", "moment_squared",
        ]
        _, mass_value, mass_rate = obs[0]
        ens = standard_ensemble(n=4)
        assert mass_value(ens) == pytest.approx(1.0, abs=1e-15)
        assert mass_rate(ens, None, None) == 0.0

    def test_hand_values(self):
        from spatgames.model import Ensemble

        ens = Ensemble(
            positions=np.array([[1.0, 0.0], [3.0, 0.0]]),
            strategies=np.array([[1.0, 0.0, 0.0], [0.0, 0.5, 0.5]]),
            masses=np.array([0.5, 0.5]),
        )
        obs = dict((name, value) for name, value, _ in cylinder_observables(
            np.array([2.0, 0.0, -2.0])
        ))
        assert obs["x1"](ens) == pytest.approx(2.0)
        # moments: agent one has <g,sigma> = 2, agent two has -1
        assert obs["moment"](ens) == pytest.approx(0.5 * 2.0 + 0.5 * (-1.0))
        assert obs["x1_moment"](ens) == pytest.approx(0.5 * 1.0 * 2.0 + 0.5 * 3.0 * (-1.0))
        assert obs["x1_squared"](ens) == pytest.approx(0.5 * 1.0 + 0.5 * 9.0)
        assert obs["moment_squared"](ens) == pytest.approx(0.5 * 4.0 + 0.5 * 1.0)

    def test_linear_observables_balance_along_a_step(self):
        from spatgames.model import ensemble_drift

        model, ens = standard_fixture(n=6)
        h = 1e-3
        after = euler_step(ens, h, model)
        dx, ds = ensemble_drift(ens, model)
        for name, value, rate in cylinder_observables(np.array([1.0, 0.4, -0.7])):
            if name not in ("mass", "x1", "moment"):
                continue
            defect = abs(value(after) - value(ens) - h * rate(ens, dx, ds))
            assert defect <= 1e-14, name


class TestStabilityExperiment:
    def test_identical_ensembles_trivially_stable(self):
        model, ens = standard_fixture(n=6)
        cfg = standard_config(T=0.05, store_stride=10)
        rep = stability_experiment(model, ens, ens, cfg)
        assert rep.passed
        assert rep.quantities["w1_initial"] == 0.0
        assert rep.quantities["worst_ratio"] == 0.0

    def test_small_perturbed_run_passes(self):
        model, ens = standard_fixture(n=8)
        cfg = standard_config(T=0.05, store_stride=10)
        rep = stability_experiment(model, ens, None, cfg, perturbation=0.02)
        assert rep.passed
        assert rep.quantities["w1_initial"] > 0.0
        assert rep.quantities["worst_ratio"] <= 1.0
        assert rep.quantities["slack"] == pytest.approx(
            1.0 + DISC_SLACK_FACTOR * model.ledger.L * cfg.h
        )
        assert rep.name == "stability"
        assert rep.runtime_s > 0.0


class TestFlowLipschitzExperiment:
    def test_small_instance_passes(self):
        model, ens = standard_fixture(n=8)
        cfg = standard_config(T=0.05, store_stride=5)
        rep = flow_lipschitz_experiment(model, ens, cfg, n_pairs=6, seed=1)
        assert rep.passed
        assert rep.quantities["worst_ratio"] <= 1.0
        assert rep.quantities["step_tv_ratio"] <= 1.0
        # probe separations really span a range
        assert rep.quantities["min_separation"] < rep.quantities["max_separation"]
        assert rep.name == "flow-lipschitz"


class TestPicardExperiment:
    def test_small_instance_passes(self):
        cfg = IntegratorConfig(scheme="euler", h=2e-3, T=0.1)
        rep = picard_experiment(cfg=cfg, n_agents=6)
        assert rep.passed
        assert rep.quantities["contraction_factor"] <= rep.quantities["contraction_bound"]
        assert rep.quantities["solve_vs_integrate"] <= rep.quantities["solve_tol"]
        assert rep.quantities["iterations"] >= 1.0
        assert rep.quantities["residual_final"] < 1e-6


class TestHConvergenceExperiment:
    def test_short_horizon_windows(self):
        model, ens = standard_fixture(n=8)
        rep = h_convergence_experiment(
            model, ens, h_list=(4e-3, 2e-3), h_ref=2.5e-4, T=0.2
        )
        assert rep.passed
        assert 1.6 <= rep.quantities["euler_ratio_h=0.004"] <= 2.4
        assert 3.2 <= rep.quantities["heun_ratio_h=0.004"] <= 4.8

    def test_incompatible_steps_rejected(self):
        model, ens = standard_fixture(n=4)
        with pytest.raises(ValueError, match="does not divide"):
            h_convergence_experiment(model, ens, h_list=(4e-3, 3e-3), h_ref=1e-3, T=0.1)


class TestEulerianExperiment:
    def test_small_instance_passes(self):
        model, ens = standard_fixture(n=8)
        rep = eulerian_residual_experiment(model, ens, h_list=(8e-3, 4e-3), T=0.2)
        assert rep.passed
        assert rep.quantities["mass_C_h=0.008"] <= 1e-12
        assert rep.quantities["x1_C_h=0.008"] <= 1e-8
        # quadratic observables have a genuine O(h) residual
        assert rep.quantities["x1_squared_C_h=0.008"] > 1e-8


class TestNConvergenceExperiment:
    def test_chain_bound_and_structure(self):
        cfg = standard_config(h=2e-3, T=0.2, store_stride=20)
        rep = n_convergence_experiment(
            n_list=(4, 8, 16), n_seeds=4, cfg=cfg, seed=2, check_stride=5
        )
        # the certified chain bound must hold regardless of median noise
        assert rep.quantities["worst_chain_ratio"] <= 1.0
        assert rep.quantities["median_w1_N=4"] > 0.0
        assert rep.quantities["median_w1_N=8"] > 0.0
        assert rep.name == "converge-n"

    def test_thread_count_does_not_change_results(self):
        cfg = standard_config(h=2e-3, T=0.1, store_stride=20)
        kwargs = dict(n_list=(4, 8), n_seeds=3, cfg=cfg, seed=5, check_stride=5)
        seq = n_convergence_experiment(threads=1, **kwargs)
        par = n_convergence_experiment(threads=2, **kwargs)
        assert seq.quantities["median_w1_N=4"] == par.quantities["median_w1_N=4"]
        assert seq.quantities["worst_chain_ratio"] == par.quantities["worst_chain_ratio"]


class TestFolkSuite:
    def test_classical_results(self):
        rep = folk_theorem_suite()
        assert rep.passed
        assert rep.quantities["rps_drift"] <= 1e-8
        assert rep.quantities["pd_tv_to_defection"] <= 1e-3
        assert rep.quantities["dominated_mass"] <= 1e-6
        for name in ("rps", "pd", "dominated"):
            assert rep.quantities[f"reference_tv_{name}"] <= 1e-4


class TestStochasticConsistency:
    def test_reduced_sample_count_passes(self):
        model, ens = standard_fixture(n=8)
        rep = stochastic_consistency_experiment(model, ens, n_samples=20_000)
        assert rep.passed
        assert rep.quantities["sigma_discrepancy"] <= 1e-12
        assert rep.quantities["worst_normalized_gap"] <= 1.0
