"""Acceptance suite: full-size checks of every certified guarantee.

Each test runs one verification at production scale, appends a single
PASS/FAIL line to ``VERDICTS`` (echoed in the terminal summary) and
enforces both the quantitative tolerance and a wall-clock budget.
"""

import json
import subprocess
import sys
import time

import numpy as np

from spatgames.bruteforce import (
    bl_norm_bruteforce,
    w1_ensembles_bruteforce,
    w1_on_U_bruteforce,
)
from spatgames.dynamics import IntegratorConfig, integrate
from spatgames.fixtures import standard_fixture, standard_model
from spatgames.model import Ensemble
from spatgames.spaces import bl_norm, check_norm_equivalence, w1_on_U
from spatgames.transport import w1_ensembles
from spatgames.verify import (
    eulerian_residual_experiment,
    flow_lipschitz_experiment,
    folk_theorem_suite,
    h_convergence_experiment,
    n_convergence_experiment,
    picard_experiment,
    stability_experiment,
    stochastic_consistency_experiment,
)

from conftest import random_point_space

VERDICTS: list[str] = []


def _verdict(ok: bool, label: str, detail: str) -> None:
    VERDICTS.append(f"{'PASS' if ok else 'FAIL'}  {label}  [{detail}]")
    assert ok, f"{label}: {detail}"


def test_01_norm_equivalence():
    """BL <= W1 <= (1+radius) BL and W1 <= radius TV on 200 random pairs."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(101)
    failures = 0
    for _ in range(200):
        k = int(rng.integers(2, 7))
        sp = random_point_space(rng, k)
        mu = rng.dirichlet(np.ones(k))
        nu = rng.dirichlet(np.ones(k))
        if not check_norm_equivalence(mu, nu, sp, tol=1e-9).ok:
            failures += 1
    elapsed = time.perf_counter() - t0
    _verdict(
        failures == 0 and elapsed < 10.0,
        "norm equivalence (200 pairs, K<=6, tol 1e-9)",
        f"failures={failures}, {elapsed:.1f}s < 10s",
    )


def test_02_oracle_equivalence():
    """LP routes match brute-force enumeration on 100 small instances."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(202)
    worst = 0.0
    for _ in range(100):
        k = int(rng.integers(2, 5))
        sp = random_point_space(rng, k)
        mu = rng.dirichlet(np.ones(k))
        nu = rng.dirichlet(np.ones(k))
        worst = max(worst, abs(bl_norm(mu - nu, sp) - bl_norm_bruteforce(mu - nu, sp)))
        worst = max(worst, abs(w1_on_U(mu, nu, sp) - w1_on_U_bruteforce(mu, nu, sp)))
        na, nb = int(rng.integers(2, 5)), int(rng.integers(2, 5))
        ens_a = Ensemble(
            rng.normal(size=(na, 2)),
            rng.dirichlet(np.ones(k), size=na),
            rng.dirichlet(np.ones(na) * 5.0),
        )
        ens_b = Ensemble(
            rng.normal(size=(nb, 2)),
            rng.dirichlet(np.ones(k), size=nb),
            rng.dirichlet(np.ones(nb) * 5.0),
        )
        value, _ = w1_ensembles(ens_a, ens_b, sp)
        worst = max(worst, abs(value - w1_ensembles_bruteforce(ens_a, ens_b, sp)))
    elapsed = time.perf_counter() - t0
    _verdict(
        worst <= 1e-9 and elapsed < 30.0,
        "transport oracles (100 instances, K<=4, N<=4, tol 1e-9)",
        f"worst gap={worst:.2e}, {elapsed:.1f}s < 30s",
    )


def test_03_simplex_preservation():
    """2000 guarded Euler steps at h = 0.5 theta_max never clamp."""
    t0 = time.perf_counter()
    model, ens = standard_fixture()
    h = 0.5 * model.ledger.theta_max
    cfg = IntegratorConfig(scheme="euler", h=h, T=2000 * h, store_stride=1)
    traj = integrate(ens, cfg, model)
    sum_err = max(
        float(np.max(np.abs(state.strategies.sum(axis=1) - 1.0)))
        for state in traj.states
    )
    neg = min(float(state.strategies.min()) for state in traj.states)
    elapsed = time.perf_counter() - t0
    _verdict(
        traj.clamp_events == 0 and sum_err <= 1e-9 and neg >= 0.0 and elapsed < 5.0,
        "simplex preservation (h=0.5 theta_max, 2000 steps)",
        f"clamps={traj.clamp_events}, max |sum-1|={sum_err:.1e}, "
        f"min weight={neg:.1e}, {elapsed:.1f}s < 5s",
    )


def test_04_stability_bound():
    """Two nearby runs separate no faster than exp(2 L t) allows."""
    t0 = time.perf_counter()
    rep = stability_experiment()
    elapsed = time.perf_counter() - t0
    _verdict(
        rep.passed and elapsed < 60.0,
        "stability bound exp(2Lt) at every stored time",
        f"W1(0)={rep.quantities['w1_initial']:.3f}, "
        f"worst ratio={rep.quantities['worst_ratio']:.3f}, {elapsed:.1f}s < 60s",
    )


def test_05_tv_speed_bound():
    """Per-agent strategy speed stays under h L_J diam (1 + 10 L h)."""
    t0 = time.perf_counter()
    model, ens = standard_fixture()
    cfg = IntegratorConfig(scheme="euler", h=1e-3, T=0.5, store_stride=1)
    traj = integrate(ens, cfg, model)
    led = model.ledger
    cap = cfg.h * led.L_J * model.space.diam * (1.0 + 10.0 * led.L * cfg.h)
    worst = 0.0
    for before, after in zip(traj.states, traj.states[1:]):
        step_tv = float(np.abs(after.strategies - before.strategies).sum(axis=1).max())
        worst = max(worst, step_tv / cap)
    elapsed = time.perf_counter() - t0
    _verdict(
        worst <= 1.0 and elapsed < 5.0,
        "per-step total-variation speed bound",
        f"worst ratio={worst:.3f}, cap={cap:.2e}, {elapsed:.1f}s < 5s",
    )


def test_06_flow_lipschitz_bound():
    """32 probe pairs separate no faster than exp(L t) under the flow."""
    t0 = time.perf_counter()
    rep = flow_lipschitz_experiment(n_pairs=32)
    elapsed = time.perf_counter() - t0
    _verdict(
        rep.passed and rep.quantities["worst_ratio"] <= 1.0 and elapsed < 30.0,
        "flow Lipschitz bound exp(Lt) on 32 probe pairs",
        f"worst ratio={rep.quantities['worst_ratio']:.3f}, "
        f"separations {rep.quantities['min_separation']:.1e}.."
        f"{rep.quantities['max_separation']:.1e}, {elapsed:.1f}s < 30s",
    )


def test_07_picard_contraction():
    """Push-forward map contracts by <= 0.767; fixed point matches the run."""
    t0 = time.perf_counter()
    rep = picard_experiment()
    elapsed = time.perf_counter() - t0
    factor = rep.quantities["contraction_factor"]
    dev = rep.quantities["solve_vs_integrate"]
    _verdict(
        rep.passed and factor <= 0.767 and dev <= rep.quantities["solve_tol"]
        and elapsed < 120.0,
        "fixed-point contraction and solver agreement (N=8, K=3, T=0.5)",
        f"factor={factor:.2e} <= 0.767, solve gap={dev:.1e} <= "
        f"{rep.quantities['solve_tol']:.0e}, "
        f"iters={int(rep.quantities['iterations'])}, {elapsed:.1f}s < 120s",
    )


def test_08_step_size_orders():
    """Error halves with h for Euler and quarters for Heun."""
    t0 = time.perf_counter()
    rep = h_convergence_experiment(threads=2)
    elapsed = time.perf_counter() - t0
    e1 = rep.quantities["euler_ratio_h=0.004"]
    e2 = rep.quantities["euler_ratio_h=0.002"]
    h1 = rep.quantities["heun_ratio_h=0.004"]
    h2 = rep.quantities["heun_ratio_h=0.002"]
    windows_ok = all(1.6 <= r <= 2.4 for r in (e1, e2)) and all(
        3.2 <= r <= 4.8 for r in (h1, h2)
    )
    _verdict(
        rep.passed and windows_ok and elapsed < 120.0,
        "integrator orders vs h=1e-5 reference",
        f"euler ratios {e1:.2f}/{e2:.2f} in [1.6,2.4], "
        f"heun {h1:.2f}/{h2:.2f} in [3.2,4.8], {elapsed:.1f}s < 120s",
    )


def test_09_classical_selection():
    """Cycling, dominance sweep and elimination in the homogeneous limit."""
    t0 = time.perf_counter()
    rep = folk_theorem_suite()
    elapsed = time.perf_counter() - t0
    q = rep.quantities
    _verdict(
        rep.passed
        and q["rps_drift"] <= 1e-8
        and q["pd_tv_to_defection"] <= 1e-3
        and q["dominated_mass"] <= 1e-6
        and elapsed < 30.0,
        "classical replicator facts (cycle center, defection, elimination)",
        f"drift={q['rps_drift']:.1e}, defect tv={q['pd_tv_to_defection']:.1e}, "
        f"dominated mass={q['dominated_mass']:.1e}, {elapsed:.1f}s < 30s",
    )


def test_10_eulerian_residual():
    """Summed weak-form residual is O(h) with a stable constant."""
    t0 = time.perf_counter()
    rep = eulerian_residual_experiment()
    elapsed = time.perf_counter() - t0
    qs = [
        rep.quantities[f"x1_squared_C_h={h:g}"] for h in (4e-3, 2e-3, 1e-3)
    ]
    spread = max(qs) / min(qs)
    _verdict(
        rep.passed and spread <= 1.5 and elapsed < 30.0,
        "observable residual O(h) with stable constant",
        f"quadratic C spread={spread:.3f} <= 1.5, {elapsed:.1f}s < 30s",
    )


def test_11_large_system_convergence():
    """Median distance to the 64-agent run shrinks along N = 8, 16, 32."""
    t0 = time.perf_counter()
    rep = n_convergence_experiment(threads=2)
    elapsed = time.perf_counter() - t0
    m8 = rep.quantities["median_w1_N=8"]
    m16 = rep.quantities["median_w1_N=16"]
    m32 = rep.quantities["median_w1_N=32"]
    _verdict(
        rep.passed and m8 > m16 > m32
        and rep.quantities["worst_chain_ratio"] <= 1.0
        and elapsed < 300.0,
        "growing clouds approach the largest one (16 seeds)",
        f"medians {m8:.3f} > {m16:.3f} > {m32:.3f}, "
        f"chain ratio={rep.quantities['worst_chain_ratio']:.3f}, "
        f"{elapsed:.1f}s < 300s",
    )


def test_12_stochastic_consistency():
    """Mean sampled increment matches the deterministic field to 3 SE."""
    t0 = time.perf_counter()
    rep = stochastic_consistency_experiment()
    elapsed = time.perf_counter() - t0
    _verdict(
        rep.passed and rep.quantities["worst_normalized_gap"] <= 1.0
        and elapsed < 60.0,
        "belief-update mean increment vs deterministic field (1e5 samples)",
        f"worst gap={rep.quantities['worst_normalized_gap']:.3f} x 3SE, "
        f"sigma part={rep.quantities['sigma_discrepancy']:.1e}, {elapsed:.1f}s < 60s",
    )


def test_13_reproducibility(tmp_path):
    """Identical config and seed give byte-identical outputs, any threads."""
    t0 = time.perf_counter()
    (tmp_path / "model.json").write_text(json.dumps(standard_model().to_config()))
    run_cfg = {
        "schema": 1,
        "model": "model.json",
        "integrator": {"scheme": "euler", "h": 1e-3, "T": 0.02, "store_stride": 10},
        "initial": {
            "kind": "sample",
            "n": 6,
            "position": {"kind": "uniform-box"},
            "strategy": {"kind": "dirichlet", "alpha": 2.0},
        },
        "seed": 4,
    }
    run_path = tmp_path / "run.json"
    run_path.write_text(json.dumps(run_cfg))
    outputs = []
    for name, threads in (("a", "1"), ("b", "1"), ("c", "2")):
        out = tmp_path / name
        proc = subprocess.run(
            [
                sys.executable, "-m", "spatgames.cli", "simulate",
                "--config", str(run_path), "--out", str(out),
                "--threads", threads,
            ],
            capture_output=True,
            text=True,
        )
        assert proc.returncode == 0, proc.stderr
        outputs.append(
            (out / "trajectory.csv").read_bytes()
            + (out / "metadata.json").read_bytes()
        )
    elapsed = time.perf_counter() - t0
    identical = outputs[0] == outputs[1] == outputs[2]
    _verdict(
        identical and elapsed < 10.0,
        "byte-identical reruns (including --threads 2)",
        f"3 runs compared, identical={identical}, {elapsed:.1f}s < 10s",
    )
