"""Verification experiments for the dynamics' supporting theory.

Each experiment integrates a fixture, measures the quantity a theorem
bounds, and reports the measured value against the certified bound with a
discretization cushion ``1 + 20 * L * h``.  Experiments return
:class:`ExperimentReport` objects that serialize to JSON; a summary CSV
collects one pass/fail row per experiment.

Seed discipline: every experiment derives all randomness from one integer
seed through ``numpy.random.SeedSequence`` with explicit child keys, so a
given (experiment, seed) pair is reproducible bit for bit, including when
seed-level jobs are distributed over worker processes.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.integrate import solve_ivp

from .dynamics import (
    IntegratorConfig,
    Trajectory,
    _flow_probe_arrays,
    constant_curve,
    integrate,
    picard_map,
    picard_solve,
)
from .errors import ConfigError
from .fixtures import (
    DOMINATED_MATRIX,
    PD_MATRIX,
    RPS_MATRIX,
    homogeneous_model,
    perturbed_ensemble,
    single_agent,
    standard_config,
    standard_ensemble,
    standard_fixture,
    standard_model,
)
from .model import Ensemble, GameModel, _advantage_raw, _drift_raw, ensemble_drift
from .transport import cost_matrix, curve_distance, w1_ensembles

#: discretization cushion multiplier: bounds are checked against
#: ``(1 + DISC_SLACK_FACTOR * L * h)`` times the continuous-time constant.
DISC_SLACK_FACTOR = 20.0


@dataclass
class ExperimentReport:
    """Outcome of one verification experiment."""

    name: str
    quantities: dict[str, float]
    passed: bool
    runtime_s: float
    config_echo: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "quantities": self.quantities,
            "pass": bool(self.passed),
            "runtime_s": self.runtime_s,
            "config_echo": self.config_echo,
        }


def write_report(report: ExperimentReport, out_dir: str | Path) -> Path:
    """Write ``<name>.json`` and append a row to ``summary.csv``."""
    import json

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{report.name}.json"
    path.write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
    summary = out / "summary.csv"
    if not summary.exists():
        summary.write_text("name,pass,runtime_s\n")
    with summary.open("a") as fh:
        fh.write(f"{report.name},{str(bool(report.passed)).lower()},{report.runtime_s:.3f}\n")
    return path


def _call_job(payload):
    fn, args = payload
    return fn(*args)


def _run_jobs(fn, argument_tuples, threads: int):
    """Run independent jobs, preserving submission order in the results."""
    if threads is not None and threads <= 0:
        threads = None  # let the executor pick
    if (threads == 1) or len(argument_tuples) <= 1:
        return [fn(*args) for args in argument_tuples]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(_call_job, [(fn, args) for args in argument_tuples]))


# ---------------------------------------------------------------------------
# stability of the mean-field flow


def stability_experiment(
    model: GameModel | None = None,
    ens_a: Ensemble | None = None,
    ens_b: Ensemble | None = None,
    cfg: IntegratorConfig | None = None,
    perturbation: float = 0.05,
    seed: int = 0,
    store_stride: int | None = None,
) -> ExperimentReport:
    """Distance growth of two runs against the exp(2 L t) a-priori bound.

    Integrates two nearby initial ensembles and checks, at every stored
    time, that their Wasserstein distance stays below
    ``exp(2 L t) * W1(0) * (1 + 20 L h)``.
    """
    t0 = time.perf_counter()
    if model is None:
        model, ens_a = standard_fixture()
    if ens_a is None:
        ens_a = standard_ensemble()
    if ens_b is None:
        ens_b = perturbed_ensemble(ens_a, perturbation, seed=seed)
    if cfg is None:
        cfg = standard_config(store_stride=store_stride)
    ledger = model.ledger
    slack = 1.0 + DISC_SLACK_FACTOR * ledger.L * cfg.h
    traj_a = integrate(ens_a, cfg, model)
    traj_b = integrate(ens_b, cfg, model)
    w1_initial, _ = w1_ensembles(ens_a, ens_b, model.space)
    worst_ratio = 0.0
    w1_final = 0.0
    for t, sa, sb in zip(traj_a.times, traj_a.states, traj_b.states):
        value, _ = w1_ensembles(sa, sb, model.space)
        w1_final = value
        bound = math.exp(2.0 * ledger.L * float(t)) * w1_initial * slack
        if bound > 0.0:
            worst_ratio = max(worst_ratio, value / bound)
        elif value > 1e-9:
            worst_ratio = math.inf
    passed = worst_ratio <= 1.0
    return ExperimentReport(
        name="stability",
        quantities={
            "w1_initial": w1_initial,
            "w1_final": w1_final,
            "worst_ratio": worst_ratio,
            "slack": slack,
            "L": ledger.L,
        },
        passed=passed,
        runtime_s=time.perf_counter() - t0,
        config_echo={
            "model": model.to_config(),
            "integrator": cfg.to_config(),
            "perturbation": perturbation,
            "seed": seed,
        },
    )


# ---------------------------------------------------------------------------
# Lipschitz growth of the frozen-background flow


def flow_lipschitz_experiment(
    model: GameModel | None = None,
    ens: Ensemble | None = None,
    cfg: IntegratorConfig | None = None,
    n_pairs: int = 32,
    seed: int = 1,
) -> ExperimentReport:
    """Flow separation against the exp(L t) bound, over random probe pairs.

    Probe pairs at separations spanning three decades are flowed through
    the frozen background of a self-consistent run; their state distance
    may grow at most by ``exp(L t) * (1 + 20 L h)``.
    """
    t0 = time.perf_counter()
    if model is None:
        model, ens = standard_fixture()
    if ens is None:
        ens = standard_ensemble()
    if cfg is None:
        cfg = standard_config()
    background = integrate(ens, cfg, model)
    ledger = model.ledger
    slack = 1.0 + DISC_SLACK_FACTOR * ledger.L * cfg.h

    rng = np.random.default_rng(np.random.SeedSequence((seed, 0)))
    k = model.space.n_strategies
    scales = np.logspace(-3.0, -0.5, n_pairs)
    base_x = rng.uniform(-1.0, 1.0, size=(n_pairs, model.dim))
    base_s = rng.dirichlet(np.ones(k), size=n_pairs)
    pert_x = base_x + scales[:, None] * rng.normal(size=base_x.shape)
    noise = rng.dirichlet(np.ones(k), size=n_pairs)
    blend = np.minimum(scales, 1.0)[:, None]
    pert_s = (1.0 - blend) * base_s + blend * noise

    xs_a, ss_a, _ = _flow_probe_arrays(base_x, base_s, background, model)
    xs_b, ss_b, _ = _flow_probe_arrays(pert_x, pert_s, background, model)
    # state distance per (time, pair): position part plus flat strategy part
    pos_part = np.linalg.norm(xs_a - xs_b, axis=2)
    verts = model.space._bl_vertices
    sdiff = (ss_a - ss_b).reshape(-1, k)
    if verts is not None:
        bl_part = np.max(sdiff @ verts.T, axis=1).reshape(pos_part.shape)
    else:
        from .spaces import bl_norm

        bl_part = np.array([bl_norm(row, model.space) for row in sdiff]).reshape(
            pos_part.shape
        )
    dist = pos_part + bl_part
    growth = np.exp(ledger.L * background.times)
    bounds = dist[0][None, :] * growth[:, None] * slack
    worst_ratio = float(np.max(dist / bounds))

    # per-agent strategy speed of the background run, against the certified
    # total-variation cap (scaled by the number of steps between snapshots)
    tv_cap = cfg.h * ledger.L_J * model.space.diam * (1.0 + 10.0 * ledger.L * cfg.h)
    worst_tv = 0.0
    tv_ratio = 0.0
    for k, (before, after) in enumerate(zip(background.states, background.states[1:])):
        gap = int(background.step_indices[k + 1] - background.step_indices[k])
        step_tv = float(np.abs(after.strategies - before.strategies).sum(axis=1).max())
        worst_tv = max(worst_tv, step_tv)
        tv_ratio = max(tv_ratio, step_tv / (gap * tv_cap))

    return ExperimentReport(
        name="flow-lipschitz",
        quantities={
            "worst_ratio": worst_ratio,
            "n_pairs": float(n_pairs),
            "min_separation": float(dist[0].min()),
            "max_separation": float(dist[0].max()),
            "slack": slack,
            "worst_step_tv": worst_tv,
            "step_tv_cap": tv_cap,
            "step_tv_ratio": tv_ratio,
        },
        passed=worst_ratio <= 1.0 and tv_ratio <= 1.0,
        runtime_s=time.perf_counter() - t0,
        config_echo={
            "model": model.to_config(),
            "integrator": cfg.to_config(),
            "n_pairs": n_pairs,
            "seed": seed,
        },
    )


# ---------------------------------------------------------------------------
# fixed-point iteration


def picard_experiment(
    model: GameModel | None = None,
    ens: Ensemble | None = None,
    cfg: IntegratorConfig | None = None,
    l_prime_factor: float = 2.5,
    n_agents: int = 8,
    seed: int = 7,
) -> ExperimentReport:
    """Contraction factor of the push-forward map and fixed-point accuracy.

    With the weight rate ``L' = 2.5 L`` the map contracts curve distance by
    at least ``L / (L' - L) = 2/3``; the measured factor must stay within
    0.1 of that.  The fixed point itself must agree with the
    self-consistent run within ``10 h`` in the supremum of the ensemble
    distance.
    """
    t0 = time.perf_counter()
    if model is None:
        model = standard_model()
    if ens is None:
        ens = standard_ensemble(n=n_agents, seed=seed)
    if cfg is None:
        cfg = IntegratorConfig(scheme="euler", h=2e-3, T=0.5)
    ledger = model.ledger
    l_prime = l_prime_factor * ledger.L
    contraction_bound = ledger.L / (l_prime - ledger.L) + 0.1

    reference = integrate(ens, cfg, model)
    frozen = constant_curve(ens, cfg)
    d_before = curve_distance(frozen, reference, l_prime, model.space)
    mapped_frozen = picard_map(frozen, ens, model)
    mapped_reference = picard_map(reference, ens, model)
    d_after = curve_distance(mapped_frozen, mapped_reference, l_prime, model.space)
    factor = d_after / d_before if d_before > 0.0 else 0.0

    result = picard_solve(ens, cfg, model)
    sup_dev = 0.0
    for state_a, state_b in zip(result.states, reference.states):
        value, _ = w1_ensembles(state_a, state_b, model.space)
        sup_dev = max(sup_dev, value)
    solve_tol = 10.0 * cfg.h
    passed = factor <= contraction_bound and sup_dev <= solve_tol
    return ExperimentReport(
        name="picard",
        quantities={
            "contraction_factor": factor,
            "contraction_bound": contraction_bound,
            "curve_distance_before": d_before,
            "solve_vs_integrate": sup_dev,
            "solve_tol": solve_tol,
            "iterations": float(result.iterations),
            "residual_final": result.residuals[-1],
        },
        passed=passed,
        runtime_s=time.perf_counter() - t0,
        config_echo={
            "model": model.to_config(),
            "integrator": cfg.to_config(),
            "l_prime_factor": l_prime_factor,
            "seed": seed,
        },
    )


# ---------------------------------------------------------------------------
# step-size convergence


def _integrate_for_rate(model, ens, scheme, h, T, stride):
    cfg = IntegratorConfig(scheme=scheme, h=h, T=T, store_stride=stride)
    return integrate(ens, cfg, model)


def h_convergence_experiment(
    model: GameModel | None = None,
    ens: Ensemble | None = None,
    schemes: tuple[str, ...] = ("euler", "heun"),
    h_list: tuple[float, ...] = (4e-3, 2e-3, 1e-3),
    h_ref: float = 1e-5,
    T: float = 1.0,
    euler_window: tuple[float, float] = (1.6, 2.4),
    heun_window: tuple[float, float] = (3.2, 4.8),
    threads: int = 1,
) -> ExperimentReport:
    """Observed error-halving ratios of both schemes against a fine reference.

    Errors are supremum-over-snapshots Wasserstein distances to a same-
    scheme reference at ``h_ref``, sampled on the grid of the coarsest run.
    Consecutive error ratios must land in the scheme's expected window
    (near 2 for Euler, near 4 for Heun).
    """
    t0 = time.perf_counter()
    if model is None:
        model, ens = standard_fixture()
    if ens is None:
        ens = standard_ensemble()
    h_coarse = h_list[0]
    jobs = []
    for scheme in schemes:
        for h in list(h_list) + [h_ref]:
            stride = int(round(h_coarse / h))
            if abs(stride * h - h_coarse) > 1e-9 * h_coarse:
                raise ValueError(f"{h} does not divide the coarsest step {h_coarse}")
            jobs.append((model, ens, scheme, h, T, stride))
    runs = _run_jobs(_integrate_for_rate, jobs, threads)
    by_key = {(job[2], job[3]): run for job, run in zip(jobs, runs)}

    quantities: dict[str, float] = {}
    passed = True
    for scheme in schemes:
        reference = by_key[(scheme, h_ref)]
        errors = []
        for h in h_list:
            run = by_key[(scheme, h)]
            if run.n_stored != reference.n_stored:
                raise RuntimeError("snapshot grids misaligned between runs")
            err = 0.0
            for state, ref_state in zip(run.states, reference.states):
                value, _ = w1_ensembles(state, ref_state, model.space)
                err = max(err, value)
            errors.append(err)
            quantities[f"{scheme}_error_h={h:g}"] = err
        window = euler_window if scheme == "euler" else heun_window
        for h, e_coarse, e_fine in zip(h_list, errors, errors[1:]):
            ratio = e_coarse / e_fine if e_fine > 0.0 else math.inf
            quantities[f"{scheme}_ratio_h={h:g}"] = ratio
            if not window[0] <= ratio <= window[1]:
                passed = False
    return ExperimentReport(
        name="converge-h",
        quantities=quantities,
        passed=passed,
        runtime_s=time.perf_counter() - t0,
        config_echo={
            "model": model.to_config(),
            "schemes": list(schemes),
            "h_list": list(h_list),
            "h_ref": h_ref,
            "T": T,
        },
    )


# ---------------------------------------------------------------------------
# weak-form residual of the continuity equation


def cylinder_observables(g: np.ndarray):
    """Cylindrical test functions paired with their transport derivatives.

    Each entry is ``(name, value, rate)`` where ``value(ens)`` integrates
    the observable over the ensemble and ``rate(ens, dx, ds)`` integrates
    its derivative along the field.  Observables depend on the state only
    through the first position coordinate and the strategy moment
    ``m = <g, sigma>``, so both are exact one-liners.
    """
    g = np.asarray(g, dtype=float)

    def moment(ens):
        return ens.strategies @ g

    return [
        (
            "mass",
            lambda ens: float(ens.masses.sum()),
            lambda ens, dx, ds: 0.0,
        ),
        (
            "x1",
            lambda ens: float(ens.masses @ ens.positions[:, 0]),
            lambda ens, dx, ds: float(ens.masses @ dx[:, 0]),
        ),
        (
            "moment",
            lambda ens: float(ens.masses @ moment(ens)),
            lambda ens, dx, ds: float(ens.masses @ (ds @ g)),
        ),
        (
            "x1_moment",
            lambda ens: float(ens.masses @ (ens.positions[:, 0] * moment(ens))),
            lambda ens, dx, ds: float(
                ens.masses @ (dx[:, 0] * moment(ens) + ens.positions[:, 0] * (ds @ g))
            ),
        ),
        (
            "x1_squared",
            lambda ens: float(ens.masses @ ens.positions[:, 0] ** 2),
            lambda ens, dx, ds: float(ens.masses @ (2.0 * ens.positions[:, 0] * dx[:, 0])),
        ),
        (
            "moment_squared",
            lambda ens: float(ens.masses @ moment(ens) ** 2),
            lambda ens, dx, ds: float(ens.masses @ (2.0 * moment(ens) * (ds @ g))),
        ),
    ]


def eulerian_residual_experiment(
    model: GameModel | None = None,
    ens: Ensemble | None = None,
    h_list: tuple[float, ...] = (4e-3, 2e-3, 1e-3),
    T: float = 1.0,
    g: tuple[float, ...] = (1.0, 0.4, -0.7),
    stability_factor: float = 1.5,
    exact_cap: float = 1e-8,
    observables=None,
) -> ExperimentReport:
    """Weak-form balance of observables along the discrete dynamics.

    For each observable the per-step defect between the observable's
    increment and ``h`` times its transport derivative is summed over the
    run; the sum divided by ``h`` estimates the constant ``C`` in the
    ``O(h)`` residual bound.  Observables linear in the state balance to
    roundoff; quadratic ones must produce a ``C`` stable across step
    halvings.
    """
    t0 = time.perf_counter()
    if model is None:
        model, ens = standard_fixture()
    if ens is None:
        ens = standard_ensemble()
    if observables is None:
        observables = cylinder_observables(np.asarray(g))
    sums: dict[str, list[float]] = {name: [] for name, _, _ in observables}
    steps: dict[str, list[float]] = {name: [] for name, _, _ in observables}
    for h in h_list:
        cfg = IntegratorConfig(scheme="euler", h=h, T=T, store_stride=1)
        traj = integrate(ens, cfg, model)
        totals = {name: 0.0 for name, _, _ in observables}
        worst = {name: 0.0 for name, _, _ in observables}
        for before, after in zip(traj.states, traj.states[1:]):
            dx, ds = ensemble_drift(before, model)
            for name, value, rate in observables:
                defect = abs(value(after) - value(before) - h * rate(before, dx, ds))
                totals[name] += defect
                worst[name] = max(worst[name], defect)
        for name, _, _ in observables:
            sums[name].append(totals[name] / h)
            steps[name].append(worst[name] / h**2)
    quantities: dict[str, float] = {}
    passed = True
    for name, _, _ in observables:
        for h, c_sum, c_step in zip(h_list, sums[name], steps[name]):
            quantities[f"{name}_C_h={h:g}"] = c_sum
            quantities[f"{name}_Cstep_h={h:g}"] = c_step
        largest = max(sums[name])
        if largest <= exact_cap:
            continue  # balances to roundoff at every h
        for series in (sums[name], steps[name]):
            ratio = max(series) / min(series)
            if ratio > stability_factor:
                passed = False
                quantities[f"{name}_instability"] = ratio
    return ExperimentReport(
        name="eulerian",
        quantities=quantities,
        passed=passed,
        runtime_s=time.perf_counter() - t0,
        config_echo={
            "model": model.to_config(),
            "h_list": list(h_list),
            "T": T,
            "g": list(g),
        },
    )


# ---------------------------------------------------------------------------
# many-agent convergence


def _n_convergence_seed_job(model, n_list, cfg, base_seed, seed_idx, check_stride):
    """Integrate one seed's ensembles at every N and measure all distances."""
    runs = {}
    for n in n_list:
        rng = np.random.default_rng(np.random.SeedSequence((base_seed, seed_idx, n)))
        positions = rng.uniform(-1.0, 1.0, size=(n, model.dim))
        strategies = rng.dirichlet(np.ones(model.space.n_strategies), size=n)
        ens = Ensemble.uniform(positions, strategies)
        runs[n] = integrate(ens, cfg, model)
    ledger = model.ledger
    slack = 1.0 + DISC_SLACK_FACTOR * ledger.L * cfg.h
    chain_ok = True
    worst_chain_ratio = 0.0
    for n_small, n_large in zip(n_list, n_list[1:]):
        run_a, run_b = runs[n_small], runs[n_large]
        w1_zero, _ = w1_ensembles(run_a.initial_state, run_b.initial_state, model.space)
        for k in range(0, run_a.n_stored, check_stride):
            t = float(run_a.times[k])
            value, _ = w1_ensembles(run_a.states[k], run_b.states[k], model.space)
            bound = math.exp(2.0 * ledger.L * t) * w1_zero * slack
            if bound > 0.0:
                worst_chain_ratio = max(worst_chain_ratio, value / bound)
                if value > bound:
                    chain_ok = False
            elif value > 1e-9:
                chain_ok = False
    largest = n_list[-1]
    finals = {}
    for n in n_list[:-1]:
        value, _ = w1_ensembles(
            runs[n].final_state, runs[largest].final_state, model.space
        )
        finals[n] = value
    return {"finals": finals, "chain_ok": chain_ok, "worst_chain_ratio": worst_chain_ratio}


def n_convergence_experiment(
    model: GameModel | None = None,
    n_list: tuple[int, ...] = (8, 16, 32, 64),
    n_seeds: int = 16,
    cfg: IntegratorConfig | None = None,
    seed: int = 2,
    check_stride: int = 10,
    threads: int = 1,
) -> ExperimentReport:
    """Distance to the largest-N run shrinks as clouds grow.

    For each of ``n_seeds`` independent draws, integrates iid initial
    clouds of every size in ``n_list`` and requires the median (over
    seeds) distance to the largest cloud at the final time to decrease
    strictly along ``n_list``.  Consecutive cloud sizes additionally
    satisfy the stability bound at the checked times, since both runs
    solve the same dynamics from different initial data.
    """
    t0 = time.perf_counter()
    if model is None:
        model = standard_model()
    if cfg is None:
        cfg = standard_config(store_stride=20)
    results = _run_jobs(
        _n_convergence_seed_job,
        [(model, n_list, cfg, seed, idx, check_stride) for idx in range(n_seeds)],
        threads,
    )
    medians = {
        n: float(np.median([r["finals"][n] for r in results])) for n in n_list[:-1]
    }
    decreasing = all(
        medians[a] > medians[b] for a, b in zip(n_list[:-2], n_list[1:-1])
    )
    chain_ok = all(r["chain_ok"] for r in results)
    worst_chain = max(r["worst_chain_ratio"] for r in results)
    quantities = {f"median_w1_N={n}": medians[n] for n in n_list[:-1]}
    quantities["worst_chain_ratio"] = worst_chain
    quantities["slack"] = 1.0 + DISC_SLACK_FACTOR * model.ledger.L * cfg.h
    return ExperimentReport(
        name="converge-n",
        quantities=quantities,
        passed=decreasing and chain_ok,
        runtime_s=time.perf_counter() - t0,
        config_echo={
            "model": model.to_config(),
            "integrator": cfg.to_config(),
            "n_list": list(n_list),
            "n_seeds": n_seeds,
            "seed": seed,
        },
    )


# ---------------------------------------------------------------------------
# classical replicator checks


def _replicator_reference(matrix: np.ndarray, sigma0: np.ndarray, T: float) -> np.ndarray:
    """Dense-output replicator integration with tight tolerances."""

    def rhs(_, s):
        payoff = matrix @ s
        return s * (payoff - s @ payoff)

    sol = solve_ivp(
        rhs, (0.0, T), sigma0, method="RK45", rtol=1e-11, atol=1e-13, dense_output=False
    )
    return sol.y[:, -1]


def folk_theorem_suite(
    h: float = 0.05,
    rps_T: float = 1.0,
    pd_T: float = 50.0,
    dominated_T: float = 100.0,
    reference_T: float = 5.0,
) -> ExperimentReport:
    """Classical selection results reproduced by the homogeneous reduction.

    With a constant kernel and zero velocities every agent runs a classical
    replicator system, so the textbook facts apply: the rock-paper-scissors
    barycenter is stationary, defection takes over the prisoner's dilemma,
    and strictly dominated strategies die out.  A fine Runge-Kutta
    reference validates the reduction quantitatively.
    """
    t0 = time.perf_counter()
    quantities: dict[str, float] = {}

    # rock-paper-scissors: the barycenter is a fixed point
    model = homogeneous_model(RPS_MATRIX)
    bary = np.full(3, 1.0 / 3.0)
    traj = integrate(
        single_agent(bary), IntegratorConfig(scheme="euler", h=1e-3, T=rps_T), model
    )
    drift = max(
        float(np.max(np.abs(state.strategies[0] - bary))) for state in traj.states
    )
    quantities["rps_drift"] = drift
    rps_ok = drift <= 1e-8 * rps_T

    # prisoner's dilemma: defection sweeps
    model = homogeneous_model(PD_MATRIX)
    traj = integrate(
        single_agent([0.5, 0.5]), IntegratorConfig(scheme="euler", h=h, T=pd_T), model
    )
    tv_defect = float(np.abs(traj.final_state.strategies[0] - np.array([0.0, 1.0])).sum())
    quantities["pd_tv_to_defection"] = tv_defect
    pd_ok = tv_defect <= 1e-3

    # dominated strategies are eliminated
    model = homogeneous_model(DOMINATED_MATRIX)
    traj = integrate(
        single_agent(np.full(3, 1.0 / 3.0)),
        IntegratorConfig(scheme="euler", h=h, T=dominated_T),
        model,
    )
    dominated_mass = float(traj.final_state.strategies[0][2])
    quantities["dominated_mass"] = dominated_mass
    dom_ok = dominated_mass <= 1e-6

    # quantitative agreement with a dense reference on an interior orbit
    ref_ok = True
    for name, matrix, sigma0 in (
        ("rps", RPS_MATRIX, np.array([0.5, 0.3, 0.2])),
        ("pd", PD_MATRIX, np.array([0.6, 0.4])),
        ("dominated", DOMINATED_MATRIX, np.full(3, 1.0 / 3.0)),
    ):
        model = homogeneous_model(matrix)
        traj = integrate(
            single_agent(sigma0),
            IntegratorConfig(scheme="heun", h=1e-3, T=reference_T),
            model,
        )
        reference = _replicator_reference(matrix, sigma0, reference_T)
        deviation = float(np.abs(traj.final_state.strategies[0] - reference).sum())
        quantities[f"reference_tv_{name}"] = deviation
        if deviation > 1e-4:
            ref_ok = False

    return ExperimentReport(
        name="folk",
        quantities=quantities,
        passed=rps_ok and pd_ok and dom_ok and ref_ok,
        runtime_s=time.perf_counter() - t0,
        config_echo={
            "h": h,
            "rps_T": rps_T,
            "pd_T": pd_T,
            "dominated_T": dominated_T,
            "reference_T": reference_T,
        },
    )


# ---------------------------------------------------------------------------
# stochastic scheme consistency


def stochastic_consistency_experiment(
    model: GameModel | None = None,
    ens: Ensemble | None = None,
    h: float = 1e-3,
    n_samples: int = 100_000,
    seed: int = 123,
) -> ExperimentReport:
    """Mean belief-update increment against the deterministic field.

    The strategy part of the belief update is deterministic and must match
    the replicator step to roundoff.  The position part moves with one
    sampled pure velocity; its Monte Carlo mean over ``n_samples``
    transitions per agent must match the strategy-averaged velocity within
    three standard errors, componentwise.
    """
    t0 = time.perf_counter()
    if model is None:
        model, ens = standard_fixture()
    if ens is None:
        ens = standard_ensemble()
    x, s, masses = ens.positions, ens.strategies, ens.masses
    adv = _advantage_raw(x, s, x, s, masses, model)
    dx_det, ds_det = _drift_raw(x, s, x, s, masses, model)
    reweighted = s * (1.0 + h * adv)
    reweighted /= reweighted.sum(axis=1, keepdims=True)
    sigma_discrepancy = float(np.max(np.abs((reweighted - s) - h * ds_det)))

    rng = np.random.default_rng(np.random.SeedSequence((seed, 0)))
    table = model.velocity.table
    damping = model.velocity.damping
    worst_z = 0.0
    for i in range(ens.n_agents):
        cum = np.cumsum(reweighted[i])
        draws = rng.random(n_samples)
        picks = np.minimum(
            np.searchsorted(cum, draws * cum[-1], side="right"), len(cum) - 1
        )
        increments = h * (table[picks] - damping * x[i])
        mc_mean = increments.mean(axis=0)
        mc_se = increments.std(axis=0, ddof=1) / math.sqrt(n_samples)
        target = h * dx_det[i]
        for c in range(model.dim):
            gap = abs(mc_mean[c] - target[c])
            tol = 3.0 * mc_se[c] + 1e-12
            worst_z = max(worst_z, gap / tol if tol > 0 else math.inf)
    passed = worst_z <= 1.0 and sigma_discrepancy <= 1e-12
    return ExperimentReport(
        name="stochastic-consistency",
        quantities={
            "worst_normalized_gap": worst_z,
            "sigma_discrepancy": sigma_discrepancy,
            "n_samples": float(n_samples),
            "h": h,
        },
        passed=passed,
        runtime_s=time.perf_counter() - t0,
        config_echo={"model": model.to_config(), "h": h, "seed": seed},
    )
