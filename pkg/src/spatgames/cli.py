"""Command line entry points.

Exit codes: 0 success, 2 configuration or usage error, 3 runtime failure
inside a simulation or solver, 4 experiment ran to completion but its
acceptance check failed.

The BLAS thread caps below are set before numpy loads so that runs are
bit-reproducible regardless of the host's core count; worker parallelism
(the ``--threads`` flag) happens at the process level instead.
"""

import os

for _var in (
    "OPENBLAS_NUM_THREADS",
    "OMP_NUM_THREADS",
    "MKL_NUM_THREADS",
    "NUMEXPR_NUM_THREADS",
):
    os.environ.setdefault(_var, "1")

import argparse
import dataclasses
import json
import math
import sys
from pathlib import Path

from . import __version__
from .configs import RunConfig, load_json
from .dynamics import integrate
from .errors import (
    ConfigError,
    GridMismatch,
    InvariantViolation,
    MultiplierNegative,
    NoConvergence,
    PositionBoundExceeded,
    SimplexViolation,
    SolverFailure,
)
from .model import GameModel, estimate_lipschitz_constants
from .storage import (
    format_float,
    read_trajectory_csv,
    write_metadata,
    write_trajectory_csv,
)
from .transport import curve_distance, w1_ensembles
from .verify import (
    eulerian_residual_experiment,
    flow_lipschitz_experiment,
    folk_theorem_suite,
    h_convergence_experiment,
    n_convergence_experiment,
    picard_experiment,
    stability_experiment,
    write_report,
)

_RUNTIME_ERRORS = (
    InvariantViolation,
    NoConvergence,
    SolverFailure,
    MultiplierNegative,
    PositionBoundExceeded,
    SimplexViolation,
)

#: experiment registry: callable, JSON-overridable keyword names, and
#: whether the callable takes a ``threads`` keyword.
_EXPERIMENTS = {
    "stability": (stability_experiment, {"perturbation", "seed", "store_stride"}, False),
    "flow-lipschitz": (flow_lipschitz_experiment, {"n_pairs", "seed"}, False),
    "picard": (picard_experiment, {"l_prime_factor", "n_agents", "seed"}, False),
    "converge-h": (h_convergence_experiment, {"schemes", "h_list", "h_ref", "T"}, True),
    "converge-n": (
        n_convergence_experiment,
        {"n_list", "n_seeds", "seed", "check_stride"},
        True,
    ),
    "eulerian": (eulerian_residual_experiment, {"h_list", "T", "g"}, False),
    "folk": (folk_theorem_suite, {"h", "rps_T", "pd_T", "dominated_T", "reference_T"}, False),
}


def _cmd_simulate(args) -> int:
    cfg = RunConfig.from_file(args.config)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    integrator = cfg.integrator
    if integrator.scheme == "belief" and integrator.rng_seed is None:
        # all randomness descends from the run seed unless pinned explicitly
        integrator = dataclasses.replace(integrator, rng_seed=cfg.seed)
        cfg = dataclasses.replace(cfg, integrator=integrator)
    ensemble = cfg.build_ensemble()
    trajectory = integrate(ensemble, integrator, cfg.model)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_trajectory_csv(trajectory, out / "trajectory.csv")
    write_metadata(
        out / "metadata.json",
        {
            "schema": 1,
            "run": cfg.to_dict(),
            "ledger": cfg.model.ledger.to_dict(),
            "n_agents": ensemble.n_agents,
            "n_steps": integrator.n_steps(),
            "n_stored": trajectory.n_stored,
            "clamp_events": trajectory.clamp_events,
            "version": __version__,
        },
    )
    print(
        f"simulated {ensemble.n_agents} agents for {integrator.n_steps()} steps "
        f"({integrator.scheme}, h={integrator.h:g}); "
        f"wrote {out / 'trajectory.csv'}"
    )
    print("ledger: " + json.dumps(cfg.model.ledger.to_dict(), sort_keys=True))
    print(f"clamp events: {trajectory.clamp_events}")
    return 0


def _cmd_experiment(args) -> int:
    fn, allowed, takes_threads = _EXPERIMENTS[args.name]
    params = {}
    if args.config is not None:
        params = load_json(args.config)
        unknown = set(params) - allowed
        if unknown:
            raise ConfigError(
                f"experiment {args.name}: unknown parameters {sorted(unknown)} "
                f"(allowed: {sorted(allowed)})"
            )
        params = {k: tuple(v) if isinstance(v, list) else v for k, v in params.items()}
    if args.seed is not None:
        if "seed" in allowed:
            params["seed"] = args.seed
        else:
            print(f"note: {args.name} takes no seed; ignoring --seed", file=sys.stderr)
    if takes_threads:
        params["threads"] = args.threads
    report = fn(**params)
    path = write_report(report, args.out)
    verdict = "pass" if report.passed else "FAIL"
    print(f"{report.name}: {verdict} ({report.runtime_s:.2f}s) -> {path}")
    return 0 if report.passed else 4


def _state_at(trajectory, time: float | None, label: str):
    if time is None:
        return trajectory.final_state, float(trajectory.times[-1])
    hits = [k for k, t in enumerate(trajectory.times) if abs(float(t) - time) <= 1e-9]
    if not hits:
        raise ConfigError(f"time {time:g} is not stored in trajectory {label}")
    return trajectory.states[hits[0]], float(trajectory.times[hits[0]])


def _cmd_transport(args) -> int:
    model = GameModel.from_config(load_json(args.model))
    traj_a = read_trajectory_csv(args.a)
    traj_b = read_trajectory_csv(args.b)
    coupling = None
    if args.mode == "ensembles":
        state_a, t_a = _state_at(traj_a, args.time, "A")
        state_b, t_b = _state_at(traj_b, args.time, "B")
        value, coupling = w1_ensembles(state_a, state_b, model.space)
        result = {
            "mode": "ensembles",
            "time_a": t_a,
            "time_b": t_b,
            "value": value,
            "dual_value": coupling.dual_value,
            "duality_gap": coupling.duality_gap,
        }
    else:
        rate = args.rate if args.rate is not None else 2.5 * model.ledger.L
        value = curve_distance(traj_a, traj_b, rate, model.space)
        result = {"mode": "curves", "value": value, "rate": rate}
    text = json.dumps(result, indent=2, sort_keys=True)
    print(text)
    if args.out is not None:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "transport.json").write_text(text + "\n")
        if coupling is not None:
            rows, cols, masses = coupling.support()
            lines = ["row,col,mass"]
            lines += [
                f"{r},{c},{format_float(m)}" for r, c, m in zip(rows, cols, masses)
            ]
            (out / "coupling.csv").write_text("\n".join(lines) + "\n")
    return 0


def _cmd_ledger(args) -> int:
    model = GameModel.from_config(load_json(args.model))
    payload = model.ledger.to_dict()
    if args.samples > 0:
        bound = model.position_bound if math.isfinite(model.position_bound) else 1.0
        est_le, est_lj = estimate_lipschitz_constants(
            model.payoff,
            model.velocity,
            model.space,
            bound,
            n_samples=args.samples,
            seed=args.seed if args.seed is not None else 0,
        )
        payload["empirical"] = {
            "L_e": est_le,
            "L_J": est_lj,
            "n_samples": args.samples,
            "sampling_radius": bound,
        }
    print(json.dumps(payload, indent=2, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spatgames",
        description="Spatial evolutionary game simulator and verification suite.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="integrate a configured run and save it")
    sim.add_argument("--config", required=True, help="run configuration JSON")
    sim.add_argument("--out", required=True, help="output directory")
    sim.add_argument("--seed", type=int, default=None, help="override the config seed")
    sim.add_argument("--threads", type=int, default=1, help="accepted for uniformity; integration is sequential")
    sim.set_defaults(func=_cmd_simulate)

    exp = sub.add_parser("experiment", help="run a named verification experiment")
    exp.add_argument("name", choices=sorted(_EXPERIMENTS))
    exp.add_argument("--out", required=True, help="report directory")
    exp.add_argument("--config", default=None, help="JSON object of parameter overrides")
    exp.add_argument("--seed", type=int, default=None, help="override the experiment seed")
    exp.add_argument("--threads", type=int, default=1, help="worker processes for seed-parallel experiments (0 = auto)")
    exp.set_defaults(func=_cmd_experiment)

    tra = sub.add_parser("transport", help="distance between two saved runs")
    tra.add_argument("--model", required=True, help="model configuration JSON")
    tra.add_argument("--a", required=True, help="first trajectory CSV")
    tra.add_argument("--b", required=True, help="second trajectory CSV")
    tra.add_argument("--mode", choices=("ensembles", "curves"), default="ensembles")
    tra.add_argument("--time", type=float, default=None, help="compare states at this stored time (default: final)")
    tra.add_argument("--rate", type=float, default=None, help="weight rate for curve distance (default 2.5 L)")
    tra.add_argument("--out", default=None, help="directory for the result JSON and coupling CSV")
    tra.set_defaults(func=_cmd_transport)

    led = sub.add_parser("ledger", help="print a model's certified constants")
    led.add_argument("--model", required=True, help="model configuration JSON")
    led.add_argument("--samples", type=int, default=0, help="add sampled empirical estimates")
    led.add_argument("--seed", type=int, default=None)
    led.set_defaults(func=_cmd_ledger)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, GridMismatch) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except _RUNTIME_ERRORS as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
