"""Time integration of the coupled position-and-strategy dynamics.

The integrators advance every agent synchronously under the mean field of
the current ensemble.  The explicit Euler scheme is the primary one: for
step sizes below ``theta_max`` from the model ledger it provably keeps
every strategy on the probability simplex, which the step guard enforces
with a configurable safety factor.  Heun's second-order scheme is offered
with a simplex check after each stage.  A stochastic belief-update scheme
replaces the replicator step by reweighting each agent's mixed strategy
with the multiplier ``1 + h * advantage``, then moving the agent with the
velocity of one pure strategy sampled from the reweighted mix.

Flows against a frozen background curve, the corresponding push-forward
map on initial ensembles, and its fixed-point iteration live here as well.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numpy.typing import NDArray

from .errors import (
    ConfigError,
    InvariantViolation,
    MultiplierNegative,
    NoConvergence,
    PositionBoundExceeded,
    SimplexViolation,
)
from .model import AgentState, Ensemble, GameModel, _advantage_raw, _drift_raw
from .spaces import clean_weight_rows
from .transport import w1_ensembles

SCHEMES = ("euler", "heun", "belief")

#: hard cap on stored snapshots; longer runs are thinned by stride.
MAX_SNAPSHOTS = 10_000

#: absolute cushion for roundoff when checking certified per-step bounds.
_CHECK_ATOL = 1e-12


@dataclass(frozen=True)
class IntegratorConfig:
    """Scheme, step size, horizon and bookkeeping for a run.

    ``T`` must be an integer multiple of ``h``.  With ``theta_guard`` on,
    Euler and belief-update runs refuse step sizes above
    ``safety * theta_max``; Heun relies on its per-stage checks instead.
    ``rng_seed`` feeds the per-agent streams of the belief-update scheme.
    """

    scheme: str = "euler"
    h: float = 1e-3
    T: float = 1.0
    theta_guard: bool = True
    safety: float = 0.5
    rng_seed: int | None = None
    store_stride: int | None = None

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}, expected one of {SCHEMES}")
        if not self.h > 0.0:
            raise ValueError("step size h must be positive")
        if not self.T > 0.0:
            raise ValueError("horizon T must be positive")
        if not 0.0 < self.safety <= 1.0:
            raise ValueError("safety factor must lie in (0, 1]")
        if self.store_stride is not None and self.store_stride < 1:
            raise ValueError("store_stride must be a positive integer")
        if self.rng_seed is not None and self.rng_seed < 0:
            raise ValueError("rng_seed must be nonnegative")

    def n_steps(self) -> int:
        n = int(round(self.T / self.h))
        if n < 1 or abs(n * self.h - self.T) > 1e-9 * max(1.0, abs(self.T)):
            raise ValueError(
                f"horizon T={self.T} is not an integer multiple of h={self.h}"
            )
        return n

    def effective_stride(self, n_steps: int) -> int:
        stride = self.store_stride or 1
        # thin further if full storage would blow the snapshot cap
        return max(stride, -(-n_steps // (MAX_SNAPSHOTS - 1)))

    def to_config(self) -> dict:
        cfg = {
            "scheme": self.scheme,
            "h": self.h,
            "T": self.T,
            "theta_guard": self.theta_guard,
            "safety": self.safety,
        }
        if self.rng_seed is not None:
            cfg["rng_seed"] = self.rng_seed
        if self.store_stride is not None:
            cfg["store_stride"] = self.store_stride
        return cfg

    @classmethod
    def from_config(cls, cfg: dict) -> "IntegratorConfig":
        if not isinstance(cfg, dict):
            raise ConfigError("integrator config must be a mapping")
        allowed = {"scheme", "h", "T", "theta_guard", "safety", "rng_seed", "store_stride"}
        unknown = set(cfg) - allowed
        if unknown:
            raise ConfigError(f"unknown integrator keys: {sorted(unknown)}")
        for key in ("h", "T"):
            if key not in cfg:
                raise ConfigError(f"integrator config requires {key!r}")
        try:
            return cls(
                scheme=cfg.get("scheme", "euler"),
                h=float(cfg["h"]),
                T=float(cfg["T"]),
                theta_guard=bool(cfg.get("theta_guard", True)),
                safety=float(cfg.get("safety", 0.5)),
                rng_seed=None if cfg.get("rng_seed") is None else int(cfg["rng_seed"]),
                store_stride=(
                    None if cfg.get("store_stride") is None else int(cfg["store_stride"])
                ),
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Stored snapshots of a run on a uniform step grid.

    ``times[k] = step_indices[k] * h``; the initial and final states are
    always stored.
    """

    times: NDArray[np.float64]
    states: tuple[Ensemble, ...]
    step_indices: NDArray[np.int64]
    scheme: str
    h: float
    clamp_events: int = 0

    @property
    def n_stored(self) -> int:
        return len(self.states)

    @property
    def final_state(self) -> Ensemble:
        return self.states[-1]

    @property
    def initial_state(self) -> Ensemble:
        return self.states[0]


def agent_streams(seed: int, n: int) -> list[np.random.Generator]:
    """One independent PCG64 stream per agent.

    The top-level seed splits by purpose: child ``(seed, 0)`` is reserved
    for initial-condition sampling, and agent ``i`` draws from the stream
    seeded with ``SeedSequence((seed, 1 + i))``.  The same seed therefore
    yields the same per-agent randomness regardless of execution order or
    how many workers process the agents.
    """
    if seed is None or seed < 0:
        raise ValueError("belief-update sampling needs a nonnegative seed")
    return [
        np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, 1 + i))))
        for i in range(n)
    ]


# ---------------------------------------------------------------------------
# single steps on raw arrays


def _euler_arrays(x, s, m, h, model):
    dx, ds = _drift_raw(x, s, x, s, m, model)
    s2, clamps = clean_weight_rows(s + h * ds)
    return x + h * dx, s2, clamps


def _heun_arrays(x, s, m, h, model):
    dx1, ds1 = _drift_raw(x, s, x, s, m, model)
    sp, clamps = clean_weight_rows(s + h * ds1)
    xp = x + h * dx1
    dx2, ds2 = _drift_raw(xp, sp, xp, sp, m, model)
    s2, more = clean_weight_rows(s + 0.5 * h * (ds1 + ds2))
    return x + 0.5 * h * (dx1 + dx2), s2, clamps + more


def _belief_arrays(x, s, m, h, model, rngs):
    adv = _advantage_raw(x, s, x, s, m, model)
    mult = 1.0 + h * adv
    bad = (s > 0.0) & (mult <= 0.0)
    if np.any(bad):
        i, k = map(int, np.argwhere(bad)[0])
        raise MultiplierNegative(
            f"agent {i}, strategy {k}: multiplier {mult[i, k]:.3e} is nonpositive "
            f"on a supported atom; reduce h"
        )
    s2 = s * mult
    s2 /= s2.sum(axis=1, keepdims=True)
    table = model.velocity.table
    x2 = np.empty_like(x)
    for i in range(x.shape[0]):
        draw = rngs[i].random()
        cum = np.cumsum(s2[i])
        k = int(np.searchsorted(cum, draw * cum[-1], side="right"))
        k = min(k, s2.shape[1] - 1)
        x2[i] = x[i] + h * (table[k] - model.velocity.damping * x[i])
    return x2, s2, 0


def euler_step(ensemble: Ensemble, h: float, model: GameModel) -> Ensemble:
    """One synchronous explicit Euler step of the whole ensemble."""
    x, s, _ = _euler_arrays(ensemble.positions, ensemble.strategies, ensemble.masses, h, model)
    return Ensemble(x, s, ensemble.masses)


def heun_step(ensemble: Ensemble, h: float, model: GameModel) -> Ensemble:
    """One Heun (explicit trapezoidal) step with per-stage simplex checks."""
    x, s, _ = _heun_arrays(ensemble.positions, ensemble.strategies, ensemble.masses, h, model)
    return Ensemble(x, s, ensemble.masses)


def belief_update_step(
    ensemble: Ensemble,
    h: float,
    model: GameModel,
    rngs: Sequence[np.random.Generator],
) -> Ensemble:
    """One stochastic belief-update step.

    Each agent reweights its mix by ``1 + h * advantage`` (exact
    renormalization afterwards), samples one pure strategy from the
    reweighted mix using its own stream, and moves with that strategy's
    velocity.
    """
    if len(rngs) != ensemble.n_agents:
        raise ValueError("need exactly one random stream per agent")
    x, s, _ = _belief_arrays(
        ensemble.positions, ensemble.strategies, ensemble.masses, h, model, rngs
    )
    return Ensemble(x, s, ensemble.masses)


# ---------------------------------------------------------------------------
# full runs


def _guard_step_size(cfg: IntegratorConfig, model: GameModel) -> None:
    """Refuse step sizes that could leave the simplex.

    Applies to the Euler scheme and to the belief update (whose multiplier
    positivity rests on the same bound); Heun checks its stages instead.
    """
    if not cfg.theta_guard or cfg.scheme == "heun":
        return
    cap = cfg.safety * model.ledger.theta_max
    if cfg.h > cap * (1.0 + 1e-12):
        raise ValueError(
            f"step h={cfg.h:g} exceeds safety*theta_max={cap:g} "
            f"(theta_max={model.ledger.theta_max:g}); reduce h or disable theta_guard"
        )


def _check_position_bound(x: NDArray[np.float64], bound: float, when: str) -> None:
    if not math.isfinite(bound):
        return
    norms = np.linalg.norm(x, axis=1)
    worst = int(np.argmax(norms))
    if norms[worst] > bound * (1.0 + 1e-12):
        raise PositionBoundExceeded(
            f"agent {worst} at |x|={norms[worst]:.6g} left the ball of radius "
            f"{bound:g} {when}"
        )


def integrate(
    ensemble0: Ensemble,
    cfg: IntegratorConfig,
    model: GameModel,
    *,
    check_invariants: bool = True,
) -> Trajectory:
    """Advance an ensemble from 0 to T, storing snapshots on a stride.

    Verifies the certified per-step bounds online: position moves at most
    ``h`` times the velocity bound, the strategy moves at most
    ``h * L_J * diam`` in total variation (with a small discretization
    cushion), and all agents stay inside the position bound.
    """
    if ensemble0.dim != model.dim or ensemble0.n_strategies != model.space.n_strategies:
        raise ValueError("ensemble does not match the model's dimensions")
    n_steps = cfg.n_steps()
    stride = cfg.effective_stride(n_steps)
    _guard_step_size(cfg, model)
    ledger = model.ledger
    tv_cap = (
        cfg.h * ledger.L_J * model.space.diam * (1.0 + 10.0 * cfg.h * ledger.L)
        + _CHECK_ATOL
    )
    speed_cap = cfg.h * model.velocity.sup_norm(model.position_bound) + _CHECK_ATOL
    x = np.array(ensemble0.positions)
    s = np.array(ensemble0.strategies)
    masses = ensemble0.masses
    _check_position_bound(x, model.position_bound, "initially")
    rngs = None
    if cfg.scheme == "belief":
        if cfg.rng_seed is None:
            raise ValueError("belief-update scheme requires rng_seed")
        rngs = agent_streams(cfg.rng_seed, ensemble0.n_agents)

    stored = [ensemble0]
    indices = [0]
    clamp_events = 0
    for k in range(1, n_steps + 1):
        if cfg.scheme == "euler":
            x2, s2, clamps = _euler_arrays(x, s, masses, cfg.h, model)
        elif cfg.scheme == "heun":
            x2, s2, clamps = _heun_arrays(x, s, masses, cfg.h, model)
        else:
            x2, s2, clamps = _belief_arrays(x, s, masses, cfg.h, model, rngs)
        clamp_events += clamps
        if check_invariants:
            speed = np.linalg.norm(x2 - x, axis=1)
            if math.isfinite(speed_cap) and float(speed.max()) > speed_cap:
                raise InvariantViolation(
                    f"step {k}: position moved {speed.max():.3e}, "
                    f"certified cap {speed_cap:.3e}"
                )
            tv = np.abs(s2 - s).sum(axis=1)
            if float(tv.max()) > tv_cap:
                raise InvariantViolation(
                    f"step {k}: strategy moved {tv.max():.3e} in total variation, "
                    f"certified cap {tv_cap:.3e}"
                )
        _check_position_bound(x2, model.position_bound, f"at step {k}")
        x, s = x2, s2
        if k % stride == 0 or k == n_steps:
            stored.append(Ensemble(x.copy(), s.copy(), masses))
            indices.append(k)
    idx = np.array(indices, dtype=np.int64)
    return Trajectory(
        times=idx * cfg.h,
        states=tuple(stored),
        step_indices=idx,
        scheme=cfg.scheme,
        h=cfg.h,
        clamp_events=clamp_events,
    )


# ---------------------------------------------------------------------------
# flows against a frozen background


@dataclass(frozen=True, eq=False)
class AgentPath:
    """A single state flowed along a background curve."""

    times: NDArray[np.float64]
    positions: NDArray[np.float64]
    strategies: NDArray[np.float64]

    def state(self, k: int) -> AgentState:
        return AgentState(self.positions[k], self.strategies[k])


def _flow_probe_arrays(x0, s0, background: Trajectory, model: GameModel):
    """Euler-flow probe states through a frozen background curve.

    The background is held piecewise constant on each stored interval
    (left endpoint), matching how the self-consistent Euler run sees it.
    """
    times = background.times
    n_probes = x0.shape[0]
    xs = np.empty((len(times), n_probes, x0.shape[1]))
    ss = np.empty((len(times), n_probes, s0.shape[1]))
    xs[0], ss[0] = x0, s0
    x, s = np.array(x0), np.array(s0)
    clamps = 0
    for k in range(len(times) - 1):
        dt = float(times[k + 1] - times[k])
        bg = background.states[k]
        dx, ds = _drift_raw(x, s, bg.positions, bg.strategies, bg.masses, model)
        x = x + dt * dx
        s, c = clean_weight_rows(s + dt * ds)
        clamps += c
        xs[k + 1], ss[k + 1] = x, s
    return xs, ss, clamps


def flow_map(agent: AgentState, background: Trajectory, model: GameModel) -> AgentPath:
    """Flow one probe state along a background curve's stored grid.

    A probe equal to an atom of the background's own Euler run retraces
    that atom's path (up to roundoff), because both see the same frozen
    field at each step.
    """
    xs, ss, _ = _flow_probe_arrays(
        agent.x[None, :], agent.sigma[None, :], background, model
    )
    return AgentPath(times=background.times, positions=xs[:, 0], strategies=ss[:, 0])


def picard_map(curve: Trajectory, ensemble0: Ensemble, model: GameModel) -> Trajectory:
    """Push the initial ensemble forward through the flow of a frozen curve.

    Atom masses ride along unchanged; the result lives on the same time
    grid as the input curve.
    """
    xs, ss, clamps = _flow_probe_arrays(
        np.array(ensemble0.positions), np.array(ensemble0.strategies), curve, model
    )
    states = tuple(
        Ensemble(xs[k], ss[k], ensemble0.masses) for k in range(len(curve.times))
    )
    return Trajectory(
        times=curve.times,
        states=states,
        step_indices=curve.step_indices,
        scheme="euler",
        h=curve.h,
        clamp_events=clamps,
    )


@dataclass(frozen=True, eq=False)
class PicardTrajectory(Trajectory):
    """Trajectory found by fixed-point iteration, plus its residual history."""

    residuals: tuple[float, ...] = ()

    @property
    def iterations(self) -> int:
        return len(self.residuals)


def constant_curve(ensemble0: Ensemble, cfg: IntegratorConfig) -> Trajectory:
    """The curve frozen at the initial ensemble, on the config's grid."""
    n_steps = cfg.n_steps()
    stride = cfg.effective_stride(n_steps)
    indices = list(range(0, n_steps + 1, stride))
    if indices[-1] != n_steps:
        indices.append(n_steps)
    idx = np.array(indices, dtype=np.int64)
    return Trajectory(
        times=idx * cfg.h,
        states=tuple([ensemble0] * len(idx)),
        step_indices=idx,
        scheme="euler",
        h=cfg.h,
        clamp_events=0,
    )


def picard_solve(
    ensemble0: Ensemble,
    cfg: IntegratorConfig,
    model: GameModel,
    tol: float = 1e-6,
    max_iters: int = 50,
) -> PicardTrajectory:
    """Iterate the push-forward map to its fixed point.

    Starts from the constant curve and stops when consecutive curves agree
    within ``tol`` in the supremum (over stored times) of the ensemble
    Wasserstein distance.  Raises :class:`NoConvergence` with the residual
    history if the budget runs out.
    """
    if cfg.scheme != "euler":
        raise ValueError("the fixed-point iteration is defined for the euler scheme")
    curve = constant_curve(ensemble0, cfg)
    residuals: list[float] = []
    for _ in range(max_iters):
        new = picard_map(curve, ensemble0, model)
        residual = 0.0
        for old_state, new_state in zip(curve.states, new.states):
            value, _ = w1_ensembles(old_state, new_state, model.space)
            residual = max(residual, value)
        residuals.append(residual)
        curve = new
        if residual < tol:
            return PicardTrajectory(
                times=curve.times,
                states=curve.states,
                step_indices=curve.step_indices,
                scheme=curve.scheme,
                h=curve.h,
                clamp_events=curve.clamp_events,
                residuals=tuple(residuals),
            )
    raise NoConvergence(
        f"fixed-point iteration did not reach {tol:g} in {max_iters} iterations "
        f"(last residual {residuals[-1]:.3e})",
        residuals,
    )
