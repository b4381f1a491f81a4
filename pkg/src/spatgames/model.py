"""Game models over position-strategy states and their interaction fields.

An agent state is a pair ``y = (x, sigma)`` of a position in R^d and a mixed
strategy over a finite space ``U``.  Agents interact through a payoff
``J(x, u, x', u')`` and move with a strategy-averaged velocity built from
``e(x, u)``.  The induced pairwise interaction field is

* in position: ``a(y) = sum_i sigma_i e(x, u_i)``, and
* in strategy: a replicator-type term ``sigma * (advantage)``, where the
  advantage of a pure strategy is its payoff against the other agent's
  strategy minus the sigma-average of the same quantity.

Averaging the pairwise field over an ensemble gives the mean field that
drives the dynamics.  All payoffs are separable: a matrix game modulated by
a radial spatial kernel.  This keeps every Lipschitz constant available in
closed form, which is what the certification ledger records.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import ConfigError
from .spaces import MASS_TOL, StrategySpace, clean_weight_rows, clean_weights

KERNEL_KINDS = ("constant", "gaussian", "bump")

#: inverse of Euler's number to the one-half: the peak slope of the unit
#: Gaussian exp(-r^2/2) is attained at r = 1 with value exp(-1/2).
_GAUSS_PEAK_SLOPE = math.exp(-0.5)


@dataclass(frozen=True, eq=False)
class SpatialKernel:
    """Radial modulation ``w(r)`` of the payoff matrix.

    kind:
        ``constant``: ``w = value`` everywhere.
        ``gaussian``: ``w(r) = exp(-r^2 / (2 scale^2))``.
        ``bump``: ``w(r) = max(1 - r/scale, 0)``.
    scale:
        Length scale (Gaussian bandwidth or bump support radius); ignored
        for the constant kernel.
    """

    kind: str = "constant"
    scale: float = 1.0
    value: float = 1.0

    def __post_init__(self):
        if self.kind not in KERNEL_KINDS:
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if self.kind != "constant" and not self.scale > 0.0:
            raise ValueError("kernel scale must be positive")

    def weight(self, r: ArrayLike) -> NDArray[np.float64]:
        r = np.asarray(r, dtype=float)
        if self.kind == "constant":
            return np.full_like(r, self.value)
        if self.kind == "gaussian":
            return np.exp(-(r**2) / (2.0 * self.scale**2))
        return np.maximum(1.0 - r / self.scale, 0.0)

    @property
    def lip(self) -> float:
        """Lipschitz constant of ``w`` as a function of r >= 0."""
        if self.kind == "constant":
            return 0.0
        if self.kind == "gaussian":
            return _GAUSS_PEAK_SLOPE / self.scale
        return 1.0 / self.scale

    @property
    def sup(self) -> float:
        return abs(self.value) if self.kind == "constant" else 1.0

    def to_config(self) -> dict:
        cfg = {"kind": self.kind}
        if self.kind == "constant":
            cfg["value"] = self.value
        else:
            cfg["scale"] = self.scale
        return cfg

    @classmethod
    def from_config(cls, cfg: dict) -> "SpatialKernel":
        if not isinstance(cfg, dict):
            raise ConfigError("kernel config must be a mapping")
        unknown = set(cfg) - {"kind", "scale", "value"}
        if unknown:
            raise ConfigError(f"unknown kernel keys: {sorted(unknown)}")
        try:
            return cls(
                kind=cfg.get("kind", "constant"),
                scale=float(cfg.get("scale", 1.0)),
                value=float(cfg.get("value", 1.0)),
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc


@dataclass(frozen=True, eq=False)
class Payoff:
    """Separable payoff ``J(x, u_i, x', u_j) = matrix[i, j] * w(|x - x'|)``.

    A pure matrix game is the special case of a constant kernel.
    """

    matrix: NDArray[np.float64]
    kernel: SpatialKernel = field(default_factory=SpatialKernel)

    def __post_init__(self):
        m = np.ascontiguousarray(np.asarray(self.matrix, dtype=float))
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"payoff matrix must be square, got {m.shape}")
        if not np.all(np.isfinite(m)):
            raise ValueError("payoff matrix has non-finite entries")
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)

    @property
    def n_strategies(self) -> int:
        return self.matrix.shape[0]

    def evaluate(self, x: ArrayLike, i: int, x_other: ArrayLike, j: int) -> float:
        r = float(np.linalg.norm(np.asarray(x, float) - np.asarray(x_other, float)))
        return float(self.matrix[i, j] * self.kernel.weight(r))

    def kernel_weights(
        self, xa: NDArray[np.float64], xb: NDArray[np.float64]
    ) -> NDArray[np.float64]:
        """Kernel values on all position pairs; shape ``(len(xa), len(xb))``."""
        diff = xa[:, None, :] - xb[None, :, :]
        return self.kernel.weight(np.sqrt((diff**2).sum(axis=-1)))

    def strategy_lip(self, space: StrategySpace) -> float:
        """Largest matrix-entry difference per unit strategy distance.

        Taken over both matrix indices, so it bounds the variation of the
        payoff in each of its two strategy arguments.
        """
        a = self.matrix
        d = space.dist
        k = space.n_strategies
        if k < 2:
            return 0.0
        best = 0.0
        for i in range(k):
            for j in range(i + 1, k):
                rows = float(np.max(np.abs(a[i] - a[j])) / d[i, j])
                cols = float(np.max(np.abs(a[:, i] - a[:, j])) / d[i, j])
                best = max(best, rows, cols)
        return best

    def lipschitz_bound(self, space: StrategySpace) -> float:
        """Closed-form Lipschitz constant of J on the product state space.

        The position part varies at most ``max|A| * Lip(w)`` per unit
        distance and the strategy part at most ``strategy_lip * sup|w|``.
        """
        return max(
            float(np.max(np.abs(self.matrix))) * self.kernel.lip,
            self.strategy_lip(space) * self.kernel.sup,
        )

    def to_config(self) -> dict:
        return {"matrix": self.matrix.tolist(), "kernel": self.kernel.to_config()}

    @classmethod
    def from_config(cls, cfg: dict) -> "Payoff":
        if not isinstance(cfg, dict):
            raise ConfigError("payoff config must be a mapping")
        unknown = set(cfg) - {"matrix", "kernel"}
        if unknown:
            raise ConfigError(f"unknown payoff keys: {sorted(unknown)}")
        if "matrix" not in cfg:
            raise ConfigError("payoff config requires 'matrix'")
        kernel = SpatialKernel.from_config(cfg.get("kernel", {"kind": "constant"}))
        try:
            return cls(matrix=np.asarray(cfg["matrix"], dtype=float), kernel=kernel)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc


@dataclass(frozen=True, eq=False)
class Velocity:
    """Velocity family ``e(x, u_k) = table[k] - damping * x``."""

    table: NDArray[np.float64]
    damping: float = 0.0

    def __post_init__(self):
        t = np.ascontiguousarray(np.atleast_2d(np.asarray(self.table, dtype=float)))
        if not np.all(np.isfinite(t)):
            raise ValueError("velocity table has non-finite entries")
        if self.damping < 0.0:
            raise ValueError("damping must be nonnegative")
        t.flags.writeable = False
        object.__setattr__(self, "table", t)

    @property
    def n_strategies(self) -> int:
        return self.table.shape[0]

    @property
    def dim(self) -> int:
        return self.table.shape[1]

    def evaluate(self, x: ArrayLike, k: int) -> NDArray[np.float64]:
        return self.table[k] - self.damping * np.asarray(x, dtype=float)

    def strategy_lip(self, space: StrategySpace) -> float:
        k = space.n_strategies
        if k < 2:
            return 0.0
        best = 0.0
        for i in range(k):
            for j in range(i + 1, k):
                best = max(
                    best,
                    float(np.linalg.norm(self.table[i] - self.table[j]) / space.dist[i, j]),
                )
        return best

    def lipschitz_bound(self, space: StrategySpace) -> float:
        return max(self.damping, self.strategy_lip(space))

    def sup_norm(self, position_bound: float) -> float:
        """Upper bound on ``|e|`` over the certification ball times U."""
        peak = float(np.max(np.linalg.norm(self.table, axis=1)))
        if self.damping == 0.0:
            return peak
        return peak + self.damping * position_bound

    def to_config(self) -> dict:
        cfg = {"table": self.table.tolist()}
        if self.damping:
            cfg["damping"] = self.damping
        return cfg

    @classmethod
    def from_config(cls, cfg: dict) -> "Velocity":
        if not isinstance(cfg, dict):
            raise ConfigError("velocity config must be a mapping")
        unknown = set(cfg) - {"table", "damping"}
        if unknown:
            raise ConfigError(f"unknown velocity keys: {sorted(unknown)}")
        if "table" not in cfg:
            raise ConfigError("velocity config requires 'table'")
        try:
            return cls(
                table=np.asarray(cfg["table"], dtype=float),
                damping=float(cfg.get("damping", 0.0)),
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc


@dataclass(frozen=True)
class LipschitzLedger:
    """Certified constants for the interaction field.

    ``L_e`` and ``L_J`` bound the velocity and payoff on the product state
    space; ``diam`` is the strategy-space diameter.  Everything else follows
    in closed form:

    * position component: ``L_fx = L_e * (1 + diam)``,
    * strategy component: ``L_fsigma = 2 * L_J * (1 + diam)``,
    * full field: ``L = L_fx + L_fsigma``,
    * largest structure-preserving step: ``theta_max = 1 / (L_J * diam)``,
      infinite when the product vanishes.
    """

    L_e: float
    L_J: float
    diam: float

    @property
    def L_fx(self) -> float:
        return self.L_e * (1.0 + self.diam)

    @property
    def L_fsigma(self) -> float:
        return 2.0 * self.L_J * (1.0 + self.diam)

    @property
    def L(self) -> float:
        return self.L_fx + self.L_fsigma

    @property
    def theta_max(self) -> float:
        prod = self.L_J * self.diam
        return math.inf if prod == 0.0 else 1.0 / prod

    def to_dict(self) -> dict:
        return {
            "L_e": self.L_e,
            "L_J": self.L_J,
            "diam": self.diam,
            "L_fx": self.L_fx,
            "L_fsigma": self.L_fsigma,
            "L": self.L,
            "theta_max": self.theta_max,
        }


def compute_ledger(
    payoff: Payoff,
    velocity: Velocity,
    space: StrategySpace,
    L_e: float | None = None,
    L_J: float | None = None,
) -> LipschitzLedger:
    """Build the constants ledger, allowing explicit overrides.

    Overrides exist for experiments that certify against externally supplied
    constants; they must still be nonnegative.
    """
    le = velocity.lipschitz_bound(space) if L_e is None else float(L_e)
    lj = payoff.lipschitz_bound(space) if L_J is None else float(L_J)
    if le < 0.0 or lj < 0.0:
        raise ValueError("Lipschitz constants must be nonnegative")
    return LipschitzLedger(L_e=le, L_J=lj, diam=space.diam)


@dataclass(frozen=True, eq=False)
class GameModel:
    """A complete model: space, payoff, velocity and certification data."""

    space: StrategySpace
    dim: int
    payoff: Payoff
    velocity: Velocity
    position_bound: float = math.inf
    lipschitz_overrides: tuple[float | None, float | None] = (None, None)

    def __post_init__(self):
        k = self.space.n_strategies
        if self.payoff.n_strategies != k:
            raise ValueError("payoff matrix size does not match the strategy space")
        if self.velocity.n_strategies != k:
            raise ValueError("velocity table size does not match the strategy space")
        if self.velocity.dim != self.dim:
            raise ValueError("velocity table dimension does not match the model")
        if not self.position_bound > 0.0:
            raise ValueError("position bound must be positive")

    @cached_property
    def ledger(self) -> LipschitzLedger:
        le, lj = self.lipschitz_overrides
        return compute_ledger(self.payoff, self.velocity, self.space, L_e=le, L_J=lj)

    def to_config(self) -> dict:
        cfg = {
            "schema": 1,
            "dim": self.dim,
            "space": self.space.to_config(),
            "payoff": self.payoff.to_config(),
            "velocity": self.velocity.to_config(),
        }
        if math.isfinite(self.position_bound):
            cfg["position_bound"] = self.position_bound
        le, lj = self.lipschitz_overrides
        overrides = {}
        if le is not None:
            overrides["L_e"] = le
        if lj is not None:
            overrides["L_J"] = lj
        if overrides:
            cfg["lipschitz_overrides"] = overrides
        return cfg

    @classmethod
    def from_config(cls, cfg: dict) -> "GameModel":
        if not isinstance(cfg, dict):
            raise ConfigError("model config must be a mapping")
        allowed = {
            "schema", "dim", "space", "payoff", "velocity",
            "position_bound", "lipschitz_overrides",
        }
        unknown = set(cfg) - allowed
        if unknown:
            raise ConfigError(f"unknown model keys: {sorted(unknown)}")
        for key in ("dim", "space", "payoff", "velocity"):
            if key not in cfg:
                raise ConfigError(f"model config requires {key!r}")
        overrides = cfg.get("lipschitz_overrides", {})
        if not isinstance(overrides, dict) or set(overrides) - {"L_e", "L_J"}:
            raise ConfigError("lipschitz_overrides accepts only L_e and L_J")
        try:
            return cls(
                space=StrategySpace.from_config(cfg["space"]),
                dim=int(cfg["dim"]),
                payoff=Payoff.from_config(cfg["payoff"]),
                velocity=Velocity.from_config(cfg["velocity"]),
                position_bound=float(cfg.get("position_bound", math.inf)),
                lipschitz_overrides=(
                    overrides.get("L_e"),
                    overrides.get("L_J"),
                ),
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc


# ---------------------------------------------------------------------------
# states and ensembles


@dataclass(frozen=True, eq=False)
class AgentState:
    """Position plus mixed strategy of a single agent."""

    x: NDArray[np.float64]
    sigma: NDArray[np.float64]

    def __post_init__(self):
        x = np.ascontiguousarray(np.atleast_1d(np.asarray(self.x, dtype=float)))
        sigma, _ = clean_weights(self.sigma)
        x.flags.writeable = False
        sigma.flags.writeable = False
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "sigma", sigma)


@dataclass(frozen=True, eq=False)
class Ensemble:
    """A weighted cloud of agent states.

    Masses are strictly positive and sum to one; strategy rows live on the
    probability simplex (clamped within the roundoff floor).
    """

    positions: NDArray[np.float64]
    strategies: NDArray[np.float64]
    masses: NDArray[np.float64]

    def __post_init__(self):
        x = np.ascontiguousarray(np.atleast_2d(np.asarray(self.positions, dtype=float)))
        s = np.ascontiguousarray(np.atleast_2d(np.asarray(self.strategies, dtype=float)))
        m = np.ascontiguousarray(np.atleast_1d(np.asarray(self.masses, dtype=float)))
        n = x.shape[0]
        if s.shape[0] != n or m.shape[0] != n:
            raise ValueError("positions, strategies and masses disagree on the agent count")
        if np.any(m <= 0.0):
            raise ValueError("masses must be strictly positive")
        if abs(m.sum() - 1.0) > MASS_TOL:
            raise ValueError(f"masses sum to {m.sum()!r}, expected 1 within {MASS_TOL}")
        cleaned, _ = clean_weight_rows(s)
        for arr in (x, cleaned, m):
            arr.flags.writeable = False
        object.__setattr__(self, "positions", x)
        object.__setattr__(self, "strategies", cleaned)
        object.__setattr__(self, "masses", m)

    @property
    def n_agents(self) -> int:
        return self.positions.shape[0]

    @property
    def dim(self) -> int:
        return self.positions.shape[1]

    @property
    def n_strategies(self) -> int:
        return self.strategies.shape[1]

    def agent(self, i: int) -> AgentState:
        return AgentState(self.positions[i], self.strategies[i])

    @classmethod
    def uniform(cls, positions: ArrayLike, strategies: ArrayLike) -> "Ensemble":
        x = np.atleast_2d(np.asarray(positions, dtype=float))
        n = x.shape[0]
        return cls(x, strategies, np.full(n, 1.0 / n))

    @classmethod
    def single(cls, x: ArrayLike, sigma: ArrayLike) -> "Ensemble":
        return cls(np.atleast_2d(np.asarray(x, float)), np.atleast_2d(sigma), np.ones(1))


# ---------------------------------------------------------------------------
# interaction fields


def mean_velocity(agent: AgentState, model: GameModel) -> NDArray[np.float64]:
    """Strategy-averaged velocity ``sum_k sigma_k e(x, u_k)``."""
    return agent.sigma @ model.velocity.table - model.velocity.damping * agent.x


def j_conv(
    ensemble: Ensemble, x: ArrayLike, model: GameModel
) -> NDArray[np.float64]:
    """Kernel convolution of the payoff with the ensemble, at position ``x``.

    Component ``i`` is the expected payoff of pure strategy ``i`` against
    the cloud: the mass- and strategy-weighted sum of the kernel-damped
    matrix payoff over the ensemble's atoms.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    w = model.payoff.kernel_weights(x[None, :], ensemble.positions)[0]
    pooled = (w * ensemble.masses) @ ensemble.strategies
    return model.payoff.matrix @ pooled


def interaction_potential(
    ensemble: Ensemble, agent: AgentState, model: GameModel
) -> NDArray[np.float64]:
    """Payoff advantage of each pure strategy over the agent's own mix.

    By construction the result is orthogonal to the agent's strategy: the
    sigma-average of the advantage vanishes.
    """
    conv = j_conv(ensemble, agent.x, model)
    return conv - float(agent.sigma @ conv)


def pairwise_field(agent: AgentState, other: AgentState, model: GameModel):
    """Interaction of a single ordered pair of agents.

    Returns the position component (the acting agent's mean velocity; the
    other agent does not enter it) and the strategy component, a replicator
    step toward strategies that pay better against the other agent.  The
    strategy component always carries zero total mass.
    """
    against = Ensemble.single(other.x, other.sigma)
    advantage = interaction_potential(against, agent, model)
    return mean_velocity(agent, model), agent.sigma * advantage


def _advantage_raw(
    probe_x: NDArray[np.float64],
    probe_s: NDArray[np.float64],
    back_x: NDArray[np.float64],
    back_s: NDArray[np.float64],
    back_m: NDArray[np.float64],
    model: GameModel,
) -> NDArray[np.float64]:
    """Advantage vectors of probe states against a background cloud.

    Raw-array core shared by every integrator; no validation, one row per
    probe.
    """
    w = model.payoff.kernel_weights(probe_x, back_x)
    pooled = (w * back_m) @ back_s
    conv = pooled @ model.payoff.matrix.T
    avg = np.einsum("ij,ij->i", probe_s, conv)
    return conv - avg[:, None]


def _drift_raw(
    probe_x: NDArray[np.float64],
    probe_s: NDArray[np.float64],
    back_x: NDArray[np.float64],
    back_s: NDArray[np.float64],
    back_m: NDArray[np.float64],
    model: GameModel,
):
    """Mean-field drift ``(dx, dsigma)`` of probes against a background."""
    adv = _advantage_raw(probe_x, probe_s, back_x, back_s, back_m, model)
    dx = probe_s @ model.velocity.table - model.velocity.damping * probe_x
    return dx, probe_s * adv


def advantage_arrays(
    positions: NDArray[np.float64],
    strategies: NDArray[np.float64],
    ensemble: Ensemble,
    model: GameModel,
) -> NDArray[np.float64]:
    """Interaction potential of many probe states against one ensemble."""
    return _advantage_raw(
        positions, strategies,
        ensemble.positions, ensemble.strategies, ensemble.masses, model,
    )


def drift_arrays(
    positions: NDArray[np.float64],
    strategies: NDArray[np.float64],
    ensemble: Ensemble,
    model: GameModel,
):
    """Mean-field drift of many probe states against a fixed ensemble.

    Returns ``(dx, dsigma)`` with one row per probe.  Probes equal to the
    ensemble's own atoms reproduce the self-consistent dynamics.
    """
    return _drift_raw(
        positions, strategies,
        ensemble.positions, ensemble.strategies, ensemble.masses, model,
    )


def mean_field(ensemble: Ensemble, agent: AgentState, model: GameModel):
    """Ensemble-averaged interaction field acting on one agent."""
    dx, dsigma = drift_arrays(agent.x[None, :], agent.sigma[None, :], ensemble, model)
    return dx[0], dsigma[0]


def ensemble_drift(ensemble: Ensemble, model: GameModel):
    """Mean-field drift of every atom of an ensemble against itself."""
    return drift_arrays(ensemble.positions, ensemble.strategies, ensemble, model)


def estimate_lipschitz_constants(
    payoff: Payoff,
    velocity: Velocity,
    space: StrategySpace,
    position_bound: float,
    n_samples: int = 20_000,
    seed: int = 0,
) -> tuple[float, float]:
    """Estimate ``(L_e, L_J)`` by dense difference-quotient sampling.

    Draws random state pairs inside the certification ball and maximizes the
    difference quotient with respect to the sum metric.  The result is a
    lower bound on the true constants; it validates the closed forms.
    """
    if not math.isfinite(position_bound):
        raise ValueError("sampled Lipschitz estimation requires a finite position bound")
    rng = np.random.default_rng(seed)
    k = space.n_strategies
    dim = velocity.dim
    xs = rng.uniform(-position_bound, position_bound, size=(n_samples, 4, dim))
    us = rng.integers(0, k, size=(n_samples, 4))
    le = 0.0
    lj = 0.0
    for x4, u4 in zip(xs, us):
        (x1, x2, x3, x4_), (u1, u2, u3, u4__) = x4, u4
        dv = np.linalg.norm(velocity.evaluate(x1, u1) - velocity.evaluate(x2, u2))
        den = np.linalg.norm(x1 - x2) + space.dist[u1, u2]
        if den > 1e-9:
            le = max(le, float(dv / den))
        dj = abs(
            payoff.evaluate(x1, u1, x3, u3) - payoff.evaluate(x2, u2, x4_, u4__)
        )
        den = (
            np.linalg.norm(x1 - x2) + space.dist[u1, u2]
            + np.linalg.norm(x3 - x4_) + space.dist[u3, u4__]
        )
        if den > 1e-9:
            lj = max(lj, float(dj / den))
    return le, lj
