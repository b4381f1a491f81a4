"""Exact optimal transport between ensembles of agent states.

The ground metric on states is the position distance plus the
bounded-Lipschitz distance between strategies.  Ensemble distances are
1-Wasserstein with respect to that ground metric, solved exactly as linear
programs; the optimal coupling and its dual certificate are returned
alongside the value.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .errors import GridMismatch, SolverFailure
from .model import AgentState, Ensemble
from .spaces import StrategySpace, bl_norm, solve_transport_lp

#: tolerance on coupling marginals; the LP is solved well below this.
MARGINAL_TOL = 1e-10

#: strategy rows closer than this (sup norm) count as the same atom when
#: merging duplicates; positions must match exactly.
MERGE_STRATEGY_TOL = 1e-12


def d_C(a: AgentState, b: AgentState, space: StrategySpace) -> float:
    """Ground metric on agent states.

    Euclidean distance between the positions plus the dual-Lipschitz
    distance between the mixed strategies.
    """
    dx = float(np.linalg.norm(a.x - b.x))
    return dx + bl_norm(a.sigma - b.sigma, space)


def cost_matrix(ens_a: Ensemble, ens_b: Ensemble, space: StrategySpace) -> NDArray[np.float64]:
    """All pairwise state distances between two ensembles.

    The strategy part is evaluated against the pre-tabulated dual ball when
    available (a single matrix product for all pairs), falling back to the
    per-pair LP on large spaces.
    """
    diff = ens_a.positions[:, None, :] - ens_b.positions[None, :, :]
    pos_part = np.sqrt((diff**2).sum(axis=-1))
    sdiff = ens_a.strategies[:, None, :] - ens_b.strategies[None, :, :]
    verts = space._bl_vertices
    if verts is not None:
        flat = sdiff.reshape(-1, space.n_strategies)
        bl_part = np.max(flat @ verts.T, axis=1).reshape(pos_part.shape)
    else:
        bl_part = np.empty_like(pos_part)
        for i in range(ens_a.n_agents):
            for j in range(ens_b.n_agents):
                bl_part[i, j] = bl_norm(sdiff[i, j], space)
    return pos_part + bl_part


@dataclass(frozen=True, eq=False)
class Coupling:
    """An optimal transport plan with its dual certificate.

    The plan's row and column sums reproduce the two mass vectors within
    ``MARGINAL_TOL``; ``dual_row + dual_col <= cost`` holds entrywise and
    the dual objective matches ``value``.
    """

    plan: NDArray[np.float64]
    source_masses: NDArray[np.float64]
    target_masses: NDArray[np.float64]
    value: float
    dual_row: NDArray[np.float64]
    dual_col: NDArray[np.float64]

    def __post_init__(self):
        p = np.asarray(self.plan, dtype=float)
        row_err = float(np.max(np.abs(p.sum(axis=1) - self.source_masses)))
        col_err = float(np.max(np.abs(p.sum(axis=0) - self.target_masses)))
        if max(row_err, col_err) > MARGINAL_TOL:
            raise SolverFailure(
                f"coupling marginals off by {max(row_err, col_err):.2e} "
                f"(tolerance {MARGINAL_TOL:.0e})"
            )

    @property
    def dual_value(self) -> float:
        return float(
            self.source_masses @ self.dual_row + self.target_masses @ self.dual_col
        )

    @property
    def duality_gap(self) -> float:
        return abs(self.value - self.dual_value)

    def support(self, atol: float = 1e-14):
        """Nonzero plan entries as ``(rows, cols, masses)`` arrays."""
        rows, cols = np.nonzero(self.plan > atol)
        return rows, cols, self.plan[rows, cols]

    @property
    def rows(self) -> NDArray[np.int_]:
        return self.support()[0]

    @property
    def cols(self) -> NDArray[np.int_]:
        return self.support()[1]


def w1_ensembles(
    ens_a: Ensemble, ens_b: Ensemble, space: StrategySpace
) -> tuple[float, Coupling]:
    """Exact Wasserstein distance between two ensembles.

    Returns the optimal value together with the coupling that attains it.
    """
    if ens_a.dim != ens_b.dim:
        raise ValueError("ensembles live in different position dimensions")
    if ens_a.n_strategies != ens_b.n_strategies:
        raise ValueError("ensembles live over different strategy spaces")
    cost = cost_matrix(ens_a, ens_b, space)
    value, plan, u, v = solve_transport_lp(cost, ens_a.masses, ens_b.masses)
    value = max(value, 0.0)
    coupling = Coupling(
        plan=plan,
        source_masses=ens_a.masses,
        target_masses=ens_b.masses,
        value=value,
        dual_row=u,
        dual_col=v,
    )
    return value, coupling


def merge_duplicate_atoms(ens: Ensemble) -> Ensemble:
    """Merge atoms with exactly equal positions and near-equal strategies.

    Strategy rows within ``MERGE_STRATEGY_TOL`` (sup norm) of each other are
    treated as the same state; merged atoms take the mass-weighted strategy
    average.  Distances between an ensemble and its merged form are zero, so
    merging makes the ensemble distance a true metric on reduced form.
    """
    n = ens.n_agents
    owner = -np.ones(n, dtype=int)
    groups: list[list[int]] = []
    for i in range(n):
        if owner[i] >= 0:
            continue
        owner[i] = len(groups)
        members = [i]
        for j in range(i + 1, n):
            if owner[j] >= 0:
                continue
            if not np.array_equal(ens.positions[i], ens.positions[j]):
                continue
            if np.max(np.abs(ens.strategies[i] - ens.strategies[j])) <= MERGE_STRATEGY_TOL:
                owner[j] = len(groups)
                members.append(j)
        groups.append(members)
    if len(groups) == n:
        return ens
    positions = np.empty((len(groups), ens.dim))
    strategies = np.empty((len(groups), ens.n_strategies))
    masses = np.empty(len(groups))
    for g, members in enumerate(groups):
        w = ens.masses[members]
        masses[g] = w.sum()
        positions[g] = ens.positions[members[0]]
        strategies[g] = (w[:, None] * ens.strategies[members]).sum(axis=0) / masses[g]
    return Ensemble(positions, strategies, masses / masses.sum())


def same_time_grid(times_a: NDArray[np.float64], times_b: NDArray[np.float64]) -> bool:
    if times_a.shape != times_b.shape:
        return False
    return bool(np.max(np.abs(times_a - times_b)) <= 1e-12) if times_a.size else True


def curve_distance(curve_a, curve_b, weight_rate: float, space: StrategySpace) -> float:
    """Weighted supremum distance between two ensemble curves.

    ``max_t exp(-weight_rate * t) * W1(curve_a(t), curve_b(t))`` over the
    shared time grid.  Raises :class:`GridMismatch` when the grids differ.
    """
    ta = np.asarray(curve_a.times, dtype=float)
    tb = np.asarray(curve_b.times, dtype=float)
    if not same_time_grid(ta, tb):
        raise GridMismatch(
            f"time grids differ: {ta.shape} vs {tb.shape} "
            f"or entries disagree beyond 1e-12"
        )
    best = 0.0
    for t, ens_a, ens_b in zip(ta, curve_a.states, curve_b.states):
        value, _ = w1_ensembles(ens_a, ens_b, space)
        best = max(best, float(np.exp(-weight_rate * t)) * value)
    return best
