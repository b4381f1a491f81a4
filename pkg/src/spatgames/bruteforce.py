"""Brute-force reference solvers for the norm and transport problems.

These are deliberately independent of the production routes: no Qhull, no
LP solver.  The bounded-Lipschitz norm is found by enumerating every basic
solution of its lifted feasibility system (test vector plus its sup-norm
and Lipschitz budgets as explicit variables); the transport problems are
solved by enumerating every basic solution of the transportation polytope
(cell subsets of size ``n + m - 1`` whose incidence system is
nonsingular).  Costs grow combinatorially, so sizes are capped; the point
is cross-checking, not performance.
"""

from __future__ import annotations

from functools import lru_cache
from itertools import combinations
from math import comb

import numpy as np
from numpy.typing import NDArray

from .spaces import StrategySpace, _weights_of

#: largest number of atoms per side accepted by the transport enumerations.
MAX_BRUTE_ATOMS = 5

#: largest strategy space accepted by the facet enumeration.
MAX_BRUTE_K = 4


@lru_cache(maxsize=None)
def _lifted_subsets(n_rows: int, n_vars: int) -> NDArray[np.int64]:
    if comb(n_rows, n_vars) > 500_000:
        raise ValueError("too many basic systems to enumerate")
    return np.array(list(combinations(range(n_rows), n_vars)), dtype=np.int64)


def _dual_ball_vertices(space: StrategySpace) -> NDArray[np.float64]:
    """Vertices of the lifted dual ball, one row per vertex.

    Works in the lifted variables ``(phi, s, t)`` where ``s`` bounds the
    sup norm of the test vector and ``t`` its Lipschitz constant, with
    ``s + t <= 1``.  Every vertex is the solution of one square
    subsystem of the defining inequalities.  The polytope depends only
    on the space, so callers evaluating many measures against the same
    space should enumerate once and reuse the rows.
    """
    k = space.n_strategies
    if k > MAX_BRUTE_K:
        raise ValueError(f"brute force capped at {MAX_BRUTE_K} strategies, got {k}")
    d = space.dist
    n_var = k + 2
    rows, rhs = [], []

    def add(coeffs, bound):
        rows.append(coeffs)
        rhs.append(bound)

    for i in range(k):
        e = np.zeros(n_var)
        e[i], e[k] = 1.0, -1.0
        add(e, 0.0)  # phi_i <= s
        e = np.zeros(n_var)
        e[i], e[k] = -1.0, -1.0
        add(e, 0.0)  # -phi_i <= s
        for j in range(k):
            if i == j:
                continue
            e = np.zeros(n_var)
            e[i], e[j], e[k + 1] = 1.0, -1.0, -d[i, j]
            add(e, 0.0)  # phi_i - phi_j <= t * d_ij
    e = np.zeros(n_var)
    e[k], e[k + 1] = 1.0, 1.0
    add(e, 1.0)  # s + t <= 1
    e = np.zeros(n_var)
    e[k] = -1.0
    add(e, 0.0)  # s >= 0
    e = np.zeros(n_var)
    e[k + 1] = -1.0
    add(e, 0.0)  # t >= 0
    G = np.array(rows)
    g = np.array(rhs)

    subsets = _lifted_subsets(len(G), n_var)
    mats = G[subsets]
    dets = np.linalg.det(mats)
    keep = np.abs(dets) > 1e-9
    mats, subs = mats[keep], subsets[keep]
    cands = np.linalg.solve(mats, g[subs][:, :, None])[:, :, 0]
    feasible = np.all(G @ cands.T <= g[:, None] + 1e-9, axis=0)
    verts = cands[feasible]
    if verts.size == 0:
        raise RuntimeError("vertex enumeration produced no feasible points")
    return verts[:, :k]


def bl_norm_bruteforce(nu, space: StrategySpace) -> float:
    """Bounded-Lipschitz norm by explicit vertex search.

    The objective is linear in the test vector, so its maximum over the
    dual ball is attained at one of the enumerated vertices.
    """
    w = _weights_of(nu)
    if space.n_strategies == 1:
        return abs(float(w[0]))
    return float(np.max(_dual_ball_vertices(space) @ w))


@lru_cache(maxsize=None)
def _basic_subsets(n: int, m: int) -> NDArray[np.int64]:
    """All cell subsets of size n + m - 1, candidates for transport bases."""
    if comb(n * m, n + m - 1) > 200_000:
        raise ValueError(f"too many bases to enumerate for a {n}x{m} transport problem")
    return np.array(list(combinations(range(n * m), n + m - 1)), dtype=np.int64)


def transport_bruteforce(
    cost: NDArray[np.float64],
    a: NDArray[np.float64],
    b: NDArray[np.float64],
) -> float:
    """Minimal transport cost by enumerating basic feasible solutions.

    Every vertex of the transportation polytope is the unique solution of
    the marginal equations restricted to ``n + m - 1`` cells with a
    nonsingular incidence system (one redundant marginal row dropped), so
    scanning all such subsets and keeping the nonnegative solutions visits
    every vertex.
    """
    cost = np.asarray(cost, dtype=float)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    n, m = cost.shape
    if n > MAX_BRUTE_ATOMS or m > MAX_BRUTE_ATOMS:
        raise ValueError(f"brute force capped at {MAX_BRUTE_ATOMS} atoms per side")
    if abs(a.sum() - b.sum()) > 1e-9:
        raise ValueError("marginals must carry equal total mass")
    incidence = np.zeros((n * m, n + m))
    for i in range(n):
        for j in range(m):
            incidence[i * m + j, i] = 1.0
            incidence[i * m + j, n + j] = 1.0
    incidence = incidence[:, :-1]  # last column constraint is redundant
    rhs = np.concatenate([a, b])[:-1]
    subsets = _basic_subsets(n, m)
    mats = np.swapaxes(incidence[subsets], 1, 2)  # (n_sub, n+m-1, n+m-1)
    dets = np.linalg.det(mats)
    keep = np.abs(dets) > 0.5  # incidence determinants are -1, 0 or +1
    mats = mats[keep]
    subsets = subsets[keep]
    rhs_b = np.broadcast_to(rhs[:, None], (len(mats), len(rhs), 1))
    flows = np.linalg.solve(mats, np.ascontiguousarray(rhs_b))[:, :, 0]
    feasible = np.all(flows >= -1e-10, axis=1)
    if not np.any(feasible):
        raise RuntimeError("no basic feasible solution found")
    costs = np.einsum("ij,ij->i", flows[feasible], cost.ravel()[subsets[feasible]])
    return float(np.min(costs))


def w1_on_U_bruteforce(mu, nu, space: StrategySpace) -> float:
    """Wasserstein distance between mixed strategies by basis enumeration."""
    return max(transport_bruteforce(space.dist, _weights_of(mu), _weights_of(nu)), 0.0)


def state_cost_matrix_bruteforce(
    positions_a: NDArray[np.float64],
    strategies_a: NDArray[np.float64],
    positions_b: NDArray[np.float64],
    strategies_b: NDArray[np.float64],
    space: StrategySpace,
) -> NDArray[np.float64]:
    """Pairwise agent-state distances with the brute-forced strategy norm."""
    n, m = len(positions_a), len(positions_b)
    phi = _dual_ball_vertices(space)  # shared polytope, enumerate once
    cost = np.zeros((n, m))
    for i in range(n):
        for j in range(m):
            dx = float(np.linalg.norm(positions_a[i] - positions_b[j]))
            dsigma = float(np.max(phi @ (strategies_a[i] - strategies_b[j])))
            cost[i, j] = dx + dsigma
    return cost


def w1_ensembles_bruteforce(ens_a, ens_b, space: StrategySpace) -> float:
    """Ensemble Wasserstein distance with every ingredient brute-forced."""
    cost = state_cost_matrix_bruteforce(
        ens_a.positions, ens_a.strategies, ens_b.positions, ens_b.strategies, space
    )
    return max(transport_bruteforce(cost, ens_a.masses, ens_b.masses), 0.0)
