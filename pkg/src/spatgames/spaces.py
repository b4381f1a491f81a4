"""Finite strategy spaces, mixed strategies, and norms on signed measures.

A strategy space is a finite metric space: ``K`` labelled pure strategies
together with a symmetric distance matrix.  Mixed strategies are probability
vectors over the pure strategies; differences of mixed strategies are signed
measures with zero total mass.  Three norms matter for the dynamics:

* total variation, the plain sum of absolute weights,
* the bounded-Lipschitz (flat) norm, the dual norm over test functions
  ``phi`` with ``max|phi| + Lip(phi) <= 1``,
* the 1-Wasserstein distance between probability vectors.

Both the bounded-Lipschitz norm and the Wasserstein distance are computed as
exact linear programs.  For small spaces the bounded-Lipschitz unit ball is
pre-tabulated by vertex enumeration so that the dual maximum becomes a single
matrix-vector product; the tabulated vertices describe the same feasible
polytope as the LP, so both routes return the same value.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import sparse
from scipy.optimize import linprog
from scipy.spatial import HalfspaceIntersection

from .errors import ConfigError, SimplexViolation, SolverFailure

#: weights in [WEIGHT_FLOOR, 0) are treated as roundoff and clamped to zero;
#: anything below WEIGHT_FLOOR is a genuine simplex violation.
WEIGHT_FLOOR = -1e-12

#: tolerance on the total mass of a mixed strategy.
MASS_TOL = 1e-9

#: tolerance for metric-axiom checks on distance matrices.
METRIC_TOL = 1e-12

#: largest K for which the bounded-Lipschitz unit ball is vertex-tabulated.
#: Beyond this the LP route is used directly (enumeration cost explodes).
BL_VERTEX_MAX_K = 6

#: default cap on the number of pure strategies accepted from config files.
MAX_STRATEGIES = 64

_LP_OPTIONS = {
    "primal_feasibility_tolerance": 1e-10,
    "dual_feasibility_tolerance": 1e-10,
}


def _check_distance_matrix(dist: NDArray[np.floating]) -> None:
    if dist.ndim != 2 or dist.shape[0] != dist.shape[1]:
        raise ValueError(f"distance matrix must be square, got shape {dist.shape}")
    k = dist.shape[0]
    if not np.all(np.isfinite(dist)):
        raise ValueError("distance matrix contains non-finite entries")
    if np.any(np.abs(np.diag(dist)) > METRIC_TOL):
        raise ValueError("distance matrix has a nonzero diagonal")
    if np.any(np.abs(dist - dist.T) > METRIC_TOL):
        raise ValueError("distance matrix is not symmetric")
    off = dist[~np.eye(k, dtype=bool)]
    if off.size and np.min(off) <= 0.0:
        raise ValueError("off-diagonal distances must be strictly positive")
    # triangle inequality: d[i,k] <= d[i,j] + d[j,k] for all i,j,k
    if k >= 3:
        sums = dist[:, :, None] + dist[None, :, :]
        if np.any(dist[:, None, :] > sums + METRIC_TOL):
            raise ValueError("distance matrix violates the triangle inequality")


@dataclass(frozen=True, eq=False)
class StrategySpace:
    """A finite metric space of pure strategies.

    Attributes
    ----------
    labels:
        Names of the pure strategies, one per point.
    dist:
        Symmetric ``(K, K)`` distance matrix with zero diagonal, strictly
        positive off-diagonal entries, and the triangle inequality satisfied
        within ``METRIC_TOL``.
    """

    labels: tuple[str, ...]
    dist: NDArray[np.float64]

    def __post_init__(self):
        dist = np.ascontiguousarray(np.asarray(self.dist, dtype=np.float64))
        if len(self.labels) != dist.shape[0]:
            raise ValueError(
                f"{len(self.labels)} labels but distance matrix of shape {dist.shape}"
            )
        if len(set(self.labels)) != len(self.labels):
            raise ValueError("strategy labels must be unique")
        _check_distance_matrix(dist)
        dist.flags.writeable = False
        object.__setattr__(self, "labels", tuple(str(s) for s in self.labels))
        object.__setattr__(self, "dist", dist)

    @property
    def n_strategies(self) -> int:
        return len(self.labels)

    @cached_property
    def diam(self) -> float:
        """Largest pairwise distance."""
        return float(np.max(self.dist))

    @cached_property
    def radius(self) -> float:
        """Smallest over candidate centers of the largest distance to it.

        Always at most ``diam``; it is the sharp constant relating the
        Wasserstein distance to the bounded-Lipschitz and total-variation
        norms on this space.
        """
        return float(np.min(np.max(self.dist, axis=1)))

    @classmethod
    def from_matrix(cls, labels: Sequence[str], dist: ArrayLike) -> "StrategySpace":
        return cls(tuple(labels), np.asarray(dist, dtype=float))

    @classmethod
    def from_points(cls, labels: Sequence[str], points: ArrayLike) -> "StrategySpace":
        """Build the space from points in R^m with the Euclidean distance."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if pts.shape[0] != len(labels):
            raise ValueError("one point per label required")
        diff = pts[:, None, :] - pts[None, :, :]
        return cls(tuple(labels), np.sqrt((diff**2).sum(axis=-1)))

    @classmethod
    def uniform(cls, labels: Sequence[str], spacing: float = 1.0) -> "StrategySpace":
        """Discrete metric: all distinct strategies at distance ``spacing``."""
        k = len(labels)
        return cls(tuple(labels), spacing * (1.0 - np.eye(k)))

    @classmethod
    def from_config(cls, cfg: dict) -> "StrategySpace":
        """Parse a space from a config dictionary.

        Accepts either an explicit ``matrix`` or a list of ``points`` (with
        Euclidean distance).  Unknown keys are rejected.
        """
        if not isinstance(cfg, dict):
            raise ConfigError("strategy space config must be a mapping")
        allowed = {"labels", "matrix", "points", "spacing"}
        unknown = set(cfg) - allowed
        if unknown:
            raise ConfigError(f"unknown strategy space keys: {sorted(unknown)}")
        if "labels" not in cfg:
            raise ConfigError("strategy space config requires 'labels'")
        labels = [str(s) for s in cfg["labels"]]
        if len(labels) > MAX_STRATEGIES:
            raise ConfigError(
                f"{len(labels)} strategies exceeds the cap of {MAX_STRATEGIES}"
            )
        try:
            if "matrix" in cfg:
                if "points" in cfg or "spacing" in cfg:
                    raise ConfigError("give exactly one of 'matrix', 'points', 'spacing'")
                return cls.from_matrix(labels, cfg["matrix"])
            if "points" in cfg:
                if "spacing" in cfg:
                    raise ConfigError("give exactly one of 'matrix', 'points', 'spacing'")
                return cls.from_points(labels, cfg["points"])
            return cls.uniform(labels, float(cfg.get("spacing", 1.0)))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def to_config(self) -> dict:
        return {"labels": list(self.labels), "matrix": self.dist.tolist()}

    @cached_property
    def _bl_vertices(self) -> NDArray[np.float64] | None:
        """Vertices of the dual unit ball, or None when K is too large."""
        if self.n_strategies > BL_VERTEX_MAX_K:
            return None
        return _bl_ball_vertices(self.dist)


# ---------------------------------------------------------------------------
# simplex handling


def clean_weights(
    weights: ArrayLike, floor: float = WEIGHT_FLOOR
) -> tuple[NDArray[np.float64], int]:
    """Validate a nonnegative weight vector, absorbing roundoff negatives.

    Entries in ``[floor, 0)`` are clamped to zero and counted; any entry
    below ``floor`` raises :class:`SimplexViolation`.  The vector is
    renormalized to unit mass only when a clamp occurred.

    Returns
    -------
    (weights, n_clamped):
        The cleaned vector and the number of clamped entries.
    """
    w = np.array(weights, dtype=float)
    worst = w.min() if w.size else 0.0
    if worst < floor:
        raise SimplexViolation(
            f"weight {worst:.3e} is below the clamping floor {floor:.1e}"
        )
    clamped = int(np.count_nonzero(w < 0.0))
    if clamped:
        w[w < 0.0] = 0.0
        total = w.sum()
        if total <= 0.0:
            raise SimplexViolation("all weights vanished after clamping")
        w /= total
    total = w.sum()
    if abs(total - 1.0) > MASS_TOL:
        raise SimplexViolation(f"weights sum to {total!r}, expected 1 within {MASS_TOL}")
    return w, clamped


def clean_weight_rows(
    rows: NDArray[np.float64], floor: float = WEIGHT_FLOOR
) -> tuple[NDArray[np.float64], int]:
    """Vectorized :func:`clean_weights` over the rows of a matrix.

    Returns a cleaned copy and the total number of clamped entries; raises
    :class:`SimplexViolation` on any entry below the floor or any row whose
    mass is off by more than ``MASS_TOL``.
    """
    s = np.array(rows, dtype=float)
    worst = float(s.min()) if s.size else 0.0
    if worst < floor:
        raise SimplexViolation(
            f"weight {worst:.3e} is below the clamping floor {floor:.1e}"
        )
    neg = s < 0.0
    n_clamped = int(np.count_nonzero(neg))
    if n_clamped:
        s[neg] = 0.0
        touched = neg.any(axis=1)
        sums = s[touched].sum(axis=1, keepdims=True)
        if np.any(sums <= 0.0):
            raise SimplexViolation("all weights vanished after clamping")
        s[touched] /= sums
    mass_err = float(np.max(np.abs(s.sum(axis=1) - 1.0))) if s.size else 0.0
    if mass_err > MASS_TOL:
        raise SimplexViolation(
            f"strategy mass off by {mass_err:.3e}, tolerance {MASS_TOL:.0e}"
        )
    return s, n_clamped


@dataclass(frozen=True, eq=False)
class MixedStrategy:
    """A probability vector over the pure strategies of a space."""

    weights: NDArray[np.float64]

    def __post_init__(self):
        w, _ = clean_weights(self.weights)
        w.flags.writeable = False
        object.__setattr__(self, "weights", w)

    @property
    def n_strategies(self) -> int:
        return self.weights.shape[0]

    def __sub__(self, other: "MixedStrategy") -> "SignedMeasure":
        return SignedMeasure(self.weights - other.weights)


@dataclass(frozen=True, eq=False)
class SignedMeasure:
    """A signed measure on a finite strategy space, stored as raw weights."""

    weights: NDArray[np.float64]

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        if not np.all(np.isfinite(w)):
            raise ValueError("signed measure has non-finite weights")
        w.flags.writeable = False
        object.__setattr__(self, "weights", w)

    @property
    def total_mass(self) -> float:
        return float(self.weights.sum())


def _weights_of(nu) -> NDArray[np.float64]:
    return np.asarray(getattr(nu, "weights", nu), dtype=float)


# ---------------------------------------------------------------------------
# norms


def tv_norm(nu) -> float:
    """Total variation norm: sum of absolute atom weights."""
    return float(np.abs(_weights_of(nu)).sum())


def _bl_halfspaces(dist: NDArray[np.float64]) -> NDArray[np.float64]:
    """H-representation ``A phi <= 1`` of the dual unit ball.

    The ball is ``{phi : max_i |phi_i| + max_{j<k} |phi_j - phi_k|/d_jk <= 1}``.
    Because the two maxima run over independent index sets, the constraint is
    equivalent to one inequality per combination of a signed coordinate and a
    signed normalized difference.
    """
    k = dist.shape[0]
    if k == 1:
        return np.array([[1.0], [-1.0]])
    rows = []
    for i in range(k):
        for j in range(k):
            for l in range(j + 1, k):
                for si in (1.0, -1.0):
                    for sd in (1.0, -1.0):
                        r = np.zeros(k)
                        r[i] += si
                        r[j] += sd / dist[j, l]
                        r[l] -= sd / dist[j, l]
                        rows.append(r)
    return np.array(rows)


def _bl_ball_vertices(dist: NDArray[np.float64]) -> NDArray[np.float64]:
    """Enumerate the vertices of the dual unit ball with Qhull.

    The origin is strictly interior, so a halfspace intersection starting
    there is well posed; the ball is bounded because ``max|phi| <= 1`` on it.
    """
    k = dist.shape[0]
    if k == 1:
        return np.array([[1.0], [-1.0]])
    a = _bl_halfspaces(dist)
    halfspaces = np.hstack([a, -np.ones((len(a), 1))])
    hull = HalfspaceIntersection(halfspaces, np.zeros(k))
    # dedupe by rounded key but keep the unrounded coordinates
    _, idx = np.unique(np.round(hull.intersections, 12), axis=0, return_index=True)
    verts = hull.intersections[np.sort(idx)]
    verts.flags.writeable = False
    return verts


def _bl_norm_lp(nu: NDArray[np.float64], dist: NDArray[np.float64]) -> float:
    """Solve sup <phi, nu> over the dual unit ball as an explicit LP.

    Variables are ``(phi, s, t)`` with ``|phi_i| <= s``, ``|phi_i - phi_j|
    <= t * d_ij`` and ``s + t <= 1``; this is the same feasible set as the
    H-representation above but with O(K^2) rows.
    """
    k = nu.shape[0]
    if k == 1:
        return abs(float(nu[0]))
    rows = []
    # |phi_i| <= s
    for i in range(k):
        for s in (1.0, -1.0):
            r = np.zeros(k + 2)
            r[i] = s
            r[k] = -1.0
            rows.append(r)
    # |phi_i - phi_j| <= t d_ij
    for i in range(k):
        for j in range(i + 1, k):
            for s in (1.0, -1.0):
                r = np.zeros(k + 2)
                r[i] = s
                r[j] = -s
                r[k + 1] = -dist[i, j]
                rows.append(r)
    cap = np.zeros(k + 2)
    cap[k] = 1.0
    cap[k + 1] = 1.0
    rows.append(cap)
    a_ub = np.array(rows)
    b_ub = np.zeros(len(rows))
    b_ub[-1] = 1.0
    c = np.concatenate([-nu, [0.0, 0.0]])
    bounds = [(None, None)] * k + [(0.0, None), (0.0, None)]
    res = linprog(c, A_ub=a_ub, b_ub=b_ub, bounds=bounds, method="highs", options=_LP_OPTIONS)
    if res.status != 0:
        raise SolverFailure(f"bounded-Lipschitz LP failed: {res.message}")
    return float(-res.fun)


def bl_norm(nu, space: StrategySpace) -> float:
    """Bounded-Lipschitz (flat) norm of a signed measure.

    Defined as the supremum of ``<phi, nu>`` over test vectors with
    ``max|phi| + Lip(phi) <= 1``, where the Lipschitz seminorm is taken with
    respect to the space's metric.  Computed exactly: for small spaces by
    maximizing over the pre-tabulated vertices of the dual ball, otherwise by
    solving the LP directly.
    """
    w = _weights_of(nu)
    if w.shape[0] != space.n_strategies:
        raise ValueError(
            f"measure has {w.shape[0]} atoms, space has {space.n_strategies}"
        )
    verts = space._bl_vertices
    if verts is not None:
        return float(np.max(verts @ w))
    return _bl_norm_lp(w, space.dist)


def solve_transport_lp(
    cost: NDArray[np.float64],
    a: NDArray[np.float64],
    b: NDArray[np.float64],
) -> tuple[float, NDArray[np.float64], NDArray[np.float64], NDArray[np.float64]]:
    """Solve the discrete optimal-transport LP exactly.

    min <cost, plan> over plans with row sums ``a`` and column sums ``b``.

    Returns
    -------
    (value, plan, u, v):
        Optimal value, optimal plan, and the dual potentials satisfying
        ``u_i + v_j <= cost_ij`` with ``a.u + b.v = value``.
    """
    n, m = cost.shape
    if a.shape != (n,) or b.shape != (m,):
        raise ValueError("marginal shapes do not match the cost matrix")
    row_idx = np.repeat(np.arange(n), m)
    col_idx = np.tile(np.arange(m), n)
    data = np.ones(2 * n * m)
    rows = np.concatenate([row_idx, n + col_idx])
    cols = np.concatenate([np.arange(n * m), np.arange(n * m)])
    a_eq = sparse.csr_matrix((data, (rows, cols)), shape=(n + m, n * m))
    b_eq = np.concatenate([a, b])
    res = linprog(
        cost.ravel(), A_eq=a_eq, b_eq=b_eq, bounds=(0.0, None),
        method="highs", options=_LP_OPTIONS,
    )
    if res.status != 0:
        raise SolverFailure(f"transport LP failed: {res.message}")
    plan = res.x.reshape(n, m)
    duals = res.eqlin.marginals
    return float(res.fun), plan, duals[:n], duals[n:]


def w1_on_U(mu, nu, space: StrategySpace) -> float:
    """1-Wasserstein distance between two mixed strategies, by exact LP."""
    wm = _weights_of(mu)
    wn = _weights_of(nu)
    if wm.shape[0] != space.n_strategies or wn.shape[0] != space.n_strategies:
        raise ValueError("strategy length does not match the space")
    if abs(wm.sum() - wn.sum()) > MASS_TOL:
        raise ValueError("Wasserstein distance requires equal total masses")
    value, _, _, _ = solve_transport_lp(space.dist, wm, wn)
    return max(value, 0.0)


@dataclass(frozen=True)
class NormEquivalenceReport:
    """Norms of a difference of mixed strategies and the comparison bounds."""

    bl: float
    w1: float
    tv: float
    radius: float
    tol: float = 1e-9

    @property
    def bl_le_tv(self) -> bool:
        return self.bl <= self.tv + self.tol

    @property
    def bl_le_w1(self) -> bool:
        return self.bl <= self.w1 + self.tol

    @property
    def w1_le_bl(self) -> bool:
        return self.w1 <= (1.0 + self.radius) * self.bl + self.tol

    @property
    def w1_le_tv(self) -> bool:
        return self.w1 <= self.radius * self.tv + self.tol

    @property
    def ok(self) -> bool:
        return self.bl_le_tv and self.bl_le_w1 and self.w1_le_bl and self.w1_le_tv


def check_norm_equivalence(mu, nu, space: StrategySpace, tol: float = 1e-9) -> NormEquivalenceReport:
    """Evaluate all three norms of ``mu - nu`` and the equivalence bounds.

    The bounds checked are ``bl <= tv``, ``bl <= w1 <= (1 + radius) * bl``
    and ``w1 <= radius * tv`` with ``radius`` the space's center radius.
    """
    diff = _weights_of(mu) - _weights_of(nu)
    return NormEquivalenceReport(
        bl=bl_norm(diff, space),
        w1=w1_on_U(mu, nu, space),
        tv=tv_norm(diff),
        radius=space.radius,
        tol=tol,
    )
