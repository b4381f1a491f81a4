"""Shared model fixtures for experiments and tests.

The standard fixture is a 16-agent cloud in the plane playing
rock-paper-scissors through a unit-bandwidth Gaussian kernel, with
velocities pointing at the three corners of an equilateral triangle
(scaled to 0.1).  The homogeneous fixtures drop all spatial structure so
each agent reduces to a classical replicator system.
"""

from __future__ import annotations

import numpy as np

from .dynamics import IntegratorConfig
from .model import Ensemble, GameModel, Payoff, SpatialKernel, Velocity
from .spaces import StrategySpace

RPS_MATRIX = np.array(
    [[0.0, -1.0, 1.0], [1.0, 0.0, -1.0], [-1.0, 1.0, 0.0]]
)

#: cooperate/defect with defection strictly dominant.
PD_MATRIX = np.array([[3.0, 0.0], [5.0, 1.0]])

#: middle strategy strictly dominant, last strictly dominated (margin 1).
DOMINATED_MATRIX = np.array(
    [[3.0, 0.0, 3.0], [4.0, 1.0, 4.0], [2.0, -1.0, 2.0]]
)


def rps_space() -> StrategySpace:
    return StrategySpace.uniform(("rock", "paper", "scissors"))


def two_point_space(spacing: float = 1.0) -> StrategySpace:
    return StrategySpace.uniform(("a", "b"), spacing)


def triangle_velocity_table(scale: float = 0.1) -> np.ndarray:
    """Velocities at the corners of an equilateral triangle in the plane."""
    angles = np.pi / 2.0 + 2.0 * np.pi * np.arange(3) / 3.0
    return scale * np.stack([np.cos(angles), np.sin(angles)], axis=1)


def standard_model() -> GameModel:
    return GameModel(
        space=rps_space(),
        dim=2,
        payoff=Payoff(RPS_MATRIX, SpatialKernel(kind="gaussian", scale=1.0)),
        velocity=Velocity(triangle_velocity_table()),
        position_bound=100.0,
    )


def standard_ensemble(n: int = 16, seed: int = 42) -> Ensemble:
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0)))
    positions = rng.uniform(-1.0, 1.0, size=(n, 2))
    strategies = rng.dirichlet(np.ones(3), size=n)
    return Ensemble.uniform(positions, strategies)


def standard_fixture(n: int = 16, seed: int = 42) -> tuple[GameModel, Ensemble]:
    return standard_model(), standard_ensemble(n=n, seed=seed)


def standard_config(**overrides) -> IntegratorConfig:
    base = dict(scheme="euler", h=1e-3, T=1.0)
    base.update(overrides)
    return IntegratorConfig(**base)


def perturbed_ensemble(ens: Ensemble, scale: float, seed: int = 0) -> Ensemble:
    """Jitter positions and strategies; the jitter size scales linearly.

    Used to manufacture nearby initial conditions for stability runs; a
    scale of 0.05 lands the ensemble distance near 0.05 for the standard
    fixture.
    """
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0)))
    positions = ens.positions + scale * rng.normal(size=ens.positions.shape)
    noise = rng.dirichlet(np.ones(ens.n_strategies), size=ens.n_agents)
    blend = min(1.0, scale)
    strategies = (1.0 - blend) * ens.strategies + blend * noise
    return Ensemble(positions, strategies, ens.masses)


def homogeneous_model(
    matrix: np.ndarray, labels: tuple[str, ...] | None = None
) -> GameModel:
    """Spatially blind matrix game: constant kernel, zero velocities.

    Each agent's strategy then follows the classical replicator equation
    for ``matrix``, uncoupled from its (frozen) position.
    """
    matrix = np.asarray(matrix, dtype=float)
    k = matrix.shape[0]
    if labels is None:
        labels = tuple(f"s{i + 1}" for i in range(k))
    return GameModel(
        space=StrategySpace.uniform(labels),
        dim=1,
        payoff=Payoff(matrix, SpatialKernel(kind="constant", value=1.0)),
        velocity=Velocity(np.zeros((k, 1))),
    )


def single_agent(sigma, x=0.0) -> Ensemble:
    return Ensemble.single(np.atleast_1d(x), np.asarray(sigma, dtype=float))
