"""Run configuration files and initial-ensemble samplers.

A run configuration is a JSON document with four parts: the model (inline
or a path to a second JSON file, resolved relative to the config's own
directory), the integrator settings, the initial ensemble (explicit atoms
or a sampler recipe), and a seed.  Unknown keys are rejected at every
level so that typos fail loudly instead of silently running defaults.

The sampler draws all randomness from ``SeedSequence((seed, 0))``; child
key ``(seed, 1 + i)`` is reserved for agent ``i``'s in-run stream (see
:func:`spatgames.dynamics.agent_streams`).  Sampling is therefore
reproducible bit for bit for a given config, independent of thread count.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dynamics import IntegratorConfig
from .errors import ConfigError
from .model import Ensemble, GameModel

SCHEMA_VERSION = 1


def load_json(path: str | Path) -> dict:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return data


def _require_keys(data: dict, allowed: set[str], context: str) -> None:
    unknown = set(data) - allowed
    if unknown:
        raise ConfigError(f"{context}: unknown keys {sorted(unknown)}")


def _positions_sampler(spec: dict, dim: int, n: int, rng) -> np.ndarray:
    kind = spec.get("kind")
    if kind == "gaussian":
        _require_keys(spec, {"kind", "center", "scale"}, "initial.position")
        center = np.asarray(spec.get("center", np.zeros(dim)), dtype=float)
        scale = float(spec.get("scale", 1.0))
        if center.shape != (dim,):
            raise ConfigError(f"initial.position.center must have length {dim}")
        if scale <= 0:
            raise ConfigError("initial.position.scale must be positive")
        return center + scale * rng.normal(size=(n, dim))
    if kind == "uniform-box":
        _require_keys(spec, {"kind", "low", "high"}, "initial.position")
        low = np.asarray(spec.get("low", -np.ones(dim)), dtype=float)
        high = np.asarray(spec.get("high", np.ones(dim)), dtype=float)
        if low.shape != (dim,) or high.shape != (dim,):
            raise ConfigError(f"initial.position bounds must have length {dim}")
        if np.any(high <= low):
            raise ConfigError("initial.position requires high > low componentwise")
        return rng.uniform(low, high, size=(n, dim))
    if kind == "grid":
        _require_keys(spec, {"kind", "low", "high"}, "initial.position")
        low = np.asarray(spec.get("low", -np.ones(dim)), dtype=float)
        high = np.asarray(spec.get("high", np.ones(dim)), dtype=float)
        if low.shape != (dim,) or high.shape != (dim,):
            raise ConfigError(f"initial.position bounds must have length {dim}")
        side = round(n ** (1.0 / dim))
        if side**dim != n:
            raise ConfigError(
                f"grid sampler needs n to be a {dim}-th power, got n={n}"
            )
        axes = [np.linspace(low[c], high[c], side) for c in range(dim)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)
    raise ConfigError(f"unknown position sampler {kind!r}")


def _strategies_sampler(spec: dict, k: int, n: int, rng) -> np.ndarray:
    kind = spec.get("kind")
    if kind == "dirichlet":
        _require_keys(spec, {"kind", "alpha"}, "initial.strategy")
        alpha = spec.get("alpha", 1.0)
        alpha = np.full(k, float(alpha)) if np.isscalar(alpha) else np.asarray(alpha, dtype=float)
        if alpha.shape != (k,):
            raise ConfigError(f"initial.strategy.alpha must be a scalar or length {k}")
        if np.any(alpha <= 0):
            raise ConfigError("initial.strategy.alpha must be positive")
        return rng.dirichlet(alpha, size=n)
    if kind == "uniform-simplex":
        _require_keys(spec, {"kind"}, "initial.strategy")
        return rng.dirichlet(np.ones(k), size=n)
    if kind == "vertex-mixture":
        _require_keys(spec, {"kind", "weights"}, "initial.strategy")
        weights = np.asarray(spec.get("weights", np.full(k, 1.0 / k)), dtype=float)
        if weights.shape != (k,) or np.any(weights < 0) or weights.sum() <= 0:
            raise ConfigError(f"initial.strategy.weights must be {k} nonnegative values")
        picks = rng.choice(k, size=n, p=weights / weights.sum())
        return np.eye(k)[picks]
    raise ConfigError(f"unknown strategy sampler {kind!r}")


def build_initial(spec: dict, model: GameModel, seed: int) -> Ensemble:
    """Materialize the initial ensemble described by a config block."""
    if not isinstance(spec, dict):
        raise ConfigError("initial must be an object")
    kind = spec.get("kind")
    if kind == "explicit":
        _require_keys(spec, {"kind", "positions", "strategies", "masses"}, "initial")
        try:
            positions = np.asarray(spec["positions"], dtype=float)
            strategies = np.asarray(spec["strategies"], dtype=float)
        except KeyError as exc:
            raise ConfigError(f"initial: missing {exc.args[0]}") from exc
        if positions.ndim != 2 or positions.shape[1] != model.dim:
            raise ConfigError(f"initial.positions must be (n, {model.dim})")
        if strategies.shape != (positions.shape[0], model.space.n_strategies):
            raise ConfigError(
                f"initial.strategies must be (n, {model.space.n_strategies})"
            )
        if "masses" in spec:
            masses = np.asarray(spec["masses"], dtype=float)
            return Ensemble(positions, strategies, masses)
        return Ensemble.uniform(positions, strategies)
    if kind == "sample":
        _require_keys(spec, {"kind", "n", "position", "strategy"}, "initial")
        n = spec.get("n")
        if not isinstance(n, int) or n <= 0:
            raise ConfigError("initial.n must be a positive integer")
        rng = np.random.default_rng(np.random.SeedSequence((seed, 0)))
        positions = _positions_sampler(
            spec.get("position", {"kind": "uniform-box"}), model.dim, n, rng
        )
        strategies = _strategies_sampler(
            spec.get("strategy", {"kind": "uniform-simplex"}),
            model.space.n_strategies,
            n,
            rng,
        )
        return Ensemble.uniform(positions, strategies)
    raise ConfigError(f"unknown initial kind {kind!r}")


@dataclass(frozen=True)
class RunConfig:
    """Parsed simulation run: model, integrator, initial recipe, seed."""

    model: GameModel
    integrator: IntegratorConfig
    initial: dict
    seed: int

    @classmethod
    def from_dict(cls, data: dict, base_dir: str | Path = ".") -> "RunConfig":
        _require_keys(
            data, {"schema", "model", "integrator", "initial", "seed"}, "run config"
        )
        if data.get("schema") != SCHEMA_VERSION:
            raise ConfigError(
                f"run config: schema must be {SCHEMA_VERSION}, got {data.get('schema')!r}"
            )
        model_part = data.get("model")
        if isinstance(model_part, str):
            model_part = load_json(Path(base_dir) / model_part)
        if not isinstance(model_part, dict):
            raise ConfigError("run config: model must be an object or a file path")
        model = GameModel.from_config(model_part)
        integ = data.get("integrator")
        if not isinstance(integ, dict):
            raise ConfigError("run config: integrator must be an object")
        integrator = IntegratorConfig.from_config(integ)
        initial = data.get("initial")
        if not isinstance(initial, dict):
            raise ConfigError("run config: initial must be an object")
        seed = data.get("seed", 0)
        if not isinstance(seed, int):
            raise ConfigError("run config: seed must be an integer")
        return cls(model=model, integrator=integrator, initial=initial, seed=seed)

    @classmethod
    def from_file(cls, path: str | Path) -> "RunConfig":
        path = Path(path)
        return cls.from_dict(load_json(path), base_dir=path.parent)

    def build_ensemble(self) -> Ensemble:
        return build_initial(self.initial, self.model, self.seed)

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA_VERSION,
            "model": self.model.to_config(),
            "integrator": self.integrator.to_config(),
            "initial": self.initial,
            "seed": self.seed,
        }
