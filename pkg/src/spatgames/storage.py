"""Trajectory serialization: snapshot CSV plus a JSON metadata sidecar.

The CSV holds one row per stored time and agent with columns
``time, agent_id, mass, x_1..x_d, sigma_1..sigma_K``.  Floats are written
with 17 significant digits, enough for ``float64`` values to survive a
write/parse round trip bit-exactly.  Run provenance (config echo, ledger,
seed, clamp counters) goes into the sidecar, never into the CSV.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .dynamics import Trajectory
from .errors import ConfigError
from .model import Ensemble


def format_float(value: float) -> str:
    return f"{value:.17g}"


def trajectory_header(dim: int, n_strategies: int) -> list[str]:
    return (
        ["time", "agent_id", "mass"]
        + [f"x_{i + 1}" for i in range(dim)]
        + [f"sigma_{k + 1}" for k in range(n_strategies)]
    )


def write_trajectory_csv(traj: Trajectory, path: str | Path) -> None:
    """Write all stored snapshots, time-major with agents ascending."""
    first = traj.states[0]
    header = trajectory_header(first.dim, first.n_strategies)
    lines = [",".join(header)]
    for t, ens in zip(traj.times, traj.states):
        t_str = format_float(float(t))
        for i in range(ens.n_agents):
            fields = [t_str, str(i), format_float(float(ens.masses[i]))]
            fields += [format_float(v) for v in ens.positions[i]]
            fields += [format_float(v) for v in ens.strategies[i]]
            lines.append(",".join(fields))
    Path(path).write_text("\n".join(lines) + "\n")


def read_trajectory_csv(path: str | Path) -> Trajectory:
    """Parse a snapshot CSV back into a trajectory.

    The step size is inferred from the time grid (smallest positive gap),
    and the scheme is not recorded in the CSV; use the metadata sidecar
    when those matter.
    """
    text = Path(path).read_text().strip().splitlines()
    if not text:
        raise ConfigError(f"{path}: empty trajectory file")
    header = text[0].split(",")
    if header[:3] != ["time", "agent_id", "mass"]:
        raise ConfigError(f"{path}: unexpected header {header[:3]}")
    dim = sum(1 for name in header if name.startswith("x_"))
    n_strat = sum(1 for name in header if name.startswith("sigma_"))
    if len(header) != 3 + dim + n_strat or dim == 0 or n_strat == 0:
        raise ConfigError(f"{path}: malformed header")
    times: list[float] = []
    blocks: list[list[list[float]]] = []
    for line_no, line in enumerate(text[1:], start=2):
        parts = line.split(",")
        if len(parts) != len(header):
            raise ConfigError(f"{path}:{line_no}: expected {len(header)} fields")
        try:
            values = [float(p) for p in parts[:1] + parts[2:]]
            agent_id = int(parts[1])
        except ValueError as exc:
            raise ConfigError(f"{path}:{line_no}: {exc}") from exc
        t = values[0]
        if not times or t != times[-1]:
            times.append(t)
            blocks.append([])
        if agent_id != len(blocks[-1]):
            raise ConfigError(f"{path}:{line_no}: agent ids out of order")
        blocks[-1].append(values[1:])
    states = []
    for block in blocks:
        arr = np.array(block)
        states.append(Ensemble(arr[:, 1 : 1 + dim], arr[:, 1 + dim :], arr[:, 0]))
    t_arr = np.array(times)
    gaps = np.diff(t_arr)
    h = float(gaps.min()) if gaps.size else 1.0
    return Trajectory(
        times=t_arr,
        states=tuple(states),
        step_indices=np.rint(t_arr / h).astype(np.int64),
        scheme="euler",
        h=h,
        clamp_events=0,
    )


def write_metadata(path: str | Path, payload: dict) -> None:
    """Write the sidecar deterministically (sorted keys, no timestamps)."""
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def read_metadata(path: str | Path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
