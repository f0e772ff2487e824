"""Synchronous averaging with fixed boundary values."""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Optional

import numpy as np

from .linalg import StateVector, SystemMatrix
from .serial import csv_text, read_csv


@dataclass
class Trajectory:
    """Recorded run of :func:`iterate_until_convergence`.

    ``states`` holds every ``record_stride``-th state plus the first and last
    ones; ``steps`` lists the time index of each snapshot. ``deltas[t-1]`` is
    the max-norm change made by step ``t``.
    """

    states: list
    steps: list
    record_stride: int
    converged_at: Optional[int]
    final_delta: float
    deltas: np.ndarray = field(repr=False)
    absorbing: bool = True

    @property
    def final(self) -> StateVector:
        return self.states[-1]

    @property
    def converged(self) -> bool:
        return self.converged_at is not None

    def as_array(self) -> np.ndarray:
        """Snapshots as a (num_recorded, N) array of full state vectors."""
        return np.array([s.full() for s in self.states])


def step(m: SystemMatrix, x: StateVector) -> StateVector:
    """One application of ``L``; boundary values are passed through untouched."""
    x.check(m)
    return StateVector(x.x_b, m.p_e @ x.x_b + m.p_i @ x.x_i)


def iterate_until_convergence(
    m: SystemMatrix,
    x0: StateVector,
    tol: float = 1e-10,
    max_steps: int = 100_000,
    record_stride: int = 1,
) -> Trajectory:
    """Apply :func:`step` until the max-norm change drops below ``tol``.

    Non-convergence within ``max_steps`` is reported through
    ``converged_at = None``, never raised. ``absorbing`` is False when the
    weights leave some internal node cut off from every boundary node; such
    a run may still settle, but not to a boundary-determined value.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if max_steps < 1:
        raise ValueError("max_steps must be >= 1")
    if record_stride < 1:
        raise ValueError("record_stride must be >= 1")
    x0.check(m)
    x_b = x0.x_b
    drive = m.p_e @ x_b
    p_i = np.ascontiguousarray(m.p_i)
    x = x0.x_i.copy()
    states, steps = [StateVector(x_b, x.copy())], [0]
    deltas = np.empty(max_steps)
    converged_at = None
    t = 0
    for t in range(1, max_steps + 1):
        new = drive + p_i @ x
        d = float(np.max(np.abs(new - x)))
        deltas[t - 1] = d
        x = new
        if t % record_stride == 0:
            states.append(StateVector(x_b, x.copy()))
            steps.append(t)
        if d < tol:
            converged_at = t
            break
    if steps[-1] != t:
        states.append(StateVector(x_b, x.copy()))
        steps.append(t)
    deltas = deltas[:t]
    return Trajectory(
        states=states,
        steps=steps,
        record_stride=record_stride,
        converged_at=converged_at,
        final_delta=float(deltas[-1]),
        deltas=deltas,
        absorbing=m.absorbing(),
    )


def dependence_on_initial_internal(
    m: SystemMatrix,
    x_b,
    seeds,
    scale: float = 5.0,
    tol: float = 1e-12,
    max_steps: int = 1_000_000,
) -> float:
    """Largest pairwise distance between final internal states from random starts.

    Each seed draws ``x_i(0) ~ Normal(0, scale)``. With the absorbing
    condition in force the result should be at round-off level.
    """
    seeds = list(seeds)
    if len(seeds) < 2:
        raise ValueError("need at least two seeds")
    if m.K < 1:
        raise ValueError("no boundary nodes: final state depends on the initial internal values")
    finals = []
    for s in seeds:
        x_i0 = np.random.default_rng(s).normal(0.0, scale, m.M)
        traj = iterate_until_convergence(m, StateVector(x_b, x_i0), tol, max_steps, record_stride=max_steps)
        finals.append(traj.final.x_i)
    return max(float(np.max(np.abs(a - b))) for a, b in combinations(finals, 2))


def geometric_rate(deltas, floor: float = 1e-13) -> float:
    """Least-squares slope of ``log(delta_t)`` against ``t``.

    Steps whose change is already at ``floor`` or below are dropped since
    they only measure round-off.
    """
    deltas = np.asarray(deltas, dtype=float)
    t = np.arange(1, deltas.size + 1)
    keep = deltas > floor
    if keep.sum() < 2:
        raise ValueError("too few steps above the round-off floor to fit a rate")
    slope, _ = np.polyfit(t[keep], np.log(deltas[keep]), 1)
    return float(slope)


# -- CSV export -----------------------------------------------------------------

def trajectory_csv(traj: Trajectory) -> str:
    n = traj.states[0].full().size
    header = ["t"] + [f"x_{k}" for k in range(1, n + 1)]
    rows = ([t, *s.full()] for t, s in zip(traj.steps, traj.states))
    return csv_text(header, rows)


def write_trajectory_csv(traj: Trajectory, path) -> None:
    Path(path).write_text(trajectory_csv(traj))


def read_trajectory_csv(path):
    """Return ``(steps, states)`` where ``states`` is (rows, N)."""
    header, data = read_csv(path)
    if not header or header[0] != "t":
        raise ValueError(f"{path}: expected a 't' column first")
    return data[:, 0].astype(int), data[:, 1:]
