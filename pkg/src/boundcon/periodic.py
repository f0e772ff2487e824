"""Dynamics driven by a periodic boundary schedule.

The recurrence ``x_i(t+1) = P_e x_b(t) + P_i x_i(t)`` with ``x_b(t)`` of
period ``tau`` is the ground truth here. Unrolling it gives

    x_i(k) = sum_{m=0}^{k-1} P_i^m P_e x_b((k-1-m) mod tau) + P_i^k x_i(0)

so the boundary value paired with ``P_i^m`` is the one applied ``m + 1``
steps before time ``k`` (not ``m`` steps before). Along times ``k = n*tau``
the orbit point is

    (I - P_i^tau)^{-1} sum_{m=0}^{tau-1} P_i^m P_e x_b(tau-1-m)

i.e. the phase index runs backwards from ``tau - 1``. Both alignments were
checked against direct stepping (see tests/test_periodic.py).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .linalg import SingularMatrixError, SystemMatrix, gauss_solve


class ScheduleError(ValueError):
    pass


@dataclass(frozen=True)
class BoundarySchedule:
    """``values[t % period]`` is the boundary vector applied at step ``t``."""

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 2 or v.shape[0] < 1:
            raise ScheduleError(f"schedule needs at least one boundary vector, got shape {v.shape}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def period(self) -> int:
        return self.values.shape[0]

    @property
    def K(self) -> int:
        return self.values.shape[1]

    def value_at(self, t: int) -> np.ndarray:
        return self.values[t % self.period]

    @classmethod
    def constant(cls, x_b, period: int = 1) -> "BoundarySchedule":
        return cls(np.tile(np.asarray(x_b, dtype=float), (period, 1)))

    def check(self, m: SystemMatrix) -> None:
        if self.K != m.K:
            raise ScheduleError(f"schedule has {self.K} boundary values per phase, matrix expects {m.K}")


def periodic_step(m: SystemMatrix, sched: BoundarySchedule, x_i, t: int) -> np.ndarray:
    sched.check(m)
    x_i = np.asarray(x_i, dtype=float)
    if x_i.shape != (m.M,):
        raise ValueError(f"x_i has shape {x_i.shape}, expected ({m.M},)")
    return m.p_e @ sched.value_at(t) + m.p_i @ x_i


def simulate(m: SystemMatrix, sched: BoundarySchedule, x_i0, steps: int) -> np.ndarray:
    """Internal states for t = 0..steps as a (steps+1, M) array."""
    sched.check(m)
    drives = sched.values @ m.p_e.T  # row phi = P_e x_b(phi)
    out = np.empty((steps + 1, m.M))
    out[0] = x_i0
    for t in range(steps):
        out[t + 1] = drives[t % sched.period] + m.p_i @ out[t]
    return out


def state_at(m: SystemMatrix, sched: BoundarySchedule, x_i0, k: int) -> np.ndarray:
    """Closed-form internal state at time ``k`` (sum of powers, no stepping)."""
    if k < 0:
        raise ValueError("k must be >= 0")
    sched.check(m)
    x_i0 = np.asarray(x_i0, dtype=float)
    acc = np.zeros(m.M)
    power = np.eye(m.M)  # P_i^j
    for j in range(k):
        acc += power @ (m.p_e @ sched.value_at(k - 1 - j))
        power = power @ m.p_i
    return acc + power @ x_i0


def periodic_limit(m: SystemMatrix, sched: BoundarySchedule) -> list:
    """Limiting orbit, one internal vector per phase ``0..tau-1``.

    Phase ``phi`` is the limit of ``x_i(n*tau + phi)`` as ``n`` grows.
    """
    sched.check(m)
    tau = sched.period
    rhs = np.zeros(m.M)
    power = np.eye(m.M)
    for j in range(tau):
        rhs += power @ (m.p_e @ sched.value_at(tau - 1 - j))
        power = power @ m.p_i
    # power == P_i^tau here
    try:
        phase0 = gauss_solve(np.eye(m.M) - power, rhs)
    except SingularMatrixError as exc:
        raise SingularMatrixError(f"I - P_i^tau is singular: {exc}") from None
    orbit = [phase0]
    for phi in range(tau - 1):
        orbit.append(periodic_step(m, sched, orbit[-1], phi))
    return orbit


def orbit_defect(m: SystemMatrix, sched: BoundarySchedule, orbit) -> float:
    """Max-norm gap between each orbit point and its image after a full period."""
    worst = 0.0
    tau = sched.period
    for phi, start in enumerate(orbit):
        x = start
        for t in range(phi, phi + tau):
            x = periodic_step(m, sched, x, t)
        worst = max(worst, float(np.max(np.abs(x - start))))
    return worst


# -- file format --------------------------------------------------------------

def schedule_from_dict(data: dict) -> BoundarySchedule:
    if not isinstance(data, dict):
        raise ScheduleError("schedule document must be a JSON object")
    unknown = set(data) - {"period", "values"}
    if unknown:
        raise ScheduleError(f"unknown schedule keys: {sorted(unknown)}")
    try:
        period = data["period"]
        values = data["values"]
    except KeyError as exc:
        raise ScheduleError(f"schedule missing key {exc}") from None
    if not isinstance(period, int) or isinstance(period, bool) or period < 1:
        raise ScheduleError(f"period must be an integer >= 1, got {period!r}")
    if not isinstance(values, list) or len(values) != period:
        raise ScheduleError(f"expected {period} boundary vectors, got {len(values) if isinstance(values, list) else values!r}")
    lengths = {len(v) if isinstance(v, list) else -1 for v in values}
    if len(lengths) != 1 or -1 in lengths:
        raise ScheduleError("all boundary vectors must be lists of the same length")
    return BoundarySchedule(np.array(values, dtype=float))


def schedule_to_dict(sched: BoundarySchedule) -> dict:
    return {"period": sched.period, "values": sched.values.tolist()}


def load_schedule(path) -> BoundarySchedule:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ScheduleError(f"{path}: not valid JSON ({exc})") from None
    return schedule_from_dict(data)
