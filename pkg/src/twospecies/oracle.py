"""Independent reference solvers used to validate the event-driven engine.

* :func:`fine_step_integrate` integrates the particle ODE with the sign
  kernel replaced by a Lipschitz ramp of width ``delta`` using classical RK4.
* :func:`exact_rational_run` replays the event-driven dynamics in exact
  rational arithmetic with an O(N^2) direct evaluation of the velocity law and
  closed-form detachment speeds for mixed clusters.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

try:
    from numba import njit
except ImportError:  # pragma: no cover - pure-python fallback
    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f

from .engine import CROSS, STICK, ParticleState, SimulationRecord


class OracleError(ValueError):
    pass


# ---------------------------------------------------------------------------
# regularized fine-step integrator
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RegularizedKernel:
    """``sign_delta(r) = r/delta`` on ``[-delta, delta]`` and ``sign(r)`` outside."""

    delta: float

    def __post_init__(self):
        if not self.delta > 0:
            raise OracleError(f"delta must be positive, got {self.delta}")

    def __call__(self, r):
        return np.clip(np.asarray(r, dtype=float) / self.delta, -1.0, 1.0)


@njit(cache=True)
def _rhs(x, y, delta, vx, vy):
    n = x.size
    inv = 1.0 / delta
    for i in range(n):
        sx = 0.0
        sy = 0.0
        for k in range(n):
            r = (x[i] - x[k]) * inv
            sx += min(1.0, max(-1.0, r))
            r = (x[i] - y[k]) * inv
            sx -= min(1.0, max(-1.0, r))
            r = (y[i] - y[k]) * inv
            sy += min(1.0, max(-1.0, r))
            r = (y[i] - x[k]) * inv
            sy -= min(1.0, max(-1.0, r))
        vx[i] = sx / n
        vy[i] = sy / n


@njit(cache=True)
def _axpy(out, a, b, h):
    for i in range(a.size):
        out[i] = a[i] + h * b[i]


@njit(cache=True)
def _rk4(x0, y0, delta, dt, steps, stride):
    n = x0.size
    n_out = steps // stride + 1
    out_x = np.empty((n_out, n))
    out_y = np.empty((n_out, n))
    x = x0.copy()
    y = y0.copy()
    kx = np.empty((4, n))
    ky = np.empty((4, n))
    tx = np.empty(n)
    ty = np.empty(n)
    out_x[0] = x
    out_y[0] = y
    row = 1
    for s in range(1, steps + 1):
        _rhs(x, y, delta, kx[0], ky[0])
        _axpy(tx, x, kx[0], 0.5 * dt)
        _axpy(ty, y, ky[0], 0.5 * dt)
        _rhs(tx, ty, delta, kx[1], ky[1])
        _axpy(tx, x, kx[1], 0.5 * dt)
        _axpy(ty, y, ky[1], 0.5 * dt)
        _rhs(tx, ty, delta, kx[2], ky[2])
        _axpy(tx, x, kx[2], dt)
        _axpy(ty, y, ky[2], dt)
        _rhs(tx, ty, delta, kx[3], ky[3])
        for i in range(n):
            x[i] += dt / 6.0 * (kx[0, i] + 2.0 * kx[1, i] + 2.0 * kx[2, i] + kx[3, i])
            y[i] += dt / 6.0 * (ky[0, i] + 2.0 * ky[1, i] + 2.0 * ky[2, i] + ky[3, i])
        if s % stride == 0:
            out_x[row] = x
            out_y[row] = y
            row += 1
    return out_x, out_y


def regularized_rhs(x, y, delta: float) -> tuple[np.ndarray, np.ndarray]:
    """Velocities of the regularized system at positions ``(x, y)``."""
    RegularizedKernel(delta)
    x = np.ascontiguousarray(x, dtype=float)
    y = np.ascontiguousarray(y, dtype=float)
    if x.shape != y.shape:
        raise OracleError("species must have equal size")
    vx = np.empty_like(x)
    vy = np.empty_like(y)
    _rhs(x, y, float(delta), vx, vy)
    return vx, vy


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Positions sampled at ``t[k]``; ``x[k]`` and ``y[k]`` follow particle labels."""

    t: np.ndarray
    x: np.ndarray
    y: np.ndarray


def fine_step_integrate(
    initial: ParticleState, delta: float, dt: float, horizon: float, sample_every: float | None = None
) -> Trajectory:
    """RK4 for the ramp-regularized ODE on ``[t0, t0 + horizon]``.

    ``dt`` must not exceed ``delta / 4``.  Output is kept every ``sample_every``
    time units (rounded to a multiple of ``dt``; default: every step).
    """
    RegularizedKernel(delta)
    if not 0 < dt <= delta / 4 * (1 + 1e-12):
        raise OracleError(f"step {dt} violates dt <= delta/4 = {delta / 4}")
    if horizon < 0:
        raise OracleError("horizon must be non-negative")
    steps = int(round(horizon / dt))
    stride = 1 if sample_every is None else max(1, int(round(sample_every / dt)))
    steps -= steps % stride
    xs, ys = _rk4(
        np.ascontiguousarray(initial.x, dtype=float),
        np.ascontiguousarray(initial.y, dtype=float),
        float(delta),
        float(dt),
        steps,
        stride,
    )
    t = initial.t + dt * stride * np.arange(xs.shape[0])
    return Trajectory(t, xs, ys)


def positions_at(record: SimulationRecord, times: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    """Engine positions at many times at once (rows follow ``times``)."""
    times = np.asarray(times, dtype=float)
    snap_t = record.times
    k = np.clip(np.searchsorted(snap_t, times, side="right") - 1, 0, len(snap_t) - 1)
    x0 = np.array([s.x for s in record.snapshots])[k]
    y0 = np.array([s.y for s in record.snapshots])[k]
    vx = np.array([f.vx for f in record.flows])[k]
    vy = np.array([f.vy for f in record.flows])[k]
    dt = (times - snap_t[k])[:, None]
    return x0 + vx * dt, y0 + vy * dt


def sup_distance(record: SimulationRecord, traj: Trajectory) -> float:
    """Largest position difference between engine and oracle over the samples."""
    ex, ey = positions_at(record, traj.t)
    return float(max(np.abs(ex - traj.x).max(), np.abs(ey - traj.y).max()))


# ---------------------------------------------------------------------------
# exact rational replica
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RationalEvent:
    time: Fraction
    location: Fraction
    kind: str
    x_indices: tuple[int, ...]
    y_indices: tuple[int, ...]


def _as_fraction(v) -> Fraction:
    if isinstance(v, (bool, np.bool_)):
        raise OracleError(f"not a rational position: {v!r}")
    if isinstance(v, (Fraction, int, np.integer)):
        return Fraction(v)
    if isinstance(v, (float, np.floating)) and math.isfinite(v):
        return Fraction(float(v))
    raise OracleError(f"not a rational position: {v!r}")


def _sgn(a) -> int:
    return (a > 0) - (a < 0)


def _rational_velocity_counts(x: list[Fraction], y: list[Fraction]) -> tuple[list[int], list[int]]:
    """``N * velocity`` of every particle by direct summation.

    Within one species, coincident particles are ordered by index.  Members
    of mixed clusters use the closed-form detachment speeds; matched members
    stay at rest.
    """
    n = len(x)
    cx, cy = [0] * n, [0] * n
    for own, other, out in ((x, y, cx), (y, x, cy)):
        for i in range(n):
            lam = own[i]
            mates = [j for j in range(n) if other[j] == lam]
            if mates:
                j1, j2 = mates[0], mates[-1]
                if i < j1:
                    out[i] = 2 * i - 2 * j1 + 1
                elif i > j2:
                    out[i] = 2 * i - 2 * j2 - 1
                else:
                    out[i] = 0
                continue
            s = 0
            for k in range(n):
                d = _sgn(lam - own[k])
                s += d if d else _sgn(i - k)
                s -= _sgn(lam - other[k])
            out[i] = s
    return cx, cy


def exact_rational_run(
    x0: Sequence, y0: Sequence, horizon=None, max_events: int | None = None
) -> list[RationalEvent]:
    """Event log of the dynamics computed with :class:`fractions.Fraction`.

    Positions must be rationals (ints, Fractions or finite floats, which are
    converted exactly).  ``horizon`` of ``None`` runs to stationarity.
    """
    x = sorted(_as_fraction(v) for v in x0)
    y = sorted(_as_fraction(v) for v in y0)
    n = len(x)
    if n == 0 or len(y) != n:
        raise OracleError("species must be non-empty and of equal size")
    horizon = None if horizon is None else _as_fraction(horizon)
    limit = n * (n + 1) if max_events is None else max_events
    t = Fraction(0)
    log: list[RationalEvent] = []
    while True:
        cx, cy = _rational_velocity_counts(x, y)
        best = None
        hits = []
        for i in range(n):
            for j in range(n):
                gap = y[j] - x[i]
                closing = cx[i] - cy[j] if gap > 0 else cy[j] - cx[i]
                if gap == 0 or closing <= 0:
                    continue
                dt = abs(gap) * n / closing
                if best is None or dt < best:
                    best, hits = dt, [(i, j)]
                elif dt == best:
                    hits.append((i, j))
        # same-species pairs must never meet first
        for own, c in ((x, cx), (y, cy)):
            for i in range(n - 1):
                gap, closing = own[i + 1] - own[i], c[i] - c[i + 1]
                if gap > 0 and closing > 0 and (best is None or gap * n / closing <= best):
                    raise OracleError(f"same-species collision at index {i}")
        if best is None or (horizon is not None and t + best > horizon):
            return log
        t += best
        x = [x[i] + Fraction(cx[i], n) * best for i in range(n)]
        y = [y[j] + Fraction(cy[j], n) * best for j in range(n)]
        for i, j in sorted(hits, key=lambda p: x[p[0]]):
            assert x[i] == y[j]
            log.append(RationalEvent(t, x[i], STICK if i == j else CROSS, (i,), (j,)))
        if len(log) > limit:
            raise OracleError(f"more than {limit} events")
