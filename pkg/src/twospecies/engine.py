"""Exact event-driven integrator for the two-species Newtonian particle system.

Between collisions every velocity is an integer multiple of ``1/N``:

    N * dx_i/dt = #{x strictly left} - #{x strictly right}
                  - #{y strictly left} + #{y strictly right}

(and symmetrically for ``y``), so trajectories are piecewise linear and
collision times are ratios of gaps to closing speeds.  Co-located particles
are resolved by assigning them an infinitesimal virtual ordering:

* x and y particles sharing a location *and* an index stay put (a matched
  cluster never moves again);
* unmatched members on the low-index side of the matched range leave to the
  left, those on the high-index side leave to the right, each strictly
  ordered by index;
* a single-species group simply scatters in index order.

Evaluating the count formula on that virtual ordering gives the detachment
velocities of mixed clusters, e.g. ``-(2(k - i) + 1) / N`` for an x particle
leaving to the left of a cluster whose y part starts above index ``k``.  A
binary encounter of ``x_i`` and ``y_j`` falls out as the special case: they
cross when ``i != j`` and stick when ``i == j``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

_log = logging.getLogger(__name__)

COLOCATION_RTOL = 1e-12
TIE_RTOL = 1e-12

CROSS = "cross"
STICK = "stick"
CLUSTER = "cluster"


class EngineInvariantError(RuntimeError):
    """A property guaranteed by the dynamics was violated during a run.

    ``invariant`` names the property, e.g. ``"same-species separation"``.
    """

    def __init__(self, invariant: str, message: str):
        super().__init__(f"{invariant}: {message}")
        self.invariant = invariant


@dataclass(frozen=True, eq=False)
class ParticleState:
    """Positions of both species at time ``t``; each particle has mass ``1/N``.

    ``hull`` is the convex hull of the *initial* configuration and is carried
    along so the co-location tolerance stays fixed for the whole run.
    """

    t: float
    x: np.ndarray
    y: np.ndarray
    hull: tuple[float, float] | None = None

    def __post_init__(self):
        x = np.array(self.x, dtype=float)
        y = np.array(self.y, dtype=float)
        if x.ndim != 1 or x.shape != y.shape or x.size == 0:
            raise ValueError("x and y must be non-empty 1-D arrays of equal length")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise ValueError("positions must be finite")
        x.flags.writeable = False
        y.flags.writeable = False
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "t", float(self.t))
        if self.hull is None:
            object.__setattr__(self, "hull", (float(min(x[0], y[0])), float(max(x[-1], y[-1]))))

    @property
    def n(self) -> int:
        return self.x.size

    @property
    def tol(self) -> float:
        lo, hi = self.hull
        return COLOCATION_RTOL * (hi - lo)

    def check_sorted(self):
        for name, arr in (("x", self.x), ("y", self.y)):
            if np.any(np.diff(arr) < 0):
                raise EngineInvariantError("ordering", f"{name} positions are not sorted at t={self.t}")

    def moved(self, t: float, x, y) -> "ParticleState":
        return ParticleState(t, x, y, self.hull)


@dataclass(frozen=True)
class ColocationGroup:
    position: float
    x_indices: range
    y_indices: range

    @property
    def matched(self) -> range:
        lo = max(self.x_indices.start, self.y_indices.start)
        hi = min(self.x_indices.stop, self.y_indices.stop)
        return range(lo, max(lo, hi))


@dataclass(frozen=True, eq=False)
class VelocityAssignment:
    """Velocities ``cx / N`` and ``cy / N`` valid until the next event.

    ``keys`` encode the (virtual) left-to-right order of the ``2N`` particles
    (x first, then y) as ``group * (2N + 3) + offset``; ``order`` sorts them.
    ``positions`` are the merged positions the keys were computed from.
    """

    cx: np.ndarray
    cy: np.ndarray
    keys: np.ndarray
    order: np.ndarray
    positions: np.ndarray | None = None
    valid_until: float = math.inf

    @property
    def n(self) -> int:
        return self.cx.size

    @property
    def vx(self) -> np.ndarray:
        return self.cx / self.n

    @property
    def vy(self) -> np.ndarray:
        return self.cy / self.n

    @property
    def is_stationary(self) -> bool:
        return not (self.cx.any() or self.cy.any())

    @property
    def groups(self) -> tuple[ColocationGroup, ...]:
        """Co-located sets of two or more particles."""
        n = self.n
        gid = self.keys // (2 * n + 3)
        ids, counts = np.unique(gid, return_counts=True)
        out = []
        for g in ids[counts > 1]:
            members = np.flatnonzero(gid == g)
            xs = members[members < n]
            ys = members[members >= n] - n
            where = float(self.positions[members].mean()) if self.positions is not None else math.nan
            out.append(
                ColocationGroup(
                    where,
                    range(int(xs[0]), int(xs[-1]) + 1) if xs.size else range(0),
                    range(int(ys[0]), int(ys[-1]) + 1) if ys.size else range(0),
                )
            )
        return tuple(out)

    def kinetic(self) -> float:
        """Weighted squared norm ``sum(v^2) / N`` of the velocity field."""
        n = self.n
        return float((np.dot(self.cx, self.cx) + np.dot(self.cy, self.cy)) / n**3)


@dataclass(frozen=True)
class Event:
    """Collision at ``time`` and ``location``; indices are zero-based."""

    time: float
    location: float
    kind: str
    x_indices: tuple[int, ...]
    y_indices: tuple[int, ...]

    @property
    def participants(self) -> tuple[tuple[str, int], ...]:
        return tuple(("x", i) for i in self.x_indices) + tuple(("y", j) for j in self.y_indices)


def _offsets(idx, g, lo, hi):
    """Virtual offsets inside co-location groups.

    ``lo[g]..hi[g]`` is the index range of the other species in group ``g``
    (empty when ``lo > hi``).  Members below that range leave to the left,
    members above it leave to the right, the rest are matched and stay.
    Without the other species the group scatters in index order.
    """
    a, b = lo[g], hi[g]
    mixed = a <= b
    off = np.where(idx < a, idx - a, np.where(idx > b, idx - b, 0))
    return np.where(mixed, off, idx)


def velocities(state: ParticleState) -> VelocityAssignment:
    """Piecewise-constant velocities of every particle, clusters included.

    Runs in O(N log N): one sort of the merged positions and four binary
    searches for the strict left/right counts.
    """
    state.check_sorted()
    n = state.n
    pos = np.concatenate([state.x, state.y])
    by_pos = np.argsort(pos, kind="stable")
    new_group = np.diff(pos[by_pos]) > state.tol
    gid = np.empty(2 * n, dtype=np.int64)
    gid[by_pos[0]] = 0
    gid[by_pos[1:]] = np.cumsum(new_group)

    # group ids are non-decreasing along each sorted species
    gx, gy = gid[:n], gid[n:]
    groups = np.arange(int(gid.max()) + 1)
    i_lo = np.searchsorted(gx, groups, side="left")
    i_hi = np.searchsorted(gx, groups, side="right") - 1
    j_lo = np.searchsorted(gy, groups, side="left")
    j_hi = np.searchsorted(gy, groups, side="right") - 1
    idx = np.arange(n)
    offset = np.concatenate([_offsets(idx, gx, j_lo, j_hi), _offsets(idx, gy, i_lo, i_hi)])

    span = 2 * n + 3
    keys = gid * span + offset + (n + 1)
    xk = np.sort(keys[:n])
    yk = np.sort(keys[n:])
    x_left = np.searchsorted(xk, keys, side="left")
    x_right = n - np.searchsorted(xk, keys, side="right")
    y_left = np.searchsorted(yk, keys, side="left")
    y_right = n - np.searchsorted(yk, keys, side="right")
    cx = (x_left[:n] - x_right[:n]) - (y_left[:n] - y_right[:n])
    cy = (y_left[n:] - y_right[n:]) - (x_left[n:] - x_right[n:])

    if max(np.abs(cx).max(), np.abs(cy).max()) > 2 * n - 1:
        raise EngineInvariantError("speed bound", "a particle moves faster than 2")
    if cx.sum() + cy.sum() != 0:
        raise EngineInvariantError("momentum", "velocities do not sum to zero")
    order = np.argsort(keys, kind="stable")
    return VelocityAssignment(cx, cy, keys, order, pos)


def _sites(pair_ids: np.ndarray) -> list[tuple[int, int]]:
    # chains of consecutive adjacent pairs -> (first pair, last pair)
    out = []
    if pair_ids.size == 0:
        return out
    start = prev = int(pair_ids[0])
    for k in pair_ids[1:]:
        k = int(k)
        if k != prev + 1:
            out.append((start, prev))
            start = k
        prev = k
    out.append((start, prev))
    return out


def upcoming_events(state: ParticleState, va: VelocityAssignment | None = None) -> list[Event]:
    """All collisions happening at the earliest future collision time.

    Only neighbours in the (virtual) order can meet first.  Pairs meeting
    within a relative time tie of 1e-12, or ending up closer than the
    co-location tolerance, belong to the same event time.  Returns an empty
    list when no neighbours approach each other.
    """
    if va is None:
        va = velocities(state)
    n = state.n
    order = va.order
    pos = np.concatenate([state.x, state.y])[order]
    c = np.concatenate([va.cx, va.cy])[order]
    gap = np.diff(pos)
    closing = c[:-1] - c[1:]
    approaching = closing > 0
    if not approaching.any():
        return []
    with np.errstate(divide="ignore", invalid="ignore"):
        t_pair = np.where(approaching, np.maximum(gap, 0.0) * n / closing, np.inf)
    t_min = float(t_pair.min())
    residual = gap - closing * (t_min / n)
    hit = approaching & ((t_pair <= t_min * (1 + TIE_RTOL)) | (residual <= state.tol))
    events = []
    time = state.t + t_min
    for k0, k1 in _sites(np.flatnonzero(hit)):
        members = order[k0 : k1 + 2]
        xs = tuple(sorted(int(m) for m in members if m < n))
        ys = tuple(sorted(int(m) - n for m in members if m >= n))
        if len(xs) > 1 or len(ys) > 1:
            raise EngineInvariantError(
                "same-species separation",
                f"particles x{list(xs)} y{list(ys)} would meet at t={time}",
            )
        if xs and ys:
            kind = STICK if xs[0] == ys[0] else CROSS
        else:
            kind = CLUSTER
        meet = pos[k0 : k1 + 2] + c[k0 : k1 + 2] * (t_min / n)
        location = float(meet.sum() / meet.size)
        events.append(Event(time, location, kind, xs, ys))
    return events


def next_event(state: ParticleState, va: VelocityAssignment | None = None) -> Event | None:
    events = upcoming_events(state, va)
    return events[0] if events else None


def advance(state: ParticleState, va: VelocityAssignment, dt: float) -> ParticleState:
    """Free flight over ``dt``: positions move linearly."""
    if dt == 0:
        return state
    n = state.n
    x = state.x + va.cx * (dt / n)
    y = state.y + va.cy * (dt / n)
    return state.moved(state.t + dt, x, y)


def resolve(state: ParticleState, events: Sequence[Event]) -> ParticleState:
    """Put the participants of each event exactly on the collision point.

    Which way they continue is decided by the next call to
    :func:`velocities`, whose cluster rule orders the members.
    """
    x = state.x.copy()
    y = state.y.copy()
    for ev in events:
        if len(ev.x_indices) + len(ev.y_indices) < 2:
            raise ValueError("an event needs at least two participants")
        if not ev.x_indices or not ev.y_indices:
            raise EngineInvariantError(
                "same-species separation", "a same-species encounter cannot be resolved"
            )
        x[list(ev.x_indices)] = ev.location
        y[list(ev.y_indices)] = ev.location
    return state.moved(state.t, np.maximum.accumulate(x), np.maximum.accumulate(y))


def step(state: ParticleState, horizon: float = math.inf):
    """Advance to the next event (or to ``horizon``) and resolve it.

    Returns ``(new_state, events)``; ``events`` is empty when the horizon was
    reached first or nothing will ever collide.
    """
    va = velocities(state)
    events = upcoming_events(state, va)
    if not events or events[0].time > horizon:
        if math.isfinite(horizon) and horizon > state.t:
            return advance(state, va, horizon - state.t), []
        return state, []
    moved = advance(state, va, events[0].time - state.t)
    return resolve(moved, events), events


@dataclass
class SimulationRecord:
    """Event log plus snapshots taken at t=0, at each event time and at the end.

    ``flows[k]`` holds the velocities valid from ``snapshots[k].t`` until the
    next snapshot.
    """

    n: int
    horizon: float
    snapshots: list[ParticleState] = field(default_factory=list)
    flows: list[VelocityAssignment] = field(default_factory=list)
    events: list[Event] = field(default_factory=list)
    t_stationary: float | None = None

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.snapshots])

    @property
    def initial(self) -> ParticleState:
        return self.snapshots[0]

    @property
    def final(self) -> ParticleState:
        return self.snapshots[-1]

    def count(self, kind: str | None = None) -> int:
        if kind is None:
            return len(self.events)
        return sum(1 for e in self.events if e.kind == kind)

    def state_at(self, t: float) -> ParticleState:
        """Exact state at any time in ``[0, horizon]`` by linear free flight."""
        if t < self.snapshots[0].t:
            raise ValueError(f"t={t} precedes the start of the run")
        times = self.times
        k = int(np.searchsorted(times, t, side="right")) - 1
        last = len(self.snapshots) - 1
        if k == last and self.t_stationary is None and t > times[-1] + 1e-12 * max(1.0, abs(t)):
            raise ValueError(f"t={t} is beyond the simulated horizon {times[-1]}")
        return advance(self.snapshots[k], self.flows[k], t - times[k])


Callback = Callable[[ParticleState, VelocityAssignment, Sequence[Event]], None]


def run(
    initial: ParticleState,
    horizon: float = math.inf,
    callbacks: Iterable[Callback] = (),
) -> SimulationRecord:
    """Integrate exactly up to ``horizon`` or until nothing moves any more.

    The total number of collisions is at most ``N (N + 1)``; exceeding it
    raises :class:`EngineInvariantError`.
    """
    if not horizon >= initial.t:
        raise ValueError(f"horizon {horizon} precedes the initial time {initial.t}")
    callbacks = tuple(callbacks)
    n = initial.n
    limit = n * (n + 1)
    record = SimulationRecord(n, horizon)

    state = initial
    va = velocities(state)

    def snap(s, v, evs):
        record.snapshots.append(s)
        record.flows.append(v)
        for cb in callbacks:
            cb(s, v, evs)

    snap(state, va, ())
    while True:
        events = upcoming_events(state, va)
        if not events:
            if not va.is_stationary:
                raise EngineInvariantError(
                    "support containment", "particles in free flight with no collision ahead"
                )
            record.t_stationary = state.t
            break
        if events[0].time > horizon:
            end = advance(state, va, horizon - state.t)
            snap(end, va, ())
            break
        state = resolve(advance(state, va, events[0].time - state.t), events)
        record.events.extend(events)
        if len(record.events) > limit:
            raise EngineInvariantError(
                "collision bound", f"{len(record.events)} collisions exceed N(N+1) = {limit}"
            )
        va = velocities(state)
        snap(state, va, events)
    _log.debug("run finished: N=%d events=%d t=%g", n, len(record.events), record.final.t)
    return record


def initial_state(x: Sequence[float], y: Sequence[float]) -> ParticleState:
    """State at ``t = 0``; positions are sorted within each species."""
    return ParticleState(0.0, np.sort(np.asarray(x, dtype=float)), np.sort(np.asarray(y, dtype=float)))
