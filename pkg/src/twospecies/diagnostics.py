"""Energy, density norms and support of particle states, plus run-level checks.

The interaction energy of a state with equal masses ``1/N`` is

    F = S(x) + S(y) + C(x, y),
    S(x) = -1/(2N^2) sum_{i,k} |x_i - x_k|,   C = 1/N^2 sum_{i,j} |x_i - y_j|,

and the dynamics is its steepest descent, so between collisions F decays
linearly with slope ``-sum(v^2)/N``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .engine import ParticleState, SimulationRecord, CROSS, STICK
from .files import atomic_write_csv
from .measures import PiecewiseDensity, piecewise_from_state

DEFAULT_M_LIST = (2.0, 3.0, math.inf)
DISSIPATION_RTOL = 1e-8
LM_RTOL = 1e-10
ENERGY_FLOOR = -1e-12
# round-off allowance per unit of energy magnitude
_ROUNDOFF = 64 * np.finfo(float).eps


@dataclass(frozen=True)
class EnergyValue:
    self_x: float
    self_y: float
    cross: float

    @property
    def total(self) -> float:
        return self.self_x + self.self_y + self.cross

    @property
    def magnitude(self) -> float:
        return abs(self.self_x) + abs(self.self_y) + abs(self.cross)


def _self_energy(z: np.ndarray, n: int) -> float:
    k = np.arange(1, z.size + 1)
    return -float(np.dot(z, 2 * k - z.size - 1)) / n**2


def _cross_sum(x: np.ndarray, y: np.ndarray) -> float:
    """``sum_{i,j} |x_i - y_j|`` for sorted ``y`` in O(N log N)."""
    prefix = np.concatenate([[0.0], np.cumsum(y)])
    k = np.searchsorted(y, x)
    below = x * k - prefix[k]
    above = (prefix[-1] - prefix[k]) - x * (y.size - k)
    return float(np.sum(below + above))


def energy(state: ParticleState) -> EnergyValue:
    n = state.n
    return EnergyValue(
        _self_energy(state.x, n),
        _self_energy(state.y, n),
        _cross_sum(state.x, state.y) / n**2,
    )


def support(state: ParticleState) -> tuple[float, float]:
    return float(min(state.x[0], state.y[0])), float(max(state.x[-1], state.y[-1]))


def lm_norm(density: PiecewiseDensity, m: float) -> float:
    """``L^m`` norm of a piecewise-constant density; ``m = inf`` gives the max height."""
    if math.isinf(m):
        return float(density.heights.max())
    if m <= 1:
        raise ValueError(f"m must exceed 1, got {m}")
    widths = np.diff(density.breakpoints)
    return float(np.dot(density.heights**m, widths) ** (1.0 / m))


def lm_monitor(state: ParticleState, m: float) -> float:
    """Quantity that the dynamics cannot increase, for one exponent ``m``.

    For finite ``m`` this is ``||rho||_m^m + ||eta||_m^m``; for ``m = inf``
    it is ``max(||rho||_inf, ||eta||_inf)``, the limit of the ``m``-th root of
    the finite-``m`` quantity.  Densities are reconstructed over the ``N-1``
    gaps of each species.  Returns ``inf`` if a species has coincident
    particles and ``nan`` for ``N = 1``.
    """
    if state.n < 2:
        return math.nan
    if np.any(np.diff(state.x) <= 0) or np.any(np.diff(state.y) <= 0):
        return math.inf
    rho = piecewise_from_state(state.x)
    eta = piecewise_from_state(state.y)
    if math.isinf(m):
        return max(lm_norm(rho, m), lm_norm(eta, m))
    return lm_norm(rho, m) ** m + lm_norm(eta, m) ** m


def _m_label(m: float) -> str:
    return "linf" if math.isinf(m) else f"l{m:g}"


@dataclass
class DiagnosticsTrace:
    """Per-snapshot diagnostics of one run (initial, event times, final)."""

    t: np.ndarray
    energies: list[EnergyValue]
    lm: dict[float, np.ndarray]
    a: np.ndarray
    b: np.ndarray
    events_cross: np.ndarray
    events_stick: np.ndarray
    kinetic: np.ndarray = field(repr=False, default=None)

    @property
    def energy(self) -> np.ndarray:
        return np.array([e.total for e in self.energies])

    @property
    def header(self) -> list[str]:
        return (
            ["t", "energy", "self_x", "self_y", "cross"]
            + [_m_label(m) for m in self.lm]
            + ["a", "b", "events_cross", "events_stick"]
        )

    def rows(self):
        for k in range(self.t.size):
            e = self.energies[k]
            yield (
                [float(self.t[k]), e.total, e.self_x, e.self_y, e.cross]
                + [float(v[k]) for v in self.lm.values()]
                + [float(self.a[k]), float(self.b[k]), int(self.events_cross[k]), int(self.events_stick[k])]
            )

    def to_csv(self, path):
        return atomic_write_csv(path, self.header, self.rows())


def trace(record: SimulationRecord, m_list: Sequence[float] = DEFAULT_M_LIST) -> DiagnosticsTrace:
    snaps = record.snapshots
    ts = np.array([s.t for s in snaps])
    # cumulative counts by kind at each snapshot
    n_cross = np.zeros(len(snaps), dtype=np.int64)
    n_stick = np.zeros(len(snaps), dtype=np.int64)
    ev_times = np.array([e.time for e in record.events])
    ev_cross = np.cumsum([e.kind == CROSS for e in record.events])
    ev_stick = np.cumsum([e.kind == STICK for e in record.events])
    if ev_times.size:
        upto = np.searchsorted(ev_times, ts, side="right")
        has = upto > 0
        n_cross[has] = ev_cross[upto[has] - 1]
        n_stick[has] = ev_stick[upto[has] - 1]
    bounds = np.array([support(s) for s in snaps])
    return DiagnosticsTrace(
        t=ts,
        energies=[energy(s) for s in snaps],
        lm={float(m): np.array([lm_monitor(s, m) for s in snaps]) for m in m_list},
        a=bounds[:, 0],
        b=bounds[:, 1],
        events_cross=n_cross,
        events_stick=n_stick,
        kinetic=np.array([f.kinetic() for f in record.flows]),
    )


@dataclass
class CheckReport:
    """Outcome of a run-level check; ``violations`` hold (snapshot index, detail)."""

    name: str
    violations: list[tuple[int, str]] = field(default_factory=list)
    worst: float = 0.0

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self):
        return self.ok


def energy_dissipation_check(record: SimulationRecord, rtol: float = DISSIPATION_RTOL) -> CheckReport:
    """Check ``dF/dt = -sum(v^2)/N`` on every free-flight interval and ``F`` non-increasing.

    Energies of nearby states differ by cancellation of sums of size
    ``|S(x)| + |S(y)| + |C|``, so an absolute allowance of a few ulps of that
    magnitude is added to the relative tolerance.
    """
    report = CheckReport("energy dissipation")
    snaps = record.snapshots
    es = [energy(s) for s in snaps]
    for k in range(len(snaps) - 1):
        dt = snaps[k + 1].t - snaps[k].t
        d_f = es[k + 1].total - es[k].total
        expected = -record.flows[k].kinetic() * dt
        noise = _ROUNDOFF * (es[k].magnitude + es[k + 1].magnitude)
        err = abs(d_f - expected)
        scale = max(abs(d_f), abs(expected))
        if scale > 0:
            report.worst = max(report.worst, err / scale)
        if err > rtol * scale + noise:
            report.violations.append((k, f"dF={d_f!r} expected {expected!r}"))
        if d_f > noise:
            report.violations.append((k, f"energy increased by {d_f!r}"))
    for k, e in enumerate(es):
        if e.total < ENERGY_FLOOR:
            report.violations.append((k, f"negative energy {e.total!r}"))
    return report


def lm_monotonicity_check(
    record: SimulationRecord, m_list: Sequence[float] = DEFAULT_M_LIST, rtol: float = LM_RTOL
) -> CheckReport:
    report = CheckReport("L^m monotonicity")
    for m in m_list:
        vals = np.array([lm_monitor(s, m) for s in record.snapshots])
        for k in range(vals.size - 1):
            a, b = vals[k], vals[k + 1]
            if not (np.isfinite(a) and np.isfinite(b)):
                continue
            rise = (b - a) / a
            report.worst = max(report.worst, rise)
            if rise > rtol:
                report.violations.append((k, f"m={m:g}: {a!r} -> {b!r}"))
    return report


def support_check(record: SimulationRecord, atol: float = 1e-12) -> CheckReport:
    """Positions stay inside the initial hull and the hull never widens."""
    report = CheckReport("support containment")
    a0, b0 = support(record.initial)
    tol = atol * max(1.0, b0 - a0)
    prev = (a0, b0)
    for k, s in enumerate(record.snapshots):
        a, b = support(s)
        if a < a0 - tol or b > b0 + tol:
            report.violations.append((k, f"[{a!r}, {b!r}] leaves [{a0!r}, {b0!r}]"))
        if a < prev[0] - tol or b > prev[1] + tol:
            report.violations.append((k, "support widened"))
        prev = (a, b)
    return report


def min_same_species_gap(state: ParticleState) -> float:
    if state.n < 2:
        return math.inf
    return float(min(np.diff(state.x).min(), np.diff(state.y).min()))


def barycenter(state: ParticleState) -> float:
    return float((state.x.sum() + state.y.sum()) / (2 * state.n))
