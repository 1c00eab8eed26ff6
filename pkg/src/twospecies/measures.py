"""One-dimensional probability measures, their CDFs and quantile functions.

Everything here reduces to a single representation: a monotone
piecewise-affine curve with jumps (:class:`PiecewiseAffine`).  CDFs of
piecewise-constant densities are piecewise linear, CDFs of empirical
measures are step functions, and the quantile function of either is again
piecewise affine.  Wasserstein distances are then L^p distances between two
such curves and can be integrated cell by cell.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence, Union

import numpy as np

MASS_TOL = 1e-12
BISECTION_TOL = 1e-12
BISECTION_MAX_ITER = 200
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(32)


class MeasureError(ValueError):
    """Raised for malformed or non-normalised measures."""


# ---------------------------------------------------------------------------
# piecewise-affine curves
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PiecewiseAffine:
    """Non-decreasing piecewise-affine function with jumps.

    On ``[knots[k], knots[k+1])`` the function goes affinely from
    ``start[k]`` to ``end[k]``.  Left of the first knot it equals ``lo``,
    right of the last one it equals ``hi``.  Jumps live at the knots.
    """

    knots: np.ndarray
    start: np.ndarray
    end: np.ndarray
    lo: float
    hi: float

    def __post_init__(self):
        knots = np.asarray(self.knots, dtype=float)
        start = np.asarray(self.start, dtype=float)
        end = np.asarray(self.end, dtype=float)
        if knots.ndim != 1 or knots.size < 1:
            raise MeasureError("need at least one knot")
        if start.shape != (knots.size - 1,) or end.shape != start.shape:
            raise MeasureError("start/end must have one entry per cell")
        if np.any(np.diff(knots) <= 0):
            raise MeasureError("knots must be strictly increasing")
        object.__setattr__(self, "knots", knots)
        object.__setattr__(self, "start", start)
        object.__setattr__(self, "end", end)
        object.__setattr__(self, "lo", float(self.lo))
        object.__setattr__(self, "hi", float(self.hi))

    @property
    def n_cells(self) -> int:
        return self.knots.size - 1

    def _cell_value(self, k, t):
        k = np.clip(k, 0, max(self.n_cells - 1, 0))
        if self.n_cells == 0:
            return np.zeros_like(t)
        t0, t1 = self.knots[k], self.knots[k + 1]
        return self.start[k] + (self.end[k] - self.start[k]) * (t - t0) / (t1 - t0)

    def right_limit(self, t):
        """Value at ``t`` from the right; this is the right-continuous value."""
        t = np.asarray(t, dtype=float)
        k = np.searchsorted(self.knots, t, side="right") - 1
        out = self._cell_value(k, t)
        out = np.where(k < 0, self.lo, out)
        return np.where(k >= self.n_cells, self.hi, out)

    def left_limit(self, t):
        t = np.asarray(t, dtype=float)
        k = np.searchsorted(self.knots, t, side="left") - 1
        out = self._cell_value(k, t)
        out = np.where(k < 0, self.lo, out)
        return np.where(k >= self.n_cells, self.hi, out)

    def __call__(self, t):
        return self.right_limit(t)

    def vertices(self) -> np.ndarray:
        """The graph as a monotone polyline, vertical pieces included."""
        pts = [(self.knots[0], self.lo)]
        for k in range(self.n_cells):
            pts.append((self.knots[k], self.start[k]))
            pts.append((self.knots[k + 1], self.end[k]))
        pts.append((self.knots[-1], self.hi))
        return np.array(pts, dtype=float)

    def swapped_graph(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Knots/start/end of the curve whose graph is this one mirrored."""
        pts = self.vertices()[:, ::-1]
        return _polyline_to_cells(pts)


def _polyline_to_cells(pts: np.ndarray):
    # vertical pieces of the polyline become jumps, others become cells
    knots = [pts[0, 0]]
    start, end = [], []
    for (u0, v0), (u1, v1) in zip(pts[:-1], pts[1:]):
        if u1 > u0:
            knots.append(u1)
            start.append(v0)
            end.append(v1)
        elif u1 < u0:
            raise MeasureError("polyline is not monotone")
    return np.array(knots), np.array(start), np.array(end)


class Cdf(PiecewiseAffine):
    """Right-continuous distribution function, 0 at -inf and 1 at +inf."""

    def __call__(self, x):
        return self.right_limit(x)


class QuantileFunction(PiecewiseAffine):
    """Pseudo-inverse ``X(s) = inf{x : F(x) > s}`` on ``[0, 1]``."""

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        return np.where(s >= self.knots[-1], self.end[-1] if self.n_cells else self.hi,
                        self.right_limit(s))

    def segments(self):
        """``(s0, s1, x_at_s0, x_at_s1)`` for each affine piece."""
        return [
            (self.knots[k], self.knots[k + 1], self.start[k], self.end[k])
            for k in range(self.n_cells)
        ]


def pseudo_inverse(F: Cdf) -> QuantileFunction:
    """Quantile function of a CDF, obtained by mirroring its graph."""
    knots, start, end = F.swapped_graph()
    knots = knots.copy()
    knots[0], knots[-1] = 0.0, 1.0
    return QuantileFunction(knots, start, end, start[0], end[-1])


def cdf_from_quantile(X: QuantileFunction) -> Cdf:
    """Rebuild ``F(x) = |{s : X(s) <= x}|`` from a quantile function."""
    knots, start, end = X.swapped_graph()
    return Cdf(knots, start, end, 0.0, 1.0)


# ---------------------------------------------------------------------------
# measures
# ---------------------------------------------------------------------------


def _linear_cdf_lower_quantile(xs, Fs, c):
    # inf{x : F(x) >= c} for F linear between (xs, Fs)
    k = int(np.searchsorted(Fs, c, side="left"))
    if k == 0:
        return float(xs[0])
    if k >= len(xs):
        raise MeasureError(f"level {c} exceeds total mass")
    f0, f1 = Fs[k - 1], Fs[k]
    return float(xs[k - 1] + (c - f0) / (f1 - f0) * (xs[k] - xs[k - 1]))


class _LinearCdfDensity:
    """Shared behaviour of densities with a piecewise-linear CDF."""

    _xs: np.ndarray
    _Fs: np.ndarray

    @property
    def support(self) -> tuple[float, float]:
        xs, Fs = self._xs, self._Fs
        first = np.nonzero(Fs > 0)[0][0]
        last = np.nonzero(Fs >= 1)[0][0]
        return float(xs[max(first - 1, 0)]), float(xs[last])

    def cdf_curve(self) -> Cdf:
        return Cdf(self._xs, self._Fs[:-1], self._Fs[1:], 0.0, 1.0)

    def cdf(self, x):
        return np.interp(x, self._xs, self._Fs, left=0.0, right=1.0)

    def quantile(self) -> QuantileFunction:
        return pseudo_inverse(self.cdf_curve())

    def lower_quantile(self, c: float) -> float:
        return _linear_cdf_lower_quantile(self._xs, self._Fs, c)


@dataclass(frozen=True)
class Uniform(_LinearCdfDensity):
    a: float
    b: float

    def __post_init__(self):
        if not self.b > self.a:
            raise MeasureError(f"uniform needs a < b, got ({self.a}, {self.b})")

    @property
    def _xs(self):
        return np.array([self.a, self.b], dtype=float)

    @property
    def _Fs(self):
        return np.array([0.0, 1.0])

    @property
    def support(self):
        return float(self.a), float(self.b)

    def lower_quantile(self, c: float) -> float:
        return self.a + c * (self.b - self.a)

    def quantile(self) -> QuantileFunction:
        return QuantileFunction([0.0, 1.0], [self.a], [self.b], self.a, self.b)

    def __str__(self):
        return f"uniform:{self.a:g},{self.b:g}"


@dataclass(frozen=True)
class Mixture(_LinearCdfDensity):
    """Weighted sum of uniform densities; weights must sum to one."""

    components: tuple[tuple[float, Uniform], ...]
    _xs: np.ndarray = field(init=False, repr=False, compare=False)
    _Fs: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        comps = tuple((float(w), u) for w, u in self.components)
        if not comps:
            raise MeasureError("empty mixture")
        if any(w <= 0 for w, _ in comps):
            raise MeasureError("mixture weights must be positive")
        total = sum(w for w, _ in comps)
        if abs(total - 1.0) > MASS_TOL:
            raise MeasureError(f"mixture weights sum to {total!r}, not 1")
        object.__setattr__(self, "components", comps)
        xs = np.unique(np.concatenate([[u.a, u.b] for _, u in comps]).astype(float))
        Fs = np.zeros_like(xs)
        for w, u in comps:
            Fs += w * np.clip((xs - u.a) / (u.b - u.a), 0.0, 1.0)
        Fs[-1] = 1.0
        object.__setattr__(self, "_xs", xs)
        object.__setattr__(self, "_Fs", np.maximum.accumulate(Fs))

    def __str__(self):
        return "mix:" + "+".join(f"{w:g}*{u}" for w, u in self.components)


@dataclass(frozen=True)
class TabulatedCdf(_LinearCdfDensity):
    """CDF given by samples, linearly interpolated between them."""

    x: np.ndarray
    F: np.ndarray
    source: str = ""

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        F = np.asarray(self.F, dtype=float).copy()
        if x.ndim != 1 or x.shape != F.shape or x.size < 2:
            raise MeasureError("tabulated CDF needs two equal-length columns")
        if np.any(np.diff(x) <= 0):
            raise MeasureError("tabulated x must be strictly increasing")
        if np.any(np.diff(F) < 0) or F.min() < 0 or F.max() > 1 + MASS_TOL:
            raise MeasureError("tabulated F must be non-decreasing in [0, 1]")
        if abs(F[0]) > MASS_TOL or abs(F[-1] - 1.0) > MASS_TOL:
            raise MeasureError(f"tabulated CDF runs from {F[0]!r} to {F[-1]!r}, not 0 to 1")
        F[0], F[-1] = 0.0, 1.0
        F = np.minimum(F, 1.0)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "F", F)

    @property
    def _xs(self):
        return self.x

    @property
    def _Fs(self):
        return self.F

    @classmethod
    def from_file(cls, path) -> "TabulatedCdf":
        data = np.loadtxt(path, comments="#", ndmin=2)
        if data.shape[1] != 2:
            raise MeasureError(f"{path}: expected two columns, got {data.shape[1]}")
        return cls(data[:, 0], data[:, 1], source=str(path))

    def lower_quantile(self, c: float) -> float:
        lo, hi = float(self.x[0]), float(self.x[-1])
        if self.cdf(lo) >= c:
            return lo
        for _ in range(BISECTION_MAX_ITER):
            if hi - lo <= BISECTION_TOL:
                return hi
            mid = 0.5 * (lo + hi)
            if self.cdf(mid) >= c:
                hi = mid
            else:
                lo = mid
        raise MeasureError(f"quantile bisection for level {c} did not converge")

    def __str__(self):
        return f"cdf:{self.source}" if self.source else "cdf:<table>"


InitialDensity = Union[Uniform, Mixture, TabulatedCdf]


@dataclass(frozen=True, eq=False)
class PiecewiseDensity:
    """Density that is constant on each cell ``[z_k, z_{k+1})``."""

    breakpoints: np.ndarray
    heights: np.ndarray

    def __post_init__(self):
        z = np.asarray(self.breakpoints, dtype=float)
        h = np.asarray(self.heights, dtype=float)
        if z.ndim != 1 or z.size < 2 or h.shape != (z.size - 1,):
            raise MeasureError("need n+1 breakpoints for n heights")
        if np.any(np.diff(z) <= 0):
            raise MeasureError("breakpoints must be strictly increasing")
        if np.any(h <= 0):
            raise MeasureError("heights must be positive")
        object.__setattr__(self, "breakpoints", z)
        object.__setattr__(self, "heights", h)

    @property
    def cell_masses(self) -> np.ndarray:
        return self.heights * np.diff(self.breakpoints)

    @property
    def mass(self) -> float:
        return float(self.cell_masses.sum())

    @property
    def support(self) -> tuple[float, float]:
        return float(self.breakpoints[0]), float(self.breakpoints[-1])

    def cdf_curve(self) -> Cdf:
        cum = np.concatenate([[0.0], np.cumsum(self.cell_masses)])
        if abs(cum[-1] - 1.0) <= MASS_TOL:
            cum[-1] = 1.0
        return Cdf(self.breakpoints, cum[:-1], cum[1:], 0.0, 1.0)

    def quantile(self) -> QuantileFunction:
        return pseudo_inverse(self.cdf_curve())


@dataclass(frozen=True, eq=False)
class EmpiricalMeasure:
    """Equal-weight atoms; coincident atoms are allowed."""

    atoms: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.atoms, dtype=float)
        if a.ndim != 1 or a.size == 0:
            raise MeasureError("empirical measure needs at least one atom")
        if np.any(np.diff(a) < 0):
            raise MeasureError("atoms must be sorted")
        object.__setattr__(self, "atoms", a)

    @property
    def mass(self) -> float:
        return 1.0

    @property
    def support(self) -> tuple[float, float]:
        return float(self.atoms[0]), float(self.atoms[-1])

    def cdf_curve(self) -> Cdf:
        n = self.atoms.size
        u, counts = np.unique(self.atoms, return_counts=True)
        cum = np.cumsum(counts) / n
        cum[-1] = 1.0
        # constant on [u_k, u_{k+1}) with value F(u_k)
        return Cdf(u, cum[:-1], cum[:-1], 0.0, 1.0)

    def quantile(self) -> QuantileFunction:
        return pseudo_inverse(self.cdf_curve())


Measure = Union[PiecewiseDensity, EmpiricalMeasure, Uniform, Mixture, TabulatedCdf]


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------


def discretize(density: InitialDensity, n: int, include_left: bool = False) -> np.ndarray:
    """Split the density into ``n`` slabs of mass ``1/n``.

    Returns the right ends ``x_1 <= ... <= x_n`` of the slabs, where
    ``x_i = sup{x : mass of [x_{i-1}, x] < 1/n}``.  With ``include_left`` the
    left end of the support is prepended as ``x_0``.
    """
    if int(n) != n or n < 1:
        raise MeasureError(f"number of particles must be a positive integer, got {n!r}")
    n = int(n)
    lo, hi = density.support
    xs = np.array([density.lower_quantile(i / n) for i in range(1, n)] + [hi])
    if include_left:
        xs = np.concatenate([[lo], xs])
    return xs


def piecewise_from_state(positions: Sequence[float], n: int | None = None) -> PiecewiseDensity:
    """Piecewise-constant reconstruction over the gaps of sorted positions.

    Each gap ``[z_k, z_{k+1})`` gets height ``1 / (n * gap)``.  By default
    ``n`` is the number of gaps, which makes the result a probability
    density; passing the particle count instead reproduces cells of mass
    ``1/n`` each (total mass ``(len - 1) / n``).
    """
    z = np.asarray(positions, dtype=float)
    if z.ndim != 1 or z.size < 2:
        raise MeasureError("need at least two positions to reconstruct a density")
    gaps = np.diff(z)
    if np.any(gaps <= 0):
        bad = int(np.argmin(gaps))
        raise MeasureError(
            f"positions must be strictly increasing (duplicate at index {bad}); "
            "a same-species cluster was left unresolved"
        )
    if n is None:
        n = z.size - 1
    return PiecewiseDensity(z, 1.0 / (n * gaps))


def cdf(measure: Measure) -> Cdf:
    return measure.cdf_curve()


def quantile(measure: Measure) -> QuantileFunction:
    return measure.quantile()


def _check_probability(measure):
    mass = getattr(measure, "mass", 1.0)
    if abs(mass - 1.0) > MASS_TOL:
        raise MeasureError(f"measure has mass {mass!r}, not 1")


def _abs_power_integral(d0, d1, width, p):
    """Integral of |d|^p over cells where d is affine from d0 to d1."""
    if p == 1:
        same = d0 * d1 >= 0
        a0, a1 = np.abs(d0), np.abs(d1)
        denom = np.where(same, 1.0, a0 + a1)
        crossing = (d0 * d0 + d1 * d1) / (2.0 * denom)
        return float(np.sum(width * np.where(same, 0.5 * (a0 + a1), crossing)))
    if p == 2:
        return float(np.sum(width * (d0 * d0 + d0 * d1 + d1 * d1) / 3.0))
    total = 0.0
    for a, b, w in zip(d0, d1, width):
        pieces = [(a, b, w)]
        if a * b < 0:
            r = w * a / (a - b)
            pieces = [(a, 0.0, r), (0.0, b, w - r)]
        for u, v, h in pieces:
            if h <= 0:
                continue
            s = 0.5 * (_GL_NODES + 1.0)
            vals = np.abs(u + (v - u) * s) ** p
            total += 0.5 * h * float(np.dot(_GL_WEIGHTS, vals))
    return total


def lp_distance(f: PiecewiseAffine, g: PiecewiseAffine, p: float, lo: float, hi: float) -> float:
    """``||f - g||_{L^p([lo, hi])}`` for two piecewise-affine curves."""
    t = np.union1d(f.knots, g.knots)
    t = np.union1d(t[(t > lo) & (t < hi)], [lo, hi])
    left, right = t[:-1], t[1:]
    width = right - left
    d0 = f.right_limit(left) - g.right_limit(left)
    d1 = f.left_limit(right) - g.left_limit(right)
    return _abs_power_integral(d0, d1, width, p) ** (1.0 / p)


def wasserstein_p(mu: Measure, nu: Measure, p: float = 1.0) -> float:
    """``W_p`` as the L^p([0, 1]) distance of the quantile functions."""
    if not p >= 1:
        raise MeasureError(f"Wasserstein order must be >= 1, got {p!r}")
    _check_probability(mu)
    _check_probability(nu)
    return lp_distance(mu.quantile(), nu.quantile(), p, 0.0, 1.0)


def w1_via_cdf(mu: Measure, nu: Measure) -> float:
    """``W_1`` as the L^1(R) distance of the distribution functions."""
    _check_probability(mu)
    _check_probability(nu)
    F, G = mu.cdf_curve(), nu.cdf_curve()
    lo = min(F.knots[0], G.knots[0])
    hi = max(F.knots[-1], G.knots[-1])
    if hi == lo:
        return 0.0
    return lp_distance(F, G, 1, lo, hi)


def coupling_bound(positions: Sequence[float]) -> float:
    """``(z_max - z_min) / (2 n)``, the transport cost of moving each atom
    across its own cell of the piecewise reconstruction."""
    z = np.asarray(positions, dtype=float)
    return float((z[-1] - z[0]) / (2 * z.size))


def parse_density(text: str) -> InitialDensity:
    """Parse ``uniform:a,b``, ``mix:w1*uniform:a,b+w2*uniform:c,d`` or ``cdf:PATH``."""
    text = text.strip()
    kind, _, rest = text.partition(":")
    if kind == "uniform":
        try:
            a, b = (float(v) for v in rest.split(","))
        except ValueError:
            raise MeasureError(f"bad uniform preset {text!r}, expected uniform:a,b") from None
        return Uniform(a, b)
    if kind == "mix":
        comps = []
        for term in rest.split("+"):
            w, star, u = term.partition("*")
            if not star:
                raise MeasureError(f"bad mixture term {term!r}, expected w*uniform:a,b")
            dens = parse_density(u)
            if not isinstance(dens, Uniform):
                raise MeasureError("mixtures may only contain uniform components")
            try:
                comps.append((float(w), dens))
            except ValueError:
                raise MeasureError(f"bad mixture weight {w!r}") from None
        return Mixture(tuple(comps))
    if kind == "cdf":
        path = Path(rest)
        return TabulatedCdf.from_file(path)
    raise MeasureError(f"unknown density preset {text!r}")
