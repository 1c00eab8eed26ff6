"""N-sweeps for self-convergence of the particle approximation.

For each particle number ``N`` both initial densities are discretized into
``N`` equal-mass slabs, the system is run exactly up to the horizon, and the
piecewise-constant reconstructions at the evaluation times are compared
between consecutive ``N`` in the sweep.  The empirical order of the
resulting Cauchy sequence is ``log(W_k-1 / W_k) / log(N_k / N_k-1)``.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import diagnostics
from .engine import CROSS, STICK, EngineInvariantError, SimulationRecord, initial_state, run
from .files import atomic_write_csv, atomic_write_text
from .measures import (
    EmpiricalMeasure,
    InitialDensity,
    Uniform,
    coupling_bound,
    discretize,
    piecewise_from_state,
    wasserstein_p,
)

_log = logging.getLogger(__name__)

RATES_HEADER = ("t", "N", "Wp_rho", "Wp_eta", "order_rho", "order_eta")
CENSUS_HEADER = ("N", "events", "crossings", "sticks", "t_stationary")
COUPLING_SLACK = 1e-12


@dataclass(frozen=True)
class StudyConfig:
    rho0: InitialDensity
    eta0: InitialDensity
    n_list: tuple[int, ...]
    horizon: float
    eval_times: tuple[float, ...] = ()
    p: float = 1.0
    m_list: tuple[float, ...] = diagnostics.DEFAULT_M_LIST
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        n_list = tuple(int(n) for n in self.n_list)
        if not n_list or any(n < 1 for n in n_list):
            raise ValueError("N-list must hold positive integers")
        if any(b <= a for a, b in zip(n_list, n_list[1:])):
            raise ValueError("N-list must be strictly increasing")
        if not self.horizon >= 0:
            raise ValueError("horizon must be non-negative")
        times = tuple(sorted(float(t) for t in self.eval_times)) or (0.0, float(self.horizon))
        if times[0] < 0 or (math.isfinite(self.horizon) and times[-1] > self.horizon):
            raise ValueError("evaluation times must lie in [0, horizon]")
        if self.p < 1:
            raise ValueError("Wasserstein order p must be at least 1")
        object.__setattr__(self, "n_list", n_list)
        object.__setattr__(self, "eval_times", times)

    def echo(self) -> str:
        items = {
            "rho0": self.rho0,
            "eta0": self.eta0,
            "n_list": ",".join(map(str, self.n_list)),
            "horizon": self.horizon,
            "eval_times": ",".join(repr(t) for t in self.eval_times),
            "p": self.p,
            "m_list": ",".join(f"{m:g}" for m in self.m_list),
            "seed": self.seed,
            "workers": self.workers,
        }
        return "".join(f"{k}={v}\n" for k, v in items.items())


def separated_blocks(n_list: Sequence[int] = (25, 50, 100, 200), horizon: float = 4.0, **kw) -> StudyConfig:
    """Two unit blocks two units apart: ``rho0 = U(-2,-1)``, ``eta0 = U(1,2)``."""
    kw.setdefault("eval_times", (0.0, 1.0, horizon / 2, horizon))
    return StudyConfig(Uniform(-2.0, -1.0), Uniform(1.0, 2.0), tuple(n_list), horizon, **kw)


@dataclass
class RateRow:
    t: float
    n: int
    n_next: int
    w_rho: float
    w_eta: float
    order_rho: float = math.nan
    order_eta: float = math.nan


@dataclass
class RateTable:
    rows: list[RateRow] = field(default_factory=list)

    def __len__(self):
        return len(self.rows)

    def at(self, t: float) -> list[RateRow]:
        return [r for r in self.rows if r.t == t]

    def ratios(self, t: float, species: str = "rho") -> np.ndarray:
        w = np.array([getattr(r, f"w_{species}") for r in self.at(t)])
        return w[1:] / w[:-1]

    def to_csv(self, path):
        def fmt(v):
            return "" if isinstance(v, float) and math.isnan(v) else v

        return atomic_write_csv(
            path,
            RATES_HEADER,
            ([r.t, r.n, r.w_rho, r.w_eta, fmt(r.order_rho), fmt(r.order_eta)] for r in self.rows),
        )


@dataclass
class CensusRow:
    n: int
    events: int
    crossings: int
    sticks: int
    t_stationary: float | None

    def as_row(self):
        return [self.n, self.events, self.crossings, self.sticks, "" if self.t_stationary is None else self.t_stationary]


def write_census(rows: Sequence[CensusRow], path):
    return atomic_write_csv(path, CENSUS_HEADER, (r.as_row() for r in rows))


@dataclass(frozen=True)
class CouplingCheck:
    t: float
    n: int
    species: str
    w1: float
    bound: float

    @property
    def ok(self) -> bool:
        return self.w1 <= self.bound * (1 + COUPLING_SLACK)


@dataclass
class StudyResult:
    config: StudyConfig
    rates: RateTable
    records: dict[int, SimulationRecord]
    traces: dict[int, diagnostics.DiagnosticsTrace]
    coupling: list[CouplingCheck]
    census: list[CensusRow]


def _simulate(args) -> SimulationRecord:
    rho0, eta0, n, horizon = args
    return run(initial_state(discretize(rho0, n), discretize(eta0, n)), horizon)


def _run_all(config: StudyConfig, horizon: float) -> dict[int, SimulationRecord]:
    jobs = [(config.rho0, config.eta0, n, horizon) for n in config.n_list]
    if config.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            records = list(pool.map(_simulate, jobs))
    else:
        records = [_simulate(j) for j in jobs]
    return dict(zip(config.n_list, records))


def census_row(n: int, record: SimulationRecord) -> CensusRow:
    if record.count() > n * (n + 1):
        raise EngineInvariantError("collision bound", f"{record.count()} events for N={n}")
    return CensusRow(n, record.count(), record.count(CROSS), record.count(STICK), record.t_stationary)


def _order(w_prev, w, n_prev, n):
    if not (w_prev > 0 and w > 0):
        return math.nan
    return math.log(w_prev / w) / math.log(n / n_prev)


def convergence_study(config: StudyConfig) -> StudyResult:
    """Run every ``N`` and tabulate ``W_p`` between consecutive resolutions."""
    records = _run_all(config, config.horizon)
    reconstructions = {}
    coupling = []
    for n, rec in records.items():
        for t in config.eval_times:
            s = rec.state_at(t)
            if n >= 2:
                dens = (piecewise_from_state(s.x), piecewise_from_state(s.y))
                reconstructions[n, t] = dens
                for name, pos, d in (("rho", s.x, dens[0]), ("eta", s.y, dens[1])):
                    w1 = wasserstein_p(EmpiricalMeasure(pos), d, 1.0)
                    coupling.append(CouplingCheck(t, n, name, w1, coupling_bound(pos)))

    table = RateTable()
    ns = [n for n in config.n_list if n >= 2]
    for t in config.eval_times:
        prev = None
        for a, b in zip(ns, ns[1:]):
            ra, ea = reconstructions[a, t]
            rb, eb = reconstructions[b, t]
            row = RateRow(t, a, b, wasserstein_p(ra, rb, config.p), wasserstein_p(ea, eb, config.p))
            if prev is not None:
                row.order_rho = _order(prev.w_rho, row.w_rho, prev.n, a)
                row.order_eta = _order(prev.w_eta, row.w_eta, prev.n, a)
            table.rows.append(row)
            prev = row

    traces = {n: diagnostics.trace(rec, config.m_list) for n, rec in records.items()}
    census = [census_row(n, rec) for n, rec in records.items()]
    _log.info("study done: %d rate rows", len(table))
    return StudyResult(config, table, records, traces, coupling, census)


def collision_census(config: StudyConfig) -> list[CensusRow]:
    """Run each ``N`` to stationarity and count collisions by kind."""
    records = _run_all(config, math.inf)
    return [census_row(n, rec) for n, rec in records.items()]


def write_study(result: StudyResult, outdir) -> Path:
    """Write ``config.txt``, ``trace_N<n>.csv``, ``rates.csv`` and ``census.csv``."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    atomic_write_text(outdir / "config.txt", result.config.echo())
    for n, tr in result.traces.items():
        tr.to_csv(outdir / f"trace_N{n}.csv")
    result.rates.to_csv(outdir / "rates.csv")
    write_census(result.census, outdir / "census.csv")
    return outdir
