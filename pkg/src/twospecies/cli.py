"""Command-line front end.

Subcommands::

    simulate        run one simulation, write trace.csv and trajectory.csv
    converge        N-sweep self-convergence study
    census          collision counts up to stationarity for several N
    oracle-compare  sup-distance between the engine and the regularized RK4 oracle

Exit codes: 0 success, 2 usage error, 66 unreadable input file, 70 a
property guaranteed by the dynamics was violated.
"""
from __future__ import annotations

import argparse
import logging
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import diagnostics, engine, harness, oracle
from .files import atomic_write_csv, atomic_write_text
from .measures import MeasureError, discretize, parse_density

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NOINPUT = 66
EXIT_SOFTWARE = 70

_log = logging.getLogger("twospecies")


class UsageError(Exception):
    pass


class InputFileError(Exception):
    pass


@dataclass
class RunConfig:
    command: str
    rho: str | None = None
    eta: str | None = None
    x: tuple[float, ...] | None = None
    y: tuple[float, ...] | None = None
    n: int | None = None
    n_list: tuple[int, ...] = ()
    horizon: float = math.inf
    out: Path | None = None
    m_list: tuple[float, ...] = diagnostics.DEFAULT_M_LIST
    p: float = 1.0
    eval_times: tuple[float, ...] = ()
    sample: float | None = None
    workers: int = 1
    delta: float = 1e-4
    dt: float = 1e-6
    max_distance: float = 1e-2
    tolerances: dict = field(default_factory=dict)


def _floats(text: str) -> tuple[float, ...]:
    try:
        vals = tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _m_values(text: str) -> tuple[float, ...]:
    vals = []
    for v in text.split(","):
        v = v.strip().lower()
        vals.append(math.inf if v in ("inf", "infinity") else float(v))
    if any(m <= 1 for m in vals):
        raise argparse.ArgumentTypeError("norm exponents must exceed 1")
    return tuple(vals)


def _ints(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="twospecies",
        description="Exact particle simulation of two species with self-repulsion and cross-attraction.",
        epilog="Negative lists need '=': --x=-2,-1.  Densities: uniform:a,b | "
        "mix:w1*uniform:a,b+w2*uniform:c,d | cdf:PATH (two columns x F).",
    )
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def species(p, default_rho=None, default_eta=None):
        p.add_argument("--rho", default=default_rho, help="initial density of the x species")
        p.add_argument("--eta", default=default_eta, help="initial density of the y species")

    def positions(p):
        p.add_argument("--x", type=_floats, help="explicit x positions (overrides --rho)")
        p.add_argument("--y", type=_floats, help="explicit y positions (overrides --eta)")

    def tolerances(p):
        p.add_argument("--colocation-rtol", type=float, help="co-location tolerance relative to the hull diameter")
        p.add_argument("--tie-rtol", type=float, help="relative window for simultaneous collisions")

    sim = sub.add_parser("simulate", help="run one simulation")
    species(sim)
    positions(sim)
    sim.add_argument("--n", type=int, help="particles per species (with --rho/--eta)")
    sim.add_argument("--t", type=float, default=math.inf, help="horizon (default: until stationary)")
    sim.add_argument("--out", type=Path, help="output directory")
    sim.add_argument("--m-list", type=_m_values, default=diagnostics.DEFAULT_M_LIST, help="norm exponents, e.g. 2,3,inf")
    sim.add_argument("--sample", type=float, help="also write trajectory samples every SAMPLE time units")
    tolerances(sim)

    conv = sub.add_parser("converge", help="self-convergence study over an N-list")
    species(conv, "uniform:-2,-1", "uniform:1,2")
    conv.add_argument("--n-list", type=_ints, default=(25, 50, 100, 200))
    conv.add_argument("--t", type=float, default=4.0, help="horizon")
    conv.add_argument("--eval-times", type=_floats, help="default: 0,1,T/2,T")
    conv.add_argument("--p", type=float, default=1.0, help="Wasserstein order")
    conv.add_argument("--m-list", type=_m_values, default=diagnostics.DEFAULT_M_LIST)
    conv.add_argument("--workers", type=int, default=1, help="parallel processes")
    conv.add_argument("--out", type=Path, help="study directory")
    tolerances(conv)

    cen = sub.add_parser("census", help="collision counts until stationarity")
    species(cen, "uniform:-2,-1", "uniform:1,2")
    cen.add_argument("--n-list", type=_ints, default=(5, 10, 20, 40))
    cen.add_argument("--workers", type=int, default=1)
    cen.add_argument("--out", type=Path, help="output directory for census.csv")
    tolerances(cen)

    orc = sub.add_parser("oracle-compare", help="compare against the regularized fine-step oracle")
    species(orc)
    positions(orc)
    orc.add_argument("--n", type=int)
    orc.add_argument("--t", type=float, help="horizon (default: stationarity time + 0.5)")
    orc.add_argument("--delta", type=float, default=1e-4, help="ramp width")
    orc.add_argument("--dt", type=float, default=1e-6, help="RK4 step, at most delta/4")
    orc.add_argument("--max-distance", type=float, default=1e-2, help="fail above this sup-distance")
    tolerances(orc)
    return parser


def parse_args(argv: Sequence[str] | None = None) -> RunConfig:
    """Parse and validate; usage problems exit with status 2."""
    parser = build_parser()
    ns = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * ns.verbose, format="%(levelname)s %(name)s: %(message)s")
    cfg = RunConfig(command=ns.command)
    for key in ("rho", "eta", "x", "y", "n", "n_list", "out", "m_list", "p", "sample", "workers", "delta", "dt", "max_distance"):
        if hasattr(ns, key) and getattr(ns, key) is not None:
            setattr(cfg, key, getattr(ns, key))
    if getattr(ns, "t", None) is not None:
        cfg.horizon = ns.t
    if getattr(ns, "eval_times", None):
        cfg.eval_times = ns.eval_times
    for key in ("colocation_rtol", "tie_rtol"):
        if getattr(ns, key, None) is not None:
            cfg.tolerances[key] = getattr(ns, key)

    try:
        _validate(cfg)
    except UsageError as exc:
        parser.error(str(exc))
    return cfg


def _validate(cfg: RunConfig):
    if cfg.n is not None and cfg.n < 1:
        raise UsageError("--n must be a positive integer")
    if any(n < 1 for n in cfg.n_list):
        raise UsageError("--n-list entries must be positive")
    if not cfg.horizon >= 0:
        raise UsageError("--t must be non-negative")
    if cfg.sample is not None and not cfg.sample > 0:
        raise UsageError("--sample must be positive")
    if cfg.workers < 1:
        raise UsageError("--workers must be at least 1")
    if cfg.p < 1:
        raise UsageError("--p must be at least 1")
    if not (cfg.delta > 0 and cfg.dt > 0):
        raise UsageError("--delta and --dt must be positive")
    for key, val in cfg.tolerances.items():
        if not val >= 0:
            raise UsageError(f"--{key.replace('_', '-')} must be non-negative")
    if cfg.command in ("simulate", "oracle-compare"):
        if (cfg.x is None) != (cfg.y is None):
            raise UsageError("give both --x and --y")
        if cfg.x is not None:
            if len(cfg.x) != len(cfg.y):
                raise UsageError("--x and --y need the same length")
        elif cfg.rho is None or cfg.eta is None or cfg.n is None:
            raise UsageError("need --x/--y or --rho, --eta and --n")
    if cfg.command == "converge" and cfg.horizon == math.inf:
        raise UsageError("converge needs a finite --t")
    if cfg.command in ("converge", "census"):
        if any(b <= a for a, b in zip(cfg.n_list, cfg.n_list[1:])):
            raise UsageError("--n-list must be strictly increasing")


def _density(text):
    try:
        return parse_density(text)
    except OSError as exc:
        raise InputFileError(str(exc)) from exc
    except MeasureError as exc:
        raise UsageError(str(exc)) from exc


def _initial(cfg: RunConfig) -> engine.ParticleState:
    if cfg.x is not None:
        return engine.initial_state(cfg.x, cfg.y)
    return engine.initial_state(discretize(_density(cfg.rho), cfg.n), discretize(_density(cfg.eta), cfg.n))


def _trajectory_rows(record: engine.SimulationRecord, sample: float | None):
    times = list(record.times)
    if sample:
        end = record.horizon if math.isfinite(record.horizon) else record.final.t
        grid = np.arange(0.0, end + 0.5 * sample, sample)
        times = sorted(set(times) | {float(t) for t in grid if t <= end})
    xs, ys = oracle.positions_at(record, times)
    for k, t in enumerate(times):
        for i, v in enumerate(xs[k]):
            yield (float(t), "x", i, float(v))
        for j, v in enumerate(ys[k]):
            yield (float(t), "y", j, float(v))


def _cmd_simulate(cfg: RunConfig) -> int:
    record = engine.run(_initial(cfg), cfg.horizon)
    tr = diagnostics.trace(record, cfg.m_list)
    if cfg.out is not None:
        cfg.out.mkdir(parents=True, exist_ok=True)
        tr.to_csv(cfg.out / "trace.csv")
        atomic_write_csv(cfg.out / "trajectory.csv", ("t", "species", "index", "position"), _trajectory_rows(record, cfg.sample))
        atomic_write_text(cfg.out / "config.txt", _echo(cfg))
    t_stat = "never" if record.t_stationary is None else repr(record.t_stationary)
    print(
        f"N={record.n} events={record.count()} crossings={record.count(engine.CROSS)} "
        f"sticks={record.count(engine.STICK)} final_energy={diagnostics.energy(record.final).total:.12g} "
        f"t_stationary={t_stat}"
    )
    return EXIT_OK


def _study_config(cfg: RunConfig) -> harness.StudyConfig:
    horizon = cfg.horizon
    times = cfg.eval_times
    if not times and math.isfinite(horizon):
        times = (0.0, min(1.0, horizon), horizon / 2, horizon)
    try:
        return harness.StudyConfig(
            _density(cfg.rho), _density(cfg.eta), cfg.n_list, horizon, tuple(sorted(set(times))),
            p=cfg.p, m_list=cfg.m_list, workers=cfg.workers,
        )
    except ValueError as exc:
        if isinstance(exc, MeasureError):
            raise
        raise UsageError(str(exc)) from exc


def _cmd_converge(cfg: RunConfig) -> int:
    result = harness.convergence_study(_study_config(cfg))
    if cfg.out is not None:
        harness.write_study(result, cfg.out)
    for row in result.rates.rows:
        print(f"t={row.t:g} N={row.n}->{row.n_next} W_rho={row.w_rho:.6g} W_eta={row.w_eta:.6g} order_rho={row.order_rho:.3g} order_eta={row.order_eta:.3g}")
    bad = [c for c in result.coupling if not c.ok]
    print(f"rate rows={len(result.rates)} coupling violations={len(bad)}")
    return EXIT_OK


def _cmd_census(cfg: RunConfig) -> int:
    cfg.horizon = math.inf
    study = harness.StudyConfig(_density(cfg.rho), _density(cfg.eta), cfg.n_list, math.inf, (0.0,), workers=cfg.workers)
    rows = harness.collision_census(study)
    if cfg.out is not None:
        harness.write_census(rows, Path(cfg.out) / "census.csv")
    for r in rows:
        print(f"N={r.n} events={r.events} (bound {r.n * (r.n + 1)}) crossings={r.crossings} sticks={r.sticks} t_stationary={r.t_stationary}")
    return EXIT_OK


def _cmd_oracle(cfg: RunConfig) -> int:
    init = _initial(cfg)
    if init.n > 10:
        _log.warning("the fine-step oracle is O(N^2) per step; N=%d will be slow", init.n)
    horizon = cfg.horizon
    record = engine.run(init, math.inf if not math.isfinite(horizon) else horizon)
    if not math.isfinite(horizon):
        horizon = (record.t_stationary or 0.0) + 0.5
    if cfg.dt > cfg.delta / 4:
        raise UsageError(f"--dt must not exceed --delta/4 = {cfg.delta / 4}")
    traj = oracle.fine_step_integrate(init, cfg.delta, cfg.dt, horizon, sample_every=max(cfg.dt, horizon / 5000))
    dist = oracle.sup_distance(record, traj)
    ok = dist <= cfg.max_distance
    print(f"N={init.n} T={horizon:g} delta={cfg.delta:g} dt={cfg.dt:g} sup_distance={dist:.3e} {'ok' if ok else 'FAIL'}")
    return EXIT_OK if ok else 1


def _echo(cfg: RunConfig) -> str:
    lines = []
    for key, val in vars(cfg).items():
        if isinstance(val, tuple):
            val = ",".join(f"{v:g}" if isinstance(v, float) else str(v) for v in val)
        lines.append(f"{key}={val}\n")
    return "".join(lines)


_COMMANDS = {
    "simulate": _cmd_simulate,
    "converge": _cmd_converge,
    "census": _cmd_census,
    "oracle-compare": _cmd_oracle,
}


def execute(cfg: RunConfig) -> int:
    saved = (engine.COLOCATION_RTOL, engine.TIE_RTOL)
    engine.COLOCATION_RTOL = cfg.tolerances.get("colocation_rtol", engine.COLOCATION_RTOL)
    engine.TIE_RTOL = cfg.tolerances.get("tie_rtol", engine.TIE_RTOL)
    try:
        return _COMMANDS[cfg.command](cfg)
    except engine.EngineInvariantError as exc:
        print(f"invariant violated ({exc.invariant}): {exc}", file=sys.stderr)
        return EXIT_SOFTWARE
    except InputFileError as exc:
        print(f"cannot read input: {exc}", file=sys.stderr)
        return EXIT_NOINPUT
    except (UsageError, MeasureError) as exc:
        print(f"twospecies: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    finally:
        engine.COLOCATION_RTOL, engine.TIE_RTOL = saved


def main(argv: Sequence[str] | None = None) -> int:
    return execute(parse_args(argv))


if __name__ == "__main__":
    sys.exit(main())
