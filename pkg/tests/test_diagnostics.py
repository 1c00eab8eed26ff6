import csv
import math

import numpy as np
import pytest

from twospecies.diagnostics import (
    DEFAULT_M_LIST,
    energy,
    energy_dissipation_check,
    lm_monitor,
    lm_monotonicity_check,
    lm_norm,
    support,
    support_check,
    trace,
)
from twospecies.engine import initial_state, run
from twospecies.measures import piecewise_from_state


def brute_energy(x, y):
    n = len(x)
    sx = -0.5 * np.abs(x[:, None] - x[None, :]).sum() / n**2
    sy = -0.5 * np.abs(y[:, None] - y[None, :]).sum() / n**2
    c = np.abs(x[:, None] - y[None, :]).sum() / n**2
    return sx, sy, c


class TestEnergy:
    def test_single_pair(self):
        e = energy(initial_state([0], [1]))
        assert (e.self_x, e.self_y, e.cross, e.total) == (0, 0, 1, 1)

    def test_paired_is_zero(self):
        assert energy(initial_state([0, 1, 3], [0, 1, 3])).total == 0

    def test_two_blocks(self):
        e = energy(initial_state([0, 1], [2, 3]))
        assert (e.self_x, e.self_y, e.cross, e.total) == (-0.25, -0.25, 2.0, 1.5)

    def test_matches_double_sum(self, rng):
        for _ in range(20):
            n = int(rng.integers(1, 40))
            x, y = np.sort(rng.normal(size=n)), np.sort(rng.normal(size=n))
            e = energy(initial_state(x, y))
            np.testing.assert_allclose((e.self_x, e.self_y, e.cross), brute_energy(x, y), rtol=1e-12, atol=1e-14)

    def test_non_negative_on_random_states(self, rng):
        for _ in range(1000):
            n = int(rng.integers(1, 30))
            scale = 10 ** rng.uniform(-2, 2)
            e = energy(initial_state(scale * rng.normal(size=n), scale * rng.normal(size=n)))
            assert e.total >= -1e-12 * max(1.0, scale)


class TestNorms:
    def test_constant_density(self):
        d = piecewise_from_state([0, 0.5, 1.0], n=3)
        assert lm_norm(d, 2) == pytest.approx(2 / 3)

    def test_sup_norm(self):
        d = piecewise_from_state([0, 0.1, 1.0], n=3)
        assert lm_norm(d, math.inf) == pytest.approx(10 / 3)

    def test_l2_value(self):
        d = piecewise_from_state([0, 0.1, 1.0], n=3)
        # 0.1 (10/3)^2 + 0.9 (10/27)^2 = 100/81
        assert lm_norm(d, 2) == pytest.approx(10 / 9, rel=1e-14)

    def test_rejects_m_at_most_one(self):
        with pytest.raises(ValueError):
            lm_norm(piecewise_from_state([0, 1]), 1)

    def test_monitor_special_cases(self):
        assert math.isnan(lm_monitor(initial_state([0], [1]), 2))
        assert lm_monitor(initial_state([0, 0], [1, 2]), 2) == math.inf


class TestSupport:
    def test_endpoints(self):
        assert support(initial_state([0, 1], [-1, 2])) == (-1, 2)

    def test_contained_during_runs(self, rng):
        for _ in range(20):
            rec = run(initial_state(rng.random(15), rng.random(15) + 0.5))
            assert support_check(rec)


class TestRunChecks:
    def test_stationary_run(self):
        rec = run(initial_state([0, 1], [0, 1]), 3.0)
        rep = energy_dissipation_check(rec)
        assert rep.ok and len(rec.snapshots) == 1

    def test_single_event_energy_drop(self):
        rec = run(initial_state([0], [1]))
        tr = trace(rec)
        assert tr.energy.tolist() == [1.0, 0.0]
        assert rec.flows[0].kinetic() == 2.0
        assert energy_dissipation_check(rec)

    def test_random_runs(self, rng):
        for _ in range(10):
            rec = run(initial_state(rng.random(20), rng.random(20)))
            assert energy_dissipation_check(rec), energy_dissipation_check(rec).violations[:3]
            assert lm_monotonicity_check(rec)
            assert np.all(np.diff(trace(rec).energy) <= 1e-14)

    def test_detects_wrong_velocity_law(self):
        rec = run(initial_state([0, 1], [2, 3]))
        # corrupt the flow so that the energy slope no longer matches
        flow = rec.flows[0]
        rec.flows[0] = type(flow)(flow.cx * 2, flow.cy * 2, flow.keys, flow.order)
        rep = energy_dissipation_check(rec)
        assert not rep.ok and rep.violations[0][0] == 0


def test_trace_csv(tmp_path, rng):
    rec = run(initial_state(rng.random(6), rng.random(6)))
    tr = trace(rec)
    path = tr.to_csv(tmp_path / "trace.csv")
    with open(path) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == "t,energy,self_x,self_y,cross,l2,l3,linf,a,b,events_cross,events_stick".split(",")
    assert len(rows) == len(rec.snapshots) + 1
    t = [float(r[0]) for r in rows[1:]]
    assert all(b > a for a, b in zip(t, t[1:]))
    last = rows[-1]
    assert int(last[-2]) + int(last[-1]) == rec.count()
    assert list(tr.lm) == list(DEFAULT_M_LIST)
