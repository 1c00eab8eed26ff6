import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from twospecies.measures import (
    EmpiricalMeasure,
    MeasureError,
    Mixture,
    PiecewiseDensity,
    TabulatedCdf,
    Uniform,
    cdf,
    cdf_from_quantile,
    coupling_bound,
    discretize,
    parse_density,
    piecewise_from_state,
    pseudo_inverse,
    quantile,
    w1_via_cdf,
    wasserstein_p,
)


def random_piecewise(rng, n=None):
    n = n or int(rng.integers(2, 12))
    z = np.sort(rng.normal(size=n))
    return piecewise_from_state(z)


def random_empirical(rng, n=None):
    n = n or int(rng.integers(1, 12))
    return EmpiricalMeasure(np.sort(rng.normal(size=n)))


def random_measure(rng):
    return random_piecewise(rng) if rng.random() < 0.5 else random_empirical(rng)


class TestDiscretize:
    def test_uniform_quantiles(self):
        np.testing.assert_allclose(discretize(Uniform(0, 1), 4), [0.25, 0.5, 0.75, 1.0], atol=1e-15)

    def test_single_particle_is_right_endpoint(self):
        assert discretize(Uniform(0, 1), 1).tolist() == [1.0]

    def test_mixture(self):
        mix = Mixture(((0.5, Uniform(0, 1)), (0.5, Uniform(2, 3))))
        np.testing.assert_allclose(discretize(mix, 4), [0.5, 1.0, 2.5, 3.0], atol=1e-12)

    def test_include_left(self):
        assert discretize(Uniform(-1, 1), 2, include_left=True).tolist() == [-1.0, 0.0, 1.0]

    def test_each_slab_has_mass_one_over_n(self):
        mix = Mixture(((0.3, Uniform(0, 1)), (0.7, Uniform(0.5, 4))))
        xs = discretize(mix, 37, include_left=True)
        np.testing.assert_allclose(np.diff(mix.cdf(xs)), 1 / 37, atol=1e-12)

    def test_tabulated_matches_uniform(self):
        tab = TabulatedCdf(np.linspace(0, 2, 5), np.linspace(0, 1, 5))
        np.testing.assert_allclose(discretize(tab, 8), discretize(Uniform(0, 2), 8), atol=1e-11)

    def test_rejects_bad_n(self):
        with pytest.raises(MeasureError):
            discretize(Uniform(0, 1), 0)

    def test_rejects_unnormalised_mixture(self):
        with pytest.raises(MeasureError):
            Mixture(((0.5, Uniform(0, 1)), (0.6, Uniform(2, 3))))

    def test_tabulated_from_file(self, tmp_path):
        path = tmp_path / "cdf.txt"
        path.write_text("# x F\n0 0\n1 0.25\n3 1\n")
        tab = parse_density(f"cdf:{path}")
        assert tab.lower_quantile(0.25) == pytest.approx(1.0, abs=1e-11)
        assert discretize(tab, 4)[-1] == 3.0

    def test_tabulated_must_reach_one(self):
        with pytest.raises(MeasureError):
            TabulatedCdf([0, 1], [0, 0.9])


class TestPiecewise:
    def test_particle_count_convention_examples(self):
        d = piecewise_from_state([0, 0.5, 1.0], n=3)
        np.testing.assert_allclose(d.heights, [2 / 3, 2 / 3])
        assert piecewise_from_state([0, 1], n=2).heights.tolist() == [0.5]
        d = piecewise_from_state([0, 0.1, 1.0], n=3)
        np.testing.assert_allclose(d.heights, [1 / (3 * 0.1), 1 / (3 * 0.9)])

    def test_default_is_unit_mass(self, rng):
        for _ in range(20):
            d = random_piecewise(rng)
            assert d.mass == pytest.approx(1.0, abs=1e-12)

    def test_rejects_duplicates(self):
        with pytest.raises(MeasureError, match="strictly increasing"):
            piecewise_from_state([0, 1, 1, 2])


class TestCdf:
    def test_empirical_step(self):
        F = cdf(EmpiricalMeasure([0.0, 1.0]))
        assert F([-1, 0, 0.5, 1, 2]).tolist() == [0, 0.5, 0.5, 1, 1]

    def test_uniform_is_identity(self):
        F = cdf(piecewise_from_state([0.0, 1.0]))
        np.testing.assert_allclose(F([0, 0.3, 1]), [0, 0.3, 1])

    def test_integrated_heights(self):
        F = cdf(piecewise_from_state([0, 0.5, 1.0], n=3))
        assert F(0.75) == pytest.approx(0.5)


class TestQuantile:
    def test_uniform(self):
        X = quantile(Uniform(0, 1))
        np.testing.assert_allclose(X([0.1, 0.5, 0.9]), [0.1, 0.5, 0.9])

    def test_two_atoms(self):
        X = quantile(EmpiricalMeasure([2.0, 5.0]))
        assert X([0.0, 0.49, 0.5, 1.0]).tolist() == [2.0, 2.0, 5.0, 5.0]

    def test_slope_is_inverse_height(self):
        # cells carry mass 1/3 each; X has slope 1/d on each mass cell
        d = piecewise_from_state([0, 0.5, 1.0], n=3)
        X = pseudo_inverse(cdf(d))
        s = np.array([0.05, 0.25, 0.4, 0.6])
        slopes = np.diff(X(s)) / np.diff(s)
        np.testing.assert_allclose(slopes[[0, 2]], 1 / d.heights[0])

    def test_round_trip(self, rng):
        for _ in range(50):
            d = random_piecewise(rng)
            F = cdf(d)
            G = cdf_from_quantile(pseudo_inverse(F))
            np.testing.assert_allclose(G(d.breakpoints), F(d.breakpoints), atol=1e-10)


class TestWasserstein:
    def test_point_masses(self):
        for p in (1, 2, 2.5, 7):
            assert wasserstein_p(EmpiricalMeasure([0.0]), EmpiricalMeasure([3.0]), p) == pytest.approx(3.0)

    def test_translation(self):
        assert wasserstein_p(Uniform(0, 1), Uniform(0.5, 1.5), 1) == pytest.approx(0.5)

    def test_dilation_w2(self):
        assert wasserstein_p(Uniform(0, 1), Uniform(0, 2), 2) == pytest.approx(math.sqrt(1 / 3), abs=1e-14)

    def test_fractional_p_matches_closed_form_for_translation(self):
        assert wasserstein_p(Uniform(0, 1), Uniform(0.25, 1.25), 1.5) == pytest.approx(0.25, rel=1e-12)

    def test_rejects_p_below_one(self):
        with pytest.raises(MeasureError):
            wasserstein_p(Uniform(0, 1), Uniform(0, 1), 0.5)

    def test_w1_via_cdf_examples(self):
        assert w1_via_cdf(Uniform(0, 1), Uniform(0, 1)) == 0.0
        assert w1_via_cdf(EmpiricalMeasure([0.0]), EmpiricalMeasure([1.0])) == pytest.approx(1.0)
        assert w1_via_cdf(Uniform(0, 1), EmpiricalMeasure([0.25, 0.75])) == pytest.approx(0.125)

    def test_w1_routes_agree(self, rng):
        for _ in range(100):
            mu, nu = random_measure(rng), random_measure(rng)
            assert wasserstein_p(mu, nu, 1) == pytest.approx(w1_via_cdf(mu, nu), abs=1e-10)

    def test_metric_axioms(self, rng):
        for _ in range(60):
            a, b, c = (random_measure(rng) for _ in range(3))
            for p in (1, 2, 3.5):
                ab, ba = wasserstein_p(a, b, p), wasserstein_p(b, a, p)
                assert ab == ba
                assert wasserstein_p(a, a, p) == 0.0
                assert ab <= wasserstein_p(a, c, p) + wasserstein_p(c, b, p) + 1e-10

    def test_discretization_error_first_order(self):
        dens = Mixture(((0.4, Uniform(0, 1)), (0.6, Uniform(2, 5))))
        errs = [wasserstein_p(piecewise_from_state(discretize(dens, n, include_left=True)), dens, 1)
                for n in (20, 40, 80, 160)]
        ratios = np.array(errs[1:]) / np.array(errs[:-1])
        assert np.all(ratios < 0.6)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(-10**6, 10**6), min_size=2, max_size=30, unique=True))
def test_coupling_bound(values):
    z = np.sort(np.array(values)) / 1e4
    w = wasserstein_p(EmpiricalMeasure(z), piecewise_from_state(z), 1)
    assert w <= coupling_bound(z) * (1 + 1e-12)


def test_coupling_bound_is_attained_for_two_atoms():
    z = np.array([0.0, 1.0])
    assert wasserstein_p(EmpiricalMeasure(z), piecewise_from_state(z), 1) == pytest.approx(coupling_bound(z))


@pytest.mark.parametrize(
    "text,expected",
    [("uniform:0,1", (0.0, 1.0)), ("mix:0.5*uniform:0,1+0.5*uniform:2,3", (0.0, 3.0))],
)
def test_parse_density(text, expected):
    assert parse_density(text).support == expected


@pytest.mark.parametrize("text", ["gauss:0,1", "uniform:1", "mix:0.5uniform:0,1", "uniform:2,1"])
def test_parse_density_rejects(text):
    with pytest.raises(MeasureError):
        parse_density(text)
