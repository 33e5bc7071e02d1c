import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad
from scipy.optimize import brentq, minimize_scalar

from netmoments.gaussian_moments import MomentTriple, forward_stat
from netmoments.realizability import (
    boundary_curve,
    exponential_moments,
    exponential_stat,
    project_moments,
    project_stat,
)


@pytest.fixture(scope="module")
def fs(table):
    return table.feasible


def exp_quad(beta):
    return np.array([quad(lambda a: math.exp(-beta * a) * a**k, 0.0, 1.0, epsabs=0.0, epsrel=1e-13,
                          limit=200, points=[1.0 / abs(beta)] if abs(beta) > 1 else None)[0] for k in range(3)])


class TestExponentialMoments:
    def test_zero_is_exact(self):
        assert tuple(exponential_moments(0.0)) == (1.0, 0.5, 1.0 / 3.0)

    def test_unit_rate(self):
        assert exponential_moments(1.0).m0 == pytest.approx(1.0 - math.exp(-1.0), rel=1e-15)
        np.testing.assert_allclose(exponential_moments(1.0).as_array(), exp_quad(1.0), rtol=1e-13)

    def test_steep_decay(self):
        E, V = exponential_stat(1e3)
        assert E == pytest.approx(1e-3, rel=1e-12)
        assert V == pytest.approx(1e-6, rel=1e-12)
        np.testing.assert_allclose(exponential_moments(1e3).as_array(), exp_quad(1e3), rtol=1e-10)

    @pytest.mark.parametrize("beta", [1e-8, 1e-5, 1e-3, 0.1, 0.99, 1.01, 3.0, -0.5, -2.0])
    def test_against_quadrature(self, beta):
        np.testing.assert_allclose(exponential_moments(beta).as_array(), exp_quad(beta), rtol=1e-13)

    def test_series_and_closed_form_meet(self):
        a = exponential_moments(0.999999).as_array()
        b = exponential_moments(1.000001).as_array()
        np.testing.assert_allclose(a, b, rtol=1e-5)

    @given(beta=st.floats(-700.0, 700.0, allow_nan=False))
    def test_stat_mirror(self, beta):
        E1, V1 = exponential_stat(beta)
        E2, V2 = exponential_stat(-beta)
        assert E1 + E2 == pytest.approx(1.0, abs=1e-14)
        assert V1 == pytest.approx(V2, rel=1e-12)


class TestBoundaryCurve:
    def test_center_entry(self):
        c = boundary_curve()
        k = int(np.argmin(np.abs(c.beta)))
        assert c.beta[k] == 0.0
        assert (c.E[k], c.V[k]) == (0.5, pytest.approx(1.0 / 12.0, rel=1e-15))

    def test_symmetry_and_monotonicity(self):
        c = boundary_curve()
        assert np.all(np.diff(c.E) > 0.0)
        assert np.all(c.V > 0.0)
        np.testing.assert_allclose(c.E + c.E[::-1], 1.0, atol=1e-14)
        np.testing.assert_allclose(c.V, c.V[::-1], rtol=1e-12)

    def test_beta_five(self):
        c = boundary_curve([-5.0, 0.0, 5.0])
        m = exp_quad(5.0)
        E = m[1] / m[0]
        k = int(np.flatnonzero(c.beta == 5.0)[0])
        assert c.E[k] == pytest.approx(E, rel=1e-10)
        assert c.V[k] == pytest.approx(m[2] / m[0] - E * E, rel=1e-10)


def _sup_variance(E, sigma_min=1e-4, sigma_max=1e2, c=20.0):
    """Largest V over Gaussians in the parameter set with mean E (level-set search)."""
    def v_on_level(log_s):
        s = math.exp(log_s)
        f = lambda a: float(forward_stat(a, s)[0]) - E  # noqa: E731
        lo, hi = 0.5, 1.0 + c * s
        if f(lo) > 0.0 or f(hi) < 0.0:
            return -1.0
        return float(forward_stat(brentq(f, lo, hi, xtol=1e-15, rtol=1e-15), s)[1])

    grid = np.linspace(math.log(sigma_min), math.log(sigma_max), 801)
    vals = [v_on_level(x) for x in grid]
    k = int(np.argmax(vals))
    r = minimize_scalar(lambda x: -v_on_level(x), bounds=(grid[max(k - 1, 0)], grid[min(k + 1, 800)]),
                        method="bounded", options={"xatol": 1e-12})
    return max(-r.fun, vals[k])


class TestFeasibleSet:
    def test_bounds(self, fs):
        assert 0.0 < fs.E_min < 0.5 < fs.E_max < 1.0
        assert fs.E_min + fs.E_max == pytest.approx(1.0, abs=1e-15)
        assert fs.v_max(0.5) <= 1.0 / 12.0

    def test_lower_below_upper(self, fs):
        E = np.linspace(fs.E_min, fs.E_max, 2001)[1:-1]
        lo, hi = fs.v_min_array(E), fs.v_max_array(E)
        assert np.all(lo > 0.0) and np.all(lo < hi)

    def test_lower_boundary_is_narrowest_width(self, fs):
        assert fs.v_min(0.5) == pytest.approx(1e-8, rel=1e-6)

    @pytest.mark.parametrize("E", [0.6, 0.8, 0.95])
    def test_upper_boundary_matches_search(self, fs, E):
        assert fs.v_max(E) == pytest.approx(_sup_variance(E), abs=1e-8)

    def test_parameter_images_inside(self, fs):
        rng = np.random.default_rng(3)
        s = 10.0 ** rng.uniform(-4.0, 2.0, 5000)
        a0 = 0.5 + rng.uniform(0.0, 1.0, 5000) * (0.5 + 20.0 * s)
        E, V = forward_stat(a0, s)
        for e, v in zip(E, V):
            assert project_stat(float(e), float(v), fs) == (e, v)


class TestProjection:
    def test_too_wide(self, fs):
        E, V = project_stat(0.5, 0.2, fs)
        assert E == 0.5
        assert V == fs.v_max(0.5)
        assert V == pytest.approx(float(forward_stat(0.5, 100.0)[1]), rel=1e-6)

    def test_negative_variance(self, fs):
        assert project_stat(0.5, -0.01, fs) == (0.5, fs.v_min(0.5))

    def test_interior_pass_through(self, fs):
        assert project_stat(0.3, 0.01, fs) == (0.3, 0.01)

    @pytest.mark.parametrize("E", [-0.5, 0.0, 1.0, 1.7])
    def test_mean_outside_goes_to_corner(self, fs, E):
        PE, PV = project_stat(E, 0.01, fs)
        assert PE in (fs.E_min, fs.E_max)
        assert fs.contains(PE, PV)

    def test_idempotent_on_many_pairs(self, fs):
        rng = np.random.default_rng(0)
        for E, V in zip(rng.uniform(-1.0, 2.0, 10_000), rng.uniform(-1.0, 1.0, 10_000)):
            p = project_stat(E, V, fs)
            assert fs.contains(*p)
            assert project_stat(*p, fs) == p

    @given(E=st.floats(-1.0, 2.0), V=st.floats(-1.0, 1.0))
    @settings(max_examples=300)
    def test_idempotent_property(self, fs, E, V):
        p = project_stat(E, V, fs)
        assert project_stat(*p, fs) == p


class TestProjectMoments:
    @pytest.mark.parametrize("m0", [-0.1, 0.0])
    def test_nonpositive_mass(self, fs, m0):
        assert tuple(project_moments(MomentTriple(m0, 0.0, 0.0), fs)) == (0.0, 0.0, 0.0)

    def test_realizable_unchanged(self, fs):
        m = MomentTriple(2.0, 0.8, 0.8 * 0.4 + 2.0 * 0.001)
        assert project_moments(m, fs) is m

    def test_too_wide(self, fs):
        m = project_moments(MomentTriple(1.0, 0.5, 0.45), fs)
        assert (m.m0, m.m1) == (1.0, 0.5)
        assert m.m2 == pytest.approx(fs.v_max(0.5) + 0.25, rel=1e-15)

    @given(m0=st.floats(1e-10, 1e10), m1=st.floats(-2.0, 2.0), m2=st.floats(-2.0, 2.0))
    def test_mass_preserved(self, fs, m0, m1, m2):
        assert project_moments(MomentTriple(m0, m0 * m1, m0 * m2), fs).m0 == m0
