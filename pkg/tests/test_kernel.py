import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from forchpi.errors import ConfigError, DomainError
from forchpi.kernel import (
    GPolynomial,
    Kernel,
    KernelTable,
    degree_condition_violated,
    eval_g,
    eval_g_prime,
    exponent_a,
    inv_big_g,
    kappa,
    kappa_elasticity,
    kappa_h,
    kappa_prime,
    two_term,
)

# frozen oracle: 2*int_0^1 2u/(1+sqrt(1+4u)) du, evaluated symbolically
H_TWO_TERM_AT_ONE = 0.69672331458315808


def _closed(alpha, beta, xi):
    return 2.0 / (alpha + np.sqrt(alpha**2 + 4.0 * beta * xi))


def _poly(cs, es):
    es = np.cumsum(es[: len(cs)])
    return GPolynomial((1.0,) + tuple(cs), (0.0,) + tuple(es))


class TestPolynomial:
    def test_eval_examples(self):
        assert eval_g(GPolynomial((1,), (0,)), 7.0) == 1.0
        assert eval_g(GPolynomial((1, 1), (0, 1)), 2.0) == 3.0
        assert eval_g(GPolynomial((1, 2, 3), (0, 0.5, 2)), 4.0) == pytest.approx(53.0, rel=1e-15)

    @pytest.mark.parametrize(
        "coeffs,exps",
        [((1.0, -1.0), (0, 1)), ((1.0, 1.0), (0.5, 1)), ((1.0, 1.0), (0, 0)), ((), ()), ((1.0,), (0, 1))],
    )
    def test_invalid(self, coeffs, exps):
        with pytest.raises(ConfigError):
            GPolynomial(coeffs, exps)

    def test_g_prime_matches_difference(self):
        p = GPolynomial((1, 2, 3), (0, 0.5, 2))
        s, h = 1.7, 1e-6
        fd = (eval_g(p, s + h) - eval_g(p, s - h)) / (2 * h)
        assert eval_g_prime(p, s) == pytest.approx(fd, rel=1e-8)

    def test_negative_argument(self):
        with pytest.raises(DomainError):
            eval_g(two_term(1, 1), -1.0)

    def test_exponent_and_degree_condition(self):
        assert exponent_a(two_term(1, 0)) == 0.0
        assert exponent_a(two_term(1, 1)) == 0.5
        p = GPolynomial((1, 1), (0, 4))
        assert exponent_a(p) == pytest.approx(0.8)
        assert not degree_condition_violated(p, 3)
        assert degree_condition_violated(GPolynomial((1, 1), (0, 6)), 3)
        assert not degree_condition_violated(GPolynomial((1, 1), (0, 6)), 2)


class TestInverse:
    def test_examples(self):
        assert inv_big_g(GPolynomial((1,), (0,)), 5.0) == pytest.approx(5.0, rel=1e-14)
        assert inv_big_g(two_term(1, 1), 6.0) == pytest.approx(2.0, rel=1e-13)
        assert inv_big_g(GPolynomial((1, 2, 3), (0, 0.5, 2)), 0.0) == 0.0

    def test_quadratic_oracle(self):
        xi = np.geomspace(1e-12, 1e10, 200)
        alpha, beta = 3.0, 0.7
        exact = 2 * xi / (alpha + np.sqrt(alpha**2 + 4 * beta * xi))
        assert np.allclose(inv_big_g(two_term(alpha, beta), xi), exact, rtol=1e-11, atol=0)

    @given(st.lists(st.floats(0.05, 20.0), min_size=1, max_size=3), st.floats(1e-8, 1e8))
    @settings(max_examples=60, deadline=None)
    def test_roundtrip(self, cs, xi):
        p = _poly(cs, [0.5, 1.0, 1.5])
        s = inv_big_g(p, xi)
        assert s * eval_g(p, s) == pytest.approx(xi, rel=1e-10)


class TestKappa:
    def test_darcy(self):
        k = Kernel(GPolynomial((1,), (0,)))
        assert np.all(k(np.array([0.0, 1.0, 1e6])) == 1.0)
        assert k.is_darcy

    def test_two_term_example(self):
        assert kappa(Kernel(two_term(1, 1)), 6.0) == pytest.approx(1.0 / 3.0, rel=1e-13)

    def test_closed_form(self):
        xi = np.concatenate([[0.0], np.geomspace(1e-8, 1e8, 999)])
        for a, b in [(1.0, 1.0), (10.0, 1000.0), (0.3, 5.0)]:
            err = np.abs(kappa(Kernel(two_term(a, b)), xi) - _closed(a, b, xi))
            assert err.max() <= 1e-10

    def test_prime_analytic_vs_fd(self, forch):
        xi = np.geomspace(1e-3, 1e5, 50)
        h = 1e-6 * xi
        fd = (forch(xi + h) - forch(xi - h)) / (2 * h)
        assert np.allclose(forch.prime(xi), fd, rtol=1e-6)

    def test_elasticity_range(self, high_degree):
        xi = np.geomspace(1e-6, 1e8, 300)
        k, e = kappa_elasticity(high_degree, xi)
        assert np.allclose(k, high_degree(xi), rtol=1e-13)
        assert np.all(e <= 0) and np.all(e > -high_degree.a_exp)
        assert np.allclose(e, xi * kappa_prime(high_degree, xi) / k, rtol=1e-10)

    def test_growth_ratio_bounded(self, forch, high_degree):
        xi = np.geomspace(1e2, 1e8, 200)
        for ker in (forch, high_degree):
            ratio = ker(xi) * xi**2 / xi ** (2 - ker.a_exp)
            assert ratio.min() > 0.1 * ratio.max()

    def test_table_matches(self, forch):
        tab = KernelTable(forch, xi_max=1e4)
        xi = np.geomspace(1e-4, 1e5, 500)
        assert np.allclose(tab(xi), forch(xi), rtol=1e-8)


class TestH:
    def test_examples(self, forch):
        assert kappa_h(Kernel(GPolynomial((1,), (0,))), 3.0) == pytest.approx(9.0)
        assert kappa_h(forch, 0.0) == 0.0
        assert kappa_h(forch, 1.0) == pytest.approx(H_TWO_TERM_AT_ONE, rel=1e-8)

    def test_trapezoid_oracle(self, forch):
        u = np.linspace(0.0, 1.0, 200001)
        ref = np.trapezoid(2 * _closed(1.0, 1.0, u) * u, u)
        assert kappa_h(forch, 1.0) == pytest.approx(ref, abs=1e-8)


# -- inequality suite (property-based) ---------------------------------------------------


@given(
    st.lists(st.floats(0.05, 20.0), min_size=1, max_size=3),
    st.floats(1e-3, 1e6),
    st.floats(1.0001, 50.0),
)
@settings(max_examples=80, deadline=None)
def test_strict_decrease(cs, xi, factor):
    ker = Kernel(_poly(cs, [0.5, 1.0, 2.0]))
    assert ker(xi) > ker(xi * factor)


@given(st.lists(st.floats(0.05, 20.0), min_size=1, max_size=3), st.floats(1e-3, 1e6))
@settings(max_examples=80, deadline=None)
def test_derivative_bound(cs, xi):
    ker = Kernel(_poly(cs, [1.0, 1.0, 1.0]))
    h = 1e-5 * xi
    fd = (ker(xi + h) - ker(xi - h)) / (2 * h)
    bound = -ker.a_exp * ker(xi) / xi
    tol = 1e-6 * ker(xi) / xi
    assert fd <= tol and fd >= bound - tol


@given(st.lists(st.floats(0.05, 20.0), min_size=1, max_size=2), st.floats(1e-3, 1e4))
@settings(max_examples=30, deadline=None)
def test_h_sandwich(cs, xi):
    ker = Kernel(_poly(cs, [0.5, 1.5]))
    kx2 = ker(xi) * xi * xi
    h = kappa_h(ker, xi)
    assert kx2 * (1 - 1e-10) <= h <= 2 * kx2 * (1 + 1e-10)


def test_discrete_monotonicity(rng, forch, high_degree):
    for ker in (forch, high_degree):
        y1 = rng.normal(size=(10_000, 3)) * rng.lognormal(0, 2, size=(10_000, 1))
        y2 = rng.normal(size=(10_000, 3)) * rng.lognormal(0, 2, size=(10_000, 1))
        f1 = ker(np.linalg.norm(y1, axis=1))[:, None] * y1
        f2 = ker(np.linalg.norm(y2, axis=1))[:, None] * y2
        assert np.all(np.sum((f1 - f2) * (y1 - y2), axis=1) >= -1e-12)
