import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from forchpi.errors import ConfigError, DegenerateDataError, DomainError
from forchpi.gas import (
    GasScenario,
    _face_terms,
    auxiliary_pressure,
    b_stability_sweep,
    darcy_identity_residual,
    gas_pss_pi,
    pi_on_history,
    run_gas,
    source_f0,
)
from forchpi.grid import ScalarField, build_radial, integrate
from forchpi.kernel import Kernel, two_term
from forchpi.pss import solve_gas_profile


@pytest.fixture(scope="module")
def small():
    grid = build_radial(1.0, 2.0, 32)
    return GasScenario(grid, 1.0, 0.0, 20.0, 1.0, dt=0.2, t_end=5.0, approach=1.0)


@pytest.fixture(scope="module")
def small_run(small):
    return run_gas(small)


@pytest.fixture(scope="module")
def w_prof(radial64):
    return solve_gas_profile(radial64, 2.0, 3.0, 0.5).w


class TestAuxiliary:
    def test_zero_profile(self, radial64):
        w = ScalarField(radial64, np.zeros(radial64.n_cells), well_trace=0.0)
        p0 = auxiliary_pressure(w, 10.0, 2.0, 3.0)
        assert np.all(p0.values == 4.0)
        assert np.all(source_f0(w, 10.0, 2.0, 3.0).values == 0.0)
        with pytest.raises(DegenerateDataError):
            gas_pss_pi(w, 1.0)

    def test_initial_and_critical(self, w_prof):
        B, A = 50.0, 2.0
        assert np.allclose(auxiliary_pressure(w_prof, B, A, 0.0).values, np.sqrt(B * B + 2 * w_prof.values))
        at_crit = auxiliary_pressure(w_prof, B, A, B / A).values
        assert np.allclose(at_crit, np.sqrt(2 * w_prof.values)) and np.all(at_crit > 0)
        f0 = source_f0(w_prof, B, A, B / A * (1 - 1e-9)).values
        assert np.allclose(f0, A, rtol=1e-3)

    def test_negative_radicand(self, radial64):
        w = ScalarField(radial64, np.full(radial64.n_cells, -1.0))
        with pytest.raises(DomainError):
            auxiliary_pressure(w, 1.0, 1.0, 1.0)
        with pytest.raises(DomainError):
            source_f0(w, 1.0, 1.0, 1.0)

    @given(st.floats(0.0, 0.99), st.floats(0.0, 0.99))
    @settings(max_examples=40, deadline=None)
    def test_f0_monotone_in_time(self, w_prof, s1, s2):
        B, A = 30.0, 1.0
        t1, t2 = sorted((s1 * B / A, s2 * B / A))
        assert np.all(source_f0(w_prof, B, A, t2).values >= source_f0(w_prof, B, A, t1).values - 1e-15)

    def test_pss_pi_denominator(self, w_prof):
        j = gas_pss_pi(w_prof, 3.0)
        den = 2.0 * integrate(w_prof) / w_prof.grid.volume
        assert 3.0 / j == pytest.approx(den, rel=1e-12)


def _p0_residual(n, dt):
    """Max cell residual of the gas equation with source f0 on the exact p0."""
    grid = build_radial(1.0, 2.0, n)
    alpha, beta, B, A, t = 1.0, 2.0, 10.0, 1.0, 4.0
    ker = Kernel(two_term(alpha, beta))
    w = solve_gas_profile(grid, alpha, beta, A, tol=1e-13).w
    p_new = auxiliary_pressure(w, B, A, t + dt).values
    p_old = auxiliary_pressure(w, B, A, t).values
    cf, cw, _, _ = _face_terms(grid, ker, p_new, B - A * (t + dt), jac=False)
    flux = cf * (p_new[grid.f_left] - p_new[grid.f_right])
    div = np.zeros(grid.n_cells)
    np.add.at(div, grid.f_left, flux)
    np.add.at(div, grid.f_right, -flux)
    np.add.at(div, grid.w_cell, cw * (p_new[grid.w_cell] - (B - A * (t + dt))))
    res = (p_new - p_old) / dt + div / grid.volumes - source_f0(w, B, A, t + dt).values
    return np.max(np.abs(res)) / A


def test_p0_solves_forced_equation():
    coarse, fine = _p0_residual(32, 0.02), _p0_residual(64, 0.01)
    assert fine < 0.6 * coarse
    assert fine < 1e-2


class TestRun:
    def test_ordering_and_min_principle(self, small, small_run):
        traj, hist = small_run
        assert np.all(traj.ordering <= 0)
        assert np.all(traj.min_principle_margin >= -1e-8 * small.b_reserve)
        assert np.all(traj.min_p > 0)
        assert hist[0][0] == 0.0 and traj.times[-1] == pytest.approx(5.0)

    def test_pi_on_p0_history(self, small, small_run):
        traj, _ = small_run
        w = traj.meta["w"]
        fields = [auxiliary_pressure(w, 20.0, 1.0, t).values for t in traj.times]
        _, _, j = pi_on_history(small.grid, small.kernel, traj.times, fields, 20.0, 1.0)
        assert np.max(np.abs(j / traj.j_p0 - 1)) < 1e-6

    def test_no_production_is_equilibrium(self):
        grid = build_radial(1.0, 2.0, 16)
        sc = GasScenario(grid, 1.0, 1.0, 5.0, 0.0, dt=0.5, t_end=3.0, phi0=0.0)
        traj, hist = run_gas(sc)
        assert all(np.allclose(p, 5.0, rtol=1e-13) for _, p in hist)
        assert math.isnan(traj.j_p0)

    @pytest.mark.parametrize(
        "kw",
        [dict(t_end=20.0), dict(dt=-1.0), dict(alpha_f=0.0), dict(b_reserve=-1.0), dict(beta_f=-1.0)],
    )
    def test_invalid_scenarios(self, kw):
        base = dict(grid=build_radial(1.0, 2.0, 16), alpha_f=1.0, beta_f=0.0, b_reserve=10.0, a_rate=1.0, dt=0.1, t_end=1.0)
        base.update(kw)
        with pytest.raises(ConfigError):
            GasScenario(**base)


class TestIdentity:
    def test_trivial(self, radial64):
        w = ScalarField(radial64, np.zeros(radial64.n_cells))
        hist = [(t, np.full(radial64.n_cells, 10.0 - t)) for t in np.linspace(0, 4, 9)]
        res = darcy_identity_residual(hist, w, 10.0, 1.0)
        assert res["lhs1"] == 0 and res["lhs2"] == 0 and res["rhs"] == 0 and res["rel_residual"] == 0

    def test_signs_and_accuracy(self, small_run):
        traj, hist = small_run
        res = darcy_identity_residual(hist, traj.meta["w"], 20.0, 1.0, alpha=1.0)
        assert res["lhs1"] >= 0 and res["lhs2"] >= 0 and res["rhs"] >= 0
        assert res["rel_residual"] < 0.1
        assert np.isfinite(res["comparison_ratio"])

    def test_rejects_forchheimer(self, small_run):
        traj, hist = small_run
        with pytest.raises(ConfigError):
            darcy_identity_residual(hist, traj.meta["w"], 20.0, 1.0, beta=1.0)
        with pytest.raises(ConfigError):
            darcy_identity_residual(hist[:1], traj.meta["w"], 20.0, 1.0)


def test_sweep_small():
    grid = build_radial(1.0, 2.0, 32)
    base = GasScenario(grid, 40000.0, 0.0, 2000.0, 0.1, dt=0.1, t_end=1.0)
    res = b_stability_sweep(base, [1000.0, 250.0, 500.0], 1.0)
    assert list(res.b_values) == [250.0, 500.0, 1000.0]
    assert np.all(res.ordering <= 0)
    assert res.gap_pi[-1] < res.gap_pi[0]
    assert -2.3 < res.slope < -1.7
    with pytest.raises(ConfigError):
        b_stability_sweep(base, [250.0, 500.0], 2000.0)
