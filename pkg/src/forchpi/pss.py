"""Basic profile ``W`` and the pseudo-steady-state productivity index.

The basic profile solves ``-div(K(|grad W|) grad W) = A`` in ``U`` with
``W = phi`` on the well and no flux on the exterior boundary, where
``A = Q_s/|U|``.  The pseudo-steady pressure is ``p_s = -A t + W``.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import spsolve, splu

from . import _assembly as asm
from .errors import ConfigError, DegenerateDataError, SolverError
from .grid import Region, ScalarField, average
from .kernel import Kernel, two_term

log = logging.getLogger(__name__)

__all__ = [
    "PssProblem",
    "PssSolution",
    "solve_basic_profile",
    "solve_gas_profile",
    "pss_pi",
    "pss_pressure",
    "HarmonicExtension",
    "harmonic_extension",
    "nonlinear_residual",
    "radial_darcy_profile",
]


def _trace(grid, phi):
    if phi is None:
        return np.zeros(grid.w_cell.size)
    if isinstance(phi, ScalarField):
        phi = phi.well_trace if phi.well_trace is not None else phi.values[grid.w_cell]
    if callable(phi):
        phi = phi(grid.w_coord)
    return np.broadcast_to(np.asarray(phi, dtype=float), grid.w_cell.shape).copy()


@dataclass(eq=False)
class PssProblem:
    grid: object
    kernel: Kernel
    phi: np.ndarray = None
    q_s: float = 0.0

    def __post_init__(self):
        self.phi = _trace(self.grid, self.phi)
        self.q_s = float(self.q_s)

    @property
    def a_const(self):
        return self.q_s / self.grid.volume


@dataclass(eq=False)
class PssSolution:
    w: ScalarField
    j_pss: float
    residual: float
    iterations: int
    flux: float
    history: list = field(default_factory=list)


def _conductances(grid, kernel, values, well_values):
    gf, gw = grid.face_gradients(values, well_values)
    return grid.f_trans * kernel(gf), grid.w_trans * kernel(gw)


def nonlinear_residual(grid, kernel, values, well_values, source):
    """``-div(K grad u) - source`` per cell (volume-integrated) and the well flux."""
    cf, cw = _conductances(grid, kernel, values, well_values)
    ff, fw = asm.face_fluxes(grid, values, well_values, cf, cw)
    res = grid.divergence(ff, fw) * grid.volumes - source * grid.volumes
    return res, float(np.sum(fw))


def solve_basic_profile(prob, tol=1e-10, max_iter=200, initial=None, damping=0.7):
    """Picard iteration for the basic profile.

    Each sweep freezes ``K`` at the current gradient and solves the linear
    variable-coefficient problem.  If the residual grows between sweeps the
    update is relaxed by ``damping``.  Convergence requires both a relative
    residual below ``tol`` and a well-flux mismatch below ``tol*|Q_s|``.
    """
    grid, kernel = prob.grid, prob.kernel
    a = prob.a_const
    phi = prob.phi
    source = np.full(grid.n_cells, a)
    scale = max(np.linalg.norm(source * grid.volumes), abs(prob.q_s), 1e-300)
    if initial is None:
        u = np.full(grid.n_cells, float(np.mean(phi)))
    else:
        u = np.array(initial.values if isinstance(initial, ScalarField) else initial, dtype=float)

    history = []
    relax = 1.0
    for it in range(1, max_iter + 1):
        cf, cw = _conductances(grid, kernel, u, phi)
        mat = asm.diffusion_matrix(grid, cf, cw)
        rhs = source * grid.volumes + asm.well_rhs(grid, cw, phi)
        new = spsolve(mat.tocsc(), rhs)
        u = u + relax * (new - u)
        res, flux = nonlinear_residual(grid, kernel, u, phi, source)
        rel = np.linalg.norm(res) / scale
        mismatch = abs(flux - prob.q_s)
        history.append(rel)
        if len(history) > 1 and rel > history[-2]:
            relax = damping
        if rel < tol and mismatch <= tol * max(abs(prob.q_s), 1e-300):
            break
        if prob.q_s == 0 and np.linalg.norm(res) == 0:
            break
    else:
        raise SolverError(
            f"basic profile did not converge in {max_iter} Picard iterations (residual {rel:.3e})",
            history=history,
        )
    log.debug("basic profile converged in %d iterations, residual %.3e", it, rel)
    w = ScalarField(grid, u, well_trace=phi, time=0.0)
    try:
        j = pss_pi_value(u, phi, grid, prob.q_s)
    except DegenerateDataError:
        j = float("nan")
    return PssSolution(w=w, j_pss=j, residual=rel, iterations=it, flux=flux, history=history)


def solve_gas_profile(grid, alpha, beta, a_const, tol=1e-10, max_iter=200):
    """Basic profile of the gas problem: two-term kernel, ``W = 0`` on the well."""
    if alpha <= 0 or beta < 0:
        raise ConfigError("gas profile needs alpha > 0 and beta >= 0")
    prob = PssProblem(grid, Kernel(two_term(alpha, beta)), phi=None, q_s=a_const * grid.volume)
    return solve_basic_profile(prob, tol=tol, max_iter=max_iter)


def pss_pi_value(w_values, phi, grid, q_s):
    mean_w = float(np.dot(grid.volumes, w_values)) / grid.volume
    mean_phi = float(np.dot(grid.w_area, phi)) / grid.well_measure
    dd = mean_w - mean_phi
    scale = max(np.max(np.abs(w_values)), np.max(np.abs(phi)), 0.0)
    if dd == 0 or abs(dd) <= 1e-12 * scale:
        raise DegenerateDataError("pseudo-steady drawdown is zero; the productivity index is undefined")
    return q_s / dd


def pss_pi(sol, phi, q_s):
    """``Q_s / (mean_U W - mean_Gamma_i phi)``."""
    grid = sol.w.grid
    return pss_pi_value(sol.w.values, _trace(grid, phi), grid, q_s)


def pss_pressure(sol, a_const, t):
    if t < 0:
        raise ValueError("t must be non-negative")
    w = sol.w
    trace = None if w.well_trace is None else w.well_trace - a_const * t
    return ScalarField(w.grid, w.values - a_const * t, well_trace=trace, time=float(t))


class HarmonicExtension:
    """Discrete harmonic extension of well traces (no flux on ``Gamma_e``).

    The operator is factorized once; extension is linear in the trace, so
    time derivatives of an extended trace are extensions of the derivatives.
    """

    def __init__(self, grid):
        self.grid = grid
        self._cw = grid.w_trans.copy()
        self._lu = splu(asm.diffusion_matrix(grid, grid.f_trans, self._cw).tocsc())

    def __call__(self, trace):
        trace = _trace(self.grid, trace)
        vals = self._lu.solve(asm.well_rhs(self.grid, self._cw, trace))
        return ScalarField(self.grid, vals, well_trace=trace)


def harmonic_extension(grid, trace):
    return HarmonicExtension(grid)(trace)


def drawdown(field):
    """``mean_U(p) - mean_Gamma_i(p)``."""
    return average(field, Region.VOLUME) - average(field, Region.WELL)


def radial_darcy_profile(r_i, r_e, q_s, c=1.0, phi=0.0):
    """Closed-form basic profile for Darcy flow ``g = c`` on an axisymmetric annulus.

    Returns ``(W, J)`` where ``W(r)`` is a callable and ``J`` the exact
    pseudo-steady productivity index.
    """
    if not (0 < r_i < r_e) or c <= 0:
        raise ConfigError("need 0 < r_i < r_e and c > 0")
    vol = np.pi * (r_e**2 - r_i**2)
    ac = q_s / vol * c

    def w(r):
        r = np.asarray(r, dtype=float)
        return phi + ac * (0.5 * r_e**2 * np.log(r / r_i) - 0.25 * (r**2 - r_i**2))

    # mean over U of (W - phi), integrated in closed form
    i_log = 0.5 * r_e**2 * np.log(r_e / r_i) - 0.25 * (r_e**2 - r_i**2)
    mean = 2.0 * np.pi * ac * (0.5 * r_e**2 * i_log - (r_e**2 - r_i**2) ** 2 / 16.0) / vol
    if mean == 0:
        raise DegenerateDataError("zero drawdown: Q_s must be nonzero")
    return w, q_s / mean
