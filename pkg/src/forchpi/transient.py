"""Transient slightly compressible flow and its productivity index.

Backward Euler in time with Newton (or Picard) inner iterations for
``p_t = div(K(|grad p|) grad p)``.  Two well conditions are supported:

* IBVP-I: prescribed total flux ``Q(t)`` with the split trace
  ``p = gamma(t) + psi(x, t)`` on the well, ``gamma`` unknown.  ``gamma`` is
  solved for together with the pressure through one bordering row/column.
* IBVP-II: full Dirichlet data ``p = psi(x, t) + gamma(t)`` on the well.

The exterior boundary is impermeable in both cases.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import splu

from . import _assembly as asm
from .errors import ConfigError, SolverError
from .expr import Expr
from .grid import ScalarField, lp_norm_gradient
from .kernel import kappa_elasticity
from .pss import PssProblem, pss_pi, solve_basic_profile

log = logging.getLogger(__name__)

__all__ = [
    "BoundaryProgram",
    "PiTrajectory",
    "run_ibvp1",
    "run_ibvp2",
    "compute_pi",
    "convergence_metrics",
    "characteristic_time",
    "initial_pss",
    "initial_bump",
    "initial_constant",
    "scaled_program",
]

_UNDEFINED_RTOL = 1e-12


def _expr(value):
    if value is None or isinstance(value, Expr):
        return value
    return Expr(value)


def _mean_on_well(grid, values):
    return float(np.dot(grid.w_area, values)) / grid.well_measure


@dataclass
class BoundaryProgram:
    """Time-dependent well data and its steady comparator.

    ``psi`` is a function of ``(t, s)`` with ``s`` the well-boundary
    coordinate, ``q`` and ``gamma`` functions of ``t``, ``phi`` of ``s``.
    Exactly one of ``q`` (IBVP-I) and ``gamma`` (IBVP-II) is given.
    IBVP-I solvers receive ``psi`` projected to zero mean on ``Gamma_i``
    (the constant part is the unknown ``gamma``); IBVP-II solvers receive
    the full trace ``psi + gamma``.
    """

    phi: Expr = "0"
    q_s: float = 0.0
    psi: Expr = None
    q: Expr = None
    gamma: Expr = None

    def __post_init__(self):
        self.phi = _expr(self.phi)
        self.psi = _expr(self.psi) if self.psi is not None else self.phi
        self.q = _expr(self.q)
        self.gamma = _expr(self.gamma)
        self.q_s = float(self.q_s)
        if (self.q is None) == (self.gamma is None):
            raise ConfigError("a boundary program needs exactly one of q (IBVP-I) or gamma (IBVP-II)")
        if self.phi.depends_on_t:
            raise ConfigError("the steady trace phi must not depend on t")
        self._derivs = {}

    @property
    def kind(self):
        return "ibvp1" if self.q is not None else "ibvp2"

    def _d(self, name, order):
        key = (name, order)
        if key not in self._derivs:
            base = getattr(self, name)
            self._derivs[key] = base if order == 0 else base.dt(order)
        return self._derivs[key]

    def phi_trace(self, grid):
        return np.broadcast_to(self.phi(0.0, grid.w_coord), grid.w_cell.shape).astype(float)

    def psi_trace(self, grid, t, order=0):
        """Raw ``d^k psi/dt^k`` on the well faces."""
        return np.broadcast_to(self._d("psi", order)(t, grid.w_coord), grid.w_cell.shape).astype(float)

    def psi_projected(self, grid, t, order=0):
        vals = self.psi_trace(grid, t, order)
        return vals - _mean_on_well(grid, vals)

    def phi_projected(self, grid):
        vals = self.phi_trace(grid)
        return vals - _mean_on_well(grid, vals)

    def flux(self, t, order=0):
        if self.q is None:
            raise ConfigError("flux is only defined for IBVP-I programs")
        return self._d("q", order)(t)

    def delta_q(self, t):
        return self.flux(t) - self.q_s if self.q is not None else None

    def gamma_value(self, t, order=0):
        if self.gamma is None:
            raise ConfigError("gamma is only prescribed for IBVP-II programs")
        return self._d("gamma", order)(t)

    def dirichlet_trace(self, grid, t, order=0):
        """``psi + gamma`` on the well (IBVP-II)."""
        return self.psi_trace(grid, t, order) + self.gamma_value(t, order)

    def a_const(self, grid):
        return self.q_s / grid.volume

    @property
    def is_steady(self):
        same_trace = self.psi.sym == self.phi.sym
        if self.q is not None:
            return same_trace and not self.q.depends_on_t and self.q(0.0) == self.q_s
        return same_trace

    def describe(self):
        out = {"phi": str(self.phi), "q_s": self.q_s, "psi": str(self.psi)}
        if self.q is not None:
            out["q"] = str(self.q)
        else:
            out["gamma"] = str(self.gamma)
        return out


def scaled_program(bp, lam, volume=None):
    """Scale the deviations ``psi - phi``, ``Q - Q_s`` and ``gamma + A t`` by ``lam``."""
    from .expr import T

    psi = Expr(bp.phi.sym + lam * (bp.psi.sym - bp.phi.sym))
    if bp.q is not None:
        q = Expr(bp.q_s + lam * (bp.q.sym - bp.q_s))
        return BoundaryProgram(phi=bp.phi, q_s=bp.q_s, psi=psi, q=q)
    if volume is None:
        raise ConfigError("scaling an IBVP-II program needs the domain volume")
    a = bp.q_s / volume
    gamma = Expr(-a * T + lam * (bp.gamma.sym + a * T))
    return BoundaryProgram(phi=bp.phi, q_s=bp.q_s, psi=psi, gamma=gamma)


@dataclass
class PiTrajectory:
    """Sampled output of a transient run."""

    times: np.ndarray
    q_of_t: np.ndarray
    drawdown: np.ndarray
    j_of_t: np.ndarray
    grad_diff_norm: np.ndarray
    delta_q: np.ndarray
    pt_plus_a_norm: np.ndarray
    delta_p: np.ndarray
    q_volume: np.ndarray
    gamma: np.ndarray
    j_pss: float
    q_s: float
    drawdown_pss: float
    tau_c: float
    kind: str
    meta: dict = field(default_factory=dict)

    COLUMNS = ("t", "Q", "drawdown", "J", "grad_diff_norm", "delta_q", "pt_plus_a_norm")

    @property
    def undefined(self):
        return ~np.isfinite(self.j_of_t)

    def rows(self):
        cols = (
            self.times, self.q_of_t, self.drawdown, self.j_of_t,
            self.grad_diff_norm, self.delta_q, self.pt_plus_a_norm,
        )
        return [tuple(float(c[i]) for c in cols) for i in range(self.times.size)]

    def lemma_identity_residual(self):
        """Pointwise gap in ``J - J_s = Q dp/(dd dd_s) + dQ J_s/Q_s``."""
        lhs = self.j_of_t - self.j_pss
        rhs = self.q_of_t * self.delta_p / (self.drawdown * self.drawdown_pss) + (
            (self.q_of_t - self.q_s) * self.j_pss / self.q_s
        )
        return lhs - rhs


def compute_pi(q_of_t, drawdown, threshold=None):
    """Pointwise ``Q/drawdown``; samples with vanishing drawdown become NaN."""
    q = np.asarray(q_of_t, dtype=float)
    dd = np.asarray(drawdown, dtype=float)
    q, dd = np.broadcast_arrays(q, dd)
    if threshold is None:
        scale = np.max(np.abs(dd)) if dd.size else 0.0
        threshold = _UNDEFINED_RTOL * scale
    bad = (np.abs(dd) <= threshold) | (dd == 0)
    out = np.full(dd.shape, np.nan)
    np.divide(q, dd, out=out, where=~bad)
    return out


def _drawdown(grid, values, trace):
    return float(np.dot(grid.volumes, values)) / grid.volume - _mean_on_well(grid, trace)


def convergence_metrics(p, p_s, a_exp, p_prev=None, dt=None, a_const=None):
    """Distance of a transient field from the pseudo-steady one.

    Returns ``grad_diff_norm`` (``L^{2-a}`` norm of ``grad(p - p_s)``),
    ``delta_p`` (pseudo-steady minus transient drawdown) and
    ``pt_plus_a_norm`` (``int |p_t + A|^2`` from a backward difference,
    ``nan`` without a previous field) and ``c_phi_factor``, the factor
    ``(1 + max ||grad u||_{L^{2-a}})^a`` of the monotonicity constant with
    its unknown prefactor left out.
    """
    if p.grid is not p_s.grid:
        raise ConfigError("fields live on different grids")
    grid = p.grid
    diff = p - p_s
    gnorm = lp_norm_gradient(diff, 2.0 - a_exp)
    tr = p.well_trace if p.well_trace is not None else p.values[grid.w_cell]
    tr_s = p_s.well_trace if p_s.well_trace is not None else p_s.values[grid.w_cell]
    delta_p = _drawdown(grid, p_s.values, tr_s) - _drawdown(grid, p.values, tr)
    pta = float("nan")
    if p_prev is not None and dt is not None and a_const is not None:
        pt = (p.values - p_prev.values) / dt
        pta = float(np.dot(grid.volumes, (pt + a_const) ** 2))
    big = max(lp_norm_gradient(p, 2.0 - a_exp), lp_norm_gradient(p_s, 2.0 - a_exp))
    return {
        "grad_diff_norm": gnorm,
        "delta_p": delta_p,
        "pt_plus_a_norm": pta,
        "c_phi_factor": (1.0 + big) ** a_exp,
    }


def characteristic_time(grid, pss_drawdown, q_s):
    """``|U| * drawdown_PSS / Q_s``."""
    return grid.volume * pss_drawdown / q_s


def initial_pss(pss_sol):
    return ScalarField(pss_sol.w.grid, pss_sol.w.values.copy(), well_trace=pss_sol.w.well_trace)


def initial_bump(pss_sol, amplitude, center=None, width=None):
    """Pseudo-steady profile plus a Gaussian bump."""
    grid = pss_sol.w.grid
    x = grid.centers
    lo, hi = x.min(axis=0), x.max(axis=0)
    c = 0.5 * (lo + hi) if center is None else np.atleast_1d(np.asarray(center, dtype=float))
    w = 0.15 * float(np.max(hi - lo)) if width is None else float(width)
    bump = amplitude * np.exp(-np.sum((x - c) ** 2, axis=1) / (2.0 * w * w))
    return ScalarField(grid, pss_sol.w.values + bump, well_trace=pss_sol.w.well_trace)


def initial_constant(grid, value):
    return ScalarField(grid, np.full(grid.n_cells, float(value)))


def _steady_reference(grid, kernel, bp, pss, tol):
    if pss is None:
        pss = solve_basic_profile(PssProblem(grid, kernel, bp.phi_trace(grid), bp.q_s), tol=tol)
    j_pss = pss_pi(pss, bp.phi_trace(grid), bp.q_s)
    dd_s = bp.q_s / j_pss
    return pss, j_pss, dd_s


def _step_count(dt, t_end):
    if dt <= 0 or t_end <= 0:
        raise ConfigError("dt and t_end must be positive")
    n = max(1, int(math.ceil(t_end / dt - 1e-9)))
    return n, t_end / n


def _state(grid, kernel, u, u_old, trace, vols, dt, jac):
    """Cell residual, conductances and Jacobian conductances at ``u``.

    The Jacobian conductance is ``T K (1 + e n^2)`` with ``e = xi K'/K`` and
    ``n`` the normal share of the face gradient, which is exact on 1-D grids.
    """
    gf, gw = grid.face_gradients(u, trace)
    kf, ef = kappa_elasticity(kernel, gf)
    kw, ew = kappa_elasticity(kernel, gw)
    cf, cw = grid.f_trans * kf, grid.w_trans * kw
    if jac:
        if grid.dim == 1:
            nf = nw = 1.0
        else:
            dn = (u[grid.f_right] - u[grid.f_left]) / grid.f_dist
            dn_w = (u[grid.w_cell] - trace) / grid.w_dist
            with np.errstate(divide="ignore", invalid="ignore"):
                nf = np.where(gf > 0, (dn / gf) ** 2, 1.0)
                nw = np.where(gw > 0, (dn_w / gw) ** 2, 1.0)
        jf, jw = cf * (1.0 + ef * nf), cw * (1.0 + ew * nw)
    else:
        jf, jw = cf, cw
    ff, fw = asm.face_fluxes(grid, u, trace, cf, cw)
    res = vols * (u - u_old) / dt + grid.divergence(ff, fw) * grid.volumes
    return res, cf, cw, jf, jw


def _norm(res, kind, q_t, cw, u, trace, w_cell):
    if kind != "ibvp1":
        return float(np.linalg.norm(res))
    return float(np.hypot(np.linalg.norm(res), np.dot(cw, u[w_cell] - trace) - q_t))


def _bordered_solve(lu, grid, cw, rhs_u, rhs_g):
    """Solve ``[[M, -c], [c^T, -sum c]] (du, dg) = (rhs_u, rhs_g)`` by Schur complement."""
    col = np.zeros(grid.n_cells)
    np.add.at(col, grid.w_cell, cw)
    y1 = lu.solve(rhs_u)
    y2 = lu.solve(col)
    dg = (rhs_g - np.dot(col, y1)) / (np.dot(col, y2) - cw.sum())
    return y1 + dg * y2, float(dg)


def _run(grid, kernel, p0, bp, dt, t_end, pss, tol, max_iter, stride, kind, keep_fields, method="newton"):
    if bp.kind != kind:
        raise ConfigError(f"boundary program is {bp.kind}, the solver expects {kind}")
    pss, j_pss, dd_s = _steady_reference(grid, kernel, bp, pss, min(tol, 1e-11))
    a_const = bp.a_const(grid)
    n_steps, dt = _step_count(dt, t_end)
    stride = max(1, int(stride))
    nc = grid.n_cells
    vols = grid.volumes
    w_cell = grid.w_cell
    linear = kernel.is_darcy
    if method not in ("newton", "picard"):
        raise ConfigError(f"unknown linearization {method!r}")
    jac = method == "newton"
    _lu_cache = {}

    u = np.array(p0.values, dtype=float)
    if kind == "ibvp1":
        gamma = float(np.mean(u[w_cell]))
        if p0.well_trace is not None:
            gamma = _mean_on_well(grid, p0.well_trace)
    rec = {k: [] for k in ("t", "q", "dd", "g", "dq", "pta", "dp", "qv", "gamma", "cphi")}
    fields = []
    a_exp = kernel.a_exp

    for n in range(1, n_steps + 1):
        t = n * dt
        u_old = u.copy()
        if kind == "ibvp1":
            psi = bp.psi_projected(grid, t)
            q_t = bp.flux(t)
            trace = gamma + psi
        else:
            psi = bp.dirichlet_trace(grid, t)
            trace = psi
            gamma = None
        history = []
        res, cf, cw, jf, jw = _state(grid, kernel, u, u_old, trace, vols, dt, jac)
        rnorm = _norm(res, kind, q_t if kind == "ibvp1" else None, cw, u, trace, w_cell)
        for it in range(1, max_iter + 1):
            lu = _lu_cache.get("lu") if linear else None
            if lu is None:
                lu = splu(asm.diffusion_matrix(grid, jf, jw, diag_shift=vols / dt).tocsc())
                if linear:
                    _lu_cache["lu"] = lu
            if kind == "ibvp1":
                r_g = float(np.dot(cw, u[w_cell] - trace)) - q_t
                du, dg = _bordered_solve(lu, grid, jw, -res, -r_g)
            else:
                du, dg = lu.solve(-res), 0.0
            if not (np.all(np.isfinite(du)) and np.isfinite(dg)):
                raise SolverError("singular linear system", history=history, step=n)
            lam = 1.0
            while True:
                u_try = u + lam * du
                g_try = gamma + lam * dg if kind == "ibvp1" else None
                tr_try = g_try + psi if kind == "ibvp1" else psi
                state = _state(grid, kernel, u_try, u_old, tr_try, vols, dt, jac)
                r_try = _norm(state[0], kind, q_t if kind == "ibvp1" else None, state[2], u_try, tr_try, w_cell)
                if linear or r_try <= rnorm or lam < 1.0 / 64:
                    break
                lam *= 0.5
            change = lam * max(np.max(np.abs(du)), abs(dg))
            scale = np.max(np.abs(u_try)) + np.max(np.abs(u_try - u_old)) + 1e-300
            u, trace, rnorm = u_try, tr_try, r_try
            res, cf, cw, jf, jw = state
            if kind == "ibvp1":
                gamma = g_try
            history.append(change / scale)
            if linear or change <= tol * scale:
                break
        else:
            raise SolverError(
                f"{method} iteration did not converge at step {n} (t={t:.6g})", history=history, step=n
            )
        # flux leaving through the well with the mobility of the final state
        q_meas = float(np.dot(cw, u[w_cell] - trace))
        q_vol = -float(np.dot(vols, u - u_old)) / dt
        if n % stride and n != n_steps:
            continue
        dd = _drawdown(grid, u, trace)
        p_s = pss.w.values - a_const * t
        ps_trace = pss.w.well_trace - a_const * t
        p_field = ScalarField(grid, u, well_trace=trace, time=t)
        metrics = convergence_metrics(
            p_field,
            ScalarField(grid, p_s, well_trace=ps_trace),
            a_exp,
            p_prev=ScalarField(grid, u_old),
            dt=dt,
            a_const=a_const,
        )
        rec["t"].append(t)
        rec["q"].append(q_meas)
        rec["qv"].append(q_vol)
        rec["dd"].append(dd)
        rec["g"].append(metrics["grad_diff_norm"])
        rec["dp"].append(metrics["delta_p"])
        rec["pta"].append(metrics["pt_plus_a_norm"])
        rec["cphi"].append(metrics["c_phi_factor"])
        rec["dq"].append(q_meas - bp.q_s)
        rec["gamma"].append(gamma if kind == "ibvp1" else bp.gamma_value(t))
        if keep_fields:
            fields.append(p_field)

    arr = {k: np.asarray(v, dtype=float) for k, v in rec.items()}
    traj = PiTrajectory(
        times=arr["t"],
        q_of_t=arr["q"],
        drawdown=arr["dd"],
        j_of_t=compute_pi(arr["q"], arr["dd"]),
        grad_diff_norm=arr["g"],
        delta_q=arr["dq"],
        pt_plus_a_norm=arr["pta"],
        delta_p=arr["dp"],
        q_volume=arr["qv"],
        gamma=arr["gamma"],
        j_pss=j_pss,
        q_s=bp.q_s,
        drawdown_pss=dd_s,
        tau_c=characteristic_time(grid, dd_s, bp.q_s) if bp.q_s else float("nan"),
        kind=kind,
        meta={"dt": dt, "steps": n_steps, "fields": fields, "c_phi_factor": arr["cphi"]},
    )
    final = ScalarField(grid, u, well_trace=trace, time=n_steps * dt)
    return traj, final


def run_ibvp1(
    grid, kernel, p0, bp, dt, t_end, pss=None, tol=1e-10, max_iter=100, stride=1, keep_fields=False, method="newton"
):
    """Total-flux well condition with the split trace ``gamma(t) + psi``."""
    return _run(grid, kernel, p0, bp, dt, t_end, pss, tol, max_iter, stride, "ibvp1", keep_fields, method)


def run_ibvp2(
    grid, kernel, p0, bp, dt, t_end, pss=None, tol=1e-10, max_iter=100, stride=1, keep_fields=False, method="newton"
):
    """Dirichlet well condition ``psi + gamma``."""
    return _run(grid, kernel, p0, bp, dt, t_end, pss, tol, max_iter, stride, "ibvp2", keep_fields, method)
