"""Ideal-gas flow with the two-term Forchheimer law.

The pressure solves ``p_t = div(K2(p|grad p|) p grad p)`` with
``K2(xi) = 2/(alpha + sqrt(alpha^2 + 4 beta xi))``, ``p = B - A t`` on the
well and zero mass flux on the exterior boundary.

Face pressures are arithmetic means, so ``p_f (p_i - p_j) = (p_i^2 - p_j^2)/2``
holds exactly.  With this choice the discrete auxiliary pressure
``p0 = sqrt((B - A t)^2 + 2 W_h)`` built from the discrete gas profile
``W_h`` reproduces the profile fluxes face by face, which makes the flux
identity for ``p0`` exact on 1-D grids.

The mass flux ``Q`` is positive for production (gas leaving through the well).
"""

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from .errors import ConfigError, DegenerateDataError, DomainError, SolverError
from .grid import ScalarField
from .kernel import Kernel, kappa_elasticity, two_term
from .pss import solve_gas_profile

log = logging.getLogger(__name__)

__all__ = [
    "GasScenario",
    "GasTrajectory",
    "run_gas",
    "auxiliary_pressure",
    "source_f0",
    "gas_pi",
    "gas_pss_pi",
    "gas_flux",
    "p2_drawdown",
    "pi_on_history",
    "darcy_identity_residual",
    "b_stability_sweep",
    "SweepResult",
    "STOP_FRACTION",
]

STOP_FRACTION = 1.0 - 1e-3


@dataclass(eq=False)
class GasScenario:
    """Parameters of one gas run.

    ``phi0`` perturbs the initial pressure ``sqrt(B^2 + phi0)``; ``None``
    selects ``phi0 = 2 W`` so the run starts from the auxiliary pressure.
    """

    grid: object
    alpha_f: float
    beta_f: float
    b_reserve: float
    a_rate: float
    dt: float
    t_end: float
    phi0: object = None
    stride: int = 1
    tol: float = 1e-12
    max_iter: int = 30
    slow_iter: int = 8
    dt_min: float = None
    approach: float = 0.1

    def __post_init__(self):
        for name in ("alpha_f", "beta_f", "b_reserve", "a_rate", "dt", "t_end"):
            val = float(getattr(self, name))
            if not math.isfinite(val):
                raise ConfigError(f"{name} must be finite")
            setattr(self, name, val)
        if self.alpha_f <= 0 or self.beta_f < 0:
            raise ConfigError("gas runs need alpha > 0 and beta >= 0")
        if self.b_reserve <= 0:
            raise ConfigError("B must be positive")
        if self.a_rate < 0:
            raise ConfigError("A must be non-negative")
        if self.dt <= 0 or self.t_end <= 0:
            raise ConfigError("dt and t_end must be positive")
        if self.a_rate > 0 and self.t_end > STOP_FRACTION * self.t_crit * (1 + 1e-12):
            raise ConfigError(
                f"t_end={self.t_end} exceeds the admissible horizon {STOP_FRACTION * self.t_crit:.6g}"
            )
        if self.dt_min is None:
            self.dt_min = self.dt * 2.0**-40

    @property
    def t_crit(self):
        return self.b_reserve / self.a_rate if self.a_rate > 0 else math.inf

    @property
    def kernel(self):
        return Kernel(two_term(self.alpha_f, self.beta_f))


@dataclass
class GasTrajectory:
    times: np.ndarray
    mass_flux: np.ndarray
    p2_drawdown: np.ndarray
    j_of_t: np.ndarray
    j_p0: float
    q0: float
    t_crit: float
    t_crit_refined: float
    max_p_minus_p0: np.ndarray
    ordering: np.ndarray
    min_principle_margin: np.ndarray
    min_p: np.ndarray
    max_grad: np.ndarray
    iterations: np.ndarray
    dt_used: np.ndarray
    meta: dict = field(default_factory=dict)

    COLUMNS = ("t", "Q", "p2_drawdown", "J", "J_p0", "max_abs_p_minus_p0")

    @property
    def ratio(self):
        return self.j_of_t / self.j_p0

    def rows(self):
        return [
            (float(t), float(q), float(d), float(j), float(self.j_p0), float(g))
            for t, q, d, j, g in zip(
                self.times, self.mass_flux, self.p2_drawdown, self.j_of_t, self.max_p_minus_p0
            )
        ]


# -- auxiliary pressure -----------------------------------------------------------


def _w_values(w):
    return w.values if isinstance(w, ScalarField) else np.asarray(w, dtype=float)


def auxiliary_pressure(w, B, A, t):
    """``sqrt((B - A t)^2 + 2 W)``; the well trace is ``B - A t``."""
    vals = _w_values(w)
    rad = (B - A * t) ** 2 + 2.0 * vals
    if np.any(rad <= 0):
        raise DomainError(f"auxiliary pressure radicand is not positive at t={t}")
    p0 = np.sqrt(rad)
    if isinstance(w, ScalarField):
        trace = None if w.well_trace is None else np.sqrt((B - A * t) ** 2 + 2.0 * w.well_trace)
        return ScalarField(w.grid, p0, well_trace=trace, time=float(t))
    return p0


def source_f0(w, B, A, t):
    """``A (1 - (B - A t)/sqrt((B - A t)^2 + 2 W))``."""
    vals = _w_values(w)
    rad = (B - A * t) ** 2 + 2.0 * vals
    if np.any(rad <= 0):
        raise DomainError(f"auxiliary pressure radicand is not positive at t={t}")
    f0 = A * (1.0 - (B - A * t) / np.sqrt(rad))
    if isinstance(w, ScalarField):
        return ScalarField(w.grid, f0, time=float(t))
    return f0


def _f0_integral(w_vals, B, A, t):
    """``int_0^t f0 dtau = A t + p0(t) - p0(0)``."""
    return A * t + np.sqrt((B - A * t) ** 2 + 2.0 * w_vals) - np.sqrt(B * B + 2.0 * w_vals)


# -- fluxes and indices ---------------------------------------------------------------


def _face_terms(grid, kernel, p, g_well, jac=True):
    """Face mobilities ``T K2 p_f`` and Newton weights ``T K2 (1 + e)``."""
    g_well = np.broadcast_to(np.asarray(g_well, dtype=float), grid.w_cell.shape)
    pl, pr = p[grid.f_left], p[grid.f_right]
    pc = p[grid.w_cell]
    pf = 0.5 * (pl + pr)
    pw = 0.5 * (pc + g_well)
    gf, gw = grid.face_gradients(p, g_well)
    kf, ef = kappa_elasticity(kernel, np.abs(pf) * gf)
    kw, ew = kappa_elasticity(kernel, np.abs(pw) * gw)
    if grid.dim == 1 or not jac:
        nf = nw = 1.0
    else:
        dn = (pr - pl) / grid.f_dist
        dn_w = (pc - g_well) / grid.w_dist
        with np.errstate(divide="ignore", invalid="ignore"):
            nf = np.where(gf > 0, (dn / gf) ** 2, 1.0)
            nw = np.where(gw > 0, (dn_w / gw) ** 2, 1.0)
    return (
        grid.f_trans * kf * pf,
        grid.w_trans * kw * pw,
        grid.f_trans * kf * (1.0 + ef * nf),
        grid.w_trans * kw * (1.0 + ew * nw),
    )


def gas_flux(grid, kernel, p, g_well):
    """Produced mass flux through the well."""
    g_well = np.broadcast_to(np.asarray(g_well, dtype=float), grid.w_cell.shape)
    _, cw, _, _ = _face_terms(grid, kernel, p, g_well, jac=False)
    return float(np.dot(cw, p[grid.w_cell] - g_well))


def p2_drawdown(grid, p, g_well):
    """``mean_U p^2 - mean_Gamma_i p^2``."""
    g_well = np.broadcast_to(g_well, grid.w_cell.shape)
    return float(np.dot(grid.volumes, p * p)) / grid.volume - float(
        np.dot(grid.w_area, g_well * g_well)
    ) / grid.well_measure


def gas_pi(q, dd, rtol=1e-12):
    """Pointwise ``Q / p2_drawdown`` with NaN where the drawdown vanishes."""
    q, dd = np.broadcast_arrays(np.asarray(q, float), np.asarray(dd, float))
    scale = np.max(np.abs(dd)) if dd.size else 0.0
    bad = (np.abs(dd) <= rtol * scale) | (dd == 0)
    out = np.full(dd.shape, np.nan)
    np.divide(q, dd, out=out, where=~bad)
    return out


def gas_pss_pi(w, q0):
    """``Q0 / ((1/|U|) int 2 W)``."""
    grid = w.grid
    den = 2.0 * float(np.dot(grid.volumes, w.values)) / grid.volume
    if den == 0 or abs(den) <= 1e-14 * max(np.max(np.abs(w.values)), 1e-300):
        raise DegenerateDataError("gas profile is zero; J[p0] is undefined")
    return q0 / den


def pi_on_history(grid, kernel, times, fields, B, A):
    """Run the PI machinery on an arbitrary pressure history."""
    q = np.array([gas_flux(grid, kernel, p, B - A * t) for t, p in zip(times, fields)])
    dd = np.array([p2_drawdown(grid, p, B - A * t) for t, p in zip(times, fields)])
    return q, dd, gas_pi(q, dd)


# -- time stepping ---------------------------------------------------------------------


def _newton_step(grid, kernel, p_old, g_well, dt, tol, max_iter, guess=None):
    """Backward-Euler step by damped Newton; returns ``(p, iterations)`` or ``(None, it)``."""
    vols = grid.volumes
    n = grid.n_cells
    fl, fr, wc = grid.f_left, grid.f_right, grid.w_cell

    def residual(p):
        cf, cw, mf, mw = _face_terms(grid, kernel, p, g_well)
        flux = cf * (p[fl] - p[fr])
        res = vols * (p - p_old) / dt
        np.add.at(res, fl, flux)
        np.add.at(res, fr, -flux)
        np.add.at(res, wc, cw * (p[wc] - g_well))
        return res, mf, mw

    g_well = np.broadcast_to(np.asarray(g_well, dtype=float), wc.shape)
    p = p_old.copy() if guess is None or np.any(guess <= 0) else guess.copy()
    res, mf, mw = residual(p)
    rnorm = np.linalg.norm(res)
    scale = max(np.max(np.abs(p_old)), np.max(np.abs(g_well)))
    for it in range(1, max_iter + 1):
        # d(flux_f)/dp_l = mf p_l, d(flux_f)/dp_r = -mf p_r
        rows = np.concatenate([fl, fl, fr, fr, wc, np.arange(n)])
        cols = np.concatenate([fl, fr, fl, fr, wc, np.arange(n)])
        vals = np.concatenate(
            [mf * p[fl], -mf * p[fr], -mf * p[fl], mf * p[fr], mw * p[wc], vols / dt]
        )
        jac = sparse.csc_matrix((vals, (rows, cols)), shape=(n, n))
        try:
            dp = splu(jac).solve(-res)
        except RuntimeError:
            return None, it
        if not np.all(np.isfinite(dp)):
            return None, it
        lam = 1.0
        while True:
            p_try = p + lam * dp
            if np.all(p_try > 0):
                r_try, mf_t, mw_t = residual(p_try)
                r_norm_try = np.linalg.norm(r_try)
                if r_norm_try <= rnorm or lam < 1.0 / 64:
                    break
            elif lam < 1.0 / 1024:
                return None, it
            lam *= 0.5
        p, res, mf, mw, rnorm = p_try, r_try, mf_t, mw_t, r_norm_try
        if lam * np.max(np.abs(dp)) <= tol * scale:
            return p, it
    return None, max_iter


def run_gas(sc, keep_history=True, progress=None):
    """Integrate one gas scenario.

    Returns ``(trajectory, history)`` where ``history`` is a list of
    ``(t, values)`` at the configured stride (always including ``t = 0`` and
    the final step).
    """
    grid, kernel = sc.grid, sc.kernel
    B, A = sc.b_reserve, sc.a_rate
    prof = solve_gas_profile(grid, sc.alpha_f, sc.beta_f, A) if A > 0 else None
    if prof is not None:
        w = prof.w
    else:
        w = ScalarField(grid, np.zeros(grid.n_cells), well_trace=np.zeros(grid.w_cell.size))
    w_vals = w.values
    if sc.phi0 is None:
        phi0 = 2.0 * w_vals
    else:
        phi0 = _w_values(sc.phi0) * np.ones(grid.n_cells)
    if np.any(phi0 < 0) or np.any(B * B + phi0 <= 0):
        raise ConfigError("initial pressure sqrt(B^2 + phi0) must be positive with phi0 >= 0")
    p = np.sqrt(B * B + phi0)
    p_init_min = float(np.min(p))

    q0 = grid.volume * A
    try:
        j_p0 = gas_pss_pi(w, q0)
    except DegenerateDataError:
        j_p0 = float("nan")
    t_crit = sc.t_crit
    w_max = float(np.max(w_vals))
    t_ref = (B - math.sqrt(2.0 * w_max)) / A if A > 0 else math.inf

    rec = {k: [] for k in ("t", "q", "dd", "gap", "ord", "mp", "minp", "grad", "it", "dt")}
    history = []

    def record(t, p, it, dt_used):
        g = B - A * t
        p0 = np.sqrt(g * g + 2.0 * w_vals)
        rec["t"].append(t)
        rec["q"].append(gas_flux(grid, kernel, p, g))
        rec["dd"].append(p2_drawdown(grid, p, g))
        rec["gap"].append(float(np.max(np.abs(p - p0))))
        rec["ord"].append(float(np.max(p - p0)))
        rec["mp"].append(float(np.min(p)) - min(p_init_min, g))
        rec["minp"].append(float(np.min(p)))
        gf, gw = grid.face_gradients(p, np.full(grid.w_cell.size, g))
        rec["grad"].append(float(max(np.max(gf), np.max(gw))))
        rec["it"].append(it)
        rec["dt"].append(dt_used)
        if keep_history:
            history.append((t, p.copy()))

    record(0.0, p, 0, 0.0)
    t, step = 0.0, 0
    rate = np.full(grid.n_cells, -A)
    dt_cur = sc.dt
    eps_t = 1e-12 * sc.t_end
    while t < sc.t_end - eps_t:
        dt_try = min(dt_cur, sc.t_end - t)
        if math.isfinite(t_crit):
            # keep several steps between t and T_crit
            dt_try = min(dt_try, max(sc.approach * (t_crit - t), sc.dt_min))
        while True:
            g_new = B - A * (t + dt_try)
            p_new, it = _newton_step(
                grid, kernel, p, g_new, dt_try, sc.tol, sc.max_iter, guess=p + dt_try * rate
            )
            if p_new is not None and np.all(p_new > 0):
                break
            dt_try *= 0.5
            if dt_try < sc.dt_min:
                raise SolverError(
                    f"gas step failed at t={t:.6g}: no convergence or loss of positivity down to dt={dt_try:.3g}",
                    step=step + 1,
                )
            dt_cur = dt_try
        t += dt_try
        step += 1
        rate = (p_new - p) / dt_try
        p = p_new
        if it > sc.slow_iter:
            dt_cur = 0.5 * dt_try
        elif it <= sc.slow_iter // 2:
            dt_cur = min(sc.dt, 2.0 * dt_cur)
        last = t >= sc.t_end - eps_t
        if step % max(1, int(sc.stride)) == 0 or last:
            record(t, p, it, dt_try)
        if progress is not None:
            progress(t, step)

    arr = {k: np.asarray(v, dtype=float) for k, v in rec.items()}
    traj = GasTrajectory(
        times=arr["t"],
        mass_flux=arr["q"],
        p2_drawdown=arr["dd"],
        j_of_t=gas_pi(arr["q"], arr["dd"]),
        j_p0=j_p0,
        q0=q0,
        t_crit=t_crit,
        t_crit_refined=t_ref,
        max_p_minus_p0=arr["gap"],
        ordering=arr["ord"],
        min_principle_margin=arr["mp"],
        min_p=arr["minp"],
        max_grad=arr["grad"],
        iterations=arr["it"],
        dt_used=arr["dt"],
        meta={"steps": step, "w": w, "profile_iterations": getattr(prof, "iterations", 0)},
    )
    return traj, history


# -- Darcy identity ----------------------------------------------------------------------


def _trapz(times, vals):
    return np.trapezoid(vals, x=times, axis=0)


def darcy_identity_residual(history, w, B, A, T=None, alpha=1.0, beta=0.0):
    """Both sides of the integral identity for ``p - p0`` in the Darcy case.

    ``history`` is a list of ``(t, p_values)`` starting at ``t = 0`` with
    ``p(., 0) = p0(., 0)``.  Time integrals use the composite trapezoid rule
    over the stored samples; the gradient term uses the discrete Dirichlet
    form of the grid (zero trace on the well).
    """
    if beta != 0:
        raise ConfigError("the identity check is limited to the Darcy case (beta = 0)")
    grid = w.grid
    times = np.array([h[0] for h in history], dtype=float)
    if times.size < 2 or times[0] != 0.0:
        raise ConfigError("history must start at t = 0 and hold at least two samples")
    if T is None:
        T = times[-1]
    if A > 0 and T >= B / A:
        raise ConfigError("T must lie below T_crit")
    keep = times <= T * (1 + 1e-12)
    times = times[keep]
    P = np.array([h[1] for h, k in zip(history, keep) if k])
    wv = w.values
    P0 = np.sqrt((B - A * times[:, None]) ** 2 + 2.0 * wv[None, :])
    vol = grid.volumes

    lhs1 = float(_trapz(times, (P + P0) * (P - P0) ** 2 @ vol))
    S = _trapz(times, P * P - P0 * P0)
    dirichlet = float(np.dot(grid.f_trans, (S[grid.f_left] - S[grid.f_right]) ** 2)) + float(
        np.dot(grid.w_trans, S[grid.w_cell] ** 2)
    )
    lhs2 = dirichlet / (4.0 * alpha)
    F = _f0_integral(wv[None, :], B, A, times[:, None])
    rhs = float(_trapz(times, ((P0 * P0 - P * P) * F) @ vol))
    lhs = lhs1 + lhs2
    den = max(abs(lhs), abs(rhs))
    rel = abs(lhs - rhs) / den if den > 0 else 0.0
    # ratio from the comparison proposition
    f_tot = _f0_integral(wv, B, A, T)
    num = float(np.dot(vol, S)) ** 2
    fden = float(np.dot(vol, f_tot**2))
    return {
        "lhs1": lhs1,
        "lhs2": lhs2,
        "rhs": rhs,
        "rel_residual": rel,
        "comparison_ratio": num / fden if fden > 0 else float("nan"),
    }


# -- B sweep -------------------------------------------------------------------------------


@dataclass
class SweepResult:
    b_values: np.ndarray
    gap_pressure: np.ndarray
    gap_pi: np.ndarray
    ordering: np.ndarray
    slope: float
    intercept: float

    COLUMNS = ("B", "gap_pressure", "gap_pi", "max_p_minus_p0")

    def rows(self):
        return [
            (float(b), float(gp), float(gj), float(o))
            for b, gp, gj, o in zip(self.b_values, self.gap_pressure, self.gap_pi, self.ordering)
        ]


def _sweep_one(args):
    base, B, T0 = args
    sc = GasScenario(
        grid=base.grid,
        alpha_f=base.alpha_f,
        beta_f=0.0,
        b_reserve=B,
        a_rate=base.a_rate,
        dt=base.dt,
        t_end=T0,
        phi0=None,
        stride=1,
        tol=base.tol,
        max_iter=base.max_iter,
        slow_iter=base.slow_iter,
    )
    traj, _ = run_gas(sc, keep_history=False)
    rel = np.abs(traj.j_of_t[1:] - traj.j_p0) / traj.j_p0
    return float(np.max(traj.max_p_minus_p0)), float(np.max(rel)), float(np.max(traj.ordering))


def b_stability_sweep(base, b_values, T0, threads=1):
    """Darcy runs over ``B`` with ``p(., 0) = p0(., 0)``; fits the log-log slope of the pressure gap."""
    b_values = np.asarray(sorted(float(b) for b in b_values))
    if b_values.size < 2:
        raise ConfigError("the sweep needs at least two B values")
    if base.a_rate <= 0:
        raise ConfigError("the sweep needs A > 0")
    for B in b_values:
        if T0 > 0.5 * B / base.a_rate:
            raise ConfigError(f"T0={T0} exceeds T_crit/2 for B={B}")
    jobs = [(base, float(B), float(T0)) for B in b_values]
    if threads and threads > 1:
        with ProcessPoolExecutor(max_workers=int(threads)) as ex:
            out = list(ex.map(_sweep_one, jobs))
    else:
        out = [_sweep_one(j) for j in jobs]
    gp = np.array([o[0] for o in out])
    gj = np.array([o[1] for o in out])
    order = np.array([o[2] for o in out])
    slope, intercept = np.polyfit(np.log(b_values), np.log(gp), 1)
    return SweepResult(b_values, gp, gj, order, float(slope), float(intercept))
