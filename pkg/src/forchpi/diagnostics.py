"""Boundary-data functionals and numerical assumption reports.

Every functional is evaluated from a :class:`~forchpi.transient.BoundaryProgram`
on a fixed grid.  Domain extensions ``Psi``, ``Phi`` of the well traces are
discrete harmonic extensions (no flux on the exterior boundary).  Because
extension is linear, ``Psi_t`` and ``Psi_tt`` are extensions of the exact
time derivatives of the trace expressions; nothing is finite-differenced.

IBVP-I programs use mean-zero traces (the constant part lives in the unknown
``gamma``).  IBVP-II programs extend the full trace ``psi + gamma``.

Verdict conventions
-------------------
``limsup`` is replaced by the supremum over the last ``tail_fraction`` of the
horizon.  A boundedness clause is *satisfied-numerically* when the tail
supremum does not exceed the supremum over the earlier samples by more than
``growth_rtol``.  A decay clause is satisfied when the tail supremum is below
``decay_threshold``; if it is above but still shrinking, the verdict is
*inconclusive*.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_simpson, simpson

from .errors import ConfigError
from .grid import ScalarField, lp_norm_gradient
from .pss import HarmonicExtension, PssProblem, solve_basic_profile

log = logging.getLogger(__name__)

__all__ = [
    "BoundaryDiagnostics",
    "AssumptionReport",
    "SATISFIED",
    "VIOLATED",
    "INCONCLUSIVE",
    "f1",
    "f2",
    "a1_functional",
    "a1_limsup",
    "a2_functional",
    "a3_functional",
    "dirichlet_functionals",
    "build_report",
    "default_alpha",
]

SATISFIED = "satisfied-numerically"
VIOLATED = "violated"
INCONCLUSIVE = "inconclusive"
_RANK = {SATISFIED: 0, INCONCLUSIVE: 1, VIOLATED: 2}

# both grid families discretize planar (2-D) domains
_SPACE_DIM = 2


def default_alpha(a_exp, n=_SPACE_DIM):
    """Smallest admissible exponent ``n a/(2-a)``, but at least 3."""
    return max(3.0, n * a_exp / (2.0 - a_exp))


def _int_pow(grid, values, p):
    return float(np.dot(grid.volumes, np.abs(values) ** p))


def _grad_pow(field, p):
    """``int |grad f|^p``."""
    g = np.linalg.norm(field.gradient(), axis=1)
    return float(np.dot(field.grid.volumes, g**p))


class BoundaryDiagnostics:
    """Evaluation context: grid, kernel, program and the steady profile.

    Parameters
    ----------
    grid, kernel, bp
        Domain, permeability kernel and boundary program.
    pss : PssSolution, optional
        Basic profile for ``(phi, Q_s)``; solved here when omitted.
    p0_mismatch : float
        ``(1/|U|) int (p(x,0) - p_s(x,0)) dx`` entering ``F_1``.
    """

    def __init__(self, grid, kernel, bp, pss=None, p0_mismatch=0.0, n_quad=2048):
        self.grid, self.kernel, self.bp = grid, kernel, bp
        self.kind = bp.kind
        self.a = kernel.a_exp
        self.p0_mismatch = float(p0_mismatch)
        self.n_quad = int(n_quad)
        if pss is None:
            pss = solve_basic_profile(PssProblem(grid, kernel, bp.phi_trace(grid), bp.q_s))
        self.w = pss.w
        self.a_const = bp.q_s / grid.volume
        self._ext = HarmonicExtension(grid)
        phi = bp.phi_projected(grid) if self.kind == "ibvp1" else bp.phi_trace(grid)
        self.phi_ext = self._ext(phi)
        self._cache = {}

    # -- extended fields -------------------------------------------------
    def _trace(self, t, order):
        bp, grid = self.bp, self.grid
        if self.kind == "ibvp1":
            return bp.psi_projected(grid, t, order)
        return bp.dirichlet_trace(grid, t, order)

    def psi(self, t, order=0):
        key = (float(t), order)
        if key not in self._cache:
            if len(self._cache) > 4096:
                self._cache.clear()
            self._cache[key] = self._ext(self._trace(t, order))
        return self._cache[key]

    def delta_psi(self, t):
        return self.psi(t) - self.phi_ext

    def delta_q(self, t):
        return 0.0 if self.kind != "ibvp1" else float(self.bp.flux(t) - self.bp.q_s)

    def q_prime(self, t):
        return 0.0 if self.kind != "ibvp1" else float(self.bp.flux(t, 1))

    # -- admissibility ------------------------------------------------------
    def _b(self, alpha):
        a = self.a
        lo = _SPACE_DIM * a / (2.0 - a)
        if not np.isfinite(alpha) or alpha < lo or alpha <= max(a, 0.0):
            raise ConfigError(f"alpha={alpha} is below the admissible threshold {max(lo, a):.6g}")
        return alpha * (2.0 - a) / 2.0

    # -- IBVP-I functionals -------------------------------------------------
    def _flux_integral(self, t):
        """``int_0^t Delta_Q`` by composite Simpson."""
        if self.kind != "ibvp1" or t == 0:
            return 0.0
        taus = np.linspace(0.0, t, self.n_quad + 1)
        return float(simpson(self.bp.flux(taus) - self.bp.q_s, x=taus))

    def f1(self, t, flux_integral=None):
        vol = self.grid.volume
        if flux_integral is None:
            flux_integral = self._flux_integral(t)
        dpsi = float(np.dot(self.grid.volumes, self.delta_psi(t).values))
        return flux_integral / vol + dpsi / vol - self.p0_mismatch

    def f1_prime(self, t):
        psi_t = self.psi(t, 1).values
        return (self.delta_q(t) + float(np.dot(self.grid.volumes, psi_t))) / self.grid.volume

    def f2(self, t, f1_value=None):
        a = self.a
        f1v = self.f1(t) if f1_value is None else f1_value
        return (
            1.0
            + lp_norm_gradient(self.w, 2.0 - a)
            + abs(f1v)
            + _grad_pow(self.delta_psi(t), 1.0)
            + abs(self.delta_q(t)) ** (1.0 / (1.0 - a))
        )

    def a1(self, alpha, t):
        a, b = self.a, self._b(alpha)
        grid = self.grid
        psi_t = self.psi(t, 1).values
        dq = self.delta_q(t)
        return (
            lp_norm_gradient(self.w, b) ** (alpha - a)
            + lp_norm_gradient(self.delta_psi(t), b) ** (alpha - a)
            + abs(dq + float(np.dot(grid.volumes, psi_t))) ** alpha
            + _int_pow(grid, psi_t, alpha) ** ((alpha - a) / (alpha * (1.0 - a)))
            + abs(dq) ** ((alpha - a) / (1.0 - a))
        )

    def a2_terms(self, t, alpha, c=1.0, f1_value=None):
        """Terms of ``A_2``; the ``C |F_1|^(2-a)`` part is returned separately."""
        a, b = self.a, self._b(alpha)
        grid = self.grid
        psi_t = self.psi(t, 1)
        dq, qp = abs(self.delta_q(t)), abs(self.q_prime(t))
        f1v = self.f1(t) if f1_value is None else f1_value
        base = (
            _grad_pow(self.w, 2.0 - a)
            + _grad_pow(psi_t, 2.0)
            + _grad_pow(self.delta_psi(t), 2.0 - a)
            + _int_pow(grid, psi_t.values, 1.0) ** (2.0 - a)
            + _int_pow(grid, psi_t.values, 2.0)
            + _int_pow(grid, psi_t.values, b)
            + dq + qp + dq**b + qp**b
        )
        f1_term = c * abs(f1v) ** (2.0 - a)
        return {"a2": base + f1_term, "a2_f1_term": f1_term}

    def a2(self, t, alpha, c=1.0):
        return self.a2_terms(t, alpha, c)["a2"]

    def a3(self, eps, t):
        if eps <= 0:
            raise ConfigError("epsilon must be positive")
        grid = self.grid
        return (
            _grad_pow(self.psi(t, 1), 2.0)
            + _int_pow(grid, self.psi(t, 2).values, 2.0) / (4.0 * eps)
            + self.q_prime(t) ** 2
            + self.f1_prime(t) ** 2
        )

    # -- IBVP-II functionals ------------------------------------------------
    def r0(self):
        a, n = self.a, _SPACE_DIM
        return n * (2.0 - a) / ((2.0 - a) * (n + 1) - n)

    def d_beta(self, beta, t):
        if beta < 2:
            raise ConfigError("beta must be >= 2")
        psi_tt = self.psi(t, 2).values
        return _int_pow(self.grid, psi_tt, beta) ** (1.0 / beta) + _grad_pow(self.psi(t, 1), beta) ** (2.0 / beta)

    def dirichlet(self, beta, alpha, t):
        a, b = self.a, self._b(alpha)
        grid, r0 = self.grid, self.r0()
        psi, psi_t, psi_tt = self.psi(t), self.psi(t, 1), self.psi(t, 2)
        a_alpha = lp_norm_gradient(psi, b) ** (alpha - a) + _int_pow(grid, psi_t.values, alpha) ** (
            (alpha - a) / (alpha * (1.0 - a))
        )
        g4 = (
            _grad_pow(psi, 2.0)
            + _int_pow(grid, psi_t.values, r0) ** ((2.0 - a) / (r0 * (1.0 - a)))
            + _int_pow(grid, psi_t.values, r0) ** (1.0 / r0)
            + _grad_pow(psi_t, 2.0)
            + _int_pow(grid, psi_t.values, 2.0)
            + _int_pow(grid, psi_tt.values, 2.0)
        )
        return {"d_beta": self.d_beta(beta, t), "a_alpha": a_alpha, "g4": g4}

    def pss_rate_gap(self, t):
        """``int |Psi_t + A|^2``."""
        return _int_pow(self.grid, self.psi(t, 1).values + self.a_const, 2.0)


# thin functional wrappers -------------------------------------------------------


def f1(ctx, t, p0_mismatch=None):
    if p0_mismatch is not None and p0_mismatch != ctx.p0_mismatch:
        saved, ctx.p0_mismatch = ctx.p0_mismatch, float(p0_mismatch)
        try:
            return ctx.f1(t)
        finally:
            ctx.p0_mismatch = saved
    return ctx.f1(t)


def f2(ctx, t):
    return ctx.f2(t)


def a1_functional(ctx, alpha, t):
    return ctx.a1(alpha, t)


def a1_limsup(ctx, alpha, times, tail_fraction=0.2):
    """Tail supremum of ``A_1(alpha, t)^(alpha/(alpha-a))`` and a monotone-tail flag."""
    times = np.asarray(times, dtype=float)
    vals = np.array([ctx.a1(alpha, t) for t in times]) ** (alpha / (alpha - ctx.a))
    tail = _tail_mask(times, tail_fraction)
    return float(np.max(vals[tail])), _monotone(vals[tail])


def a2_functional(ctx, t, alpha=None, c=1.0):
    return ctx.a2(t, default_alpha(ctx.a) if alpha is None else alpha, c)


def a3_functional(ctx, eps, t):
    return ctx.a3(eps, t)


def dirichlet_functionals(ctx, beta, alpha, t):
    return ctx.dirichlet(beta, alpha, t)


# report ---------------------------------------------------------------------------


def _tail_mask(times, frac):
    t0, t1 = times[0], times[-1]
    return times >= t1 - frac * (t1 - t0) - 1e-12 * max(abs(t1), 1.0)


def _monotone(vals):
    d = np.diff(vals)
    scale = 1e-12 * max(np.max(np.abs(vals)), 1e-300)
    return bool(np.all(d <= scale) or np.all(d >= -scale))


def _cumulative(times, vals):
    if times.size < 2:
        return np.zeros(times.size)
    if times.size < 3:
        return np.concatenate([[0.0], np.cumsum(0.5 * np.diff(times) * (vals[1:] + vals[:-1]))])
    return cumulative_simpson(vals, x=times, initial=0.0)


def _worst(*verdicts):
    return max(verdicts, key=lambda v: _RANK[v])


@dataclass
class AssumptionReport:
    """Per-time functional values, tail suprema and assumption verdicts."""

    horizon: tuple
    times: np.ndarray
    samples: dict
    sup_tail: dict
    verdicts: dict
    monotone_tail: dict = field(default_factory=dict)
    notes: dict = field(default_factory=dict)
    settings: dict = field(default_factory=dict)

    def columns(self):
        return ["t"] + list(self.samples)

    def rows(self):
        cols = [self.times] + [self.samples[k] for k in self.samples]
        return [tuple(float(c[i]) for c in cols) for i in range(self.times.size)]


class _Judge:
    def __init__(self, times, frac, growth_rtol, growth_atol, decay_threshold):
        self.tail = _tail_mask(times, frac)
        self.rtol, self.atol, self.thr = growth_rtol, growth_atol, decay_threshold

    def bounded(self, vals):
        vals = np.asarray(vals, dtype=float)
        if not np.all(np.isfinite(vals)):
            return VIOLATED if np.any(np.isinf(vals)) else INCONCLUSIVE
        head = vals[~self.tail]
        if head.size == 0:
            return INCONCLUSIVE
        tail_sup = np.max(np.abs(vals[self.tail]))
        head_sup = np.max(np.abs(head))
        return SATISFIED if tail_sup <= (1.0 + self.rtol) * head_sup + self.atol else VIOLATED

    def decays(self, vals):
        vals = np.asarray(vals, dtype=float)
        if not np.all(np.isfinite(vals)):
            return INCONCLUSIVE
        tail_sup = np.max(np.abs(vals[self.tail]))
        if tail_sup <= self.thr:
            return SATISFIED
        head = vals[~self.tail]
        if head.size and tail_sup < np.max(np.abs(head)):
            return INCONCLUSIVE
        return VIOLATED


def build_report(
    ctx,
    t0,
    t1,
    n_samples=101,
    alpha=None,
    beta=2.0,
    eps=1.0,
    trajectory=None,
    tail_fraction=0.2,
    decay_threshold=1e-4,
    growth_rtol=0.05,
    growth_atol=1e-12,
    c_a2=1.0,
):
    """Evaluate every functional on ``n_samples`` times in ``[t0, t1]`` and judge the assumptions.

    ``trajectory`` (a :class:`~forchpi.transient.PiTrajectory` of an IBVP-I
    run) supplies the ``gamma`` series needed for ``Delta_gamma'``.
    """
    if not (t1 > t0 >= 0):
        raise ConfigError("the horizon needs 0 <= t0 < t1")
    if n_samples < 5:
        raise ConfigError("at least 5 samples are needed")
    if not (0 < tail_fraction < 1):
        raise ConfigError("tail_fraction must lie in (0, 1)")
    alpha = default_alpha(ctx.a) if alpha is None else float(alpha)
    b = ctx._b(alpha)
    a = ctx.a
    times = np.linspace(float(t0), float(t1), int(n_samples))
    judge = _Judge(times, tail_fraction, growth_rtol, growth_atol, decay_threshold)
    grid = ctx.grid
    s, verdicts, notes = {}, {}, {}

    # integrals starting at t = 1 use the samples beyond 1 plus t = 1 itself
    int_times = np.unique(np.concatenate([[max(1.0, t0)], times[times > 1.0]]))

    def cumulative_from_one(fn):
        vals = np.array([fn(t) for t in int_times])
        cum = _cumulative(int_times, vals)
        return np.interp(times, int_times, cum, left=0.0)

    if ctx.kind == "ibvp1":
        # cumulative Simpson for int_0^t Delta_Q on a fine grid, read off at the samples
        fine = np.linspace(0.0, t1, max(ctx.n_quad, 4 * n_samples) + 1)
        cum_q = _cumulative(fine, ctx.bp.flux(fine) - ctx.bp.q_s)
        flux_int = np.interp(times, fine, cum_q)
        s["F1"] = np.array([ctx.f1(t, fi) for t, fi in zip(times, flux_int)])
        s["F2"] = np.array([ctx.f2(t, f) for t, f in zip(times, s["F1"])])
        s["A1"] = np.array([ctx.a1(alpha, t) for t in times])
        terms = [ctx.a2_terms(t, alpha, c_a2, f) for t, f in zip(times, s["F1"])]
        s["A2"] = np.array([d["a2"] for d in terms])
        s["A2_f1_term"] = np.array([d["a2_f1_term"] for d in terms])
        s["A3"] = np.array([ctx.a3(eps, t) for t in times])
        s["delta_q"] = np.array([ctx.delta_q(t) for t in times])
        s["q_prime"] = np.array([ctx.q_prime(t) for t in times])

        dq_abs = np.abs(s["delta_q"])
        psi_t_b = np.array([_int_pow(grid, ctx.psi(t, 1).values, b) ** (1.0 / b) for t in times])
        grad_psi_b = np.array([lp_norm_gradient(ctx.psi(t), b) for t in times])
        grad_phi_b = lp_norm_gradient(ctx.phi_ext, b)
        grad_psi_t_2 = np.array([lp_norm_gradient(ctx.psi(t, 1), 2.0) for t in times])
        a1_pow = s["A1"] ** (alpha / (alpha - a))

        v_a1 = _worst(judge.bounded(dq_abs + psi_t_b + grad_psi_b + grad_phi_b), judge.bounded(a1_pow))
        v_a2 = _worst(
            v_a1,
            judge.bounded(np.abs(s["q_prime"]) + np.abs(s["F1"]) + grad_psi_t_2),
            judge.bounded(s["A2"] + s["F2"]),
        )
        # A3-beta: pointwise terms per sample, the integral cumulatively
        integrand = lambda t: (
            _int_pow(grid, ctx.psi(t, 2).values, beta) ** (1.0 / beta)
            + _grad_pow(ctx.psi(t, 1), beta) ** (2.0 / beta)
        )
        s["A3beta_integral"] = cumulative_from_one(integrand)
        pointwise = dq_abs.copy()
        if trajectory is not None and trajectory.kind == "ibvp1" and trajectory.times.size >= 2:
            dg = trajectory.gamma + ctx.a_const * trajectory.times
            dg_prime = np.gradient(dg, trajectory.times)
            s["delta_gamma_prime"] = np.interp(times, trajectory.times, dg_prime)
            pointwise = pointwise + np.abs(s["delta_gamma_prime"])
        else:
            notes["A3"] = "Delta_gamma' unavailable without a trajectory; judged on the remaining terms"
        s["A3beta_pointwise"] = pointwise
        v_a3 = _worst(judge.bounded(pointwise), judge.bounded(s["A3beta_integral"]))

        decay4 = np.array(
            [
                _grad_pow(ctx.psi(t, 1), 2.0) + _int_pow(grid, ctx.psi(t, 2).values, 2.0)
                for t in times
            ]
        ) + s["q_prime"] ** 2 + s["delta_q"] ** 2
        v_a4 = _worst(v_a2, judge.decays(decay4))
        grad_dpsi_2 = np.array([lp_norm_gradient(ctx.delta_psi(t), 2.0) for t in times])
        v_a5 = _worst(v_a3, v_a4, judge.decays(grad_dpsi_2))
        verdicts.update({"A1": v_a1, "A2": v_a2, "A3": v_a3, "A4": v_a4, "A5": v_a5})
    else:
        recs = [ctx.dirichlet(beta, alpha, t) for t in times]
        s["D_beta"] = np.array([r["d_beta"] for r in recs])
        s["A_alpha"] = np.array([r["a_alpha"] for r in recs])
        s["G4"] = np.array([r["g4"] for r in recs])
        s["pss_rate_gap"] = np.array([ctx.pss_rate_gap(t) for t in times])
        s["D_integral"] = cumulative_from_one(lambda t: ctx.d_beta(beta, t))
        d2 = np.array([ctx.d_beta(2.0, t) for t in times]) if beta != 2.0 else s["D_beta"]

        # D1: the growth rate of int_1^t D over the tail must vanish
        tail = judge.tail
        t_tail = times[tail][0]
        span = times[-1] - t_tail
        rate = (s["D_integral"][-1] - np.interp(t_tail, times, s["D_integral"])) / span if span > 0 else np.nan
        head_span = t_tail - times[0]
        head_rate = (np.interp(t_tail, times, s["D_integral"]) - s["D_integral"][0]) / head_span if head_span > 0 else np.inf
        if not np.isfinite(rate):
            v_d1 = INCONCLUSIVE
        elif rate <= decay_threshold:
            v_d1 = SATISFIED
        else:
            v_d1 = INCONCLUSIVE if rate < head_rate else VIOLATED
        notes["D1"] = f"tail growth rate of the integral {rate:.6g}"
        v_d2 = _worst(judge.bounded(s["A_alpha"] + s["G4"]), judge.decays(d2 + s["pss_rate_gap"]))
        grad_phi_b = lp_norm_gradient(ctx.phi_ext, b) ** (alpha - a)
        grad_dpsi_2 = np.array([lp_norm_gradient(ctx.delta_psi(t), 2.0) for t in times])
        v_d3 = _worst(judge.bounded(s["A_alpha"] + grad_phi_b), judge.decays(grad_dpsi_2))
        verdicts.update({"D1": v_d1, "D2": v_d2, "D3": v_d3})

    sup_tail = {k: float(np.max(np.abs(v[judge.tail]))) for k, v in s.items()}
    mono = {k: _monotone(v[judge.tail]) for k, v in s.items()}
    settings = {
        "alpha": alpha,
        "b": b,
        "beta": beta,
        "eps": eps,
        "tail_fraction": tail_fraction,
        "decay_threshold": decay_threshold,
        "growth_rtol": growth_rtol,
        "c_a2": c_a2,
        "p0_mismatch": ctx.p0_mismatch,
    }
    return AssumptionReport(
        horizon=(float(t0), float(t1)),
        times=times,
        samples=s,
        sup_tail=sup_tail,
        verdicts=verdicts,
        monotone_tail=mono,
        notes=notes,
        settings=settings,
    )
