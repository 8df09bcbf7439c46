"""Acceptance criteria, one test each.

Every test prints a single ``criterion N: PASS/FAIL`` line (visible with ``-s``
or in the captured output of a failure) and enforces its runtime budget.
"""

import time

import numpy as np
import pytest

from forchpi import cli
from forchpi.config import build_gas_scenario, build_grid, shipped_path, shipped_scenario
from forchpi.diagnostics import (
    SATISFIED,
    BoundaryDiagnostics,
    a1_functional,
    a2_functional,
    a3_functional,
    build_report,
    dirichlet_functionals,
    f1,
    f2,
)
from forchpi.gas import auxiliary_pressure, b_stability_sweep, pi_on_history, run_gas
from forchpi.grid import build_annulus2d, build_radial
from forchpi.kernel import GPolynomial, Kernel, kappa, kappa_h, two_term
from forchpi.pss import PssProblem, radial_darcy_profile, solve_basic_profile
from forchpi.transient import (
    BoundaryProgram,
    characteristic_time,
    initial_bump,
    initial_pss,
    run_ibvp1,
    run_ibvp2,
    scaled_program,
)

QS = 5.0
KERNELS = {
    "darcy": GPolynomial((1.0,), (0.0,)),
    "two-term": two_term(1.0, 1.0),
    "alpha_k=6": GPolynomial((1.0, 1.0), (0.0, 6.0)),
}


@pytest.fixture
def verdict(capsys):
    start = time.perf_counter()

    def emit(n, checks, budget=None):
        elapsed = time.perf_counter() - start
        checks = dict(checks)
        if budget is not None:
            checks[f"runtime {elapsed:.1f}s < {budget}s"] = elapsed < budget
        ok = all(checks.values())
        failed = [k for k, v in checks.items() if not v]
        line = f"criterion {n}: {'PASS' if ok else 'FAIL'}" + (f" ({'; '.join(failed)})" if failed else "")
        with capsys.disabled():
            print("\n" + line)
        assert ok, line

    return emit


@pytest.fixture(scope="module")
def liquid_cases():
    g = build_radial(1.0, 2.0, 64)
    out = {}
    for name, poly in KERNELS.items():
        ker = Kernel(poly)
        pss = solve_basic_profile(PssProblem(g, ker, None, QS))
        out[name] = (g, ker, pss, characteristic_time(g, QS / pss.j_pss, QS))
    return out


@pytest.fixture(scope="module")
def fig1():
    sc = shipped_scenario("fig1")
    gsc = build_gas_scenario(sc, build_grid(sc))
    t0 = time.perf_counter()
    traj, _ = run_gas(gsc, keep_history=False)
    return gsc, traj, time.perf_counter() - t0


def test_criterion_01_closed_form(verdict):
    xi = np.concatenate([[0.0], np.geomspace(1e-8, 1e8, 999)])
    worst = 0.0
    for a, b in [(1.0, 1.0), (10.0, 1000.0), (0.3, 5.0), (1.0, 0.0)]:
        exact = 2.0 / (a + np.sqrt(a * a + 4.0 * b * xi))
        worst = max(worst, float(np.max(np.abs(kappa(Kernel(two_term(a, b)), xi) - exact))))
    verdict(1, {f"max error {worst:.2e} <= 1e-10": worst <= 1e-10}, budget=1.0)


def test_criterion_02_inequalities(verdict):
    rng = np.random.default_rng(7)
    checks = {}
    for name, poly in KERNELS.items():
        ker = Kernel(poly)
        a = ker.a_exp
        xi = np.geomspace(1e-4, 1e6, 400)
        k = ker(xi)
        checks[f"{name} non-increasing"] = bool(np.all(np.diff(k) <= 0))
        h = 1e-5 * xi
        fd = (ker(xi + h) - ker(xi - h)) / (2 * h)
        tol = 1e-6 * k / xi
        checks[f"{name} derivative bound"] = bool(np.all(fd <= tol) and np.all(fd >= -a * k / xi - tol))
        xs = np.geomspace(1e-3, 1e4, 40)
        hv = np.array([kappa_h(ker, x) for x in xs])
        kx2 = ker(xs) * xs * xs
        checks[f"{name} H sandwich"] = bool(np.all(kx2 * (1 - 1e-10) <= hv) and np.all(hv <= 2 * kx2 * (1 + 1e-10)))
        y1 = rng.normal(size=(10_000, 3)) * rng.lognormal(0, 2, size=(10_000, 1))
        y2 = rng.normal(size=(10_000, 3)) * rng.lognormal(0, 2, size=(10_000, 1))
        f1_ = ker(np.linalg.norm(y1, axis=1))[:, None] * y1
        f2_ = ker(np.linalg.norm(y2, axis=1))[:, None] * y2
        bad = int(np.sum(np.sum((f1_ - f2_) * (y1 - y2), axis=1) < -1e-12))
        checks[f"{name} monotonicity violations {bad}"] = bad == 0
    verdict(2, checks, budget=10.0)


def test_criterion_03_pss_oracle(verdict):
    ker = Kernel(two_term(1.0, 0.0))
    w_exact, j_exact = radial_darcy_profile(1.0, 2.0, 1.0)
    errs = []
    for n in (64, 128, 256, 512):
        g = build_radial(1.0, 2.0, n)
        sol = solve_basic_profile(PssProblem(g, ker, None, 1.0))
        errs.append(np.max(np.abs(sol.w.values - w_exact(g.radius))))
    rates = np.log2(np.array(errs[:-1]) / errs[1:])
    rel = abs(sol.j_pss / j_exact - 1)
    verdict(
        3,
        {f"min order {rates.min():.3f} >= 1.9": rates.min() >= 1.9, f"J rel error {rel:.2e} < 1e-2": rel < 1e-2},
        budget=10.0,
    )


def test_criterion_04_fixed_point(verdict, liquid_cases):
    checks = {}
    for name, (g, ker, pss, tau) in liquid_cases.items():
        a = QS / g.volume
        tr1, _ = run_ibvp1(g, ker, initial_pss(pss), BoundaryProgram(phi="0", q_s=QS, q=repr(QS)), tau / 10, 10 * tau, pss=pss)
        bp2 = BoundaryProgram(phi="0", q_s=QS, gamma=f"-{a!r}*t")
        tr2, _ = run_ibvp2(g, ker, initial_pss(pss), bp2, tau / 10, 10 * tau, pss=pss)
        for kind, tr in (("I", tr1), ("II", tr2)):
            dev = float(np.max(np.abs(tr.j_of_t / pss.j_pss - 1)))
            checks[f"{name} IBVP-{kind} deviation {dev:.1e} < 1e-6"] = dev < 1e-6
    verdict(4, checks, budget=60.0)


def _decaying_run(case, kind):
    g, ker, pss, tau = case
    a = QS / g.volume
    if kind == "I":
        bp = BoundaryProgram(phi="0", q_s=QS, q=f"{QS!r}*(1+exp(-t/{tau!r}))")
        return run_ibvp1(g, ker, initial_bump(pss, 0.5), bp, tau / 50, 20 * tau, pss=pss)[0]
    bp = BoundaryProgram(phi="0", q_s=QS, gamma=f"-{a!r}*t+exp(-t/{tau!r})")
    return run_ibvp2(g, ker, initial_bump(pss, 0.5), bp, tau / 50, 20 * tau, pss=pss)[0]


@pytest.fixture(scope="module")
def decaying_runs(liquid_cases):
    runs = {}
    for name, case in liquid_cases.items():
        for kind in ("I", "II"):
            t0 = time.perf_counter()
            runs[(name, kind)] = (_decaying_run(case, kind), time.perf_counter() - t0)
    return runs


def test_criterion_05_convergence(verdict, decaying_runs):
    checks = {}
    for (name, kind), (tr, secs) in decaying_runs.items():
        gap = abs(tr.j_of_t[-1] / tr.j_pss - 1)
        tail = tr.grad_diff_norm[tr.times >= 0.5 * tr.times[-1]]
        checks[f"{name} IBVP-{kind} final gap {gap:.1e} < 1e-2"] = gap < 1e-2
        checks[f"{name} IBVP-{kind} gradient gap decreasing"] = bool(np.all(np.diff(tail) <= 0))
        checks[f"{name} IBVP-{kind} runtime {secs:.1f}s < 300s"] = secs < 300
    verdict(5, checks)


def test_criterion_06_lemma_identity(verdict, decaying_runs):
    checks = {}
    for (name, kind), (tr, _) in decaying_runs.items():
        res = float(np.max(np.abs(tr.lemma_identity_residual())) / max(1.0, tr.j_pss))
        checks[f"{name} IBVP-{kind} residual {res:.1e} <= 1e-10"] = res <= 1e-10
    verdict(6, checks)


def test_criterion_07_gas_shape(verdict, fig1):
    gsc, traj, secs = fig1
    ratio = traj.ratio
    early = traj.times <= 0.8 * traj.t_crit
    dev = float(np.max(np.abs(ratio[early] - 1)))
    w = traj.meta["w"]
    fields = [auxiliary_pressure(w, gsc.b_reserve, gsc.a_rate, t).values for t in traj.times]
    _, _, j0 = pi_on_history(gsc.grid, gsc.kernel, traj.times, fields, gsc.b_reserve, gsc.a_rate)
    exact = float(np.max(np.abs(j0 / traj.j_p0 - 1)))
    checks = {
        f"T_crit {traj.t_crit:g} == 2000": traj.t_crit == pytest.approx(2000.0, rel=1e-12),
        f"early ratio deviation {dev:.3f} <= 0.05": dev <= 0.05,
        f"last sample t={traj.times[-1]:.1f} >= 0.99 T_crit": traj.times[-1] >= 0.99 * traj.t_crit,
        f"last ratio {ratio[-1]:.3f} >= 1.5": ratio[-1] >= 1.5,
        f"p0 history PI error {exact:.1e} <= 1e-6": exact <= 1e-6,
        f"runtime {secs:.1f}s < 300s": secs < 300,
    }
    verdict(7, checks)


def test_criterion_08_gas_max_principle(verdict, fig1):
    gsc, traj, _ = fig1
    low = int(np.sum(traj.min_principle_margin < -1e-8 * gsc.b_reserve))
    high = int(np.sum(traj.ordering > 1e-8 * gsc.b_reserve))
    verdict(8, {f"min principle violations {low}": low == 0, f"p <= p0 violations {high}": high == 0})


def test_criterion_09_darcy_identity(verdict, tmp_path, capsys):
    code = cli.main(["gas-identity", "--config", shipped_path("identity"), "--out", str(tmp_path)])
    path = capsys.readouterr().out.strip()
    summary = cli.read_table(path)[0] if code == 0 else {}
    coarse = float(summary.get("rel_residual", "nan"))
    fine = float(summary.get("rel_residual_refined", "nan"))
    verdict(
        9,
        {
            f"exit code {code}": code == 0,
            f"residual {coarse:.3e} <= 5e-2": coarse <= 5e-2,
            f"refined {fine:.3e} < coarse": fine < coarse,
        },
        budget=300.0,
    )


def test_criterion_10_b_stability(verdict):
    sc = shipped_scenario("sweep")
    base = build_gas_scenario(sc, build_grid(sc))
    res = b_stability_sweep(base, sc["sweep"]["B"], sc["sweep"]["T0"])
    verdict(
        10,
        {
            f"B range {res.b_values.min():g}..{res.b_values.max():g}": res.b_values.min() == 250 and res.b_values.max() == 4000,
            f"slope {res.slope:.3f} in -2 +- 0.3": abs(res.slope + 2.0) <= 0.3,
            "PI gap strictly decreasing": bool(np.all(np.diff(res.gap_pi) < 0)),
        },
        budget=900.0,
    )


def _all_functionals(base, big, t):
    if base.kind == "ibvp1":
        return [
            (abs(f1(base, t)), abs(f1(big, t))),
            (f2(base, t), f2(big, t)),
            (a1_functional(base, 3.0, t), a1_functional(big, 3.0, t)),
            (a2_functional(base, t), a2_functional(big, t)),
            (a3_functional(base, 1.0, t), a3_functional(big, 1.0, t)),
        ]
    r0, r1 = dirichlet_functionals(base, 2.0, 3.0, t), dirichlet_functionals(big, 2.0, 3.0, t)
    return [(r0[k], r1[k]) for k in r0]


def test_criterion_11_diagnostics(verdict):
    checks = {}
    ker = Kernel(two_term(1.0, 1.0))
    radial = build_radial(1.0, 2.0, 32)
    box = build_annulus2d((4, 4), (1, 1), 16)
    for gname, g in (("radial", radial), ("box", box)):
        a = 2.0 / g.volume
        for prog in (
            BoundaryProgram(phi="0", q_s=2.0, q="2"),
            BoundaryProgram(phi="0", q_s=2.0, gamma=f"-{a!r}*t"),
        ):
            rep = build_report(BoundaryDiagnostics(g, ker, prog), 0.0, 20.0, n_samples=21)
            flat = all(np.ptp(v) <= 1e-10 * (1 + np.max(np.abs(v))) for v in rep.samples.values())
            checks[f"steady {gname} {prog.kind} verdicts"] = set(rep.verdicts.values()) == {SATISFIED}
            checks[f"steady {gname} {prog.kind} constant functionals"] = flat

    rng = np.random.default_rng(11)
    bad = 0
    for i in range(100):
        c, r, lam, t = rng.uniform(-2, 2), rng.uniform(0.2, 3), rng.uniform(1.05, 4), rng.uniform(0.1, 6)
        if i % 2 == 0:
            bp = BoundaryProgram(phi="0", q_s=1.0, q=f"1+({c!r})*exp(-{r!r}*t)")
        else:
            # the Dirichlet functionals see Psi_t itself, so the comparison uses A = 0
            bp = BoundaryProgram(phi="0", q_s=0.0, gamma=f"({c!r})*exp(-{r!r}*t)")
        base = BoundaryDiagnostics(radial, ker, bp)
        big = BoundaryDiagnostics(radial, ker, scaled_program(bp, lam, radial.volume), pss=None)
        for small, large in _all_functionals(base, big, t):
            if small < 0 or large < small * (1 - 1e-12) - 1e-14:
                bad += 1
    checks[f"scaling violations {bad} over 100 programs"] = bad == 0
    verdict(11, checks, budget=30.0)
