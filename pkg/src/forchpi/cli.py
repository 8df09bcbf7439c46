"""Command-line front end.

Every subcommand reads a YAML scenario, validates it completely, runs, and
writes one CSV file named ``<scenario>-<subcommand>.csv`` into the output
directory.  The CSV header (``#`` lines) embeds the resolved scenario and a
summary block.  Files are written atomically, so a failed run leaves
nothing behind.

Exit codes: 0 success, 2 configuration error, 3 solver or numerical error,
4 I/O error.  Failures print a JSON error block on stderr.
"""

import argparse
import io
import json
import logging
import math
import os
import sys
import tempfile

import numpy as np
import yaml

from . import __version__
from .config import (
    build_gas_scenario,
    build_grid,
    build_kernel,
    build_program,
    dump_scenario,
    load_scenario,
    output_dir,
    parse_scenario,
)
from .errors import ConfigError, DegenerateDataError, DomainError, ExpressionError, ForchError, QuadratureError, SolverError

log = logging.getLogger("forchpi")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_IO = 0, 2, 3, 4
SCENARIO_BEGIN = "# --- scenario ---"
SCENARIO_END = "# --- end scenario ---"
COMMANDS = ("pss", "transient", "gas", "gas-sweep", "gas-identity", "diagnose")


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


class Output:
    """CSV table plus header metadata, rendered deterministically."""

    def __init__(self, command, scenario, columns, rows, summary=None, plot=None):
        self.command = command
        self.scenario = scenario
        self.columns = list(columns)
        self.rows = rows
        self.summary = dict(summary or {})
        self.plot = plot

    def render(self):
        buf = io.StringIO()
        buf.write(f"# forchpi {__version__} {self.command}\n")
        buf.write(SCENARIO_BEGIN + "\n")
        for line in dump_scenario(self.scenario).splitlines():
            buf.write(f"# {line}\n")
        buf.write(SCENARIO_END + "\n")
        for key, val in self.summary.items():
            buf.write(f"# {key}: {_fmt(val)}\n")
        buf.write(",".join(self.columns) + "\n")
        for row in self.rows:
            buf.write(",".join(_fmt(v) for v in row) + "\n")
        return buf.getvalue()


def read_scenario_header(path):
    """Re-parse the scenario embedded in an output file."""
    lines, inside = [], False
    with open(path) as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line == SCENARIO_BEGIN:
                inside = True
            elif line == SCENARIO_END:
                break
            elif inside:
                lines.append(line[2:])
    return parse_scenario(yaml.safe_load("\n".join(lines)))


def read_table(path):
    """Return ``(summary, columns, data)`` from an output file."""
    summary, body, inside = {}, [], False
    with open(path) as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line == SCENARIO_BEGIN:
                inside = True
                continue
            if line == SCENARIO_END:
                inside = False
                continue
            if line.startswith("#"):
                if not inside and ": " in line:
                    key, val = line[2:].split(": ", 1)
                    summary[key] = val
                continue
            body.append(line)
    cols = body[0].split(",")
    data = np.array([[float(v) for v in row.split(",")] for row in body[1:] if row], dtype=float)
    return summary, cols, data.reshape(-1, len(cols))


def _atomic_write(path, text=None, writer=None):
    folder = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".forchpi-", dir=folder)
    try:
        if writer is None:
            with os.fdopen(fd, "w", newline="") as fh:
                fh.write(text)
        else:
            os.close(fd)
            writer(tmp)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _require_model(sc, model, command):
    if sc["model"] != model:
        raise ConfigError(f"'{command}' needs a scenario with model: {model}, got {sc['model']}")


# -- subcommands ------------------------------------------------------------------------


def _radial_darcy_oracle(sc, grid):
    from .pss import radial_darcy_profile

    ker, geo, bnd = sc["kernel"], sc["geometry"], sc["boundary"]
    if geo["kind"] != "radial":
        return None
    if ker["alpha"] is not None:
        if ker["beta"] != 0:
            return None
        c = ker["alpha"]
    else:
        if any(e != 0 for e in ker["exponents"]):
            return None
        c = sum(ker["coeffs"])
    from .expr import Expr

    phi = Expr(bnd["phi"])
    if phi.depends_on_s or phi.depends_on_t:
        return None
    return radial_darcy_profile(geo["r_i"], geo["r_e"], bnd["q_s"], c=c, phi=phi(0.0, 0.0))


def cmd_pss(sc, args):
    from .pss import PssProblem, solve_basic_profile
    from .transient import characteristic_time

    _require_model(sc, "liquid", "pss")
    grid, kernel = build_grid(sc), build_kernel(sc)
    bp = build_program(sc, grid.volume)
    num = sc["numerics"]
    sol = solve_basic_profile(PssProblem(grid, kernel, bp.phi_trace(grid), bp.q_s), tol=num["tol"], max_iter=num["max_iter"] * 2)
    summary = {
        "J_PSS": sol.j_pss,
        "A": bp.a_const(grid),
        "volume": grid.volume,
        "well_flux": sol.flux,
        "residual": sol.residual,
        "iterations": sol.iterations,
    }
    if math.isfinite(sol.j_pss) and bp.q_s != 0:
        summary["tau_c"] = characteristic_time(grid, bp.q_s / sol.j_pss, bp.q_s)
    oracle = _radial_darcy_oracle(sc, grid)
    cols = ["x"] if grid.dim == 1 else ["x", "y"]
    cols.append("W")
    if oracle is not None:
        w_exact, j_exact = oracle
        exact = w_exact(grid.centers[:, 0])
        summary["J_oracle"] = j_exact
        summary["J_rel_error"] = abs(sol.j_pss - j_exact) / abs(j_exact)
        summary["W_max_error"] = float(np.max(np.abs(sol.w.values - exact)))
        cols.append("W_exact")
        rows = [(r, w, e) for r, w, e in zip(grid.centers[:, 0], sol.w.values, exact)]
    else:
        rows = [tuple(c) + (w,) for c, w in zip(grid.centers, sol.w.values)]

    def plot(path):
        from .plotting import plot_profile

        plot_profile(grid, sol.w, path)

    return Output("pss", sc, cols, rows, summary, plot)


def _initial(sc, grid, pss):
    from .transient import initial_bump, initial_constant, initial_pss

    ini = sc["initial"]
    if ini["kind"] == "pss":
        return initial_pss(pss)
    if ini["kind"] == "bump":
        return initial_bump(pss, ini["amplitude"], width=ini["width"])
    return initial_constant(grid, ini["value"])


def _transient(sc, t_end=None):
    from .pss import PssProblem, solve_basic_profile
    from .transient import characteristic_time, run_ibvp1, run_ibvp2

    grid, kernel = build_grid(sc), build_kernel(sc)
    bp = build_program(sc, grid.volume)
    num = sc["numerics"]
    pss = solve_basic_profile(PssProblem(grid, kernel, bp.phi_trace(grid), bp.q_s), tol=num["tol"])
    tau = characteristic_time(grid, bp.q_s / pss.j_pss, bp.q_s) if bp.q_s else float("nan")
    if num["dt"] is None or (num["t_end"] is None and t_end is None):
        if not math.isfinite(tau) or tau <= 0:
            raise ConfigError("numerics.dt and numerics.t_end are required when Q_s = 0")
    dt = num["dt"] if num["dt"] is not None else num["dt_tau"] * tau
    if t_end is None:
        t_end = num["t_end"] if num["t_end"] is not None else num["t_end_tau"] * tau
    run = run_ibvp1 if bp.kind == "ibvp1" else run_ibvp2
    traj, _ = run(
        grid, kernel, _initial(sc, grid, pss), bp, dt, t_end, pss=pss, tol=num["tol"],
        max_iter=num["max_iter"], stride=sc["output"]["stride"], method=num["method"],
    )
    return grid, kernel, bp, pss, traj


def cmd_transient(sc, args):
    _require_model(sc, "liquid", "transient")
    _, _, _, pss, traj = _transient(sc)
    ok = ~traj.undefined
    rel = np.abs(traj.j_of_t[ok] - traj.j_pss) / abs(traj.j_pss)
    summary = {
        "kind": traj.kind,
        "J_PSS": traj.j_pss,
        "tau_c": traj.tau_c,
        "dt": traj.meta["dt"],
        "steps": traj.meta["steps"],
        "J_final": traj.j_of_t[-1],
        "J_rel_gap_final": rel[-1] if rel.size else float("nan"),
        "J_rel_gap_max": float(np.max(rel)) if rel.size else float("nan"),
        "undefined_samples": int(np.sum(~ok)),
        "lemma_identity_max": float(np.nanmax(np.abs(traj.lemma_identity_residual()))),
        "c_phi_factor_max": float(np.max(traj.meta["c_phi_factor"])),
    }

    def plot(path):
        from .plotting import plot_transient

        plot_transient(traj, path)

    return Output("transient", sc, traj.COLUMNS, traj.rows(), summary, plot)


def _gas_summary(traj):
    ratio = traj.ratio
    early = traj.times <= 0.8 * traj.t_crit
    return {
        "T_crit": traj.t_crit,
        "T_crit_refined": traj.t_crit_refined,
        "J_p0": traj.j_p0,
        "Q0": traj.q0,
        "steps": traj.meta["steps"],
        "t_last": traj.times[-1],
        "ratio_last": ratio[-1],
        "ratio_max_dev_early": float(np.nanmax(np.abs(ratio[early] - 1.0))) if early.any() else float("nan"),
        "max_p_minus_p0": float(np.max(traj.ordering)),
        "min_principle_margin": float(np.min(traj.min_principle_margin)),
        "min_p": float(np.min(traj.min_p)),
        "max_grad_p": float(np.max(traj.max_grad)),
    }


def cmd_gas(sc, args):
    from .gas import run_gas

    _require_model(sc, "gas", "gas")
    gsc = build_gas_scenario(sc, build_grid(sc))
    traj, _ = run_gas(gsc, keep_history=False)

    def plot(path):
        from .plotting import plot_gas

        plot_gas(traj, path)

    return Output("gas", sc, traj.COLUMNS, traj.rows(), _gas_summary(traj), plot)


def cmd_gas_sweep(sc, args):
    from .gas import b_stability_sweep

    _require_model(sc, "gas", "gas-sweep")
    if sc["gas"]["beta"] != 0:
        raise ConfigError("gas-sweep runs the Darcy case; set gas.beta: 0")
    sw = sc["sweep"]
    base = build_gas_scenario(sc, build_grid(sc))
    res = b_stability_sweep(base, sw["B"], sw["T0"], threads=args.threads)
    summary = {
        "T0": sw["T0"],
        "slope": res.slope,
        "intercept": res.intercept,
        "max_p_minus_p0": float(np.max(res.ordering)),
        "gap_pi_decreasing": bool(np.all(np.diff(res.gap_pi) < 0)),
    }

    def plot(path):
        from .plotting import plot_sweep

        plot_sweep(res, path)

    return Output("gas-sweep", sc, res.COLUMNS, res.rows(), summary, plot)


def _identity_level(sc, grid, T):
    from .gas import darcy_identity_residual, run_gas

    gsc = build_gas_scenario(sc, grid, t_end=T)
    traj, hist = run_gas(gsc, keep_history=True)
    g = sc["gas"]
    res = darcy_identity_residual(hist, traj.meta["w"], g["B"], g["A"], T=T, alpha=g["alpha"], beta=g["beta"])
    res["max_p_minus_p0"] = float(np.max(traj.ordering))
    res["min_principle_margin"] = float(np.min(traj.min_principle_margin))
    return res


def cmd_gas_identity(sc, args):
    _require_model(sc, "gas", "gas-identity")
    g = sc["gas"]
    if g["beta"] != 0:
        raise ConfigError("gas-identity is limited to the Darcy case; set gas.beta: 0")
    T = sc["identity"]["T"]
    if T is None:
        T = 0.5 * g["B"] / g["A"]
    if T >= (1 - 1e-3) * g["B"] / g["A"]:
        raise ConfigError("identity.T must stay below (1 - 1e-3) B/A")
    levels = [sc]
    if sc["identity"]["refine"]:
        geo = sc["geometry"]
        levels.append(
            sc.replace("geometry", n=2 * geo["n"]).replace("gas", dt=0.5 * g["dt"])
        )
    keys = ("lhs1", "lhs2", "rhs", "rel_residual", "comparison_ratio", "max_p_minus_p0", "min_principle_margin")
    rows = []
    for lvl, s in enumerate(levels):
        res = _identity_level(s, build_grid(s), T)
        rows.append((lvl, s["geometry"]["n"], s["gas"]["dt"]) + tuple(res[k] for k in keys))
    summary = {"T": T, "rel_residual": rows[0][6]}
    if len(rows) > 1:
        summary["rel_residual_refined"] = rows[1][6]
        summary["decreasing"] = rows[1][6] < rows[0][6]
    return Output("gas-identity", sc, ("level", "n", "dt") + keys, rows, summary)


def cmd_diagnose(sc, args):
    from .diagnostics import BoundaryDiagnostics, build_report

    _require_model(sc, "liquid", "diagnose")
    d = sc["diagnose"]
    grid, kernel = build_grid(sc), build_kernel(sc)
    bp = build_program(sc, grid.volume)
    traj = None
    if d["trajectory"] and bp.kind == "ibvp1":
        _, _, _, _, traj = _transient(sc, t_end=d["t1"])
    ctx = BoundaryDiagnostics(grid, kernel, bp, p0_mismatch=d["p0_mismatch"])
    rep = build_report(
        ctx, d["t0"], d["t1"], n_samples=d["n_samples"], alpha=d["alpha"], beta=d["beta"], eps=d["eps"],
        trajectory=traj, tail_fraction=d["tail_fraction"], decay_threshold=d["decay_threshold"],
        growth_rtol=d["growth_rtol"], c_a2=d["c_a2"],
    )
    summary = {"kind": bp.kind}
    summary.update({f"setting.{k}": v for k, v in rep.settings.items()})
    summary.update({f"verdict.{k}": v for k, v in rep.verdicts.items()})
    summary.update({f"sup_tail.{k}": v for k, v in rep.sup_tail.items()})
    summary.update({f"note.{k}": v for k, v in rep.notes.items()})

    def plot(path):
        from .plotting import plot_report

        plot_report(rep, path)

    return Output("diagnose", sc, rep.columns(), rep.rows(), summary, plot)


HANDLERS = {
    "pss": cmd_pss,
    "transient": cmd_transient,
    "gas": cmd_gas,
    "gas-sweep": cmd_gas_sweep,
    "gas-identity": cmd_gas_identity,
    "diagnose": cmd_diagnose,
}


# -- driver -----------------------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(prog="forchpi", description="Productivity index of generalized Forchheimer flows")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, help=f"run the {name} scenario")
        p.add_argument("--config", required=True, help="scenario YAML file")
        p.add_argument("--out", help="output directory (overrides FORCHPI_OUT and output.dir)")
        p.add_argument("--threads", type=int, default=1, help="worker processes for sweeps")
        p.add_argument("--stride", type=int, help="keep every k-th time step in the output")
        p.add_argument("--plot", action="store_true", help="also write a PNG figure")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def _error(code, exc, command):
    block = {"error": type(exc).__name__, "message": str(exc), "exit_code": code, "command": command}
    if isinstance(exc, SolverError):
        block["step"] = exc.step
        block["residual_history"] = [float(h) for h in exc.history[-10:]]
    if isinstance(exc, QuadratureError):
        block["diagnostics"] = {k: _fmt(v) for k, v in exc.diagnostics.items()}
    print(json.dumps(block, sort_keys=True), file=sys.stderr)
    return code


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    cmd = args.command
    try:
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        sc = load_scenario(args.config)
        if args.stride is not None:
            if args.stride < 1:
                raise ConfigError("--stride must be >= 1")
            sc = sc.replace("output", stride=args.stride)
        out = HANDLERS[cmd](sc, args)
    except (ConfigError, ExpressionError) as exc:
        return _error(EXIT_CONFIG, exc, cmd)
    except (SolverError, DomainError, DegenerateDataError, QuadratureError, ForchError, FloatingPointError) as exc:
        return _error(EXIT_SOLVER, exc, cmd)
    except OSError as exc:
        return _error(EXIT_IO, exc, cmd)

    folder = output_dir(sc, args.out)
    stem = os.path.join(folder, f"{sc['name']}-{cmd}")
    try:
        os.makedirs(folder, exist_ok=True)
        if args.plot or sc["output"]["plot"]:
            if out.plot is None:
                log.warning("no figure is defined for %s", cmd)
            else:
                _atomic_write(stem + ".png", writer=lambda p: out.plot(p))
        _atomic_write(stem + ".csv", out.render())
    except OSError as exc:
        return _error(EXIT_IO, exc, cmd)
    print(stem + ".csv")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
