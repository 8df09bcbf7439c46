"""Optional figures written next to the CSV output (``--plot``).

Uses the non-interactive Agg backend; nothing here is needed for the numbers.
"""

import numpy as np


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def plt_close(fig):
    import matplotlib.pyplot as plt

    plt.close(fig)


def _finish(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=120, format="png")
    plt_close(fig)
    return path


def plot_profile(grid, w, path, title="basic profile"):
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5, 3.5))
    if grid.dim == 1:
        ax.plot(grid.centers[:, 0], w.values, lw=1.5)
        ax.set_xlabel("r")
        ax.set_ylabel("W")
    else:
        sc = ax.scatter(grid.centers[:, 0], grid.centers[:, 1], c=w.values, s=6, marker="s")
        fig.colorbar(sc, ax=ax, label="W")
        ax.set_aspect("equal")
    ax.set_title(title)
    return _finish(fig, path)


def plot_transient(traj, path):
    plt = _pyplot()
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.5))
    tau = traj.tau_c if np.isfinite(traj.tau_c) and traj.tau_c > 0 else 1.0
    ax1.plot(traj.times / tau, traj.j_of_t, label="J(t)")
    ax1.axhline(traj.j_pss, color="k", ls="--", lw=1, label="J_PSS")
    ax1.set_xlabel("t / tau_c")
    ax1.set_ylabel("productivity index")
    ax1.legend(frameon=False)
    ax2.semilogy(traj.times / tau, np.maximum(traj.grad_diff_norm, 1e-300))
    ax2.set_xlabel("t / tau_c")
    ax2.set_ylabel("||grad(p - p_s)||")
    return _finish(fig, path)


def plot_gas(traj, path):
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5.5, 3.8))
    ax.plot(traj.times, traj.j_of_t, label="J[p](t)")
    ax.axhline(traj.j_p0, color="k", ls="--", lw=1, label="J[p0]")
    ax.axvline(traj.t_crit, color="0.5", ls=":", lw=1)
    ax.set_xlabel("t")
    ax.set_ylabel("productivity index")
    ax.legend(frameon=False, loc="upper left")
    return _finish(fig, path)


def plot_sweep(res, path):
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5, 3.8))
    ax.loglog(res.b_values, res.gap_pressure, "o-", label="max |p - p0|")
    ax.loglog(res.b_values, res.gap_pi, "s-", label="max |J - J0|/J0")
    fit = np.exp(res.intercept) * res.b_values**res.slope
    ax.loglog(res.b_values, fit, "k--", lw=1, label=f"slope {res.slope:.2f}")
    ax.set_xlabel("B")
    ax.legend(frameon=False)
    return _finish(fig, path)


def plot_report(report, path):
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 4))
    for key, vals in report.samples.items():
        vals = np.abs(vals)
        if np.any(vals > 0):
            ax.semilogy(report.times, np.maximum(vals, 1e-300), label=key)
    ax.set_xlabel("t")
    ax.legend(frameon=False, fontsize=7, ncol=2)
    return _finish(fig, path)
