"""Figures written next to the CSV outputs (non-interactive backend)."""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

__all__ = ["plot_sweep", "plot_trajectory", "plot_field", "plot_boundary_input"]

_RC = {
    "figure.figsize": (6.4, 4.0),
    "font.size": 10,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "lines.linewidth": 1.4,
    "savefig.dpi": 150,
    "savefig.bbox": "tight",
}


def _save(fig, path):
    fig.savefig(path)
    plt.close(fig)
    return str(path)


def plot_sweep(rows, path):
    """Certified deviation against nominal delay for each method.

    `rows` are dicts with keys ``D0``, ``delta_E``, ``delta_lmi`` and
    ``delta_smallgain`` (``None`` for failed points).
    """
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        d0 = np.array([r["D0"] for r in rows], dtype=float)
        for key, label, style in (("delta_lmi", "LMI", "o-"), ("delta_smallgain", "small gain", "s--"),
                                  ("delta_E", r"$\delta_E$", "^:")):
            vals = np.array([np.nan if r[key] is None else r[key] for r in rows], dtype=float)
            ax.plot(d0, vals, style, label=label, markersize=3)
        ax.set_xlabel(r"$D_0$ [s]")
        ax.set_ylabel(r"$\delta$ [s]")
        ax.legend()
        return _save(fig, path)


def plot_trajectory(traj, path):
    """State and input of an LTI run on a shared time axis."""
    with plt.rc_context(_RC):
        fig, (ax1, ax2) = plt.subplots(2, 1, sharex=True, figsize=(6.4, 5.0))
        for i in range(traj.x.shape[1]):
            ax1.plot(traj.t, traj.x[:, i], label=f"$x_{i + 1}$")
        for i in range(traj.u.shape[1]):
            ax2.plot(traj.t, traj.u[:, i], label=f"$u_{i + 1}$")
        ax1.set_ylabel("state")
        ax2.set_ylabel("input")
        ax2.set_xlabel("t [s]")
        ax1.legend(loc="upper right")
        ax2.legend(loc="upper right")
        return _save(fig, path)


def plot_field(traj, path, t_max=None):
    """Heat map of the reconstructed field ``y(t, x)``."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        keep = slice(None) if t_max is None else traj.t <= t_max
        vals = traj.y[keep]
        lim = float(np.max(np.abs(vals))) or 1.0
        mesh = ax.pcolormesh(traj.x_grid, traj.t[keep], vals, shading="auto", cmap="RdBu_r",
                             vmin=-lim, vmax=lim)
        fig.colorbar(mesh, ax=ax, label="y(t, x)")
        ax.set_xlabel("x")
        ax.set_ylabel("t [s]")
        ax.grid(False)
        return _save(fig, path)


def plot_boundary_input(traj, path):
    """Delayed boundary inputs ``u(t - D(t))``."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        for k in range(traj.u_tilde.shape[1]):
            ax.plot(traj.t, traj.u_tilde[:, k], label=rf"$\tilde u_{k + 1}$")
        ax.set_xlabel("t [s]")
        ax.set_ylabel("delayed input")
        ax.legend()
        return _save(fig, path)
