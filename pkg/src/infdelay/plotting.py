"""Optional PNG rendering. matplotlib is imported only when a figure is requested."""
from __future__ import annotations

from pathlib import Path

import numpy as np


def _pyplot():
    try:
        import matplotlib
    except ImportError as exc:  # pragma: no cover - depends on the environment
        raise RuntimeError("PNG output needs matplotlib (pip install 'infdelay[plot]')") from exc
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def plot_trace(trace, path) -> Path:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(8, 4.5))
    for i in range(trace.dim):
        ax.plot(trace.times, trace.states[:, i], lw=1.0, label=f"x_{i + 1}")
    ax.set_xlabel("t")
    ax.set_ylabel("x(t)")
    ax.grid(alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def plot_spectrum(roots, region, path, eta: float | None = None) -> Path:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 6))
    z = np.array([r.lambda0 for r in roots], dtype=complex)
    if z.size:
        ax.scatter(z.real, z.imag, c=["C0" if r.is_simple else "C3" for r in roots], s=25, zorder=3)
    ax.add_patch(plt.Rectangle((region.re_min, region.im_min), region.re_max - region.re_min,
                               region.im_max - region.im_min, fill=False, ls="--", lw=0.8))
    ax.axvline(0.0, color="k", lw=0.6)
    if eta is not None:
        ax.axvline(-eta, color="C1", lw=0.8, ls=":", label="Re = -eta")
        ax.legend(loc="upper left")
    ax.set_xlabel("Re lambda")
    ax.set_ylabel("Im lambda")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def plot_history(phi, path, depth: float | None = None) -> Path:
    plt = _pyplot()
    grid = phi.grid if depth is None else phi.grid[phi.grid >= -depth]
    vals = phi.evaluate(grid)
    fig, ax = plt.subplots(figsize=(8, 4.5))
    for i in range(phi.dim):
        ax.plot(grid, np.real(vals[:, i]), lw=1.0, label=f"Re x_{i + 1}")
        if np.iscomplexobj(vals):
            ax.plot(grid, np.imag(vals[:, i]), lw=1.0, ls="--", label=f"Im x_{i + 1}")
    ax.set_xlabel("theta")
    ax.grid(alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def plot_hopf(record, path) -> Path:
    plt = _pyplot()
    rows = [r for r in record.rows if not r.flagged]
    fig, (a1, a2) = plt.subplots(1, 2, figsize=(10, 4))
    if rows:
        off = np.array([abs(r.offset) for r in rows])
        a1.plot(off, [r.amplitude**2 for r in rows], "o")
        if record.fit_slope is not None:
            xs = np.linspace(0, off.max() * 1.1, 50)
            a1.plot(xs, record.fit_slope * xs, "-", lw=0.8)
        a2.plot(off, [r.period for r in rows], "o")
    a2.axhline(record.period, color="k", lw=0.6)
    a1.set_xlabel("|mu - mu*|")
    a1.set_ylabel("amplitude^2")
    a2.set_xlabel("|mu - mu*|")
    a2.set_ylabel("period")
    for ax in (a1, a2):
        ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)
