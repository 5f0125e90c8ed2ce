"""Figure rendering for the report paths.

Everything here writes files (Agg backend); no interactive windows.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .analysis import GsfeMap, OrderParameterProfile
from .domainwall import KinkSolution


def save_map_figure(path, gmap: GsfeMap, title: str = "") -> None:
    """Misfit-energy map rendered in lab coordinates over one moire cell."""
    r = gmap.values.shape[0]
    t = np.linspace(0.0, 1.0, r + 1)
    g1, g2 = np.meshgrid(t, t, indexing="ij")
    c1, c2 = gmap.cell_basis[:, 0], gmap.cell_basis[:, 1]
    x = g1 * c1[0] + g2 * c2[0]
    y = g1 * c1[1] + g2 * c2[1]
    fig, ax = plt.subplots(figsize=(6, 5.5))
    pm = ax.pcolormesh(x, y, gmap.values, cmap="viridis", shading="flat")
    fig.colorbar(pm, ax=ax, label="misfit energy (meV / unit-cell area)")
    ax.set_aspect("equal")
    ax.set_xlabel(r"x ($\mathrm{\AA}$)")
    ax.set_ylabel(r"y ($\mathrm{\AA}$)")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_profile_figure(path, profiles, kink: KinkSolution | None = None,
                        kink_width: float | None = None, title: str = "") -> None:
    """Order-parameter profiles across a wall, optionally with the 1D kink overlay.

    ``profiles`` is a list of ``(label, OrderParameterProfile)``.
    """
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    for label, prof in profiles:
        ax.plot(prof.y, prof.u, lw=1.4, label=label)
    if kink is not None and kink_width:
        ax.plot(kink.t * kink_width, kink.psi, "k--", lw=1.0,
                label="1D wall theory")
    ax.axhline(0.5, color="0.8", lw=0.6)
    ax.axhline(-0.5, color="0.8", lw=0.6)
    ax.set_xlabel(r"distance across wall ($\mathrm{\AA}$)")
    ax.set_ylabel("order parameter")
    ax.set_ylim(-1.6, 1.6)
    ax.legend(fontsize=8)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_kink_figure(path, sol: KinkSolution, title: str = "") -> None:
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.plot(sol.t, sol.psi, lw=1.5)
    ax.axhline(1.0, color="0.85", lw=0.6)
    ax.axhline(-1.0, color="0.85", lw=0.6)
    ax.set_xlabel("t (dimensionless)")
    ax.set_ylabel("kink profile")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_width_figure(path, rows, title: str = "") -> None:
    """FWHM against sweep parameter, one line per (family, wall type)."""
    groups: dict[tuple[str, str], list] = {}
    for row in rows:
        groups.setdefault((row.family, row.wall), []).append(
            (row.parameter, row.fwhm))
    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    for (family, wall), pts in sorted(groups.items()):
        pts = sorted(pts)
        ax.plot([p for p, _ in pts], [w for _, w in pts], "o-",
                label=f"{family} {wall}")
    ax.set_xscale("log")
    ax.set_xlabel("strain parameter")
    ax.set_ylabel(r"wall FWHM ($\mathrm{\AA}$)")
    ax.legend(fontsize=8)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_trace_figure(path, trace, title: str = "") -> None:
    it = [row[0] for row in trace]
    en = [row[1] for row in trace]
    gs = [row[2] for row in trace]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(8.4, 3.4))
    ax1.plot(it, en, lw=1.2)
    ax1.set_xlabel("iteration")
    ax1.set_ylabel("total energy (meV / cell)")
    ax2.semilogy(it, gs, lw=1.2)
    ax2.set_xlabel("iteration")
    ax2.set_ylabel("force sup-norm")
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
