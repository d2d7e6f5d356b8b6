"""Matplotlib renderings of the CLI artifacts (PNG files next to the data)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .constants import MEV, UM


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=160, bbox_inches="tight")
    plt.close(fig)
    return path


def _draw_electrodes(ax, geometry, y0=0.0):
    colors = {"rf": "tab:orange", "center_rf": "tab:red", "side_dc": "tab:blue"}
    for s in geometry.effective_strips():
        ax.plot(
            [s.x_min / UM, s.x_max / UM], [y0, y0],
            lw=4, color=colors.get(s.role, "gray"), solid_capstyle="butt",
        )


def potential_grid_figure(grid, geometry, path, title=None) -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    phi_mev = np.ma.masked_where(grid.clipped, grid.phi) / MEV
    pc = ax.pcolormesh(grid.x / UM, grid.y / UM, phi_mev, cmap="viridis", shading="auto")
    levels = np.arange(0.0, grid.clip_threshold / MEV, 5.0)
    if len(levels) > 1:
        ax.contour(grid.x / UM, grid.y / UM, grid.phi / MEV, levels=levels,
                   colors="w", linewidths=0.4)
    fig.colorbar(pc, ax=ax, label="pseudopotential (meV)")
    _draw_electrodes(ax, geometry, y0=grid.y[0] / UM)
    ax.set_xlabel("x (um)")
    ax.set_ylabel("y (um)")
    if title:
        ax.set_title(title)
    return _save(fig, path)


def separation_figure(points, path) -> Path:
    fig, ax = plt.subplots(figsize=(5, 4))
    r = [p.r for p in points if p.separation is not None]
    d = [p.separation / UM for p in points if p.separation is not None]
    ax.plot(r, d, "o-", ms=3, label="node distance d")
    ax.set_xlabel("ratio R")
    ax.set_ylabel("d (um)")
    ax2 = ax.twinx()
    rb = [p.r for p in points if p.barrier is not None]
    bb = [p.barrier / MEV for p in points if p.barrier is not None]
    if rb:
        ax2.plot(rb, bb, "s--", ms=3, color="tab:red", label="barrier")
        ax2.set_ylabel("barrier (meV)")
    ax.grid(alpha=0.3)
    return _save(fig, path)


def modes_figure(points, path) -> Path:
    fig, ax = plt.subplots(figsize=(5.5, 4))
    good = [p for p in points if p.error is None and p.separation is not None]
    d = [p.separation / UM for p in good]
    for attr, style, lab in (
        ("f_com_in", "o-", "COM in-phase"),
        ("f_com_out", "o--", "COM out-of-phase"),
        ("f_stretch_in", "s-", "stretch in-phase"),
        ("f_stretch_out", "s--", "stretch out-of-phase"),
    ):
        vals = [getattr(p, attr) for p in good]
        ax.plot(d, vals, style, ms=3, label=lab)
    ax.set_xlabel("string distance d (um)")
    ax.set_ylabel("axial frequency / omega_z0")
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    return _save(fig, path)


def crystal_figure(state, path) -> Path:
    fig, axes = plt.subplots(1, 2, figsize=(8, 3.5))
    pos = state.positions / UM
    for lab in np.unique(state.string_labels):
        sel = state.string_labels == lab
        axes[0].plot(pos[sel, 2], pos[sel, 0], "o", ms=5, label=f"string {lab}")
        axes[1].plot(pos[sel, 0], pos[sel, 1], "o", ms=5)
    axes[0].set_xlabel("z (um)")
    axes[0].set_ylabel("x (um)")
    axes[0].legend(fontsize=8)
    axes[1].set_xlabel("x (um)")
    axes[1].set_ylabel("y (um)")
    for a in axes:
        a.grid(alpha=0.3)
    return _save(fig, path)


def corrugation_figure(report, path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    s = report.samples
    ax.plot(s.z / UM, s.total / MEV, label="total")
    ax.plot(s.z / UM, s.coulomb / MEV, "--", label="opposing string")
    ax.plot(s.z / UM, s.trap / MEV, ":", label="axial trap")
    ax.set_xlabel("z (um)")
    ax.set_ylabel("potential energy (meV)")
    ax.set_title(
        f"eta = {report.eta:.3f}  "
        f"(w_int/2pi = {report.omega_int/2/np.pi/1e3:.1f} kHz, "
        f"w_0/2pi = {report.omega_zero/2/np.pi/1e3:.1f} kHz)",
        fontsize=9,
    )
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    return _save(fig, path)


def slide_figure(result, path) -> Path:
    fig, ax = plt.subplots(figsize=(5.5, 4))
    for steps, style, lab in ((result.forward, "o-", "forward"),
                              (result.backward, "s--", "backward")):
        if not steps:
            continue
        off = [s.offset / UM for s in steps]
        disp = [s.max_displacement / UM for s in steps]
        ax.plot(off, disp, style, ms=3, label=lab)
        slips = [s for s in steps if s.slip]
        if slips:
            ax.plot([s.offset / UM for s in slips],
                    [s.max_displacement / UM for s in slips],
                    "rx", ms=8, label=f"{lab} slips")
    ax.axhline(result.slip_threshold / UM, color="gray", ls=":", lw=1)
    ax.set_xlabel("well offset (um)")
    ax.set_ylabel("max single-ion step displacement (um)")
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    return _save(fig, path)
