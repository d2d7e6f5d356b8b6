"""Command-line front end.

Subcommands compute in memory first and write artifacts only on success
(CSV/JSON with embedded metadata, plus PNG figures unless --no-figures).
Exit codes: 0 success, 2 usage, 3 configuration error, 4 numerical failure;
failures print a machine-readable JSON error to stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__, corrugation, crystal, dc_control, figures, modes, nodes
from . import fields as fld
from .config import (
    ConfigError,
    load_config,
    model_from_config,
    model_to_config,
    parse_sweep,
)
from .constants import EV, MEV, UM
from .fields import AxialConfinement, DriveConfig, TrapModel
from .geometry import RectElectrode, canonical_geometry
from .io import run_metadata, write_csv, write_json

log = logging.getLogger("trapscape")

EXIT_CONFIG = 3
EXIT_NUMERICAL = 4

DEFAULT_DRIVE = {"v_rf": 42.5, "r": 0.9, "f_rf_mhz": 27.2}


def _default_doc(command: str) -> dict:
    doc = {"drive": dict(DEFAULT_DRIVE)}
    if command in ("modes-sweep",):
        doc["wells"] = [{"f_z_hz": 190e3}, {"f_z_hz": 190e3}]
    return doc


def _build_model(args, command: str, wells_required: bool):
    if args.config is not None:
        doc = load_config(args.config)
    else:
        doc = _default_doc(command)
    model, d_target = model_from_config(doc, wells_required=wells_required)
    if d_target is not None:
        r = nodes.ratio_for_separation(model, d_target)
        model = replace(model, drive=replace(model.drive, ratio_r=r))
        log.info("resolved d_target %.3g um to R = %.6f", d_target / UM, r)
    return model, doc


def _table(out_dir, name, columns, rows, meta, fmt):
    if fmt == "json":
        payload = {"columns": list(columns), "rows": [list(r) for r in rows]}
        return write_json(Path(out_dir) / f"{name}.json", payload, meta)
    return write_csv(Path(out_dir) / f"{name}.csv", columns, rows, meta)


def _meta(command, model, extra=None):
    cfg = model_to_config(model)
    if extra:
        cfg.update(extra)
    return run_metadata(command, cfg, __version__)


def cmd_potential_grid(args):
    model, doc = _build_model(args, "potential-grid", wells_required=False)
    g = doc.get("grid", {})
    x_um = g.get("x_um", [-120.0, 120.0])
    y_um = g.get("y_um", [2.0, 200.0])
    n_x = int(g.get("n_x", 241))
    n_y = int(g.get("n_y", 199))
    clip_ev = float(g.get("clip_ev", 0.1))
    grid = fld.pseudopotential_grid(
        model, (x_um[0] * UM, x_um[1] * UM), (y_um[0] * UM, y_um[1] * UM),
        n_x, n_y, clip_threshold=clip_ev * EV,
    )
    meta = _meta("potential-grid", model, {"grid": {
        "x_um": x_um, "y_um": y_um, "n_x": n_x, "n_y": n_y, "clip_ev": clip_ev}})
    rows = []
    for i, yv in enumerate(grid.y):
        for j, xv in enumerate(grid.x):
            rows.append((xv / UM, yv / UM, grid.phi[i, j] / MEV))
    out = [_table(args.out, "grid", ("x_um", "y_um", "phi_meV"), rows, meta, args.format)]
    out.append(write_json(Path(args.out) / "grid_meta.json", {
        "clip_ev": clip_ev,
        "n_clipped": int(grid.clipped.sum()),
        "minima_um": [[x / UM, y / UM] for x, y, _ in grid.local_minima()],
    }, meta))
    if not args.no_figures:
        out.append(figures.potential_grid_figure(
            grid, model.geometry, Path(args.out) / "fig_potential_grid.png",
            title=f"R = {model.drive.ratio_r:g}"))
    return out


def _sweep_values(args, doc, key, default_spec):
    if getattr(args, "sweep", None):
        return parse_sweep(args.sweep, "--sweep")
    section = doc.get(key, {})
    if "r_values" in section:
        return [float(v) for v in section["r_values"]]
    return parse_sweep(section.get("sweep", default_spec), f"{key}.sweep")


def cmd_nodes(args):
    model, doc = _build_model(args, "nodes", wells_required=False)
    r_values = _sweep_values(args, doc, "nodes", "0.8:1.0:0.005")
    points = nodes.separation_sweep(model, r_values, threads=args.threads)
    meta = _meta("nodes", model, {"nodes": {"r_values": r_values}})
    rows = [
        (
            p.r,
            p.separation / UM if p.separation is not None else None,
            p.barrier / MEV if p.barrier is not None else None,
            p.topology,
        )
        for p in points
    ]
    out = [_table(args.out, "node_sweep", ("R", "d_um", "barrier_meV", "topology"),
                  rows, meta, args.format)]
    if not args.no_figures:
        out.append(figures.separation_figure(points, Path(args.out) / "fig_node_separation.png"))
    return out


def cmd_critical(args):
    model, doc = _build_model(args, "critical", wells_required=False)
    section = doc.get("critical", {})
    tol = float(section.get("tol", 1e-3))
    crit = nodes.critical_ratio(
        model, tol=tol,
        r_lo=float(section.get("r_lo", 0.0)), r_hi=float(section.get("r_hi", 1.0)),
    )
    meta = _meta("critical", model, {"critical": {"tol": tol}})
    return [write_json(Path(args.out) / "critical.json",
                       {"r_lo": crit.r_lo, "r_hi": crit.r_hi, "r_mid": crit.r_mid}, meta)]


def _state_payload(state):
    return {
        "positions_um": (state.positions / UM).tolist(),
        "energy_meV": state.energy / MEV,
        "grad_norm_N": state.grad_norm,
        "converged": state.converged,
        "string_labels": state.string_labels.tolist(),
        "well_indices": state.well_indices.tolist(),
        "iterations": state.iterations,
    }


def cmd_crystal(args):
    model, doc = _build_model(args, "crystal", wells_required=True)
    section = doc.get("crystal", {})
    n_ions = int(section.get("n_ions", 2))
    init = section.get("init", "string_seed")
    state = crystal.solve_equilibrium(
        model, n_ions, init=init,
        per_well=section.get("per_well"),
        n_restarts=int(section.get("n_restarts", 1)),
        seed=int(section.get("seed", 0)),
        threads=args.threads,
    )
    meta = _meta("crystal", model, {"crystal": {"n_ions": n_ions, "init": init}})
    out = [write_json(Path(args.out) / "crystal.json", _state_payload(state), meta)]
    rows = [
        (i, p[0] / UM, p[1] / UM, p[2] / UM, int(state.string_labels[i]))
        for i, p in enumerate(state.positions)
    ]
    out.append(_table(args.out, "crystal_positions",
                      ("ion", "x_um", "y_um", "z_um", "string"), rows, meta, args.format))
    if not args.no_figures:
        out.append(figures.crystal_figure(state, Path(args.out) / "fig_crystal.png"))
    return out


def cmd_modes_sweep(args):
    model, doc = _build_model(args, "modes-sweep", wells_required=True)
    section = doc.get("modes", {})
    r_values = _sweep_values(args, doc, "modes", "0.862:0.98:0.004")
    n_per_string = int(section.get("n_per_string", 2))
    points = modes.degeneracy_sweep(model, r_values, n_per_string=n_per_string,
                                    threads=args.threads)
    meta = _meta("modes-sweep", model,
                 {"modes": {"r_values": r_values, "n_per_string": n_per_string}})
    rows = [
        (
            p.r,
            p.separation / UM if p.separation is not None else None,
            p.f_com_in, p.f_com_out, p.f_stretch_in, p.f_stretch_out,
        )
        for p in points
    ]
    out = [_table(args.out, "mode_sweep",
                  ("R", "d_um", "f_com_in", "f_com_out", "f_str_in", "f_str_out"),
                  rows, meta, args.format)]
    if section.get("eigenvectors", False):
        spectra = {}
        for p in points:
            if p.error is not None:
                continue
            m = replace(model, drive=replace(model.drive, ratio_r=p.r),
                        axial_wells=tuple(replace(w, center_xy=None) for w in model.axial_wells))
            m = nodes.resolve_axial_wells(m)
            state = crystal.solve_equilibrium(m, 2 * n_per_string)
            spec = modes.normal_modes(m, state)
            spectra[f"{p.r:.6f}"] = {
                "frequencies_hz": (spec.frequencies / (2 * np.pi)).tolist(),
                "labels": [str(lab) for lab in spec.labels],
                "eigenvectors": spec.eigenvectors.tolist(),
            }
        out.append(write_json(Path(args.out) / "mode_eigenvectors.json", spectra, meta))
    if not args.no_figures:
        out.append(figures.modes_figure(points, Path(args.out) / "fig_mode_sweep.png"))
    return out


def cmd_corrugation(args):
    model, doc = _build_model(args, "corrugation", wells_required=True)
    section = doc.get("corrugation", {})
    n_ions = int(section.get("n_ions", 14))
    target = int(section.get("target_string", 0))
    variant = section.get("variant", "with_trap")
    state = crystal.solve_equilibrium(model, n_ions)
    report = corrugation.corrugation_parameter(
        model, state, target_string=target, variant=variant,
        n_samples=int(section.get("n_samples", 1001)),
    )
    meta = _meta("corrugation", model, {"corrugation": {
        "n_ions": n_ions, "target_string": target, "variant": variant}})
    payload = {
        "omega_int_hz": report.omega_int / (2 * np.pi),
        "omega_zero_hz": report.omega_zero / (2 * np.pi),
        "eta": report.eta,
        "barrier_meV": report.barrier / MEV if report.barrier is not None else None,
        "node_separation_um": (
            report.node_separation / UM if report.node_separation is not None else None),
        "state": _state_payload(state),
    }
    out = [write_json(Path(args.out) / "corrugation.json", payload, meta)]
    s = report.samples
    rows = [
        (z / UM, t / MEV, c / MEV, tr / MEV)
        for z, t, c, tr in zip(s.z, s.total, s.coulomb, s.trap)
    ]
    out.append(_table(args.out, "corrugation_samples",
                      ("z_um", "U_meV", "U_coulomb_meV", "U_trap_meV"), rows, meta, args.format))
    if not args.no_figures:
        out.append(figures.corrugation_figure(report, Path(args.out) / "fig_corrugation.png"))
        out.append(figures.crystal_figure(state, Path(args.out) / "fig_crystal.png"))
    return out


def cmd_slide(args):
    model, doc = _build_model(args, "slide", wells_required=True)
    section = doc.get("slide", {})
    n_per_string = int(section.get("n_per_string", 7))
    if "offsets_um" in section:
        offsets = [float(v) * UM for v in section["offsets_um"]]
    else:
        start = float(section.get("offset_start_um", 0.0))
        stop = float(section.get("offset_stop_um", 60.0))
        n = int(section.get("n_steps", 31))
        offsets = list(np.linspace(start * UM, stop * UM, n))
    result = corrugation.quasi_static_slide(
        model, n_per_string, offsets,
        moving_well=int(section.get("moving_well", 1)),
        slip_fraction=float(section.get("slip_fraction", 0.1)),
    )
    meta = _meta("slide", model, {"slide": {
        "n_per_string": n_per_string,
        "offsets_um": [o / UM for o in offsets],
        "moving_well": int(section.get("moving_well", 1)),
    }})
    rows = [
        (s.offset / UM, s.max_displacement / UM, s.slip, s.energy / MEV)
        for s in list(result.forward) + list(result.backward)
    ]
    out = [_table(args.out, "slide",
                  ("offset_um", "max_disp_um", "slip_flag", "energy_meV"),
                  rows, meta, args.format)]
    out.append(write_json(Path(args.out) / "slide_summary.json", {
        "slip_threshold_um": result.slip_threshold / UM,
        "slips_forward": result.slips_forward,
        "slips_backward": result.slips_backward,
        "hysteresis_um": result.hysteresis / UM if result.hysteresis is not None else None,
        "error": result.error,
    }, meta))
    if not args.no_figures:
        out.append(figures.slide_figure(result, Path(args.out) / "fig_slide.png"))
    return out


def cmd_dc_solve(args):
    if args.config is None:
        raise ConfigError("dc-solve requires --config with a 'dc' section")
    doc = load_config(args.config)
    section = doc.get("dc")
    if not isinstance(section, dict):
        raise ConfigError("missing required section 'dc'")
    rect_docs = section.get("electrodes")
    if not rect_docs:
        raise ConfigError("dc.electrodes: expected a nonempty list")
    rects = []
    for i, r in enumerate(rect_docs):
        rects.append(RectElectrode(
            x_min=float(r["x_min_um"]) * UM, x_max=float(r["x_max_um"]) * UM,
            z_min=float(r["z_min_um"]) * UM, z_max=float(r["z_max_um"]) * UM,
            label=str(r.get("label", f"rect{i}")),
        ))
    basis = dc_control.DcBasis(electrodes=tuple(rects))
    stray = section.get("stray_field")
    constraints = dc_control.DcConstraintSet(
        null_points=tuple(
            tuple(float(c) * UM for c in p) for p in section.get("null_points_um", [])
        ),
        curvature_targets=tuple(
            (
                tuple(float(c) * UM for c in t["point_um"]),
                tuple(float(c) for c in t["direction"]),
                float(t["value"]),
            )
            for t in section.get("curvature_targets", [])
        ),
        potential_targets=tuple(
            (tuple(float(c) * UM for c in t["point_um"]), float(t["value"]))
            for t in section.get("potential_targets", [])
        ),
        stray_field=tuple(float(c) for c in stray) if stray is not None else None,
    )
    solution = dc_control.solve_dc_voltages(basis, constraints)
    meta = run_metadata("dc-solve", {"dc": section}, __version__)
    return [write_json(Path(args.out) / "dc_solution.json", {
        "voltages": solution.voltages.tolist(),
        "electrodes": [e.label for e in basis.electrodes],
        "residuals": solution.residuals.tolist(),
        "constraints": list(solution.labels),
        "feasible": solution.feasible,
        "infeasible_rows": list(solution.infeasible_rows),
        "method": solution.method,
        "objective": solution.objective,
    }, meta)]


def cmd_repro(args):
    """Reproduction suite: potential grids, node-distance curve, mode
    degeneracy sweep, and the corrugation report, in one run."""
    out_root = Path(args.out)
    geometry = canonical_geometry()
    drive = DriveConfig(v_rf=42.5, ratio_r=0.0, omega_rf=2 * np.pi * 27.2e6)
    written = []

    for r in (0.0, 0.85, 0.90):
        gdir = out_root / "potential-grids" / f"r{r:.2f}"
        model = TrapModel(geometry=geometry, drive=replace(drive, ratio_r=r))
        grid = fld.pseudopotential_grid(model, (-120 * UM, 120 * UM), (2 * UM, 200 * UM),
                                        241, 199, clip_threshold=0.1 * EV)
        meta = _meta("repro/potential-grid", model)
        rows = [
            (xv / UM, yv / UM, grid.phi[i, j] / MEV)
            for i, yv in enumerate(grid.y)
            for j, xv in enumerate(grid.x)
        ]
        written.append(_table(gdir, "grid", ("x_um", "y_um", "phi_meV"), rows, meta, args.format))
        if not args.no_figures:
            written.append(figures.potential_grid_figure(
                grid, geometry, gdir / "fig_potential_grid.png", title=f"R = {r:g}"))

    # node distance and barrier vs R
    model = TrapModel(geometry=geometry, drive=replace(drive, ratio_r=0.9))
    r_values = parse_sweep("0.84:1.0:0.005")
    points = nodes.separation_sweep(model, r_values, threads=args.threads)
    meta = _meta("repro/nodes", model, {"nodes": {"r_values": r_values}})
    rows = [
        (p.r, p.separation / UM if p.separation else None,
         p.barrier / MEV if p.barrier else None, p.topology)
        for p in points
    ]
    written.append(_table(out_root / "node-separation", "node_sweep",
                          ("R", "d_um", "barrier_meV", "topology"), rows, meta, args.format))
    if not args.no_figures:
        written.append(figures.separation_figure(
            points, out_root / "node-separation" / "fig_node_separation.png"))

    # mode degeneracy vs string distance
    wells = (AxialConfinement(omega_z=2 * np.pi * 190e3),
             AxialConfinement(omega_z=2 * np.pi * 190e3))
    m2 = TrapModel(geometry=geometry, drive=replace(drive, ratio_r=0.9), axial_wells=wells)
    d_targets = [20e-6, 30e-6, 40e-6, 55e-6, 70e-6, 90e-6, 110e-6, 140e-6, 170e-6, 200e-6]
    r_for_d = [nodes.ratio_for_separation(m2, d) for d in d_targets]
    mpts = modes.degeneracy_sweep(m2, r_for_d, threads=args.threads)
    meta = _meta("repro/modes", m2, {"modes": {"r_values": r_for_d}})
    rows = [
        (p.r, p.separation / UM if p.separation else None,
         p.f_com_in, p.f_com_out, p.f_stretch_in, p.f_stretch_out)
        for p in mpts
    ]
    written.append(_table(out_root / "mode-degeneracy", "mode_sweep",
                          ("R", "d_um", "f_com_in", "f_com_out", "f_str_in", "f_str_out"),
                          rows, meta, args.format))
    if not args.no_figures:
        written.append(figures.modes_figure(mpts, out_root / "mode-degeneracy" / "fig_mode_sweep.png"))

    # corrugation report at d = 30 um
    wells15 = (AxialConfinement(omega_z=2 * np.pi * 15e3),
               AxialConfinement(omega_z=2 * np.pi * 15e3))
    m7 = TrapModel(geometry=geometry, drive=DriveConfig(v_rf=60.0, ratio_r=0.9,
                                                        omega_rf=2 * np.pi * 27.2e6),
                   axial_wells=wells15)
    r30 = nodes.ratio_for_separation(m7, 30e-6)
    m7 = replace(m7, drive=replace(m7.drive, ratio_r=r30))
    state = crystal.solve_equilibrium(m7, 14)
    report = corrugation.corrugation_parameter(m7, state)
    meta = _meta("repro/corrugation", m7)
    cdir = out_root / "corrugation"
    written.append(write_json(cdir / "corrugation.json", {
        "omega_int_hz": report.omega_int / (2 * np.pi),
        "omega_zero_hz": report.omega_zero / (2 * np.pi),
        "eta": report.eta,
        "barrier_meV": report.barrier / MEV if report.barrier is not None else None,
        "node_separation_um": report.node_separation / UM,
        "state": _state_payload(state),
    }, meta))
    s = report.samples
    rows = [(z / UM, t / MEV, c / MEV, tr / MEV)
            for z, t, c, tr in zip(s.z, s.total, s.coulomb, s.trap)]
    written.append(_table(cdir, "corrugation_samples",
                          ("z_um", "U_meV", "U_coulomb_meV", "U_trap_meV"), rows, meta, args.format))
    if not args.no_figures:
        written.append(figures.corrugation_figure(report, cdir / "fig_corrugation.png"))
        written.append(figures.crystal_figure(state, cdir / "fig_crystal.png"))
    return written


COMMANDS = {
    "potential-grid": cmd_potential_grid,
    "nodes": cmd_nodes,
    "critical": cmd_critical,
    "crystal": cmd_crystal,
    "modes-sweep": cmd_modes_sweep,
    "corrugation": cmd_corrugation,
    "slide": cmd_slide,
    "dc-solve": cmd_dc_solve,
    "repro": cmd_repro,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="trapscape",
        description="Surface-electrode trap double-well simulator: nodes, "
                    "crystals, modes, corrugation.",
    )
    parser.add_argument("--version", action="version", version=f"trapscape {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        p = sub.add_parser(name, help=fn.__doc__ or name)
        p.add_argument("--config", type=str, default=None, help="YAML config path")
        p.add_argument("--out", type=str, default="out", help="output directory")
        p.add_argument("--threads", type=int, default=None,
                       help="worker threads for sweeps (default: all cores)")
        p.add_argument("--format", choices=("csv", "json"), default="csv",
                       help="table format (reports are always JSON)")
        p.add_argument("--no-figures", action="store_true",
                       help="skip figure rendering")
        if name in ("nodes", "modes-sweep"):
            p.add_argument("--sweep", type=str, default=None,
                           help="ratio sweep as start:stop:step")
        p.set_defaults(handler=fn)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(
        level=os.environ.get("TRAPSCAPE_LOG", "WARNING").upper(),
        format="%(levelname)s %(name)s: %(message)s",
    )
    args = build_parser().parse_args(argv)
    try:
        written = args.handler(args)
    except ConfigError as exc:
        _emit_error("config", exc, EXIT_CONFIG)
        return EXIT_CONFIG
    except (
        nodes.ConvergenceError,
        nodes.TopologyError,
        modes.SaddleError,
        corrugation.CorrugationError,
        fld.DomainError,
        np.linalg.LinAlgError,
    ) as exc:
        _emit_error("numerical", exc, EXIT_NUMERICAL)
        return EXIT_NUMERICAL
    except ValueError as exc:
        _emit_error("numerical", exc, EXIT_NUMERICAL)
        return EXIT_NUMERICAL
    for path in written:
        print(path)
    return 0


def _emit_error(kind, exc, code):
    sys.stderr.write(json.dumps({
        "error": {"kind": kind, "type": type(exc).__name__,
                  "message": str(exc), "exit_code": code}
    }) + "\n")


if __name__ == "__main__":
    raise SystemExit(main())
