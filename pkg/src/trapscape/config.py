"""YAML run configuration: parsing, validation, and model construction.

The schema uses explicit units in key names (``*_um``, ``f_rf_mhz``,
``f_z_hz``) and converts to SI at this boundary.  Parse errors surface the
YAML line/column; validation errors name the offending key path.  The
resolved configuration echoed into every artifact is itself a valid config
document (JSON is a YAML subset), so outputs round-trip.
"""

from __future__ import annotations

import math
from pathlib import Path

import yaml

from .constants import ATOMIC_MASS, ELEMENTARY_CHARGE
from .fields import AxialConfinement, DriveConfig, IonSpecies, TrapModel, ca40
from .geometry import (
    CANONICAL_GAP,
    RectElectrode,
    StripElectrode,
    TrapGeometry,
    canonical_geometry,
)

UM = 1e-6


class ConfigError(ValueError):
    """Configuration file is missing, malformed, or fails validation."""


def _require(mapping, key, path, types=None):
    if key not in mapping:
        raise ConfigError(f"{path}: missing required key {key!r}")
    value = mapping[key]
    if types is not None and not isinstance(value, types):
        raise ConfigError(f"{path}.{key}: expected {types}, got {type(value).__name__}")
    return value


def _number(mapping, key, path, default=None, positive=False, nonnegative=False):
    if key not in mapping:
        if default is None:
            raise ConfigError(f"{path}: missing required key {key!r}")
        return default
    value = mapping[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{path}.{key}: expected a number, got {value!r}")
    value = float(value)
    if positive and value <= 0:
        raise ConfigError(f"{path}.{key}: must be > 0, got {value}")
    if nonnegative and value < 0:
        raise ConfigError(f"{path}.{key}: must be >= 0, got {value}")
    if not math.isfinite(value):
        raise ConfigError(f"{path}.{key}: must be finite")
    return value


def load_config(path) -> dict:
    """Read and parse a YAML config file; missing file or bad YAML raise
    ConfigError with location diagnostics."""
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    try:
        doc = yaml.safe_load(p.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"config parse error in {p}: {exc}") from exc
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise ConfigError(f"{p}: top level must be a mapping")
    return doc


def geometry_from_config(doc: dict) -> TrapGeometry:
    geo = doc.get("geometry")
    if geo is None:
        return canonical_geometry()
    if not isinstance(geo, dict):
        raise ConfigError("geometry: expected a mapping")
    gap = _number(geo, "gap_um", "geometry", default=CANONICAL_GAP / UM, nonnegative=True) * UM
    treatment = geo.get("gap_treatment", "grounded")
    strips_doc = geo.get("strips")
    if strips_doc is None:
        base = canonical_geometry(gap=gap, gap_treatment=treatment)
        strips = base.strips
    else:
        if not isinstance(strips_doc, list) or not strips_doc:
            raise ConfigError("geometry.strips: expected a nonempty list")
        strips = []
        for i, s in enumerate(strips_doc):
            path = f"geometry.strips[{i}]"
            if not isinstance(s, dict):
                raise ConfigError(f"{path}: expected a mapping")
            strips.append(
                StripElectrode(
                    x_min=_number(s, "x_min_um", path) * UM,
                    x_max=_number(s, "x_max_um", path) * UM,
                    role=_require(s, "role", path, types=str),
                )
            )
    rects = []
    for i, r in enumerate(geo.get("dc_rects", []) or []):
        path = f"geometry.dc_rects[{i}]"
        if not isinstance(r, dict):
            raise ConfigError(f"{path}: expected a mapping")
        rects.append(
            RectElectrode(
                x_min=_number(r, "x_min_um", path) * UM,
                x_max=_number(r, "x_max_um", path) * UM,
                z_min=_number(r, "z_min_um", path) * UM,
                z_max=_number(r, "z_max_um", path) * UM,
                label=str(r.get("label", f"rect{i}")),
            )
        )
    try:
        return TrapGeometry(strips=tuple(strips), gap=gap, dc_rects=tuple(rects),
                            gap_treatment=treatment)
    except ValueError as exc:
        raise ConfigError(f"geometry: {exc}") from exc


def species_from_config(doc: dict) -> IonSpecies:
    sp = doc.get("species")
    if sp is None:
        return ca40()
    if not isinstance(sp, dict):
        raise ConfigError("species: expected a mapping")
    mass = _number(sp, "mass_amu", "species", default=40.0, positive=True) * ATOMIC_MASS
    charge = _number(sp, "charge_e", "species", default=1.0) * ELEMENTARY_CHARGE
    try:
        return IonSpecies(mass=mass, charge=charge)
    except ValueError as exc:
        raise ConfigError(f"species: {exc}") from exc


def drive_from_config(doc: dict) -> tuple[DriveConfig, float | None]:
    """Returns the drive and an optional target node separation (m) that the
    caller should resolve into a ratio with nodes.ratio_for_separation."""
    dr = doc.get("drive")
    if dr is None:
        raise ConfigError("missing required section 'drive'")
    if not isinstance(dr, dict):
        raise ConfigError("drive: expected a mapping")
    v_rf = _number(dr, "v_rf", "drive", positive=True)
    f_rf = _number(dr, "f_rf_mhz", "drive", positive=True)
    has_r = "r" in dr
    has_d = "d_target_um" in dr
    if has_r == has_d:
        raise ConfigError("drive: give exactly one of 'r' or 'd_target_um'")
    r = _number(dr, "r", "drive", default=0.0, nonnegative=True) if has_r else 1.0
    d_target = _number(dr, "d_target_um", "drive", positive=True) * UM if has_d else None
    try:
        drive = DriveConfig(v_rf=v_rf, ratio_r=r, omega_rf=2.0 * math.pi * f_rf * 1e6)
    except ValueError as exc:
        raise ConfigError(f"drive: {exc}") from exc
    return drive, d_target


def wells_from_config(doc: dict, required: bool) -> tuple[AxialConfinement, ...]:
    wl = doc.get("wells")
    if wl is None:
        if required:
            raise ConfigError("missing required section 'wells' (list of axial wells)")
        return ()
    if not isinstance(wl, list) or not wl:
        raise ConfigError("wells: expected a nonempty list")
    wells = []
    for i, w in enumerate(wl):
        path = f"wells[{i}]"
        if not isinstance(w, dict):
            raise ConfigError(f"{path}: expected a mapping")
        f_z = _number(w, "f_z_hz", path, nonnegative=True)
        center_z = _number(w, "center_z_um", path, default=0.0) * UM
        split = w.get("split", [0.5, 0.5])
        if not isinstance(split, list) or len(split) != 2:
            raise ConfigError(f"{path}.split: expected [alpha, beta]")
        center_xy = w.get("center_xy_um")
        if center_xy is not None:
            if not isinstance(center_xy, list) or len(center_xy) != 2:
                raise ConfigError(f"{path}.center_xy_um: expected [x, y]")
            center_xy = (float(center_xy[0]) * UM, float(center_xy[1]) * UM)
        try:
            wells.append(
                AxialConfinement(
                    omega_z=2.0 * math.pi * f_z,
                    center_z=center_z,
                    center_xy=center_xy,
                    radial_deconfinement_split=(float(split[0]), float(split[1])),
                )
            )
        except ValueError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    return tuple(wells)


def model_from_config(doc: dict, wells_required: bool = False) -> tuple[TrapModel, float | None]:
    """Build the TrapModel; the second element is an unresolved node-
    separation target (m) when the drive gave d_target_um instead of r."""
    drive, d_target = drive_from_config(doc)
    model = TrapModel(
        geometry=geometry_from_config(doc),
        drive=drive,
        species=species_from_config(doc),
        axial_wells=wells_from_config(doc, required=wells_required),
    )
    return model, d_target


def _display(si_value: float, forward) -> float:
    """Display-unit float whose forward conversion reproduces si_value bit
    for bit (so echoed configs rerun identically); nearest value otherwise."""
    estimate = si_value / forward(1.0) if si_value != 0.0 else 0.0
    for cand in (
        estimate,
        math.nextafter(estimate, math.inf),
        math.nextafter(estimate, -math.inf),
    ):
        if forward(cand) == si_value:
            return cand
    return estimate


def _um(si_value: float) -> float:
    return _display(si_value, lambda v: v * UM)


def model_to_config(model: TrapModel) -> dict:
    """Resolved-model echo: a dict that is itself a valid config document."""
    geo = model.geometry
    doc = {
        "geometry": {
            "gap_um": _um(geo.gap),
            "gap_treatment": geo.gap_treatment,
            "strips": [
                {"x_min_um": _um(s.x_min), "x_max_um": _um(s.x_max), "role": s.role}
                for s in geo.strips
            ],
            "dc_rects": [
                {
                    "label": r.label,
                    "x_min_um": _um(r.x_min),
                    "x_max_um": _um(r.x_max),
                    "z_min_um": _um(r.z_min),
                    "z_max_um": _um(r.z_max),
                }
                for r in geo.dc_rects
            ],
        },
        "drive": {
            "v_rf": model.drive.v_rf,
            "r": model.drive.ratio_r,
            "f_rf_mhz": _display(
                model.drive.omega_rf, lambda f: 2.0 * math.pi * f * 1e6
            ),
        },
        "species": {
            "mass_amu": _display(model.species.mass, lambda v: v * ATOMIC_MASS),
            "charge_e": _display(model.species.charge, lambda v: v * ELEMENTARY_CHARGE),
        },
        "wells": [
            {
                "f_z_hz": _display(w.omega_z, lambda f: 2.0 * math.pi * f),
                "center_z_um": _um(w.center_z),
                "split": list(w.radial_deconfinement_split),
                **(
                    {"center_xy_um": [_um(w.center_xy[0]), _um(w.center_xy[1])]}
                    if w.center_xy is not None
                    else {}
                ),
            }
            for w in model.axial_wells
        ],
    }
    if not doc["wells"]:
        del doc["wells"]
    return doc


def parse_sweep(spec: str, path: str = "sweep") -> list[float]:
    """Parse "start:stop:step" into an inclusive list of ratios."""
    try:
        start_s, stop_s, step_s = str(spec).split(":")
        start, stop, step = float(start_s), float(stop_s), float(step_s)
    except ValueError as exc:
        raise ConfigError(f"{path}: expected 'start:stop:step', got {spec!r}") from exc
    if step <= 0 or stop < start:
        raise ConfigError(f"{path}: need step > 0 and stop >= start, got {spec!r}")
    n = int(round((stop - start) / step))
    values = [start + k * step for k in range(n + 1)]
    if values[-1] > stop + 1e-12:
        values.pop()
    return values
