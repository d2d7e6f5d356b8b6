"""RF field, ponderomotive pseudopotential, and total trapping potential.

The RF drive puts ``v_rf`` on the outer RF strips and ``ratio_r * v_rf`` on
the center-RF strip, in phase; side strips and the remaining plane are RF
ground.  The time-averaged pseudopotential for a charge q of mass m in the
oscillating field E is q^2 |E|^2 / (4 m Omega^2).

Everything here reduces to sums of analytic edge terms of the gapless-plane
strip solution, so fields, Jacobians, and pseudopotential Hessians are exact
derivatives (no finite differencing).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .constants import CA40_MASS, ELEMENTARY_CHARGE, EV
from .geometry import DomainError, TrapGeometry, _check_above_plane


@dataclass(frozen=True)
class DriveConfig:
    """RF drive: amplitude (V), center-to-outer ratio R, angular frequency (rad/s)."""

    v_rf: float
    ratio_r: float
    omega_rf: float
    phase: str = "in_phase"

    def __post_init__(self):
        if self.v_rf <= 0:
            raise ValueError("v_rf must be > 0")
        if self.omega_rf <= 0:
            raise ValueError("omega_rf must be > 0")
        if not 0.0 <= self.ratio_r <= 3.0:
            raise ValueError(f"ratio_r must be in [0, 3.0], got {self.ratio_r}")
        if self.phase != "in_phase":
            raise ValueError("only in-phase center-RF drive is supported")


@dataclass(frozen=True)
class IonSpecies:
    mass: float    # kg
    charge: float  # C

    def __post_init__(self):
        if self.mass <= 0:
            raise ValueError("mass must be > 0")
        if self.charge == 0:
            raise ValueError("charge must be nonzero")


def ca40() -> IonSpecies:
    """Singly charged calcium-40 (the default species)."""
    return IonSpecies(mass=CA40_MASS, charge=ELEMENTARY_CHARGE)


@dataclass(frozen=True)
class AxialConfinement:
    """Harmonic axial well attached to one RF node line.

    ``radial_deconfinement_split`` = (alpha, beta) distributes the Laplace
    counter-curvature over x and y; (0.5, 0.5) is the physical default,
    (0, 0) disables it for a pure-z harmonic.  ``center_xy`` = None means
    "resolve to the RF node" (see nodes.resolve_axial_wells).
    """

    omega_z: float
    center_z: float = 0.0
    center_xy: tuple[float, float] | None = None
    radial_deconfinement_split: tuple[float, float] = (0.5, 0.5)

    def __post_init__(self):
        if self.omega_z < 0:
            raise ValueError("omega_z must be >= 0")
        a, b = self.radial_deconfinement_split
        if a < 0 or b < 0 or not (abs(a + b - 1.0) < 1e-12 or a + b == 0.0):
            raise ValueError(
                "radial_deconfinement_split must be nonnegative with sum 1 "
                "(or (0, 0) to disable)"
            )
        if self.center_xy is not None:
            object.__setattr__(self, "center_xy", tuple(float(c) for c in self.center_xy))


@dataclass(frozen=True)
class TrapModel:
    """Geometry + drive + species + axial wells: the full potential landscape."""

    geometry: TrapGeometry
    drive: DriveConfig
    species: IonSpecies = field(default_factory=ca40)
    axial_wells: tuple[AxialConfinement, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "axial_wells", tuple(self.axial_wells))

    @property
    def pseudo_coefficient(self) -> float:
        """q^2 / (4 m Omega^2), J per (V/m)^2."""
        q = self.species.charge
        return q * q / (4.0 * self.species.mass * self.drive.omega_rf**2)


def _rf_edges(model: TrapModel):
    """Edge positions and weights of all RF-driven strips (gap-expanded).

    Each strip at voltage v contributes +v/pi at x_max and -v/pi at x_min.
    """
    a, w = [], []
    for strip in model.geometry.effective_strips():
        if strip.role == "rf":
            v = model.drive.v_rf
        elif strip.role == "center_rf":
            v = model.drive.ratio_r * model.drive.v_rf
        else:
            continue
        a.extend((strip.x_max, strip.x_min))
        w.extend((v / np.pi, -v / np.pi))
    return np.asarray(a), np.asarray(w)


def _phi_derivs(a, w, x, y, order: int):
    """Summed derivatives of phi = sum_k w_k * arctan((a_k - x)/y).

    Returns a dict with keys among phi, x, y, xx, xy, yy, xxx, xxy up to
    ``order``.  The remaining third derivatives follow from Laplace:
    phi_xyy = -phi_xxx and phi_yyy = -phi_xxy.
    """
    x = np.asarray(x, dtype=float)[..., None]
    yb = np.asarray(y, dtype=float)[..., None]
    s = a - x
    r2 = yb * yb + s * s
    out = {}
    if order >= 0:
        out["phi"] = (np.arctan2(s, yb) * w).sum(axis=-1)
    if order >= 1:
        out["x"] = (-yb / r2 * w).sum(axis=-1)
        out["y"] = (-s / r2 * w).sum(axis=-1)
    if order >= 2:
        r4 = r2 * r2
        out["xx"] = (-2.0 * yb * s / r4 * w).sum(axis=-1)
        out["xy"] = ((yb * yb - s * s) / r4 * w).sum(axis=-1)
        out["yy"] = -out["xx"]
    if order >= 3:
        r6 = r4 * r2
        out["xxx"] = ((2.0 * yb / r4 - 8.0 * yb * s * s / r6) * w).sum(axis=-1)
        out["xxy"] = ((-2.0 * s / r4 + 8.0 * yb * yb * s / r6) * w).sum(axis=-1)
    return out


def _split_point(p):
    p = np.asarray(p, dtype=float)
    if p.shape[-1] != 2:
        raise ValueError("expected (x, y) points with shape (..., 2)")
    x, y = p[..., 0], p[..., 1]
    _check_above_plane(y)
    return x, y


def rf_potential(model: TrapModel, p) -> np.ndarray | float:
    """Instantaneous RF potential amplitude phi_RF(x, y) in V."""
    x, y = _split_point(p)
    a, w = _rf_edges(model)
    phi = _phi_derivs(a, w, x, y, order=0)["phi"]
    return phi if np.ndim(phi) else float(phi)


def rf_field(model: TrapModel, p) -> np.ndarray:
    """RF field amplitude vector E = -grad(phi_RF), shape (..., 2) in V/m."""
    x, y = _split_point(p)
    a, w = _rf_edges(model)
    d = _phi_derivs(a, w, x, y, order=1)
    return np.stack([-d["x"], -d["y"]], axis=-1)


def rf_field_jacobian(model: TrapModel, p) -> np.ndarray:
    """dE_i/dx_j, shape (..., 2, 2) in V/m^2; symmetric since E is curl-free."""
    x, y = _split_point(p)
    a, w = _rf_edges(model)
    d = _phi_derivs(a, w, x, y, order=2)
    rows = np.stack(
        [
            np.stack([-d["xx"], -d["xy"]], axis=-1),
            np.stack([-d["xy"], -d["yy"]], axis=-1),
        ],
        axis=-2,
    )
    return rows


def pseudopotential(model: TrapModel, p) -> np.ndarray | float:
    """Ponderomotive pseudopotential q^2 |E|^2 / (4 m Omega^2) in J."""
    x, y = _split_point(p)
    a, w = _rf_edges(model)
    d = _phi_derivs(a, w, x, y, order=1)
    phi = model.pseudo_coefficient * (d["x"] * d["x"] + d["y"] * d["y"])
    return phi if np.ndim(phi) else float(phi)


def pseudopotential_gradient(model: TrapModel, p) -> np.ndarray:
    """Gradient of the pseudopotential, shape (..., 2) in J/m (= N)."""
    x, y = _split_point(p)
    a, w = _rf_edges(model)
    d = _phi_derivs(a, w, x, y, order=2)
    c2 = 2.0 * model.pseudo_coefficient
    gx = c2 * (d["x"] * d["xx"] + d["y"] * d["xy"])
    gy = c2 * (d["x"] * d["xy"] + d["y"] * d["yy"])
    return np.stack([gx, gy], axis=-1)


def pseudopotential_hessian(model: TrapModel, p) -> np.ndarray:
    """Second derivatives of the pseudopotential, shape (..., 2, 2) in J/m^2."""
    x, y = _split_point(p)
    a, w = _rf_edges(model)
    d = _phi_derivs(a, w, x, y, order=3)
    xyy = -d["xxx"]
    yyy = -d["xxy"]
    c2 = 2.0 * model.pseudo_coefficient
    hxx = c2 * (d["xx"] ** 2 + d["xy"] ** 2 + d["x"] * d["xxx"] + d["y"] * d["xxy"])
    hxy = c2 * (d["xx"] * d["xy"] + d["xy"] * d["yy"] + d["x"] * d["xxy"] + d["y"] * xyy)
    hyy = c2 * (d["xy"] ** 2 + d["yy"] ** 2 + d["x"] * xyy + d["y"] * yyy)
    rows = np.stack(
        [np.stack([hxx, hxy], axis=-1), np.stack([hxy, hyy], axis=-1)], axis=-2
    )
    return rows


def mathieu_q_estimate(model: TrapModel, p) -> float:
    """Proxy for the Mathieu stability parameter from the field-gradient scale.

    q_est = 2 q |dE| / (m Omega^2) with |dE| the spectral norm of the field
    Jacobian.  Values above ~0.3 mean the secular approximation is strained.
    """
    jac = np.asarray(rf_field_jacobian(model, p))
    norm = np.linalg.norm(jac, ord=2, axis=(-2, -1))
    q = abs(model.species.charge)
    est = 2.0 * q * norm / (model.species.mass * model.drive.omega_rf**2)
    return est if np.ndim(est) else float(est)


@dataclass(frozen=True)
class PotentialGrid:
    """Pseudopotential sampled on a rectangular grid.

    ``phi`` is row-major with shape (n_y, n_x): phi[i, j] belongs to
    (x[j], y[i]).  ``clipped`` marks values above ``clip_threshold`` (for
    plotting parity with saturated contour plots).
    """

    x: np.ndarray
    y: np.ndarray
    phi: np.ndarray
    clip_threshold: float

    @property
    def clipped(self) -> np.ndarray:
        return self.phi > self.clip_threshold

    def local_minima(self) -> list[tuple[float, float, float]]:
        """Interior grid points lower than all 8 neighbors, as (x, y, phi)."""
        c = self.phi[1:-1, 1:-1]
        mask = np.ones_like(c, dtype=bool)
        for di in (-1, 0, 1):
            for dj in (-1, 0, 1):
                if di == 0 and dj == 0:
                    continue
                mask &= c < self.phi[1 + di : self.phi.shape[0] - 1 + di,
                                     1 + dj : self.phi.shape[1] - 1 + dj]
        ii, jj = np.nonzero(mask)
        return [(float(self.x[j + 1]), float(self.y[i + 1]), float(c[i, j]))
                for i, j in zip(ii, jj)]


def pseudopotential_grid(
    model: TrapModel,
    x_range: tuple[float, float],
    y_range: tuple[float, float],
    n_x: int,
    n_y: int,
    clip_threshold: float = 0.1 * EV,
) -> PotentialGrid:
    """Sample the pseudopotential on an n_y x n_x grid (row-major, rows = y)."""
    if n_x < 2 or n_y < 2:
        raise ValueError("n_x and n_y must be >= 2")
    if not (x_range[0] < x_range[1]) or not (y_range[0] < y_range[1]):
        raise ValueError("ranges must be increasing")
    if y_range[0] <= 0:
        raise DomainError("y_range must be strictly positive")
    x = np.linspace(x_range[0], x_range[1], n_x)
    y = np.linspace(y_range[0], y_range[1], n_y)
    xx, yy = np.meshgrid(x, y)
    phi = pseudopotential(model, np.stack([xx, yy], axis=-1))
    return PotentialGrid(x=x, y=y, phi=np.asarray(phi), clip_threshold=clip_threshold)


def _well(model: TrapModel, well_index: int) -> AxialConfinement:
    try:
        well = model.axial_wells[well_index]
    except IndexError:
        raise IndexError(
            f"well_index {well_index} out of range for {len(model.axial_wells)} wells"
        ) from None
    return well


def _well_center_xy(well: AxialConfinement):
    if well.center_xy is None:
        a, b = well.radial_deconfinement_split
        if a == 0.0 and b == 0.0:
            return 0.0, 0.0  # irrelevant: no radial term
        raise ValueError(
            "axial well has unresolved center_xy; resolve it to an RF node first "
            "(nodes.resolve_axial_wells) or set center_xy explicitly"
        )
    return well.center_xy


def axial_potential(model: TrapModel, p, well_index: int) -> np.ndarray | float:
    """Harmonic axial well energy at (x, y, z) points, shape (..., 3), in J."""
    well = _well(model, well_index)
    p = np.asarray(p, dtype=float)
    x, y, z = p[..., 0], p[..., 1], p[..., 2]
    cx, cy = _well_center_xy(well)
    a, b = well.radial_deconfinement_split
    k = 0.5 * model.species.mass * well.omega_z**2
    u = k * ((z - well.center_z) ** 2 - a * (x - cx) ** 2 - b * (y - cy) ** 2)
    return u if np.ndim(u) else float(u)


def total_potential(model: TrapModel, p, well_index: int) -> np.ndarray | float:
    """Pseudopotential + axial well energy for a single ion at (x, y, z), J."""
    p = np.asarray(p, dtype=float)
    phi = pseudopotential(model, p[..., :2])
    return phi + axial_potential(model, p, well_index)


def total_potential_gradient(model: TrapModel, p, well_index: int) -> np.ndarray:
    """Gradient of total_potential, shape (..., 3), in N."""
    well = _well(model, well_index)
    p = np.asarray(p, dtype=float)
    x, y, z = p[..., 0], p[..., 1], p[..., 2]
    g2 = pseudopotential_gradient(model, p[..., :2])
    cx, cy = _well_center_xy(well)
    a, b = well.radial_deconfinement_split
    k = model.species.mass * well.omega_z**2
    gx = g2[..., 0] - k * a * (x - cx)
    gy = g2[..., 1] - k * b * (y - cy)
    gz = k * (z - well.center_z) * np.ones_like(x)
    return np.stack([gx, gy, gz], axis=-1)


def total_potential_hessian(model: TrapModel, p, well_index: int) -> np.ndarray:
    """Second derivatives of total_potential, shape (..., 3, 3), in J/m^2."""
    well = _well(model, well_index)
    p = np.asarray(p, dtype=float)
    h2 = pseudopotential_hessian(model, p[..., :2])
    a, b = well.radial_deconfinement_split
    k = model.species.mass * well.omega_z**2
    shape = np.shape(p)[:-1] + (3, 3)
    h = np.zeros(shape)
    h[..., :2, :2] = h2
    h[..., 0, 0] -= k * a
    h[..., 1, 1] -= k * b
    h[..., 2, 2] += k
    return h
