"""Planar electrode layout and analytic gapless-plane electrostatics.

The trap surface is modeled as an infinite grounded plane at y = 0 with
electrodes as held-potential patches.  Strips are infinite along z and give
the 2D radial potential; rectangles give the full 3D potential used for the
DC electrode basis.  All lengths are meters, potentials volts.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

STRIP_ROLES = ("rf", "center_rf", "side_dc", "ground")


class DomainError(ValueError):
    """Evaluation point outside the physical domain (requires y > 0)."""


@dataclass(frozen=True)
class StripElectrode:
    """Strip electrode, infinite along z, spanning [x_min, x_max] at y = 0."""

    x_min: float
    x_max: float
    role: str

    def __post_init__(self):
        if not self.x_min < self.x_max:
            raise ValueError(f"strip requires x_min < x_max, got [{self.x_min}, {self.x_max}]")
        if self.role not in STRIP_ROLES:
            raise ValueError(f"unknown strip role {self.role!r}; expected one of {STRIP_ROLES}")

    @property
    def width(self) -> float:
        return self.x_max - self.x_min


@dataclass(frozen=True)
class RectElectrode:
    """Rectangular patch [x_min, x_max] x [z_min, z_max] in the y = 0 plane."""

    x_min: float
    x_max: float
    z_min: float
    z_max: float
    label: str = ""

    def __post_init__(self):
        if not self.x_min < self.x_max:
            raise ValueError(f"rect requires x_min < x_max, got [{self.x_min}, {self.x_max}]")
        if not self.z_min < self.z_max:
            raise ValueError(f"rect requires z_min < z_max, got [{self.z_min}, {self.z_max}]")


GAP_TREATMENTS = ("grounded", "expand")

# Canonical grounded-gap width, calibrated against the published node
# distance / barrier / critical-ratio behavior; the fabricated gaps are
# quoted as "about 4 um".
CANONICAL_GAP = 4.5e-6


@dataclass(frozen=True)
class TrapGeometry:
    """Ordered set of coplanar strips plus optional DC rectangles.

    ``strips`` holds metal extents separated by physical gaps of width
    ``gap``.  ``gap_treatment`` selects how the gapless-plane solver sees
    them: "grounded" keeps the metal as drawn with the gaps as grounded
    plane; "expand" widens every strip by gap/2 per side toward its
    neighbors so adjacent strips tile exactly.
    """

    strips: tuple[StripElectrode, ...]
    gap: float = 4e-6
    dc_rects: tuple[RectElectrode, ...] = ()
    gap_treatment: str = "grounded"

    def __post_init__(self):
        if self.gap < 0:
            raise ValueError("gap must be >= 0")
        if self.gap_treatment not in GAP_TREATMENTS:
            raise ValueError(
                f"gap_treatment must be one of {GAP_TREATMENTS}, got {self.gap_treatment!r}"
            )
        strips = tuple(sorted(self.strips, key=lambda s: s.x_min))
        object.__setattr__(self, "strips", strips)
        object.__setattr__(self, "dc_rects", tuple(self.dc_rects))
        for which, group in (("metal", strips), ("gap-expanded", self.expanded_strips())):
            for left, right in zip(group, group[1:]):
                if left.x_max > right.x_min + 1e-12:
                    raise ValueError(
                        f"{which} strips overlap: [{left.x_min}, {left.x_max}] "
                        f"and [{right.x_min}, {right.x_max}]"
                    )

    def expanded_strips(self) -> tuple[StripElectrode, ...]:
        """Strips widened by gap/2 per side (they tile when gaps are ``gap`` wide)."""
        half = 0.5 * self.gap
        return tuple(
            replace(s, x_min=s.x_min - half, x_max=s.x_max + half) for s in self.strips
        )

    def effective_strips(self) -> tuple[StripElectrode, ...]:
        """Strips as seen by the field solver, per ``gap_treatment``."""
        if self.gap_treatment == "expand":
            return self.expanded_strips()
        return self.strips

    def strips_with_role(self, role: str) -> tuple[StripElectrode, ...]:
        return tuple(s for s in self.strips if s.role == role)

    def is_mirror_symmetric(self, tol: float = 1e-12) -> bool:
        """True if reflecting all strips about x = 0 yields the same layout."""
        mirrored = sorted(
            ((-s.x_max, -s.x_min, s.role) for s in self.strips), key=lambda t: t[0]
        )
        original = [(s.x_min, s.x_max, s.role) for s in self.strips]
        return all(
            abs(a - ma) <= tol and abs(b - mb) <= tol and r == mr
            for (a, b, r), (ma, mb, mr) in zip(original, mirrored)
        )


def canonical_geometry(gap: float = CANONICAL_GAP, gap_treatment: str = "grounded") -> TrapGeometry:
    """Layout with a 78 um center-RF strip, 26 um side strips, 409 um RF strips.

    Metal widths as published, mirror-symmetric about x = 0, gaps of ``gap``
    between adjacent strips.
    """
    c = 39e-6            # center-rf half width
    ws = 26e-6           # side strip width
    wr = 409e-6          # rf strip width
    s0 = c + gap         # side strip inner edge
    r0 = s0 + ws + gap   # rf strip inner edge
    return TrapGeometry(
        strips=(
            StripElectrode(-r0 - wr, -r0, "rf"),
            StripElectrode(-s0 - ws, -s0, "side_dc"),
            StripElectrode(-c, c, "center_rf"),
            StripElectrode(s0, s0 + ws, "side_dc"),
            StripElectrode(r0, r0 + wr, "rf"),
        ),
        gap=gap,
        gap_treatment=gap_treatment,
    )


def _check_above_plane(y):
    if np.any(np.asarray(y) <= 0.0):
        raise DomainError("potential is defined above the electrode plane only (y > 0)")


def strip_potential(strip: StripElectrode, v: float, p) -> np.ndarray | float:
    """Potential of a single strip held at ``v`` in a grounded plane.

    ``p`` is an (x, y) pair or an (..., 2) array of points with y > 0.
    phi = (v/pi) * [arctan((x_max - x)/y) - arctan((x_min - x)/y)].
    """
    p = np.asarray(p, dtype=float)
    x, y = p[..., 0], p[..., 1]
    _check_above_plane(y)
    phi = (v / np.pi) * (
        np.arctan((strip.x_max - x) / y) - np.arctan((strip.x_min - x) / y)
    )
    return phi if phi.ndim else float(phi)


def rect_potential(rect: RectElectrode, v: float, p) -> np.ndarray | float:
    """Potential of a rectangular patch held at ``v`` in a grounded plane.

    Four-corner solid-angle solution; phi -> v directly above the rectangle
    interior and 0 <= phi/v <= 1 everywhere above the plane.
    """
    p = np.asarray(p, dtype=float)
    x, y, z = p[..., 0], p[..., 1], p[..., 2]
    _check_above_plane(y)
    total = 0.0
    for xi, sx in ((rect.x_min, -1.0), (rect.x_max, 1.0)):
        for zj, sz in ((rect.z_min, -1.0), (rect.z_max, 1.0)):
            xs = xi - x
            zs = zj - z
            r = np.sqrt(xs * xs + y * y + zs * zs)
            total = total + sx * sz * np.arctan2(xs * zs, y * r)
    phi = (v / (2.0 * np.pi)) * total
    return phi if np.ndim(phi) else float(phi)


def _rect_corner_terms(rect, x, y, z):
    """Signed per-corner geometry terms shared by the rect derivatives."""
    for xi, sx in ((rect.x_min, -1.0), (rect.x_max, 1.0)):
        for zj, sz in ((rect.z_min, -1.0), (rect.z_max, 1.0)):
            yield sx * sz, xi - x, zj - z


def rect_gradient(rect: RectElectrode, v: float, p) -> np.ndarray:
    """Analytic spatial gradient (d phi/dx, d phi/dy, d phi/dz) in V/m."""
    p = np.asarray(p, dtype=float)
    x, y, z = p[..., 0], p[..., 1], p[..., 2]
    _check_above_plane(y)
    gx = gy = gz = 0.0
    for sign, xs, zs in _rect_corner_terms(rect, x, y, z):
        r = np.sqrt(xs * xs + y * y + zs * zs)
        px = xs * xs + y * y
        qz = zs * zs + y * y
        gx = gx + sign * (-y * zs) / (r * px)
        gz = gz + sign * (-y * xs) / (r * qz)
        gy = gy + sign * (-xs * zs * (r * r + y * y)) / (r * px * qz)
    scale = v / (2.0 * np.pi)
    return np.stack(np.broadcast_arrays(scale * gx, scale * gy, scale * gz), axis=-1)


def rect_hessian(rect: RectElectrode, v: float, p) -> np.ndarray:
    """Analytic second derivatives of the rect potential, (..., 3, 3) in V/m^2."""
    p = np.asarray(p, dtype=float)
    x, y, z = p[..., 0], p[..., 1], p[..., 2]
    _check_above_plane(y)
    hxx = hxy = hxz = hzz = hzy = 0.0
    for sign, xs, zs in _rect_corner_terms(rect, x, y, z):
        r = np.sqrt(xs * xs + y * y + zs * zs)
        px = xs * xs + y * y
        qz = zs * zs + y * y
        r3 = r * r * r
        hxx = hxx + sign * (-y * zs * xs) * (1.0 / (r3 * px) + 2.0 / (r * px * px))
        hzz = hzz + sign * (-y * xs * zs) * (1.0 / (r3 * qz) + 2.0 / (r * qz * qz))
        hxy = hxy + sign * (-zs) * (1.0 / (r * px) - y * y / (r3 * px) - 2.0 * y * y / (r * px * px))
        hzy = hzy + sign * (-xs) * (1.0 / (r * qz) - y * y / (r3 * qz) - 2.0 * y * y / (r * qz * qz))
        hxz = hxz + sign * y / r3
    hyy = -(hxx + hzz)  # Laplace
    scale = v / (2.0 * np.pi)
    rows = np.broadcast_arrays(hxx, hxy, hxz, hxy, hyy, hzy, hxz, hzy, hzz)
    h = np.stack(rows, axis=-1).reshape(np.shape(rows[0]) + (3, 3))
    return scale * h
