"""DC electrode voltages via constrained least-norm (Lagrange multiplier) solve.

Given a basis of rectangular DC electrodes, find the voltage vector of
minimum Euclidean norm whose summed potential satisfies linear constraints:
field components at null points (optionally compensating a uniform stray
field), directional curvature targets, and plain potential values.  The
KKT system of the quadratic program is solved directly; rank-deficient
systems fall back to the minimum-norm least-squares solution with explicit
per-constraint residual flags.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import RectElectrode, rect_gradient, rect_hessian, rect_potential

RESIDUAL_RTOL = 1e-6  # relative feasibility threshold per constraint row


@dataclass(frozen=True)
class DcBasis:
    """Rectangular DC electrodes with analytic unit potentials."""

    electrodes: tuple[RectElectrode, ...]

    def __post_init__(self):
        if not self.electrodes:
            raise ValueError("DC basis needs at least one electrode")
        object.__setattr__(self, "electrodes", tuple(self.electrodes))

    def __len__(self):
        return len(self.electrodes)

    @property
    def unit_potentials(self):
        """Callables phi_k(p) for each electrode held at 1 V."""
        return tuple(
            (lambda p, e=e: rect_potential(e, 1.0, p)) for e in self.electrodes
        )

    def potential(self, voltages, p):
        return sum(rect_potential(e, v, p) for e, v in zip(self.electrodes, voltages))

    def gradient(self, voltages, p) -> np.ndarray:
        return sum(rect_gradient(e, v, p) for e, v in zip(self.electrodes, voltages))

    def hessian(self, voltages, p) -> np.ndarray:
        return sum(rect_hessian(e, v, p) for e, v in zip(self.electrodes, voltages))


@dataclass(frozen=True)
class DcConstraintSet:
    """Linear constraints on the summed DC potential.

    null_points: points where grad(phi) must vanish (or equal ``stray_field``
    when compensating a uniform external field E_stray, since the DC field
    -grad(phi) must cancel it).
    curvature_targets: (point, direction, value) rows fixing the second
    directional derivative d^T H d in V/m^2.
    potential_targets: (point, value) rows fixing phi itself.
    """

    null_points: tuple = ()
    curvature_targets: tuple = ()
    potential_targets: tuple = ()
    stray_field: tuple[float, float, float] | None = None

    def __post_init__(self):
        object.__setattr__(self, "null_points", tuple(tuple(map(float, p)) for p in self.null_points))
        object.__setattr__(
            self,
            "curvature_targets",
            tuple((tuple(map(float, p)), tuple(map(float, d)), float(v))
                  for p, d, v in self.curvature_targets),
        )
        object.__setattr__(
            self,
            "potential_targets",
            tuple((tuple(map(float, p)), float(v)) for p, v in self.potential_targets),
        )
        if not (self.null_points or self.curvature_targets or self.potential_targets):
            raise ValueError("constraint set is empty")

    def n_rows(self) -> int:
        return 3 * len(self.null_points) + len(self.curvature_targets) + len(self.potential_targets)


def constraint_matrix(basis: DcBasis, constraints: DcConstraintSet):
    """Rows A v = b of the linear system, plus human-readable row labels."""
    rows, b, labels = [], [], []
    stray = constraints.stray_field
    for p in constraints.null_points:
        grads = np.array([rect_gradient(e, 1.0, p) for e in basis.electrodes])
        for c, name in enumerate("xyz"):
            rows.append(grads[:, c])
            b.append(0.0 if stray is None else float(stray[c]))
            labels.append(f"dphi/d{name} @ {p}")
    for p, d, val in constraints.curvature_targets:
        d = np.asarray(d, dtype=float)
        d = d / np.linalg.norm(d)
        row = np.array([d @ rect_hessian(e, 1.0, p) @ d for e in basis.electrodes])
        rows.append(row)
        b.append(val)
        labels.append(f"d2phi along {tuple(d)} @ {p}")
    for p, val in constraints.potential_targets:
        rows.append(np.array([rect_potential(e, 1.0, p) for e in basis.electrodes]))
        b.append(val)
        labels.append(f"phi @ {p}")
    return np.array(rows), np.array(b), labels


@dataclass(frozen=True)
class DcSolution:
    voltages: np.ndarray
    residuals: np.ndarray
    labels: tuple[str, ...]
    feasible: bool
    infeasible_rows: tuple[int, ...]
    method: str  # "kkt" or "lstsq"

    @property
    def objective(self) -> float:
        return float(self.voltages @ self.voltages)


def solve_dc_voltages(basis: DcBasis, constraints: DcConstraintSet) -> DcSolution:
    """Minimize sum v_k^2 subject to the constraint rows A v = b.

    Solves the KKT system [[2I, A^T], [A, 0]]; a rank-deficient system
    falls back to the minimum-norm least-squares solution, and constraints
    whose residual exceeds 1e-6 of their scale are flagged (infeasibility
    is reported, never silently absorbed).
    """
    a, b, labels = constraint_matrix(basis, constraints)
    n, m = len(basis), len(b)
    kkt = np.zeros((n + m, n + m))
    kkt[:n, :n] = 2.0 * np.eye(n)
    kkt[:n, n:] = a.T
    kkt[n:, :n] = a
    rhs = np.concatenate([np.zeros(n), b])
    method = "kkt"
    v = None
    try:
        sol = np.linalg.solve(kkt, rhs)
        v = sol[:n]
        if not np.all(np.isfinite(v)):
            v = None
    except np.linalg.LinAlgError:
        v = None
    if v is None:
        method = "lstsq"
        v = np.linalg.lstsq(a, b, rcond=None)[0]

    residuals = a @ v - b
    row_scale = np.maximum(
        np.abs(b),
        np.linalg.norm(a, axis=1) * max(float(np.linalg.norm(v)), 1.0),
    )
    row_scale = np.maximum(row_scale, 1e-300)
    bad = tuple(int(i) for i in np.nonzero(np.abs(residuals) > RESIDUAL_RTOL * row_scale)[0])
    if bad and method == "kkt":
        # KKT produced garbage on a numerically singular system; retry min-norm
        v = np.linalg.lstsq(a, b, rcond=None)[0]
        residuals = a @ v - b
        bad = tuple(int(i) for i in np.nonzero(np.abs(residuals) > RESIDUAL_RTOL * row_scale)[0])
        method = "lstsq"
    return DcSolution(
        voltages=v,
        residuals=residuals,
        labels=tuple(labels),
        feasible=not bad,
        infeasible_rows=bad,
        method=method,
    )


@dataclass(frozen=True)
class DcFieldReport:
    points: np.ndarray
    potentials: np.ndarray
    gradients: np.ndarray   # (n, 3) V/m
    hessians: np.ndarray    # (n, 3, 3) V/m^2


def dc_field_check(basis: DcBasis, voltages, points) -> DcFieldReport:
    """Evaluate the summed DC potential, gradient, and curvatures at points."""
    voltages = np.asarray(voltages, dtype=float)
    if len(voltages) != len(basis):
        raise ValueError(f"{len(voltages)} voltages for {len(basis)} electrodes")
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    return DcFieldReport(
        points=pts,
        potentials=np.array([basis.potential(voltages, p) for p in pts]),
        gradients=np.array([basis.gradient(voltages, p) for p in pts]),
        hessians=np.array([basis.hessian(voltages, p) for p in pts]),
    )


def example_nine_electrode_basis(
    node_x: float = 20e-6, extent: float = 400e-6
) -> DcBasis:
    """Placeholder 9-electrode layout: four end, two middle, two side
    electrodes and the center-RF DC patch.

    The published design does not give DC electrode z-extents, so this
    layout is illustrative only; real work should load measured rectangles
    from configuration.
    """
    w_end = 150e-6
    side_x = (45e-6, 71e-6)
    rf_x = (77e-6, 486e-6)
    rects = []
    for sx in (-1, 1):
        for sz, lab in ((-1, "neg_z"), (1, "pos_z")):
            rects.append(
                RectElectrode(
                    min(sx * rf_x[0], sx * rf_x[1]),
                    max(sx * rf_x[0], sx * rf_x[1]),
                    min(sz * extent, sz * (extent + w_end)),
                    max(sz * extent, sz * (extent + w_end)),
                    label=f"end_{'left' if sx < 0 else 'right'}_{lab}",
                )
            )
    for sx, lab in ((-1, "left"), (1, "right")):
        rects.append(
            RectElectrode(
                min(sx * rf_x[0], sx * rf_x[1]),
                max(sx * rf_x[0], sx * rf_x[1]),
                -extent, extent,
                label=f"middle_{lab}",
            )
        )
        rects.append(
            RectElectrode(
                min(sx * side_x[0], sx * side_x[1]),
                max(sx * side_x[0], sx * side_x[1]),
                -extent, extent,
                label=f"side_{lab}",
            )
        )
    rects.append(RectElectrode(-39e-6, 39e-6, -extent, extent, label="center_rf_dc"))
    return DcBasis(electrodes=tuple(rects))
