"""Corrugation analysis of parallel ion strings and quasi-static sliding.

One string exposes the other to a spatially periodic Coulomb potential on
top of the harmonic axial well.  The corrugation parameter
eta = (omega_int / omega_0)^2 compares the curvature an ion feels from the
opposing string's corrugation wells (omega_int) with the curvature from
its own string plus the axial trap (omega_0); eta ~ 1 marks the crossover
between smooth sliding and stick-slip transport.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import minimize_scalar

from .constants import EPSILON_0
from .crystal import (
    CrystalState,
    _descend,
    assign_well_indices,
    solve_equilibrium,
    split_counts,
    string_seed,
)
from .fields import TrapModel
from .nodes import ConvergenceError, find_nodes, node_separation, resolve_axial_wells
from .util import parallel_map


class CorrugationError(RuntimeError):
    """Corrugation curve has no usable central minimum (washed out)."""


@dataclass(frozen=True)
class CorrugationSamples:
    """U(z) sampled along one string's node line, split into parts (J)."""

    z: np.ndarray
    total: np.ndarray
    coulomb: np.ndarray
    trap: np.ndarray


@dataclass(frozen=True)
class CorrugationReport:
    samples: CorrugationSamples
    omega_int: float       # rad/s
    omega_zero: float      # rad/s
    eta: float
    barrier: float | None  # pseudopotential saddle between the wells, J
    node_separation: float | None  # m

    @property
    def sample_line(self) -> np.ndarray:
        """(z, U) pairs of the total corrugation potential."""
        return np.column_stack([self.samples.z, self.samples.total])


def _string_line(model, state, target_string):
    model = resolve_axial_wells(model)
    labels = np.asarray(state.string_labels)
    if len(np.unique(labels)) < 2:
        raise ValueError("corrugation analysis needs two labeled strings")
    if target_string not in (0, 1):
        raise ValueError("target_string must be 0 or 1")
    well = model.axial_wells[target_string]
    return model, well, labels


def _coulomb_curve(model, other_positions):
    q = model.species.charge
    k = q * q / (4.0 * np.pi * EPSILON_0)

    def u(z, line_xy):
        z = np.asarray(z, dtype=float)
        scalar = z.ndim == 0
        z1 = np.atleast_1d(z)
        pts = np.stack(
            [np.full(z1.shape, line_xy[0]), np.full(z1.shape, line_xy[1]), z1], axis=-1
        )
        d = pts[:, None, :] - other_positions[None, :, :]
        r = np.sqrt((d**2).sum(axis=-1))
        out = k * (1.0 / r).sum(axis=-1)
        return float(out[0]) if scalar else out

    return u


def corrugation_window(state: CrystalState, target_string: int) -> tuple[float, float, float]:
    """(z_lo, z_hi, mean spacing) covering the target string plus one spacing."""
    zs = np.sort(state.string_positions(target_string)[:, 2])
    spacing = float(np.diff(zs).mean()) if len(zs) > 1 else 0.0
    return float(zs[0] - 0.5 * spacing), float(zs[-1] + 0.5 * spacing), spacing


def corrugation_potential(
    model: TrapModel, state: CrystalState, target_string: int, n_samples: int = 1001
) -> CorrugationSamples:
    """Sample U(z) on the target string's node line.

    U is the Coulomb potential of the *other* string's ions frozen at their
    equilibrium positions plus the target well's axial trap term.
    """
    model, well, labels = _string_line(model, state, target_string)
    other = state.positions[labels != target_string]
    z_lo, z_hi, _ = corrugation_window(state, target_string)
    z = np.linspace(z_lo, z_hi, n_samples)
    u_c = _coulomb_curve(model, other)(z, well.center_xy)
    u_t = 0.5 * model.species.mass * well.omega_z**2 * (z - well.center_z) ** 2
    return CorrugationSamples(z=z, total=u_c + u_t, coulomb=u_c, trap=u_t)


def frequency_from_curve(
    u, z_lo: float, z_hi: float, mass: float, fd_step: float, center: float = 0.0,
    n_samples: int = 2001,
) -> float:
    """Oscillation frequency sqrt(U''/m) at the local minimum of u nearest
    ``center``, located by sampling plus golden-section refinement and
    differentiated by central differences with step ``fd_step``."""
    z = np.linspace(z_lo, z_hi, n_samples)
    vals = np.asarray(u(z))
    interior = np.nonzero((vals[1:-1] < vals[:-2]) & (vals[1:-1] < vals[2:]))[0] + 1
    if len(interior) == 0:
        raise CorrugationError(
            "no local minimum in the corrugation window: corrugation is washed out"
        )
    i = interior[np.argmin(np.abs(z[interior] - center))]
    res = minimize_scalar(
        u, bracket=(z[i - 1], z[i], z[i + 1]), method="golden",
        options={"xtol": 1e-12},
    )
    z0 = float(np.atleast_1d(res.x)[0])
    upp = float(u(z0 + fd_step) - 2.0 * u(z0) + u(z0 - fd_step)) / fd_step**2
    if upp <= 0:
        raise CorrugationError(f"non-positive curvature {upp:.3e} J/m^2 at the minimum")
    return float(np.sqrt(upp / mass))


def omega_int(
    model: TrapModel, state: CrystalState, target_string: int = 0,
    variant: str = "with_trap",
) -> float:
    """Vibration frequency in the central corrugation well (rad/s)."""
    model, well, labels = _string_line(model, state, target_string)
    other = state.positions[labels != target_string]
    z_lo, z_hi, _ = corrugation_window(state, target_string)
    period = _central_spacing(state, 1 - target_string)
    u_c = _coulomb_curve(model, other)

    if variant == "with_trap":
        def u(z):
            return u_c(z, well.center_xy) + 0.5 * model.species.mass * well.omega_z**2 * (
                z - well.center_z
            ) ** 2
    elif variant == "coulomb_only":
        def u(z):
            return u_c(z, well.center_xy)
    else:
        raise ValueError(f"unknown variant {variant!r}")

    return frequency_from_curve(
        u, z_lo, z_hi, model.species.mass, fd_step=period / 100.0, center=well.center_z
    )


def _central_spacing(state, string_label) -> float:
    zs = np.sort(state.string_positions(string_label)[:, 2])
    if len(zs) < 2:
        raise ValueError("string has fewer than two ions")
    gaps = np.diff(zs)
    return float(gaps[len(gaps) // 2])


def center_ion_index(state: CrystalState, target_string: int, center_z: float = 0.0) -> int:
    """Index (into state.positions) of the target string's center ion.

    For even counts, the ion nearer the well center; ties break toward
    negative z.
    """
    sel = np.nonzero(np.asarray(state.string_labels) == target_string)[0]
    z = state.positions[sel, 2]
    order = np.lexsort((z, np.abs(z - center_z)))
    return int(sel[order[0]])


def omega_zero(
    model: TrapModel, state: CrystalState, target_string: int = 0,
    variant: str = "with_trap",
) -> float:
    """Vibration frequency of the center ion in its own string's potential.

    Analytic z-curvature of the same-string Coulomb potential at the center
    ion's equilibrium position, plus the axial trap curvature unless
    ``variant="coulomb_only"``.
    """
    model, well, labels = _string_line(model, state, target_string)
    sel = np.asarray(labels) == target_string
    if sel.sum() < 2:
        raise ValueError("omega_zero needs a string with at least two ions")
    idx = center_ion_index(state, target_string, well.center_z)
    r0 = state.positions[idx]
    others = state.positions[sel & (np.arange(len(labels)) != idx)]
    q = model.species.charge
    k = q * q / (4.0 * np.pi * EPSILON_0)
    d = r0[None, :] - others
    r = np.sqrt((d**2).sum(axis=1))
    upp = (k * (3.0 * d[:, 2] ** 2 - r**2) / r**5).sum()
    if variant == "with_trap":
        upp += model.species.mass * well.omega_z**2
    elif variant != "coulomb_only":
        raise ValueError(f"unknown variant {variant!r}")
    if upp <= 0:
        raise CorrugationError(f"non-positive same-string curvature {upp:.3e} J/m^2")
    return float(np.sqrt(upp / model.species.mass))


def corrugation_parameter(
    model: TrapModel, state: CrystalState, target_string: int = 0,
    variant: str = "with_trap", n_samples: int = 1001,
) -> CorrugationReport:
    """Full corrugation report: eta = (omega_int / omega_0)^2."""
    w_int = omega_int(model, state, target_string, variant=variant)
    w_zero = omega_zero(model, state, target_string, variant=variant)
    samples = corrugation_potential(model, state, target_string, n_samples=n_samples)
    ns = find_nodes(resolve_axial_wells(model))
    sep = None
    if ns.topology == "horizontal_pair":
        sep = float(np.hypot(*(ns.nodes[1] - ns.nodes[0])))
    return CorrugationReport(
        samples=samples,
        omega_int=w_int,
        omega_zero=w_zero,
        eta=(w_int / w_zero) ** 2,
        barrier=ns.barrier,
        node_separation=sep,
    )


@dataclass(frozen=True)
class EtaPoint:
    r: float
    separation: float | None
    eta: float | None
    omega_int: float | None
    omega_zero: float | None
    error: str | None = None


def eta_sweep(
    model_template: TrapModel,
    r_values,
    *,
    n_ions: int = 14,
    variant: str = "with_trap",
    threads: int | None = None,
) -> list[EtaPoint]:
    """Corrugation parameter vs ratio R for an even two-string crystal."""
    if len(model_template.axial_wells) != 2:
        raise ValueError("eta sweep needs a two-well model template")
    bare_wells = tuple(replace(w, center_xy=None) for w in model_template.axial_wells)

    def one(r):
        m = replace(
            model_template,
            drive=replace(model_template.drive, ratio_r=float(r)),
            axial_wells=bare_wells,
        )
        try:
            m = resolve_axial_wells(m)
            d = node_separation(m)
            state = solve_equilibrium(m, n_ions)
            rep = corrugation_parameter(m, state, variant=variant)
        except Exception as exc:
            return EtaPoint(float(r), None, None, None, None, error=str(exc))
        return EtaPoint(float(r), d, rep.eta, rep.omega_int, rep.omega_zero)

    return parallel_map(one, [float(r) for r in r_values], threads=threads)


@dataclass(frozen=True)
class SlideStep:
    offset: float
    positions: np.ndarray
    energy: float
    max_displacement: float
    slip: bool


@dataclass(frozen=True)
class SlideResult:
    forward: tuple[SlideStep, ...]
    backward: tuple[SlideStep, ...]
    slip_threshold: float
    hysteresis: float | None
    error: str | None = None

    @property
    def slips_forward(self) -> list[int]:
        return [i for i, s in enumerate(self.forward) if s.slip]

    @property
    def slips_backward(self) -> list[int]:
        return [i for i, s in enumerate(self.backward) if s.slip]


def quasi_static_slide(
    model: TrapModel,
    n_per_string: int,
    offset_values,
    *,
    moving_well: int = 1,
    slip_fraction: float = 0.1,
    force_tol: float = 1e-20,
    max_evals: int = 100_000,
) -> SlideResult:
    """Drag one well's axial center through ``offset_values`` and back.

    Each step re-solves the equilibrium warm-started from the previous
    state; a step whose largest single-ion displacement exceeds
    ``slip_fraction`` of the static string's inter-ion spacing is flagged
    as a slip.  The backward sweep retraces the offsets so forward/backward
    position differences measure hysteresis.
    """
    model = resolve_axial_wells(model)
    if len(model.axial_wells) != 2:
        raise ValueError("quasi-static sliding needs a two-well model")
    offsets = [float(o) for o in offset_values]
    if not offsets:
        raise ValueError("offset_values is empty")
    static_string = 1 - moving_well
    base_center = model.axial_wells[moving_well].center_z

    x0 = string_seed(model, 2 * n_per_string, per_well=(n_per_string, n_per_string))
    wells = assign_well_indices(model, x0)

    def model_at(offset):
        new_wells = list(model.axial_wells)
        new_wells[moving_well] = replace(new_wells[moving_well], center_z=base_center + offset)
        return replace(model, axial_wells=tuple(new_wells))

    pos, energy, gnorm, _, _, _ = _descend(
        model_at(offsets[0]), x0, wells, force_tol, max_evals, False
    )
    if gnorm >= force_tol:
        raise ConvergenceError("initial slide equilibrium did not converge")
    state0 = CrystalState(
        positions=pos, energy=energy, grad_norm=gnorm, converged=True,
        string_labels=assign_well_indices(model, pos), well_indices=wells,
    )
    ref_spacing = _central_spacing(state0, static_string)
    threshold = slip_fraction * ref_spacing

    def sweep(offset_list, start_pos):
        # the start position is already converged at the first offset, so
        # the first step's displacement is zero by construction
        steps, prev = [], start_pos
        for off in offset_list:
            p, e, g, _, _, _ = _descend(model_at(off), prev, wells, force_tol, max_evals, False)
            if g >= force_tol:
                return steps, prev, f"equilibrium failed at offset {off:.3e} m (|grad| {g:.2e} N)"
            disp = float(np.sqrt(((p - prev) ** 2).sum(axis=1)).max())
            steps.append(SlideStep(off, p, e, disp, bool(disp > threshold)))
            prev = p
        return steps, prev, None

    fwd, last, err = sweep(offsets, pos)
    bwd: list[SlideStep] = []
    hysteresis = None
    if err is None:
        bwd, _, err = sweep(list(reversed(offsets)), last)
        if err is None:
            diffs = [
                float(np.sqrt(((f.positions - b.positions) ** 2).sum(axis=1)).max())
                for f, b in zip(fwd, reversed(bwd))
            ]
            hysteresis = max(diffs)
    return SlideResult(
        forward=tuple(fwd),
        backward=tuple(bwd),
        slip_threshold=threshold,
        hysteresis=hysteresis,
        error=err,
    )
