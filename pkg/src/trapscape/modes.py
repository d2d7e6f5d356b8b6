"""Normal-mode analysis about a crystal equilibrium.

For equal masses the mode frequencies are omega_k = sqrt(lambda_k / m)
with lambda_k the eigenvalues of the analytic 3N x 3N Hessian.  Modes are
labeled by dominant axis, per-string pattern (center-of-mass vs stretch by
template overlap), and the relative phase of the two strings.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .crystal import CrystalState, hessian_matrix, solve_equilibrium
from .fields import TrapModel
from .nodes import node_separation, resolve_axial_wells
from .util import parallel_map

PATTERN_OVERLAP = 0.90  # template overlap above which a mode is com/stretch


class SaddleError(RuntimeError):
    """Hessian has a significant negative eigenvalue: not a minimum."""


@dataclass(frozen=True)
class ModeLabel:
    axis: str      # x | y | z
    pattern: str   # com | stretch | other
    phase: str     # in | out | n/a

    def __str__(self):
        return f"{self.axis}:{self.pattern}:{self.phase}"


@dataclass(frozen=True)
class ModeSpectrum:
    """Eigenfrequencies (ascending, rad/s), orthonormal eigenvectors
    (column k is mode k, coordinates ordered ion-major x,y,z), labels."""

    frequencies: np.ndarray
    eigenvectors: np.ndarray
    labels: tuple[ModeLabel, ...]

    @property
    def n_ions(self) -> int:
        return len(self.frequencies) // 3

    def mode_displacements(self, k: int) -> np.ndarray:
        """Mode k displacement pattern as an N x 3 array."""
        return self.eigenvectors[:, k].reshape(-1, 3)

    def select(self, axis=None, pattern=None, phase=None) -> list[int]:
        """Indices of modes matching the given label fields."""
        out = []
        for k, lab in enumerate(self.labels):
            if axis is not None and lab.axis != axis:
                continue
            if pattern is not None and lab.pattern != pattern:
                continue
            if phase is not None and lab.phase != phase:
                continue
            out.append(k)
        return out


def hessian(model: TrapModel, state: CrystalState) -> np.ndarray:
    """3N x 3N second derivatives of the crystal energy at the state, J/m^2."""
    if not state.converged:
        raise ValueError("normal-mode analysis requires a converged state")
    return hessian_matrix(model, state.positions, state.well_indices)


def normal_modes(model: TrapModel, state: CrystalState) -> ModeSpectrum:
    """Eigenfrequencies and labeled eigenvectors about the equilibrium."""
    h = hessian(model, state)
    m = model.species.mass
    evals, evecs = np.linalg.eigh(h / m)
    if evals[0] < -1e-6 * abs(evals[-1]):
        raise SaddleError(
            f"state is a saddle: omega^2 = {evals[0]:.3e} (largest {evals[-1]:.3e})"
        )
    freqs = np.sqrt(np.clip(evals, 0.0, None))
    labels = tuple(
        _classify_mode(evecs[:, k].reshape(-1, 3), state) for k in range(len(freqs))
    )
    return ModeSpectrum(frequencies=freqs, eigenvectors=evecs, labels=labels)


def _classify_mode(disp, state) -> ModeLabel:
    axis_power = (disp**2).sum(axis=0)
    axis_idx = int(np.argmax(axis_power))
    axis = "xyz"[axis_idx]

    labels = np.asarray(state.string_labels)
    strings = np.unique(labels)
    amps, overlaps_com, overlaps_str = [], [], []
    weights = []
    for s in strings:
        sel = labels == s
        u = disp[sel, axis_idx]
        norm = float(np.linalg.norm(u))
        weights.append(norm)
        if norm < 1e-12:
            amps.append(0.0)
            overlaps_com.append(0.0)
            overlaps_str.append(0.0)
            continue
        n_s = sel.sum()
        t_com = np.ones(n_s) / np.sqrt(n_s)
        z = state.positions[sel, 2]
        dz = z - z.mean()
        t_str = dz / np.linalg.norm(dz) if np.linalg.norm(dz) > 0 else t_com
        a_com = float(u @ t_com)
        a_str = float(u @ t_str)
        overlaps_com.append(abs(a_com) / norm)
        overlaps_str.append(abs(a_str) / norm)
        amps.append((a_com, a_str))

    active = [i for i, w in enumerate(weights) if w > 0.1 * max(weights)]
    if all(overlaps_com[i] > PATTERN_OVERLAP for i in active):
        pattern = "com"
        sig = [amps[i][0] for i in active if amps[i] != 0.0]
    elif all(overlaps_str[i] > PATTERN_OVERLAP for i in active):
        pattern = "stretch"
        sig = [amps[i][1] for i in active if amps[i] != 0.0]
    else:
        return ModeLabel(axis=axis, pattern="other", phase="n/a")

    if len(strings) == 2 and len(active) == 2:
        phase = "in" if sig[0] * sig[1] > 0 else "out"
    else:
        phase = "n/a"
    return ModeLabel(axis=axis, pattern=pattern, phase=phase)


@dataclass(frozen=True)
class DegeneracyPoint:
    """One ratio-sweep point: normalized axial 2x2 mode quartet."""

    r: float
    separation: float | None
    f_com_in: float | None
    f_com_out: float | None
    f_stretch_in: float | None
    f_stretch_out: float | None
    error: str | None = None

    @property
    def com_splitting(self) -> float | None:
        if self.f_com_in is None or self.f_com_out is None:
            return None
        return abs(self.f_com_out - self.f_com_in) / self.f_com_in

    @property
    def stretch_splitting(self) -> float | None:
        if self.f_stretch_in is None or self.f_stretch_out is None:
            return None
        return abs(self.f_stretch_out - self.f_stretch_in) / self.f_stretch_in


def degeneracy_sweep(
    model_template: TrapModel,
    r_values,
    *,
    n_per_string: int = 2,
    threads: int | None = None,
) -> list[DegeneracyPoint]:
    """Axial 2x2 mode quartet (normalized by omega_z0) for each ratio R.

    The template's two axial wells are re-centered on the RF nodes at each
    R; per-point failures are recorded, not raised.
    """
    if len(model_template.axial_wells) != 2:
        raise ValueError("degeneracy sweep needs a two-well model template")
    omega_z0 = model_template.axial_wells[0].omega_z
    bare_wells = tuple(
        replace(w, center_xy=None) for w in model_template.axial_wells
    )

    def one(r):
        m = replace(
            model_template,
            drive=replace(model_template.drive, ratio_r=float(r)),
            axial_wells=bare_wells,
        )
        try:
            m = resolve_axial_wells(m)
            d = node_separation(m)
            state = solve_equilibrium(m, 2 * n_per_string)
            spec = normal_modes(m, state)
        except Exception as exc:
            return DegeneracyPoint(float(r), None, None, None, None, None, error=str(exc))

        def pick(pattern, phase):
            ks = spec.select(axis="z", pattern=pattern, phase=phase)
            if not ks:
                return None
            return float(spec.frequencies[ks[0]] / omega_z0)

        return DegeneracyPoint(
            r=float(r),
            separation=d,
            f_com_in=pick("com", "in"),
            f_com_out=pick("com", "out"),
            f_stretch_in=pick("stretch", "in"),
            f_stretch_out=pick("stretch", "out"),
        )

    return parallel_map(one, [float(r) for r in r_values], threads=threads)
