"""Ion Coulomb crystal energies, analytic gradients, and equilibria.

The energy of N ions is the sum of each ion's single-particle trap energy
(pseudopotential + its axial well) and the exact pairwise Coulomb sum.
Each ion is attached to one axial well; by default the nearest well in the
radial plane, which coincides with the nearest RF node for resolved models.

Equilibria are found with a scaled quasi-Newton descent (L-BFGS with
analytic gradients) followed by damped Newton polishing on the analytic
Hessian, so converged states sit at machine-precision force residuals well
below the nominal force tolerance.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from . import fields as fld
from .constants import EPSILON_0
from .fields import TrapModel
from .nodes import ConvergenceError, resolve_axial_wells
from .util import parallel_map

FORCE_TOL = 1e-20        # N, 2-norm of the full gradient
MIN_ION_DISTANCE = 0.5e-6  # m, sanity guard on converged states
_SEED_OFFSET = 10e-9       # deterministic transverse seed offset


@dataclass(frozen=True)
class CrystalState:
    """Converged (or last-iterate) ion configuration.

    positions are N x 3 in meters; energy in J; grad_norm is the 2-norm of
    the energy gradient in N.  string_labels index the nearest RF node per
    ion; well_indices record the axial-well assignment used by the energy.
    """

    positions: np.ndarray
    energy: float
    grad_norm: float
    converged: bool
    string_labels: np.ndarray
    well_indices: np.ndarray
    iterations: int = 0
    message: str = ""
    energy_trace: tuple[float, ...] | None = None

    @property
    def n_ions(self) -> int:
        return len(self.positions)

    def string_positions(self, label: int) -> np.ndarray:
        return self.positions[self.string_labels == label]


def _k_pair(model: TrapModel) -> float:
    q = model.species.charge
    return q * q / (4.0 * np.pi * EPSILON_0)


def assign_well_indices(model: TrapModel, positions) -> np.ndarray:
    """Nearest axial-well index per ion, by radial (x, y) distance."""
    model = resolve_axial_wells(model)
    pos = np.asarray(positions, dtype=float).reshape(-1, 3)
    centers = np.array([w.center_xy for w in model.axial_wells])
    d2 = ((pos[:, None, :2] - centers[None, :, :]) ** 2).sum(axis=2)
    return np.argmin(d2, axis=1)


def _prepare(model, positions, well_indices):
    model = resolve_axial_wells(model)
    pos = np.asarray(positions, dtype=float).reshape(-1, 3)
    if np.any(pos[:, 1] <= 0):
        raise fld.DomainError("all ions must be above the electrode plane (y > 0)")
    if well_indices is None:
        wells = assign_well_indices(model, pos)
    else:
        wells = np.asarray(well_indices, dtype=int)
    return model, pos, wells


def _pair_geometry(pos):
    diff = pos[:, None, :] - pos[None, :, :]
    r = np.sqrt((diff**2).sum(axis=2))
    if np.any(r[np.triu_indices(len(pos), k=1)] < 1e-12):
        raise ValueError("coincident ions: Coulomb energy is singular")
    np.fill_diagonal(r, np.inf)
    return diff, r


def total_energy(model: TrapModel, positions, well_indices=None) -> float:
    """Trap energy of every ion plus the exact pairwise Coulomb sum, in J."""
    model, pos, wells = _prepare(model, positions, well_indices)
    diff, r = _pair_geometry(pos)
    k = _k_pair(model)
    e_coulomb = 0.5 * k * (1.0 / r).sum()
    e_trap = sum(
        fld.total_potential(model, pos[i], int(wells[i])) for i in range(len(pos))
    )
    return float(e_trap + e_coulomb)


def energy_gradient(model: TrapModel, positions, well_indices=None) -> np.ndarray:
    """Analytic gradient of total_energy, N x 3 in newtons."""
    model, pos, wells = _prepare(model, positions, well_indices)
    diff, r = _pair_geometry(pos)
    k = _k_pair(model)
    grad = -k * (diff / r[:, :, None] ** 3).sum(axis=1)
    for i in range(len(pos)):
        grad[i] += fld.total_potential_gradient(model, pos[i], int(wells[i]))
    return grad


def hessian_matrix(model: TrapModel, positions, well_indices=None) -> np.ndarray:
    """Analytic 3N x 3N second-derivative matrix of total_energy, J/m^2.

    External per-ion blocks come from the analytic pseudopotential and well
    curvatures; Coulomb pair blocks are the traceless dipole tensor.
    """
    model, pos, wells = _prepare(model, positions, well_indices)
    n = len(pos)
    diff, r = _pair_geometry(pos)
    k = _k_pair(model)
    h = np.zeros((3 * n, 3 * n))
    eye = np.eye(3)
    for i in range(n):
        hi = fld.total_potential_hessian(model, pos[i], int(wells[i]))
        h[3 * i : 3 * i + 3, 3 * i : 3 * i + 3] += hi
        for j in range(i + 1, n):
            d = diff[i, j]
            rij = r[i, j]
            block = k * (3.0 * np.outer(d, d) / rij**2 - eye) / rij**3
            h[3 * i : 3 * i + 3, 3 * j : 3 * j + 3] = -block
            h[3 * j : 3 * j + 3, 3 * i : 3 * i + 3] = -block
            h[3 * i : 3 * i + 3, 3 * i : 3 * i + 3] += block
            h[3 * j : 3 * j + 3, 3 * j : 3 * j + 3] += block
    return h


def _chain_length_scale(model, well) -> float:
    k = _k_pair(model)
    return (k / (model.species.mass * well.omega_z**2)) ** (1.0 / 3.0)


def _seed_spacing(model, well, n: int) -> float:
    l0 = _chain_length_scale(model, well)
    if n < 2:
        return l0
    # standard minimum-spacing estimate for an n-ion harmonic chain
    return l0 * 2.018 / n**0.559


def split_counts(n_ions: int, n_wells: int) -> list[int]:
    """Default even split of ions over wells (extras to the lower wells)."""
    base = n_ions // n_wells
    counts = [base] * n_wells
    for i in range(n_ions - base * n_wells):
        counts[i] += 1
    return counts


def string_seed(model: TrapModel, n_ions: int, per_well=None) -> np.ndarray:
    """Deterministic seed: ions evenly spaced along each node line.

    Transverse x offsets of +/-10 nm break the mirror symmetry so descent
    does not start exactly on a saddle line; alternating wells get a
    quarter-spacing axial stagger because the aligned (face-to-face)
    configuration of equal parallel strings is a higher local minimum than
    the staggered one.
    """
    model = resolve_axial_wells(model)
    wells = model.axial_wells
    if not wells:
        raise ValueError("model has no axial wells")
    counts = list(per_well) if per_well is not None else split_counts(n_ions, len(wells))
    if sum(counts) != n_ions or len(counts) != len(wells):
        raise ValueError(f"per_well {counts} does not place {n_ions} ions in {len(wells)} wells")
    rows = []
    for k, (w, n) in enumerate(zip(wells, counts)):
        if n == 0:
            continue
        cx, cy = w.center_xy
        s = _seed_spacing(model, w, n)
        stagger = 0.0 if len(wells) == 1 else 0.25 * s * (1 if k % 2 == 0 else -1)
        for i in range(n):
            z = w.center_z + (i - 0.5 * (n - 1)) * s + stagger
            rows.append([cx + _SEED_OFFSET * (1 if i % 2 == 0 else -1), cy, z])
    return np.asarray(rows)


# power-of-two scaling keeps position round-trips bit-exact (warm starts
# at a converged state must be exact fixpoints)
_L0 = 2.0**-20   # ~0.95 um
_E0 = 2.0**-73   # ~0.11 meV


def _descend(model, x0, wells, force_tol, max_evals, track_energy):
    """Scaled L-BFGS descent followed by Newton polish; returns state parts."""
    n = len(x0)
    scale_g = _L0 / _E0  # N -> scaled gradient units

    def objective(xs):
        pos = xs.reshape(n, 3) * _L0
        e = total_energy(model, pos, wells)
        g = energy_gradient(model, pos, wells)
        return e / _E0, g.ravel() * scale_g

    trace = []
    if track_energy:
        def callback(xs):
            trace.append(total_energy(model, xs.reshape(n, 3) * _L0, wells))
    else:
        callback = None

    res = minimize(
        objective,
        (x0 / _L0).ravel(),
        jac=True,
        method="L-BFGS-B",
        callback=callback,
        options={
            "maxfun": int(max_evals),
            "maxiter": int(max_evals),
            "ftol": 1e-16,
            "gtol": 0.02 * force_tol * scale_g,
        },
    )
    pos = res.x.reshape(n, 3) * _L0
    iterations = int(res.nit)

    # Newton polish to machine-level force residuals
    g = energy_gradient(model, pos, wells)
    gnorm = float(np.linalg.norm(g))
    target = max(1e-6 * force_tol, 1e-26)
    for _ in range(60):
        if gnorm < target:
            break
        h = hessian_matrix(model, pos, wells)
        try:
            step = np.linalg.solve(h, -g.ravel()).reshape(n, 3)
        except np.linalg.LinAlgError:
            break
        lam, improved = 1.0, False
        for _ in range(30):
            cand = pos + lam * step
            if np.all(cand[:, 1] > 0):
                g_cand = energy_gradient(model, cand, wells)
                n_cand = float(np.linalg.norm(g_cand))
                if n_cand < gnorm:
                    pos, g, gnorm = cand, g_cand, n_cand
                    improved = True
                    break
            lam *= 0.5
        iterations += 1
        if not improved:
            break

    energy = total_energy(model, pos, wells)
    if track_energy:
        trace.append(energy)
    return pos, energy, gnorm, iterations, res.message, tuple(trace) if track_energy else None


def solve_equilibrium(
    model: TrapModel,
    n_ions: int,
    init: str = "string_seed",
    *,
    per_well=None,
    n_restarts: int = 1,
    seed: int = 0,
    force_tol: float = FORCE_TOL,
    max_evals: int = 100_000,
    track_energy: bool = False,
    threads: int | None = None,
) -> CrystalState:
    """Find a local minimum of the N-ion energy.

    ``init`` is "string_seed" (deterministic) or "random_restart", which
    runs ``n_restarts`` seeded-jitter descents and keeps the lowest-energy
    converged result (ties broken by restart index).  Raises
    ConvergenceError with the last state attached when the force residual
    never reaches ``force_tol``.
    """
    if n_ions < 1:
        raise ValueError("n_ions must be >= 1")
    model = resolve_axial_wells(model)
    if not model.axial_wells:
        raise ValueError("model needs at least one axial well")
    x0 = string_seed(model, n_ions, per_well=per_well)
    wells = assign_well_indices(model, x0)

    if init == "string_seed":
        starts = [x0]
    elif init == "random_restart":
        starts = []
        for k in range(n_restarts):
            rng = np.random.default_rng((seed, k))
            jitter_scale = 0.15 * np.array(
                [_seed_spacing(model, model.axial_wells[int(w)], max(2, n_ions)) for w in wells]
            )
            starts.append(x0 + rng.standard_normal(x0.shape) * jitter_scale[:, None])
    else:
        raise ValueError(f"unknown init strategy {init!r}")

    def run(start):
        return _descend(model, start, wells, force_tol, max_evals, track_energy)

    results = parallel_map(run, starts, threads=threads)

    best = None
    for pos, energy, gnorm, iters, msg, trace in results:
        if gnorm >= force_tol:
            continue
        if best is None or energy < best[1] - 0.0:
            best = (pos, energy, gnorm, iters, msg, trace)
    if best is None:
        pos, energy, gnorm, iters, msg, trace = results[0]
        state = CrystalState(
            positions=pos, energy=energy, grad_norm=gnorm, converged=False,
            string_labels=assign_well_indices(model, pos),
            well_indices=wells, iterations=iters, message=str(msg), energy_trace=trace,
        )
        err = ConvergenceError(
            f"equilibrium not converged: |grad| = {gnorm:.3e} N after "
            f"{iters} iterations (tol {force_tol:.1e} N)"
        )
        err.state = state
        raise err

    pos, energy, gnorm, iters, msg, trace = best
    _check_minimum(model, pos, wells)
    diff = pos[:, None, :] - pos[None, :, :]
    r = np.sqrt((diff**2).sum(axis=2))
    np.fill_diagonal(r, np.inf)
    if r.min() < MIN_ION_DISTANCE:
        warnings.warn(
            f"converged ions closer than {MIN_ION_DISTANCE*1e6:.1f} um "
            f"(min {r.min()*1e6:.3f} um)", stacklevel=2,
        )
    return CrystalState(
        positions=pos,
        energy=energy,
        grad_norm=gnorm,
        converged=True,
        string_labels=assign_well_indices(model, pos),
        well_indices=wells,
        iterations=iters,
        message=str(msg),
        energy_trace=trace,
    )


def _check_minimum(model, pos, wells):
    evals = np.linalg.eigvalsh(hessian_matrix(model, pos, wells))
    if evals[0] < -1e-6 * abs(evals[-1]):
        warnings.warn(
            f"converged point is a saddle: lowest Hessian eigenvalue "
            f"{evals[0]:.3e} J/m^2 (largest {evals[-1]:.3e})",
            stacklevel=3,
        )
