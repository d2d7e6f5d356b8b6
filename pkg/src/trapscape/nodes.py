"""RF node location, single/double-well bifurcation tracking, and barriers.

Nodes are roots of the 2D RF field vector in a bounded window above the
trap, found by a coarse scan of |E|^2 followed by damped Newton refinement
with the analytic field Jacobian.  Two-node sets are classified as a
vertical pair (both on the symmetry axis) or a horizontal pair (mirror
nodes at +/- x), which is the topology the center-RF voltage ratio R
switches between.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np

from . import fields
from .fields import TrapModel
from .util import parallel_map

DEFAULT_WINDOW_X = (-150e-6, 150e-6)
DEFAULT_WINDOW_Y = (2e-6, 200e-6)
DEFAULT_PITCH = 2e-6
FIELD_TOL = 1e-4          # V/m; |E| below this counts as a node
MERGE_TOL = 0.1e-6        # m; duplicate refined roots within this merge
DEGENERATE_TOL = 0.2e-6   # m; two-node sets closer than this report "single"
AXIS_TOL = 1e-8           # m; |x| below this counts as on the symmetry axis


class ConvergenceError(RuntimeError):
    """Newton refinement failed to converge; message carries diagnostics."""


class TopologyError(RuntimeError):
    """Operation requires a node topology the model does not have."""


@dataclass(frozen=True)
class NodeSet:
    """RF nodes found in the search window.

    topology is one of "none", "single", "vertical_pair", "horizontal_pair".
    barrier is the pseudopotential saddle energy between two wells (J), None
    unless two distinct nodes exist.  saddle is the saddle point (x, y).
    """

    nodes: np.ndarray
    topology: str
    barrier: float | None = None
    saddle: tuple[float, float] | None = None

    def __len__(self):
        return len(self.nodes)


def _newton_field_root(model, p0, field_tol, max_iter=200):
    """Damped Newton iteration on E(x, y) = 0 from p0; returns point or None."""
    p = np.asarray(p0, dtype=float).copy()
    e = fields.rf_field(model, p)
    best = float(np.hypot(*e))
    for _ in range(max_iter):
        if best < 1e-12:
            break
        jac = fields.rf_field_jacobian(model, p)
        try:
            step = np.linalg.solve(jac, -e)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(jac, -e, rcond=None)[0]
        lam = 1.0
        for _ in range(40):
            cand = p + lam * step
            if cand[1] > 0:
                e_cand = fields.rf_field(model, cand)
                n_cand = float(np.hypot(*e_cand))
                if n_cand < best:
                    p, e, best = cand, e_cand, n_cand
                    break
            lam *= 0.5
        else:
            break  # no improving damped step
    return (p, best) if best < field_tol else (None, best)


def _grid_minima(e2, n_keep=32):
    """Indices of interior local minima of a 2D array, best-first."""
    c = e2[1:-1, 1:-1]
    mask = np.ones_like(c, dtype=bool)
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            if di == 0 and dj == 0:
                continue
            mask &= c <= e2[1 + di : e2.shape[0] - 1 + di, 1 + dj : e2.shape[1] - 1 + dj]
    ii, jj = np.nonzero(mask)
    order = np.argsort(c[ii, jj])
    return [(ii[k] + 1, jj[k] + 1) for k in order[:n_keep]]


def find_nodes(
    model: TrapModel,
    *,
    x_window: tuple[float, float] = DEFAULT_WINDOW_X,
    y_window: tuple[float, float] = DEFAULT_WINDOW_Y,
    pitch: float = DEFAULT_PITCH,
    field_tol: float = FIELD_TOL,
    compute_barrier: bool = True,
) -> NodeSet:
    """Locate all RF nodes in the window and classify the topology.

    Coarse |E|^2 scan at ``pitch``, then damped Newton on the field vector.
    Duplicates within 0.1 um merge; a two-node set closer than 0.2 um
    reports "single".  No node in the window gives topology "none" (not an
    exception); a candidate that clearly brackets a node but fails to refine
    raises ConvergenceError.
    """
    if y_window[0] <= 0:
        raise ValueError("y_window must be strictly above the plane")
    x = np.arange(x_window[0], x_window[1] + 0.5 * pitch, pitch)
    y = np.arange(y_window[0], y_window[1] + 0.5 * pitch, pitch)
    xx, yy = np.meshgrid(x, y)
    e = fields.rf_field(model, np.stack([xx, yy], axis=-1))
    e2 = np.einsum("...k,...k->...", e, e)

    scan_scale = float(np.median(np.sqrt(e2)))
    roots: list[np.ndarray] = []
    for i, j in _grid_minima(e2):
        p0 = np.array([x[j], y[i]])
        root, resid = _newton_field_root(model, p0, field_tol)
        if root is None:
            if np.sqrt(e2[i, j]) < 1e-6 * scan_scale:
                raise ConvergenceError(
                    f"node refinement stalled at ({p0[0]:.3e}, {p0[1]:.3e}) m "
                    f"with |E| = {resid:.3e} V/m (tol {field_tol:.1e})"
                )
            continue
        if not (x_window[0] - pitch <= root[0] <= x_window[1] + pitch):
            continue
        if not (0 < root[1] <= y_window[1] + pitch):
            continue
        if all(np.hypot(*(root - r)) > MERGE_TOL for r in roots):
            roots.append(root)

    roots.sort(key=lambda r: r[0])
    return _classify(model, roots, compute_barrier=compute_barrier)


def _classify(model, roots, compute_barrier):
    if not roots:
        return NodeSet(nodes=np.empty((0, 2)), topology="none")
    if len(roots) == 1:
        _warn_if_unstable_drive(model, roots)
        return NodeSet(nodes=np.array(roots), topology="single")
    if len(roots) > 2:
        # keep the two deepest-separated pair closest to the axis; in the
        # modeled window more than two physical nodes do not occur, so
        # spurious extras are merge residue
        roots = sorted(roots, key=lambda r: abs(r[0]))[:2]
        roots.sort(key=lambda r: r[0])
    a, b = np.asarray(roots[0]), np.asarray(roots[1])
    if np.hypot(*(a - b)) < DEGENERATE_TOL:
        mid = 0.5 * (a + b)
        return NodeSet(nodes=np.array([mid]), topology="single")

    if abs(a[0]) < AXIS_TOL and abs(b[0]) < AXIS_TOL:
        topology = "vertical_pair"
        nodes = np.array([[0.0, a[1]], [0.0, b[1]]])
        nodes = nodes[np.argsort(nodes[:, 1])]
    elif abs(a[0] + b[0]) < max(AXIS_TOL, 1e-6 * abs(a[0])) and model.geometry.is_mirror_symmetric():
        topology = "horizontal_pair"
        x0 = 0.5 * (abs(a[0]) + abs(b[0]))
        y0 = 0.5 * (a[1] + b[1])
        nodes = np.array([[-x0, y0], [x0, y0]])
    else:
        topology = "horizontal_pair" if abs(a[0] - b[0]) >= abs(a[1] - b[1]) else "vertical_pair"
        nodes = np.array([a, b])

    barrier = saddle = None
    if compute_barrier:
        barrier, saddle = _barrier_between(model, nodes[0], nodes[1])
    _warn_if_unstable_drive(model, nodes)
    return NodeSet(nodes=nodes, topology=topology, barrier=barrier, saddle=saddle)


def _warn_if_unstable_drive(model, nodes):
    q_est = max(fields.mathieu_q_estimate(model, np.asarray(n)) for n in nodes)
    if q_est > 0.3:
        warnings.warn(
            f"estimated Mathieu q ~ {q_est:.2f} > 0.3 at an RF node; "
            "the pseudopotential (secular) approximation is strained",
            stacklevel=3,
        )


def _barrier_between(model, p_a, p_b, n_samples=201):
    """Pseudopotential at the saddle separating two nodes.

    Takes the highest sample on the straight segment between the nodes and
    refines it to the true saddle by damped Newton on grad(Phi).
    """
    t = np.linspace(0.0, 1.0, n_samples)[:, None]
    seg = (1 - t) * np.asarray(p_a) + t * np.asarray(p_b)
    phi = np.asarray(fields.pseudopotential(model, seg))
    p = seg[int(np.argmax(phi))].copy()
    for _ in range(100):
        g = fields.pseudopotential_gradient(model, p)
        gnorm = float(np.hypot(*g))
        h = fields.pseudopotential_hessian(model, p)
        try:
            step = np.linalg.solve(h, -g)
        except np.linalg.LinAlgError:
            break
        if not np.all(np.isfinite(step)):
            break
        lam = 1.0
        moved = False
        for _ in range(30):
            cand = p + lam * step
            if cand[1] > 0:
                g_cand = fields.pseudopotential_gradient(model, cand)
                if float(np.hypot(*g_cand)) < gnorm:
                    p = cand
                    moved = True
                    break
            lam *= 0.5
        if not moved or gnorm < 1e-30:
            break
    return float(fields.pseudopotential(model, p)), (float(p[0]), float(p[1]))


def node_separation(model: TrapModel, node_set: NodeSet | None = None) -> float:
    """Distance between the two nodes of a horizontal pair, in m."""
    ns = node_set if node_set is not None else find_nodes(model, compute_barrier=False)
    if ns.topology != "horizontal_pair":
        raise TopologyError(
            f"node separation requires a horizontal pair; topology is {ns.topology!r}"
        )
    return float(np.hypot(*(ns.nodes[1] - ns.nodes[0])))


@dataclass(frozen=True)
class SweepPoint:
    r: float
    topology: str
    separation: float | None
    barrier: float | None
    nodes: np.ndarray | None
    error: str | None = None


def separation_sweep(
    model: TrapModel, r_values, *, threads: int | None = None, **find_kwargs
) -> list[SweepPoint]:
    """Node topology, separation d, and barrier for each ratio R.

    Per-point failures are recorded in the point's ``error`` field; the
    sweep itself always completes.
    """
    r_values = [float(r) for r in r_values]

    def one(r):
        m = replace(model, drive=replace(model.drive, ratio_r=r))
        try:
            ns = find_nodes(m, **find_kwargs)
        except Exception as exc:  # propagate per point, not for the sweep
            return SweepPoint(r, "error", None, None, None, error=str(exc))
        d = None
        if ns.topology == "horizontal_pair":
            d = float(np.hypot(*(ns.nodes[1] - ns.nodes[0])))
        return SweepPoint(r, ns.topology, d, ns.barrier, ns.nodes)

    return parallel_map(one, r_values, threads=threads)


@dataclass(frozen=True)
class CriticalRatio:
    r_lo: float
    r_hi: float

    @property
    def r_mid(self) -> float:
        return 0.5 * (self.r_lo + self.r_hi)


def critical_ratio(
    model: TrapModel,
    tol: float = 1e-3,
    *,
    r_lo: float = 0.0,
    r_hi: float = 1.0,
    **find_kwargs,
) -> CriticalRatio:
    """Bisect the vertical-pair -> horizontal-pair transition ratio R*.

    Returns the bracketing interval of width <= tol.  Raises TopologyError
    when no transition exists in [r_lo, r_hi].
    """
    if tol <= 0:
        raise ValueError("tol must be > 0")
    find_kwargs.setdefault("compute_barrier", False)

    def horizontal(r):
        m = replace(model, drive=replace(model.drive, ratio_r=r))
        return find_nodes(m, **find_kwargs).topology == "horizontal_pair"

    if horizontal(r_lo):
        raise TopologyError(f"already a horizontal pair at R = {r_lo}")
    if not horizontal(r_hi):
        raise TopologyError(f"no horizontal pair up to R = {r_hi}; no transition to bracket")
    lo, hi = r_lo, r_hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if horizontal(mid):
            hi = mid
        else:
            lo = mid
    return CriticalRatio(r_lo=lo, r_hi=hi)


def ratio_sensitivity(r: float, voltage_rel_err: float) -> float:
    """Worst-case error in R from independent relative voltage errors.

    Both voltage readings may err by +/- voltage_rel_err, so the worst-case
    measured ratio is r (1 + e)/(1 - e).
    """
    if not 0.0 <= voltage_rel_err < 0.5:
        raise ValueError("voltage_rel_err must be in [0, 0.5)")
    e = voltage_rel_err
    return r * ((1.0 + e) / (1.0 - e) - 1.0)


def ratio_for_separation(
    model: TrapModel,
    d_target: float,
    *,
    r_max: float = 2.5,
    tol: float = 1e-6,
    **find_kwargs,
) -> float:
    """Ratio R at which the horizontal-pair separation equals d_target.

    Uses the monotone growth of d with R above the critical ratio; raises
    TopologyError when d_target is outside the attainable range.
    """
    from scipy.optimize import brentq

    crit = critical_ratio(model, tol=1e-3, r_hi=min(1.0, r_max), **find_kwargs)

    def sep(r):
        m = replace(model, drive=replace(model.drive, ratio_r=r))
        ns = find_nodes(m, compute_barrier=False, **find_kwargs)
        if ns.topology != "horizontal_pair":
            return 0.0
        return float(np.hypot(*(ns.nodes[1] - ns.nodes[0])))

    r_lo = crit.r_hi
    d_lo, d_hi = sep(r_lo), sep(r_max)
    if not d_lo - 1e-12 <= d_target <= d_hi + 1e-12:
        raise TopologyError(
            f"separation {d_target:.3e} m not attainable for R in "
            f"[{r_lo:.4f}, {r_max}]: range is [{d_lo:.3e}, {d_hi:.3e}] m"
        )
    return float(brentq(lambda r: sep(r) - d_target, r_lo, r_max, xtol=tol))


@lru_cache(maxsize=128)
def _cached_nodes(model: TrapModel):
    return find_nodes(model, compute_barrier=False)


def resolve_axial_wells(model: TrapModel) -> TrapModel:
    """Fill unresolved axial-well centers from the model's RF nodes.

    Wells are matched to nodes in x order; the well count must equal the
    node count unless every well already has an explicit center.
    """
    if all(w.center_xy is not None for w in model.axial_wells):
        return model
    ns = _cached_nodes(model)
    if len(ns.nodes) != len(model.axial_wells):
        raise ValueError(
            f"cannot resolve {len(model.axial_wells)} axial wells onto "
            f"{len(ns.nodes)} RF nodes (topology {ns.topology!r}); "
            "set center_xy explicitly or match the counts"
        )
    wells = tuple(
        w if w.center_xy is not None else replace(w, center_xy=(float(n[0]), float(n[1])))
        for w, n in zip(model.axial_wells, ns.nodes)
    )
    return replace(model, axial_wells=wells)
