import numpy as np
import pytest
from scipy.optimize import minimize as scipy_minimize

from trapscape import dc_control as dc
from trapscape.geometry import RectElectrode, rect_potential


@pytest.fixture(scope="module")
def basis9():
    return dc.example_nine_electrode_basis()


def test_single_electrode_exact_solve():
    rect = RectElectrode(-40e-6, 40e-6, -40e-6, 40e-6)
    basis = dc.DcBasis(electrodes=(rect,))
    p = (0.0, 40e-6, 0.0)
    target = 5.0 * rect_potential(rect, 1.0, p)
    sol = dc.solve_dc_voltages(basis, dc.DcConstraintSet(potential_targets=((p, target),)))
    assert sol.feasible
    assert sol.voltages[0] == pytest.approx(5.0, rel=1e-12)


def test_unit_potentials_are_callable(basis9):
    fns = basis9.unit_potentials
    assert len(fns) == 9
    p = (0.0, 80e-6, 0.0)
    for fn, e in zip(fns, basis9.electrodes):
        assert fn(p) == rect_potential(e, 1.0, p)


def test_nulls_with_symmetric_stray_field_give_symmetric_voltages(basis9):
    pts = ((-15e-6, 80e-6, 0.0), (15e-6, 80e-6, 0.0))
    sol = dc.solve_dc_voltages(
        basis9,
        dc.DcConstraintSet(null_points=pts, stray_field=(0.0, 50.0, 0.0)),
    )
    assert sol.feasible
    v = {e.label: val for e, val in zip(basis9.electrodes, sol.voltages)}
    assert v["middle_left"] == pytest.approx(v["middle_right"], rel=1e-9)
    assert v["side_left"] == pytest.approx(v["side_right"], rel=1e-9)
    assert v["end_left_neg_z"] == pytest.approx(v["end_right_neg_z"], rel=1e-9)
    # the compensated field satisfies grad(phi) = E_stray at the points
    chk = dc.dc_field_check(basis9, sol.voltages, pts)
    assert np.allclose(chk.gradients, [[0.0, 50.0, 0.0]] * 2, atol=1e-6 * 50.0)


def test_solution_is_minimum_norm_against_qp_oracle(basis9):
    constraints = dc.DcConstraintSet(
        null_points=((-15e-6, 80e-6, 0.0), (15e-6, 80e-6, 0.0)),
        curvature_targets=(((-15e-6, 80e-6, 0.0), (0.0, 0.0, 1.0), 1e6),),
    )
    sol = dc.solve_dc_voltages(basis9, constraints)
    assert sol.feasible
    a, b, _ = dc.constraint_matrix(basis9, constraints)
    oracle = scipy_minimize(
        lambda v: v @ v, np.zeros(len(basis9)), jac=lambda v: 2 * v,
        constraints=[{"type": "eq", "fun": lambda v: a @ v - b, "jac": lambda v: a}],
        method="SLSQP", options={"ftol": 1e-18, "maxiter": 1000},
    )
    assert np.abs(oracle.x - sol.voltages).max() < 1e-8 * max(1.0, np.abs(sol.voltages).max())
    assert sol.objective <= oracle.x @ oracle.x * (1 + 1e-9)


def test_constraints_satisfied_to_tight_tolerance(basis9):
    constraints = dc.DcConstraintSet(
        null_points=((-15e-6, 80e-6, 0.0), (15e-6, 80e-6, 0.0)),
        curvature_targets=(
            ((-15e-6, 80e-6, 0.0), (0.0, 0.0, 1.0), 5e5),
            ((15e-6, 80e-6, 0.0), (0.0, 0.0, 1.0), 5e5),
        ),
    )
    sol = dc.solve_dc_voltages(basis9, constraints)
    a, b, _ = dc.constraint_matrix(basis9, constraints)
    scale = np.abs(b) + np.linalg.norm(a, axis=1) * np.linalg.norm(sol.voltages)
    assert np.all(np.abs(a @ sol.voltages - b) <= 1e-9 * scale)


def test_duplicate_rows_keep_the_solution(basis9):
    pts = ((-15e-6, 80e-6, 0.0), (15e-6, 80e-6, 0.0))
    base = dc.DcConstraintSet(
        null_points=pts,
        curvature_targets=(((0.0, 80e-6, 0.0), (0.0, 0.0, 1.0), 1e6),),
    )
    doubled = dc.DcConstraintSet(
        null_points=pts + pts,
        curvature_targets=base.curvature_targets * 2,
    )
    s1 = dc.solve_dc_voltages(basis9, base)
    s2 = dc.solve_dc_voltages(basis9, doubled)
    assert np.allclose(s1.voltages, s2.voltages, rtol=1e-9, atol=1e-12)
    assert s2.feasible


def test_linearity_in_targets(basis9):
    def solve(scale):
        c = dc.DcConstraintSet(
            null_points=((0.0, 80e-6, 0.0),),
            stray_field=(0.0, scale * 20.0, 0.0),
            curvature_targets=(((0.0, 80e-6, 0.0), (0.0, 0.0, 1.0), scale * 1e6),),
        )
        return dc.solve_dc_voltages(basis9, c).voltages

    v1, v3 = solve(1.0), solve(3.0)
    assert np.allclose(3.0 * v1, v3, rtol=1e-9, atol=1e-12)


def test_inconsistent_constraints_reported_not_silently_fit(basis9):
    p = (0.0, 80e-6, 0.0)
    phi_row = np.array([rect_potential(e, 1.0, p) for e in basis9.electrodes])
    conflicting = dc.DcConstraintSet(
        potential_targets=((p, 1.0), (p, 2.0)),
    )
    sol = dc.solve_dc_voltages(basis9, conflicting)
    assert not sol.feasible
    assert len(sol.infeasible_rows) >= 1
    assert sol.method == "lstsq"
    assert np.all(np.isfinite(sol.voltages))
    assert phi_row @ sol.voltages == pytest.approx(1.5, rel=1e-6)


def test_zero_voltages_zero_field(basis9):
    chk = dc.dc_field_check(basis9, np.zeros(9), [(0.0, 50e-6, 10e-6)])
    assert np.all(chk.gradients == 0.0)
    assert np.all(chk.hessians == 0.0)
    assert np.all(chk.potentials == 0.0)


def test_field_check_matches_finite_differences(basis9):
    rng = np.random.default_rng(41)
    v = rng.normal(0, 1, 9)
    p = np.array([12e-6, 70e-6, -40e-6])
    chk = dc.dc_field_check(basis9, v, [p])
    h = 1e-9
    eye = np.eye(3) * h
    g_fd = np.array([
        (basis9.potential(v, p + d) - basis9.potential(v, p - d)) / (2 * h) for d in eye
    ])
    assert np.allclose(chk.gradients[0], g_fd, rtol=1e-6, atol=1e-6 * np.abs(g_fd).max())
    h_fd = np.array([
        (basis9.gradient(v, p + d) - basis9.gradient(v, p - d)) / (2 * h) for d in eye
    ])
    assert np.allclose(chk.hessians[0], h_fd, rtol=1e-6, atol=1e-6 * np.abs(h_fd).max())


def test_validation_errors(basis9):
    with pytest.raises(ValueError, match="at least one"):
        dc.DcBasis(electrodes=())
    with pytest.raises(ValueError, match="empty"):
        dc.DcConstraintSet()
    with pytest.raises(ValueError, match="voltages"):
        dc.dc_field_check(basis9, [1.0, 2.0], [(0.0, 1e-6, 0.0)])
