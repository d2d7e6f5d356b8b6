import numpy as np
import pytest

from trapscape import DriveConfig, TrapModel, canonical_geometry
from trapscape import fields as fld
from trapscape import nodes
from trapscape.constants import EV
from trapscape.fields import AxialConfinement, IonSpecies
from trapscape.geometry import DomainError

OMEGA_RF = 2 * np.pi * 27.2e6


def model(r, v=42.5):
    return TrapModel(
        geometry=canonical_geometry(),
        drive=DriveConfig(v_rf=v, ratio_r=r, omega_rf=OMEGA_RF),
    )


def test_drive_validation():
    with pytest.raises(ValueError):
        DriveConfig(v_rf=0.0, ratio_r=0.5, omega_rf=OMEGA_RF)
    with pytest.raises(ValueError):
        DriveConfig(v_rf=10.0, ratio_r=-0.1, omega_rf=OMEGA_RF)
    with pytest.raises(ValueError):
        DriveConfig(v_rf=10.0, ratio_r=0.5, omega_rf=OMEGA_RF, phase="out_of_phase")
    with pytest.raises(ValueError):
        IonSpecies(mass=1e-26, charge=0.0)


def test_field_vanishes_on_axis_by_symmetry():
    m = model(0.7)
    for y in (10e-6, 50e-6, 150e-6):
        e = fld.rf_field(m, (0.0, y))
        assert abs(e[0]) < 1e-9 * abs(e[1]) + 1e-12


def test_field_zero_at_node():
    m = model(0.0)
    ns = nodes.find_nodes(m, compute_barrier=False)
    assert ns.topology == "single"
    e = fld.rf_field(m, ns.nodes[0])
    assert np.hypot(*e) < 1e-4


def test_center_rf_reduces_field_below_node():
    # in-phase center-RF drive opposes the outer-RF field below the node line
    p = (0.0, 20e-6)
    e0 = fld.rf_field(model(0.0), p)
    e5 = fld.rf_field(model(0.5), p)
    assert abs(e5[1]) < abs(e0[1])


def test_field_matches_fd_of_potential():
    m = model(0.9)
    rng = np.random.default_rng(11)
    h = 1e-9
    for _ in range(100):
        p = np.array([rng.uniform(-140e-6, 140e-6), rng.uniform(5e-6, 195e-6)])
        e = fld.rf_field(m, p)
        e_fd = -np.array(
            [
                (fld.rf_potential(m, p + d) - fld.rf_potential(m, p - d)) / (2 * h)
                for d in (np.array([h, 0.0]), np.array([0.0, h]))
            ]
        )
        assert np.allclose(e, e_fd, rtol=1e-6, atol=1e-6 * np.abs(e_fd).max())


def test_pseudopotential_gradient_and_hessian_match_fd():
    m = model(0.9)
    rng = np.random.default_rng(12)
    h = 1e-9
    steps = (np.array([h, 0.0]), np.array([0.0, h]))
    for _ in range(40):
        p = np.array([rng.uniform(-120e-6, 120e-6), rng.uniform(10e-6, 190e-6)])
        g = fld.pseudopotential_gradient(m, p)
        g_fd = np.array(
            [(fld.pseudopotential(m, p + d) - fld.pseudopotential(m, p - d)) / (2 * h)
             for d in steps]
        )
        assert np.allclose(g, g_fd, rtol=1e-6, atol=1e-6 * np.abs(g_fd).max())
        hess = fld.pseudopotential_hessian(m, p)
        h_fd = np.array(
            [(fld.pseudopotential_gradient(m, p + d)
              - fld.pseudopotential_gradient(m, p - d)) / (2 * h)
             for d in steps]
        )
        assert np.allclose(hess, h_fd, rtol=1e-5, atol=1e-5 * np.abs(h_fd).max())


def test_pseudopotential_nonnegative_zero_iff_field_zero():
    m = model(0.9)
    rng = np.random.default_rng(13)
    pts = np.stack(
        [rng.uniform(-150e-6, 150e-6, 500), rng.uniform(2e-6, 200e-6, 500)], axis=-1
    )
    phi = np.asarray(fld.pseudopotential(m, pts))
    assert np.all(phi >= 0)
    e = fld.rf_field(m, pts)
    e2 = np.einsum("...k,...k->...", e, e)
    assert np.all((phi < 1e-40) == (e2 < 1e-20))


def test_voltage_scaling_exact():
    # doubling v_rf scales the pseudopotential by exactly 4 in floating point
    m1, m2 = model(0.9, v=42.5), model(0.9, v=85.0)
    rng = np.random.default_rng(14)
    for _ in range(50):
        p = (rng.uniform(-100e-6, 100e-6), rng.uniform(5e-6, 180e-6))
        assert fld.pseudopotential(m2, p) == 4.0 * fld.pseudopotential(m1, p)


def test_mirror_symmetry():
    m = model(1.1)
    rng = np.random.default_rng(15)
    for _ in range(50):
        x, y = rng.uniform(0, 140e-6), rng.uniform(3e-6, 190e-6)
        a = fld.pseudopotential(m, (x, y))
        b = fld.pseudopotential(m, (-x, y))
        assert a == pytest.approx(b, rel=1e-12)


def test_grid_matches_direct_calls_and_flags_clip():
    m = model(0.9)
    g = fld.pseudopotential_grid(m, (-100e-6, 100e-6), (2e-6, 150e-6), 41, 31,
                                 clip_threshold=0.02 * EV)
    for i in (0, 10, 30):
        for j in (0, 17, 40):
            assert g.phi[i, j] == fld.pseudopotential(m, (g.x[j], g.y[i]))
    assert g.clipped.any()
    assert np.array_equal(g.clipped, g.phi > 0.02 * EV)


def test_grid_minima_single_then_double():
    g0 = fld.pseudopotential_grid(model(0.0), (-120e-6, 120e-6), (2e-6, 200e-6), 121, 100)
    mins0 = g0.local_minima()
    assert len(mins0) == 1
    assert abs(mins0[0][0]) < 2e-6
    g9 = fld.pseudopotential_grid(model(0.9), (-120e-6, 120e-6), (2e-6, 200e-6), 241, 199)
    mins9 = g9.local_minima()
    assert len(mins9) == 2
    (x1, y1, _), (x2, y2, _) = sorted(mins9)
    assert x1 == pytest.approx(-x2, abs=2e-6)
    assert y1 == pytest.approx(y2, abs=2e-6)


def test_grid_validation():
    m = model(0.0)
    with pytest.raises(ValueError):
        fld.pseudopotential_grid(m, (0.0, 1e-6), (1e-6, 2e-6), 1, 5)
    with pytest.raises(DomainError):
        fld.pseudopotential_grid(m, (0.0, 1e-6), (-1e-6, 2e-6), 5, 5)
    with pytest.raises(ValueError):
        fld.pseudopotential_grid(m, (1e-6, 0.0), (1e-6, 2e-6), 5, 5)


def _well_model(split=(0.5, 0.5), omega_z=2 * np.pi * 0.19e6):
    m = model(0.0)
    well = AxialConfinement(omega_z=omega_z, radial_deconfinement_split=split)
    m = TrapModel(geometry=m.geometry, drive=m.drive, axial_wells=(well,))
    return nodes.resolve_axial_wells(m)


def test_total_potential_at_well_center():
    m = _well_model()
    cx, cy = m.axial_wells[0].center_xy
    u = fld.total_potential(m, (cx, cy, 0.0), 0)
    assert abs(u) < 1e-40


def test_total_potential_pure_axial_displacement():
    m = _well_model(split=(0.0, 0.0))
    cx, cy = nodes.find_nodes(m, compute_barrier=False).nodes[0]
    w = m.axial_wells[0]
    delta = 3.7e-6
    u = fld.total_potential(m, (cx, cy, delta), 0)
    expect = 0.5 * m.species.mass * w.omega_z**2 * delta**2
    assert u == pytest.approx(expect, rel=1e-12)


def test_axial_curvature_matches_omega_z():
    m = _well_model()
    cx, cy = m.axial_wells[0].center_xy
    h = 1e-9
    upp = (
        fld.total_potential(m, (cx, cy, h), 0)
        - 2 * fld.total_potential(m, (cx, cy, 0.0), 0)
        + fld.total_potential(m, (cx, cy, -h), 0)
    ) / h**2
    omega = np.sqrt(upp / m.species.mass)
    assert omega == pytest.approx(m.axial_wells[0].omega_z, rel=1e-9)


def test_deconfinement_split_validation():
    AxialConfinement(omega_z=1.0, radial_deconfinement_split=(0.0, 0.0))
    AxialConfinement(omega_z=1.0, radial_deconfinement_split=(0.3, 0.7))
    with pytest.raises(ValueError):
        AxialConfinement(omega_z=1.0, radial_deconfinement_split=(0.3, 0.3))
    with pytest.raises(ValueError):
        AxialConfinement(omega_z=1.0, radial_deconfinement_split=(-0.2, 1.2))


def test_well_index_out_of_range():
    m = _well_model()
    with pytest.raises(IndexError):
        fld.total_potential(m, (0.0, 50e-6, 0.0), 3)


def test_mathieu_estimate_scales_with_voltage():
    p = (0.0, 80e-6)
    q1 = fld.mathieu_q_estimate(model(0.9, v=42.5), p)
    q2 = fld.mathieu_q_estimate(model(0.9, v=85.0), p)
    assert q2 == pytest.approx(2 * q1, rel=1e-12)
    assert q1 > 0
