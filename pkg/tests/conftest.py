import numpy as np
import pytest

from trapscape import AxialConfinement, DriveConfig, TrapModel, canonical_geometry
from trapscape import crystal, nodes

OMEGA_RF = 2 * np.pi * 27.2e6


def drive(v_rf=42.5, r=0.0):
    return DriveConfig(v_rf=v_rf, ratio_r=r, omega_rf=OMEGA_RF)


@pytest.fixture(scope="session")
def geometry():
    return canonical_geometry()


@pytest.fixture(scope="session")
def single_well_model(geometry):
    """Single-well trap, axial 0.19 MHz (string-spacing configuration)."""
    return TrapModel(
        geometry=geometry,
        drive=drive(r=0.0),
        axial_wells=(AxialConfinement(omega_z=2 * np.pi * 0.19e6),),
    )


@pytest.fixture(scope="session")
def double_well_model(geometry):
    """Double-well trap at R = 0.9, two 0.19 MHz wells on the nodes."""
    m = TrapModel(
        geometry=geometry,
        drive=drive(r=0.9),
        axial_wells=(
            AxialConfinement(omega_z=2 * np.pi * 0.19e6),
            AxialConfinement(omega_z=2 * np.pi * 0.19e6),
        ),
    )
    return nodes.resolve_axial_wells(m)


@pytest.fixture(scope="session")
def corrugation_model(geometry):
    """Nanofriction configuration: 60 V amplitude, 15 kHz wells, d = 30 um."""
    m = TrapModel(
        geometry=geometry,
        drive=DriveConfig(v_rf=60.0, ratio_r=0.9, omega_rf=OMEGA_RF),
        axial_wells=(
            AxialConfinement(omega_z=2 * np.pi * 15e3),
            AxialConfinement(omega_z=2 * np.pi * 15e3),
        ),
    )
    r30 = nodes.ratio_for_separation(m, 30e-6)
    from dataclasses import replace

    m = replace(m, drive=replace(m.drive, ratio_r=r30))
    return nodes.resolve_axial_wells(m)


@pytest.fixture(scope="session")
def crystal14(corrugation_model):
    return crystal.solve_equilibrium(corrugation_model, 14)
