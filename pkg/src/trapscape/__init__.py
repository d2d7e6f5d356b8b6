"""trapscape: surface-electrode trap with a tunable double-well pseudopotential.

Library + CLI for RF node bifurcation tracking, ion Coulomb crystal
equilibria, normal-mode spectra, and the corrugation (nanofriction)
analysis of parallel ion strings.
"""

from .fields import AxialConfinement, DriveConfig, IonSpecies, TrapModel, ca40
from .geometry import RectElectrode, StripElectrode, TrapGeometry, canonical_geometry

__version__ = "0.1.0"

__all__ = [
    "AxialConfinement",
    "DriveConfig",
    "IonSpecies",
    "RectElectrode",
    "StripElectrode",
    "TrapGeometry",
    "TrapModel",
    "ca40",
    "canonical_geometry",
    "__version__",
]
