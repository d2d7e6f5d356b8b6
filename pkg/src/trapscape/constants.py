"""Physical constants and unit conversions (SI internally, CODATA 2018)."""

import math

ELEMENTARY_CHARGE = 1.602176634e-19  # C (exact)
ATOMIC_MASS = 1.66053906660e-27      # kg
EPSILON_0 = 8.8541878128e-12         # F/m
BOLTZMANN = 1.380649e-23             # J/K (exact)

# q^2 / (4 pi eps0) for a single elementary charge, in J*m
COULOMB_QQ = ELEMENTARY_CHARGE**2 / (4.0 * math.pi * EPSILON_0)

EV = ELEMENTARY_CHARGE   # J per eV
MEV = 1e-3 * EV          # J per meV
UM = 1e-6                # m per micrometer

CA40_MASS = 40.0 * ATOMIC_MASS


def joule_to_mev(energy):
    return energy / MEV


def mev_to_joule(energy):
    return energy * MEV
