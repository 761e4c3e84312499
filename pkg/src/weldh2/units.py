"""Unit system and physical constants.

Canonical unit system used throughout the package:

    length       mm
    force        N
    stress       MPa (N/mm^2)
    energy       mJ (N*mm); energy densities in MPa
    time         s
    temperature  degC (absolute temperatures in K where noted)
    heat power   W; fluxes W/mm^2; conductivity W/(mm*degC)
    mass         kg; density kg/mm^3
    hydrogen     wppm for concentrations; sites/mm^3 for trap algebra

Values supplied in common SI surface units (W/m^2/K etc.) are converted on
input; see UNIT_FACTORS.
"""

import math

# Physical constants
GAS_CONSTANT = 8.314          # J/(mol*K)
STEFAN_BOLTZMANN = 5.67e-14   # W/(mm^2*K^4), from 5.67e-8 W/(m^2*K^4)
ABSOLUTE_ZERO_C = -273.0      # degC, offset used in the radiation law
AMBIENT_T = 21.0              # degC
TRANSPORT_T_K = 294.15        # K, isothermal hydrogen transport temperature

# Hydrogen bookkeeping: 1 wppm of H in bcc iron expressed as a site density.
# rho_Fe = 7870 kg/m^3, M_H = 1.008 g/mol, N_A = 6.02214076e23 /mol:
# 1e-6 * 7870e3 g/m^3 / 1.008 g/mol * N_A = 4.702e21 sites/m^3 = 4.702e12 ... per mm^3:
IRON_DENSITY = 7.87e-6            # kg/mm^3
H_MOLAR_MASS = 1.008e-3           # kg/mol
AVOGADRO = 6.02214076e23          # 1/mol
SITES_PER_WPPM = 1e-6 * IRON_DENSITY / H_MOLAR_MASS * AVOGADRO  # sites/mm^3 per wppm

# Multiplicative factors mapping "value in <unit>" to the canonical system.
# Dimensionless and already-canonical units map to 1.0.
UNIT_FACTORS = {
    "-": 1.0,
    "mm": 1.0,
    "m": 1e3,
    "um": 1e-3,
    "deg": 1.0,
    "degC": 1.0,
    "K": 1.0,                  # temperature differences only
    "s": 1.0,
    "MPa": 1.0,
    "Pa": 1e-6,
    "GPa": 1e3,
    "N/mm": 1.0,
    "MPa/s": 1.0,
    "Pa/s": 1e-6,
    "1/degC": 1.0,
    "W/mm^2/degC": 1.0,
    "W/m^2/K": 1e-6,
    "W/mm/degC": 1.0,
    "W/m/K": 1e-3,
    "J/kg/degC": 1.0,
    "J/kg/K": 1.0,
    "kg/mm^3": 1.0,
    "kg/m^3": 1e-9,
    "mm^2/s": 1.0,
    "m^2/s": 1e6,
    "sites/mm^3": 1.0,
    "sites/m^3": 1e-9,
    "J/mol": 1.0,
    "kJ/mol": 1e3,
    "mm^3/mol": 1.0,
    "wppm": 1.0,
    "wppm*MPa^-0.5": 1.0,
    "MPa*sqrt(mm)": 1.0,
    "%": 1.0,                  # percentages kept as given; semantics per key
    "count": 1.0,
}

# For each config quantity kind, the set of accepted unit strings.
QUANTITY_UNITS = {
    "length": ("mm", "m", "um"),
    "angle": ("deg",),
    "temperature": ("degC",),
    "time": ("s",),
    "stress": ("MPa", "Pa", "GPa"),
    "toughness": ("N/mm",),
    "pressure_rate": ("MPa/s", "Pa/s"),
    "expansion": ("1/degC",),
    "film": ("W/mm^2/degC", "W/m^2/K"),
    "conductivity": ("W/mm/degC", "W/m/K"),
    "heat_capacity": ("J/kg/degC", "J/kg/K"),
    "density": ("kg/mm^3", "kg/m^3"),
    "diffusivity": ("mm^2/s", "m^2/s"),
    "site_density": ("sites/mm^3", "sites/m^3"),
    "energy_mol": ("J/mol", "kJ/mol"),
    "molar_volume": ("mm^3/mol",),
    "concentration": ("wppm",),
    "solubility": ("wppm*MPa^-0.5",),
    "stress_intensity": ("MPa*sqrt(mm)",),
    "fraction": ("-", "%"),
    "dimensionless": ("-",),
    "count": ("count", "-"),
}


class UnitError(ValueError):
    """Raised when a quantity carries a unit incompatible with its kind."""


def convert(value, unit, kind):
    """Convert `value` given in `unit` to the canonical system.

    `kind` names the quantity class (see QUANTITY_UNITS); a unit that is
    not registered for that kind raises UnitError.
    """
    allowed = QUANTITY_UNITS.get(kind)
    if allowed is None:
        raise UnitError(f"unknown quantity kind {kind!r}")
    if unit not in allowed:
        raise UnitError(f"unit {unit!r} not valid for {kind} (expected one of {allowed})")
    return value * UNIT_FACTORS[unit]


def wppm_to_sites(c_wppm):
    """Lattice/trap concentration, wppm -> sites/mm^3."""
    return c_wppm * SITES_PER_WPPM


def sites_to_wppm(n_sites):
    """Lattice/trap concentration, sites/mm^3 -> wppm."""
    return n_sites / SITES_PER_WPPM


TWO_PI = 2.0 * math.pi
