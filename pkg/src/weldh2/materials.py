"""Point-level constitutive behaviour of the three weld regions.

Temperature-dependent elasticity and power-law hardening, radial-return J2
plasticity with phase-field degradation and a volumetric-deviatoric energy
split (compressive volumetric response never degraded), stored plastic
energy, hydrogen-dependent toughness, and the strength-calibrated crack
regularization length.

The default X80 property tables are approximate digitizations of the
qualitative temperature trends for pipeline steel (stiffness, yield and
conductivity falling toward the 1500 degC melting point, heat capacity
rising, density mildly falling). Users can replace any table from CSV.

Voigt convention throughout: [11, 22, 33, 12] with engineering shear gamma
for strains and the tensor component for stresses.
"""

import csv as _csv
from dataclasses import dataclass, field, replace

import numpy as np

from . import units

RETURN_TOL = 1e-10      # relative tolerance on the yield residual
RETURN_MAX_ITER = 50
BETA_PLASTIC = 0.1      # fraction of plastic work that drives fracture

_VOIGT_ID = np.array([1.0, 1.0, 1.0, 0.0])


class MaterialError(RuntimeError):
    """Constitutive-level failure (e.g. return mapping did not converge)."""


@dataclass(frozen=True)
class PropertyTable:
    """Piecewise-linear property vs temperature, clamped outside the range."""

    T: np.ndarray
    values: np.ndarray
    unit: str = "-"

    def __post_init__(self):
        T = np.asarray(self.T, dtype=float)
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "T", T)
        object.__setattr__(self, "values", v)
        if len(T) < 2 or len(T) != len(v):
            raise ValueError("property table needs >= 2 (T, value) pairs")
        if np.any(np.diff(T) <= 0):
            raise ValueError("property table abscissae must be strictly increasing")

    def __call__(self, T):
        return np.interp(T, self.T, self.values)

    def __eq__(self, other):
        return (isinstance(other, PropertyTable)
                and np.array_equal(self.T, other.T)
                and np.array_equal(self.values, other.values))


def lookup(table, T):
    """Piecewise-linear lookup with end-value clamping."""
    return table(T)


def load_property_table(path):
    """Read a two-column CSV (header row names the unit of column 2)."""
    with open(path, newline="") as fh:
        rows = list(_csv.reader(fh))
    unit = rows[0][1].strip() if len(rows[0]) > 1 else "-"
    data = np.array([[float(a), float(b)] for a, b in rows[1:]])
    return PropertyTable(data[:, 0], data[:, 1], unit=unit)


@dataclass
class MaterialRegion:
    """All constitutive constants and tables for one of BM / HAZ / WM."""

    name: str
    E_table: PropertyTable            # MPa
    sigma_y0_table: PropertyTable     # MPa
    alpha_table: PropertyTable        # 1/degC
    k_table: PropertyTable            # W/(mm*degC)
    c_table: PropertyTable            # J/(kg*degC)
    rho_table: PropertyTable          # kg/mm^3
    nu: float = 0.3
    N_hard: float = 0.1               # hardening exponent
    Gc0: float = 90.0                 # N/mm
    sigma_c: float = 2280.0           # MPa
    degradation: tuple = (0.12, 9.0, 0.8)   # (xi, eta, b)
    trap_densities: dict = field(default_factory=dict)  # family -> sites/mm^3
    D_L: float = 7.2e-3               # mm^2/s
    N_L: float = 5.2e20               # sites/mm^3
    V_H: float = 2000.0               # mm^3/mol
    sievert_s: float = 0.077          # wppm/MPa^0.5

    def E(self, T):
        return self.E_table(T)

    def sigma_y0(self, T):
        return self.sigma_y0_table(T)

    def alpha(self, T):
        return self.alpha_table(T)

    def moduli(self, T):
        """(E, K, G) at temperature T."""
        E = self.E_table(T)
        return E, E / (3.0 * (1.0 - 2.0 * self.nu)), E / (2.0 * (1.0 + self.nu))

    def elastic_variant(self):
        """Copy with plasticity disabled (yield pushed out of reach)."""
        sy = PropertyTable(self.sigma_y0_table.T,
                           np.full_like(self.sigma_y0_table.values, 1e8))
        return replace(self, sigma_y0_table=sy)


# ---------------------------------------------------------------------------
# default X80 property tables (approximate; see module docstring)

_T_GRID = np.array([21, 200, 400, 600, 800, 1000, 1200, 1350, 1500], dtype=float)
_E_SHAPE = np.array([190480, 183000, 172000, 152000, 120000, 72000,
                     30000, 10000, 2000]) / 190480.0
_SY_SHAPE = np.array([570, 545, 505, 430, 290, 130, 45, 15, 5]) / 570.0
_ALPHA = np.array([1.15, 1.25, 1.35, 1.42, 1.47, 1.50, 1.52, 1.54, 1.55]) * 1e-5
_K_COND = np.array([450, 415, 380, 335, 285, 268, 258, 253, 250]) * 1e-4
_C_HEAT = np.array([450, 480, 520, 560, 620, 660, 690, 705, 720], dtype=float)
_RHO = np.array([7.87, 7.81, 7.74, 7.66, 7.58, 7.52, 7.47, 7.44, 7.42]) * 1e-6

# Table-reported trap densities (sites/mm^3). The dislocation entries of the
# literal set are calibrated in the default set so that simulated permeation
# reproduces the measured apparent diffusivities per region; see
# hydrogen.calibrate_dislocation_density.
TRAP_DENSITIES_LITERAL = {
    "BM": {"dislocations": 3.13e27, "MA-interfaces": 2.56e12,
           "Fe3C-interfaces": 9.26e13, "grain-boundaries": 9.12e12},
    "HAZ": {"dislocations": 4.25e27, "MA-interfaces": 9.87e14,
            "Fe3C-interfaces": 3.23e13, "grain-boundaries": 1.63e11},
    "WM": {"dislocations": 5.15e26, "MA-interfaces": 9.56e12,
           "Fe3C-interfaces": 2.58e13, "grain-boundaries": 5.50e11},
}

TRAP_DENSITIES_CALIBRATED = {
    "BM": dict(TRAP_DENSITIES_LITERAL["BM"], dislocations=4.54e18),
    "HAZ": dict(TRAP_DENSITIES_LITERAL["HAZ"], dislocations=1.84e18),
    "WM": dict(TRAP_DENSITIES_LITERAL["WM"], dislocations=6.58e17),
}

_REGION_CONSTANTS = {
    #        E_RT    sy0_RT  N     Gc0  sigma_c_factor
    "BM": (190480.0, 570.0, 0.10, 90.0, 4.00),
    "HAZ": (202010.0, 598.0, 0.08, 50.0, 3.75),
    "WM": (180300.0, 688.0, 0.07, 57.0, 3.55),
}


def make_region(name, trap_set="calibrated", **overrides):
    """Default region definition for BM / HAZ / WM."""
    E_rt, sy_rt, N, Gc0, sc_fac = _REGION_CONSTANTS[name]
    traps = {"calibrated": TRAP_DENSITIES_CALIBRATED,
             "literal": TRAP_DENSITIES_LITERAL}[trap_set][name]
    kw = dict(
        name=name,
        E_table=PropertyTable(_T_GRID, E_rt * _E_SHAPE, unit="MPa"),
        sigma_y0_table=PropertyTable(_T_GRID, sy_rt * _SY_SHAPE, unit="MPa"),
        alpha_table=PropertyTable(_T_GRID, _ALPHA, unit="1/degC"),
        k_table=PropertyTable(_T_GRID, _K_COND, unit="W/mm/degC"),
        c_table=PropertyTable(_T_GRID, _C_HEAT, unit="J/kg/degC"),
        rho_table=PropertyTable(_T_GRID, _RHO, unit="kg/mm^3"),
        N_hard=N,
        Gc0=Gc0,
        sigma_c=sc_fac * sy_rt,
        trap_densities=dict(traps),
    )
    kw.update(overrides)
    return MaterialRegion(**kw)


def default_regions(trap_set="calibrated"):
    return {name: make_region(name, trap_set) for name in ("BM", "HAZ", "WM")}


# ---------------------------------------------------------------------------
# point-level operations

def yield_stress(region, T, eps_p):
    """Power-law isotropic hardening: sy0(T) * (1 + E(T) ep / sy0(T))^N."""
    sy0 = region.sigma_y0(T)
    E = region.E(T)
    return sy0 * (1.0 + E * np.asarray(eps_p) / sy0) ** region.N_hard


def hardening_slope(region, T, eps_p):
    """d(sigma_y)/d(eps_p) of the power law."""
    sy0 = region.sigma_y0(T)
    E = region.E(T)
    return E * region.N_hard * (1.0 + E * np.asarray(eps_p) / sy0) ** (region.N_hard - 1.0)


def thermal_strain(region, T, T0=units.AMBIENT_T, T_act=None):
    """Isotropic thermal strain alpha(T) (T - T0) I, as Voigt (..., 4).

    For material deposited strain-free at T_act, the thermal strain of the
    insertion state is subtracted so stress vanishes at activation.
    """
    T = np.asarray(T, dtype=float)
    e = region.alpha(T) * (T - T0)
    if T_act is not None:
        T_act = np.asarray(T_act, dtype=float)
        e = e - region.alpha(T_act) * (T_act - T0)
    out = np.zeros(np.shape(e) + (4,))
    out[..., 0] = out[..., 1] = out[..., 2] = e
    return out


def degradation_g(phi):
    """Elastic degradation (1 - phi)^2."""
    return (1.0 - np.asarray(phi)) ** 2


def degradation_gp(phi, beta=BETA_PLASTIC):
    """Plastic degradation beta*g + (1 - beta)."""
    return beta * degradation_g(phi) + (1.0 - beta)


def gc_of_hydrogen(region, C_L):
    """Toughness degraded by lattice hydrogen: Gc0*[xi + (1-xi) exp(-eta C^b)]."""
    xi, eta, b = region.degradation
    C = np.maximum(np.asarray(C_L, dtype=float), 0.0)
    return region.Gc0 * (xi + (1.0 - xi) * np.exp(-eta * C ** b))


def length_scale(region, T_ref=units.AMBIENT_T):
    """Crack regularization length 27 E Gc0 / (256 sigma_c^2).

    Evaluated once per region with the undegraded toughness; holding it
    fixed as Gc degrades preserves the mesh-resolution guarantees.
    """
    return 27.0 * float(region.E(T_ref)) * region.Gc0 / (256.0 * region.sigma_c ** 2)


def update_history(history_in, psi_e_plus, psi_p, beta=BETA_PLASTIC):
    """Monotone crack driving force: max(H, psi_e+ + beta*psi_p)."""
    return np.maximum(history_in, np.asarray(psi_e_plus) + beta * np.asarray(psi_p))


def plastic_energy(region, eps_p, T=units.AMBIENT_T):
    """Stored plastic work of the power-law, closed form."""
    sy0 = region.sigma_y0(T)
    E = region.E(T)
    N = region.N_hard
    ep = np.asarray(eps_p, dtype=float)
    return sy0 ** 2 / (E * (N + 1.0)) * ((1.0 + E * ep / sy0) ** (N + 1.0) - 1.0)


def _split_parts(eps_e):
    """Trace, deviator (Voigt-gamma input) and squared deviator norm."""
    tr = eps_e[..., 0] + eps_e[..., 1] + eps_e[..., 2]
    dev = eps_e.copy()
    dev[..., :3] -= tr[..., None] / 3.0
    dev_sq = (dev[..., 0] ** 2 + dev[..., 1] ** 2 + dev[..., 2] ** 2
              + 2.0 * (dev[..., 3] / 2.0) ** 2)
    return tr, dev, dev_sq


def strain_energy_split(region, eps_e, T=units.AMBIENT_T):
    """Volumetric-deviatoric split: (psi_e_plus, psi_e_minus)."""
    eps_e = np.asarray(eps_e, dtype=float)
    _, K, G = region.moduli(np.asarray(T, dtype=float))
    tr, _, dev_sq = _split_parts(eps_e)
    trp = np.maximum(tr, 0.0)
    trm = np.minimum(tr, 0.0)
    return 0.5 * K * trp ** 2 + G * dev_sq, 0.5 * K * trm ** 2


def stress_update_batch(region, eps, T, phi, eps_p_in, epq_in,
                        T_act=None, beta=BETA_PLASTIC):
    """Radial-return J2 update with phase-field degradation, vectorized.

    eps: (n, 4) total strain (activation offsets already removed), T/phi:
    (n,), eps_p_in: (n, 4), epq_in: (n,). Returns a dict with sigma, the
    consistent tangent D (n, 4, 4), updated plastic state, elastic strain
    and the split energy densities.
    """
    eps = np.atleast_2d(np.asarray(eps, dtype=float))
    n = len(eps)
    T = np.broadcast_to(np.asarray(T, dtype=float), (n,)).copy()
    phi = np.broadcast_to(np.asarray(phi, dtype=float), (n,))
    eps_p = np.array(np.atleast_2d(eps_p_in), dtype=float)
    epq = np.broadcast_to(np.asarray(epq_in, dtype=float), (n,)).astype(float).copy()

    E, K, G = region.moduli(T)
    g = degradation_g(phi)
    gp = degradation_gp(phi, beta)

    eps_e = eps - thermal_strain(region, T, T_act=T_act) - eps_p
    tr, dev, dev_sq = _split_parts(eps_e)
    svm_tr = 2.0 * G * np.sqrt(1.5 * dev_sq)          # undegraded trial von Mises

    sy = yield_stress(region, T, epq)
    f_tr = g * svm_tr - gp * sy
    plastic = f_tr > 1e-12 * np.maximum(sy, 1.0)

    dgam = np.zeros(n)
    if np.any(plastic):
        idx = np.where(plastic)[0]
        d = np.zeros(len(idx))
        svm_i, g_i, gp_i = svm_tr[idx], g[idx], gp[idx]
        G_i, T_i, ep0 = G[idx], T[idx], epq[idx]
        scale = np.maximum(gp_i * sy[idx], 1.0)
        for _ in range(RETURN_MAX_ITER):
            r = g_i * (svm_i - 3.0 * G_i * d) - gp_i * yield_stress(region, T_i, ep0 + d)
            if np.all(np.abs(r) <= RETURN_TOL * scale):
                break
            dr = -3.0 * g_i * G_i - gp_i * hardening_slope(region, T_i, ep0 + d)
            d = np.maximum(d - r / dr, 0.0)
        else:
            worst = float(np.max(np.abs(r) / scale))
            raise MaterialError(f"radial return did not converge (residual {worst:.2e})")
        dgam[idx] = d

    with np.errstate(invalid="ignore", divide="ignore"):
        theta = np.where(svm_tr > 0, 1.0 - 3.0 * G * dgam / svm_tr, 1.0)
    d_eps_p = (1.0 - theta)[:, None] * dev
    eps_p_out = eps_p + d_eps_p
    epq_out = epq + dgam
    eps_e_out = eps_e - d_eps_p
    tr_e, dev_e, dev_sq_e = _split_parts(eps_e_out)

    pos = tr_e > 0.0
    K_eff = np.where(pos, g * K, K)
    sigma = np.empty((n, 4))
    sigma[:, :3] = (K_eff * tr_e)[:, None] + (g * 2.0 * G)[:, None] * dev_e[:, :3]
    sigma[:, 3] = g * G * dev_e[:, 3]

    psi_plus = 0.5 * K * np.maximum(tr_e, 0.0) ** 2 + G * dev_sq_e
    psi_minus = 0.5 * K * np.minimum(tr_e, 0.0) ** 2

    # consistent tangent
    J4 = np.einsum("i,j->ij", _VOIGT_ID, _VOIGT_ID)
    P_dev = np.diag([1.0, 1.0, 1.0, 0.5]) - J4 / 3.0
    D = K_eff[:, None, None] * J4 + (2.0 * G * g * theta)[:, None, None] * P_dev
    if np.any(plastic):
        idx = np.where(plastic)[0]
        Hs = hardening_slope(region, T[idx], epq_out[idx])
        Heff = (gp[idx] / np.maximum(g[idx], 1e-12)) * Hs
        theta_bar = 1.0 / (1.0 + Heff / (3.0 * G[idx])) - (1.0 - theta[idx])
        nhat = dev[idx].copy()
        nhat[:, 3] /= 2.0                              # tensor components
        nrm = np.sqrt(np.sum(nhat[:, :3] ** 2, axis=1) + 2.0 * nhat[:, 3] ** 2)
        nhat /= nrm[:, None]
        # n x n in Voigt-eng: both the stress row and the gamma column carry
        # the tensor 12-component (2*n12*de12 = n12*dgamma), so no rescaling.
        outer = np.einsum("ni,nj->nij", nhat, nhat)
        D[idx] -= (2.0 * G[idx] * g[idx] * theta_bar)[:, None, None] * outer

    return {
        "sigma": sigma, "D": D, "eps_p": eps_p_out, "eps_p_eq": epq_out,
        "eps_e": eps_e_out, "psi_plus": psi_plus, "psi_minus": psi_minus,
        "delta_eps_p": dgam,
    }


def stress_update(region, history, eps_total, T, phi, T_act=None):
    """Single-point stress update.

    `history` is a dict with keys eps_p (4,), eps_p_eq, history (the crack
    driving force record). Returns (sigma, history_out, tangent).
    """
    res = stress_update_batch(region, eps_total[None, :], [T], [phi],
                              history["eps_p"][None, :], [history["eps_p_eq"]],
                              T_act=None if T_act is None else [T_act])
    psi_p = plastic_energy(region, res["eps_p_eq"][0], T)
    h_out = {
        "eps_p": res["eps_p"][0],
        "eps_p_eq": float(res["eps_p_eq"][0]),
        "history": float(update_history(history.get("history", 0.0),
                                        res["psi_plus"][0], psi_p)),
    }
    return res["sigma"][0], h_out, res["D"][0]
