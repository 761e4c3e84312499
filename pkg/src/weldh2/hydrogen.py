"""Multi-trap hydrogen transport.

Two-level (lattice/trap) model under Oriani equilibrium: deep traps slow
apparent diffusion through a concentration-dependent storage factor, newly
created dislocation traps sink lattice hydrogen (Krom term), hydrostatic
stress gradients drift it, and crack regions transport it quasi-instantly
via an enhanced diffusivity.

Occupancy convention: theta_T/(1-theta_T) = theta_L/(1-theta_L) * K with
K = exp(+W_B/(R T)), i.e. deeper traps are fuller. (The opposite printed
sign would make binding energies repulsive and contradicts the trap-density
tables; see the project notes.)

Concentrations are wppm everywhere except the trap-site algebra, which runs
in sites/mm^3.
"""

from dataclasses import dataclass

import numpy as np

from . import fem, units
from .mechanics import region_index

# dislocation density evolution constants (bcc iron)
RHO_DIS_0 = 1e10          # 1/m^2, unstrained dislocation density
GAMMA_DIS = 1e16          # 1/m^2, strain-hardening slope
LATTICE_D = 2.866e-10     # m, bcc iron lattice parameter
EPS_P_SAT = 0.5           # saturation strain of trap creation

TRANSPORT_TOL = 1e-8
TRANSPORT_MAX_ITER = 40
DEFAULT_KD = 1e3          # crack diffusivity enhancement
DEFAULT_PHI_TH = 0.9


@dataclass(frozen=True)
class TrapFamily:
    """One microstructural trap type."""
    name: str
    W_B: float                 # J/mol binding energy
    evolving: bool = False     # density grows with plastic strain


DEFAULT_TRAPS = (
    TrapFamily("dislocations", 25.0e3, evolving=True),
    TrapFamily("MA-interfaces", 47.1e3),
    TrapFamily("Fe3C-interfaces", 13.5e3),
    TrapFamily("grain-boundaries", 32.0e3),
)


def wppm_to_sites(c):
    """wppm -> sites/mm^3 (kappa from iron density, H molar mass, Avogadro)."""
    c = np.asarray(c, dtype=float)
    if np.any(c < 0):
        raise ValueError("concentration must be non-negative")
    return c * units.SITES_PER_WPPM


def sites_to_wppm(n):
    return np.asarray(n, dtype=float) / units.SITES_PER_WPPM


def equilibrium_constant(W_B, T_K=units.TRANSPORT_T_K):
    return np.exp(W_B / (units.GAS_CONSTANT * T_K))


def oriani_occupancy(theta_L, W_B, T_K=units.TRANSPORT_T_K):
    """Trap occupancy in equilibrium with the lattice occupancy theta_L."""
    theta_L = np.asarray(theta_L, dtype=float)
    if np.any(theta_L >= 1.0) or np.any(theta_L < 0.0):
        raise ValueError("lattice occupancy must lie in [0, 1)")
    K = equilibrium_constant(W_B, T_K)
    x = K * theta_L
    return x / (1.0 - theta_L + x)


def trap_density_evolution(eps_p):
    """Dislocation trap density and creation rate vs equivalent plastic strain.

    Returns (N_T, dN/deps_p) in sites/mm^3 following the geometric relation
    N_T = sqrt(2) rho / d with the piecewise dislocation density evolution
    (saturation at eps_p = 0.5). Rates are the published piecewise values.
    """
    ep = np.asarray(eps_p, dtype=float)
    rho = RHO_DIS_0 + 2.0 * GAMMA_DIS * np.minimum(ep, EPS_P_SAT)
    N = np.sqrt(2.0) * rho / LATTICE_D * 1e-9          # 1/m^3 -> 1/mm^3
    dN = np.where(ep < EPS_P_SAT, np.sqrt(2.0) * GAMMA_DIS / LATTICE_D * 1e-9, 0.0)
    return N, dN


def dislocation_trap_density(region, eps_p):
    """Region dislocation trap density: calibrated unstrained value plus the
    geometric strain-induced increment."""
    N_geom, _ = trap_density_evolution(eps_p)
    N0_geom, _ = trap_density_evolution(0.0)
    return region.trap_densities["dislocations"] + (N_geom - N0_geom)


def sievert_boundary(p_H2, s=0.077):
    """Surface lattice concentration C = s sqrt(p)."""
    p = np.asarray(p_H2, dtype=float)
    if np.any(p < 0):
        raise ValueError("pressure must be non-negative")
    return s * np.sqrt(p)


def crack_enhanced_DL(D_L, phi, k_d=DEFAULT_KD, phi_th=DEFAULT_PHI_TH):
    """Diffusivity inside crack regions: D_L [1 + k_d H(phi - phi_th)].

    Heaviside convention H(0) = 1: phi exactly at the threshold counts as
    cracked."""
    enhanced = np.asarray(phi, dtype=float) >= phi_th
    return D_L * (1.0 + k_d * enhanced)


def _storage_ratios(region, traps, C_wppm, N_T_dis, T_K):
    """Per-family C_T (1 - theta_T) / C_L, robust down to C_L = 0."""
    theta_L = np.asarray(C_wppm, dtype=float) * units.SITES_PER_WPPM / region.N_L
    total = np.zeros_like(theta_L)
    for fam in traps:
        N_T = N_T_dis if fam.evolving else region.trap_densities[fam.name]
        K = equilibrium_constant(fam.W_B, T_K)
        D = 1.0 + (K - 1.0) * theta_L
        total = total + (np.asarray(N_T) / region.N_L) * K * (1.0 - theta_L) / D ** 2
    return total


def trap_concentrations(region, traps, C_wppm, N_T_dis, T_K=units.TRANSPORT_T_K):
    """Trapped concentration per family, in wppm, keyed by family name."""
    theta_L = np.asarray(C_wppm, dtype=float) * units.SITES_PER_WPPM / region.N_L
    out = {}
    for fam in traps:
        N_T = N_T_dis if fam.evolving else region.trap_densities[fam.name]
        th = oriani_occupancy(theta_L, fam.W_B, T_K)
        out[fam.name] = th * sites_to_wppm(np.asarray(N_T))
    return out


def effective_diffusivity(C_L, traps, region, eps_p=0.0, T_K=units.TRANSPORT_T_K):
    """Trap-retarded diffusivity D_e = D_L C_L / (C_L + sum C_T (1-theta_T)).

    Evaluates the dilute closed form D_L / (1 + sum K_i N_i / N_L) in the
    C_L -> 0 limit."""
    N_dis = dislocation_trap_density(region, eps_p)
    f = 1.0 + _storage_ratios(region, traps, C_L, N_dis, T_K)
    return region.D_L / f


class TransportStepRejected(RuntimeError):
    """Negative concentrations or non-convergence; caller halves dt."""


class TransportProblem:
    """Implicit multi-trap transport solver bound to one mesh + regions."""

    def __init__(self, mesh, regions, traps=DEFAULT_TRAPS, T_K=units.TRANSPORT_T_K,
                 k_d=DEFAULT_KD, phi_th=DEFAULT_PHI_TH):
        self.mesh = mesh
        self.regions = regions
        self.traps = tuple(traps)
        self.T_K = T_K
        self.k_d = k_d
        self.phi_th = phi_th
        self.region_idx = region_index(mesh)
        self.region_list = [regions[n] for n in ("BM", "HAZ", "WM")]
        ne = mesh.n_elements
        self.D_L_e = np.empty(ne)
        self.N_L_e = np.empty(ne)
        self.V_H_e = np.empty(ne)
        for i, r in enumerate(self.region_list):
            sel = self.region_idx == i
            self.D_L_e[sel] = r.D_L
            self.N_L_e[sel] = r.N_L
            self.V_H_e[sel] = r.V_H

    def _chord_storage(self, Cq_new, Cq_old, N_dis_new, act):
        """Chord storage factor per qp: 1 + sum dC_T / dC_L (secant form).

        Using the secant of C_T between the old and new states makes the
        implicit step conserve lattice + trapped hydrogen exactly."""
        f = np.ones_like(Cq_new)
        ridx = self.region_idx[act]
        for i, region in enumerate(self.region_list):
            sel = ridx == i
            if not sel.any():
                continue
            cn, co = Cq_new[sel], Cq_old[sel]
            dn = N_dis_new[sel]
            dC = cn - co
            small = np.abs(dC) < 1e-12 * np.maximum(np.abs(cn), 1.0)
            cm = 0.5 * (cn + co)
            ratio = np.zeros_like(cn)
            for fam in self.traps:
                N_T = dn if fam.evolving else region.trap_densities[fam.name]
                K = equilibrium_constant(fam.W_B, self.T_K)
                thn = oriani_occupancy(np.clip(cn, 0, None) * units.SITES_PER_WPPM / region.N_L, fam.W_B, self.T_K)
                tho = oriani_occupancy(np.clip(co, 0, None) * units.SITES_PER_WPPM / region.N_L, fam.W_B, self.T_K)
                Nt_wppm = sites_to_wppm(np.asarray(N_T) * np.ones_like(cn))
                sec = np.where(small, 0.0, Nt_wppm * (thn - tho) / np.where(small, 1.0, dC))
                # derivative fallback at the midpoint
                thm = np.clip(cm, 0, None) * units.SITES_PER_WPPM / region.N_L
                Dm = 1.0 + (K - 1.0) * thm
                der = (np.asarray(N_T) / region.N_L) * K / Dm ** 2
                ratio += np.where(small, der, sec)
            f[sel] += ratio
        return f

    def step(self, state, dt, dirichlet, sigma_H=None, N_T_dis_new=None,
             theta_old_dis=None, tol=TRANSPORT_TOL, max_iter=TRANSPORT_MAX_ITER):
        """One implicit transport step; returns (C_new, info).

        dirichlet: list of (node set, values). sigma_H: nodal hydrostatic
        stress for the drift term. N_T_dis_new: end-of-step dislocation trap
        density per qp (Krom sink = theta_T(C_old) * dN / dt).
        """
        mesh = self.mesh
        geo = mesh.geometry()
        act = np.where(state.active)[0]
        N = geo.quad.shape_values
        w = geo.wdet[act]
        dNdx = geo.dNdx[act]
        conn = mesh.elements[act]
        C_old = state.C_L.copy()
        Cq_old = np.einsum("qa,ea->eq", N, C_old[conn])

        D_eff = np.repeat(self.D_L_e[act][:, None], geo.n_qp, axis=1)
        phiq = fem.interp_to_points(mesh, state.phi)[act]
        D_eff = D_eff * (1.0 + self.k_d * (phiq >= self.phi_th))

        Ke_diff = np.einsum("eqai,eqbi,eq,eq->eab", dNdx, dNdx, D_eff, w)
        if sigma_H is not None:
            gs = fem.gradient_at_points(mesh, sigma_H)[act]
            # V_H sigma_H is in N*mm/mol; the gas constant is in J/(mol K)
            coef = self.V_H_e[act][:, None] * 1e-3 / (units.GAS_CONSTANT * self.T_K)
            bq = coef[..., None] * gs * D_eff[..., None]
            Ke_diff -= np.einsum("eqai,eqi,qb,eq->eab", dNdx, bq, N, w)
        K_flux = fem.assemble_matrix(mesh.n_nodes, conn, Ke_diff)

        fe_krom = None
        if N_T_dis_new is not None:
            dN = (N_T_dis_new[act] - state.N_T_dis[act])
            if theta_old_dis is None:
                fam = next(f for f in self.traps if f.evolving)
                thL = np.clip(Cq_old, 0, None) * units.SITES_PER_WPPM / \
                    np.repeat(self.N_L_e[act][:, None], geo.n_qp, axis=1)
                theta_old_dis = oriani_occupancy(thL, fam.W_B, self.T_K)
            S = theta_old_dis * sites_to_wppm(dN) / dt     # wppm/s sink
            fe_krom = np.einsum("qa,eq,eq->ea", N, S, w)

        fixed, vals = [], []
        for nset, v in dirichlet or []:
            nset = np.asarray(nset, dtype=int)
            fixed.append(nset)
            vals.append(np.broadcast_to(v, nset.shape).astype(float))
        act_nodes = state.active_node_mask(mesh)
        frozen = np.where(~act_nodes)[0]
        fixed.append(frozen)
        vals.append(C_old[frozen])
        fixed = np.concatenate(fixed)
        vals = np.concatenate(vals)
        fixed, first = np.unique(fixed, return_index=True)
        vals = vals[first]
        free = np.setdiff1d(np.arange(mesh.n_nodes), fixed)

        N_dis_q = (N_T_dis_new if N_T_dis_new is not None else state.N_T_dis)[act]
        C = C_old.copy()
        C[fixed] = vals
        scale = max(float(np.abs(vals).max(initial=0.0)),
                    float(np.abs(C_old).max(initial=0.0)), 1e-12)
        converged = False
        for it in range(max_iter):
            Cq = np.einsum("qa,ea->eq", N, C[conn])
            fbar = self._chord_storage(Cq, Cq_old, N_dis_q, act)
            Me = np.einsum("qa,qb,eq,eq->eab", N, N, fbar, w) / dt
            M = fem.assemble_matrix(mesh.n_nodes, conn, Me)
            A = M + K_flux
            rhs = M @ C_old
            if fe_krom is not None:
                rhs -= fem.assemble_vector(mesh.n_nodes, conn, fe_krom)
            sysm = fem.LinearSystem(A, rhs)
            sysm.set_dirichlet(fixed, vals)
            C_new = sysm.solve()
            dC = float(np.abs(C_new - C).max())
            C = C_new
            if dC <= tol * scale:
                converged = True
                break
        if not converged:
            raise TransportStepRejected(
                f"transport step: no convergence (dC={dC:.2e}, scale={scale:.2e})")
        if float(C.min()) < -1e-12 * scale:
            raise TransportStepRejected(f"negative concentration {C.min():.3e}")
        C = np.maximum(C, 0.0)
        info = {"iterations": it + 1, "system": A, "rhs": rhs, "fixed": fixed,
                "reactions": A @ C - rhs}
        return C, info

    def total_hydrogen(self, state, C=None, N_T_dis=None):
        """int (C_L + sum_i C_T^(i)) dV over active elements, in wppm*mm^3."""
        mesh = self.mesh
        geo = mesh.geometry()
        act = np.where(state.active)[0]
        Cn = state.C_L if C is None else C
        Cq = np.clip(fem.interp_to_points(mesh, Cn)[act], 0.0, None)
        Nd = (state.N_T_dis if N_T_dis is None else N_T_dis)[act]
        tot = Cq.copy()
        ridx = self.region_idx[act]
        for i, region in enumerate(self.region_list):
            sel = ridx == i
            if not sel.any():
                continue
            ct = trap_concentrations(region, self.traps, Cq[sel], Nd[sel], self.T_K)
            for v in ct.values():
                tot[sel] += v
        return float((tot * geo.wdet[act]).sum())


def run_permeation_strip(region, thickness=1.0, n_elem=150, C_charge=None,
                         p_charge=25.0, traps=DEFAULT_TRAPS, rel_settle=2e-3,
                         max_steps=4000, record=None):
    """1D permeation transient through a strip; time-lag analysis.

    Charging face held at C_charge (Sievert at p_charge by default), exit
    face at zero. Returns times, exit flux, cumulative flux, the steady
    flux, the time lag and the apparent diffusivity L^2/(6 t_lag).
    """
    from . import mesh as meshmod, state as statemod

    if C_charge is None:
        C_charge = float(sievert_boundary(p_charge, region.sievert_s))
    m = meshmod.generate_strip_mesh(thickness, n_elem, region=region.name)
    regions = {n: region for n in ("BM", "HAZ", "WM")}
    st = statemod.new_state(m)
    prob = TransportProblem(m, regions, traps)
    charge = m.node_sets["charging_surface"]
    exit_ = m.node_sets["exit_surface"]
    h = thickness / n_elem
    D0 = region.D_L
    dt = 2.0 * h ** 2 / D0
    t = 0.0
    times, fluxes = [0.0], [0.0]
    Q = [0.0]
    width = h  # strip height; unit out-of-plane thickness
    steady = None
    for step in range(max_steps):
        try:
            C, info = prob.step(st, dt, [(charge, C_charge), (exit_, 0.0)])
        except TransportStepRejected:
            dt *= 0.5
            continue
        st.C_L = C
        t += dt
        # reaction at the exit nodes = hydrogen removed there per second
        J = float(info["reactions"][exit_].sum()) / width
        times.append(t)
        fluxes.append(J)
        Q.append(Q[-1] + 0.5 * (fluxes[-2] + fluxes[-1]) * dt)
        if record is not None:
            record(t, st)
        if len(fluxes) > 10:
            recent = np.array(fluxes[-6:])
            if (recent.max() > 0
                    and (recent.max() - recent.min()) / recent.max() < rel_settle
                    and t > thickness ** 2 / (2 * D0)):
                steady = float(recent.mean())
                break
        dt = min(dt * 1.3, thickness ** 2 / (10.0 * D0) * 50)
    if steady is None:
        steady = float(fluxes[-1])
    times = np.array(times)
    fluxes = np.array(fluxes)
    Q = np.array(Q)
    tail = fluxes > 0.995 * steady
    t_lag = float(np.mean(times[tail] - Q[tail] / steady))
    D_app = thickness ** 2 / (6.0 * t_lag)
    return {
        "times": times, "exit_flux": fluxes, "cumulative": Q,
        "steady_flux": steady, "t_lag": t_lag, "D_app": D_app,
        "C_charge": C_charge, "thickness": thickness,
    }


def calibrate_dislocation_density(region, target_De, traps=DEFAULT_TRAPS,
                                  n_elem=120, max_iter=12, rel_tol=0.01,
                                  verbose=False):
    """Find the unstrained dislocation trap density whose simulated permeation
    time-lag diffusivity matches target_De. Secant iteration on log N."""
    from dataclasses import replace

    def run(N_dis):
        r = replace(region, trap_densities=dict(region.trap_densities,
                                                dislocations=max(N_dis, 1e8)))
        return run_permeation_strip(r, n_elem=n_elem, traps=traps)["D_app"]

    # initial guess from the dilute limit
    base = dict(region.trap_densities)
    other = 0.0
    for fam in traps:
        if fam.evolving:
            continue
        other += base[fam.name] / region.N_L * equilibrium_constant(fam.W_B)
    K_dis = equilibrium_constant(next(f.W_B for f in traps if f.evolving))
    need = region.D_L / target_De - 1.0 - other
    N = max(need, 1e-3) / K_dis * region.N_L
    logN = np.log(N)
    D = run(np.exp(logN))
    if verbose:
        print(f"calibrate {region.name}: N={np.exp(logN):.3e} -> D={D:.3e}")
    logN2 = logN + np.log(max(D / target_De, 0.2))
    for _ in range(max_iter):
        if abs(D - target_De) / target_De < rel_tol:
            break
        D2 = run(np.exp(logN2))
        if verbose:
            print(f"calibrate {region.name}: N={np.exp(logN2):.3e} -> D={D2:.3e}")
        if abs(D2 - target_De) / target_De < rel_tol:
            logN, D = logN2, D2
            break
        denom = np.log(D2) - np.log(D)
        if abs(denom) < 1e-12:
            logN, D = logN2, D2
            break
        step = (np.log(target_De) - np.log(D2)) * (logN2 - logN) / denom
        logN, D = logN2, D2
        logN2 = logN + np.clip(step, -2.0, 2.0)
    return float(np.exp(logN)), float(D)
