"""AT2 phase-field fracture: evolution, coupling loop, crack metrology.

The phase field solves  Gc(C_L) (phi/l - l lap(phi)) = 2 (1 - phi) H  with
natural boundary conditions; irreversibility enters through the monotone
history field H and a pointwise floor at the previously converged phi.
The deformation-fracture coupling is resolved by alternating minimization
within each increment until the phase-field update stagnates.
"""

from collections import deque

import numpy as np

from . import fem, materials
from .mechanics import region_index

PHI_CRACK = 0.95          # crack metrology threshold
AM_TOL = 1e-6
AM_MAX_PASSES = 400


class PhaseFieldProblem:
    """Phase-field solver bound to one mesh + region set."""

    def __init__(self, mesh, regions, lengths=None):
        self.mesh = mesh
        self.regions = regions
        self.region_idx = region_index(mesh)
        self.lengths = lengths or {n: materials.length_scale(r)
                                   for n, r in regions.items()}
        self.ell_e = np.empty(mesh.n_elements)
        self.Gc0_e = np.empty(mesh.n_elements)
        for i, name in enumerate(("BM", "HAZ", "WM")):
            sel = self.region_idx == i
            self.ell_e[sel] = self.lengths[name]
            self.Gc0_e[sel] = regions[name].Gc0
        self.clamp_violation = 0.0

    def gc_at_points(self, C_L_nodal):
        """Hydrogen-degraded toughness at quadrature points."""
        nq = self.mesh.geometry().n_qp
        if C_L_nodal is None:
            return np.repeat(self.Gc0_e[:, None], nq, axis=1)
        Cq = np.maximum(fem.interp_to_points(self.mesh, C_L_nodal), 0.0)
        gc = np.empty_like(Cq)
        for i, name in enumerate(("BM", "HAZ", "WM")):
            sel = self.region_idx == i
            if sel.any():
                gc[sel] = materials.gc_of_hydrogen(self.regions[name], Cq[sel])
        return gc

    def solve(self, state, H_field=None, C_L=None, prescribed=None):
        """Solve for phi given the history field; returns the new nodal phi.

        Enforces 0 <= phi and the monotonicity floor phi >= state.phi; the
        magnitude of any upper-bound clamping is recorded.
        """
        mesh = self.mesh
        geo = mesh.geometry()
        act = np.where(state.active)[0]
        H = state.history if H_field is None else H_field
        Hq = np.maximum(H[act], 0.0)
        gc = self.gc_at_points(C_L)[act]
        ell = self.ell_e[act][:, None]
        N = geo.quad.shape_values
        w = geo.wdet[act]
        dNdx = geo.dNdx[act]
        conn = mesh.elements[act]

        coef_mass = gc / ell + 2.0 * Hq
        Ke = (np.einsum("qa,qb,eq,eq->eab", N, N, coef_mass, w)
              + np.einsum("eqai,eqbi,eq,eq->eab", dNdx, dNdx, gc * ell, w))
        fe = np.einsum("qa,eq,eq->ea", N, 2.0 * Hq, w)
        K = fem.assemble_matrix(mesh.n_nodes, conn, Ke)
        f = fem.assemble_vector(mesh.n_nodes, conn, fe)

        act_nodes = state.active_node_mask(mesh)
        fixed = np.where(~act_nodes)[0]
        vals = state.phi[fixed]
        if prescribed is not None:
            pn, pv = prescribed
            fixed = np.concatenate([fixed, np.asarray(pn, dtype=int)])
            vals = np.concatenate([vals, np.broadcast_to(pv, np.shape(pn)).astype(float)])
        sysm = fem.LinearSystem(K, f)
        if len(fixed):
            fixed, first = np.unique(fixed, return_index=True)
            sysm.set_dirichlet(fixed, vals[first])
        phi = sysm.solve()
        over = max(0.0, float(phi.max()) - 1.0) + max(0.0, -float(phi.min()))
        self.clamp_violation = max(self.clamp_violation, over)
        phi = np.clip(phi, 0.0, 1.0)
        return np.maximum(phi, state.phi)

    def surface_energy(self, state, phi=None, C_L=None):
        """Regularized fracture energy int Gc * gamma(phi) dV."""
        mesh = self.mesh
        geo = mesh.geometry()
        act = np.where(state.active)[0]
        p = state.phi if phi is None else phi
        pq = fem.interp_to_points(mesh, p)[act]
        gq = fem.gradient_at_points(mesh, p)[act]
        gc = self.gc_at_points(C_L)[act]
        ell = self.ell_e[act][:, None]
        gamma = (pq ** 2 + ell ** 2 * np.sum(gq ** 2, axis=-1)) / (2.0 * ell)
        return float((gc * gamma * geo.wdet[act]).sum())


def solve_phasefield_step(mesh, state, regions, H_field=None, C_L=None):
    """One linear phase-field solve committed into a copied state."""
    prob = PhaseFieldProblem(mesh, regions)
    out = state.copy()
    out.phi = prob.solve(state, H_field=H_field, C_L=C_L)
    return out


def equilibrate_coupled(mech, pf, state, dirichlet, C_L=None,
                        tol=AM_TOL, max_passes=AM_MAX_PASSES):
    """Alternating minimization of displacement and phase field.

    Iterates (mechanics at fixed phi) -> (history update) -> (phi at fixed
    history) until the phase-field increment stalls below `tol`. Commits the
    converged displacement, stress, plastic state, history and phi.
    """
    phi = state.phi.copy()
    info = {"passes": 0, "mech_iterations": 0}
    fields = None
    for it in range(max_passes):
        state, minfo = mech.solve(state, dirichlet, phi_nodal=phi, commit=False)
        fields = minfo["fields"]
        info["mech_iterations"] += minfo["iterations"]
        cand = materials.update_history(state.history, fields["psi_plus"],
                                        fields["psi_p"], beta=mech.beta)
        phi_new = pf.solve(state, H_field=cand, C_L=C_L)
        dphi = float(np.max(np.abs(phi_new - phi)))
        phi = phi_new
        info["passes"] = it + 1
        if dphi < tol:
            break
    else:
        info["warning"] = f"alternating minimization hit {max_passes} passes"
    state, minfo = mech.solve(state, dirichlet, phi_nodal=phi, commit=True)
    fields = minfo["fields"]
    act = state.active
    state.history[act] = materials.update_history(
        state.history[act], fields["psi_plus"][act], fields["psi_p"][act],
        beta=mech.beta)
    state.phi = phi
    info["mech_iterations"] += minfo["iterations"]
    info["reactions"] = minfo["reactions"]
    info["fixed_dofs"] = minfo["fixed_dofs"]
    info["delta_eps_p"] = fields["delta_eps_p"]
    return state, info


def measure_crack_extension(mesh, phi, ligament, phi_crack=PHI_CRACK):
    """Crack extension along an ordered ligament node path.

    Returns the arclength from the path start to the farthest point with
    phi >= phi_crack, linearly interpolated between nodes; 0 if none qualify.
    """
    lig = np.asarray(ligament, dtype=int)
    xy = mesh.nodes[lig]
    s = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(xy, axis=0), axis=1))])
    p = np.asarray(phi)[lig]
    above = np.where(p >= phi_crack)[0]
    if len(above) == 0:
        return 0.0
    i = above[-1]
    if i == len(lig) - 1:
        return float(s[-1])
    # interpolate the crossing between node i (>= threshold) and i+1 (< threshold)
    p0, p1 = p[i], p[i + 1]
    frac = (p0 - phi_crack) / max(p0 - p1, 1e-30)
    return float(s[i] + frac * (s[i + 1] - s[i]))


def element_adjacency(mesh):
    """Map element -> neighbours sharing an edge (corner nodes only)."""
    corners = mesh.elements[:, :4]
    loc = np.array([(0, 1), (1, 2), (2, 3), (3, 0)])
    owner = {}
    adj = [[] for _ in range(mesh.n_elements)]
    for e in range(mesh.n_elements):
        for a, b in loc:
            key = (min(corners[e, a], corners[e, b]), max(corners[e, a], corners[e, b]))
            if key in owner:
                o = owner[key]
                adj[o].append(e)
                adj[e].append(o)
            else:
                owner[key] = e
    return adj


def detect_through_thickness(mesh, phi, phi_crack=PHI_CRACK,
                             inner_set="inner_surface", outer_set="outer_surface",
                             active=None):
    """True iff cracked elements form a connected chain from inner to outer.

    An element counts as cracked when the mean of its nodal phi reaches
    phi_crack. Returns (flag, element path inner->outer or [])."""
    p = np.asarray(phi)
    mean_phi = p[mesh.elements].mean(axis=1)
    cracked = mean_phi >= phi_crack
    if active is not None:
        cracked &= np.asarray(active, dtype=bool)
    if not cracked.any():
        return False, []
    inner_nodes = set(mesh.node_sets[inner_set].tolist())
    outer_nodes = set(mesh.node_sets[outer_set].tolist())
    touches_inner = [bool(set(mesh.elements[e].tolist()) & inner_nodes)
                     for e in range(mesh.n_elements)]
    touches_outer = [bool(set(mesh.elements[e].tolist()) & outer_nodes)
                     for e in range(mesh.n_elements)]
    adj = element_adjacency(mesh)
    start = [e for e in np.where(cracked)[0] if touches_inner[e]]
    prev = {e: None for e in start}
    queue = deque(start)
    while queue:
        e = queue.popleft()
        if touches_outer[e]:
            path = []
            cur = e
            while cur is not None:
                path.append(int(cur))
                cur = prev[cur]
            return True, path[::-1]
        for nb in adj[e]:
            if cracked[nb] and nb not in prev:
                prev[nb] = e
                queue.append(nb)
    return False, []
