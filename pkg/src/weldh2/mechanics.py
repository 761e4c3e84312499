"""Quasi-static mechanical equilibrium with plasticity and phase-field damage.

Displacement-driven Newton solver. Internal variables (plastic strain,
equivalent plastic strain) are resolved by the radial return inside every
residual evaluation starting from the last committed state; they are
committed to the FieldState only once the increment converges.
"""

import numpy as np

from . import fem, materials

MECH_TOL = 1e-9
MECH_MAX_ITER = 30


def region_index(mesh):
    """(n_elem,) int array: 0=BM, 1=HAZ, 2=WM."""
    idx = np.zeros(mesh.n_elements, dtype=int)
    for i, name in enumerate(("BM", "HAZ", "WM")):
        idx[mesh.element_sets.get(name, np.array([], dtype=int))] = i
    return idx


class MechanicsProblem:
    """Equilibrium solver bound to one mesh and one region property set."""

    def __init__(self, mesh, regions, beta=materials.BETA_PLASTIC):
        self.mesh = mesh
        self.regions = regions
        self.region_idx = region_index(mesh)
        self.B = mesh.b_matrices()
        self.edofs = fem.element_dofs(mesh)
        self.beta = beta

    def _material_response(self, state, u, phi_nodal, T_nodal):
        """Radial return at all active quadrature points; returns field dicts."""
        mesh = self.mesh
        geo = mesh.geometry()
        eps = fem.strains_at_points(mesh, u, self.B) - state.eps_ref
        nq = geo.n_qp
        ne = mesh.n_elements
        T_q = fem.interp_to_points(mesh, T_nodal)
        phi_q = np.clip(fem.interp_to_points(mesh, phi_nodal), 0.0, 1.0)
        out = {k: np.zeros((ne, nq) + s) for k, s in
               (("sigma", (4,)), ("D", (4, 4)), ("eps_p", (4,)),
                ("eps_p_eq", ()), ("psi_plus", ()), ("psi_p", ()),
                ("delta_eps_p", ()))}
        active = np.where(state.active)[0]
        for r, name in enumerate(("BM", "HAZ", "WM")):
            sel = active[self.region_idx[active] == r]
            if len(sel) == 0:
                continue
            region = self.regions[name]
            res = materials.stress_update_batch(
                region,
                eps[sel].reshape(-1, 4), T_q[sel].ravel(), phi_q[sel].ravel(),
                state.eps_p[sel].reshape(-1, 4), state.eps_p_eq[sel].ravel(),
                T_act=state.T_act[sel].ravel(), beta=self.beta)
            shp = (len(sel), nq)
            out["sigma"][sel] = res["sigma"].reshape(shp + (4,))
            out["D"][sel] = res["D"].reshape(shp + (4, 4))
            out["eps_p"][sel] = res["eps_p"].reshape(shp + (4,))
            out["eps_p_eq"][sel] = res["eps_p_eq"].reshape(shp)
            out["psi_plus"][sel] = res["psi_plus"].reshape(shp)
            out["delta_eps_p"][sel] = res["delta_eps_p"].reshape(shp)
            out["psi_p"][sel] = materials.plastic_energy(
                region, res["eps_p_eq"], T_q[sel].ravel()).reshape(shp)
        return out

    def assemble(self, state, u, phi_nodal, T_nodal):
        """Internal force vector and tangent stiffness on active elements."""
        mesh = self.mesh
        geo = mesh.geometry()
        fields = self._material_response(state, u, phi_nodal, T_nodal)
        act = np.where(state.active)[0]
        B = self.B[act]
        w = geo.wdet[act]
        sig = fields["sigma"][act]
        D = fields["D"][act]
        fe = np.einsum("eqki,eqk,eq->ei", B, sig, w)
        DB = np.einsum("eqkl,eqlj->eqkj", D, B)
        Ke = np.einsum("eqki,eqkj,eq->eij", B, DB, w)
        n_dof = 2 * mesh.n_nodes
        K = fem.assemble_matrix(n_dof, self.edofs[act], Ke)
        R = fem.assemble_vector(n_dof, self.edofs[act], fe)
        return R, K, fields

    def solve(self, state, dirichlet, phi_nodal=None, T_nodal=None,
              tol=MECH_TOL, max_iter=MECH_MAX_ITER, commit=True):
        """Newton-solve equilibrium; returns (state', info).

        dirichlet: list of (dof_array, value or value_array). Inactive nodes
        are frozen automatically. With commit=False the converged fields are
        returned in info without touching `state`.
        """
        mesh = self.mesh
        if phi_nodal is None:
            phi_nodal = state.phi
        if T_nodal is None:
            T_nodal = state.T
        n_dof = 2 * mesh.n_nodes
        fixed, vals = _collect_dirichlet(dirichlet, n_dof)
        act_nodes = state.active_node_mask(mesh)
        frozen = np.where(~act_nodes)[0]
        frozen_dofs = np.concatenate([2 * frozen, 2 * frozen + 1])
        fixed_all = np.concatenate([fixed, frozen_dofs])
        vals_all = np.concatenate([vals, state.u[frozen_dofs]])
        fixed_all, first = np.unique(fixed_all, return_index=True)
        vals_all = vals_all[first]
        free = np.setdiff1d(np.arange(n_dof), fixed_all)

        u = state.u.copy()
        u[fixed_all] = vals_all
        R, K, fields = self.assemble(state, u, phi_nodal, T_nodal)
        rnorm = np.linalg.norm(R[free])
        # reference force scale: reactions + internal force magnitude
        ref = max(rnorm, np.linalg.norm(R[fixed_all]), 1e-9)
        it = 0
        while rnorm > tol * ref and it < max_iter:
            du = fem.solve_sparse(K[free][:, free], -R[free])
            alpha = 1.0
            for _ in range(10):
                u_try = u.copy()
                u_try[free] += alpha * du
                R_try, K_try, fields_try = self.assemble(state, u_try, phi_nodal, T_nodal)
                n_try = np.linalg.norm(R_try[free])
                if np.isfinite(n_try) and (n_try < rnorm or n_try <= tol * ref):
                    break
                alpha *= 0.5
            else:
                raise fem.NewtonError(
                    f"mechanics: line search stagnated, |R|={rnorm:.3e} ref={ref:.3e}")
            u, R, K, fields = u_try, R_try, K_try, fields_try
            rnorm = n_try
            ref = max(ref, np.linalg.norm(R[fixed_all]))
            it += 1
        if rnorm > tol * ref:
            raise fem.NewtonError(f"mechanics: no convergence in {max_iter} iterations "
                                  f"(|R|={rnorm:.3e}, ref={ref:.3e})")
        info = {
            "iterations": it,
            "reactions": R,
            "fixed_dofs": fixed_all,
            "u": u,
            "fields": fields,
        }
        if commit:
            state.u = u
            act = state.active
            state.sigma[act] = fields["sigma"][act]
            state.eps_p[act] = fields["eps_p"][act]
            state.eps_p_eq[act] = fields["eps_p_eq"][act]
        return state, info

    def commit_history(self, state, fields):
        """Fold the converged energies into the crack driving history."""
        act = state.active
        state.history[act] = materials.update_history(
            state.history[act], fields["psi_plus"][act], fields["psi_p"][act],
            beta=self.beta)


def _collect_dirichlet(dirichlet, n_dof):
    if not dirichlet:
        return np.array([], dtype=int), np.array([])
    dofs, vals = [], []
    for d, v in dirichlet:
        d = np.asarray(d, dtype=int)
        v = np.broadcast_to(np.asarray(v, dtype=float), d.shape)
        dofs.append(d)
        vals.append(np.array(v))
    return np.concatenate(dofs), np.concatenate(vals)


def hydrostatic_stress(state):
    """sigma_H = tr(sigma)/3 at quadrature points."""
    return state.sigma[..., :3].sum(axis=-1) / 3.0


def max_principal_stress(sigma):
    """In-plane-and-hoop max principal stress of Voigt (..., 4) tensors."""
    s11, s22, s33, s12 = (sigma[..., i] for i in range(4))
    c = 0.5 * (s11 + s22)
    r = np.sqrt((0.5 * (s11 - s22)) ** 2 + s12 ** 2)
    return np.maximum(c + r, s33)
