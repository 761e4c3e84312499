"""Simulation state containers.

FieldState carries every nodal field and every quadrature-point history
variable of one simulation. Mesh objects stay immutable; all evolution
happens here. Stress/strain tensors use Voigt order [11, 22, 33, 12]
(tensor shear component for stress, engineering gamma for strain).
"""

from dataclasses import dataclass, field

import numpy as np

from . import units


@dataclass
class FieldState:
    """Nodal fields plus quadrature-point history for one simulation."""

    # nodal
    u: np.ndarray            # (n_nodes*2,) displacements [mm]
    T: np.ndarray            # (n_nodes,) temperature [degC]
    C_L: np.ndarray          # (n_nodes,) lattice hydrogen [wppm]
    phi: np.ndarray          # (n_nodes,) phase field [-]
    peak_T: np.ndarray       # (n_nodes,) all-time max temperature [degC]

    # per quadrature point (n_elem, n_qp, ...)
    sigma: np.ndarray        # stress [MPa]
    eps_p: np.ndarray        # plastic strain tensor [-]
    eps_p_eq: np.ndarray     # equivalent plastic strain [-]
    history: np.ndarray      # crack driving history field [MPa]
    N_T_dis: np.ndarray      # dislocation trap density [sites/mm^3]
    eps_ref: np.ndarray      # reference (activation/transfer) strain offset [-]
    T_act: np.ndarray        # activation temperature for thermal-strain offset [degC]

    # element activation
    active: np.ndarray       # (n_elem,) bool
    active_beads: set = field(default_factory=set)

    def copy(self):
        return FieldState(
            u=self.u.copy(), T=self.T.copy(), C_L=self.C_L.copy(),
            phi=self.phi.copy(), peak_T=self.peak_T.copy(),
            sigma=self.sigma.copy(), eps_p=self.eps_p.copy(),
            eps_p_eq=self.eps_p_eq.copy(), history=self.history.copy(),
            N_T_dis=self.N_T_dis.copy(), eps_ref=self.eps_ref.copy(),
            T_act=self.T_act.copy(), active=self.active.copy(),
            active_beads=set(self.active_beads),
        )

    def active_node_mask(self, mesh):
        """Nodes attached to at least one active element."""
        mask = np.zeros(len(mesh.nodes), dtype=bool)
        conn = mesh.elements[self.active]
        mask[conn.ravel()] = True
        return mask


def new_state(mesh, T0=units.AMBIENT_T, N_T_dis0=0.0, all_active=True):
    """Fresh state at uniform temperature, zero everything else."""
    n_nodes = len(mesh.nodes)
    ne = len(mesh.elements)
    nq = mesh.geometry().n_qp
    active = np.full(ne, all_active, dtype=bool)
    if not all_active:
        # only the weld beads start inactive
        active[:] = True
        for name, elems in mesh.element_sets.items():
            if name.startswith("bead_"):
                active[elems] = False
    return FieldState(
        u=np.zeros(2 * n_nodes),
        T=np.full(n_nodes, float(T0)),
        C_L=np.zeros(n_nodes),
        phi=np.zeros(n_nodes),
        peak_T=np.full(n_nodes, float(T0)),
        sigma=np.zeros((ne, nq, 4)),
        eps_p=np.zeros((ne, nq, 4)),
        eps_p_eq=np.zeros((ne, nq)),
        history=np.zeros((ne, nq)),
        N_T_dis=np.full((ne, nq), float(N_T_dis0)),
        eps_ref=np.zeros((ne, nq, 4)),
        T_act=np.full((ne, nq), float(T0)),
        active=active,
    )
