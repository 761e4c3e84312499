"""Shared finite element substrate.

Provides reference shape functions and quadrature for 4/8-node quads and
2/3-node edges, precomputed element geometry (physical shape gradients and
integration weights, including the 2*pi*r factor for axisymmetric domains),
sparse assembly with deterministic summation, a direct symmetric/general
solver, a damped Newton driver, and lumped L2 projection of quadrature-point
data to nodes.
"""

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

_SQ3 = 1.0 / np.sqrt(3.0)
_SQ35 = np.sqrt(3.0 / 5.0)


def quad_shape(order, xi, eta):
    """Shape functions and parametric gradients of the 4- or 8-node quad.

    Returns (N, dN) with N shape (nsf,) and dN shape (nsf, 2).
    """
    if order == 1:
        N = 0.25 * np.array([(1 - xi) * (1 - eta), (1 + xi) * (1 - eta),
                             (1 + xi) * (1 + eta), (1 - xi) * (1 + eta)])
        dN = 0.25 * np.array([[-(1 - eta), -(1 - xi)],
                              [(1 - eta), -(1 + xi)],
                              [(1 + eta), (1 + xi)],
                              [-(1 + eta), (1 - xi)]])
        return N, dN
    if order == 2:
        # serendipity Q8, corner nodes 0-3 then midside 4-7 (bottom, right, top, left)
        xs = np.array([-1, 1, 1, -1], dtype=float)
        es = np.array([-1, -1, 1, 1], dtype=float)
        N = np.empty(8)
        dN = np.empty((8, 2))
        for a in range(4):
            x0, e0 = xs[a], es[a]
            N[a] = 0.25 * (1 + x0 * xi) * (1 + e0 * eta) * (x0 * xi + e0 * eta - 1)
            dN[a, 0] = 0.25 * x0 * (1 + e0 * eta) * (2 * x0 * xi + e0 * eta)
            dN[a, 1] = 0.25 * e0 * (1 + x0 * xi) * (x0 * xi + 2 * e0 * eta)
        N[4] = 0.5 * (1 - xi * xi) * (1 - eta)
        dN[4] = [-xi * (1 - eta), -0.5 * (1 - xi * xi)]
        N[5] = 0.5 * (1 + xi) * (1 - eta * eta)
        dN[5] = [0.5 * (1 - eta * eta), -eta * (1 + xi)]
        N[6] = 0.5 * (1 - xi * xi) * (1 + eta)
        dN[6] = [-xi * (1 + eta), 0.5 * (1 - xi * xi)]
        N[7] = 0.5 * (1 - xi) * (1 - eta * eta)
        dN[7] = [-0.5 * (1 - eta * eta), -eta * (1 - xi)]
        return N, dN
    raise ValueError(f"unsupported element order {order}")


def quad_rule(order):
    """Gauss points/weights on the parent quad: 2x2 for Q4, 3x3 for Q8."""
    if order == 1:
        g = np.array([-_SQ3, _SQ3])
        w1 = np.array([1.0, 1.0])
    else:
        g = np.array([-_SQ35, 0.0, _SQ35])
        w1 = np.array([5.0, 8.0, 5.0]) / 9.0
    pts, wts = [], []
    for j, e in enumerate(g):
        for i, x in enumerate(g):
            pts.append((x, e))
            wts.append(w1[i] * w1[j])
    return np.array(pts), np.array(wts)


def edge_shape(order, s):
    """Shape functions / gradients on a 2- or 3-node edge, s in [-1, 1]."""
    if order == 1:
        return (np.array([0.5 * (1 - s), 0.5 * (1 + s)]),
                np.array([-0.5, 0.5]))
    return (np.array([0.5 * s * (s - 1), 0.5 * s * (s + 1), 1 - s * s]),
            np.array([s - 0.5, s + 0.5, -2 * s]))


def edge_rule(order):
    if order == 1:
        return np.array([-_SQ3, _SQ3]), np.array([1.0, 1.0])
    return np.array([-_SQ35, 0.0, _SQ35]), np.array([5.0, 8.0, 5.0]) / 9.0


class Quadrature:
    """Reference quadrature bundle: points, weights, shape values/gradients."""

    def __init__(self, order):
        self.order = order
        self.points, self.weights = quad_rule(order)
        nsf = 4 if order == 1 else 8
        nq = len(self.weights)
        self.shape_values = np.empty((nq, nsf))
        self.shape_gradients = np.empty((nq, nsf, 2))
        for q, (xi, eta) in enumerate(self.points):
            N, dN = quad_shape(order, xi, eta)
            self.shape_values[q] = N
            self.shape_gradients[q] = dN

    @property
    def n_points(self):
        return len(self.weights)


class ElementGeometry:
    """Per-element quadrature geometry on the physical mesh.

    Arrays (n_elem, n_qp, ...):
      dNdx     physical shape gradients
      wdet     integration weight (Gauss weight * detJ * 2*pi*r if axisym)
      xq       quadrature point coordinates
      detJ     raw Jacobian determinants
    """

    def __init__(self, nodes, elements, order, axisymmetric):
        quad = Quadrature(order)
        self.quad = quad
        xe = nodes[elements]                     # (ne, nsf, 2)
        nq = quad.n_points
        ne, nsf, _ = xe.shape
        dN = quad.shape_gradients                # (nq, nsf, 2)
        # Jacobian J[e,q,i,j] = sum_a dN[q,a,j] * xe[e,a,i]
        J = np.einsum("qaj,eai->eqij", dN, xe)
        detJ = J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]
        inv = np.empty_like(J)
        inv[..., 0, 0] = J[..., 1, 1]
        inv[..., 1, 1] = J[..., 0, 0]
        inv[..., 0, 1] = -J[..., 0, 1]
        inv[..., 1, 0] = -J[..., 1, 0]
        inv /= detJ[..., None, None]
        # dN/dx[e,q,a,i] = dN[q,a,j] * invJ[e,q,j,i]
        self.dNdx = np.einsum("qaj,eqji->eqai", dN, inv)
        self.xq = np.einsum("qa,eai->eqi", quad.shape_values, xe)
        w = quad.weights[None, :] * detJ
        if axisymmetric:
            w = w * (2.0 * np.pi * self.xq[..., 0])
        self.wdet = w
        self.detJ = detJ
        self.axisymmetric = axisymmetric

    @property
    def n_qp(self):
        return self.quad.n_points


def assemble_matrix(n_dof, edofs, Ke):
    """Scatter element matrices into a CSR matrix.

    edofs: (ne, nd) global dof indices; Ke: (ne, nd, nd). COO duplicate
    summation in scipy is index-ordered, hence run-to-run deterministic.
    NaN contributions abort with the offending element index.
    """
    bad = np.where(~np.isfinite(Ke).all(axis=(1, 2)))[0]
    if bad.size:
        raise FloatingPointError(f"non-finite element matrix in element {bad[0]}")
    ne, nd = edofs.shape
    rows = np.repeat(edofs, nd, axis=1).ravel()
    cols = np.tile(edofs, (1, nd)).ravel()
    A = sp.coo_matrix((Ke.ravel(), (rows, cols)), shape=(n_dof, n_dof))
    return A.tocsr()


def assemble_vector(n_dof, edofs, fe):
    bad = np.where(~np.isfinite(fe).all(axis=1))[0]
    if bad.size:
        raise FloatingPointError(f"non-finite element vector in element {bad[0]}")
    v = np.zeros(n_dof)
    np.add.at(v, edofs.ravel(), fe.ravel())
    return v


class LinearSystem:
    """A sparse system with consistent Dirichlet reduction.

    Free equations are solved; constrained rows are retained so reaction
    forces can be recovered as K[c,:] @ x - b[c].
    """

    def __init__(self, K, b):
        self.K = K.tocsr()
        self.b = np.asarray(b, dtype=float)
        self.fixed_dofs = np.array([], dtype=int)
        self.fixed_vals = np.array([], dtype=float)

    def set_dirichlet(self, dofs, values):
        dofs = np.asarray(dofs, dtype=int)
        values = np.broadcast_to(np.asarray(values, dtype=float), dofs.shape)
        order = np.argsort(dofs, kind="stable")
        self.fixed_dofs = dofs[order]
        self.fixed_vals = np.array(values)[order]

    def solve(self):
        n = self.K.shape[0]
        free = np.setdiff1d(np.arange(n), self.fixed_dofs, assume_unique=False)
        x = np.zeros(n)
        x[self.fixed_dofs] = self.fixed_vals
        rhs = self.b[free] - self.K[free][:, self.fixed_dofs] @ self.fixed_vals
        x[free] = solve_sparse(self.K[free][:, free], rhs)
        return x

    def reactions(self, x):
        """Residual force at the constrained dofs (reaction = K x - b there)."""
        return (self.K[self.fixed_dofs] @ x) - self.b[self.fixed_dofs]


def solve_sparse(A, b):
    """Direct sparse solve; raises on singular breakdown."""
    if A.shape[0] == 0:
        return np.zeros(0)
    lu = spla.splu(A.tocsc())
    x = lu.solve(b)
    if not np.all(np.isfinite(x)):
        raise np.linalg.LinAlgError("sparse factorization produced non-finite solution")
    return x


class NewtonError(RuntimeError):
    """Controlled Newton failure, consumed by step-halving drivers."""


def newton(residual_fn, x0, tol=1e-8, max_iter=25, ref_norm=None, callback=None):
    """Damped Newton iteration.

    residual_fn(x) -> (R, J) with J sparse (or dense ndarray). Converges when
    ||R|| < tol * max(ref, ||R0||); `ref_norm` overrides the reference scale.
    Backtracking halves the step (up to 8 times) whenever ||R|| would grow.
    """
    x = np.array(x0, dtype=float)
    R, J = residual_fn(x)
    rnorm = np.linalg.norm(R)
    ref = ref_norm if ref_norm is not None else max(rnorm, 1e-30)
    for it in range(max_iter):
        if rnorm <= tol * ref:
            return x
        if sp.issparse(J):
            dx = solve_sparse(J.tocsr(), -R)
        else:
            dx = np.linalg.solve(J, -R)
        alpha = 1.0
        for _ in range(8):
            x_try = x + alpha * dx
            R_try, J_try = residual_fn(x_try)
            n_try = np.linalg.norm(R_try)
            if np.isfinite(n_try) and (n_try < rnorm or n_try <= tol * ref):
                break
            alpha *= 0.5
        else:
            raise NewtonError(f"newton: line search stagnated at iter {it}, |R|={rnorm:.3e}")
        x, R, J, rnorm = x_try, R_try, J_try, n_try
        if callback:
            callback(it, rnorm)
    if rnorm <= tol * ref:
        return x
    raise NewtonError(f"newton: no convergence in {max_iter} iterations, |R|={rnorm:.3e}")


def project_to_nodes(mesh, point_values, active=None):
    """Lumped-mass L2 projection of quadrature-point values to nodes.

    point_values: (n_elem, n_qp) or (n_elem, n_qp, m). Inactive elements
    (mask `active`) are excluded; nodes touched by no active element get 0.
    """
    geo = mesh.geometry()
    pv = np.asarray(point_values, dtype=float)
    scal = pv.ndim == 2
    if scal:
        pv = pv[..., None]
    m = pv.shape[-1]
    if active is None:
        eids = np.arange(len(mesh.elements))
    else:
        eids = np.where(active)[0]
    N = geo.quad.shape_values                       # (nq, nsf)
    w = geo.wdet[eids]                              # (ne, nq)
    conn = mesh.elements[eids]
    num = np.einsum("qa,eq,eqm->eam", N, w, pv[eids])
    den = np.einsum("qa,eq->ea", N, w)
    out = np.zeros((len(mesh.nodes), m))
    lump = np.zeros(len(mesh.nodes))
    np.add.at(out, conn.ravel(), num.reshape(-1, m))
    np.add.at(lump, conn.ravel(), den.ravel())
    nz = lump > 0
    out[nz] /= lump[nz, None]
    return out[:, 0] if scal else out


def interp_to_points(mesh, nodal, active=None):
    """Interpolate a nodal field to quadrature points: (n_elem, n_qp)."""
    geo = mesh.geometry()
    vals = np.asarray(nodal)[mesh.elements]          # (ne, nsf)
    return np.einsum("qa,ea->eq", geo.quad.shape_values, vals)


def gradient_at_points(mesh, nodal):
    """Gradient of a nodal field at quadrature points: (n_elem, n_qp, 2)."""
    geo = mesh.geometry()
    vals = np.asarray(nodal)[mesh.elements]
    return np.einsum("eqai,ea->eqi", geo.dNdx, vals)


# Small-strain kinematics. Strain/stress live in Voigt order
# [11, 22, 33, 12] where 33 is the hoop (axisymmetric) or out-of-plane
# (plane strain) component and the shear slot carries engineering gamma
# for strains and the tensor component for stresses.

def element_dofs(mesh):
    """(n_elem, 2*nsf) displacement dof map, dof = 2*node + component."""
    conn = mesh.elements
    ed = np.empty((conn.shape[0], conn.shape[1] * 2), dtype=int)
    ed[:, 0::2] = 2 * conn
    ed[:, 1::2] = 2 * conn + 1
    return ed


def b_matrices(mesh):
    """Strain-displacement matrices B: (n_elem, n_qp, 4, 2*nsf)."""
    geo = mesh.geometry()
    ne, nq, nsf, _ = geo.dNdx.shape
    B = np.zeros((ne, nq, 4, 2 * nsf))
    dNdx = geo.dNdx
    B[:, :, 0, 0::2] = dNdx[..., 0]
    B[:, :, 1, 1::2] = dNdx[..., 1]
    B[:, :, 3, 0::2] = dNdx[..., 1]
    B[:, :, 3, 1::2] = dNdx[..., 0]
    if geo.axisymmetric:
        r = geo.xq[..., 0]
        B[:, :, 2, 0::2] = geo.quad.shape_values[None, :, :] / r[..., None]
    return B


def strains_at_points(mesh, u, B=None):
    """Total strain at quadrature points from nodal displacements: (ne, nq, 4)."""
    if B is None:
        B = mesh.b_matrices()
    ue = np.asarray(u).ravel()[element_dofs(mesh)]
    return np.einsum("eqij,ej->eqi", B, ue)
