"""Structured 2D mesh generation for the weld / fracture scenarios.

Three generators:
  * generate_pipe_weld_mesh: axisymmetric pipe cross-section with a V-groove
    split into stacked weld beads, HAZ bands along the fusion line, graded
    element sizes (h_min at the groove, h_max at the domain edges).
  * generate_boundary_layer_mesh: half annulus for small-scale-yielding
    fracture tests, crack plane on the symmetry edge, rings refined toward
    the tip. A keyhole of radius `focused_tip_size` replaces the singular
    point so all quads stay non-degenerate.
  * generate_strip_mesh: one-element-wide strip for 1D permeation and slab
    conduction runs.

Coordinates are (r, z) for axisymmetric meshes and (x, y) otherwise, in mm.
Meshes are immutable after generation.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import fem


class MeshError(ValueError):
    """Geometry infeasible or mesh degenerate."""


@dataclass(frozen=True)
class RefinementSpec:
    """Grading controls: h_min at the weld region, h_max at the far edges."""
    h_min: float = 0.1
    h_max: float = 1.5


class Mesh:
    """Structured quadrilateral mesh with named node/element sets."""

    def __init__(self, nodes, elements, element_order, axisymmetric,
                 node_sets=None, element_sets=None, meta=None):
        self.nodes = np.asarray(nodes, dtype=float)
        self.elements = np.asarray(elements, dtype=int)
        self.element_order = element_order
        self.axisymmetric = axisymmetric
        self.node_sets = dict(node_sets or {})
        self.element_sets = dict(element_sets or {})
        self.meta = dict(meta or {})
        self._geo = None
        self._bmat = None
        self._validate()

    def _validate(self):
        if self.elements.min(initial=0) < 0 or self.elements.max(initial=-1) >= len(self.nodes):
            raise MeshError("element connectivity references missing nodes")
        geo = self.geometry()
        if np.any(geo.detJ <= 0):
            e = int(np.argwhere(geo.detJ <= 0)[0][0])
            raise MeshError(f"degenerate element {e}: non-positive Jacobian")

    def geometry(self):
        if self._geo is None:
            self._geo = fem.ElementGeometry(self.nodes, self.elements,
                                            self.element_order, self.axisymmetric)
        return self._geo

    def b_matrices(self):
        if self._bmat is None:
            self._bmat = fem.b_matrices(self)
        return self._bmat

    @property
    def n_nodes(self):
        return len(self.nodes)

    @property
    def n_elements(self):
        return len(self.elements)

    def volume(self, element_ids=None):
        """Integrated measure (2*pi*int r dA if axisymmetric, else area)."""
        w = self.geometry().wdet
        if element_ids is not None:
            w = w[element_ids]
        return float(w.sum())

    def region_of_elements(self):
        """(n_elem,) array of region names BM/HAZ/WM."""
        out = np.empty(self.n_elements, dtype=object)
        for name in ("BM", "HAZ", "WM"):
            if name in self.element_sets:
                out[self.element_sets[name]] = name
        return out

    def centroids(self):
        return self.nodes[self.elements].mean(axis=1)

    def boundary_edges(self, element_mask=None):
        """Edges owned by exactly one (selected) element.

        Returns (elem_id, local_edge, n1, n2) rows; local edges of a quad are
        (0,1),(1,2),(2,3),(3,0) over the corner nodes.
        """
        corners = self.elements[:, :4]
        ne = len(corners)
        loc = np.array([(0, 1), (1, 2), (2, 3), (3, 0)])
        e1 = corners[:, loc[:, 0]]
        e2 = corners[:, loc[:, 1]]
        if element_mask is None:
            sel = np.ones(ne, dtype=bool)
        else:
            sel = np.asarray(element_mask, dtype=bool)
        key = np.minimum(e1, e2).astype(np.int64) * self.n_nodes + np.maximum(e1, e2)
        counts = {}
        for e in np.where(sel)[0]:
            for k in key[e]:
                counts[k] = counts.get(k, 0) + 1
        rows = []
        for e in np.where(sel)[0]:
            for le in range(4):
                if counts[key[e, le]] == 1:
                    rows.append((e, le, e1[e, le], e2[e, le]))
        return np.array(rows, dtype=int).reshape(-1, 4)


def _grade_spacings(span, h0, h1, ratio=1.2):
    """1D spacing ladder from h0 growing geometrically to h1 across `span`.

    Returns cumulative breakpoints in (0, span], last one exactly span.
    """
    hs = []
    total = 0.0
    h = h0
    while total < span:
        hs.append(min(h, span - total) if span - total < h else h)
        total += hs[-1]
        if h < h1:
            h = min(h * ratio, h1)
    hs = np.array(hs)
    hs *= span / hs.sum()
    return np.cumsum(hs)


def _grid_mesh(r_levels, z_of_row, node_sets_fn=None, axisymmetric=True,
               element_order=1, element_sets=None, meta=None, node_sets=None):
    """Build a sheared structured grid: row i has z-coordinates z_of_row[i]."""
    n_rows = len(r_levels) - 1
    n_cols = len(z_of_row[0]) - 1
    nid = lambda i, j: i * (n_cols + 1) + j
    nodes = np.empty(((n_rows + 1) * (n_cols + 1), 2))
    for i, r in enumerate(r_levels):
        for j, z in enumerate(z_of_row[i]):
            nodes[nid(i, j)] = (r, z)
    elems = []
    for i in range(n_rows):
        for j in range(n_cols):
            elems.append((nid(i, j), nid(i + 1, j), nid(i + 1, j + 1), nid(i, j + 1)))
    return Mesh(nodes, np.array(elems), element_order, axisymmetric,
                node_sets=node_sets, element_sets=element_sets, meta=meta)


def _point_segment_distance(pts, a, b):
    """Distances from points (n,2) to segment a-b."""
    ab = np.asarray(b, dtype=float) - np.asarray(a, dtype=float)
    ap = pts - np.asarray(a, dtype=float)
    t = np.clip((ap @ ab) / (ab @ ab), 0.0, 1.0)
    proj = np.asarray(a) + t[:, None] * ab
    return np.linalg.norm(pts - proj, axis=1)


def generate_pipe_weld_mesh(r_i, t_pipe, L0, weld_angle, n_beads,
                            refinement=None, l_haz=3.0, root_half_width=0.3,
                            element_order=1):
    """Axisymmetric pipe cross-section with a V-groove girth weld.

    The groove (total included angle `weld_angle`) is split into `n_beads`
    equal-height bead element sets stacked from the root. Elements outside
    the groove within perpendicular distance `l_haz` of the fusion line are
    tagged HAZ, the rest BM. Element sizes grade from ~h_min at the groove
    to h_max at the lateral edges.
    """
    ref = refinement or RefinementSpec()
    if r_i <= 0 or t_pipe <= 0:
        raise MeshError("r_i and t_pipe must be positive")
    if not 0 < weld_angle < 180:
        raise MeshError("weld angle must lie in (0, 180) degrees")
    if n_beads < 1:
        raise MeshError("need at least one weld bead")
    tan_half = math.tan(math.radians(weld_angle) / 2.0)
    w_top = root_half_width + t_pipe * tan_half
    if 2 * w_top >= 0.8 * L0:
        raise MeshError(f"groove width {2 * w_top:.1f} mm too large for domain L0={L0} mm")

    h_min, h_max = ref.h_min, ref.h_max
    bead_h = t_pipe / n_beads
    rows_per_bead = max(2, int(round(bead_h / (3.0 * h_min))))
    n_rows = rows_per_bead * n_beads
    r_levels = r_i + t_pipe * np.linspace(0.0, 1.0, n_rows + 1)

    # column template: groove interior + graded outside offsets (fractions)
    n_groove = max(4, 2 * int(round(w_top / (6.0 * h_min))))
    groove_frac = np.linspace(-1.0, 1.0, n_groove + 1)
    ref_span = L0 / 2.0 - w_top
    near = min(l_haz + 1.0, 0.4 * ref_span)
    h_near = 1.25 * h_min
    cum_near = np.arange(1, int(round(near / h_near)) + 1) * h_near
    cum_far = cum_near[-1] + _grade_spacings(ref_span - cum_near[-1], h_near, h_max)
    out_frac = np.concatenate([cum_near, cum_far]) / ref_span

    def w_of(r):
        return root_half_width + (r - r_i) * tan_half

    z_rows = []
    for r in r_levels:
        w = w_of(r)
        right = w + (L0 / 2.0 - w) * out_frac
        z = np.concatenate([-right[::-1], groove_frac * w, right])
        z_rows.append(z)
    n_out = len(out_frac)
    n_cols = n_groove + 2 * n_out

    mesh_meta = {
        "kind": "pipe_weld", "r_i": r_i, "t_pipe": t_pipe, "L0": L0,
        "weld_angle": weld_angle, "n_beads": n_beads, "l_haz": l_haz,
        "root_half_width": root_half_width, "tan_half": tan_half,
        "rows_per_bead": rows_per_bead,
        "fusion_segments": [
            ((r_i, -root_half_width), (r_i + t_pipe, -w_top)),
            ((r_i, root_half_width), (r_i + t_pipe, w_top)),
            ((r_i, -root_half_width), (r_i, root_half_width)),
        ],
    }
    m = _grid_mesh(r_levels, z_rows, axisymmetric=True,
                   element_order=element_order, meta=mesh_meta)

    # element sets: grid layout is row-major, groove columns are the middle ones
    eid = np.arange(m.n_elements).reshape(n_rows, n_cols)
    groove_cols = slice(n_out, n_out + n_groove)
    wm = eid[:, groove_cols].ravel()
    beads = {}
    for k in range(n_beads):
        rows = slice(k * rows_per_bead, (k + 1) * rows_per_bead)
        beads[f"bead_{k + 1}"] = np.sort(eid[rows, groove_cols].ravel())
    outside = np.setdiff1d(np.arange(m.n_elements), wm)
    cent = m.centroids()[outside]
    dist = np.full(len(outside), np.inf)
    for a, b in mesh_meta["fusion_segments"]:
        dist = np.minimum(dist, _point_segment_distance(cent, a, b))
    haz = outside[dist <= l_haz]
    bm = outside[dist > l_haz]
    m.element_sets.update({"WM": np.sort(wm), "HAZ": np.sort(haz), "BM": np.sort(bm)})
    m.element_sets.update(beads)

    # node sets
    r, z = m.nodes[:, 0], m.nodes[:, 1]
    tol = 1e-9 * max(L0, r_i + t_pipe)
    m.node_sets["inner_surface"] = np.where(np.abs(r - r_i) < tol)[0]
    m.node_sets["outer_surface"] = np.where(np.abs(r - (r_i + t_pipe)) < tol)[0]
    m.node_sets["left_edge"] = np.where(np.abs(z + L0 / 2) < tol)[0]
    m.node_sets["right_edge"] = np.where(np.abs(z - L0 / 2) < tol)[0]

    # torch cavity edges: nodes a bead shares with anything deposited earlier
    earlier = np.concatenate([bm, haz])
    earlier_nodes = set(m.elements[earlier].ravel().tolist())
    for k in range(n_beads):
        bead_nodes = set(m.elements[beads[f"bead_{k + 1}"]].ravel().tolist())
        m.node_sets[f"cavity_edge_bead_{k + 1}"] = np.array(
            sorted(bead_nodes & earlier_nodes), dtype=int)
        earlier_nodes |= bead_nodes
    return m


def generate_boundary_layer_mesh(R_outer, focused_tip_size, r_fine=2.0,
                                 region="BM", element_order=1,
                                 theta_ratio=1.35, ring_ratio=1.25):
    """Half annulus for boundary-layer (small-scale yielding) fracture tests.

    The crack plane lies on y=0: the ligament (theta=0 edge) carries the
    symmetry condition, the theta=pi edge is the traction-free crack face.
    Rings are uniform at `focused_tip_size` out to `r_fine`, then grow
    geometrically to R_outer; sector widths grow from the ligament outward.
    """
    if R_outer <= 100.0 * focused_tip_size:
        raise MeshError("R_outer must exceed 100x the focused tip element size")
    h0 = focused_tip_size
    radii = [h0]
    r = h0
    while r < min(r_fine, R_outer / 4):
        r += h0
        radii.append(r)
    radii = np.array(radii)
    tail = radii[-1] + _grade_spacings(R_outer - radii[-1], h0 * ring_ratio,
                                       0.25 * R_outer, ratio=ring_ratio)
    radii = np.concatenate([radii, tail])

    dth = [h0 / max(r_fine, 4 * h0)]
    while sum(dth) < math.pi:
        dth.append(min(dth[-1] * theta_ratio, 0.22))
    dth = np.array(dth) * (math.pi / sum(dth))
    thetas = np.concatenate([[0.0], np.cumsum(dth)])
    thetas[-1] = math.pi

    n_r, n_t = len(radii) - 1, len(thetas) - 1
    nid = lambda i, j: i * (n_t + 1) + j
    nodes = np.empty(((n_r + 1) * (n_t + 1), 2))
    for i, rr in enumerate(radii):
        nodes[nid(i, 0):nid(i, n_t) + 1, 0] = rr * np.cos(thetas)
        nodes[nid(i, 0):nid(i, n_t) + 1, 1] = rr * np.sin(thetas)
    elems = []
    for i in range(n_r):
        for j in range(n_t):
            elems.append((nid(i, j), nid(i + 1, j), nid(i + 1, j + 1), nid(i, j + 1)))
    meta = {"kind": "boundary_layer", "R_outer": R_outer, "tip_size": h0,
            "r_fine": r_fine, "keyhole_radius": radii[0]}
    m = Mesh(nodes, np.array(elems), element_order, axisymmetric=False, meta=meta)

    lig = np.array([nid(i, 0) for i in range(n_r + 1)])       # ordered tip -> rim
    m.node_sets["symmetry_plane"] = lig
    m.node_sets["ligament"] = lig
    m.node_sets["crack_face"] = np.array([nid(i, n_t) for i in range(n_r + 1)])
    m.node_sets["outer_rim"] = np.array([nid(n_r, j) for j in range(n_t + 1)])
    m.node_sets["keyhole"] = np.array([nid(0, j) for j in range(n_t + 1)])
    all_e = np.arange(m.n_elements)
    m.element_sets[region] = all_e
    for other in {"BM", "HAZ", "WM"} - {region}:
        m.element_sets[other] = np.array([], dtype=int)
    return m


def generate_strip_mesh(thickness, n_elem, region="BM", element_order=1,
                        axisymmetric=False):
    """One-element-wide strip along x, used for 1D permeation / slab runs."""
    if n_elem < 2:
        raise MeshError("strip mesh needs at least 2 elements")
    h = thickness / n_elem
    xs = np.linspace(0.0, thickness, n_elem + 1)
    nodes = np.array([(x, y) for y in (0.0, h) for x in xs])
    elems = [(j, j + 1, n_elem + 2 + j, n_elem + 1 + j) for j in range(n_elem)]
    m = Mesh(nodes, np.array(elems), element_order, axisymmetric,
             meta={"kind": "strip", "thickness": thickness})
    m.node_sets["charging_surface"] = np.array([0, n_elem + 1])
    m.node_sets["exit_surface"] = np.array([n_elem, 2 * n_elem + 1])
    m.node_sets["left_edge"] = m.node_sets["charging_surface"]
    m.node_sets["right_edge"] = m.node_sets["exit_surface"]
    all_e = np.arange(m.n_elements)
    m.element_sets[region] = all_e
    for other in {"BM", "HAZ", "WM"} - {region}:
        m.element_sets[other] = np.array([], dtype=int)
    return m


def activate_bead(mesh, state, bead, T_init, table_range=(20.0, 1500.0)):
    """Activate one weld bead: elements join the model strain-free at T_init.

    Bead nodes get T_init; stress, plastic history and crack history at the
    bead quadrature points are zeroed; the current kinematic strain is
    stored as the activation offset so insertion is stress-free.
    """
    name = f"bead_{bead}"
    if name not in mesh.element_sets:
        raise MeshError(f"mesh has no bead set {name!r}")
    if bead in state.active_beads:
        raise ValueError(f"bead {bead} already active")
    if not table_range[0] <= T_init <= table_range[1]:
        raise ValueError(f"T_init={T_init} outside property table range {table_range}")
    elems = mesh.element_sets[name]
    out = state.copy()
    out.active[elems] = True
    out.active_beads.add(bead)
    out.T[mesh.elements[elems].ravel()] = T_init
    out.peak_T[mesh.elements[elems].ravel()] = np.maximum(
        out.peak_T[mesh.elements[elems].ravel()], T_init)
    eps_now = fem.strains_at_points(mesh, out.u, mesh.b_matrices())
    out.eps_ref[elems] = eps_now[elems]
    out.T_act[elems] = T_init
    out.sigma[elems] = 0.0
    out.eps_p[elems] = 0.0
    out.eps_p_eq[elems] = 0.0
    out.history[elems] = 0.0
    return out
