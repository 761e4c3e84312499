"""Transient nonlinear heat conduction and the multi-pass torch protocol.

Implicit theta-scheme (backward Euler by default) with Newton iteration on
the temperature-dependent residual. Convection follows Newton's cooling law,
radiation the Stefan-Boltzmann law with its exact consistent derivative.
The torch protocol drives each weld pass through Apply / Hold / Pause /
Cool-down, activating bead elements at the melt temperature.
"""

from dataclasses import dataclass, field

import numpy as np

from . import fem, mesh as meshmod, units
from .mechanics import region_index

HEAT_TOL = 1e-8
HEAT_MAX_ITER = 30


@dataclass
class ThermalBC:
    """One boundary condition.

    kind 'convection' | 'radiation' | 'combined' apply on `surface`
    ("exterior" = current boundary of the active domain, or a node-set name);
    kind 'prescribed' fixes the node set to `value`.
    """
    kind: str
    surface: str = "exterior"
    h_c: float = 25e-6                    # W/(mm^2 degC)
    T0: float = units.AMBIENT_T
    eps0: float = 0.8
    sigma0: float = units.STEFAN_BOLTZMANN
    T_abs: float = units.ABSOLUTE_ZERO_C
    value: float = None


@dataclass
class TorchSchedule:
    """Per-pass torch timings and targets (defaults are the SMAW protocol)."""
    apply_duration: float = 8.0
    hold_duration: float = 4.0
    pause_duration: float = 1e-7
    melt_T: float = 1500.0
    interpass_T: float = 125.0
    final_ambient_T: float = units.AMBIENT_T
    ambient_tol: float = 0.5              # asymptotic approach band, degC
    cooldown_cap: float = 1e5             # simulated seconds
    n_beads: int = 4
    sensor_nodes: dict = field(default_factory=dict)  # bead -> node id


class EdgeData:
    """Integration data for a set of boundary edges (2-pt Gauss)."""

    def __init__(self, mesh, edges):
        # edges: (n, 4) rows (elem, local, n1, n2)
        self.nodes = edges[:, 2:4] if len(edges) else np.zeros((0, 2), dtype=int)
        xy = mesh.nodes[self.nodes] if len(edges) else np.zeros((0, 2, 2))
        gp = np.array([-1.0, 1.0]) / np.sqrt(3.0)
        self.N = np.stack([(1 - gp) / 2, (1 + gp) / 2], axis=1)   # (2 qp, 2 nodes)
        if len(edges):
            L = np.linalg.norm(xy[:, 1] - xy[:, 0], axis=1)
            xq = np.einsum("qa,eai->eqi", self.N, xy)
            w = 0.5 * L[:, None] * np.ones((1, 2))
            if mesh.axisymmetric:
                w = w * (2 * np.pi * xq[..., 0])
            self.w = w                                             # (ne, 2)
        else:
            self.w = np.zeros((0, 2))

    def area(self):
        return float(self.w.sum())


def exterior_edges(mesh, active, exclude_nodes=None):
    """Boundary edges of the active element set, minus fully-excluded edges."""
    edges = mesh.boundary_edges(active)
    if len(edges) and exclude_nodes is not None and len(exclude_nodes):
        ex = np.zeros(mesh.n_nodes, dtype=bool)
        ex[np.asarray(exclude_nodes, dtype=int)] = True
        keep = ~(ex[edges[:, 2]] & ex[edges[:, 3]])
        edges = edges[keep]
    return EdgeData(mesh, edges)


class HeatProblem:
    """Heat solver bound to one mesh + region set."""

    def __init__(self, mesh, regions):
        self.mesh = mesh
        self.regions = regions
        self.region_idx = region_index(mesh)
        self.region_list = [regions[n] for n in ("BM", "HAZ", "WM")]

    def _properties(self, T_q, active_ids):
        """rho*c and k per active quadrature point."""
        ridx = self.region_idx[active_ids]
        rc = np.empty_like(T_q)
        k = np.empty_like(T_q)
        for r, region in enumerate(self.region_list):
            sel = ridx == r
            if not sel.any():
                continue
            Ts = T_q[sel]
            rc[sel] = region.rho_table(Ts) * region.c_table(Ts)
            k[sel] = region.k_table(Ts)
        return rc, k

    def step(self, state, bcs, dt, theta=1.0, prescribed=None,
             edge_cache=None, tol=HEAT_TOL, max_iter=HEAT_MAX_ITER):
        """One implicit step; returns (T_new, info). Raises NewtonError on failure."""
        mesh = self.mesh
        geo = mesh.geometry()
        act = np.where(state.active)[0]
        N = geo.quad.shape_values
        w = geo.wdet[act]
        dNdx = geo.dNdx[act]
        conn = mesh.elements[act]
        T_old = state.T.copy()

        fixed_nodes, fixed_vals = [], []
        flux_bcs = []
        for bc in bcs or []:
            if bc.kind == "prescribed":
                nset = mesh.node_sets[bc.surface]
                fixed_nodes.append(np.asarray(nset, dtype=int))
                fixed_vals.append(np.broadcast_to(bc.value, np.shape(nset)).astype(float))
            else:
                flux_bcs.append(bc)
        if prescribed:
            for nset, vals in prescribed:
                fixed_nodes.append(np.asarray(nset, dtype=int))
                fixed_vals.append(np.broadcast_to(vals, np.shape(nset)).astype(float))
        act_nodes = state.active_node_mask(mesh)
        frozen = np.where(~act_nodes)[0]
        fixed_nodes.append(frozen)
        fixed_vals.append(T_old[frozen])
        fixed = np.concatenate(fixed_nodes) if fixed_nodes else np.array([], dtype=int)
        fvals = np.concatenate(fixed_vals) if fixed_nodes else np.array([])
        fixed, first = np.unique(fixed, return_index=True)
        fvals = fvals[first]
        free = np.setdiff1d(np.arange(mesh.n_nodes), fixed)

        edata = {}
        for bc in flux_bcs:
            key = bc.surface
            if key not in edata:
                if edge_cache is not None and key in edge_cache:
                    edata[key] = edge_cache[key]
                elif key == "exterior":
                    edata[key] = exterior_edges(mesh, state.active)
                else:
                    nset = set(mesh.node_sets[key].tolist())
                    edges = mesh.boundary_edges(state.active)
                    sel = [i for i in range(len(edges))
                           if edges[i, 2] in nset and edges[i, 3] in nset]
                    edata[key] = EdgeData(mesh, edges[sel])

        def residual(T):
            T_th = (1 - theta) * T_old + theta * T
            Tq = np.einsum("qa,ea->eq", N, T_th[conn])
            rc, k = self._properties(Tq, act)
            dTdt_q = np.einsum("qa,ea->eq", N, (T - T_old)[conn]) / dt
            gradT = np.einsum("eqai,ea->eqi", dNdx, T_th[conn])
            fe = (np.einsum("qa,eq,eq,eq->ea", N, rc, dTdt_q, w)
                  + np.einsum("eqai,eq,eqi,eq->ea", dNdx, k, gradT, w))
            R = np.zeros(mesh.n_nodes)
            np.add.at(R, conn.ravel(), fe.ravel())
            # capacity + conduction tangent (property derivatives dropped)
            Me = np.einsum("qa,qb,eq,eq->eab", N, N, rc, w) / dt
            Ke = theta * np.einsum("eqai,eq,eqbi,eq->eab", dNdx, k, dNdx, w)
            K = fem.assemble_matrix(mesh.n_nodes, conn, Me + Ke)
            for bc in flux_bcs:
                ed = edata[bc.surface]
                if len(ed.w) == 0:
                    continue
                Tq_e = np.einsum("qa,ea->eq", ed.N, T_th[ed.nodes])
                q = np.zeros_like(Tq_e)
                dq = np.zeros_like(Tq_e)
                if bc.kind in ("convection", "combined"):
                    q += bc.h_c * (Tq_e - bc.T0)
                    dq += bc.h_c
                if bc.kind in ("radiation", "combined"):
                    q += bc.eps0 * bc.sigma0 * ((Tq_e - bc.T_abs) ** 4
                                                - (bc.T0 - bc.T_abs) ** 4)
                    dq += 4.0 * bc.eps0 * bc.sigma0 * (Tq_e - bc.T_abs) ** 3
                fe_b = np.einsum("qa,eq,eq->ea", ed.N, q, ed.w)
                np.add.at(R, ed.nodes.ravel(), fe_b.ravel())
                Ke_b = theta * np.einsum("qa,qb,eq,eq->eab", ed.N, ed.N, dq, ed.w)
                K = K + fem.assemble_matrix(mesh.n_nodes, ed.nodes, Ke_b)
            return R, K

        T = T_old.copy()
        T[fixed] = fvals
        R, K = residual(T)
        rnorm = np.linalg.norm(R[free])
        scale = max(np.linalg.norm(R), self._capacity_scale(state, act, dt), 1e-20)
        it = 0
        while rnorm > tol * scale and it < max_iter:
            dT = fem.solve_sparse(K[free][:, free], -R[free])
            alpha = 1.0
            for _ in range(8):
                T_try = T.copy()
                T_try[free] += alpha * dT
                R_try, K_try = residual(T_try)
                n_try = np.linalg.norm(R_try[free])
                if np.isfinite(n_try) and (n_try < rnorm or n_try <= tol * scale):
                    break
                alpha *= 0.5
            else:
                raise fem.NewtonError(f"heat step: line search stagnated |R|={rnorm:.2e}")
            T, R, K, rnorm = T_try, R_try, K_try, n_try
            it += 1
        if rnorm > tol * scale:
            raise fem.NewtonError(f"heat step: no convergence ({rnorm:.2e} / {scale:.2e})")
        info = {"iterations": it, "residual": R, "fixed": fixed,
                "flux_edges": edata, "T_old": T_old, "theta": theta, "dt": dt}
        return T, info

    def _capacity_scale(self, state, act, dt):
        """Reference residual scale: heat capacity of the domain per unit step."""
        geo = self.mesh.geometry()
        Tq = fem.interp_to_points(self.mesh, state.T)[act]
        rc, _ = self._properties(Tq, act)
        return float((rc * geo.wdet[act]).sum()) / dt

    def heat_content_change(self, state, T_old, T_new, theta=1.0):
        """Discrete enthalpy change of the step: int rho*c(T_theta) dT dV."""
        geo = self.mesh.geometry()
        act = np.where(state.active)[0]
        N = geo.quad.shape_values
        conn = self.mesh.elements[act]
        T_th = (1 - theta) * T_old + theta * T_new
        Tq = np.einsum("qa,ea->eq", N, T_th[conn])
        rc, _ = self._properties(Tq, act)
        dTq = np.einsum("qa,ea->eq", N, (T_new - T_old)[conn])
        return float((rc * dTq * geo.wdet[act]).sum())


def solve_heat_step(mesh, state, regions, bcs, dt, theta_scheme=1.0, prescribed=None):
    """Convenience wrapper: one implicit heat step, committed into the state."""
    prob = HeatProblem(mesh, regions)
    T_new, info = prob.step(state, bcs, dt, theta=theta_scheme, prescribed=prescribed)
    out = state.copy()
    out.T = T_new
    out.peak_T = np.maximum(out.peak_T, T_new)
    return out, info


def run_torch_protocol(mesh, state, regions, schedule, bcs,
                       probe_nodes=None, mech_hook=None, dt_min=1e-3, dt_max=5.0,
                       log=None):
    """Drive the full multi-pass welding thermal cycle.

    Per bead: ramp the cavity-edge temperature linearly to melt_T over the
    apply step, hold, activate the bead (strain-free, at melt_T), then cool
    until the bead sensor reaches the inter-pass target (ambient after the
    final pass). `mech_hook(state, t, forced)` is invoked after accepted
    steps so a sequentially coupled mechanical solve can track the history.

    Returns (state, result) where result carries probe time series and the
    per-node all-time peak temperature.
    """
    prob = HeatProblem(mesh, regions)
    probes = {int(n): [] for n in (probe_nodes or [])}
    times = []
    t = 0.0
    n_beads = schedule.n_beads
    step_log = log if log is not None else []

    def record(tt):
        times.append(tt)
        for n in probes:
            probes[n].append(state.T[n])

    def advance(duration, prescribed_fn, stop_fn=None, dt0=None, forced_end=True):
        nonlocal t, state
        t_end = t + duration
        dt = min(dt0 or dt_max, duration)
        halvings = 0
        while t < t_end - 1e-12:
            dt = min(dt, t_end - t)
            dt = max(dt, dt_min)
            presc = prescribed_fn(t + dt) if prescribed_fn else None
            try:
                T_new, info = prob.step(state, bcs, dt, prescribed=presc)
            except fem.NewtonError:
                halvings += 1
                if halvings > 10 or dt <= dt_min * (1 + 1e-9):
                    raise
                dt = max(dt / 2, dt_min)
                continue
            halvings = 0
            t += dt
            state.T = T_new
            state.peak_T = np.maximum(state.peak_T, T_new)
            record(t)
            if mech_hook:
                mech_hook(state, t, False)
            if stop_fn and stop_fn():
                break
            dt = min(dt * 1.5, dt_max)
        if mech_hook and forced_end:
            mech_hook(state, t, True)

    record(t)
    for bead in range(1, n_beads + 1):
        cavity = mesh.node_sets[f"cavity_edge_bead_{bead}"]
        T_start = state.T[cavity].copy()
        t0 = t

        def ramp(tt):
            f = np.clip((tt - t0) / schedule.apply_duration, 0.0, 1.0)
            return [(cavity, T_start + f * (schedule.melt_T - T_start))]

        advance(schedule.apply_duration, ramp, dt0=schedule.apply_duration / 16)
        advance(schedule.hold_duration, lambda tt: [(cavity, schedule.melt_T)],
                dt0=schedule.hold_duration / 8)
        # Pause: instantaneous activation of the bead at melt temperature
        t += schedule.pause_duration
        state = meshmod.activate_bead(mesh, state, bead, schedule.melt_T)
        record(t)
        if mech_hook:
            mech_hook(state, t, True)
        sensor = schedule.sensor_nodes.get(bead)
        if sensor is None:
            belems = mesh.element_sets[f"bead_{bead}"]
            bnodes = np.unique(mesh.elements[belems].ravel())
            cen = mesh.nodes[mesh.elements[belems]].mean(axis=(0, 1))
            sensor = int(bnodes[np.argmin(np.linalg.norm(mesh.nodes[bnodes] - cen, axis=1))])
        last = bead == n_beads
        target = schedule.final_ambient_T if last else schedule.interpass_T
        tol = schedule.ambient_tol if last else 0.0
        advance(schedule.cooldown_cap, None, dt0=0.05,
                stop_fn=lambda: state.T[sensor] <= target + tol)
        if state.T[sensor] > target + tol:
            raise RuntimeError(
                f"cool-down of bead {bead} did not reach {target} degC within "
                f"{schedule.cooldown_cap} s (sensor at {state.T[sensor]:.1f})")
        step_log.append({"bead": bead, "t_end": t, "sensor": sensor,
                         "sensor_T": float(state.T[sensor])})

    result = {
        "times": np.array(times),
        "probes": {n: np.array(v) for n, v in probes.items()},
        "peak_T": state.peak_T.copy(),
        "log": step_log,
    }
    return state, result
