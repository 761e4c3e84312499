"""Heat solver: analytic slab transient, conservation, radiation rate."""

import numpy as np
import pytest

from weldh2 import fem, materials, mesh as meshmod, state as statemod, thermal, units


def constant_property_region(k=0.045, rho=7.87e-6, c=450.0):
    T = [0.0, 2000.0]
    return materials.make_region(
        "BM",
        k_table=materials.PropertyTable(T, [k, k]),
        rho_table=materials.PropertyTable(T, [rho, rho]),
        c_table=materials.PropertyTable(T, [c, c]),
    )


def regions_of(region):
    return {"BM": region, "HAZ": region, "WM": region}


def test_uniform_field_insulated_stays_uniform():
    m = meshmod.generate_strip_mesh(1.0, 10)
    st = statemod.new_state(m, T0=300.0)
    regions = regions_of(constant_property_region())
    out, _ = thermal.solve_heat_step(m, st, regions, bcs=[], dt=0.7)
    assert np.allclose(out.T, 300.0, atol=1e-10)


def slab_series_solution(x, t, L, kappa, terms=400):
    """T(x,0)=0, T(0,t)=T(L,t)=1: classic Fourier series."""
    s = np.ones_like(x)
    for n in range(1, terms + 1, 2):
        s -= (4 / (n * np.pi)) * np.sin(n * np.pi * x / L) * np.exp(
            -(n * np.pi / L) ** 2 * kappa * t)
    return s


def run_slab_probes(n_elem=100, fourier_numbers=(0.05, 0.1, 0.3)):
    """Midplane temperature vs the exact series at given Fourier numbers."""
    L = 10.0
    m = meshmod.generate_strip_mesh(L, n_elem)
    region = constant_property_region()
    kappa = 0.045 / (7.87e-6 * 450.0)
    regions = regions_of(region)
    st = statemod.new_state(m, T0=0.0)
    prob = thermal.HeatProblem(m, regions)
    faces = np.concatenate([m.node_sets["charging_surface"],
                            m.node_sets["exit_surface"]])
    mid = np.argmin(np.abs(m.nodes[:, 0] - L / 2))
    tau = L ** 2 / kappa
    t = 0.0
    checks = []
    for Fo in fourier_numbers:
        t_target = Fo * tau
        while t < t_target - 1e-12:
            # ramped stepping: fine right after the boundary jump
            dt = min(5e-4 * tau, max(2e-5 * tau, 0.05 * t), t_target - t)
            T, _ = prob.step(st, [], dt, prescribed=[(faces, 1.0)])
            st.T = T
            t += dt
        exact = slab_series_solution(np.array([L / 2]), t, L, kappa)[0]
        checks.append((float(st.T[mid]), float(exact)))
    return checks


def test_1d_slab_matches_fourier_series():
    for num, exact in run_slab_probes():
        assert num == pytest.approx(exact, rel=0.01)


def test_energy_conservation_sealed():
    m = meshmod.generate_strip_mesh(5.0, 20)
    region = constant_property_region()
    regions = regions_of(region)
    st = statemod.new_state(m, T0=100.0)
    st.T = 100.0 + 50.0 * np.sin(m.nodes[:, 0])
    prob = thermal.HeatProblem(m, regions)
    geo = m.geometry()
    rc = 7.87e-6 * 450.0

    def content(T):
        Tq = fem.interp_to_points(m, T)
        return float((rc * Tq * geo.wdet).sum())

    for _ in range(5):
        T0 = st.T.copy()
        T, _ = prob.step(st, [], dt=0.5)
        assert abs(content(T) - content(T0)) / content(T0) < 1e-8
        st.T = T


def test_energy_balance_with_dirichlet_injection():
    """content change = - flux residual at prescribed nodes (discrete balance)."""
    m = meshmod.generate_strip_mesh(5.0, 25)
    region = constant_property_region()
    regions = regions_of(region)
    st = statemod.new_state(m, T0=0.0)
    prob = thermal.HeatProblem(m, regions)
    faces = m.node_sets["charging_surface"]
    T, info = prob.step(st, [], dt=0.8, prescribed=[(faces, 10.0)])
    change = prob.heat_content_change(st, info["T_old"], T)
    injected = float(info["residual"][faces].sum()) * info["dt"]
    assert change == pytest.approx(injected, rel=1e-8)


def test_radiation_initial_rate_lumped():
    """Mean dT/dt of a uniform element under pure radiation on one edge."""
    m = meshmod.generate_strip_mesh(1.0, 2)
    rho, c = 7.87e-6, 450.0
    region = constant_property_region(rho=rho, c=c)
    regions = regions_of(region)
    st = statemod.new_state(m, T0=500.0)
    bc = thermal.ThermalBC(kind="radiation", surface="exit_surface",
                           T0=21.0, eps0=0.8)
    prob = thermal.HeatProblem(m, regions)
    dt = 1e-6
    T, _ = prob.step(st, [bc], dt, tol=1e-12)
    geo = m.geometry()
    V = float(geo.wdet.sum())
    A = 0.5  # strip height = L/n = 0.5 mm, unit thickness
    q = 0.8 * units.STEFAN_BOLTZMANN * ((500 + 273.0) ** 4 - (21 + 273.0) ** 4)
    rate_expected = -q * A / (rho * c * V)
    Tq0 = fem.interp_to_points(m, st.T)
    Tq1 = fem.interp_to_points(m, T)
    rate = float(((Tq1 - Tq0) * geo.wdet).sum()) / V / dt
    assert rate == pytest.approx(rate_expected, rel=1e-6)


def test_richardson_first_order_in_dt():
    """Backward Euler: halving dt halves the step error (slope ~ 1)."""
    L = 4.0
    m = meshmod.generate_strip_mesh(L, 40)
    region = constant_property_region()
    kappa = 0.045 / (7.87e-6 * 450.0)
    regions = regions_of(region)
    faces = np.concatenate([m.node_sets["charging_surface"],
                            m.node_sets["exit_surface"]])
    prob = thermal.HeatProblem(m, regions)
    t_end = 0.05 * L ** 2 / kappa

    def run(n_steps):
        st = statemod.new_state(m, T0=0.0)
        dt = t_end / n_steps
        for _ in range(n_steps):
            T, _ = prob.step(st, [], dt, prescribed=[(faces, 1.0)])
            st.T = T
        return st.T

    T1 = run(8)
    T2 = run(16)
    T4 = run(32)
    e1 = np.linalg.norm(T1 - T4)
    e2 = np.linalg.norm(T2 - T4)
    slope = np.log2(e1 / e2)
    assert 0.7 < slope < 1.6


def test_peak_temperature_monotone():
    m = meshmod.generate_strip_mesh(1.0, 5)
    st = statemod.new_state(m, T0=20.0)
    regions = regions_of(constant_property_region())
    faces = m.node_sets["charging_surface"]
    peaks = [st.peak_T.copy()]
    for Tb in (100.0, 400.0, 200.0, 50.0):
        out, _ = thermal.solve_heat_step(m, st, regions, [], dt=5.0,
                                         prescribed=[(faces, Tb)])
        st = out
        assert np.all(st.peak_T >= peaks[-1] - 1e-12)
        peaks.append(st.peak_T.copy())
