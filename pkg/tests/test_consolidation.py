import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from hipid import consolidation as C
from hipid.model import response

GEOM = C.OedometerGeometry(H=1.0, E_oed=50.0, v0=0.02)
CUBIC = C.InitialCondition(1.0, -2.0, 1.5)


def bundle(ic=CUBIC, c=1.0, geom=GEOM, K=200):
    return C.ConsolidationParams(geom, ic, c=c, sigma_inf=1.0), C.fourier_coefficients(ic, geom.H, K=K)


def test_time_factor():
    assert C.time_factor(2.0, 8.0, 4.0) == 1.0
    assert C.time_factor(2.0, 8.0, 4.0, "OCT") == 0.25
    assert C.time_factor(2.0, 32.0, 4.0, "OCT") == C.time_factor(2.0, 8.0, 4.0)
    with pytest.raises(ValueError):
        C.time_factor(0.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        C.time_factor(1.0, 1.0, -1.0)


def test_sigma_infinity():
    assert C.sigma_infinity(C.OedometerGeometry(1.0, 1000.0, v0=0.01)) == pytest.approx(10.0)
    assert C.sigma_infinity(C.OedometerGeometry(1.0, 1000.0, v0=0.0)) == 0.0
    assert C.sigma_infinity(C.OedometerGeometry(2.0, 1000.0, v0=0.01)) == pytest.approx(5.0)
    with pytest.raises(ValueError):
        C.sigma_infinity(C.OedometerGeometry(1.0, 1000.0))


def test_linear_ic_coefficients():
    s = C.fourier_coefficients(C.InitialCondition(C=1.0), 1.0, K=5)
    assert s.coefficients[0] == pytest.approx(-4.0 / np.pi**2, abs=1e-15)
    assert s.coefficients[1] == pytest.approx(0.0, abs=1e-15)
    assert s.coefficients[2] == pytest.approx(-4.0 / (9.0 * np.pi**2), abs=1e-15)
    assert not np.any(C.fourier_coefficients(C.InitialCondition(), 1.0, K=5).coefficients)
    with pytest.raises(ValueError):
        C.fourier_coefficients(CUBIC, 1.0, K=0)


@pytest.mark.parametrize("H", [1.0, 0.01, 2.5])
def test_coefficients_match_quadrature(H):
    ic = C.InitialCondition(3.0, -1.0, 0.5)
    ort = C.fourier_coefficients(ic, H, "ORT", K=8)
    oct_ = C.fourier_coefficients(ic, H, "OCT", K=8)
    for k in range(1, 9):
        a = 2.0 / H * quad(lambda y: ic(y) * np.cos(k * np.pi * y / H), 0, H, limit=200)[0]
        b = 2.0 / H * quad(lambda y: ic(y) * np.sin((2 * k - 1) * np.pi * y / (2 * H)), 0, H, limit=200)[0]
        scale = 1.0 + abs(ic(H))
        assert ort.coefficients[k - 1] == pytest.approx(a, abs=1e-10 * scale)
        assert oct_.coefficients[k - 1] == pytest.approx(b, abs=1e-10 * scale)
    # coefficient relations between pressure and displacement series
    k = np.arange(1, 9)
    np.testing.assert_allclose(ort.coefficients, ort.displacement * k * np.pi / H, rtol=1e-14)
    np.testing.assert_allclose(oct_.coefficients, -oct_.displacement * (2 * k - 1) * np.pi / (2 * H), rtol=1e-14)


def test_reconstruction_of_initial_condition():
    p, s = bundle()
    y = np.linspace(0.05, 0.95, 19)
    assert np.abs(C.pore_pressure(p, s, 0.0, y) - CUBIC(y)).max() <= 1e-3
    lin = C.InitialCondition(C=1.0)
    p, s = bundle(lin)
    assert C.pore_pressure(p, s, 0.0, 0.5) == pytest.approx(0.5, abs=1e-3)
    # partial sums at y = 1 approach u(0, 1) = 1 like the odd series of 8 / (k pi)^2
    for K in (10, 100, 1000):
        partial = -np.sum(C.fourier_coefficients(lin, 1.0, K=K).coefficients * 2.0)
        odd = np.arange(1, K + 1, 2)
        assert partial == pytest.approx(np.sum(8.0 / (odd * np.pi) ** 2), rel=1e-12)


def test_mean_pore_pressure():
    p, s = bundle(C.InitialCondition(C=1.0))
    assert C.mean_pore_pressure(p, s, 0.0) == pytest.approx(0.5, abs=1e-15)
    assert C.mean_pore_pressure(p, s, 1e-9) == pytest.approx(0.5, abs=1e-4)
    p0, s0 = bundle(C.InitialCondition())
    assert C.mean_pore_pressure(p0, s0, 0.1) == 0.0
    p, s = bundle()
    for t in (0.001, 0.01, 0.1, 0.5):
        num = quad(lambda y: C.pore_pressure(p, s, t, y), 0, 1, limit=200)[0]
        assert C.mean_pore_pressure(p, s, t) == pytest.approx(num, abs=1e-6)


def test_boundary_conditions():
    p, s = bundle()
    rng = np.random.default_rng(0)
    scale = np.abs(CUBIC(np.linspace(0, 1, 101))).max()
    d = 1e-4
    for t in 10.0 ** rng.uniform(-3, 0, 20):
        assert abs(C.pore_pressure(p, s, t, 0.0)) <= 1e-6 * scale
        u = C.pore_pressure(p, s, t, np.array([1.0, 1.0 - d, 1.0 - 2 * d]))
        assert abs((3 * u[0] - 4 * u[1] + u[2]) / (2 * d)) <= 1e-6 * scale
        assert abs(C.displacement_field(p, s, t, 1.0)) <= 1e-6 * GEOM.v0
        assert C.displacement_field(p, s, t, 0.0) == pytest.approx(GEOM.v0, rel=1e-6)


def test_field_limits():
    p, s = bundle()
    assert C.pore_pressure(p, s, 50.0, 0.6) == pytest.approx(0.0, abs=1e-12)
    assert C.displacement_field(p, s, 50.0, 0.0) == pytest.approx(GEOM.v0, abs=1e-15)
    with pytest.raises(ValueError):
        C.pore_pressure(p, s, 0.1, 1.5)
    with pytest.raises(ValueError):
        C.displacement_field(p, s, 0.1, -0.1)


def _pde_residuals(p, s, d, t=0.03, y=np.array([0.2, 0.45, 0.7, 0.9])):
    v = lambda tt, yy: C.displacement_field(p, s, tt, yy)
    u = lambda tt, yy: C.pore_pressure(p, s, tt, yy)
    eps_y = (v(t, y + d) - 2 * v(t, y) + v(t, y - d)) / d**2
    u_y = (u(t, y + d) - u(t, y - d)) / (2 * d)
    dt = d * s.H**2 / p.c
    eps_t = (v(t + dt, y + d) - v(t + dt, y - d) - v(t - dt, y + d) + v(t - dt, y - d)) / (4 * d * dt)
    u_yy = (u(t, y + d) - 2 * u(t, y) + u(t, y - d)) / d**2
    E = p.geometry.E_oed
    return np.abs(E * eps_y - u_y).max(), np.abs(eps_t - p.c / E * u_yy).max()


def test_pde_residual_second_order():
    p, s = bundle()
    levels = [_pde_residuals(p, s, d) for d in (4e-3, 2e-3, 1e-3)]
    for j in range(2):
        r = [lv[j] for lv in levels]
        orders = np.log2(np.array(r[:-1]) / np.array(r[1:]))
        assert np.all(orders >= 1.9), orders


def test_strain_fields():
    p, s = bundle(C.InitialCondition(C=1.0))
    t = 0.02
    eps = C.strain_field(p, s, t, np.array([0.02, 0.98]))
    assert eps[0] < 0 < eps[1]
    # zero where the pressure equals its mean
    y = np.linspace(0, 1, 2001)
    diff = C.pore_pressure(p, s, t, y) - C.mean_pore_pressure(p, s, t)
    k = np.flatnonzero(np.diff(np.sign(diff)))[0]
    y0 = y[k] - diff[k] * (y[k + 1] - y[k]) / (diff[k + 1] - diff[k])
    assert abs(C.strain_field(p, s, t, y0)) <= 1e-6
    g = C.OedometerGeometry(1.0, 50.0, sigma0=10.0)
    po = C.ConsolidationParams(g, CUBIC, c=1.0, sigma_inf=0.0)
    so = C.fourier_coefficients(CUBIC, 1.0, "OCT", K=200)
    yy = np.linspace(0, 1, 11)
    np.testing.assert_allclose(C.strain_field(po, so, 0.05, yy, "OCT") * 50.0,
                               C.pore_pressure(po, so, 0.05, yy, "OCT"), rtol=1e-14)


def test_relaxation_term():
    r = C.RelaxationParams(t1=1.0, t3=0.0, sk=2.0)
    assert C.relaxation_term(r, 0.0, 9.0) == pytest.approx(2.0)
    r = C.RelaxationParams(s=0.1, t1=2.0, t3=3.0)
    assert C.relaxation_term(r, 100.0, 3.0) == 0.0
    assert C.relaxation_term(r, 100.0, 1.0) == 0.0
    with pytest.raises(ValueError):
        C.RelaxationParams(s=1.0, t1=1.0, t3=9.0)
    rng = np.random.default_rng(1)
    for t in rng.uniform(0.1, 1e4, 20):
        h = C.relaxation_term(C.RelaxationParams(s=0.03, t1=5.0, t3=0.0), 250.0, t)
        k = C.relaxation_term(C.RelaxationParams(t1=5.0, t3=0.0, sk=0.03 * 250.0), 0.0, t)
        assert h == pytest.approx(k, rel=1e-14)


def test_total_stress_identities():
    g = C.OedometerGeometry(H=0.01, E_oed=5000.0, v0=1e-4)
    ic = C.InitialCondition(0.0, 2e5, 3000.0)
    p = C.ConsolidationParams(g, ic, c=1e-8)
    s = C.fourier_coefficients(ic, g.H)
    t = np.geomspace(1e-2, 1e6, 50)
    assert p.sigma_inf == pytest.approx(50.0)
    np.testing.assert_allclose(C.total_stress(p, s, t) - p.sigma_inf, C.mean_pore_pressure(p, s, t), rtol=0, atol=1e-12)
    assert C.total_stress(p, s, 0.0) == pytest.approx(p.sigma_inf + p.D, rel=1e-14)
    assert C.total_stress(p, s, 1e9) == pytest.approx(p.sigma_inf, abs=1e-12)
    # two independent paths: the series and the model basis
    m = C.build_model("HC", g)
    u = response(m, m.params({"A": 0.0, "B": 2e5, "C": 3000.0, "sigma_inf": 50.0, "c": 1e-8}), t)
    np.testing.assert_allclose(u, C.total_stress(p, s, t), rtol=1e-12)


def test_t_invariance():
    t = np.geomspace(1e-1, 1e5, 40)
    m1 = C.build_model("HC", C.OedometerGeometry(0.01, 5000.0))
    m2 = C.build_model("HC", C.OedometerGeometry(0.02, 5000.0))
    a, b, c = 1e6, 2e5, 3000.0
    u1 = response(m1, [a, b, c, 100.0, 1e-8], t)
    # same initial shape in y / H on the doubled sample
    u2 = response(m2, [a / 8, b / 4, c / 2, 100.0, 4e-8], t)
    np.testing.assert_allclose(u1, u2, rtol=1e-12)


def test_version_parameter_counts():
    g = C.OedometerGeometry(0.01, 5000.0)
    counts = {}
    for tag, fixed in (("H", {}), ("HCRT", {"t1": 10.0}), ("HCR", {"t1": 10.0}), ("HC", {})):
        m = C.build_model(tag, g, fixed)
        counts[tag] = (len(m.split.linear_indices), len(m.split.nonlinear_indices))
    assert counts == {"H": (4, 4), "HCRT": (5, 2), "HCR": (5, 1), "HC": (4, 1)}
    with pytest.raises(ValueError):
        C.build_model("HCR", g)
    with pytest.raises(ValueError):
        C.build_model("X", g)


@pytest.mark.parametrize("tag,fixed,nl", [
    ("HC", {}, [1e-8]),
    ("HCR", {"t1": 10.0}, [1e-8]),
    ("HCRT", {"t1": 10.0}, [1e-8, 5.0]),
    ("H", {}, [1e-8, 0.02, 5.0, 10.0]),
])
def test_versions_are_affine_in_linear_parameters(tag, fixed, nl):
    m = C.build_model(tag, C.OedometerGeometry(0.01, 5000.0), fixed)
    t = np.geomspace(1.0, 1e4, 15)
    base = np.array([1e5, 2e5, 3000.0, 100.0, 4.0][: len(m.split.linear_indices)] + nl)
    for i in m.split.linear_indices:
        p0, p1, p2 = base.copy(), base.copy(), base.copy()
        p0[i], p2[i] = 0.0, 2.0 * base[i]
        u0, u1, u2 = (response(m, p, t) for p in (p0, p1, p2))
        np.testing.assert_allclose(u2 - u1, u1 - u0, rtol=1e-9, atol=1e-9 * np.abs(u1).max())


def test_h_version_matches_relaxed_total_stress():
    g = C.OedometerGeometry(0.01, 5000.0)
    m = C.build_model("H", g)
    vals = {"A": 0.0, "B": 2e5, "C": 3000.0, "sigma_inf": 100.0, "c": 1e-8, "s": 0.02, "t3": 5.0, "t1": 10.0}
    p = C.params_from_vector("H", g, vals)
    s = C.fourier_coefficients(p.initial, g.H)
    t = np.geomspace(1.0, 1e4, 20)
    np.testing.assert_allclose(response(m, m.params(vals), t), C.total_stress(p, s, t, "H"), rtol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.floats(-1e6, 1e6), st.floats(-1e5, 1e5), st.floats(-1e3, 1e3), st.floats(1e-9, 1e-7))
def test_stress_transient_equals_mean_pressure(a, b, c, cc):
    g = C.OedometerGeometry(0.01, 5000.0)
    ic = C.InitialCondition(a, b, c)
    p = C.ConsolidationParams(g, ic, c=cc, sigma_inf=10.0)
    s = C.fourier_coefficients(ic, g.H)
    t = np.geomspace(0.1, 1e5, 12)
    np.testing.assert_allclose(C.total_stress(p, s, t) - 10.0, C.mean_pore_pressure(p, s, t),
                               rtol=0, atol=1e-12 * (1 + abs(p.D)))
