import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mhd_carleman.geometry import FACES, DomainConfigError, SubBoundary, build_box_domain, q_epsilon
from mhd_carleman.weights import (WeightConstructionError, WeightD, build_cutoffs, build_d, build_l,
                                  default_beta, interior_peak_d, regular_weight, singular_weight,
                                  smooth_ramp, time_cutoff, validate_d, weight_invariants)


@pytest.fixture(scope="module")
def unit():
    return build_box_domain((1, 1, 1), (8, 8, 8), 1.0, 32)


def no_zmin(dom):
    return SubBoundary.from_faces(dom, [f for f in FACES if f != "z_min"])


def test_whole_boundary_affine(unit):
    d = build_d(unit, SubBoundary.whole(unit), "whole_boundary_affine")
    assert d.sup_norm == 2.0
    X, Y, Z = unit.cell_centers()
    np.testing.assert_array_equal(d.values, Z + 1)
    rep = validate_d(d)
    assert rep.passed and rep.c_min == 1.0


def test_face_linear(unit):
    d = build_d(unit, no_zmin(unit), "face_linear")
    assert d.sup_norm == 1.0
    assert np.all(d.boundary_values["z_min"] == 0.0)
    rep = validate_d(d)
    assert rep.positive and rep.nondegenerate and rep.vanishes_off_gamma
    assert rep.c_min == 1.0 and rep.max_boundary_violation == 0.0


@pytest.mark.parametrize("face", ["x_max", "y_min", "z_max"])
def test_face_linear_other_faces(unit, face):
    g = SubBoundary.from_faces(unit, [f for f in FACES if f != face])
    d = build_d(unit, g, "face_linear")
    assert validate_d(d).passed
    assert np.all(d.boundary_values[face] == 0.0)


def test_incompatible_kinds(unit):
    with pytest.raises(WeightConstructionError, match="exactly one unobserved face"):
        build_d(unit, SubBoundary.from_faces(unit, ["z_min"]), "face_linear")
    with pytest.raises(WeightConstructionError, match="d = 0 off"):
        build_d(unit, no_zmin(unit), "whole_boundary_affine")
    with pytest.raises(WeightConstructionError):
        build_d(unit, SubBoundary.whole(unit), "spiral")


def test_validate_critical_point(unit):
    d = WeightD.from_function(unit, SubBoundary.whole(unit), lambda X, Y, Z: Z * (1 - Z))
    rep = validate_d(d)
    assert not rep.passed
    assert not rep.nondegenerate and rep.critical_cells > 0


def test_validate_constant(unit):
    d = WeightD.from_function(unit, SubBoundary.whole(unit), lambda X, Y, Z: np.ones_like(X))
    rep = validate_d(d)
    assert not rep.nondegenerate and rep.c_min == 0.0


def test_interior_peak_fails(unit):
    rep = validate_d(interior_peak_d(unit))
    assert rep.positive and not rep.nondegenerate


# --------------------------------------------------------------------------
# temporal profile


def test_profile_examples():
    l = build_l(1.0, 0.5)
    assert l.delta == 0.5
    assert l(0.1) == pytest.approx(0.1, abs=1e-15)
    assert l(0.9) == pytest.approx(0.1, abs=1e-15)
    t = np.linspace(0, 1, 33)
    v = l(t)
    k = 16
    assert np.all(np.delete(v, k) < v[k])
    l2 = build_l(1.0, 0.25)
    assert l2.delta == 0.25
    assert l2(0.1) == pytest.approx(0.1, abs=1e-15)


@pytest.mark.parametrize("t0", [0.0, 1.0, -0.1, 1.5])
def test_profile_rejects(t0):
    with pytest.raises(DomainConfigError):
        build_l(1.0, t0)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.5, 4.0), st.floats(0.05, 0.95))
def test_profile_properties(T, frac):
    t0 = frac * T
    l = build_l(T, t0)
    t = np.linspace(0, T, 2001)
    v = l(t)
    assert v[0] == 0.0 and abs(v[-1]) < 1e-12
    assert np.all(v[1:-1] > 0)
    half = 0.5 * l.delta
    lin = t <= half
    np.testing.assert_allclose(v[lin], t[lin], atol=1e-14)
    lin = t >= T - half
    np.testing.assert_allclose(v[lin], T - t[lin], atol=1e-12)
    # unique maximum at t0: increasing before, decreasing after
    assert np.all(np.diff(v[t <= t0]) > 0)
    assert np.all(np.diff(v[t >= t0]) < 0)
    # value, slope and curvature are continuous across the piece joins: any
    # jump shrinks in proportion to the gap it is measured over
    for tj in (half, t0, T - half):
        for fn in (l, l.derivative, l.second_derivative):
            wide = abs(fn(tj - 1e-8) - fn(tj + 1e-8))
            narrow = abs(fn(tj - 1e-10) - fn(tj + 1e-10))
            assert narrow <= 0.05 * wide + 1e-9


def test_profile_derivative_matches_difference():
    l = build_l(1.0, 0.3)
    t = np.linspace(0.01, 0.99, 97)
    h = 1e-6
    np.testing.assert_allclose(l.derivative(t), (l(t + h) - l(t - h)) / (2 * h), atol=1e-6)
    np.testing.assert_allclose(l.second_derivative(t), (l.derivative(t + h) - l.derivative(t - h)) / (2 * h),
                               atol=1e-4)


# --------------------------------------------------------------------------
# singular weight


def test_phi0_example(unit):
    d = build_d(unit, no_zmin(unit), "face_linear")
    sw = singular_weight(d, build_l(1.0, 0.5), 1.0)
    t = 0.25  # on the linear piece, l = 0.25
    assert np.exp(sw.log_phi0(np.array(0.5), t)) == pytest.approx(np.exp(0.5) / 0.25, rel=1e-14)
    # hand check of the quoted value for l = 0.5
    assert np.exp(0.5) / 0.5 == pytest.approx(3.29744, abs=1e-5)


def test_singular_endpoints_and_sign(unit):
    d = build_d(unit, SubBoundary.whole(unit), "whole_boundary_affine")
    sw = singular_weight(d, build_l(1.0, 0.5), 2.0)
    a = sw.grid_alpha()
    assert np.all(np.isneginf(a[0])) and np.all(np.isneginf(a[-1]))
    assert np.all(a[1:-1] < 0)
    w = np.exp(2 * 16.0 * a)
    assert w[0].max() == 0.0 and w[-1].max() == 0.0
    # alpha increases with d at fixed t and peaks in time at t0
    k = unit.nearest_node(0.5)
    assert np.all(np.diff(a[5], axis=2) > 0)
    assert np.all(a <= a[k][None] + 1e-15)


def test_singular_rejects_lambda(unit):
    d = build_d(unit, SubBoundary.whole(unit), "whole_boundary_affine")
    with pytest.raises(DomainConfigError):
        singular_weight(d, build_l(1.0, 0.5), 0.0)


# --------------------------------------------------------------------------
# regular weight


def test_default_beta_examples():
    whole = build_box_domain((1, 1, 1), (4, 4, 4), 1.0, 4)
    d1 = build_d(whole, no_zmin(whole), "face_linear")
    d2 = build_d(whole, SubBoundary.whole(whole), "whole_boundary_affine")
    assert default_beta(d1, 0.5, 1.0) == 4.0
    assert default_beta(d2, 0.5, 1.0) == 8.0
    assert default_beta(d1, 0.25, 1.0) == 16.0


def test_regular_examples(unit):
    d = build_d(unit, no_zmin(unit), "face_linear")
    for lam in (1.0, 2.0, 4.0):
        w = regular_weight(d, lam, beta=4.0, t0=0.5, T=1.0)
        assert float(w.psi(np.array(1.0), 0.5)) == 1.0
        assert float(w.phi(np.array(1.0), 0.5)) == pytest.approx(np.exp(lam), rel=1e-15)
    w = regular_weight(d, 1.0, t0=0.5, T=1.0)
    np.testing.assert_array_equal(w.psi(d.values, 0.5), d.values)
    assert np.all(w.psi(d.values, 0.0) <= 0)
    psi = w.grid_psi()
    assert np.all(psi <= d.values[None])
    k = unit.nearest_node(0.5)
    assert np.all(psi[np.arange(psi.shape[0]) != k] < d.values[None])
    assert np.all(w.grid_phi() > 0)


def test_regular_rejects(unit):
    d = build_d(unit, no_zmin(unit), "face_linear")
    with pytest.raises(DomainConfigError):
        regular_weight(d, 1.0, beta=-1.0)
    with pytest.raises(DomainConfigError):
        regular_weight(d, -1.0)


# --------------------------------------------------------------------------
# cutoffs


def test_ramp_values():
    assert smooth_ramp(0.5) == 0.5
    assert smooth_ramp(1.5) == 1.0 and smooth_ramp(-0.5) == 0.0


def test_cutoff_examples(unit):
    d = build_d(unit, no_zmin(unit), "face_linear")
    w = regular_weight(d, 1.0, t0=0.5, T=1.0)
    eps = 0.1
    c = build_cutoffs(w, eps)
    psi = w.grid_psi()
    expected = smooth_ramp((psi - eps) / eps)
    np.testing.assert_array_equal(c.chi, expected)
    assert np.all(c.chi[psi >= 2 * eps] == 1.0)
    assert np.all(c.chi[psi <= eps] == 0.0)
    # hand examples through the same composition
    for level, val in [(2.5, 1.0), (0.5, 0.0), (1.5, 0.5)]:
        assert smooth_ramp((level * eps - eps) / eps) == pytest.approx(val, abs=1e-15)
    assert np.all((c.chi >= 0) & (c.chi <= 1))
    assert c.delta0 == pytest.approx(np.sqrt(eps / w.beta))


def test_cutoff_consistency(unit):
    d = build_d(unit, SubBoundary.whole(unit), "whole_boundary_affine")
    w = regular_weight(d, 2.0, t0=0.5, T=1.0)
    eps = 0.3
    c = build_cutoffs(w, eps)
    q1 = q_epsilon(unit, w.grid_psi(), eps).mask
    psi = w.grid_psi()
    closed2 = psi >= 2 * eps
    assert np.all(c.chi[~q1] == 0)
    assert np.all(c.chi[closed2] == 1)
    for deriv in (c.chi_t, c.chi_grad, c.chi_hess):
        assert np.all(deriv[..., closed2] == 0)
        assert np.all(deriv[..., ~q1] == 0)
    t = unit.times()
    near = np.abs(t - 0.5) <= c.delta0 / 2
    far = np.abs(t - 0.5) >= c.delta0
    assert np.all(c.chi0[near] == 1) and np.all(c.chi0[far] == 0)


def test_cutoff_chain_rule(unit):
    d = build_d(unit, SubBoundary.whole(unit), "whole_boundary_affine")
    w = regular_weight(d, 1.0, t0=0.5, T=1.0)
    eps = 0.3
    c = build_cutoffs(w, eps)
    # time derivative against a centred difference of the closed form
    t = unit.times()
    h = 1e-6
    X, Y, Z = unit.cell_centers()
    plus = smooth_ramp((w.psi(d.values, t + h) - eps) / eps)
    minus = smooth_ramp((w.psi(d.values, t - h) - eps) / eps)
    np.testing.assert_allclose(c.chi_t, (plus - minus) / (2 * h), atol=1e-5)
    tc = np.linspace(0, 1, 101)
    np.testing.assert_allclose(time_cutoff(tc, 0.5, 0.2, 1),
                               (time_cutoff(tc + h, 0.5, 0.2) - time_cutoff(tc - h, 0.5, 0.2)) / (2 * h),
                               atol=1e-5)


def test_cutoff_empty_warns(unit):
    d = build_d(unit, no_zmin(unit), "face_linear")
    w = regular_weight(d, 1.0, t0=0.5, T=1.0)
    with pytest.warns(UserWarning):
        c = build_cutoffs(w, 10.0)
    assert c.chi.max() == 0.0 and "warning" in c.meta
    with pytest.raises(DomainConfigError):
        build_cutoffs(w, 0.0)


# --------------------------------------------------------------------------
# invariant suite at small scale


@pytest.mark.parametrize("kind", ["whole_boundary_affine", "face_linear"])
@pytest.mark.parametrize("lam", [1.0, 2.0, 4.0])
@pytest.mark.parametrize("s", [4.0, 16.0, 64.0])
def test_invariant_suite(unit, kind, lam, s):
    g = SubBoundary.whole(unit) if kind == "whole_boundary_affine" else no_zmin(unit)
    d = build_d(unit, g, kind)
    inv = weight_invariants(unit, d, lam, s, 0.5, 0.05)
    assert all(inv.values()), inv


@settings(max_examples=25, deadline=None)
@given(st.integers(4, 10), st.integers(4, 40), st.floats(0.1, 0.9), st.floats(1.0, 4.0))
def test_regular_argmax(n, nt, frac, lam):
    dom = build_box_domain((1, 1, 1), (n, n, n), 1.0, nt)
    t0 = dom.times()[max(1, min(nt - 1, round(frac * nt)))]
    d = build_d(dom, no_zmin(dom), "face_linear")
    w = regular_weight(d, lam, t0=t0, T=1.0)
    phi = w.grid_phi()
    kt, *ix = np.unravel_index(int(np.argmax(phi)), phi.shape)
    assert kt == dom.nearest_node(t0)
    assert ix[2] == n - 1
