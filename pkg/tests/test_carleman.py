import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mhd_carleman.carleman import (REGULAR_POWERS, HypothesisError, MHDInstance, SweepResult,
                                   chi_r_norm, chi_s_norm, elliptic_carleman_check, geometric_s_grid,
                                   grad_xt_sq, parabolic_carleman_check, parabolic_log_factors,
                                   rhs_budget_regular, rhs_budget_singular, sweep_theorem, trace_norm_sq)
from mhd_carleman.fields import CoefficientSet
from mhd_carleman.geometry import FACES, SpaceTimeMask, SubBoundary, build_box_domain, q_epsilon
from mhd_carleman.instances import elliptic_instance, parabolic_instance
from mhd_carleman.mhd_solver import State, Trajectory, extract_traces, solve_forward
from mhd_carleman.norms import boundary_h_half_norm_sq, face_sq
from mhd_carleman.weights import build_d, build_l, regular_weight, singular_weight


def random_traj(dom, rng):
    n = dom.n
    U = [rng.standard_normal((dom.nt + 1,) + tuple(n[b] + (b == c) for b in range(3))) for c in range(3)]
    P = rng.standard_normal((dom.nt + 1,) + tuple(n))
    H = rng.standard_normal((dom.nt + 1, 3) + tuple(n))
    return Trajectory(dom, U, P, H)


def affine_d(dom):
    return build_d(dom, SubBoundary.whole(dom), "whole_boundary_affine")


# --------------------------------------------------------------------------
# brute-force quadrature on the toy grid, written with explicit loops


def _cell_velocity(traj, k, i, j, m):
    u = traj.u
    return np.array([0.5 * (u[0][k, i, j, m] + u[0][k, i + 1, j, m]),
                     0.5 * (u[1][k, i, j, m] + u[1][k, i, j + 1, m]),
                     0.5 * (u[2][k, i, j, m] + u[2][k, i, j, m + 1])])


def _brute_terms(get, dom, k, i, j, m):
    """|d_t|^2 + sum |d_i d_j|^2, |grad|^2 and |value|^2 of a (vector) cell field at one point."""
    h, dt = dom.h, dom.dt
    at = (get(k + 1, i, j, m) - get(k - 1, i, j, m)) / (2 * dt)
    e = np.eye(3, dtype=int)
    second = 0.0
    for a in range(3):
        for b in range(3):
            if a == b:
                p, q = e[a], e[a]
                v = (get(k, *(np.array([i, j, m]) + p)) - 2 * get(k, i, j, m)
                     + get(k, *(np.array([i, j, m]) - p))) / h[a] ** 2
            else:
                p, q = e[a], e[b]
                c = np.array([i, j, m])
                v = (get(k, *(c + p + q)) - get(k, *(c + p - q)) - get(k, *(c - p + q))
                     + get(k, *(c - p - q))) / (4 * h[a] * h[b])
            second += np.sum(v ** 2)
    grad = 0.0
    for a in range(3):
        c = np.array([i, j, m])
        grad += np.sum(((get(k, *(c + e[a])) - get(k, *(c - e[a]))) / (2 * h[a])) ** 2)
    return np.sum(at ** 2) + second, grad, np.sum(get(k, i, j, m) ** 2)


def brute_chi(traj, weight_fn, powers, s):
    """Sum over interior times and eroded cells of weight * s-polynomial * integrand."""
    dom = traj.domain
    n = dom.n
    vol = dom.cell_volume * dom.dt
    P = traj.p - traj.p.mean(axis=(1, 2, 3), keepdims=True)
    total = 0.0
    for k in range(1, dom.nt):
        for i, j, m in itertools.product(*(range(1, nn - 1) for nn in n)):
            ew, sphi = weight_fn(k, i, j, m)
            u3 = _brute_terms(lambda kk, a, b, c: _cell_velocity(traj, kk, a, b, c), dom, k, i, j, m)
            H3 = _brute_terms(lambda kk, a, b, c: traj.H[kk, :, a, b, c], dom, k, i, j, m)
            p3 = _brute_terms(lambda kk, a, b, c: P[kk, a, b, c], dom, k, i, j, m)
            vals = {"u_dt_d2": u3[0], "u_grad": u3[1], "u": u3[2], "H_dt_d2": H3[0], "H_grad": H3[1],
                    "H": H3[2], "p_grad": p3[1], "p": p3[2]}
            for name, v in vals.items():
                total += v * ew * sphi ** powers[name] * vol
    return total


def test_chi_s_toy_brute_force(toy, rng):
    traj = random_traj(toy, rng)
    d = affine_d(toy)
    lam, s = 1.0, 2.0
    prof = build_l(1.0, 0.5)
    w = singular_weight(d, prof, lam)
    t = toy.times()
    X, Y, Z = toy.cell_centers()

    def weight(k, i, j, m):
        dv = Z[i, j, m] + 1.0
        lt = float(prof(t[k]))
        alpha = (np.exp(lam * dv) - np.exp(2 * lam * 2.0)) / lt
        return np.exp(2 * s * alpha), s * np.exp(lam * dv) / lt

    powers = {"u_dt_d2": -2, "u_grad": 0, "u": 2, "p_grad": -1, "p": 1, "H_dt_d2": -2, "H_grad": 0, "H": 2}
    ref = brute_chi(traj, weight, powers, s)
    got = chi_s_norm(traj, w, s).actual()
    assert got == pytest.approx(ref, rel=1e-12)


def test_chi_r_toy_brute_force(toy, rng):
    traj = random_traj(toy, rng)
    d = affine_d(toy)
    lam, s, beta = 1.5, 0.7, 3.0
    w = regular_weight(d, lam, beta=beta, t0=0.5, T=1.0)
    t = toy.times()
    X, Y, Z = toy.cell_centers()

    def weight(k, i, j, m):
        phi = np.exp(lam * (Z[i, j, m] + 1.0 - beta * (t[k] - 0.5) ** 2))
        return np.exp(2 * s * phi), s

    ref = brute_chi(traj, weight, REGULAR_POWERS, s)
    got = chi_r_norm(traj, w, s).actual()
    assert got == pytest.approx(ref, rel=1e-12)


def test_rhs_toy_brute_force(toy, rng):
    d = affine_d(toy)
    lam, s = 1.0, 3.0
    prof = build_l(1.0, 0.5)
    w = singular_weight(d, prof, lam)
    F = rng.standard_normal((5, 3, 4, 4, 4))
    G = rng.standard_normal((5, 3, 4, 4, 4))
    X, Y, Z = toy.cell_centers()
    t = toy.times()
    ref = 0.0
    for k in range(1, 4):
        for i, j, m in itertools.product(range(1, 3), repeat=3):
            alpha = (np.exp(lam * (Z[i, j, m] + 1)) - np.exp(4 * lam)) / float(prof(t[k]))
            ref += (np.sum(F[k, :, i, j, m] ** 2) + np.sum(G[k, :, i, j, m] ** 2)) * np.exp(2 * s * alpha)
    ref *= toy.cell_volume * toy.dt
    got = rhs_budget_singular(F, G, None, w, s)
    assert got.interior.actual() == pytest.approx(ref, rel=1e-12)
    assert got.prefactor_exponent == -1.0 and got.trace_norms == 0.0


def test_regular_U_term(toy, rng):
    d = affine_d(toy)
    w = regular_weight(d, 1.0, t0=0.5, T=1.0)
    s = 1.3
    U = rng.standard_normal((5, 4, 4, 4))
    zero = np.zeros((5, 3, 4, 4, 4))
    h, dt = toy.h, toy.dt
    t = toy.times()
    X, Y, Z = toy.cell_centers()
    ref = 0.0
    for k in range(1, 4):
        for i, j, m in itertools.product(range(1, 3), repeat=3):
            g2 = ((U[k + 1, i, j, m] - U[k - 1, i, j, m]) / (2 * dt)) ** 2
            g2 += ((U[k, i + 1, j, m] - U[k, i - 1, j, m]) / (2 * h[0])) ** 2
            g2 += ((U[k, i, j + 1, m] - U[k, i, j - 1, m]) / (2 * h[1])) ** 2
            g2 += ((U[k, i, j, m + 1] - U[k, i, j, m - 1]) / (2 * h[2])) ** 2
            phi = np.exp(Z[i, j, m] + 1 - w.beta * (t[k] - 0.5) ** 2)
            ref += g2 * np.exp(2 * s * phi)
    ref *= toy.cell_volume * dt
    b = rhs_budget_regular(zero, zero, U, None, w, s)
    assert b.interior.actual("U") == pytest.approx(ref, rel=1e-12)
    assert b.interior.actual("F") == 0.0
    assert rhs_budget_regular(zero, zero, None, None, w, s).interior.total == 0.0
    assert np.all(grad_xt_sq(np.zeros_like(U), toy) == 0)


def test_zero_bc_trace_norms(dom8, coeffs, source, rng):
    traj = solve_forward(State.zeros(dom8), coeffs, source, 1.0, 32, dom8, f=rng.standard_normal(dom8.n))
    tr = extract_traces(traj)
    w = dom8.time_weights()
    ref = 0.0
    for f in FACES:
        for name in ("dn_u", "dn_H"):
            ref += float(np.sum(w * face_sq(tr.values[name][f], f, dom8, "L2")))
    ref += boundary_h_half_norm_sq({f: tr.values["p"][f] for f in FACES}, dom8)
    assert trace_norm_sq(tr) == pytest.approx(ref, rel=1e-13)


# --------------------------------------------------------------------------
# properties of the functionals


def test_zero_trajectory(toy):
    traj = random_traj(toy, np.random.default_rng(0))
    for a in traj.u:
        a[:] = 0
    traj.p[:] = 0
    traj.H[:] = 0
    d = affine_d(toy)
    assert chi_s_norm(traj, singular_weight(d, build_l(1.0, 0.5), 1.0), 4.0).total == 0.0
    assert chi_r_norm(traj, regular_weight(d, 1.0), 4.0).total == 0.0


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 31 - 1), st.floats(0.01, 100.0), st.sampled_from([4.0, 16.0, 64.0]))
def test_quadratic_homogeneity(seed, c, s):
    dom = build_box_domain((1, 1, 1), (4, 4, 4), 1.0, 4)
    rng = np.random.default_rng(seed)
    traj = random_traj(dom, rng)
    scaled = Trajectory(dom, [c * a for a in traj.u], c * traj.p, c * traj.H)
    d = affine_d(dom)
    sw = singular_weight(d, build_l(1.0, 0.5), 2.0)
    rw = regular_weight(d, 2.0)
    for fn, w in ((chi_s_norm, sw), (chi_r_norm, rw)):
        a, b = fn(traj, w, s), fn(scaled, w, s)
        assert b.log_scale == a.log_scale
        assert b.total / a.total == pytest.approx(c * c, rel=1e-12)


def test_gauge_invariance(toy, rng):
    traj = random_traj(toy, rng)
    shifted = Trajectory(toy, traj.u, traj.p + 3.7, traj.H)
    w = regular_weight(affine_d(toy), 1.0)
    a, b = chi_r_norm(traj, w, 8.0), chi_r_norm(shifted, w, 8.0)
    for k in ("p", "p_grad"):
        assert b.terms[k] == pytest.approx(a.terms[k], rel=1e-12)


def test_mask_additivity(dom8, rng):
    traj = random_traj(build_box_domain((1, 1, 1), (6, 6, 6), 1.0, 8), rng)
    dom = traj.domain
    w = regular_weight(affine_d(dom), 2.0)
    q2 = q_epsilon(dom, w.grid_psi(), 2 * 0.3)
    rest = SpaceTimeMask(dom, ~q2.mask, 0.0)
    for s in (4.0, 64.0):
        whole = chi_r_norm(traj, w, s)
        a, b = chi_r_norm(traj, w, s, mask=q2), chi_r_norm(traj, w, s, mask=rest)
        assert np.logaddexp(a.log_total, b.log_total) == pytest.approx(whole.log_total, abs=1e-13)


def test_s_cubed_on_H_term(toy, rng):
    traj = random_traj(toy, rng)
    w = regular_weight(affine_d(toy), 1.0)
    one = np.zeros((toy.nt + 1,) + toy.shape, bool)
    one[2, 1, 2, 1] = True
    m = SpaceTimeMask(toy, one, 0.0)
    s = 3.0
    phi = float(w.grid_phi()[2, 1, 2, 1])
    a, b = chi_r_norm(traj, w, s, mask=m), chi_r_norm(traj, w, 2 * s, mask=m)
    # freeze the exponential: remove e^{2 s phi} at each s
    la = a.log_term("H") - 2 * s * phi
    lb = b.log_term("H") - 4 * s * phi
    assert lb - la == pytest.approx(np.log(8.0), abs=1e-12)


def test_logs_finite_over_sweep(toy, rng):
    traj = random_traj(toy, rng)
    d = affine_d(toy)
    sw = singular_weight(d, build_l(1.0, 0.5), 4.0)
    rw = regular_weight(d, 4.0)
    for s in geometric_s_grid(4, 64, 12):
        for br in (chi_s_norm(traj, sw, s), chi_r_norm(traj, rw, s)):
            assert np.isfinite(br.log_total)
            assert all(np.isfinite(v) and v >= 0 for v in br.terms.values())


def test_singular_interior_rhs_monotone(toy, rng):
    d = affine_d(toy)
    w = singular_weight(d, build_l(1.0, 0.5), 1.0)
    F = rng.standard_normal((5, 3, 4, 4, 4))
    logs = [rhs_budget_singular(F, F, None, w, s).interior.log_total for s in geometric_s_grid()]
    assert np.all(np.diff(logs) <= 0)


# --------------------------------------------------------------------------
# sweeps


def _zero_instance(dom):
    traj = solve_forward(State.zeros(dom), CoefficientSet(), None, dom.T, dom.nt, dom)
    z = np.zeros((dom.nt + 1, 3) + dom.shape)
    return MHDInstance(traj, z, z, extract_traces(traj))


def test_degenerate_sweep(toy):
    inst = _zero_instance(toy)
    d = affine_d(toy)
    for kind in ("singular", "regular"):
        res = sweep_theorem(kind, inst, geometric_s_grid(), 1.0, d)
        assert res.degenerate and not res.bounded
        assert np.all(np.isnan(res.log_ratio()))


def test_regular_requires_vanishing_ends(toy, rng):
    traj = random_traj(toy, rng)
    z = np.zeros((5, 3, 4, 4, 4))
    inst = MHDInstance(traj, z, z, _zero_instance(toy).traces)
    with pytest.raises(HypothesisError):
        sweep_theorem("regular", inst, geometric_s_grid(), 1.0, affine_d(toy))


def test_singular_requires_U_zero(toy):
    inst = _zero_instance(toy)
    inst.U = np.ones((5,) + toy.shape)
    with pytest.raises(HypothesisError):
        sweep_theorem("singular", inst, geometric_s_grid(), 1.0, affine_d(toy))


def test_sweep_result_ordering():
    with pytest.raises(ValueError):
        SweepResult("x", 1.0, [4.0, 2.0], np.zeros(2), {}, np.zeros(2), 0.0, 0.0)


def test_growth_factor_log_space():
    s = geometric_s_grid()
    lhs = np.log(s)  # ratio grows like s
    res = SweepResult("x", 1.0, s, lhs, {}, np.zeros_like(s), 0.0, 0.0)
    assert res.growth_factor() == pytest.approx(s[-1] / s[len(s) // 2], rel=1e-12)
    flat = SweepResult("x", 1.0, s, np.zeros_like(s), {}, np.zeros_like(s), 0.0, 0.0)
    assert flat.growth_factor() == 1.0 and flat.bounded


# --------------------------------------------------------------------------
# elliptic and parabolic


@pytest.fixture(scope="module")
def slab():
    # the weight layer near z = 1 is thin, so z needs many more cells than x and y
    dom = build_box_domain((1.0, 1.0, 1.0), (8, 8, 256), 1.0, 4)
    g = SubBoundary.from_faces(dom, [f for f in FACES if f != "z_min"])
    return dom, build_d(dom, g, "face_linear")


def test_elliptic_zero_and_scaling(slab):
    dom, d = slab
    prob = elliptic_instance(dom, d, 0)
    s = geometric_s_grid()
    res = elliptic_carleman_check(prob, 2.0, s)
    assert not res.degenerate and np.all(np.isfinite(res.log_ratio()))
    prob.y, prob.grad_y, prob.f0, prob.f = 3 * prob.y, 3 * prob.grad_y, 3 * prob.f0, 3 * prob.f
    scaled = elliptic_carleman_check(prob, 2.0, s)
    np.testing.assert_allclose(scaled.log_ratio(), res.log_ratio(), atol=1e-12)
    for a in (prob.y, prob.grad_y, prob.f0, prob.f):
        a[:] = 0
    assert elliptic_carleman_check(prob, 2.0, s).degenerate


def test_elliptic_weights_brute_force():
    dom = build_box_domain((1.0, 1.0, 1.0), (4, 4, 4), 1.0, 4)
    d = affine_d(dom)
    prob = elliptic_instance(dom, d, 3)
    lam, s = 2.0, 5.0
    res = elliptic_carleman_check(prob, lam, [s])
    dv = prob.d_values
    e = np.exp(2 * s * np.exp(lam * dv))
    lhs = np.sum((np.sum(prob.grad_y ** 2, axis=0) + (s * lam) ** 2 * np.exp(2 * lam * dv) * prob.y ** 2) * e)
    rhs = np.sum((np.exp(-lam * dv) / (s * lam ** 2) * prob.f0 ** 2
                  + s * np.exp(lam * dv) * np.sum(prob.f ** 2, axis=0)) * e)
    assert res.log_ratio()[0] == pytest.approx(np.log(lhs / rhs), abs=1e-12)


def test_elliptic_rejects_boundary(slab):
    dom, d = slab
    prob = elliptic_instance(dom, d, 1)
    prob.boundary_max = 1e-3
    with pytest.raises(HypothesisError):
        elliptic_carleman_check(prob, 2.0, geometric_s_grid())


def test_elliptic_bounded_sample(slab):
    dom, d = slab
    res = elliptic_carleman_check(elliptic_instance(dom, d, 5), 2.0, geometric_s_grid())
    assert res.growth_factor() <= 1.2


def test_parabolic_tau_factor():
    rng = np.random.default_rng(2)
    logphi = rng.standard_normal((3, 2, 2, 2))
    s, lam = 7.0, 2.0
    f0 = parabolic_log_factors("regular", s, lam, logphi, 0)
    f1 = parabolic_log_factors("regular", s, lam, logphi, 1)
    for k in ("dt_d2", "grad", "value", "f"):
        np.testing.assert_allclose(f1[k] - f0[k], np.log(s * lam) + logphi, atol=1e-12)


def test_parabolic_zero_and_rejects():
    dom = build_box_domain((1.0, 1.0, 1.0), (6, 6, 6), 1.0, 12)
    d = affine_d(dom)
    prob = parabolic_instance(dom, d, 0, time_bump=False)
    with pytest.raises(HypothesisError):
        parabolic_carleman_check("regular", prob, 1.0, geometric_s_grid())
    prob.y[:] = 0
    prob.f[:] = 0
    for f in FACES:
        prob.wall_y[f][:] = 0
        prob.wall_dn[f][:] = 0
    assert parabolic_carleman_check("singular", prob, 1.0, geometric_s_grid()).degenerate


def test_parabolic_sweeps_run():
    dom = build_box_domain((1.0, 1.0, 1.0), (8, 8, 8), 1.0, 24)
    d = affine_d(dom)
    prob = parabolic_instance(dom, d, 4)
    s = geometric_s_grid()
    sing = parabolic_carleman_check("singular", prob, 1.0, s)
    assert sing.growth_factor() <= 1.2
    for tau in (0, 1):
        reg = parabolic_carleman_check("regular", prob, 1.0, s, tau=tau)
        assert reg.meta["fit_ok"] and reg.growth_factor() <= 1.2
