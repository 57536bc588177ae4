import numpy as np
import pytest
import scipy.sparse.linalg as spla
from hypothesis import given, settings, strategies as st

from mhd_carleman import grid_ops as g
from mhd_carleman.fields import SourceModel, VectorField
from mhd_carleman.geometry import FACES, DomainMismatchError, build_box_domain
from mhd_carleman.inverse import (APRIORI_TERMS, FULL_TERMS, PARTIAL_TERMS, InverseSetup, add_noise,
                                  adjoint_observation, apriori_bound, band_limited_field, check_R_assumption,
                                  conjugate_gradient, data_norm_full, data_norm_partial, fit_holder,
                                  forward_observation, l2, lipschitz_experiment, loglog_slope,
                                  observation_vector, reconstruct_f)


@pytest.fixture(scope="module")
def small():
    return build_box_domain((1.0, 1.0, 1.0), (4, 4, 4), 1.0, 8)


@pytest.fixture(scope="module")
def setup(small, coeffs):
    return InverseSetup(small, coeffs, SourceModel(t0=0.5), 0.5)


@pytest.fixture(scope="module")
def op(setup):
    return setup.operator()


def obs_of(f, setup):
    return forward_observation(f, setup, keep_trajectory=True)


# --------------------------------------------------------------------------
# forward map


def test_zero_source_gives_zero_data(setup, small):
    obs = forward_observation(np.zeros(small.shape), setup)
    assert obs.is_zero()
    assert data_norm_full(obs).value == 0.0


def test_point_source_is_seen(setup, small):
    f = np.zeros(small.shape)
    f[1, 2, 1] = 1.0
    obs = forward_observation(f, setup)
    assert not obs.is_zero()
    assert data_norm_full(obs).value > 0


def test_forward_linear(setup, small, rng):
    f1, f2 = rng.standard_normal(small.shape), rng.standard_normal(small.shape)
    a = forward_observation(f1, setup)
    b = forward_observation(f2, setup)
    c = forward_observation(2.0 * f1 - 0.5 * f2, setup)
    diff = c - a.scaled(2.0) - b.scaled(-0.5)
    ref = data_norm_full(c).value
    assert data_norm_full(diff).value <= 1e-12 * ref


def test_operator_matches_solver(setup, op, small, rng):
    f = rng.standard_normal(small.shape)
    y = observation_vector(forward_observation(f, setup), op)
    assert np.abs(y - op.forward(f)).max() <= 1e-13 * np.abs(y).max()


def test_shape_mismatch(setup):
    with pytest.raises(DomainMismatchError):
        forward_observation(np.zeros((3, 3, 3)), setup)


def test_vanishing_R_rejected(small, coeffs):
    src = SourceModel(R=VectorField(constant=(0.0, 0.0, 0.0)), t0=0.5)
    bad = InverseSetup(small, coeffs, src, 0.5)
    with pytest.raises(ValueError):
        forward_observation(np.ones(small.shape), bad)


# --------------------------------------------------------------------------
# adjoint and normal operator


def test_adjoint_of_zero(op, small):
    out = adjoint_observation(np.zeros(op.m), op)
    assert np.all(np.asarray(out) == 0)
    with pytest.raises(DomainMismatchError):
        adjoint_observation(np.zeros(op.m + 1), op)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_adjoint_identity(op, seed):
    rng = np.random.default_rng(seed)
    f = rng.standard_normal(op.domain.shape)
    r = rng.standard_normal(op.m)
    lhs = float(op.forward(f) @ r)
    rhs = float(np.ravel(op.adjoint(r)) @ f.ravel())
    assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(lhs))


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_normal_operator_positive(op, seed):
    f = np.random.default_rng(seed).standard_normal(op.domain.shape)
    q = float(np.ravel(op.adjoint(op.forward(f))) @ f.ravel())
    assert q == pytest.approx(float(op.forward(f) @ op.forward(f)), rel=1e-12)
    assert q > 0


# --------------------------------------------------------------------------
# reconstruction


def test_cg_matches_scipy():
    rng = np.random.default_rng(7)
    A = rng.standard_normal((40, 40))
    A = A @ A.T + 0.5 * np.eye(40)
    b = rng.standard_normal(40)
    x, it, hist, conv, stag = conjugate_gradient(lambda v: A @ v, b, tol=1e-12)
    ref, info = spla.cg(A, b, rtol=1e-12, maxiter=1000)
    assert conv and not stag and info == 0
    np.testing.assert_allclose(x, ref, rtol=1e-8, atol=1e-10)
    np.testing.assert_allclose(x, np.linalg.solve(A, b), rtol=1e-9)
    assert hist[-1] <= 1e-12


def test_cg_zero_rhs():
    x, it, hist, conv, stag = conjugate_gradient(lambda v: v, np.zeros(5))
    assert it == 0 and conv and np.all(x == 0)


def test_zero_data_reconstructs_zero(op):
    res = reconstruct_f(np.zeros(op.m), op)
    assert np.all(res.f == 0) and res.iterations == 0


def test_reconstruction_fits_data(setup, op, small):
    f = band_limited_field(small, 3, kmax=2)
    y = op.forward(f)
    res = reconstruct_f(forward_observation(f, setup), op, reg=1e-12, tol=1e-10)
    assert res.converged
    assert g.norm(op.forward(res.f) - y) <= 1e-4 * g.norm(y)


def test_regularization_shrinks(op, small):
    f = band_limited_field(small, 4, kmax=2)
    y = op.forward(f)
    norms = [l2(reconstruct_f(y, op, reg=r, tol=1e-9).f, small) for r in (1e-6, 1e-3, 1e0)]
    assert norms[0] >= norms[1] >= norms[2]
    with pytest.raises(ValueError):
        reconstruct_f(y, op, reg=-1.0)


def test_band_limited_unit_norm(small):
    f = band_limited_field(small, 11)
    assert l2(f, small) == pytest.approx(1.0, rel=1e-12)
    assert np.array_equal(f, band_limited_field(small, 11))


def test_noise_level():
    y = np.arange(1.0, 11.0)
    z = add_noise(y, 0.01, 0)
    assert np.linalg.norm(z - y) == pytest.approx(0.01 * np.linalg.norm(y), rel=1e-12)


# --------------------------------------------------------------------------
# R assumption


def test_R_constant_direction(small):
    chk = check_R_assumption(SourceModel(R=VectorField(constant=(1.0, 0.0, 0.0)), t0=0.5), 0.5, small)
    assert chk.ok and chk.c0 == pytest.approx(1.0)


def test_R_with_time_factor(small):
    # (t - t0) + 1 evaluated at t0 is 1
    src = SourceModel(R=VectorField(constant=(1.0, 0.0, 0.0)), t0=0.5, a1=1.0)
    chk = check_R_assumption(src, 0.5, small)
    assert chk.ok and chk.c0 == pytest.approx(1.0)
    # away from t0 the factor is 1 + (t - t0)
    assert check_R_assumption(src, 0.75, small).c0 == pytest.approx(1.25 ** 2)


def test_R_zero_cell(small):
    X, Y, Z = small.cell_centers()
    x0 = float(X[1, 0, 0])
    R = VectorField(constant=(-x0, 0.0, 0.0), matrix=((1.0, 0.0, 0.0), (0.0, 0.0, 0.0), (0.0, 0.0, 0.0)))
    src = SourceModel(R=R, t0=0.5)
    chk = check_R_assumption(src, 0.5, small)
    assert not chk.ok and chk.c0 == 0.0


# --------------------------------------------------------------------------
# data norms and the a priori bound


def test_term_checklists(setup, small, rng):
    obs = obs_of(rng.standard_normal(small.shape), setup)
    full = data_norm_full(obs)
    part = data_norm_partial(obs, ("z_min",))
    ap = apriori_bound(obs.trajectory, rng.standard_normal(small.shape))
    assert tuple(full.terms) == FULL_TERMS
    assert tuple(part.terms) == PARTIAL_TERMS
    assert tuple(ap.terms) == APRIORI_TERMS
    assert all(v >= 0 for v in list(full.terms.values()) + list(part.terms.values()) + list(ap.terms.values()))


@settings(max_examples=5, deadline=None)
@given(st.floats(-4, 4).filter(lambda c: abs(c) > 1e-2))
def test_data_norm_scaling(setup, c):
    dom = setup.domain
    f = band_limited_field(dom, 5, kmax=2)
    a = forward_observation(f, setup)
    b = forward_observation(c * f, setup)
    assert data_norm_full(b).value == pytest.approx(abs(c) * data_norm_full(a).value, rel=1e-10)
    assert data_norm_partial(b, ("x_min", "y_max")).value == pytest.approx(
        abs(c) * data_norm_partial(a, ("x_min", "y_max")).value, rel=1e-10)


def test_partial_norm_reads_only_its_faces(setup, small, rng):
    obs = forward_observation(rng.standard_normal(small.shape), setup)
    ref = data_norm_partial(obs, ("z_max",))
    for f in FACES:
        if f != "z_max":
            for name in obs.traces.values:
                obs.traces.values[name][f] = obs.traces.values[name][f] * 0 + 1e3
    again = data_norm_partial(obs, ("z_max",))
    assert again.terms == ref.terms


def test_full_norm_needs_all_faces(setup, small):
    obs = forward_observation(np.ones(small.shape), setup).restrict(("x_min",))
    with pytest.raises(ValueError):
        data_norm_full(obs)
    with pytest.raises(ValueError):
        data_norm_partial(obs, ("y_min",))


def test_apriori_f_term(setup, small):
    f = np.full(small.shape, 2.0)
    obs = obs_of(np.zeros(small.shape), setup)
    ap = apriori_bound(obs.trajectory, f)
    assert ap.terms["f_L2Q"] == pytest.approx(small.T * 4.0 * 1.0, rel=1e-12)
    assert all(ap.terms[k] == 0.0 for k in APRIORI_TERMS if k != "f_L2Q")


# --------------------------------------------------------------------------
# fits and the Lipschitz experiment


def test_loglog_slope_exact():
    x = np.array([1e-3, 1e-2, 1e-1])
    s, c = loglog_slope(x, 5.0 * x ** 1.5)
    assert s == pytest.approx(1.5, rel=1e-12) and np.exp(c) == pytest.approx(5.0, rel=1e-10)


def test_fit_holder_recovers_exponent():
    rng = np.random.default_rng(2)
    M = np.exp(rng.uniform(0, 2, 20))
    D = M * np.exp(rng.uniform(-6, -1, 20))
    nf = 0.7 * M ** 0.6 * D ** 0.4
    fit = fit_holder(nf, M, D)
    assert fit["theta_raw"] == pytest.approx(0.4, rel=1e-10)
    assert fit["C_hat"] == pytest.approx(0.7, rel=1e-10)
    assert fit["r2"] == pytest.approx(1.0)


def test_lipschitz_needs_full_boundary(setup):
    with pytest.raises(ValueError):
        lipschitz_experiment(setup.restricted(("x_min",)), n_samples=1)


def test_lipschitz_small_run(setup, op):
    rep = lipschitz_experiment(setup, n_samples=2, noise_levels=(1e-3, 1e-2), op=op, kmax=2)
    assert rep.fit["all_finite"]
    assert rep.fit["C_hat"] > 0
    ratios = [s["ratio"] for s in rep.samples if "ratio" in s]
    assert rep.fit["C_hat"] == max(ratios)


def test_lipschitz_identical_pair_skipped(setup, op, monkeypatch):
    import mhd_carleman.inverse as inv
    monkeypatch.setattr(inv, "band_limited_field", lambda dom, seed, kmax=3, decay=2.0: np.ones(dom.shape)
                        if seed < 10_000 else band_limited_field(dom, seed, kmax, decay))
    rep = inv.lipschitz_experiment(setup, n_samples=2, noise_levels=(1e-3,), op=op, kmax=2)
    assert [s["skipped"] for s in rep.samples[:2]] == [True, True]
    assert rep.fit["C_hat"] is None
