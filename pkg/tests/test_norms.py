import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mhd_carleman.geometry import FACES, build_box_domain, tangential_axes, face_axis
from mhd_carleman.norms import (boundary_h_half_norm, boundary_h_half_norm_sq, cell_sobolev_sq, face_sq,
                                space_time_sq, time_sobolev_sq)


@pytest.fixture(scope="module")
def box():
    return build_box_domain((1.0, 2.0, 0.5), (8, 12, 6), 1.0, 16)


def face_coords(dom, face):
    axis, _ = face_axis(face)
    a, b = tangential_axes(axis)
    ca = (np.arange(dom.n[a]) + 0.5) * dom.h[a]
    cb = (np.arange(dom.n[b]) + 0.5) * dom.h[b]
    return a, b, *np.meshgrid(ca, cb, indexing="ij")


def area(dom, face):
    a, b = tangential_axes(face_axis(face)[0])
    return dom.lengths[a] * dom.lengths[b]


@pytest.mark.parametrize("face", FACES)
def test_zero_and_constant(box, face):
    a, b, A, B = face_coords(box, face)
    assert face_sq(np.zeros_like(A), face, box, "Hhalf") == 0.0
    assert face_sq(3.0 * np.ones_like(A), face, box, "Hhalf") == pytest.approx(9.0 * area(box, face), rel=1e-13)


@pytest.mark.parametrize("face", FACES)
@pytest.mark.parametrize("ma,mb", [(1, 0), (0, 1), (1, 1), (2, 3)])
def test_single_mode(box, face, ma, mb):
    a, b, A, B = face_coords(box, face)
    La, Lb = box.lengths[a], box.lengths[b]
    v = np.cos(ma * np.pi * A / La) * np.cos(mb * np.pi * B / Lb)
    k2 = (ma * np.pi / La) ** 2 + (mb * np.pi / Lb) ** 2
    share = (0.5 if ma else 1.0) * (0.5 if mb else 1.0)
    expected = np.sqrt(1 + k2) * area(box, face) * share
    assert face_sq(v, face, box, "Hhalf") == pytest.approx(expected, rel=1e-12)


def test_time_integrated(box):
    face = "z_min"
    a, b, A, B = face_coords(box, face)
    v = np.cos(np.pi * A) * np.cos(np.pi * B / 2.0)
    t = box.times()
    series = t[:, None, None] * v[None]
    k2 = np.pi ** 2 + (np.pi / 2) ** 2
    per_unit = np.sqrt(1 + k2) * 2.0 / 4
    # trapezoid rule on t^2
    w = box.time_weights()
    expected = per_unit * float(np.sum(w * t ** 2))
    assert boundary_h_half_norm_sq({face: series}, box) == pytest.approx(expected, rel=1e-12)
    assert boundary_h_half_norm({face: series}, box) == pytest.approx(np.sqrt(expected), rel=1e-12)


def test_h1_surrogate_upper_bound(box):
    rng = np.random.default_rng(3)
    tr = {}
    for f in FACES:
        a, b, A, B = face_coords(box, f)
        tr[f] = np.sin(np.pi * A) * np.sin(2 * np.pi * B) + 0.1 * rng.standard_normal(A.shape)
    lo = boundary_h_half_norm_sq(tr, box, time_axis=False)
    hi = boundary_h_half_norm_sq(tr, box, mode="h1", time_axis=False)
    assert 0 < lo <= hi


def test_h1_face_of_linear(box):
    face = "x_min"
    a, b, A, B = face_coords(box, face)
    v = 2.0 * A
    expected = float(np.sum(v ** 2)) * box.face_area_element(face) + 4.0 * area(box, face)
    assert face_sq(v, face, box, "H1") == pytest.approx(expected, rel=1e-12)
    assert face_sq(v, face, box, "grad") == pytest.approx(4.0 * area(box, face), rel=1e-12)


def test_time_sobolev_linear(box):
    face = "y_max"
    a, b, A, B = face_coords(box, face)
    t = box.times()
    series = np.broadcast_to(t[:, None, None], (len(t),) + A.shape)
    # v = t: int t^2 (trapezoid) + int 1
    w = box.time_weights()
    exp1 = (float(np.sum(w * t ** 2)) + box.T) * area(box, face)
    assert time_sobolev_sq({face: series}, box, "L2", 1) == pytest.approx(exp1, rel=1e-10)
    assert time_sobolev_sq({face: np.zeros_like(series)}, box, "L2", 3) == 0.0


def test_cell_sobolev_quadratic(box):
    X, Y, Z = box.cell_centers()
    a = X ** 2
    # value, gradient (2x) and second derivative (2): exact for quadratics
    vol = box.cell_volume
    expected = float(np.sum(X ** 4 + 4 * X ** 2 + 4.0)) * vol
    assert cell_sobolev_sq(a, box, 2) == pytest.approx(expected, rel=1e-12)
    assert cell_sobolev_sq(a, box, 0) == pytest.approx(float(np.sum(X ** 4)) * vol, rel=1e-14)


def test_space_time_separate_orders(box):
    X, Y, Z = box.cell_centers()
    t = box.times()
    a = t[:, None, None, None] * Y[None]
    w = box.time_weights()
    vol = box.cell_volume
    int_t2 = float(np.sum(w * t ** 2))
    expected = (box.T * float(np.sum(Y ** 2))   # d_t a = Y
                + int_t2 * float(np.sum(Y ** 2 + 1.0))) * vol
    assert space_time_sq(a, box, x_order=1, t_order=1) == pytest.approx(expected, rel=1e-10)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 31 - 1), st.floats(-5, 5).filter(lambda c: abs(c) > 1e-3))
def test_quadratic_homogeneity(seed, c):
    dom = build_box_domain((1, 1, 1), (6, 5, 4), 1.0, 4)
    rng = np.random.default_rng(seed)
    tr = {f: rng.standard_normal((5,) + tuple(dom.n[j] for j in tangential_axes(face_axis(f)[0])))
          for f in FACES}
    base = boundary_h_half_norm_sq(tr, dom)
    scaled = boundary_h_half_norm_sq({f: c * v for f, v in tr.items()}, dom)
    assert scaled == pytest.approx(c * c * base, rel=1e-12)
    assert base > 0
