"""Finite-difference building blocks on the staggered (MAC) grid.

Every routine acts on the last three array axes so that a leading batch axis
can be carried through unchanged; the adjoint machinery relies on this to
assemble operators column-block by column-block.

Layout conventions
    velocity component c: nodes along axis c (walls included), cells elsewhere
    pressure, magnetic field: cell centres
"""
from __future__ import annotations

import numpy as np
import scipy.fft as sfft


def idx(axis: int, s) -> tuple:
    """Index tuple selecting ``s`` along spatial ``axis`` (0..2) of a batched array."""
    out = [slice(None)] * 3
    out[axis] = s
    return (Ellipsis,) + tuple(out)


def _wall(g, a, axis):
    if g is None:
        return 0.0
    return np.expand_dims(np.asarray(g, dtype=float), axis - 3) if np.ndim(g) else float(g)


def pad_dirichlet(a: np.ndarray, axis: int, g_lo=None, g_hi=None) -> np.ndarray:
    """Add one ghost layer on each side of a cell-located axis.

    Ghosts are chosen so that the linear interpolant at the wall equals the
    prescribed value (``None`` means zero).
    """
    lo = 2.0 * _wall(g_lo, a, axis) - a[idx(axis, slice(0, 1))]
    hi = 2.0 * _wall(g_hi, a, axis) - a[idx(axis, slice(-1, None))]
    return np.concatenate([lo, a, hi], axis=axis - 3)


def d1_cell(a, axis, h, g_lo=None, g_hi=None):
    """Central first derivative along a cell-located axis, same shape as ``a``."""
    p = pad_dirichlet(a, axis, g_lo, g_hi)
    return (p[idx(axis, slice(2, None))] - p[idx(axis, slice(None, -2))]) / (2.0 * h)


def d2_cell(a, axis, h, g_lo=None, g_hi=None):
    p = pad_dirichlet(a, axis, g_lo, g_hi)
    return (p[idx(axis, slice(2, None))] - 2.0 * a + p[idx(axis, slice(None, -2))]) / h ** 2


def d1_node(a, axis, h):
    """Central first derivative at interior nodes of a node-located axis."""
    return (a[idx(axis, slice(2, None))] - a[idx(axis, slice(None, -2))]) / (2.0 * h)


def d2_node(a, axis, h):
    return (a[idx(axis, slice(2, None))] - 2.0 * a[idx(axis, slice(1, -1))]
            + a[idx(axis, slice(None, -2))]) / h ** 2


def avg_node_to_cell(a, axis):
    return 0.5 * (a[idx(axis, slice(1, None))] + a[idx(axis, slice(None, -1))])


def avg_cell_to_inner_node(a, axis):
    return 0.5 * (a[idx(axis, slice(1, None))] + a[idx(axis, slice(None, -1))])


def interior(a, axis):
    return a[idx(axis, slice(1, -1))]


# --------------------------------------------------------------------------
# MAC divergence / gradient


def divergence(u, h) -> np.ndarray:
    """Cell-centred divergence of a face field (walls included)."""
    return sum((u[c][idx(c, slice(1, None))] - u[c][idx(c, slice(None, -1))]) / h[c]
               for c in range(3))


def gradient_to_faces(p, h) -> list:
    """Gradient of a cell field at the interior faces of each axis."""
    return [(p[idx(c, slice(1, None))] - p[idx(c, slice(None, -1))]) / h[c] for c in range(3)]


def embed_interior(u_int, axis, lo=None, hi=None):
    """Attach wall layers along ``axis`` to an interior-face array."""
    lo_arr = np.zeros_like(u_int[idx(axis, slice(0, 1))]) if lo is None else \
        np.broadcast_to(_wall(lo, u_int, axis), u_int[idx(axis, slice(0, 1))].shape)
    hi_arr = np.zeros_like(u_int[idx(axis, slice(0, 1))]) if hi is None else \
        np.broadcast_to(_wall(hi, u_int, axis), u_int[idx(axis, slice(0, 1))].shape)
    return np.concatenate([lo_arr, u_int, hi_arr], axis=axis - 3)


# --------------------------------------------------------------------------
# fast solvers


def _eig_dirichlet_nodes(n, h):
    k = np.arange(1, n)
    return -(2.0 - 2.0 * np.cos(np.pi * k / n)) / h ** 2


def _eig_dirichlet_cells(n, h):
    k = np.arange(1, n + 1)
    return -(2.0 - 2.0 * np.cos(np.pi * k / n)) / h ** 2


def _eig_neumann_cells(n, h):
    k = np.arange(n)
    return -(2.0 - 2.0 * np.cos(np.pi * k / n)) / h ** 2


class SpectralSolver:
    """(I - c * Laplacian)^{-1} for one grid layout with homogeneous walls.

    ``kinds[a]`` is ``"node"`` (Dirichlet at both wall nodes, DST-I),
    ``"cell"`` (Dirichlet through ghosts, DST-II) or ``"neumann"``
    (zero flux, DCT-II).  All transforms are orthonormal so the inverse is a
    symmetric matrix.
    """

    def __init__(self, n, h, kinds):
        self.kinds = tuple(kinds)
        eig = []
        for a in range(3):
            if kinds[a] == "node":
                eig.append(_eig_dirichlet_nodes(n[a], h[a]))
            elif kinds[a] == "cell":
                eig.append(_eig_dirichlet_cells(n[a], h[a]))
            else:
                eig.append(_eig_neumann_cells(n[a], h[a]))
        self.lap_eig = eig[0][:, None, None] + eig[1][None, :, None] + eig[2][None, None, :]

    def forward(self, a):
        for ax, kind in enumerate(self.kinds):
            if kind == "node":
                a = sfft.dst(a, type=1, axis=ax - 3, norm="ortho")
            elif kind == "cell":
                a = sfft.dst(a, type=2, axis=ax - 3, norm="ortho")
            else:
                a = sfft.dct(a, type=2, axis=ax - 3, norm="ortho")
        return a

    def backward(self, a):
        for ax, kind in reversed(list(enumerate(self.kinds))):
            if kind == "node":
                a = sfft.idst(a, type=1, axis=ax - 3, norm="ortho")
            elif kind == "cell":
                a = sfft.idst(a, type=2, axis=ax - 3, norm="ortho")
            else:
                a = sfft.idct(a, type=2, axis=ax - 3, norm="ortho")
        return a

    def helmholtz(self, rhs, c):
        """Solve (I - c L) x = rhs."""
        return self.backward(self.forward(rhs) / (1.0 - c * self.lap_eig))

    def poisson_pinv(self, rhs):
        """Minimum-norm solution of L x = rhs (for the zero-flux layout)."""
        eig = self.lap_eig.copy()
        zero = eig == 0.0
        eig[zero] = 1.0
        xh = self.forward(rhs) / eig
        xh[..., zero] = 0.0
        return self.backward(xh)


def face_kinds(c):
    return tuple("node" if a == c else "cell" for a in range(3))


def face_interior_shape(n, c):
    return tuple(n[a] - 1 if a == c else n[a] for a in range(3))


def face_shape(n, c):
    return tuple(n[a] + 1 if a == c else n[a] for a in range(3))


# --------------------------------------------------------------------------
# time differentiation


def fd_weights(x0: float, xs: np.ndarray, order: int) -> np.ndarray:
    """Finite-difference weights for the ``order``-th derivative at ``x0`` (Fornberg)."""
    n = len(xs)
    c = np.zeros((n, order + 1))
    c1 = 1.0
    c4 = xs[0] - x0
    c[0, 0] = 1.0
    for i in range(1, n):
        mn = min(i, order)
        c2 = 1.0
        c5 = c4
        c4 = xs[i] - x0
        for j in range(i):
            c3 = xs[i] - xs[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c[:, order]


def time_derivative(series: np.ndarray, dt: float, order: int, axis: int = 0) -> np.ndarray:
    """Derivative of a uniformly sampled series along ``axis``.

    Stencils have ``order + 4`` points (fourth-order accurate) and are shifted
    inward near the ends so every node gets a value.
    """
    if order == 0:
        return np.array(series, copy=True)
    series = np.moveaxis(np.asarray(series, dtype=float), axis, 0)
    m = series.shape[0]
    width = min(order + 4, m)
    if width <= order:
        raise ValueError("not enough time nodes for the requested derivative")
    out = np.empty_like(series)
    for i in range(m):
        start = min(max(i - width // 2, 0), m - width)
        xs = np.arange(start, start + width, dtype=float)
        w = fd_weights(float(i), xs, order) / dt ** order
        out[i] = np.tensordot(w, series[start:start + width], axes=(0, 0))
    return np.moveaxis(out, 0, axis)


# --------------------------------------------------------------------------
# deterministic reductions


def dot(a, b) -> float:
    """Inner product through a pairwise summation (no threaded BLAS)."""
    return float(np.sum(np.multiply(a, b).ravel()))


def norm(a) -> float:
    return float(np.sqrt(dot(a, a)))
