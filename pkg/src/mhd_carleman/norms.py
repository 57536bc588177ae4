"""Discrete Sobolev norms on box faces, on the interior and in time."""
from __future__ import annotations

import numpy as np
import scipy.fft as sfft

from .geometry import Domain, face_axis, tangential_axes
from .grid_ops import time_derivative


def face_wavenumbers(domain: Domain, face: str):
    axis, _ = face_axis(face)
    a, b = tangential_axes(axis)
    ka = np.pi * np.arange(domain.n[a]) / domain.lengths[a]
    kb = np.pi * np.arange(domain.n[b]) / domain.lengths[b]
    return ka[:, None], kb[None, :]


def face_sq(values: np.ndarray, face: str, domain: Domain, kind: str = "L2") -> np.ndarray:
    """Squared face norm over the last two axes; leading axes other than the
    first (time) are summed as vector components.

    kind: ``L2``, ``H1`` (values plus tangential gradient), ``grad`` (tangential
    gradient only) or ``Hhalf`` (cosine-transform multiplier (1+|k|^2)^{1/2}).
    """
    values = np.asarray(values, float)
    dA = domain.face_area_element(face)
    axis, _ = face_axis(face)
    a, b = tangential_axes(axis)
    sum_axes = tuple(range(1, values.ndim)) if values.ndim > 2 else (0, 1)
    if kind in ("L2", "H1"):
        out = np.sum(values ** 2, axis=sum_axes) * dA
    else:
        out = 0.0
    if kind in ("H1", "grad"):
        ga = np.gradient(values, domain.h[a], axis=-2, edge_order=2) if values.shape[-2] > 2 else 0 * values
        gb = np.gradient(values, domain.h[b], axis=-1, edge_order=2) if values.shape[-1] > 2 else 0 * values
        out = out + np.sum(ga ** 2 + gb ** 2, axis=sum_axes) * dA
    if kind == "Hhalf":
        c = sfft.dctn(values, type=2, axes=(-2, -1), norm="ortho")
        ka, kb = face_wavenumbers(domain, face)
        mult = np.sqrt(1.0 + ka ** 2 + kb ** 2)
        out = np.sum(mult * c ** 2, axis=sum_axes) * dA
    return float(out) if values.ndim == 2 else np.asarray(out)


def boundary_h_half_norm_sq(trace: dict, domain: Domain, mode: str = "spectral",
                            time_axis: bool = True) -> float:
    """Squared H^{1/2} norm of a boundary field summed over faces.

    With ``time_axis`` the leading axis is time and the result is integrated
    with trapezoid weights.  ``mode="h1"`` substitutes the H^1 face norm, an
    upper bound.
    """
    kind = "Hhalf" if mode == "spectral" else "H1"
    total = 0.0
    for face, v in trace.items():
        v = np.asarray(v, float)
        if time_axis:
            per_t = face_sq(v, face, domain, kind)
            total += float(np.sum(domain.time_weights() * per_t))
        else:
            total += float(face_sq(v[None], face, domain, kind)[0])
    return total


def boundary_h_half_norm(trace: dict, domain: Domain, mode: str = "spectral", time_axis: bool = True) -> float:
    return float(np.sqrt(boundary_h_half_norm_sq(trace, domain, mode, time_axis)))


def time_sobolev_sq(trace: dict, domain: Domain, space: str, order: int) -> float:
    """sum_{j <= order} int_0^T ||d_t^j v||^2_space dt, summed over faces."""
    w = domain.time_weights()
    total = 0.0
    for face, v in trace.items():
        for j in range(order + 1):
            dv = time_derivative(v, domain.dt, j, axis=0)
            total += float(np.sum(w * face_sq(dv, face, domain, space)))
    return total


def derivative_stack(a, h, order):
    """Value, gradient and all second derivatives (up to ``order``) of a cell field."""
    out = [a]
    if order >= 1:
        grads = [np.gradient(a, h[j], axis=j - 3, edge_order=2) for j in range(3)]
        out += grads
        if order >= 2:
            for i in range(3):
                for j in range(3):
                    out.append(np.gradient(grads[i], h[j], axis=j - 3, edge_order=2))
    return out


def cell_sobolev_sq(a, domain: Domain, order: int) -> float:
    """Squared H^order norm of a cell field (components along leading axes summed)."""
    a = np.asarray(a, float)
    return float(sum(np.sum(t ** 2) for t in derivative_stack(a, domain.h, order)) * domain.cell_volume)


def space_time_sq(a, domain: Domain, x_order: int = 0, t_order: int = 0) -> float:
    """Squared norm of a time series of cell fields (time on axis 0).

    Spatial derivatives up to ``x_order`` and time derivatives up to
    ``t_order`` are added separately (no mixed derivatives), matching the
    anisotropic spaces H^{x_order, t_order}.
    """
    a = np.asarray(a, float)
    w = domain.time_weights()
    w = w.reshape((-1,) + (1,) * (a.ndim - 1))
    total = 0.0
    for j in range(1, t_order + 1):
        total += float(np.sum(w * time_derivative(a, domain.dt, j) ** 2))
    for t in derivative_stack(a, domain.h, x_order):
        total += float(np.sum(w * t ** 2))
    return total * domain.cell_volume
