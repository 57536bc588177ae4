"""Analytic vector fields used as coefficients and source profiles."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class FieldSpecError(ValueError):
    def __init__(self, path: str, msg: str):
        super().__init__(f"{path}: {msg}")
        self.path = path


@dataclass(frozen=True)
class VectorField:
    """Sum of constant, affine and single-mode sine terms.

    value(X, Y, Z) has shape (3, ...); jacobian has shape (3, 3, ...) with
    jacobian[c, b] the derivative of component c along axis b.
    """

    constant: tuple = (0.0, 0.0, 0.0)
    matrix: tuple = ((0.0, 0.0, 0.0),) * 3
    trig: tuple = ()  # (amplitude(3), wavevector(3), phase)

    def value(self, X, Y, Z) -> np.ndarray:
        P = np.stack(np.broadcast_arrays(np.asarray(X, float), np.asarray(Y, float), np.asarray(Z, float)))
        c = np.asarray(self.constant, float).reshape((3,) + (1,) * (P.ndim - 1))
        A = np.asarray(self.matrix, float)
        out = c + np.tensordot(A, P, axes=(1, 0))
        for amp, k, ph in self.trig:
            arg = np.tensordot(np.asarray(k, float), P, axes=(0, 0)) + ph
            out = out + np.asarray(amp, float).reshape((3,) + (1,) * (P.ndim - 1)) * np.sin(arg)
        return out

    def jacobian(self, X, Y, Z) -> np.ndarray:
        P = np.stack(np.broadcast_arrays(np.asarray(X, float), np.asarray(Y, float), np.asarray(Z, float)))
        shp = P.shape[1:]
        out = np.broadcast_to(np.asarray(self.matrix, float).reshape((3, 3) + (1,) * len(shp)),
                              (3, 3) + shp).copy()
        for amp, k, ph in self.trig:
            arg = np.tensordot(np.asarray(k, float), P, axes=(0, 0)) + ph
            outer = np.outer(amp, k).reshape((3, 3) + (1,) * len(shp))
            out = out + outer * np.cos(arg)
        return out

    @property
    def is_zero(self) -> bool:
        return (not any(self.constant) and not any(any(r) for r in self.matrix)
                and all(not any(a) for a, _, _ in self.trig))

    def sup_bound(self, lengths) -> float:
        """Crude upper bound of the pointwise magnitude over the box."""
        corner = np.asarray(lengths, float)
        b = np.linalg.norm(self.constant) + np.abs(np.asarray(self.matrix)).sum(axis=1).dot(corner).max() \
            if any(any(r) for r in self.matrix) else np.linalg.norm(self.constant)
        b += sum(np.linalg.norm(a) for a, _, _ in self.trig)
        return float(b)

    def to_dict(self) -> dict:
        return {"constant": list(self.constant), "matrix": [list(r) for r in self.matrix],
                "trig": [{"amplitude": list(a), "wavevector": list(k), "phase": p}
                         for a, k, p in self.trig]}


ZERO = VectorField()


def _vec3(v, path):
    try:
        arr = [float(x) for x in v]
    except (TypeError, ValueError):
        raise FieldSpecError(path, "expected a list of three numbers") from None
    if len(arr) != 3 or not all(np.isfinite(arr)):
        raise FieldSpecError(path, "expected a list of three finite numbers")
    return tuple(arr)


def parse_field(spec, path: str = "field") -> VectorField:
    """Build a field from a JSON-style spec.

    Accepted forms: ``0`` or ``null`` (zero), a list of three numbers
    (constant), or a mapping with optional keys ``constant``, ``matrix`` and
    ``trig`` (list of ``{amplitude, wavevector, phase}``).
    """
    if spec is None or (isinstance(spec, (int, float)) and spec == 0):
        return ZERO
    if isinstance(spec, (list, tuple)):
        return VectorField(constant=_vec3(spec, path))
    if not isinstance(spec, dict):
        raise FieldSpecError(path, f"unsupported field spec {spec!r}")
    unknown = set(spec) - {"constant", "matrix", "trig"}
    if unknown:
        raise FieldSpecError(f"{path}.{sorted(unknown)[0]}", "unknown key")
    const = _vec3(spec.get("constant", [0, 0, 0]), f"{path}.constant")
    mat = spec.get("matrix", [[0, 0, 0]] * 3)
    if not isinstance(mat, (list, tuple)) or len(mat) != 3:
        raise FieldSpecError(f"{path}.matrix", "expected a 3x3 matrix")
    mat = tuple(_vec3(r, f"{path}.matrix[{i}]") for i, r in enumerate(mat))
    trig = []
    for i, t in enumerate(spec.get("trig", [])):
        p = f"{path}.trig[{i}]"
        if not isinstance(t, dict):
            raise FieldSpecError(p, "expected a mapping")
        bad = set(t) - {"amplitude", "wavevector", "phase"}
        if bad:
            raise FieldSpecError(f"{p}.{sorted(bad)[0]}", "unknown key")
        trig.append((_vec3(t.get("amplitude", [0, 0, 0]), f"{p}.amplitude"),
                     _vec3(t.get("wavevector", [0, 0, 0]), f"{p}.wavevector"),
                     float(t.get("phase", 0.0))))
    return VectorField(const, mat, tuple(trig))


COEFFICIENT_NAMES = ("B1", "B2", "C1", "C2", "C3", "C4", "C5", "D1", "D2")


@dataclass(frozen=True)
class CoefficientSet:
    """Transport and coupling coefficients of the linearized system."""

    nu: float = 1.0
    kappa: float = 1.0
    B1: VectorField = ZERO
    B2: VectorField = ZERO
    C1: VectorField = ZERO
    C2: VectorField = ZERO
    C3: VectorField = ZERO
    C4: VectorField = ZERO
    C5: VectorField = ZERO
    D1: VectorField = ZERO
    D2: VectorField = ZERO

    def __post_init__(self):
        if not (self.nu > 0 and self.kappa > 0):
            raise FieldSpecError("coefficients", "nu and kappa must be positive")

    @classmethod
    def from_dict(cls, spec: dict, path: str = "coefficients") -> "CoefficientSet":
        unknown = set(spec) - set(COEFFICIENT_NAMES) - {"nu", "kappa"}
        if unknown:
            raise FieldSpecError(f"{path}.{sorted(unknown)[0]}", "unknown key")
        kw = {k: parse_field(spec.get(k), f"{path}.{k}") for k in COEFFICIENT_NAMES}
        for k in ("nu", "kappa"):
            v = spec.get(k, 1.0)
            if not isinstance(v, (int, float)) or not v > 0:
                raise FieldSpecError(f"{path}.{k}", "must be a positive number")
            kw[k] = float(v)
        return cls(**kw)

    def to_dict(self) -> dict:
        d = {"nu": self.nu, "kappa": self.kappa}
        d.update({k: getattr(self, k).to_dict() for k in COEFFICIENT_NAMES})
        return d


@dataclass(frozen=True)
class SourceModel:
    """Known source profile R(x, t) = R_space(x) * (1 + a1 (t - t0) + a2 (t - t0)^2)."""

    R: VectorField = field(default_factory=lambda: VectorField(constant=(1.0, 0.5, 0.25)))
    t0: float = 0.5
    a1: float = 0.0
    a2: float = 0.0

    def time_factor(self, t, order: int = 0):
        s = np.asarray(t, float) - self.t0
        if order == 0:
            return 1.0 + self.a1 * s + self.a2 * s ** 2
        if order == 1:
            return self.a1 + 2.0 * self.a2 * s
        if order == 2:
            return 2.0 * self.a2 + 0.0 * s
        return 0.0 * s

    def value(self, X, Y, Z, t, order: int = 0) -> np.ndarray:
        """R or its time derivatives at the given points."""
        return self.R.value(X, Y, Z) * self.time_factor(t, order)
