"""Symbolically generated manufactured solutions and their residual forcings."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import sympy as sp

from .fields import CoefficientSet, VectorField

x, y, z, t = sp.symbols("x y z t", real=True)
XYZ = (x, y, z)


def field_expr(vf: VectorField):
    P = sp.Matrix(XYZ)
    out = sp.Matrix([sp.nsimplify(c) for c in vf.constant]) + sp.Matrix(vf.matrix) * P
    for amp, k, ph in vf.trig:
        arg = sum(ki * xi for ki, xi in zip(k, XYZ)) + ph
        out += sp.Matrix(amp) * sp.sin(arg)
    return list(out)


def _grad(e):
    return [sp.diff(e, v) for v in XYZ]


def _lap(e):
    return sum(sp.diff(e, v, 2) for v in XYZ)


def _dir(a, vec):
    """(a . grad) applied componentwise to vec."""
    return [sum(a[b] * sp.diff(vec[c], XYZ[b]) for b in range(3)) for c in range(3)]


def curl(a):
    return [sp.diff(a[2], y) - sp.diff(a[1], z),
            sp.diff(a[0], z) - sp.diff(a[2], x),
            sp.diff(a[1], x) - sp.diff(a[0], y)]


class VecFn:
    """Numerical evaluator of a 3-vector expression in (x, y, z, t)."""

    def __init__(self, exprs):
        self.exprs = [sp.sympify(e) for e in exprs]
        self._f = [sp.lambdify((x, y, z, t), e, "numpy") for e in self.exprs]

    def __call__(self, X, Y, Z, T=0.0):
        X = np.asarray(X, float)
        shape = np.broadcast_shapes(X.shape, np.shape(Y), np.shape(Z), np.shape(T))
        return np.stack([np.broadcast_to(np.asarray(f(X, Y, Z, T), float), shape) for f in self._f])


class ScalarFn(VecFn):
    def __call__(self, X, Y, Z, T=0.0):
        return super().__call__(X, Y, Z, T)[0]


def momentum_residual(u, p, H, cf: CoefficientSet):
    B1, B2 = field_expr(cf.B1), field_expr(cf.B2)
    C1, C2, C3 = field_expr(cf.C1), field_expr(cf.C2), field_expr(cf.C3)
    adv = _dir(B1, u)
    react = _dir(u, B2)
    L1a = _dir(C1, H)
    L1b = _dir(H, C2)
    c3h = sum(C3[b] * H[b] for b in range(3))
    return [sp.diff(u[c], t) - cf.nu * _lap(u[c]) + adv[c] + react[c] + L1a[c] + L1b[c]
            + sp.diff(c3h, XYZ[c]) + sp.diff(p, XYZ[c]) for c in range(3)]


def induction_residual(u, H, cf: CoefficientSet):
    D1, D2 = field_expr(cf.D1), field_expr(cf.D2)
    C4, C5 = field_expr(cf.C4), field_expr(cf.C5)
    adv = _dir(D1, H)
    react = _dir(H, D2)
    L2a = _dir(C4, u)
    L2b = _dir(u, C5)
    return [sp.diff(H[c], t) - cf.kappa * _lap(H[c]) + adv[c] + react[c] + L2a[c] + L2b[c] for c in range(3)]


@dataclass
class ManufacturedSolution:
    u: VecFn
    p: ScalarFn
    H: VecFn
    F: VecFn
    G: VecFn
    exprs: dict

    def derivative(self, name: str, wrt: tuple) -> VecFn:
        """Evaluator of a mixed derivative of u, H (vector) or p (as a length-1 vector)."""
        e = self.exprs[name]
        e = e if isinstance(e, list) else [e]
        out = []
        for c in e:
            for v in wrt:
                c = sp.diff(c, {"x": x, "y": y, "z": z, "t": t}[v])
            out.append(c)
        return VecFn(out)


def build_manufactured(u_expr, p_expr, H_expr, cf: CoefficientSet) -> ManufacturedSolution:
    u_expr = [sp.sympify(e) for e in u_expr]
    H_expr = [sp.sympify(e) for e in H_expr]
    p_expr = sp.sympify(p_expr)
    F = momentum_residual(u_expr, p_expr, H_expr, cf)
    G = induction_residual(u_expr, H_expr, cf)
    return ManufacturedSolution(VecFn(u_expr), ScalarFn([p_expr]), VecFn(H_expr), VecFn(F), VecFn(G),
                                {"u": u_expr, "p": p_expr, "H": H_expr, "F": F, "G": G})


def smooth_solution(cf: CoefficientSet, time_factor=None, seed: int = 0) -> ManufacturedSolution:
    """Divergence-free velocity (curl of a trigonometric potential) with smooth p and H."""
    rng = np.random.default_rng(seed)
    tf = sp.Integer(1) if time_factor is None else time_factor
    pi = sp.pi
    a = [sp.Float(rng.uniform(0.5, 1.0), 12) * sp.sin(pi * x + 0.3) * sp.cos(pi * y) * sp.sin(pi * z + 0.2),
         sp.Float(rng.uniform(0.5, 1.0), 12) * sp.cos(pi * x) * sp.sin(pi * y + 0.1) * sp.cos(pi * z),
         sp.Float(rng.uniform(0.5, 1.0), 12) * sp.sin(pi * x + 0.4) * sp.sin(pi * y) * sp.cos(pi * z + 0.5)]
    u = [tf * c for c in curl(a)]
    p = tf * sp.cos(pi * x) * sp.cos(pi * y) * sp.sin(pi * z + 0.3)
    H = [tf * sp.sin(pi * y + 0.2) * sp.cos(pi * z),
         tf * sp.cos(pi * x + 0.1) * sp.sin(pi * z + 0.4),
         tf * sp.sin(pi * x) * sp.cos(pi * y + 0.3)]
    return build_manufactured(u, p, H, cf)
