"""Weight generators, temporal profiles and Carleman weights.

All exponential weights are handled through their logarithms so that large
parameters never overflow; callers exponentiate after shifting.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .geometry import (FACES, Domain, DomainConfigError, SpaceTimeMask, SubBoundary,
                       check_inclusion, face_axis, omega_epsilon, q_epsilon)


class WeightConstructionError(ValueError):
    """The requested weight generator violates one of its defining conditions."""


# --------------------------------------------------------------------------
# weight generator d


@dataclass
class WeightD:
    kind: str
    domain: Domain
    gamma: SubBoundary
    func: Callable
    grad_func: Callable
    hess_func: Callable | None = None
    analytic: bool = True
    values: np.ndarray = field(init=False, repr=False)
    gradient: np.ndarray = field(init=False, repr=False)
    boundary_values: dict = field(init=False, repr=False)
    boundary_gradient: dict = field(init=False, repr=False)
    sup_norm: float = field(init=False)

    def __post_init__(self):
        X, Y, Z = self.domain.cell_centers()
        self.values = np.asarray(self.func(X, Y, Z), dtype=float) * np.ones_like(X)
        self.gradient = _broadcast3(self.grad_func(X, Y, Z), X)
        self.boundary_values = {}
        self.boundary_gradient = {}
        for f in FACES:
            P = self.domain.wall_points(f)
            self.boundary_values[f] = np.asarray(self.func(*P), dtype=float) * np.ones_like(P[0])
            self.boundary_gradient[f] = _broadcast3(self.grad_func(*P), P[0])
        self.sup_norm = float(max(np.abs(self.values).max(),
                                  max(np.abs(v).max() for v in self.boundary_values.values())))

    def hessian(self, X, Y, Z) -> np.ndarray:
        if self.hess_func is not None:
            hs = np.asarray(self.hess_func(X, Y, Z), dtype=float)
            if hs.shape == (3, 3):
                hs = hs.reshape((3, 3) + (1,) * np.ndim(X))
            return hs * np.ones((3, 3) + np.shape(X))
        h = 1e-4
        out = np.empty((3, 3) + np.shape(X))
        P = [X, Y, Z]
        for j in range(3):
            Pp = [p + (h if a == j else 0.0) for a, p in enumerate(P)]
            Pm = [p - (h if a == j else 0.0) for a, p in enumerate(P)]
            out[:, j] = (_broadcast3(self.grad_func(*Pp), X) - _broadcast3(self.grad_func(*Pm), X)) / (2 * h)
        return out

    @classmethod
    def from_function(cls, domain: Domain, gamma: SubBoundary, func: Callable,
                      grad_func: Callable | None = None, kind: str = "custom") -> "WeightD":
        """Wrap a user-supplied generator; gradients default to central differences."""
        analytic = grad_func is not None
        if grad_func is None:
            step = 1e-6 * max(domain.lengths)

            def grad_func(X, Y, Z):
                P = [np.asarray(X, float), np.asarray(Y, float), np.asarray(Z, float)]
                g = []
                for j in range(3):
                    Pp = [p + (step if a == j else 0.0) for a, p in enumerate(P)]
                    Pm = [p - (step if a == j else 0.0) for a, p in enumerate(P)]
                    g.append((np.asarray(func(*Pp), float) - np.asarray(func(*Pm), float)) / (2 * step))
                return np.array(np.broadcast_arrays(*g))
        return cls(kind, domain, gamma, func, grad_func, None, analytic)


def _broadcast3(g, like) -> np.ndarray:
    return np.stack([np.asarray(c, dtype=float) * np.ones_like(like) for c in g])



def build_d(domain: Domain, gamma: SubBoundary, kind: str) -> WeightD:
    """Construct a weight generator from the catalog.

    ``whole_boundary_affine``: d = x3 + 1, for observation on the whole boundary.
    ``face_linear``: distance to the single unobserved face.
    """
    if gamma.domain.key() != domain.key():
        raise WeightConstructionError("boundary portion belongs to a different domain")
    if kind == "whole_boundary_affine":
        if not gamma.is_whole:
            raise WeightConstructionError(
                "whole_boundary_affine is positive on every face, so d = 0 off the observed "
                "portion fails unless the whole boundary is observed")

        def func(X, Y, Z):
            return Z + 1.0

        def grad(X, Y, Z):
            return (0.0, 0.0, 1.0)

        return WeightD(kind, domain, gamma, func, grad, lambda X, Y, Z: np.zeros((3, 3)))
    if kind == "face_linear":
        missing = gamma.complement_faces()
        if len(missing) != 1:
            raise WeightConstructionError(
                f"face_linear needs exactly one unobserved face, got {len(missing)}; "
                "d = 0 off the observed portion cannot hold otherwise")
        axis, side = face_axis(missing[0])
        L = domain.lengths[axis]
        sign = 1.0 if side == 0 else -1.0
        offset = 0.0 if side == 0 else L

        def func(X, Y, Z):
            return offset + sign * (X, Y, Z)[axis]

        def grad(X, Y, Z):
            g = [0.0, 0.0, 0.0]
            g[axis] = sign
            return tuple(g)

        return WeightD(kind, domain, gamma, func, grad, lambda X, Y, Z: np.zeros((3, 3)))
    raise WeightConstructionError(f"unknown weight generator kind {kind!r}")


@dataclass
class ValidationReport:
    positivity_margin: float
    c_min: float
    max_boundary_violation: float
    critical_cells: int
    positive: bool
    nondegenerate: bool
    vanishes_off_gamma: bool

    @property
    def passed(self) -> bool:
        return self.positive and self.nondegenerate and self.vanishes_off_gamma

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["passed"] = self.passed
        return d


def validate_d(d: WeightD, tol: float = 1e-12) -> ValidationReport:
    """Check positivity, a non-vanishing gradient and vanishing off the observed portion.

    A sign change of every gradient component among the corners and center of
    a cell is reported as a possible critical point, which catches stationary
    points that fall between sample points.
    """
    dom = d.domain
    margin = float(d.values.min())
    mags = [np.sqrt((d.gradient ** 2).sum(axis=0)).min()]
    mags += [np.sqrt((g ** 2).sum(axis=0)).min() for g in d.boundary_gradient.values()]
    nodes = np.meshgrid(*(dom.axis_nodes(a) for a in range(3)), indexing="ij")
    gn = _broadcast3(d.grad_func(*nodes), nodes[0])
    mags.append(np.sqrt((gn ** 2).sum(axis=0)).min())
    c_min = float(min(mags))

    crit = np.ones(dom.shape, dtype=bool)
    for j in range(3):
        corners = [gn[j][i:i + dom.n[0], k:k + dom.n[1], m:m + dom.n[2]]
                   for i in (0, 1) for k in (0, 1) for m in (0, 1)]
        corners.append(d.gradient[j])
        stack = np.stack(corners)
        has_nonpos = (stack <= tol).any(axis=0)
        has_nonneg = (stack >= -tol).any(axis=0)
        crit &= has_nonpos & has_nonneg
    critical = int(crit.sum())

    viol = 0.0
    for f in d.gamma.complement_faces():
        viol = max(viol, float(np.abs(d.boundary_values[f]).max()))
    return ValidationReport(
        positivity_margin=margin,
        c_min=c_min,
        max_boundary_violation=viol,
        critical_cells=critical,
        positive=margin > 0,
        nondegenerate=c_min > tol and critical == 0,
        vanishes_off_gamma=viol <= tol,
    )


# --------------------------------------------------------------------------
# temporal profile


def _blend_antiderivative(tau, kappa):
    """Integral of (1-tau)^2 (1 + 2 tau + kappa tau^2), a monotone quintic."""
    return (tau - tau ** 3 + 0.5 * tau ** 4
            + kappa * (tau ** 3 / 3.0 - 0.5 * tau ** 4 + tau ** 5 / 5.0))


def _blend_rate(tau, kappa):
    return (1.0 - tau) ** 2 * (1.0 + 2.0 * tau + kappa * tau ** 2)


def _blend_curvature(tau, kappa):
    # derivative of _blend_rate
    return (-2.0 * (1.0 - tau) * (1.0 + 2.0 * tau + kappa * tau ** 2)
            + (1.0 - tau) ** 2 * (2.0 + 2.0 * kappa * tau))


@dataclass(frozen=True)
class TemporalProfile:
    """Positive C2 profile equal to t near 0 and T - t near T, peaked at t0."""

    T: float
    t0: float

    @property
    def delta(self) -> float:
        return min(self.t0, self.T - self.t0)

    @property
    def _pieces(self):
        half = 0.5 * self.delta
        a = self.t0 - half
        b = (self.T - half) - self.t0
        peak = half + 0.5 * max(a, b)
        ka = 30.0 * ((peak - half) / a - 0.5)
        kb = 30.0 * ((peak - half) / b - 0.5)
        return half, a, b, ka, kb, peak

    @property
    def peak(self) -> float:
        return self._pieces[5]

    def _eval(self, t, order: int):
        t = np.asarray(t, dtype=float)
        half, a, b, ka, kb, _ = self._pieces
        T = self.T
        left = t <= half
        right = t >= T - half
        rise = (~left) & (t <= self.t0)
        fall = (~right) & (t > self.t0)
        out = np.zeros_like(t)
        tl = np.clip((t - half) / a, 0.0, 1.0)
        tr = np.clip((T - half - t) / b, 0.0, 1.0)
        if order == 0:
            out = np.where(left, t, out)
            out = np.where(right, T - t, out)
            out = np.where(rise, half + a * _blend_antiderivative(tl, ka), out)
            out = np.where(fall, half + b * _blend_antiderivative(tr, kb), out)
        elif order == 1:
            out = np.where(left, 1.0, out)
            out = np.where(right, -1.0, out)
            out = np.where(rise, _blend_rate(tl, ka), out)
            out = np.where(fall, -_blend_rate(tr, kb), out)
        else:
            out = np.where(rise, _blend_curvature(tl, ka) / a, out)
            out = np.where(fall, _blend_curvature(tr, kb) / b, out)
        return out

    def __call__(self, t):
        return self._eval(t, 0)

    def derivative(self, t):
        return self._eval(t, 1)

    def second_derivative(self, t):
        return self._eval(t, 2)


def build_l(T: float, t0: float) -> TemporalProfile:
    if not (0.0 < t0 < T):
        raise DomainConfigError(f"t0={t0} must lie strictly inside (0, {T})")
    return TemporalProfile(float(T), float(t0))


# --------------------------------------------------------------------------
# singular weight


@dataclass
class SingularWeight:
    d: WeightD
    profile: TemporalProfile
    lam: float

    def _grid(self, d_values, t):
        t = np.asarray(t, dtype=float)
        lt = self.profile(t).reshape(t.shape + (1,) * np.ndim(d_values))
        return d_values[None] if t.ndim else d_values, lt

    def alpha(self, d_values, t) -> np.ndarray:
        """(e^{lam d} - e^{2 lam |d|}) / l(t); -inf where l vanishes."""
        dv, lt = self._grid(np.asarray(d_values, float), t)
        num = np.exp(self.lam * dv) - np.exp(2.0 * self.lam * self.d.sup_norm)
        with np.errstate(divide="ignore"):
            return np.where(lt > 0, num / np.where(lt > 0, lt, 1.0), -np.inf)

    def log_phi0(self, d_values, t) -> np.ndarray:
        """log of e^{lam d} / l(t); +inf where l vanishes."""
        dv, lt = self._grid(np.asarray(d_values, float), t)
        with np.errstate(divide="ignore"):
            return self.lam * dv - np.log(lt)

    def log_weight(self, d_values, t, s: float) -> np.ndarray:
        """log e^{2 s alpha}."""
        return 2.0 * s * self.alpha(d_values, t)

    def grid_alpha(self) -> np.ndarray:
        return self.alpha(self.d.values, self.d.domain.times())

    def grid_log_phi0(self) -> np.ndarray:
        return self.log_phi0(self.d.values, self.d.domain.times())


def singular_weight(d: WeightD, l: TemporalProfile, lam: float) -> SingularWeight:
    if lam <= 0:
        raise DomainConfigError("lambda must be positive")
    return SingularWeight(d, l, float(lam))


# --------------------------------------------------------------------------
# regular weight


def default_beta(d: WeightD, t0: float, T: float) -> float:
    delta = min(t0, T - t0)
    return d.sup_norm / delta ** 2


@dataclass
class RegularWeight:
    d: WeightD
    lam: float
    beta: float
    t0: float

    def psi(self, d_values, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        dv = np.asarray(d_values, float)
        tt = t.reshape(t.shape + (1,) * dv.ndim)
        return dv - self.beta * (tt - self.t0) ** 2

    def log_phi(self, d_values, t) -> np.ndarray:
        return self.lam * self.psi(d_values, t)

    def phi(self, d_values, t) -> np.ndarray:
        return np.exp(self.log_phi(d_values, t))

    def log_weight(self, d_values, t, s: float) -> np.ndarray:
        """log e^{2 s phi}."""
        return 2.0 * s * self.phi(d_values, t)

    def grid_psi(self) -> np.ndarray:
        return self.psi(self.d.values, self.d.domain.times())

    def grid_phi(self) -> np.ndarray:
        return self.phi(self.d.values, self.d.domain.times())

    @property
    def max_phi(self) -> float:
        return float(np.exp(self.lam * self.d.sup_norm))


def regular_weight(d: WeightD, lam: float, beta: float | None = None, t0: float | None = None,
                   T: float | None = None) -> RegularWeight:
    T = d.domain.T if T is None else T
    t0 = 0.5 * T if t0 is None else t0
    if lam <= 0:
        raise DomainConfigError("lambda must be positive")
    if beta is None:
        beta = default_beta(d, t0, T)
    if beta <= 0:
        raise DomainConfigError("beta must be positive")
    return RegularWeight(d, float(lam), float(beta), float(t0))


# --------------------------------------------------------------------------
# cutoffs


def smooth_ramp(z):
    """C2 quintic ramp from 0 (z <= 0) to 1 (z >= 1); symmetric about z = 1/2."""
    z = np.clip(z, 0.0, 1.0)
    return z ** 3 * (10.0 - 15.0 * z + 6.0 * z ** 2)


def smooth_ramp_d1(z):
    inside = (z > 0) & (z < 1)
    zc = np.clip(z, 0.0, 1.0)
    return np.where(inside, 30.0 * zc ** 2 * (1.0 - zc) ** 2, 0.0)


def smooth_ramp_d2(z):
    inside = (z > 0) & (z < 1)
    zc = np.clip(z, 0.0, 1.0)
    return np.where(inside, 60.0 * zc * (1.0 - zc) * (1.0 - 2.0 * zc), 0.0)


@dataclass
class CutoffPair:
    """Space-time cutoff chi and time-only cutoff chi0 with their derivatives on the grid."""

    eps: float
    delta0: float
    chi: np.ndarray          # (nt+1, nx, ny, nz)
    chi_t: np.ndarray
    chi_grad: np.ndarray     # (3, nt+1, nx, ny, nz)
    chi_hess: np.ndarray     # (3, 3, nt+1, nx, ny, nz)
    chi0: np.ndarray         # (nt+1,)
    chi0_t: np.ndarray
    chi0_tt: np.ndarray
    support: SpaceTimeMask
    plateau: SpaceTimeMask
    meta: dict = field(default_factory=dict)


def time_cutoff(t, t0: float, delta0: float, order: int = 0):
    """Equal to 1 for |t - t0| <= delta0/2 and to 0 for |t - t0| >= delta0."""
    t = np.asarray(t, dtype=float)
    z = (delta0 - np.abs(t - t0)) / (0.5 * delta0)
    if order == 0:
        return smooth_ramp(z)
    sgn = -np.sign(t - t0) / (0.5 * delta0)
    if order == 1:
        return smooth_ramp_d1(z) * sgn
    return smooth_ramp_d2(z) * sgn ** 2


def build_cutoffs(w: RegularWeight, eps: float) -> CutoffPair:
    if not (eps > 0):
        raise DomainConfigError("eps must be positive")
    dom = w.d.domain
    t = dom.times()
    psi = w.grid_psi()
    z = (psi - eps) / eps
    chi = smooth_ramp(z)
    s1 = smooth_ramp_d1(z)
    s2 = smooth_ramp_d2(z)
    tt = t[:, None, None, None]
    psi_t = -2.0 * w.beta * (tt - w.t0) * np.ones_like(psi)
    gd = np.broadcast_to(w.d.gradient[:, None], (3,) + psi.shape)
    chi_t = s1 * psi_t / eps
    chi_grad = s1[None] * gd / eps
    X, Y, Z = dom.cell_centers()
    hd = w.d.hessian(X, Y, Z)[:, :, None]
    chi_hess = (s2[None, None] * gd[:, None] * gd[None, :] / eps ** 2
                + s1[None, None] * hd / eps)
    delta0 = float(np.sqrt(eps / w.beta))
    meta = {}
    support = q_epsilon(dom, psi, eps)
    plateau = q_epsilon(dom, psi, 2.0 * eps)
    if not (psi >= 2.0 * eps).any():
        warnings.warn("level set for 2*eps is empty; the cutoff vanishes identically")
        meta["warning"] = "empty 2*eps level set"
        chi = np.zeros_like(chi)
        chi_t = np.zeros_like(chi_t)
        chi_grad = np.zeros_like(chi_grad)
        chi_hess = np.zeros_like(chi_hess)
    return CutoffPair(
        eps=float(eps), delta0=delta0, chi=chi, chi_t=chi_t, chi_grad=chi_grad,
        chi_hess=chi_hess,
        chi0=time_cutoff(t, w.t0, delta0), chi0_t=time_cutoff(t, w.t0, delta0, 1),
        chi0_tt=time_cutoff(t, w.t0, delta0, 2), support=support, plateau=plateau, meta=meta,
    )


def weight_invariants(domain: Domain, d: WeightD, lam: float, s: float, t0: float,
                      eps: float) -> dict:
    """Evaluate the structural properties every weight construction must satisfy."""
    T = domain.T
    t = domain.times()
    prof = build_l(T, t0)
    sw = singular_weight(d, prof, lam)
    alpha = sw.grid_alpha()
    interior_t = slice(1, -1)
    a_int = alpha[interior_t]
    lw = np.exp(2.0 * s * alpha)
    lv = prof(t)
    k0 = domain.nearest_node(t0)
    others = np.delete(lv, k0)
    rw = regular_weight(d, lam, t0=t0, T=T)
    psi = rw.grid_psi()
    flat = int(np.argmax(psi))
    kt, *ix = np.unravel_index(flat, psi.shape)
    ix_d = np.unravel_index(int(np.argmax(d.values)), d.values.shape)
    delta = min(t0, T - t0)
    q = q_epsilon(domain, psi, eps)
    om = omega_epsilon(domain, d.values, eps)
    return {
        "alpha_negative": bool(np.all(a_int < 0)),
        "weight_zero_at_ends": bool(lw[0].max() == 0.0 and lw[-1].max() == 0.0),
        "profile_strict_max": bool(np.all(others < lv[k0])),
        "psi_argmax_ok": bool(kt == k0 and tuple(ix) == tuple(ix_d)),
        "level_set_inclusion": check_inclusion(q, om, t0, delta),
    }



def interior_peak_d(domain: Domain) -> WeightD:
    """2 - |x - c|^2 with c the box centre: a generator with an interior critical
    point, used only as a negative control (it fails ``validate_d``)."""
    c = [0.5 * L for L in domain.lengths]

    def func(X, Y, Z):
        return 2.0 - sum((v - cj) ** 2 for v, cj in zip((X, Y, Z), c))

    def grad(X, Y, Z):
        return tuple(-2.0 * (v - cj) for v, cj in zip((X, Y, Z), c))

    def hess(X, Y, Z):
        return -2.0 * np.eye(3)

    return WeightD("interior_peak", domain, SubBoundary.whole(domain), func, grad, hess)
