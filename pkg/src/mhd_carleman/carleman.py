"""Weighted Carleman functionals, right-hand-side budgets and s-sweeps.

Weighted integrals are accumulated as ``value * exp(log_scale)`` with the
shift chosen as the largest log-weight, so sweeps to large s never overflow;
terms whose weight underflows after the shift are counted.
"""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .geometry import FACES, Domain, SpaceTimeMask, face_axis, tangential_axes
from .grid_ops import time_derivative
from .mhd_solver import Trajectory, TraceBundle, check_weak_div_conditions
from .norms import boundary_h_half_norm, boundary_h_half_norm_sq, face_sq  # noqa: F401
from .weights import (RegularWeight, SingularWeight, WeightD, build_l, regular_weight,
                      singular_weight)

log = logging.getLogger(__name__)

LOG_TINY = np.log(np.finfo(float).tiny)
GROWTH_LIMIT = 1.2


class HypothesisError(ValueError):
    """A problem instance does not satisfy the hypotheses of the estimate being checked."""


# --------------------------------------------------------------------------
# eroded-interior differences (time on axis 0, space on the last three axes)

_E = (slice(1, -1),) * 3


def _shift(a, axis, k):
    sl = [slice(1, -1)] * 3
    n = a.shape[axis - 3]
    sl[axis] = slice(1 + k, n - 1 + k)
    return a[(Ellipsis,) + tuple(sl)]


def eroded(a):
    return a[(Ellipsis,) + _E]


def d1(a, axis, h):
    return (_shift(a, axis, 1) - _shift(a, axis, -1)) / (2.0 * h)


def d2(a, i, j, h):
    if i == j:
        return (_shift(a, i, 1) - 2.0 * eroded(a) + _shift(a, i, -1)) / h[i] ** 2
    sl = lambda si, sj: a[(Ellipsis,) + tuple(
        slice(1 + (si if k == i else sj if k == j else 0), a.shape[k - 3] - 1 + (si if k == i else sj if k == j else 0))
        for k in range(3))]
    return (sl(1, 1) - sl(1, -1) - sl(-1, 1) + sl(-1, -1)) / (4.0 * h[i] * h[j])


def dt_interior(a, dt):
    return (a[2:] - a[:-2]) / (2.0 * dt)


def squared_derivatives(a, h, dt, components: bool):
    """|d_t a|^2 + sum|d_i d_j a|^2, |grad a|^2 and |a|^2 on interior times and eroded cells.

    ``a`` has time on axis 0; with ``components`` axis 1 holds vector components.
    """
    sum_c = (lambda v: np.sum(v, axis=1)) if components else (lambda v: v)
    at = dt_interior(a, dt)
    ai = a[1:-1]
    t_d2 = sum_c(eroded(at) ** 2)
    for i in range(3):
        for j in range(3):
            t_d2 = t_d2 + sum_c(d2(ai, i, j, h) ** 2)
    grad = sum(sum_c(d1(ai, j, h[j]) ** 2) for j in range(3))
    val = sum_c(eroded(ai) ** 2)
    return t_d2, grad, val


def _gauge(p):
    return p - p.mean(axis=(-3, -2, -1), keepdims=True)


def chi_integrands(traj: Trajectory) -> dict:
    """Weight-free squared quantities entering both weighted functionals."""
    dom = traj.domain
    h, dt = dom.h, dom.dt
    uc = traj.cell_velocity()
    p = _gauge(traj.p)
    u_a, u_b, u_c = squared_derivatives(uc, h, dt, True)
    H_a, H_b, H_c = squared_derivatives(traj.H, h, dt, True)
    pi = p[1:-1]
    p_grad = sum(d1(pi, j, h[j]) ** 2 for j in range(3))
    return {"u_dt_d2": u_a, "u_grad": u_b, "u": u_c, "p_grad": p_grad, "p": eroded(pi) ** 2,
            "H_dt_d2": H_a, "H_grad": H_b, "H": H_c}


# --------------------------------------------------------------------------
# weighted sums


@dataclass
class WeightedBreakdown:
    """Weighted integrals stored as scaled values; actual = value * exp(log_scale)."""

    kind: str
    s: float
    terms: dict
    log_scale: float
    underflow: int = 0

    @property
    def total(self) -> float:
        return float(sum(self.terms.values()))

    @property
    def log_total(self) -> float:
        t = self.total
        return float(np.log(t) + self.log_scale) if t > 0 else -np.inf

    def actual(self, name: str | None = None) -> float:
        v = self.total if name is None else self.terms[name]
        return float(v * np.exp(self.log_scale)) if v > 0 else 0.0

    def log_term(self, name: str) -> float:
        v = self.terms[name]
        return float(np.log(v) + self.log_scale) if v > 0 else -np.inf


ChiSBreakdown = WeightedBreakdown
ChiRBreakdown = WeightedBreakdown


def weighted_sum(integrands: dict, log_factors: dict, base_log, vol: float, kind: str, s: float,
                 mask=None) -> WeightedBreakdown:
    """Sum of integrand * exp(base_log + factor) * vol for each named term."""
    logs = {}
    peak = -np.inf
    for name, a in integrands.items():
        lw = base_log + log_factors.get(name, 0.0)
        lw = np.broadcast_to(lw, a.shape)
        logs[name] = lw
        active = (a > 0) if mask is None else (a > 0) & mask
        if active.any():
            peak = max(peak, float(np.max(np.where(active, lw, -np.inf))))
    if not np.isfinite(peak):
        peak = 0.0
    terms = {}
    under = 0
    for name, a in integrands.items():
        lw = logs[name]
        shifted = lw - peak
        active = (a > 0) if mask is None else (a > 0) & mask
        # zero integrands may sit under weights far above the shift; keep them out of exp
        contrib = np.where(active, a * np.exp(np.where(active, shifted, -np.inf)), 0.0)
        under += int(np.count_nonzero(active & np.isfinite(lw) & (shifted < LOG_TINY)))
        terms[name] = float(np.sum(contrib) * vol)
    return WeightedBreakdown(kind, float(s), terms, peak, under)


def _interior_mask(mask: SpaceTimeMask | None):
    if mask is None:
        return None
    return eroded(mask.mask[1:-1])


SINGULAR_POWERS = {"u_dt_d2": -2, "u_grad": 0, "u": 2, "p_grad": -1, "p": 1,
                   "H_dt_d2": -2, "H_grad": 0, "H": 2}
REGULAR_POWERS = {"u_dt_d2": -2, "H_dt_d2": -1, "u_grad": 0, "H_grad": 1, "u": 2, "H": 3,
                  "p_grad": -1, "p": 1}


def _singular_logs(w: SingularWeight, s: float):
    dom = w.d.domain
    t = dom.times()[1:-1]
    dv = eroded(w.d.values)
    base = 2.0 * s * w.alpha(dv, t)
    log_sphi = np.log(s) + w.log_phi0(dv, t)
    return base, log_sphi


def _regular_logs(w: RegularWeight, s: float):
    dom = w.d.domain
    t = dom.times()[1:-1]
    dv = eroded(w.d.values)
    base = 2.0 * s * w.phi(dv, t)
    return base, w.log_phi(dv, t)


def chi_s_norm(traj: Trajectory, w: SingularWeight, s: float, mask: SpaceTimeMask | None = None,
               integrands: dict | None = None) -> WeightedBreakdown:
    """Weighted functional with the singular weight e^{2 s alpha} (interior times only)."""
    integrands = integrands or chi_integrands(traj)
    base, log_sphi = _singular_logs(w, s)
    factors = {k: p * log_sphi for k, p in SINGULAR_POWERS.items()}
    vol = traj.domain.cell_volume * traj.domain.dt
    return weighted_sum(integrands, factors, base, vol, "chi_s", s, _interior_mask(mask))


def chi_r_norm(traj: Trajectory, w: RegularWeight, s: float, mask: SpaceTimeMask | None = None,
               integrands: dict | None = None) -> WeightedBreakdown:
    """Weighted functional with the regular weight e^{2 s phi}."""
    integrands = integrands or chi_integrands(traj)
    base, _ = _regular_logs(w, s)
    factors = {k: p * np.log(s) for k, p in REGULAR_POWERS.items()}
    vol = traj.domain.cell_volume * traj.domain.dt
    return weighted_sum(integrands, factors, base, vol, "chi_r", s, _interior_mask(mask))


# --------------------------------------------------------------------------
# right-hand sides


def trace_norm_sq(traces: TraceBundle, mode: str = "spectral") -> float:
    """||y||^2 + ||grad_{x,t} y||^2 on the lateral boundary for u and H, plus
    ||p||^2 in L^2(0,T; H^{1/2}) of the boundary."""
    dom = traces.domain
    w = dom.time_weights()
    total = 0.0
    for name, dname in (("u", "dn_u"), ("H", "dn_H")):
        for f in traces.faces:
            v = traces.values[name][f]
            vt = time_derivative(v, dom.dt, 1)
            per = (face_sq(v, f, dom, "H1") + face_sq(traces.values[dname][f], f, dom, "L2")
                   + face_sq(vt, f, dom, "L2"))
            total += float(np.sum(w * per))
    total += boundary_h_half_norm_sq({f: traces.values["p"][f] for f in traces.faces}, dom, mode)
    return total


@dataclass
class RHSBudget:
    interior: WeightedBreakdown
    trace_norms: float
    prefactor_exponent: float

    def log_total(self, s: float, constant: float = 1.0) -> float:
        lt = np.log(self.trace_norms) + self.prefactor_exponent * constant * s if self.trace_norms > 0 else -np.inf
        return float(np.logaddexp(self.interior.log_total, lt))


def _field_sq(F):
    F = np.asarray(F, float)
    if F.ndim == 5:
        return np.sum(eroded(F[1:-1]) ** 2, axis=1)
    return eroded(F[1:-1]) ** 2


def grad_xt_sq(U, domain: Domain):
    """|d_t U|^2 + |grad U|^2 on interior times and eroded cells."""
    U = np.asarray(U, float)
    h = domain.h
    Ui = U[1:-1]
    return eroded(dt_interior(U, domain.dt)) ** 2 + sum(d1(Ui, j, h[j]) ** 2 for j in range(3))


def rhs_budget_singular(F, G, traces: TraceBundle | None, w: SingularWeight, s: float,
                        trace_norms: float | None = None) -> RHSBudget:
    dom = w.d.domain
    base, _ = _singular_logs(w, s)
    integ = {"F": _field_sq(F), "G": _field_sq(G)}
    interior = weighted_sum(integ, {}, base, dom.cell_volume * dom.dt, "rhs_singular", s)
    if trace_norms is None:
        trace_norms = 0.0 if traces is None else trace_norm_sq(traces)
    return RHSBudget(interior, trace_norms, -1.0)


def rhs_budget_regular(F, G, U, traces: TraceBundle | None, w: RegularWeight, s: float,
                       trace_norms: float | None = None) -> RHSBudget:
    dom = w.d.domain
    base, _ = _regular_logs(w, s)
    integ = {"F": _field_sq(F), "G": _field_sq(G)}
    integ["U"] = np.zeros_like(integ["F"]) if U is None else grad_xt_sq(U, dom)
    interior = weighted_sum(integ, {}, base, dom.cell_volume * dom.dt, "rhs_regular", s)
    if trace_norms is None:
        trace_norms = 0.0 if traces is None else trace_norm_sq(traces)
    return RHSBudget(interior, trace_norms, 1.0)


# --------------------------------------------------------------------------
# sweeps


@dataclass
class SweepResult:
    kind: str
    lam: float
    s: np.ndarray
    log_lhs: np.ndarray
    log_lhs_terms: dict
    log_interior: np.ndarray
    trace_norms: float
    prefactor_exponent: float
    prefactor_constant: float = 1.0
    degenerate: bool = False
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.s = np.asarray(self.s, float)
        if np.any(np.diff(self.s) <= 0):
            raise ValueError("s values must be strictly increasing")

    def log_rhs(self, constant: float | None = None) -> np.ndarray:
        c = self.prefactor_constant if constant is None else constant
        if self.trace_norms > 0:
            lt = np.log(self.trace_norms) + self.prefactor_exponent * c * self.s
        else:
            lt = np.full_like(self.s, -np.inf)
        return np.logaddexp(self.log_interior, lt)

    def log_ratio(self, constant: float | None = None) -> np.ndarray:
        if self.degenerate:
            return np.full_like(self.s, np.nan)
        return self.log_lhs - self.log_rhs(constant)

    def ratio(self, constant: float | None = None) -> np.ndarray:
        return np.exp(self.log_ratio(constant))

    @property
    def ratio_interior(self) -> np.ndarray:
        if self.degenerate:
            return np.full_like(self.s, np.nan)
        return np.exp(self.log_lhs - self.log_interior)

    def growth_factor(self, constant: float | None = None) -> float:
        """max over the top half of the sweep of ratio(s) / ratio(s_start), computed from logs."""
        lr = self.log_ratio(constant)
        top = lr[len(lr) // 2:]
        if not np.all(np.isfinite(top)):
            return np.inf
        return float(np.exp(np.max(top) - top[0]))

    @property
    def sup_ratio(self) -> float:
        return float(np.max(self.ratio()))

    @property
    def bounded(self) -> bool:
        return (not self.degenerate) and self.growth_factor() <= GROWTH_LIMIT

    def verdict(self) -> dict:
        return {
            "kind": self.kind, "lambda": self.lam, "degenerate": self.degenerate,
            "sup_ratio": None if self.degenerate else self.sup_ratio,
            "growth_factor": None if self.degenerate else self.growth_factor(),
            "growth_limit": GROWTH_LIMIT, "bounded": self.bounded,
            "prefactor_exponent": self.prefactor_exponent,
            "prefactor_constant": self.prefactor_constant,
            "trace_norms": self.trace_norms, **self.meta,
        }

    def rows(self) -> list[dict]:
        r = self.ratio()
        lr = self.log_ratio()
        ri = self.ratio_interior
        out = []
        for i, s in enumerate(self.s):
            row = {"s": s, "log_lhs_total": self.log_lhs[i]}
            for k, v in self.log_lhs_terms.items():
                row[f"log_lhs_{k}"] = v[i]
            row.update({"log_interior_rhs": self.log_interior[i], "trace_norms": self.trace_norms,
                        "ratio": r[i], "log_ratio": lr[i], "ratio_interior": ri[i]})
            out.append(row)
        return out

    def write_csv(self, path):
        rows = self.rows()
        with open(path, "w", newline="") as fh:
            wr = csv.DictWriter(fh, fieldnames=list(rows[0]))
            wr.writeheader()
            for row in rows:
                wr.writerow({k: repr(float(v)) for k, v in row.items()})

    def write_json(self, path):
        with open(path, "w") as fh:
            json.dump(_jsonable(self.verdict()), fh, indent=2, sort_keys=True)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def geometric_s_grid(lo: float = 4.0, hi: float = 64.0, n: int = 12) -> np.ndarray:
    return np.geomspace(lo, hi, n)


def fit_prefactor_constant(res: SweepResult, c_max: float, tol: float = 1e-3) -> tuple[float, bool]:
    """Smallest constant in [0, c_max] whose trace prefactor makes the sweep bounded."""
    if res.degenerate or res.trace_norms == 0:
        return 0.0, res.growth_factor(0.0) <= GROWTH_LIMIT if not res.degenerate else False
    if res.growth_factor(0.0) <= GROWTH_LIMIT:
        return 0.0, True
    if res.growth_factor(c_max) > GROWTH_LIMIT:
        return c_max, False
    lo, hi = 0.0, c_max
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if res.growth_factor(mid) <= GROWTH_LIMIT:
            hi = mid
        else:
            lo = mid
    return hi, True


@dataclass
class MHDInstance:
    """A space-time field triple with its equation residuals and boundary traces."""

    traj: Trajectory
    F: np.ndarray
    G: np.ndarray
    traces: TraceBundle
    U: np.ndarray | None = None
    label: str = ""
    meta: dict = field(default_factory=dict)


def sweep_theorem(kind: str, instance: MHDInstance, s_grid, lam: float, d: WeightD,
                  t0: float | None = None, beta: float | None = None, check: bool = True,
                  zero_tol: float = 1e-10) -> SweepResult:
    """Sweep LHS / RHS of the singular (``singular``) or regular (``regular``) estimate."""
    traj = instance.traj
    dom = traj.domain
    t0 = 0.5 * dom.T if t0 is None else t0
    s_grid = np.asarray(s_grid, float)
    if kind == "singular":
        if check:
            if instance.U is not None and np.abs(instance.U).max() > zero_tol:
                raise HypothesisError("the singular estimate requires a divergence-free velocity (U = 0)")
            wd = check_weak_div_conditions(traj)
            if not wd["passed"]:
                raise HypothesisError(f"weak divergence conditions fail: {wd}")
        w = singular_weight(d, build_l(dom.T, t0), lam)
    elif kind == "regular":
        if check:
            ends = max(max(np.abs(a[[0, -1]]).max() for a in traj.u), np.abs(traj.H[[0, -1]]).max())
            if ends > zero_tol:
                raise HypothesisError(f"u and H must vanish at t = 0 and t = T (max {ends:.3e})")
        w = regular_weight(d, lam, beta=beta, t0=t0, T=dom.T)
    else:
        raise ValueError(f"unknown sweep kind {kind!r}")
    integ = chi_integrands(traj)
    tn = trace_norm_sq(instance.traces)
    log_lhs, log_int = [], []
    terms = {k: [] for k in integ}
    under = 0
    for s in s_grid:
        if kind == "singular":
            L = chi_s_norm(traj, w, s, integrands=integ)
            R = rhs_budget_singular(instance.F, instance.G, None, w, s, trace_norms=tn)
        else:
            L = chi_r_norm(traj, w, s, integrands=integ)
            R = rhs_budget_regular(instance.F, instance.G, instance.U, None, w, s, trace_norms=tn)
        under += L.underflow + R.interior.underflow
        log_lhs.append(L.log_total)
        log_int.append(R.interior.log_total)
        for k in terms:
            terms[k].append(L.log_term(k))
    log_lhs = np.array(log_lhs)
    log_int = np.array(log_int)
    degenerate = bool(np.all(np.isneginf(log_lhs)) and np.all(np.isneginf(log_int)) and tn == 0)
    res = SweepResult(kind, lam, s_grid, log_lhs, {k: np.array(v) for k, v in terms.items()}, log_int, tn,
                      -1.0 if kind == "singular" else 1.0, degenerate=degenerate,
                      meta={"label": instance.label, "underflow": under})
    if kind == "regular" and not degenerate:
        c_max = 2.0 * w.max_phi + 2.0
        c, ok = fit_prefactor_constant(res, c_max)
        res.prefactor_constant = c
        res.meta.update({"fitted_constant": c, "fit_ok": ok, "reference_slope": 2.0 * w.max_phi})
    return res


# --------------------------------------------------------------------------
# elliptic check


@dataclass
class EllipticProblem:
    """Scalar data for the weighted elliptic estimate, sampled at cell centres."""

    domain: Domain
    d_values: np.ndarray
    y: np.ndarray
    grad_y: np.ndarray
    f0: np.ndarray
    f: np.ndarray
    b: np.ndarray
    boundary_max: float = 0.0
    residual: float = 0.0
    label: str = ""


def elliptic_carleman_check(prob: EllipticProblem, lam: float, s_grid, boundary_tol: float = 1e-10) -> SweepResult:
    if prob.boundary_max > boundary_tol:
        raise HypothesisError(f"y must vanish on the boundary (max |y| = {prob.boundary_max:.3e})")
    s_grid = np.asarray(s_grid, float)
    vol = prob.domain.cell_volume
    d = prob.d_values
    integ_l = {"grad": np.sum(prob.grad_y ** 2, axis=0), "value": prob.y ** 2}
    integ_r = {"f0": prob.f0 ** 2, "f": np.sum(prob.f ** 2, axis=0)}
    ll, lr = [], []
    terms = {k: [] for k in integ_l}
    for s in s_grid:
        base = 2.0 * s * np.exp(lam * d)
        L = weighted_sum(integ_l, {"value": 2.0 * np.log(s * lam) + 2.0 * lam * d}, base, vol, "elliptic_lhs", s)
        R = weighted_sum(integ_r, {"f0": -np.log(s) - 2.0 * np.log(lam) - lam * d, "f": np.log(s) + lam * d},
                         base, vol, "elliptic_rhs", s)
        ll.append(L.log_total)
        lr.append(R.log_total)
        for k in terms:
            terms[k].append(L.log_term(k))
    ll, lr = np.array(ll), np.array(lr)
    degenerate = bool(np.all(np.isneginf(ll)) and np.all(np.isneginf(lr)))
    return SweepResult("elliptic", lam, s_grid, ll, {k: np.array(v) for k, v in terms.items()}, lr, 0.0, 0.0,
                       degenerate=degenerate, meta={"label": prob.label, "residual": prob.residual})


def elliptic_residual(prob: EllipticProblem) -> float:
    """Max of |Lap y + b.grad y - f0 - div f| with discrete operators, relative to max |f0| + max |f|."""
    from .grid_ops import d2_cell
    h = prob.domain.h
    lap = sum(d2_cell(prob.y, a, h[a]) for a in range(3))
    gy = [np.gradient(prob.y, h[a], axis=a, edge_order=2) for a in range(3)]
    div = sum(np.gradient(prob.f[a], h[a], axis=a, edge_order=2) for a in range(3))
    r = lap + sum(prob.b[a] * gy[a] for a in range(3)) - prob.f0 - div
    scale = np.abs(prob.f0).max() + np.abs(prob.f).max() + 1e-300
    return float(np.abs(eroded(r)).max() / scale)


# --------------------------------------------------------------------------
# parabolic check


@dataclass
class ParabolicProblem:
    """Scalar parabolic data: y and residual f on (nt+1, n) plus wall traces."""

    domain: Domain
    d: WeightD
    y: np.ndarray
    f: np.ndarray
    wall_y: dict
    wall_dn: dict
    residual: float = 0.0
    label: str = ""


def scalar_trace_norm_sq(prob: ParabolicProblem) -> float:
    """int over the lateral boundary of |y|^2 + |grad_{x,t} y|^2."""
    dom = prob.domain
    w = dom.time_weights()
    total = 0.0
    for f in FACES:
        v = prob.wall_y[f]
        vt = time_derivative(v, dom.dt, 1)
        per = face_sq(v, f, dom, "H1") + face_sq(prob.wall_dn[f], f, dom, "L2") + face_sq(vt, f, dom, "L2")
        total += float(np.sum(w * per))
    return total


def parabolic_log_factors(kind: str, s: float, lam: float, log_phi, tau: int = 0) -> dict:
    """Log of the polynomial weight of each term (excluding the exponential)."""
    if kind == "singular":
        lsp = np.log(s) + log_phi
        return {"dt_d2": -2.0 * lsp, "grad": 2.0 * np.log(lam) + 0.0 * lsp,
                "value": 2.0 * np.log(s) + 4.0 * np.log(lam) + 2.0 * log_phi, "f": -lsp}
    l = np.log(s * lam) + log_phi
    return {"dt_d2": np.log(lam) + (tau - 1) * l, "grad": np.log(lam) + (tau + 1) * l,
            "value": np.log(lam) + (tau + 3) * l, "f": tau * l}


def parabolic_carleman_check(kind: str, prob: ParabolicProblem, lam: float, s_grid, tau: int = 0,
                             t0: float | None = None, beta: float | None = None, zero_tol: float = 1e-10
                             ) -> SweepResult:
    dom = prob.domain
    t0 = 0.5 * dom.T if t0 is None else t0
    if kind == "regular":
        ends = np.abs(prob.y[[0, -1]]).max()
        if ends > zero_tol:
            raise HypothesisError(f"y must vanish at t = 0 and t = T (max {ends:.3e})")
        if tau not in (0, 1):
            raise ValueError("tau must be 0 or 1")
    elif kind != "singular":
        raise ValueError(f"unknown kind {kind!r}")
    s_grid = np.asarray(s_grid, float)
    a, b, c = squared_derivatives(prob.y, dom.h, dom.dt, False)
    integ_l = {"dt_d2": a, "grad": b, "value": c}
    integ_r = {"f": eroded(prob.f[1:-1]) ** 2}
    vol = dom.cell_volume * dom.dt
    tn = scalar_trace_norm_sq(prob)
    if kind == "singular":
        w = singular_weight(prob.d, build_l(dom.T, t0), lam)
    else:
        w = regular_weight(prob.d, lam, beta=beta, t0=t0, T=dom.T)
    ll, lr = [], []
    terms = {k: [] for k in integ_l}
    for s in s_grid:
        if kind == "singular":
            base, lsp = _singular_logs(w, s)
            logphi = lsp - np.log(s)
        else:
            base, logphi = _regular_logs(w, s)
        fac = parabolic_log_factors(kind, s, lam, logphi, tau)
        L = weighted_sum(integ_l, fac, base, vol, "parabolic_lhs", s)
        R = weighted_sum(integ_r, {"f": fac["f"]}, base, vol, "parabolic_rhs", s)
        ll.append(L.log_total)
        lr.append(R.log_total)
        for k in terms:
            terms[k].append(L.log_term(k))
    ll, lr = np.array(ll), np.array(lr)
    degenerate = bool(np.all(np.isneginf(ll)) and np.all(np.isneginf(lr)) and tn == 0)
    res = SweepResult(f"parabolic_{kind}", lam, s_grid, ll, {k: np.array(v) for k, v in terms.items()}, lr, tn,
                      -1.0 if kind == "singular" else 1.0, degenerate=degenerate,
                      meta={"label": prob.label, "residual": prob.residual, "tau": tau})
    if kind == "regular" and not degenerate:
        c_max = 2.0 * w.max_phi + 2.0
        cst, ok = fit_prefactor_constant(res, c_max)
        res.prefactor_constant = cst
        res.meta.update({"fitted_constant": cst, "fit_ok": ok, "reference_slope": 2.0 * w.max_phi})
    return res
