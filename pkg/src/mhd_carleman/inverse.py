"""Source reconstruction from boundary traces and a single interior snapshot.

The forward map f -> data is linear, so reconstruction is a Tikhonov least
squares problem solved by conjugate gradients on the normal equations of the
weighted observation operator.  Stability is measured empirically: a
Lipschitz constant from random pairs under full-boundary observation, and a
Hoelder exponent fitted on an ensemble of sources under partial observation.
"""
from __future__ import annotations

import csv
import itertools
import logging
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import grid_ops as g
from .adjoint import ObservationConfig, ObservationOperator
from .fields import CoefficientSet, SourceModel
from .geometry import FACES, Domain, DomainMismatchError, SubBoundary, omega_epsilon
from .mhd_solver import State, TraceBundle, Trajectory, extract_traces, solve_forward
from .norms import cell_sobolev_sq, space_time_sq, time_sobolev_sq
from .weights import build_d

log = logging.getLogger(__name__)

ZERO_FLOOR = 1e-8

FULL_TERMS = (
    "u_H2t_H1x", "u_H3t_L2x", "dn_u_H2t_L2x",
    "H_H2t_H1x", "H_H3t_L2x", "dn_H_H2t_L2x",
    "p_H2t_Hhalf",
    "u_snap_H2", "H_snap_H1", "p_snap_H1",
)
PARTIAL_TERMS = (
    "u_H1t_H1x", "u_H2t_L2x", "dn_u_H1t_L2x",
    "H_H1t_H1x", "H_H2t_L2x", "dn_H_H1t_L2x",
    "p_H1t_Hhalf",
    "u_snap_H2", "p_snap_H1",
)
APRIORI_TERMS = ("f_L2Q", "u_H12", "grad_u_H01", "H_H11", "grad_H_H01", "p_H01")

# (trace field, spatial norm, time order) for each boundary term
_FULL_TRACE_SPEC = {
    "u_H2t_H1x": ("u", "H1", 2), "u_H3t_L2x": ("u", "L2", 3), "dn_u_H2t_L2x": ("dn_u", "L2", 2),
    "H_H2t_H1x": ("H", "H1", 2), "H_H3t_L2x": ("H", "L2", 3), "dn_H_H2t_L2x": ("dn_H", "L2", 2),
    "p_H2t_Hhalf": ("p", "Hhalf", 2),
}
_PARTIAL_TRACE_SPEC = {
    "u_H1t_H1x": ("u", "H1", 1), "u_H2t_L2x": ("u", "L2", 2), "dn_u_H1t_L2x": ("dn_u", "L2", 1),
    "H_H1t_H1x": ("H", "H1", 1), "H_H2t_L2x": ("H", "L2", 2), "dn_H_H1t_L2x": ("dn_H", "L2", 1),
    "p_H1t_Hhalf": ("p", "Hhalf", 1),
}


# --------------------------------------------------------------------------
# setup and data


@dataclass
class InverseSetup:
    domain: Domain
    coeffs: CoefficientSet
    source: SourceModel
    t0: float
    faces: tuple = FACES

    def __post_init__(self):
        self.faces = tuple(f for f in FACES if f in set(self.faces))
        if not self.faces:
            raise ValueError("observation needs at least one face")

    def restricted(self, faces) -> "InverseSetup":
        return InverseSetup(self.domain, self.coeffs, self.source, self.t0, tuple(faces))

    def operator(self, include_H_snapshot: bool = True) -> ObservationOperator:
        cfg = ObservationConfig(faces=self.faces, include_H_snapshot=include_H_snapshot)
        return ObservationOperator(self.domain, self.coeffs, self.source, self.t0, cfg)


@dataclass
class ObservationData:
    """Boundary traces over time on the observed faces plus the t0 snapshot."""

    traces: TraceBundle
    trajectory: Trajectory | None = field(default=None, repr=False)

    @property
    def domain(self) -> Domain:
        return self.traces.domain

    @property
    def faces(self) -> tuple:
        return self.traces.faces

    @property
    def snapshot(self) -> dict | None:
        return self.traces.snapshot

    def restrict(self, faces) -> "ObservationData":
        missing = set(faces) - set(self.faces)
        if missing:
            raise ValueError(f"faces {sorted(missing)} were not observed")
        return ObservationData(self.traces.restrict(faces), self.trajectory)

    def __sub__(self, other: "ObservationData") -> "ObservationData":
        if self.domain.key() != other.domain.key() or self.faces != other.faces:
            raise DomainMismatchError("observations on different grids or faces")
        return ObservationData(self.traces - other.traces)

    def scaled(self, a: float) -> "ObservationData":
        return ObservationData(self.traces.scaled(a))

    def is_zero(self) -> bool:
        vals = [v for d in self.traces.values.values() for v in d.values()]
        if self.snapshot is not None:
            vals += list(self.snapshot.values())
        return all(not np.any(v) for v in vals)


class RCheck(NamedTuple):
    ok: bool
    min_magnitude: float
    c0: float


def check_R_assumption(source: SourceModel, t0: float, domain: Domain) -> RCheck:
    """Nonvanishing of R(., t0) over the cell centres; c0 = min |R(x, t0)|^2."""
    X, Y, Z = domain.cell_centers()
    R = source.value(X, Y, Z, t0)
    mag = np.sqrt(np.sum(R ** 2, axis=0))
    m = float(mag.min())
    return RCheck(m > 0.0, m, m * m)


def _require_R(setup: InverseSetup):
    chk = check_R_assumption(setup.source, setup.t0, setup.domain)
    if not chk.ok:
        raise ValueError("R(., t0) vanishes somewhere in the domain")


def forward_observation(f, setup: InverseSetup, keep_trajectory: bool = False) -> ObservationData:
    """Run the homogeneous problem with source R f and observe it."""
    _require_R(setup)
    dom = setup.domain
    f = np.asarray(f, float)
    if f.shape != dom.shape:
        raise DomainMismatchError(f"f has shape {f.shape}, grid is {dom.shape}")
    traj = solve_forward(State.zeros(dom), setup.coeffs, setup.source, dom.T, dom.nt, dom,
                         f=f, t0=setup.t0)
    traces = extract_traces(traj, setup.faces)
    return ObservationData(traces, traj if keep_trajectory else None)


def observation_vector(data: ObservationData, op: ObservationOperator) -> np.ndarray:
    """Pack observed traces and snapshot into the operator's weighted layout."""
    dom = op.domain
    if dom.key() != data.domain.key():
        raise DomainMismatchError("observation and operator live on different grids")
    faces = tuple(f for f in FACES if f in set(op.config.faces))
    if not set(faces) <= set(data.faces):
        raise DomainMismatchError("operator observes faces missing from the data")
    cfg = op.config
    out = np.empty(op.m)
    tr = data.traces.values
    for k in range(dom.nt + 1):
        parts = []
        for f in faces:
            s = np.sqrt(dom.face_area_element(f))
            for name in ("dn_u", "dn_H", "p"):
                parts.append(s * tr[name][f][k].ravel())
        out[k * op.m_trace:(k + 1) * op.m_trace] = np.sqrt(op.tw[k]) * np.concatenate(parts)
    snap = data.snapshot
    if snap is None:
        raise ValueError("observation carries no snapshot")
    from .norms import derivative_stack
    h = dom.h
    parts = []
    for c in range(3):
        parts += derivative_stack(snap["u"][c], h, cfg.snapshot_u_order)
    if cfg.include_H_snapshot:
        for c in range(3):
            parts += derivative_stack(snap["H"][c], h, cfg.snapshot_H_order)
    parts += derivative_stack(snap["p"], h, cfg.snapshot_p_order)
    out[-op.m_snap:] = np.sqrt(dom.cell_volume) * np.concatenate([a.ravel() for a in parts])
    return out


def adjoint_observation(residual, op: ObservationOperator) -> np.ndarray:
    r = np.asarray(residual, float).ravel()
    if r.size != op.m:
        raise DomainMismatchError(f"residual has {r.size} entries, operator produces {op.m}")
    return op.adjoint(r)


# --------------------------------------------------------------------------
# reconstruction


class CGStagnation(RuntimeWarning):
    pass


@dataclass
class ReconstructionResult:
    f: np.ndarray
    iterations: int
    residual: float
    converged: bool
    stagnated: bool
    residual_history: list
    reg: float
    tol: float

    def summary(self) -> dict:
        return {"iterations": self.iterations, "residual": self.residual, "converged": self.converged,
                "stagnated": self.stagnated, "reg": self.reg, "tol": self.tol}


def conjugate_gradient(apply, b, tol: float = 1e-10, maxiter: int = 2000, stall_window: int = 100):
    """CG for a symmetric positive semidefinite operator.

    Stops when ||r|| <= tol ||b||.  If the best residual has not dropped by 1%
    over ``stall_window`` iterations the run is declared stagnated.
    Returns (x, iterations, history, converged, stagnated).
    """
    b = np.asarray(b, float)
    x = np.zeros_like(b)
    bn = g.norm(b)
    if bn == 0.0:
        return x, 0, [0.0], True, False
    r = b.copy()
    p = r.copy()
    rr = g.dot(r, r)
    hist = [1.0]
    best, best_it = 1.0, 0
    for it in range(1, maxiter + 1):
        Ap = apply(p)
        pAp = g.dot(p, Ap)
        if pAp <= 0.0:
            return x, it - 1, hist, False, True
        a = rr / pAp
        x = x + a * p
        r = r - a * Ap
        rr_new = g.dot(r, r)
        rel = float(np.sqrt(rr_new) / bn)
        hist.append(rel)
        if rel <= tol:
            return x, it, hist, True, False
        if rel < 0.99 * best:
            best, best_it = rel, it
        elif it - best_it >= stall_window:
            return x, it, hist, False, True
        p = r + (rr_new / rr) * p
        rr = rr_new
    return x, maxiter, hist, False, False


def reconstruct_f(data, op: ObservationOperator, reg: float = 1e-12, tol: float = 1e-10,
                  maxiter: int = 2000) -> ReconstructionResult:
    """Solve (A^T A + reg I) f = A^T y by conjugate gradients."""
    if reg < 0:
        raise ValueError("reg must be non-negative")
    y = observation_vector(data, op) if isinstance(data, ObservationData) else np.asarray(data, float)
    if y.size != op.m:
        raise DomainMismatchError(f"data has {y.size} entries, operator produces {op.m}")
    shape = op.domain.shape
    rhs = op.adjoint(y).ravel()

    def normal(v):
        return op.adjoint(op.forward(v.reshape(shape))).ravel() + reg * v

    x, it, hist, conv, stag = conjugate_gradient(normal, rhs, tol, maxiter)
    if stag:
        log.warning("CG stagnated after %d iterations, residual %.3e; history tail %s",
                    it, hist[-1], [f"{v:.2e}" for v in hist[-5:]])
    elif not conv:
        log.warning("CG reached %d iterations without meeting tol %.1e (residual %.3e)", it, tol, hist[-1])
    return ReconstructionResult(x.reshape(shape), it, hist[-1], conv, stag, hist, reg, tol)


def band_limited_field(domain: Domain, seed: int, kmax: int = 3, decay: float = 2.0) -> np.ndarray:
    """Random sine series with mode amplitudes ~ (1 + |k|^2)^(-decay/2), unit L2 norm."""
    rng = np.random.default_rng(seed)
    X, Y, Z = domain.cell_centers()
    L = domain.lengths
    f = np.zeros(domain.shape)
    for k in itertools.product(range(1, kmax + 1), repeat=3):
        amp = rng.standard_normal() * (1.0 + sum(ki * ki for ki in k)) ** (-decay / 2)
        f += amp * (np.sin(np.pi * k[0] * X / L[0]) * np.sin(np.pi * k[1] * Y / L[1])
                    * np.sin(np.pi * k[2] * Z / L[2]))
    return f / np.sqrt(np.sum(f ** 2) * domain.cell_volume)


def l2(a, domain: Domain, mask=None) -> float:
    a = np.asarray(a, float)
    if mask is not None:
        a = np.where(mask, a, 0.0)
    return float(np.sqrt(np.sum(a ** 2) * domain.cell_volume))


def add_noise(y, level: float, seed: int) -> np.ndarray:
    """Additive Gaussian noise with norm ``level * ||y||``."""
    rng = np.random.default_rng(seed)
    xi = rng.standard_normal(y.shape)
    return y + level * g.norm(y) * xi / g.norm(xi)


# --------------------------------------------------------------------------
# data norms


@dataclass
class DataNorm:
    """Squared norm terms of an observation; ``value`` is the square root of their sum."""

    terms: dict
    mode: str
    faces: tuple

    @property
    def value(self) -> float:
        return float(np.sqrt(sum(self.terms.values())))

    def to_dict(self) -> dict:
        return {"mode": self.mode, "faces": list(self.faces), "value": self.value, "terms": dict(self.terms)}


def _check_time_resolution(domain: Domain, order: int):
    if domain.nt + 1 < order + 2:
        raise ValueError(f"{domain.nt + 1} time nodes cannot support time derivatives of order {order}")


def _trace_terms(data: ObservationData, spec: dict, faces) -> dict:
    dom = data.domain
    out = {}
    for name, (field_name, space, order) in spec.items():
        _check_time_resolution(dom, order)
        tr = {f: data.traces.values[field_name][f] for f in faces}
        out[name] = time_sobolev_sq(tr, dom, space, order)
    return out


def _snapshot_terms(data: ObservationData, with_H: bool) -> dict:
    snap = data.snapshot
    if snap is None:
        raise ValueError("observation carries no snapshot")
    dom = data.domain
    out = {"u_snap_H2": cell_sobolev_sq(snap["u"], dom, 2)}
    if with_H:
        out["H_snap_H1"] = cell_sobolev_sq(snap["H"], dom, 1)
    out["p_snap_H1"] = cell_sobolev_sq(snap["p"], dom, 1)
    return out


def data_norm_full(data: ObservationData) -> DataNorm:
    """Full-boundary data norm: traces to third order in time plus the snapshot norms."""
    if set(data.faces) != set(FACES):
        raise ValueError("full-boundary norm needs traces on every face")
    terms = _trace_terms(data, _FULL_TRACE_SPEC, FACES)
    terms.update(_snapshot_terms(data, True))
    return DataNorm({k: terms[k] for k in FULL_TERMS}, "full", FACES)


def data_norm_partial(data: ObservationData, gamma) -> DataNorm:
    """Partial-boundary data norm on the faces of ``gamma``; only those faces are read."""
    faces = gamma.ordered() if isinstance(gamma, SubBoundary) else tuple(f for f in FACES if f in set(gamma))
    missing = set(faces) - set(data.faces)
    if missing:
        raise ValueError(f"faces {sorted(missing)} were not observed")
    terms = _trace_terms(data, _PARTIAL_TRACE_SPEC, faces)
    terms.update(_snapshot_terms(data, False))
    return DataNorm({k: terms[k] for k in PARTIAL_TERMS}, "partial", faces)


@dataclass
class AprioriBound:
    terms: dict

    @property
    def M(self) -> float:
        return float(np.sqrt(sum(self.terms.values())))

    def to_dict(self) -> dict:
        return {"M": self.M, "terms": dict(self.terms)}


def _spatial_gradients(a, h):
    """Stack of spatial derivatives of a time series of cell fields (space on the last three axes)."""
    return np.stack([np.gradient(a, h[j], axis=j - 3, edge_order=2) for j in range(3)])


def apriori_bound(traj: Trajectory, f) -> AprioriBound:
    """A priori norm of (f, u, H, p) over the space-time cylinder.

    The x-independent-in-time f is integrated over time, giving T ||f||^2.
    Time is axis 0 of every series; anisotropic norms take spatial and time
    derivatives separately.
    """
    dom = traj.domain
    h = dom.h
    f = np.asarray(f, float)
    uc = np.moveaxis(traj.cell_velocity(), 1, 0)  # components first, then time
    H = np.moveaxis(traj.H, 1, 0)
    p = traj.p - traj.p.mean(axis=(1, 2, 3), keepdims=True)

    def comp_sum(a, x_order, t_order):
        return sum(space_time_sq(c, dom, x_order, t_order) for c in a)

    terms = {
        "f_L2Q": dom.T * float(np.sum(f ** 2) * dom.cell_volume),
        "u_H12": comp_sum(uc, 1, 2),
        "grad_u_H01": sum(comp_sum(_spatial_gradients(c, h), 0, 1) for c in uc),
        "H_H11": comp_sum(H, 1, 1),
        "grad_H_H01": sum(comp_sum(_spatial_gradients(c, h), 0, 1) for c in H),
        "p_H01": space_time_sq(p, dom, 0, 1),
    }
    return AprioriBound({k: terms[k] for k in APRIORI_TERMS})


# --------------------------------------------------------------------------
# stability experiments


@dataclass
class StabilityReport:
    kind: str
    samples: list
    fit: dict
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "fit": self.fit, "meta": self.meta, "samples": self.samples}

    def write_json(self, path):
        from .io import write_json
        write_json(path, self.to_dict())

    def write_csv(self, path):
        if not self.samples:
            open(path, "w").close()
            return
        cols = sorted({k for s in self.samples for k in s})
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=cols)
            w.writeheader()
            for s in self.samples:
                w.writerow({k: _jsonable(s.get(k, "")) for k in cols})


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (np.floating, np.integer, np.bool_)):
        return v.item()
    return v


def loglog_slope(x, y) -> tuple[float, float]:
    """Least squares slope and intercept of log y against log x."""
    lx, ly = np.log(np.asarray(x, float)), np.log(np.asarray(y, float))
    A = np.column_stack([lx, np.ones_like(lx)])
    (slope, icpt), *_ = np.linalg.lstsq(A, ly, rcond=None)
    return float(slope), float(icpt)


def lipschitz_experiment(setup: InverseSetup, n_samples: int = 10, noise_levels=(1e-3, 1e-2), seed: int = 0,
                         reg: float = 1e-12, tol: float = 1e-10, op: ObservationOperator | None = None,
                         kmax: int = 3) -> StabilityReport:
    """Ratios ||f1 - f2|| / D(data1 - data2) over random pairs, plus the noise response."""
    if set(setup.faces) != set(FACES):
        raise ValueError("the Lipschitz experiment observes the whole boundary")
    _require_R(setup)
    dom = setup.domain
    samples = []
    for i in range(n_samples):
        f1 = band_limited_field(dom, seed + 2 * i, kmax)
        f2 = band_limited_field(dom, seed + 2 * i + 1, kmax)
        df = l2(f1 - f2, dom)
        if df == 0.0:
            samples.append({"sample": i, "skipped": True})
            continue
        diff = forward_observation(f1, setup) - forward_observation(f2, setup)
        D = data_norm_full(diff)
        ratio = df / D.value if D.value > 0 else np.inf
        samples.append({"sample": i, "skipped": False, "df": df, "D": D.value, "ratio": ratio})
    ratios = [s["ratio"] for s in samples if not s["skipped"]]
    fit = {"C_hat": float(max(ratios)) if ratios else None,
           "all_finite": bool(ratios) and all(np.isfinite(ratios))}

    op = op or setup.operator()
    f = band_limited_field(dom, seed + 10_000, kmax)
    y = op.forward(f)
    errs = []
    for j, level in enumerate(noise_levels):
        res = reconstruct_f(add_noise(y, level, seed + 20_000 + j), op, reg, tol)
        err = l2(res.f - f, dom) / l2(f, dom)
        errs.append(err)
        samples.append({"noise_level": level, "rel_error": err, "cg_iterations": res.iterations,
                        "cg_converged": res.converged})
    slope, icpt = loglog_slope(noise_levels, errs) if len(noise_levels) >= 2 else (np.nan, np.nan)
    fit.update({"noise_slope": slope, "noise_intercept": icpt, "noise_levels": list(noise_levels),
                "noise_errors": errs})
    return StabilityReport("lipschitz", samples, fit, {"seed": seed, "reg": reg, "tol": tol})


def fit_holder(norm_f, M, D) -> dict:
    """Fit log||f|| = log C + (1 - theta) log M + theta log D.

    Written as log(||f||/M) = log C + theta log(D/M): two parameters, C and theta.
    """
    nf, M, D = (np.asarray(a, float) for a in (norm_f, M, D))
    yv = np.log(nf / M)
    xv = np.log(D / M)
    A = np.column_stack([np.ones_like(xv), xv])
    (logc, theta), *_ = np.linalg.lstsq(A, yv, rcond=None)
    resid = yv - A @ np.array([logc, theta])
    ss_tot = float(np.sum((yv - yv.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else np.nan
    return {"theta_raw": float(theta), "theta": float(np.clip(theta, np.finfo(float).tiny, 1.0)),
            "C_hat": float(np.exp(logc)), "r2": r2, "residuals": resid.tolist()}


HOLDER_BANDS = tuple(itertools.product((2, 4, 6), (0.0, 1.0, 2.0, 3.0)))


def holder_experiment(setup: InverseSetup, eps: float, n_samples: int = 12, seed: int = 0,
                      d_kind: str = "face_linear", region_faces=None, bands=HOLDER_BANDS,
                      reg: float = 1e-12, tol: float = 1e-10,
                      op: ObservationOperator | None = None) -> StabilityReport:
    """Hoelder fit of ||f|| on {d > 4 eps} against the a priori bound M and the partial data norm D.

    Sample i draws a band-limited f with (kmax, decay) = bands[i % len(bands)],
    so the ensemble spans smooth to rough fields.  A zero-data control sample
    is reconstructed from its (vanishing) observation; the reconstruction must
    vanish on the region.  ``region_faces`` selects the boundary portion used
    to build d (defaults to the observed faces).
    """
    _require_R(setup)
    dom = setup.domain
    gamma = SubBoundary.from_faces(dom, region_faces or setup.faces)
    d = build_d(dom, gamma, d_kind)
    region = omega_epsilon(dom, d.values, 4 * eps)
    if region.count == 0:
        raise ValueError(f"region d > {4 * eps} is empty")
    samples = []
    for i in range(n_samples):
        kmax, decay = bands[i % len(bands)]
        f = band_limited_field(dom, seed + i, kmax, decay)
        obs = forward_observation(f, setup, keep_trajectory=True)
        D = data_norm_partial(obs, setup.faces).value
        M = apriori_bound(obs.trajectory, f).M
        samples.append({"sample": i, "kmax": kmax, "decay": decay, "norm_f_region": l2(f, dom, region.mask),
                        "M": M, "D": D})
    rows = [r for r in samples if r["D"] > 0 and r["norm_f_region"] > 0]
    fit = fit_holder([r["norm_f_region"] for r in rows], [r["M"] for r in rows],
                     [r["D"] for r in rows]) if len(rows) >= 3 else {}
    if fit:
        # case split: where D >= M the bound must hold with theta = 1
        big = [r for r in rows if r["D"] >= r["M"]]
        fit["case_D_ge_M"] = {"count": len(big),
                              "holds": all(r["norm_f_region"] <= fit["C_hat"] * r["D"] for r in big)}
    # zero-data control: D = 0 must force f = 0 on the region
    op = op or setup.operator(include_H_snapshot=False)
    obs0 = forward_observation(np.zeros(dom.shape), setup)
    D0 = data_norm_partial(obs0, setup.faces).value
    res0 = reconstruct_f(observation_vector(obs0, op), op, reg, tol)
    nf0 = l2(res0.f, dom, region.mask)
    samples.append({"sample": "zero_data", "kmax": 0, "decay": 0.0, "norm_f_region": nf0, "M": 0.0, "D": D0})
    fit["zero_control"] = {"D": D0, "norm_f_region": nf0, "floor": ZERO_FLOOR,
                           "passed": bool(D0 == 0.0 and nf0 <= ZERO_FLOOR)}
    meta = {"eps": eps, "faces": list(setup.faces), "region_fraction": region.fraction, "seed": seed,
            "d_kind": d_kind}
    return StabilityReport("holder", samples, fit, meta)
