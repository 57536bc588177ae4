"""Linearized incompressible MHD on a staggered grid.

Velocity lives on cell faces, pressure and magnetic field at cell centres.
Time stepping is first-order IMEX: diffusion implicit (exact transform
solves), transport and coupling terms explicit, incompressibility through an
incremental pressure-correction projection.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import grid_ops as g
from .fields import CoefficientSet, SourceModel
from .geometry import FACES, Domain, face_axis, tangential_axes

log = logging.getLogger(__name__)


class NumericalError(RuntimeError):
    """A numerical run failed (instability, CFL violation, non-finite values)."""


class CFLError(NumericalError):
    pass


@dataclass
class BoundaryData:
    """Dirichlet data for u and H as functions of (X, Y, Z, t) returning (3, ...)."""

    u_fn: Callable | None = None
    H_fn: Callable | None = None


@dataclass
class Walls:
    """Wall values at one instant.

    ``u[c][face]``: component c on a wall.  For walls normal to axis c the
    array sits on that wall's face centres; otherwise it sits on the nodes of
    axis c (matching the face layout of component c).
    ``H[c][face]``: component c at wall face centres.
    """

    u: list
    H: list


class MHDOperators:
    """Coefficient samples, stencil applications and fast solvers for one grid."""

    def __init__(self, domain: Domain, coeffs: CoefficientSet):
        self.domain = domain
        self.coeffs = coeffs
        self.n = domain.n
        self.h = domain.h
        n, h = self.n, self.h
        self.face_pts = []
        self.B1_f, self.JB2_f = [], []
        for c in range(3):
            X, Y, Z = (interior_points(domain.face_centers(c)[k], c) for k in range(3))
            self.face_pts.append((X, Y, Z))
            self.B1_f.append(coeffs.B1.value(X, Y, Z))
            self.JB2_f.append(coeffs.B2.jacobian(X, Y, Z)[c])
        X, Y, Z = domain.cell_centers()
        self.cell_pts = (X, Y, Z)
        self.C1 = coeffs.C1.value(X, Y, Z)
        self.JC2 = coeffs.C2.jacobian(X, Y, Z)
        self.C3 = coeffs.C3.value(X, Y, Z)
        self.JC3 = coeffs.C3.jacobian(X, Y, Z)
        self.C4 = coeffs.C4.value(X, Y, Z)
        self.JC5 = coeffs.C5.jacobian(X, Y, Z)
        self.D1 = coeffs.D1.value(X, Y, Z)
        self.JD2 = coeffs.D2.jacobian(X, Y, Z)
        self.has_L1 = not (coeffs.C1.is_zero and coeffs.C2.is_zero and coeffs.C3.is_zero)
        self.vel_solver = [g.SpectralSolver(n, h, g.face_kinds(c)) for c in range(3)]
        self.cell_solver = g.SpectralSolver(n, h, ("cell",) * 3)
        self.pressure_solver = g.SpectralSolver(n, h, ("neumann",) * 3)

    # ---------------------------------------------------------------- walls
    def walls(self, bc: BoundaryData | None, t: float, flux_correct: bool = False) -> Walls | None:
        if bc is None or (bc.u_fn is None and bc.H_fn is None):
            return None
        dom = self.domain
        u = [dict() for _ in range(3)]
        H = [dict() for _ in range(3)]
        for face in FACES:
            axis, _ = face_axis(face)
            Pc = dom.wall_points(face)
            Hv = bc.H_fn(*Pc, t) if bc.H_fn is not None else np.zeros((3,) + Pc[0].shape)
            uc = bc.u_fn(*Pc, t) if bc.u_fn is not None else np.zeros((3,) + Pc[0].shape)
            for c in range(3):
                H[c][face] = np.asarray(Hv[c], float) * np.ones_like(Pc[0])
                if c == axis:
                    u[c][face] = np.asarray(uc[c], float) * np.ones_like(Pc[0])
                else:
                    Pn = dom.wall_points(face, normal_axis_grid=c)
                    val = bc.u_fn(*Pn, t)[c] if bc.u_fn is not None else 0.0
                    u[c][face] = np.asarray(val, float) * np.ones_like(Pn[0])
        w = Walls(u, H)
        if flux_correct:
            self._correct_flux(w)
        return w

    def net_flux(self, w: Walls) -> float:
        flux = 0.0
        for c in range(3):
            lo, hi = FACES[2 * c], FACES[2 * c + 1]
            dA = self.domain.face_area_element(lo)
            flux += (np.sum(w.u[c][hi]) - np.sum(w.u[c][lo])) * dA
        return float(flux)

    def _correct_flux(self, w: Walls):
        area = 2.0 * sum(self.domain.lengths[a] * self.domain.lengths[b]
                         for a, b in ((1, 2), (0, 2), (0, 1)))
        shift = self.net_flux(w) / area
        for c in range(3):
            w.u[c][FACES[2 * c + 1]] = w.u[c][FACES[2 * c + 1]] - shift
            w.u[c][FACES[2 * c]] = w.u[c][FACES[2 * c]] + shift

    @staticmethod
    def _uw(w, c, b):
        """Wall values (lo, hi) of velocity component c on the walls normal to b."""
        if w is None:
            return None, None
        return w.u[c][FACES[2 * b]], w.u[c][FACES[2 * b + 1]]

    @staticmethod
    def _hw(w, c, b):
        if w is None:
            return None, None
        return w.H[c][FACES[2 * b]], w.H[c][FACES[2 * b + 1]]

    def _uw_cell(self, w, c, b):
        """Tangential wall values of u_c averaged onto cell locations along c."""
        lo, hi = self._uw(w, c, b)
        if lo is None:
            return None, None
        ax = c if c < b else c - 1
        avg = lambda a: 0.5 * (np.take(a, range(1, a.shape[ax]), axis=ax)
                               + np.take(a, range(0, a.shape[ax] - 1), axis=ax))
        return avg(lo), avg(hi)

    # ---------------------------------------------------------- derivatives
    def grad_face(self, u, w, c):
        """Derivatives of u_c along each axis at interior c-faces."""
        h = self.h
        out = []
        for b in range(3):
            if b == c:
                out.append(g.d1_node(u[c], c, h[c]))
            else:
                lo, hi = self._uw(w, c, b)
                out.append(g.interior(g.d1_cell(u[c], b, h[b], lo, hi), c))
        return out

    def velocity_at_faces(self, u, c):
        """All velocity components interpolated to interior c-faces."""
        out = []
        for b in range(3):
            if b == c:
                out.append(g.interior(u[c], c))
            else:
                v = g.avg_node_to_cell(u[b], b)
                out.append(g.avg_cell_to_inner_node(v, c))
        return out

    def velocity_at_cells(self, u):
        return [g.avg_node_to_cell(u[c], c) for c in range(3)]

    def grad_cell_velocity(self, u, w):
        """J[c][b] = d u_c / d x_b at cell centres."""
        h = self.h
        uc = self.velocity_at_cells(u)
        J = []
        for c in range(3):
            row = []
            for b in range(3):
                if b == c:
                    row.append((u[c][g.idx(c, slice(1, None))] - u[c][g.idx(c, slice(None, -1))]) / h[c])
                else:
                    lo, hi = self._uw_cell(w, c, b)
                    row.append(g.d1_cell(uc[c], b, h[b], lo, hi))
            J.append(row)
        return uc, J

    def grad_cell_H(self, H, w):
        h = self.h
        return [[g.d1_cell(H[c], b, h[b], *self._hw(w, c, b)) for b in range(3)] for c in range(3)]

    # ---------------------------------------------------------- operators
    def L1_cells(self, H, w=None):
        """(C1.grad)H + (H.grad)C2 + grad(C3.H) at cell centres."""
        dH = self.grad_cell_H(H, w)
        out = []
        for c in range(3):
            v = sum(self.C1[b] * dH[c][b] for b in range(3))
            v = v + sum(H[b] * self.JC2[c, b] for b in range(3))
            v = v + sum(self.JC3[b, c] * H[b] + self.C3[b] * dH[b][c] for b in range(3))
            out.append(v)
        return out

    def L1_faces(self, H, w=None):
        cells = self.L1_cells(H, w)
        return [g.avg_cell_to_inner_node(cells[c], c) for c in range(3)]

    def L2_cells(self, u, w=None):
        """(C4.grad)u + (u.grad)C5 at cell centres."""
        uc, J = self.grad_cell_velocity(u, w)
        return [sum(self.C4[b] * J[c][b] for b in range(3)) + sum(uc[b] * self.JC5[c, b] for b in range(3))
                for c in range(3)]

    def momentum_transport(self, u, w=None):
        """(B1.grad)u + (u.grad)B2 at interior faces."""
        out = []
        for c in range(3):
            du = self.grad_face(u, w, c)
            uf = self.velocity_at_faces(u, c)
            B1 = self.B1_f[c]
            out.append(sum(B1[b] * du[b] for b in range(3)) + sum(uf[b] * self.JB2_f[c][b] for b in range(3)))
        return out

    def induction_transport(self, H, w=None):
        """(D1.grad)H + (H.grad)D2 at cell centres."""
        dH = self.grad_cell_H(H, w)
        return [sum(self.D1[b] * dH[c][b] for b in range(3)) + sum(H[b] * self.JD2[c, b] for b in range(3))
                for c in range(3)]

    def momentum_explicit(self, u, H, w=None):
        tr = self.momentum_transport(u, w)
        if self.has_L1:
            L1 = self.L1_faces(H, w)
            return [-(tr[c] + L1[c]) for c in range(3)]
        return [-tr[c] for c in range(3)]

    def induction_explicit(self, u, H, w=None):
        tr = self.induction_transport(H, w)
        L2 = self.L2_cells(u, w)
        return [-(tr[c] + L2[c]) for c in range(3)]

    def laplacian_face(self, u_c, c, w=None):
        """Vector Laplacian of component c at interior faces (walls in ``u_c``)."""
        h = self.h
        out = g.d2_node(u_c, c, h[c])
        for b in range(3):
            if b != c:
                lo, hi = self._uw(w, c, b)
                out = out + g.interior(g.d2_cell(u_c, b, h[b], lo, hi), c)
        return out

    def laplacian_cell(self, a, c, w=None):
        h = self.h
        return sum(g.d2_cell(a, b, h[b], *self._hw(w, c, b)) for b in range(3))

    def source_faces(self, source: SourceModel | None, f, t):
        if source is None or f is None:
            return None
        out = []
        for c in range(3):
            R = source.value(*self.face_pts[c], t)[c]
            out.append(R * g.avg_cell_to_inner_node(f, c))
        return out

    def check_cfl(self, dt: float, limit: float = 1.0):
        cf = self.coeffs
        L = self.domain.lengths
        rate = 0.0
        for v in (cf.B1, cf.D1, cf.C1, cf.C4):
            rate = max(rate, v.sup_bound(L) * sum(1.0 / hh for hh in self.h))
        react = max(v.sup_bound(L) for v in (cf.B2, cf.C2, cf.C3, cf.C5, cf.D2))
        # jacobian magnitudes are bounded through the field bound times the largest wavenumber
        for v in (cf.B2, cf.C2, cf.C3, cf.C5, cf.D2):
            kmax = max([np.linalg.norm(k) for _, k, _ in v.trig] + [0.0])
            react = max(react, np.abs(np.asarray(v.matrix)).max() + kmax * sum(np.linalg.norm(a) for a, _, _ in v.trig))
        if dt * rate > limit or dt * react > limit:
            raise CFLError(f"explicit terms violate the step restriction: dt*transport={dt * rate:.3g}, "
                           f"dt*reaction={dt * react:.3g} (limit {limit})")


def interior_points(a, c):
    return a[g.idx(c, slice(1, -1))]


# --------------------------------------------------------------------------
# state containers


@dataclass
class State:
    u: list           # three face arrays, walls included
    p: np.ndarray     # cells
    H: np.ndarray     # (3, nx, ny, nz)
    t: float = 0.0

    @classmethod
    def zeros(cls, domain: Domain, t: float = 0.0) -> "State":
        n = domain.n
        return cls([np.zeros(g.face_shape(n, c)) for c in range(3)], np.zeros(n), np.zeros((3,) + tuple(n)), t)

    @classmethod
    def from_functions(cls, domain: Domain, u_fn=None, p_fn=None, H_fn=None, t: float = 0.0) -> "State":
        st = cls.zeros(domain, t)
        for c in range(3):
            if u_fn is not None:
                st.u[c] = np.asarray(u_fn(*domain.face_centers(c), t)[c], float) * np.ones(g.face_shape(domain.n, c))
        X, Y, Z = domain.cell_centers()
        if p_fn is not None:
            st.p = np.asarray(p_fn(X, Y, Z, t), float) * np.ones(domain.n)
            st.p = st.p - st.p.mean()
        if H_fn is not None:
            st.H = np.asarray(H_fn(X, Y, Z, t), float) * np.ones((3,) + tuple(domain.n))
        return st

    def copy(self) -> "State":
        return State([a.copy() for a in self.u], self.p.copy(), self.H.copy(), self.t)


@dataclass
class Trajectory:
    domain: Domain
    u: list                 # three arrays (nt+1, face shape)
    p: np.ndarray           # (nt+1, n)
    H: np.ndarray           # (nt+1, 3, n)
    bc: BoundaryData | None = None
    f: np.ndarray | None = None
    t0: float | None = None
    div_history: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def times(self) -> np.ndarray:
        return self.domain.times()

    @property
    def snapshot_index(self) -> int | None:
        return None if self.t0 is None else self.domain.nearest_node(self.t0)

    def state(self, k: int) -> State:
        return State([a[k] for a in self.u], self.p[k], self.H[k], float(self.times[k]))

    def cell_velocity(self) -> np.ndarray:
        """Velocity averaged to cell centres, shape (nt+1, 3, n)."""
        return np.stack([g.avg_node_to_cell(self.u[c], c) for c in range(3)], axis=1)

    def walls(self, k: int, ops: "MHDOperators") -> Walls | None:
        """Wall values actually used at node k (the stored normal faces are authoritative)."""
        w = ops.walls(self.bc, float(self.times[k]))
        if w is not None:
            for c in range(3):
                w.u[c][FACES[2 * c]] = self.u[c][k][g.idx(c, 0)]
                w.u[c][FACES[2 * c + 1]] = self.u[c][k][g.idx(c, -1)]
        return w


# --------------------------------------------------------------------------
# stepping


def project_div_free(u: list, ops: MHDOperators):
    """Remove the discrete gradient part of a face field; walls are kept.

    Returns (projected field, potential q, max |div|).
    """
    h = ops.h
    div = g.divergence(u, h)
    q = ops.pressure_solver.poisson_pinv(div)
    gq = g.gradient_to_faces(q, h)
    out = []
    for c in range(3):
        a = u[c].copy()
        a[g.idx(c, slice(1, -1))] -= gq[c]
        out.append(a)
    res = float(np.abs(g.divergence(out, h)).max())
    return out, q, res


def step_forward(state: State, ops: MHDOperators, dt: float, bc: BoundaryData | None = None,
                 source: SourceModel | None = None, f=None, forcing: Callable | None = None) -> State:
    """Advance one step; returns the new state (the input is not modified)."""
    cf = ops.coeffs
    h = ops.h
    t1 = state.t + dt
    w0 = ops.walls(bc, state.t)
    if w0 is not None:
        for c in range(3):
            w0.u[c][FACES[2 * c]] = state.u[c][g.idx(c, 0)]
            w0.u[c][FACES[2 * c + 1]] = state.u[c][g.idx(c, -1)]
    w1 = ops.walls(bc, t1, flux_correct=True)
    Eu = ops.momentum_explicit(state.u, state.H, w0)
    EH = ops.induction_explicit(state.u, state.H, w0)
    Gp = g.gradient_to_faces(state.p, h)
    S = ops.source_faces(source, f, t1)
    Fu, FH = forcing(t1) if forcing is not None else (None, None)
    new_u = []
    for c in range(3):
        rhs = g.interior(state.u[c], c) + dt * (Eu[c] - Gp[c])
        if S is not None:
            rhs = rhs + dt * S[c]
        if Fu is not None:
            rhs = rhs + dt * Fu[c]
        lo, hi = (None, None) if w1 is None else (w1.u[c][FACES[2 * c]], w1.u[c][FACES[2 * c + 1]])
        if w1 is not None:
            zero = g.embed_interior(np.zeros(g.face_interior_shape(ops.n, c)), c, lo, hi)
            rhs = rhs + dt * cf.nu * ops.laplacian_face(zero, c, w1)
        ustar = ops.vel_solver[c].helmholtz(rhs, dt * cf.nu)
        new_u.append(g.embed_interior(ustar, c, lo, hi))
    new_u, q, _ = project_div_free(new_u, ops)
    p = state.p + q / dt
    p = p - p.mean()
    newH = np.empty_like(state.H)
    for c in range(3):
        rhs = state.H[c] + dt * EH[c]
        if FH is not None:
            rhs = rhs + dt * FH[c]
        if w1 is not None:
            rhs = rhs + dt * cf.kappa * ops.laplacian_cell(np.zeros(ops.n), c, w1)
        newH[c] = ops.cell_solver.helmholtz(rhs, dt * cf.kappa)
    return State(new_u, p, newH, t1)


def solve_forward(state0: State, coeffs: CoefficientSet, source: SourceModel | None, T: float, nt: int,
                  domain: Domain, bc: BoundaryData | None = None, f=None, t0: float | None = None,
                  forcing: Callable | None = None, ops: MHDOperators | None = None,
                  project_initial: bool = True, div_tol: float = 1e-10) -> Trajectory:
    """Integrate from ``state0`` over [0, T] with ``nt`` steps and record every node."""
    if ops is None:
        ops = MHDOperators(domain, coeffs)
    dt = T / nt
    ops.check_cfl(dt)
    st = state0.copy()
    if project_initial:
        if bc is not None:
            w = ops.walls(bc, st.t, flux_correct=True)
            if w is not None:
                for c in range(3):
                    st.u[c][g.idx(c, 0)] = w.u[c][FACES[2 * c]]
                    st.u[c][g.idx(c, -1)] = w.u[c][FACES[2 * c + 1]]
        st.u, _, _ = project_div_free(st.u, ops)
    n = domain.n
    U = [np.empty((nt + 1,) + g.face_shape(n, c)) for c in range(3)]
    P = np.empty((nt + 1,) + tuple(n))
    Hs = np.empty((nt + 1, 3) + tuple(n))
    div = np.empty(nt + 1)

    def record(k, s):
        for c in range(3):
            U[c][k] = s.u[c]
        P[k] = s.p
        Hs[k] = s.H
        div[k] = float(np.abs(g.divergence(s.u, ops.h)).max())

    record(0, st)
    for k in range(1, nt + 1):
        st = step_forward(st, ops, dt, bc, source, f, forcing)
        if not (np.isfinite(st.p).all() and np.isfinite(st.H).all() and all(np.isfinite(a).all() for a in st.u)):
            raise NumericalError(f"non-finite values at step {k}")
        record(k, st)
        if div[k] > div_tol * max(1.0, max(np.abs(a).max() for a in st.u) / min(ops.h)):
            log.warning("divergence %.3e above tolerance at step %d", div[k], k)
    return Trajectory(domain, U, P, Hs, bc=bc, f=None if f is None else np.asarray(f), t0=t0, div_history=div)


def check_weak_div_conditions(traj: Trajectory, tol: float = 1e-8, ops: MHDOperators | None = None) -> dict:
    """Discrete divergence of the time derivative and of the vector Laplacian of u.

    The Laplacian check is taken over cells one layer away from the walls,
    where it involves no ghost values.
    """
    dom = traj.domain
    ops = ops or MHDOperators(dom, CoefficientSet())
    h = dom.h
    dt = dom.dt
    nt = dom.nt
    div_dt = 0.0
    div_lap = 0.0
    for k in range(nt + 1):
        if k < nt:
            du = [(traj.u[c][k + 1] - traj.u[c][k]) / dt for c in range(3)]
            div_dt = max(div_dt, float(np.abs(g.divergence(du, h)).max()))
        w = traj.walls(k, ops)
        lap = []
        for c in range(3):
            lap.append(g.embed_interior(ops.laplacian_face(traj.u[c][k], c, w), c))
        dv = g.divergence(lap, h)[1:-1, 1:-1, 1:-1]
        div_lap = max(div_lap, float(np.abs(dv).max()) if dv.size else 0.0)
    return {"div_dt_u": div_dt, "div_lap_u": div_lap, "passed": bool(div_dt <= tol and div_lap <= tol)}


# --------------------------------------------------------------------------
# boundary traces and snapshot


TRACE_FIELDS = ("u", "dn_u", "H", "dn_H", "p")


@dataclass
class TraceBundle:
    """Boundary traces at every time node plus the interior snapshot at t0.

    Each entry of ``values[name][face]`` has shape (nt+1, 3, na, nb) for the
    vector quantities and (nt+1, na, nb) for the pressure; all live on the
    face centres of the wall.
    """

    domain: Domain
    faces: tuple
    values: dict
    snapshot_index: int | None
    snapshot: dict | None
    t0: float | None = None

    def restrict(self, faces) -> "TraceBundle":
        faces = tuple(f for f in FACES if f in set(faces))
        vals = {k: {f: v[f] for f in faces} for k, v in self.values.items()}
        return TraceBundle(self.domain, faces, vals, self.snapshot_index, self.snapshot, self.t0)

    def scaled(self, a: float) -> "TraceBundle":
        vals = {k: {f: a * v for f, v in d.items()} for k, d in self.values.items()}
        snap = None if self.snapshot is None else {k: a * v for k, v in self.snapshot.items()}
        return TraceBundle(self.domain, self.faces, vals, self.snapshot_index, snap, self.t0)

    def __sub__(self, other: "TraceBundle") -> "TraceBundle":
        vals = {k: {f: v - other.values[k][f] for f, v in d.items()} for k, d in self.values.items()}
        snap = None if self.snapshot is None else {k: v - other.snapshot[k] for k, v in self.snapshot.items()}
        return TraceBundle(self.domain, self.faces, vals, self.snapshot_index, snap, self.t0)


def _normal_deriv_cell(a, wall, axis, side, h):
    """Outward normal derivative at the wall of a cell-located quantity."""
    if side == 0:
        y0 = a[g.idx(axis, 0)]
        y1 = a[g.idx(axis, 1)]
        return -(-8.0 * wall + 9.0 * y0 - y1) / (3.0 * h)
    y0 = a[g.idx(axis, -1)]
    y1 = a[g.idx(axis, -2)]
    return -(-8.0 * wall + 9.0 * y0 - y1) / (3.0 * h)


def _normal_deriv_node(a, axis, side, h):
    if side == 0:
        return -(-3.0 * a[g.idx(axis, 0)] + 4.0 * a[g.idx(axis, 1)] - a[g.idx(axis, 2)]) / (2.0 * h)
    return -(-3.0 * a[g.idx(axis, -1)] + 4.0 * a[g.idx(axis, -2)] - a[g.idx(axis, -3)]) / (2.0 * h)


def _extrapolate(a, axis, side):
    """Wall value of a cell quantity from three interior layers (third order)."""
    if side == 0:
        y = [a[g.idx(axis, k)] for k in range(3)]
    else:
        y = [a[g.idx(axis, -1 - k)] for k in range(3)]
    return (15.0 * y[0] - 10.0 * y[1] + 3.0 * y[2]) / 8.0


def wall_traces_state(u, p, H, w: Walls | None, domain: Domain, faces=FACES) -> dict:
    """Traces at one instant; batched over leading axes of the inputs."""
    h = domain.h
    out = {k: {} for k in TRACE_FIELDS}
    for face in faces:
        axis, side = face_axis(face)
        uu, du, HH, dH = [], [], [], []
        for c in range(3):
            if c == axis:
                wall_u = u[c][g.idx(axis, 0 if side == 0 else -1)]
                dn = _normal_deriv_node(u[c], axis, side, h[axis])
            else:
                uc = g.avg_node_to_cell(u[c], c)
                if w is None:
                    wv = np.zeros(uc[g.idx(axis, 0)].shape[-2:])
                else:
                    raw = w.u[c][face]
                    ax = c if c < axis else c - 1
                    wv = 0.5 * (np.take(raw, range(1, raw.shape[ax]), axis=ax)
                                + np.take(raw, range(0, raw.shape[ax] - 1), axis=ax))
                wall_u = np.broadcast_to(wv, uc[g.idx(axis, 0)].shape)
                dn = _normal_deriv_cell(uc, wv, axis, side, h[axis])
            uu.append(wall_u)
            du.append(dn)
            hv = np.zeros(H[c][g.idx(axis, 0)].shape[-2:]) if w is None else w.H[c][face]
            HH.append(np.broadcast_to(hv, H[c][g.idx(axis, 0)].shape))
            dH.append(_normal_deriv_cell(H[c], hv, axis, side, h[axis]))
        out["u"][face] = np.stack(uu, axis=-3)
        out["dn_u"][face] = np.stack(du, axis=-3)
        out["H"][face] = np.stack(HH, axis=-3)
        out["dn_H"][face] = np.stack(dH, axis=-3)
        out["p"][face] = _extrapolate(p, axis, side)
    return out


def snapshot_fields(u, p, H) -> dict:
    uc = np.stack([g.avg_node_to_cell(u[c], c) for c in range(3)], axis=-4)
    return {"u": uc, "p": p - p.mean(axis=(-3, -2, -1), keepdims=True), "H": np.asarray(H)}


def extract_traces(traj: Trajectory, faces=FACES, ops: MHDOperators | None = None) -> TraceBundle:
    dom = traj.domain
    ops = ops or MHDOperators(dom, CoefficientSet())
    per = []
    for k in range(dom.nt + 1):
        w = traj.walls(k, ops)
        per.append(wall_traces_state([a[k] for a in traj.u], traj.p[k], traj.H[k], w, dom, faces))
    values = {name: {f: np.stack([per[k][name][f] for k in range(dom.nt + 1)]) for f in faces}
              for name in TRACE_FIELDS}
    ks = traj.snapshot_index
    snap = None if ks is None else snapshot_fields([a[ks] for a in traj.u], traj.p[ks], traj.H[ks])
    return TraceBundle(dom, tuple(f for f in FACES if f in faces), values, ks, snap, traj.t0)
