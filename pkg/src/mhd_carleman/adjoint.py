"""Linear source-to-observation map of the homogeneous problem and its transpose.

The explicit operators, boundary traces and snapshot derivatives are
assembled once as sparse matrices by applying the batched stencils to blocks
of unit vectors.  Implicit solves are symmetric transform solves, so the
reverse sweep reuses them directly.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sps

from . import grid_ops as g
from .fields import CoefficientSet, SourceModel
from .geometry import FACES, Domain
from .mhd_solver import MHDOperators, snapshot_fields, wall_traces_state


class StateLayout:
    """Flat packing of (interior velocity faces, pressure, magnetic field)."""

    def __init__(self, n):
        self.n = tuple(n)
        self.u_shapes = [g.face_interior_shape(n, c) for c in range(3)]
        sizes = [int(np.prod(s)) for s in self.u_shapes]
        ncell = int(np.prod(n))
        self.u_slices = []
        off = 0
        for s in sizes:
            self.u_slices.append(slice(off, off + s))
            off += s
        self.Nu = off
        self.p_slice = slice(off, off + ncell)
        off += ncell
        self.H_slices = []
        for _ in range(3):
            self.H_slices.append(slice(off, off + ncell))
            off += ncell
        self.N = off
        self.ncell = ncell

    def unpack(self, X):
        """X has shape (B, N); returns full face arrays (zero walls), p, H list."""
        B = X.shape[0]
        u = []
        for c in range(3):
            ui = X[:, self.u_slices[c]].reshape((B,) + self.u_shapes[c])
            u.append(g.embed_interior(ui, c))
        p = X[:, self.p_slice].reshape((B,) + self.n)
        H = [X[:, s].reshape((B,) + self.n) for s in self.H_slices]
        return u, p, H


def probe_matrix(apply, n_in: int, chunk: int = 512) -> sps.csr_matrix:
    """Sparse matrix of a batched linear map ``apply(X[B, n_in]) -> Y[B, m]``."""
    blocks = []
    for start in range(0, n_in, chunk):
        stop = min(start + chunk, n_in)
        E = np.zeros((stop - start, n_in))
        E[np.arange(stop - start), np.arange(start, stop)] = 1.0
        Y = apply(E)
        blocks.append(sps.csr_matrix(Y.T))
    return sps.hstack(blocks).tocsr()


@dataclass
class ObservationConfig:
    faces: tuple = FACES
    snapshot_u_order: int = 2
    snapshot_H_order: int = 1
    snapshot_p_order: int = 1
    include_H_snapshot: bool = True


def _derivative_stack(a, h, order):
    """Value, gradient and (optionally) all second derivatives of a batched cell field."""
    out = [a]
    if order >= 1:
        grads = [np.gradient(a, h[j], axis=j - 3, edge_order=2) for j in range(3)]
        out += grads
        if order >= 2:
            for i in range(3):
                for j in range(3):
                    out.append(np.gradient(grads[i], h[j], axis=j - 3, edge_order=2))
    return out


class ObservationOperator:
    """f -> weighted observations of the homogeneous forward problem."""

    def __init__(self, domain: Domain, coeffs: CoefficientSet, source: SourceModel, t0: float,
                 config: ObservationConfig | None = None):
        self.domain = domain
        self.coeffs = coeffs
        self.source = source
        self.t0 = t0
        self.config = config or ObservationConfig()
        self.ops = MHDOperators(domain, coeffs)
        self.layout = StateLayout(domain.n)
        self.k0 = domain.nearest_node(t0)
        self.dt = domain.dt
        self.tw = domain.time_weights()
        self.times = domain.times()
        self._assemble()

    # ------------------------------------------------------------ assembly
    def _assemble(self):
        L = self.layout
        ops = self.ops
        h = self.domain.h
        n = self.domain.n
        N_uH = L.Nu + 3 * L.ncell

        def explicit(X):
            B = X.shape[0]
            full = np.zeros((B, L.N))
            full[:, :L.Nu] = X[:, :L.Nu]
            full[:, L.p_slice.stop:] = X[:, L.Nu:]
            u, _, H = L.unpack(full)
            Eu = ops.momentum_explicit(u, H)
            EH = ops.induction_explicit(u, H)
            return np.concatenate([a.reshape(B, -1) for a in Eu + EH], axis=1)

        self.E = probe_matrix(explicit, N_uH)

        cfg = self.config
        faces = tuple(f for f in FACES if f in set(cfg.faces))

        def traces(X):
            B = X.shape[0]
            u, p, H = L.unpack(X)
            tr = wall_traces_state(u, p, H, None, self.domain, faces)
            parts = []
            for f in faces:
                s = np.sqrt(self.domain.face_area_element(f))
                for name in ("dn_u", "dn_H", "p"):
                    parts.append(s * tr[name][f].reshape(B, -1))
            return np.concatenate(parts, axis=1)

        self.W_trace = probe_matrix(traces, L.N)

        def snapshot(X):
            B = X.shape[0]
            u, p, H = L.unpack(X)
            snap = snapshot_fields(u, p, H)
            sv = np.sqrt(self.domain.cell_volume)
            parts = []
            for c in range(3):
                parts += _derivative_stack(snap["u"][:, c], h, cfg.snapshot_u_order)
            if cfg.include_H_snapshot:
                for c in range(3):
                    parts += _derivative_stack(snap["H"][c], h, cfg.snapshot_H_order)
            parts += _derivative_stack(snap["p"], h, cfg.snapshot_p_order)
            return np.concatenate([sv * a.reshape(B, -1) for a in parts], axis=1)

        self.W_snap = probe_matrix(snapshot, L.N)

        def src(F):
            B = F.shape[0]
            f = F.reshape((B,) + tuple(n))
            out = []
            for c in range(3):
                R = self.source.R.value(*ops.face_pts[c])[c]
                out.append((R * g.avg_cell_to_inner_node(f, c)).reshape(B, -1))
            return np.concatenate(out, axis=1)

        self.S0 = probe_matrix(src, L.ncell)
        self.tf = np.asarray(self.source.time_factor(self.times), float) * np.ones(len(self.times))
        self.m_trace = self.W_trace.shape[0]
        self.m_snap = self.W_snap.shape[0]
        self.m = (self.domain.nt + 1) * self.m_trace + self.m_snap

    # ------------------------------------------------------------ pieces
    def _split_u(self, v):
        L = self.layout
        return [v[L.u_slices[c]].reshape(L.u_shapes[c]) for c in range(3)]

    def _grad(self, q):
        return np.concatenate([a.ravel() for a in g.gradient_to_faces(q, self.domain.h)])

    def _div(self, uvec):
        u = [g.embed_interior(a, c) for c, a in enumerate(self._split_u(uvec))]
        return g.divergence(u, self.domain.h)

    def _Mu(self, uvec):
        dtnu = self.dt * self.coeffs.nu
        parts = [self.ops.vel_solver[c].helmholtz(a, dtnu).ravel() for c, a in enumerate(self._split_u(uvec))]
        return np.concatenate(parts)

    def _MH(self, hvec):
        n = self.domain.n
        H = hvec.reshape((3,) + tuple(n))
        return np.concatenate([self.ops.cell_solver.helmholtz(H[c], self.dt * self.coeffs.kappa).ravel()
                               for c in range(3)])

    def _observe(self, x, k, out):
        w = np.sqrt(self.tw[k])
        out[k * self.m_trace:(k + 1) * self.m_trace] = w * (self.W_trace @ x)
        if k == self.k0:
            out[-self.m_snap:] = self.W_snap @ x

    # ------------------------------------------------------------ maps
    def forward(self, f, return_states: bool = False):
        L = self.layout
        f = np.asarray(f, float).ravel()
        Sf = self.S0 @ f
        x = np.zeros(L.N)
        out = np.zeros(self.m)
        states = [x.copy()] if return_states else None
        self._observe(x, 0, out)
        dt = self.dt
        Nu = L.Nu
        for k in range(1, self.domain.nt + 1):
            u = x[:Nu]
            p = x[L.p_slice].reshape(self.domain.n)
            H = x[L.p_slice.stop:]
            EuH = self.E @ np.concatenate([u, H])
            a = u + dt * (EuH[:Nu] - self._grad(p) + self.tf[k] * Sf)
            us = self._Mu(a)
            q = self.ops.pressure_solver.poisson_pinv(self._div(us))
            xn = np.empty_like(x)
            xn[:Nu] = us - self._grad(q)
            xn[L.p_slice] = (p + q / dt).ravel()
            xn[L.p_slice.stop:] = self._MH(H + dt * EuH[Nu:])
            x = xn
            self._observe(x, k, out)
            if return_states:
                states.append(x.copy())
        return (out, states) if return_states else out

    def adjoint(self, r):
        L = self.layout
        r = np.asarray(r, float)
        Nu = L.Nu
        dt = self.dt
        nt = self.domain.nt
        n = self.domain.n

        def obs_T(k):
            v = np.sqrt(self.tw[k]) * (self.W_trace.T @ r[k * self.m_trace:(k + 1) * self.m_trace])
            if k == self.k0:
                v = v + self.W_snap.T @ r[-self.m_snap:]
            return v

        lam = obs_T(nt)
        fhat = np.zeros(L.ncell)
        for k in range(nt, 0, -1):
            uh = lam[:Nu]
            ph = lam[L.p_slice].reshape(n)
            Hh = lam[L.p_slice.stop:]
            bh = self._MH(Hh)
            qh = ph / dt + self._div(uh)          # -G^T = D
            dvh = self.ops.pressure_solver.poisson_pinv(qh)
            ush = uh - self._grad(dvh)            # D^T = -G
            ah = self._Mu(ush)
            back = dt * (self.E.T @ np.concatenate([ah, bh]))
            prev = np.empty_like(lam)
            prev[:Nu] = ah + back[:Nu]
            prev[L.p_slice] = (ph + dt * self._div(ah)).ravel()
            prev[L.p_slice.stop:] = bh + back[Nu:]
            fhat += dt * self.tf[k] * (self.S0.T @ ah)
            lam = prev + obs_T(k - 1)
        return fhat.reshape(n)
