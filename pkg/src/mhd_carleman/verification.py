"""Solver verification: manufactured convergence, linearity and operator oracles."""
from __future__ import annotations

import time

import numpy as np
import scipy.sparse as sps

from . import grid_ops as g
from .adjoint import ObservationConfig, ObservationOperator
from .fields import CoefficientSet, SourceModel, parse_field
from .geometry import Domain, build_box_domain
from .manufactured import smooth_solution
from .mhd_solver import BoundaryData, MHDOperators, State, interior_points, solve_forward


def reference_coefficients() -> CoefficientSet:
    """A coefficient set with every coupling switched on."""
    return CoefficientSet(
        nu=1.0, kappa=0.8,
        B1=parse_field([0.3, -0.2, 0.1]),
        B2=parse_field({"matrix": [[0.1, 0, 0], [0, 0.2, 0], [0.1, 0, -0.1]]}),
        C1=parse_field([0.1, 0.2, 0.0]),
        C2=parse_field({"trig": [{"amplitude": [0.1, 0.1, 0], "wavevector": [1, 0, 1]}]}),
        C3=parse_field([0.2, 0, 0.1]),
        C4=parse_field([0.0, 0.1, 0.2]),
        C5=parse_field({"matrix": [[0, 0.1, 0], [0.1, 0, 0], [0, 0, 0.1]]}),
        D1=parse_field([0.1, 0.1, -0.2]),
        D2=parse_field({"matrix": [[0.2, 0, 0], [0, 0, 0], [0, 0, 0.1]]}),
    )


# --------------------------------------------------------------------------
# manufactured solutions


def mms_study(coeffs: CoefficientSet | None = None, ns=(8, 16, 32), T: float = 0.1, nt: int = 20) -> dict:
    """Errors at t = T against a smooth exact solution on a sequence of grids.

    Orders are log2 ratios of consecutive RMS errors; the fitted order is the
    least-squares slope of log(error) against log(h).
    """
    cf = coeffs or reference_coefficients()
    ms = smooth_solution(cf)
    rows = []
    for n in ns:
        dom = build_box_domain((1.0, 1.0, 1.0), (n, n, n), T, nt)
        ops = MHDOperators(dom, cf)
        face_pts = [[interior_points(a, c) for a in dom.face_centers(c)] for c in range(3)]
        cells = dom.cell_centers()

        def forcing(t, face_pts=face_pts, cells=cells):
            Fu = [ms.F(*face_pts[c], t)[c] for c in range(3)]
            return Fu, ms.G(*cells, t)

        tic = time.perf_counter()
        st = State.from_functions(dom, ms.u, ms.p, ms.H)
        traj = solve_forward(st, cf, None, T, nt, dom, bc=BoundaryData(ms.u, ms.H), forcing=forcing, ops=ops)
        ex = State.from_functions(dom, ms.u, ms.p, ms.H, T)
        eu = float(np.sqrt(sum(np.mean((traj.u[c][-1] - ex.u[c]) ** 2) for c in range(3))))
        eH = float(np.sqrt(np.mean((traj.H[-1] - ex.H) ** 2)))
        ep = float(np.sqrt(np.mean((traj.p[-1] - ex.p) ** 2)))
        rows.append({"n": n, "h": dom.h[0], "err_u": eu, "err_H": eH, "err_p": ep,
                     "max_div": float(traj.div_history.max()), "seconds": time.perf_counter() - tic})
    h = np.array([r["h"] for r in rows])
    orders = {}
    for key in ("err_u", "err_H", "err_p"):
        e = np.array([r[key] for r in rows])
        orders[key] = {"pairwise": np.log2(e[:-1] / e[1:]).tolist(),
                       "fitted": float(np.polyfit(np.log(h), np.log(e), 1)[0])}
    return {"rows": rows, "orders": orders, "max_div": max(r["max_div"] for r in rows)}


# --------------------------------------------------------------------------
# zero input and superposition


def _random_state(domain: Domain, rng) -> State:
    st = State.zeros(domain)
    for c in range(3):
        st.u[c][g.idx(c, slice(1, -1))] = rng.standard_normal(g.face_interior_shape(domain.n, c))
    st.H = rng.standard_normal(st.H.shape)
    return st


def zero_input_check(domain: Domain, coeffs: CoefficientSet, source: SourceModel) -> dict:
    traj = solve_forward(State.zeros(domain), coeffs, source, domain.T, domain.nt, domain,
                         f=np.zeros(domain.shape))
    peak = max([float(np.abs(a).max()) for a in traj.u] + [float(np.abs(traj.p).max()),
                                                           float(np.abs(traj.H).max())])
    return {"max_abs": peak, "passed": peak == 0.0}


def linearity_check(domain: Domain, coeffs: CoefficientSet, source: SourceModel, seed: int = 0,
                    a: float = 0.7, b: float = -1.3) -> dict:
    """solve(a x1 + b x2) against a solve(x1) + b solve(x2); inputs are initial state and f."""
    rng = np.random.default_rng(seed)
    ops = MHDOperators(domain, coeffs)
    s1, s2 = _random_state(domain, rng), _random_state(domain, rng)
    f1, f2 = rng.standard_normal(domain.shape), rng.standard_normal(domain.shape)
    comb = State([a * s1.u[c] + b * s2.u[c] for c in range(3)], a * s1.p + b * s2.p, a * s1.H + b * s2.H)

    def run(st, f):
        return solve_forward(st, coeffs, source, domain.T, domain.nt, domain, f=f, ops=ops)

    t1, t2, t12 = run(s1, f1), run(s2, f2), run(comb, a * f1 + b * f2)
    num, den = 0.0, 0.0
    for x1, x2, x12 in [(t1.u[c], t2.u[c], t12.u[c]) for c in range(3)] + [(t1.p, t2.p, t12.p),
                                                                           (t1.H, t2.H, t12.H)]:
        ref = a * x1 + b * x2
        num = max(num, float(np.abs(x12 - ref).max()))
        den = max(den, float(np.abs(ref).max()))
    rel = num / den
    return {"relative_error": rel, "passed": rel <= 1e-12}


# --------------------------------------------------------------------------
# sparse assembly of the coupling operators from 1-D stencils


def _d1_cell_1d(n: int, h: float) -> sps.csr_matrix:
    """Central difference on cells with zero wall values (ghost = -neighbour)."""
    D = sps.diags([-np.ones(n - 1), np.ones(n - 1)], [-1, 1], format="lil")
    D[0, 0] = 1.0
    D[n - 1, n - 1] = -1.0
    return (D / (2.0 * h)).tocsr()


def _node_to_cell_1d(n: int) -> sps.csr_matrix:
    return sps.diags([0.5 * np.ones(n), 0.5 * np.ones(n)], [0, 1], shape=(n, n + 1), format="csr")


def _diff_node_1d(n: int, h: float) -> sps.csr_matrix:
    return sps.diags([-np.ones(n), np.ones(n)], [0, 1], shape=(n, n + 1), format="csr") / h


def _embed_1d(n: int) -> sps.csr_matrix:
    """Interior nodes (n - 1) into all nodes (n + 1) with zero walls."""
    return sps.eye(n + 1, n - 1, k=-1, format="csr")


def _along(mats_1d: dict, n) -> sps.csr_matrix:
    """Kronecker product with the given 1-D matrix per axis and identity elsewhere."""
    out = None
    for a in range(3):
        m = mats_1d.get(a, sps.eye(n[a], format="csr"))
        out = m if out is None else sps.kron(out, m, format="csr")
    return out


def assemble_L1(ops: MHDOperators) -> sps.csr_matrix:
    """Matrix of H -> L1_cells(H) with zero walls; H and output stacked by component."""
    n, h = ops.n, ops.h
    D = [_along({b: _d1_cell_1d(n[b], h[b])}, n) for b in range(3)]
    diag = lambda v: sps.diags(np.ravel(v))
    blocks = [[None] * 3 for _ in range(3)]
    for c in range(3):
        for bp in range(3):
            m = diag(ops.JC2[c, bp]) + diag(ops.JC3[bp, c]) + diag(ops.C3[bp]) @ D[c]
            if bp == c:
                m = m + sum(diag(ops.C1[b]) @ D[b] for b in range(3))
            blocks[c][bp] = m
    return sps.bmat(blocks, format="csr")


def assemble_L2(ops: MHDOperators) -> sps.csr_matrix:
    """Matrix of interior face velocities -> L2_cells(u) with zero walls."""
    n, h = ops.n, ops.h
    diag = lambda v: sps.diags(np.ravel(v))
    avg = [_along({c: _node_to_cell_1d(n[c]) @ _embed_1d(n[c])}, n) for c in range(3)]
    dnode = [_along({c: _diff_node_1d(n[c], h[c]) @ _embed_1d(n[c])}, n) for c in range(3)]
    D = [_along({b: _d1_cell_1d(n[b], h[b])}, n) for b in range(3)]
    blocks = [[None] * 3 for _ in range(3)]
    for c in range(3):
        for bp in range(3):
            m = diag(ops.JC5[c, bp]) @ avg[bp]
            if bp == c:
                m = m + diag(ops.C4[c]) @ dnode[c]
                m = m + sum(diag(ops.C4[b]) @ D[b] @ avg[c] for b in range(3) if b != c)
            blocks[c][bp] = m
    return sps.bmat(blocks, format="csr")


def operator_oracle_check(domain: Domain, coeffs: CoefficientSet, n_trials: int = 5, seed: int = 0) -> dict:
    """Stencil applications against dense matrices built from 1-D Kronecker factors."""
    ops = MHDOperators(domain, coeffs)
    rng = np.random.default_rng(seed)
    A1 = assemble_L1(ops).toarray()
    A2 = assemble_L2(ops).toarray()
    n = domain.n
    e1 = e2 = 0.0
    for _ in range(n_trials):
        H = rng.standard_normal((3,) + tuple(n))
        ref = A1 @ H.ravel()
        got = np.concatenate([a.ravel() for a in ops.L1_cells(H)])
        e1 = max(e1, float(np.abs(got - ref).max() / np.abs(ref).max()))
        ui = [rng.standard_normal(g.face_interior_shape(n, c)) for c in range(3)]
        u = [g.embed_interior(ui[c], c) for c in range(3)]
        ref = A2 @ np.concatenate([a.ravel() for a in ui])
        got = np.concatenate([a.ravel() for a in ops.L2_cells(u)])
        e2 = max(e2, float(np.abs(got - ref).max() / np.abs(ref).max()))
    return {"L1_relative_error": e1, "L2_relative_error": e2, "passed": bool(e1 <= 1e-13 and e2 <= 1e-13)}


def adjoint_check(domain: Domain, coeffs: CoefficientSet, source: SourceModel, t0: float,
                  n_pairs: int = 10, seed: int = 0, op: ObservationOperator | None = None) -> dict:
    """<A f, r> against <f, A^T r> over random pairs."""
    op = op or ObservationOperator(domain, coeffs, source, t0, ObservationConfig())
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_pairs):
        f = rng.standard_normal(domain.shape)
        r = rng.standard_normal(op.m)
        lhs = float(op.forward(f) @ r)
        rhs = float(f.ravel() @ np.ravel(op.adjoint(r)))
        worst = max(worst, abs(lhs - rhs) / max(abs(lhs), abs(rhs)))
    return {"relative_error": worst, "pairs": n_pairs, "passed": worst <= 1e-12}
