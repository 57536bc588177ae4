"""Seeded manufactured problem instances for the Carleman sweeps."""
from __future__ import annotations

import numpy as np
import sympy as sp

from .carleman import EllipticProblem, MHDInstance, ParabolicProblem, elliptic_residual
from .fields import CoefficientSet
from .geometry import FACES, Domain, face_axis
from .manufactured import ScalarFn, VecFn, build_manufactured, t, x, y, z
from .mhd_solver import BoundaryData, TraceBundle, Trajectory, snapshot_fields
from .weights import WeightD, time_cutoff


# --------------------------------------------------------------------------
# elliptic


def elliptic_instance(domain: Domain, d: WeightD, seed: int, split: str = "divergence",
                      n_modes: int = 3, kmax: int = 3) -> EllipticProblem:
    """Sum of sine products vanishing on the boundary, with a random constant drift.

    ``split="divergence"`` writes the equation as f0 = b.grad y, f_j = d_j y;
    ``split="source"`` puts everything into f0.
    """
    rng = np.random.default_rng(seed)
    L = domain.lengths
    X, Y, Z = domain.cell_centers()
    P = (X, Y, Z)
    yv = np.zeros(domain.shape)
    gy = np.zeros((3,) + domain.shape)
    lap = np.zeros(domain.shape)
    for _ in range(n_modes):
        k = rng.integers(1, kmax + 1, size=3)
        a = rng.uniform(0.5, 1.0) * rng.choice([-1.0, 1.0])
        w = np.pi * k / np.asarray(L)
        s = [np.sin(w[j] * P[j]) for j in range(3)]
        c = [np.cos(w[j] * P[j]) for j in range(3)]
        yv += a * s[0] * s[1] * s[2]
        gy[0] += a * w[0] * c[0] * s[1] * s[2]
        gy[1] += a * w[1] * s[0] * c[1] * s[2]
        gy[2] += a * w[2] * s[0] * s[1] * c[2]
        lap -= a * float(np.sum(w ** 2)) * s[0] * s[1] * s[2]
    b = rng.uniform(-1.0, 1.0, size=3)
    bf = np.broadcast_to(b[:, None, None, None], (3,) + domain.shape).copy()
    adv = sum(b[j] * gy[j] for j in range(3))
    if split == "divergence":
        f0 = adv
        f = gy.copy()
    elif split == "source":
        f0 = lap + adv
        f = np.zeros_like(gy)
    else:
        raise ValueError(f"unknown split {split!r}")
    # y is a sum of sines vanishing on every wall
    prob = EllipticProblem(domain, d.func(X, Y, Z) * np.ones(domain.shape), yv, gy, f0, f, bf,
                           boundary_max=0.0, label=f"elliptic-{split}-{seed}")
    prob.residual = elliptic_residual(prob)
    return prob


# --------------------------------------------------------------------------
# parabolic


def parabolic_instance(domain: Domain, d: WeightD, seed: int, nu: float = 1.0, drift=None, reaction: float = 0.0,
                       time_bump: bool = True) -> ParabolicProblem:
    """Heat-kernel-like bumps (nonzero on the walls) times a bump in time."""
    rng = np.random.default_rng(seed)
    T = domain.T
    L = domain.lengths
    drift = rng.uniform(-0.5, 0.5, size=3) if drift is None else np.asarray(drift, float)
    expr = 0
    for _ in range(2):
        c = [rng.uniform(0.2, 0.8) * L[j] for j in range(3)]
        tau = rng.uniform(0.05, 0.2)
        amp = rng.uniform(0.5, 1.0)
        r2 = sum((v - cj) ** 2 for v, cj in zip((x, y, z), c))
        expr += amp * sp.exp(-r2 / (4 * nu * (t + tau))) * ((tau / (t + tau)) ** sp.Rational(3, 2))
    if time_bump:
        expr = expr * sp.sin(sp.pi * t / T) ** 2
    f_expr = (sp.diff(expr, t) - nu * sum(sp.diff(expr, v, 2) for v in (x, y, z))
              + sum(float(drift[j]) * sp.diff(expr, v) for j, v in enumerate((x, y, z))) + reaction * expr)
    yf = ScalarFn([expr])
    ff = ScalarFn([f_expr])
    grad = VecFn([sp.diff(expr, v) for v in (x, y, z)])
    tt = domain.times().reshape(-1, 1, 1, 1)
    X, Y, Z = domain.cell_centers()
    yv = yf(X[None], Y[None], Z[None], tt)
    fv = ff(X[None], Y[None], Z[None], tt)
    wall_y, wall_dn = {}, {}
    tw = domain.times().reshape(-1, 1, 1)
    for face in FACES:
        axis, side = face_axis(face)
        P = domain.wall_points(face)
        wall_y[face] = yf(P[0][None], P[1][None], P[2][None], tw)
        g = grad(P[0][None], P[1][None], P[2][None], tw)
        wall_dn[face] = (1.0 if side == 1 else -1.0) * g[axis]
    prob = ParabolicProblem(domain, d, yv, fv, wall_y, wall_dn, label=f"parabolic-{seed}")
    prob.residual = parabolic_residual(prob, nu, drift, reaction)
    return prob


def parabolic_residual(prob: ParabolicProblem, nu, drift, reaction) -> float:
    from .carleman import d1, dt_interior, eroded
    from .grid_ops import d2_cell
    dom = prob.domain
    h = dom.h
    yi = prob.y[1:-1]
    lap = sum(eroded(d2_cell(yi, a, h[a])) for a in range(3))
    r = (eroded(dt_interior(prob.y, dom.dt)) - nu * lap + sum(drift[j] * d1(yi, j, h[j]) for j in range(3))
         + reaction * eroded(yi) - eroded(prob.f[1:-1]))
    return float(np.abs(r).max() / (np.abs(prob.f).max() + 1e-300))


# --------------------------------------------------------------------------
# full system


def _random_trig(rng, scale=1.0):
    kx, ky, kz = (rng.uniform(0.5, 1.5) * np.pi for _ in range(3))
    px, py, pz = rng.uniform(0, 2 * np.pi, size=3)
    a = scale * rng.uniform(0.5, 1.0)
    return a * sp.sin(kx * x + px) * sp.cos(ky * y + py) * sp.sin(kz * z + pz)


def discrete_curl(domain: Domain, A_fn, tval):
    """Face velocity as the staggered curl of an edge-sampled potential (divergence-free to rounding)."""
    n = domain.n
    h = domain.h
    c_ = [domain.axis_centers(a) for a in range(3)]
    n_ = [domain.axis_nodes(a) for a in range(3)]

    def sample(comp, axes):
        G = np.meshgrid(*axes, indexing="ij")
        return A_fn(G[0], G[1], G[2], tval)[comp]

    Ax = sample(0, (c_[0], n_[1], n_[2]))
    Ay = sample(1, (n_[0], c_[1], n_[2]))
    Az = sample(2, (n_[0], n_[1], c_[2]))
    ux = np.diff(Az, axis=1) / h[1] - np.diff(Ay, axis=2) / h[2]
    uy = np.diff(Ax, axis=2) / h[2] - np.diff(Az, axis=0) / h[0]
    uz = np.diff(Ay, axis=0) / h[0] - np.diff(Ax, axis=1) / h[1]
    return [ux, uy, uz]


def traces_from_functions(domain: Domain, ms, t0: float | None) -> TraceBundle:
    """Exact wall values and outward normal derivatives of a manufactured solution."""
    tw = domain.times().reshape(-1, 1, 1)
    X, Y, Z = domain.cell_centers()
    tt = domain.times().reshape(-1, 1, 1, 1)
    p_mean = ms.p(X[None], Y[None], Z[None], tt).mean(axis=(1, 2, 3)).reshape(-1, 1, 1)
    values = {k: {} for k in ("u", "dn_u", "H", "dn_H", "p")}
    names = "xyz"
    for face in FACES:
        axis, side = face_axis(face)
        sgn = 1.0 if side == 1 else -1.0
        P = [a[None] for a in domain.wall_points(face)]
        values["u"][face] = np.moveaxis(ms.u(*P, tw), 0, 1)
        values["H"][face] = np.moveaxis(ms.H(*P, tw), 0, 1)
        values["dn_u"][face] = sgn * np.moveaxis(ms.derivative("u", (names[axis],))(*P, tw), 0, 1)
        values["dn_H"][face] = sgn * np.moveaxis(ms.derivative("H", (names[axis],))(*P, tw), 0, 1)
        values["p"][face] = ms.p(*P, tw) - p_mean
    return TraceBundle(domain, FACES, values, None if t0 is None else domain.nearest_node(t0), None, t0)


def mhd_instance(domain: Domain, coeffs: CoefficientSet, seed: int, time_profile: str = "smooth",
                 t0: float | None = None) -> MHDInstance:
    """Random smooth (u, p, H) with u an exact discrete curl.

    ``time_profile="smooth"`` multiplies by 1 + 0.3 sin(2 pi t / T);
    ``"vanishing"`` by sin^2(pi t / T) so the fields vanish at both ends.
    """
    rng = np.random.default_rng(seed)
    T = domain.T
    if time_profile == "smooth":
        tf = 1 + sp.Float(0.3) * sp.sin(2 * sp.pi * t / T)
    elif time_profile == "vanishing":
        tf = sp.sin(sp.pi * t / T) ** 2
    else:
        raise ValueError(f"unknown time profile {time_profile!r}")
    a = [tf * _random_trig(rng) for _ in range(3)]
    from .manufactured import curl
    u = curl(a)
    p = tf * _random_trig(rng)
    H = [tf * _random_trig(rng) for _ in range(3)]
    ms = build_manufactured(u, p, H, coeffs)
    A_fn = VecFn(a)
    times = domain.times()
    n = domain.n
    U = [np.empty((len(times),) + (tuple(n[b] + (1 if b == c else 0) for b in range(3)))) for c in range(3)]
    for k, tk in enumerate(times):
        uk = discrete_curl(domain, A_fn, float(tk))
        for c in range(3):
            U[c][k] = uk[c]
    X, Y, Z = domain.cell_centers()
    tt = times.reshape(-1, 1, 1, 1)
    P = ms.p(X[None], Y[None], Z[None], tt)
    Hv = np.moveaxis(ms.H(X[None], Y[None], Z[None], tt), 0, 1)
    F = np.moveaxis(ms.F(X[None], Y[None], Z[None], tt), 0, 1)
    G = np.moveaxis(ms.G(X[None], Y[None], Z[None], tt), 0, 1)
    traj = Trajectory(domain, U, P - P.mean(axis=(1, 2, 3), keepdims=True), Hv,
                      bc=BoundaryData(ms.u, ms.H), t0=t0)
    traces = traces_from_functions(domain, ms, t0)
    return MHDInstance(traj, F, G, traces, None, label=f"mhd-{time_profile}-{seed}")


def time_cutoff_instance(inst: MHDInstance, t0: float, delta0: float | None = None) -> MHDInstance:
    """Multiply (u, p, H) by a time cut-off chi0 vanishing at both ends.

    The product still has a divergence-free velocity, and its forcings gain
    chi0' u and chi0' H.  ``delta0`` defaults to the largest admissible half
    width min(t0, T - t0).
    """
    traj = inst.traj
    dom = traj.domain
    delta0 = min(t0, dom.T - t0) if delta0 is None else delta0
    t = dom.times()
    c0 = time_cutoff(t, t0, delta0)
    c1 = time_cutoff(t, t0, delta0, 1)

    def sc(a):
        return c0.reshape((-1,) + (1,) * (a.ndim - 1)) * a

    def sc1(a):
        return c1.reshape((-1,) + (1,) * (a.ndim - 1)) * a

    U = [sc(a) for a in traj.u]
    new = Trajectory(dom, U, sc(traj.p), sc(traj.H), bc=None, t0=traj.t0)
    F = sc(inst.F) + sc1(traj.cell_velocity())
    G = sc(inst.G) + sc1(traj.H)
    tr = inst.traces
    vals = {k: {f: sc(v) for f, v in d.items()} for k, d in tr.values.items()}
    traces = TraceBundle(dom, tr.faces, vals, tr.snapshot_index, None, tr.t0)
    meta = dict(inst.meta, delta0=delta0)
    return MHDInstance(new, F, G, traces, inst.U, label=inst.label + "-cutoff", meta=meta)
