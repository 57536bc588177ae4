"""Box domains, boundary portions and weight level sets on a uniform grid."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

FACES = ("x_min", "x_max", "y_min", "y_max", "z_min", "z_max")


class DomainConfigError(ValueError):
    """Raised when a grid or domain specification is unusable."""


class DomainMismatchError(ValueError):
    """Raised when two objects live on different grids."""


def face_axis(face: str) -> tuple[int, int]:
    """Return (normal axis, side) with side 0 for the min wall and 1 for the max wall."""
    if face not in FACES:
        raise DomainConfigError(f"unknown face {face!r}")
    i = FACES.index(face)
    return i // 2, i % 2


def tangential_axes(axis: int) -> tuple[int, int]:
    return tuple(a for a in range(3) if a != axis)  # type: ignore[return-value]


@dataclass(frozen=True)
class Domain:
    lengths: tuple[float, float, float]
    n: tuple[int, int, int]
    T: float
    nt: int

    @property
    def h(self) -> tuple[float, float, float]:
        return tuple(L / k for L, k in zip(self.lengths, self.n))  # type: ignore[return-value]

    @property
    def dt(self) -> float:
        return self.T / self.nt

    @property
    def cell_volume(self) -> float:
        hx, hy, hz = self.h
        return hx * hy * hz

    @property
    def shape(self) -> tuple[int, int, int]:
        return tuple(self.n)  # type: ignore[return-value]

    def key(self) -> tuple:
        return (tuple(self.lengths), tuple(self.n), self.T, self.nt)

    def axis_centers(self, axis: int) -> np.ndarray:
        h = self.h[axis]
        return (np.arange(self.n[axis]) + 0.5) * h

    def axis_nodes(self, axis: int) -> np.ndarray:
        return np.arange(self.n[axis] + 1) * self.h[axis]

    def cell_centers(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return np.meshgrid(*(self.axis_centers(a) for a in range(3)), indexing="ij")

    def face_centers(self, axis: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Coordinates of the axis-normal faces, walls included."""
        axes = [self.axis_nodes(a) if a == axis else self.axis_centers(a) for a in range(3)]
        return np.meshgrid(*axes, indexing="ij")

    def wall_points(self, face: str, normal_axis_grid: int | None = None):
        """Coordinates on a wall.

        By default the points are the centers of the boundary faces.  With
        ``normal_axis_grid=c`` the points are where component ``c`` of a
        staggered velocity lives on that wall (nodes along axis ``c``).
        """
        axis, side = face_axis(face)
        coords = []
        for a in range(3):
            if a == axis:
                coords.append(np.array([self.lengths[a] * side]))
            elif normal_axis_grid is not None and a == normal_axis_grid:
                coords.append(self.axis_nodes(a))
            else:
                coords.append(self.axis_centers(a))
        X, Y, Z = np.meshgrid(*coords, indexing="ij")
        return X.squeeze(axis), Y.squeeze(axis), Z.squeeze(axis)

    def face_area_element(self, face: str) -> float:
        axis, _ = face_axis(face)
        a, b = tangential_axes(axis)
        return self.h[a] * self.h[b]

    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.nt + 1)

    def nearest_node(self, t: float) -> int:
        return int(np.argmin(np.abs(self.times() - t)))

    def time_weights(self) -> np.ndarray:
        """Trapezoid weights on the time nodes."""
        w = np.full(self.nt + 1, self.dt)
        w[0] = w[-1] = 0.5 * self.dt
        return w


def build_box_domain(lengths, n, T: float, nt: int) -> Domain:
    lengths = tuple(float(v) for v in lengths)
    n = tuple(int(v) for v in n)
    if len(lengths) != 3 or len(n) != 3:
        raise DomainConfigError("lengths and n must have three entries")
    bad = [f"lengths[{i}]={v}" for i, v in enumerate(lengths) if not (np.isfinite(v) and v > 0)]
    bad += [f"n[{i}]={v} (need >= 4)" for i, v in enumerate(n) if v < 4]
    if not (np.isfinite(T) and T > 0):
        bad.append(f"T={T}")
    if int(nt) < 2:
        bad.append(f"nt={nt} (need >= 2)")
    if bad:
        raise DomainConfigError("invalid domain: " + ", ".join(bad))
    return Domain(lengths, n, float(T), int(nt))


@dataclass(frozen=True)
class SubBoundary:
    """A union of whole box faces."""

    domain: Domain
    faces: frozenset

    @classmethod
    def from_faces(cls, domain: Domain, faces) -> "SubBoundary":
        faces = frozenset(faces)
        for f in faces:
            face_axis(f)
        if not faces:
            raise DomainConfigError("boundary portion must contain at least one face")
        return cls(domain, faces)

    @classmethod
    def whole(cls, domain: Domain) -> "SubBoundary":
        return cls(domain, frozenset(FACES))

    @property
    def is_whole(self) -> bool:
        return self.faces == frozenset(FACES)

    def complement_faces(self) -> tuple[str, ...]:
        return tuple(f for f in FACES if f not in self.faces)

    def ordered(self) -> tuple[str, ...]:
        return tuple(f for f in FACES if f in self.faces)

    def masks(self) -> dict[str, np.ndarray]:
        """Per-face boolean mask over boundary face centers."""
        out = {}
        for f in FACES:
            axis, _ = face_axis(f)
            a, b = tangential_axes(axis)
            shape = (self.domain.n[a], self.domain.n[b])
            out[f] = np.full(shape, f in self.faces)
        return out


@dataclass
class SpaceMask:
    domain: Domain
    mask: np.ndarray
    eps: float
    meta: dict = field(default_factory=dict)

    @property
    def count(self) -> int:
        return int(self.mask.sum())

    @property
    def measure(self) -> float:
        return self.count * self.domain.cell_volume

    @property
    def fraction(self) -> float:
        return self.count / self.mask.size


@dataclass
class SpaceTimeMask:
    domain: Domain
    mask: np.ndarray  # (nt+1, nx, ny, nz)
    eps: float
    meta: dict = field(default_factory=dict)

    @property
    def count(self) -> int:
        return int(self.mask.sum())

    @property
    def measure(self) -> float:
        return self.count * self.domain.cell_volume * self.domain.dt

    def time_extent(self) -> tuple[float, float] | None:
        active = np.nonzero(self.mask.reshape(self.mask.shape[0], -1).any(axis=1))[0]
        if active.size == 0:
            return None
        t = self.domain.times()
        return float(t[active[0]]), float(t[active[-1]])


def omega_epsilon(domain: Domain, d_values: np.ndarray, eps: float) -> SpaceMask:
    """Cells whose weight-generator value exceeds ``eps``."""
    d_values = np.asarray(d_values)
    if d_values.shape != domain.shape:
        raise DomainMismatchError(f"d has shape {d_values.shape}, grid is {domain.shape}")
    if eps < 0:
        raise DomainConfigError("eps must be non-negative")
    m = d_values > eps
    meta = {}
    if not m.any():
        meta["warning"] = "empty level set"
    return SpaceMask(domain, m, float(eps), meta)


def q_epsilon(domain: Domain, psi_values: np.ndarray, eps: float) -> SpaceTimeMask:
    psi_values = np.asarray(psi_values)
    expected = (domain.nt + 1,) + domain.shape
    if psi_values.shape != expected:
        raise DomainMismatchError(f"psi has shape {psi_values.shape}, expected {expected}")
    m = psi_values > eps
    meta = {}
    if not m.any():
        meta["warning"] = "empty level set"
    return SpaceTimeMask(domain, m, float(eps), meta)


def check_inclusion(q_eps: SpaceTimeMask, omega_eps: SpaceMask, t0: float | None = None,
                    delta: float | None = None) -> bool:
    """True when every active space-time cell sits over an active spatial cell.

    With ``t0`` and ``delta`` the active time nodes must also lie strictly
    inside ``(t0 - delta, t0 + delta)``.
    """
    if q_eps.domain.key() != omega_eps.domain.key():
        raise DomainMismatchError("space-time mask and spatial mask are on different grids")
    ok = bool(np.all(~q_eps.mask | omega_eps.mask[None]))
    if ok and t0 is not None and delta is not None:
        t = q_eps.domain.times()
        active = q_eps.mask.reshape(q_eps.mask.shape[0], -1).any(axis=1)
        ok = bool(np.all(np.abs(t[active] - t0) < delta))
    return ok
