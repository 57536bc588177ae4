"""Experiment configuration: JSON files parsed into strict dataclass blocks.

Unknown keys and ill-typed values are rejected with the dotted path of the
offending entry, e.g. ``coefficients.nu: must be a positive number``.
"""
from __future__ import annotations

import json
from dataclasses import MISSING, asdict, dataclass, field, fields
from pathlib import Path

from .fields import CoefficientSet, FieldSpecError, SourceModel, parse_field
from .geometry import FACES, Domain, SubBoundary, build_box_domain

CONFIG_VERSION = 1
D_KINDS = ("face_linear", "whole_boundary_affine")
SWEEP_KINDS = ("singular", "regular")
STABILITY_MODES = ("lipschitz", "holder", "both")


class ConfigError(ValueError):
    def __init__(self, path: str, msg: str):
        super().__init__(f"{path}: {msg}")
        self.path = path


# --------------------------------------------------------------------------
# value checks


def _number(v, path, positive=False, nonneg=False):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(path, f"expected a number, got {v!r}")
    v = float(v)
    if v != v or v in (float("inf"), float("-inf")):
        raise ConfigError(path, "must be finite")
    if positive and v <= 0:
        raise ConfigError(path, "must be positive")
    if nonneg and v < 0:
        raise ConfigError(path, "must be non-negative")
    return v


def _integer(v, path, minimum=None):
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(path, f"expected an integer, got {v!r}")
    if minimum is not None and v < minimum:
        raise ConfigError(path, f"must be >= {minimum}")
    return v


def _list(v, path, item, length=None, nonempty=True):
    if not isinstance(v, list):
        raise ConfigError(path, f"expected a list, got {v!r}")
    if length is not None and len(v) != length:
        raise ConfigError(path, f"expected {length} entries, got {len(v)}")
    if nonempty and not v:
        raise ConfigError(path, "must not be empty")
    return [item(x, f"{path}[{i}]") for i, x in enumerate(v)]


def _choice(v, path, options):
    if v not in options:
        raise ConfigError(path, f"expected one of {list(options)}, got {v!r}")
    return v


def _faces(v, path):
    if v == "all":
        return list(FACES)
    faces = _list(v, path, lambda x, p: _choice(x, p, FACES))
    if len(set(faces)) != len(faces):
        raise ConfigError(path, "duplicate faces")
    return [f for f in FACES if f in faces]


def _optional(check):
    return lambda v, path: None if v is None else check(v, path)


def _build(cls, data, path):
    """Instantiate dataclass ``cls`` from ``data`` using each field's ``check`` metadata."""
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(path, "expected a mapping")
    names = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"{path}.{unknown[0]}", "unknown key")
    kw = {}
    for f in fields(cls):
        p = f"{path}.{f.name}"
        if f.name not in data:
            if f.default is MISSING and f.default_factory is MISSING:
                raise ConfigError(p, "required key missing")
            continue
        kw[f.name] = f.metadata["check"](data[f.name], p)
    return cls(**kw)


def _f(check, default=MISSING, factory=MISSING):
    if factory is not MISSING:
        return field(default_factory=factory, metadata={"check": check})
    return field(default=default, metadata={"check": check})


# --------------------------------------------------------------------------
# blocks


@dataclass
class DomainBlock:
    lengths: list = _f(lambda v, p: _list(v, p, lambda x, q: _number(x, q, positive=True), 3),
                       factory=lambda: [1.0, 1.0, 1.0])
    n: list = _f(lambda v, p: _list(v, p, lambda x, q: _integer(x, q, 4), 3), factory=lambda: [8, 8, 8])
    T: float = _f(lambda v, p: _number(v, p, positive=True), 1.0)
    nt: int = _f(lambda v, p: _integer(v, p, 2), 32)

    def build(self) -> Domain:
        return build_box_domain(self.lengths, self.n, self.T, self.nt)


@dataclass
class WeightsBlock:
    kind: str = _f(lambda v, p: _choice(v, p, D_KINDS), "whole_boundary_affine")
    gamma: list = _f(_faces, factory=lambda: list(FACES))
    lambdas: list = _f(lambda v, p: _list(v, p, lambda x, q: _number(x, q, positive=True)),
                       factory=lambda: [1.0, 2.0, 4.0])
    s_min: float = _f(lambda v, p: _number(v, p, positive=True), 4.0)
    s_max: float = _f(lambda v, p: _number(v, p, positive=True), 64.0)
    s_num: int = _f(lambda v, p: _integer(v, p, 2), 12)
    s_values: list = _f(lambda v, p: _list(v, p, lambda x, q: _number(x, q, positive=True)),
                        factory=lambda: [4.0, 16.0, 64.0])
    t0: float | None = _f(_optional(lambda v, p: _number(v, p, positive=True)), None)
    beta: float | None = _f(_optional(lambda v, p: _number(v, p, positive=True)), None)
    eps: float = _f(lambda v, p: _number(v, p, positive=True), 0.05)


@dataclass
class SourceBlock:
    R: object = _f(lambda v, p: _field(v, p), factory=lambda: [1.0, 0.5, 0.25])
    a1: float = _f(_number, 0.0)
    a2: float = _f(_number, 0.0)
    kmax: int = _f(lambda v, p: _integer(v, p, 1), 3)
    decay: float = _f(lambda v, p: _number(v, p, nonneg=True), 2.0)
    seed: int = _f(lambda v, p: _integer(v, p, 0), 0)


def _field(v, path):
    try:
        parse_field(v, path)
    except FieldSpecError as e:
        raise ConfigError(e.path, str(e).split(": ", 1)[-1]) from None
    return v


def _str(v, path):
    if not isinstance(v, str):
        raise ConfigError(path, f"expected a string, got {v!r}")
    return v


@dataclass
class RunBlock:
    seed: int = _f(lambda v, p: _integer(v, p, 0), 0)
    out_dir: str | None = _f(_optional(_str), None)
    n_instances: int = _f(lambda v, p: _integer(v, p, 1), 10)
    kinds: list = _f(lambda v, p: _list(v, p, lambda x, q: _choice(x, q, SWEEP_KINDS)),
                     factory=lambda: list(SWEEP_KINDS))
    time_profile: str = _f(lambda v, p: _choice(v, p, ("smooth", "vanishing")), "vanishing")
    time_cutoff: bool = _f(lambda v, p: _bool(v, p), True)
    n_samples: int = _f(lambda v, p: _integer(v, p, 1), 20)
    negative_control: bool = _f(lambda v, p: _bool(v, p), True)
    split: str = _f(lambda v, p: _choice(v, p, ("divergence", "source")), "divergence")
    taus: list = _f(lambda v, p: _list(v, p, lambda x, q: _choice(x, q, (0, 1))), factory=lambda: [0, 1])
    reg: float = _f(lambda v, p: _number(v, p, nonneg=True), 1e-12)
    tol: float = _f(lambda v, p: _number(v, p, positive=True), 1e-10)
    maxiter: int = _f(lambda v, p: _integer(v, p, 1), 2000)
    noise: float = _f(lambda v, p: _number(v, p, nonneg=True), 0.0)
    noise_levels: list = _f(lambda v, p: _list(v, p, lambda x, q: _number(x, q, positive=True)),
                            factory=lambda: [1e-3, 1e-2])
    mode: str = _f(lambda v, p: _choice(v, p, STABILITY_MODES), "both")
    holder_gamma: list | None = _f(_optional(_faces), None)
    holder_samples: int = _f(lambda v, p: _integer(v, p, 3), 12)
    weight_catalog: list | None = _f(_optional(lambda v, p: _list(v, p, _catalog_entry)), None)
    mms_ns: list = _f(lambda v, p: _list(v, p, lambda x, q: _integer(x, q, 4)), factory=lambda: [8, 16, 32])
    mms_T: float = _f(lambda v, p: _number(v, p, positive=True), 0.1)
    mms_nt: int = _f(lambda v, p: _integer(v, p, 2), 20)
    n_pairs: int = _f(lambda v, p: _integer(v, p, 1), 10)
    growth_limit: float = _f(lambda v, p: _number(v, p, positive=True), 1.2)
    control_limit: float = _f(lambda v, p: _number(v, p, positive=True), 1.5)


def _catalog_entry(v, path):
    if not isinstance(v, dict):
        raise ConfigError(path, "expected a mapping with kind and gamma")
    bad = sorted(set(v) - {"kind", "gamma"})
    if bad:
        raise ConfigError(f"{path}.{bad[0]}", "unknown key")
    if "kind" not in v:
        raise ConfigError(f"{path}.kind", "required key missing")
    return {"kind": _choice(v["kind"], f"{path}.kind", D_KINDS),
            "gamma": _faces(v.get("gamma", "all"), f"{path}.gamma")}


def _bool(v, path):
    if not isinstance(v, bool):
        raise ConfigError(path, f"expected true or false, got {v!r}")
    return v


def _coefficients(v, path):
    if not isinstance(v, dict):
        raise ConfigError(path, "expected a mapping")
    try:
        CoefficientSet.from_dict(v, path)
    except FieldSpecError as e:
        raise ConfigError(e.path, str(e).split(": ", 1)[-1]) from None
    return v


@dataclass
class ExperimentConfig:
    version: int = _f(lambda v, p: _choice(v, p, (CONFIG_VERSION,)))
    domain: DomainBlock = _f(lambda v, p: _build(DomainBlock, v, p), factory=DomainBlock)
    weights: WeightsBlock = _f(lambda v, p: _build(WeightsBlock, v, p), factory=WeightsBlock)
    coefficients: dict = _f(_coefficients, factory=dict)
    source: SourceBlock = _f(lambda v, p: _build(SourceBlock, v, p), factory=SourceBlock)
    run: RunBlock = _f(lambda v, p: _build(RunBlock, v, p), factory=RunBlock)
    base_dir: Path = field(default=Path("."), metadata={"check": None}, compare=False)

    # ---------------------------------------------------------- derived objects
    def build_domain(self) -> Domain:
        return self.domain.build()

    @property
    def t0(self) -> float:
        t0 = self.weights.t0 if self.weights.t0 is not None else 0.5 * self.domain.T
        return t0

    def build_coefficients(self) -> CoefficientSet:
        return CoefficientSet.from_dict(self.coefficients)

    def build_source(self) -> SourceModel:
        return SourceModel(parse_field(self.source.R, "source.R"), self.t0, self.source.a1, self.source.a2)

    def build_gamma(self, domain: Domain) -> SubBoundary:
        return SubBoundary.from_faces(domain, self.weights.gamma)

    def s_grid(self):
        from .carleman import geometric_s_grid
        return geometric_s_grid(self.weights.s_min, self.weights.s_max, self.weights.s_num)

    def out_dir(self) -> Path | None:
        if self.run.out_dir is None:
            return None
        p = Path(self.run.out_dir)
        return p if p.is_absolute() else (self.base_dir / p).resolve()

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("base_dir")
        return d


def parse_config(data: dict, base_dir=".") -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("<root>", "expected a mapping")
    if "version" not in data:
        raise ConfigError("version", "required key missing")
    known = {f.name for f in fields(ExperimentConfig)} - {"base_dir"}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(unknown[0], "unknown key")
    kw = {}
    for f in fields(ExperimentConfig):
        if f.name in data:
            kw[f.name] = f.metadata["check"](data[f.name], f.name)
    cfg = ExperimentConfig(**kw, base_dir=Path(base_dir).resolve())
    _cross_checks(cfg)
    return cfg


def _cross_checks(cfg: ExperimentConfig):
    w = cfg.weights
    if w.s_max <= w.s_min:
        raise ConfigError("weights.s_max", "must exceed weights.s_min")
    t0 = cfg.t0
    if not 0 < t0 < cfg.domain.T:
        raise ConfigError("weights.t0", f"must lie strictly inside (0, T={cfg.domain.T})")
    # let the domain builder reject anything the per-field checks miss
    from .geometry import DomainConfigError
    try:
        cfg.build_domain()
    except DomainConfigError as e:
        raise ConfigError("domain", str(e)) from None


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError(str(path), f"cannot read config ({e.strerror})") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}:{e.lineno}:{e.colno}", f"invalid JSON ({e.msg})") from None
    return parse_config(data, path.parent)
