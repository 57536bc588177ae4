"""Artifact files: little-endian float64 arrays with JSON sidecars, checksums and run manifests."""
from __future__ import annotations

import hashlib
import json
import os
import platform
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def atomic_write_bytes(path, data: bytes):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path, obj):
    text = json.dumps(clean_json(obj), indent=2, sort_keys=True, default=_default, allow_nan=False)
    atomic_write_bytes(path, (text + "\n").encode())


def clean_json(o):
    """Plain Python containers with non-finite floats spelled as strings."""
    if isinstance(o, dict):
        return {str(k): clean_json(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [clean_json(v) for v in o]
    if isinstance(o, np.ndarray):
        return clean_json(o.tolist())
    if isinstance(o, (np.bool_, bool)):
        return bool(o)
    if isinstance(o, (np.integer, int)):
        return int(o)
    if isinstance(o, (np.floating, float)):
        v = float(o)
        return v if np.isfinite(v) else str(v)
    return o


def _default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"cannot serialize {type(o).__name__}")


def write_field(path, array, meta: dict | None = None, layout: str = "C") -> tuple[Path, Path]:
    """Write ``array`` as raw little-endian values plus a ``.json`` sidecar.

    Boolean arrays are stored one byte per entry; everything else as float64.
    """
    path = Path(path)
    a = np.asarray(array)
    if a.dtype == bool:
        raw = np.ascontiguousarray(a, dtype=np.uint8)
        dtype = "bool"
    else:
        raw = np.ascontiguousarray(a, dtype="<f8")
        dtype = "<f8"
    atomic_write_bytes(path, raw.tobytes(order="C"))
    side = {"shape": list(a.shape), "dtype": dtype, "order": layout, "endianness": "little"}
    side.update(meta or {})
    side_path = path.with_suffix(path.suffix + ".json")
    write_json(side_path, side)
    return path, side_path


def read_field(path) -> tuple[np.ndarray, dict]:
    path = Path(path)
    with open(path.with_suffix(path.suffix + ".json")) as fh:
        meta = json.load(fh)
    raw = path.read_bytes()
    if meta["dtype"] == "bool":
        a = np.frombuffer(raw, dtype=np.uint8).astype(bool)
    else:
        a = np.frombuffer(raw, dtype="<f8").copy()
    return a.reshape(meta["shape"]), meta


def package_versions() -> dict:
    import scipy
    import sympy
    out = {"python": platform.python_version(), "numpy": np.__version__, "scipy": scipy.__version__,
           "sympy": sympy.__version__}
    try:
        from importlib.metadata import version
        out["artifact"] = version("artifact")
    except Exception:
        out["artifact"] = "unknown"
    return out


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=_default).encode()
    return hashlib.sha256(blob).hexdigest()


@dataclass
class RunManifest:
    """Record of one run: config hash, seed, versions, output checksums and timings."""

    subcommand: str
    config_hash: str
    seed: int
    outputs: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    versions: dict = field(default_factory=package_versions)
    status: str = "ok"
    _clock: dict = field(default_factory=dict, repr=False)

    def start(self, name: str):
        self._clock[name] = time.perf_counter()

    def stop(self, name: str):
        self.timings[name] = time.perf_counter() - self._clock.pop(name)

    def add_output(self, path, root):
        path = Path(path)
        self.outputs[str(path.relative_to(root))] = sha256_file(path)

    def collect(self, root, exclude=("manifest.json",)):
        """Checksum every file under ``root`` except the manifest itself."""
        root = Path(root)
        for p in sorted(root.rglob("*")):
            if p.is_file() and p.name not in exclude and not p.name.endswith(".tmp"):
                self.add_output(p, root)

    def to_dict(self) -> dict:
        return {"subcommand": self.subcommand, "config_hash": self.config_hash, "seed": self.seed,
                "versions": self.versions, "outputs": dict(sorted(self.outputs.items())),
                "timings": self.timings, "status": self.status}

    def write(self, root):
        write_json(Path(root) / "manifest.json", self.to_dict())
