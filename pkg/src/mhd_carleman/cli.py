"""Command-line experiment runner.

    python -m mhd_carleman.cli <subcommand> CONFIG [--out DIR] [--seed N]
    python -m mhd_carleman.cli plots ARTIFACT_DIR

Every run writes its artifacts plus ``manifest.json`` (config hash, seed,
package versions, per-file SHA-256 and timings) into the output directory.
Exit status: 0 success, 2 configuration or input error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from .carleman import GROWTH_LIMIT, HypothesisError, sweep_theorem
from .config import ConfigError, ExperimentConfig, load_config
from .fields import FieldSpecError
from .geometry import FACES, DomainConfigError, SubBoundary, omega_epsilon
from .io import RunManifest, config_hash, write_field, write_json
from .mhd_solver import NumericalError, check_weak_div_conditions
from .weights import WeightConstructionError

log = logging.getLogger("mhd_carleman")

OUT_ENV = "MHD_CARLEMAN_OUT"
EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3


class RunFailure(RuntimeError):
    """A run finished but produced an unusable numerical result."""


def _csv(path, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    keys = []
    for r in rows:
        keys += [k for k in r if k not in keys]
    with open(path, "w", newline="") as fh:
        wr = csv.DictWriter(fh, fieldnames=keys)
        wr.writeheader()
        for r in rows:
            wr.writerow({k: _cell(v) for k, v in r.items()})


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer, np.bool_)):
        return v.item()
    return v


def _lam_tag(lam: float) -> str:
    return f"{lam:g}".replace(".", "p")


# --------------------------------------------------------------------------
# subcommands


def cmd_weights(cfg: ExperimentConfig, out: Path, man: RunManifest) -> dict:
    from .weights import build_d, regular_weight, singular_weight, build_l, validate_d, weight_invariants
    dom = cfg.build_domain()
    w = cfg.weights
    catalog = cfg.run.weight_catalog or [{"kind": w.kind, "gamma": w.gamma}]
    summary = {"entries": [], "passed": True}
    for entry in catalog:
        gamma = SubBoundary.from_faces(dom, entry["gamma"])
        d = build_d(dom, gamma, entry["kind"])
        tag = entry["kind"]
        rep = validate_d(d)
        write_json(out / tag / "validation.json", rep.to_dict())
        write_field(out / tag / "d.bin", d.values, {"name": "d", "grid": "cell centres"})
        om = omega_epsilon(dom, d.values, w.eps)
        write_field(out / tag / "omega_eps.bin", om.mask, {"name": "omega_eps", "eps": w.eps})
        inv_rows = []
        for lam in w.lambdas:
            sw = singular_weight(d, build_l(dom.T, cfg.t0), lam)
            rw = regular_weight(d, lam, beta=w.beta, t0=cfg.t0, T=dom.T)
            lt = _lam_tag(lam)
            write_field(out / tag / f"alpha_lam{lt}.bin", sw.grid_alpha(),
                        {"name": "alpha", "lambda": lam, "axes": "t, x, y, z"})
            write_field(out / tag / f"phi_lam{lt}.bin", rw.grid_phi(),
                        {"name": "phi", "lambda": lam, "beta": rw.beta, "axes": "t, x, y, z"})
            for s in w.s_values:
                inv = weight_invariants(dom, d, lam, s, cfg.t0, w.eps)
                inv_rows.append({"lambda": lam, "s": s, **inv, "passed": all(inv.values())})
        write_json(out / tag / "invariants.json", inv_rows)
        ok = rep.passed and all(r["passed"] for r in inv_rows)
        summary["entries"].append({"kind": tag, "gamma": entry["gamma"], "validation_passed": rep.passed,
                                   "invariants_passed": all(r["passed"] for r in inv_rows)})
        summary["passed"] &= ok
    write_json(out / "summary.json", summary)
    if not all(e["validation_passed"] for e in summary["entries"]):
        raise RunFailure("weight generator validation failed; see validation.json")
    return summary


def _f_true(cfg, dom):
    from .inverse import band_limited_field
    return band_limited_field(dom, cfg.source.seed, cfg.source.kmax, cfg.source.decay)


def _setup(cfg, faces=None):
    from .inverse import InverseSetup
    dom = cfg.build_domain()
    return InverseSetup(dom, cfg.build_coefficients(), cfg.build_source(), cfg.t0,
                        tuple(faces or cfg.weights.gamma))


def cmd_forward(cfg: ExperimentConfig, out: Path, man: RunManifest) -> dict:
    from .inverse import data_norm_full, data_norm_partial, forward_observation
    setup = _setup(cfg, FACES)
    dom = setup.domain
    f = _f_true(cfg, dom)
    obs = forward_observation(f, setup, keep_trajectory=True)
    traj = obs.trajectory
    write_field(out / "f.bin", f, {"name": "f"})
    for name, per_face in obs.traces.values.items():
        for face, v in per_face.items():
            write_field(out / "traces" / f"{name}_{face}.bin", v, {"field": name, "face": face,
                                                                  "axes": "t, component?, a, b"})
    for name, v in (obs.snapshot or {}).items():
        write_field(out / "snapshot" / f"{name}.bin", v, {"field": name, "t0": cfg.t0})
    _csv(out / "div_history.csv", [{"t": t, "max_abs_div": v} for t, v in zip(dom.times(), traj.div_history)])
    weak = check_weak_div_conditions(traj)
    write_json(out / "weak_div.json", weak)
    summary = {"data_norm_full": data_norm_full(obs).to_dict(),
               "data_norm_partial": data_norm_partial(obs, cfg.weights.gamma).to_dict(),
               "max_div": float(traj.div_history.max()), "weak_div": weak}
    write_json(out / "summary.json", summary)
    return summary


def _d(cfg, dom):
    from .weights import build_d
    return build_d(dom, cfg.build_gamma(dom), cfg.weights.kind)


def cmd_carleman_check(cfg: ExperimentConfig, out: Path, man: RunManifest) -> dict:
    from .instances import mhd_instance, time_cutoff_instance
    dom = cfg.build_domain()
    coeffs = cfg.build_coefficients()
    d = _d(cfg, dom)
    s_grid = cfg.s_grid()
    r = cfg.run
    rows = []
    for i in range(r.n_instances):
        inst = mhd_instance(dom, coeffs, r.seed + i, r.time_profile, cfg.t0)
        for kind in r.kinds:
            use = time_cutoff_instance(inst, cfg.t0) if kind == "regular" and r.time_cutoff else inst
            for lam in cfg.weights.lambdas:
                res = sweep_theorem(kind, use, s_grid, lam, d, cfg.t0, cfg.weights.beta)
                stem = out / "sweeps" / f"{kind}_lam{_lam_tag(lam)}_{i:02d}"
                stem.parent.mkdir(parents=True, exist_ok=True)
                res.write_csv(stem.with_suffix(".csv"))
                v = res.verdict()
                v["instance"] = i
                v["passed"] = bool(res.bounded and v.get("fit_ok", True))
                write_json(stem.with_suffix(".json"), v)
                rows.append(v)
    summary = {"sweeps": rows, "passed": all(v["passed"] for v in rows), "growth_limit": GROWTH_LIMIT}
    write_json(out / "summary.json", summary)
    return summary


def cmd_elliptic_check(cfg: ExperimentConfig, out: Path, man: RunManifest) -> dict:
    from .carleman import elliptic_carleman_check
    from .instances import elliptic_instance
    from .weights import interior_peak_d
    dom = cfg.build_domain()
    d = _d(cfg, dom)
    bad = interior_peak_d(dom)
    s_grid = cfg.s_grid()
    r = cfg.run
    rows = []
    for lam in cfg.weights.lambdas:
        for i in range(r.n_samples):
            prob = elliptic_instance(dom, d, r.seed + i, r.split)
            res = elliptic_carleman_check(prob, lam, s_grid)
            stem = out / "sweeps" / f"elliptic_lam{_lam_tag(lam)}_{i:02d}"
            stem.parent.mkdir(parents=True, exist_ok=True)
            res.write_csv(stem.with_suffix(".csv"))
            row = {"lambda": lam, "sample": i, "growth_factor": res.growth_factor(),
                   "bounded": res.growth_factor() <= r.growth_limit, "residual": prob.residual}
            if r.negative_control:
                ctrl = dataclasses.replace(prob, d_values=bad.values, label=prob.label + "-control")
                cres = elliptic_carleman_check(ctrl, lam, s_grid)
                cres.write_csv(stem.parent / f"control_lam{_lam_tag(lam)}_{i:02d}.csv")
                row["control_growth_factor"] = cres.growth_factor()
                row["control_detected"] = cres.growth_factor() > r.control_limit
            rows.append(row)
    _csv(out / "samples.csv", rows)
    summary = {"samples": rows, "all_bounded": all(x["bounded"] for x in rows),
               "growth_limit": r.growth_limit, "control_limit": r.control_limit}
    if r.negative_control:
        summary["control_detected"] = sum(bool(x["control_detected"]) for x in rows)
    write_json(out / "summary.json", summary)
    return summary


def cmd_parabolic_check(cfg: ExperimentConfig, out: Path, man: RunManifest) -> dict:
    from .carleman import parabolic_carleman_check
    from .instances import parabolic_instance
    dom = cfg.build_domain()
    d = _d(cfg, dom)
    s_grid = cfg.s_grid()
    r = cfg.run
    nu = cfg.build_coefficients().nu
    rows = []
    for i in range(r.n_instances):
        prob = parabolic_instance(dom, d, r.seed + i, nu=nu)
        cases = [("singular", 0)] if "singular" in r.kinds else []
        if "regular" in r.kinds:
            cases += [("regular", tau) for tau in r.taus]
        for kind, tau in cases:
            for lam in cfg.weights.lambdas:
                res = parabolic_carleman_check(kind, prob, lam, s_grid, tau, cfg.t0, cfg.weights.beta)
                name = f"{kind}" + (f"_tau{tau}" if kind == "regular" else "")
                stem = out / "sweeps" / f"{name}_lam{_lam_tag(lam)}_{i:02d}"
                stem.parent.mkdir(parents=True, exist_ok=True)
                res.write_csv(stem.with_suffix(".csv"))
                v = res.verdict()
                v.update({"instance": i, "tau": tau, "passed": bool(res.bounded and v.get("fit_ok", True))})
                write_json(stem.with_suffix(".json"), v)
                rows.append(v)
    summary = {"sweeps": rows, "passed": all(v["passed"] for v in rows), "growth_limit": GROWTH_LIMIT}
    write_json(out / "summary.json", summary)
    return summary


def cmd_invert(cfg: ExperimentConfig, out: Path, man: RunManifest) -> dict:
    from .inverse import (add_noise, forward_observation, l2, observation_vector, reconstruct_f)
    setup = _setup(cfg)
    dom = setup.domain
    r = cfg.run
    man.start("assemble")
    op = setup.operator()
    man.stop("assemble")
    f = _f_true(cfg, dom)
    y = op.forward(f)
    # the same data through the solver and trace extraction
    y_solver = observation_vector(forward_observation(f, setup), op)
    route_gap = float(np.abs(y - y_solver).max() / max(np.abs(y).max(), 1e-300))
    if r.noise > 0:
        y = add_noise(y, r.noise, r.seed)
    man.start("reconstruct")
    res = reconstruct_f(y, op, r.reg, r.tol, r.maxiter)
    man.stop("reconstruct")
    zero = reconstruct_f(np.zeros(op.m), op, r.reg, r.tol, r.maxiter)
    err = l2(res.f - f, dom) / l2(f, dom)
    write_field(out / "f_hat.bin", res.f, {"name": "f_hat"})
    write_field(out / "f_true.bin", f, {"name": "f_true"})
    _csv(out / "residual_history.csv", [{"iteration": k, "residual": v} for k, v in enumerate(res.residual_history)])
    report = {"relative_error": err, "cg": res.summary(), "faces": list(setup.faces), "noise": r.noise,
              "dual_route_gap": route_gap, "zero_data_max_abs": float(np.abs(zero.f).max()),
              "zero_data_exact": bool(np.all(zero.f == 0.0))}
    write_json(out / "report.json", report)
    if not res.converged:
        raise RunFailure(f"CG did not converge: {res.summary()}")
    return report


def cmd_stability(cfg: ExperimentConfig, out: Path, man: RunManifest) -> dict:
    from .inverse import holder_experiment, lipschitz_experiment
    r = cfg.run
    summary = {}
    if r.mode in ("lipschitz", "both"):
        man.start("lipschitz")
        rep = lipschitz_experiment(_setup(cfg, FACES), n_samples=r.n_samples, noise_levels=tuple(r.noise_levels),
                                   seed=r.seed, reg=r.reg, tol=r.tol, kmax=cfg.source.kmax)
        man.stop("lipschitz")
        rep.write_json(out / "lipschitz.json")
        rep.write_csv(out / "lipschitz.csv")
        summary["lipschitz"] = rep.fit
    if r.mode in ("holder", "both"):
        faces = r.holder_gamma or cfg.weights.gamma
        man.start("holder")
        rep = holder_experiment(_setup(cfg, faces), cfg.weights.eps, n_samples=r.holder_samples, seed=r.seed,
                                reg=r.reg, tol=r.tol)
        man.stop("holder")
        rep.write_json(out / "holder.json")
        rep.write_csv(out / "holder.csv")
        summary["holder"] = {k: v for k, v in rep.fit.items() if k != "residuals"}
        summary["holder_meta"] = rep.meta
    write_json(out / "summary.json", summary)
    return summary


def cmd_solver_check(cfg: ExperimentConfig, out: Path, man: RunManifest) -> dict:
    from .verification import (adjoint_check, linearity_check, mms_study, operator_oracle_check,
                               zero_input_check)
    dom = cfg.build_domain()
    coeffs = cfg.build_coefficients()
    src = cfg.build_source()
    r = cfg.run
    man.start("mms")
    mms = mms_study(coeffs, tuple(r.mms_ns), r.mms_T, r.mms_nt)
    man.stop("mms")
    timing = {f"mms_n{row['n']}": row.pop("seconds") for row in mms["rows"]}
    man.timings.update(timing)
    _csv(out / "mms.csv", mms["rows"])
    man.start("oracles")
    report = {"mms": mms, "zero_input": zero_input_check(dom, coeffs, src),
              "linearity": linearity_check(dom, coeffs, src, r.seed),
              "operators": operator_oracle_check(dom, coeffs, seed=r.seed),
              "adjoint": adjoint_check(dom, coeffs, src, cfg.t0, r.n_pairs, r.seed)}
    man.stop("oracles")
    write_json(out / "report.json", report)
    return report


COMMANDS = {
    "weights": cmd_weights,
    "forward": cmd_forward,
    "carleman-check": cmd_carleman_check,
    "elliptic-check": cmd_elliptic_check,
    "parabolic-check": cmd_parabolic_check,
    "invert": cmd_invert,
    "stability": cmd_stability,
    "solver-check": cmd_solver_check,
}


# --------------------------------------------------------------------------
# plot tables


PLOT_SOURCES = {
    "ratio_vs_s.csv": "sweeps/*.csv from carleman-check, elliptic-check or parabolic-check",
    "error_vs_noise.csv": "lipschitz.json from stability",
    "lipschitz_samples.csv": "lipschitz.json from stability",
    "holder_fit.csv": "holder.json from stability",
}


def emit_plots_data(artifact_dir) -> list[Path]:
    """Reshape run artifacts into tidy per-figure CSVs under ``plots/``."""
    root = Path(artifact_dir)
    if not root.is_dir():
        raise FileNotFoundError(f"{root} is not a directory")
    made = []
    plots = root / "plots"
    sweeps = sorted((root / "sweeps").glob("*.csv")) if (root / "sweeps").is_dir() else []
    if sweeps:
        rows = []
        for p in sweeps:
            parts = p.stem.rsplit("_", 2)
            with open(p) as fh:
                for row in csv.DictReader(fh):
                    rows.append({"series": parts[0], "lambda": parts[1].removeprefix("lam").replace("p", "."),
                                 "instance": parts[2], "s": row["s"], "ratio": row["ratio"],
                                 "log_ratio": row.get("log_ratio", "")})
        _csv(plots / "ratio_vs_s.csv", rows)
        made.append(plots / "ratio_vs_s.csv")
    lip = root / "lipschitz.json"
    if lip.is_file():
        rep = json.loads(lip.read_text())
        _csv(plots / "error_vs_noise.csv", [{"noise_level": s["noise_level"], "rel_error": s["rel_error"]}
                                            for s in rep["samples"] if "noise_level" in s])
        _csv(plots / "lipschitz_samples.csv", [s for s in rep["samples"] if "ratio" in s])
        made += [plots / "error_vs_noise.csv", plots / "lipschitz_samples.csv"]
    hol = root / "holder.json"
    if hol.is_file():
        rep = json.loads(hol.read_text())
        theta = rep["fit"].get("theta_raw")
        rows = []
        for s in rep["samples"]:
            if isinstance(s["sample"], int) and s["M"] > 0 and s["D"] > 0:
                rows.append({"sample": s["sample"], "log_norm_f": float(np.log(s["norm_f_region"])),
                             "log_M": float(np.log(s["M"])), "log_D": float(np.log(s["D"])),
                             "log_combination": (1 - theta) * float(np.log(s["M"])) + theta * float(np.log(s["D"]))
                             if theta is not None else ""})
        _csv(plots / "holder_fit.csv", rows)
        made.append(plots / "holder_fit.csv")
    if not made:
        expected = "\n".join(f"  {k}: needs {v}" for k, v in PLOT_SOURCES.items())
        raise FileNotFoundError(f"no plottable artifacts in {root}; expected one of\n{expected}")
    return made


# --------------------------------------------------------------------------
# entry point


def _out_dir(args, cfg: ExperimentConfig) -> Path:
    if args.out:
        return Path(args.out).resolve()
    if cfg.out_dir() is not None:
        return cfg.out_dir()
    return (Path(os.environ.get(OUT_ENV, "runs")) / args.command).resolve()


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mhd-carleman", description=__doc__.split("\n\n")[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("config", help="JSON experiment config")
        p.add_argument("--out", help=f"output directory (default: run.out_dir, then ${OUT_ENV}/{name})")
        p.add_argument("--seed", type=int, help="override run.seed")
    p = sub.add_parser("plots", help="write plot-ready CSVs from an artifact directory")
    p.add_argument("artifact_dir")
    return ap


def run(command: str, config_path, out=None, seed=None) -> int:
    args = argparse.Namespace(command=command, config=str(config_path), out=out, seed=seed)
    return _run(args)


def _run(args) -> int:
    if args.command == "plots":
        try:
            for p in emit_plots_data(args.artifact_dir):
                print(p)
        except FileNotFoundError as e:
            print(f"error: {e}", file=sys.stderr)
            return EXIT_CONFIG
        return EXIT_OK
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("--seed", "must be >= 0")
            cfg.run.seed = args.seed
        cfg.build_coefficients()
    except (ConfigError, FieldSpecError, DomainConfigError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    out = _out_dir(args, cfg)
    out.mkdir(parents=True, exist_ok=True)
    man = RunManifest(args.command, config_hash(cfg.to_dict()), cfg.run.seed)
    status = EXIT_OK
    man.start("total")
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            result = COMMANDS[args.command](cfg, out, man)
        if isinstance(result, dict) and result.get("passed") is False:
            log.warning("%s: verdict failed, see summary.json", args.command)
    except (ConfigError, FieldSpecError, DomainConfigError, WeightConstructionError) as e:
        print(f"config error: {e}", file=sys.stderr)
        man.status = "config_error"
        status = EXIT_CONFIG
    except (NumericalError, HypothesisError, RunFailure, FloatingPointError) as e:
        print(f"numerical failure: {type(e).__name__}: {e}", file=sys.stderr)
        man.status = f"numerical_failure: {type(e).__name__}"
        status = EXIT_NUMERICAL
    man.stop("total")
    man.collect(out)
    man.write(out)
    return status


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return _run(args)


if __name__ == "__main__":
    sys.exit(main())
