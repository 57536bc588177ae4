"""Run every shipped experiment config through the CLI.

    python scripts/run_experiments.py --out runs/t1 --threads 1
    python scripts/run_experiments.py --out runs/t4 --threads 4 --only weights invert

Each subcommand writes into OUT/<subcommand>/; wall times and exit codes go
to OUT/runs.json.  BLAS/OpenMP thread counts are pinned through the
environment so the same script drives the determinism comparison.
"""
from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import time
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]
THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS")

# subcommand -> config file
RUNS = {
    "weights": "weights.json",
    "solver-check": "solver.json",
    "elliptic-check": "elliptic.json",
    "parabolic-check": "parabolic.json",
    "carleman-check": "carleman.json",
    "forward": "forward.json",
    "invert": "invert.json",
    "stability": "stability.json",
}


def thread_env(threads: int) -> dict:
    env = dict(os.environ)
    for k in THREAD_VARS:
        env[k] = str(threads)
    src = str(ROOT / "src")
    env["PYTHONPATH"] = src + os.pathsep + env.get("PYTHONPATH", "") if env.get("PYTHONPATH") else src
    return env


def run_all(out, threads: int = 1, only=None, configs=ROOT / "configs") -> dict:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    env = thread_env(threads)
    record = {"threads": threads, "runs": {}}
    for cmd, cfg in RUNS.items():
        if only and cmd not in only:
            continue
        t = time.perf_counter()
        proc = subprocess.run([sys.executable, "-m", "mhd_carleman.cli", cmd, str(Path(configs) / cfg),
                               "--out", str(out / cmd)], env=env, capture_output=True, text=True)
        wall = time.perf_counter() - t
        record["runs"][cmd] = {"exit": proc.returncode, "seconds": wall, "stderr": proc.stderr[-4000:]}
        print(f"{cmd:16s} exit {proc.returncode}  {wall:8.1f} s", flush=True)
        if cmd in ("elliptic-check", "parabolic-check", "carleman-check", "stability") and proc.returncode == 0:
            subprocess.run([sys.executable, "-m", "mhd_carleman.cli", "plots", str(out / cmd)], env=env,
                           capture_output=True)
    (out / "runs.json").write_text(json.dumps(record, indent=2) + "\n")
    return record


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--out", default=str(ROOT / "runs" / "t1"))
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--only", nargs="*", choices=sorted(RUNS))
    args = ap.parse_args(argv)
    rec = run_all(args.out, args.threads, args.only)
    return 0 if all(r["exit"] == 0 for r in rec["runs"].values()) else 1


if __name__ == "__main__":
    sys.exit(main())
