"""Command line entry point: ``smoothcover plan`` and ``smoothcover batch``."""
from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import __version__
from .pipeline import EXIT_VALIDATION, run_pipeline
from .scenario import ScenarioError, load_scenario


def _plan(path, out=None, seed=None, skip_sim=False, emit_edt_csv=False, svg=True, quiet=False) -> int:
    try:
        scenario = load_scenario(path)
    except (ScenarioError, OSError) as exc:
        print(f"{path}: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    if seed is not None:
        scenario.ga.rng_seed = seed
    if out is None:
        out = Path(path).resolve().parent / scenario.output_dir
    rep = run_pipeline(scenario, out, skip_sim=skip_sim, emit_edt_csv=emit_edt_csv, svg=svg)
    if not quiet:
        for name, status in rep.stages.items():
            took = rep.timings.get(name)
            extra = f" ({took:.2f} s)" if took is not None else ""
            print(f"{name:<9} {status}{extra}")
            if name in rep.errors:
                print(f"          {rep.errors[name]}")
        print(f"artifacts in {out}")
    return rep.exit_code


def _plan_job(args):
    path, out, seed = args
    return path, _plan(path, out, seed, quiet=True)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="smoothcover", description="Smooth coverage trajectory planner")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("plan", help="plan and simulate one scenario")
    p.add_argument("scenario")
    p.add_argument("--out", help="output directory (default: scenario's output.dir)")
    p.add_argument("--seed", type=int, help="override the GA random seed")
    p.add_argument("--skip-sim", action="store_true")
    p.add_argument("--emit-edt-csv", action="store_true")
    p.add_argument("--svg", action=argparse.BooleanOptionalAction, default=True)

    b = sub.add_parser("batch", help="plan every *.json scenario in a directory")
    b.add_argument("directory")
    b.add_argument("--out", help="root for per-scenario output directories")
    b.add_argument("--seed", type=int)
    b.add_argument("--jobs", type=int, default=None)

    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)

    if args.command == "plan":
        return _plan(args.scenario, args.out, args.seed, args.skip_sim, args.emit_edt_csv, args.svg)

    root = Path(args.directory)
    files = sorted(root.glob("*.json"))
    if not files:
        print(f"no scenario files in {root}", file=sys.stderr)
        return EXIT_VALIDATION
    out_root = Path(args.out) if args.out else root / "runs"
    jobs = [(str(f), str(out_root / f.stem), args.seed) for f in files]
    worst = 0
    with ProcessPoolExecutor(max_workers=args.jobs) as pool:
        for path, code in pool.map(_plan_job, jobs):
            print(f"{code}  {path}")
            worst = max(worst, code)
    return worst


if __name__ == "__main__":
    sys.exit(main())
