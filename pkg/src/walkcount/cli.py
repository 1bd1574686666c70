"""Batch experiment runner.

``walkcount run`` executes named experiments from a JSON config, writing
one CSV row per trial row and one JSON summary per experiment; the exit
code is 0 iff every experiment passed.  ``walkcount generate-instance``
writes a random injective collision instance with a prescribed collision
count.

Config format (JSON):

    {
      "experiments": [
        {"name": "sampling-estimator",
         "seed": 123,
         "params": {"n": 200, "m": 50, "epsilon": 0.4, "nu": 0.2,
                    "trials": 2000}}
      ]
    }

``params`` keys override the experiment's canonical defaults (which
reproduce the acceptance suite); thresholds such as ``mass_floor`` or
``rate_floor`` live in ``params`` so reviewers can tighten them without
code changes.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import collisions
from .errors import WalkcountError
from .experiments import DEFAULT_SEED, EXPERIMENTS, ExperimentResult, run_experiment


def _write_outputs(out_dir: Path, result: ExperimentResult) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    if result.rows:
        fieldnames: list[str] = []
        for row in result.rows:
            for key in row:
                if key not in fieldnames:
                    fieldnames.append(key)
        with open(out_dir / f"{result.name}.csv", "w", newline="") as handle:
            writer = csv.DictWriter(handle, fieldnames=fieldnames, restval="")
            writer.writeheader()
            writer.writerows(result.rows)
    with open(out_dir / f"{result.name}.json", "w") as handle:
        json.dump({"name": result.name, "passed": result.passed,
                   "summary": result.summary}, handle, indent=2, default=str)
        handle.write("\n")


def _run_command(args: argparse.Namespace) -> int:
    try:
        config = json.loads(Path(args.config).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: cannot read config {args.config}: {exc}", file=sys.stderr)
        return 2
    specs = config.get("experiments", [])
    if args.only:
        wanted = set(args.only)
        unknown = wanted - set(EXPERIMENTS)
        if unknown:
            print(f"error: unknown experiment names {sorted(unknown)}; "
                  f"known: {sorted(EXPERIMENTS)}", file=sys.stderr)
            return 2
        specs = [s for s in specs if s.get("name") in wanted]
    if not specs:
        print("no experiments selected; nothing to do")
        return 0

    out_dir = Path(args.out)

    def worker(spec: dict) -> ExperimentResult:
        name = spec.get("name", "")
        seed = args.seed if args.seed is not None else spec.get("seed", DEFAULT_SEED)
        return run_experiment(name, spec.get("params"), seed=seed)

    results: list[ExperimentResult] = []
    try:
        if args.jobs > 1:
            with ThreadPoolExecutor(max_workers=args.jobs) as pool:
                results = list(pool.map(worker, specs))
        else:
            results = [worker(spec) for spec in specs]
    except WalkcountError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    all_passed = True
    for result in results:
        _write_outputs(out_dir, result)
        status = "PASS" if result.passed else "FAIL"
        print(f"[{status}] {result.name}: {json.dumps(result.summary, default=str)}")
        all_passed = all_passed and result.passed
    return 0 if all_passed else 1


def _generate_command(args: argparse.Namespace) -> int:
    try:
        inst = collisions.random_instance(args.n, args.codomain, args.m, seed=args.seed)
    except WalkcountError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    text = collisions.instance_to_text(inst)
    if args.out == "-":
        sys.stdout.write(text)
    else:
        Path(args.out).write_text(text)
        print(f"wrote instance with {collisions.exact_collisions(inst)} collisions to {args.out}")
    return 0


def _list_command(args: argparse.Namespace) -> int:
    for name in sorted(EXPERIMENTS):
        print(name)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="walkcount",
                                     description="walk-based counting experiment runner")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run experiments from a JSON config")
    run_p.add_argument("--config", required=True, help="path to the JSON config")
    run_p.add_argument("--out", default="results", help="output directory")
    run_p.add_argument("--jobs", type=int, default=1, help="parallel experiments")
    run_p.add_argument("--seed", type=int, default=None,
                       help="override every experiment's seed")
    run_p.add_argument("--only", nargs="*", default=None,
                       help="restrict to these experiment names")
    run_p.set_defaults(func=_run_command)

    gen_p = sub.add_parser("generate-instance",
                           help="write a random injective collision instance")
    gen_p.add_argument("--n", type=int, required=True, help="domain size per side")
    gen_p.add_argument("--codomain", type=int, required=True, help="codomain size")
    gen_p.add_argument("--m", type=int, required=True, help="exact collision count")
    gen_p.add_argument("--seed", type=int, default=0)
    gen_p.add_argument("--out", default="-", help="output file, or - for stdout")
    gen_p.set_defaults(func=_generate_command)

    list_p = sub.add_parser("list", help="list known experiment names")
    list_p.set_defaults(func=_list_command)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
