"""Command-line entry point: ``modeltuner <subcommand> ...``.

Exit status is 0 on success, 1 on usage errors and 2 on runtime failures.
"""

import argparse
import glob
import json
import logging
import os
import sys
from typing import List, Optional

from . import __version__
from .errors import ModelTunerError
from .gridsearch import front_to_json, grid_search, load_archive, pareto_front, EvaluatedPoint
from .hpspace import REDUCED_SPACE, WIDE_SPACE, Configuration, SearchSpace
from .moo import EvolutionParams, evolve, population_from_json, population_to_json, reduce_space
from .prompts import Strategy
from .report import render_report
from .runner import Harness, load_plan, make_search_evaluator, run, tune_pipeline
from .stats import tabulate
from .store import read_records

log = logging.getLogger("modeltuner")

BUILTIN_SPACES = {"wide": WIDE_SPACE, "reduced": REDUCED_SPACE}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise UsageError(message)


def _space(arg: Optional[str]) -> SearchSpace:
    if arg is None:
        return WIDE_SPACE
    if arg in BUILTIN_SPACES:
        return BUILTIN_SPACES[arg]
    return SearchSpace.load(arg)


def _out(args, default: str = ".") -> str:
    out = args.out or default
    os.makedirs(out, exist_ok=True)
    return out


def _plan(args):
    path = args.config
    if not path:
        raise UsageError("--config/--plan is required")
    plan = load_plan(path)
    if args.seed is not None:
        plan.master_seed = args.seed
    return plan


def _evo_params(args, seed: int) -> EvolutionParams:
    return EvolutionParams(
        population_size=args.population,
        generations=args.generations,
        crossover_prob=args.crossover,
        mutation_prob=args.mutation,
        master_seed=seed,
        mutation_mode=args.mutation_mode,
    )


def _dump(path: str, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2)
        fh.write("\n")


def cmd_tune(args) -> int:
    plan = _plan(args)
    space = _space(args.space)
    out = _out(args)
    evo = _evo_params(args, plan.master_seed)
    if args.pipeline:
        result = tune_pipeline(plan, space, evo, nsga_runs=args.runs, out_dir=out, as_choices=args.as_choices)
        print(json.dumps(result.front_json(), indent=2))
        return 0
    harness = Harness(plan)
    evaluator = make_search_evaluator(harness)
    finals = []
    for i in range(args.runs):
        archive = os.path.join(out, f"nsga_run{i}_archive.jsonl")
        if os.path.exists(archive):
            os.remove(archive)
        params = EvolutionParams(evo.population_size, evo.generations, evo.crossover_prob,
                                 evo.mutation_prob, evo.master_seed + i, evo.mutation_mode)
        res = evolve(space, evaluator, params, run_id=i, archive_path=archive)
        path = os.path.join(out, f"nsga_run{i}_final.json")
        _dump(path, population_to_json(res.final))
        finals.append(path)
    print("\n".join(finals))
    return 0


def cmd_reduce(args) -> int:
    paths: List[str] = []
    for pattern in args.populations:
        paths.extend(sorted(glob.glob(pattern)) or [pattern])
    pops = []
    for p in paths:
        with open(p, encoding="utf-8") as fh:
            pops.append(population_from_json(json.load(fh)))
    reduced = reduce_space(pops, _space(args.space), args.as_choices)
    text = reduced.dumps()
    if args.out:
        with open(os.path.join(_out(args), "reduced_space.json"), "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    print(text)
    return 0


def cmd_grid(args) -> int:
    plan = _plan(args)
    space = _space(args.space)
    out = _out(args)
    evaluator = make_search_evaluator(Harness(plan))
    points = grid_search(space, evaluator, os.path.join(out, "grid_archive.jsonl"), max_workers=args.workers)
    print(f"{len(points)} configurations evaluated; archive at {os.path.join(out, 'grid_archive.jsonl')}")
    return 0


def cmd_front(args) -> int:
    done = load_archive(args.grid)
    if not done:
        raise ModelTunerError(f"no evaluated points in {args.grid}")
    points = [EvaluatedPoint(Configuration.from_dict(json.loads(k)), f) for k, f in done.items()]
    rows = front_to_json(pareto_front(points))
    if args.out:
        _dump(os.path.join(_out(args), "front.json"), rows)
    print(json.dumps(rows, indent=2))
    return 0


def cmd_run(args) -> int:
    plan = _plan(args)
    out = _out(args)
    store_path = args.records or os.path.join(out, "records.jsonl")
    store = run(plan, store_path, limit=args.limit)
    print(f"{len(store)} records in {store_path}")
    return 0


def _records(args):
    recs = read_records(args.records)
    if not recs:
        raise ModelTunerError(f"no records in {args.records}")
    return recs


def cmd_stats(args) -> int:
    table = tabulate(_records(args), args.baseline, args.group_by, paired=not args.unpaired)
    text = table.to_csv()
    if args.out:
        with open(os.path.join(_out(args), f"wtl_by_{args.group_by}.csv"), "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    sys.stdout.write(text)
    return 0


def cmd_report(args) -> int:
    front = None
    if args.front:
        with open(args.front, encoding="utf-8") as fh:
            front = json.load(fh)
    formats = [f.strip() for f in args.format.split(",") if f.strip()]
    paths = render_report(_records(args), args.baseline, _out(args, "report"), formats, front,
                          paired=not args.unpaired, dist_data=args.dist_data)
    print("\n".join(paths))
    return 0


def cmd_prompt(args) -> int:
    plan = _plan(args)
    h = Harness(plan)
    domain = args.domain or plan.domains[0].id
    sys.stdout.write(h.prompt(domain, Strategy.parse(args.strategy)) + "\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", "--plan", dest="config", help="experiment plan JSON")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int, help="master seed (overrides the plan)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="modeltuner", description="Tune LLM decoding hyperparameters for domain-model generation.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="<command>", parser_class=_Parser)
    sub.required = True

    def search_opts(p):
        p.add_argument("--space", help="search space JSON, or 'wide' / 'reduced'")
        p.add_argument("--as-choices", nargs="*", default=[], metavar="PARAM",
                       help="reduce these range parameters to observed values only")

    p = sub.add_parser("tune", parents=[common], help="run the NSGA-II phase")
    search_opts(p)
    p.add_argument("--runs", type=int, default=10)
    p.add_argument("--population", type=int, default=30)
    p.add_argument("--generations", type=int, default=10)
    p.add_argument("--crossover", type=float, default=0.9)
    p.add_argument("--mutation", type=float, default=0.2)
    p.add_argument("--mutation-mode", choices=["individual", "gene"], default="individual")
    p.add_argument("--pipeline", action="store_true", help="continue with reduction, grid search and front")
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("reduce", parents=[common], help="reduce a space from final populations")
    search_opts(p)
    p.add_argument("populations", nargs="+", help="final population JSON files or globs")
    p.set_defaults(func=cmd_reduce)

    p = sub.add_parser("grid", parents=[common], help="exhaustively evaluate a space")
    search_opts(p)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("front", parents=[common], help="Pareto front of a grid archive")
    p.add_argument("--grid", required=True, help="grid archive JSONL")
    p.set_defaults(func=cmd_front)

    p = sub.add_parser("run", parents=[common], help="execute an experiment plan")
    p.add_argument("--records", help="record store path (default <out>/records.jsonl)")
    p.add_argument("--limit", type=int, help="stop after this many new cells")
    p.set_defaults(func=cmd_run)

    def stat_opts(p):
        p.add_argument("--records", required=True)
        p.add_argument("--baseline", required=True, help="baseline configuration id")
        p.add_argument("--unpaired", action="store_true", help="rank-sum instead of signed-rank test")

    p = sub.add_parser("stats", parents=[common], help="Win/Tie/Loss table as CSV")
    stat_opts(p)
    p.add_argument("--group-by", choices=["solution", "domain"], default="solution")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("report", parents=[common], help="render the report bundle")
    stat_opts(p)
    p.add_argument("--format", default="markdown,csv,json", help="comma list of markdown, csv, json")
    p.add_argument("--front", help="front JSON to include")
    p.add_argument("--dist-data", action="store_true", help="also write raw per-record scores")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("prompt", parents=[common], help="print a built prompt")
    p.add_argument("--domain")
    p.add_argument("--strategy", default="zero-shot")
    p.set_defaults(func=cmd_prompt)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError:
        return 1
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        sys.stderr.write(f"modeltuner: error: {exc}\n")
        return 1
    except (ModelTunerError, OSError, ValueError) as exc:
        sys.stderr.write(f"modeltuner: {type(exc).__name__}: {exc}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
