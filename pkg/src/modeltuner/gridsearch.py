"""Exhaustive evaluation of a search space and Pareto-front extraction."""

import json
import logging
import os
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Dict, List, Sequence

from .errors import EmptyInput, EvaluatorFailure
from .hpspace import Configuration, SearchSpace, enumerate_configs
from .moo import FitnessVector

log = logging.getLogger(__name__)

GRID_RUN_ID = "grid"


@dataclass(frozen=True)
class EvaluatedPoint:
    config: Configuration
    fitness: FitnessVector


def load_archive(path) -> Dict[str, FitnessVector]:
    """Read a JSONL archive into {config key: fitness}; a torn last line is ignored."""
    done: Dict[str, FitnessVector] = {}
    if path is None or not os.path.exists(path):
        return done
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError:
                log.warning("skipping unreadable archive line %d in %s", lineno, path)
                continue
            cfg = Configuration.from_dict(row["config"])
            done.setdefault(cfg.key(), FitnessVector.from_dict(row["fitness"]))
    return done


def grid_search(
    space: SearchSpace,
    evaluator: Callable[[Configuration], FitnessVector],
    archive_path=None,
    max_workers: int = 1,
) -> List[EvaluatedPoint]:
    """Evaluate every configuration of ``space`` in enumeration order.

    Points already present in ``archive_path`` are reused, so an interrupted
    search resumes where it stopped.
    """
    configs = enumerate_configs(space)
    done = load_archive(archive_path)
    pending = [c for c in configs if c.key() not in done]
    if len(done):
        log.info("grid resume: %d cached, %d to evaluate", len(configs) - len(pending), len(pending))
    lock = threading.Lock()
    fh = open(archive_path, "a", encoding="utf-8") if archive_path is not None else None

    def work(cfg: Configuration) -> None:
        fit = FitnessVector(*evaluator(cfg))
        row = {"run_id": GRID_RUN_ID, "generation": 0, "config": cfg.to_dict(), "fitness": fit.to_dict()}
        with lock:
            done[cfg.key()] = fit
            if fh is not None:
                fh.write(json.dumps(row) + "\n")
                fh.flush()

    try:
        if max_workers > 1:
            pool = ThreadPoolExecutor(max_workers=max_workers)
            try:
                for fut in [pool.submit(work, c) for c in pending]:
                    fut.result()
            finally:
                pool.shutdown(wait=True, cancel_futures=True)
        else:
            for c in pending:
                work(c)
    except Exception as exc:
        raise EvaluatorFailure(f"grid search stopped after {len(done)} points: {exc}") from exc
    finally:
        if fh is not None:
            fh.close()
    return [EvaluatedPoint(c, done[c.key()]) for c in configs]


def pareto_front(points: Sequence[EvaluatedPoint]) -> List[EvaluatedPoint]:
    """Points not dominated by any other input point, in input order."""
    if not points:
        raise EmptyInput("pareto_front needs at least one point")
    # Sweep by descending first objective; a point survives iff its second
    # objective is not beaten by anything strictly better on the first.
    order = sorted(range(len(points)), key=lambda i: (-points[i].fitness[0], -points[i].fitness[1]))
    keep = set()
    best_second = -float("inf")
    i = 0
    while i < len(order):
        j = i
        head = points[order[i]].fitness
        while j < len(order) and points[order[j]].fitness[0] == head[0]:
            j += 1
        group = order[i:j]
        top = points[group[0]].fitness[1]
        if top > best_second:
            keep.update(g for g in group if points[g].fitness[1] == top)
            best_second = top
        i = j
    return [p for k, p in enumerate(points) if k in keep]


def front_to_json(front: Sequence[EvaluatedPoint], prefix: str = "S") -> List[dict]:
    return [
        {"id": f"{prefix}{i}", "config": p.config.to_dict(), "fitness": p.fitness.to_dict()}
        for i, p in enumerate(front)
    ]


def front_from_json(rows: Sequence[dict]) -> Dict[str, EvaluatedPoint]:
    return {
        r["id"]: EvaluatedPoint(Configuration.from_dict(r["config"]), FitnessVector.from_dict(r["fitness"]))
        for r in rows
    }
