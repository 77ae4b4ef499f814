"""Experiment orchestration: repeated generations per cell and the tuning pipeline."""

import hashlib
import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Dict, List, Optional, Sequence, Tuple

from .errors import BackendUnavailable, EvaluatorFailure, MalformedResponse, PlanInvalid
from .fitness import RemoteScorer, SurrogateScorer, make_evaluator, score_pair
from .gateway import BackendSpec, Gateway, ReferenceMockBackend, fnv1a_64
from .gridsearch import EvaluatedPoint, front_to_json, grid_search, pareto_front
from .hpspace import Configuration, SearchSpace
from .moo import EvolutionParams, evolve, population_from_json, population_to_json, reduce_space
from .prompts import PromptSpec, Strategy, WorkedExample, build_prompt, load_examples
from .store import (
    STATUS_BACKEND_ERROR,
    STATUS_NO_MODEL,
    STATUS_OK,
    GenerationRecord,
    RecordStore,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class DomainSpec:
    id: str
    input_text_path: str
    reference_model_path: str


@dataclass
class ExperimentPlan:
    domains: List[DomainSpec]
    strategies: List[Strategy]
    configurations: Dict[str, Configuration]
    baseline_id: str
    repetitions: int = 20
    backend: BackendSpec = field(default_factory=BackendSpec)
    scorer: dict = field(default_factory=lambda: {"kind": "surrogate"})
    master_seed: int = 0
    plan_id: str = "plan"
    training_domain: Optional[str] = None
    examples_manifest: Optional[str] = None
    task_header: Optional[str] = None
    search_repetitions: int = 1
    cache_dir: Optional[str] = None

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if not self.domains:
            raise PlanInvalid("plan has no domains")
        ids = [d.id for d in self.domains]
        if len(set(ids)) != len(ids):
            raise PlanInvalid(f"duplicate domain ids: {ids}")
        if not self.strategies:
            raise PlanInvalid("plan has no strategies")
        if self.baseline_id not in self.configurations:
            raise PlanInvalid(f"baseline {self.baseline_id!r} is not among the configurations")
        if self.repetitions < 1:
            raise PlanInvalid("repetitions must be >= 1")
        if self.search_repetitions < 1:
            raise PlanInvalid("search_repetitions must be >= 1")
        if self.training_domain is not None and self.training_domain not in ids:
            raise PlanInvalid(f"training domain {self.training_domain!r} is not a plan domain")
        needs_examples = {Strategy.FEW_SHOT, Strategy.CHAIN_OF_THOUGHT} & set(self.strategies)
        if needs_examples and not self.examples_manifest:
            raise PlanInvalid("few-shot and chain-of-thought strategies need an examples_manifest")

    def domain(self, domain_id: str) -> DomainSpec:
        for d in self.domains:
            if d.id == domain_id:
                return d
        raise KeyError(domain_id)

    def training(self) -> DomainSpec:
        return self.domain(self.training_domain) if self.training_domain else self.domains[0]


def _resolve(base: str, path: Optional[str]) -> Optional[str]:
    if path is None or os.path.isabs(path):
        return path
    return os.path.normpath(os.path.join(base, path))


def plan_from_dict(obj: dict, base_dir: str = ".") -> ExperimentPlan:
    try:
        domains = [
            DomainSpec(d["id"], _resolve(base_dir, d["input_text_path"]), _resolve(base_dir, d["reference_model_path"]))
            for d in obj["domains"]
        ]
        strategies = [Strategy.parse(s) for s in obj.get("strategies", ["zero-shot"])]
        configs: Dict[str, Configuration] = {}
        for entry in obj["configurations"]:
            if entry["id"] in configs:
                raise PlanInvalid(f"duplicate configuration id {entry['id']!r}")
            configs[entry["id"]] = Configuration.from_dict(entry["config"])
        return ExperimentPlan(
            domains=domains,
            strategies=strategies,
            configurations=configs,
            baseline_id=obj["baseline"],
            repetitions=int(obj.get("repetitions", 20)),
            backend=BackendSpec.from_dict(obj.get("backend", {})),
            scorer=dict(obj.get("scorer", {"kind": "surrogate"})),
            master_seed=int(obj.get("master_seed", 0)),
            plan_id=str(obj.get("plan_id", "plan")),
            training_domain=obj.get("training_domain"),
            examples_manifest=_resolve(base_dir, obj.get("examples_manifest")),
            task_header=obj.get("task_header"),
            search_repetitions=int(obj.get("search_repetitions", 1)),
            cache_dir=_resolve(base_dir, obj.get("cache_dir")),
        )
    except PlanInvalid:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise PlanInvalid(f"malformed plan: {exc!r}") from exc


def load_plan(path) -> ExperimentPlan:
    try:
        with open(path, encoding="utf-8") as fh:
            obj = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise PlanInvalid(f"cannot read plan {path}: {exc}") from exc
    return plan_from_dict(obj, os.path.dirname(os.path.abspath(path)))


def cell_seed(master_seed: int, domain_id: str, strategy: str, config_id: str, rep_index: int) -> int:
    """64-bit seed from an FNV-1a chain over the cell coordinates."""
    h = fnv1a_64(str(master_seed))
    for part in (domain_id, strategy, config_id, str(rep_index)):
        h = fnv1a_64(f"{h:016x}\x1f{part}")
    return h


def _read(path: str) -> str:
    with open(path, encoding="utf-8") as fh:
        return fh.read()


class Harness:
    """Resolved plan inputs plus the shared gateway and scorer."""

    def __init__(self, plan: ExperimentPlan, gateway: Optional[Gateway] = None, scorer=None):
        self.plan = plan
        try:
            self.inputs = {d.id: _read(d.input_text_path) for d in plan.domains}
            self.references = {d.id: _read(d.reference_model_path) for d in plan.domains}
            self.examples: Sequence[WorkedExample] = (
                load_examples(plan.examples_manifest) if plan.examples_manifest else ()
            )
        except OSError as exc:
            raise PlanInvalid(f"plan input unreadable: {exc}") from exc
        self.gateway = gateway or self._make_gateway()
        self.scorer = scorer or self._make_scorer()

    def _make_gateway(self) -> Gateway:
        spec = self.plan.backend
        backend = None
        if spec.kind == "mock-reference":
            backend = ReferenceMockBackend(
                {self.inputs[d.id]: self.references[d.id] for d in self.plan.domains}, spec.noise
            )
        return Gateway(spec, cache_dir=self.plan.cache_dir, backend=backend)

    def _make_scorer(self):
        kind = self.plan.scorer.get("kind", "surrogate")
        if kind == "surrogate":
            return SurrogateScorer()
        if kind == "remote":
            opts = {k: v for k, v in self.plan.scorer.items() if k != "kind"}
            return RemoteScorer(**opts)
        raise PlanInvalid(f"unknown scorer kind {kind!r}")

    def prompt(self, domain_id: str, strategy: Strategy) -> str:
        examples = () if strategy is Strategy.ZERO_SHOT else tuple(self.examples)
        spec = PromptSpec(strategy, self.inputs[domain_id], examples, self.plan.task_header or None)
        return build_prompt(spec)


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def plan_cells(plan: ExperimentPlan) -> List[Tuple[str, Strategy, str, int]]:
    return [
        (d.id, s, cid, rep)
        for d in plan.domains
        for s in plan.strategies
        for cid in plan.configurations
        for rep in range(plan.repetitions)
    ]


def _execute_cell(h: Harness, cell, prompts: Dict[Tuple[str, Strategy], str]) -> GenerationRecord:
    domain_id, strategy, config_id, rep = cell
    plan = h.plan
    seed = cell_seed(plan.master_seed, domain_id, strategy.value, config_id, rep)
    started = _now()
    raw_digest = model = scores = None
    try:
        res = h.gateway.generate(prompts[(domain_id, strategy)], plan.configurations[config_id], rep, seed=seed)
    except (BackendUnavailable, MalformedResponse) as exc:
        log.warning("cell %s failed: %s", cell, exc)
        status = STATUS_BACKEND_ERROR
    else:
        raw_digest = hashlib.sha256(res.raw_text.encode("utf-8")).hexdigest()
        model = res.extracted_model
        if model is None:
            status = STATUS_NO_MODEL
        else:
            status = STATUS_OK
            fit = score_pair(model, h.references[domain_id], h.scorer)
            scores = fit.to_dict()
    return GenerationRecord(
        plan_id=plan.plan_id,
        domain_id=domain_id,
        strategy=strategy.value,
        config_id=config_id,
        rep_index=rep,
        seed=seed,
        raw_digest=raw_digest,
        model_text=model,
        scores=scores,
        status=status,
        started_at=started,
        finished_at=_now(),
    )


def run(plan: ExperimentPlan, store_path, limit: Optional[int] = None, harness: Optional[Harness] = None) -> RecordStore:
    """Fill the record store with every (domain, strategy, config, repetition) cell.

    Cells already in the store are skipped.  ``limit`` caps the number of new
    cells executed in this call, leaving the store resumable.  A completed run
    rewrites the store in plan order.
    """
    h = harness or Harness(plan)
    store = RecordStore(store_path)
    cells = plan_cells(plan)
    todo = [c for c in cells if (c[0], c[1].value, c[2], c[3]) not in store]
    if limit is not None:
        todo = todo[:limit]
    prompts = {(d.id, s): h.prompt(d.id, s) for d in plan.domains for s in plan.strategies}
    log.info("run %s: %d cells total, %d pending", plan.plan_id, len(cells), len(todo))

    def work(cell):
        store.append(_execute_cell(h, cell, prompts))

    workers = plan.backend.concurrency_limit
    if workers > 1 and len(todo) > 1:
        pool = ThreadPoolExecutor(max_workers=workers)
        try:
            for fut in [pool.submit(work, c) for c in todo]:
                fut.result()
        finally:
            pool.shutdown(wait=True, cancel_futures=True)
    else:
        for c in todo:
            work(c)

    if all((c[0], c[1].value, c[2], c[3]) in store for c in cells):
        order = {(c[0], c[1].value, c[2], c[3]): i for i, c in enumerate(cells)}
        store.compact(sort_key=lambda r: order.get(r.key, len(order)))
    return store


@dataclass
class TuneResult:
    reduced_space: SearchSpace
    grid: List[EvaluatedPoint]
    front: List[EvaluatedPoint]
    populations: list

    def front_json(self) -> List[dict]:
        return front_to_json(self.front)


def make_search_evaluator(h: Harness, strategy: Strategy = Strategy.ZERO_SHOT):
    train = h.plan.training()
    prompt = h.prompt(train.id, strategy)
    return make_evaluator(prompt, h.references[train.id], h.gateway.generate, h.scorer,
                          repetitions=h.plan.search_repetitions)


def tune_pipeline(
    plan: ExperimentPlan,
    space: SearchSpace,
    evo: Optional[EvolutionParams] = None,
    nsga_runs: int = 10,
    out_dir=None,
    as_choices: Sequence[str] = (),
    grid_workers: int = 1,
    harness: Optional[Harness] = None,
) -> TuneResult:
    """Evolutionary runs, space reduction, exhaustive grid, then the Pareto front.

    With ``out_dir`` every phase is checkpointed: finished runs are reloaded,
    the grid resumes from its archive, and the outputs are written as JSON.
    """
    if evo is None:
        evo = EvolutionParams(master_seed=plan.master_seed)
    h = harness or Harness(plan)
    evaluator = make_search_evaluator(h)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)

    populations = []
    for i in range(nsga_runs):
        final_path = os.path.join(out_dir, f"nsga_run{i}_final.json") if out_dir else None
        if final_path and os.path.exists(final_path):
            with open(final_path, encoding="utf-8") as fh:
                populations.append(population_from_json(json.load(fh)))
            continue
        archive = os.path.join(out_dir, f"nsga_run{i}_archive.jsonl") if out_dir else None
        if archive and os.path.exists(archive):
            os.remove(archive)
        params = EvolutionParams(evo.population_size, evo.generations, evo.crossover_prob,
                                 evo.mutation_prob, evo.master_seed + i, evo.mutation_mode)
        result = evolve(space, evaluator, params, run_id=i, archive_path=archive)
        populations.append(result.final)
        if final_path:
            _write_json(final_path, population_to_json(result.final))

    reduced = reduce_space(populations, space, as_choices)
    grid_archive = None
    if out_dir:
        _write_json(os.path.join(out_dir, "reduced_space.json"), reduced.to_json())
        grid_archive = os.path.join(out_dir, "grid_archive.jsonl")
    try:
        grid = grid_search(reduced, evaluator, grid_archive, max_workers=grid_workers)
    except EvaluatorFailure:
        log.error("grid phase interrupted; rerun to resume from %s", grid_archive)
        raise
    front = pareto_front(grid)
    result = TuneResult(reduced, grid, front, populations)
    if out_dir:
        _write_json(os.path.join(out_dir, "front.json"), result.front_json())
    return result


def _write_json(path: str, obj) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2)
        fh.write("\n")
    os.replace(tmp, path)
