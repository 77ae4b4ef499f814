"""NSGA-II search over a discrete decoding-hyperparameter space.

Both objectives are maximized.  The loop follows the usual elitist scheme:
binary tournament on (rank, crowding), single-point crossover over the
five-gene genome, uniform mutation, then survival of the best N of the
merged parent and offspring populations.
"""

import json
import logging
import math
import random
from concurrent.futures import Executor
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, NamedTuple, Optional, Sequence, Tuple, Union

from .errors import EmptyPopulations, EvaluatorFailure
from .hpspace import (
    GENE_ORDER,
    Choices,
    Configuration,
    Range,
    SearchSpace,
    from_values,
    sample,
    to_genome,
)

log = logging.getLogger(__name__)

INF = math.inf


class FitnessVector(NamedTuple):
    syntactic: float
    semantic: float

    def to_dict(self) -> dict:
        return {"syntactic": self.syntactic, "semantic": self.semantic}

    @classmethod
    def from_dict(cls, obj) -> "FitnessVector":
        return cls(float(obj["syntactic"]), float(obj["semantic"]))


@dataclass
class Individual:
    config: Configuration
    fitness: Optional[FitnessVector] = None
    rank: Optional[int] = None
    crowding: Optional[float] = None


@dataclass(frozen=True)
class EvolutionParams:
    population_size: int = 30
    generations: int = 10
    crossover_prob: float = 0.9
    mutation_prob: float = 0.2
    master_seed: int = 0
    # "individual": one trigger resamples every gene; "gene": per-gene trigger.
    mutation_mode: str = "individual"

    def __post_init__(self):
        if self.population_size < 2 or self.population_size % 2:
            raise ValueError("population_size must be an even number >= 2")
        if self.generations < 0:
            raise ValueError("generations must be >= 0")
        for name in ("crossover_prob", "mutation_prob"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {p}")
        if self.mutation_mode not in ("individual", "gene"):
            raise ValueError(f"unknown mutation_mode {self.mutation_mode!r}")


@dataclass
class Population:
    members: List[Individual]
    generation: int = 0


@dataclass
class EvolutionResult:
    final: Population
    archive: List[dict] = field(default_factory=list)

    def rank0(self) -> List[Individual]:
        return [ind for ind in self.final.members if ind.rank == 0]


FitnessLike = Union[FitnessVector, Sequence[float], Individual]


def _fit(x: FitnessLike) -> Tuple[float, ...]:
    if isinstance(x, Individual):
        if x.fitness is None:
            raise ValueError("individual has not been evaluated")
        return tuple(x.fitness)
    return tuple(x)


def dominates(a: FitnessLike, b: FitnessLike) -> bool:
    """True iff ``a`` is no worse everywhere and strictly better somewhere."""
    fa, fb = _fit(a), _fit(b)
    better = False
    for x, y in zip(fa, fb):
        if x < y:
            return False
        if x > y:
            better = True
    return better


def fast_nondominated_sort(pop: Sequence[FitnessLike]) -> List[List[int]]:
    """Partition indices of ``pop`` into Pareto fronts, best first.

    Sets ``rank`` on Individual members as a side effect.
    """
    fits = [_fit(p) for p in pop]
    n = len(fits)
    dominated_by_me: List[List[int]] = [[] for _ in range(n)]
    dom_count = [0] * n
    fronts: List[List[int]] = [[]]
    for p in range(n):
        for q in range(p + 1, n):
            if dominates(fits[p], fits[q]):
                dominated_by_me[p].append(q)
                dom_count[q] += 1
            elif dominates(fits[q], fits[p]):
                dominated_by_me[q].append(p)
                dom_count[p] += 1
    fronts[0] = [p for p in range(n) if dom_count[p] == 0]
    while fronts[-1]:
        nxt = []
        for p in fronts[-1]:
            for q in dominated_by_me[p]:
                dom_count[q] -= 1
                if dom_count[q] == 0:
                    nxt.append(q)
        fronts.append(sorted(nxt))
    fronts.pop()
    for r, front in enumerate(fronts):
        for i in front:
            if isinstance(pop[i], Individual):
                pop[i].rank = r
    return fronts


def crowding_distance(front: Sequence[FitnessLike]) -> List[float]:
    fits = [_fit(f) for f in front]
    n = len(fits)
    if n <= 2:
        dist = [INF] * n
    else:
        dist = [0.0] * n
        for m in range(len(fits[0])):
            order = sorted(range(n), key=lambda i: (fits[i][m], i))
            lo, hi = fits[order[0]][m], fits[order[-1]][m]
            span = hi - lo
            if span == 0:
                continue
            dist[order[0]] = dist[order[-1]] = INF
            for j in range(1, n - 1):
                i = order[j]
                if dist[i] != INF:
                    dist[i] += (fits[order[j + 1]][m] - fits[order[j - 1]][m]) / span
    for ind, d in zip(front, dist):
        if isinstance(ind, Individual):
            ind.crowding = d
    return dist


def assign_rank_and_crowding(members: Sequence[Individual]) -> List[List[int]]:
    fronts = fast_nondominated_sort(members)
    for front in fronts:
        crowding_distance([members[i] for i in front])
    return fronts


def _crowded_better(a: Individual, b: Individual) -> bool:
    if a.rank != b.rank:
        return a.rank < b.rank
    return a.crowding > b.crowding


def binary_tournament(pop: Union[Population, Sequence[Individual]], rng: random.Random) -> Individual:
    members = pop.members if isinstance(pop, Population) else pop
    i, j = rng.sample(range(len(members)), 2)
    a, b = members[i], members[j]
    return b if _crowded_better(b, a) else a


def single_point_crossover(
    p1: Configuration, p2: Configuration, rng: random.Random, crossover_prob: float = 0.9
) -> Tuple[Configuration, Configuration]:
    if rng.random() >= crossover_prob:
        return p1, p2
    cut = rng.randint(1, len(GENE_ORDER) - 1)
    return crossover_at(p1, p2, cut)


def crossover_at(p1: Configuration, p2: Configuration, cut: int) -> Tuple[Configuration, Configuration]:
    g1, g2 = to_genome(p1), to_genome(p2)
    return from_values(g1[:cut] + g2[cut:]), from_values(g2[:cut] + g1[cut:])


def uniform_mutation(
    c: Configuration,
    space: SearchSpace,
    rng: random.Random,
    mutation_prob: float = 0.2,
    mode: str = "individual",
) -> Configuration:
    if mode == "individual":
        if rng.random() >= mutation_prob:
            return c
        return sample(space, rng)
    genes = list(to_genome(c))
    changed = False
    for i, (_, dom) in enumerate(space.items()):
        if rng.random() < mutation_prob:
            genes[i] = rng.choice(dom.points)
            changed = True
    return from_values(genes) if changed else c


Evaluator = Callable[[Configuration], FitnessVector]


class _BatchEvaluator:
    """Evaluates batches with per-run memoization and archive recording."""

    def __init__(self, evaluator: Evaluator, run_id, archive_path=None, executor: Optional[Executor] = None):
        self.evaluator = evaluator
        self.run_id = run_id
        self.archive_path = archive_path
        self.executor = executor
        self.cache: Dict[str, FitnessVector] = {}
        self.archive: List[dict] = []

    def _call(self, config: Configuration) -> FitnessVector:
        return FitnessVector(*self.evaluator(config))

    def __call__(self, members: List[Individual], generation: int) -> None:
        todo: Dict[str, Configuration] = {}
        for ind in members:
            k = ind.config.key()
            if k not in self.cache and k not in todo:
                todo[k] = ind.config
        try:
            if self.executor is not None and len(todo) > 1:
                results = list(self.executor.map(self._call, todo.values()))
            else:
                results = [self._call(c) for c in todo.values()]
        except Exception as exc:
            raise EvaluatorFailure(
                f"evaluator failed in run {self.run_id}, generation {generation}: {exc}"
            ) from exc
        self.cache.update(zip(todo.keys(), results))
        rows = []
        for ind in members:
            ind.fitness = self.cache[ind.config.key()]
            rows.append(
                {
                    "run_id": self.run_id,
                    "generation": generation,
                    "config": ind.config.to_dict(),
                    "fitness": ind.fitness.to_dict(),
                }
            )
        self.archive.extend(rows)
        if self.archive_path is not None:
            with open(self.archive_path, "a", encoding="utf-8") as fh:
                for row in rows:
                    fh.write(json.dumps(row) + "\n")


def survive(merged: List[Individual], n: int) -> List[Individual]:
    """Keep the best ``n`` by rank, truncating the boundary front by crowding."""
    fronts = fast_nondominated_sort(merged)
    kept: List[Individual] = []
    for front in fronts:
        members = [merged[i] for i in front]
        crowding_distance(members)
        if len(kept) + len(members) <= n:
            kept.extend(members)
            if len(kept) == n:
                break
            continue
        order = sorted(range(len(members)), key=lambda i: (-members[i].crowding, i))
        kept.extend(members[i] for i in order[: n - len(kept)])
        break
    return kept


def evolve(
    space: SearchSpace,
    evaluator: Evaluator,
    params: EvolutionParams = EvolutionParams(),
    run_id=0,
    archive_path=None,
    executor: Optional[Executor] = None,
) -> EvolutionResult:
    rng = random.Random(params.master_seed)
    batch = _BatchEvaluator(evaluator, run_id, archive_path, executor)
    n = params.population_size

    members = [Individual(sample(space, rng)) for _ in range(n)]
    batch(members, 0)
    assign_rank_and_crowding(members)

    for t in range(params.generations):
        parents = [binary_tournament(members, rng) for _ in range(n)]
        offspring = []
        for a, b in zip(parents[0::2], parents[1::2]):
            c1, c2 = single_point_crossover(a.config, b.config, rng, params.crossover_prob)
            for c in (c1, c2):
                c = uniform_mutation(c, space, rng, params.mutation_prob, params.mutation_mode)
                offspring.append(Individual(c))
        batch(offspring, t + 1)
        merged = [Individual(m.config, m.fitness) for m in members] + offspring
        members = survive(merged, n)
        assign_rank_and_crowding(members)
        log.debug("run %s generation %d: %d on first front", run_id, t + 1,
                  sum(1 for m in members if m.rank == 0))

    return EvolutionResult(Population(members, params.generations), batch.archive)


def evolve_repeated(
    space: SearchSpace,
    evaluator: Evaluator,
    params: EvolutionParams = EvolutionParams(),
    runs: int = 10,
    archive_path=None,
    executor: Optional[Executor] = None,
) -> List[EvolutionResult]:
    """Independent runs seeded ``master_seed + 0 .. master_seed + runs - 1``."""
    results = []
    for i in range(runs):
        p = EvolutionParams(
            params.population_size,
            params.generations,
            params.crossover_prob,
            params.mutation_prob,
            params.master_seed + i,
            params.mutation_mode,
        )
        results.append(evolve(space, evaluator, p, run_id=i, archive_path=archive_path, executor=executor))
    return results


def _configs_of(pop) -> Iterable[Configuration]:
    members = pop.members if isinstance(pop, Population) else pop
    for m in members:
        yield m.config if isinstance(m, Individual) else m


def reduce_space(
    final_populations: Sequence[Union[Population, Sequence[Individual], Sequence[Configuration]]],
    original: SearchSpace,
    as_choices: Iterable[str] = (),
) -> SearchSpace:
    """Shrink ``original`` to the values observed in the final populations.

    Range genes keep their step and span the observed min..max; Choices genes
    (and any gene named in ``as_choices``) keep exactly the observed values.
    """
    as_choices = set(as_choices)
    unknown = as_choices - set(GENE_ORDER)
    if unknown:
        raise ValueError(f"unknown parameters in as_choices: {sorted(unknown)}")
    seen = {name: set() for name in GENE_ORDER}
    count = 0
    for pop in final_populations:
        for cfg in _configs_of(pop):
            count += 1
            for name in GENE_ORDER:
                v = getattr(cfg, name)
                if v is not None:
                    seen[name].add(float(v))
    if count == 0:
        raise EmptyPopulations("no individuals in the final populations")
    domains = {}
    for name, dom in original.items():
        vals = sorted(seen[name])
        if not vals:
            domains[name] = dom
        elif isinstance(dom, Range) and name not in as_choices:
            domains[name] = Range(vals[0], vals[-1], dom.step)
        else:
            domains[name] = Choices(tuple(vals))
    return SearchSpace(domains)


def population_to_json(pop: Population) -> dict:
    return {
        "generation": pop.generation,
        "members": [
            {
                "config": m.config.to_dict(),
                "fitness": None if m.fitness is None else m.fitness.to_dict(),
                "rank": m.rank,
                "crowding": None if m.crowding is None or math.isinf(m.crowding) else m.crowding,
            }
            for m in pop.members
        ],
    }


def population_from_json(obj: dict) -> Population:
    members = []
    for m in obj["members"]:
        fit = m.get("fitness")
        crowd = m.get("crowding")
        members.append(
            Individual(
                Configuration.from_dict(m["config"]),
                None if fit is None else FitnessVector.from_dict(fit),
                m.get("rank"),
                INF if crowd is None and m.get("rank") is not None else crowd,
            )
        )
    return Population(members, obj.get("generation", 0))
