import json

import pytest
from hypothesis import given, settings, strategies as st

from modeltuner.errors import EmptyInput, EvaluatorFailure
from modeltuner.gateway import fnv1a_64
from modeltuner.gridsearch import (
    EvaluatedPoint,
    front_from_json,
    front_to_json,
    grid_search,
    load_archive,
    pareto_front,
)
from modeltuner.hpspace import REDUCED_SPACE, Choices, Configuration, SearchSpace
from modeltuner.moo import FitnessVector, fast_nondominated_sort

from oracles import nondominated


def hashed_fitness(c):
    """Deterministic fitness on a coarse lattice so ties occur."""
    h = fnv1a_64(c.key())
    return FitnessVector((h % 7) / 6, ((h >> 16) % 5) / 4)


class Counting:
    def __init__(self, fn=hashed_fitness, fail_after=None):
        self.fn = fn
        self.calls = 0
        self.fail_after = fail_after

    def __call__(self, c):
        if self.fail_after is not None and self.calls >= self.fail_after:
            raise RuntimeError("interrupted")
        self.calls += 1
        return self.fn(c)


def test_grid_evaluates_every_point():
    ev = Counting()
    pts = grid_search(REDUCED_SPACE, ev)
    assert len(pts) == 240 and ev.calls == 240


def test_single_point_space():
    sp = SearchSpace({n: Choices((d.points[0],)) for n, d in REDUCED_SPACE.items()})
    assert len(grid_search(sp, Counting())) == 1


def test_resume_after_interruption(tmp_path):
    archive = tmp_path / "grid.jsonl"
    with pytest.raises(EvaluatorFailure):
        grid_search(REDUCED_SPACE, Counting(fail_after=100), archive)
    assert len(load_archive(archive)) == 100
    ev = Counting()
    pts = grid_search(REDUCED_SPACE, ev, archive)
    assert ev.calls == 140
    assert pts == grid_search(REDUCED_SPACE, hashed_fitness)


def test_torn_archive_line_is_ignored(tmp_path):
    archive = tmp_path / "grid.jsonl"
    c = Configuration(1.0, 0, 0.9, 1.0, 512)
    row = {"config": c.to_dict(), "fitness": {"syntactic": 0.5, "semantic": 0.5}}
    archive.write_text(json.dumps(row) + "\n" + '{"config": {"temp')
    assert load_archive(archive) == {c.key(): FitnessVector(0.5, 0.5)}


def test_threaded_grid_matches_serial(tmp_path):
    serial = grid_search(REDUCED_SPACE, hashed_fitness)
    threaded = grid_search(REDUCED_SPACE, hashed_fitness, tmp_path / "g.jsonl", max_workers=4)
    assert serial == threaded


def pt(i, f):
    return EvaluatedPoint(Configuration(0.5 + 0.1 * i, 0, 1.0, 1.0, 512), FitnessVector(*f))


def test_pareto_examples():
    pts = [pt(0, (1, 1)), pt(1, (2, 0)), pt(2, (0, 2)), pt(3, (0.5, 0.5))]
    assert [p.fitness for p in pareto_front(pts)] == [(1, 1), (2, 0), (0, 2)]
    assert pareto_front(pts[:1]) == pts[:1]
    twins = [pt(0, (1, 1)), pt(1, (1, 1))]
    assert pareto_front(twins) == twins
    with pytest.raises(EmptyInput):
        pareto_front([])


def test_grid_front_matches_oracles():
    pts = grid_search(REDUCED_SPACE, hashed_fitness)
    fits = [tuple(p.fitness) for p in pts]
    front = pareto_front(pts)
    assert front == [pts[i] for i in nondominated(fits)]
    assert front == [pts[i] for i in fast_nondominated_sort(fits)[0]]


@settings(max_examples=300, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 5), st.integers(0, 5)), min_size=1, max_size=40))
def test_pareto_matches_brute_force(fits):
    pts = [pt(i % 16, f) for i, f in enumerate(fits)]
    assert pareto_front(pts) == [pts[i] for i in nondominated(fits)]


def test_front_json_round_trip():
    pts = [pt(0, (1, 1)), pt(1, (2, 0))]
    rows = front_to_json(pts)
    assert [r["id"] for r in rows] == ["S0", "S1"]
    back = front_from_json(json.loads(json.dumps(rows)))
    assert list(back.values()) == pts
