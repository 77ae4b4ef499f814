import json
import logging
import math
import random

import httpx
import pytest
from hypothesis import given, settings, strategies as st

from modeltuner.errors import ScorerUnavailable
from modeltuner.fitness import (
    SENTINEL,
    RemoteScorer,
    SurrogateScorer,
    cosine_similarity,
    make_evaluator,
    semantic_score,
    tokenize,
)
from modeltuner.gateway import BackendSpec, Gateway, GenerationResult
from modeltuner.hpspace import Configuration
from modeltuner.moo import FitnessVector

from oracles import dense_cosine

CFG = Configuration(1.0, 50, 0.9, 1.0, 2048)
REF = '<ecore:EPackage name="hotel"><eClassifiers name="Room"/></ecore:EPackage>'


def test_tokenize_examples():
    assert tokenize('<eClassifiers name="Patient"/>') == ["eclassifiers", "name", "patient"]
    assert tokenize("") == []
    assert tokenize("A a A") == ["a", "a", "a"]
    assert tokenize("snake_case x-y") == ["snake", "case", "x", "y"]


def test_cosine_examples():
    assert cosine_similarity("room hotel", "room hotel") == 1.0
    assert cosine_similarity("a b", "c d") == 0.0
    assert math.isclose(cosine_similarity("a b b", "a b"), 3 / math.sqrt(10), abs_tol=1e-12)
    assert cosine_similarity("", "") == 1.0
    assert cosine_similarity("", "a") == 0.0


def test_cosine_matches_dense_oracle():
    rng = random.Random(17)
    vocab = [f"w{i}" for i in range(12)]
    for _ in range(200):
        a = [rng.choice(vocab) for _ in range(rng.randint(0, 30))]
        b = [rng.choice(vocab) for _ in range(rng.randint(0, 30))]
        assert math.isclose(cosine_similarity(" ".join(a), " ".join(b)), dense_cosine(a, b), abs_tol=1e-12)


@settings(max_examples=200, deadline=None)
@given(st.text(max_size=60), st.text(max_size=60))
def test_cosine_bounds_and_symmetry(a, b):
    s = cosine_similarity(a, b)
    assert 0.0 <= s <= 1.0
    assert s == cosine_similarity(b, a)


def test_surrogate_scorer():
    s = SurrogateScorer()
    assert s.score(REF, REF) == 1.0
    assert s.score("aaaaaa", "zzzzzz") == pytest.approx(0.0, abs=1e-9)
    assert s.score(REF, REF + " extra") == SurrogateScorer().score(REF, REF + " extra")
    assert 0.0 < s.score(REF, REF.replace("Room", "Guest")) < 1.0


class Fixed:
    def __init__(self, value):
        self.value = value

    def score(self, candidate, reference):
        return self.value


def test_semantic_clamp_and_nan(caplog):
    with caplog.at_level(logging.WARNING):
        assert semantic_score("a", "b", Fixed(1.3)) == 1.0
    assert "clamping" in caplog.text
    assert semantic_score("a", "b", Fixed(-2)) == -1.0
    with pytest.raises(ScorerUnavailable):
        semantic_score("a", "b", Fixed(float("nan")))


def fenced(text):
    return f"Sure.\n```xml\n{text}\n```\n"


def test_evaluator_echo_is_perfect():
    ev = make_evaluator("p", REF, lambda p, c, r: fenced(REF), SurrogateScorer())
    assert ev(CFG) == FitnessVector(1.0, 1.0)


def test_evaluator_no_model_is_sentinel():
    ev = make_evaluator("p", REF, lambda p, c, r: "I cannot help with that.", SurrogateScorer())
    assert ev(CFG) == SENTINEL == FitnessVector(0.0, -1.0)


def test_evaluator_memoizes():
    calls = []

    def gen(p, c, r):
        calls.append(r)
        return fenced(REF)

    ev = make_evaluator("p", REF, gen, SurrogateScorer(), repetitions=3)
    assert ev(CFG) == ev(CFG)
    assert calls == [0, 1, 2]
    assert ev.generation_calls == 3


def test_evaluator_averages_repetitions_with_sentinel():
    outs = {0: fenced(REF), 1: "nothing"}
    ev = make_evaluator("p", REF, lambda p, c, r: outs[r], SurrogateScorer(), repetitions=2)
    assert ev(CFG) == FitnessVector(0.5, 0.0)


def test_evaluator_accepts_gateway_results():
    gw = Gateway(BackendSpec(kind="mock"))
    ev = make_evaluator("p", REF, gw.generate, SurrogateScorer())
    fit = ev(CFG)
    assert 0.0 <= fit.syntactic <= 1.0
    res = gw.generate("p", CFG, 0)
    assert isinstance(res, GenerationResult) and res.cache_hit


def test_scorer_outage_propagates():
    class Down:
        def score(self, c, r):
            raise ScorerUnavailable("down", 3, None)

    ev = make_evaluator("p", REF, lambda p, c, r: fenced(REF), Down())
    with pytest.raises(ScorerUnavailable):
        ev(CFG)


def test_remote_scorer_retries_then_scores():
    seen = []

    def handler(request):
        seen.append(json.loads(request.content))
        if len(seen) < 3:
            return httpx.Response(503)
        return httpx.Response(200, json={"score": 0.8})

    sleeps = []
    s = RemoteScorer("http://scorer/score", transport=httpx.MockTransport(handler), sleep=sleeps.append)
    assert s.score("cand", "ref") == 0.8
    assert seen[0] == {"candidate": "cand", "reference": "ref"}
    assert sleeps == [1.0, 2.0]


def test_remote_scorer_gives_up():
    s = RemoteScorer("http://scorer/score", max_retries=2,
                     transport=httpx.MockTransport(lambda r: httpx.Response(500)), sleep=lambda d: None)
    with pytest.raises(ScorerUnavailable) as info:
        s.score("a", "b")
    assert info.value.attempts == 3
