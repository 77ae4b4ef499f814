"""Syntactic and semantic similarity between a generated model and its reference."""

import logging
import math
import re
import threading
import time
import zlib
from collections import Counter
from functools import lru_cache
from typing import Callable, Dict, List, Optional, Protocol, Union

import httpx

from .errors import BackendUnavailable, MalformedResponse, NoModelFound, ScorerUnavailable
from .gateway import GenerationResult, extract_model
from .hpspace import Configuration
from .moo import FitnessVector

log = logging.getLogger(__name__)

SENTINEL = FitnessVector(0.0, -1.0)

_SPLIT = re.compile(r"[\W_]+")


def tokenize(text: str) -> List[str]:
    return [t for t in _SPLIT.split(text.lower()) if t]


def term_frequencies(text: str) -> Counter:
    return Counter(tokenize(text))


def _cosine(a: Counter, b: Counter) -> float:
    if not a or not b:
        return 1.0 if not a and not b else 0.0
    if a == b:
        return 1.0
    if len(a) > len(b):
        a, b = b, a
    dot = sum(c * b[t] for t, c in a.items() if t in b)
    if dot == 0:
        return 0.0
    na = math.sqrt(sum(c * c for c in a.values()))
    nb = math.sqrt(sum(c * c for c in b.values()))
    return min(1.0, dot / (na * nb))


def cosine_similarity(a: str, b: str) -> float:
    """Cosine of the term-frequency vectors of two texts, in [0, 1]."""
    return _cosine(term_frequencies(a), term_frequencies(b))


class SemanticScorer(Protocol):
    def score(self, candidate: str, reference: str) -> float: ...


class SurrogateScorer:
    """Deterministic local stand-in for a contextual-embedding metric.

    Cosine similarity of lowercased character-trigram count vectors, each
    trigram hashed with CRC-32 into ``buckets`` slots.
    """

    def __init__(self, buckets: int = 1 << 20):
        self.buckets = buckets
        self._vector = lru_cache(maxsize=256)(self._trigram_vector)

    def _trigram_vector(self, text: str) -> Counter:
        text = text.lower()
        if len(text) < 3:
            grams = [text] if text else []
        else:
            grams = [text[i : i + 3] for i in range(len(text) - 2)]
        return Counter(zlib.crc32(g.encode("utf-8")) % self.buckets for g in grams)

    def score(self, candidate: str, reference: str) -> float:
        return _cosine(self._vector(candidate), self._vector(reference))


class RemoteScorer:
    """Posts ``{"candidate", "reference"}`` to an HTTP endpoint returning ``{"score"}``."""

    def __init__(
        self,
        url: str,
        timeout: float = 60.0,
        max_retries: int = 3,
        backoff_base: float = 1.0,
        transport: Optional[httpx.BaseTransport] = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.url = url
        self.max_retries = max_retries
        self.backoff_base = backoff_base
        self._sleep = sleep
        self._client = httpx.Client(timeout=timeout, transport=transport)

    def score(self, candidate: str, reference: str) -> float:
        last = None
        attempts = 0
        for attempt in range(1, self.max_retries + 2):
            attempts = attempt
            try:
                resp = self._client.post(self.url, json={"candidate": candidate, "reference": reference})
                if resp.status_code == 200:
                    return float(resp.json()["score"])
                last = f"HTTP {resp.status_code}"
            except httpx.TransportError as exc:
                last = exc
            except (ValueError, KeyError, TypeError) as exc:
                raise ScorerUnavailable(f"malformed scorer response: {exc}", attempts, exc) from exc
            if attempt <= self.max_retries:
                self._sleep(self.backoff_base * 2 ** (attempt - 1))
        raise ScorerUnavailable(f"scorer at {self.url} unavailable: {last}", attempts, last)


def semantic_score(candidate: str, reference: str, scorer: SemanticScorer) -> float:
    s = float(scorer.score(candidate, reference))
    if math.isnan(s):
        raise ScorerUnavailable("scorer returned NaN")
    if s > 1.0 or s < -1.0:
        log.warning("semantic score %.6g outside [-1, 1]; clamping", s)
        s = min(1.0, max(-1.0, s))
    return s


def score_pair(candidate: str, reference: str, scorer: SemanticScorer) -> FitnessVector:
    return FitnessVector(cosine_similarity(candidate, reference), semantic_score(candidate, reference, scorer))


Generator = Callable[..., Union[str, GenerationResult]]

_GENERATION_FAILURES = (NoModelFound, BackendUnavailable, MalformedResponse)


class Evaluator:
    """Configuration -> fitness, memoized per canonical configuration key.

    Each configuration is generated ``repetitions`` times (repetition
    indices ``rep_offset`` onward) and the fitness is the mean.  A
    repetition whose generation fails, or yields no extractable model,
    contributes the worst-case sentinel (0, -1).  Scorer outages propagate.
    """

    def __init__(self, prompt: str, reference: str, generator: Generator, scorer: SemanticScorer,
                 repetitions: int = 1, rep_offset: int = 0):
        if repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        self.prompt = prompt
        self.reference = reference
        self.generator = generator
        self.scorer = scorer
        self.repetitions = repetitions
        self.rep_offset = rep_offset
        self.memo: Dict[str, FitnessVector] = {}
        self.generation_calls = 0
        self._lock = threading.Lock()

    def _one(self, config: Configuration, rep_index: int) -> FitnessVector:
        with self._lock:
            self.generation_calls += 1
        try:
            out = self.generator(self.prompt, config, rep_index)
            if isinstance(out, GenerationResult):
                model = out.extracted_model
                if model is None:
                    raise NoModelFound("generator output had no model")
            else:
                model = extract_model(out)
        except _GENERATION_FAILURES as exc:
            log.warning("generation failed for %s rep %d: %s", config.key(), rep_index, exc)
            return SENTINEL
        return score_pair(model, self.reference, self.scorer)

    def __call__(self, config: Configuration) -> FitnessVector:
        key = config.key()
        with self._lock:
            hit = self.memo.get(key)
        if hit is not None:
            return hit
        fits = [self._one(config, self.rep_offset + r) for r in range(self.repetitions)]
        fit = FitnessVector(
            math.fsum(f.syntactic for f in fits) / len(fits),
            math.fsum(f.semantic for f in fits) / len(fits),
        )
        with self._lock:
            return self.memo.setdefault(key, fit)


def make_evaluator(prompt: str, reference: str, generator: Generator, scorer: SemanticScorer,
                   repetitions: int = 1, rep_offset: int = 0) -> Evaluator:
    return Evaluator(prompt, reference, generator, scorer, repetitions, rep_offset)
