"""Discrete hyperparameter search spaces for LLM decoding.

A space assigns one domain to each of the five decoding controls, always in
the fixed gene order ``GENE_ORDER``.  Domains are either an evenly stepped
``Range`` or an explicit ordered ``Choices`` list; both materialize to a
finite tuple of grid points.
"""

import itertools
import json
import math
import random
from dataclasses import dataclass
from typing import Dict, Iterator, List, Mapping, Optional, Sequence, Tuple, Union

from .errors import GenomeOutOfDomain, InvalidConfiguration, InvalidSpace

GENE_ORDER = ("temperature", "top_k", "top_p", "repetition_penalty", "max_new_tokens")
INT_PARAMS = frozenset({"top_k", "max_new_tokens"})

TOL = 1e-9
_DECIMALS = 10


def _snap(x: float) -> float:
    return round(float(x), _DECIMALS)


@dataclass(frozen=True)
class Range:
    min: float
    max: float
    step: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.min, self.max, self.step)):
            raise InvalidSpace(f"non-finite range bound in {self}")
        if self.min > self.max:
            raise InvalidSpace(f"range min {self.min} > max {self.max}")
        if self.step <= 0:
            raise InvalidSpace(f"range step must be positive, got {self.step}")
        span = (self.max - self.min) / self.step
        if abs(span - round(span)) * self.step > TOL:
            raise InvalidSpace(
                f"range [{self.min}, {self.max}] is not a multiple of step {self.step}"
            )

    @property
    def points(self) -> Tuple[float, ...]:
        n = int(round((self.max - self.min) / self.step))
        return tuple(_snap(self.min + i * self.step) for i in range(n + 1))

    def to_json(self) -> dict:
        return {"range": [self.min, self.max], "step": self.step}


@dataclass(frozen=True)
class Choices:
    values: Tuple[float, ...]

    def __post_init__(self):
        vals = tuple(_snap(v) for v in self.values)
        if not vals:
            raise InvalidSpace("choice domain must be nonempty")
        if not all(math.isfinite(v) for v in vals):
            raise InvalidSpace(f"non-finite choice in {vals}")
        if any(b <= a for a, b in zip(vals, vals[1:])):
            raise InvalidSpace(f"choices must be strictly increasing: {vals}")
        object.__setattr__(self, "values", vals)

    @property
    def points(self) -> Tuple[float, ...]:
        return self.values

    def to_json(self) -> dict:
        return {"values": list(self.values)}


ParamDomain = Union[Range, Choices]


def domain_contains(domain: ParamDomain, x: float) -> bool:
    return _nearest_point(domain, x) is not None


def _nearest_point(domain: ParamDomain, x: float) -> Optional[float]:
    if x is None or not math.isfinite(x):
        return None
    if isinstance(domain, Range):
        if x < domain.min - TOL or x > domain.max + TOL:
            return None
        i = round((x - domain.min) / domain.step)
        p = _snap(domain.min + i * domain.step)
        return p if abs(p - x) <= TOL else None
    for p in domain.values:
        if abs(p - x) <= TOL:
            return p
    return None


def parse_domain(obj: Mapping) -> ParamDomain:
    if "range" in obj:
        lo, hi = obj["range"]
        return Range(float(lo), float(hi), float(obj["step"]))
    if "values" in obj:
        return Choices(tuple(float(v) for v in obj["values"]))
    raise InvalidSpace(f"domain needs 'range'+'step' or 'values': {obj!r}")


@dataclass(frozen=True)
class Configuration:
    """One concrete decoding setting.

    ``repetition_penalty`` may be ``None``; the backend default (1.0) then
    applies.  The reference optimal settings omit it.
    """

    temperature: float
    top_k: int
    top_p: float
    repetition_penalty: Optional[float]
    max_new_tokens: int

    def __post_init__(self):
        try:
            t = _snap(self.temperature)
            k = _as_int(self.top_k, "top_k")
            p = _snap(self.top_p)
            rp = None if self.repetition_penalty is None else _snap(self.repetition_penalty)
            m = _as_int(self.max_new_tokens, "max_new_tokens")
        except (TypeError, ValueError) as exc:
            raise InvalidConfiguration(str(exc)) from None
        if not t >= 0:
            raise InvalidConfiguration(f"temperature must be >= 0, got {t}")
        if k < 0:
            raise InvalidConfiguration(f"top_k must be >= 0, got {k}")
        if not 0 < p <= 1:
            raise InvalidConfiguration(f"top_p must be in (0, 1], got {p}")
        if rp is not None and not rp >= 1:
            raise InvalidConfiguration(f"repetition_penalty must be >= 1, got {rp}")
        if m <= 0:
            raise InvalidConfiguration(f"max_new_tokens must be > 0, got {m}")
        for name, v in zip(GENE_ORDER, (t, k, p, rp, m)):
            object.__setattr__(self, name, v)

    def to_dict(self) -> Dict[str, object]:
        return {name: getattr(self, name) for name in GENE_ORDER}

    def key(self) -> str:
        """Canonical text form, stable across runs and usable as a cache key."""
        return json.dumps(self.to_dict(), separators=(",", ":"))

    @classmethod
    def from_dict(cls, obj: Mapping) -> "Configuration":
        unknown = set(obj) - set(GENE_ORDER)
        if unknown:
            raise InvalidConfiguration(f"unknown configuration keys: {sorted(unknown)}")
        missing = [n for n in GENE_ORDER if n != "repetition_penalty" and n not in obj]
        if missing:
            raise InvalidConfiguration(f"missing configuration keys: {missing}")
        return cls(
            temperature=obj["temperature"],
            top_k=obj["top_k"],
            top_p=obj["top_p"],
            repetition_penalty=obj.get("repetition_penalty"),
            max_new_tokens=obj["max_new_tokens"],
        )

    def __str__(self):
        return self.key()


def _as_int(v, name: str) -> int:
    if isinstance(v, bool):
        raise ValueError(f"{name} must be an integer, got {v!r}")
    if isinstance(v, int):
        return v
    f = float(v)
    if not math.isfinite(f) or abs(f - round(f)) > TOL:
        raise ValueError(f"{name} must be an integer, got {v!r}")
    return int(round(f))


class SearchSpace:
    """Immutable mapping from the five gene names to their domains."""

    def __init__(self, domains: Mapping[str, ParamDomain]):
        names = set(domains)
        if names != set(GENE_ORDER):
            raise InvalidSpace(
                f"space must define exactly {list(GENE_ORDER)}; got {sorted(names)}"
            )
        for name in GENE_ORDER:
            dom = domains[name]
            if not isinstance(dom, (Range, Choices)):
                raise InvalidSpace(f"{name}: not a domain: {dom!r}")
            if name in INT_PARAMS and any(abs(p - round(p)) > TOL for p in dom.points):
                raise InvalidSpace(f"{name} must take integer values")
        self._domains = tuple((name, domains[name]) for name in GENE_ORDER)
        # Configuration construction enforces the per-field bounds.
        for name, dom in self._domains:
            for bound in (dom.points[0], dom.points[-1]):
                try:
                    _field_check(name, bound)
                except InvalidConfiguration as exc:
                    raise InvalidSpace(str(exc)) from None

    def __getitem__(self, name: str) -> ParamDomain:
        return dict(self._domains)[name]

    def items(self):
        return iter(self._domains)

    def __eq__(self, other):
        return isinstance(other, SearchSpace) and self._domains == other._domains

    def __hash__(self):
        return hash(self._domains)

    def __repr__(self):
        inner = ", ".join(f"{n}={d}" for n, d in self._domains)
        return f"SearchSpace({inner})"

    @property
    def cardinality(self) -> int:
        return math.prod(len(d.points) for _, d in self._domains)

    def to_json(self) -> dict:
        return {name: dom.to_json() for name, dom in self._domains}

    @classmethod
    def from_json(cls, obj: Mapping) -> "SearchSpace":
        return cls({name: parse_domain(spec) for name, spec in obj.items()})

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2)

    @classmethod
    def load(cls, path) -> "SearchSpace":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


def _field_check(name: str, value: float) -> None:
    probe = dict(temperature=1.0, top_k=0, top_p=1.0, repetition_penalty=1.0, max_new_tokens=1)
    probe[name] = value
    Configuration(**probe)


def from_values(values: Sequence[float]) -> Configuration:
    kw = {}
    for name, v in zip(GENE_ORDER, values):
        kw[name] = int(round(v)) if name in INT_PARAMS and v is not None else v
    return Configuration(**kw)


def iter_configs(space: SearchSpace) -> Iterator[Configuration]:
    axes = [dom.points for _, dom in space.items()]
    for combo in itertools.product(*axes):
        yield from_values(combo)


def enumerate_configs(space: SearchSpace) -> List[Configuration]:
    """Full Cartesian product, lexicographic in gene order."""
    return list(iter_configs(space))


def sample(space: SearchSpace, rng: random.Random) -> Configuration:
    return from_values([rng.choice(dom.points) for _, dom in space.items()])


def validate(config: Configuration, space: SearchSpace) -> List[str]:
    """Return a list of human-readable violations; empty means in-space."""
    violations = []
    for name, dom in space.items():
        value = getattr(config, name)
        if value is None and name == "repetition_penalty":
            continue
        if not domain_contains(dom, value):
            violations.append(f"{name}={value} not in {dom.to_json()}")
    return violations


def to_genome(config: Configuration) -> Tuple[Optional[float], ...]:
    """Genome in gene order; an omitted repetition penalty stays ``None``."""
    return tuple(
        None if getattr(config, n) is None else float(getattr(config, n)) for n in GENE_ORDER
    )


def from_genome(genome: Sequence[Optional[float]], space: SearchSpace) -> Configuration:
    if len(genome) != len(GENE_ORDER):
        raise GenomeOutOfDomain(f"genome must have {len(GENE_ORDER)} genes, got {len(genome)}")
    snapped = []
    for (name, dom), x in zip(space.items(), genome):
        if x is None and name == "repetition_penalty":
            snapped.append(None)
            continue
        p = _nearest_point(dom, x) if x is not None else None
        if p is None:
            raise GenomeOutOfDomain(f"{name}={x} is not a point of {dom.to_json()}")
        snapped.append(p)
    return from_values(snapped)


# Wide initial space explored by the evolutionary phase.
WIDE_SPACE = SearchSpace(
    {
        "temperature": Range(0.5, 2.0, 0.1),
        "top_k": Range(0, 100, 10),
        "top_p": Range(0.5, 1.0, 0.1),
        "repetition_penalty": Range(1.0, 2.0, 0.1),
        "max_new_tokens": Choices((512, 1024, 2048, 3072, 4096, 8192)),
    }
)

# Reduced space for the exhaustive grid phase.
REDUCED_SPACE = SearchSpace(
    {
        "temperature": Range(1.0, 1.3, 0.1),
        "top_k": Choices((0, 50)),
        "top_p": Range(0.9, 1.0, 0.1),
        "repetition_penalty": Choices((1.0, 1.1, 1.2)),
        "max_new_tokens": Choices((512, 1024, 2048, 3072, 4096)),
    }
)

LLAMA_DEFAULT = Configuration(0.7, 50, 0.9, None, 4096)

# Reference optimal settings; they omit the penalty.
PUBLISHED_OPTIMA = {
    "S0": Configuration(0.6, 50, 1.0, None, 4096),
    "S1": Configuration(1.0, 0, 1.0, None, 2048),
    "S2": Configuration(1.1, 50, 0.9, None, 3072),
    "S3": Configuration(0.8, 50, 0.9, None, 4096),
    "S4": Configuration(1.1, 50, 0.9, None, 3072),
    "S5": Configuration(1.1, 50, 0.9, None, 4096),
}
