"""Generation requests against an OpenAI-compatible chat-completions server.

The gateway maps a Configuration onto request fields, retries transient
failures with exponential backoff, and caches every successful response on
disk keyed by (backend, model, prompt, configuration, repetition).  Two
deterministic mock backends stand in for a real server in tests and
desk-scale runs.
"""

import hashlib
import json
import logging
import os
import re
import threading
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, Mapping, Optional, Sequence, Union

import httpx

from .errors import BackendUnavailable, MalformedResponse, NoModelFound
from .hpspace import Configuration

log = logging.getLogger(__name__)

API_KEY_ENV = "MODELTUNER_API_KEY"
BASE_URL_ENV = "MODELTUNER_BASE_URL"
DEFAULT_REPETITION_PENALTY = 1.0

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1


def fnv1a_64(data: Union[str, bytes]) -> int:
    if isinstance(data, str):
        data = data.encode("utf-8")
    h = _FNV_OFFSET
    for b in data:
        h ^= b
        h = (h * _FNV_PRIME) & _MASK64
    return h


def mix64(h: int) -> int:
    """splitmix64 finalizer; FNV-1a alone leaves its high bits poorly mixed."""
    h = ((h ^ (h >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    h = ((h ^ (h >> 27)) * 0x94D049BB133111EB) & _MASK64
    return h ^ (h >> 31)


def _unit(key: str) -> float:
    """Deterministic uniform draw in [0, 1) derived from ``key``."""
    return mix64(fnv1a_64(key)) / 2.0**64


@dataclass(frozen=True)
class NoisePolicy:
    """Token-perturbation settings for the reference mock.

    The fraction of replaced tokens is ``intensity * temperature / 2``
    (clipped to [0, 1]), plus optional contributions from top-p and the
    repetition penalty.
    """

    intensity: float = 0.5
    top_p_weight: float = 0.0
    penalty_weight: float = 0.0
    seed: int = 0

    def rate(self, config: Configuration) -> float:
        rp = DEFAULT_REPETITION_PENALTY if config.repetition_penalty is None else config.repetition_penalty
        q = self.intensity * (config.temperature / 2.0 + self.top_p_weight * config.top_p
                              + self.penalty_weight * (rp - 1.0))
        return min(1.0, max(0.0, q))


@dataclass(frozen=True)
class BackendSpec:
    kind: str = "mock"  # "remote", "mock" or "mock-reference"
    base_url: Optional[str] = None
    model_name: str = "meta-llama/Llama-3.1-8B-Instruct"
    request_timeout: float = 120.0
    max_retries: int = 5
    concurrency_limit: int = 4
    backoff_base: float = 1.0
    send_seed: bool = False
    noise: NoisePolicy = field(default_factory=NoisePolicy)

    def __post_init__(self):
        if self.kind not in ("remote", "mock", "mock-reference"):
            raise ValueError(f"unknown backend kind {self.kind!r}")
        if self.kind == "remote" and not self.base_url:
            url = os.environ.get(BASE_URL_ENV)
            if not url:
                raise ValueError(f"remote backend needs base_url or ${BASE_URL_ENV}")
            object.__setattr__(self, "base_url", url)
        if self.concurrency_limit < 1:
            raise ValueError("concurrency_limit must be >= 1")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")

    @property
    def backend_id(self) -> str:
        if self.kind == "remote":
            return f"remote:{self.base_url}"
        if self.kind == "mock-reference":
            return f"mock-reference:{json.dumps(asdict(self.noise), sort_keys=True)}"
        return "mock"

    @classmethod
    def from_dict(cls, obj: Mapping) -> "BackendSpec":
        obj = dict(obj)
        if "noise" in obj:
            obj["noise"] = NoisePolicy(**obj["noise"])
        return cls(**obj)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class GenerationResult:
    raw_text: str
    extracted_model: Optional[str]
    latency: float
    cache_hit: bool
    attempt_count: int


_FENCE = re.compile(r"```[^\n`]*\n(.*?)```", re.DOTALL)


def extract_model(raw_text: str) -> str:
    """Pull the model text out of an LLM reply.

    Priority: the first fenced code block, then the span from the first XML
    or EPackage opening to the last ``>``.
    """
    m = _FENCE.search(raw_text)
    if m and m.group(1).strip():
        return m.group(1).strip()
    starts = [i for i in (raw_text.find("<?xml"), raw_text.find("<ecore:EPackage")) if i >= 0]
    if starts:
        start = min(starts)
        end = raw_text.rfind(">")
        if end > start:
            return raw_text[start : end + 1]
    raise NoModelFound("no fenced block or XML model in the response")


def build_request(prompt: str, config: Configuration, model_name: str, seed: Optional[int] = None) -> dict:
    rp = DEFAULT_REPETITION_PENALTY if config.repetition_penalty is None else config.repetition_penalty
    body = {
        "model": model_name,
        "messages": [{"role": "user", "content": prompt}],
        "temperature": config.temperature,
        "top_p": config.top_p,
        "max_tokens": config.max_new_tokens,
        "top_k": config.top_k,
        "repetition_penalty": rp,
    }
    if seed is not None:
        body["seed"] = seed
    return body


def serialize_request(body: dict) -> bytes:
    return json.dumps(body, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


def _completion_json(text: str, model_name: str) -> dict:
    return {
        "object": "chat.completion",
        "model": model_name,
        "choices": [{"index": 0, "message": {"role": "assistant", "content": text}, "finish_reason": "stop"}],
    }


def _content_of(response: dict) -> str:
    try:
        content = response["choices"][0]["message"]["content"]
    except (KeyError, IndexError, TypeError):
        raise MalformedResponse("response lacks choices[0].message.content") from None
    if not isinstance(content, str):
        raise MalformedResponse("completion content is not a string")
    return content


class HashMockBackend:
    """Returns a small pseudo-model whose content is a pure function of the request."""

    backend_id = "mock"

    def respond(self, prompt: str, config: Configuration, rep_index: int, seed: Optional[int] = None) -> str:
        h = fnv1a_64(f"{prompt}\x00{config.key()}\x00{rep_index}\x00{seed}")
        names = [f"C{(h >> (8 * i)) & 0xFF:02x}" for i in range(4)]
        classes = "\n".join(f'  <eClassifiers xsi:type="ecore:EClass" name="{n}"/>' for n in names)
        return (
            "```xml\n"
            f'<ecore:EPackage name="p{h:016x}" nsURI="http://mock/{rep_index}">\n{classes}\n'
            "</ecore:EPackage>\n```"
        )


class ReferenceMockBackend:
    """Echoes a reference model with temperature-driven token perturbations.

    ``references`` maps a domain's input text to its reference model; the
    reference whose input text ends the prompt is echoed.  Each
    non-whitespace token is replaced when a draw keyed only by
    (policy seed, call seed, repetition, position) falls below the noise
    rate, so a hotter configuration perturbs a superset of the tokens a
    cooler one does.
    """

    def __init__(self, references: Union[Mapping[str, str], Sequence[str]], noise: NoisePolicy = NoisePolicy()):
        if isinstance(references, Mapping):
            self.references = dict(references)
        else:
            self.references = {str(i): r for i, r in enumerate(references)}
        if not self.references:
            raise ValueError("reference mock needs at least one reference text")
        self.noise = noise
        self.backend_id = f"mock-reference:{json.dumps(asdict(noise), sort_keys=True)}"

    def pick_reference(self, prompt: str) -> str:
        best = None
        for inp, ref in self.references.items():
            if inp and prompt.rstrip().endswith(inp.strip()) and (best is None or len(inp) > len(best[0])):
                best = (inp, ref)
        if best is None:
            return next(iter(self.references.values()))
        return best[1]

    def perturb(self, text: str, config: Configuration, rep_index: int, seed: Optional[int] = None):
        """Return (perturbed text, number of replaced tokens)."""
        q = self.noise.rate(config)
        base = f"{self.noise.seed}|{seed}|{rep_index}"
        parts = re.split(r"(\s+)", text)
        edits = 0
        pos = 0
        for i, part in enumerate(parts):
            if not part or part.isspace():
                continue
            if _unit(f"{base}|{pos}") < q:
                parts[i] = f"x{fnv1a_64(f'{base}|r|{pos}') & 0xFFFFFF:06x}"
                edits += 1
            pos += 1
        return "".join(parts), edits

    def respond(self, prompt: str, config: Configuration, rep_index: int, seed: Optional[int] = None) -> str:
        text, _ = self.perturb(self.pick_reference(prompt), config, rep_index, seed)
        return f"Here is the model:\n```xml\n{text}\n```\n"


def mock_reference_backend(reference_texts, noise_policy: NoisePolicy = NoisePolicy()) -> ReferenceMockBackend:
    return ReferenceMockBackend(reference_texts, noise_policy)


class Gateway:
    """Cached, retrying front end over one backend."""

    def __init__(
        self,
        spec: BackendSpec,
        cache_dir=None,
        backend=None,
        transport: Optional[httpx.BaseTransport] = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.spec = spec
        self.cache_dir = cache_dir
        if cache_dir is not None:
            os.makedirs(cache_dir, exist_ok=True)
        if backend is None and spec.kind == "mock":
            backend = HashMockBackend()
        if backend is None and spec.kind == "mock-reference":
            raise ValueError("mock-reference backend needs reference texts; pass backend=")
        self.backend = backend
        self._sleep = sleep
        self._memory: Dict[str, dict] = {}
        self._lock = threading.Lock()
        self._slots = threading.BoundedSemaphore(spec.concurrency_limit)
        self._client = None
        if spec.kind == "remote":
            headers = {"Content-Type": "application/json"}
            key = os.environ.get(API_KEY_ENV)
            if key:
                headers["Authorization"] = f"Bearer {key}"
            self._client = httpx.Client(
                base_url=spec.base_url.rstrip("/"),
                timeout=spec.request_timeout,
                headers=headers,
                transport=transport,
            )

    @property
    def backend_id(self) -> str:
        if self.backend is not None:
            return self.backend.backend_id
        return self.spec.backend_id

    def cache_key(self, prompt: str, config: Configuration, rep_index: int, seed: Optional[int] = None) -> str:
        prompt_hash = hashlib.sha256(prompt.encode("utf-8")).hexdigest()
        use_seed = seed if (self.spec.send_seed or self.spec.kind != "remote") else None
        raw = json.dumps([self.backend_id, self.spec.model_name, prompt_hash, config.key(), rep_index, use_seed])
        return hashlib.sha256(raw.encode("utf-8")).hexdigest()

    def _cache_get(self, key: str) -> Optional[dict]:
        with self._lock:
            hit = self._memory.get(key)
        if hit is not None or self.cache_dir is None:
            return hit
        path = os.path.join(self.cache_dir, key + ".json")
        try:
            with open(path, encoding="utf-8") as fh:
                hit = json.load(fh)
        except (OSError, json.JSONDecodeError):
            return None
        with self._lock:
            self._memory.setdefault(key, hit)
        return hit

    def _cache_put(self, key: str, response: dict) -> None:
        with self._lock:
            self._memory.setdefault(key, response)
            if self.cache_dir is None:
                return
            path = os.path.join(self.cache_dir, key + ".json")
            if os.path.exists(path):
                return
            tmp = f"{path}.{os.getpid()}.{threading.get_ident()}.tmp"
            with open(tmp, "w", encoding="utf-8") as fh:
                json.dump(response, fh)
            os.replace(tmp, path)

    def generate(self, prompt: str, config: Configuration, rep_index: int = 0, seed: Optional[int] = None) -> GenerationResult:
        key = self.cache_key(prompt, config, rep_index, seed)
        t0 = time.perf_counter()
        cached = self._cache_get(key)
        if cached is not None:
            return self._result(cached, t0, cache_hit=True, attempts=1)
        with self._slots:
            if self.spec.kind == "remote":
                response, attempts = self._post(prompt, config, seed)
            else:
                text = self.backend.respond(prompt, config, rep_index, seed)
                response, attempts = _completion_json(text, self.spec.model_name), 1
        _content_of(response)
        self._cache_put(key, response)
        return self._result(response, t0, cache_hit=False, attempts=attempts)

    __call__ = generate

    def _result(self, response: dict, t0: float, cache_hit: bool, attempts: int) -> GenerationResult:
        raw = _content_of(response)
        try:
            model = extract_model(raw)
        except NoModelFound:
            model = None
        return GenerationResult(raw, model, (time.perf_counter() - t0) * 1000.0, cache_hit, attempts)

    def _post(self, prompt: str, config: Configuration, seed: Optional[int]):
        body = build_request(prompt, config, self.spec.model_name, seed if self.spec.send_seed else None)
        payload = serialize_request(body)
        last = None
        for attempt in range(1, self.spec.max_retries + 2):
            try:
                resp = self._client.post("/v1/chat/completions", content=payload)
            except httpx.TransportError as exc:
                last = f"transport error: {exc}"
            else:
                if resp.status_code == 200:
                    try:
                        return resp.json(), attempt
                    except ValueError:
                        raise MalformedResponse("response body is not JSON") from None
                if resp.status_code != 429 and resp.status_code < 500:
                    raise BackendUnavailable(f"HTTP {resp.status_code}: {resp.text[:200]}")
                last = f"HTTP {resp.status_code}"
            if attempt <= self.spec.max_retries:
                delay = self.spec.backoff_base * 2 ** (attempt - 1)
                log.warning("generation attempt %d failed (%s); retrying in %.1fs", attempt, last, delay)
                self._sleep(delay)
        raise BackendUnavailable(f"gave up after {self.spec.max_retries + 1} attempts: {last}")

    def close(self):
        if self._client is not None:
            self._client.close()
