"""Zero-shot, few-shot and chain-of-thought prompt construction.

Prompts are plain concatenations of blocks separated by one blank line:
the task header, any worked examples, then the domain description.
"""

import enum
import json
import os
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

from .errors import EmptyInput, IncompleteExample, NoExamples

DEFAULT_TASK_HEADER = "\n".join(
    [
        "You are a domain modeling expert.",
        "Identify all entities in the text.",
        "Identify all attributes and data types.",
        "Identify all relationships among entities.",
        "Generate the output as an Ecore model.",
    ]
)

SEPARATOR = "\n\n"


class Strategy(str, enum.Enum):
    ZERO_SHOT = "zero-shot"
    FEW_SHOT = "few-shot"
    CHAIN_OF_THOUGHT = "chain-of-thought"

    @classmethod
    def parse(cls, name: str) -> "Strategy":
        norm = name.strip().lower().replace("_", "-").replace(" ", "-")
        aliases = {"zeroshot": "zero-shot", "fewshot": "few-shot", "cot": "chain-of-thought"}
        norm = aliases.get(norm.replace("-", ""), norm)
        return cls(norm)


@dataclass(frozen=True)
class WorkedExample:
    model_text: str
    description: Optional[str] = None
    steps: Optional[str] = None

    def __post_init__(self):
        if not self.model_text or not self.model_text.strip():
            raise EmptyInput("worked example needs a nonempty model text")


@dataclass(frozen=True)
class PromptSpec:
    strategy: Strategy
    domain_text: str
    examples: Sequence[WorkedExample] = field(default_factory=tuple)
    task_header: str = DEFAULT_TASK_HEADER


def _check_domain(domain_text: str) -> None:
    if not domain_text or not domain_text.strip():
        raise EmptyInput("domain text is empty")


def build_zero_shot(task_header: Optional[str], domain_text: str) -> str:
    _check_domain(domain_text)
    return SEPARATOR.join([task_header or DEFAULT_TASK_HEADER, domain_text])


def build_few_shot(task_header: Optional[str], examples: Sequence[WorkedExample], domain_text: str) -> str:
    _check_domain(domain_text)
    if not examples:
        raise NoExamples("few-shot prompt needs at least one example")
    blocks = [task_header or DEFAULT_TASK_HEADER]
    blocks.extend(ex.model_text for ex in examples)
    blocks.append(domain_text)
    return SEPARATOR.join(blocks)


def build_chain_of_thought(task_header: Optional[str], examples: Sequence[WorkedExample], domain_text: str) -> str:
    _check_domain(domain_text)
    if not examples:
        raise NoExamples("chain-of-thought prompt needs at least one example")
    blocks = [task_header or DEFAULT_TASK_HEADER]
    for i, ex in enumerate(examples, 1):
        if not ex.description or not ex.steps:
            missing = "description" if not ex.description else "steps"
            raise IncompleteExample(f"example {i} has no {missing}")
        blocks.extend([ex.description, ex.steps, ex.model_text])
    blocks.append(domain_text)
    return SEPARATOR.join(blocks)


def build_prompt(spec: PromptSpec) -> str:
    if spec.strategy is Strategy.ZERO_SHOT:
        if spec.examples:
            raise ValueError("zero-shot prompts take no examples")
        return build_zero_shot(spec.task_header, spec.domain_text)
    if spec.strategy is Strategy.FEW_SHOT:
        return build_few_shot(spec.task_header, spec.examples, spec.domain_text)
    return build_chain_of_thought(spec.task_header, spec.examples, spec.domain_text)


def load_examples(manifest_path) -> List[WorkedExample]:
    """Read ``{"examples": [{"description", "steps", "model_path"}]}``.

    ``model_path`` is resolved relative to the manifest's directory; trailing
    newlines of the model file are dropped.
    """
    base = os.path.dirname(os.path.abspath(manifest_path))
    with open(manifest_path, encoding="utf-8") as fh:
        manifest = json.load(fh)
    out = []
    for entry in manifest["examples"]:
        path = entry["model_path"]
        if not os.path.isabs(path):
            path = os.path.join(base, path)
        with open(path, encoding="utf-8") as fh:
            model_text = fh.read().rstrip("\n")
        out.append(WorkedExample(model_text, entry.get("description"), entry.get("steps")))
    return out
