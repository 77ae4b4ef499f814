"""Multi-objective tuning of LLM decoding hyperparameters for domain-model generation."""

__version__ = "0.1.0"

from .hpspace import (  # noqa: E402
    LLAMA_DEFAULT,
    PUBLISHED_OPTIMA,
    REDUCED_SPACE,
    WIDE_SPACE,
    Choices,
    Configuration,
    Range,
    SearchSpace,
    enumerate_configs,
    from_genome,
    sample,
    to_genome,
    validate,
)
from .moo import EvolutionParams, FitnessVector, dominates, evolve, reduce_space  # noqa: E402
from .gridsearch import grid_search, pareto_front  # noqa: E402
from .stats import classify_effect, classify_wtl, tabulate, vargha_delaney_a12, wilcoxon_one_sided  # noqa: E402

__all__ = [
    "LLAMA_DEFAULT", "PUBLISHED_OPTIMA", "REDUCED_SPACE", "WIDE_SPACE",
    "Choices", "Configuration", "Range", "SearchSpace",
    "enumerate_configs", "from_genome", "sample", "to_genome", "validate",
    "EvolutionParams", "FitnessVector", "dominates", "evolve", "reduce_space",
    "grid_search", "pareto_front",
    "classify_effect", "classify_wtl", "tabulate", "vargha_delaney_a12", "wilcoxon_one_sided",
]
