"""Indicator-based quality estimation and selection for instruction-tuning data."""

__version__ = "0.1.0"

from .corpus import Corpus, InstructionSample, read_store, write_store
from .errors import DataError, InstructMineError, UsageError
from .indicators import INDICATOR_NAMES, IndicatorVector, aggregate
from .rule import BUILTIN_RULES, QualityRule, resolve_rule
from .scoring import SampleEmbedding, SampleScores, ScorerClient, load_embeddings, load_scores
from .stats import Observation, RegressionFit, ks_test, ols, stepwise

__all__ = [
    "__version__",
    "BUILTIN_RULES",
    "Corpus",
    "DataError",
    "INDICATOR_NAMES",
    "IndicatorVector",
    "InstructMineError",
    "InstructionSample",
    "Observation",
    "QualityRule",
    "RegressionFit",
    "SampleEmbedding",
    "SampleScores",
    "ScorerClient",
    "UsageError",
    "aggregate",
    "ks_test",
    "load_embeddings",
    "load_scores",
    "ols",
    "read_store",
    "resolve_rule",
    "stepwise",
    "write_store",
]
