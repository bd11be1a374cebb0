"""The quality rule: predicted log-loss as a linear function of indicators.

Lower predicted loss means higher quality, so ranking ascending by the
prediction puts the best samples first. The package ships one builtin
rule (the published coefficient set, registered as "eq4"); fitted rules
from the study can be saved and loaded as JSON.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .corpus import Corpus
from .errors import DataError, UsageError
from .indicators import (
    INDICATOR_NAMES,
    IndicatorVector,
    aggregate,
    mtld_score,
    tokenize,
)
from .neighbors import approx_knn, exact_knn
from .scoring import SampleEmbedding, SampleScores
from .stats import RegressionFit

BUILTIN_RULES: dict[str, "QualityRule"] = {}


@dataclass(frozen=True)
class QualityRule:
    """Intercept plus a sparse map of indicator coefficients."""

    intercept: float
    terms: Mapping[str, float]
    provenance: str

    def __post_init__(self):
        unknown = [name for name in self.terms if name not in INDICATOR_NAMES]
        if unknown:
            raise DataError(f"rule has non-indicator terms: {unknown}")

    def predict_log_loss(self, values: "IndicatorVector | Mapping[str, float]") -> float:
        """Predicted log evaluation loss at the given indicator values."""
        if isinstance(values, IndicatorVector):
            values = values.as_dict()
        missing = [name for name in self.terms if name not in values]
        if missing:
            raise DataError(f"missing indicator values for rule terms: {missing}")
        return self.intercept + sum(
            coef * float(values[name]) for name, coef in sorted(self.terms.items())
        )

    def predict_loss(self, values) -> float:
        return math.exp(self.predict_log_loss(values))


BUILTIN_RULES["eq4"] = QualityRule(
    intercept=1.0694,
    terms={"rew": -0.1498, "len": 8.257e-5, "knn6": -0.9350},
    provenance="builtin:eq4",
)


def rule_from_fit(fit: RegressionFit, provenance: str = "fitted") -> QualityRule:
    """Turn a regression fit into a rule (intercept column becomes the intercept)."""
    terms = {}
    intercept = 0.0
    for name, coef in zip(fit.variables, fit.coefficients):
        if name == "intercept":
            intercept = float(coef)
        else:
            terms[name] = float(coef)
    return QualityRule(intercept=intercept, terms=terms, provenance=provenance)


def save_rule(rule: QualityRule, path: str | Path) -> None:
    record = {
        "intercept": rule.intercept,
        "terms": dict(rule.terms),
        "provenance": rule.provenance,
    }
    Path(path).write_text(
        json.dumps(record, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def load_rule(path: str | Path) -> QualityRule:
    try:
        record = json.loads(Path(path).read_text(encoding="utf-8"))
        return QualityRule(
            intercept=float(record["intercept"]),
            terms={str(k): float(v) for k, v in record["terms"].items()},
            provenance=str(record.get("provenance", "fitted")),
        )
    except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
        raise DataError(f"{path}: bad rule file ({exc})") from exc


def resolve_rule(spec: str) -> QualityRule:
    """Resolve a CLI rule reference: "builtin:<name>" or a JSON file path."""
    if spec.startswith("builtin:"):
        name = spec.split(":", 1)[1]
        if name not in BUILTIN_RULES:
            raise UsageError(
                f"unknown builtin rule {name!r}, have {sorted(BUILTIN_RULES)}"
            )
        return BUILTIN_RULES[name]
    return load_rule(spec)


# --- per-sample application ------------------------------------------------------

def per_sample_values(
    pool: Corpus,
    scores: Mapping[str, SampleScores],
    embeddings: Mapping[str, SampleEmbedding | np.ndarray],
    needed: Sequence[str],
    knn: int = 6,
    knn_mode: str = "exact",
    metric: str = "cosine",
    seed: int = 0,
) -> dict[str, dict[str, float]]:
    """Per-sample indicator values for the given names, keyed by sample id.

    Neighbor distances are computed against the whole pool, because
    selection asks how each candidate sits inside the full corpus.
    """
    ids = pool.ids()
    out: dict[str, dict[str, float]] = {sid: {} for sid in ids}
    for name in needed:
        if name == "len":
            for s in pool:
                out[s.id]["len"] = float(len(s.response))
        elif name == "mtld":
            for s in pool:
                tokens = tokenize(s.response)
                if not tokens:
                    raise DataError(f"sample {s.id!r}: response has no tokens")
                out[s.id]["mtld"] = mtld_score(tokens)
        elif name in ("rew", "ppl", "nat", "coh", "und"):
            missing = [sid for sid in ids if sid not in scores]
            if missing:
                raise DataError(f"scores missing for {', '.join(missing[:10])}")
            for sid in ids:
                out[sid][name] = float(getattr(scores[sid], name))
        elif name == "knn6":
            missing = [sid for sid in ids if sid not in embeddings]
            if missing:
                raise DataError(f"embeddings missing for {', '.join(missing[:10])}")
            if len(ids) < knn + 1:
                raise DataError(
                    f"pool of {len(ids)} is too small for {knn} neighbors"
                )
            rows = []
            for sid in ids:
                vec = embeddings[sid]
                rows.append(
                    vec.vector if isinstance(vec, SampleEmbedding) else np.asarray(vec, float)
                )
            matrix = np.vstack(rows)
            if knn_mode == "exact":
                _, dist = exact_knn(matrix, knn, metric=metric)
            else:
                _, dist = approx_knn(matrix, knn, metric=metric, seed=seed)
            for sid, d in zip(ids, dist[:, knn - 1]):
                out[sid]["knn6"] = float(d)
        else:
            raise UsageError(f"unknown indicator {name!r}")
    return out


def rank_samples(
    rule: QualityRule,
    pool: Corpus,
    scores: Mapping[str, SampleScores],
    embeddings: Mapping[str, SampleEmbedding | np.ndarray],
    knn_mode: str = "exact",
    metric: str = "cosine",
    seed: int = 0,
) -> list[tuple[str, float]]:
    """Rank pool samples by predicted log-loss, best (lowest) first.

    Ties break on the sample id so reruns agree byte for byte.
    """
    if len(pool) < 7:
        raise DataError(f"pool of {len(pool)} is too small to rank (need at least 7)")
    values = per_sample_values(
        pool, scores, embeddings, needed=tuple(rule.terms),
        knn_mode=knn_mode, metric=metric, seed=seed,
    )
    ranked = [
        (sid, rule.predict_log_loss(values[sid])) for sid in pool.ids()
    ]
    ranked.sort(key=lambda item: (item[1], item[0]))
    return ranked


@dataclass(frozen=True)
class SelectionReport:
    """One selected dataset plus its measured indicators and rule value."""

    corpus: Corpus
    indicators: IndicatorVector
    rule_value: float
    exp_rule_value: float


def _report(
    rule: QualityRule,
    subset: Corpus,
    scores,
    embeddings,
    metric: str,
) -> SelectionReport:
    vector, _ = aggregate(subset, scores, embeddings, metric=metric)
    value = rule.predict_log_loss(vector)
    return SelectionReport(
        corpus=subset,
        indicators=vector,
        rule_value=value,
        exp_rule_value=math.exp(value),
    )


def select(
    rule: QualityRule,
    pool: Corpus,
    scores: Mapping[str, SampleScores],
    embeddings: Mapping[str, SampleEmbedding | np.ndarray],
    n: int | None = None,
    tiers: int | None = None,
    tier_size: int | None = None,
    knn_mode: str = "exact",
    metric: str = "cosine",
    seed: int = 0,
) -> SelectionReport | list[SelectionReport]:
    """Select the best n samples, or cut the ranking into quality tiers.

    Exactly one of `n` and `tiers` must be given. Tier mode produces
    `tiers` disjoint contiguous rank bands of `tier_size` (the pool size
    split evenly when omitted), best band first. Each output carries the
    indicators measured on that subset and the rule value at them.
    """
    if (n is None) == (tiers is None):
        raise UsageError("pass exactly one of n or tiers")
    ranked = rank_samples(
        rule, pool, scores, embeddings, knn_mode=knn_mode, metric=metric, seed=seed
    )
    by_id = pool.by_id()

    def corpus_from(ids: Sequence[str], name: str) -> Corpus:
        return Corpus(name, [by_id[i] for i in ids])

    if n is not None:
        if n > len(pool):
            raise DataError(f"cannot select {n} from a pool of {len(pool)}")
        ids = [sid for sid, _ in ranked[:n]]
        return _report(rule, corpus_from(ids, f"{pool.name}-top{n}"), scores, embeddings, metric)

    if tiers < 1:
        raise UsageError(f"tiers must be positive, got {tiers}")
    band = tier_size or len(pool) // tiers
    if band < 1:
        raise UsageError("tier size must be positive")
    if tiers * band > len(pool):
        raise DataError(
            f"{tiers} tiers of {band} need {tiers * band} samples, pool has {len(pool)}"
        )
    reports = []
    for t in range(tiers):
        ids = [sid for sid, _ in ranked[t * band:(t + 1) * band]]
        subset = corpus_from(ids, f"{pool.name}-band{t + 1}")
        reports.append(_report(rule, subset, scores, embeddings, metric))
    return reports
