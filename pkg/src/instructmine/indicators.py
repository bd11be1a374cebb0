"""Per-sample and dataset-level data-quality indicators.

A dataset's value for every indicator is the arithmetic mean of its
per-sample values, computed in corpus order so reruns are bitwise
identical. Response length, lexical diversity, and neighbor distance
are native; perplexity, reward, and the three dialogue scores arrive
through score sidecars or the scorer service.
"""

from __future__ import annotations

import math
import unicodedata
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .corpus import Corpus
from .errors import DataError, UsageError
from .neighbors import approx_knn, exact_knn
from .scoring import SampleEmbedding, SampleScores

INDICATOR_NAMES = ("len", "rew", "ppl", "mtld", "knn6", "nat", "coh", "und")

MTLD_TTR_THRESHOLD = 0.72
KNN_DEFAULT_I = 6


@dataclass(frozen=True)
class IndicatorVector:
    """Dataset-level values for the full indicator set."""

    len: float
    rew: float
    ppl: float
    mtld: float
    knn6: float
    nat: float
    coh: float
    und: float

    def as_dict(self) -> dict[str, float]:
        return {name: getattr(self, name) for name in INDICATOR_NAMES}


def length(corpus: Corpus) -> tuple[np.ndarray, float]:
    """Character count of every response, and the mean."""
    if len(corpus) == 0:
        raise DataError("cannot compute lengths of an empty corpus")
    values = np.array([float(len(s.response)) for s in corpus])
    return values, float(values.mean())


def _is_punctuation(ch: str) -> bool:
    return unicodedata.category(ch).startswith("P")


def tokenize(text: str) -> list[str]:
    """Lowercase, split on whitespace, strip punctuation off token edges."""
    tokens = []
    for raw in text.lower().split():
        start, end = 0, len(raw)
        while start < end and _is_punctuation(raw[start]):
            start += 1
        while end > start and _is_punctuation(raw[end - 1]):
            end -= 1
        if end > start:
            tokens.append(raw[start:end])
    return tokens


def _mtld_one_direction(tokens: Sequence[str], threshold: float) -> float:
    factors = 0.0
    types: set[str] = set()
    count = 0
    ttr = 1.0
    for token in tokens:
        count += 1
        types.add(token)
        ttr = len(types) / count
        if ttr < threshold:
            factors += 1.0
            types.clear()
            count = 0
            ttr = 1.0
    if count > 0:
        factors += (1.0 - ttr) / (1.0 - threshold)
    if factors == 0.0:
        # the text never drove the type-token ratio below the threshold,
        # so its diversity is unbounded under this measure
        return math.inf
    return len(tokens) / factors


def mtld_score(tokens: Sequence[str], threshold: float = MTLD_TTR_THRESHOLD) -> float:
    """Bidirectional MTLD of a token sequence.

    Runs of tokens are accumulated until the type-token ratio of the run
    falls below `threshold`, completing one factor; the trailing partial
    run contributes (1 - TTR) / (1 - threshold) of a factor. The score is
    the token count divided by the factor count, averaged over the
    forward and the reversed sequence.
    """
    if not tokens:
        raise DataError("MTLD needs at least one token")
    if not 0.0 < threshold < 1.0:
        raise UsageError(f"TTR threshold must be in (0, 1), got {threshold}")
    forward = _mtld_one_direction(tokens, threshold)
    backward = _mtld_one_direction(list(reversed(tokens)), threshold)
    return (forward + backward) / 2.0


def mtld(
    corpus: Corpus, ttr_threshold: float = MTLD_TTR_THRESHOLD
) -> tuple[np.ndarray, float]:
    """Bidirectional MTLD of every response, and the mean."""
    if len(corpus) == 0:
        raise DataError("cannot compute MTLD of an empty corpus")
    values = []
    for s in corpus:
        tokens = tokenize(s.response)
        if not tokens:
            raise DataError(f"sample {s.id!r}: response has no tokens")
        values.append(mtld_score(tokens, ttr_threshold))
    values = np.array(values)
    return values, float(values.mean())


def knn_i(
    embeddings: Mapping[str, SampleEmbedding | np.ndarray],
    i: int = KNN_DEFAULT_I,
    mode: str = "exact",
    metric: str = "cosine",
    seed: int = 0,
    mean_over_first: bool = False,
) -> tuple[dict[str, float], float]:
    """Distance from each sample to its i-th nearest neighbor, and the mean.

    With `mean_over_first` the per-sample value is instead the average
    distance to all of the first i neighbors.
    """
    if mode not in ("exact", "approximate"):
        raise UsageError(f"unknown mode {mode!r}")
    ids = list(embeddings)
    if len(ids) < i + 1:
        raise DataError(f"need at least {i + 1} embeddings for knn_{i}, got {len(ids)}")
    rows = []
    for sid in ids:
        vec = embeddings[sid]
        rows.append(vec.vector if isinstance(vec, SampleEmbedding) else np.asarray(vec, float))
    matrix = np.vstack(rows)
    if mode == "exact":
        _, distances = exact_knn(matrix, i, metric=metric)
    else:
        _, distances = approx_knn(matrix, i, metric=metric, seed=seed)
    if mean_over_first:
        per_sample = distances.mean(axis=1)
    else:
        per_sample = distances[:, i - 1]
    values = {sid: float(d) for sid, d in zip(ids, per_sample)}
    return values, float(per_sample.mean())


def aggregate(
    corpus: Corpus,
    scores: Mapping[str, SampleScores],
    embeddings: Mapping[str, SampleEmbedding | np.ndarray],
    knn: int = KNN_DEFAULT_I,
    knn_mode: str = "exact",
    metric: str = "cosine",
    seed: int = 0,
    ttr_threshold: float = MTLD_TTR_THRESHOLD,
) -> tuple[IndicatorVector, dict[str, np.ndarray]]:
    """Dataset-level indicator vector plus the per-sample arrays behind it.

    Every corpus id must be covered by both sidecar maps. Neighbor
    distances are computed within this corpus, which is the right pool
    when scoring the dataset as a whole.
    """
    if len(corpus) == 0:
        raise DataError("cannot aggregate an empty corpus")
    ids = corpus.ids()
    missing_scores = [i for i in ids if i not in scores]
    missing_embeddings = [i for i in ids if i not in embeddings]
    if missing_scores or missing_embeddings:
        parts = []
        if missing_scores:
            parts.append(f"scores missing for {', '.join(missing_scores[:10])}")
        if missing_embeddings:
            parts.append(f"embeddings missing for {', '.join(missing_embeddings[:10])}")
        raise DataError("; ".join(parts))

    len_values, len_mean = length(corpus)
    mtld_values, mtld_mean = mtld(corpus, ttr_threshold)
    knn_map, knn_mean = knn_i(
        {i: embeddings[i] for i in ids}, knn, mode=knn_mode, metric=metric, seed=seed
    )
    knn_values = np.array([knn_map[i] for i in ids])

    per_sample = {
        "len": len_values,
        "rew": np.array([scores[i].rew for i in ids]),
        "ppl": np.array([scores[i].ppl for i in ids]),
        "mtld": mtld_values,
        "knn6": knn_values,
        "nat": np.array([scores[i].nat for i in ids]),
        "coh": np.array([scores[i].coh for i in ids]),
        "und": np.array([scores[i].und for i in ids]),
    }
    vector = IndicatorVector(
        len=len_mean,
        rew=float(per_sample["rew"].mean()),
        ppl=float(per_sample["ppl"].mean()),
        mtld=mtld_mean,
        knn6=knn_mean,
        nat=float(per_sample["nat"].mean()),
        coh=float(per_sample["coh"].mean()),
        und=float(per_sample["und"].mean()),
    )
    return vector, per_sample
