"""Subdataset construction: random fusion and indicator-tier slicing.

Fusion draws a random proportion per candidate corpus and samples
without replacement accordingly, which is how the multivariate study
gets datasets whose indicator values vary. Tier slicing sorts a pool by
one indicator and cuts consecutive windows from evenly spaced starting
ranks, which is how the univariate study isolates a single indicator.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .corpus import Corpus, InstructionSample
from .errors import DataError, UsageError
from .seeding import derive_seed, substream

DEFAULT_SIZE = 2000
DEFAULT_TIERS = 8
DEFAULT_FUSIONS = 78


def largest_remainder(total: int, weights: Sequence[float]) -> list[int]:
    """Integer allocations proportional to `weights`, summing to `total`.

    Floors the exact quotas, then hands the leftover units to the
    largest fractional parts; ties go to the earlier corpus. This is the
    standard apportionment trick for making rounded shares add up.
    """
    if total < 0:
        raise UsageError(f"total must be nonnegative, got {total}")
    weights = np.asarray(weights, dtype=float)
    if weights.size == 0:
        raise UsageError("need at least one weight")
    if not (weights > 0).all():
        raise DataError("weights must all be positive")
    quotas = total * weights / weights.sum()
    base = np.floor(quotas).astype(np.int64)
    leftover = int(total - base.sum())
    if leftover:
        fractions = quotas - base
        order = np.lexsort((np.arange(weights.size), -fractions))
        base[order[:leftover]] += 1
    return [int(x) for x in base]


@dataclass(frozen=True)
class FusionSpec:
    """One fused dataset: which corpora, how much, and the drawn weights."""

    label: str
    corpora: tuple[str, ...]
    size: int
    seed: int
    weights: tuple[float, ...]

    def allocations(self) -> dict[str, int]:
        counts = largest_remainder(self.size, self.weights)
        return dict(zip(self.corpora, counts))


def draw_fusion_spec(
    label: str, corpora: Sequence[str], size: int, seed: int
) -> FusionSpec:
    """Draw per-corpus mixing weights from Uniform(0, 1] under the given seed."""
    if not corpora:
        raise UsageError("fusion needs at least one corpus")
    rng = substream(seed, "weights")
    weights = tuple(float(1.0 - rng.random()) for _ in corpora)
    return FusionSpec(label=label, corpora=tuple(corpora), size=size, seed=seed, weights=weights)


def fuse(spec: FusionSpec, corpora: Mapping[str, Corpus]) -> Corpus:
    """Sample each corpus without replacement, honoring the allocation quotas."""
    missing = [name for name in spec.corpora if name not in corpora]
    if missing:
        raise DataError(f"fusion {spec.label!r}: unknown corpora {missing}")
    allocations = spec.allocations()
    problems = {
        name: (want, len(corpora[name]))
        for name, want in allocations.items()
        if want > len(corpora[name])
    }
    if problems:
        detail = "; ".join(
            f"{name} needs {want} of {have}" for name, (want, have) in problems.items()
        )
        raise DataError(f"fusion {spec.label!r}: allocation exceeds corpus size: {detail}")

    samples: list[InstructionSample] = []
    for name in spec.corpora:
        want = allocations[name]
        if want == 0:
            continue
        pool = corpora[name]
        rng = substream(spec.seed, f"pick:{name}")
        picks = np.sort(rng.choice(len(pool), size=want, replace=False))
        samples.extend(pool[int(i)] for i in picks)
    seen = set()
    for s in samples:
        if s.id in seen:
            raise DataError(f"fusion {spec.label!r}: duplicate id {s.id!r} across corpora")
        seen.add(s.id)
    return Corpus(spec.label, samples)


def tier_slices(
    pool: Corpus,
    per_sample: Mapping[str, float],
    k: int = DEFAULT_TIERS,
    size: int = DEFAULT_SIZE,
) -> list[Corpus]:
    """Cut k windows of `size` consecutive samples from the sorted pool.

    The pool is sorted ascending by indicator value (ties by id), and
    window j starts at rank floor(j * (N - size) / (k - 1)), so the first
    window begins at the minimum and the last ends at the maximum. The
    windows are disjoint exactly when the pool holds at least k * size
    samples.
    """
    if k < 1:
        raise UsageError(f"k must be positive, got {k}")
    n = len(pool)
    if n < size:
        raise DataError(f"pool of {n} is smaller than the tier size {size}")
    missing = [s.id for s in pool if s.id not in per_sample]
    if missing:
        raise DataError(f"per-sample values missing for {', '.join(missing[:10])}")

    order = sorted(range(n), key=lambda i: (per_sample[pool[i].id], pool[i].id))
    tiers = []
    for j in range(k):
        start = 0 if k == 1 else math.floor(j * (n - size) / (k - 1))
        member_indices = order[start:start + size]
        tiers.append(pool.subset(member_indices, name=f"{pool.name}-tier{j + 1}"))
    return tiers


@dataclass(frozen=True)
class StudyManifest:
    """Reproducible description of a fusion study."""

    seed: int
    size: int
    corpus_paths: dict[str, str]
    specs: tuple[FusionSpec, ...] = field(default_factory=tuple)


def study_manifest(
    corpus_paths: Mapping[str, str],
    fusions: int = DEFAULT_FUSIONS,
    size: int = DEFAULT_SIZE,
    seed: int = 0,
) -> StudyManifest:
    """Draw `fusions` independent fusion specs from one master seed."""
    if fusions < 1:
        raise UsageError(f"fusions must be >= 1, got {fusions}")
    if not corpus_paths:
        raise UsageError("need at least one candidate corpus")
    names = tuple(corpus_paths)
    specs = tuple(
        draw_fusion_spec(
            label=f"fusion-{i:03d}",
            corpora=names,
            size=size,
            seed=derive_seed(seed, f"fusion:{i}"),
        )
        for i in range(fusions)
    )
    return StudyManifest(
        seed=seed, size=size, corpus_paths=dict(corpus_paths), specs=specs
    )


def write_manifest(manifest: StudyManifest, path: str | Path) -> None:
    record = {
        "seed": manifest.seed,
        "size": manifest.size,
        "corpora": manifest.corpus_paths,
        "specs": [
            {
                "label": s.label,
                "corpora": list(s.corpora),
                "size": s.size,
                "seed": s.seed,
                "weights": list(s.weights),
            }
            for s in manifest.specs
        ],
    }
    Path(path).write_text(
        json.dumps(record, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def read_manifest(path: str | Path) -> StudyManifest:
    try:
        record = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid manifest JSON ({exc})") from exc
    try:
        specs = tuple(
            FusionSpec(
                label=s["label"],
                corpora=tuple(s["corpora"]),
                size=int(s["size"]),
                seed=int(s["seed"]),
                weights=tuple(float(w) for w in s["weights"]),
            )
            for s in record["specs"]
        )
        return StudyManifest(
            seed=int(record["seed"]),
            size=int(record["size"]),
            corpus_paths=dict(record["corpora"]),
            specs=specs,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{path}: bad manifest structure ({exc})") from exc
