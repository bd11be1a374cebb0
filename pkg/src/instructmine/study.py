"""End-to-end fusion study: build datasets, measure them, fit the rule.

Losses are supplied from outside as a label-to-value map (finetuning
happens elsewhere); everything after that is deterministic, so a study
rerun with the same inputs writes byte-identical reports.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

from .corpus import Corpus, read_store
from .errors import DataError
from .indicators import aggregate
from .sampling import StudyManifest, fuse
from .stats import (
    KsResult,
    Observation,
    RegressionFit,
    describe,
    design_matrix,
    ks_by_variable,
    ols,
    stepwise,
)


@dataclass(frozen=True)
class StudyResult:
    observations: list[Observation]
    descriptives: dict[str, dict[str, float]]
    ks_results: list[KsResult]
    full_fit: RegressionFit
    stepwise_fit: RegressionFit
    alpha: float

    def report_dict(self) -> dict:
        return {
            "n_datasets": len(self.observations),
            "alpha": self.alpha,
            "descriptives": self.descriptives,
            "ks": [
                {"variable": r.variable, "statistic": r.statistic, "p_value": r.p_value}
                for r in self.ks_results
            ],
            "ols": self.full_fit.summary_dict(),
            "stepwise": self.stepwise_fit.summary_dict(),
        }


def load_losses(path: str | Path) -> dict[str, float]:
    """Read the label-to-loss JSON map."""
    path = Path(path)
    try:
        record = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(record, dict):
        raise DataError(f"{path}: expected an object mapping labels to losses")
    try:
        return {str(k): float(v) for k, v in record.items()}
    except (TypeError, ValueError) as exc:
        raise DataError(f"{path}: losses must be numbers ({exc})") from exc


def run_study(
    manifest: StudyManifest,
    losses: Mapping[str, float],
    scores: Mapping,
    embeddings: Mapping,
    corpora: Mapping[str, Corpus] | None = None,
    knn_mode: str = "exact",
    metric: str = "cosine",
    alpha: float = 0.05,
) -> StudyResult:
    """Fuse every spec, measure indicators, and fit the full and reduced models.

    `corpora` may be passed preloaded; otherwise the manifest's paths are
    read. Scores and embeddings must cover every sample that any fusion
    can draw.
    """
    missing_losses = [s.label for s in manifest.specs if s.label not in losses]
    if missing_losses:
        raise DataError(
            f"losses missing for {len(missing_losses)} datasets: "
            + ", ".join(missing_losses[:10])
            + (" ..." if len(missing_losses) > 10 else "")
        )
    if corpora is None:
        corpora = {
            name: read_store(path, name=name)
            for name, path in manifest.corpus_paths.items()
        }

    observations = []
    for spec in manifest.specs:
        fused = fuse(spec, corpora)
        vector, _ = aggregate(
            fused, scores, embeddings, knn_mode=knn_mode, metric=metric, seed=spec.seed
        )
        bad = [k for k, v in vector.as_dict().items() if not math.isfinite(v)]
        if bad:
            raise DataError(
                f"dataset {spec.label!r} has non-finite indicators {bad}; "
                "regression inputs must be finite (a single fully-distinct "
                "response makes a dataset's lexical diversity infinite)"
            )
        observations.append(
            Observation(label=spec.label, loss=losses[spec.label], indicators=vector)
        )

    y, X, names = design_matrix(observations)
    return StudyResult(
        observations=observations,
        descriptives=describe(observations),
        ks_results=ks_by_variable(observations),
        full_fit=ols(y, X, names),
        stepwise_fit=stepwise(y, X, names, alpha_remove=alpha),
        alpha=alpha,
    )


def write_study_report(result: StudyResult, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(result.report_dict(), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
