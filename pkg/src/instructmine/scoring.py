"""Model-derived per-sample quantities behind one uniform boundary.

Two interchangeable backends provide scores and embeddings: sidecar
files on disk, and a remote scorer service speaking the wire protocol
below. Identical underlying values must yield identical maps whichever
backend served them.

Wire protocol (JSON bodies):
    POST /v1/score   {"pairs": [{"id", "instruction", "response"}], "fields": [...]}
                     -> {"results": [{"id", "ppl", "rew", "nat", "coh", "und"}]}
    POST /v1/embed   {"pairs": [{"id", "instruction", "response"}]}
                     -> {"results": [{"id", "embedding": [...]}], "dim": N}
    GET  /v1/health  -> {"status": "ok", "models": {...}}
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import httpx
import numpy as np

from .corpus import InstructionSample
from .errors import DataError

SCORE_FIELDS = ("ppl", "rew", "nat", "coh", "und")

# The instruction half of the pair sent to the scorer includes the
# optional input after a blank line; the embedded text is the pair glued
# the same way. Both conventions are fixed here so backends agree.
PAIR_SEPARATOR = "\n\n"


def pair_text(sample: InstructionSample) -> str:
    return f"{sample.instruction_text()}{PAIR_SEPARATOR}{sample.response}"


@dataclass(frozen=True)
class SampleScores:
    """Scores for one sample: perplexity, reward, and the three dialogue scores."""

    id: str
    ppl: float
    rew: float
    nat: float
    coh: float
    und: float

    def validate(self) -> "SampleScores":
        if not self.ppl >= 1.0:
            raise DataError(f"sample {self.id!r}: ppl must be >= 1, got {self.ppl}")
        for name in ("nat", "coh", "und"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise DataError(f"sample {self.id!r}: {name} must be in [0, 1], got {value}")
        return self


@dataclass(frozen=True)
class SampleEmbedding:
    id: str
    vector: np.ndarray

    def validate(self) -> "SampleEmbedding":
        norm = float(np.linalg.norm(self.vector))
        if not norm > 0.0:
            raise DataError(f"sample {self.id!r}: embedding norm must be positive")
        return self


# --- file backend -------------------------------------------------------------

def load_scores(path: str | Path) -> dict[str, SampleScores]:
    """Read a score sidecar; duplicate ids and out-of-range values are fatal."""
    path = Path(path)
    out: dict[str, SampleScores] = {}
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: invalid JSON ({exc})") from exc
            try:
                scores = SampleScores(
                    id=str(record["id"]),
                    ppl=float(record["ppl"]),
                    rew=float(record["rew"]),
                    nat=float(record["nat"]),
                    coh=float(record["coh"]),
                    und=float(record["und"]),
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise DataError(f"{path}:{lineno}: bad score record ({exc})") from exc
            if scores.id in out:
                raise DataError(f"{path}:{lineno}: duplicate id {scores.id!r}")
            out[scores.id] = scores.validate()
    return out


def write_scores(
    scores: Iterable[SampleScores] | Mapping[str, SampleScores], path: str | Path
) -> None:
    if isinstance(scores, Mapping):
        scores = scores.values()
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for s in scores:
            record = {"id": s.id, "ppl": s.ppl, "rew": s.rew,
                      "nat": s.nat, "coh": s.coh, "und": s.und}
            fh.write(json.dumps(record, sort_keys=True))
            fh.write("\n")


def load_embeddings(path: str | Path) -> dict[str, SampleEmbedding]:
    """Read an embedding sidecar; all vectors must share one dimension."""
    path = Path(path)
    out: dict[str, SampleEmbedding] = {}
    dim: int | None = None
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
                emb = SampleEmbedding(
                    id=str(record["id"]),
                    vector=np.asarray(record["embedding"], dtype=float),
                )
            except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
                raise DataError(f"{path}:{lineno}: bad embedding record ({exc})") from exc
            if emb.vector.ndim != 1:
                raise DataError(f"{path}:{lineno}: embedding must be a flat vector")
            if dim is None:
                dim = emb.vector.shape[0]
            elif emb.vector.shape[0] != dim:
                raise DataError(
                    f"{path}:{lineno}: dimension mismatch, expected {dim}, "
                    f"got {emb.vector.shape[0]}"
                )
            if emb.id in out:
                raise DataError(f"{path}:{lineno}: duplicate id {emb.id!r}")
            out[emb.id] = emb.validate()
    return out


def write_embeddings(
    embeddings: Iterable[SampleEmbedding] | Mapping[str, SampleEmbedding],
    path: str | Path,
) -> None:
    if isinstance(embeddings, Mapping):
        embeddings = embeddings.values()
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for e in embeddings:
            record = {"id": e.id, "embedding": [float(x) for x in e.vector]}
            fh.write(json.dumps(record, sort_keys=True))
            fh.write("\n")


# --- service backend ------------------------------------------------------------

class ScorerClient:
    """Client for the scorer wire protocol with batching and retries.

    Requests go out in batches of `batch`, up to `parallelism` in flight.
    Transient failures (transport errors, 5xx) retry up to `max_retries`
    times per batch; anything still failing is fatal. Partial coverage is
    never returned silently.
    """

    def __init__(
        self,
        endpoint: str,
        batch: int = 32,
        parallelism: int = 4,
        max_retries: int = 3,
        timeout: float = 30.0,
        retry_wait: float = 0.2,
        transport: httpx.BaseTransport | None = None,
    ):
        if batch < 1:
            raise DataError(f"batch must be >= 1, got {batch}")
        self.endpoint = endpoint.rstrip("/")
        self.batch = batch
        self.parallelism = max(1, parallelism)
        self.max_retries = max_retries
        self.retry_wait = retry_wait
        self._client = httpx.Client(timeout=timeout, transport=transport)

    def close(self) -> None:
        self._client.close()

    def __enter__(self) -> "ScorerClient":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def health(self) -> dict:
        response = self._request("GET", "/v1/health", None)
        return response

    def fetch_scores(
        self,
        samples: Sequence[InstructionSample],
        fields: Sequence[str] = SCORE_FIELDS,
    ) -> dict[str, SampleScores]:
        def parse(result: dict) -> SampleScores:
            return SampleScores(
                id=str(result["id"]),
                ppl=float(result["ppl"]),
                rew=float(result["rew"]),
                nat=float(result["nat"]),
                coh=float(result["coh"]),
                und=float(result["und"]),
            ).validate()

        payload_extra = {"fields": list(fields)}
        results = self._fetch("/v1/score", samples, parse, payload_extra)
        return results

    def fetch_embeddings(
        self, samples: Sequence[InstructionSample]
    ) -> dict[str, SampleEmbedding]:
        dims: set[int] = set()

        def parse(result: dict) -> SampleEmbedding:
            emb = SampleEmbedding(
                id=str(result["id"]),
                vector=np.asarray(result["embedding"], dtype=float),
            ).validate()
            dims.add(emb.vector.shape[0])
            return emb

        results = self._fetch("/v1/embed", samples, parse, {})
        if len(dims) > 1:
            raise DataError(f"embedding dimension mismatch across batches: {sorted(dims)}")
        return results

    # internal ------------------------------------------------------------

    def _fetch(self, route, samples, parse, payload_extra):
        if not samples:
            return {}
        batches = [samples[i:i + self.batch] for i in range(0, len(samples), self.batch)]

        def run(batch):
            payload = {
                "pairs": [
                    {
                        "id": s.id,
                        "instruction": s.instruction_text(),
                        "response": s.response,
                    }
                    for s in batch
                ],
                **payload_extra,
            }
            return self._request("POST", route, payload)

        out = {}
        wanted = {s.id for s in samples}
        with ThreadPoolExecutor(max_workers=self.parallelism) as pool:
            for response in pool.map(run, batches):
                for result in response.get("results", []):
                    parsed = parse(result)
                    if parsed.id not in wanted:
                        raise DataError(f"scorer returned unknown id {parsed.id!r}")
                    if parsed.id in out and parsed != out[parsed.id]:
                        raise DataError(f"scorer returned conflicting values for {parsed.id!r}")
                    out[parsed.id] = parsed
        missing = sorted(wanted - set(out))
        if missing:
            raise DataError(
                f"scorer returned no result for {len(missing)} ids: "
                + ", ".join(missing[:10])
                + (" ..." if len(missing) > 10 else "")
            )
        return out

    def _request(self, method: str, route: str, payload: dict | None) -> dict:
        url = self.endpoint + route
        last_error: Exception | None = None
        for attempt in range(self.max_retries + 1):
            if attempt and self.retry_wait:
                time.sleep(self.retry_wait * attempt)
            try:
                if method == "GET":
                    response = self._client.get(url)
                else:
                    response = self._client.request(method, url, json=payload)
            except httpx.TransportError as exc:
                last_error = exc
                continue
            if response.status_code >= 500:
                last_error = DataError(f"{url}: server error {response.status_code}")
                continue
            if response.status_code != 200:
                raise DataError(f"{url}: protocol error {response.status_code}: {response.text}")
            try:
                return response.json()
            except json.JSONDecodeError as exc:
                raise DataError(f"{url}: response is not JSON ({exc})") from exc
        raise DataError(f"{url}: giving up after {self.max_retries + 1} attempts: {last_error}")
