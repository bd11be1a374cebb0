"""The HTTP surface.

Three routes. POST /v1/score takes {"pairs": [{"id", "instruction",
"response"}, ...], "fields": [...]} and answers {"results": [{"id",
<field>: value, ...}, ...]}, ids exactly echoing the request. POST
/v1/embed takes the same pairs and answers {"results": [{"id",
"embedding": [...]}], "dim": N}. GET /v1/health reports status and the
loaded model identifiers. Batches above the configured limit are
refused with 413.
"""

from __future__ import annotations

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from .config import ServiceConfig
from .models import ModelSet, build_models

SCORE_FIELDS = ("ppl", "rew", "nat", "coh", "und")


class Pair(BaseModel):
    id: str
    instruction: str = ""
    response: str


class ScoreRequest(BaseModel):
    pairs: list[Pair]
    fields: list[str] | None = None


class EmbedRequest(BaseModel):
    pairs: list[Pair]


class HealthResponse(BaseModel):
    status: str
    models: dict[str, str]


def create_app(config: ServiceConfig | None = None) -> FastAPI:
    """Build the application, loading models up front.

    An unresolvable model identifier raises here, before any socket is
    bound: a service that cannot score must refuse to start.
    """
    config = config or ServiceConfig()
    models: ModelSet = build_models(config.models)
    app = FastAPI(title="scorer-service", docs_url=None, redoc_url=None)
    app.state.config = config
    app.state.models = models

    def check_batch(n: int) -> None:
        if n > config.max_batch:
            raise HTTPException(
                status_code=413,
                detail=f"batch of {n} exceeds the configured maximum {config.max_batch}",
            )

    @app.post("/v1/score")
    def score(request: ScoreRequest) -> dict:
        check_batch(len(request.pairs))
        wanted = tuple(request.fields) if request.fields is not None else SCORE_FIELDS
        unknown = [f for f in wanted if f not in SCORE_FIELDS]
        if unknown:
            raise HTTPException(
                status_code=400,
                detail=f"unknown score fields {unknown}; available: {list(SCORE_FIELDS)}",
            )
        results = []
        for pair in request.pairs:
            values = models.score_pair(pair.instruction, pair.response)
            results.append({"id": pair.id, **{f: values[f] for f in wanted}})
        return {"results": results}

    @app.post("/v1/embed")
    def embed(request: EmbedRequest) -> dict:
        check_batch(len(request.pairs))
        results = [
            {
                "id": pair.id,
                "embedding": [float(x) for x in models.embedder.embed(pair.instruction, pair.response)],
            }
            for pair in request.pairs
        ]
        return {"results": results, "dim": models.embedder.dim}

    @app.get("/v1/health")
    def health() -> HealthResponse:
        return HealthResponse(status="ok", models=config.models)

    return app
