"""Service configuration: model identifiers, device, batch limit."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

logger = logging.getLogger("scorer_service")

DEFAULT_MODELS = {
    "lm": "char-ngram-v1",
    "reward": "featural-v1",
    "judge": "rubric-v1",
    "embedder": "hashed-ngram-256",
}


class ConfigError(Exception):
    pass


@dataclass(frozen=True)
class ServiceConfig:
    models: dict[str, str] = field(default_factory=lambda: dict(DEFAULT_MODELS))
    device: str = "cpu"
    max_batch: int = 64

    def __post_init__(self):
        if self.max_batch < 1:
            raise ConfigError(f"max_batch must be positive, got {self.max_batch}")
        if self.device != "cpu":
            # the builtin models have no accelerator path; serve anyway
            logger.warning("device %r not available, falling back to cpu", self.device)
            object.__setattr__(self, "device", "cpu")


def load_config(path: str | Path | None) -> ServiceConfig:
    if path is None:
        return ServiceConfig()
    path = Path(path)
    try:
        record = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(record, dict):
        raise ConfigError(f"{path}: expected a JSON object")
    unknown = set(record) - {"models", "device", "max_batch"}
    if unknown:
        raise ConfigError(f"{path}: unknown keys {sorted(unknown)}")
    models = dict(DEFAULT_MODELS)
    models.update(record.get("models", {}))
    try:
        return ServiceConfig(
            models=models,
            device=str(record.get("device", "cpu")),
            max_batch=int(record.get("max_batch", 64)),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: bad value ({exc})") from exc
