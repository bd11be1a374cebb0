"""Scoring service for instruction/response pairs.

Serves perplexity, reward, and dialogue-quality scores plus sentence
embeddings over a small JSON protocol, or exports them as sidecar files.
"""

from .app import create_app
from .config import ServiceConfig, load_config
from .models import ModelSet, build_models

__all__ = ["create_app", "ServiceConfig", "load_config", "ModelSet", "build_models"]
