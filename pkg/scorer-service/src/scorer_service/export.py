"""Offline sidecar export.

Reads a normalized sample store (JSONL, one object per line with id,
instruction, optional input, response) and writes the score and
embedding sidecars that the toolkit's file backend loads. The service
and the exporter share the same models, so scores match what the HTTP
routes would return for the same pairs.
"""

from __future__ import annotations

import json
from pathlib import Path

from .models import ModelSet


class ExportError(Exception):
    pass


def read_pairs(path: str | Path) -> list[dict]:
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise ExportError(f"cannot read corpus {path}: {exc}") from exc
    pairs = []
    for lineno, line in enumerate(lines, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            record = json.loads(line)
            instruction = str(record["instruction"])
            if record.get("input"):
                instruction = f"{instruction}\n\n{record['input']}"
            pairs.append(
                {
                    "id": str(record["id"]),
                    "instruction": instruction,
                    "response": str(record["response"]),
                }
            )
        except (KeyError, TypeError, json.JSONDecodeError) as exc:
            raise ExportError(f"{path}:{lineno}: bad store record ({exc})") from exc
    return pairs


def export_sidecars(
    models: ModelSet,
    corpus_path: str | Path,
    scores_path: str | Path,
    embeddings_path: str | Path,
) -> int:
    pairs = read_pairs(corpus_path)
    with Path(scores_path).open("w", encoding="utf-8", newline="\n") as scores_fh, \
            Path(embeddings_path).open("w", encoding="utf-8", newline="\n") as emb_fh:
        for pair in pairs:
            record = {"id": pair["id"], **models.score_pair(pair["instruction"], pair["response"])}
            scores_fh.write(json.dumps(record, sort_keys=True) + "\n")
            vector = models.embedder.embed(pair["instruction"], pair["response"])
            emb_fh.write(
                json.dumps({"id": pair["id"], "embedding": [float(x) for x in vector]},
                           sort_keys=True) + "\n"
            )
    return len(pairs)
