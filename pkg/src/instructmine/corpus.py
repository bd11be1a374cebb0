"""Corpus ingestion and the normalized sample store.

Each supported source has its own preprocessing rules (vote thresholds,
HTML stripping, turn filtering, clustering). The output of every path is
the same thing: a JSONL store of normalized instruction/response samples
that the rest of the package consumes.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Iterator, Mapping, Sequence

import numpy as np

from .errors import DataError
from .kmeans import kmeans
from .seeding import derive_seed, substream

logger = logging.getLogger(__name__)

SOURCES = ("alpaca", "open_assistant", "stack_exchange", "wikihow", "dolly", "custom")

STORE_FIELDS = ("id", "instruction", "input", "response", "source", "meta")


@dataclass(frozen=True)
class InstructionSample:
    """One normalized instruction/response pair."""

    id: str
    instruction: str
    response: str
    source: str
    input: str | None = None
    meta: Mapping[str, object] = field(default_factory=dict)

    def instruction_text(self) -> str:
        """Instruction with the optional input appended after a blank line."""
        if self.input:
            return f"{self.instruction}\n\n{self.input}"
        return self.instruction


@dataclass
class Corpus:
    """An ordered, immutable-by-convention list of samples."""

    name: str
    samples: list[InstructionSample]

    def __len__(self) -> int:
        return len(self.samples)

    def __iter__(self) -> Iterator[InstructionSample]:
        return iter(self.samples)

    def __getitem__(self, i: int) -> InstructionSample:
        return self.samples[i]

    def ids(self) -> list[str]:
        return [s.id for s in self.samples]

    def by_id(self) -> dict[str, InstructionSample]:
        return {s.id: s for s in self.samples}

    def subset(self, indices: Sequence[int], name: str | None = None) -> "Corpus":
        return Corpus(name or self.name, [self.samples[i] for i in indices])


def _validate(samples: Iterable[InstructionSample]) -> list[InstructionSample]:
    seen: set[str] = set()
    out = []
    for s in samples:
        if s.id in seen:
            raise DataError(f"duplicate sample id {s.id!r}")
        if not s.instruction or not s.response:
            raise DataError(f"sample {s.id!r} has an empty instruction or response")
        if s.source not in SOURCES:
            raise DataError(f"sample {s.id!r} has unknown source {s.source!r}")
        seen.add(s.id)
        out.append(s)
    return out


def write_store(corpus: Corpus, path: str | Path) -> None:
    """Write the normalized store: one JSON object per line, LF, UTF-8."""
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for s in corpus.samples:
            record = {
                "id": s.id,
                "instruction": s.instruction,
                "input": s.input,
                "response": s.response,
                "source": s.source,
                "meta": dict(s.meta),
            }
            fh.write(json.dumps(record, ensure_ascii=False, sort_keys=True))
            fh.write("\n")


def read_store(path: str | Path, name: str | None = None) -> Corpus:
    """Read a normalized store written by `write_store`."""
    path = Path(path)
    samples = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: invalid JSON ({exc})") from exc
            if set(record) != set(STORE_FIELDS):
                raise DataError(
                    f"{path}:{lineno}: store record fields must be exactly "
                    f"{sorted(STORE_FIELDS)}, got {sorted(record)}"
                )
            samples.append(
                InstructionSample(
                    id=str(record["id"]),
                    instruction=record["instruction"],
                    input=record["input"],
                    response=record["response"],
                    source=record["source"],
                    meta=record["meta"] or {},
                )
            )
    return Corpus(name or path.stem, _validate(samples))


# --- raw record reading -----------------------------------------------------

def _iter_records(path: Path) -> Iterator[tuple[int, dict]]:
    """Yield (position, record) from a JSON array file or a JSONL file."""
    with path.open("r", encoding="utf-8") as fh:
        head = fh.read(1)
        while head and head.isspace():
            head = fh.read(1)
        fh.seek(0)
        if head == "[":
            try:
                records = json.load(fh)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}: invalid JSON ({exc})") from exc
            if not isinstance(records, list):
                raise DataError(f"{path}: expected a JSON array of records")
            for i, record in enumerate(records):
                yield i, record
        else:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    yield lineno, json.loads(line)
                except json.JSONDecodeError:
                    logger.warning("%s:%d: skipping malformed JSON line", path, lineno)


def _require(record: dict, keys: Sequence[str], where: str) -> bool:
    missing = [k for k in keys if k not in record]
    if missing:
        logger.warning("%s: skipping record missing %s", where, ", ".join(missing))
        return False
    return True


# --- HTML stripping ----------------------------------------------------------

# Conservative tag list: only these are ever removed, so exotic uses of "<"
# in code samples survive untouched.
_TAG_NAMES = (
    "a|abbr|b|blockquote|br|code|dd|div|dl|dt|em|h[1-6]|hr|i|img|kbd|li|ol|p|pre"
    "|s|small|span|strike|strong|sub|sup|table|tbody|td|th|thead|tr|tt|u|ul"
)
_TAG_RE = re.compile(rf"</?(?:{_TAG_NAMES})(?:\s[^>]*?)?/?>", re.IGNORECASE | re.DOTALL)

_ENTITIES = (("&lt;", "<"), ("&gt;", ">"), ("&quot;", '"'),
             ("&#39;", "'"), ("&apos;", "'"), ("&amp;", "&"))


def strip_html(text: str) -> str:
    """Remove known HTML tags and decode the standard character entities.

    The ampersand entity is decoded last so that text like "&amp;lt;"
    cannot turn into a tag after decoding.
    """
    text = _TAG_RE.sub("", text)
    for entity, char in _ENTITIES:
        text = text.replace(entity, char)
    return text.strip()


# --- language heuristic -------------------------------------------------------

_STOPWORDS = frozenset(
    "the a an and is are was were to of in it you that this for on with as be "
    "have has not but they at or what how do does can will your".split()
)
_WORD_RE = re.compile(r"[a-z']+")


def looks_english(text: str) -> bool:
    """Default English detector: character classes plus stopword hits.

    A text passes when at least 90% of its letters are ASCII and at least
    two distinct common English function words appear. Deliberately crude;
    ingest_open_assistant accepts any replacement predicate.
    """
    letters = [ch for ch in text if ch.isalpha()]
    if not letters:
        return False
    ascii_letters = sum(1 for ch in letters if ch.isascii())
    if ascii_letters / len(letters) < 0.9:
        return False
    words = set(_WORD_RE.findall(text.lower()))
    return len(words & _STOPWORDS) >= 2


# --- per-source ingestion -----------------------------------------------------

def ingest_alpaca(path: str | Path, cap: int = 2000, seed: int = 0) -> Corpus:
    """Load instruction/input/output records and keep a seeded random `cap`."""
    path = Path(path)
    samples = []
    for pos, record in _iter_records(path):
        where = f"{path}:{pos}"
        if not isinstance(record, dict) or not _require(record, ("instruction", "output"), where):
            continue
        instruction = str(record["instruction"]).strip()
        response = str(record["output"]).strip()
        if not instruction or not response:
            logger.warning("%s: skipping record with empty instruction or output", where)
            continue
        inp = str(record.get("input") or "").strip() or None
        samples.append(
            InstructionSample(
                id=f"alpaca-{pos:05d}",
                instruction=instruction,
                input=inp,
                response=response,
                source="alpaca",
            )
        )
    if len(samples) > cap:
        rng = substream(seed, "alpaca:cap")
        keep = np.sort(rng.choice(len(samples), size=cap, replace=False))
        samples = [samples[i] for i in keep]
    return Corpus("alpaca", _validate(samples))


_HUMAN = "### Human: "
_ASSISTANT = "### Assistant: "


def ingest_open_assistant(
    path: str | Path,
    detector: Callable[[str], bool] = looks_english,
) -> Corpus:
    """Keep single-turn dialogues that the language detector accepts.

    A record qualifies when its text holds exactly one Human and one
    Assistant marker, in that order. Everything else is dropped and
    counted, never fatal.
    """
    path = Path(path)
    samples = []
    dropped = 0
    for pos, record in _iter_records(path):
        if not isinstance(record, dict) or "text" not in record:
            dropped += 1
            continue
        text = str(record["text"])
        if text.count(_HUMAN) != 1 or text.count(_ASSISTANT) != 1:
            dropped += 1
            continue
        h = text.index(_HUMAN)
        a = text.index(_ASSISTANT)
        if a < h:
            dropped += 1
            continue
        instruction = text[h + len(_HUMAN):a].strip()
        response = text[a + len(_ASSISTANT):].strip()
        if not instruction or not response:
            dropped += 1
            continue
        if not detector(f"{instruction} {response}"):
            dropped += 1
            continue
        samples.append(
            InstructionSample(
                id=f"oa-{pos:05d}",
                instruction=instruction,
                response=response,
                source="open_assistant",
                meta={"language": "en"},
            )
        )
    if dropped:
        logger.info("open_assistant: dropped %d records", dropped)
    return Corpus("open_assistant", _validate(samples))


MIN_VOTES = 6
MIN_ANSWER_CHARS = 200
MAX_ANSWER_CHARS = 4000
MAX_PER_EXCHANGE = 20


def ingest_stack_exchange(path: str | Path) -> Corpus:
    """Filter answers by votes and length, capped per exchange.

    Answers need at least MIN_VOTES votes and, after HTML stripping, a
    character count inside [MIN_ANSWER_CHARS, MAX_ANSWER_CHARS]. Each
    exchange contributes at most MAX_PER_EXCHANGE answers, highest voted
    first.
    """
    path = Path(path)
    qualifying: list[tuple[int, int, InstructionSample]] = []
    dropped = 0
    for pos, record in _iter_records(path):
        where = f"{path}:{pos}"
        if not isinstance(record, dict):
            dropped += 1
            continue
        if "votes" not in record or record["votes"] is None:
            logger.warning("%s: skipping record without a vote count", where)
            dropped += 1
            continue
        if not _require(record, ("question", "answer", "exchange"), where):
            dropped += 1
            continue
        try:
            votes = int(record["votes"])
        except (TypeError, ValueError):
            logger.warning("%s: skipping record with non-integer votes", where)
            dropped += 1
            continue
        if votes < MIN_VOTES:
            continue
        answer = strip_html(str(record["answer"]))
        if not (MIN_ANSWER_CHARS <= len(answer) <= MAX_ANSWER_CHARS):
            continue
        question = str(record["question"]).strip()
        if not question:
            dropped += 1
            continue
        sample = InstructionSample(
            id=f"se-{pos:05d}",
            instruction=question,
            response=answer,
            source="stack_exchange",
            meta={"votes": votes, "exchange": str(record["exchange"])},
        )
        qualifying.append((pos, votes, sample))

    # Cap per exchange, preferring higher votes; ties keep input order.
    by_exchange: dict[str, list[tuple[int, int, InstructionSample]]] = {}
    for pos, votes, sample in qualifying:
        by_exchange.setdefault(sample.meta["exchange"], []).append((pos, votes, sample))
    keep_positions: set[int] = set()
    for members in by_exchange.values():
        members.sort(key=lambda t: (-t[1], t[0]))
        keep_positions.update(pos for pos, _, _ in members[:MAX_PER_EXCHANGE])

    samples = [s for pos, _, s in qualifying if pos in keep_positions]
    if dropped:
        logger.info("stack_exchange: dropped %d malformed records", dropped)
    return Corpus("stack_exchange", _validate(samples))


def ingest_wikihow(
    path: str | Path,
    embeddings: Mapping[str, np.ndarray],
    clusters: int = 19,
    target: int = 2000,
    seed: int = 0,
) -> Corpus:
    """Cluster titles, then sample cluster-uniformly until `target` picks.

    Drawing a cluster uniformly at random and then a member uniformly at
    random flattens topical imbalance: small clusters are as likely to
    contribute as large ones.
    """
    path = Path(path)
    pool = []
    for pos, record in _iter_records(path):
        where = f"{path}:{pos}"
        if not isinstance(record, dict) or not _require(record, ("title", "body"), where):
            continue
        title = str(record["title"]).strip()
        body = str(record["body"]).strip()
        if not title or not body:
            logger.warning("%s: skipping record with empty title or body", where)
            continue
        sid = str(record.get("id") or f"wikihow-{pos:05d}")
        pool.append(InstructionSample(id=sid, instruction=title, response=body, source="wikihow"))

    missing = [s.id for s in pool if s.id not in embeddings]
    if missing:
        raise DataError(
            f"missing embeddings for {len(missing)} titles: {', '.join(missing[:10])}"
            + (" ..." if len(missing) > 10 else "")
        )
    if target >= len(pool):
        if target > len(pool):
            logger.warning(
                "wikihow: target %d exceeds pool of %d, returning everything", target, len(pool)
            )
        return Corpus("wikihow", _validate(pool))

    matrix = np.asarray([embeddings[s.id] for s in pool], dtype=float)
    labels, _ = kmeans(matrix, k=clusters, seed=derive_seed(seed, "wikihow:kmeans"))
    members: list[list[int]] = [[] for _ in range(clusters)]
    for i, lab in enumerate(labels):
        members[int(lab)].append(i)

    rng = substream(seed, "wikihow:draw")
    selected: set[int] = set()
    while len(selected) < target:
        cluster = members[int(rng.integers(clusters))]
        if not cluster:
            continue
        selected.add(cluster[int(rng.integers(len(cluster)))])
    chosen = sorted(selected)
    return Corpus("wikihow", _validate([pool[i] for i in chosen]))


def ingest_dolly(path: str | Path) -> Corpus:
    """Load instruction/context/response records; context becomes input."""
    path = Path(path)
    samples = []
    dropped = 0
    for pos, record in _iter_records(path):
        where = f"{path}:{pos}"
        if not isinstance(record, dict) or not _require(record, ("instruction", "response"), where):
            dropped += 1
            continue
        instruction = str(record["instruction"]).strip()
        response = str(record["response"]).strip()
        if not instruction or not response:
            logger.warning("%s: skipping record with empty instruction or response", where)
            dropped += 1
            continue
        context = str(record.get("context") or "").strip() or None
        meta = {}
        if record.get("category"):
            meta["category"] = str(record["category"])
        samples.append(
            InstructionSample(
                id=f"dolly-{pos:05d}",
                instruction=instruction,
                input=context,
                response=response,
                source="dolly",
                meta=meta,
            )
        )
    if dropped:
        logger.info("dolly: dropped %d records", dropped)
    return Corpus("dolly", _validate(samples))
