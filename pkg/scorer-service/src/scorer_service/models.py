"""Self-contained scoring models.

Every model here is deterministic and cheap: weights are fixed at load
time from built-in reference data, there is no sampling, and everything
runs on the CPU. They stand in for real checkpoints during development
and CI; the registry maps config identifiers to builders, so swapping in
heavyweight models later is a config change, not a code change.
"""

from __future__ import annotations

import hashlib
import math
import re
from collections import Counter
from dataclasses import dataclass

import numpy as np

# The standard instruction-following prompt format. Perplexity is
# conditioned on this rendering and measured over the response only.
PROMPT_TEMPLATE = (
    "Below is an instruction that describes a task. "
    "Write a response that appropriately completes the request.\n\n"
    "### Instruction:\n{instruction}\n\n### Response:\n"
)

_WORD = re.compile(r"[a-z0-9']+")

_STOPWORDS = frozenset(
    "a an and are as at be but by for from has have if in is it of on or "
    "that the this to was which with you your".split()
)


def words(text: str) -> list[str]:
    return _WORD.findall(text.casefold())


# --- language model ----------------------------------------------------------

# Training text for the character model: plain instructional prose. The
# counts derived from it are the model's entire state.
_REFERENCE_TEXT = """
Begin by reading the whole request carefully and note what the person
actually wants. A good answer states the main point in the first
sentence, then explains the reasoning in short plain steps. Keep each
step concrete: name the thing you are changing, say why the change
helps, and show the result. When a question has several parts, answer
the parts in the order they were asked so nothing gets lost. Prefer
common words over rare ones, and prefer short sentences over long ones,
because the reader should never have to parse a sentence twice. If you
are unsure about a detail, say so directly instead of guessing. Examples
carry more weight than abstract claims, so include one when it fits.
Close by checking the answer against the request one more time: does it
cover everything that was asked, and nothing that was not? Clear writing
is mostly rewriting, and the same holds for clear answers. The best
response is the one the reader can act on without asking anything else.
"""

OOV = "~"


class CharNgramLM:
    """Character n-gram model with additive smoothing and a prompt cache.

    Text is casefolded and characters outside the training alphabet map
    to one out-of-vocabulary bucket, so every string gets a finite,
    nonzero probability and perplexity is always at least 1. Conditioning
    on the instruction is real, not just positional: the rendered prompt
    feeds a per-request cache model that is mixed with the base counts,
    so responses reusing the instruction's wording score as more likely.
    """

    def __init__(
        self,
        reference: str = _REFERENCE_TEXT,
        order: int = 4,
        smoothing: float = 0.25,
        cache_weight: float = 0.3,
    ):
        if order < 2:
            raise ValueError(f"order must be at least 2, got {order}")
        if not 0.0 <= cache_weight < 1.0:
            raise ValueError(f"cache_weight must be in [0, 1), got {cache_weight}")
        self.order = order
        self.smoothing = smoothing
        self.cache_weight = cache_weight
        text = self._normalize(reference, alphabet=None)
        self.alphabet = sorted(set(text) | {OOV})
        self._index = {c: i for i, c in enumerate(self.alphabet)}
        self.counts, self.totals = self._ngram_counts(text)

    def _ngram_counts(self, text: str) -> tuple[dict[str, Counter], Counter]:
        counts: dict[str, Counter] = {}
        totals: Counter = Counter()
        padded = " " * (self.order - 1) + text
        for i in range(len(text)):
            context = padded[i:i + self.order - 1]
            char = padded[i + self.order - 1]
            counts.setdefault(context, Counter())[char] += 1
            totals[context] += 1
        return counts, totals

    def _normalize(self, text: str, alphabet: set[str] | None) -> str:
        folded = " ".join(text.casefold().split())
        if alphabet is None:
            return folded
        return "".join(c if c in alphabet else OOV for c in folded)

    @staticmethod
    def _count_prob(counts, totals, context, char, k, v) -> float:
        seen = counts.get(context)
        count = seen[char] if seen else 0
        return (count + k) / (totals[context] + k * v)

    def _prob(self, cache, context: str, char: str) -> float:
        v = len(self.alphabet)
        base = self._count_prob(self.counts, self.totals, context, char, self.smoothing, v)
        if cache is None or self.cache_weight == 0.0:
            return base
        counts, totals, unigrams, length = cache
        ngram = self._count_prob(counts, totals, context, char, 0.05, v)
        unigram = (unigrams[char] + 0.05) / (length + 0.05 * v)
        cached = 0.7 * ngram + 0.3 * unigram
        return (1.0 - self.cache_weight) * base + self.cache_weight * cached

    def _prompt_cache(self, context: str):
        # The n-gram cache rewards responses that reuse the prompt's
        # phrasing; the unigram cache keeps the conditioning effective
        # even when prompt and response share no n-gram contexts.
        if not context:
            return None
        counts, totals = self._ngram_counts(context)
        return counts, totals, Counter(context), len(context)

    def mean_nll(self, text: str, context: str = "") -> float:
        """Mean negative log-likelihood per character of `text`."""
        allowed = set(self.alphabet)
        text = self._normalize(text, allowed)
        if not text:
            return 0.0
        context = self._normalize(context, allowed)
        cache = self._prompt_cache(context)
        history = " " * (self.order - 1) + context
        total = 0.0
        for char in text:
            total -= math.log(self._prob(cache, history[-(self.order - 1):], char))
            history += char
        return total / len(text)

    def perplexity(self, instruction: str, response: str) -> float:
        prompt = PROMPT_TEMPLATE.format(instruction=instruction)
        return math.exp(self.mean_nll(response, context=prompt))

    def greedy_continuation(self, instruction: str, length: int = 120) -> str:
        """The argmax continuation after the rendered prompt.

        Uses the same blended distribution as scoring. Ties break by
        alphabet order, and the out-of-vocabulary bucket is never
        emitted, so the output is reproducible printable text.
        """
        allowed = set(self.alphabet)
        context = self._normalize(PROMPT_TEMPLATE.format(instruction=instruction), allowed)
        cache = self._prompt_cache(context)
        history = " " * (self.order - 1) + context
        out = []
        for _ in range(length):
            window = history[-(self.order - 1):]
            best = max(
                (c for c in self.alphabet if c != OOV),
                key=lambda c: (self._prob(cache, window, c), -self._index[c]),
            )
            out.append(best)
            history += best
        return "".join(out)


# --- embeddings --------------------------------------------------------------

class HashedNgramEmbedder:
    """Signed hashing of character n-grams into a fixed-width vector.

    The digest of each 3..5-gram picks a coordinate and a sign; the
    accumulated vector is L2-normalized. Hashing uses blake2b, not the
    interpreter's randomized hash, so vectors are stable across runs.
    """

    def __init__(self, dim: int = 256):
        if dim < 8:
            raise ValueError(f"dim must be at least 8, got {dim}")
        self.dim = dim

    def embed(self, instruction: str, response: str) -> np.ndarray:
        text = " ".join(f"{instruction}\n\n{response}".casefold().split())
        vector = np.zeros(self.dim)
        raw = text.encode("utf-8")
        for width in (3, 4, 5):
            for i in range(max(0, len(raw) - width + 1)):
                digest = hashlib.blake2b(raw[i:i + width], digest_size=8).digest()
                value = int.from_bytes(digest, "big")
                sign = 1.0 if value & 1 else -1.0
                vector[(value >> 1) % self.dim] += sign
        norm = float(np.linalg.norm(vector))
        if norm == 0.0:
            vector[0] = 1.0
            norm = 1.0
        return vector / norm


# --- reward and quality judges ------------------------------------------------

def _sigmoid(z: float) -> float:
    return 1.0 / (1.0 + math.exp(-z))


def _type_token_ratio(tokens: list[str]) -> float:
    return len(set(tokens)) / len(tokens) if tokens else 0.0


def _instruction_coverage(instruction: str, response: str) -> float:
    asked = set(words(instruction)) - _STOPWORDS
    if not asked:
        return 0.5
    answered = set(words(response))
    return len(asked & answered) / len(asked)


def _longest_run(tokens: list[str]) -> int:
    best, run = 0, 0
    previous = None
    for t in tokens:
        run = run + 1 if t == previous else 1
        previous = t
        best = max(best, run)
    return best


class FeaturalReward:
    """Preference score from surface features of the pair.

    Rewards responses that sit in a sensible length band, use a varied
    vocabulary, engage with the instruction's content words, and avoid
    verbatim repetition. Squashed to roughly [-2.2, 2.2].
    """

    def score(self, instruction: str, response: str) -> float:
        tokens = words(response)
        if not tokens:
            return -2.0
        length_fit = math.exp(-0.5 * math.log(max(len(response), 1) / 500.0) ** 2)
        ttr = _type_token_ratio(tokens)
        coverage = _instruction_coverage(instruction, response)
        repetition = _longest_run(tokens) / len(tokens)
        z = 1.1 * length_fit + 0.9 * ttr + 0.8 * coverage - 1.4 * repetition - 0.6
        return 2.2 * math.tanh(z)


class RubricJudge:
    """Dialogue-quality scores from text statistics, each strictly in (0, 1)."""

    def naturalness(self, response: str) -> float:
        tokens = words(response)
        if not tokens:
            return _sigmoid(-2.0)
        mean_len = sum(map(len, tokens)) / len(tokens)
        stopword_rate = sum(t in _STOPWORDS for t in tokens) / len(tokens)
        # natural prose has mid-length words and a healthy function-word share
        z = 1.5 - 0.45 * abs(mean_len - 4.6) - 3.0 * abs(stopword_rate - 0.42)
        return _sigmoid(z)

    def coherence(self, instruction: str, response: str) -> float:
        tokens = words(response)
        if not tokens:
            return _sigmoid(-2.0)
        coverage = _instruction_coverage(instruction, response)
        ttr = _type_token_ratio(tokens)
        z = 2.2 * coverage + 1.1 * ttr - 0.4
        return _sigmoid(z)

    def understandability(self, response: str) -> float:
        tokens = words(response)
        if not tokens:
            return _sigmoid(-2.0)
        mean_len = sum(map(len, tokens)) / len(tokens)
        sentences = max(1, len(re.findall(r"[.!?]+", response)))
        words_per_sentence = len(tokens) / sentences
        z = 2.4 - 0.35 * max(0.0, mean_len - 5.0) - 0.05 * max(0.0, words_per_sentence - 22.0)
        return _sigmoid(z)


# --- registry ----------------------------------------------------------------

@dataclass(frozen=True)
class ModelSet:
    lm: CharNgramLM
    reward: FeaturalReward
    judge: RubricJudge
    embedder: HashedNgramEmbedder

    def score_pair(self, instruction: str, response: str) -> dict[str, float]:
        return {
            "ppl": self.lm.perplexity(instruction, response),
            "rew": self.reward.score(instruction, response),
            "nat": self.judge.naturalness(response),
            "coh": self.judge.coherence(instruction, response),
            "und": self.judge.understandability(response),
        }


BUILDERS = {
    "lm": {"char-ngram-v1": CharNgramLM},
    "reward": {"featural-v1": FeaturalReward},
    "judge": {"rubric-v1": RubricJudge},
    "embedder": {
        "hashed-ngram-256": lambda: HashedNgramEmbedder(dim=256),
        "hashed-ngram-384": lambda: HashedNgramEmbedder(dim=384),
    },
}


class ModelLoadError(Exception):
    """A configured model identifier cannot be resolved."""


def build_models(identifiers: dict[str, str]) -> ModelSet:
    built = {}
    for role in ("lm", "reward", "judge", "embedder"):
        wanted = identifiers.get(role)
        available = BUILDERS[role]
        if wanted not in available:
            raise ModelLoadError(
                f"unknown {role} model {wanted!r}; available: {sorted(available)}"
            )
        built[role] = available[wanted]()
    return ModelSet(**built)
