"""Table-driven backend whose probabilities are set by hand.

Tokens are whitespace-separated words.  A table maps ``(source text, target
prefix words)`` to a partial next-word distribution; mass not assigned in an
entry is spread evenly over the remaining vocabulary, and a missing entry
falls back to the uniform distribution.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .base import BackendError, Seq2SeqBackend

EOS = "</s>"


class OracleBackend(Seq2SeqBackend):
    name = "oracle"
    max_source_tokens = 10**6

    def __init__(self, vocab: Sequence[str], table: Mapping | None = None):
        words = list(dict.fromkeys(vocab))
        if EOS not in words:
            words.append(EOS)
        self.vocab = words
        self._ids = {w: i for i, w in enumerate(words)}
        self.eos_token_id = self._ids[EOS]
        self._source_vocab: dict[str, int] = {}
        self._source_words: list[str] = []
        self.table: dict[tuple[str, tuple[str, ...]], dict[str, float]] = {}
        for (source, prefix), dist in (table or {}).items():
            self.set(source, prefix, dist)

    @classmethod
    def from_file(cls, path: str | Path) -> "OracleBackend":
        """JSON with ``vocab`` and ``entries``: [{source, prefix, dist}, ...]."""
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        backend = cls(data["vocab"])
        for e in data.get("entries", []):
            backend.set(e["source"], e.get("prefix", []), e["dist"])
        for s in data.get("scripts", []):
            backend.script(s["source"], s["text"])
        return backend

    # -- table editing ----------------------------------------------------

    def _norm_source(self, source: str) -> str:
        return " ".join(source.split())

    def set(self, source: str, prefix: Sequence[str] | str, dist: Mapping[str, float]) -> None:
        prefix = tuple(prefix.split()) if isinstance(prefix, str) else tuple(prefix)
        for w, p in dist.items():
            if w not in self._ids:
                raise BackendError(f"word {w!r} not in oracle vocabulary")
            if not 0.0 <= p <= 1.0:
                raise BackendError(f"probability {p} outside [0, 1]")
        if sum(dist.values()) > 1.0 + 1e-12:
            raise BackendError("table entry sums to more than 1")
        self.table[(self._norm_source(source), prefix)] = dict(dist)

    def set_path(self, source: str, target: str, probs: Sequence[float]) -> None:
        """Give each word of `target` the matching probability under its gold prefix.

        Entries already present for a prefix are kept, so paths sharing a
        prefix can be set one after another.
        """
        words = target.split()
        if len(words) != len(probs):
            raise BackendError("one probability per target word expected")
        for c, (w, p) in enumerate(zip(words, probs)):
            key = (self._norm_source(source), tuple(words[:c]))
            self.set(source, words[:c], {**self.table.get(key, {}), w: p})

    def script(self, source: str, text: str) -> None:
        """Make greedy decoding of `source` emit `text` followed by end-of-sequence."""
        words = text.split() + [EOS]
        for c, w in enumerate(words):
            self.set(source, words[:c], {w: 1.0})

    # -- tokenization -----------------------------------------------------

    def num_tokens(self, text: str) -> int:
        return len(text.split())

    def encode_source(self, text: str) -> list[int]:
        ids = []
        for w in text.split():
            if w not in self._source_vocab:
                self._source_vocab[w] = len(self._source_words)
                self._source_words.append(w)
            ids.append(self._source_vocab[w])
        return ids

    def encode_target(self, text: str) -> list[int]:
        try:
            return [self._ids[w] for w in text.split()]
        except KeyError as e:
            raise BackendError(f"word {e.args[0]!r} not in oracle vocabulary") from None

    def decode(self, token_ids: Sequence[int]) -> str:
        return " ".join(self.vocab[i] for i in token_ids if i != self.eos_token_id)

    # -- scoring ----------------------------------------------------------

    def next_token_probs(self, source_tokens: Sequence[int], prefix: Sequence[int]) -> np.ndarray:
        source = " ".join(self._source_words[i] for i in source_tokens)
        key = (source, tuple(self.vocab[i] for i in prefix))
        n = len(self.vocab)
        entry = self.table.get(key)
        if entry is None:
            return np.full(n, 1.0 / n)
        dist = np.zeros(n)
        for w, p in entry.items():
            dist[self._ids[w]] = p
        rest = n - len(entry)
        if rest:
            dist[[i for i, w in enumerate(self.vocab) if w not in entry]] = (1.0 - sum(entry.values())) / rest
        return dist

    def teacher_forced_probs(self, pair):
        probs = super().teacher_forced_probs(pair)
        if any(p <= 0.0 for p in probs):
            raise BackendError("oracle table assigns zero probability to a gold target word")
        return probs
