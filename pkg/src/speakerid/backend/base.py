from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Sequence

import numpy as np


class BackendError(RuntimeError):
    pass


class CapabilityError(BackendError):
    """The backend does not offer the requested operation."""


@dataclass(frozen=True)
class SequencePair:
    source_tokens: tuple[int, ...]
    target_tokens: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "source_tokens", tuple(self.source_tokens))
        object.__setattr__(self, "target_tokens", tuple(self.target_tokens))
        if not self.target_tokens:
            raise ValueError("target sequence is empty")


class Seq2SeqBackend(ABC):
    """A sequence-to-sequence model that can score, generate and (maybe) learn.

    Subclasses own tokenization.  Everything above this layer deals in text and
    in the token counts reported by `num_tokens`.
    """

    mask_token: str = "<mask>"
    num_special_tokens: int = 2
    max_source_tokens: int = 1024
    eos_token_id: int = 0
    trainable: bool = False
    name: str = "backend"

    # -- tokenization ---------------------------------------------------

    @abstractmethod
    def num_tokens(self, text: str) -> int:
        """Token count of `text` without sequence markers."""

    @abstractmethod
    def encode_source(self, text: str) -> list[int]: ...

    @abstractmethod
    def encode_target(self, text: str) -> list[int]: ...

    @abstractmethod
    def decode(self, token_ids: Sequence[int]) -> str: ...

    def pair(self, source_text: str, target_text: str) -> SequencePair:
        source = self.encode_source(source_text)
        if len(source) > self.max_source_tokens:
            raise BackendError(f"source has {len(source)} tokens, model maximum is {self.max_source_tokens}")
        return SequencePair(tuple(source), tuple(self.encode_target(target_text)))

    # -- scoring and generation -------------------------------------------

    @abstractmethod
    def next_token_probs(self, source_tokens: Sequence[int], prefix: Sequence[int]) -> np.ndarray:
        """Normalized distribution over the vocabulary for the next target token."""

    def teacher_forced_probs(self, pair: SequencePair) -> list[float]:
        """p(t_c | t_<c, X) for every gold target token."""
        out = []
        for c, tok in enumerate(pair.target_tokens):
            dist = self.next_token_probs(pair.source_tokens, pair.target_tokens[:c])
            out.append(float(dist[tok]))
        return out

    def teacher_forced_probs_many(self, source_tokens: Sequence[int],
                                  targets: Sequence[Sequence[int]]) -> list[list[float]]:
        return [self.teacher_forced_probs(SequencePair(tuple(source_tokens), tuple(t))) for t in targets]

    def free_generate(self, source_tokens: Sequence[int], max_length: int,
                      strategy: str = "greedy", beam_width: int = 1) -> list[int]:
        """Decode without constraints until end-of-sequence or `max_length` tokens.

        The returned ids include the end-of-sequence token when one was produced.
        """
        if max_length < 1:
            raise ValueError("max_length must be >= 1")
        if strategy == "greedy":
            beam_width = 1
        elif strategy != "beam":
            raise ValueError(f"unknown decoding strategy {strategy!r}")
        if beam_width < 1:
            raise ValueError("beam_width must be >= 1")
        beams: list[tuple[float, list[int]]] = [(0.0, [])]
        finished: list[tuple[float, list[int]]] = []
        for _ in range(max_length):
            candidates = []
            for logp, seq in beams:
                dist = self.next_token_probs(source_tokens, seq)
                # ties broken towards the lower token id
                for tok in sorted(range(len(dist)), key=lambda i: (-dist[i], i))[:beam_width]:
                    if dist[tok] > 0.0:
                        candidates.append((logp + math.log(float(dist[tok])), seq + [tok]))
            candidates.sort(key=lambda c: -c[0])
            beams = []
            for logp, seq in candidates:
                if seq[-1] == self.eos_token_id:
                    finished.append((logp, seq))
                else:
                    beams.append((logp, seq))
                if len(beams) == beam_width:
                    break
            # log-probabilities only fall, so a finished hypothesis ahead of every live one wins
            if not beams or (finished and max(f[0] for f in finished) >= beams[0][0]):
                break
        return max(finished + beams, key=lambda c: c[0])[1]

    # -- optional capabilities --------------------------------------------

    def fit_step(self, batch: Sequence[SequencePair]) -> float:
        raise CapabilityError("backend not trainable")

    def target_token_embeddings(self, pair: SequencePair) -> np.ndarray:
        raise CapabilityError("embeddings unsupported")

    def target_offsets(self, text: str) -> list[tuple[int, int]]:
        """Character span of each target token in `text`; markers get (0, 0)."""
        raise CapabilityError("token offsets unsupported")

    def hyperparameters(self) -> dict:
        return {}

    def save(self, directory) -> None:
        raise CapabilityError(f"{self.name} backend cannot be saved")
