"""Speaker prediction: candidate ranking by generation probability, and free generation.

Ranking scores every roster candidate by the mean per-step probability of its
rendered target (prefix tokens included) and picks the best one.  Free
generation decodes a target, cuts the name out of it and resolves the name
against the roster.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Callable, Collection, Iterable, Sequence

from .backend import BackendError, Seq2SeqBackend
from .corpus import CharacterEntry, CharacterRoster, NovelCorpus, QuotationInstance, normalize_name
from .templates import PromptTemplate, render_source, render_target


class ScoreSpace(str, Enum):
    PROB = "prob"
    LOGPROB = "logprob"


class InferenceError(ValueError):
    pass


@dataclass(frozen=True)
class CandidateScore:
    character_id: str
    target_text: str
    score: float
    step_probs: tuple[float, ...]


@dataclass(frozen=True)
class RankedPrediction:
    novel_id: str
    quote_id: str
    ranked: tuple[CandidateScore, ...]

    @property
    def chosen(self) -> str:
        return self.ranked[0].character_id

    @property
    def key(self) -> tuple[str, str]:
        return (self.novel_id, self.quote_id)


@dataclass(frozen=True)
class Resolution:
    status: str  # resolved | ambiguous | unresolved
    character_ids: tuple[str, ...] = ()

    @property
    def resolved_id(self) -> str | None:
        return self.character_ids[0] if self.status == "resolved" else None


UNRESOLVED = Resolution("unresolved")


@dataclass(frozen=True)
class ParsedPrediction:
    novel_id: str
    quote_id: str
    raw_output: str
    parsed_name: str
    resolution: Resolution

    @property
    def chosen(self) -> str | None:
        return self.resolution.resolved_id

    @property
    def key(self) -> tuple[str, str]:
        return (self.novel_id, self.quote_id)


# -- candidate scoring --------------------------------------------------------


def mean_score(step_probs: Sequence[float], space: ScoreSpace | str = ScoreSpace.PROB) -> float:
    """Length-normalized target score.

    ``prob``: arithmetic mean of the step probabilities.  ``logprob``: the
    geometric mean, i.e. exp of the mean log-probability, so both spaces
    report values in (0, 1].
    """
    if not step_probs:
        raise InferenceError("cannot score an empty target")
    if ScoreSpace(space) is ScoreSpace.PROB:
        return math.fsum(step_probs) / len(step_probs)
    return math.exp(math.fsum(math.log(p) for p in step_probs) / len(step_probs))


def _target_for(name: str, template: PromptTemplate) -> str:
    return " ".join(p for p in (template.target_prefix, name) if p)


def score_candidates(source_text: str, candidates: Sequence[CharacterEntry], template: PromptTemplate,
                     backend: Seq2SeqBackend, *, score_space: ScoreSpace | str = ScoreSpace.PROB,
                     score_aliases: str | None = None, quote_id: str | None = None) -> list[CandidateScore]:
    """Score each candidate independently against one rendered source.

    Targets carry no auxiliary clause.  With ``score_aliases="max"`` every
    alias is scored too and the best name counts for the candidate.
    """
    if score_aliases not in (None, "max"):
        raise ValueError(f"score_aliases must be None or 'max', got {score_aliases!r}")
    try:
        source = backend.encode_source(source_text)
        jobs: list[tuple[int, str]] = []
        for i, c in enumerate(candidates):
            jobs.append((i, render_target(c, template, with_aux=False)))
            if score_aliases == "max":
                jobs += [(i, _target_for(a, template)) for a in c.aliases]
        probs = backend.teacher_forced_probs_many(source, [backend.encode_target(t) for _, t in jobs])
    except BackendError as e:
        raise BackendError(f"quotation {quote_id}: {e}") from e
    best: dict[int, CandidateScore] = {}
    for (i, target), p in zip(jobs, probs):
        s = CandidateScore(candidates[i].character_id, target, mean_score(p, score_space), tuple(p))
        if i not in best or s.score > best[i].score:
            best[i] = s
    return [best[i] for i in range(len(candidates))]


def score_candidate(source_text: str, candidate: CharacterEntry, template: PromptTemplate,
                    backend: Seq2SeqBackend, **kwargs) -> CandidateScore:
    return score_candidates(source_text, [candidate], template, backend, **kwargs)[0]


CandidateFilter = Callable[[CharacterEntry], bool] | Collection[str] | None


def _candidates(roster: CharacterRoster, candidate_filter: CandidateFilter) -> list[CharacterEntry]:
    if candidate_filter is None:
        return list(roster)
    if callable(candidate_filter):
        return [e for e in roster if candidate_filter(e)]
    allowed = set(candidate_filter)
    return [e for e in roster if e.character_id in allowed]


def classify_by_generation(instance: QuotationInstance, roster: CharacterRoster, template: PromptTemplate,
                           backend: Seq2SeqBackend, candidate_filter: CandidateFilter = None, *,
                           budget: int | None = None, score_space: ScoreSpace | str = ScoreSpace.PROB,
                           score_aliases: str | None = None) -> RankedPrediction:
    """Rank every candidate by its generation score; ties keep roster order."""
    candidates = _candidates(roster, candidate_filter)
    if not candidates:
        raise InferenceError(f"quotation {instance.quote_id}: no candidates")
    source = render_source(instance, template, budget or backend.max_source_tokens, backend)
    scores = score_candidates(source.source_text, candidates, template, backend, score_space=score_space,
                              score_aliases=score_aliases, quote_id=instance.quote_id)
    order = sorted(range(len(scores)), key=lambda i: (-scores[i].score, i))
    return RankedPrediction(instance.novel_id, instance.quote_id, tuple(scores[i] for i in order))


def top_k(prediction: RankedPrediction, k: int) -> list[str]:
    if not 1 <= k <= len(prediction.ranked):
        raise InferenceError(f"k={k} outside 1..{len(prediction.ranked)}")
    return [s.character_id for s in prediction.ranked[:k]]


# -- direct generation --------------------------------------------------------


def resolve_name(name: str, roster: CharacterRoster) -> Resolution:
    """Exact normalized match on names and aliases first, then unique substring match."""
    key = normalize_name(name)
    if not key:
        return UNRESOLVED
    index = roster.name_index()
    if key in index:
        return Resolution("resolved", (index[key],))
    hits = [e.character_id for e in roster if any(key in normalize_name(n) for n in e.names)]
    if len(hits) == 1:
        return Resolution("resolved", (hits[0],))
    if hits:
        return Resolution("ambiguous", tuple(hits))
    return UNRESOLVED


def parse_generated(raw: str, template: PromptTemplate) -> str | None:
    """The speaker name in a generated target, or None when the prefix is missing."""
    text = raw
    if template.target_prefix:
        at = text.find(template.target_prefix)
        if at < 0:
            return None
        text = text[at + len(template.target_prefix):]
    ends = [len(text), *(i for i in (text.find("\n"),) if i >= 0)]
    if template.aux_target_prefix:
        at = text.find(template.aux_target_prefix)
        if at >= 0:
            ends.append(at)
    return text[:min(ends)].strip()


def direct_generate_speaker(instance: QuotationInstance, roster: CharacterRoster, template: PromptTemplate,
                            backend: Seq2SeqBackend, *, budget: int | None = None, max_length: int = 32,
                            strategy: str = "greedy", beam_width: int = 1) -> ParsedPrediction:
    source = render_source(instance, template, budget or backend.max_source_tokens, backend)
    try:
        ids = backend.free_generate(backend.encode_source(source.source_text), max_length, strategy, beam_width)
    except BackendError as e:
        raise BackendError(f"quotation {instance.quote_id}: {e}") from e
    raw = backend.decode(ids)
    name = parse_generated(raw, template)
    if name is None:
        return ParsedPrediction(instance.novel_id, instance.quote_id, raw, "", UNRESOLVED)
    return ParsedPrediction(instance.novel_id, instance.quote_id, raw, name, resolve_name(name, roster))


# -- batch prediction and dumps -----------------------------------------------

Prediction = RankedPrediction | ParsedPrediction


def predict(corpus: NovelCorpus, ids: Iterable[tuple[str, str]], template: PromptTemplate,
            backend: Seq2SeqBackend, mode: str = "sig", **kwargs) -> list[Prediction]:
    """Predict every quotation in `ids` with the whole novel roster as candidates."""
    from .corpus import select

    out: list[Prediction] = []
    for q in select(corpus, ids):
        roster = corpus.roster(q.novel_id)
        if mode == "sig":
            out.append(classify_by_generation(q, roster, template, backend, **kwargs))
        elif mode == "sig_d":
            out.append(direct_generate_speaker(q, roster, template, backend, **kwargs))
        else:
            raise ValueError(f"unknown inference mode {mode!r}")
    return out


def prediction_record(p: Prediction) -> dict:
    if isinstance(p, RankedPrediction):
        return {"mode": "sig", "novel_id": p.novel_id, "quote_id": p.quote_id, "chosen": p.chosen,
                "ranked": [[s.character_id, s.score] for s in p.ranked]}
    return {"mode": "sig_d", "novel_id": p.novel_id, "quote_id": p.quote_id, "chosen": p.chosen,
            "raw_output": p.raw_output, "parsed_name": p.parsed_name,
            "resolution": p.resolution.status, "resolution_ids": list(p.resolution.character_ids)}


def prediction_from_record(r: dict) -> Prediction:
    if r["mode"] == "sig":
        ranked = tuple(CandidateScore(cid, "", score, ()) for cid, score in r["ranked"])
        return RankedPrediction(r["novel_id"], r["quote_id"], ranked)
    return ParsedPrediction(r["novel_id"], r["quote_id"], r["raw_output"], r["parsed_name"],
                            Resolution(r["resolution"], tuple(r["resolution_ids"])))


def write_predictions(predictions: Iterable[Prediction], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for p in predictions:
            f.write(json.dumps(prediction_record(p), ensure_ascii=False) + "\n")


def read_predictions(path: str | Path) -> list[Prediction]:
    with open(path, encoding="utf-8") as f:
        return [prediction_from_record(json.loads(line)) for line in f if line.strip()]
