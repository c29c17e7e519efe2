"""Accuracy by quote type, fold aggregation, top-k accuracy and lenient matching."""

from __future__ import annotations

import json
import math
import re
import statistics
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .corpus import CharacterEntry, NovelCorpus, QuoteType, SplitSpec, normalize_name
from .inference import ParsedPrediction, Prediction, RankedPrediction

CELLS = ("explicit", "anaphoric", "implicit", "non_explicit", "total")
MAX_K = 5


class EvaluationError(ValueError):
    pass


def is_correct(prediction: Prediction, gold_speaker: str) -> bool:
    """Ranked: top candidate is gold.  Generated: resolved to gold (ambiguous counts wrong)."""
    if isinstance(prediction, RankedPrediction):
        return prediction.chosen == gold_speaker
    return prediction.resolution.resolved_id == gold_speaker


@dataclass
class EvalReport:
    """Per-fold cells; a single-fold report is just a report with one fold.

    Empty cells have accuracy NaN and are left out of means and medians.
    """

    correct: dict[str, list[int]]
    counts: dict[str, list[int]]
    topk: list[list[float]] = field(default_factory=list)  # per fold: acc@1..K

    @property
    def n_folds(self) -> int:
        return len(self.counts["total"])

    def accuracy(self, cell: str) -> list[float]:
        return [c / n if n else math.nan for c, n in zip(self.correct[cell], self.counts[cell])]

    def mean(self, cell: str) -> float:
        vals = [a for a in self.accuracy(cell) if not math.isnan(a)]
        return statistics.fmean(vals) if vals else math.nan

    def median(self, cell: str) -> float:
        vals = [a for a in self.accuracy(cell) if not math.isnan(a)]
        return statistics.median(vals) if vals else math.nan

    def topk_mean(self) -> list[float]:
        if not self.topk:
            return []
        depth = min(len(t) for t in self.topk)
        return [statistics.fmean(t[k] for t in self.topk) for k in range(depth)]

    def as_dict(self) -> dict:
        return {
            "n_folds": self.n_folds,
            "cells": {
                c: {"correct": self.correct[c], "count": self.counts[c], "accuracy": self.accuracy(c),
                    "mean": self.mean(c), "median": self.median(c)}
                for c in CELLS
            },
            "topk": self.topk,
            "topk_mean": self.topk_mean(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        cells = d["cells"]
        return cls({c: list(cells[c]["correct"]) for c in CELLS},
                   {c: list(cells[c]["count"]) for c in CELLS}, [list(t) for t in d.get("topk", [])])


def topk_accuracy(predictions: Sequence[RankedPrediction], gold: dict[tuple[str, str], str], k: int) -> float:
    """Share of quotations whose gold speaker is among the first `k` ranked candidates."""
    if not predictions:
        return math.nan
    hits = 0
    for p in predictions:
        if len(p.ranked) < k:
            raise EvaluationError(f"quotation {p.key} ranks {len(p.ranked)} candidates, k={k}")
        hits += gold[p.key] in {s.character_id for s in p.ranked[:k]}
    return hits / len(predictions)


def evaluate_predictions(predictions: Iterable[Prediction], corpus: NovelCorpus, split: SplitSpec,
                         max_k: int = MAX_K) -> EvalReport:
    """Single-fold report over the test side of `split`."""
    predictions = list(predictions)
    by_key = {p.key: p for p in predictions}
    if len(by_key) != len(predictions):
        raise EvaluationError("duplicate predictions for some quotations")
    missing = sorted(split.test_ids - by_key.keys())
    extra = sorted(by_key.keys() - split.test_ids)
    if missing or extra:
        raise EvaluationError(f"predictions do not match the test set: missing {missing[:10]}"
                              f"{' ...' if len(missing) > 10 else ''}, extra {extra[:10]}"
                              f"{' ...' if len(extra) > 10 else ''}")
    quotes = corpus.by_key()
    correct = {c: 0 for c in CELLS}
    counts = {c: 0 for c in CELLS}
    for key, p in by_key.items():
        q = quotes[key]
        hit = is_correct(p, q.speaker_id)
        cells = [q.quote_type.value, "total"]
        if q.quote_type is not QuoteType.EXPLICIT:
            cells.append("non_explicit")
        for c in cells:
            counts[c] += 1
            correct[c] += hit
    topk = []
    ranked = [p for p in predictions if isinstance(p, RankedPrediction)]
    if ranked and len(ranked) == len(predictions):
        gold = {k: quotes[k].speaker_id for k in by_key}
        depth = min(max_k, min(len(p.ranked) for p in ranked))
        topk = [[topk_accuracy(ranked, gold, k) for k in range(1, depth + 1)]]
    return EvalReport({c: [correct[c]] for c in CELLS}, {c: [counts[c]] for c in CELLS}, topk)


def aggregate_folds(reports: Sequence[EvalReport]) -> EvalReport:
    """Stack fold reports; `mean` / `median` of the result summarize across folds."""
    if not reports:
        raise EvaluationError("no fold reports to aggregate")
    return EvalReport(
        {c: [v for r in reports for v in r.correct[c]] for c in CELLS},
        {c: [v for r in reports for v in r.counts[c]] for c in CELLS},
        [t for r in reports for t in r.topk],
    )


def _fmt(x: float) -> str:
    return "-" if math.isnan(x) else f"{x:.2f}"


def format_table(report: EvalReport, method: str = "SIG") -> str:
    """Accuracy as mean/median per quote-type cell, plus top-k when available."""
    header = f"{'':<10}" + "".join(f"{c.replace('_', '-'):>15}" for c in CELLS)
    row = f"{method:<10}" + "".join(f"{_fmt(report.mean(c)) + '/' + _fmt(report.median(c)):>15}" for c in CELLS)
    lines = [header, row]
    topk = report.topk_mean()
    if topk:
        lines.append(f"{'top 1-' + str(len(topk)):<10} " + " / ".join(f"{100 * a:.2f}" for a in topk))
    return "\n".join(lines)


def write_report(report: EvalReport, path: str | Path) -> None:
    Path(path).write_text(json.dumps(report.as_dict(), indent=2, sort_keys=True, allow_nan=True),
                          encoding="utf-8")


def read_report(path: str | Path) -> EvalReport:
    return EvalReport.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _normalize_text(text: str) -> str:
    return re.sub(r"\s+", " ", text.casefold()).strip()


def lenient_match(response: str, gold: CharacterEntry) -> bool:
    """Gold name or alias appears in `response` as a whole-word substring, case-insensitively."""
    text = _normalize_text(response)
    for name in gold.names:
        key = normalize_name(name)
        if key and re.search(r"(?<!\w)" + re.escape(key) + r"(?!\w)", text):
            return True
    return False
