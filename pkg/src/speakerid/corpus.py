"""Annotated novel corpora: data model, ingestion adapters, filtering and splits.

The normalized interchange format is a directory holding two line-delimited
JSON files, ``rosters.jsonl`` (one character per line) and ``quotations.jsonl``
(one quotation per line).  See ``docs/formats.md`` for the source layouts the
PDNC and WP adapters accept.
"""

from __future__ import annotations

import ast
import bisect
import csv
import json
import logging
import random
import re
import string
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator

logger = logging.getLogger(__name__)

QUOTATIONS_FILE = "quotations.jsonl"
ROSTERS_FILE = "rosters.jsonl"
REJECTS_FILE = "rejects.jsonl"

_WS = re.compile(r"\s+")
_TRAILING_PUNCT = string.punctuation + "’”"


class IngestError(Exception):
    """Fatal problem with an input corpus (missing files, broken layout)."""


class QuoteType(str, Enum):
    EXPLICIT = "explicit"
    ANAPHORIC = "anaphoric"
    IMPLICIT = "implicit"

    @classmethod
    def parse(cls, value: str) -> "QuoteType":
        # PDNC writes e.g. "Anaphoric (pronoun)"; match on the leading word.
        head = value.strip().lower().split(" ")[0].strip("()")
        return cls(head)


class Gender(str, Enum):
    FEMALE = "female"
    MALE = "male"
    UNKNOWN = "unknown"

    @classmethod
    def parse(cls, value: str | None) -> "Gender":
        if not value:
            return cls.UNKNOWN
        head = value.strip().lower()[:1]
        return {"f": cls.FEMALE, "m": cls.MALE}.get(head, cls.UNKNOWN)


def normalize_name(name: str) -> str:
    """Case-fold, trim, collapse inner whitespace and strip trailing punctuation."""
    name = _WS.sub(" ", name.casefold()).strip()
    return name.rstrip(_TRAILING_PUNCT).strip()


@dataclass(frozen=True)
class CharacterEntry:
    character_id: str
    canonical_name: str
    aliases: tuple[str, ...] = ()
    gender: Gender = Gender.UNKNOWN

    def __post_init__(self):
        if not self.canonical_name.strip():
            raise ValueError(f"character {self.character_id!r} has an empty canonical name")
        object.__setattr__(self, "aliases", tuple(self.aliases))
        object.__setattr__(self, "gender", Gender(self.gender))
        canon = normalize_name(self.canonical_name)
        if any(normalize_name(a) == canon for a in self.aliases):
            raise ValueError(f"character {self.character_id!r} repeats its canonical name among aliases")

    @property
    def names(self) -> tuple[str, ...]:
        return (self.canonical_name, *self.aliases)


@dataclass(frozen=True)
class CharacterRoster:
    novel_id: str
    entries: tuple[CharacterEntry, ...]

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        ids = [e.character_id for e in self.entries]
        dup = [i for i, n in Counter(ids).items() if n > 1]
        if dup:
            raise ValueError(f"roster {self.novel_id!r} repeats character ids {dup}")
        seen: dict[str, str] = {}
        for e in self.entries:
            for name in e.names:
                key = normalize_name(name)
                if key in seen and seen[key] != e.character_id:
                    raise ValueError(
                        f"roster {self.novel_id!r}: name {name!r} used by both "
                        f"{seen[key]!r} and {e.character_id!r}"
                    )
                seen[key] = e.character_id

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[CharacterEntry]:
        return iter(self.entries)

    def get(self, character_id: str) -> CharacterEntry:
        for e in self.entries:
            if e.character_id == character_id:
                return e
        raise KeyError(character_id)

    def __contains__(self, character_id: object) -> bool:
        return any(e.character_id == character_id for e in self.entries)

    def name_index(self) -> dict[str, str]:
        """Normalized name or alias -> character id."""
        return {normalize_name(n): e.character_id for e in self.entries for n in e.names}


@dataclass(frozen=True)
class QuotationInstance:
    novel_id: str
    quote_id: str
    text: str
    left_context: str
    right_context: str
    quote_type: QuoteType
    speaker_id: str
    addressee_ids: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.text:
            raise ValueError(f"quotation {self.quote_id!r} has empty text")
        object.__setattr__(self, "quote_type", QuoteType(self.quote_type))
        object.__setattr__(self, "addressee_ids", tuple(self.addressee_ids))

    @property
    def key(self) -> tuple[str, str]:
        return (self.novel_id, self.quote_id)


@dataclass(frozen=True)
class Novel:
    roster: CharacterRoster
    quotations: tuple[QuotationInstance, ...]

    def __post_init__(self):
        object.__setattr__(self, "quotations", tuple(self.quotations))
        for q in self.quotations:
            if q.speaker_id not in self.roster:
                raise ValueError(f"{q.key}: speaker {q.speaker_id!r} not in roster")
            for a in q.addressee_ids:
                if a not in self.roster:
                    raise ValueError(f"{q.key}: addressee {a!r} not in roster")


@dataclass(frozen=True)
class Reject:
    novel_id: str
    record_id: str
    reason: str


@dataclass(frozen=True)
class NovelCorpus:
    novels: dict[str, Novel] = field(default_factory=dict)
    rejects: tuple[Reject, ...] = field(default=(), compare=False)

    def __post_init__(self):
        object.__setattr__(self, "novels", dict(sorted(self.novels.items())))

    def __len__(self) -> int:
        return sum(len(n.quotations) for n in self.novels.values())

    def quotations(self) -> Iterator[QuotationInstance]:
        for novel in self.novels.values():
            yield from novel.quotations

    def by_key(self) -> dict[tuple[str, str], QuotationInstance]:
        return {q.key: q for q in self.quotations()}

    def roster(self, novel_id: str) -> CharacterRoster:
        return self.novels[novel_id].roster


# -- normalized interchange format ------------------------------------------


def quotation_record(q: QuotationInstance) -> dict:
    return {
        "novel_id": q.novel_id,
        "quote_id": q.quote_id,
        "text": q.text,
        "left_context": q.left_context,
        "right_context": q.right_context,
        "quote_type": q.quote_type.value,
        "speaker_id": q.speaker_id,
        "addressee_ids": list(q.addressee_ids),
    }


def roster_record(novel_id: str, e: CharacterEntry) -> dict:
    return {
        "novel_id": novel_id,
        "character_id": e.character_id,
        "canonical_name": e.canonical_name,
        "aliases": list(e.aliases),
        "gender": e.gender.value,
    }


def _write_jsonl(path: Path, records: Iterable[dict]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for r in records:
            f.write(json.dumps(r, ensure_ascii=False, sort_keys=True) + "\n")


def _read_jsonl(path: Path) -> list[dict]:
    with open(path, encoding="utf-8") as f:
        return [json.loads(line) for line in f if line.strip()]


def write_corpus(corpus: NovelCorpus, out_dir: str | Path) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_jsonl(
        out / ROSTERS_FILE,
        (roster_record(nid, e) for nid, n in corpus.novels.items() for e in n.roster),
    )
    _write_jsonl(out / QUOTATIONS_FILE, (quotation_record(q) for q in corpus.quotations()))
    _write_jsonl(
        out / REJECTS_FILE,
        ({"novel_id": r.novel_id, "record_id": r.record_id, "reason": r.reason} for r in corpus.rejects),
    )
    return out


def read_corpus(in_dir: str | Path) -> NovelCorpus:
    src = Path(in_dir)
    for name in (ROSTERS_FILE, QUOTATIONS_FILE):
        if not (src / name).exists():
            raise IngestError(f"expected normalized corpus file {src / name}")
    entries: dict[str, list[CharacterEntry]] = defaultdict(list)
    for r in _read_jsonl(src / ROSTERS_FILE):
        entries[r["novel_id"]].append(
            CharacterEntry(r["character_id"], r["canonical_name"], tuple(r.get("aliases", ())),
                           Gender(r.get("gender") or "unknown"))
        )
    quotes: dict[str, list[QuotationInstance]] = defaultdict(list)
    for r in _read_jsonl(src / QUOTATIONS_FILE):
        quotes[r["novel_id"]].append(
            QuotationInstance(
                novel_id=r["novel_id"], quote_id=r["quote_id"], text=r["text"],
                left_context=r["left_context"], right_context=r["right_context"],
                quote_type=QuoteType(r["quote_type"]), speaker_id=r["speaker_id"],
                addressee_ids=tuple(r.get("addressee_ids", ())),
            )
        )
    missing = sorted(set(quotes) - set(entries))
    if missing:
        raise IngestError(f"no roster records for novel(s) {missing}")
    rejects = ()
    if (src / REJECTS_FILE).exists():
        rejects = tuple(Reject(**r) for r in _read_jsonl(src / REJECTS_FILE))
    novels = {
        nid: Novel(CharacterRoster(nid, tuple(es)), tuple(quotes.get(nid, ())))
        for nid, es in entries.items()
    }
    return NovelCorpus(novels, rejects)


# -- PDNC adapter -----------------------------------------------------------


def _literal_list(value: str) -> list[str]:
    value = (value or "").strip()
    if not value:
        return []
    try:
        parsed = ast.literal_eval(value)
    except (ValueError, SyntaxError):
        return [value]
    if isinstance(parsed, str):
        return [parsed]
    return [str(v) for v in parsed]


def _paragraph_bounds(text: str) -> list[int]:
    """Start offsets of paragraphs (blank-line separated)."""
    starts = [0]
    for m in re.finditer(r"\n\s*\n", text):
        starts.append(m.end())
    return starts


def _contexts(text: str, start: int, end: int, paragraphs: list[int], window: int) -> tuple[str, str]:
    i = bisect.bisect_right(paragraphs, start) - 1
    j = bisect.bisect_right(paragraphs, max(end - 1, start)) - 1
    left_from = paragraphs[max(i - window, 0)]
    right_to = paragraphs[j + window + 1] if j + window + 1 < len(paragraphs) else len(text)
    left = _WS.sub(" ", text[left_from:start]).strip()
    right = _WS.sub(" ", text[end:right_to]).strip()
    return left, right


def _read_pdnc_roster(novel_id: str, path: Path, rejects: list[Reject]) -> CharacterRoster:
    entries = []
    taken: dict[str, str] = {}
    with open(path, encoding="utf-8", newline="") as f:
        rows = list(csv.DictReader(f))
    for row in rows:
        cid = str(row.get("Character ID") or row.get("character_id")).strip()
        name = (row.get("Main Name") or row.get("canonical_name") or "").strip()
        if not name:
            rejects.append(Reject(novel_id, f"character:{cid}", "empty main name"))
            continue
        key = normalize_name(name)
        if key in taken:
            rejects.append(Reject(novel_id, f"character:{cid}", f"main name {name!r} already used"))
            continue
        taken[key] = cid
        entries.append((cid, name, _literal_list(row.get("Aliases", "")), row.get("Gender")))
    out = []
    for cid, name, aliases, gender in entries:
        kept = []
        for alias in aliases:
            key = normalize_name(alias)
            if not key or taken.get(key) == cid:
                continue
            if key in taken:
                rejects.append(Reject(novel_id, f"character:{cid}", f"alias {alias!r} shared with {taken[key]!r}"))
                continue
            taken[key] = cid
            kept.append(alias.strip())
        out.append(CharacterEntry(cid, name, tuple(kept), Gender.parse(gender)))
    return CharacterRoster(novel_id, tuple(out))


def _resolve_label(label: str, index: dict[str, str]) -> str | None:
    return index.get(normalize_name(label))


def _parse_pdnc_novel(novel_dir: Path, context_paragraphs: int, rejects: list[Reject]) -> Novel:
    novel_id = novel_dir.name
    roster_path = novel_dir / "character_info.csv"
    quotes_path = novel_dir / "quotation_info.csv"
    if not roster_path.exists():
        raise IngestError(f"novel {novel_id!r}: missing roster file {roster_path.name}")
    roster = _read_pdnc_roster(novel_id, roster_path, rejects)
    index = roster.name_index()
    index.update({normalize_name(e.character_id): e.character_id for e in roster})
    text_path = novel_dir / "novel_text.txt"
    text = text_path.read_text(encoding="utf-8") if text_path.exists() else ""
    paragraphs = _paragraph_bounds(text)

    with open(quotes_path, encoding="utf-8", newline="") as f:
        rows = list(csv.DictReader(f))
    located = []
    for pos, row in enumerate(rows):
        qid = str(row.get("quoteID") or pos).strip()
        quote_text = (row.get("quoteText") or "").strip()
        if not quote_text:
            rejects.append(Reject(novel_id, qid, "empty quotation text"))
            continue
        speakers = _literal_list(row.get("speaker", ""))
        if len(speakers) != 1:
            rejects.append(Reject(novel_id, qid, f"expected one speaker, got {len(speakers)}"))
            continue
        speaker = _resolve_label(speakers[0], index)
        if speaker is None:
            rejects.append(Reject(novel_id, qid, f"unresolvable speaker {speakers[0]!r}"))
            continue
        addressees = []
        bad = None
        for label in _literal_list(row.get("addressees", "")):
            cid = _resolve_label(label, index)
            if cid is None:
                bad = label
                break
            if cid not in addressees:
                addressees.append(cid)
        if bad is not None:
            rejects.append(Reject(novel_id, qid, f"unresolvable addressee {bad!r}"))
            continue
        try:
            qtype = QuoteType.parse(row.get("quoteType", ""))
        except ValueError:
            rejects.append(Reject(novel_id, qid, f"unknown quote type {row.get('quoteType')!r}"))
            continue
        spans = []
        try:
            spans = [tuple(map(int, s)) for s in ast.literal_eval(row.get("quoteByteSpans") or "[]")]
        except (ValueError, SyntaxError, TypeError):
            pass
        left = right = ""
        start = pos
        if spans and text:
            start, end = spans[0][0], spans[-1][1]
            left, right = _contexts(text, start, end, paragraphs, context_paragraphs)
        located.append((start, pos, QuotationInstance(
            novel_id, qid, quote_text, left, right, qtype, speaker, tuple(addressees))))
    located.sort(key=lambda t: (t[0], t[1]))
    return Novel(roster, tuple(q for _, _, q in located))


def parse_pdnc(path: str | Path, context_paragraphs: int = 1) -> NovelCorpus:
    """Ingest a PDNC-style release: one subdirectory per novel.

    Each novel directory holds ``quotation_info.csv``, ``character_info.csv``
    and optionally ``novel_text.txt`` (used to cut left/right contexts out of
    the quotation spans).  Records that cannot be mapped onto one speaker of
    the roster end up in ``corpus.rejects``.
    """
    root = Path(path)
    if not root.is_dir():
        raise IngestError(f"{root} is not a directory")
    rejects: list[Reject] = []
    novels = {}
    for novel_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        if not (novel_dir / "quotation_info.csv").exists():
            logger.debug("skipping %s: no quotation_info.csv", novel_dir)
            continue
        novels[novel_dir.name] = _parse_pdnc_novel(novel_dir, context_paragraphs, rejects)
    logger.info("PDNC: %d novels, %d quotations, %d rejects",
                len(novels), sum(len(n.quotations) for n in novels.values()), len(rejects))
    return NovelCorpus(novels, tuple(rejects))


# -- WP adapter -------------------------------------------------------------

WP_NAME_LIST = "name_list.txt"
WP_INSTANCES = "instances.jsonl"


def parse_wp(path: str | Path, novel_id: str = "world_of_plainness") -> NovelCorpus:
    """Ingest a WP-style single-novel dataset.

    ``name_list.txt`` holds one role per line as ``canonical;alias;alias``.
    ``instances.jsonl`` holds one quotation per line with keys ``id``,
    ``quote``, ``left_context``, ``right_context``, ``speaker`` and optionally
    ``quote_type`` and ``partition``.  Missing quote types become ``implicit``.
    """
    root = Path(path)
    names_path = root / WP_NAME_LIST
    if not names_path.exists():
        raise IngestError(f"WP: missing name list {names_path}")
    rejects: list[Reject] = []
    entries = []
    taken: dict[str, str] = {}
    for lineno, line in enumerate(names_path.read_text(encoding="utf-8").splitlines()):
        names = [n.strip() for n in line.split(";") if n.strip()]
        if not names:
            continue
        cid = f"c{lineno:04d}"
        kept = []
        for n in names:
            key = normalize_name(n)
            if key in taken:
                if taken[key] != cid:
                    rejects.append(Reject(novel_id, f"character:{cid}", f"name {n!r} shared with {taken[key]!r}"))
                continue
            taken[key] = cid
            kept.append(n)
        if not kept:
            continue
        entries.append(CharacterEntry(cid, kept[0], tuple(kept[1:])))
    roster = CharacterRoster(novel_id, tuple(entries))
    index = roster.name_index()

    quotes = []
    inst_path = root / WP_INSTANCES
    records = _read_jsonl(inst_path) if inst_path.exists() else []
    for pos, r in enumerate(records):
        qid = str(r.get("id", pos))
        text = (r.get("quote") or "").strip()
        if not text:
            rejects.append(Reject(novel_id, qid, "empty quotation text"))
            continue
        speakers = r["speaker"] if isinstance(r.get("speaker"), list) else [r.get("speaker") or ""]
        if len(speakers) != 1:
            rejects.append(Reject(novel_id, qid, f"expected one speaker, got {len(speakers)}"))
            continue
        speaker = _resolve_label(speakers[0], index)
        if speaker is None:
            rejects.append(Reject(novel_id, qid, f"unresolvable speaker {speakers[0]!r}"))
            continue
        qtype = QuoteType.parse(r["quote_type"]) if r.get("quote_type") else QuoteType.IMPLICIT
        quotes.append(QuotationInstance(novel_id, qid, text, r.get("left_context", ""),
                                        r.get("right_context", ""), qtype, speaker, ()))
    novel = Novel(roster, tuple(quotes))
    return NovelCorpus({novel_id: novel}, tuple(rejects))


def wp_partition_split(path: str | Path, novel_id: str = "world_of_plainness",
                       test_partition: str = "test") -> "SplitSpec":
    """Split a WP dataset along the ``partition`` field of its instances."""
    records = _read_jsonl(Path(path) / WP_INSTANCES)
    train, test = set(), set()
    for pos, r in enumerate(records):
        key = (novel_id, str(r.get("id", pos)))
        part = r.get("partition", "train")
        if part == test_partition:
            test.add(key)
        elif part == "train":
            train.add(key)
    return SplitSpec(f"wp-{test_partition}", frozenset(train), frozenset(test), 0)


# -- filters and splits -----------------------------------------------------


def filter_minor_speakers(corpus: NovelCorpus, threshold: int) -> NovelCorpus:
    """Drop quotations whose speaker has fewer than `threshold` quotations in its novel.

    Rosters are kept whole; filtered characters stay valid candidates.
    """
    if threshold < 1:
        raise ValueError("threshold must be >= 1")
    novels = {}
    for nid, novel in corpus.novels.items():
        counts = Counter(q.speaker_id for q in novel.quotations)
        kept = tuple(q for q in novel.quotations if counts[q.speaker_id] >= threshold)
        novels[nid] = Novel(novel.roster, kept)
    return NovelCorpus(novels, corpus.rejects)


@dataclass(frozen=True)
class SplitSpec:
    name: str
    train_ids: frozenset[tuple[str, str]]
    test_ids: frozenset[tuple[str, str]]
    fold_index: int = 0

    def __post_init__(self):
        object.__setattr__(self, "train_ids", frozenset(self.train_ids))
        object.__setattr__(self, "test_ids", frozenset(self.test_ids))
        if self.fold_index < 0:
            raise ValueError("fold_index must be >= 0")
        overlap = self.train_ids & self.test_ids
        if overlap:
            raise ValueError(f"{len(overlap)} quotations on both sides of split {self.name!r}")

    @property
    def train_novels(self) -> set[str]:
        return {n for n, _ in self.train_ids}

    @property
    def test_novels(self) -> set[str]:
        return {n for n, _ in self.test_ids}

    def side(self, name: str) -> frozenset[tuple[str, str]]:
        if name not in ("train", "test"):
            raise ValueError(f"unknown split side {name!r}")
        return self.train_ids if name == "train" else self.test_ids


def make_cross_domain_splits(corpus: NovelCorpus, n_folds: int, test_novels_per_fold: int,
                             seed: int) -> list[SplitSpec]:
    """Hold out whole novels; no novel is tested in more than one fold."""
    novel_ids = sorted(corpus.novels)
    needed = n_folds * test_novels_per_fold
    if n_folds < 1 or test_novels_per_fold < 0:
        raise ValueError("n_folds must be >= 1 and test_novels_per_fold >= 0")
    if needed > len(novel_ids):
        raise ValueError(
            f"{n_folds} folds x {test_novels_per_fold} test novels = {needed} "
            f"> {len(novel_ids)} novels available"
        )
    order = list(novel_ids)
    random.Random(seed).shuffle(order)
    by_novel = {nid: [q.key for q in corpus.novels[nid].quotations] for nid in novel_ids}
    splits = []
    for fold in range(n_folds):
        test_novels = set(order[fold * test_novels_per_fold:(fold + 1) * test_novels_per_fold])
        train = {k for nid in novel_ids if nid not in test_novels for k in by_novel[nid]}
        test = {k for nid in test_novels for k in by_novel[nid]}
        splits.append(SplitSpec(f"cross-domain-seed{seed}", frozenset(train), frozenset(test), fold))
    return splits


def make_in_domain_split(corpus: NovelCorpus) -> SplitSpec:
    """Train on explicit quotations, test on anaphoric and implicit ones."""
    if len(corpus) == 0:
        raise ValueError("in-domain split needs a non-empty corpus")
    train, test = set(), set()
    for q in corpus.quotations():
        (train if q.quote_type is QuoteType.EXPLICIT else test).add(q.key)
    return SplitSpec("in-domain", frozenset(train), frozenset(test), 0)


def make_random_split(corpus: NovelCorpus, test_fraction: float, seed: int) -> SplitSpec:
    """Random quotation-level hold-out within the same novels."""
    if not 0.0 <= test_fraction <= 1.0:
        raise ValueError("test_fraction must lie in [0, 1]")
    keys = sorted(q.key for q in corpus.quotations())
    random.Random(seed).shuffle(keys)
    n_test = round(len(keys) * test_fraction)
    return SplitSpec(f"random-seed{seed}", frozenset(keys[n_test:]), frozenset(keys[:n_test]), 0)


def split_records(splits: Iterable[SplitSpec]) -> list[dict]:
    records = []
    for s in splits:
        for side in ("train", "test"):
            for nid, qid in sorted(s.side(side)):
                records.append({"split": s.name, "fold": s.fold_index, "side": side,
                                "novel_id": nid, "quote_id": qid})
    return records


def write_splits(splits: Iterable[SplitSpec], path: str | Path) -> None:
    _write_jsonl(Path(path), split_records(splits))


def read_splits(path: str | Path) -> list[SplitSpec]:
    sides: dict[tuple[str, int], dict[str, set]] = {}
    for r in _read_jsonl(Path(path)):
        slot = sides.setdefault((r["split"], r["fold"]), {"train": set(), "test": set()})
        slot[r["side"]].add((r["novel_id"], r["quote_id"]))
    return [SplitSpec(name, frozenset(s["train"]), frozenset(s["test"]), fold)
            for (name, fold), s in sorted(sides.items(), key=lambda kv: (kv[0][1], kv[0][0]))]


def select(corpus: NovelCorpus, ids: Iterable[tuple[str, str]]) -> list[QuotationInstance]:
    """Quotations for `ids` in (novel_id, source position) order."""
    wanted = set(ids)
    found = [q for q in corpus.quotations() if q.key in wanted]
    if len(found) != len(wanted):
        missing = sorted(wanted - {q.key for q in found})
        raise KeyError(f"{len(missing)} split ids not in corpus, e.g. {missing[:3]}")
    return found


# -- statistics -------------------------------------------------------------


@dataclass
class Tally:
    total: int = 0
    explicit: int = 0

    def add(self, q: QuotationInstance) -> None:
        self.total += 1
        self.explicit += q.quote_type is QuoteType.EXPLICIT

    @property
    def explicit_ratio(self) -> float:
        return self.explicit / self.total if self.total else 0.0

    def as_dict(self) -> dict:
        return {"total": self.total, "explicit": self.explicit, "explicit_ratio": self.explicit_ratio}


@dataclass
class StatsReport:
    sides: dict[str, Tally]
    per_novel: dict[str, dict[str, Tally]]
    per_type: dict[str, dict[str, int]]

    def as_dict(self) -> dict:
        return {
            "sides": {k: v.as_dict() for k, v in self.sides.items()},
            "per_novel": {n: {s: t.as_dict() for s, t in d.items()} for n, d in self.per_novel.items()},
            "per_type": self.per_type,
        }

    def table(self) -> str:
        lines = [f"{'side':<8}{'quotes':>10}{'explicit':>12}"]
        for side, t in self.sides.items():
            lines.append(f"{side:<8}{t.total:>10}{100 * t.explicit_ratio:>11.1f}%")
        return "\n".join(lines)


def corpus_stats(corpus: NovelCorpus, split: SplitSpec | None = None) -> StatsReport:
    """Quotation counts and explicit ratios per split side, per novel and per type."""
    side_names = ("train", "test") if split is not None else ("all",)
    sides = {s: Tally() for s in side_names}
    per_novel: dict[str, dict[str, Tally]] = {}
    per_type = {s: {t.value: 0 for t in QuoteType} for s in side_names}
    for q in corpus.quotations():
        if split is None:
            side = "all"
        elif q.key in split.train_ids:
            side = "train"
        elif q.key in split.test_ids:
            side = "test"
        else:
            continue
        sides[side].add(q)
        per_novel.setdefault(q.novel_id, {s: Tally() for s in side_names})[side].add(q)
        per_type[side][q.quote_type.value] += 1
    return StatsReport(sides, per_novel, per_type)
