import csv
import json
from pathlib import Path

import pytest

from speakerid.corpus import (CharacterEntry, CharacterRoster, Gender, Novel, NovelCorpus, QuotationInstance,
                              QuoteType)

EMMA_TEXT = (
    "Emma sat at the window.\n\n"
    "\"I am not sure that I should like it,\" said Emma.\n\n"
    "Mrs Elton laughed. \"Knightley is a perfect paragon,\" said Mrs Elton.\n\n"
    "She turned away. \"You are very kind,\" she said.\n\n"
    "The evening ended."
)


def _span(text: str, needle: str) -> list[int]:
    start = text.index(needle)
    return [start, start + len(needle)]


def write_pdnc_novel(root: Path, novel_id: str = "emma", extra_rows=(), with_roster: bool = True) -> Path:
    """One-novel PDNC-style fixture: 3 clean quotations over 2 characters."""
    d = root / novel_id
    d.mkdir(parents=True)
    (d / "novel_text.txt").write_text(EMMA_TEXT, encoding="utf-8")
    if with_roster:
        with open(d / "character_info.csv", "w", newline="", encoding="utf-8") as f:
            w = csv.writer(f)
            w.writerow(["Character ID", "Main Name", "Aliases", "Gender"])
            w.writerow(["0", "Emma Woodhouse", "['Emma', 'Miss Woodhouse']", "F"])
            w.writerow(["1", "Mrs Elton", "['Augusta']", "F"])
    q1 = "I am not sure that I should like it,"
    q2 = "Knightley is a perfect paragon,"
    q3 = "You are very kind,"
    rows = [
        ["Q2", q2, str([_span(EMMA_TEXT, q2)]), "['Mrs Elton']", "['Emma']", "Explicit"],
        ["Q1", q1, str([_span(EMMA_TEXT, q1)]), "Emma", "[]", "Explicit"],
        ["Q3", q3, str([_span(EMMA_TEXT, q3)]), "Augusta", "['Emma Woodhouse']", "Anaphoric"],
        *extra_rows,
    ]
    with open(d / "quotation_info.csv", "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["quoteID", "quoteText", "quoteByteSpans", "speaker", "addressees", "quoteType"])
        w.writerows(rows)
    return d


@pytest.fixture
def pdnc_dir(tmp_path):
    root = tmp_path / "pdnc"
    write_pdnc_novel(root, extra_rows=[
        ["Q4", "Who said that?", "[]", "['Mr Nobody']", "[]", "Implicit"],
        ["Q5", "Both of us!", "[]", "['Emma', 'Mrs Elton']", "[]", "Implicit"],
    ])
    return root


def write_wp(root: Path, instances, name_list: bool = True) -> Path:
    root.mkdir(parents=True, exist_ok=True)
    if name_list:
        (root / "name_list.txt").write_text("Sun Shaoping;Shaoping\nTian Xiaoxia;Xiaoxia\n", encoding="utf-8")
    with open(root / "instances.jsonl", "w", encoding="utf-8") as f:
        for r in instances:
            f.write(json.dumps(r, ensure_ascii=False) + "\n")
    return root


EMMA = CharacterEntry("emma", "Emma", ("Miss Woodhouse",), Gender.FEMALE)
ELTON = CharacterEntry("elton", "Mrs Elton", ("Augusta",), Gender.FEMALE)
KNIGHTLEY = CharacterEntry("knightley", "Mr Knightley", (), Gender.MALE)


def emma_roster(novel_id: str = "emma") -> CharacterRoster:
    return CharacterRoster(novel_id, (EMMA, ELTON, KNIGHTLEY))


def quote(novel_id, quote_id, speaker, qtype="explicit", text="Hello there", left="", right="", addressees=()):
    return QuotationInstance(novel_id, quote_id, text, left, right, QuoteType(qtype), speaker, tuple(addressees))


def make_corpus(spec: dict[str, list[tuple[str, str]]], roster_factory=emma_roster) -> NovelCorpus:
    """{novel_id: [(speaker_id, quote_type), ...]} -> corpus with quote ids q000, q001, ..."""
    novels = {}
    for nid, rows in spec.items():
        quotes = tuple(quote(nid, f"q{i:03d}", s, t) for i, (s, t) in enumerate(rows))
        novels[nid] = Novel(roster_factory(nid), quotes)
    return NovelCorpus(novels)


def mock_corpus(n_novels: int, quotes_per_novel: int = 3) -> NovelCorpus:
    types = ["explicit", "anaphoric", "implicit"]
    return make_corpus({
        f"novel{n:02d}": [("emma", types[i % 3]) for i in range(quotes_per_novel)] for n in range(n_novels)
    })


# -- acceptance reporting ------------------------------------------------------

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
