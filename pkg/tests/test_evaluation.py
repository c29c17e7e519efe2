import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import EMMA, ELTON, emma_roster, make_corpus
from speakerid.corpus import CharacterEntry, SplitSpec
from speakerid.evaluation import (CELLS, EvalReport, EvaluationError, aggregate_folds, evaluate_predictions,
                                  format_table, is_correct, lenient_match, read_report, topk_accuracy, write_report)
from speakerid.inference import CandidateScore, ParsedPrediction, RankedPrediction, Resolution

IDS = ["emma", "elton", "knightley"]


def ranked(key, order):
    n = len(order)
    return RankedPrediction(key[0], key[1], tuple(CandidateScore(c, "", (n - i) / n, ()) for i, c in enumerate(order)))


def parsed(key, status, ids=()):
    return ParsedPrediction(key[0], key[1], "raw", "name", Resolution(status, tuple(ids)))


def _test_split(corpus):
    return SplitSpec("t", frozenset(), frozenset(q.key for q in corpus.quotations()))


def _fixture():
    """3 explicit (2 right) and 2 implicit (1 right)."""
    corpus = make_corpus({"n": [("emma", "explicit")] * 3 + [("elton", "implicit")] * 2})
    hits = [True, True, False, True, False]
    preds = []
    for q, hit in zip(corpus.quotations(), hits):
        first = q.speaker_id if hit else "knightley"
        preds.append(ranked(q.key, [first] + [c for c in IDS if c != first]))
    return corpus, preds


def test_fixture_accuracies():
    corpus, preds = _fixture()
    r = evaluate_predictions(preds, corpus, _test_split(corpus))
    assert r.accuracy("total") == [0.6]
    assert r.accuracy("non_explicit") == [0.5]
    assert r.accuracy("explicit") == [pytest.approx(2 / 3)]
    assert math.isnan(r.accuracy("anaphoric")[0])
    assert r.counts["total"] == [5]


def test_all_correct_is_one_everywhere():
    corpus = make_corpus({"n": [("emma", "explicit"), ("elton", "anaphoric"), ("knightley", "implicit")]})
    preds = [ranked(q.key, [q.speaker_id] + [c for c in IDS if c != q.speaker_id]) for q in corpus.quotations()]
    r = evaluate_predictions(preds, corpus, _test_split(corpus))
    assert all(r.accuracy(c) == [1.0] for c in CELLS)
    assert r.topk == [[1.0, 1.0, 1.0]]


def test_ordering_does_not_matter():
    corpus, preds = _fixture()
    a = evaluate_predictions(preds, corpus, _test_split(corpus))
    b = evaluate_predictions(list(reversed(preds)), corpus, _test_split(corpus))
    assert a.as_dict() == b.as_dict()


def test_missing_and_extra_predictions_listed():
    corpus, preds = _fixture()
    with pytest.raises(EvaluationError, match=r"missing \[\('n', 'q004'\)\]"):
        evaluate_predictions(preds[:-1], corpus, _test_split(corpus))
    split = SplitSpec("t", frozenset(), frozenset(q.key for q in list(corpus.quotations())[:4]))
    with pytest.raises(EvaluationError, match=r"extra \[\('n', 'q004'\)\]"):
        evaluate_predictions(preds, corpus, split)


def test_generated_predictions_ambiguous_counts_wrong():
    corpus = make_corpus({"n": [("emma", "explicit"), ("elton", "implicit"), ("emma", "anaphoric")]})
    keys = [q.key for q in corpus.quotations()]
    preds = [parsed(keys[0], "resolved", ["emma"]), parsed(keys[1], "ambiguous", ["elton", "emma"]),
             parsed(keys[2], "unresolved")]
    r = evaluate_predictions(preds, corpus, _test_split(corpus))
    assert r.accuracy("total") == [pytest.approx(1 / 3)]
    assert r.topk == []
    assert not is_correct(preds[1], "elton")


# -- aggregation ---------------------------------------------------------------


def _fold(correct, count=10):
    return EvalReport({c: [correct] for c in CELLS}, {c: [count] for c in CELLS})


def test_five_fold_mean_and_median():
    r = aggregate_folds([_fold(k) for k in (6, 7, 8, 7, 9)])
    assert r.mean("total") == pytest.approx(0.74, abs=1e-12)
    assert r.median("total") == pytest.approx(0.7, abs=1e-12)
    assert r.n_folds == 5


def test_single_fold_mean_equals_median():
    r = aggregate_folds([_fold(6)])
    assert r.mean("total") == r.median("total") == 0.6


def test_even_count_median():
    assert aggregate_folds([_fold(6), _fold(9)]).median("total") == pytest.approx(0.75)


def test_identical_reports_aggregate_to_themselves():
    corpus, preds = _fixture()
    r = evaluate_predictions(preds, corpus, _test_split(corpus))
    agg = aggregate_folds([r, r, r])
    for c in ("explicit", "non_explicit", "total"):
        assert agg.mean(c) == pytest.approx(r.mean(c)) and agg.median(c) == pytest.approx(r.median(c))


def test_aggregate_of_nothing():
    with pytest.raises(EvaluationError):
        aggregate_folds([])


def test_table_uses_mean_slash_median():
    table = format_table(aggregate_folds([_fold(k) for k in (6, 7, 8, 7, 9)]), "SIG")
    assert "0.74/0.70" in table and table.splitlines()[1].startswith("SIG")


def test_report_round_trip(tmp_path):
    corpus, preds = _fixture()
    r = evaluate_predictions(preds, corpus, _test_split(corpus))
    write_report(r, tmp_path / "r.json")
    back = read_report(tmp_path / "r.json")
    assert back.correct == r.correct and back.counts == r.counts and back.topk == r.topk


# -- top-k ---------------------------------------------------------------------


def test_gold_always_second():
    corpus = make_corpus({"n": [("emma", "explicit"), ("elton", "implicit")]})
    preds = [ranked(q.key, ["knightley", q.speaker_id, *(c for c in IDS if c not in ("knightley", q.speaker_id))])
             for q in corpus.quotations()]
    gold = {q.key: q.speaker_id for q in corpus.quotations()}
    assert topk_accuracy(preds, gold, 1) == 0.0
    assert topk_accuracy(preds, gold, 2) == 1.0


def test_k_equal_roster_size_is_one():
    corpus = make_corpus({"n": [("emma", "explicit")] * 4})
    rng = random.Random(0)
    preds = [ranked(q.key, rng.sample(IDS, 3)) for q in corpus.quotations()]
    gold = {q.key: q.speaker_id for q in corpus.quotations()}
    assert topk_accuracy(preds, gold, len(emma_roster())) == 1.0


def test_insufficient_depth():
    preds = [ranked(("n", "q"), ["emma"])]
    with pytest.raises(EvaluationError, match="k=2"):
        topk_accuracy(preds, {("n", "q"): "emma"}, 2)


# -- lenient matching ----------------------------------------------------------


@pytest.mark.parametrize("response, gold, expected", [
    ("The speaker is Mrs Elton.", ELTON, True),
    ("I cannot determine the speaker.", EMMA, False),
    ("It must be Augusta, surely.", ELTON, True),
    ("MISS WOODHOUSE speaks here", EMMA, True),
    ("Anne spoke", CharacterEntry("a", "Ann"), False),
    ("Ann spoke", CharacterEntry("a", "Ann"), True),
])
def test_lenient_match(response, gold, expected):
    assert lenient_match(response, gold) is expected


# -- properties ----------------------------------------------------------------


@settings(max_examples=60, deadline=None)
@given(data=st.data())
def test_report_invariants(data):
    rows = data.draw(st.lists(st.tuples(st.sampled_from(IDS), st.sampled_from(["explicit", "anaphoric", "implicit"])),
                              min_size=1, max_size=25))
    corpus = make_corpus({"n": rows})
    preds = [ranked(q.key, data.draw(st.permutations(IDS))) for q in corpus.quotations()]
    r = evaluate_predictions(preds, corpus, _test_split(corpus))
    assert r.counts["total"][0] == sum(r.counts[t][0] for t in ("explicit", "anaphoric", "implicit"))
    acc = [a for c in CELLS for a in r.accuracy(c) if not math.isnan(a)]
    assert all(0.0 <= a <= 1.0 for a in acc)
    topk = r.topk[0]
    assert all(a <= b for a, b in zip(topk, topk[1:])) and topk[-1] == 1.0
