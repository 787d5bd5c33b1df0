import pytest

from ontolink.metrics import (acronym_prf, document_level_prf, error_breakdown,
                              mention_level_prf, ner_prf,
                              raw_corpus_lower_bound, recall_at_k, stage_recall,
                              subset_prf)


def _key(doc, start, entity):
    return (doc, 0, start, start + 1, entity)


def test_mention_prf_fixture():
    # tp=2, fp=4, fn=2 -> P=1/3, R=1/2, F1=0.4
    gold = [_key("d1", i, "C1") for i in range(4)]
    pred = gold[:2] + [_key("d2", i, "C9") for i in range(4)]
    r = mention_level_prf(gold, pred)
    assert (r.tp, r.fp, r.fn) == (2, 4, 2)
    assert r.precision == pytest.approx(1 / 3)
    assert r.recall == pytest.approx(1 / 2)
    assert r.f1 == pytest.approx(0.4)


def test_mention_prf_duplicates_counted_once():
    gold = [_key("d", 0, "C1")]
    pred = [_key("d", 0, "C1")] * 3
    r = mention_level_prf(gold, pred)
    assert (r.tp, r.fp, r.duplicates) == (1, 0, 2)
    assert "duplicate_predictions" in r.flags


def test_zero_denominators_flagged():
    r = mention_level_prf([], [])
    assert r.precision == r.recall == r.f1 == 0.0
    assert set(r.flags) >= {"zero_precision_denominator",
                            "zero_recall_denominator"}


def test_document_prf_half():
    gold = [("d1", "C1"), ("d1", "C2")]
    pred = [("d1", "C1"), ("d1", "C3")]
    r = document_level_prf(gold, pred)
    assert r.precision == r.recall == r.f1 == 0.5


def test_document_prf_ignores_locations():
    gold = [("d1", "C1"), ("d1", "C1")]  # repeated mention, one entity
    pred = [("d1", "C1")]
    r = document_level_prf(gold, pred)
    assert r.f1 == 1.0


def test_ner_prf_matches_on_type():
    gold = [("d", 0, 0, 1, "T1")]
    pred_right = [("d", 0, 0, 1, "T1")]
    pred_wrong = [("d", 0, 0, 1, "T2")]
    assert ner_prf(gold, pred_right).f1 == 1.0
    assert ner_prf(gold, pred_wrong).f1 == 0.0


def test_recall_at_k_monotone():
    cands = {("d", 0, 0, 1): ["C3", "C1", "C2"],
             ("d", 0, 1, 2): ["C9"]}
    gold = [(("d", 0, 0, 1), "C1"), (("d", 0, 1, 2), "C5")]
    r = recall_at_k(cands, gold, [1, 2, 3])
    assert r == {1: 0.0, 2: 0.5, 3: 0.5}
    assert all(r[a] <= r[b] for a, b in [(1, 2), (2, 3)])


def test_stage_recall_normalizes_to_input():
    gold = ["g1", "g2", "g3"]
    rows = stage_recall([("cand", ["g1", "g2", "x"], ["g1"]),
                         ("empty", ["x"], [])], gold)
    assert rows[0]["recall"] == pytest.approx(0.5)
    assert rows[0]["gold_in_input"] == 2
    assert rows[1]["recall"] is None  # no gold reached this stage


def test_subset_prf_seen_unseen():
    gold = [_key("d", 0, "C1"), _key("d", 1, "C2")]
    pred = [_key("d", 0, "C1"), _key("d", 1, "C3")]
    seen = {"C1"}
    assert subset_prf(gold, pred, seen, "seen").f1 == 1.0
    unseen = subset_prf(gold, pred, seen, "unseen")
    assert (unseen.tp, unseen.fp, unseen.fn) == (0, 1, 1)
    with pytest.raises(ValueError):
        subset_prf(gold, pred, seen, "other")


def test_acronym_prf_restricts_to_acronym_spans():
    gold = [_key("d", 0, "C1"), _key("d", 1, "C2")]
    pred = [_key("d", 0, "C1"), _key("d", 1, "C2")]
    acro = {pred[0]}
    r = acronym_prf(gold, pred, acro)
    assert (r.tp, r.fp, r.fn) == (1, 0, 0)


def test_error_breakdown_categories():
    gold = [("d", 0, 0, 2, "C1", "T1"),
            ("d", 0, 5, 6, "C2", "T2")]
    pred = [
        ("d", 0, 0, 2, "C1", "T1"),   # true positive, ignored
        ("d", 0, 0, 2, "C9", "T1"),   # correct span + type, bad entity
        ("d", 0, 0, 2, "C8", "T9"),   # correct span, bad type and entity
        ("d", 0, 4, 7, "C2", "T2"),   # correct entity, contains true span
        ("d", 0, 5, 7, "C1", "T1"),   # overlaps C1? different span, no overlap
    ]
    eb = error_breakdown(gold, pred)
    assert eb.total_fp == 4
    assert eb.correct_span_bad_entity == pytest.approx(2 / 4)
    assert eb.correct_span_and_type == pytest.approx(1 / 4)
    assert eb.correct_entity_containing_true_span == pytest.approx(1 / 4)
    assert eb.correct_entity_overlapping_true_span == 0.0


def test_error_breakdown_overlap_category():
    gold = [("d", 0, 2, 5, "C1", "T1")]
    pred = [("d", 0, 4, 7, "C1", "T1")]  # overlaps but does not contain
    eb = error_breakdown(gold, pred)
    assert eb.correct_entity_overlapping_true_span == 1.0
    assert eb.correct_entity_containing_true_span == 0.0


def test_raw_corpus_lower_bound():
    base = mention_level_prf([_key("d", 0, "C1")], [_key("d", 0, "C1")])
    lb = raw_corpus_lower_bound(base, dropped_mentions=3)
    assert (lb.tp, lb.fp, lb.fn) == (1, 0, 3)
    assert lb.recall == pytest.approx(0.25)
    assert "raw_corpus_lower_bound" in lb.flags
