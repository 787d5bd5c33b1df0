import math
import random
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ontolink.candgen import (DEFAULT_STOPLIST, CandidateSpan, LexicalIndex,
                              TfidfVectorizer, candidate_record, char_ngrams,
                              cosine, enumerate_candidate_spans,
                              fit_tfidf_vectorizers, lemmatize_token,
                              prepare_text, record_matches, record_span)
from ontolink.kb import NameType, build_alias_table
from ontolink.preprocess import segment_and_tokenize


def _index(rows, hierarchy, k_w=0.5):
    table = build_alias_table(rows, hierarchy)
    tfidf_c, tfidf_w = fit_tfidf_vectorizers([e.name for e in table.entries])
    return LexicalIndex(table, tfidf_c, tfidf_w, k_w=k_w)


# ---------------------------------------------------------------------------
# text preparation
# ---------------------------------------------------------------------------

def test_lemmatize_token():
    assert lemmatize_token("Studies") == "study"
    assert lemmatize_token("viruses") == "virus"
    assert lemmatize_token("attacks") == "attack"
    assert lemmatize_token("glass") == "glass"    # -ss kept
    assert lemmatize_token("virus") == "virus"    # -us kept
    assert lemmatize_token("is") == "is"          # too short / -is kept


def test_prepare_text():
    assert prepare_text("Heart Attacks, severe!") == "heart attack severe"
    assert prepare_text("Heart Attacks", lemmatize=False) == "heart attacks"


def test_char_ngrams():
    assert char_ngrams("abc") == ["ab", "bc", "abc"]
    assert char_ngrams("a") == []


# ---------------------------------------------------------------------------
# TF-IDF against a literal dictionary oracle
# ---------------------------------------------------------------------------

def _oracle_vector(text, corpus, mode):
    """Straight transcription of the TF-IDF definition with plain dicts."""
    def feats(t):
        return char_ngrams(t) if mode == "char" else t.split()

    n = len(corpus)
    df = Counter()
    for name in corpus:
        df.update(set(feats(name)))
    vec = {}
    for f, tf in Counter(feats(text)).items():
        if f in df:  # vocabulary = corpus features (small corpus, no cap)
            vec[f] = tf * (math.log((1 + n) / (1 + df[f])) + 1.0)
    norm = math.sqrt(sum(w * w for w in vec.values()))
    return {f: w / norm for f, w in vec.items()} if norm else {}


def _oracle_cosine(a, b):
    return sum(w * b.get(f, 0.0) for f, w in a.items())


def test_tfidf_matches_dict_oracle():
    corpus = [prepare_text(t) for t in
              ["heart attack", "heart failure", "kidney failure",
               "attack rate", "heart"]]
    for mode in ("char", "word"):
        vec = TfidfVectorizer(mode=mode).fit(corpus)
        for qa in corpus + [prepare_text("hert attack")]:
            for qb in corpus:
                got = cosine(vec.vector(qa), vec.vector(qb))
                want = _oracle_cosine(_oracle_vector(qa, corpus, mode),
                                      _oracle_vector(qb, corpus, mode))
                assert got == pytest.approx(want, abs=1e-12)


def test_combined_score_against_oracle(toy_hierarchy):
    idx = _index([("C4", "T05", "heart attack", "P"),
                  ("C5", "T05", "heart failure", "P")], toy_hierarchy)
    corpus = ["heart attack", "heart failure"]
    q = prepare_text("hert attack")
    want_c = _oracle_cosine(_oracle_vector(q, corpus, "char"),
                            _oracle_vector("heart attack", corpus, "char"))
    want_w = _oracle_cosine(_oracle_vector(q, corpus, "word"),
                            _oracle_vector("heart attack", corpus, "word"))
    want = (want_c + 0.5 * want_w) / 1.5
    got = idx.lexical_similarity("hert attack", "heart attack")
    assert got == pytest.approx(want, abs=1e-12)
    assert got == pytest.approx(idx.score_all("hert attack")[0], abs=1e-12)


def test_max_features_cap_keeps_most_frequent():
    corpus = ["aa aa bb", "aa cc", "aa bb"]
    vec = TfidfVectorizer(mode="word", max_features=2).fit(corpus)
    assert set(vec.vocab) == {"aa", "bb"}


# ---------------------------------------------------------------------------
# span enumeration
# ---------------------------------------------------------------------------

def _brute_force_spans(doc, k_s, stoplist):
    out = []
    for si, sent in enumerate(doc.sentences):
        toks = [t.text for t in sent]
        for i in range(len(toks)):
            for j in range(i + 1, len(toks) + 1):
                if j - i > k_s:
                    continue
                ends = (toks[i], toks[j - 1])
                if any(not any(c.isalnum() for c in t) or t.lower() in stoplist
                       for t in ends):
                    continue
                out.append(CandidateSpan(doc.doc_id, si, i, j,
                                         " ".join(toks[i:j])))
    return out


def test_enumerate_spans_small_example():
    doc = segment_and_tokenize("d", "The heart attack.")
    spans = enumerate_candidate_spans(doc, k_s=5)
    assert {s.text for s in spans} == {"heart", "attack", "heart attack"}


def test_enumerate_spans_equals_brute_force():
    rng = random.Random(0)
    words = ["the", "of", "heart", "attack", "rate", ",", ".", "severe", "a"]
    for _ in range(50):
        text = " ".join(rng.choice(words) for _ in range(rng.randint(1, 20)))
        doc = segment_and_tokenize("d", text)
        k_s = rng.randint(1, 6)
        assert enumerate_candidate_spans(doc, k_s) == \
            _brute_force_spans(doc, k_s, DEFAULT_STOPLIST)


# ---------------------------------------------------------------------------
# retrieval: frozen values, ranking, dedup
# ---------------------------------------------------------------------------

def test_generate_candidates_ranks_exact_match_first(toy_table, toy_hierarchy):
    tfidf_c, tfidf_w = fit_tfidf_vectorizers([e.name for e in toy_table.entries])
    idx = LexicalIndex(toy_table, tfidf_c, tfidf_w)
    matches = idx.generate_candidates("heart attack", k_m=5)
    assert matches[0].entity_id == "C4"
    assert matches[0].score == pytest.approx(1.0, abs=1e-12)
    # one entry per entity
    assert len({m.entity_id for m in matches}) == len(matches)


def test_dedup_prefers_better_name_type(toy_hierarchy):
    idx = _index([("C1", "T01", "alpha beta", "S"),
                  ("C1", "T01", "alpha beta", "P")], toy_hierarchy)
    m = idx.generate_candidates("alpha beta", k_m=5)
    assert len(m) == 1 and m[0].name_type is NameType.PRIMARY


def test_name_type_outranks_score(toy_hierarchy):
    # primary with a worse score still sorts before a perfect synonym
    idx = _index([("C1", "T01", "alpha beta", "S"),
                  ("C2", "T01", "alpha gamma", "P")], toy_hierarchy)
    m = idx.generate_candidates("alpha beta", k_m=5)
    assert [x.entity_id for x in m] == ["C2", "C1"]
    assert m[1].score > m[0].score


def test_zero_score_entries_excluded(toy_hierarchy):
    idx = _index([("C1", "T01", "alpha", "P"), ("C2", "T01", "zzqq", "P")],
                 toy_hierarchy)
    m = idx.generate_candidates("alpha", k_m=5)
    assert [x.entity_id for x in m] == ["C1"]


def test_candidate_record_roundtrip(toy_table):
    tfidf_c, tfidf_w = fit_tfidf_vectorizers([e.name for e in toy_table.entries])
    idx = LexicalIndex(toy_table, tfidf_c, tfidf_w)
    span = CandidateSpan("d", 0, 1, 3, "heart attack")
    matches = idx.generate_candidates(span.text, 5)
    rec = candidate_record(span, matches)
    assert record_span(rec) == span
    assert record_matches(rec) == matches


def test_index_state_roundtrip(toy_table):
    tfidf_c, tfidf_w = fit_tfidf_vectorizers([e.name for e in toy_table.entries])
    idx = LexicalIndex(toy_table, tfidf_c, tfidf_w)
    idx2 = LexicalIndex.from_state(idx.state(), toy_table)
    q = "myocardial infraction"
    np.testing.assert_allclose(idx.score_all(q), idx2.score_all(q), atol=0)


# ---------------------------------------------------------------------------
# properties
# ---------------------------------------------------------------------------

_word = st.text(alphabet="abcdef", min_size=2, max_size=6)
_phrase = st.lists(_word, min_size=1, max_size=3).map(" ".join)


@settings(max_examples=50, deadline=None)
@given(st.lists(_phrase, min_size=2, max_size=12, unique=True),
       st.integers(0, 1000))
def test_similarity_symmetry_and_identity(phrases, qseed):
    rows = [(f"C{i}", "T01", p, "P") for i, p in enumerate(phrases)]
    from ontolink.kb import TypeHierarchy
    idx = _index(rows, TypeHierarchy(parents={}, selected={"T01": "T"}))
    rng = random.Random(qseed)
    a, b = rng.choice(phrases), rng.choice(phrases)
    assert idx.lexical_similarity(a, b) == \
        pytest.approx(idx.lexical_similarity(b, a), abs=1e-12)
    assert idx.lexical_similarity(a, a) == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.lists(_phrase, min_size=2, max_size=15, unique=True), _phrase)
def test_index_equals_brute_force(phrases, query):
    rows = [(f"C{i}", "T01", p, "P") for i, p in enumerate(phrases)]
    from ontolink.kb import TypeHierarchy
    idx = _index(rows, TypeHierarchy(parents={}, selected={"T01": "T"}))
    np.testing.assert_allclose(idx.score_all(query),
                               idx.score_all_brute_force(query), atol=1e-12)
    a = idx.generate_candidates(query, 5)
    b = idx.generate_candidates_brute_force(query, 5)
    assert [(m.entity_id, m.name_type) for m in a] == \
           [(m.entity_id, m.name_type) for m in b]
    for ma, mb in zip(a, b):
        assert ma.score == pytest.approx(mb.score, abs=1e-12)
