"""Candidate generation: span enumeration plus lexical top-K retrieval.

Spans and alias names are lemmatized and embedded as L2-normalized TF-IDF
vectors over character 2-5-grams and word unigrams. The combined score is

    S_M(m, a) = (cos_char(m, a) + K_W * cos_word(m, a)) / (1 + K_W)

Retrieval runs over an inverted index with exact score accumulation; a
separate alias-major brute-force scorer exists as the equivalence oracle.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from . import OntolinkError
from .kb import AliasEntry, AliasTable, NameType
from .preprocess import Document

# compact English function-word stop list; endpoints of candidate spans
# may not be one of these (configurable at call sites)
DEFAULT_STOPLIST = frozenset("""
a about above after again against all also am an and any are as at be because
been before being below between both but by can cannot could did do does doing
down during each few for from further had has have having he her here hers
herself him himself his how i if in into is it its itself just me more most my
myself no nor not now of off on once only or other our ours ourselves out over
own same she should so some such than that the their theirs them themselves
then there these they this those through to too under until up upon very was we
were what when where which while who whom why will with within without would
you your yours yourself yourselves
""".split())

_WORD_RE = re.compile(r"[a-z0-9]+")


def lemmatize_token(word: str) -> str:
    """Lowercase plus small plural-stripping rules."""
    w = word.lower()
    if len(w) >= 5 and w.endswith("ies"):
        return w[:-3] + "y"
    if len(w) >= 5 and w.endswith(("ses", "xes", "zes", "ches", "shes")):
        return w[:-2]
    if len(w) >= 4 and w.endswith("s") and not w.endswith(("ss", "us", "is")):
        return w[:-1]
    return w


def prepare_text(text: str, lemmatize: bool = True) -> str:
    words = _WORD_RE.findall(text.lower())
    if lemmatize:
        words = [lemmatize_token(w) for w in words]
    return " ".join(words)


def char_ngrams(text: str, n_min: int = 2, n_max: int = 5) -> list[str]:
    out = []
    for n in range(n_min, n_max + 1):
        out.extend(text[i:i + n] for i in range(len(text) - n + 1))
    return out


@dataclass
class TfidfVectorizer:
    """Frequency-capped TF-IDF with smoothed IDF and L2 normalization.

    mode 'char' uses character 2-5-grams, 'word' uses word unigrams.
    Vocabulary is the max_features most frequent features, ties broken
    lexicographically, frozen after fit.
    """

    mode: str
    max_features: int = 200_000
    vocab: dict[str, int] = field(default_factory=dict)
    idf: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def features(self, prepared: str) -> list[str]:
        if self.mode == "char":
            return char_ngrams(prepared)
        return prepared.split()

    def fit(self, prepared_names: list[str]) -> "TfidfVectorizer":
        if not prepared_names:
            raise OntolinkError("cannot fit TF-IDF on an empty alias table")
        counts: Counter[str] = Counter()
        df: Counter[str] = Counter()
        for name in prepared_names:
            feats = self.features(name)
            counts.update(feats)
            df.update(set(feats))
        top = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[:self.max_features]
        self.vocab = {feat: i for i, (feat, _) in enumerate(top)}
        n_docs = len(prepared_names)
        self.idf = np.zeros(len(self.vocab))
        for feat, i in self.vocab.items():
            self.idf[i] = math.log((1.0 + n_docs) / (1.0 + df[feat])) + 1.0
        return self

    def vector(self, prepared: str) -> tuple[np.ndarray, np.ndarray]:
        """Sparse L2-normalized vector as (sorted indices, weights)."""
        tf: Counter[int] = Counter()
        for feat in self.features(prepared):
            idx = self.vocab.get(feat)
            if idx is not None:
                tf[idx] += 1
        if not tf:
            return np.zeros(0, dtype=np.int64), np.zeros(0)
        idx = np.fromiter(sorted(tf), dtype=np.int64, count=len(tf))
        w = np.array([tf[i] for i in idx], dtype=np.float64) * self.idf[idx]
        norm = np.linalg.norm(w)
        if norm > 0:
            w = w / norm
        return idx, w

    def state(self) -> dict:
        return {"mode": self.mode, "max_features": self.max_features,
                "vocab": self.vocab, "idf": self.idf}

    @classmethod
    def from_state(cls, state: dict) -> "TfidfVectorizer":
        return cls(mode=state["mode"], max_features=state["max_features"],
                   vocab=state["vocab"], idf=state["idf"])


def fit_tfidf_vectorizers(alias_names: list[str], lemmatize: bool = True,
                          char_vocab: int = 200_000, word_vocab: int = 200_000,
                          ) -> tuple[TfidfVectorizer, TfidfVectorizer]:
    prepared = [prepare_text(n, lemmatize) for n in alias_names]
    tfidf_c = TfidfVectorizer(mode="char", max_features=char_vocab).fit(prepared)
    tfidf_w = TfidfVectorizer(mode="word", max_features=word_vocab).fit(prepared)
    return tfidf_c, tfidf_w


def cosine(vec_a: tuple[np.ndarray, np.ndarray],
           vec_b: tuple[np.ndarray, np.ndarray]) -> float:
    """Dot product of two sorted sparse unit vectors (zero vector -> 0)."""
    ia, wa = vec_a
    ib, wb = vec_b
    if len(ia) == 0 or len(ib) == 0:
        return 0.0
    pos = np.searchsorted(ib, ia)
    pos = np.clip(pos, 0, len(ib) - 1)
    match = ib[pos] == ia
    return float(np.dot(wa[match], wb[pos[match]]))


# ---------------------------------------------------------------------------
# span enumeration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CandidateSpan:
    doc_id: str
    sentence: int
    start: int
    end: int
    text: str

    def span_key(self):
        return (self.doc_id, self.sentence, self.start, self.end)


def _is_punct(token: str) -> bool:
    return not any(c.isalnum() for c in token)


def enumerate_candidate_spans(doc: Document, k_s: int = 10,
                              stoplist=DEFAULT_STOPLIST) -> list[CandidateSpan]:
    """All in-sentence spans of <= k_s tokens whose endpoints are neither
    stop words nor punctuation tokens."""
    spans: list[CandidateSpan] = []
    for si, sent in enumerate(doc.sentences):
        toks = [t.text for t in sent]
        ok = [not (_is_punct(t) or t.lower() in stoplist) for t in toks]
        for i in range(len(toks)):
            if not ok[i]:
                continue
            for j in range(i + 1, min(i + k_s, len(toks)) + 1):
                if ok[j - 1]:
                    spans.append(CandidateSpan(
                        doc_id=doc.doc_id, sentence=si, start=i, end=j,
                        text=" ".join(toks[i:j])))
    return spans


# ---------------------------------------------------------------------------
# lexical index
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LexicalMatch:
    score: float
    alias: str
    entity_id: str
    type_id: str
    type_name: str
    name_type: NameType


class LexicalIndex:
    """Exact top-K retrieval over the alias table.

    Query route: inverted index (feature -> postings) with per-feature score
    accumulation. Oracle route: alias-major brute force that scores every
    stored (alias, feature) entry. Both compute the same cosines.
    """

    def __init__(self, table: AliasTable, tfidf_c: TfidfVectorizer,
                 tfidf_w: TfidfVectorizer, k_w: float = 0.5,
                 lemmatize: bool = True):
        self.table = table
        self.tfidf_c = tfidf_c
        self.tfidf_w = tfidf_w
        self.k_w = k_w
        self.lemmatize = lemmatize
        self.entries: list[AliasEntry] = table.entries
        self._build()

    def _build(self):
        self._modes = {}
        prepared = [prepare_text(e.name, self.lemmatize) for e in self.entries]
        for mode, vec in (("char", self.tfidf_c), ("word", self.tfidf_w)):
            n_feat = len(vec.vocab)
            feat_chunks, w_chunks, alias_chunks = [], [], []
            for ai, text in enumerate(prepared):
                idx, w = vec.vector(text)
                feat_chunks.append(idx)
                w_chunks.append(w)
                alias_chunks.append(np.full(len(idx), ai, dtype=np.int64))
            feats = np.concatenate(feat_chunks) if feat_chunks else np.zeros(0, np.int64)
            ws = np.concatenate(w_chunks) if w_chunks else np.zeros(0)
            aliases = np.concatenate(alias_chunks) if alias_chunks else np.zeros(0, np.int64)
            # group by feature (CSC layout) for the inverted index
            order = np.argsort(feats, kind="stable")
            gfeat, gw, galias = feats[order], ws[order], aliases[order]
            indptr = np.zeros(n_feat + 1, dtype=np.int64)
            np.add.at(indptr, gfeat + 1, 1)
            indptr = np.cumsum(indptr)
            self._modes[mode] = {
                "vec": vec,
                # alias-major arrays (brute-force route)
                "bf_feat": feats, "bf_w": ws, "bf_alias": aliases,
                # feature-major postings (inverted-index route)
                "indptr": indptr, "post_alias": galias, "post_w": gw,
            }

    def _query_vectors(self, span_text: str):
        prepared = prepare_text(span_text, self.lemmatize)
        return {mode: m["vec"].vector(prepared) for mode, m in self._modes.items()}

    def _combine(self, char_scores: np.ndarray, word_scores: np.ndarray) -> np.ndarray:
        return (char_scores + self.k_w * word_scores) / (1.0 + self.k_w)

    def score_all(self, span_text: str) -> np.ndarray:
        """Inverted-index route: S_M against every alias entry."""
        per_mode = {}
        qvecs = self._query_vectors(span_text)
        for mode, m in self._modes.items():
            scores = np.zeros(len(self.entries))
            qidx, qw = qvecs[mode]
            indptr, post_alias, post_w = m["indptr"], m["post_alias"], m["post_w"]
            for f, w in zip(qidx, qw):
                s, e = indptr[f], indptr[f + 1]
                scores[post_alias[s:e]] += w * post_w[s:e]
            per_mode[mode] = scores
        return self._combine(per_mode["char"], per_mode["word"])

    def score_all_brute_force(self, span_text: str) -> np.ndarray:
        """Brute-force route: densify the query, score every stored entry."""
        per_mode = {}
        qvecs = self._query_vectors(span_text)
        for mode, m in self._modes.items():
            qdense = np.zeros(len(m["vec"].vocab) + 1)
            qidx, qw = qvecs[mode]
            qdense[qidx] = qw
            contrib = qdense[m["bf_feat"]] * m["bf_w"]
            scores = np.zeros(len(self.entries))
            np.add.at(scores, m["bf_alias"], contrib)
            per_mode[mode] = scores
        return self._combine(per_mode["char"], per_mode["word"])

    def lexical_similarity(self, span_text: str, alias_name: str) -> float:
        """Pairwise S_M between a span and one alias string."""
        pm = prepare_text(span_text, self.lemmatize)
        pa = prepare_text(alias_name, self.lemmatize)
        cc = cosine(self.tfidf_c.vector(pm), self.tfidf_c.vector(pa))
        cw = cosine(self.tfidf_w.vector(pm), self.tfidf_w.vector(pa))
        return (cc + self.k_w * cw) / (1.0 + self.k_w)

    def rank_and_dedup(self, scores: np.ndarray, k_m: int) -> list[LexicalMatch]:
        """Sort by (name type best-first, score desc), keep the first entry
        per entity, truncate to k_m. Scores are rounded to 12 decimals in
        the sort key only, so float-ulp ties cannot reorder across routes."""
        nz = np.flatnonzero(scores > 0)
        keyed = sorted(
            nz, key=lambda i: (self.entries[i].name_type, -round(scores[i], 12),
                               self.entries[i].entity_id, self.entries[i].name))
        out: list[LexicalMatch] = []
        seen: set[str] = set()
        for i in keyed:
            e = self.entries[i]
            if e.entity_id in seen:
                continue
            seen.add(e.entity_id)
            out.append(LexicalMatch(score=float(scores[i]), alias=e.name,
                                    entity_id=e.entity_id, type_id=e.type_id,
                                    type_name=e.type_name, name_type=e.name_type))
            if len(out) >= k_m:
                break
        return out

    def generate_candidates(self, span_text: str, k_m: int = 50) -> list[LexicalMatch]:
        return self.rank_and_dedup(self.score_all(span_text), k_m)

    def generate_candidates_brute_force(self, span_text: str,
                                        k_m: int = 50) -> list[LexicalMatch]:
        return self.rank_and_dedup(self.score_all_brute_force(span_text), k_m)

    # ---- serialization -------------------------------------------------

    def state(self) -> dict:
        return {"k_w": self.k_w, "lemmatize": self.lemmatize,
                "tfidf_c": self.tfidf_c.state(), "tfidf_w": self.tfidf_w.state()}

    @classmethod
    def from_state(cls, state: dict, table: AliasTable) -> "LexicalIndex":
        return cls(table=table,
                   tfidf_c=TfidfVectorizer.from_state(state["tfidf_c"]),
                   tfidf_w=TfidfVectorizer.from_state(state["tfidf_w"]),
                   k_w=state["k_w"], lemmatize=state["lemmatize"])


# ---------------------------------------------------------------------------
# JSONL records
# ---------------------------------------------------------------------------

def candidate_record(span: CandidateSpan, matches: list[LexicalMatch]) -> dict:
    return {
        "doc_id": span.doc_id, "sentence": span.sentence,
        "start": span.start, "end": span.end, "text": span.text,
        "matches": [
            {"entity_id": m.entity_id, "alias": m.alias,
             "name_type": m.name_type.name, "type_id": m.type_id,
             "type_name": m.type_name, "score": m.score}
            for m in matches],
    }


def record_span(rec: dict) -> CandidateSpan:
    return CandidateSpan(doc_id=rec["doc_id"], sentence=rec["sentence"],
                         start=rec["start"], end=rec["end"], text=rec["text"])


def record_matches(rec: dict) -> list[LexicalMatch]:
    return [LexicalMatch(score=m["score"], alias=m["alias"],
                         entity_id=m["entity_id"], type_id=m["type_id"],
                         type_name=m.get("type_name", m["type_id"]),
                         name_type=NameType[m["name_type"]])
            for m in rec["matches"]]
