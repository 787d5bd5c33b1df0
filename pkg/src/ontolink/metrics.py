"""Evaluation metrics: mention-level (CoNLL-style exact match), document-level
entity sets, typed NER, recall@K, per-stage recall, seen/unseen and acronym
subsets, false-positive breakdown, and the raw-corpus lower bound.

Mention keys are (doc_id, sentence, start, end, entity_id); typed keys swap
entity_id for type_id. All averaging is micro (counts pooled over documents);
zero denominators report 0 with a flag.
"""

from __future__ import annotations

from dataclasses import dataclass, field


MentionKey = tuple  # (doc_id, sentence, start, end, entity_id)


@dataclass
class PrfReport:
    tp: int
    fp: int
    fn: int
    duplicates: int = 0
    flags: list[str] = field(default_factory=list)

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if (self.tp + self.fp) else 0.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if (self.tp + self.fn) else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if (p + r) else 0.0

    def __post_init__(self):
        if self.tp + self.fp == 0 and "zero_precision_denominator" not in self.flags:
            self.flags.append("zero_precision_denominator")
        if self.tp + self.fn == 0 and "zero_recall_denominator" not in self.flags:
            self.flags.append("zero_recall_denominator")

    def as_dict(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "fn": self.fn,
                "precision": self.precision, "recall": self.recall,
                "f1": self.f1, "duplicates": self.duplicates,
                "flags": list(self.flags)}


def _exact_match_prf(gold, predicted) -> PrfReport:
    gold_set = set(gold)
    pred_list = list(predicted)
    pred_set = set(pred_list)
    duplicates = len(pred_list) - len(pred_set)
    tp = len(gold_set & pred_set)
    flags = ["duplicate_predictions"] if duplicates else []
    return PrfReport(tp=tp, fp=len(pred_set) - tp, fn=len(gold_set) - tp,
                     duplicates=duplicates, flags=flags)


def mention_level_prf(gold, predicted) -> PrfReport:
    """Exact (doc, span, entity) match; duplicates counted once and flagged."""
    return _exact_match_prf(gold, predicted)


def document_level_prf(gold_pairs, pred_pairs) -> PrfReport:
    """Per-document deduplicated entity sets, micro-averaged.

    Arguments are iterables of (doc_id, entity_id) pairs; mention locations
    are ignored by construction.
    """
    return _exact_match_prf(set(gold_pairs), set(pred_pairs))


def ner_prf(gold_typed, pred_typed) -> PrfReport:
    """Typed entity recognition: match on (doc, span, semantic type)."""
    return _exact_match_prf(set(gold_typed), set(pred_typed))


def recall_at_k(candidates: dict, gold_mentions, ks) -> dict[int, float]:
    """candidates: span key -> ordered entity_id list; gold_mentions:
    iterable of (span_key, entity_id). Recall@k over gold mentions."""
    gold = list(gold_mentions)
    out = {}
    for k in ks:
        hits = sum(1 for key, eid in gold if eid in candidates.get(key, [])[:k])
        out[int(k)] = hits / len(gold) if gold else 0.0
    return out


def stage_recall(stages, gold_keys) -> list[dict]:
    """Per-stage recall normalized to the ground truth present in the
    stage's input. stages: iterable of (name, input_keys, output_keys)."""
    gold = set(gold_keys)
    rows = []
    for name, inp, outp in stages:
        present = gold & set(inp)
        recovered = present & set(outp)
        rows.append({
            "stage": name,
            "gold_in_input": len(present),
            "gold_in_output": len(recovered),
            "recall": len(recovered) / len(present) if present else None,
        })
    return rows


def subset_prf(gold, predicted, seen_entities: set, subset: str) -> PrfReport:
    """Restrict both sides to mentions of seen (or unseen) entities.

    seen_entities: entity ids mentioned in the training gold.
    """
    if subset not in ("seen", "unseen"):
        raise ValueError("subset must be 'seen' or 'unseen'")

    def keep(key):
        inside = key[-1] in seen_entities
        return inside if subset == "seen" else not inside

    return _exact_match_prf((k for k in gold if keep(k)),
                            (k for k in predicted if keep(k)))


def acronym_prf(gold, predicted, acronym_pred_keys: set) -> PrfReport:
    """Predictions whose winning lexical match was an acronym, compared
    against gold mentions on the same spans."""
    pred = [k for k in predicted if k in acronym_pred_keys]
    spans = {k[:-1] for k in pred}
    gold_same_spans = [k for k in gold if k[:-1] in spans]
    return _exact_match_prf(gold_same_spans, pred)


@dataclass
class ErrorBreakdown:
    total_fp: int
    correct_span_bad_entity: float
    correct_span_and_type: float
    correct_entity_overlapping_true_span: float
    correct_entity_containing_true_span: float

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def error_breakdown(gold_typed_mentions, predictions) -> ErrorBreakdown:
    """Classify false positives (fractions of total FPs; categories follow
    the nesting where correct-span-and-type is a sub-count of
    correct-span-bad-entity).

    Both arguments are iterables of (doc, sentence, start, end, entity, type).
    """
    gold = list(gold_typed_mentions)
    gold_keys = {g[:5] for g in gold}
    gold_by_span = {}
    gold_by_doc_entity = {}
    for g in gold:
        gold_by_span.setdefault(g[:4], []).append(g)
        gold_by_doc_entity.setdefault((g[0], g[4]), []).append(g)
    fps = [p for p in predictions if p[:5] not in gold_keys]
    n = len(fps)
    span_bad_entity = span_and_type = overlapping = containing = 0
    for p in fps:
        doc, sent, start, end, entity, type_id = p
        same_span = gold_by_span.get((doc, sent, start, end), [])
        if same_span:
            span_bad_entity += 1
            if any(g[5] == type_id for g in same_span):
                span_and_type += 1
        for g in gold_by_doc_entity.get((doc, entity), []):
            gs, ge = g[2], g[3]
            if g[1] != sent or (gs, ge) == (start, end):
                continue
            if start <= gs and ge <= end:
                containing += 1
                break
            if gs < end and start < ge:
                overlapping += 1
                break

    def frac(x):
        return x / n if n else 0.0

    return ErrorBreakdown(
        total_fp=n,
        correct_span_bad_entity=frac(span_bad_entity),
        correct_span_and_type=frac(span_and_type),
        correct_entity_overlapping_true_span=frac(overlapping),
        correct_entity_containing_true_span=frac(containing),
    )


def raw_corpus_lower_bound(report: PrfReport, dropped_mentions: int) -> PrfReport:
    """Conservative bound against the unprocessed corpus: every mention
    dropped during preprocessing becomes a false negative."""
    return PrfReport(tp=report.tp, fp=report.fp,
                     fn=report.fn + dropped_mentions,
                     duplicates=report.duplicates,
                     flags=list(report.flags) + ["raw_corpus_lower_bound"])
