"""Pipeline orchestration: KB building, corpus preprocessing, stage running,
and training drivers. All cross-stage communication goes through files with
the JSONL/binary formats defined by the stage modules.
"""

from __future__ import annotations

import random
import time
from pathlib import Path

import torch

from . import OntolinkError
from .candgen import (CandidateSpan, LexicalIndex, candidate_record,
                      enumerate_candidate_spans, fit_tfidf_vectorizers)
from .config import PipelineConfig
from .encoder import Vocabulary, load_checkpoint, save_checkpoint, text_tokens
from .io_utils import read_blob, read_jsonl, write_blob, write_jsonl
from .kb import AliasTable, TypeHierarchy, build_alias_table, linker_text, \
    read_ontology_tsv, selector_text
from .linker import (SpanLinker, build_linker_sample, gold_entity_map,
                     link_records, train_linker)
from .metrics import PrfReport
from .preprocess import (Document, PreprocessReport, emit_iob2,
                         preprocess_document, read_abbrev_tsv, read_pubtator,
                         write_pubtator_predictions)
from .reports import write_json_report
from .selector import (SpanSelector, build_selector_samples, gold_sample_keys,
                       infer_greedy, infer_threshold, prediction_records,
                       score_samples, train_selector)
from .heads import BinningSpec


# ---------------------------------------------------------------------------
# KB
# ---------------------------------------------------------------------------

def build_kb(ontology_path, hierarchy_path, types_path, out_dir,
             cfg: PipelineConfig) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    hierarchy = TypeHierarchy.from_files(hierarchy_path, types_path)
    table = build_alias_table(read_ontology_tsv(ontology_path), hierarchy)
    tfidf_c, tfidf_w = fit_tfidf_vectorizers(
        [e.name for e in table.entries], cfg.lemmatize,
        cfg.char_vocab_size, cfg.word_vocab_size)
    index = LexicalIndex(table, tfidf_c, tfidf_w, cfg.k_w, cfg.lemmatize)
    table.save_jsonl(out / "alias.jsonl")
    write_blob(out / "vectorizers.bin",
               {"tfidf_c": tfidf_c.state(), "tfidf_w": tfidf_w.state()})
    write_blob(out / "index.bin", {"index": index.state(),
                                   "n_entries": len(table)})
    summary = {"entries": len(table),
               "by_name_type": table.counts_by_name_type(),
               "build_report": table.report.as_dict()}
    write_json_report(out / "kb_report.json", summary)
    return summary


def load_kb(kb_dir) -> tuple[AliasTable, LexicalIndex]:
    kb = Path(kb_dir)
    table = AliasTable.load_jsonl(kb / "alias.jsonl")
    blob = read_blob(kb / "index.bin")
    if blob["n_entries"] != len(table):
        raise OntolinkError(f"{kb}: index does not match alias table size")
    index = LexicalIndex.from_state(blob["index"], table)
    return table, index


# ---------------------------------------------------------------------------
# preprocessing
# ---------------------------------------------------------------------------

def preprocess_corpus(corpus_path, out_dir, abbrevs_path=None) -> PreprocessReport:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    raw_docs = read_pubtator(corpus_path)
    external = read_abbrev_tsv(abbrevs_path) if abbrevs_path else None
    report = PreprocessReport()
    docs = []
    for raw in raw_docs:
        defs = external.get(raw.doc_id, []) if external is not None else None
        docs.append(preprocess_document(raw, report, external_defs=defs))
    write_jsonl(out / "docs.jsonl", (d.to_record() for d in docs))
    iob_dir = out / "iob2"
    iob_dir.mkdir(exist_ok=True)
    for d in docs:
        (iob_dir / f"{d.doc_id}.iob2").write_text(emit_iob2(d), encoding="utf-8")
    write_json_report(out / "preprocess_report.json", report.as_dict())
    return report


def load_docs(docs_dir) -> dict[str, Document]:
    path = Path(docs_dir)
    if path.is_dir():
        path = path / "docs.jsonl"
    docs = [Document.from_record(r) for r in read_jsonl(path)]
    return {d.doc_id: d for d in docs}


# ---------------------------------------------------------------------------
# stage running
# ---------------------------------------------------------------------------

def run_candgen(docs: dict[str, Document], index: LexicalIndex,
                cfg: PipelineConfig):
    for doc_id in sorted(docs):
        doc = docs[doc_id]
        for span in enumerate_candidate_spans(doc, cfg.k_s):
            matches = index.generate_candidates(span.text, cfg.k_m)
            yield candidate_record(span, matches)


def run_select(linked_records, docs, table, selector: SpanSelector,
               vocab: Vocabulary, cfg: PipelineConfig, mode: str, tau: float):
    samples = []
    for rec in linked_records:
        doc = docs[rec["doc_id"]]
        samples.extend(build_selector_samples(
            rec, doc, table, vocab, cfg.encoder.max_seq_len))
    scores = (score_samples(selector, samples, cfg.selector_train.batch_size)
              if samples else [])
    if mode == "greedy":
        selected = infer_greedy(samples, scores, tau)
    else:
        selected = infer_threshold(samples, scores, tau)
    return list(prediction_records(selected, docs))


def run_all(kb_dir, in_dir, linker_path, selector_path, out_dir,
            cfg: PipelineConfig, mode: str, tau: float, stage: str = "all",
            log=print) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    table, index = load_kb(kb_dir)
    docs = load_docs(in_dir)
    timings = {}

    def timed(name, fn):
        t0 = time.perf_counter()
        result = fn()
        timings[name] = time.perf_counter() - t0
        log(f"stage {name}: {timings[name]:.2f}s")
        return result

    if stage in ("candgen", "all"):
        records = timed("candgen",
                        lambda: list(run_candgen(docs, index, cfg)))
        write_jsonl(out / "candidates.jsonl", records)
    else:
        records = list(read_jsonl(Path(in_dir) / "candidates.jsonl"))

    if stage in ("link", "all"):
        blob = load_checkpoint(linker_path)
        if blob["kind"] != "linker":
            raise OntolinkError(f"{linker_path} is not a linker checkpoint")
        model = SpanLinker.from_config(blob["config"])
        model.load_state_dict(blob["state_dict"])
        vocab = blob["vocab"]
        linked = timed("link", lambda: list(
            link_records(records, docs, table, model, vocab, cfg)))
        write_jsonl(out / "linked.jsonl", linked)
    elif stage == "select":
        linked = list(read_jsonl(Path(in_dir) / "linked.jsonl"))
    else:
        linked = None

    if stage in ("select", "all"):
        blob = load_checkpoint(selector_path)
        if blob["kind"] != "selector":
            raise OntolinkError(f"{selector_path} is not a selector checkpoint")
        model = SpanSelector.from_config(blob["config"])
        model.load_state_dict(blob["state_dict"])
        vocab = blob["vocab"]
        preds = timed("select", lambda: run_select(
            linked, docs, table, model, vocab, cfg, mode, tau))
        write_jsonl(out / "predictions.jsonl", preds)
        write_pubtator_predictions(out / "predictions.pubtator", docs, preds)
    write_json_report(out / "timings.json", timings)


# ---------------------------------------------------------------------------
# training drivers
# ---------------------------------------------------------------------------

def build_vocabulary(docs: dict[str, Document], table: AliasTable) -> Vocabulary:
    streams = []
    for doc_id in sorted(docs):
        for si in range(len(docs[doc_id].sentences)):
            streams.append([t.lower() for t in docs[doc_id].sentence_tokens(si)])
    for e in table.entries:
        streams.append(text_tokens(linker_text(table, e.entity_id)))
        streams.append(text_tokens(selector_text(table, e)))
    return Vocabulary.build(streams)


def split_docs(docs: dict[str, Document], val_frac: float = 0.1,
               seed: int = 13) -> tuple[dict, dict]:
    ids = sorted(docs)
    rng = random.Random(seed)
    rng.shuffle(ids)
    n_val = max(1, int(len(ids) * val_frac)) if len(ids) > 1 else 0
    val_ids = set(ids[:n_val])
    train = {i: docs[i] for i in ids if i not in val_ids}
    val = {i: docs[i] for i in sorted(val_ids)}
    return train, val


def _gold_span_samples(docs, index, table, vocab, cfg):
    """Linker training samples: one per gold mention, candidates generated
    for the gold span; mentions whose gold entity is not retrieved keep
    gold=None and are excluded (counted) by the trainer."""
    samples = []
    for doc_id in sorted(docs):
        doc = docs[doc_id]
        gold = gold_entity_map(doc)
        for m in doc.mentions:
            text = " ".join(doc.sentence_tokens(m.sentence)[m.start:m.end])
            matches = index.generate_candidates(text, cfg.k_m)
            rec = candidate_record(
                CandidateSpan(doc_id, m.sentence, m.start, m.end, text), matches)
            sample = build_linker_sample(rec, doc, table, vocab,
                                         cfg.encoder.max_seq_len, gold)
            if sample is not None:
                samples.append(sample)
    return samples


def train_link_stage(kb_dir, corpus_dir, cfg: PipelineConfig, out_path,
                     log=print) -> list[dict]:
    table, index = load_kb(kb_dir)
    docs = load_docs(corpus_dir)
    val_path = Path(corpus_dir) / "docs_val.jsonl"
    if val_path.exists():
        train_docs, val_docs = docs, load_docs(val_path)
    else:
        train_docs, val_docs = split_docs(docs, seed=cfg.seed)
    vocab = build_vocabulary(docs, table)
    model = SpanLinker(cfg.encoder, len(vocab), BinningSpec.of(cfg.bin_s),
                       cfg.feature_emb_dim, cfg.head_hidden, cfg.head_dropout)
    train_samples = _gold_span_samples(train_docs, index, table, vocab, cfg)
    val_samples = _gold_span_samples(val_docs, index, table, vocab, cfg)
    history = train_linker(model, train_samples, val_samples,
                           cfg.linker_train, log=log)
    save_checkpoint(out_path, "linker", model, vocab, model.model_config())
    return history


def train_select_stage(kb_dir, corpus_dir, linker_path, cfg: PipelineConfig,
                       out_path, w_pos: float | None = None,
                       log=print) -> list[dict]:
    table, index = load_kb(kb_dir)
    docs = load_docs(corpus_dir)
    val_path = Path(corpus_dir) / "docs_val.jsonl"
    if val_path.exists():
        train_docs, val_docs = docs, load_docs(val_path)
    else:
        train_docs, val_docs = split_docs(docs, seed=cfg.seed)
    blob = load_checkpoint(linker_path)
    if blob["kind"] != "linker":
        raise OntolinkError(f"{linker_path} is not a linker checkpoint")
    linker = SpanLinker.from_config(blob["config"])
    linker.load_state_dict(blob["state_dict"])
    vocab = blob["vocab"]

    def selector_samples(doc_map):
        records = run_candgen(doc_map, index, cfg)
        samples = []
        rng = random.Random(cfg.seed)
        for rec in link_records(records, doc_map, table, linker, vocab, cfg):
            doc = doc_map[rec["doc_id"]]
            gold = gold_sample_keys(doc)
            for s in build_selector_samples(rec, doc, table, vocab,
                                            cfg.encoder.max_seq_len, gold):
                if (not s.label and cfg.negative_subsample < 1.0
                        and rng.random() > cfg.negative_subsample):
                    continue
                samples.append(s)
        return samples

    train_samples = selector_samples(train_docs)
    val_samples = selector_samples(val_docs)
    val_gold = {doc_id: {m.entity_id for m in d.mentions}
                for doc_id, d in val_docs.items()}
    model = SpanSelector(cfg.encoder, len(vocab), BinningSpec.of(cfg.bin_s),
                         BinningSpec.of(cfg.bin_l), cfg.feature_emb_dim,
                         cfg.head_hidden, cfg.head_dropout)
    history = train_selector(model, train_samples, val_samples, val_gold,
                             cfg.selector_train, cfg.margin,
                             w_pos if w_pos is not None else cfg.w_pos,
                             cfg.tau, log=log)
    save_checkpoint(out_path, "selector", model, vocab, model.model_config())
    return history
