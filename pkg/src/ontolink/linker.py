"""Span linker: cross-encoder + feature head scoring of (span, candidate)
pairs, softmax over each span's candidates, cross-entropy training, and
top-K_L linked output per span.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass

import torch
from torch import nn
from torch.nn import functional as F

from . import OntolinkError
from .candgen import LexicalMatch, record_matches, record_span
from .config import EncoderConfig, PipelineConfig, TrainConfig
from .encoder import (CrossEncoder, CrossInput, Vocabulary, build_cross_input,
                      collate)
from .heads import BinningSpec, FeedForwardHead, bin_index
from .kb import AliasTable, NameType, linker_text
from .preprocess import Document
from .training import set_seed, warmup_linear_decay


class SpanLinker(nn.Module):
    """Logit head: FF_L([pooled, Emb(name type), s_e, Emb(bin_S(s_e))])."""

    def __init__(self, encoder_cfg: EncoderConfig, vocab_size: int,
                 bin_s: BinningSpec, emb_dim: int = 8,
                 head_hidden: tuple[int, int] = (1024, 256),
                 head_dropout: float = 0.1):
        super().__init__()
        self.encoder = CrossEncoder(encoder_cfg, vocab_size)
        self.bin_s = bin_s
        self.name_type_emb = nn.Embedding(len(NameType), emb_dim)
        self.bin_s_emb = nn.Embedding(bin_s.n_bins, emb_dim)
        self.head = FeedForwardHead(encoder_cfg.hidden + 2 * emb_dim + 1,
                                    head_hidden, head_dropout)
        self._model_config = {
            "encoder": vars(encoder_cfg).copy(), "vocab_size": vocab_size,
            "bin_s": list(bin_s.boundaries), "emb_dim": emb_dim,
            "head_hidden": list(head_hidden), "head_dropout": head_dropout,
        }

    @classmethod
    def from_config(cls, config: dict) -> "SpanLinker":
        return cls(EncoderConfig(**config["encoder"]), config["vocab_size"],
                   BinningSpec.of(config["bin_s"]), config["emb_dim"],
                   tuple(config["head_hidden"]), config["head_dropout"])

    def model_config(self) -> dict:
        return copy.deepcopy(self._model_config)

    def forward(self, inputs: list[CrossInput], name_types, scores) -> torch.Tensor:
        dtype = self.name_type_emb.weight.dtype
        device = self.name_type_emb.weight.device
        tok, seg, mm, att = collate(inputs, device=device, dtype=dtype)
        pooled = self.encoder(tok, seg, mm, att)
        nt = torch.as_tensor(name_types, dtype=torch.long, device=device)
        s = torch.as_tensor(scores, dtype=dtype, device=device)
        bins = torch.as_tensor([bin_index(x, self.bin_s) for x in scores],
                               dtype=torch.long, device=device)
        feats = torch.cat([pooled, self.name_type_emb(nt), s.unsqueeze(-1),
                           self.bin_s_emb(bins)], dim=-1)
        return self.head(feats)


def linker_distribution(logits: torch.Tensor) -> torch.Tensor:
    """Softmax over one span's candidate logits; empty in, empty out."""
    if logits.numel() == 0:
        return logits
    return torch.softmax(logits, dim=-1)


# ---------------------------------------------------------------------------
# sample assembly
# ---------------------------------------------------------------------------

@dataclass
class LinkerSample:
    doc_id: str
    span_key: tuple
    inputs: list[CrossInput]
    name_types: list[int]
    scores: list[float]
    matches: list[LexicalMatch]
    gold: int | None = None  # index of the gold candidate, if present


def build_linker_sample(rec: dict, doc: Document, table: AliasTable,
                        vocab: Vocabulary, max_len: int = 128,
                        gold_entities: dict | None = None) -> LinkerSample | None:
    """Turn one candidate-generation record into encoder-ready inputs.

    gold_entities maps (sentence, start, end) -> entity_id for the doc's
    gold mentions; when given, the sample's gold index is filled in.
    """
    matches = record_matches(rec)
    if not matches:
        return None
    sent = doc.sentence_tokens(rec["sentence"])
    inputs, nts, scores = [], [], []
    for m in matches:
        inputs.append(build_cross_input(
            sent, rec["start"], rec["end"], linker_text(table, m.entity_id),
            vocab, max_len))
        nts.append(int(m.name_type))
        scores.append(m.score)
    gold = None
    if gold_entities is not None:
        gold_eid = gold_entities.get((rec["sentence"], rec["start"], rec["end"]))
        if gold_eid is not None:
            for i, m in enumerate(matches):
                if m.entity_id == gold_eid:
                    gold = i
                    break
    return LinkerSample(doc_id=rec["doc_id"],
                        span_key=(rec["sentence"], rec["start"], rec["end"]),
                        inputs=inputs, name_types=nts, scores=scores,
                        matches=matches, gold=gold)


def gold_entity_map(doc: Document) -> dict:
    return {(m.sentence, m.start, m.end): m.entity_id for m in doc.mentions}


def linker_loss(model: SpanLinker, sample: LinkerSample) -> torch.Tensor:
    """Cross-entropy over one mention's candidate list."""
    if sample.gold is None:
        raise OntolinkError("linker_loss requires a sample with a gold index")
    logits = model(sample.inputs, sample.name_types, sample.scores)
    target = torch.tensor([sample.gold], device=logits.device)
    return F.cross_entropy(logits.unsqueeze(0), target)


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

def recall_at_1(model: SpanLinker, samples: list[LinkerSample]) -> float:
    model.eval()
    hits = 0
    with torch.no_grad():
        for s in samples:
            logits = model(s.inputs, s.name_types, s.scores)
            if int(torch.argmax(logits)) == s.gold:
                hits += 1
    return hits / len(samples) if samples else 0.0


def train_linker(model: SpanLinker, train_samples: list[LinkerSample],
                 val_samples: list[LinkerSample], tc: TrainConfig,
                 log=None) -> list[dict]:
    """One batch = all candidates of one mention; early stopping keeps the
    checkpoint with the best validation recall@1."""
    trainable = [s for s in train_samples if s.gold is not None]
    skipped = len(train_samples) - len(trainable)
    if not trainable:
        raise OntolinkError("no trainable linker samples (gold never retrieved)")
    val = [s for s in val_samples if s.gold is not None] or trainable
    set_seed(tc.seed)
    opt = torch.optim.Adam(model.parameters(), lr=tc.lr)
    sched = warmup_linear_decay(opt, tc.max_epochs * len(trainable),
                                tc.warmup_frac)
    gen = torch.Generator().manual_seed(tc.seed)
    best_recall, best_state = -1.0, None
    history: list[dict] = []
    for epoch in range(tc.max_epochs):
        model.train()
        order = torch.randperm(len(trainable), generator=gen).tolist()
        total = 0.0
        for i in order:
            opt.zero_grad(set_to_none=True)
            loss = linker_loss(model, trainable[i])
            loss.backward()
            opt.step()
            sched.step()
            total += float(loss.detach())
        rec = recall_at_1(model, val)
        history.append({"epoch": epoch, "train_loss": total / len(trainable),
                        "val_recall_at_1": rec, "skipped_no_gold": skipped})
        if log:
            log(f"linker epoch {epoch}: loss={total / len(trainable):.4f} "
                f"val_recall@1={rec:.4f}")
        if rec > best_recall:
            best_recall = rec
            best_state = copy.deepcopy(model.state_dict())
    if best_state is not None:
        model.load_state_dict(best_state)
    return history


# ---------------------------------------------------------------------------
# inference
# ---------------------------------------------------------------------------

def link_sample(model: SpanLinker, sample: LinkerSample, k_l: int) -> list[dict]:
    """Top-k_l candidates of one span with linker probabilities; ties break
    by higher lexical score, then entity_id."""
    model.eval()
    with torch.no_grad():
        logits = model(sample.inputs, sample.name_types, sample.scores)
        probs = linker_distribution(logits).tolist()
    order = sorted(range(len(probs)),
                   key=lambda i: (-probs[i], -sample.scores[i],
                                  sample.matches[i].entity_id))
    out = []
    for i in order[:k_l]:
        m = sample.matches[i]
        out.append({"entity_id": m.entity_id, "alias": m.alias,
                    "name_type": m.name_type.name, "type_id": m.type_id,
                    "type_name": m.type_name, "score": m.score, "p": probs[i]})
    return out


def link_records(records, docs: dict[str, Document], table: AliasTable,
                 model: SpanLinker, vocab: Vocabulary, cfg: PipelineConfig):
    """Extend candidate records with per-match p, truncated to K_L."""
    for rec in records:
        doc = docs[rec["doc_id"]]
        sample = build_linker_sample(rec, doc, table, vocab,
                                     cfg.encoder.max_seq_len)
        out = dict(rec)
        if sample is None:
            out["matches"] = []
        else:
            out["matches"] = link_sample(model, sample, cfg.k_l)
        yield out


def linked_record_span(rec: dict):
    return record_span(rec)
