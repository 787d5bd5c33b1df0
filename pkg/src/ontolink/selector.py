"""Linked span selection: scores (span, entity, p) triples with a second
cross-encoder, trains with a thresholded max-margin loss, and offers
Threshold and Greedy inference.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass

import torch
from torch import nn

from . import OntolinkError
from .config import EncoderConfig, PipelineConfig, TrainConfig
from .encoder import (CrossEncoder, CrossInput, Vocabulary, build_cross_input,
                      collate)
from .heads import BinningSpec, FeedForwardHead, bin_index
from .kb import AliasEntry, AliasTable, NameType, selector_text
from .preprocess import Document
from .training import set_seed, warmup_linear_decay


class SpanSelector(nn.Module):
    """Score head: FF_S([pooled, Emb(name type), s_e, Emb(bin_S(s_e)),
    p, Emb(bin_L(p))])."""

    def __init__(self, encoder_cfg: EncoderConfig, vocab_size: int,
                 bin_s: BinningSpec, bin_l: BinningSpec, emb_dim: int = 8,
                 head_hidden: tuple[int, int] = (1024, 256),
                 head_dropout: float = 0.1):
        super().__init__()
        self.encoder = CrossEncoder(encoder_cfg, vocab_size)
        self.bin_s = bin_s
        self.bin_l = bin_l
        self.name_type_emb = nn.Embedding(len(NameType), emb_dim)
        self.bin_s_emb = nn.Embedding(bin_s.n_bins, emb_dim)
        self.bin_l_emb = nn.Embedding(bin_l.n_bins, emb_dim)
        self.head = FeedForwardHead(encoder_cfg.hidden + 3 * emb_dim + 2,
                                    head_hidden, head_dropout)
        self._model_config = {
            "encoder": vars(encoder_cfg).copy(), "vocab_size": vocab_size,
            "bin_s": list(bin_s.boundaries), "bin_l": list(bin_l.boundaries),
            "emb_dim": emb_dim, "head_hidden": list(head_hidden),
            "head_dropout": head_dropout,
        }

    @classmethod
    def from_config(cls, config: dict) -> "SpanSelector":
        return cls(EncoderConfig(**config["encoder"]), config["vocab_size"],
                   BinningSpec.of(config["bin_s"]), BinningSpec.of(config["bin_l"]),
                   config["emb_dim"], tuple(config["head_hidden"]),
                   config["head_dropout"])

    def model_config(self) -> dict:
        return copy.deepcopy(self._model_config)

    def forward(self, inputs: list[CrossInput], name_types, scores, probs):
        dtype = self.name_type_emb.weight.dtype
        device = self.name_type_emb.weight.device
        tok, seg, mm, att = collate(inputs, device=device, dtype=dtype)
        pooled = self.encoder(tok, seg, mm, att)
        nt = torch.as_tensor(name_types, dtype=torch.long, device=device)
        s = torch.as_tensor(scores, dtype=dtype, device=device)
        p = torch.as_tensor(probs, dtype=dtype, device=device)
        sbins = torch.as_tensor([bin_index(x, self.bin_s) for x in scores],
                                dtype=torch.long, device=device)
        pbins = torch.as_tensor([bin_index(x, self.bin_l) for x in probs],
                                dtype=torch.long, device=device)
        feats = torch.cat([pooled, self.name_type_emb(nt), s.unsqueeze(-1),
                           self.bin_s_emb(sbins), p.unsqueeze(-1),
                           self.bin_l_emb(pbins)], dim=-1)
        return self.head(feats)


def selector_loss(score, positive, margin: float = 1.0, w_pos: float = 1.0):
    """Thresholded max-margin loss.

    Positive samples: w_pos * max(0, margin - s); negatives: max(0, margin + s).
    Works elementwise on tensors or on Python floats.
    """
    s = torch.as_tensor(score, dtype=torch.get_default_dtype()) \
        if not torch.is_tensor(score) else score
    pos = torch.as_tensor(positive, dtype=torch.bool) \
        if not torch.is_tensor(positive) else positive.bool()
    loss = torch.where(pos,
                       w_pos * torch.clamp(margin - s, min=0.0),
                       torch.clamp(margin + s, min=0.0))
    if loss.dim() == 0:
        return loss
    return loss


# ---------------------------------------------------------------------------
# samples
# ---------------------------------------------------------------------------

@dataclass
class SelectorSample:
    doc_id: str
    sentence: int
    start: int
    end: int
    entity_id: str
    type_id: str
    alias: str
    name_type: int
    s_e: float
    p: float
    input: CrossInput
    label: bool = False


def build_selector_samples(linked_rec: dict, doc: Document, table: AliasTable,
                           vocab: Vocabulary, max_len: int = 128,
                           gold: set | None = None) -> list[SelectorSample]:
    """One sample per linked candidate of the record. A sample is positive
    iff span boundaries and entity both match a gold mention."""
    sent = doc.sentence_tokens(linked_rec["sentence"])
    out = []
    for m in linked_rec["matches"]:
        entry = AliasEntry(name=m["alias"], entity_id=m["entity_id"],
                           type_id=m["type_id"],
                           type_name=m.get("type_name", m["type_id"]),
                           name_type=NameType[m["name_type"]])
        inp = build_cross_input(sent, linked_rec["start"], linked_rec["end"],
                                selector_text(table, entry), vocab, max_len)
        key = (linked_rec["sentence"], linked_rec["start"], linked_rec["end"],
               m["entity_id"])
        out.append(SelectorSample(
            doc_id=linked_rec["doc_id"], sentence=linked_rec["sentence"],
            start=linked_rec["start"], end=linked_rec["end"],
            entity_id=m["entity_id"], type_id=m["type_id"], alias=m["alias"],
            name_type=int(NameType[m["name_type"]]), s_e=m["score"], p=m["p"],
            input=inp, label=bool(gold and key in gold)))
    return out


def gold_sample_keys(doc: Document) -> set:
    return {(m.sentence, m.start, m.end, m.entity_id) for m in doc.mentions}


def score_samples(model: SpanSelector, samples: list[SelectorSample],
                  batch_size: int = 64) -> list[float]:
    model.eval()
    scores: list[float] = []
    with torch.no_grad():
        for i in range(0, len(samples), batch_size):
            batch = samples[i:i + batch_size]
            s = model([b.input for b in batch], [b.name_type for b in batch],
                      [b.s_e for b in batch], [b.p for b in batch])
            scores.extend(s.tolist())
    return scores


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

def train_selector(model: SpanSelector, train_samples: list[SelectorSample],
                   val_samples: list[SelectorSample], val_gold_doc_entities,
                   tc: TrainConfig, margin: float = 1.0, w_pos: float = 1.0,
                   tau: float = 0.0, log=None) -> list[dict]:
    """Batched hinge training; early stopping keeps the checkpoint with the
    best validation document-level F1 (threshold inference at tau)."""
    from .metrics import document_level_prf

    if not any(s.label for s in train_samples):
        raise OntolinkError("no positive selector samples")
    set_seed(tc.seed)
    opt = torch.optim.Adam(model.parameters(), lr=tc.lr)
    n_batches = (len(train_samples) + tc.batch_size - 1) // tc.batch_size
    sched = warmup_linear_decay(opt, tc.max_epochs * n_batches, tc.warmup_frac)
    gen = torch.Generator().manual_seed(tc.seed)
    best_f1, best_state = -1.0, None
    history: list[dict] = []
    for epoch in range(tc.max_epochs):
        model.train()
        order = torch.randperm(len(train_samples), generator=gen).tolist()
        total, count = 0.0, 0
        for b in range(0, len(order), tc.batch_size):
            batch = [train_samples[i] for i in order[b:b + tc.batch_size]]
            opt.zero_grad(set_to_none=True)
            s = model([x.input for x in batch], [x.name_type for x in batch],
                      [x.s_e for x in batch], [x.p for x in batch])
            labels = torch.tensor([x.label for x in batch], device=s.device)
            loss = selector_loss(s, labels, margin, w_pos).mean()
            loss.backward()
            opt.step()
            sched.step()
            total += float(loss.detach()) * len(batch)
            count += len(batch)
        val_f1 = _validation_doc_f1(model, val_samples, val_gold_doc_entities,
                                    tau, tc.batch_size, document_level_prf)
        history.append({"epoch": epoch, "train_loss": total / max(count, 1),
                        "val_doc_f1": val_f1, "w_pos": w_pos})
        if log:
            log(f"selector epoch {epoch}: loss={total / max(count, 1):.4f} "
                f"val_doc_f1={val_f1:.4f}")
        if val_f1 > best_f1:
            best_f1 = val_f1
            best_state = copy.deepcopy(model.state_dict())
    if best_state is not None:
        model.load_state_dict(best_state)
    return history


def _validation_doc_f1(model, val_samples, gold_doc_entities, tau,
                       batch_size, document_level_prf) -> float:
    if not val_samples:
        return 0.0
    scores = score_samples(model, val_samples, batch_size)
    preds = infer_threshold(val_samples, scores, tau)
    pred_pairs = {(p.doc_id, p.entity_id) for p, _ in preds}
    gold_pairs = {(d, e) for d, ents in gold_doc_entities.items() for e in ents}
    return document_level_prf(gold_pairs, pred_pairs).f1


def sweep_w_pos(make_model, train_samples, val_samples, val_gold_doc_entities,
                tc: TrainConfig, margin: float, tau: float, grid,
                log=None) -> list[dict]:
    """Train one selector per W_+ value; returns one validation row each."""
    rows = []
    for w in grid:
        model = make_model()
        history = train_selector(model, train_samples, val_samples,
                                 val_gold_doc_entities, tc, margin, w, tau,
                                 log=log)
        best = max(h["val_doc_f1"] for h in history)
        rows.append({"w_pos": w, "val_doc_f1": best})
        if log:
            log(f"w_pos={w}: best val doc F1 = {best:.4f}")
    return rows


# ---------------------------------------------------------------------------
# inference
# ---------------------------------------------------------------------------

def infer_threshold(samples: list[SelectorSample], scores: list[float],
                    tau: float = 0.0) -> list[tuple[SelectorSample, float]]:
    """Every sample with score strictly above tau; overlaps permitted."""
    return [(smp, sc) for smp, sc in zip(samples, scores) if sc > tau]


def _overlap(a: SelectorSample, b: SelectorSample) -> bool:
    return (a.doc_id == b.doc_id and a.sentence == b.sentence
            and a.start < b.end and b.start < a.end)


def infer_greedy(samples: list[SelectorSample], scores: list[float],
                 tau: float = 0.0) -> list[tuple[SelectorSample, float]]:
    """Non-overlapping subset of the threshold output: repeatedly take the
    earliest-starting remaining candidate, pick the highest scorer among
    those overlapping it, emit it, and drop everything it overlaps.

    Ties on score break by earlier start, then longer span, then entity_id.
    """
    remaining = infer_threshold(samples, scores, tau)
    out: list[tuple[SelectorSample, float]] = []
    by_doc: dict[tuple, list[tuple[SelectorSample, float]]] = {}
    for item in remaining:
        by_doc.setdefault((item[0].doc_id, item[0].sentence), []).append(item)
    for key in sorted(by_doc):
        group = by_doc[key]
        while group:
            earliest = min(group, key=lambda it: (it[0].start, it[0].end,
                                                  it[0].entity_id))
            overlapping = [it for it in group if _overlap(it[0], earliest[0])]
            winner = min(overlapping,
                         key=lambda it: (-it[1], it[0].start,
                                         -(it[0].end - it[0].start),
                                         it[0].entity_id))
            out.append(winner)
            group = [it for it in group if not _overlap(it[0], winner[0])]
    out.sort(key=lambda it: (it[0].doc_id, it[0].sentence, it[0].start,
                             it[0].end, it[0].entity_id))
    return out


def prediction_records(selected: list[tuple[SelectorSample, float]],
                       docs: dict[str, Document]):
    for smp, sc in selected:
        doc = docs[smp.doc_id]
        cs, ce = doc.char_span(smp.sentence, smp.start, smp.end)
        yield {"doc_id": smp.doc_id, "sentence": smp.sentence,
               "start": smp.start, "end": smp.end,
               "char_start": cs, "char_end": ce,
               "entity_id": smp.entity_id, "type_id": smp.type_id,
               "alias": smp.alias, "name_type": NameType(smp.name_type).name,
               "s_e": smp.s_e, "p": smp.p, "score": sc}
