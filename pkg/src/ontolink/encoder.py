"""From-scratch cross-encoder: paired mention/entity input building, a small
pre-norm transformer with a mention-marker vector, pooled [CLS] output, and
a finite-difference gradient checker.

No pretrained weights are used; parameter count depends only on the config
and vocabulary, never on the number of entities in the KB.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn

from . import OntolinkError
from .config import EncoderConfig

PAD, UNK, CLS, SEP = "[PAD]", "[UNK]", "[CLS]", "[SEP]"
SPECIALS = (PAD, UNK, CLS, SEP)

_TOKEN_RE = re.compile(r"[a-z0-9]+|[^\sa-z0-9]")

CHECKPOINT_VERSION = 1


def text_tokens(text: str) -> list[str]:
    """Lowercased whitespace + punctuation split used for encoder inputs."""
    return _TOKEN_RE.findall(text.lower())


@dataclass
class Vocabulary:
    token_to_id: dict[str, int]

    def __post_init__(self):
        for i, sp in enumerate(SPECIALS):
            if self.token_to_id.get(sp) != i:
                raise OntolinkError("vocabulary special tokens misplaced")

    def __len__(self) -> int:
        return len(self.token_to_id)

    @property
    def pad_id(self) -> int:
        return 0

    @property
    def unk_id(self) -> int:
        return 1

    @property
    def cls_id(self) -> int:
        return 2

    @property
    def sep_id(self) -> int:
        return 3

    def encode(self, tokens: list[str]) -> list[int]:
        get = self.token_to_id.get
        return [get(t, 1) for t in tokens]

    @classmethod
    def build(cls, token_streams, min_count: int = 1) -> "Vocabulary":
        """Closed vocabulary from iterables of token lists; deterministic
        (by count desc then token)."""
        from collections import Counter
        counts: Counter[str] = Counter()
        for stream in token_streams:
            counts.update(stream)
        kept = sorted((t for t, c in counts.items() if c >= min_count and
                       t not in SPECIALS),
                      key=lambda t: (-counts[t], t))
        mapping = {sp: i for i, sp in enumerate(SPECIALS)}
        for t in kept:
            mapping[t] = len(mapping)
        return cls(token_to_id=mapping)


@dataclass
class CrossInput:
    token_ids: list[int]
    segment_ids: list[int]   # 0 = [CLS] + mention context, 1 = entity text
    mention_mask: list[int]  # 1 on mention tokens
    truncated: bool = False


def build_cross_input(sentence_tokens: list[str], mention_start: int,
                      mention_end: int, entity_text: str, vocab: Vocabulary,
                      max_len: int = 128) -> CrossInput:
    """[CLS] C(m) [SEP] entity [SEP], mention centered in its sentence.

    Context is trimmed symmetrically around the mention; the entity segment
    is never truncated before context is. If the mention alone exceeds the
    budget its tail is cut and the record is flagged.
    """
    ent = text_tokens(entity_text)
    ctx = [t.lower() for t in sentence_tokens]
    mention = ctx[mention_start:mention_end]
    truncated = False
    budget = max_len - 3 - len(ent)  # [CLS] + 2x[SEP]
    if budget < 1:
        # entity alone overflows; cut entity tail as a last resort
        ent = ent[:max_len - 4]
        budget = 1
        truncated = True
    if len(mention) > budget:
        mention = mention[:budget]
        left: list[str] = []
        right: list[str] = []
        truncated = True
    else:
        remaining = budget - len(mention)
        li, ri = mention_start - 1, mention_end
        left, right = [], []
        while remaining > 0 and (li >= 0 or ri < len(ctx)):
            if li >= 0:
                left.append(ctx[li])
                li -= 1
                remaining -= 1
                if remaining == 0:
                    break
            if ri < len(ctx):
                right.append(ctx[ri])
                ri += 1
                remaining -= 1
        left.reverse()
    tokens = [CLS] + left + mention + right + [SEP] + ent + [SEP]
    seg = [0] * (2 + len(left) + len(mention) + len(right)) + [1] * (len(ent) + 1)
    mmask = ([0] * (1 + len(left)) + [1] * len(mention)
             + [0] * (len(right) + 1) + [0] * (len(ent) + 1))
    return CrossInput(token_ids=vocab.encode(tokens), segment_ids=seg,
                      mention_mask=mmask, truncated=truncated)


def collate(inputs: list[CrossInput], device=None, dtype=torch.float32):
    """Pad a batch of CrossInputs to tensors."""
    n = len(inputs)
    width = max(len(x.token_ids) for x in inputs)
    tok = torch.zeros((n, width), dtype=torch.long, device=device)
    seg = torch.zeros((n, width), dtype=torch.long, device=device)
    mm = torch.zeros((n, width), dtype=dtype, device=device)
    att = torch.zeros((n, width), dtype=dtype, device=device)
    for i, x in enumerate(inputs):
        ln = len(x.token_ids)
        tok[i, :ln] = torch.tensor(x.token_ids, dtype=torch.long)
        seg[i, :ln] = torch.tensor(x.segment_ids, dtype=torch.long)
        mm[i, :ln] = torch.tensor(x.mention_mask, dtype=dtype)
        att[i, :ln] = 1.0
    return tok, seg, mm, att


class EncoderLayer(nn.Module):
    def __init__(self, hidden: int, heads: int, ff_dim: int):
        super().__init__()
        if hidden % heads:
            raise OntolinkError("hidden must be divisible by heads")
        self.heads = heads
        self.head_dim = hidden // heads
        self.ln_attn = nn.LayerNorm(hidden)
        self.qkv = nn.Linear(hidden, 3 * hidden)
        self.attn_out = nn.Linear(hidden, hidden)
        self.ln_ff = nn.LayerNorm(hidden)
        self.ff = nn.Sequential(nn.Linear(hidden, ff_dim), nn.GELU(),
                                nn.Linear(ff_dim, hidden))

    def forward(self, x, attn_bias):
        b, t, h = x.shape
        y = self.ln_attn(x)
        q, k, v = self.qkv(y).chunk(3, dim=-1)

        def split(z):
            return z.view(b, t, self.heads, self.head_dim).transpose(1, 2)

        q, k, v = split(q), split(k), split(v)
        scores = q @ k.transpose(-1, -2) / math.sqrt(self.head_dim)
        scores = scores + attn_bias  # additive mask, -inf on padding keys
        attn = torch.softmax(scores, dim=-1)
        ctx = (attn @ v).transpose(1, 2).reshape(b, t, h)
        x = x + self.attn_out(ctx)
        x = x + self.ff(self.ln_ff(x))
        return x


class CrossEncoder(nn.Module):
    """Pre-norm transformer over [CLS] mention-context [SEP] entity [SEP]."""

    def __init__(self, cfg: EncoderConfig, vocab_size: int):
        super().__init__()
        self.cfg = cfg
        self.vocab_size = vocab_size
        self.tok_emb = nn.Embedding(vocab_size, cfg.hidden)
        self.pos_emb = nn.Embedding(cfg.max_seq_len, cfg.hidden)
        self.seg_emb = nn.Embedding(2, cfg.hidden)
        self.mention_marker = nn.Parameter(torch.zeros(cfg.hidden))
        self.layers = nn.ModuleList(
            EncoderLayer(cfg.hidden, cfg.heads, cfg.ff_dim)
            for _ in range(cfg.layers))
        self.ln_final = nn.LayerNorm(cfg.hidden)
        self.pooler = nn.Linear(cfg.hidden, cfg.hidden)
        self.reset_parameters()

    def reset_parameters(self):
        for emb in (self.tok_emb, self.pos_emb, self.seg_emb):
            nn.init.normal_(emb.weight, std=0.02)
        nn.init.normal_(self.mention_marker, std=0.02)

    def forward(self, token_ids, segment_ids, mention_mask, attention_mask):
        if int(token_ids.max()) >= self.vocab_size:
            raise OntolinkError("token id out of vocabulary range")
        b, t = token_ids.shape
        pos = torch.arange(t, device=token_ids.device).unsqueeze(0).expand(b, t)
        x = (self.tok_emb(token_ids) + self.pos_emb(pos)
             + self.seg_emb(segment_ids)
             + mention_mask.unsqueeze(-1) * self.mention_marker)
        neg = torch.finfo(x.dtype).min
        attn_bias = (1.0 - attention_mask)[:, None, None, :] * neg
        for layer in self.layers:
            x = layer(x, attn_bias)
        x = self.ln_final(x)
        return torch.tanh(self.pooler(x[:, 0]))


def parameter_count(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters())


def grad_check(loss_fn, module: nn.Module, eps: float = 1e-5,
               samples_per_tensor: int = 32, seed: int = 0):
    """Central finite differences vs autograd, sampled per parameter tensor.

    loss_fn is a zero-argument closure returning a scalar tensor; the module
    must be in float64 and eval mode. Returns (max relative error, worst
    tensor name, per-tensor dict).
    """
    module.zero_grad(set_to_none=True)
    loss = loss_fn()
    loss.backward()
    analytic = {n: (p.grad.detach().clone() if p.grad is not None
                    else torch.zeros_like(p))
                for n, p in module.named_parameters()}
    rng = np.random.default_rng(seed)
    per_tensor: dict[str, float] = {}
    worst, worst_name = 0.0, ""
    with torch.no_grad():
        for name, p in module.named_parameters():
            flat = p.data.view(-1)
            an_flat = analytic[name].view(-1)
            k = min(samples_per_tensor, flat.numel())
            idxs = rng.choice(flat.numel(), size=k, replace=False)
            tensor_worst = 0.0
            for i in idxs:
                orig = flat[i].item()
                flat[i] = orig + eps
                lp = float(loss_fn())
                flat[i] = orig - eps
                lm = float(loss_fn())
                flat[i] = orig
                fd = (lp - lm) / (2.0 * eps)
                an = an_flat[i].item()
                denom = max(abs(fd) + abs(an), 1e-8)
                tensor_worst = max(tensor_worst, abs(fd - an) / denom)
            per_tensor[name] = tensor_worst
            if tensor_worst > worst:
                worst, worst_name = tensor_worst, name
    return worst, worst_name, per_tensor


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def save_checkpoint(path, kind: str, model: nn.Module, vocab: Vocabulary,
                    config: dict) -> None:
    torch.save({
        "format_version": CHECKPOINT_VERSION,
        "kind": kind,
        "config": config,
        "vocab": vocab.token_to_id,
        "shapes": {n: tuple(p.shape) for n, p in model.state_dict().items()},
        "state_dict": model.state_dict(),
    }, path)


def load_checkpoint(path) -> dict:
    blob = torch.load(path, map_location="cpu", weights_only=False)
    if blob.get("format_version") != CHECKPOINT_VERSION:
        raise OntolinkError(f"{path}: unsupported checkpoint version")
    for name, shape in blob["shapes"].items():
        if tuple(blob["state_dict"][name].shape) != tuple(shape):
            raise OntolinkError(f"{path}: shape mismatch for {name}")
    blob["vocab"] = Vocabulary(token_to_id=blob["vocab"])
    return blob
