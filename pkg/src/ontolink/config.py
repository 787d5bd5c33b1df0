"""Pipeline configuration: every tunable constant in one place.

Defaults follow the reference setup (K_W=0.5, K_M=50, K_L=1, M=1.0, tau=0,
200k-feature vectorizers, 128-token sequences, Adam 2e-5 / 5e-6 with 10%
linear warmup then decay). The encoder size is a desk-scale choice since no
pretrained weights are used.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields


DEFAULT_BIN_S = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0]
DEFAULT_BIN_L = [0.0, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9,
                 0.91, 0.92, 0.93, 0.94, 0.95, 0.96, 0.97, 0.98, 0.99, 1.0]
W_POS_GRID = [1.0, 2.0, 5.0, 10.0, 20.0]


@dataclass
class EncoderConfig:
    layers: int = 2
    heads: int = 4
    hidden: int = 64
    ff_dim: int = 256
    max_seq_len: int = 128


@dataclass
class TrainConfig:
    lr: float
    max_epochs: int
    batch_size: int
    warmup_frac: float = 0.1
    seed: int = 13


@dataclass
class PipelineConfig:
    # candidate generation
    k_s: int = 10                 # max span length in tokens
    k_w: float = 0.5              # word-cosine weight in the lexical score
    k_m: int = 50                 # candidates kept per span
    char_vocab_size: int = 200_000
    word_vocab_size: int = 200_000
    lemmatize: bool = True
    # linker / selector
    k_l: int = 1                  # linked candidates forwarded to selection
    margin: float = 1.0
    w_pos: float = 5.0            # positive-sample weight (tuned in W_POS_GRID)
    tau: float = 0.0
    inference_mode: str = "threshold"
    bin_s: list[float] = field(default_factory=lambda: list(DEFAULT_BIN_S))
    bin_l: list[float] = field(default_factory=lambda: list(DEFAULT_BIN_L))
    feature_emb_dim: int = 8
    head_hidden: tuple[int, int] = (1024, 256)
    head_dropout: float = 0.1
    negative_subsample: float = 1.0   # fraction of negative selector samples kept
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    linker_train: TrainConfig = field(
        default_factory=lambda: TrainConfig(lr=2e-5, max_epochs=3, batch_size=50))
    selector_train: TrainConfig = field(
        default_factory=lambda: TrainConfig(lr=5e-6, max_epochs=10, batch_size=64))
    seed: int = 13

    def __post_init__(self):
        if self.k_s < 1:
            raise ValueError("k_s must be >= 1")
        if self.margin <= 0:
            raise ValueError("margin must be > 0")
        if not 1 <= self.k_l <= self.k_m:
            raise ValueError("k_l must lie in [1, k_m]")

    # ---- flat key-value (INI) round trip -------------------------------

    def to_file(self, path) -> None:
        cp = configparser.ConfigParser()
        cp["pipeline"] = {
            "k_s": str(self.k_s), "k_w": repr(self.k_w), "k_m": str(self.k_m),
            "k_l": str(self.k_l), "seed": str(self.seed),
            "char_vocab_size": str(self.char_vocab_size),
            "word_vocab_size": str(self.word_vocab_size),
            "lemmatize": str(self.lemmatize),
        }
        cp["encoder"] = {f.name: str(getattr(self.encoder, f.name))
                         for f in fields(EncoderConfig)}
        cp["heads"] = {
            "feature_emb_dim": str(self.feature_emb_dim),
            "head_hidden": ",".join(str(h) for h in self.head_hidden),
            "head_dropout": repr(self.head_dropout),
            "bin_s": ",".join(repr(b) for b in self.bin_s),
            "bin_l": ",".join(repr(b) for b in self.bin_l),
        }
        cp["selector"] = {
            "margin": repr(self.margin), "w_pos": repr(self.w_pos),
            "tau": repr(self.tau), "inference_mode": self.inference_mode,
            "negative_subsample": repr(self.negative_subsample),
        }
        for name, tc in (("train.link", self.linker_train),
                         ("train.select", self.selector_train)):
            cp[name] = {"lr": repr(tc.lr), "max_epochs": str(tc.max_epochs),
                        "batch_size": str(tc.batch_size),
                        "warmup_frac": repr(tc.warmup_frac), "seed": str(tc.seed)}
        with open(path, "w", encoding="utf-8") as fh:
            cp.write(fh)

    @classmethod
    def from_file(cls, path) -> "PipelineConfig":
        cp = configparser.ConfigParser()
        with open(path, encoding="utf-8") as fh:
            cp.read_file(fh)
        cfg = cls()
        p = cp["pipeline"] if cp.has_section("pipeline") else {}
        for key in ("k_s", "k_m", "k_l", "seed", "char_vocab_size", "word_vocab_size"):
            if key in p:
                setattr(cfg, key, int(p[key]))
        if "k_w" in p:
            cfg.k_w = float(p["k_w"])
        if "lemmatize" in p:
            cfg.lemmatize = p["lemmatize"].strip().lower() in ("1", "true", "yes")
        if cp.has_section("encoder"):
            for f in fields(EncoderConfig):
                if f.name in cp["encoder"]:
                    setattr(cfg.encoder, f.name, int(cp["encoder"][f.name]))
        if cp.has_section("heads"):
            h = cp["heads"]
            if "feature_emb_dim" in h:
                cfg.feature_emb_dim = int(h["feature_emb_dim"])
            if "head_hidden" in h:
                cfg.head_hidden = tuple(int(x) for x in h["head_hidden"].split(","))
            if "head_dropout" in h:
                cfg.head_dropout = float(h["head_dropout"])
            if "bin_s" in h:
                cfg.bin_s = [float(x) for x in h["bin_s"].split(",")]
            if "bin_l" in h:
                cfg.bin_l = [float(x) for x in h["bin_l"].split(",")]
        if cp.has_section("selector"):
            s = cp["selector"]
            for key in ("margin", "w_pos", "tau", "negative_subsample"):
                if key in s:
                    setattr(cfg, key, float(s[key]))
            if "inference_mode" in s:
                cfg.inference_mode = s["inference_mode"].strip()
        for name, attr in (("train.link", "linker_train"),
                           ("train.select", "selector_train")):
            if cp.has_section(name):
                t = cp[name]
                tc = getattr(cfg, attr)
                if "lr" in t:
                    tc.lr = float(t["lr"])
                if "max_epochs" in t:
                    tc.max_epochs = int(t["max_epochs"])
                if "batch_size" in t:
                    tc.batch_size = int(t["batch_size"])
                if "warmup_frac" in t:
                    tc.warmup_frac = float(t["warmup_frac"])
                if "seed" in t:
                    tc.seed = int(t["seed"])
        cfg.__post_init__()
        return cfg
