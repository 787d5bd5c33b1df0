import random

import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from ontolink.config import DEFAULT_BIN_L, DEFAULT_BIN_S
from ontolink.encoder import CrossInput, Vocabulary
from ontolink.heads import BinningSpec
from ontolink.selector import (SelectorSample, SpanSelector, infer_greedy,
                               infer_threshold, selector_loss)


def _dummy_input():
    return CrossInput(token_ids=[2, 3], segment_ids=[0, 1], mention_mask=[0, 0])


def _sample(doc="d", sent=0, start=0, end=1, entity="C1", score=0.5):
    return SelectorSample(doc_id=doc, sentence=sent, start=start, end=end,
                          entity_id=entity, type_id="T1", alias="a",
                          name_type=0, s_e=score, p=0.5, input=_dummy_input())


# ---------------------------------------------------------------------------
# loss
# ---------------------------------------------------------------------------

def test_selector_loss_analytic_cases():
    # positive on the margin: no loss
    assert float(selector_loss(1.0, True, margin=1.0, w_pos=1.0)) == 0.0
    # negative at zero: margin itself
    assert float(selector_loss(0.0, False, margin=1.0)) == 1.0
    # weighted positive at zero: w_pos * margin
    assert float(selector_loss(0.0, True, margin=1.0, w_pos=10.0)) == 10.0


def test_selector_loss_elementwise():
    s = torch.tensor([2.0, -2.0, 0.5, -0.5])
    labels = torch.tensor([True, False, False, True])
    out = selector_loss(s, labels, margin=1.0, w_pos=3.0)
    assert out.tolist() == [0.0, 0.0, 1.5, 4.5]


def test_selector_loss_zero_scores_mean():
    """With all scores 0 the mean is predictable from the label balance."""
    s = torch.zeros(8)
    labels = torch.tensor([True] * 2 + [False] * 6)
    out = selector_loss(s, labels, margin=1.0, w_pos=5.0)
    assert float(out.mean()) == pytest.approx((2 * 5.0 + 6 * 1.0) / 8)


# ---------------------------------------------------------------------------
# model plumbing
# ---------------------------------------------------------------------------

def test_selector_forward_shape(tiny_encoder_cfg):
    vocab = Vocabulary.build([["a", "b"]])
    torch.manual_seed(0)
    model = SpanSelector(tiny_encoder_cfg, len(vocab),
                         BinningSpec.of(DEFAULT_BIN_S),
                         BinningSpec.of(DEFAULT_BIN_L), emb_dim=4,
                         head_hidden=(16, 8), head_dropout=0.0).eval()
    samples = [_sample(), _sample(entity="C2", score=0.9)]
    with torch.no_grad():
        out = model([s.input for s in samples], [s.name_type for s in samples],
                    [s.s_e for s in samples], [s.p for s in samples])
    assert out.shape == (2,)


def test_selector_config_roundtrip(tiny_encoder_cfg):
    vocab = Vocabulary.build([["a"]])
    model = SpanSelector(tiny_encoder_cfg, len(vocab),
                         BinningSpec.of(DEFAULT_BIN_S),
                         BinningSpec.of(DEFAULT_BIN_L), emb_dim=4,
                         head_hidden=(16, 8), head_dropout=0.0)
    clone = SpanSelector.from_config(model.model_config())
    a = {k: tuple(v.shape) for k, v in model.state_dict().items()}
    b = {k: tuple(v.shape) for k, v in clone.state_dict().items()}
    assert a == b


# ---------------------------------------------------------------------------
# inference
# ---------------------------------------------------------------------------

def test_threshold_is_strict():
    samples = [_sample(entity=f"C{i}") for i in range(3)]
    out = infer_threshold(samples, [0.0, 0.1, -0.1], tau=0.0)
    assert [s.entity_id for s, _ in out] == ["C1"]


def test_greedy_picks_highest_in_overlap_group():
    samples = [_sample(start=0, end=2, entity="C1"),
               _sample(start=1, end=3, entity="C2"),
               _sample(start=4, end=5, entity="C3")]
    out = infer_greedy(samples, [1.0, 2.0, 1.0], tau=0.0)
    assert [(s.start, s.entity_id) for s, _ in out] == [(1, "C2"), (4, "C3")]


def test_greedy_tie_breaks():
    # equal scores: earlier start wins, then longer span, then entity id
    samples = [_sample(start=0, end=2, entity="C2"),
               _sample(start=0, end=2, entity="C1"),
               _sample(start=0, end=1, entity="C0")]
    out = infer_greedy(samples, [1.0, 1.0, 1.0], tau=0.0)
    assert [(s.start, s.end, s.entity_id) for s, _ in out] == [(0, 2, "C1")]


def _random_case(rng):
    samples, scores = [], []
    for _ in range(rng.randint(0, 25)):
        start = rng.randint(0, 8)
        samples.append(_sample(doc=rng.choice("ab"), sent=rng.randint(0, 1),
                               start=start, end=start + rng.randint(1, 3),
                               entity=f"C{rng.randint(0, 5)}"))
        scores.append(rng.uniform(-2, 2))
    return samples, scores


def _overlap(a, b):
    return (a.doc_id == b.doc_id and a.sentence == b.sentence
            and a.start < b.end and b.start < a.end)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 10**9), st.floats(-1.5, 1.5), st.floats(0.0, 1.0))
def test_inference_invariants(seed, tau, tau_bump):
    rng = random.Random(seed)
    samples, scores = _random_case(rng)
    thr = infer_threshold(samples, scores, tau)
    grd = infer_greedy(samples, scores, tau)

    def keys(sel):
        return {(s.doc_id, s.sentence, s.start, s.end, s.entity_id)
                for s, _ in sel}

    # greedy is a subset of threshold and overlap-free
    assert keys(grd) <= keys(thr)
    picked = [s for s, _ in grd]
    assert not any(_overlap(a, b) for i, a in enumerate(picked)
                   for b in picked[i + 1:])
    # against any gold set, greedy recall cannot exceed threshold recall
    gold = {(s.doc_id, s.sentence, s.start, s.end, s.entity_id)
            for s in samples if rng.random() < 0.3}
    assert len(keys(grd) & gold) <= len(keys(thr) & gold)
    # raising tau never adds predictions
    higher = infer_threshold(samples, scores, tau + tau_bump)
    assert keys(higher) <= keys(thr)
