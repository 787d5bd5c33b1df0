import random

import pytest

from ontolink.config import EncoderConfig, PipelineConfig, TrainConfig
from ontolink.kb import TypeHierarchy, build_alias_table


@pytest.fixture
def toy_hierarchy():
    return TypeHierarchy(
        parents={"T02": "T01", "T03": "T02", "T09": "T08"},
        selected={"T01": "Virus", "T05": "Finding"},
    )


TOY_ROWS = [
    ("C1", "T01", "Influenza virus", "P"),
    ("C1", "T01", "flu", "S"),
    ("C1", "T01", "IV", "A"),
    ("C2", "T02", "Galanga <insect>", "P"),
    ("C2", "T02", "galanga bug", "S"),
    ("C3", "T05", "Headache, Not Otherwise Specified", "P"),
    ("C3", "T05", "cephalgia", "S"),
    ("C4", "T05", "heart attack", "P"),
    ("C4", "T05", "myocardial infarction", "S"),
    ("C4", "T05", "MI", "A"),
]


@pytest.fixture
def toy_table(toy_hierarchy):
    return build_alias_table(TOY_ROWS, toy_hierarchy)


@pytest.fixture
def tiny_encoder_cfg():
    return EncoderConfig(layers=1, heads=2, hidden=16, ff_dim=32, max_seq_len=48)


@pytest.fixture
def tiny_pipeline_cfg(tiny_encoder_cfg):
    return PipelineConfig(
        k_s=5, k_m=10, encoder=tiny_encoder_cfg,
        head_hidden=(16, 8), head_dropout=0.0,
        linker_train=TrainConfig(lr=1e-3, max_epochs=2, batch_size=10),
        selector_train=TrainConfig(lr=1e-3, max_epochs=2, batch_size=16),
    )


@pytest.fixture
def rng():
    return random.Random(12345)
