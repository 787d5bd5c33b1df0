import numpy as np
import pytest

from ontolink import OntolinkError
from ontolink.config import EncoderConfig, PipelineConfig, TrainConfig
from ontolink.io_utils import read_blob, read_jsonl, write_blob, write_jsonl


def test_blob_roundtrip(tmp_path):
    path = tmp_path / "x.bin"
    payload = {"a": 1, "arr": np.arange(5.0)}
    write_blob(path, payload)
    back = read_blob(path)
    assert back["a"] == 1
    np.testing.assert_array_equal(back["arr"], payload["arr"])


def test_blob_rejects_wrong_magic(tmp_path):
    path = tmp_path / "x.bin"
    path.write_bytes(b"NOPE" + b"\0" * 16)
    with pytest.raises(OntolinkError):
        read_blob(path)


def test_blob_rejects_wrong_version(tmp_path):
    import struct
    path = tmp_path / "x.bin"
    path.write_bytes(b"OLBX" + struct.pack("<IQ", 99, 0))
    with pytest.raises(OntolinkError):
        read_blob(path)


def test_jsonl_roundtrip(tmp_path):
    path = tmp_path / "x.jsonl"
    records = [{"a": 1}, {"b": [1, 2]}]
    write_jsonl(path, records)
    assert list(read_jsonl(path)) == records


def test_config_roundtrip(tmp_path):
    cfg = PipelineConfig(
        k_s=7, k_w=0.25, k_m=13, k_l=2, margin=2.0, w_pos=10.0, tau=0.5,
        lemmatize=False, head_hidden=(32, 16), head_dropout=0.05,
        negative_subsample=0.5,
        encoder=EncoderConfig(layers=3, heads=2, hidden=32, ff_dim=64,
                              max_seq_len=96),
        linker_train=TrainConfig(lr=1e-4, max_epochs=7, batch_size=13,
                                 warmup_frac=0.2, seed=99),
    )
    path = tmp_path / "cfg.ini"
    cfg.to_file(path)
    back = PipelineConfig.from_file(path)
    assert back == cfg


def test_config_validation():
    with pytest.raises(ValueError):
        PipelineConfig(k_s=0)
    with pytest.raises(ValueError):
        PipelineConfig(margin=0.0)
    with pytest.raises(ValueError):
        PipelineConfig(k_l=100, k_m=50)
