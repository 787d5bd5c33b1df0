import json

from ontolink.metrics import PrfReport, error_breakdown
from ontolink.reports import (error_breakdown_table, prf_table,
                              save_prf_figure, save_recall_curve,
                              stage_recall_table, write_json_report,
                              write_recall_csv)


def _rows():
    return {"mention": PrfReport(tp=2, fp=4, fn=2),
            "document": PrfReport(tp=1, fp=1, fn=1)}


def test_prf_table_contents():
    text = prf_table(_rows())
    lines = text.splitlines()
    assert "Prec." in lines[0] and "F1" in lines[0]
    assert any(line.startswith("mention") and "0.333" in line and "0.400" in line
               for line in lines)


def test_stage_recall_table_na():
    text = stage_recall_table([{"stage": "candgen", "gold_in_input": 0,
                                "gold_in_output": 0, "recall": None}])
    assert "N/A" in text


def test_error_breakdown_table():
    eb = error_breakdown([("d", 0, 0, 2, "C1", "T1")],
                         [("d", 0, 0, 2, "C2", "T1")])
    text = error_breakdown_table(eb)
    assert "False positives: 1" in text
    assert "100.0%" in text


def test_recall_csv(tmp_path):
    path = tmp_path / "r.csv"
    write_recall_csv(path, {10: 0.5, 1: 0.25})
    lines = path.read_text().splitlines()
    assert lines[0] == "k,recall"
    assert lines[1] == "1,0.250000"  # sorted by k
    assert lines[2] == "10,0.500000"


def test_json_report(tmp_path):
    path = tmp_path / "r.json"
    write_json_report(path, {"a": [1, 2]})
    assert json.loads(path.read_text()) == {"a": [1, 2]}


def test_figures_written(tmp_path):
    f1 = tmp_path / "prf.png"
    f2 = tmp_path / "recall.png"
    save_prf_figure(f1, _rows())
    save_recall_curve(f2, {1: 0.2, 10: 0.6, 50: 0.9})
    for f in (f1, f2):
        assert f.stat().st_size > 0
        assert f.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
