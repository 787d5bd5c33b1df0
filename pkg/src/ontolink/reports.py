"""Report rendering: JSON, aligned plain-text tables, delimited recall@K
output, and matplotlib figures saved next to them."""

from __future__ import annotations

import json
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .metrics import ErrorBreakdown, PrfReport


def prf_table(rows: dict[str, PrfReport]) -> str:
    """Aligned text table: one row per named report."""
    name_w = max([len(n) for n in rows] + [8])
    header = (f"{'':{name_w}}  {'Prec.':>7}  {'Recall':>7}  {'F1':>7}"
              f"  {'TP':>7}  {'FP':>7}  {'FN':>7}")
    lines = [header, "-" * len(header)]
    for name, r in rows.items():
        lines.append(f"{name:{name_w}}  {r.precision:7.3f}  {r.recall:7.3f}"
                     f"  {r.f1:7.3f}  {r.tp:7d}  {r.fp:7d}  {r.fn:7d}")
    return "\n".join(lines)


def stage_recall_table(rows: list[dict]) -> str:
    header = f"{'Stage':24}  {'Gold in':>8}  {'Gold out':>8}  {'Recall':>7}"
    lines = [header, "-" * len(header)]
    for r in rows:
        rec = "N/A" if r["recall"] is None else f"{r['recall']:.3f}"
        lines.append(f"{r['stage']:24}  {r['gold_in_input']:>8}"
                     f"  {r['gold_in_output']:>8}  {rec:>7}")
    return "\n".join(lines)


def error_breakdown_table(eb: ErrorBreakdown) -> str:
    lines = [f"False positives: {eb.total_fp}"]
    for label, val in (
            ("Correct span, bad entity", eb.correct_span_bad_entity),
            ("Correct span and type", eb.correct_span_and_type),
            ("Correct entity, overlapping true span",
             eb.correct_entity_overlapping_true_span),
            ("Correct entity, containing true span",
             eb.correct_entity_containing_true_span)):
        lines.append(f"  {label:40} {val * 100:5.1f}%")
    return "\n".join(lines)


def write_recall_csv(path, recalls: dict[int, float]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("k,recall\n")
        for k in sorted(recalls):
            fh.write(f"{k},{recalls[k]:.6f}\n")


def write_json_report(path, payload: dict) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, ensure_ascii=False) + "\n",
                          encoding="utf-8")


# ---------------------------------------------------------------------------
# figures
# ---------------------------------------------------------------------------

def save_prf_figure(path, rows: dict[str, PrfReport]) -> None:
    names = list(rows)
    x = range(len(names))
    width = 0.27
    fig, ax = plt.subplots(figsize=(max(5, 1.6 * len(names)), 3.6))
    ax.bar([i - width for i in x], [rows[n].precision for n in names],
           width, label="Precision")
    ax.bar(list(x), [rows[n].recall for n in names], width, label="Recall")
    ax.bar([i + width for i in x], [rows[n].f1 for n in names],
           width, label="F1")
    ax.set_xticks(list(x))
    ax.set_xticklabels(names, rotation=20, ha="right")
    ax.set_ylim(0, 1.05)
    ax.legend(fontsize=8)
    ax.set_ylabel("score")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_recall_curve(path, recalls: dict[int, float]) -> None:
    ks = sorted(recalls)
    fig, ax = plt.subplots(figsize=(5, 3.6))
    ax.plot(ks, [recalls[k] for k in ks], marker="o")
    ax.set_xscale("log")
    ax.set_xlabel("K")
    ax.set_ylabel("recall@K")
    ax.set_ylim(0, 1.05)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
