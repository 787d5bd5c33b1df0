"""Command-line surface: build-kb, preprocess, run, train, evaluate.

Exit codes: 0 success, 1 runtime failure, 2 usage error. The only
environment variable honored is ONTOLINK_LOG (set to "quiet" to silence
progress lines); all paths are explicit flags.
"""

from __future__ import annotations

import os
import sys
from pathlib import Path

import click

from . import OntolinkError
from .config import PipelineConfig, W_POS_GRID
from .io_utils import read_jsonl


def _log(msg: str) -> None:
    if os.environ.get("ONTOLINK_LOG", "").lower() != "quiet":
        click.echo(msg, err=True)


def _load_config(path) -> PipelineConfig:
    return PipelineConfig.from_file(path) if path else PipelineConfig()


@click.group()
def cli():
    """End-to-end concept recognition and linking pipeline."""


@cli.command("build-kb")
@click.option("--ontology", required=True, type=click.Path(exists=True),
              help="Ontology TSV: entity_id, type_id, name, name-type tag.")
@click.option("--hierarchy", required=True, type=click.Path(exists=True),
              help="Type hierarchy TSV: child TAB parent.")
@click.option("--types", required=True, type=click.Path(exists=True),
              help="Selected semantic types: type_id [TAB display name].")
@click.option("--out", required=True, type=click.Path(),
              help="Output directory (alias.jsonl, index.bin, vectorizers.bin).")
@click.option("--config", type=click.Path(exists=True), default=None)
def build_kb_cmd(ontology, hierarchy, types, out, config):
    """Build the alias table and lexical index from an ontology dump."""
    from .pipeline import build_kb
    summary = build_kb(ontology, hierarchy, types, out, _load_config(config))
    _log(f"alias table: {summary['entries']} entries "
         f"({summary['by_name_type']})")


@cli.command("preprocess")
@click.option("--corpus", required=True, type=click.Path(exists=True),
              help="PubTator corpus file.")
@click.option("--abbrevs", type=click.Path(exists=True), default=None,
              help="External abbreviation TSV (doc_id, short, long); "
                   "skips the built-in detector.")
@click.option("--out", required=True, type=click.Path())
def preprocess_cmd(corpus, abbrevs, out):
    """Tokenize, expand abbreviations, resolve overlaps, emit IOB2."""
    from .pipeline import preprocess_corpus
    report = preprocess_corpus(corpus, out, abbrevs)
    _log(f"{report.documents} docs; mentions {report.mentions_in} -> "
         f"{report.mentions_out} (dropped {report.dropped_total}); "
         f"{report.abbrev_definitions} abbreviation definitions in "
         f"{report.docs_with_definitions} docs")


@cli.command("run")
@click.option("--stage", required=True,
              type=click.Choice(["candgen", "link", "select", "all"]))
@click.option("--kb", required=True, type=click.Path(exists=True))
@click.option("--in", "in_dir", required=True, type=click.Path(exists=True),
              help="Directory with docs.jsonl (and upstream stage outputs).")
@click.option("--model", "models", multiple=True, type=click.Path(exists=True),
              help="Checkpoint file(s); pass twice for --stage all.")
@click.option("--mode", type=click.Choice(["threshold", "greedy"]),
              default="threshold")
@click.option("--tau", type=float, default=None, help="Selection threshold.")
@click.option("--out", required=True, type=click.Path())
@click.option("--config", type=click.Path(exists=True), default=None)
def run_cmd(stage, kb, in_dir, models, mode, tau, out, config):
    """Run inference stages; 'all' chains candgen -> link -> select."""
    from .encoder import load_checkpoint
    from .pipeline import run_all
    cfg = _load_config(config)
    linker_path = selector_path = None
    for m in models:
        kind = load_checkpoint(m)["kind"]
        if kind == "linker":
            linker_path = m
        elif kind == "selector":
            selector_path = m
    if stage in ("link", "all") and linker_path is None:
        raise click.UsageError("--stage link/all needs a linker --model")
    if stage in ("select", "all") and selector_path is None:
        raise click.UsageError("--stage select/all needs a selector --model")
    run_all(kb, in_dir, linker_path, selector_path, out, cfg, mode,
            cfg.tau if tau is None else tau, stage=stage, log=_log)


@cli.command("train")
@click.option("--stage", required=True, type=click.Choice(["link", "select"]))
@click.option("--kb", required=True, type=click.Path(exists=True))
@click.option("--corpus", required=True, type=click.Path(exists=True),
              help="Preprocessed corpus dir (docs.jsonl, optional docs_val.jsonl).")
@click.option("--config", type=click.Path(exists=True), default=None)
@click.option("--out", required=True, type=click.Path())
@click.option("--linker-model", type=click.Path(exists=True), default=None,
              help="Trained linker checkpoint (required for --stage select).")
@click.option("--sweep-wpos", is_flag=True, default=False,
              help="Train one selector per positive weight in the tuned grid "
                   "and report validation document F1 per value.")
def train_cmd(stage, kb, corpus, config, out, linker_model, sweep_wpos):
    """Train the span linker or the linked-span selector."""
    cfg = _load_config(config)
    if stage == "link":
        from .pipeline import train_link_stage
        history = train_link_stage(kb, corpus, cfg, out, log=_log)
        best = max(h["val_recall_at_1"] for h in history)
        _log(f"best validation recall@1: {best:.4f}")
    else:
        if linker_model is None:
            raise click.UsageError("--stage select requires --linker-model")
        from .pipeline import train_select_stage
        if sweep_wpos:
            for w in W_POS_GRID:
                path = Path(out)
                sweep_out = path.with_name(f"{path.stem}_wpos{w:g}{path.suffix}")
                history = train_select_stage(kb, corpus, linker_model, cfg,
                                             sweep_out, w_pos=w, log=_log)
                best = max(h["val_doc_f1"] for h in history)
                click.echo(f"w_pos={w:g}\tval_doc_f1={best:.4f}")
        else:
            history = train_select_stage(kb, corpus, linker_model, cfg, out,
                                         log=_log)
            best = max(h["val_doc_f1"] for h in history)
            _log(f"best validation document F1: {best:.4f}")


@cli.command("evaluate")
@click.option("--gold", required=True, type=click.Path(exists=True),
              help="Preprocessed gold dir (docs.jsonl, preprocess_report.json).")
@click.option("--pred", required=True, type=click.Path(exists=True),
              help="predictions.jsonl from the run command.")
@click.option("--report", "report_fmt", type=click.Choice(["json", "table"]),
              default="table")
@click.option("--breakdowns", type=click.Choice(["all", "none"]), default="none")
@click.option("--candidates", type=click.Path(exists=True), default=None,
              help="candidates.jsonl for recall@K analysis.")
@click.option("--train-gold", type=click.Path(exists=True), default=None,
              help="Preprocessed training gold dir for seen/unseen splits.")
@click.option("--out", required=True, type=click.Path())
def evaluate_cmd(gold, pred, report_fmt, breakdowns, candidates, train_gold, out):
    """Score predictions; writes report + figures into --out."""
    import json

    from .metrics import (acronym_prf, document_level_prf, error_breakdown,
                          mention_level_prf, ner_prf, raw_corpus_lower_bound,
                          recall_at_k, subset_prf)
    from .pipeline import load_docs
    from .reports import (error_breakdown_table, prf_table, save_prf_figure,
                          save_recall_curve, write_json_report,
                          write_recall_csv)

    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    docs = load_docs(gold)
    preds = list(read_jsonl(pred))

    gold_keys, gold_typed, gold_pairs = [], [], []
    for doc_id, doc in docs.items():
        for m in doc.mentions:
            gold_keys.append((doc_id, m.sentence, m.start, m.end, m.entity_id))
            gold_typed.append((doc_id, m.sentence, m.start, m.end,
                               m.entity_id, m.type_id))
            gold_pairs.append((doc_id, m.entity_id))
    pred_keys = [(p["doc_id"], p["sentence"], p["start"], p["end"],
                  p["entity_id"]) for p in preds]
    pred_typed = [(p["doc_id"], p["sentence"], p["start"], p["end"],
                   p["entity_id"], p["type_id"]) for p in preds]
    pred_ner = [(p["doc_id"], p["sentence"], p["start"], p["end"],
                 p["type_id"]) for p in preds]
    gold_ner = [(k[0], k[1], k[2], k[3], g[5]) for k, g in
                zip(gold_keys, gold_typed)]
    pred_pairs = [(p["doc_id"], p["entity_id"]) for p in preds]

    rows = {
        "mention": mention_level_prf(gold_keys, pred_keys),
        "document": document_level_prf(gold_pairs, pred_pairs),
        "ner": ner_prf(gold_ner, pred_ner),
    }
    report_path = Path(gold) / "preprocess_report.json"
    dropped = 0
    if report_path.exists():
        rep = json.loads(report_path.read_text(encoding="utf-8"))
        dropped = rep.get("mentions_in", 0) - rep.get("mentions_out", 0)
    rows["mention (raw-corpus lower bound)"] = raw_corpus_lower_bound(
        rows["mention"], dropped)

    payload = {"reports": {k: v.as_dict() for k, v in rows.items()},
               "dropped_mentions": dropped}
    text_sections = [prf_table(rows)]

    if breakdowns == "all":
        eb = error_breakdown(gold_typed, pred_typed)
        payload["error_breakdown"] = eb.as_dict()
        text_sections.append(error_breakdown_table(eb))
        acro = {k for k, p in zip(pred_keys, preds)
                if p.get("name_type") == "ACRONYM"}
        brows = {"acronym": acronym_prf(gold_keys, pred_keys, acro)}
        if train_gold:
            train_docs = load_docs(train_gold)
            seen = {m.entity_id for d in train_docs.values() for m in d.mentions}
            brows["seen"] = subset_prf(gold_keys, pred_keys, seen, "seen")
            brows["unseen"] = subset_prf(gold_keys, pred_keys, seen, "unseen")
        payload["subsets"] = {k: v.as_dict() for k, v in brows.items()}
        text_sections.append(prf_table(brows))
        rows = {**rows, **brows}

    if candidates:
        cand = {}
        for rec in read_jsonl(candidates):
            key = (rec["doc_id"], rec["sentence"], rec["start"], rec["end"])
            cand[key] = [m["entity_id"] for m in rec["matches"]]
        gold_mentions = [((k[0], k[1], k[2], k[3]), k[4]) for k in gold_keys]
        ks = [1, 2, 5, 10, 20, 50]
        recalls = recall_at_k(cand, gold_mentions, ks)
        payload["recall_at_k"] = recalls
        write_recall_csv(out_dir / "recall_at_k.csv", recalls)
        save_recall_curve(out_dir / "recall_at_k.png", recalls)

    write_json_report(out_dir / "report.json", payload)
    text = "\n\n".join(text_sections) + "\n"
    (out_dir / "report.txt").write_text(text, encoding="utf-8")
    save_prf_figure(out_dir / "prf_summary.png", rows)
    if report_fmt == "table":
        click.echo(text)
    else:
        click.echo(json.dumps(payload, indent=2))


def entrypoint(argv=None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except click.UsageError as exc:
        click.echo(f"error: {exc.format_message()}", err=True)
        return 2
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.Abort:
        return 1
    except OntolinkError as exc:
        click.echo(f"error: {exc}", err=True)
        return 1


def main() -> None:
    sys.exit(entrypoint())


if __name__ == "__main__":
    main()
