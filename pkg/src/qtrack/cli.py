"""Command-line entry point: data building, synthetic generation, training,
evaluation, the slot baseline, the HTTP service and an interactive REPL.

Exit codes: 0 success, 2 usage error, 3 runtime failure.
"""

from __future__ import annotations

import json
import logging
import sys
from pathlib import Path

import click

from . import data as D
from . import model as M
from . import training as TR
from .slots import KnowledgeBase
from .synthetic import default_schema, gen_synthetic

log = logging.getLogger(__name__)

EXIT_RUNTIME = 3


@click.group()
@click.option("--verbose", is_flag=True, help="Enable debug logging.")
def cli(verbose: bool) -> None:
    logging.basicConfig(level=logging.DEBUG if verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")


def _parse_splits(text: str) -> tuple[float, ...]:
    try:
        ratios = tuple(float(x) for x in text.split(","))
    except ValueError:
        raise click.BadParameter(f"cannot parse splits {text!r}")
    if len(ratios) != 3 or abs(sum(ratios) - 1.0) > 1e-9:
        raise click.BadParameter(f"splits must be three ratios summing to 1, got {text!r}")
    return ratios


@cli.command("build-data")
@click.option("--logs", required=True, type=click.Path(path_type=Path),
              help="Raw log TSV: user_id <TAB> unix_timestamp <TAB> query.")
@click.option("--out-dir", required=True, type=click.Path(path_type=Path))
@click.option("--window", default=D.DEFAULT_WINDOW_MINUTES, show_default=True,
              help="Session window in minutes between consecutive queries.")
@click.option("--min-count", default=D.DEFAULT_MIN_COUNT, show_default=True,
              help="Minimum corpus-wide pair frequency.")
@click.option("--splits", default="0.9,0.05,0.05", show_default=True,
              help="train,val,test ratios (must sum to 1).")
@click.option("--seed", default=0, show_default=True)
def build_data(logs: Path, out_dir: Path, window: float, min_count: int,
               splits: str, seed: int) -> None:
    """Mine query logs into train/val/test triplet JSONL files."""
    ratios = _parse_splits(splits)
    if not logs.exists():
        raise click.UsageError(f"log file not readable: {logs}")
    out_dir.mkdir(parents=True, exist_ok=True)

    records, rejects = [], []
    for item in D.read_log_tsv(logs):
        (rejects if isinstance(item, D.Reject) else records).append(item)
    pairs, mine_rejects = D.mine_pairs(records, window_minutes=window)
    rejects.extend(mine_rejects)
    pairs = D.filter_frequency(pairs, min_count=min_count)
    triplets = []
    for pair in pairs:
        result = D.build_triplet(pair)
        (rejects if isinstance(result, D.Reject) else triplets).append(result)

    D.write_rejects(out_dir / "rejects.jsonl", rejects)
    stats = {"records": len(records), "pairs": len(pairs),
             "triplets": len(triplets), "rejects": len(rejects)}
    if not triplets:
        for name in ("train", "val", "test"):
            D.write_dataset(out_dir / f"{name}.jsonl", [])
        log.warning("no triplets produced from %s", logs)
    else:
        parts = D.split_triplets(triplets, ratios, seed)
        for name, part in zip(("train", "val", "test"), parts):
            stats[name] = D.write_dataset(out_dir / f"{name}.jsonl", part)
    (out_dir / "stats.json").write_text(json.dumps(stats, indent=2))
    click.echo(json.dumps(stats))


@cli.command("gen-synthetic")
@click.option("--out-dir", required=True, type=click.Path(path_type=Path))
@click.option("--sessions", default=1000, show_default=True)
@click.option("--vocab-size", default=2000, show_default=True)
@click.option("--coexist-frac", default=0.2, show_default=True,
              help="Probability of a coexistence intent per turn.")
@click.option("--seed", default=0, show_default=True)
def gen_synthetic_cmd(out_dir: Path, sessions: int, vocab_size: int,
                      coexist_frac: float, seed: int) -> None:
    """Generate a synthetic session log, gold triplets and a slot KB."""
    remaining = 1.0 - coexist_frac
    schema = default_schema(vocab_size=vocab_size, seed=seed,
                            p_coexist=coexist_frac,
                            p_replace=remaining * 9 / 16,
                            p_add=remaining * 7 / 16)
    records, gold = gen_synthetic(schema, sessions)
    out_dir.mkdir(parents=True, exist_ok=True)
    D.write_log_tsv(out_dir / "logs.tsv", records)
    D.write_dataset(out_dir / "gold.jsonl", gold)
    schema.write_kb(out_dir / "kb.tsv")
    click.echo(json.dumps({"sessions": sessions, "records": len(records),
                           "triplets": len(gold)}))


def _hp_options(fn):
    for opt in reversed([
        click.option("--heads", default=5, show_default=True),
        click.option("--head-dim", default=40, show_default=True),
        click.option("--embed-dim", default=200, show_default=True),
        click.option("--max-len", default=20, show_default=True),
        click.option("--dropout", default=0.1, show_default=True),
    ]):
        fn = opt(fn)
    return fn


@cli.command("train")
@click.option("--train-data", "train_path", required=True, type=click.Path(path_type=Path))
@click.option("--val-data", "val_path", required=True, type=click.Path(path_type=Path))
@click.option("--checkpoint-dir", required=True, type=click.Path(path_type=Path))
@click.option("--lr", default=0.001, show_default=True)
@click.option("--decay", default=0.95, show_default=True)
@click.option("--batch-size", default=256, show_default=True)
@click.option("--epochs", default=20, show_default=True)
@click.option("--patience", default=3, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--embeddings", type=click.Path(path_type=Path), default=None,
              help="Optional pretrained embedding text file.")
@_hp_options
@click.option("--no-self-attention", is_flag=True)
@click.option("--single-head", is_flag=True)
@click.option("--enhance-concat-only", is_flag=True)
@click.option("--enhance-add-only", is_flag=True)
def train_cmd(train_path, val_path, checkpoint_dir, lr, decay, batch_size,
              epochs, patience, seed, embeddings, heads, head_dim, embed_dim,
              max_len, dropout, no_self_attention, single_head,
              enhance_concat_only, enhance_add_only) -> None:
    """Train the tracker; writes checkpoint dir and training_log.jsonl."""
    hp = M.Hyperparams(n_heads=heads, head_dim=head_dim, embed_dim=embed_dim,
                       max_len=max_len, dropout_rate=dropout)
    ablation = M.Ablation(no_self_attention=no_self_attention,
                          single_head=single_head,
                          enhance_concat_only=enhance_concat_only,
                          enhance_add_only=enhance_add_only)
    cfg = TR.TrainConfig(lr=lr, decay=decay, batch_size=batch_size,
                         max_epochs=epochs, patience=patience, seed=seed,
                         ablation=ablation)
    train_set = D.read_dataset(train_path)
    val_set = D.read_dataset(val_path)
    tracker, history = TR.train(train_set, val_set, cfg, hp)
    if embeddings is not None:
        M.load_embeddings(tracker, embeddings)
    M.save_checkpoint(checkpoint_dir, tracker)
    TR.write_training_log(Path(checkpoint_dir) / "training_log.jsonl", history)
    final = history[-1] if history else {}
    click.echo(json.dumps({"epochs_run": len(history),
                           "best_val_em": max((h["val_em"] for h in history), default=0.0),
                           "final": final}))


@cli.command("eval")
@click.option("--data", required=True, type=click.Path(path_type=Path))
@click.option("--checkpoint", type=click.Path(path_type=Path), default=None)
@click.option("--predictions", type=click.Path(path_type=Path), default=None,
              help="JSONL with one {\"labels\": [...]} object per data line.")
@click.option("--report", type=click.Path(path_type=Path), default=None,
              help="Write a variant,em,f1 CSV here.")
def eval_cmd(data: Path, checkpoint: Path | None, predictions: Path | None,
             report: Path | None) -> None:
    """Evaluate a checkpoint (or a prediction file) on a dataset."""
    if (checkpoint is None) == (predictions is None):
        raise click.UsageError("pass exactly one of --checkpoint / --predictions")
    triplets = D.read_dataset(data)
    if checkpoint is not None:
        tracker = M.load_checkpoint(checkpoint)
        result = TR.evaluate(tracker, triplets)
        variant = "model"
    else:
        from .metrics import (EvalReport, em_corpus, em_sample, f1_corpus,
                              f1_sample)
        lines = [json.loads(l) for l in
                 Path(predictions).read_text(encoding="utf-8").splitlines()
                 if l.strip()]
        if len(lines) != len(triplets):
            raise click.UsageError(
                f"{len(lines)} predictions for {len(triplets)} samples")
        ems, f1s = [], []
        for t, p in zip(triplets, lines):
            labels = [int(x) for x in p["labels"]]
            ems.append(em_sample(labels, t.labels))
            pred_q3 = M.render_internal_query(list(t.q1), labels, list(t.q2))
            f1s.append(f1_sample(set(pred_q3), set(t.q3)))
        result = EvalReport(em=em_corpus(ems), f1=f1_corpus(f1s),
                            fingerprint="predictions")
        variant = "predictions"
    click.echo(f"EM {result.em:.2f}  F1 {result.f1:.2f}")
    if report is not None:
        TR.write_report_csv(report, [{"variant": variant,
                                      "em": result.em, "f1": result.f1}])


@cli.command("baseline-slot")
@click.option("--data", required=True, type=click.Path(path_type=Path))
@click.option("--kb", required=True, type=click.Path(path_type=Path))
@click.option("--report", type=click.Path(path_type=Path), default=None)
def baseline_slot(data: Path, kb: Path, report: Path | None) -> None:
    """Evaluate the DP slot baseline on a dataset."""
    triplets = D.read_dataset(data)
    knowledge = KnowledgeBase.from_tsv(kb)
    result = TR.evaluate_baseline(knowledge, triplets)
    click.echo(f"EM {result.em:.2f}  F1 {result.f1:.2f}")
    if report is not None:
        TR.write_report_csv(report, [{"variant": "slot_baseline",
                                      "em": result.em, "f1": result.f1}])


@cli.command("serve")
@click.option("--checkpoint", required=True, type=click.Path(path_type=Path))
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True)
@click.option("--persist-dir", type=click.Path(path_type=Path), default=None)
def serve(checkpoint: Path, host: str, port: int, persist_dir: Path | None) -> None:
    """Start the HTTP tracking service."""
    import uvicorn

    from .service import create_app

    tracker = M.load_checkpoint(checkpoint)
    app = create_app(tracker, persist_dir=persist_dir)
    uvicorn.run(app, host=host, port=port)


@cli.command("track")
@click.option("--checkpoint", required=True, type=click.Path(path_type=Path))
def track_repl(checkpoint: Path) -> None:
    """Interactive REPL: type queries, watch the internal query evolve."""
    from .service import Session, apply_track

    tracker = M.load_checkpoint(checkpoint)
    session = Session(id="repl")
    click.echo("type a query per line (blank line or EOF to quit)")
    for line in sys.stdin:
        text = line.strip()
        if not text:
            break
        try:
            response = apply_track(tracker, session, text)
        except ValueError as exc:
            click.echo(f"! {exc}")
            continue
        decisions = " ".join(
            f"{d['word']}[{'keep' if d['keep'] else 'drop'} {d['prob']:.2f}]"
            for d in response["decisions"])
        click.echo(f"turn {response['turn']}: {' '.join(response['internal_query'])}")
        click.echo(f"  {decisions}")


def main() -> None:
    try:
        cli(standalone_mode=False)
    except click.exceptions.Abort:
        sys.exit(1)
    except click.ClickException as exc:
        exc.show()
        sys.exit(exc.exit_code)
    except Exception as exc:  # runtime failure contract: exit 3
        log.error("%s", exc)
        sys.exit(EXIT_RUNTIME)


if __name__ == "__main__":
    main()
