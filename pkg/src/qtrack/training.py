"""Training loop (Adam, exponential lr decay, early stopping), evaluation,
and the ablation harness."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from . import tensor as T
from .data import TrackingTriplet
from .metrics import EvalReport, em_corpus, em_sample, f1_corpus, f1_sample
from .model import (Ablation, Hyperparams, QueryTracker, Vocabulary,
                    encode_queries, forward_batch, init_params,
                    labels_from_probs, predict_probs, render_internal_query)
from .optim import AdamState, adam_step
from .tensor import NonFiniteError, Tape, backward, grad_of

log = logging.getLogger(__name__)


class DivergenceError(Exception):
    """Training loss went non-finite."""


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.001
    decay: float = 0.95  # multiplicative, per epoch
    batch_size: int = 256
    max_epochs: int = 20
    patience: int = 3
    seed: int = 0
    ablation: Ablation = Ablation()

    def __post_init__(self):
        if not 0 < self.decay <= 1:
            raise ValueError(f"decay must be in (0, 1], got {self.decay}")
        if self.patience < 1:
            raise ValueError(f"patience must be >= 1, got {self.patience}")
        if self.lr <= 0:
            raise ValueError(f"lr must be positive, got {self.lr}")


def _batches(triplets: Sequence[TrackingTriplet], order: np.ndarray,
             batch_size: int) -> Iterator[list[TrackingTriplet]]:
    for start in range(0, len(order), batch_size):
        yield [triplets[i] for i in order[start:start + batch_size]]


def _batch_arrays(batch: Sequence[TrackingTriplet], vocab: Vocabulary,
                  max_len: int):
    q1_ids, q1_mask = encode_queries(vocab, [t.q1 for t in batch], max_len)
    q2_ids, q2_mask = encode_queries(vocab, [t.q2 for t in batch], max_len)
    width = q1_ids.shape[1]
    labels = np.zeros((len(batch), width), dtype=np.int64)
    for row, t in enumerate(batch):
        lab = t.labels[:max_len]
        labels[row, :len(lab)] = lab
    return q1_ids, q1_mask, q2_ids, q2_mask, labels


def train(train_set: Sequence[TrackingTriplet], val_set: Sequence[TrackingTriplet],
          cfg: TrainConfig, hp: Hyperparams,
          vocab: Vocabulary | None = None) -> tuple[QueryTracker, list[dict]]:
    """Minibatch Adam on summed per-word cross-entropy; early stopping on
    validation EM; returns the best-validation checkpoint and the epoch log."""
    if not train_set or not val_set:
        raise ValueError("train and validation splits must be non-empty")
    if vocab is None:
        vocab = Vocabulary.from_corpus(
            [list(t.q1) + list(t.q2) for t in train_set])
    rng_init = np.random.default_rng(cfg.seed)
    rng_shuffle = np.random.default_rng(cfg.seed + 1)
    rng_dropout = np.random.default_rng(cfg.seed + 2)

    params = init_params(hp, cfg.ablation, len(vocab), rng_init)
    state = AdamState.init(params)
    names = list(params)

    best_em = -1.0
    best_params = dict(params)
    epochs_since_best = 0
    history: list[dict] = []

    for epoch in range(cfg.max_epochs):
        lr = cfg.lr * cfg.decay ** epoch
        order = rng_shuffle.permutation(len(train_set))
        total_loss = 0.0
        n_batches = 0
        for batch in _batches(train_set, order, cfg.batch_size):
            arrays = _batch_arrays(batch, vocab, hp.max_len)
            q1_ids, q1_mask, q2_ids, q2_mask, labels = arrays
            tape = Tape()
            try:
                logits = forward_batch(params, hp, cfg.ablation,
                                       q1_ids, q1_mask, q2_ids, q2_mask,
                                       tape=tape, rng=rng_dropout, training=True)
                loss = T.scale(
                    T.cross_entropy_sum(logits, labels, q1_mask.astype(np.float32),
                                        tape=tape),
                    1.0 / len(batch), tape=tape)
            except NonFiniteError as exc:
                raise DivergenceError(
                    f"non-finite forward value at epoch {epoch}, batch {n_batches} "
                    f"(lr={lr:g}): {exc}") from exc
            loss_val = loss.item()
            if not np.isfinite(loss_val):
                raise DivergenceError(
                    f"loss diverged at epoch {epoch}, batch {n_batches} (lr={lr:g})")
            grads = backward(tape, loss, params.values())
            named_grads = {name: grad_of(grads, params[name]) for name in names}
            params = adam_step(params, named_grads, state, lr)
            total_loss += loss_val
            n_batches += 1

        tracker = QueryTracker(hp, cfg.ablation, vocab, params)
        report = evaluate(tracker, val_set, batch_size=cfg.batch_size)
        entry = {"epoch": epoch, "lr": lr,
                 "train_loss": total_loss / max(n_batches, 1),
                 "val_em": report.em, "val_f1": report.f1}
        history.append(entry)
        log.info("epoch %d: loss %.4f, val EM %.2f, val F1 %.2f",
                 epoch, entry["train_loss"], report.em, report.f1)
        if report.em > best_em:
            best_em = report.em
            best_params = dict(params)
            epochs_since_best = 0
        else:
            epochs_since_best += 1
            if epochs_since_best >= cfg.patience:
                break

    return QueryTracker(hp, cfg.ablation, vocab, best_params), history


def _config_fingerprint(tracker: QueryTracker) -> str:
    payload = json.dumps({"hp": asdict(tracker.hp), "ablation": asdict(tracker.ablation),
                          "vocab": len(tracker.vocab)}, sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()[:12]


def evaluate(tracker: QueryTracker, triplets: Sequence[TrackingTriplet],
             batch_size: int = 256, keep_records: bool = False) -> EvalReport:
    """Pure evaluation of EM / word-level F1 on a dataset."""
    if not triplets:
        raise ValueError("empty evaluation set")
    ems: list[int] = []
    f1s: list[float] = []
    records: list[dict] = []
    max_len = tracker.hp.max_len
    for start in range(0, len(triplets), batch_size):
        batch = list(triplets[start:start + batch_size])
        q1_ids, q1_mask, q2_ids, q2_mask, gold = _batch_arrays(
            batch, tracker.vocab, max_len)
        logits = forward_batch(tracker.params, tracker.hp, tracker.ablation,
                               q1_ids, q1_mask, q2_ids, q2_mask)
        keep = predict_probs(logits).data[..., 1]
        pred = labels_from_probs(keep)
        for row, t in enumerate(batch):
            n = int(q1_mask[row].sum())
            pred_labels = pred[row, :n].tolist()
            gold_labels = list(t.labels[:n])
            q1 = list(t.q1)[:n]
            q2 = list(t.q2)[:max_len]
            pred_q3 = render_internal_query(q1, pred_labels, q2)
            ems.append(em_sample(pred_labels, gold_labels))
            f1s.append(f1_sample(set(pred_q3), set(t.q3)))
            if keep_records:
                records.append({"q1": q1, "q2": q2, "pred_q3": pred_q3,
                                "gold_q3": list(t.q3),
                                "pred_labels": pred_labels,
                                "gold_labels": gold_labels})
    return EvalReport(em=em_corpus(ems), f1=f1_corpus(f1s),
                      fingerprint=_config_fingerprint(tracker),
                      per_sample=records)


def evaluate_baseline(kb, triplets: Sequence[TrackingTriplet],
                      keep_records: bool = False) -> EvalReport:
    """EM / F1 of the DP slot baseline on a dataset."""
    from .slots import baseline_track

    if not triplets:
        raise ValueError("empty evaluation set")
    ems, f1s, records = [], [], []
    for t in triplets:
        pred_q3 = baseline_track(kb, list(t.q1), list(t.q2))
        pred_set = set(pred_q3)
        pred_labels = [int(w in pred_set) for w in t.q1]
        ems.append(em_sample(pred_labels, t.labels))
        f1s.append(f1_sample(pred_set, set(t.q3)))
        if keep_records:
            records.append({"q1": list(t.q1), "q2": list(t.q2),
                            "pred_q3": pred_q3, "gold_q3": list(t.q3)})
    return EvalReport(em=em_corpus(ems), f1=f1_corpus(f1s),
                      fingerprint="slot_baseline", per_sample=records)


ABLATION_VARIANTS: list[tuple[str, Ablation]] = [
    ("full_model", Ablation()),
    ("random_embed_init", Ablation(random_embed_init=True)),
    ("no_self_attention", Ablation(no_self_attention=True)),
    ("single_head", Ablation(single_head=True)),
    ("enhance_concat_only", Ablation(enhance_concat_only=True)),
    ("enhance_add_only", Ablation(enhance_add_only=True)),
]


def run_ablations(train_set: Sequence[TrackingTriplet],
                  val_set: Sequence[TrackingTriplet],
                  test_set: Sequence[TrackingTriplet],
                  base_cfg: TrainConfig, hp: Hyperparams,
                  seeds: Sequence[int] = (0, 1, 2)) -> list[dict]:
    """Train/evaluate the full model and each ablated variant, seed-averaged."""
    rows = []
    for name, ablation in ABLATION_VARIANTS:
        ems, f1s = [], []
        for seed in seeds:
            cfg = replace(base_cfg, seed=seed, ablation=ablation)
            tracker, _ = train(train_set, val_set, cfg, hp)
            report = evaluate(tracker, test_set, batch_size=base_cfg.batch_size)
            ems.append(report.em)
            f1s.append(report.f1)
        rows.append({"variant": name,
                     "em": sum(ems) / len(ems), "f1": sum(f1s) / len(f1s)})
        log.info("ablation %s: EM %.2f, F1 %.2f", name, rows[-1]["em"], rows[-1]["f1"])
    return rows


def write_training_log(path: Path, history: Sequence[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for entry in history:
            fh.write(json.dumps(entry) + "\n")


def write_report_csv(path: Path, rows: Sequence[dict]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["variant", "em", "f1"])
        writer.writeheader()
        for row in rows:
            writer.writerow({"variant": row["variant"],
                             "em": f"{row['em']:.2f}", "f1": f"{row['f1']:.2f}"})


def ablation_markdown(rows: Sequence[dict]) -> str:
    lines = ["| variant | EM | F1 |", "|---|---|---|"]
    lines += [f"| {r['variant']} | {r['em']:.2f} | {r['f1']:.2f} |" for r in rows]
    return "\n".join(lines)
