"""Exactly-Matched accuracy and word-level F1 over internal-query word sets."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence


def em_sample(pred_labels: Sequence[int], gold_labels: Sequence[int]) -> int:
    if len(pred_labels) != len(gold_labels):
        raise ValueError(f"label lengths differ: {len(pred_labels)} vs {len(gold_labels)}")
    return int(all(int(p) == int(g) for p, g in zip(pred_labels, gold_labels)))


def f1_sample(pred_words: set[str], gold_words: set[str]) -> float:
    """Per-sample F1 (percent) between predicted and gold q3 word sets."""
    if not gold_words:
        raise ValueError("gold word set is empty")
    overlap = len(pred_words & gold_words)
    if overlap == 0:
        return 0.0
    precision = overlap / len(pred_words)
    recall = overlap / len(gold_words)
    return 100.0 * 2 * precision * recall / (precision + recall)


def em_corpus(samples: Sequence[int]) -> float:
    if not samples:
        raise ValueError("empty corpus")
    return 100.0 * sum(samples) / len(samples)


def f1_corpus(samples: Sequence[float]) -> float:
    """Macro average of per-sample F1 scores."""
    if not samples:
        raise ValueError("empty corpus")
    return sum(samples) / len(samples)


@dataclass
class EvalReport:
    em: float
    f1: float
    fingerprint: str = ""
    per_sample: list[dict] = field(default_factory=list)

    def __post_init__(self):
        if not (0 <= self.em <= 100 and 0 <= self.f1 <= 100):
            raise ValueError(f"metrics out of range: em={self.em}, f1={self.f1}")
        if self.em == 100.0 and self.f1 != 100.0:
            raise ValueError("em=100 must imply f1=100")
