"""Query-log mining: raw logs -> (q1, q2, q3, labels) training triplets.

Pairs of queries typed consecutively by the same user within a time window
become supervised samples: q2 is the word diff-set of the pair, labels mark
which q1 words survive into q3.
"""

from __future__ import annotations

import json
import unicodedata
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

DEFAULT_WINDOW_MINUTES = 30
DEFAULT_MIN_COUNT = 5

DEFAULT_STOPWORDS = frozenset({
    "a", "an", "the", "and", "or", "of", "for", "in", "on", "to", "with",
})

# Reject reason codes (rejects report wire values).
EMPTY_Q2 = "EMPTY_Q2"
MEANINGLESS_Q2 = "MEANINGLESS_Q2"
BAD_RECORD = "BAD_RECORD"


@dataclass(frozen=True)
class RawLogRecord:
    user_id: str
    timestamp: float
    query: str


@dataclass(frozen=True)
class QueryPair:
    first: tuple[str, ...]
    second: tuple[str, ...]
    count: int


@dataclass(frozen=True)
class Reject:
    reason: str
    payload: str


@dataclass(frozen=True)
class TrackingTriplet:
    q1: tuple[str, ...]
    q2: tuple[str, ...]
    q3: tuple[str, ...]
    labels: tuple[int, ...]

    def __post_init__(self):
        q1set, q3set = set(self.q1), set(self.q3)
        if not self.q2:
            raise ValueError("q2 must be non-empty")
        if len(self.labels) != len(self.q1):
            raise ValueError("labels must align with q1")
        if any(int(w in q3set) != lab for w, lab in zip(self.q1, self.labels)):
            raise ValueError("labels[i] must equal [q1[i] in q3]")
        if not set(self.q2) <= q3set:
            raise ValueError("every q2 word must appear in q3")
        if not q3set <= (q1set | set(self.q2)):
            raise ValueError("q3 must be a subset of q1 union q2")

    def to_json(self) -> str:
        return json.dumps({"q1": list(self.q1), "q2": list(self.q2),
                           "q3": list(self.q3), "labels": list(self.labels)},
                          ensure_ascii=False)

    @classmethod
    def from_json(cls, line: str) -> "TrackingTriplet":
        d = json.loads(line)
        return cls(tuple(d["q1"]), tuple(d["q2"]), tuple(d["q3"]),
                   tuple(int(x) for x in d["labels"]))


def tokenize(text: str) -> list[str]:
    """Lowercased, whitespace-split, punctuation-stripped tokens.

    Returns [] for queries that normalize to nothing (invalid record).
    """
    tokens = []
    for raw in text.lower().split():
        tok = "".join(ch for ch in raw
                      if not unicodedata.category(ch).startswith("P"))
        if tok:
            tokens.append(tok)
    return tokens


def _dedup(tokens: Sequence[str]) -> tuple[str, ...]:
    # Queries have set semantics; keep first occurrence.
    return tuple(dict.fromkeys(tokens))


def mine_pairs(records: Iterable[RawLogRecord],
               window_minutes: float = DEFAULT_WINDOW_MINUTES
               ) -> tuple[list[QueryPair], list[Reject]]:
    """Consecutive same-user queries within the window become counted pairs.

    Identical (normalized) consecutive queries are discarded; records that
    tokenize to nothing are skipped and reported.
    """
    rejects: list[Reject] = []
    cleaned: list[tuple[str, float, tuple[str, ...]]] = []
    for rec in records:
        if rec.timestamp < 0 or not rec.query.strip():
            rejects.append(Reject(BAD_RECORD, f"{rec.user_id}\t{rec.timestamp}\t{rec.query}"))
            continue
        toks = tokenize(rec.query)
        if not toks:
            rejects.append(Reject(BAD_RECORD, rec.query))
            continue
        cleaned.append((rec.user_id, rec.timestamp, _dedup(toks)))

    cleaned.sort(key=lambda r: (r[0], r[1]))
    window = window_minutes * 60
    counts: Counter[tuple[tuple[str, ...], tuple[str, ...]]] = Counter()
    for (u1, t1, q1), (u2, t2, q2) in zip(cleaned, cleaned[1:]):
        if u1 != u2 or t2 - t1 > window:
            continue
        if q1 == q2:
            continue
        counts[(q1, q2)] += 1
    pairs = [QueryPair(first, second, n)
             for (first, second), n in sorted(counts.items())]
    return pairs, rejects


def filter_frequency(pairs: Iterable[QueryPair],
                     min_count: int = DEFAULT_MIN_COUNT) -> list[QueryPair]:
    return [p for p in pairs if p.count >= min_count]


def build_triplet(pair: QueryPair,
                  stopwords: frozenset[str] = DEFAULT_STOPWORDS
                  ) -> TrackingTriplet | Reject:
    """Diff-set construction: q2 = words of q3 absent from q1, q3-order."""
    q1 = _dedup(pair.first)
    q3 = _dedup(pair.second)
    q1set = set(q1)
    q2 = tuple(w for w in q3 if w not in q1set)
    if not q2:
        return Reject(EMPTY_Q2, f"{' '.join(q1)} -> {' '.join(q3)}")
    if all(w in stopwords for w in q2):
        return Reject(MEANINGLESS_Q2, f"{' '.join(q1)} -> {' '.join(q3)}")
    labels = tuple(int(w in set(q3)) for w in q1)
    return TrackingTriplet(q1, q2, q3, labels)


def split_triplets(triplets: Sequence[TrackingTriplet],
                   ratios: Sequence[float], seed: int
                   ) -> tuple[list[TrackingTriplet], ...]:
    """Deterministic split; a (q1, q2) key lands in exactly one part."""
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"split ratios must sum to 1, got {ratios}")
    if not triplets:
        raise ValueError("cannot split an empty corpus")
    groups: dict[tuple, list[TrackingTriplet]] = {}
    for t in triplets:
        groups.setdefault((t.q1, t.q2), []).append(t)
    keys = sorted(groups)
    rng = np.random.default_rng(seed)
    rng.shuffle(keys)
    total = len(triplets)
    bounds = np.cumsum([r * total for r in ratios])
    parts: list[list[TrackingTriplet]] = [[] for _ in ratios]
    placed = 0
    idx = 0
    for key in keys:
        while idx < len(parts) - 1 and placed >= bounds[idx]:
            idx += 1
        parts[idx].extend(groups[key])
        placed += len(groups[key])
    return tuple(parts)


# ---------------------------------------------------------------------------
# File formats: raw log TSV, dataset JSONL, rejects JSONL.


def read_log_tsv(path: Path) -> Iterator[RawLogRecord | Reject]:
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            yield Reject(BAD_RECORD, line)
            continue
        try:
            ts = float(parts[1])
        except ValueError:
            yield Reject(BAD_RECORD, line)
            continue
        yield RawLogRecord(parts[0], ts, parts[2])


def write_log_tsv(path: Path, records: Iterable[RawLogRecord]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(f"{r.user_id}\t{r.timestamp:g}\t{r.query}\n")


def write_dataset(path: Path, triplets: Iterable[TrackingTriplet]) -> int:
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for t in triplets:
            fh.write(t.to_json() + "\n")
            n += 1
    return n


def read_dataset(path: Path) -> list[TrackingTriplet]:
    return [TrackingTriplet.from_json(line)
            for line in Path(path).read_text(encoding="utf-8").splitlines()
            if line.strip()]


def write_rejects(path: Path, rejects: Iterable[Reject]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in rejects:
            fh.write(json.dumps({"reason": r.reason, "payload": r.payload},
                                ensure_ascii=False) + "\n")
