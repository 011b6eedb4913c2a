"""Unsupervised slot baseline: lexicon slot filling via dynamic programming
plus replace-on-same-slot state tracking."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

FREE = None  # slot tag for unmatched tokens


@dataclass(frozen=True)
class Segment:
    span: tuple[str, ...]
    slot: str | None  # None = FREE (always a singleton span)


class KnowledgeBase:
    """slot -> values lexicon; values may span multiple tokens.

    Slot priority is first-appearance order in the source; a value listed
    under several slots resolves to the highest-priority one.
    """

    def __init__(self, entries: Iterable[tuple[str, tuple[str, ...]]]):
        self.slot_values: dict[str, list[tuple[str, ...]]] = {}
        self.reverse: dict[tuple[str, ...], str] = {}
        for slot, value in entries:
            if not value:
                raise ValueError(f"empty value under slot {slot!r}")
            self.slot_values.setdefault(slot, []).append(value)
            self.reverse.setdefault(value, slot)
        self.slot_priority: list[str] = list(self.slot_values)
        self.max_value_len = max((len(v) for v in self.reverse), default=0)

    @classmethod
    def from_tsv(cls, path: Path) -> "KnowledgeBase":
        entries = []
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            slot, _, value = line.partition("\t")
            if not value:
                raise ValueError(f"malformed KB line: {line!r}")
            entries.append((slot, tuple(value.split())))
        return cls(entries)


def _segmentation_key(segments: Sequence[Segment]) -> tuple:
    """Lexicographic objective: coverage, fewest segments, leftmost-longest."""
    covered = sum(len(s.span) for s in segments if s.slot is not FREE)
    return (covered, -len(segments), tuple(len(s.span) for s in segments))


def dp_match(tokens: Sequence[str], kb: KnowledgeBase) -> list[Segment]:
    """Best slot segmentation under the lexicographic objective.

    Uncovered tokens become FREE singletons. Prefix DP: candidates at each
    position extend the best prefix with a KB value span or one FREE token.
    """
    if not tokens:
        raise ValueError("dp_match needs a non-empty token sequence")
    tokens = tuple(tokens)
    n = len(tokens)
    best: list[list[Segment] | None] = [None] * (n + 1)
    best[0] = []
    max_span = max(kb.max_value_len, 1)
    for i in range(1, n + 1):
        candidates: list[list[Segment]] = []
        for length in range(1, min(i, max_span) + 1):
            span = tokens[i - length:i]
            slot = kb.reverse.get(span)
            if slot is not None:
                candidates.append(best[i - length] + [Segment(span, slot)])
            elif length == 1:
                candidates.append(best[i - 1] + [Segment(span, FREE)])
        best[i] = max(candidates, key=_segmentation_key)
    return best[n]


@dataclass(frozen=True)
class SlotState:
    slots: tuple[tuple[str, tuple[str, ...]], ...] = ()  # (slot, value) in arrival order
    free: tuple[str, ...] = ()

    def value_of(self, slot: str) -> tuple[str, ...] | None:
        for name, value in self.slots:
            if name == slot:
                return value
        return None


def track_update(state: SlotState, segmentation: Sequence[Segment]) -> SlotState:
    """New values replace old ones for the same slot; FREE tokens append."""
    slots = dict(state.slots)
    free = list(state.free)
    for seg in segmentation:
        if seg.slot is FREE:
            for tok in seg.span:
                if tok not in free:
                    free.append(tok)
        else:
            slots[seg.slot] = seg.span
    return SlotState(tuple(slots.items()), tuple(free))


def render(state: SlotState, kb: KnowledgeBase) -> list[str]:
    """Slot values in KB priority order, then the free-text bucket."""
    out: list[str] = []
    seen: set[str] = set()
    filled = dict(state.slots)
    ordered = [s for s in kb.slot_priority if s in filled]
    ordered += [s for s, _ in state.slots if s not in kb.slot_priority]
    for slot in ordered:
        for tok in filled[slot]:
            if tok not in seen:
                seen.add(tok)
                out.append(tok)
    for tok in state.free:
        if tok not in seen:
            seen.add(tok)
            out.append(tok)
    return out


def baseline_track(kb: KnowledgeBase, q1_tokens: Sequence[str],
                   q2_tokens: Sequence[str]) -> list[str]:
    """Predicted new internal query: fill state from q1, update with q2."""
    state = track_update(SlotState(), dp_match(q1_tokens, kb))
    state = track_update(state, dp_match(q2_tokens, kb))
    return render(state, kb)
