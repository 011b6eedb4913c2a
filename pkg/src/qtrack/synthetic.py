"""Synthetic e-commerce session generator with gold intent changes.

Stands in for a proprietary query log: sessions are built from a slot
schema (category, brand, color, style, attribute) where brand/color values
replace each other and style/attribute values may accumulate. Emits both a
raw log stream (for pipeline round-trip testing) and the gold triplets.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .data import RawLogRecord, TrackingTriplet

REPLACE = "replace"
ADD = "add"
COEXIST = "coexist"


@dataclass(frozen=True)
class SlotDef:
    name: str
    values: tuple[str, ...]
    coexists: bool = False

    def __post_init__(self):
        if not self.values:
            raise ValueError(f"slot {self.name!r} has an empty value vocabulary")


@dataclass(frozen=True)
class SyntheticSchema:
    slots: tuple[SlotDef, ...]
    p_replace: float = 0.45
    p_add: float = 0.35
    p_coexist: float = 0.20
    p_second_intent: float = 0.3
    min_turns: int = 1
    max_turns: int = 4
    max_coexist_values: int = 3
    ambiguity_fraction: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not self.slots:
            raise ValueError("schema needs at least one slot")
        probs = (self.p_replace, self.p_add, self.p_coexist)
        if abs(sum(probs) - 1.0) > 1e-9 or min(probs) < 0:
            raise ValueError(f"intent probabilities must be a distribution, got {probs}")
        if self.ambiguity_fraction == 0.0:
            seen: dict[str, str] = {}
            for slot in self.slots:
                for v in slot.values:
                    if v in seen:
                        raise ValueError(
                            f"value {v!r} appears in slots {seen[v]!r} and {slot.name!r} "
                            "but ambiguity_fraction is 0")
                    seen[v] = slot.name

    @property
    def word_slot(self) -> dict[str, str]:
        """word -> slot name; on ambiguity the first (priority) slot wins."""
        out: dict[str, str] = {}
        for slot in self.slots:
            for v in slot.values:
                out.setdefault(v, slot.name)
        return out

    def kb_lines(self) -> list[str]:
        """TSV lines for the slot baseline's knowledge base."""
        return [f"{slot.name}\t{v}" for slot in self.slots for v in slot.values]

    def write_kb(self, path: Path) -> None:
        Path(path).write_text("\n".join(self.kb_lines()) + "\n", encoding="utf-8")


_SEED_VALUES = {
    "category": ("shoes", "dress", "shirt", "jacket", "pants", "skirt",
                 "bag", "watch", "hat", "coat"),
    "brand": ("adidas", "nike", "puma", "reebok", "gucci", "prada",
              "zara", "uniqlo", "vans", "fila"),
    "color": ("black", "red", "white", "blue", "green", "yellow",
              "pink", "purple", "gray", "brown"),
    "style": ("fairy", "cute", "casual", "elegant", "sport", "retro",
              "vintage", "chic", "boho", "punk"),
    "attribute": ("ventilated", "long", "short", "waterproof", "slim",
                  "loose", "warm", "light", "soft", "thick"),
}

_SLOT_SHARE = {"category": 0.2, "brand": 0.25, "color": 0.05,
               "style": 0.25, "attribute": 0.25}
_COEXISTS = {"style", "attribute"}


def default_schema(vocab_size: int = 2000, seed: int = 0, **overrides) -> SyntheticSchema:
    """Five-slot schema padded with generated values up to roughly vocab_size."""
    slots = []
    for name, seeds in _SEED_VALUES.items():
        target = max(len(seeds), int(vocab_size * _SLOT_SHARE[name]))
        values = list(seeds)
        values += [f"{name[:5]}{i:03d}" for i in range(target - len(seeds))]
        slots.append(SlotDef(name, tuple(values), coexists=name in _COEXISTS))
    return SyntheticSchema(slots=tuple(slots), seed=seed, **overrides)


@dataclass
class _SessionState:
    # slot -> current values (len > 1 only for coexisting slots)
    values: dict[str, list[str]] = field(default_factory=dict)
    words: list[str] = field(default_factory=list)


def _pick(rng: np.random.Generator, items: Sequence[str],
          exclude: Sequence[str] = ()) -> str:
    pool = [v for v in items if v not in exclude]
    return pool[int(rng.integers(len(pool)))]


def _apply_intent(schema: SyntheticSchema, state: _SessionState, intent: str,
                  rng: np.random.Generator, touched: set[str]
                  ) -> tuple[str, str] | None:
    """Mutate state per intent; returns (slot, new word) or None if impossible."""
    plain = [s for s in schema.slots if not s.coexists]
    coex = [s for s in schema.slots if s.coexists]

    if intent == REPLACE:
        candidates = [s for s in plain
                      if s.name in state.values and s.name not in touched
                      and len(s.values) > 1]
        if not candidates:
            return _apply_intent(schema, state, ADD, rng, touched)
        slot = candidates[int(rng.integers(len(candidates)))]
        new = _pick(rng, slot.values, exclude=state.values[slot.name])
        old = state.values[slot.name]
        state.values[slot.name] = [new]
        state.words = [w for w in state.words if w not in old]
        return slot.name, new

    if intent == COEXIST:
        candidates = [s for s in coex
                      if s.name not in touched
                      and len(state.values.get(s.name, [])) < schema.max_coexist_values
                      and len(s.values) > len(state.values.get(s.name, []))]
        if not candidates:
            return _apply_intent(schema, state, ADD, rng, touched)
        slot = candidates[int(rng.integers(len(candidates)))]
        new = _pick(rng, slot.values, exclude=state.values.get(slot.name, []))
        state.values.setdefault(slot.name, []).append(new)
        return slot.name, new

    # ADD: introduce a slot not yet in the state.
    candidates = [s for s in schema.slots
                  if s.name not in state.values and s.name not in touched]
    if not candidates:
        # Everything is occupied; fall back to a replacement.
        replaceable = [s for s in plain if s.name in state.values
                       and s.name not in touched and len(s.values) > 1]
        if not replaceable:
            return None
        return _apply_intent(schema, state, REPLACE, rng, touched)
    slot = candidates[int(rng.integers(len(candidates)))]
    new = _pick(rng, slot.values)
    state.values[slot.name] = [new]
    return slot.name, new


def gen_synthetic(schema: SyntheticSchema, n_sessions: int,
                  seed: int | None = None
                  ) -> tuple[list[RawLogRecord], list[TrackingTriplet]]:
    """Simulate sessions; returns (raw log records, gold triplets).

    Consecutive timestamps within a session stay inside the 30-minute
    mining window; different sessions use different user ids.
    """
    rng = np.random.default_rng(schema.seed if seed is None else seed)
    category = schema.slots[0]
    records: list[RawLogRecord] = []
    gold: list[TrackingTriplet] = []
    intents = (REPLACE, ADD, COEXIST)
    probs = (schema.p_replace, schema.p_add, schema.p_coexist)

    for i in range(n_sessions):
        user = f"u{i:07d}"
        t0 = float(i) * 10_000.0
        state = _SessionState()

        cat = _pick(rng, category.values)
        state.values[category.name] = [cat]
        state.words = [cat]
        extra_slots = [s for s in schema.slots[1:]]
        n_extra = int(rng.integers(0, 3))
        for s in rng.permutation(len(extra_slots))[:n_extra]:
            slot = extra_slots[int(s)]
            v = _pick(rng, slot.values)
            state.values[slot.name] = [v]
            state.words.append(v)
        records.append(RawLogRecord(user, t0, " ".join(state.words)))

        n_turns = int(rng.integers(schema.min_turns, schema.max_turns + 1))
        for turn in range(n_turns):
            q1 = list(state.words)
            touched: set[str] = set()
            new_words: list[str] = []
            n_intents = 2 if rng.random() < schema.p_second_intent else 1
            for _ in range(n_intents):
                intent = intents[int(rng.choice(3, p=probs))]
                result = _apply_intent(schema, state, intent, rng, touched)
                if result is None:
                    continue
                slot_name, word = result
                touched.add(slot_name)
                new_words.append(word)
            if not new_words:
                continue
            kept = [w for w in state.words if w in q1]
            state.words = kept + new_words
            labels = tuple(int(w in state.words) for w in q1)
            gold.append(TrackingTriplet(tuple(q1), tuple(new_words),
                                        tuple(state.words), labels))
            records.append(RawLogRecord(user, t0 + 120.0 * (turn + 1),
                                        " ".join(state.words)))
    return records, gold


def oracle_labels(schema: SyntheticSchema, q1: Sequence[str],
                  q2: Sequence[str]) -> list[int]:
    """Schema-aware oracle: drop a q1 word iff q2 holds a same-slot word of a
    non-coexisting slot. Scores 100% on generated data by construction."""
    word_slot = schema.word_slot
    coexists = {s.name for s in schema.slots if s.coexists}
    q2_slots = {word_slot[w] for w in q2 if w in word_slot}
    labels = []
    for w in q1:
        slot = word_slot.get(w)
        drop = slot is not None and slot in q2_slots and slot not in coexists
        labels.append(0 if drop else 1)
    return labels
