"""Encoding-Matching-Predicting network for per-word keep/drop tracking.

Maps a (previous internal query, new input query) token pair to a keep
probability for every word of the previous query. Queries are bags of
words: no positional information enters the network anywhere.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import tensor as T
from .tensor import Tape, Tensor

log = logging.getLogger(__name__)

CHECKPOINT_FORMAT_VERSION = 1

ACTIVATIONS = ("relu", "identity")


@dataclass(frozen=True)
class Hyperparams:
    n_heads: int = 5
    head_dim: int = 40
    embed_dim: int = 200
    max_len: int = 20
    dropout_rate: float = 0.1
    activation: str = "relu"
    # Attention score divisor: embedding dim by default; head dim optionally.
    scale_by_head_dim: bool = False

    def __post_init__(self):
        if min(self.n_heads, self.head_dim, self.embed_dim, self.max_len) < 1:
            raise ValueError("n_heads, head_dim, embed_dim, max_len must all be >= 1")
        if not 0 <= self.dropout_rate < 1:
            raise ValueError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")


@dataclass(frozen=True)
class Ablation:
    """Model variant switches for the ablation harness."""

    random_embed_init: bool = False
    no_self_attention: bool = False
    single_head: bool = False
    enhance_concat_only: bool = False
    enhance_add_only: bool = False

    def __post_init__(self):
        if self.enhance_concat_only and self.enhance_add_only:
            raise ValueError("enhance_concat_only and enhance_add_only are exclusive")

    @property
    def enhance_mode(self) -> str:
        if self.enhance_concat_only:
            return "concat"
        if self.enhance_add_only:
            return "add"
        return "enhance"


class Vocabulary:
    """Token <-> id bijection with reserved PAD=0 and UNK=1."""

    PAD = 0
    UNK = 1
    PAD_TOKEN = "<pad>"
    UNK_TOKEN = "<unk>"

    def __init__(self, tokens: Sequence[str]):
        self._id_to_token = [self.PAD_TOKEN, self.UNK_TOKEN, *tokens]
        self._token_to_id = {t: i for i, t in enumerate(self._id_to_token)}
        if len(self._token_to_id) != len(self._id_to_token):
            raise ValueError("duplicate tokens in vocabulary")

    @classmethod
    def from_corpus(cls, token_lists: Iterable[Sequence[str]]) -> "Vocabulary":
        seen: dict[str, None] = {}
        for toks in token_lists:
            for t in toks:
                if t not in (cls.PAD_TOKEN, cls.UNK_TOKEN):
                    seen.setdefault(t)
        return cls(sorted(seen))

    def __len__(self) -> int:
        return len(self._id_to_token)

    def __contains__(self, token: str) -> bool:
        return token in self._token_to_id

    def encode(self, tokens: Sequence[str]) -> np.ndarray:
        return np.array([self._token_to_id.get(t, self.UNK) for t in tokens],
                        dtype=np.int64)

    def decode(self, ids: Sequence[int]) -> list[str]:
        return [self._id_to_token[i] for i in ids]

    def save(self, path: Path) -> None:
        Path(path).write_text("\n".join(self._id_to_token) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: Path) -> "Vocabulary":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        if lines[:2] != [cls.PAD_TOKEN, cls.UNK_TOKEN]:
            raise ValueError(f"vocab file {path} missing reserved PAD/UNK header")
        return cls(lines[2:])


def effective_heads(hp: Hyperparams, ablation: Ablation) -> tuple[int, int]:
    """(head count, per-head dim); the single-head variant keeps total width."""
    if ablation.single_head:
        return 1, hp.n_heads * hp.head_dim
    return hp.n_heads, hp.head_dim


def param_manifest(hp: Hyperparams, ablation: Ablation,
                   vocab_size: int) -> list[tuple[str, tuple[int, ...]]]:
    """Ordered (name, shape) list; fixes serialization order."""
    h, d_h = effective_heads(hp, ablation)
    d_w = hp.embed_dim
    fe_in = {"enhance": 4 * d_w, "concat": 2 * d_w}.get(ablation.enhance_mode)

    manifest: list[tuple[str, tuple[int, ...]]] = [("embed.table", (vocab_size, d_w))]

    def attention_block(prefix: str, cross: bool) -> None:
        for i in range(h):
            if cross:
                manifest.append((f"{prefix}.head{i}.wq", (d_w, d_h)))
                manifest.append((f"{prefix}.head{i}.wk", (d_w, d_h)))
            else:
                manifest.append((f"{prefix}.head{i}.w", (d_w, d_h)))
        manifest.append((f"{prefix}.w_mix", (h * d_h, d_w)))
        if fe_in is not None:
            manifest.append((f"{prefix}.w_fe", (fe_in, d_w)))

    if not ablation.no_self_attention:
        attention_block("enc", cross=False)
    attention_block("match", cross=True)
    if not ablation.no_self_attention:
        attention_block("enc2", cross=False)
    manifest.append(("cls.w", (d_w, 2)))
    return manifest


def init_params(hp: Hyperparams, ablation: Ablation, vocab_size: int,
                rng: np.random.Generator, dtype=T.SINGLE) -> dict[str, Tensor]:
    """Uniform(-0.05, 0.05) for every matrix; the equations carry no biases."""
    return {
        name: Tensor(rng.uniform(-0.05, 0.05, size=shape), dtype=dtype)
        for name, shape in param_manifest(hp, ablation, vocab_size)
    }


# ---------------------------------------------------------------------------
# Forward pieces. All operate on batched (B, L, d) tensors; `mask` arrays are
# bool (B, L) with True at real-token positions.


def _zero_pad_rows(x: Tensor, mask: np.ndarray, tape: Tape | None) -> Tensor:
    m = Tensor(np.broadcast_to(mask[..., None], x.shape).astype(x.data.dtype.type),
               dtype=x.dtype)
    return T.hadamard(x, m, tape=tape)


def _activation(x: Tensor, kind: str, tape: Tape | None) -> Tensor:
    if kind == "relu":
        return T.relu(x, tape=tape)
    return x


def embed(ids: np.ndarray, mask: np.ndarray, params: dict[str, Tensor],
          hp: Hyperparams, tape: Tape | None = None,
          rng: np.random.Generator | None = None, training: bool = False) -> Tensor:
    """Gather embedding rows, apply dropout (train mode), zero pad rows."""
    if ids.size == 0 or ids.shape[-1] == 0:
        raise ValueError("cannot embed an empty token sequence")
    e = T.gather_rows(params["embed.table"], ids, tape=tape)
    e = T.dropout(e, hp.dropout_rate, training, rng=rng, tape=tape)
    return _zero_pad_rows(e, mask, tape)


def _attention(xq: Tensor, xk: Tensor, mask_q: np.ndarray, mask_k: np.ndarray,
               head_weights: list[tuple[Tensor, Tensor]], w_mix: Tensor,
               hp: Hyperparams, ablation: Ablation, tape: Tape | None,
               rng: np.random.Generator | None, training: bool) -> Tensor:
    """Shared core of self- and cross-attention (multi-head, scaled dot-product)."""
    _, d_h = effective_heads(hp, ablation)
    divisor = math.sqrt(d_h if hp.scale_by_head_dim else hp.embed_dim)
    key_mask = np.broadcast_to(mask_k[:, None, :],
                               (mask_q.shape[0], mask_q.shape[1], mask_k.shape[1]))
    heads = []
    for wq, wk in head_weights:
        pq = T.matmul(xq, wq, tape=tape)
        pk = T.matmul(xk, wk, tape=tape)
        scores = T.scale(T.matmul(pq, pk, transpose_b=True, tape=tape), 1 / divisor,
                         tape=tape)
        attn = T.softmax_rows(scores, mask=key_mask, tape=tape)
        heads.append(T.matmul(attn, pk, tape=tape))
    out = T.matmul(T.concat_last(heads, tape=tape), w_mix, tape=tape)
    out = T.dropout(out, hp.dropout_rate, training, rng=rng, tape=tape)
    return _zero_pad_rows(out, mask_q, tape)


def self_attention_mh(x: Tensor, mask: np.ndarray, prefix: str,
                      params: dict[str, Tensor], hp: Hyperparams, ablation: Ablation,
                      tape: Tape | None = None, rng: np.random.Generator | None = None,
                      training: bool = False) -> Tensor:
    h, _ = effective_heads(hp, ablation)
    weights = [(params[f"{prefix}.head{i}.w"], params[f"{prefix}.head{i}.w"])
               for i in range(h)]
    return _attention(x, x, mask, mask, weights, params[f"{prefix}.w_mix"],
                      hp, ablation, tape, rng, training)


def feature_enhance(x: Tensor, h: Tensor, mask: np.ndarray, prefix: str,
                    params: dict[str, Tensor], hp: Hyperparams, ablation: Ablation,
                    tape: Tape | None = None) -> Tensor:
    """[X, H, X-H, X.H] -> projection -> activation (or the ablated fusions)."""
    mode = ablation.enhance_mode
    if mode == "add":
        return _zero_pad_rows(T.add(x, h, tape=tape), mask, tape)
    if mode == "concat":
        z = T.concat_last([x, h], tape=tape)
    else:
        z = T.concat_last([x, h, T.sub(x, h, tape=tape), T.hadamard(x, h, tape=tape)],
                          tape=tape)
    m = _activation(T.matmul(z, params[f"{prefix}.w_fe"], tape=tape),
                    hp.activation, tape)
    return _zero_pad_rows(m, mask, tape)


def encode(x: Tensor, mask: np.ndarray, prefix: str, params: dict[str, Tensor],
           hp: Hyperparams, ablation: Ablation, tape: Tape | None = None,
           rng: np.random.Generator | None = None, training: bool = False) -> Tensor:
    if ablation.no_self_attention:
        return x
    h = self_attention_mh(x, mask, prefix, params, hp, ablation, tape, rng, training)
    return feature_enhance(x, h, mask, prefix, params, hp, ablation, tape)


def match(m1: Tensor, m2: Tensor, mask1: np.ndarray, mask2: np.ndarray,
          params: dict[str, Tensor], hp: Hyperparams, ablation: Ablation,
          tape: Tape | None = None, rng: np.random.Generator | None = None,
          training: bool = False) -> Tensor:
    """Word-by-word cross attention from q1 over q2, then feature enhancement.

    Attention values come from the q2 side: each q1 word absorbs its
    counterpart information from the input query.
    """
    h, _ = effective_heads(hp, ablation)
    weights = [(params[f"match.head{i}.wq"], params[f"match.head{i}.wk"])
               for i in range(h)]
    y = _attention(m1, m2, mask1, mask2, weights, params["match.w_mix"],
                   hp, ablation, tape, rng, training)
    return feature_enhance(m1, y, mask1, "match", params, hp, ablation, tape)


def forward_batch(params: dict[str, Tensor], hp: Hyperparams, ablation: Ablation,
                  q1_ids: np.ndarray, q1_mask: np.ndarray,
                  q2_ids: np.ndarray, q2_mask: np.ndarray,
                  tape: Tape | None = None, rng: np.random.Generator | None = None,
                  training: bool = False) -> Tensor:
    """Full pipeline; returns per-word logits of shape (B, L1, 2).

    Column 1 of the logits is the "keep" class.
    """
    if not q1_mask.any(axis=-1).all() or not q2_mask.any(axis=-1).all():
        raise ValueError("every sample needs at least one real token in q1 and q2")
    e1 = embed(q1_ids, q1_mask, params, hp, tape, rng, training)
    e2 = embed(q2_ids, q2_mask, params, hp, tape, rng, training)
    m1 = encode(e1, q1_mask, "enc", params, hp, ablation, tape, rng, training)
    m2 = encode(e2, q2_mask, "enc", params, hp, ablation, tape, rng, training)
    m3 = match(m1, m2, q1_mask, q2_mask, params, hp, ablation, tape, rng, training)
    m4 = encode(m3, q1_mask, "enc2", params, hp, ablation, tape, rng, training)
    return T.matmul(m4, params["cls.w"], tape=tape)


def predict_probs(logits: Tensor, tape: Tape | None = None) -> Tensor:
    """Per-word [P(drop), P(keep)] rows."""
    return T.softmax_rows(logits, mask=None, tape=tape)


def labels_from_probs(keep_probs: np.ndarray) -> np.ndarray:
    # Tie at 0.5 breaks to drop, keeping the internal query minimal.
    return (keep_probs > 0.5).astype(np.int64)


def encode_queries(vocab: Vocabulary, token_lists: Sequence[Sequence[str]],
                   max_len: int) -> tuple[np.ndarray, np.ndarray]:
    """Pad a batch of token lists to its longest (truncated) length.

    Returns (ids, mask). Sequences beyond max_len are tail-truncated with a
    logged warning.
    """
    truncated = []
    n_truncated = 0
    for toks in token_lists:
        if len(toks) == 0:
            raise ValueError("empty token sequence")
        if len(toks) > max_len:
            n_truncated += 1
            toks = toks[:max_len]
        truncated.append(toks)
    if n_truncated:
        log.warning("truncated %d sequence(s) to max_len=%d", n_truncated, max_len)
    width = max(len(t) for t in truncated)
    ids = np.full((len(truncated), width), Vocabulary.PAD, dtype=np.int64)
    mask = np.zeros((len(truncated), width), dtype=bool)
    for row, toks in enumerate(truncated):
        ids[row, :len(toks)] = vocab.encode(toks)
        mask[row, :len(toks)] = True
    return ids, mask


def render_internal_query(q1_tokens: Sequence[str], keep_labels: Sequence[int],
                          q2_tokens: Sequence[str]) -> list[str]:
    """Kept q1 words then q2 words, first-occurrence deduplicated."""
    if len(q1_tokens) != len(keep_labels):
        raise ValueError(f"labels length {len(keep_labels)} != q1 length {len(q1_tokens)}")
    out: list[str] = []
    seen: set[str] = set()
    for word in [w for w, keep in zip(q1_tokens, keep_labels) if keep] + list(q2_tokens):
        if word not in seen:
            seen.add(word)
            out.append(word)
    return out


@dataclass
class QueryTracker:
    """Inference bundle: hyperparams, variant, vocabulary and weights."""

    hp: Hyperparams
    ablation: Ablation
    vocab: Vocabulary
    params: dict[str, Tensor]

    @classmethod
    def create(cls, hp: Hyperparams, vocab: Vocabulary,
               seed: int = 0, ablation: Ablation = Ablation()) -> "QueryTracker":
        rng = np.random.default_rng(seed)
        return cls(hp, ablation, vocab, init_params(hp, ablation, len(vocab), rng))

    def keep_probs(self, q1_tokens: Sequence[str],
                   q2_tokens: Sequence[str]) -> np.ndarray:
        """P(keep) for each q1 word (after truncation), eval mode."""
        if not q1_tokens or not q2_tokens:
            raise ValueError("q1 and q2 must both be non-empty")
        q1_ids, q1_mask = encode_queries(self.vocab, [q1_tokens], self.hp.max_len)
        q2_ids, q2_mask = encode_queries(self.vocab, [q2_tokens], self.hp.max_len)
        logits = forward_batch(self.params, self.hp, self.ablation,
                               q1_ids, q1_mask, q2_ids, q2_mask)
        probs = predict_probs(logits).data[0, :, 1]
        return probs[q1_mask[0]]

    def track(self, q1_tokens: Sequence[str],
              q2_tokens: Sequence[str]) -> tuple[np.ndarray, np.ndarray, list[str]]:
        """Returns (keep labels, keep probabilities, new internal query)."""
        probs = self.keep_probs(q1_tokens, q2_tokens)
        labels = labels_from_probs(probs)
        q1_used = list(q1_tokens)[:self.hp.max_len]
        q2_used = list(q2_tokens)[:self.hp.max_len]
        return labels, probs, render_internal_query(q1_used, labels, q2_used)


# ---------------------------------------------------------------------------
# Checkpoint format: directory with config.json, vocab.txt and weights.bin
# (little-endian float32, matrices in manifest order, row-major).


def save_checkpoint(path: Path, tracker: QueryTracker) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    manifest = param_manifest(tracker.hp, tracker.ablation, len(tracker.vocab))
    config = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "hyperparams": asdict(tracker.hp),
        "ablation": asdict(tracker.ablation),
        "manifest": [[name, list(shape)] for name, shape in manifest],
    }
    (path / "config.json").write_text(json.dumps(config, indent=2), encoding="utf-8")
    tracker.vocab.save(path / "vocab.txt")
    with open(path / "weights.bin", "wb") as fh:
        for name, shape in manifest:
            arr = tracker.params[name].data
            if arr.shape != shape:
                raise ValueError(f"param {name} has shape {arr.shape}, manifest says {shape}")
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_checkpoint(path: Path) -> QueryTracker:
    path = Path(path)
    config = json.loads((path / "config.json").read_text(encoding="utf-8"))
    if config["format_version"] != CHECKPOINT_FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint format {config['format_version']}")
    hp = Hyperparams(**config["hyperparams"])
    ablation = Ablation(**config["ablation"])
    vocab = Vocabulary.load(path / "vocab.txt")
    manifest = [(name, tuple(shape)) for name, shape in config["manifest"]]
    expected = param_manifest(hp, ablation, len(vocab))
    if manifest != expected:
        raise ValueError("checkpoint manifest does not match hyperparams/vocab")
    blob = (path / "weights.bin").read_bytes()
    total = sum(int(np.prod(shape)) for _, shape in manifest)
    if len(blob) != 4 * total:
        raise ValueError(f"weights.bin is {len(blob)} bytes, expected {4 * total}")
    params: dict[str, Tensor] = {}
    offset = 0
    for name, shape in manifest:
        n = int(np.prod(shape))
        arr = np.frombuffer(blob, dtype="<f4", count=n, offset=offset).reshape(shape)
        params[name] = Tensor(arr.astype(np.float32))
        offset += 4 * n
    return QueryTracker(hp, ablation, vocab, params)


def load_embeddings(tracker: QueryTracker, path: Path) -> int:
    """Overwrite embedding rows from a text file `token v1 v2 ... vd` per line.

    Returns the number of rows loaded; unknown tokens are skipped.
    """
    table = tracker.params["embed.table"].data.copy()
    d = table.shape[1]
    loaded = 0
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        parts = line.split()
        if len(parts) != d + 1:
            continue
        token = parts[0]
        if token in tracker.vocab:
            idx = int(tracker.vocab.encode([token])[0])
            table[idx] = np.array(parts[1:], dtype=np.float32)
            loaded += 1
    tracker.params["embed.table"] = Tensor(table)
    return loaded
