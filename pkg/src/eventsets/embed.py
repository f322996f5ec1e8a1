"""Contextual event embeddings trained by triplet contrast.

For each event set we draw an anchor and a positive from inside the set and a
negative from outside it, then push the anchor-positive dot product through a
sigmoid toward 1 and the anchor-negative one toward 0:

    score = log sigma(va . vp) + log(1 - sigma(va . vn))

The trainer maximizes this score (equivalently minimizes its negation) with
Adam over a plain lookup table, which is the bias-free affine layer acting on
one-hot ids.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .data import Corpus, EventSet, Vocabulary
from .optim import Adam
from .tensor import Tensor

log = logging.getLogger(__name__)

__all__ = [
    "EmbeddingTable",
    "Triplet",
    "EmbedConfig",
    "sample_triplet",
    "aux_loss",
    "train_embeddings",
    "encode_event",
    "encode_set",
    "export_embeddings",
    "read_embeddings_csv",
]


class EmbeddingTable:
    """|I| x d lookup table of event vectors."""

    def __init__(self, weights: np.ndarray):
        self.weights = T.parameter(np.asarray(weights, dtype=np.float64), name="embed.weights")

    @classmethod
    def init(cls, vocab_size: int, d_emb: int = 100, std: float = 0.1,
             rng: np.random.Generator | None = None) -> "EmbeddingTable":
        # Small-norm init keeps sigma(v.v') near 0.5 so early gradients are informative.
        rng = rng or np.random.default_rng(0)
        return cls(rng.normal(0.0, std, size=(vocab_size, d_emb)))

    @property
    def vocab_size(self) -> int:
        return self.weights.data.shape[0]

    @property
    def d_emb(self) -> int:
        return self.weights.data.shape[1]

    def rows(self, ids) -> Tensor:
        """In-graph gather; gradients flow back into the table."""
        ids = np.asarray(ids, dtype=np.intp)
        if ids.size and (ids.min() < 0 or ids.max() >= self.vocab_size):
            raise ValueError(f"event id out of range [0, {self.vocab_size}): {ids}")
        return self.weights[ids]

    def copy(self) -> "EmbeddingTable":
        return EmbeddingTable(self.weights.data.copy())


def encode_event(table: EmbeddingTable, event_id: int) -> np.ndarray:
    if not (0 <= event_id < table.vocab_size):
        raise ValueError(f"unknown event id {event_id} (vocabulary size {table.vocab_size})")
    return table.weights.data[event_id].copy()


def encode_set(table: EmbeddingTable, items) -> np.ndarray:
    """Rows for each id, preserving input order and multiplicity."""
    return np.stack([encode_event(table, i) for i in items]) if len(items) else np.zeros((0, table.d_emb))


@dataclass
class Triplet:
    anchor: int
    positive: int
    negative: int


def sample_triplet(event_set: EventSet, vocab: Vocabulary,
                   rng: np.random.Generator) -> Triplet | None:
    """Anchor/positive from the set, negative from the rest of the vocabulary.

    Returns None for singleton sets (no positive can be drawn). A set covering
    the whole vocabulary leaves no negative and is an error.
    """
    items = event_set.items
    if len(items) < 2:
        return None
    if len(items) >= len(vocab):
        raise ValueError("event set covers the whole vocabulary; no negative exists")
    anchor = items[rng.integers(len(items))]
    rest = [i for i in items if i != anchor]
    positive = rest[rng.integers(len(rest))]
    member = set(items)
    while True:
        negative = int(rng.integers(len(vocab)))
        if negative not in member:
            return Triplet(anchor=anchor, positive=int(positive), negative=negative)


def aux_loss(va, vp, vn) -> Tensor:
    """Contrastive score to MAXIMIZE; always <= 0 for finite vectors."""
    va, vp, vn = T.as_tensor(va), T.as_tensor(vp), T.as_tensor(vn)
    sp = T.tsum(va * vp)
    sn = T.tsum(va * vn)
    # log(1 - sigma(x)) == log sigma(-x), computed without cancellation
    return T.log_sigmoid(sp) + T.log_sigmoid(-sn)


def _batch_objective(table: EmbeddingTable, triplets: list[Triplet]) -> Tensor:
    a = table.rows([t.anchor for t in triplets])
    p = table.rows([t.positive for t in triplets])
    n = table.rows([t.negative for t in triplets])
    sp = T.tsum(a * p, axis=1)
    sn = T.tsum(a * n, axis=1)
    return T.tmean(T.log_sigmoid(sp) + T.log_sigmoid(-sn))


@dataclass
class EmbedConfig:
    d_emb: int = 100
    learning_rate: float = 0.0005
    batch_size: int = 128
    max_epochs: int = 60
    patience: int = 5
    min_improvement: float = 1e-4
    init_std: float = 0.1
    val_fraction: float = 0.1
    epochs: int | None = None  # exact epoch count, disables early stopping

    history: list = field(default_factory=list, repr=False, compare=False)


def train_embeddings(corpus: Corpus, config: EmbedConfig,
                     rng: np.random.Generator) -> EmbeddingTable:
    """Contrastive pre-training over every multi-item event set.

    One triplet per eligible set per epoch, grouped into minibatches. Stops
    after ``config.epochs`` epochs when given, otherwise when the held-out
    score stops improving by ``min_improvement`` for ``patience`` epochs.
    """
    vocab = corpus.vocab
    sets = [es for seq in corpus.sequences for es in seq.sets if len(es.items) >= 2]
    n_skipped = sum(1 for seq in corpus.sequences for es in seq.sets if len(es.items) < 2)
    if not sets:
        raise ValueError("corpus has no event sets with >= 2 items; contrastive signal undefined")
    if n_skipped:
        log.info("skipping %d singleton event sets (no positive sample exists)", n_skipped)

    table = EmbeddingTable.init(len(vocab), config.d_emb, config.init_std, rng)
    opt = Adam([("embed.weights", table.weights)], lr=config.learning_rate)

    n_val = max(1, int(len(sets) * config.val_fraction)) if len(sets) > 1 else 0
    order = rng.permutation(len(sets))
    val_sets = [sets[i] for i in order[:n_val]]
    train_sets = [sets[i] for i in order[n_val:]] or list(val_sets)
    val_triplets = [t for es in val_sets if (t := sample_triplet(es, vocab, rng)) is not None]

    def val_score() -> float:
        if not val_triplets:
            return 0.0
        with T.no_grad():
            return _batch_objective(table, val_triplets).item()

    best, since_best = -np.inf, 0
    config.history.clear()
    for epoch in range(config.epochs if config.epochs is not None else config.max_epochs):
        perm = rng.permutation(len(train_sets))
        epoch_loss, n_batches = 0.0, 0
        for lo in range(0, len(perm), config.batch_size):
            batch = [t for i in perm[lo:lo + config.batch_size]
                     if (t := sample_triplet(train_sets[i], vocab, rng)) is not None]
            if not batch:
                continue
            objective = _batch_objective(table, batch)
            loss = -objective
            opt.zero_grad()
            loss.backward()
            opt.step()
            epoch_loss += loss.item()
            n_batches += 1
        score = val_score()
        config.history.append({"epoch": epoch, "train_loss": epoch_loss / max(n_batches, 1),
                               "val_score": score})
        log.info("embed epoch %d: train -score %.5f, val score %.5f",
                 epoch, epoch_loss / max(n_batches, 1), score)
        if config.epochs is None:
            if score > best + config.min_improvement:
                best, since_best = score, 0
            else:
                since_best += 1
                if since_best >= config.patience:
                    break
    return table


def export_embeddings(table: EmbeddingTable, vocab: Vocabulary, path) -> None:
    """CSV with header id,name,v0..v{d-1}; one row per vocabulary entry."""
    if len(vocab) != table.vocab_size:
        raise ValueError(f"vocabulary size {len(vocab)} != table size {table.vocab_size}")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "name"] + [f"v{i}" for i in range(table.d_emb)])
        for eid, name in enumerate(vocab.names):
            writer.writerow([eid, name] + [repr(float(x)) for x in table.weights.data[eid]])


def read_embeddings_csv(path) -> tuple[np.ndarray, list[str]]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        d = len(header) - 2
        rows, names = [], []
        for row in reader:
            names.append(row[1])
            rows.append([float(x) for x in row[2:2 + d]])
    return np.asarray(rows, dtype=np.float64), names
