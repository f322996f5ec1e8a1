"""Event-set sequence corpus: data model, JSONL ingestion, splits, statistics.

A corpus is a list of sequences; each sequence is a chronologically ordered
list of event sets, where an event set is one timestamp plus one or more
event ids (and optionally a feature vector shared by the whole setgroup).

Interchange format is JSONL, one sequence per line:

    {"seq_id": "a", "events": [{"t": 1.0, "items": [0, 3], "features": [..]}, ...]}

and the vocabulary is a JSON object:

    {"events": ["name0", "name1", ...], "targets": [0, 3, ...], "feature_dim": 0}

Timestamps are kept raw; model-facing code normalizes via the corpus
``time_scale`` (unit = corpus median inter-arrival gap) so sinusoid arguments
stay well-conditioned while reported errors can be mapped back to raw units.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

__all__ = [
    "EventSet",
    "Sequence",
    "Vocabulary",
    "Corpus",
    "CorpusError",
    "load_jsonl",
    "write_jsonl",
    "load_vocabulary",
    "write_vocabulary",
    "split",
    "dataset_stats",
]


class CorpusError(ValueError):
    """Malformed corpus input; the message carries the line number."""


@dataclass
class EventSet:
    """One timestamped set of event ids with an optional feature vector.

    ``items`` keeps its given order (callers may rely on it for token order)
    but is semantically a set: duplicates are rejected.
    """

    items: tuple[int, ...]
    timestamp: float
    features: np.ndarray | None = None

    def __post_init__(self):
        self.items = tuple(int(i) for i in self.items)
        if len(self.items) == 0:
            raise CorpusError("event set must contain at least one event")
        if len(set(self.items)) != len(self.items):
            raise CorpusError(f"duplicate event ids in event set: {self.items}")
        self.timestamp = float(self.timestamp)
        if self.timestamp < 0:
            raise CorpusError(f"negative timestamp {self.timestamp}")
        if self.features is not None:
            self.features = np.asarray(self.features, dtype=np.float64)

    @property
    def item_set(self) -> frozenset[int]:
        return frozenset(self.items)


@dataclass
class Sequence:
    id: str
    sets: list[EventSet]

    def __post_init__(self):
        times = [s.timestamp for s in self.sets]
        if any(b < a for a, b in zip(times, times[1:])):
            raise CorpusError(f"sequence {self.id!r} has decreasing timestamps")

    def __len__(self) -> int:
        return len(self.sets)


@dataclass
class Vocabulary:
    """The universe of events and the target subset, with dense ids."""

    names: list[str]
    target_ids: tuple[int, ...]
    feature_dim: int = 0

    def __post_init__(self):
        self.target_ids = tuple(sorted(int(i) for i in self.target_ids))
        if any(i < 0 or i >= len(self.names) for i in self.target_ids):
            raise CorpusError("target ids must index into the event table")
        self._target_index = {eid: pos for pos, eid in enumerate(self.target_ids)}

    def __len__(self) -> int:
        return len(self.names)

    @property
    def n_targets(self) -> int:
        return len(self.target_ids)

    def is_target(self, event_id: int) -> bool:
        return event_id in self._target_index

    def target_position(self, event_id: int) -> int:
        """Dense position of a target event inside the prediction vector."""
        return self._target_index[event_id]

    def restrict(self, items) -> frozenset[int]:
        """Intersection with the target set (the training-label restriction)."""
        return frozenset(i for i in items if i in self._target_index)

    def target_vector(self, items) -> np.ndarray:
        vec = np.zeros(self.n_targets, dtype=np.float64)
        for i in self.restrict(items):
            vec[self._target_index[i]] = 1.0
        return vec

    def content_hash(self) -> str:
        import hashlib

        payload = json.dumps(
            {"events": self.names, "targets": list(self.target_ids), "feature_dim": self.feature_dim},
            sort_keys=True,
        )
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


@dataclass
class Corpus:
    sequences: list[Sequence]
    vocab: Vocabulary
    rejected: int = 0
    time_scale: float = field(default=0.0)

    def __post_init__(self):
        if self.time_scale <= 0.0:
            self.time_scale = median_gap(self.sequences)

    def __len__(self) -> int:
        return len(self.sequences)

    def normalized_times(self, seq: Sequence) -> np.ndarray:
        """Zero-based times in units of the corpus median gap."""
        t = np.array([s.timestamp for s in seq.sets], dtype=np.float64)
        return (t - t[0]) / self.time_scale


def median_gap(sequences: list[Sequence]) -> float:
    gaps = [
        b.timestamp - a.timestamp
        for seq in sequences
        for a, b in zip(seq.sets, seq.sets[1:])
        if b.timestamp > a.timestamp
    ]
    return float(np.median(gaps)) if gaps else 1.0


# -- vocabulary I/O -----------------------------------------------------------


def load_vocabulary(path) -> Vocabulary:
    with open(path) as fh:
        obj = json.load(fh)
    try:
        return Vocabulary(names=list(obj["events"]), target_ids=obj["targets"],
                          feature_dim=int(obj.get("feature_dim", 0)))
    except KeyError as e:
        raise CorpusError(f"vocabulary file {path} is missing key {e.args[0]!r}") from e


def write_vocabulary(vocab: Vocabulary, path) -> None:
    with open(path, "w") as fh:
        json.dump(
            {"events": vocab.names, "targets": list(vocab.target_ids), "feature_dim": vocab.feature_dim},
            fh,
        )
        fh.write("\n")


# -- corpus I/O ---------------------------------------------------------------


def _parse_record(obj: dict, lineno: int) -> Sequence | None:
    """Build one sequence; None means the record violates an invariant."""
    try:
        seq_id = str(obj["seq_id"])
        raw_events = obj["events"]
    except (KeyError, TypeError) as e:
        raise CorpusError(f"line {lineno}: record is missing 'seq_id'/'events'") from e
    sets = []
    prev_t = -np.inf
    for ev in raw_events:
        try:
            t = float(ev["t"])
            items = ev["items"]
            features = ev.get("features")
        except (KeyError, TypeError) as e:
            raise CorpusError(f"line {lineno}: event entry is malformed: {ev!r}") from e
        if t < prev_t:
            log.warning("line %d: decreasing timestamp in sequence %r, record rejected", lineno, seq_id)
            return None
        if len(items) == 0:
            log.warning("line %d: empty item set in sequence %r, record rejected", lineno, seq_id)
            return None
        try:
            sets.append(EventSet(items=tuple(items), timestamp=t, features=features))
        except CorpusError as e:
            log.warning("line %d: %s, record rejected", lineno, e)
            return None
        prev_t = t
    if not sets:
        log.warning("line %d: sequence %r has no events, record rejected", lineno, seq_id)
        return None
    return Sequence(id=seq_id, sets=sets)


def load_jsonl(path, vocab: Vocabulary | None = None) -> Corpus:
    """Load a corpus; validates against ``vocab`` or builds one from the data.

    Malformed JSON raises with the line number. Records violating the data
    model (decreasing timestamps, empty item sets) are rejected, counted and
    reported via logging.
    """
    sequences: list[Sequence] = []
    rejected = 0
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise CorpusError(f"line {lineno}: invalid JSON: {e.msg}") from e
            seq = _parse_record(obj, lineno)
            if seq is None:
                rejected += 1
            else:
                sequences.append(seq)
    if not sequences:
        log.warning("corpus %s is empty", path)

    max_id = max((i for s in sequences for es in s.sets for i in es.items), default=-1)
    feature_dims = {es.features.shape[0] for s in sequences for es in s.sets if es.features is not None}
    if len(feature_dims) > 1:
        raise CorpusError(f"inconsistent feature dimensions in corpus: {sorted(feature_dims)}")
    found_fdim = feature_dims.pop() if feature_dims else 0

    if vocab is None:
        n = max_id + 1
        vocab = Vocabulary(names=[f"e{i}" for i in range(n)], target_ids=tuple(range(n)),
                           feature_dim=found_fdim)
    else:
        if max_id >= len(vocab):
            raise CorpusError(f"event id {max_id} exceeds vocabulary size {len(vocab)}")
        if found_fdim and found_fdim != vocab.feature_dim:
            raise CorpusError(
                f"corpus feature dimension {found_fdim} != vocabulary feature_dim {vocab.feature_dim}"
            )
    if rejected:
        log.warning("rejected %d record(s) while loading %s", rejected, path)
    return Corpus(sequences=sequences, vocab=vocab, rejected=rejected)


def write_jsonl(corpus: Corpus, path) -> None:
    with open(path, "w") as fh:
        for seq in corpus.sequences:
            events = []
            for es in seq.sets:
                ev = {"t": es.timestamp, "items": list(es.items)}
                if es.features is not None:
                    ev["features"] = es.features.tolist()
                events.append(ev)
            fh.write(json.dumps({"seq_id": seq.id, "events": events}) + "\n")


# -- splitting and statistics ---------------------------------------------------


def split(corpus: Corpus, train_frac: float = 0.8, val_frac: float = 0.1,
          seed: int = 0) -> tuple[Corpus, Corpus, Corpus]:
    """Sequence-level train/val/test split.

    ``train_frac`` of the sequences go to train+val (floor); ``val_frac`` OF
    THAT PART is held out for validation (floor, but at least one sequence).
    The remainder is the test set. All three shares keep the parent corpus
    time scale so time units agree across splits.
    """
    n = len(corpus.sequences)
    if n < 3:
        raise ValueError(f"need at least 3 sequences to split, got {n}")
    if not (0.0 < train_frac < 1.0 and 0.0 < val_frac < 1.0):
        raise ValueError("split fractions must lie in (0, 1)")
    order = np.random.default_rng(seed).permutation(n)
    n_trainval = int(np.floor(train_frac * n))
    n_val = max(1, int(np.floor(val_frac * n_trainval)))
    n_train = n_trainval - n_val
    if n_train < 1 or n_trainval >= n:
        raise ValueError(f"degenerate split for {n} sequences: train {n_train}, val {n_val}")

    def pick(idx):
        seqs = [corpus.sequences[i] for i in sorted(idx)]
        return Corpus(sequences=seqs, vocab=corpus.vocab, time_scale=corpus.time_scale)

    return (
        pick(order[:n_train]),
        pick(order[n_train:n_trainval]),
        pick(order[n_trainval:]),
    )


def count_training_examples(corpus: Corpus) -> tuple[int, int]:
    """(usable, skipped) prefix examples under the target restriction.

    A prefix at cut k is usable when the next set has a non-empty
    intersection with the target vocabulary and strictly advances time.
    """
    usable = skipped = 0
    for seq in corpus.sequences:
        for k in range(1, len(seq.sets)):
            nxt = seq.sets[k]
            if corpus.vocab.restrict(nxt.items) and nxt.timestamp > seq.sets[k - 1].timestamp:
                usable += 1
            else:
                skipped += 1
    return usable, skipped


def dataset_stats(corpus: Corpus) -> dict:
    """Corpus summary: counts that characterize scale and set structure."""
    if not corpus.sequences:
        raise ValueError("dataset_stats needs a non-empty corpus")
    seq_lens = [len(s) for s in corpus.sequences]
    set_lens = [len(es.items) for s in corpus.sequences for es in s.sets]
    usable, skipped = count_training_examples(corpus)
    return {
        "num_points": usable,
        "num_skipped": skipped,
        "num_sequences": len(corpus.sequences),
        "avg_seq_len": float(np.mean(seq_lens)),
        "avg_set_len": float(np.mean(set_lens)),
        "num_event_types": len(corpus.vocab),
        "num_target_types": corpus.vocab.n_targets,
    }
