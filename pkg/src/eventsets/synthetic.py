"""Synthetic event-set corpora with planted, recoverable structure.

The generator partitions the vocabulary into clusters and plants three kinds
of signal that downstream components are expected to recover:

* co-occurrence: items of one event set come from the set's cluster with
  probability ``within_cluster_prob``, otherwise uniformly from the other
  clusters — contrastive embeddings should recover the partition;
* sequence structure: the cluster of the next set follows the current one
  cyclically with probability ``cycle_prob``, else jumps uniformly to one of
  the non-successor clusters — a sequence model can beat marginal
  frequencies;
* content-time coupling: the inter-arrival gap preceding a set of cluster c
  is ``base_gap + 2*c*gap_jitter + U(0, gap_jitter)``, so the gap windows of
  different clusters are disjoint and the timestamp identifies the cluster.

Generation is deterministic under the spec's seed, and the ground-truth
cluster assignment is returned alongside the corpus.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Corpus, EventSet, Sequence, Vocabulary

__all__ = ["SyntheticSpec", "SyntheticTruth", "generate_synthetic", "cluster_gap_window"]


@dataclass
class SyntheticSpec:
    num_clusters: int = 5
    events_per_cluster: int = 10
    within_cluster_prob: float = 0.9
    base_gap: float = 1.0
    gap_jitter: float = 0.5
    num_sequences: int = 200
    max_len: int = 10
    seed: int = 0
    # Probability that the next set's cluster follows the planted cycle; the
    # complement jumps uniformly to a non-successor cluster.
    cycle_prob: float = 0.8
    min_set_size: int = 1
    max_set_size: int = 4

    def __post_init__(self):
        if self.num_clusters < 1 or self.events_per_cluster < 1:
            raise ValueError("cluster counts must be positive")
        if not (0.0 < self.within_cluster_prob <= 1.0):
            raise ValueError("within_cluster_prob must lie in (0, 1]")
        if not (0.0 < self.cycle_prob <= 1.0):
            raise ValueError("cycle_prob must lie in (0, 1]")
        if self.base_gap <= 0 or self.gap_jitter <= 0:
            raise ValueError("base_gap and gap_jitter must be positive")
        if self.num_sequences < 1 or self.max_len < 2:
            raise ValueError("need num_sequences >= 1 and max_len >= 2")
        if not (1 <= self.min_set_size <= self.max_set_size <= self.events_per_cluster):
            raise ValueError("set sizes must satisfy 1 <= min <= max <= events_per_cluster")


@dataclass
class SyntheticTruth:
    """Planted structure: cluster of every event and of every generated set."""

    event_cluster: list[int]
    set_clusters: dict[str, list[int]]

    def to_dict(self) -> dict:
        return {"event_cluster": self.event_cluster, "set_clusters": self.set_clusters}


def cluster_gap_window(spec: SyntheticSpec, cluster: int) -> tuple[float, float]:
    """[low, high) range of inter-arrival gaps preceding a set of ``cluster``."""
    low = spec.base_gap + 2.0 * cluster * spec.gap_jitter
    return low, low + spec.gap_jitter


def _draw_set(spec: SyntheticSpec, cluster: int, rng: np.random.Generator) -> list[int]:
    size = int(rng.integers(spec.min_set_size, spec.max_set_size + 1))
    c = spec.num_clusters
    # Per-item cluster choice: own cluster with prob p, others share (1-p).
    if c == 1:
        sources = np.zeros(size, dtype=int)
    else:
        own = rng.random(size) < spec.within_cluster_prob
        others = [k for k in range(c) if k != cluster]
        sources = np.where(own, cluster, rng.choice(others, size=size))
    items: list[int] = []
    for src, count in zip(*np.unique(sources, return_counts=True)):
        pool = np.arange(src * spec.events_per_cluster, (src + 1) * spec.events_per_cluster)
        take = min(int(count), len(pool))
        items.extend(int(i) for i in rng.choice(pool, size=take, replace=False))
    return items


def generate_synthetic(spec: SyntheticSpec) -> tuple[Corpus, SyntheticTruth]:
    rng = np.random.default_rng(spec.seed)
    n_events = spec.num_clusters * spec.events_per_cluster
    vocab = Vocabulary(
        names=[f"c{i // spec.events_per_cluster}_e{i % spec.events_per_cluster}" for i in range(n_events)],
        target_ids=tuple(range(n_events)),
        feature_dim=0,
    )
    event_cluster = [i // spec.events_per_cluster for i in range(n_events)]

    sequences: list[Sequence] = []
    set_clusters: dict[str, list[int]] = {}
    for s in range(spec.num_sequences):
        length = int(rng.integers(2, spec.max_len + 1))
        cluster = int(rng.integers(spec.num_clusters))
        t = 0.0
        sets: list[EventSet] = []
        clusters: list[int] = []
        for j in range(length):
            if j > 0:
                if spec.num_clusters == 1:
                    cluster = 0
                elif rng.random() < spec.cycle_prob:
                    cluster = (cluster + 1) % spec.num_clusters
                else:
                    jumps = [k for k in range(spec.num_clusters) if k != (cluster + 1) % spec.num_clusters]
                    cluster = int(rng.choice(jumps))
            low, _ = cluster_gap_window(spec, cluster)
            t += low + rng.uniform(0.0, spec.gap_jitter)
            sets.append(EventSet(items=tuple(_draw_set(spec, cluster, rng)), timestamp=t))
            clusters.append(cluster)
        seq_id = f"s{s:05d}"
        sequences.append(Sequence(id=seq_id, sets=sets))
        set_clusters[seq_id] = clusters

    corpus = Corpus(sequences=sequences, vocab=vocab)
    return corpus, SyntheticTruth(event_cluster=event_cluster, set_clusters=set_clusters)
