"""Synthetic generator: planted structure recovered by direct counting."""

import numpy as np
import pytest

from eventsets.data import write_jsonl, load_jsonl
from eventsets.synthetic import SyntheticSpec, cluster_gap_window, generate_synthetic


class TestGeneratorBasics:
    def test_deterministic_under_seed(self, tmp_path):
        spec = SyntheticSpec(num_sequences=20, seed=7)
        c1, t1 = generate_synthetic(spec)
        c2, t2 = generate_synthetic(spec)
        a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        write_jsonl(c1, a)
        write_jsonl(c2, b)
        assert a.read_bytes() == b.read_bytes()
        assert t1.set_clusters == t2.set_clusters

    def test_seed_changes_corpus(self, tmp_path):
        a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        write_jsonl(generate_synthetic(SyntheticSpec(num_sequences=20, seed=1))[0], a)
        write_jsonl(generate_synthetic(SyntheticSpec(num_sequences=20, seed=2))[0], b)
        assert a.read_bytes() != b.read_bytes()

    def test_roundtrips_through_jsonl(self, tmp_path):
        corpus, _ = generate_synthetic(SyntheticSpec(num_sequences=10, seed=3))
        write_jsonl(corpus, tmp_path / "c.jsonl")
        reloaded = load_jsonl(tmp_path / "c.jsonl", corpus.vocab)
        assert reloaded.rejected == 0 and len(reloaded) == len(corpus)

    def test_invalid_specs_rejected(self):
        with pytest.raises(ValueError):
            SyntheticSpec(within_cluster_prob=0.0)
        with pytest.raises(ValueError):
            SyntheticSpec(num_clusters=0)
        with pytest.raises(ValueError):
            SyntheticSpec(base_gap=-1.0)
        with pytest.raises(ValueError):
            SyntheticSpec(max_set_size=99, events_per_cluster=5)


class TestPlantedStructure:
    def test_single_cluster_degenerate(self):
        corpus, truth = generate_synthetic(
            SyntheticSpec(num_clusters=1, events_per_cluster=8, num_sequences=20, seed=0))
        n = 8
        for seq in corpus.sequences:
            for es in seq.sets:
                assert all(0 <= i < n for i in es.items)
        assert all(c == 0 for cl in truth.set_clusters.values() for c in cl)

    def test_prob_one_keeps_sets_inside_one_cluster(self):
        corpus, truth = generate_synthetic(
            SyntheticSpec(within_cluster_prob=1.0, num_sequences=30, seed=1))
        for seq in corpus.sequences:
            for es, cluster in zip(seq.sets, truth.set_clusters[seq.id]):
                clusters = {i // 10 for i in es.items}
                assert clusters == {cluster}

    def test_within_cluster_rate_monte_carlo(self):
        """Item-level in-cluster frequency ~ within_cluster_prob over >=10k sets."""
        spec = SyntheticSpec(within_cluster_prob=0.9, num_sequences=2200, max_len=8, seed=42)
        corpus, truth = generate_synthetic(spec)
        inside = total = 0
        n_sets = 0
        for seq in corpus.sequences:
            for es, cluster in zip(seq.sets, truth.set_clusters[seq.id]):
                n_sets += 1
                for item in es.items:
                    total += 1
                    inside += (item // spec.events_per_cluster) == cluster
        assert n_sets >= 10_000
        assert abs(inside / total - 0.9) < 0.02

    def test_gap_windows_identify_clusters(self):
        spec = SyntheticSpec(num_sequences=100, seed=5)
        corpus, truth = generate_synthetic(spec)
        for seq in corpus.sequences:
            clusters = truth.set_clusters[seq.id]
            prev_t = 0.0
            for es, cluster in zip(seq.sets, clusters):
                gap = es.timestamp - prev_t
                low, high = cluster_gap_window(spec, cluster)
                assert low <= gap <= high
                prev_t = es.timestamp

    def test_cluster_cycle_frequency(self):
        spec = SyntheticSpec(cycle_prob=0.8, num_sequences=400, max_len=10, seed=6)
        _, truth = generate_synthetic(spec)
        follow = total = 0
        for clusters in truth.set_clusters.values():
            for a, b in zip(clusters, clusters[1:]):
                total += 1
                follow += b == (a + 1) % spec.num_clusters
        assert abs(follow / total - 0.8) < 0.02

    def test_stats_match_spec_expectations(self):
        from eventsets.data import dataset_stats

        spec = SyntheticSpec(num_sequences=300, max_len=9, seed=9,
                             min_set_size=2, max_set_size=4)
        corpus, _ = generate_synthetic(spec)
        stats = dataset_stats(corpus)
        assert stats["num_event_types"] == spec.num_clusters * spec.events_per_cluster
        # Lengths are uniform on [2, max_len] and set sizes on [2, 4].
        assert abs(stats["avg_seq_len"] - (2 + spec.max_len) / 2) < 0.25
        assert abs(stats["avg_set_len"] - 3.0) < 0.1
