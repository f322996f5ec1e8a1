import numpy as np


def cosine_cluster_margin(weights: np.ndarray, event_cluster: list[int]) -> float:
    """Mean intra-cluster cosine minus mean inter-cluster cosine.

    Independent measure of how well embedding geometry recovers the planted
    partition; computed straight from pairwise cosines, no model code.
    """
    norms = np.linalg.norm(weights, axis=1, keepdims=True)
    unit = weights / np.maximum(norms, 1e-12)
    cos = unit @ unit.T
    labels = np.asarray(event_cluster)
    same = labels[:, None] == labels[None, :]
    off_diag = ~np.eye(len(labels), dtype=bool)
    intra = cos[same & off_diag]
    inter = cos[~same]
    return float(intra.mean() - inter.mean())
