"""Mixture-of-Gaussians prediction heads for event sets and inter-arrival times.

Each head is a single Bayesian affine map from the encoder output to M
Gaussian parameter pairs (mean and std per output dimension) plus M mixing
logits. Predictions are reparameterized draws z = mu + sigma * eps, combined
with the mixing weights:

* event mode: each component's draw passes through a sigmoid and the mixture
  is the alpha-weighted sum, so every dimension stays a valid Bernoulli mean
  and gradients survive (no discrete sampling in the training path);
* time mode: components are mixed first and a softplus maps the result to a
  strictly positive inter-arrival gap (raw mode skips the softplus and reads
  the mixed value as the timestamp itself).

Setting eps = 0 gives the deterministic prediction used for evaluation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .encoder import BayesLinear, WeightSample
from .tensor import Tensor

__all__ = [
    "MixtureParams",
    "EventPrediction",
    "TimePrediction",
    "MixtureHead",
    "event_head",
    "temporal_head",
    "sample_mixture",
    "discretize",
]


@dataclass
class MixtureParams:
    """M x dim means, positive stds, and mixing weights summing to one."""

    mus: Tensor
    sigmas: Tensor
    alphas: Tensor

    @property
    def n_components(self) -> int:
        return self.mus.data.shape[0]

    @property
    def dim(self) -> int:
        return self.mus.data.shape[1]


@dataclass
class EventPrediction:
    """Per-target Bernoulli means in (0,1) plus the discretization threshold."""

    probs: np.ndarray
    threshold: float = 0.5


@dataclass
class TimePrediction:
    gap: float
    absolute: float


class MixtureHead:
    """Affine map v_out -> mixture parameters over ``dim`` outputs."""

    def __init__(self, d_emb: int, dim: int, n_components: int, rng, name: str,
                 logstd_init: float = -4.0):
        self.dim = dim
        self.n_components = n_components
        self.linear = BayesLinear(d_emb, n_components * (2 * dim) + n_components,
                                  rng, name, logstd_init)

    def bayes_layers(self):
        return [self.linear]

    def parameters(self):
        yield from self.linear.parameters()

    def forward(self, v_out: Tensor, sample: WeightSample | None = None) -> MixtureParams:
        m, d = self.n_components, self.dim
        raw = self.linear.apply(T.reshape(v_out, (1, -1)), sample)
        raw = T.reshape(raw, (-1,))
        mus = T.reshape(raw[0:m * d], (m, d))
        sigmas = T.softplus(T.reshape(raw[m * d:2 * m * d], (m, d)))
        alphas = T.softmax(raw[2 * m * d:])
        return MixtureParams(mus=mus, sigmas=sigmas, alphas=alphas)


def event_head(head: MixtureHead, v_out: Tensor, sample: WeightSample | None = None) -> MixtureParams:
    return head.forward(v_out, sample)


def temporal_head(head: MixtureHead, v_out: Tensor, sample: WeightSample | None = None) -> MixtureParams:
    if head.dim != 1:
        raise ValueError(f"temporal head must have dim 1, got {head.dim}")
    return head.forward(v_out, sample)


def sample_mixture(
    params: MixtureParams,
    rng: np.random.Generator | None = None,
    mode: str = "event",
    eps: np.ndarray | None = None,
    time_mode: str = "gap",
) -> Tensor:
    """Reparameterized mixture draw; eps=None draws from rng, zeros = deterministic.

    Event mode returns the per-dimension Bernoulli means (a vector in (0,1));
    time mode returns a scalar: softplus of the mixed draw when
    ``time_mode="gap"``, the raw mixed draw when ``time_mode="absolute"``.
    """
    m, d = params.n_components, params.dim
    if eps is None:
        if rng is None:
            raise ValueError("sample_mixture needs either eps or an rng")
        eps = rng.standard_normal((m, d))
    eps = np.asarray(eps, dtype=np.float64)
    if eps.shape != (m, d):
        raise ValueError(f"eps shape {eps.shape} != mixture shape {(m, d)}")
    z = params.mus + params.sigmas * Tensor(eps)
    weights = T.reshape(params.alphas, (m, 1))
    if mode == "event":
        return T.tsum(weights * T.sigmoid(z), axis=0)
    if mode == "time":
        mixed = T.tsum(weights * z)
        return T.softplus(mixed) if time_mode == "gap" else mixed
    raise ValueError(f"unknown mixture mode {mode!r}")


def discretize(prediction: EventPrediction, target_ids=None) -> frozenset[int]:
    """Indices (or mapped ids) whose probability reaches the threshold.

    The threshold comparison is >=, so exact-boundary probabilities are kept.
    """
    picked = np.flatnonzero(prediction.probs >= prediction.threshold)
    if target_ids is not None:
        return frozenset(int(target_ids[i]) for i in picked)
    return frozenset(int(i) for i in picked)
