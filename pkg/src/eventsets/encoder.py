"""Set-sequence encoder: token flattening, set/time encodings, Bayesian transformer.

A history of event sets is flattened into one token sequence — the events of
each set in order, a separator token closing each set, and a classifier token
at the very end whose output row summarizes the sequence:

    a, b, [SEP], c, [SEP], [CLS]

Every token carries the index and timestamp of its event set; all tokens of
one set therefore receive the same added encoding vector, which is what makes
the encoder output invariant to within-set token order. The encoding is the
sum of a set-index sinusoid and a timestamp sinusoid evaluated at the same
geometric frequency ladder, so irregular real-valued times and integer set
positions live in one space.

All affine maps of the transformer are weight distributions (mean + log-std
per entry); a forward pass either uses the means or a reparameterized sample
``w = mean + exp(logstd) * eps`` so gradients reach both distribution
parameters.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .embed import EmbeddingTable
from .tensor import ConfigurationError, ShapeError, Tensor

__all__ = [
    "TokenSequence",
    "flatten_history",
    "spatio_temporal_encoding",
    "encoding_matrix",
    "BayesLinear",
    "EncoderLayer",
    "EncoderStack",
    "WeightSample",
    "sample_weights",
    "encode",
    "inject_features",
    "SEP",
    "CLS",
    "QRY",
    "N_SPECIALS",
]

# Special-token indices (offsets past the event vocabulary).
SEP, CLS, QRY = 0, 1, 2
N_SPECIALS = 3


@dataclass
class TokenSequence:
    """Flattened event-set prefix ready for the encoder.

    ``ids`` holds event ids for event tokens and the special index for
    specials; ``kinds`` disambiguates (0 = event, 1 = special). ``set_index``
    is 1-based; the classifier token gets k + 1 and (like a trailing query
    token, if any) the latest timestamp unless an explicit query time is set.
    """

    ids: np.ndarray
    kinds: np.ndarray
    set_index: np.ndarray
    set_time: np.ndarray
    features: np.ndarray | None = None
    n_sets: int = 0

    def __len__(self) -> int:
        return len(self.ids)


def flatten_history(
    sets,
    time_scale: float = 1.0,
    feature_dim: int = 0,
    query_time: float | None = None,
) -> TokenSequence:
    """Flatten s_1..s_k into tokens with per-token (set index, time, features).

    Times are zero-based at the first set and divided by ``time_scale``.
    ``query_time`` (raw units) appends a query token carrying set index k + 1
    and the normalized query time, used by the event-given-time task.
    """
    sets = list(sets)
    if not sets:
        raise ValueError("cannot flatten an empty history prefix")
    t0 = sets[0].timestamp
    ids: list[int] = []
    kinds: list[int] = []
    set_index: list[int] = []
    set_time: list[float] = []
    feats: list[np.ndarray] = []
    zero_f = np.zeros(feature_dim, dtype=np.float64)

    def feat_of(es):
        if feature_dim == 0:
            return zero_f
        if es.features is None:
            return zero_f
        if es.features.shape[0] != feature_dim:
            raise ShapeError(f"feature vector length {es.features.shape[0]} != corpus dim {feature_dim}")
        return es.features

    for j, es in enumerate(sets, start=1):
        t_norm = (es.timestamp - t0) / time_scale
        f = feat_of(es)
        for item in es.items:
            ids.append(int(item))
            kinds.append(0)
            set_index.append(j)
            set_time.append(t_norm)
            feats.append(f)
        ids.append(SEP)
        kinds.append(1)
        set_index.append(j)
        set_time.append(t_norm)
        feats.append(f)

    k = len(sets)
    t_last = (sets[-1].timestamp - t0) / time_scale
    if query_time is not None:
        ids.append(QRY)
        kinds.append(1)
        set_index.append(k + 1)
        set_time.append((query_time - t0) / time_scale)
        feats.append(zero_f)
    ids.append(CLS)
    kinds.append(1)
    set_index.append(k + 1)
    set_time.append(t_last)
    feats.append(feat_of(sets[-1]))

    return TokenSequence(
        ids=np.array(ids, dtype=np.intp),
        kinds=np.array(kinds, dtype=np.intp),
        set_index=np.array(set_index, dtype=np.float64),
        set_time=np.array(set_time, dtype=np.float64),
        features=np.stack(feats) if feature_dim else None,
        n_sets=k,
    )


def _sinusoid(x: np.ndarray, d_emb: int, parity: str) -> np.ndarray:
    """Sinusoid table for scalar positions/times x, shape [len(x), d_emb].

    parity="dimension": even dims take sin, odd dims cos, with one frequency
    per (sin, cos) pair — the standard interleaved layout. parity="value":
    the branch is chosen by the parity of floor(x) instead, which is the
    literal per-value reading (only well-defined after flooring real times).
    """
    d = np.arange(d_emb)
    freq = 1.0 / np.power(10000.0, 2.0 * (d // 2) / d_emb)
    ang = x[:, None] * freq[None, :]
    if parity == "dimension":
        out = np.where(d % 2 == 0, np.sin(ang), np.cos(ang))
    elif parity == "value":
        even_value = (np.floor(x).astype(np.int64) % 2 == 0)[:, None]
        out = np.where(even_value, np.sin(ang), np.cos(ang))
    else:
        raise ConfigurationError(f"unknown encoding parity {parity!r}")
    return out


def spatio_temporal_encoding(set_index: float, set_time: float, d_emb: int,
                             parity: str = "dimension") -> np.ndarray:
    """Sum of the set-index and timestamp sinusoids for one token."""
    pos = _sinusoid(np.array([float(set_index)]), d_emb, parity)
    temp = _sinusoid(np.array([float(set_time)]), d_emb, parity)
    return (pos + temp)[0]


def encoding_matrix(tokens: TokenSequence, d_emb: int, parity: str = "dimension") -> np.ndarray:
    return _sinusoid(tokens.set_index, d_emb, parity) + _sinusoid(tokens.set_time, d_emb, parity)


# -- Bayesian affine layers ---------------------------------------------------


class BayesLinear:
    """Affine map whose entries are independent Gaussians (mean, log-std)."""

    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator,
                 name: str, logstd_init: float = -4.0, w_std: float | None = None):
        scale = w_std if w_std is not None else 1.0 / np.sqrt(n_in)
        self.name = name
        self.n_in, self.n_out = n_in, n_out
        self.weight_mean = T.parameter(rng.normal(0.0, scale, size=(n_in, n_out)), name=f"{name}.w_mean")
        self.weight_logstd = T.parameter(np.full((n_in, n_out), logstd_init), name=f"{name}.w_logstd")
        self.bias_mean = T.parameter(np.zeros(n_out), name=f"{name}.b_mean")
        self.bias_logstd = T.parameter(np.full(n_out, logstd_init), name=f"{name}.b_logstd")

    def parameters(self):
        for p in (self.weight_mean, self.weight_logstd, self.bias_mean, self.bias_logstd):
            yield p.name, p

    def draw(self, rng: np.random.Generator) -> tuple[Tensor, Tensor]:
        """Reparameterized sample; gradients flow to mean and logstd."""
        eps_w = rng.standard_normal(self.weight_mean.data.shape)
        eps_b = rng.standard_normal(self.bias_mean.data.shape)
        w = self.weight_mean + T.exp(self.weight_logstd) * Tensor(eps_w)
        b = self.bias_mean + T.exp(self.bias_logstd) * Tensor(eps_b)
        return w, b

    def realize(self, sample: "WeightSample | None") -> tuple[Tensor, Tensor]:
        if sample is None:
            return self.weight_mean, self.bias_mean
        return sample.layers[self.name]

    def apply(self, x, sample: "WeightSample | None" = None) -> Tensor:
        w, b = self.realize(sample)
        return T.dense_forward(x, w, b)

    def kl_to_standard_normal(self) -> Tensor:
        """KL(N(mu, sigma^2) || N(0, 1)) summed over all entries."""
        total = None
        for mean, logstd in ((self.weight_mean, self.weight_logstd),
                             (self.bias_mean, self.bias_logstd)):
            var = T.exp(logstd * 2.0)
            term = T.tsum((var + mean * mean - 1.0) * 0.5 - logstd)
            total = term if total is None else total + term
        return total


@dataclass
class WeightSample:
    """One concrete weight assignment for every Bayesian layer, by name."""

    layers: dict = field(default_factory=dict)


def sample_weights(module, rng: np.random.Generator) -> WeightSample:
    """Draw every BayesLinear of a module tree (anything with .bayes_layers())."""
    sample = WeightSample()
    for layer in module.bayes_layers():
        sample.layers[layer.name] = layer.draw(rng)
    return sample


# -- transformer encoder --------------------------------------------------------


class EncoderLayer:
    """Post-norm transformer block: attention + feed-forward, residuals, LayerNorm."""

    def __init__(self, d_emb: int, n_heads: int, ff_dim: int, rng, name: str,
                 logstd_init: float = -4.0):
        if d_emb % n_heads != 0:
            raise ConfigurationError(f"hidden size {d_emb} not divisible by {n_heads} heads")
        self.n_heads = n_heads
        mk = lambda nin, nout, tag: BayesLinear(nin, nout, rng, f"{name}.{tag}", logstd_init)
        self.wq, self.wk, self.wv, self.wo = (mk(d_emb, d_emb, t) for t in ("wq", "wk", "wv", "wo"))
        self.ff1 = mk(d_emb, ff_dim, "ff1")
        self.ff2 = mk(ff_dim, d_emb, "ff2")
        self.ln1_gain = T.parameter(np.ones(d_emb), name=f"{name}.ln1_gain")
        self.ln1_bias = T.parameter(np.zeros(d_emb), name=f"{name}.ln1_bias")
        self.ln2_gain = T.parameter(np.ones(d_emb), name=f"{name}.ln2_gain")
        self.ln2_bias = T.parameter(np.zeros(d_emb), name=f"{name}.ln2_bias")

    def bayes_layers(self):
        return [self.wq, self.wk, self.wv, self.wo, self.ff1, self.ff2]

    def parameters(self):
        for layer in self.bayes_layers():
            yield from layer.parameters()
        for p in (self.ln1_gain, self.ln1_bias, self.ln2_gain, self.ln2_bias):
            yield p.name, p

    def forward(self, x: Tensor, sample: WeightSample | None, dropout_p: float,
                rng: np.random.Generator | None) -> Tensor:
        q = self.wq.apply(x, sample)
        k = self.wk.apply(x, sample)
        v = self.wv.apply(x, sample)
        attn = T.multi_head_attention(q, k, v, self.n_heads,
                                      attn_dropout=dropout_p, rng=rng)
        x = T.layer_norm(x + self.wo.apply(attn, sample), self.ln1_gain, self.ln1_bias)
        h = T.relu(self.ff1.apply(x, sample))
        if dropout_p > 0.0 and rng is not None:
            h = T.dropout(h, dropout_p, rng)
        return T.layer_norm(x + self.ff2.apply(h, sample), self.ln2_gain, self.ln2_bias)


class EncoderStack:
    """The full sequence encoder: special embeddings, feature map, N blocks."""

    def __init__(self, d_emb: int = 100, n_layers: int = 2, n_heads: int = 4,
                 ff_dim: int = 256, dropout: float = 0.1, feature_dim: int = 0,
                 logstd_init: float = -4.0, rng: np.random.Generator | None = None):
        rng = rng or np.random.default_rng(0)
        self.d_emb, self.n_heads, self.dropout = d_emb, n_heads, dropout
        self.feature_dim = feature_dim
        self.special_emb = T.parameter(rng.normal(0.0, 0.1, size=(N_SPECIALS, d_emb)),
                                       name="encoder.special_emb")
        self.layers = [EncoderLayer(d_emb, n_heads, ff_dim, rng, f"encoder.layer{i}", logstd_init)
                       for i in range(n_layers)]
        self.feature_proj = (
            BayesLinear(feature_dim, d_emb, rng, "encoder.feature_proj", logstd_init)
            if feature_dim > 0 else None
        )

    def bayes_layers(self):
        out = []
        for layer in self.layers:
            out.extend(layer.bayes_layers())
        if self.feature_proj is not None:
            out.append(self.feature_proj)
        return out

    def parameters(self):
        yield self.special_emb.name, self.special_emb
        for layer in self.layers:
            yield from layer.parameters()
        if self.feature_proj is not None:
            yield from self.feature_proj.parameters()


def inject_features(token_embeddings: Tensor, features: np.ndarray,
                    projection: BayesLinear, sample: WeightSample | None = None) -> Tensor:
    """Add a learned projection of each token's feature vector to its embedding."""
    if features.shape[0] != token_embeddings.data.shape[0]:
        raise ShapeError(
            f"feature rows {features.shape} do not match tokens {token_embeddings.data.shape}")
    if features.shape[1] != projection.n_in:
        raise ShapeError(f"feature dim {features.shape[1]} != projection input {projection.n_in}")
    return token_embeddings + projection.apply(Tensor(features), sample)


def encode(
    tokens: TokenSequence,
    table: EmbeddingTable,
    stack: EncoderStack,
    sample: WeightSample | None = None,
    rng: np.random.Generator | None = None,
    training: bool = False,
    parity: str = "dimension",
) -> Tensor:
    """Run the stack over a flattened history; return the classifier-row output."""
    if table.d_emb != stack.d_emb:
        raise ConfigurationError(f"embedding dim {table.d_emb} != encoder dim {stack.d_emb}")
    # One combined table (events then specials) so a single gather covers all tokens.
    combined = T.concat([table.weights, stack.special_emb], axis=0)
    flat_ids = tokens.ids + tokens.kinds * table.vocab_size
    x = combined[flat_ids]
    x = x + Tensor(encoding_matrix(tokens, stack.d_emb, parity))
    if stack.feature_proj is not None and tokens.features is not None:
        x = inject_features(x, tokens.features, stack.feature_proj, sample)
    dropout_p = stack.dropout if training else 0.0
    for layer in stack.layers:
        x = layer.forward(x, sample, dropout_p, rng)
    return x[len(tokens) - 1]
