"""The full next-event-set model: embeddings + encoder + two mixture heads.

Owns every trainable tensor and knows how to persist itself. A checkpoint is
a single .npz holding all parameter arrays plus a JSON metadata entry with a
version header, the model configuration, the vocabulary, the corpus time
scale, and the vocabulary content hash used for compatibility checks.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict

import numpy as np

from .data import Vocabulary
from .embed import EmbeddingTable
from .encoder import EncoderStack, WeightSample, TokenSequence, encode, sample_weights
from .heads import MixtureHead, MixtureParams
from .tensor import Tensor

__all__ = ["ModelConfig", "EventSetModel", "CHECKPOINT_VERSION"]

CHECKPOINT_VERSION = "eventsets-checkpoint-v1"


@dataclass
class ModelConfig:
    d_emb: int = 100
    n_layers: int = 2
    n_heads: int = 4
    ff_dim: int = 256
    dropout: float = 0.1
    n_components: int = 3
    encoding_parity: str = "dimension"  # "dimension" | "value"
    time_mode: str = "gap"              # "gap" | "absolute"
    logstd_init: float = -4.0

    def validate(self):
        if self.d_emb % self.n_heads:
            raise ValueError(f"d_emb {self.d_emb} must be divisible by n_heads {self.n_heads}")
        if self.n_components < 1:
            raise ValueError("need at least one mixture component")
        if self.time_mode not in ("gap", "absolute"):
            raise ValueError(f"unknown time_mode {self.time_mode!r}")
        if self.encoding_parity not in ("dimension", "value"):
            raise ValueError(f"unknown encoding_parity {self.encoding_parity!r}")


class EventSetModel:
    def __init__(self, vocab: Vocabulary, config: ModelConfig,
                 table: EmbeddingTable, stack: EncoderStack,
                 event_head: MixtureHead, time_head: MixtureHead,
                 time_scale: float = 1.0):
        config.validate()
        self.vocab = vocab
        self.config = config
        self.table = table
        self.stack = stack
        self.event_head = event_head
        self.time_head = time_head
        self.time_scale = float(time_scale)

    @classmethod
    def build(cls, vocab: Vocabulary, config: ModelConfig,
              rng: np.random.Generator, table: EmbeddingTable | None = None,
              time_scale: float = 1.0) -> "EventSetModel":
        """Fresh model; pass a pre-trained ``table`` to reuse its embeddings."""
        config.validate()
        if table is None:
            table = EmbeddingTable.init(len(vocab), config.d_emb, rng=rng)
        elif table.d_emb != config.d_emb:
            raise ValueError(f"embedding table dim {table.d_emb} != configured d_emb {config.d_emb}")
        elif table.vocab_size != len(vocab):
            raise ValueError(f"embedding table rows {table.vocab_size} != vocabulary size {len(vocab)}")
        stack = EncoderStack(
            d_emb=config.d_emb, n_layers=config.n_layers, n_heads=config.n_heads,
            ff_dim=config.ff_dim, dropout=config.dropout, feature_dim=vocab.feature_dim,
            logstd_init=config.logstd_init, rng=rng,
        )
        event_head = MixtureHead(config.d_emb, vocab.n_targets, config.n_components,
                                 rng, "event_head", config.logstd_init)
        time_head = MixtureHead(config.d_emb, 1, config.n_components,
                                rng, "time_head", config.logstd_init)
        return cls(vocab, config, table, stack, event_head, time_head, time_scale)

    # -- parameter plumbing --------------------------------------------------

    def parameters(self) -> list[tuple[str, Tensor]]:
        params = [(self.table.weights.name, self.table.weights)]
        params.extend(self.stack.parameters())
        params.extend(self.event_head.parameters())
        params.extend(self.time_head.parameters())
        return params

    def bayes_layers(self):
        return self.stack.bayes_layers() + self.event_head.bayes_layers() + self.time_head.bayes_layers()

    def sample_weights(self, rng: np.random.Generator) -> WeightSample:
        return sample_weights(self, rng)

    def kl_to_prior(self):
        total = None
        for layer in self.bayes_layers():
            term = layer.kl_to_standard_normal()
            total = term if total is None else total + term
        return total

    # -- forward passes --------------------------------------------------------

    def encode_tokens(self, tokens: TokenSequence, sample: WeightSample | None = None,
                      rng: np.random.Generator | None = None, training: bool = False) -> Tensor:
        return encode(tokens, self.table, self.stack, sample=sample, rng=rng,
                      training=training, parity=self.config.encoding_parity)

    def head_params(self, v_out: Tensor, sample: WeightSample | None = None,
                    condition_event: int | None = None) -> tuple[MixtureParams, MixtureParams]:
        """Both heads' mixture parameters; an optional conditioning event's
        embedding is added to v_out before the temporal head (the
        time-given-event task)."""
        ev = self.event_head.forward(v_out, sample)
        if condition_event is not None:
            v_time = v_out + self.table.rows(np.array([condition_event]))[0]
        else:
            v_time = v_out
        tm = self.time_head.forward(v_time, sample)
        return ev, tm

    # -- persistence -----------------------------------------------------------

    def save(self, path) -> None:
        arrays = {f"param:{name}": p.data for name, p in self.parameters()}
        meta = {
            "version": CHECKPOINT_VERSION,
            "config": asdict(self.config),
            "vocab": {"events": self.vocab.names, "targets": list(self.vocab.target_ids),
                      "feature_dim": self.vocab.feature_dim},
            "vocab_hash": self.vocab.content_hash(),
            "time_scale": self.time_scale,
        }
        np.savez(path, meta=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8), **arrays)

    @classmethod
    def load(cls, path) -> "EventSetModel":
        with np.load(path) as archive:
            meta = json.loads(archive["meta"].tobytes().decode())
            if meta.get("version") != CHECKPOINT_VERSION:
                raise ValueError(f"unsupported checkpoint version {meta.get('version')!r} in {path}")
            vocab = Vocabulary(names=meta["vocab"]["events"],
                               target_ids=meta["vocab"]["targets"],
                               feature_dim=meta["vocab"]["feature_dim"])
            config = ModelConfig(**meta["config"])
            model = cls.build(vocab, config, np.random.default_rng(0),
                              time_scale=meta["time_scale"])
            for name, p in model.parameters():
                key = f"param:{name}"
                if key not in archive:
                    raise ValueError(f"checkpoint {path} is missing parameter {name!r}")
                stored = archive[key]
                if stored.shape != p.data.shape:
                    raise ValueError(f"checkpoint parameter {name!r} has shape {stored.shape}, "
                                     f"expected {p.data.shape}")
                p.data[...] = stored
        return model
