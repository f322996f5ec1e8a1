"""Training loops, ensemble prediction, fine-tuning tasks, intensity sweeps.

The main loop follows the sample-a-sequence / sample-a-cut recipe: each step
draws one concrete weight assignment for the whole network, forwards a batch
of history prefixes through encoder and heads with fresh reparameterization
noise, and backpropagates the blended loss into every parameter including the
event embedding table.

Prediction averages N independent weight draws ("multiple generations") with
the reparameterization noise pinned to zero; N = 0 means plain mean weights,
which is also what epoch validation uses so that a saved checkpoint evaluated
on the validation split reproduces the training log exactly.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from . import tensor as T
from .data import Corpus, Sequence
from .encoder import TokenSequence, flatten_history
from .heads import EventPrediction, TimePrediction, discretize, sample_mixture
from .losses import LossConfig, bce_loss, combined_loss, dice_loss, huber_loss
from .metrics import EvalReport, f_score, mae, mean_dice, rmse
from .model import EventSetModel
from .optim import Adam
from .tensor import Tensor

log = logging.getLogger(__name__)

__all__ = [
    "TrainConfig",
    "TrainingExample",
    "build_examples",
    "train_model",
    "finetune_event_given_time",
    "finetune_time_given_event",
    "predict_next",
    "evaluate",
    "intensity_curve",
    "write_intensity_csv",
    "marginal_frequency_baseline",
    "mean_gap_baseline",
]


@dataclass
class TrainConfig:
    learning_rate: float = 0.003
    batch_size: int = 512
    max_seq_len: int = 500
    ensemble_n: int = 5
    epochs: int = 30
    patience: int = 10
    steps_per_epoch: int | None = None
    seed: int = 0
    threshold: float = 0.5
    freeze_embeddings: bool = False
    early_stopping: bool = True

    def validate(self):
        if min(self.learning_rate, self.batch_size, self.max_seq_len, self.epochs) <= 0:
            raise ValueError("learning_rate, batch_size, max_seq_len, epochs must be positive")
        if self.ensemble_n < 1:
            raise ValueError("ensemble_n must be >= 1")


@dataclass
class TrainingExample:
    """History prefix up to cut k plus the restricted next-set target."""

    seq_id: str
    k: int
    tokens: TokenSequence
    target_vector: np.ndarray
    target_set: frozenset[int]
    gap_norm: float
    t_next_norm: float  # relative to the prefix window origin
    t_prev_raw: float
    t_next_raw: float


def _example(corpus: Corpus, seq: Sequence, k: int, max_seq_len: int,
             with_query: bool = False) -> TrainingExample | None:
    nxt = seq.sets[k]
    target = corpus.vocab.restrict(nxt.items)
    if not target or nxt.timestamp <= seq.sets[k - 1].timestamp:
        return None
    prefix = seq.sets[max(0, k - max_seq_len):k]
    tokens = flatten_history(
        prefix,
        time_scale=corpus.time_scale,
        feature_dim=corpus.vocab.feature_dim,
        query_time=nxt.timestamp if with_query else None,
    )
    t0 = prefix[0].timestamp
    return TrainingExample(
        seq_id=seq.id,
        k=k,
        tokens=tokens,
        target_vector=corpus.vocab.target_vector(nxt.items),
        target_set=target,
        gap_norm=(nxt.timestamp - seq.sets[k - 1].timestamp) / corpus.time_scale,
        t_next_norm=(nxt.timestamp - t0) / corpus.time_scale,
        t_prev_raw=seq.sets[k - 1].timestamp,
        t_next_raw=nxt.timestamp,
    )


def build_examples(corpus: Corpus, max_seq_len: int = 500,
                   with_query: bool = False) -> tuple[list[TrainingExample], int]:
    """Every valid (sequence, cut) example; also returns the skip count."""
    examples, skipped = [], 0
    for seq in corpus.sequences:
        for k in range(1, len(seq.sets)):
            ex = _example(corpus, seq, k, max_seq_len, with_query)
            if ex is None:
                skipped += 1
            else:
                examples.append(ex)
    return examples, skipped


def _group_by_sequence(examples: list[TrainingExample]) -> list[list[TrainingExample]]:
    groups: dict[str, list[TrainingExample]] = {}
    for ex in examples:
        groups.setdefault(ex.seq_id, []).append(ex)
    return list(groups.values())


def _forward(model: EventSetModel, ex: TrainingExample, sample, eps_rng,
             training: bool, dropout_rng, condition_event: int | None = None):
    """One example through encoder and heads; returns (event probs, time value)."""
    v_out = model.encode_tokens(ex.tokens, sample=sample, rng=dropout_rng, training=training)
    ev_params, tm_params = model.head_params(v_out, sample, condition_event)
    m = model.config.n_components
    if eps_rng is None:
        ev_eps = np.zeros((m, model.vocab.n_targets))
        tm_eps = np.zeros((m, 1))
    else:
        ev_eps = eps_rng.standard_normal((m, model.vocab.n_targets))
        tm_eps = eps_rng.standard_normal((m, 1))
    probs = sample_mixture(ev_params, eps=ev_eps, mode="event")
    time_value = sample_mixture(tm_params, eps=tm_eps, mode="time", time_mode=model.config.time_mode)
    return probs, time_value


def _time_target(model: EventSetModel, ex: TrainingExample) -> float:
    return ex.gap_norm if model.config.time_mode == "gap" else ex.t_next_norm


def _example_loss(model: EventSetModel, ex: TrainingExample, sample, eps_rng,
                  dropout_rng, loss_config: LossConfig,
                  condition_event: int | None = None) -> Tensor:
    probs, time_value = _forward(model, ex, sample, eps_rng, True, dropout_rng, condition_event)
    parts = []
    if loss_config.lambda1 > 0:
        parts.append(bce_loss(probs, Tensor(ex.target_vector), form=loss_config.bce_form)
                     * loss_config.lambda1)
    if loss_config.lambda2 > 0:
        parts.append(dice_loss(probs, Tensor(ex.target_vector), loss_config.dice_epsilon)
                     * loss_config.lambda2)
    if loss_config.lambda3 > 0:
        parts.append(huber_loss(time_value, _time_target(model, ex), loss_config.huber_delta)
                     * loss_config.lambda3)
    total = parts[0]
    for p in parts[1:]:
        total = total + p
    return total


def _snapshot(model: EventSetModel) -> dict[str, np.ndarray]:
    return {name: p.data.copy() for name, p in model.parameters()}


def _restore(model: EventSetModel, snap: dict[str, np.ndarray]) -> None:
    for name, p in model.parameters():
        p.data[...] = snap[name]


def _stream(seed: int, tag: str) -> np.random.Generator:
    import hashlib

    digest = hashlib.sha256(tag.encode()).digest()
    return np.random.default_rng(np.random.SeedSequence([seed, int.from_bytes(digest[:8], "big")]))


def train_model(
    model: EventSetModel,
    train_corpus: Corpus,
    val_corpus: Corpus | None,
    config: TrainConfig,
    loss_config: LossConfig | None = None,
    mode: str = "full",
    log_path=None,
) -> list[dict]:
    """Fit the model; returns the per-epoch metrics log (also written as JSONL).

    mode: "full" trains all three objectives on plain prefixes;
    "event_given_time" appends a query token carrying the true next timestamp
    and drops the time loss; "time_given_event" conditions the temporal head
    on one true target event and trains the time loss alone.
    """
    config.validate()
    loss_config = loss_config or LossConfig()
    if mode == "event_given_time":
        loss_config = replace(loss_config, lambda3=0.0)
    elif mode == "time_given_event":
        loss_config = replace(loss_config, lambda1=0.0, lambda2=0.0)
    elif mode != "full":
        raise ValueError(f"unknown training mode {mode!r}")
    with_query = mode == "event_given_time"

    examples, skipped = build_examples(train_corpus, config.max_seq_len, with_query)
    if not examples:
        raise ValueError("training corpus yields no usable examples")
    if skipped:
        log.info("skipped %d prefix(es) with empty restricted targets or stalled time", skipped)
    by_seq = _group_by_sequence(examples)

    params = model.parameters()
    if config.freeze_embeddings:
        params = [(n, p) for n, p in params if not n.startswith("embed.")]
    opt = Adam(params, lr=config.learning_rate)

    rng_data = _stream(config.seed, "data")
    rng_weights = _stream(config.seed, "weights")
    rng_eps = _stream(config.seed, "sampling")
    rng_dropout = _stream(config.seed, "dropout")

    steps = config.steps_per_epoch or max(1, len(examples) // config.batch_size)
    history: list[dict] = []
    best_score, best_snap, since_best = -np.inf, None, 0
    log_fh = open(log_path, "w") if log_path else None
    try:
        for epoch in range(config.epochs):
            epoch_loss = 0.0
            for _ in range(steps):
                sample = model.sample_weights(rng_weights)
                batch = []
                for _ in range(config.batch_size):
                    seq_examples = by_seq[rng_data.integers(len(by_seq))]
                    batch.append(seq_examples[rng_data.integers(len(seq_examples))])
                losses = []
                for ex in batch:
                    cond = None
                    if mode == "time_given_event":
                        choices = sorted(ex.target_set)
                        cond = choices[rng_data.integers(len(choices))]
                    losses.append(_example_loss(model, ex, sample, rng_eps, rng_dropout,
                                                loss_config, cond))
                total = losses[0]
                for l in losses[1:]:
                    total = total + l
                total = total * (1.0 / len(losses))
                if loss_config.kl_weight > 0:
                    total = total + model.kl_to_prior() * loss_config.kl_weight
                loss_val = total.item()
                if not np.isfinite(loss_val):
                    raise RuntimeError(
                        f"non-finite loss {loss_val!r} at epoch {epoch}, "
                        f"lr={config.learning_rate}, batch={len(batch)}; aborting")
                opt.zero_grad()
                total.backward()
                opt.step()
                epoch_loss += loss_val
            record = {"epoch": epoch, "train_loss": epoch_loss / steps}
            if val_corpus is not None:
                report, _ = evaluate(model, val_corpus, n_samples=0, config=config, mode=mode)
                record.update(val_dsc=report.dsc, val_mae=report.mae, val_mae_raw=report.mae_raw)
                # Time-only fine-tuning has no DSC signal; select on MAE there.
                score = -report.mae if mode == "time_given_event" else report.dsc
                if score > best_score:
                    best_score, best_snap, since_best = score, _snapshot(model), 0
                else:
                    since_best += 1
            history.append(record)
            log.info("epoch %d: %s", epoch, record)
            if log_fh:
                log_fh.write(json.dumps(record, sort_keys=True) + "\n")
                log_fh.flush()
            if (val_corpus is not None and config.early_stopping
                    and since_best >= config.patience):
                log.info("no validation improvement for %d epochs, stopping", config.patience)
                break
    finally:
        if log_fh:
            log_fh.close()
    if best_snap is not None:
        _restore(model, best_snap)
    return history


def finetune_event_given_time(model: EventSetModel, train_corpus: Corpus,
                              val_corpus: Corpus | None, config: TrainConfig,
                              loss_config: LossConfig | None = None,
                              log_path=None) -> list[dict]:
    """Adapt to predicting the event set at a *given* future timestamp."""
    return train_model(model, train_corpus, val_corpus, config, loss_config,
                       mode="event_given_time", log_path=log_path)


def finetune_time_given_event(model: EventSetModel, train_corpus: Corpus,
                              val_corpus: Corpus | None, config: TrainConfig,
                              loss_config: LossConfig | None = None,
                              log_path=None) -> list[dict]:
    """Adapt to predicting when a *given* target event will occur."""
    return train_model(model, train_corpus, val_corpus, config, loss_config,
                       mode="time_given_event", log_path=log_path)


# -- prediction ----------------------------------------------------------------


def _ensemble_forward(model: EventSetModel, tokens: TokenSequence, n_samples: int,
                      rng: np.random.Generator | None,
                      condition_event: int | None = None) -> tuple[np.ndarray, float]:
    """Average event probabilities and time outputs over N weight draws.

    n_samples == 0 uses the weight means (single deterministic pass).
    """
    with T.no_grad():
        draws = max(1, n_samples)
        probs = np.zeros(model.vocab.n_targets)
        time_acc = 0.0
        for _ in range(draws):
            sample = model.sample_weights(rng) if n_samples > 0 else None
            v_out = model.encode_tokens(tokens, sample=sample)
            ev_params, tm_params = model.head_params(v_out, sample, condition_event)
            m = model.config.n_components
            probs += sample_mixture(ev_params, eps=np.zeros((m, model.vocab.n_targets)),
                                    mode="event").data
            time_acc += sample_mixture(tm_params, eps=np.zeros((m, 1)), mode="time",
                                       time_mode=model.config.time_mode).item()
        return probs / draws, time_acc / draws


def _time_prediction(model: EventSetModel, value_norm: float, t0_raw: float,
                     t_prev_raw: float) -> TimePrediction:
    if model.config.time_mode == "gap":
        gap_raw = value_norm * model.time_scale
        return TimePrediction(gap=gap_raw, absolute=t_prev_raw + gap_raw)
    absolute = t0_raw + value_norm * model.time_scale
    return TimePrediction(gap=max(absolute - t_prev_raw, 0.0), absolute=absolute)


def predict_next(model: EventSetModel, history, n_samples: int,
                 rng: np.random.Generator | None = None,
                 threshold: float = 0.5,
                 max_seq_len: int = 500) -> tuple[EventPrediction, TimePrediction]:
    """Forecast the next event set and its time from a raw history prefix."""
    sets = list(history)[-max_seq_len:]
    tokens = flatten_history(sets, time_scale=model.time_scale,
                             feature_dim=model.vocab.feature_dim)
    probs, time_value = _ensemble_forward(model, tokens, n_samples, rng)
    return (
        EventPrediction(probs=probs, threshold=threshold),
        _time_prediction(model, time_value, sets[0].timestamp, sets[-1].timestamp),
    )


def evaluate(model: EventSetModel, corpus: Corpus, n_samples: int = 0,
             rng: np.random.Generator | None = None,
             config: TrainConfig | None = None,
             mode: str = "full") -> tuple[EvalReport, list[dict]]:
    """Score every usable prefix example; deterministic given seeded rng.

    For "time_given_event" every (example, target event) pair is scored.
    Results are accumulated in corpus order, so concurrent fan-out over
    examples would merge identically.
    """
    config = config or TrainConfig()
    examples, _ = build_examples(corpus, config.max_seq_len,
                                 with_query=(mode == "event_given_time"))
    if not examples:
        raise ValueError("no usable evaluation examples in corpus")
    pred_sets, true_sets = [], []
    pred_times, true_times = [], []
    details: list[dict] = []
    for ex in examples:
        conditions = sorted(ex.target_set) if mode == "time_given_event" else [None]
        for cond in conditions:
            probs, time_value = _ensemble_forward(model, ex.tokens, n_samples, rng, cond)
            pred = discretize(EventPrediction(probs=probs, threshold=config.threshold))
            true_positions = frozenset(model.vocab.target_position(i) for i in ex.target_set)
            pred_sets.append(pred)
            true_sets.append(true_positions)
            pred_times.append(time_value)
            true_times.append(_time_target(model, ex))
            details.append({"seq_id": ex.seq_id, "k": ex.k,
                            "pred": sorted(pred), "true": sorted(true_positions),
                            "pred_time_norm": time_value, "true_time_norm": true_times[-1]})
    report = EvalReport(
        dsc=mean_dice(pred_sets, true_sets),
        f_score=f_score(pred_sets, true_sets),
        mae=mae(pred_times, true_times),
        rmse=rmse(pred_times, true_times),
        mae_raw=mae(pred_times, true_times) * model.time_scale,
        rmse_raw=rmse(pred_times, true_times) * model.time_scale,
        n_examples=len(pred_sets),
    )
    return report, details


# -- intensity sweeps ------------------------------------------------------------


def intensity_curve(model: EventSetModel, history, event_ids, grid_times,
                    n_samples: int = 0, rng: np.random.Generator | None = None,
                    max_seq_len: int = 500) -> np.ndarray:
    """Event probabilities as a function of query time: [n_events, n_grid].

    Each grid time (raw units, strictly increasing) becomes a query token; the
    matrix row order follows ``event_ids`` (which must be target events).
    """
    grid = np.asarray(list(grid_times), dtype=np.float64)
    if grid.size == 0:
        raise ValueError("intensity grid must not be empty")
    if np.any(np.diff(grid) <= 0):
        raise ValueError("intensity grid times must be strictly increasing")
    sets = list(history)[-max_seq_len:]
    positions = [model.vocab.target_position(i) for i in event_ids]
    out = np.zeros((len(positions), grid.size))
    for gi, t in enumerate(grid):
        tokens = flatten_history(sets, time_scale=model.time_scale,
                                 feature_dim=model.vocab.feature_dim, query_time=float(t))
        probs, _ = _ensemble_forward(model, tokens, n_samples, rng)
        out[:, gi] = probs[positions]
    return out


def write_intensity_csv(path, grid_times, event_names, matrix: np.ndarray) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["time"] + list(event_names))
        for gi, t in enumerate(grid_times):
            writer.writerow([repr(float(t))] + [repr(float(x)) for x in matrix[:, gi]])


# -- reference baselines -----------------------------------------------------------


def marginal_frequency_baseline(corpus: Corpus, threshold: float = 0.5,
                                max_seq_len: int = 500) -> EventPrediction:
    """Constant prediction: each target's frequency across training examples."""
    examples, _ = build_examples(corpus, max_seq_len)
    if not examples:
        raise ValueError("no examples to estimate marginal frequencies from")
    freq = np.mean([ex.target_vector for ex in examples], axis=0)
    return EventPrediction(probs=freq, threshold=threshold)


def mean_gap_baseline(corpus: Corpus, max_seq_len: int = 500) -> float:
    """Global mean normalized inter-arrival gap over training examples."""
    examples, _ = build_examples(corpus, max_seq_len)
    if not examples:
        raise ValueError("no examples to estimate the mean gap from")
    return float(np.mean([ex.gap_norm for ex in examples]))
