"""Temporal event-set modeling in continuous time.

Library layout:

* ``tensor``/``optim``/``gradcheck`` — the differentiable core: a float64
  reverse-mode tensor engine, Adam, and a finite-difference checker;
* ``data``/``synthetic`` — the corpus model, JSONL interchange, splits,
  statistics, and a generator with planted recoverable structure;
* ``embed`` — contrastive pre-training of contextual event embeddings;
* ``encoder``/``heads`` — the Bayesian set-sequence transformer and the
  mixture prediction heads;
* ``losses``/``metrics`` — training objectives and evaluation measures;
* ``model``/``train`` — the assembled model, training loops, fine-tuning,
  ensemble prediction, and intensity sweeps;
* ``config``/``cli`` — run configuration and the command-line pipeline.
"""

from .data import Corpus, EventSet, Sequence, Vocabulary, dataset_stats, load_jsonl, split
from .embed import EmbeddingTable, EmbedConfig, aux_loss, sample_triplet, train_embeddings
from .encoder import EncoderStack, TokenSequence, flatten_history, spatio_temporal_encoding
from .gradcheck import grad_check
from .heads import EventPrediction, MixtureParams, TimePrediction, discretize, sample_mixture
from .losses import LossConfig, bce_loss, combined_loss, dice_loss, huber_loss
from .metrics import EvalReport, dice_score, f_score, mae, mean_dice, rmse
from .model import EventSetModel, ModelConfig
from .optim import Adam, AdamState, adam_step
from .synthetic import SyntheticSpec, generate_synthetic
from .tensor import Tensor, no_grad
from .train import (TrainConfig, evaluate, finetune_event_given_time,
                    finetune_time_given_event, intensity_curve, predict_next, train_model)

__version__ = "0.1.0"
