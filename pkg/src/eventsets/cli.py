"""Command-line surface for the event-set modeling pipeline.

Subcommands cover the whole workflow: synthesize data, inspect statistics,
pre-train embeddings, train, evaluate, fine-tune, predict, sweep intensity
curves, and export embeddings. Every command writes a resolved-config
snapshot (including the master seed) into its output directory; exit code 2
signals a configuration problem and names the offending key or path.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, load_config_file, resolve_config, seed_stream
from .data import (CorpusError, dataset_stats, load_jsonl, load_vocabulary, split,
                   write_jsonl, write_vocabulary)
from .embed import EmbeddingTable, EmbedConfig, export_embeddings, train_embeddings
from .model import EventSetModel
from .synthetic import generate_synthetic
from .train import (evaluate, finetune_event_given_time, finetune_time_given_event,
                    intensity_curve, predict_next, train_model, write_intensity_csv)

log = logging.getLogger(__name__)


def _load_corpus(cfg: RunConfig):
    if not cfg.data_path:
        raise ConfigError("data_path is required (set --data or data_path in the config file)")
    if not Path(cfg.data_path).exists():
        raise ConfigError(f"data_path does not exist: {cfg.data_path}")
    vocab = None
    if cfg.vocab_path:
        if not Path(cfg.vocab_path).exists():
            raise ConfigError(f"vocab_path does not exist: {cfg.vocab_path}")
        vocab = load_vocabulary(cfg.vocab_path)
    return load_jsonl(cfg.data_path, vocab)


def _out(cfg: RunConfig) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg.write_snapshot(out)
    return out


def _load_table_checkpoint(path) -> EmbeddingTable:
    with np.load(path) as archive:
        return EmbeddingTable(archive["weights"])


# -- subcommand handlers --------------------------------------------------------


def cmd_gen_synthetic(cfg: RunConfig, args) -> int:
    out = _out(cfg)
    corpus, truth = generate_synthetic(cfg.synthetic)
    write_jsonl(corpus, out / "corpus.jsonl")
    write_vocabulary(corpus.vocab, out / "vocab.json")
    with open(out / "truth.json", "w") as fh:
        json.dump(truth.to_dict(), fh)
    print(json.dumps({"out": str(out), "sequences": len(corpus),
                      "events": len(corpus.vocab)}))
    return 0


def cmd_stats(cfg: RunConfig, args) -> int:
    corpus = _load_corpus(cfg)
    print(json.dumps(dataset_stats(corpus), sort_keys=True))
    return 0


def cmd_pretrain_embeddings(cfg: RunConfig, args) -> int:
    out = _out(cfg)
    corpus = _load_corpus(cfg)
    cfg.embed.d_emb = cfg.model.d_emb
    table = train_embeddings(corpus, cfg.embed, seed_stream(cfg.seed, "embed"))
    np.savez(out / "embeddings.npz", weights=table.weights.data,
             vocab_hash=np.frombuffer(corpus.vocab.content_hash().encode(), dtype=np.uint8))
    export_embeddings(table, corpus.vocab, out / "embeddings.csv")
    with open(out / "embed_log.jsonl", "w") as fh:
        for rec in cfg.embed.history:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    print(json.dumps({"out": str(out), "epochs": len(cfg.embed.history)}))
    return 0


def cmd_train(cfg: RunConfig, args) -> int:
    out = _out(cfg)
    corpus = _load_corpus(cfg)
    train_c, val_c, test_c = split(corpus, cfg.split_train_frac, cfg.split_val_frac, cfg.seed)
    for name, part in (("train", train_c), ("val", val_c), ("test", test_c)):
        write_jsonl(part, out / f"{name}.jsonl")
    table = _load_table_checkpoint(args.embeddings) if args.embeddings else None
    model = EventSetModel.build(corpus.vocab, cfg.model, seed_stream(cfg.seed, "init"),
                                table=table, time_scale=corpus.time_scale)
    cfg.train.seed = cfg.seed
    history = train_model(model, train_c, val_c, cfg.train, cfg.loss,
                          log_path=out / "metrics.jsonl")
    model.save(out / "model.npz")
    best = max((h.get("val_dsc", 0.0) for h in history), default=0.0)
    print(json.dumps({"out": str(out), "epochs": len(history), "best_val_dsc": best}))
    return 0


def cmd_evaluate(cfg: RunConfig, args) -> int:
    out = _out(cfg)
    model = EventSetModel.load(args.model)
    corpus = _load_corpus(cfg)
    rng = seed_stream(cfg.seed, "evaluate") if args.ensemble > 0 else None
    report, _ = evaluate(model, corpus, n_samples=args.ensemble, rng=rng,
                         config=cfg.train, mode=args.mode)
    (out / "eval.json").write_text(report.to_json() + "\n")
    print(report.to_json())
    return 0


def cmd_finetune(cfg: RunConfig, args) -> int:
    out = _out(cfg)
    model = EventSetModel.load(args.model)
    corpus = _load_corpus(cfg)
    train_c, val_c, _ = split(corpus, cfg.split_train_frac, cfg.split_val_frac, cfg.seed)
    cfg.train.seed = cfg.seed
    runner = {"event-given-time": finetune_event_given_time,
              "time-given-event": finetune_time_given_event}[args.task]
    history = runner(model, train_c, val_c, cfg.train, cfg.loss,
                     log_path=out / "metrics.jsonl")
    model.save(out / "model.npz")
    print(json.dumps({"out": str(out), "task": args.task, "epochs": len(history)}))
    return 0


def cmd_predict(cfg: RunConfig, args) -> int:
    out = _out(cfg)
    model = EventSetModel.load(args.model)
    corpus = _load_corpus(cfg)
    seqs = {s.id: s for s in corpus.sequences}
    if args.seq_id not in seqs:
        raise ConfigError(f"sequence id {args.seq_id!r} not found in {cfg.data_path}")
    history = seqs[args.seq_id].sets
    rng = seed_stream(cfg.seed, "predict")
    event_pred, time_pred = predict_next(model, history, args.ensemble, rng,
                                         threshold=cfg.train.threshold,
                                         max_seq_len=cfg.train.max_seq_len)
    picked = sorted(np.flatnonzero(event_pred.probs >= event_pred.threshold))
    result = {
        "seq_id": args.seq_id,
        "events": [model.vocab.names[model.vocab.target_ids[i]] for i in picked],
        "event_probs": {model.vocab.names[model.vocab.target_ids[i]]: float(p)
                        for i, p in enumerate(event_pred.probs)},
        "gap": time_pred.gap,
        "absolute_time": time_pred.absolute,
    }
    (out / "prediction.json").write_text(json.dumps(result, sort_keys=True) + "\n")
    print(json.dumps(result, sort_keys=True))
    return 0


def cmd_intensity(cfg: RunConfig, args) -> int:
    out = _out(cfg)
    model = EventSetModel.load(args.model)
    corpus = _load_corpus(cfg)
    seqs = {s.id: s for s in corpus.sequences}
    if args.seq_id not in seqs:
        raise ConfigError(f"sequence id {args.seq_id!r} not found in {cfg.data_path}")
    history = seqs[args.seq_id].sets
    if args.grid_steps < 1:
        raise ConfigError("grid-steps must be >= 1")
    t_last = history[-1].timestamp
    grid = np.linspace(t_last + args.grid_start, t_last + args.grid_stop, args.grid_steps)
    event_ids = ([int(x) for x in args.events.split(",")] if args.events
                 else list(model.vocab.target_ids))
    for eid in event_ids:
        if not model.vocab.is_target(eid):
            raise ConfigError(f"event id {eid} is not in the target set")
    rng = seed_stream(cfg.seed, "intensity") if args.ensemble > 0 else None
    matrix = intensity_curve(model, history, event_ids, grid, n_samples=args.ensemble,
                             rng=rng, max_seq_len=cfg.train.max_seq_len)
    names = [model.vocab.names[i] for i in event_ids]
    write_intensity_csv(out / "intensity.csv", grid, names, matrix)
    print(json.dumps({"out": str(out / 'intensity.csv'),
                      "events": len(event_ids), "grid": len(grid)}))
    return 0


def cmd_export_embeddings(cfg: RunConfig, args) -> int:
    out = _out(cfg)
    vocab = load_vocabulary(cfg.vocab_path) if cfg.vocab_path else None
    if args.model:
        model = EventSetModel.load(args.model)
        table, vocab = model.table, model.vocab
    elif args.embeddings:
        if vocab is None:
            raise ConfigError("export-embeddings from an embeddings checkpoint needs --vocab")
        table = _load_table_checkpoint(args.embeddings)
    else:
        raise ConfigError("export-embeddings needs --model or --embeddings")
    export_embeddings(table, vocab, out / "embeddings.csv")
    print(json.dumps({"out": str(out / 'embeddings.csv'), "rows": table.vocab_size}))
    return 0


# -- argument parsing -------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="eventsets",
                                     description="Continuous-time event-set modeling pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="TOML or JSON config file")
        p.add_argument("--seed", type=int, help="master seed (all runs are seeded; no wall-clock)")
        p.add_argument("--out", help="output directory for artifacts")
        p.add_argument("--data", help="corpus JSONL path")
        p.add_argument("--vocab", help="vocabulary JSON path")
        return p

    p = common(sub.add_parser("gen-synthetic", help="generate a synthetic corpus"))
    p.add_argument("--clusters", type=int)
    p.add_argument("--events-per-cluster", type=int)
    p.add_argument("--prob", type=float, help="within-cluster probability")
    p.add_argument("--sequences", type=int)
    p.add_argument("--max-len", type=int)
    p.set_defaults(handler=cmd_gen_synthetic)

    common(sub.add_parser("stats", help="print corpus statistics as JSON")).set_defaults(
        handler=cmd_stats)

    p = common(sub.add_parser("pretrain-embeddings", help="contrastive embedding pre-training"))
    p.add_argument("--epochs", type=int, help="fixed epoch count (disables early stopping)")
    p.set_defaults(handler=cmd_pretrain_embeddings)

    p = common(sub.add_parser("train", help="train the sequence model"))
    p.add_argument("--embeddings", help="pre-trained embeddings .npz to initialize from")
    p.add_argument("--epochs", type=int)
    p.set_defaults(handler=cmd_train)

    p = common(sub.add_parser("evaluate", help="score a checkpoint on a corpus"))
    p.add_argument("--model", required=True)
    p.add_argument("--ensemble", type=int, default=0,
                   help="weight draws to average; 0 = deterministic means")
    p.add_argument("--mode", default="full",
                   choices=["full", "event_given_time", "time_given_event"])
    p.set_defaults(handler=cmd_evaluate)

    p = common(sub.add_parser("finetune", help="fine-tune for a downstream task"))
    p.add_argument("--model", required=True)
    p.add_argument("--task", required=True, choices=["event-given-time", "time-given-event"])
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float, help="fine-tuning learning rate (default 0.0003)")
    p.set_defaults(handler=cmd_finetune)

    p = common(sub.add_parser("predict", help="forecast the next event set for a sequence"))
    p.add_argument("--model", required=True)
    p.add_argument("--seq-id", required=True)
    p.add_argument("--ensemble", type=int, default=5)
    p.set_defaults(handler=cmd_predict)

    p = common(sub.add_parser("intensity", help="probability-vs-time sweep for chosen events"))
    p.add_argument("--model", required=True)
    p.add_argument("--seq-id", required=True)
    p.add_argument("--events", help="comma-separated target event ids (default: all)")
    p.add_argument("--grid-start", type=float, default=0.0,
                   help="grid start offset after the last timestamp")
    p.add_argument("--grid-stop", type=float, required=True)
    p.add_argument("--grid-steps", type=int, default=50)
    p.add_argument("--ensemble", type=int, default=0)
    p.set_defaults(handler=cmd_intensity)

    p = common(sub.add_parser("export-embeddings", help="write event vectors as CSV"))
    p.add_argument("--model", help="model checkpoint (.npz)")
    p.add_argument("--embeddings", help="embeddings checkpoint (.npz)")
    p.set_defaults(handler=cmd_export_embeddings)
    return parser


def _overrides_from(args) -> dict:
    over = {
        "seed": args.seed,
        "out_dir": args.out,
        "data_path": args.data,
        "vocab_path": args.vocab,
    }
    for attr, key in (
        ("clusters", "synthetic.num_clusters"),
        ("events_per_cluster", "synthetic.events_per_cluster"),
        ("prob", "synthetic.within_cluster_prob"),
        ("sequences", "synthetic.num_sequences"),
        ("max_len", "synthetic.max_len"),
        ("lr", "train.learning_rate"),
    ):
        if hasattr(args, attr):
            over[key] = getattr(args, attr)
    if getattr(args, "epochs", None) is not None:
        if args.command == "pretrain-embeddings":
            over["embed.epochs"] = args.epochs
        else:
            over["train.epochs"] = args.epochs
    return over


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "finetune" and args.lr is None:
            # Fine-tuning default is a tenth of the training rate unless the
            # config file or --lr says otherwise.
            file_train = (load_config_file(args.config).get("train", {})
                          if args.config else {})
            if "learning_rate" not in file_train:
                args.lr = 0.0003
        cfg = resolve_config(args.config, _overrides_from(args))
        if args.command == "gen-synthetic":
            cfg.synthetic.seed = cfg.seed
        return args.handler(cfg, args)
    except ConfigError as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return 2
    except CorpusError as e:
        print(f"data error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
