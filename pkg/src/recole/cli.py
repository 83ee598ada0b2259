"""Command-line interface: ``recole <subcommand> --config run.cfg [--set key=value ...]``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import checkpoint as ckpt
from . import pipeline as pl
from .autodiff import no_grad
from .config import ConfigError, RunConfig, load_config, parse_pairs
from .encoder import encode, score
from .evaluation import long_tail_eval, write_long_tail
from .kg import build_graph, load_dataset_dir
from .subgraph import SubgraphCache, extract
from .synth import SynthConfig, synth_dataset

log = logging.getLogger("recole")


def _config(args) -> RunConfig:
    base = None
    if args.config:
        base = load_config(args.config)
    elif getattr(args, "checkpoint", None) and Path(args.checkpoint).exists():
        base = pl.from_checkpoint(ckpt.load(args.checkpoint))[0]
    cfg = parse_pairs(args.set or [], base, "--set")
    over = {}
    if getattr(args, "checkpoint", None):
        over["checkpoint"] = args.checkpoint
    if getattr(args, "threads", None):
        over["threads"] = args.threads
    if getattr(args, "out", None):
        over["out_dir"] = args.out
    return (cfg.updated(**over) if over else cfg).validate()


def _out(cfg: RunConfig, name: str) -> Path:
    d = Path(cfg.out_dir)
    d.mkdir(parents=True, exist_ok=True)
    return d / name


def _metrics(cfg: RunConfig, stage: str) -> Path:
    path = _out(cfg, f"metrics_{stage}.csv")
    path.unlink(missing_ok=True)
    return path


def _ckpt_out(cfg: RunConfig, stage: str) -> Path:
    return Path(cfg.checkpoint_out) if cfg.checkpoint_out else _out(cfg, f"{stage}.ckpt")


def _load(cfg: RunConfig):
    cfg.require("checkpoint")
    if not Path(cfg.checkpoint).exists():
        raise FileNotFoundError(f"checkpoint not found: {cfg.checkpoint}")
    ck = ckpt.load(cfg.checkpoint)
    _, model = pl.from_checkpoint(ck)
    return ck, model


def _save(cfg, g, space, model, stage):
    path = _ckpt_out(cfg, stage)
    ckpt.save(pl.to_checkpoint(cfg, g, space, model, stage), path)
    print(f"wrote checkpoint {path}")


def _check_vocab(ck, g):
    if list(ck.relations) != list(g.relation_vocab.names):
        raise ConfigError("checkpoint relation vocabulary does not match the training graph")


def cmd_cluster(cfg: RunConfig, args):
    g, space, model = pl.stage_cluster(cfg)
    names = g.relation_vocab.names
    pl.write_assignment_csv(_out(cfg, "assignment.csv"), names, space.cluster_model)
    for c in range(space.cluster_model.n_c):
        print(f"cluster {c}: " + ", ".join(names[r] for r in space.cluster_model.members(c)))
    _save(cfg, g, space, model, "cluster")


def cmd_pretrain(cfg: RunConfig, args):
    ck, model = _load(cfg)
    g = pl.load_train_graph(cfg)
    _check_vocab(ck, g)
    pl.stage_pretrain(cfg, g, model, metrics_path=_metrics(cfg, "pretrain"))
    _save(cfg, g, pl.checkpoint_space(ck), model, "pretrain")


def cmd_finetune(cfg: RunConfig, args):
    if cfg.ablation == "no-pretrain" and not cfg.checkpoint:
        g, space, model = pl.stage_cluster(cfg)
    else:
        ck, model = _load(cfg)
        g = pl.load_train_graph(cfg)
        _check_vocab(ck, g)
        space = pl.checkpoint_space(ck)
    pl.stage_finetune(cfg, g, model, metrics_path=_metrics(cfg, "finetune"))
    _save(cfg, g, space, model, "finetune")


def _evaluate(cfg):
    ck, model = _load(cfg)
    from .kg import Vocab
    rep, sp = pl.stage_evaluate(cfg, model, Vocab(ck.relations))
    return ck, rep, sp


def cmd_evaluate(cfg: RunConfig, args):
    _, rep, _ = _evaluate(cfg)
    print(rep.to_text())
    path = _out(cfg, "eval.csv")
    rep.write_csv(path)
    print(f"wrote {path}")


def cmd_longtail(cfg: RunConfig, args):
    _, rep, sp = _evaluate(cfg)
    g_train = pl.load_train_graph(cfg)
    table = long_tail_eval(g_train, sp, cfg.thresholds())
    print("threshold  auc_roc  auc_pr  n")
    for T, (roc, ap, n) in table.items():
        fmt = lambda x: "-" if x is None else f"{x:.4f}"  # noqa: E731
        print(f"{T}  {fmt(roc)}  {fmt(ap)}  {n}")
    path = _out(cfg, "longtail.csv")
    write_long_tail(path, table)
    print(f"wrote {path}")


def cmd_unseen(cfg: RunConfig, args):
    cfg.require("held_out_relation")
    g = pl.load_train_graph(cfg)
    rows, summary = pl.unseen_relation_protocol(g, cfg.held_out_relation, cfg, cfg.cluster_override,
                                                metrics_path=_metrics(cfg, "unseen"))
    print(f"{summary['relation']} -> cluster {summary['cluster']} ({', '.join(summary['members'])})")
    print(f"pairs {summary['n_pairs']}  positive above corruption {summary['pair_accuracy']:.4f}"
          f"  skipped (empty subgraph) {summary['n_skipped_empty']}")
    path = _out(cfg, "unseen.csv")
    pl.write_unseen_csv(path, rows)
    print(f"wrote {path}")


def cmd_extract_debug(cfg: RunConfig, args):
    cfg.require("triplet")
    parts = [p.strip() for p in cfg.triplet.replace(",", "\t").split("\t") if p.strip()]
    if len(parts) != 3:
        raise ConfigError("triplet must be head,relation,tail")
    src = cfg.test_dataset if args.graph == "test" else cfg.dataset
    if not src:
        cfg.require("test_dataset" if args.graph == "test" else "dataset")
    g = build_graph(load_dataset_dir(src)["train"])
    t = g.lookup(tuple(parts))
    sg = extract(g, t, cfg.m)
    if sg is None:
        print("empty subgraph")
        return
    print(sg.to_text(g))
    if cfg.checkpoint:
        _, model = _load(cfg)
        enc = model.encoder_for(t.rel)
        with no_grad():
            print(f"score {score(encode(sg, enc, cfg.aggregation), enc).item():.6f}")


def cmd_export_plot(cfg: RunConfig, args):
    ck, model = _load(cfg)
    g = pl.load_train_graph(cfg)
    _check_vocab(ck, g)
    rows = pl.export_plot(g, model, cfg)
    path = Path(args.csv) if args.csv else _out(cfg, f"plot_{ck.stage}.csv")
    pl.write_plot_csv(path, rows)
    print(f"wrote {len(rows)} rows to {path}")


def cmd_synth(args):
    cfg = SynthConfig(seed=args.seed)
    paths = synth_dataset(args.out or ".", cfg, args.name)
    for k, v in paths.items():
        print(f"{k}: {v}")


COMMANDS = {
    "cluster": (cmd_cluster, "fit relation semantics, t-SNE and K-Means; write a checkpoint stub"),
    "pretrain": (cmd_pretrain, "contrastive pretraining of the per-cluster encoders"),
    "finetune": (cmd_finetune, "soft-margin fine-tuning"),
    "evaluate": (cmd_evaluate, "AUC-PR / Hits@10 on the inductive test graph"),
    "longtail": (cmd_longtail, "metrics restricted to rare training relations"),
    "unseen": (cmd_unseen, "hold out one relation and score it through its assigned cluster"),
    "extract-debug": (cmd_extract_debug, "print the enclosing subgraph of one triplet"),
    "export-plot": (cmd_export_plot, "t-SNE of encoder representations as CSV"),
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="recole", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, (_, help_) in COMMANDS.items():
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", help="key = value run configuration")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
        p.add_argument("--checkpoint", help="input checkpoint")
        p.add_argument("--threads", type=int, help="worker threads for extraction/scoring")
        p.add_argument("--out", help="output directory")
        if name == "extract-debug":
            p.add_argument("--graph", choices=("train", "test"), default="train")
        if name == "export-plot":
            p.add_argument("--csv", help="output CSV path")
    p = sub.add_parser("synth", help="write the synthetic dataset")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--name", default="synth")
    p.add_argument("--out", help="output directory")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    np.seterr(over="ignore", under="ignore")
    try:
        if args.command == "synth":
            cmd_synth(args)
        else:
            cfg = _config(args)
            COMMANDS[args.command][0](cfg, args)
    except (ConfigError, ckpt.CheckpointError, FileNotFoundError, KeyError, ValueError, RuntimeError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"error: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
