"""Command-line entry point.

Every subcommand takes ``--config`` (YAML), ``--seed``, ``--out`` (run
directory), ``--dataset`` (a ``manifest.csv``; synthesized from the config
when omitted) and repeatable ``--set section.key=value`` overrides. Each run
writes ``run.json`` describing what was done and which files came out.
"""

from __future__ import annotations

import argparse
import json
import logging
import platform
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__, gnn
from .config import Config, ConfigError, dump_config, load_config
from .evaluate import (
    LOPO,
    ablation_study,
    compute_metrics,
    lopo_specs,
    misdetection_stats,
    run_protocol,
    split,
    sweep,
    write_confusion,
    write_table,
)
from .impute import write_audit
from .ingest import LogParseError, load_dataset
from .pipeline import graph_inputs, impute_split, process_dataset
from .synth import generate_dataset, write_dataset

logger = logging.getLogger("rfgesture")


# ---------------------------------------------------------------- helpers


def _samples(cfg: Config, args):
    if args.dataset:
        return load_dataset(args.dataset)
    s = cfg.synth
    return generate_dataset(
        s.subjects, s.reps, s.trajectory, s.channel, s.dropout, cfg.seed, s.distance_m, s.environment
    )


def _train_cfg(cfg: Config) -> gnn.TrainConfig:
    return cfg.train_config()


def _model_cfg(cfg: Config) -> gnn.ModelConfig:
    return cfg.model


def _metrics_rows(metrics, **extra) -> list[dict]:
    return [{**extra, **metrics.summary()}]


# ---------------------------------------------------------------- commands


def cmd_synth(cfg: Config, args, out: Path) -> list[str]:
    samples = _samples(cfg, argparse.Namespace(dataset=None))
    write_dataset(out, samples)
    return ["manifest.csv", "epc_map.csv", "logs/"]


def cmd_preprocess(cfg: Config, args, out: Path) -> list[str]:
    data = process_dataset(_samples(cfg, args), cfg.pipeline)
    data.save(out / "processed.npz")
    return ["processed.npz"]


def cmd_impute(cfg: Config, args, out: Path) -> list[str]:
    data = process_dataset(_samples(cfg, args), cfg.pipeline)
    tr, te = split(data, cfg.split_spec(args.held_out))
    f_tr, f_te, audit = impute_split(data.subset(tr), data.subset(te), cfg.pipeline)
    np.savez(out / "imputed.npz", train_features=f_tr, train_ids=data.ids[tr], test_features=f_te, test_ids=data.ids[te])
    write_audit(out / "audit.csv", audit)
    return ["imputed.npz", "audit.csv"]


def _prepare_split(cfg: Config, args):
    data = process_dataset(_samples(cfg, args), cfg.pipeline)
    tr, te = split(data, cfg.split_spec(args.held_out))
    train, test = data.subset(tr), data.subset(te)
    f_tr, f_te, _ = impute_split(train, test, cfg.pipeline)
    return train, test, f_tr, f_te


def cmd_train(cfg: Config, args, out: Path) -> list[str]:
    train, _, f_tr, _ = _prepare_split(cfg, args)
    x, s = graph_inputs(f_tr, cfg.pipeline.k)
    result = gnn.train(x, s, train.labels, _model_cfg(cfg), _train_cfg(cfg), backend=cfg.eval.backend)
    gnn.save_checkpoint(out / "model.ckpt", result.params)
    gnn.write_trace(out / "trace.csv", result.trace)
    return ["model.ckpt", "trace.csv"]


def cmd_eval(cfg: Config, args, out: Path) -> list[str]:
    if args.checkpoint:
        _, test, _, f_te = _prepare_split(cfg, args)
        params = gnn.load_checkpoint(args.checkpoint)
        x, s = graph_inputs(f_te, cfg.pipeline.k)
        preds, _ = gnn.predict(params, x, s, backend=cfg.eval.backend)
        metrics = compute_metrics(preds, test.labels, params.config.n_classes)
        rows = _metrics_rows(metrics, split=cfg.eval.split)
    else:
        data = process_dataset(_samples(cfg, args), cfg.pipeline)
        if cfg.eval.split == LOPO and args.held_out is None:
            specs = lopo_specs(data, cfg.seed)
        else:
            specs = [cfg.split_spec(args.held_out)]
        rows, preds, labels = [], [], []
        for spec in specs:
            res = run_protocol(data, spec, cfg.pipeline, _model_cfg(cfg), _train_cfg(cfg), cfg.eval.backend)
            fold = spec.held_out_subject if spec.held_out_subject is not None else "all"
            rows += _metrics_rows(res.metrics, split=spec.kind, held_out=fold)
            preds.append(res.preds)
            labels.append(res.labels)
        metrics = compute_metrics(np.concatenate(preds), np.concatenate(labels), cfg.model.n_classes)
        if len(specs) > 1:
            rows += _metrics_rows(metrics, split=LOPO, held_out="pooled")
    write_table(out / "metrics.csv", rows)
    write_confusion(out / "confusion_counts.csv", out / "confusion_normalized.csv", metrics)
    return ["metrics.csv", "confusion_counts.csv", "confusion_normalized.csv"]


def cmd_sweep(cfg: Config, args, out: Path) -> list[str]:
    rows = sweep(
        _samples(cfg, args), cfg.eval.sweep, cfg.split_spec(args.held_out), cfg.pipeline,
        _model_cfg(cfg), _train_cfg(cfg), cfg.eval.backend,
    )
    write_table(out / "sweep.csv", rows)
    return ["sweep.csv"]


def cmd_ablate(cfg: Config, args, out: Path) -> list[str]:
    sets = [tuple(int(t) for t in r) for r in cfg.eval.ablations]
    rows = ablation_study(
        _samples(cfg, args), sets, spec=cfg.split_spec(args.held_out), pipe=cfg.pipeline,
        model=_model_cfg(cfg), train_cfg=_train_cfg(cfg), backend=cfg.eval.backend,
    )
    write_table(out / "ablation.csv", rows)
    return ["ablation.csv"]


def cmd_stats(cfg: Config, args, out: Path) -> list[str]:
    stats = misdetection_stats(_samples(cfg, args))
    rows = [{"tags": str(n), "missing_rate": r} for n, r in stats["epc"].items()]
    rows += [{"tags": f"{a}+{b}", "missing_rate": r} for (a, b), r in stats["pair"].items()]
    write_table(out / "misdetection.csv", rows)
    return ["misdetection.csv"]


COMMANDS = {
    "synth": (cmd_synth, "generate a synthetic dataset (logs, manifest, EPC map)"),
    "preprocess": (cmd_preprocess, "condition, interpolate and resample every sample"),
    "impute": (cmd_impute, "impute null dataframes for the configured split"),
    "train": (cmd_train, "train the classifier on the training split"),
    "eval": (cmd_eval, "score a checkpoint, or run the full protocol (within-subject or LOPO)"),
    "sweep": (cmd_sweep, "grid over nu, l_rs and k"),
    "ablate": (cmd_ablate, "tag-removal study"),
    "stats": (cmd_stats, "per-tag and per-pair misdetection rates"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rfgesture", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", type=Path, help="YAML configuration file")
        p.add_argument("--seed", type=int, help="override the top-level seed")
        p.add_argument("--out", type=Path, default=None, help="run directory (default runs/<command>)")
        p.add_argument("--dataset", type=Path, help="manifest.csv of a dataset on disk")
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")
        p.add_argument("--held-out", type=int, default=None, help="subject held out when eval.split is LOPO")
        p.add_argument("-v", "--verbose", action="store_true")
        if name == "eval":
            p.add_argument("--checkpoint", type=Path, help="model.ckpt from a train run")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    overrides = list(args.overrides)
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    try:
        cfg = load_config(args.config, overrides)
    except (ConfigError, OSError) as exc:
        print(f"rfgesture: configuration error: {exc}", file=sys.stderr)
        return 2
    if cfg.eval.split == LOPO and args.held_out is None and args.command in ("impute", "train", "sweep", "ablate"):
        print("rfgesture: eval.split is LOPO; pass --held-out <subject>", file=sys.stderr)
        return 2
    out = args.out or Path("runs") / args.command
    out.mkdir(parents=True, exist_ok=True)
    started = time.time()
    func = COMMANDS[args.command][0]
    try:
        outputs = func(cfg, args, out)
    except (LogParseError, ValueError) as exc:
        print(f"rfgesture {args.command}: {exc}", file=sys.stderr)
        return 1
    dump_config(cfg, out / "config.yaml")
    manifest = {
        "command": args.command,
        "argv": sys.argv[1:] if argv is None else list(argv),
        "version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "seed": cfg.seed,
        "dataset": str(args.dataset) if args.dataset else "synthetic",
        "started": time.strftime("%Y-%m-%dT%H:%M:%S", time.localtime(started)),
        "seconds": round(time.time() - started, 3),
        "outputs": ["config.yaml"] + outputs,
    }
    (out / "run.json").write_text(json.dumps(manifest, indent=2) + "\n")
    print(out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
