"""Command-line front end: train, eval, compare, plot, latency.

Exit codes are a stable contract: 0 success, 2 usage or configuration
error, 3 numerical failure during training.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .channel import seed_child
from .config import ConfigError, load_experiment, with_paradigm, with_variant
from .figures import Curve, latency_markdown, save_text, svg_box, svg_curves
from .nets import ACTOR_VARIANTS, ActorParameters
from .training import (CSV_HEADER, NumericalAbort, compare, evaluate,
                       measure_latency, train)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def _write_manifest(out_dir: Path, spec, cfg, artifacts: dict, extra=None):
    manifest = {
        "name": spec.name,
        "config_path": spec.source_path,
        "config_sha256": spec.sha256,
        "master_seed": cfg.master_seed,
        "actor_variant": cfg.actor_variant,
        "paradigm": cfg.paradigm.paradigm,
        "package_version": __version__,
        "numpy_version": np.__version__,
        "artifacts": artifacts,
    }
    if extra:
        manifest.update(extra)
    with open(out_dir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _train_curves_svg(log):
    epochs = np.array([r.epoch for r in log.rows])
    rewards = np.array([r.reward for r in log.rows])
    curves = [Curve("training reward", epochs, rewards)]
    ev = [(r.epoch, r.eval_reward) for r in log.rows if r.eval_reward is not None]
    if ev:
        xs = np.array([e for e, _ in ev])
        ys = np.array([v for _, v in ev])
        curves.append(Curve("evaluation reward", xs, ys))
    return svg_curves(curves, title="learning curve")


def cmd_train(args) -> int:
    spec = load_experiment(args.config)
    cfg = spec.config
    if args.seed is not None:
        cfg = replace(cfg, master_seed=args.seed)
    out_dir = Path(args.out or f"runs/{spec.name}")
    out_dir.mkdir(parents=True, exist_ok=True)

    log, actor, critic = train(cfg)

    log.to_csv(out_dir / "metrics.csv", record_timing=cfg.record_timing)
    actor.save(out_dir / "actor.bin")
    critic.save(out_dir / "critic.bin")
    save_text(out_dir / "curves.svg", _train_curves_svg(log))
    timing = [r.iter_seconds for r in log.rows]
    _write_manifest(out_dir, spec, cfg,
                    {"metrics": "metrics.csv", "actor": "actor.bin",
                     "critic": "critic.bin", "curves": "curves.svg"},
                    {"mean_iter_seconds": float(np.mean(timing)),
                     "summary": log.summary()})
    print(f"trained {cfg.actor_variant} for {cfg.epochs} epochs "
          f"-> {out_dir}")
    return EXIT_OK


def cmd_eval(args) -> int:
    spec = load_experiment(args.config)
    cfg = spec.config
    actor = ActorParameters.load(args.params)
    episodes = args.episodes or cfg.eval_episodes
    seed = args.seed if args.seed is not None else cfg.master_seed
    report = evaluate(actor, episodes, cfg, seed_child(seed, 500))
    out_dir = Path(args.out or f"runs/{spec.name}-eval")
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "evaluation.json", "w") as fh:
        json.dump(report.summary(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    lines = ["episode,reward"]
    lines += [f"{i},{r:.12g}" for i, r in enumerate(report.rewards)]
    save_text(out_dir / "rewards.csv", "\n".join(lines) + "\n")
    print(json.dumps(report.summary(), sort_keys=True))
    return EXIT_OK


def cmd_compare(args) -> int:
    spec = load_experiment(args.config)
    variants = [v.strip() for v in args.variants.split(",") if v.strip()]
    if len(variants) < 2:
        raise ConfigError("variants: comparison needs at least 2 variants")
    for v in variants:
        if v not in ACTOR_VARIANTS:
            raise ConfigError(f"variants: unknown variant {v!r} "
                              f"(choose from {ACTOR_VARIANTS})")
    seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
    if not seeds:
        raise ConfigError("seeds: need at least one seed")
    base = with_paradigm(spec.config, args.paradigm)
    configs = [with_variant(base, v) for v in variants]
    result = compare(configs, seeds)

    out_dir = Path(args.out or f"runs/{spec.name}-compare")
    out_dir.mkdir(parents=True, exist_ok=True)

    rows = result.per_run_rows()
    aggs = result.aggregates()
    lines = ["row_type,label,seed,final_eval_mean,final_eval_variance,"
             "median_final_eval,mean_final_eval,pooled_variance,"
             "relative_improvement_vs_first,wins_vs_first"]
    for r in rows:
        lines.append(f"run,{r['label']},{r['seed']},"
                     f"{r['final_eval_mean']:.12g},"
                     f"{r['final_eval_variance']:.12g},,,,,")
    for a in aggs:
        lines.append(f"aggregate,{a['label']},,,,"
                     f"{a['median_final_eval']:.12g},"
                     f"{a['mean_final_eval']:.12g},"
                     f"{a['pooled_variance']:.12g},"
                     f"{a['relative_improvement_vs_first']:.12g},"
                     f"{a['wins_vs_first']}")
    save_text(out_dir / "comparison.csv", "\n".join(lines) + "\n")

    curves = []
    for label in result.labels:
        logs = [r.log for r in result.runs if r.label == label]
        series = np.stack([[row.reward for row in lg.rows] for lg in logs])
        epochs = np.arange(series.shape[1])
        curves.append(Curve(label, epochs, series.mean(axis=0),
                            band=(series.min(axis=0), series.max(axis=0))))
    save_text(out_dir / "learning_curves.svg",
              svg_curves(curves, title=f"{args.paradigm} optimization"))
    print(json.dumps(aggs, indent=2, sort_keys=True))
    return EXIT_OK


def _read_metrics_csv(path):
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ConfigError(f"{path}: line 1: empty metrics CSV")
        if ",".join(header) != CSV_HEADER:
            raise ConfigError(f"{path}: line 1: header does not match "
                              f"'{CSV_HEADER}'")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise ConfigError(f"{path}: line {lineno}: expected "
                                  f"{len(header)} columns, got {len(row)}")
            try:
                rows.append({
                    "epoch": int(row[0]),
                    "reward": float(row[1]),
                    "eval_reward": float(row[4]) if row[4] else None,
                    "iter_seconds": float(row[5]) if row[5] else 0.0,
                })
            except ValueError as exc:
                raise ConfigError(f"{path}: line {lineno}: {exc}")
    if not rows:
        raise ConfigError(f"{path}: line 2: no data rows")
    return rows


def cmd_plot(args) -> int:
    datasets = [(Path(p), _read_metrics_csv(p)) for p in args.metrics]
    out = Path(args.out) if args.out else None
    if args.kind == "curves":
        curves = [Curve(p.stem, np.array([r["epoch"] for r in rows]),
                        np.array([r["reward"] for r in rows]))
                  for p, rows in datasets]
        text = svg_curves(curves, title="training reward")
        out = out or Path("curves.svg")
    elif args.kind == "box":
        groups = []
        for p, rows in datasets:
            vals = [r["eval_reward"] for r in rows if r["eval_reward"] is not None]
            if not vals:
                raise ConfigError(f"{p}: line 2: no evaluation rewards to box-plot")
            groups.append((p.stem, np.array(vals)))
        text = svg_box(groups, title="inference reward")
        out = out or Path("box.svg")
    else:  # latency
        table = [{"variant": p.stem,
                  "mean_seconds": float(np.mean([r["iter_seconds"] for r in rows])),
                  "std_seconds": float(np.std([r["iter_seconds"] for r in rows])),
                  "iterations": len(rows)} for p, rows in datasets]
        text = latency_markdown(table)
        out = out or Path("latency.md")
    save_text(out, text)
    print(f"wrote {out}")
    return EXIT_OK


def cmd_latency(args) -> int:
    spec = load_experiment(args.config)
    variants = ([v.strip() for v in args.variants.split(",") if v.strip()]
                if args.variants else [spec.config.actor_variant])
    for v in variants:
        if v not in ACTOR_VARIANTS:
            raise ConfigError(f"variants: unknown variant {v!r}")
    rows = []
    for v in variants:
        cfg = with_variant(spec.config, v)
        res = measure_latency(cfg, n_iterations=args.iterations)
        rows.append({"variant": v, "mean_seconds": res.mean_seconds,
                     "std_seconds": res.std_seconds,
                     "iterations": res.iterations})
    text = latency_markdown(rows)
    by_variant = {r["variant"]: r["mean_seconds"] for r in rows}
    if {"moe_transformer_diffusion", "mlp_diffusion"} <= set(by_variant):
        overhead = 100.0 * (by_variant["moe_transformer_diffusion"]
                            / by_variant["mlp_diffusion"] - 1.0)
        text += f"\nMoE overhead vs MLP diffusion: {overhead:+.1f}%\n"
    if args.out:
        save_text(args.out, text)
    print(text, end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="secbeam",
        description="Robust secure beamforming experiments")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one policy from a config")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="evaluate saved actor parameters")
    p.add_argument("--config", required=True)
    p.add_argument("--params", required=True)
    p.add_argument("--episodes", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("compare", help="paired-seed variant benchmark")
    p.add_argument("--config", required=True)
    p.add_argument("--variants", required=True,
                   help="comma-separated actor variants")
    p.add_argument("--paradigm", required=True)
    p.add_argument("--seeds", required=True, help="comma-separated seeds")
    p.add_argument("--out")
    p.set_defaults(fn=cmd_compare)

    p = sub.add_parser("plot", help="emit figures from metrics CSVs")
    p.add_argument("--metrics", nargs="+", required=True)
    p.add_argument("--kind", choices=("curves", "box", "latency"),
                   required=True)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_plot)

    p = sub.add_parser("latency", help="per-iteration wall-clock per variant")
    p.add_argument("--config", required=True)
    p.add_argument("--variants")
    p.add_argument("--iterations", type=int, default=20)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_latency)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else EXIT_OK
    try:
        return args.fn(args)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalAbort as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
