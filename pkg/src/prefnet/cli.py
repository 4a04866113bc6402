"""Command-line entry point: ``prefnet {train,predict,recommend,evaluate,sweep}``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np
import tomli

from .data import ParseError, ValidationError, load_ratings
from .evaluation import REPORT_COLUMNS, held_out_sets, write_report, write_summary
from .experiment import (RANKINGS, CheckpointMismatch, ExperimentConfig, Workspace, evaluate, fit_pn,
                         load_model, load_split, manifest, save_checkpoint, sparsity)
from .inference import Recommender, predict_many
from .train import TrainingDiverged

log = logging.getLogger("prefnet")

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME, EXIT_DIVERGED = 0, 1, 2, 3
COMMANDS = ("train", "predict", "recommend", "evaluate", "sweep")

# flag name -> (config field, type)
FLAGS = {
    "train": ("train", str), "test": ("test", str), "users": ("users", str), "items": ("items", str),
    "scale": ("scale", int), "features": ("features", str), "lr": ("lr", float), "sigma": ("sigma", float),
    "epochs": ("epochs", int), "topn": ("topn", int), "candidates": ("candidates", int),
    "neighbors": ("neighbors", int), "ranking": ("ranking", str), "seed": ("seed", int), "out": ("out", str),
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="prefnet", description="Preference network recommender")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="TOML file; flags override its values")
    for flag, (_, typ) in FLAGS.items():
        p.add_argument(f"--{flag}", type=typ)
    p.add_argument("--checkpoint", help="parameter file (default OUT/checkpoint.txt)")
    p.add_argument("--input", help="predict: file of user<TAB>item[...] queries (default --test)")
    p.add_argument("--user-list", help="recommend: file with one user id per line")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def resolve_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig()
    if args.config:
        with open(args.config, "rb") as fh:
            cfg = ExperimentConfig.from_dict(tomli.load(fh))
    return cfg.override(**{field: getattr(args, flag) for flag, (field, _) in FLAGS.items()})


def _required(command: str) -> tuple[str, ...]:
    base = ("train", "users", "items")
    return base + ("test",) if command in ("evaluate", "sweep") else base


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _checkpoint(args, out: Path) -> Path:
    return Path(args.checkpoint) if args.checkpoint else out / "checkpoint.txt"


def cmd_train(cfg, args, out: Path) -> dict:
    table, _, attrs = load_split(cfg, need_test=False)
    ws = Workspace(table, attrs, cfg.min_co_ratings)
    model, report = fit_pn(ws, cfg.feature_config, cfg.train_config)
    save_checkpoint(model, _checkpoint(args, out), cfg)
    rep = report.to_dict()
    _write_json(out / "train_report.json", {k: rep[k] for k in ("objective", "grad_norm", "n_nodes",
                                                               "n_active_edges")})
    return {"train_seconds": report.wall_seconds, "epoch_seconds": report.epoch_seconds}


def _read_queries(path) -> tuple[np.ndarray, np.ndarray]:
    users, items = [], []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            parts = line.replace(",", "\t").split("\t")
            try:
                users.append(int(parts[0]))
                items.append(int(parts[1]))
            except (IndexError, ValueError):
                raise ParseError(path, lineno, "expected user<TAB>item") from None
    return np.array(users, dtype=np.int64), np.array(items, dtype=np.int64)


def cmd_predict(cfg, args, out: Path) -> dict:
    table, _, attrs = load_split(cfg, need_test=False)
    model = load_model(_checkpoint(args, out), table, attrs)
    source = args.input or cfg.test
    if source is None:
        raise ValidationError("predict needs --input or --test")
    qu, qi = _read_queries(source)
    bad = (qu < 1) | (qu > model.table.n_users) | (qi < 1) | (qi > model.table.n_items)
    if bad.any():
        k = int(np.flatnonzero(bad)[0])
        raise ValidationError(f"{source}: query ({qu[k]}, {qi[k]}) is outside the known id range")
    pred = predict_many(model, qu, qi)
    with open(out / "predictions.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["user", "item", "predicted", "confidence", "fallback_level"])
        for p in pred:
            w.writerow([p.user, p.item, p.predicted, f"{p.confidence:.6f}", p.fallback_level])
    return {}


def cmd_recommend(cfg, args, out: Path) -> dict:
    table, test, attrs = load_split(cfg)
    model = load_model(_checkpoint(args, out), table, attrs)
    if args.user_list:
        users = [int(x) for x in Path(args.user_list).read_text().split()]
    elif test is not None:
        users = sorted(held_out_sets(test))
    else:
        users = np.flatnonzero(model.table.user_counts).tolist()
    rec = Recommender(model, N=cfg.topn, C=cfg.candidates, K=cfg.neighbors, ranking=RANKINGS[cfg.ranking],
                      mode=cfg.candidate_mode)
    with open(out / "recommendations.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["user", "rank", "item", "score", "predicted", "confidence"])
        for u in users:
            for rank, (i, s, p, c) in enumerate(rec.recommend(u).entries, 1):
                w.writerow([u, rank, i, f"{s:.6f}", p, f"{c:.6f}"])
    return {}


def cmd_evaluate(cfg, args, out: Path) -> dict:
    table, test, attrs = load_split(cfg)
    model = load_model(_checkpoint(args, out), table, attrs)
    ws = Workspace(model.table, model.attrs, cfg.min_co_ratings)
    res = evaluate(model, ws, test, cfg)
    write_report(out, "table1.csv", res["table1.csv"])
    write_report(out, "fig4_mae.csv", res["fig4_mae.csv"])
    write_report(out, "fig6_utility_vs_recall.csv", res["recall"])
    write_report(out, "fig7_maehits_vs_recall.csv", res["recall"])
    write_summary(out, {"table1": res["table1.csv"], "rating": res["fig4_mae.csv"],
                        "topn": cfg.topn, "alpha": cfg.alpha})
    return {"evaluate_seconds": res["seconds"]}


def cmd_sweep(cfg, args, out: Path) -> dict:
    table, test, attrs = load_split(cfg)
    rows = sparsity(cfg, table, test, attrs)
    write_report(out, "fig5_mae_vs_size.csv", rows)
    return {}


HANDLERS = {"train": cmd_train, "predict": cmd_predict, "recommend": cmd_recommend,
            "evaluate": cmd_evaluate, "sweep": cmd_sweep}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = resolve_config(args)
    except (OSError, ValueError, TypeError, tomli.TOMLDecodeError) as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    errors = cfg.validate(_required(args.command))
    if errors:
        for e in errors:
            print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    out = Path(cfg.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        timings = HANDLERS[args.command](cfg, args, out)
    except TrainingDiverged as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (ParseError, ValidationError, CheckpointMismatch, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:  # noqa: BLE001
        log.exception("runtime failure")
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    _write_json(out / f"manifest_{args.command}.json", manifest(cfg, args.command))
    # wall-clock numbers are kept apart so every other artifact is byte-stable
    _write_json(out / f"timing_{args.command}.json", timings)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
