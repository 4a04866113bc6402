"""Experiment configuration and the end-to-end pipelines behind the CLI."""
from __future__ import annotations

import hashlib
import json
import logging
import math
import platform
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .baselines import (item_based_predict_many, round_rating, user_based_predict_many,
                        user_based_topn)
from .data import AttributeCatalog, ValidationError, RatingTable, compute_means, load_dataset, load_ratings
from .evaluation import (expected_utility, held_out_sets, rating_metrics, recall_sweep)
from .features import FeatureConfig, load_parameters, save_parameters
from .inference import Recommender, predict_many
from .model import PNModel
from .similarity import (SelectedPairs, item_similarities, select_positive, user_similarities)
from .train import TrainConfig, train

log = logging.getLogger(__name__)

RANKINGS = {"expected": "expected-energy", "maximal": "maximal-energy",
            "expected-energy": "expected-energy", "maximal-energy": "maximal-energy"}


@dataclass
class ExperimentConfig:
    train: str | None = None
    test: str | None = None
    users: str | None = None
    items: str | None = None
    scale: int = 5
    features: str = "identity,content,correlation"
    lr: float = 0.001
    sigma: float = 1.0
    epochs: int = 3
    seed: int = 0
    topn: int = 20
    candidates: int = 500
    neighbors: int = 100
    ranking: str = "expected"
    candidate_mode: str = "user-based"
    min_co_ratings: int = 2
    alpha: float = 5.0
    recall_n: list = field(default_factory=lambda: [1, 2, 5, 10, 20, 50, 100])
    fractions: list = field(default_factory=lambda: [0.1, 0.25, 0.5, 1.0])
    sweep_features: list = field(default_factory=lambda: ["content", "correlation",
                                                          "identity,content,correlation"])
    out: str = "runs/default"

    def validate(self, need=("train", "users", "items")) -> list[str]:
        """Every problem with the config, not just the first."""
        errors = []
        for name in need:
            p = getattr(self, name)
            if p is None:
                errors.append(f"--{name} is required")
            elif not Path(p).is_file():
                errors.append(f"--{name}: no such file {p}")
        try:
            FeatureConfig.parse(self.features)
        except ValueError as exc:
            errors.append(f"--features: {exc}")
        if self.scale < 2:
            errors.append("--scale must be at least 2")
        if self.lr <= 0:
            errors.append("--lr must be positive")
        if self.sigma <= 0:
            errors.append("--sigma must be positive")
        if self.epochs < 1:
            errors.append("--epochs must be at least 1")
        if self.topn < 1:
            errors.append("--topn must be at least 1")
        if self.candidates < self.topn:
            errors.append("--candidates must be at least --topn")
        if self.neighbors < 1:
            errors.append("--neighbors must be at least 1")
        if self.ranking not in RANKINGS:
            errors.append(f"--ranking must be one of expected, maximal (got {self.ranking!r})")
        if self.candidate_mode not in ("user-based", "item-based", "union"):
            errors.append(f"candidate_mode {self.candidate_mode!r} is not user-based, item-based or union")
        if self.min_co_ratings < 1:
            errors.append("min_co_ratings must be at least 1")
        if self.alpha <= 1:
            errors.append("alpha must exceed 1")
        if any(not 0 < f <= 1 for f in self.fractions):
            errors.append("fractions must lie in (0, 1]")
        if list(self.recall_n) != sorted(self.recall_n) or any(n < 1 for n in self.recall_n):
            errors.append("recall_n must be ascending positive integers")
        for spec in self.sweep_features:
            try:
                FeatureConfig.parse(spec)
            except ValueError as exc:
                errors.append(f"sweep_features {spec!r}: {exc}")
        return errors

    @property
    def feature_config(self) -> FeatureConfig:
        return FeatureConfig.parse(self.features)

    @property
    def train_config(self) -> TrainConfig:
        return TrainConfig(learning_rate=self.lr, sigma=self.sigma, epochs=self.epochs, seed=self.seed)

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        """Hash of everything that affects results (the output directory does not)."""
        d = {k: v for k, v in self.to_dict().items() if k != "out"}
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        flat = {}
        for k, v in d.items():
            # tables like [paths] or [train] are flattened
            if isinstance(v, dict):
                flat.update(v)
            else:
                flat[k] = v
        unknown = sorted(set(flat) - known)
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**flat)

    def override(self, **kw) -> "ExperimentConfig":
        return replace(self, **{k: v for k, v in kw.items() if v is not None})


def manifest(cfg: ExperimentConfig, command: str, extra: dict | None = None) -> dict:
    from importlib import metadata
    try:
        version = metadata.version("artifact")
    except metadata.PackageNotFoundError:
        version = "unknown"
    return {"command": command, "config": cfg.to_dict(), "config_sha256": cfg.digest(), "seed": cfg.seed,
            "versions": {"artifact": version, "numpy": np.__version__, "python": platform.python_version()},
            **(extra or {})}


# -- pipelines ---------------------------------------------------------------------


@dataclass
class Workspace:
    """Training data with its derived statistics, shared by every method."""

    table: RatingTable
    attrs: AttributeCatalog
    min_co_ratings: int = 2

    def __post_init__(self):
        self.means = compute_means(self.table)
        self.user_sims = user_similarities(self.table, self.means)
        self.item_sims = item_similarities(self.table, self.means)
        self.pairs = SelectedPairs(select_positive(self.user_sims, self.min_co_ratings),
                                   select_positive(self.item_sims, self.min_co_ratings),
                                   self.min_co_ratings)


def load_split(cfg: ExperimentConfig, need_test: bool = True):
    """Training table, optional test table and attributes over one id universe.

    The universe is fixed by the attribute files, so checkpoints do not depend
    on which test file accompanies training.
    """
    table, attrs = load_dataset(cfg.train, cfg.users, cfg.items, cfg.scale)
    test = None
    if need_test and cfg.test:
        test = load_ratings(cfg.test, cfg.scale)
        if test.n_users > attrs.n_users or test.n_items > attrs.n_items:
            raise ValidationError(f"{cfg.test}: ids beyond the attribute files "
                                  f"({attrs.n_users} users, {attrs.n_items} items)")
        test = test.with_universe(attrs.n_users, attrs.n_items)
    return table, test, attrs


def fit_pn(ws: Workspace, features: FeatureConfig, train_config: TrainConfig):
    model = PNModel(ws.table, ws.attrs, ws.pairs, features=features, means=ws.means)
    return train(model, train_config)


def baseline_predictions(ws: Workspace, test: RatingTable) -> dict[str, np.ndarray]:
    """Raw and rounded neighbourhood predictions aligned with ``test``."""
    ub = user_based_predict_many(test.users, test.items, ws.table, ws.means, ws.user_sims)
    ib = item_based_predict_many(test.users, test.items, ws.table, ws.means, ws.item_sims)
    S = ws.table.scale
    return {"user-based": ub, "user-based-rounded": round_rating(ub, S),
            "item-based": ib, "item-based-rounded": round_rating(ib, S)}


def rating_rows(model: PNModel, ws: Workspace, test: RatingTable, label: str = "pn") -> list[dict]:
    rows = []
    pred = predict_many(model, test.users, test.items).predicted
    for name, p in [(label, pred), *baseline_predictions(ws, test).items()]:
        rep = rating_metrics(p, test.values)
        # 0/1 error is only meaningful for integer predictions
        zero_one = rep.zero_one if np.issubdtype(np.asarray(p).dtype, np.integer) else math.nan
        rows.append({"method": name, "mae": rep.mae, "zero_one": zero_one, "n": rep.n})
    return rows


def topn_lists(model: PNModel, ws: Workspace, users, cfg: ExperimentConfig, N: int):
    """Ranked lists (length N) per method plus the rating each list entry predicts."""
    rec = Recommender(model, N=max(N, cfg.topn), C=max(cfg.candidates, N), K=cfg.neighbors,
                      mode=cfg.candidate_mode)
    lists = {"pn-maximal-energy": {}, "pn-expected-energy": {}}
    preds = {"pn-maximal-energy": {}, "pn-expected-energy": {}}
    ranked = {}
    for u in users:
        out = rec.recommend_all(u, N)
        ranked[u] = out
        for r, res in out.items():
            lists[f"pn-{r}"][u] = res.items.tolist()
            preds[f"pn-{r}"][u] = dict(zip(res.items.tolist(), res.predicted.tolist()))
    ub_user_sims = ws.user_sims.select(ws.user_sims.counts >= ws.min_co_ratings)
    ub = {u: user_based_topn(u, N, ws.table, ub_user_sims, cfg.neighbors) for u in users}
    qu = np.array([u for u in ub for _ in ub[u]], dtype=np.int64)
    qi = np.array([i for u in ub for i in ub[u]], dtype=np.int64)
    raw = user_based_predict_many(qu, qi, ws.table, ws.means, ws.user_sims)
    lists["user-based"] = ub
    preds["user-based"] = {}
    preds["user-based-raw"] = {}
    for u, i, r in zip(qu.tolist(), qi.tolist(), raw.tolist()):
        preds["user-based"].setdefault(u, {})[i] = round_rating(r, ws.table.scale)
        preds["user-based-raw"].setdefault(u, {})[i] = r
    return lists, preds, ranked


def topn_rows(lists, preds, tests, N: int, alpha: float) -> list[dict]:
    rows = []
    for name in ("user-based", "pn-maximal-energy", "pn-expected-energy"):
        cut = {u: l[:N] for u, l in lists[name].items()}
        rep = expected_utility(cut, tests, alpha, preds[name])
        row = {"method": name, "mae_on_hits": rep.mae_on_hits, "expected_utility": rep.utility,
               "recall": rep.recall, "hits": rep.hits, "n_users": rep.n_users}
        if name == "user-based":
            row["mae_on_hits_raw"] = expected_utility(cut, tests, alpha, preds["user-based-raw"]).mae_on_hits
        rows.append(row)
    return rows


def sweep_rows(lists, preds, tests, N_values, alpha: float) -> list[dict]:
    rows = []
    for name in ("user-based", "pn-expected-energy"):
        for r in recall_sweep(lists[name], tests, N_values, alpha, preds[name]):
            rows.append({"method": name, **r})
    return rows


def evaluate(model: PNModel, ws: Workspace, test: RatingTable, cfg: ExperimentConfig) -> dict:
    """Rating metrics, the top-N table and the recall sweep for a fitted model."""
    t0 = time.perf_counter()
    tests = held_out_sets(test)
    users = sorted(tests)
    N_max = max([cfg.topn, *cfg.recall_n])
    lists, preds, _ = topn_lists(model, ws, users, cfg, N_max)
    out = {
        "fig4_mae.csv": rating_rows(model, ws, test),
        "table1.csv": topn_rows(lists, preds, tests, cfg.topn, cfg.alpha),
        "recall": sweep_rows(lists, preds, tests, cfg.recall_n, cfg.alpha),
    }
    out["seconds"] = time.perf_counter() - t0
    return out


def sparsity(cfg: ExperimentConfig, table: RatingTable, test: RatingTable, attrs: AttributeCatalog) -> list[dict]:
    """Rating MAE of each PN feature set and both rounded baselines on seeded subsamples."""
    rows = []
    for frac in cfg.fractions:
        sub = table.subsample(frac, cfg.seed) if frac < 1 else table
        ws = Workspace(sub, attrs, cfg.min_co_ratings)
        preds = {}
        for spec in cfg.sweep_features:
            model, _ = fit_pn(ws, FeatureConfig.parse(spec), cfg.train_config)
            preds[FeatureConfig.parse(spec).label()] = predict_many(model, test.users, test.items).predicted
        base = baseline_predictions(ws, test)
        preds["user-based-rounded"] = base["user-based-rounded"]
        preds["item-based-rounded"] = base["item-based-rounded"]
        for name, p in preds.items():
            rep = rating_metrics(p, test.values)
            rows.append({"fraction": frac, "method": name, "mae": rep.mae, "zero_one": rep.zero_one,
                         "n_train": len(sub)})
        log.info("fraction %s done", frac)
    return rows


class CheckpointMismatch(ValueError):
    """The checkpoint was trained on a different table or universe."""


def save_checkpoint(model: PNModel, path, cfg: ExperimentConfig) -> None:
    save_parameters(model.params, model.pairs, path,
                    {"features": cfg.features, "scale": cfg.scale, "config_sha256": cfg.digest(),
                     "train_digest": model.table.digest()})


def load_model(path, table: RatingTable, attrs: AttributeCatalog) -> PNModel:
    """Rebuild a fitted model from a checkpoint and the table it was trained on."""
    if not Path(path).is_file() or not Path(str(path) + ".json").is_file():
        raise FileNotFoundError(f"checkpoint {path} (and its .json sidecar) not found; run `train` first")
    params, pairs, meta = load_parameters(path)
    if meta.get("train_digest") != table.digest():
        raise CheckpointMismatch(f"checkpoint {path} was trained on a different training file")
    lay = params.layout
    if lay.n_users < table.n_users or lay.n_items < table.n_items:
        raise CheckpointMismatch(f"checkpoint {path} covers fewer users/items than the training file")
    table = table.with_universe(lay.n_users, lay.n_items)
    return PNModel(table, attrs.resized(lay.n_users, lay.n_items), pairs, params=params,
                   features=FeatureConfig.parse(meta["features"]))
