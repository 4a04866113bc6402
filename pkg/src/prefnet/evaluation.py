"""Rating-prediction and top-N metrics, recall and sparsity sweeps, report files."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .data import RatingTable

REPORT_SCHEMA_VERSION = 1
REPORT_COLUMNS = {
    "table1.csv": ["method", "mae_on_hits", "mae_on_hits_raw", "expected_utility", "recall", "hits", "n_users"],
    "fig4_mae.csv": ["method", "mae", "zero_one", "n"],
    "fig5_mae_vs_size.csv": ["fraction", "method", "mae", "zero_one", "n_train"],
    "fig6_utility_vs_recall.csv": ["method", "N", "recall", "expected_utility"],
    "fig7_maehits_vs_recall.csv": ["method", "N", "recall", "mae_on_hits"],
}


@dataclass
class MetricReport:
    mae: float
    zero_one: float
    n: int

    @property
    def empty(self) -> bool:
        return self.n == 0


def rating_metrics(predictions, truths) -> MetricReport:
    """Mean absolute error and mean 0/1 error of aligned integer ratings."""
    p = np.asarray(predictions)
    t = np.asarray(truths)
    if p.shape != t.shape:
        raise ValueError("predictions and truths must be aligned")
    if p.size == 0:
        return MetricReport(math.nan, math.nan, 0)
    return MetricReport(float(np.abs(p - t).mean()), float((p != t).mean()), int(p.size))


def halflife_weight(j, alpha: float = 5.0):
    """Utility of a hit at 1-based rank j with viewing halflife alpha."""
    if alpha <= 1:
        raise ValueError("halflife must exceed 1")
    return 2.0 ** (-(np.asarray(j, dtype=float) - 1) / (alpha - 1))


@dataclass
class UtilityReport:
    utility: float  # 100 * sum R_u / sum R_u^max
    per_user: dict = field(default_factory=dict)  # u -> (R_u, R_u^max)
    alpha: float = 5.0
    hits: int = 0
    recall: float = 0.0
    mae_on_hits: float = math.nan
    n_users: int = 0


def held_out_sets(table: RatingTable) -> dict[int, dict[int, int]]:
    out: dict[int, dict[int, int]] = {}
    for u, i, r in zip(table.users.tolist(), table.items.tolist(), table.values.tolist()):
        out.setdefault(u, {})[i] = r
    return out


def expected_utility(recommendations: Mapping[int, Sequence[int]], tests: Mapping[int, Mapping[int, int]],
                     alpha: float = 5.0,
                     predictions: Mapping[int, Mapping[int, float]] | None = None) -> UtilityReport:
    """Halflife utility of ranked lists against each user's held-out items.

    Every user with test items counts towards the ideal utility, whether or
    not they received a list.  ``predictions[u][i]`` (when given) feeds the
    MAE over hits.
    """
    per_user = {}
    num = den = 0.0
    hits = covered = 0
    errors = []
    for u, truth in tests.items():
        if not truth:
            continue
        ideal = float(halflife_weight(np.arange(1, len(truth) + 1), alpha).sum())
        ranked = list(recommendations.get(u, ()))
        ranks = [j for j, item in enumerate(ranked, 1) if item in truth]
        got = float(halflife_weight(np.array(ranks), alpha).sum()) if ranks else 0.0
        per_user[u] = (got, ideal)
        num += got
        den += ideal
        if ranked:
            covered += len(truth)
        hits += len(ranks)
        if predictions is not None:
            errors.extend(abs(predictions[u][ranked[j - 1]] - truth[ranked[j - 1]]) for j in ranks)
    return UtilityReport(
        utility=100.0 * num / den if den > 0 else 0.0,
        per_user=per_user, alpha=alpha, hits=hits,
        recall=hits / covered if covered else 0.0,
        mae_on_hits=float(np.mean(errors)) if errors else math.nan,
        n_users=len(per_user),
    )


def recall_sweep(rank_lists: Mapping[int, Sequence[int]], tests, N_values: Sequence[int], alpha: float = 5.0,
                 predictions=None) -> list[dict]:
    """Truncate each user's full ranking at every N and score it.

    ``rank_lists`` hold rankings at least as long as ``max(N_values)``;
    prefixes of a ranking are the top-N lists for smaller N.
    """
    if list(N_values) != sorted(N_values):
        raise ValueError("N values must be ascending")
    rows = []
    for N in N_values:
        lists = {u: list(items)[:N] for u, items in rank_lists.items()}
        rep = expected_utility(lists, tests, alpha, predictions)
        rows.append({"N": N, "recall": rep.recall, "expected_utility": rep.utility,
                     "mae_on_hits": rep.mae_on_hits, "hits": rep.hits})
    return rows


def sparsity_sweep(fractions: Sequence[float], methods: Mapping[str, Callable[[RatingTable], np.ndarray]],
                   train: RatingTable, test: RatingTable, seed: int = 0) -> list[dict]:
    """Retrain every method on seeded subsamples of ``train``; score on the fixed ``test``.

    Each method maps a training table to integer predictions aligned with
    ``test``.
    """
    rows = []
    for frac in fractions:
        sub = train.subsample(frac, seed)
        for name, fit_predict in methods.items():
            rep = rating_metrics(fit_predict(sub), test.values)
            rows.append({"fraction": frac, "method": name, "mae": rep.mae, "zero_one": rep.zero_one,
                         "n_train": len(sub)})
    return rows


def write_report(out_dir, name: str, rows: list[dict]) -> Path:
    """Write one report CSV with its fixed column set (plus a version comment line)."""
    cols = REPORT_COLUMNS[name]
    path = Path(out_dir) / name
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(f"# schema {REPORT_SCHEMA_VERSION}\n")
        w = csv.DictWriter(fh, fieldnames=cols, extrasaction="ignore", lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: _fmt(row.get(k)) for k in cols})
    return path


def read_report(path) -> list[dict]:
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def write_summary(out_dir, summary: dict) -> Path:
    path = Path(out_dir) / "summary.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(summary, indent=2, sort_keys=True, default=_jsonable) + "\n")
    return path


def _fmt(v):
    if isinstance(v, float):
        return "" if math.isnan(v) else f"{v:.6f}"
    return v


def _jsonable(v):
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, np.ndarray):
        return v.tolist()
    raise TypeError(type(v))
