"""Neighbourhood collaborative-filtering baselines (user-based and item-based)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import MeanStats, RatingTable
from .model import _ragged
from .similarity import PairIndex


@dataclass(frozen=True)
class BaselinePrediction:
    user: int
    item: int
    raw: float
    rounded: int


def round_rating(raw, S: int):
    """Round half up, then clamp to 1..S."""
    r = np.clip(np.floor(np.asarray(raw, dtype=float) + 0.5), 1, S).astype(np.int64)
    return int(r) if r.ndim == 0 else r


def user_based_predict(u: int, i: int, table: RatingTable, means: MeanStats,
                       sims: PairIndex) -> BaselinePrediction:
    """Mean-offset weighted average over other raters of ``i``."""
    base = means.user(u)
    num = den = 0.0
    for k in table.item_positions(i).tolist():
        v = int(table.users[k])
        if v == u:
            continue
        s = sims.value(u, v)
        if s == 0:
            continue
        num += s * (table.values[k] - means.user(v))
        den += abs(s)
    raw = base + num / den if den > 0 else base
    return BaselinePrediction(u, i, raw, round_rating(raw, table.scale))


def item_based_predict(u: int, i: int, table: RatingTable, means: MeanStats,
                       sims: PairIndex) -> BaselinePrediction:
    """Mean-offset weighted average over the other items ``u`` rated."""
    base = means.item(i)
    num = den = 0.0
    sl = table.user_slice(u)
    for j, r in zip(table.items[sl].tolist(), table.values[sl].tolist()):
        if j == i:
            continue
        s = sims.value(i, j)
        num += s * (r - means.item(j))
        den += abs(s)
    raw = base + num / den if den > 0 else base
    return BaselinePrediction(u, i, raw, round_rating(raw, table.scale))


def user_based_predict_many(qu, qi, table: RatingTable, means: MeanStats, sims: PairIndex) -> np.ndarray:
    """Raw user-based predictions for many (user, item) queries."""
    qu = np.asarray(qu, dtype=np.int64)
    qi = np.asarray(qi, dtype=np.int64)
    ok = qi <= table.n_items
    lens = np.where(ok, table.item_counts[np.minimum(qi, table.n_items)], 0)
    owner, opos = _ragged(table.item_ptr[np.minimum(qi, table.n_items)], lens)
    pos = table.item_order[opos]
    v = table.users[pos]
    k = sims.lookup(qu[owner], v)
    s = np.where(k >= 0, sims.values[np.maximum(k, 0)], 0.0)
    dev = table.values[pos] - means.user_mean[v]
    num = np.bincount(owner, weights=s * dev, minlength=len(qu))
    den = np.bincount(owner, weights=np.abs(s), minlength=len(qu))
    base = np.where(qu < len(means.user_mean), means.user_mean[np.minimum(qu, len(means.user_mean) - 1)],
                    means.global_mean)
    return np.where(den > 0, base + num / np.where(den > 0, den, 1.0), base)


def item_based_predict_many(qu, qi, table: RatingTable, means: MeanStats, sims: PairIndex) -> np.ndarray:
    """Raw item-based predictions for many (user, item) queries."""
    qu = np.asarray(qu, dtype=np.int64)
    qi = np.asarray(qi, dtype=np.int64)
    lens = np.where(qu <= table.n_users, table.user_counts[np.minimum(qu, table.n_users)], 0)
    owner, pos = _ragged(table.user_ptr[np.minimum(qu, table.n_users)], lens)
    j = table.items[pos]
    k = sims.lookup(qi[owner], j)
    s = np.where(k >= 0, sims.values[np.maximum(k, 0)], 0.0)
    dev = table.values[pos] - means.item_mean[j]
    num = np.bincount(owner, weights=s * dev, minlength=len(qu))
    den = np.bincount(owner, weights=np.abs(s), minlength=len(qu))
    base = np.where(qi < len(means.item_mean), means.item_mean[np.minimum(qi, len(means.item_mean) - 1)],
                    means.global_mean)
    return np.where(den > 0, base + num / np.where(den > 0, den, 1.0), base)


def popular_unseen(u: int, table: RatingTable, n: int | None = None) -> np.ndarray:
    """Items ``u`` has not rated, most-rated first (ties by id)."""
    items = np.arange(1, table.n_items + 1)
    counts = table.item_counts[1:]
    mask = counts > 0
    mask[table.items_of(u) - 1] = False
    items, counts = items[mask], counts[mask]
    order = np.lexsort((items, -counts))
    return items[order][:n]


def user_based_topn(u: int, N: int, table: RatingTable, sims: PairIndex, K: int = 100) -> list[int]:
    """Rank unseen items by how many of the K best positively correlated users rated them."""
    partners, pos = sims.neighbors(u)
    s = sims.values[pos]
    keep = s > 0
    partners, s = partners[keep], s[keep]
    if len(partners) == 0:
        return popular_unseen(u, table, N).tolist()
    top = partners[np.lexsort((partners, -s))][:K]
    cand = np.concatenate([table.items_of(int(v)) for v in top])
    items, counts = np.unique(cand, return_counts=True)
    unseen = ~np.isin(items, table.items_of(u))
    items, counts = items[unseen], counts[unseen]
    # ties: overall popularity, then id
    order = np.lexsort((items, -table.item_counts[items], -counts))
    return items[order][:N].tolist()
