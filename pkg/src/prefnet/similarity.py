"""User-user Pearson and item-item adjusted-cosine similarities, and pair selection."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import MeanStats, RatingTable

# a single shared rating cannot support a correlation; such pairs score 0
MIN_SUPPORT = 2


def pearson_user_similarity(table: RatingTable, means: MeanStats, u: int, v: int) -> float:
    """Pearson correlation of two users over their co-rated items (0 if degenerate)."""
    if u == v:
        raise ValueError("similarity of a user with itself is undefined here")
    ru = dict(zip(table.items_of(u).tolist(), table.values[table.user_slice(u)].tolist()))
    rv = dict(zip(table.items_of(v).tolist(), table.values[table.user_slice(v)].tolist()))
    common = ru.keys() & rv.keys()
    mu, mv = means.user(u), means.user(v)
    num = sum((ru[i] - mu) * (rv[i] - mv) for i in common)
    su = sum((ru[i] - mu) ** 2 for i in common)
    sv = sum((rv[i] - mv) ** 2 for i in common)
    if len(common) < MIN_SUPPORT or su == 0 or sv == 0:
        return 0.0
    return num / (math.sqrt(su) * math.sqrt(sv))


def adjusted_cosine_item_similarity(table: RatingTable, means: MeanStats, i: int, j: int) -> float:
    """Cosine of user-mean-centred rating vectors over users who rated both items."""
    if i == j:
        raise ValueError("similarity of an item with itself is undefined here")
    ri = {int(table.users[k]): int(table.values[k]) for k in table.item_positions(i)}
    rj = {int(table.users[k]): int(table.values[k]) for k in table.item_positions(j)}
    common = ri.keys() & rj.keys()
    num = sum((ri[u] - means.user(u)) * (rj[u] - means.user(u)) for u in common)
    si = sum((ri[u] - means.user(u)) ** 2 for u in common)
    sj = sum((rj[u] - means.user(u)) ** 2 for u in common)
    if len(common) < MIN_SUPPORT or si == 0 or sj == 0:
        return 0.0
    return num / (math.sqrt(si) * math.sqrt(sj))


class PairIndex:
    """Unordered id pairs stored once as ``a < b``, sorted by key.

    ``lookup`` maps (x, y) in either order to the pair's position, or -1.
    Positions are stable and double as parameter offsets.
    """

    def __init__(self, a, b, n: int, values=None, counts=None):
        a = np.asarray(a, dtype=np.int64)
        b = np.asarray(b, dtype=np.int64)
        lo, hi = np.minimum(a, b), np.maximum(a, b)
        if np.any(lo == hi):
            raise ValueError("self pairs are not allowed")
        self.n = int(n)
        keys = lo * (self.n + 1) + hi
        order = np.argsort(keys, kind="stable")
        self.keys = keys[order]
        if len(self.keys) > 1 and np.any(np.diff(self.keys) == 0):
            raise ValueError("duplicate pair")
        self.a, self.b = lo[order], hi[order]
        self.values = None if values is None else np.asarray(values, dtype=float)[order]
        self.counts = None if counts is None else np.asarray(counts, dtype=np.int64)[order]
        self._adj = None

    def __len__(self) -> int:
        return len(self.keys)

    def __contains__(self, pair) -> bool:
        return self.lookup(np.array([pair[0]]), np.array([pair[1]]))[0] >= 0

    def pairs(self) -> set[tuple[int, int]]:
        return set(zip(self.a.tolist(), self.b.tolist()))

    def lookup(self, x, y) -> np.ndarray:
        x = np.asarray(x, dtype=np.int64)
        y = np.asarray(y, dtype=np.int64)
        keys = np.minimum(x, y) * (self.n + 1) + np.maximum(x, y)
        if len(self.keys) == 0:
            return np.full(keys.shape, -1, dtype=np.int64)
        pos = np.searchsorted(self.keys, keys)
        pos_c = np.minimum(pos, len(self.keys) - 1)
        found = (self.keys[pos_c] == keys) & (x != y)
        return np.where(found, pos_c, -1)

    def value(self, x: int, y: int, default: float = 0.0) -> float:
        k = int(self.lookup(np.array([x]), np.array([y]))[0])
        return default if k < 0 or self.values is None else float(self.values[k])

    def neighbors(self, x: int) -> tuple[np.ndarray, np.ndarray]:
        """(partner ids, pair positions) of every pair containing ``x``."""
        if self._adj is None:
            ends = np.concatenate((self.a, self.b))
            partners = np.concatenate((self.b, self.a))
            pos = np.concatenate((np.arange(len(self)), np.arange(len(self))))
            order = np.lexsort((partners, ends))
            ptr = np.concatenate(([0], np.cumsum(np.bincount(ends, minlength=self.n + 1))))
            self._adj = (ptr, partners[order], pos[order])
        ptr, partners, pos = self._adj
        if x > self.n:
            return partners[:0], pos[:0]
        return partners[ptr[x]:ptr[x + 1]], pos[ptr[x]:ptr[x + 1]]

    def select(self, mask: np.ndarray) -> "PairIndex":
        return PairIndex(self.a[mask], self.b[mask], self.n,
                         None if self.values is None else self.values[mask],
                         None if self.counts is None else self.counts[mask])


def _ragged_pairs(ptr: np.ndarray, members: np.ndarray, dev: np.ndarray, n: int, chunk: int = 4_000_000):
    """Accumulate centred cross products for every pair co-occurring in a group.

    Groups are the CSR segments ``members[ptr[g]:ptr[g+1]]`` with matching
    deviations in ``dev``.  Returns unique (a, b), a < b, with summed
    d_a*d_b, d_a^2, d_b^2 and the number of shared groups.
    """
    sizes = np.diff(ptr)
    parts = []
    batch, load = [], 0
    for g in np.flatnonzero(sizes > 1):
        batch.append(g)
        load += sizes[g] * (sizes[g] - 1) // 2
        if load >= chunk:
            parts.append(_pairs_for_groups(ptr, members, dev, n, batch))
            batch, load = [], 0
    if batch:
        parts.append(_pairs_for_groups(ptr, members, dev, n, batch))
    if not parts:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64), np.zeros((0, 4))
    keys, stats = _reduce(np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts]))
    return keys // (n + 1), keys % (n + 1), stats


def _reduce(keys, stats):
    uniq, inv = np.unique(keys, return_inverse=True)
    red = np.stack([np.bincount(inv, weights=stats[:, c], minlength=len(uniq))
                    for c in range(stats.shape[1])], axis=1)
    return uniq, red


def _pairs_for_groups(ptr, members, dev, n, groups):
    keys, stats = [], []
    for g in groups:
        m = members[ptr[g]:ptr[g + 1]]
        d = dev[ptr[g]:ptr[g + 1]]
        ia, ib = np.triu_indices(len(m), k=1)
        a, b, da, db = m[ia], m[ib], d[ia], d[ib]
        swap = a > b
        a, b = np.where(swap, b, a), np.where(swap, a, b)
        da, db = np.where(swap, db, da), np.where(swap, da, db)
        keys.append(a * (n + 1) + b)
        stats.append(np.stack([da * db, da * da, db * db, np.ones_like(da)], axis=1))
    return _reduce(np.concatenate(keys), np.concatenate(stats))


def _finish(a, b, stats, n) -> PairIndex:
    num, sa, sb, cnt = stats.T
    den = np.sqrt(sa) * np.sqrt(sb)
    with np.errstate(invalid="ignore", divide="ignore"):
        sim = np.where((den > 0) & (cnt >= MIN_SUPPORT), num / np.where(den > 0, den, 1.0), 0.0)
    return PairIndex(a, b, n, np.clip(sim, -1.0, 1.0), cnt.astype(np.int64))


def user_similarities(table: RatingTable, means: MeanStats) -> PairIndex:
    """Pearson similarity for every pair of users sharing at least one item."""
    pos = table.item_order
    dev = table.values[pos] - means.user_mean[table.users[pos]]
    a, b, stats = _ragged_pairs(table.item_ptr, table.users[pos], dev, table.n_users)
    return _finish(a, b, stats, table.n_users)


def item_similarities(table: RatingTable, means: MeanStats) -> PairIndex:
    """Adjusted-cosine similarity for every pair of items sharing at least one rater."""
    dev = table.values - means.user_mean[table.users]
    a, b, stats = _ragged_pairs(table.user_ptr, table.items, dev, table.n_items)
    return _finish(a, b, stats, table.n_items)


@dataclass
class SelectedPairs:
    """Positively correlated pairs that carry correlation features."""

    user_pairs: PairIndex
    item_pairs: PairIndex
    min_co_ratings: int = 2

    @classmethod
    def empty(cls, n_users: int, n_items: int) -> "SelectedPairs":
        z = np.zeros(0, dtype=np.int64)
        return cls(PairIndex(z, z, n_users, z.astype(float), z), PairIndex(z, z, n_items, z.astype(float), z))


def select_positive(sims: PairIndex, min_co_ratings: int) -> PairIndex:
    return sims.select((sims.counts >= min_co_ratings) & (sims.values > 0))


def select_positive_pairs(table: RatingTable, means: MeanStats, min_co_ratings: int = 2,
                          user_sims: PairIndex | None = None,
                          item_sims: PairIndex | None = None) -> SelectedPairs:
    if min_co_ratings < 1:
        raise ValueError("min_co_ratings must be >= 1")
    user_sims = user_sims if user_sims is not None else user_similarities(table, means)
    item_sims = item_sims if item_sims is not None else item_similarities(table, means)
    return SelectedPairs(select_positive(user_sims, min_co_ratings),
                         select_positive(item_sims, min_co_ratings), min_co_ratings)


def save_pairs(pairs: SelectedPairs, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["kind", "a", "b", "similarity", "co_ratings"])
        w.writerow(["#", pairs.user_pairs.n, pairs.item_pairs.n, pairs.min_co_ratings, ""])
        for kind, idx in (("user", pairs.user_pairs), ("item", pairs.item_pairs)):
            for a, b, s, c in zip(idx.a.tolist(), idx.b.tolist(), idx.values.tolist(), idx.counts.tolist()):
                w.writerow([kind, a, b, repr(s), c])


def load_pairs(path) -> SelectedPairs:
    rows = {"user": [], "item": []}
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        next(r)
        _, n_u, n_i, min_co, _ = next(r)
        for kind, a, b, s, c in r:
            rows[kind].append((int(a), int(b), float(s), int(c)))

    def build(items, n):
        arr = np.array(items, dtype=object).reshape(-1, 4)
        return PairIndex(arr[:, 0].astype(np.int64), arr[:, 1].astype(np.int64), n,
                         arr[:, 2].astype(float), arr[:, 3].astype(np.int64))

    return SelectedPairs(build(rows["user"], int(n_u)), build(rows["item"], int(n_i)), int(min_co))


def cached_pairs(table: RatingTable, means: MeanStats, min_co_ratings: int, cache_dir) -> SelectedPairs:
    """``select_positive_pairs`` memoised on disk by training-table digest."""
    path = Path(cache_dir) / f"pairs-{table.digest()}-{min_co_ratings}.csv"
    if path.exists():
        return load_pairs(path)
    pairs = select_positive_pairs(table, means, min_co_ratings)
    path.parent.mkdir(parents=True, exist_ok=True)
    save_pairs(pairs, path)
    return pairs
