"""MovieLens-format ingestion: ratings, user/item attributes and rating means."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

AGE_BUCKETS = ("under 18", "18-24", "25-34", "35-44", "45-49", "50-55", "56+")
# lower bound of each bucket, in years
AGE_EDGES = (18, 25, 35, 45, 50, 56)
SEXES = ("M", "F")
OCCUPATIONS = (
    "administrator", "artist", "doctor", "educator", "engineer", "entertainment",
    "executive", "healthcare", "homemaker", "lawyer", "librarian", "marketing",
    "none", "other", "programmer", "retired", "salesman", "scientist", "student",
    "technician", "writer",
)
GENRES = (
    "unknown", "action", "adventure", "animation", "children", "comedy", "crime",
    "documentary", "drama", "fantasy", "film-noir", "horror", "musical", "mystery",
    "romance", "sci-fi", "thriller", "war", "western",
)
USER_DIM = len(AGE_BUCKETS) + len(SEXES) + len(OCCUPATIONS)
ITEM_DIM = len(GENRES)


class ParseError(ValueError):
    """A line of an input file could not be parsed."""

    def __init__(self, path, lineno: int, msg: str):
        super().__init__(f"{path}:{lineno}: {msg}")
        self.path = path
        self.lineno = lineno


class ValidationError(ValueError):
    """Parsed values are outside their allowed domain."""


@dataclass(frozen=True)
class Rating:
    user: int
    item: int
    value: int


class RatingTable:
    """Sparse (user, item, rating) triples with per-user and per-item indexes.

    Triples are stored sorted by (user, item).  Ids are positive integers and
    index dense arrays directly, so ``n_users``/``n_items`` are the largest
    admissible ids (arrays have one unused slot at 0).
    """

    def __init__(self, users, items, values, scale: int = 5,
                 n_users: int | None = None, n_items: int | None = None):
        users = np.asarray(users, dtype=np.int64).ravel()
        items = np.asarray(items, dtype=np.int64).ravel()
        values = np.asarray(values, dtype=np.int64).ravel()
        if not (len(users) == len(items) == len(values)):
            raise ValueError("users, items and values must have equal length")
        if scale < 2:
            raise ValueError("rating scale must be at least 2")
        if len(values) and (values.min() < 1 or values.max() > scale):
            bad = values[(values < 1) | (values > scale)][0]
            raise ValidationError(f"rating {bad} outside 1..{scale}")
        if len(users) and (users.min() < 1 or items.min() < 1):
            raise ValidationError("user and item ids must be positive")

        order = np.lexsort((items, users))
        self.users = users[order]
        self.items = items[order]
        self.values = values[order]
        self.scale = int(scale)
        self.n_users = int(max(n_users or 0, self.users.max(initial=0)))
        self.n_items = int(max(n_items or 0, self.items.max(initial=0)))

        if len(self.users) > 1:
            dup = (np.diff(self.users) == 0) & (np.diff(self.items) == 0)
            if dup.any():
                k = int(np.flatnonzero(dup)[0])
                raise ValidationError(f"duplicate rating for user {self.users[k]}, item {self.items[k]}")

        self.user_counts = np.bincount(self.users, minlength=self.n_users + 1)
        self.item_counts = np.bincount(self.items, minlength=self.n_items + 1)
        self.user_ptr = np.concatenate(([0], np.cumsum(self.user_counts)))
        # positions into the (user, item)-sorted arrays, grouped by item
        self.item_order = np.lexsort((self.users, self.items))
        self.item_ptr = np.concatenate(([0], np.cumsum(self.item_counts)))

    @classmethod
    def from_ratings(cls, ratings: Iterable[Rating], scale: int = 5, **kw) -> "RatingTable":
        ratings = list(ratings)
        return cls([r.user for r in ratings], [r.item for r in ratings],
                   [r.value for r in ratings], scale=scale, **kw)

    def __len__(self) -> int:
        return len(self.values)

    def __iter__(self) -> Iterator[Rating]:
        for u, i, r in zip(self.users.tolist(), self.items.tolist(), self.values.tolist()):
            yield Rating(u, i, r)

    def __eq__(self, other) -> bool:
        if not isinstance(other, RatingTable):
            return NotImplemented
        return (self.scale == other.scale
                and np.array_equal(self.users, other.users)
                and np.array_equal(self.items, other.items)
                and np.array_equal(self.values, other.values))

    def user_slice(self, u: int) -> slice:
        if u > self.n_users:
            return slice(0, 0)
        return slice(int(self.user_ptr[u]), int(self.user_ptr[u + 1]))

    def item_positions(self, i: int) -> np.ndarray:
        if i > self.n_items:
            return self.item_order[:0]
        return self.item_order[self.item_ptr[i]:self.item_ptr[i + 1]]

    def items_of(self, u: int) -> np.ndarray:
        return self.items[self.user_slice(u)]

    def users_of(self, i: int) -> np.ndarray:
        return self.users[self.item_positions(i)]

    @property
    def by_user(self) -> dict[int, list[int]]:
        return {int(u): self.items_of(u).tolist() for u in np.flatnonzero(self.user_counts)}

    @property
    def by_item(self) -> dict[int, list[int]]:
        return {int(i): self.users_of(i).tolist() for i in np.flatnonzero(self.item_counts)}

    def position(self, u: int, i: int) -> int:
        """Index of rating (u, i) in the sorted arrays, or -1."""
        sl = self.user_slice(u)
        k = sl.start + int(np.searchsorted(self.items[sl], i))
        if k < sl.stop and self.items[k] == i:
            return k
        return -1

    def rating(self, u: int, i: int) -> int | None:
        k = self.position(u, i)
        return None if k < 0 else int(self.values[k])

    def dense(self) -> np.ndarray:
        """Dense (n_users+1) x (n_items+1) matrix with 0 for missing entries."""
        m = np.zeros((self.n_users + 1, self.n_items + 1), dtype=np.int64)
        m[self.users, self.items] = self.values
        return m

    def subset(self, mask: np.ndarray) -> "RatingTable":
        return RatingTable(self.users[mask], self.items[mask], self.values[mask],
                           scale=self.scale, n_users=self.n_users, n_items=self.n_items)

    def subsample(self, fraction: float, seed: int) -> "RatingTable":
        """Uniformly keep ``round(fraction * len)`` ratings (seeded)."""
        if not 0 < fraction <= 1:
            raise ValueError("fraction must lie in (0, 1]")
        if fraction == 1:
            return self
        rng = np.random.default_rng(seed)
        keep = rng.choice(len(self), size=int(round(fraction * len(self))), replace=False)
        mask = np.zeros(len(self), dtype=bool)
        mask[keep] = True
        return self.subset(mask)

    def with_universe(self, n_users: int, n_items: int) -> "RatingTable":
        return RatingTable(self.users, self.items, self.values, scale=self.scale,
                           n_users=n_users, n_items=n_items)

    def digest(self) -> str:
        h = hashlib.sha256()
        for arr in (self.users, self.items, self.values):
            h.update(np.ascontiguousarray(arr, dtype="<i8").tobytes())
        return h.hexdigest()[:16]


@dataclass
class AttributeCatalog:
    """Binary attribute vectors, rows indexed by user/item id (row 0 unused)."""

    user_vec: np.ndarray
    item_vec: np.ndarray
    user_labels: tuple[str, ...] = field(default=tuple(AGE_BUCKETS) + SEXES + OCCUPATIONS)
    item_labels: tuple[str, ...] = field(default=GENRES)

    @property
    def n_users(self) -> int:
        return self.user_vec.shape[0] - 1

    @property
    def n_items(self) -> int:
        return self.item_vec.shape[0] - 1

    @classmethod
    def empty(cls, n_users: int, n_items: int) -> "AttributeCatalog":
        return cls(np.zeros((n_users + 1, USER_DIM)), np.zeros((n_items + 1, ITEM_DIM)))

    def resized(self, n_users: int, n_items: int) -> "AttributeCatalog":
        uv = np.zeros((max(n_users, self.n_users) + 1, self.user_vec.shape[1]))
        iv = np.zeros((max(n_items, self.n_items) + 1, self.item_vec.shape[1]))
        uv[:self.user_vec.shape[0]] = self.user_vec
        iv[:self.item_vec.shape[0]] = self.item_vec
        return AttributeCatalog(uv, iv, self.user_labels, self.item_labels)


@dataclass
class MeanStats:
    """Per-user, per-item and global rating means.

    ``user_mean``/``item_mean`` are dense arrays indexed by id; ids without
    ratings hold the global mean (the fallback) and a zero count.
    """

    user_mean: np.ndarray
    item_mean: np.ndarray
    global_mean: float
    user_count: np.ndarray
    item_count: np.ndarray

    def user(self, u: int) -> float:
        return float(self.user_mean[u]) if u < len(self.user_mean) else self.global_mean

    def item(self, i: int) -> float:
        return float(self.item_mean[i]) if i < len(self.item_mean) else self.global_mean

    def seen_user(self, u: int) -> bool:
        return u < len(self.user_count) and self.user_count[u] > 0

    def seen_item(self, i: int) -> bool:
        return i < len(self.item_count) and self.item_count[i] > 0


def compute_means(table: RatingTable) -> MeanStats:
    if len(table) == 0:
        raise ValueError("cannot compute means of an empty table")
    g = float(table.values.mean())
    sums_u = np.bincount(table.users, weights=table.values, minlength=table.n_users + 1)
    sums_i = np.bincount(table.items, weights=table.values, minlength=table.n_items + 1)
    cu, ci = table.user_counts, table.item_counts
    with np.errstate(invalid="ignore", divide="ignore"):
        um = np.where(cu > 0, sums_u / np.maximum(cu, 1), g)
        im = np.where(ci > 0, sums_i / np.maximum(ci, 1), g)
    return MeanStats(um, im, g, cu.copy(), ci.copy())


def encode_user_attributes(age: int, sex: str, occupation: str) -> np.ndarray:
    """30-dim indicator vector: 7 age buckets, 2 sexes, 21 occupations."""
    if age < 0:
        raise ValidationError(f"negative age {age}")
    sex = sex.strip().upper()
    occupation = occupation.strip().lower()
    if sex not in SEXES:
        raise ValidationError(f"unknown sex {sex!r}")
    if occupation not in OCCUPATIONS:
        raise ValidationError(f"unknown occupation {occupation!r}")
    vec = np.zeros(USER_DIM)
    vec[int(np.searchsorted(AGE_EDGES, age, side="right"))] = 1
    vec[len(AGE_BUCKETS) + SEXES.index(sex)] = 1
    vec[len(AGE_BUCKETS) + len(SEXES) + OCCUPATIONS.index(occupation)] = 1
    return vec


def load_ratings(path, scale: int = 5) -> RatingTable:
    """Read ``user<TAB>item<TAB>rating<TAB>timestamp`` lines."""
    users, items, values = [], [], []
    with open(path, "rb") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line:
                continue
            parts = line.split(b"\t")
            if len(parts) < 3:
                raise ParseError(path, lineno, f"expected 4 tab-separated fields, got {len(parts)}")
            try:
                u, i, r = int(parts[0]), int(parts[1]), int(parts[2])
            except ValueError:
                raise ParseError(path, lineno, "non-integer field") from None
            if not 1 <= r <= scale:
                raise ValidationError(f"{path}:{lineno}: rating {r} outside 1..{scale}")
            users.append(u)
            items.append(i)
            values.append(r)
    return RatingTable(users, items, values, scale=scale)


def load_users(path) -> dict[int, np.ndarray]:
    out = {}
    with open(path, "rb") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip().decode("latin-1")
            if not line:
                continue
            parts = line.split("|")
            if len(parts) < 4:
                raise ParseError(path, lineno, "expected id|age|gender|occupation|zip")
            try:
                uid, age = int(parts[0]), int(parts[1])
            except ValueError:
                raise ParseError(path, lineno, "non-integer id or age") from None
            try:
                out[uid] = encode_user_attributes(age, parts[2], parts[3])
            except ValidationError as exc:
                raise ValidationError(f"{path}:{lineno}: {exc}") from None
    return out


def load_items(path) -> dict[int, np.ndarray]:
    out = {}
    with open(path, "rb") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.rstrip(b"\r\n").decode("latin-1")
            if not line.strip():
                continue
            parts = line.split("|")
            if len(parts) < 1 + ITEM_DIM:
                raise ParseError(path, lineno, f"expected {ITEM_DIM} trailing genre flags")
            try:
                iid = int(parts[0])
                flags = [int(x) for x in parts[-ITEM_DIM:]]
            except ValueError:
                raise ParseError(path, lineno, "non-integer id or genre flag") from None
            if any(f not in (0, 1) for f in flags):
                raise ValidationError(f"{path}:{lineno}: genre flags must be 0 or 1")
            out[iid] = np.asarray(flags, dtype=float)
    return out


def build_catalog(users: dict[int, np.ndarray], items: dict[int, np.ndarray],
                  n_users: int = 0, n_items: int = 0) -> AttributeCatalog:
    n_users = max([n_users, *users.keys()])
    n_items = max([n_items, *items.keys()])
    cat = AttributeCatalog.empty(n_users, n_items)
    for u, v in users.items():
        cat.user_vec[u] = v
    for i, v in items.items():
        cat.item_vec[i] = v
    return cat


def load_dataset(ratings_path, users_path, items_path, scale: int = 5) -> tuple[RatingTable, AttributeCatalog]:
    table = load_ratings(ratings_path, scale)
    users, items = load_users(users_path), load_items(items_path)
    for u in np.flatnonzero(table.user_counts).tolist():
        if u not in users:
            raise ValidationError(f"user {u} has ratings but no attribute record")
    for i in np.flatnonzero(table.item_counts).tolist():
        if i not in items:
            raise ValidationError(f"item {i} has ratings but no attribute record")
    cat = build_catalog(users, items, table.n_users, table.n_items)
    return table.with_universe(cat.n_users, cat.n_items), cat


def write_ratings(table: RatingTable, path) -> None:
    """Serialise in the tab-separated MovieLens layout (timestamp written as 0)."""
    with open(path, "w") as fh:
        for u, i, r in zip(table.users.tolist(), table.items.tolist(), table.values.tolist()):
            fh.write(f"{u}\t{i}\t{r}\t0\n")


def align(tables: Sequence[RatingTable], catalog: AttributeCatalog):
    """Give every table (and the catalog) one shared id universe."""
    n_u = max([catalog.n_users, *(t.n_users for t in tables)])
    n_i = max([catalog.n_items, *(t.n_items for t in tables)])
    return [t.with_universe(n_u, n_i) for t in tables], catalog.resized(n_u, n_i)
