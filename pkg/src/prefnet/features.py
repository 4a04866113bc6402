"""Feature functions and the blocked parameter vector."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .data import AttributeCatalog, MeanStats
from .similarity import PairIndex, SelectedPairs

BLOCKS = ("item_identity", "user_identity", "content_item", "content_user", "item_pair", "user_pair")
FORMAT_VERSION = 1


def g(alpha, S: int):
    """Normalised closeness 1 - alpha/(S-1); equals 1 at zero deviation."""
    if S < 2:
        raise ValueError("S must be at least 2")
    return 1.0 - alpha / (S - 1)


@dataclass(frozen=True)
class FeatureConfig:
    identity: bool = True
    content: bool = True
    correlation: bool = True
    # collapse per-user / per-item identity weights into two global weights
    tied_identity: bool = False

    def __post_init__(self):
        if not (self.identity or self.content or self.correlation):
            raise ValueError("at least one feature group must be enabled")

    @classmethod
    def parse(cls, spec: str, tied_identity: bool = False) -> "FeatureConfig":
        names = {s.strip().lower() for s in spec.split(",") if s.strip()}
        unknown = names - {"identity", "content", "correlation"}
        if unknown:
            raise ValueError(f"unknown feature group(s): {', '.join(sorted(unknown))}")
        return cls("identity" in names, "content" in names, "correlation" in names, tied_identity)

    def label(self) -> str:
        parts = [n for n in ("content", "identity", "correlation") if getattr(self, n)]
        return "+".join(parts)


@dataclass
class NodeFeatureValue:
    item_specific: float
    user_specific: float
    content_item: np.ndarray
    content_user: np.ndarray


def node_features(r: int, u: int, i: int, means: MeanStats, attrs: AttributeCatalog, S: int) -> NodeFeatureValue:
    fi = g(abs(r - means.item(i)), S)
    fu = g(abs(r - means.user(u)), S)
    return NodeFeatureValue(fi, fu, attrs.item_vec[i] * fu, attrs.user_vec[u] * fi)


def edge_feature(kind: str, r1: int, r2: int, mean1: float, mean2: float, S: int) -> float:
    """Closeness of two mean-offset ratings.

    ``kind`` is "item" (same user, two items; item means) or "user" (same
    item, two users; user means).  The formula is the same for both.
    """
    if kind not in ("item", "user"):
        raise ValueError(f"unknown edge kind {kind!r}")
    return g(abs((r1 - mean1) - (r2 - mean2)), S)


@dataclass
class ParameterLayout:
    n_users: int
    n_items: int
    user_dim: int
    item_dim: int
    n_user_pairs: int
    n_item_pairs: int
    tied_identity: bool = False
    sizes: dict = field(init=False)
    offsets: dict = field(init=False)

    def __post_init__(self):
        self.sizes = {
            "item_identity": 1 if self.tied_identity else self.n_items + 1,
            "user_identity": 1 if self.tied_identity else self.n_users + 1,
            "content_item": self.item_dim,
            "content_user": self.user_dim,
            "item_pair": self.n_item_pairs,
            "user_pair": self.n_user_pairs,
        }
        self.offsets = {}
        off = 0
        for name in BLOCKS:
            self.offsets[name] = off
            off += self.sizes[name]
        self.total = off

    def slice(self, name: str) -> slice:
        return slice(self.offsets[name], self.offsets[name] + self.sizes[name])

    def block_of(self, index: int) -> str:
        for name in BLOCKS:
            sl = self.slice(name)
            if sl.start <= index < sl.stop:
                return name
        raise IndexError(index)


class ParameterVector:
    """Flat weight array with named views for each block.

    Identity blocks are indexed by user/item id (or a single slot when tied);
    pair blocks follow the order of the corresponding ``PairIndex``.
    """

    def __init__(self, layout: ParameterLayout, w: np.ndarray | None = None):
        self.layout = layout
        self.w = np.zeros(layout.total) if w is None else np.asarray(w, dtype=float)
        if self.w.shape != (layout.total,):
            raise ValueError(f"expected {layout.total} weights, got {self.w.shape}")

    @classmethod
    def zeros(cls, attrs: AttributeCatalog, pairs: SelectedPairs, tied_identity: bool = False) -> "ParameterVector":
        return cls(ParameterLayout(attrs.n_users, attrs.n_items, attrs.user_vec.shape[1],
                                   attrs.item_vec.shape[1], len(pairs.user_pairs),
                                   len(pairs.item_pairs), tied_identity))

    def copy(self) -> "ParameterVector":
        return ParameterVector(self.layout, self.w.copy())

    def block(self, name: str) -> np.ndarray:
        return self.w[self.layout.slice(name)]

    def item_identity_index(self, items) -> np.ndarray:
        items = np.asarray(items, dtype=np.int64)
        base = self.layout.offsets["item_identity"]
        return np.full(items.shape, base) if self.layout.tied_identity else base + items

    def user_identity_index(self, users) -> np.ndarray:
        users = np.asarray(users, dtype=np.int64)
        base = self.layout.offsets["user_identity"]
        return np.full(users.shape, base) if self.layout.tied_identity else base + users

    def sigma_vector(self, sigma: float | dict) -> np.ndarray:
        """Expand a scalar or per-block ``{name: sigma}`` mapping to a full vector."""
        out = np.empty(self.layout.total)
        for name in BLOCKS:
            s = sigma.get(name, sigma.get("default", 1.0)) if isinstance(sigma, dict) else sigma
            if s <= 0:
                raise ValueError("sigma must be positive")
            out[self.layout.slice(name)] = s
        return out

    def __eq__(self, other) -> bool:
        return (isinstance(other, ParameterVector) and asdict(self.layout) == asdict(other.layout)
                and np.array_equal(self.w, other.w))


def save_parameters(params: ParameterVector, pairs: SelectedPairs, path, metadata: dict | None = None) -> None:
    """Write the versioned block file plus a JSON metadata sidecar (``<path>.json``)."""
    lay = params.layout
    with open(path, "w") as fh:
        fh.write(f"prefnet-parameters {FORMAT_VERSION}\n")
        for name in BLOCKS:
            vals = params.block(name).tolist()
            fh.write(f"block {name} {len(vals)}\n")
            if name in ("item_identity", "user_identity"):
                keys = ["*"] if lay.tied_identity else [str(k) for k in range(len(vals))]
            elif name in ("content_item", "content_user"):
                keys = [str(k) for k in range(len(vals))]
            else:
                idx = pairs.item_pairs if name == "item_pair" else pairs.user_pairs
                keys = [f"{a},{b}" for a, b in zip(idx.a.tolist(), idx.b.tolist())]
            fh.writelines(f"{k} {v!r}\n" for k, v in zip(keys, vals))
    meta = {"format_version": FORMAT_VERSION, "layout": {
        k: v for k, v in asdict(lay).items() if k not in ("sizes", "offsets")},
        "min_co_ratings": pairs.min_co_ratings, "n_users": pairs.user_pairs.n, "n_items": pairs.item_pairs.n}
    meta.update(metadata or {})
    Path(str(path) + ".json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def load_parameters(path) -> tuple[ParameterVector, SelectedPairs, dict]:
    meta = json.loads(Path(str(path) + ".json").read_text())
    blocks: dict[str, tuple[list[str], list[float]]] = {}
    with open(path) as fh:
        head = fh.readline().split()
        if head[:1] != ["prefnet-parameters"] or int(head[1]) != FORMAT_VERSION:
            raise ValueError(f"{path}: not a prefnet parameter file (version {FORMAT_VERSION})")
        line = fh.readline()
        while line:
            tag, name, count = line.split()
            keys, vals = [], []
            for _ in range(int(count)):
                k, v = fh.readline().split()
                keys.append(k)
                vals.append(float(v))
            blocks[name] = (keys, vals)
            line = fh.readline()

    def pair_index(name, n):
        keys = blocks[name][0]
        ab = np.array([k.split(",") for k in keys], dtype=np.int64).reshape(-1, 2)
        return PairIndex(ab[:, 0], ab[:, 1], n)

    pairs = SelectedPairs(pair_index("user_pair", meta["n_users"]), pair_index("item_pair", meta["n_items"]),
                          meta["min_co_ratings"])
    layout = ParameterLayout(**meta["layout"])
    w = np.concatenate([np.asarray(blocks[name][1], dtype=float) for name in BLOCKS])
    return ParameterVector(layout, w), pairs, meta
