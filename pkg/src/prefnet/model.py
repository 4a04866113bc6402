"""The preference network: rating graph, energies and local conditionals."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, NamedTuple

import numpy as np

from .data import AttributeCatalog, MeanStats, RatingTable, compute_means
from .features import FeatureConfig, ParameterVector, edge_feature, g, node_features
from .similarity import SelectedPairs

# cap on (query, candidate neighbour) expansions materialised at once
EXPANSION_CHUNK = 4_000_000


class Neighbor(NamedTuple):
    user: int
    item: int
    rating: int


@dataclass
class LocalDistribution:
    probs: np.ndarray  # probs[r - 1] = P(r | blanket)

    @property
    def argmax(self) -> int:
        # first maximum, i.e. ties go to the lowest rating
        return int(np.argmax(self.probs)) + 1

    @property
    def confidence(self) -> float:
        return float(self.probs.max())


@dataclass
class EnergyChange:
    maximal: float
    expected: float
    delta: np.ndarray  # energy change for each candidate rating value


@dataclass
class Incidences:
    """Directed (centre, neighbour) edges whose pair carries a weight.

    ``node`` indexes the query batch, ``neighbor`` is a position in the
    training table, ``pair`` a position in the item- or user-pair index
    according to ``is_item``.
    """

    node: np.ndarray
    neighbor: np.ndarray
    pair: np.ndarray
    is_item: np.ndarray

    def __len__(self) -> int:
        return len(self.node)

    @classmethod
    def empty(cls) -> "Incidences":
        z = np.zeros(0, dtype=np.int64)
        return cls(z, z, z, np.zeros(0, dtype=bool))

    @classmethod
    def concat(cls, parts: list["Incidences"]) -> "Incidences":
        if not parts:
            return cls.empty()
        return cls(*(np.concatenate([getattr(p, f) for p in parts])
                     for f in ("node", "neighbor", "pair", "is_item")))


def _ragged(starts: np.ndarray, lens: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Expand CSR segments: (owner index, position) for every member."""
    owner = np.repeat(np.arange(len(lens)), lens)
    if len(owner) == 0:
        return owner, owner
    offsets = np.cumsum(lens) - lens
    pos = np.arange(len(owner)) - np.repeat(offsets, lens) + np.repeat(starts, lens)
    return owner, pos


def blanket(table: RatingTable, pairs: SelectedPairs, qu, qi) -> Incidences:
    """Weighted Markov-blanket edges of query nodes (qu[k], qi[k]) into ``table``.

    Same-user neighbours connect through item pairs, same-item neighbours
    through user pairs.  A query that is itself a training rating never
    neighbours itself.
    """
    qu = np.asarray(qu, dtype=np.int64)
    qi = np.asarray(qi, dtype=np.int64)
    ucnt = np.where(qu <= table.n_users, table.user_counts[np.minimum(qu, table.n_users)], 0)
    icnt = np.where(qi <= table.n_items, table.item_counts[np.minimum(qi, table.n_items)], 0)
    cum = np.cumsum(ucnt + icnt)
    parts = []
    start = 0
    while start < len(qu):
        base = cum[start - 1] if start else 0
        stop = max(int(np.searchsorted(cum, base + EXPANSION_CHUNK, side="right")), start + 1)
        parts.append(_blanket_chunk(table, pairs, qu, qi, ucnt, icnt, start, stop))
        start = stop
    return Incidences.concat(parts)


def _blanket_chunk(table, pairs, qu, qi, ucnt, icnt, lo, hi) -> Incidences:
    sl = slice(lo, hi)
    u, i = qu[sl], qi[sl]
    out = []
    # same user, other items: item-item edges
    starts = table.user_ptr[np.minimum(u, table.n_users)]
    owner, pos = _ragged(starts, ucnt[sl])
    nb_item = table.items[pos]
    k = pairs.item_pairs.lookup(i[owner], nb_item)
    keep = k >= 0
    out.append(Incidences(owner[keep] + lo, pos[keep], k[keep], np.ones(keep.sum(), dtype=bool)))
    # same item, other users: user-user edges
    starts = table.item_ptr[np.minimum(i, table.n_items)]
    owner, opos = _ragged(starts, icnt[sl])
    pos = table.item_order[opos]
    k = pairs.user_pairs.lookup(u[owner], table.users[pos])
    keep = k >= 0
    out.append(Incidences(owner[keep] + lo, pos[keep], k[keep], np.zeros(keep.sum(), dtype=bool)))
    inc = Incidences.concat(out)
    order = np.argsort(inc.node, kind="stable")
    return Incidences(inc.node[order], inc.neighbor[order], inc.pair[order], inc.is_item[order])


class PreferenceGraph:
    """Rating nodes of a training table with their weighted blankets in CSR form."""

    def __init__(self, table: RatingTable, pairs: SelectedPairs):
        self.table = table
        self.pairs = pairs
        inc = blanket(table, pairs, table.users, table.items)
        counts = np.bincount(inc.node, minlength=len(table))
        self.ptr = np.concatenate(([0], np.cumsum(counts)))
        self.neighbor = inc.neighbor.astype(np.int32)
        self.pair = inc.pair.astype(np.int32)
        self.is_item = inc.is_item

    def __len__(self) -> int:
        return len(self.table)

    @property
    def n_active(self) -> int:
        return len(self.neighbor)

    def neighborhood_size(self, k: int) -> int:
        """Size of the full (unselected) neighbourhood of node ``k``."""
        t = self.table
        return int(t.item_counts[t.items[k]] + t.user_counts[t.users[k]] - 2)

    def full_neighbors(self, k: int) -> np.ndarray:
        t = self.table
        same_user = np.arange(t.user_ptr[t.users[k]], t.user_ptr[t.users[k] + 1])
        same_item = t.item_positions(int(t.items[k]))
        nb = np.union1d(same_user, same_item)
        return nb[nb != k]

    def active_neighbors(self, k: int) -> np.ndarray:
        return self.neighbor[self.ptr[k]:self.ptr[k + 1]].astype(np.int64)

    def incidences(self, lo: int, hi: int) -> Incidences:
        """Blanket edges of nodes lo..hi-1, with ``node`` relative to ``lo``."""
        a, b = self.ptr[lo], self.ptr[hi]
        node = np.repeat(np.arange(hi - lo), np.diff(self.ptr[lo:hi + 1]))
        return Incidences(node, self.neighbor[a:b].astype(np.int64), self.pair[a:b].astype(np.int64),
                          self.is_item[a:b])


def build_graph(table: RatingTable, pairs: SelectedPairs) -> PreferenceGraph:
    return PreferenceGraph(table, pairs)


class PNModel:
    """A trained (or trainable) preference network over a fixed training table.

    Bundles the training ratings, their means, attributes, selected pairs,
    weights and the enabled feature groups.  All rating values are 1..S.
    """

    def __init__(self, table: RatingTable, attrs: AttributeCatalog, pairs: SelectedPairs,
                 params: ParameterVector | None = None, features: FeatureConfig = FeatureConfig(),
                 means: MeanStats | None = None):
        self.table = table
        self.attrs = attrs
        self.pairs = pairs
        self.features = features
        self.means = means if means is not None else compute_means(table)
        self.S = table.scale
        self.params = params if params is not None else ParameterVector.zeros(
            attrs, pairs, features.tied_identity)
        self._graph = None
        self.item_dev = table.values - self.means.item_mean[table.items]
        self.user_dev = table.values - self.means.user_mean[table.users]

    @property
    def graph(self) -> PreferenceGraph:
        if self._graph is None:
            self._graph = build_graph(self.table, self.pairs)
        return self._graph

    @property
    def ratings(self) -> np.ndarray:
        return np.arange(1, self.S + 1, dtype=float)

    def with_params(self, params: ParameterVector) -> "PNModel":
        m = PNModel(self.table, self.attrs, self.pairs, params, self.features, self.means)
        m._graph = self._graph
        return m

    # -- vectorised machinery -------------------------------------------------

    def blanket(self, qu, qi) -> Incidences:
        if not self.features.correlation:
            return Incidences.empty()
        return blanket(self.table, self.pairs, qu, qi)

    def node_feature_matrices(self, qu, qi):
        """f_i(r) and f_u(r) for every query and every r, shape (n, S)."""
        R = self.ratings
        fi = g(np.abs(R[None, :] - self.means.item_mean[qi][:, None]), self.S)
        fu = g(np.abs(R[None, :] - self.means.user_mean[qu][:, None]), self.S)
        return fi, fu

    def edge_feature_matrix(self, qu, qi, inc: Incidences) -> np.ndarray:
        """Edge feature for every incidence and every centre rating, shape (m, S)."""
        centre = np.where(inc.is_item, self.means.item_mean[qi[inc.node]], self.means.user_mean[qu[inc.node]])
        dev = np.where(inc.is_item, self.item_dev[inc.neighbor], self.user_dev[inc.neighbor])
        return g(np.abs(self.ratings[None, :] - centre[:, None] - dev[:, None]), self.S)

    def edge_param_index(self, inc: Incidences) -> np.ndarray:
        off = self.params.layout.offsets
        return np.where(inc.is_item, off["item_pair"], off["user_pair"]) + inc.pair

    def logits(self, qu, qi, inc: Incidences | None = None, parts: bool = False):
        """Negative energy change -dE(r) of each query node for r = 1..S.

        With ``parts=True`` also returns the feature matrices used, for the
        gradient.
        """
        qu = np.asarray(qu, dtype=np.int64)
        qi = np.asarray(qi, dtype=np.int64)
        if inc is None:
            inc = self.blanket(qu, qi)
        w = self.params.w
        fi, fu = self.node_feature_matrices(qu, qi)
        out = np.zeros((len(qu), self.S))
        if self.features.identity:
            out += w[self.params.item_identity_index(qi)][:, None] * fi
            out += w[self.params.user_identity_index(qu)][:, None] * fu
        if self.features.content:
            ci = self.attrs.item_vec[qi] @ self.params.block("content_item")
            cu = self.attrs.user_vec[qu] @ self.params.block("content_user")
            out += ci[:, None] * fu + cu[:, None] * fi
        G = None
        if self.features.correlation and len(inc):
            G = self.edge_feature_matrix(qu, qi, inc)
            contrib = w[self.edge_param_index(inc)][:, None] * G
            for s in range(self.S):
                out[:, s] += np.bincount(inc.node, weights=contrib[:, s], minlength=len(qu))
        if parts:
            return out, (fi, fu, G, inc)
        return out

    def conditionals(self, qu, qi, inc: Incidences | None = None) -> np.ndarray:
        return softmax(self.logits(qu, qi, inc))

    # -- scalar API -------------------------------------------------------------

    def training_neighbors(self, u: int, i: int) -> list[Neighbor]:
        """Training ratings adjacent to (u, i) through a selected pair."""
        inc = self.blanket(np.array([u]), np.array([i]))
        t = self.table
        return [Neighbor(int(t.users[k]), int(t.items[k]), int(t.values[k])) for k in inc.neighbor.tolist()]

    def pair_weight(self, kind: str, a: int, b: int) -> float:
        idx = self.pairs.item_pairs if kind == "item" else self.pairs.user_pairs
        k = int(idx.lookup(np.array([a]), np.array([b]))[0])
        if k < 0 or not self.features.correlation:
            return 0.0
        return float(self.params.block(f"{kind}_pair")[k])


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    m = logits.max(axis=-1, keepdims=True)
    z = logits - m
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def node_energy(model: PNModel, r: int, u: int, i: int) -> float:
    """-w_v . f_v(r) for the rating node (u, i) taking value r."""
    p, feats = model.params, model.features
    f = node_features(r, u, i, model.means, model.attrs, model.S)
    e = 0.0
    if feats.identity:
        e -= p.w[p.item_identity_index(i)] * f.item_specific
        e -= p.w[p.user_identity_index(u)] * f.user_specific
    if feats.content:
        e -= float(p.block("content_item") @ f.content_item)
        e -= float(p.block("content_user") @ f.content_user)
    return float(e)


def edge_energy(model: PNModel, a: Neighbor, b: Neighbor) -> float:
    """-w_e . f_e for two adjacent rating nodes (0 when their pair is not selected)."""
    m = model.means
    if a.user == b.user and a.item != b.item:
        w = model.pair_weight("item", a.item, b.item)
        f = edge_feature("item", a.rating, b.rating, m.item(a.item), m.item(b.item), model.S)
    elif a.item == b.item and a.user != b.user:
        w = model.pair_weight("user", a.user, b.user)
        f = edge_feature("user", a.rating, b.rating, m.user(a.user), m.user(b.user), model.S)
    else:
        return 0.0
    return -w * f


def _delta_energies(model: PNModel, u: int, i: int, neighbors: Iterable[Neighbor]) -> np.ndarray:
    neighbors = list(neighbors)
    for nb in neighbors:
        if not ((nb.user == u) ^ (nb.item == i)):
            raise ValueError(f"{nb} is not adjacent to ({u}, {i})")
    return np.array([
        node_energy(model, r, u, i) + sum(edge_energy(model, Neighbor(u, i, r), nb) for nb in neighbors)
        for r in range(1, model.S + 1)
    ])


def local_conditional(model: PNModel, u: int, i: int,
                      neighbors: Iterable[Neighbor] | None = None) -> LocalDistribution:
    """P(r_ui | blanket) with neighbour ratings held at the given values.

    By default the blanket is the training ratings adjacent to (u, i).
    """
    if neighbors is None:
        neighbors = model.training_neighbors(u, i)
    return LocalDistribution(softmax(-_delta_energies(model, u, i, neighbors)))


def energy_change(model: PNModel, u: int, i: int, neighbors: Iterable[Neighbor] | None = None) -> EnergyChange:
    """Energy added by inserting node (u, i) with the existing states frozen."""
    if neighbors is None:
        neighbors = model.training_neighbors(u, i)
    delta = _delta_energies(model, u, i, neighbors)
    probs = softmax(-delta)
    return EnergyChange(float(delta[int(np.argmax(probs))]), float(probs @ delta), delta)
