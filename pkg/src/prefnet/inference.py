"""Rating prediction, joint prediction and energy-ranked top-N recommendation."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .baselines import popular_unseen, round_rating
from .features import g
from .model import PNModel, softmax
from .similarity import PairIndex

FULL, CONTENT_ONLY, GLOBAL_MEAN = "full", "content-only", "global-mean"
EXACT_BUDGET = 10**6
ICM_MAX_SWEEPS = 50
# queries scored per vectorised call
PREDICT_CHUNK = 2000


@dataclass(frozen=True)
class Prediction:
    user: int
    item: int
    predicted: int
    confidence: float
    fallback_level: str


@dataclass
class BatchPrediction:
    users: np.ndarray
    items: np.ndarray
    predicted: np.ndarray
    confidence: np.ndarray
    fallback_level: np.ndarray
    probs: np.ndarray

    def __len__(self) -> int:
        return len(self.users)

    def __iter__(self):
        for k in range(len(self)):
            yield Prediction(int(self.users[k]), int(self.items[k]), int(self.predicted[k]),
                             float(self.confidence[k]), str(self.fallback_level[k]))


def predict_many(model: PNModel, qu, qi) -> BatchPrediction:
    """Argmax of each query's local conditional, with its probability as confidence."""
    qu = np.asarray(qu, dtype=np.int64)
    qi = np.asarray(qi, dtype=np.int64)
    probs = np.zeros((len(qu), model.S))
    n_active = np.zeros(len(qu), dtype=np.int64)
    for a in range(0, len(qu), PREDICT_CHUNK):
        b = min(a + PREDICT_CHUNK, len(qu))
        inc = model.blanket(qu[a:b], qi[a:b])
        probs[a:b] = model.conditionals(qu[a:b], qi[a:b], inc)
        n_active[a:b] = np.bincount(inc.node, minlength=b - a)
    predicted = probs.argmax(axis=1) + 1
    m = model.means
    seen_u = (qu < len(m.user_count)) & (m.user_count[np.minimum(qu, len(m.user_count) - 1)] > 0)
    seen_i = (qi < len(m.item_count)) & (m.item_count[np.minimum(qi, len(m.item_count) - 1)] > 0)
    cold = ~seen_u & ~seen_i
    predicted[cold] = round_rating(m.global_mean, model.S)
    level = np.where(cold, GLOBAL_MEAN, np.where(n_active > 0, FULL, CONTENT_ONLY))
    confidence = probs[np.arange(len(qu)), predicted - 1]
    return BatchPrediction(qu, qi, predicted, confidence, level, probs)


def predict_rating(model: PNModel, u: int, i: int) -> Prediction:
    return next(iter(predict_many(model, np.array([u]), np.array([i]))))


# -- joint prediction -----------------------------------------------------------


@dataclass
class JointPrediction:
    ratings: dict
    method: str
    score: float
    sweeps: int = 0


def _joint_terms(model: PNModel, targets):
    """Unary scores (n, S) from the training blanket and pairwise score tables among targets."""
    qu = np.array([t[0] for t in targets], dtype=np.int64)
    qi = np.array([t[1] for t in targets], dtype=np.int64)
    unary = model.logits(qu, qi)
    R = model.ratings
    m = model.means
    pairwise = {}
    for a, b in itertools.combinations(range(len(targets)), 2):
        if qu[a] == qu[b] and qi[a] != qi[b]:
            w = model.pair_weight("item", int(qi[a]), int(qi[b]))
            ca, cb = m.item(int(qi[a])), m.item(int(qi[b]))
        elif qi[a] == qi[b] and qu[a] != qu[b]:
            w = model.pair_weight("user", int(qu[a]), int(qu[b]))
            ca, cb = m.user(int(qu[a])), m.user(int(qu[b]))
        else:
            continue
        if w != 0.0:
            pairwise[(a, b)] = w * g(np.abs((R[:, None] - ca) - (R[None, :] - cb)), model.S)
    return unary, pairwise


def joint_score(unary: np.ndarray, pairwise: dict, config) -> float:
    """Log of the unnormalised joint conditional of one assignment (0-based ratings)."""
    s = float(sum(unary[k, r] for k, r in enumerate(config)))
    return s + float(sum(tab[config[a], config[b]] for (a, b), tab in pairwise.items()))


def _exact(unary, pairwise):
    n, S = unary.shape
    configs = np.indices((S,) * n).reshape(n, -1).T
    scores = unary[np.arange(n)[None, :], configs].sum(axis=1)
    for (a, b), tab in pairwise.items():
        scores += tab[configs[:, a], configs[:, b]]
    best = int(np.argmax(scores))
    return configs[best], float(scores[best])


def _icm(unary, pairwise, max_sweeps: int = ICM_MAX_SWEEPS):
    n, S = unary.shape
    adj = {k: [] for k in range(n)}
    for (a, b), tab in pairwise.items():
        adj[a].append((b, tab))
        adj[b].append((a, tab.T))
    config = unary.argmax(axis=1)
    sweeps = 0
    for sweeps in range(1, max_sweeps + 1):
        changed = False
        for k in range(n):
            local = unary[k].copy()
            for other, tab in adj[k]:
                local += tab[:, config[other]]
            best = int(np.argmax(local))
            # move only on strict improvement so the sweep is monotone
            if local[best] > local[config[k]]:
                config[k] = best
                changed = True
        if not changed:
            break
    return config, joint_score(unary, pairwise, config), sweeps


def joint_predict(model: PNModel, targets, budget: int = EXACT_BUDGET) -> JointPrediction:
    """Jointly most probable ratings for a set of (user, item) nodes.

    Exact enumeration when S**len(targets) <= budget, otherwise iterated
    conditional modes from the independent predictions.
    """
    targets = [tuple(map(int, t)) for t in targets]
    if not targets:
        raise ValueError("targets must be non-empty")
    if len(set(targets)) != len(targets):
        raise ValueError("duplicate target")
    unary, pairwise = _joint_terms(model, targets)
    if model.S ** len(targets) <= budget:
        config, score = _exact(unary, pairwise)
        method, sweeps = "exact", 0
    else:
        config, score, sweeps = _icm(unary, pairwise)
        method = "icm"
    ratings = {t: int(r) + 1 for t, r in zip(targets, config)}
    return JointPrediction(ratings, method, score, sweeps)


# -- candidate generation and top-N ----------------------------------------------


def model_pair_strengths(model: PNModel) -> tuple[PairIndex, PairIndex]:
    """Selected pairs scored by |learned weight|, or by similarity before training."""
    out = []
    for kind, idx in (("user", model.pairs.user_pairs), ("item", model.pairs.item_pairs)):
        w = np.abs(model.params.block(f"{kind}_pair"))
        if not w.any() and idx.values is not None:
            w = idx.values
        out.append(PairIndex(idx.a, idx.b, idx.n, w, idx.counts))
    return out[0], out[1]


def _top_partners(idx: PairIndex, x: int, K: int | None):
    partners, pos = idx.neighbors(x)
    s = idx.values[pos]
    order = np.lexsort((partners, -s))
    order = order if K is None else order[:K]
    return partners[order], s[order]


def candidate_support(u: int, table, user_scores: PairIndex | None, item_scores: PairIndex | None,
                      K: int | None = None, mode: str = "user-based") -> tuple[np.ndarray, np.ndarray]:
    """Unseen candidate items for ``u`` and their summed neighbour strength.

    user-based: items rated by u's K strongest partner users.
    item-based: each rated item's K strongest partner items not rated by u.
    ``K=None`` keeps every partner.
    """
    if mode not in ("user-based", "item-based", "union"):
        raise ValueError(f"unknown candidate mode {mode!r}")
    seen = table.items_of(u)
    chunks, weights = [], []
    if mode in ("user-based", "union"):
        users, s = _top_partners(user_scores, u, K)
        for v, sv in zip(users.tolist(), s.tolist()):
            its = table.items_of(v)
            chunks.append(its)
            weights.append(np.full(len(its), sv))
    if mode in ("item-based", "union"):
        for j in seen.tolist():
            partners, pos = item_scores.neighbors(j)
            fresh = ~np.isin(partners, seen)
            partners, s = partners[fresh], item_scores.values[pos][fresh]
            order = np.lexsort((partners, -s))
            order = order if K is None else order[:K]
            chunks.append(partners[order])
            weights.append(s[order])
    if not chunks:
        return np.zeros(0, dtype=np.int64), np.zeros(0)
    items = np.concatenate(chunks)
    wts = np.concatenate(weights)
    uniq, inv = np.unique(items, return_inverse=True)
    support = np.bincount(inv, weights=wts, minlength=len(uniq))
    keep = ~np.isin(uniq, seen)
    return uniq[keep], support[keep]


def candidate_set(u: int, table, user_scores: PairIndex | None, item_scores: PairIndex | None,
                  K: int | None = None, mode: str = "user-based") -> set[int]:
    if len(table.items_of(u)) == 0:
        return set(popular_unseen(u, table).tolist())
    return set(candidate_support(u, table, user_scores, item_scores, K, mode)[0].tolist())


@dataclass
class RankedRecommendation:
    user: int
    items: np.ndarray
    scores: np.ndarray
    predicted: np.ndarray
    confidence: np.ndarray
    ranking: str
    short: bool = False  # fewer than N candidates were available

    def __len__(self) -> int:
        return len(self.items)

    @property
    def entries(self) -> list[tuple[int, float, int, float]]:
        return list(zip(self.items.tolist(), self.scores.tolist(), self.predicted.tolist(),
                        self.confidence.tolist()))


def energy_changes(model: PNModel, qu, qi):
    """(maximal, expected, probs) energy change of adding each query node."""
    logits = model.logits(qu, qi)
    probs = softmax(logits)
    delta = -logits
    maximal = delta[np.arange(len(delta)), probs.argmax(axis=1)]
    expected = (probs * delta).sum(axis=1)
    return maximal, expected, probs


@dataclass
class Recommender:
    """Top-N recommendation with a fitted PN; caches the pair strengths."""

    model: PNModel
    N: int = 20
    C: int = 500
    K: int = 100
    ranking: str = "expected-energy"
    mode: str = "user-based"
    _scores: tuple = field(default=None, repr=False)

    def __post_init__(self):
        if self.ranking not in ("maximal-energy", "expected-energy"):
            raise ValueError(f"unknown ranking {self.ranking!r}")
        if self.N > self.C:
            raise ValueError("N must not exceed C")

    def candidates(self, u: int) -> np.ndarray:
        table = self.model.table
        if len(table.items_of(u)) == 0:
            return popular_unseen(u, table, self.C)
        if self._scores is None:
            self._scores = model_pair_strengths(self.model)
        items, support = candidate_support(u, table, *self._scores, K=self.K, mode=self.mode)
        order = np.lexsort((items, -table.item_counts[items], -support))
        return items[order][:self.C]

    def recommend(self, u: int, N: int | None = None, ranking: str | None = None) -> RankedRecommendation:
        return self.recommend_all(u, N, (ranking or self.ranking,))[ranking or self.ranking]

    def recommend_all(self, u: int, N: int | None = None,
                      rankings=("maximal-energy", "expected-energy")) -> dict[str, RankedRecommendation]:
        """Score the candidates once and rank them under each requested criterion."""
        N = self.N if N is None else N
        cand = self.candidates(u)
        out = {}
        if len(cand) == 0:
            z = np.zeros(0)
            for r in rankings:
                out[r] = RankedRecommendation(u, z.astype(np.int64), z, z.astype(np.int64), z, r, N > 0)
            return out
        maximal, expected, probs = energy_changes(self.model, np.full(len(cand), u), cand)
        conf = probs.max(axis=1)
        pred = probs.argmax(axis=1) + 1
        pop = self.model.table.item_counts[cand]
        for r in rankings:
            score = maximal if r == "maximal-energy" else expected
            # ties: higher confidence, then more popular, then lower id
            order = np.lexsort((cand, -pop, -conf, score))[:N]
            out[r] = RankedRecommendation(u, cand[order], score[order], pred[order], conf[order], r,
                                          len(cand) < N)
        return out


def recommend_top_n(model: PNModel, u: int, N: int = 20, C: int = 500, K: int = 100,
                    ranking: str = "expected-energy", mode: str = "user-based") -> RankedRecommendation:
    return Recommender(model, N, C, K, ranking, mode).recommend(u)
