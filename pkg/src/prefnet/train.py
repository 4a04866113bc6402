"""Regularised pseudo-likelihood and per-user stochastic gradient ascent."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .model import PNModel, log_softmax, softmax

log = logging.getLogger(__name__)

# node budget per block when sweeping the whole table
FULL_PASS_NODES = 20_000


class TrainingDiverged(RuntimeError):
    """The epoch objective dropped by more than the configured tolerance."""


@dataclass
class TrainConfig:
    learning_rate: float = 0.001
    sigma: float | dict = 1.0
    epochs: int = 3
    seed: int = 0
    # "sgd": one update per user batch; "full": one update per epoch on the full gradient
    mode: str = "sgd"
    # learning_rate / (1 + decay * t), t counting updates
    decay: float = 0.0
    # random-normal initial weights with this scale (0 = all zeros)
    init_scale: float = 0.0
    track_objective: bool = True
    # abort when objective falls below previous - tolerance * |previous|
    divergence_tolerance: float = 0.5

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning rate must be non-negative")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.mode not in ("sgd", "full"):
            raise ValueError(f"unknown mode {self.mode!r}")
        sigmas = self.sigma.values() if isinstance(self.sigma, dict) else [self.sigma]
        if any(s <= 0 for s in sigmas):
            raise ValueError("sigma must be positive")


@dataclass
class TrainReport:
    objective: list[float] = field(default_factory=list)
    grad_norm: list[float] = field(default_factory=list)
    epoch_seconds: list[float] = field(default_factory=list)
    wall_seconds: float = 0.0
    n_nodes: int = 0
    n_active_edges: int = 0

    def to_dict(self) -> dict:
        return {"objective": self.objective, "grad_norm": self.grad_norm,
                "epoch_seconds": self.epoch_seconds, "wall_seconds": self.wall_seconds,
                "n_nodes": self.n_nodes, "n_active_edges": self.n_active_edges}


def _block_terms(model: PNModel, lo: int, hi: int, grad: np.ndarray | None) -> float:
    """Sum of log P(observed | blanket) over nodes lo..hi-1; adds their gradient into ``grad``."""
    t = model.table
    qu, qi = t.users[lo:hi], t.items[lo:hi]
    inc = model.graph.incidences(lo, hi) if model.features.correlation else None
    logits, (fi, fu, G, inc) = model.logits(qu, qi, inc, parts=True)
    obs = t.values[lo:hi] - 1
    rows = np.arange(hi - lo)
    ll = float(log_softmax(logits)[rows, obs].sum())
    if grad is None:
        return ll

    P = softmax(logits)
    p = model.params
    d_fi = fi[rows, obs] - (P * fi).sum(axis=1)
    d_fu = fu[rows, obs] - (P * fu).sum(axis=1)
    if model.features.identity:
        np.add.at(grad, p.item_identity_index(qi), d_fi)
        np.add.at(grad, p.user_identity_index(qu), d_fu)
    if model.features.content:
        grad[p.layout.slice("content_item")] += model.attrs.item_vec[qi].T @ d_fu
        grad[p.layout.slice("content_user")] += model.attrs.user_vec[qu].T @ d_fi
    if G is not None:
        node = inc.node
        d_edge = G[np.arange(len(node)), obs[node]] - (P[node] * G).sum(axis=1)
        np.add.at(grad, model.edge_param_index(inc), d_edge)
    return ll


def _regulariser(params, sigma_vec: np.ndarray) -> float:
    wb = params.w / sigma_vec
    return -0.5 * float(wb @ wb)


def _scope_blocks(model: PNModel, lo: int, hi: int):
    """Split node range lo..hi into blocks of bounded size."""
    step = FULL_PASS_NODES
    for a in range(lo, hi, step):
        yield a, min(a + step, hi)


def pseudo_log_likelihood(model: PNModel, sigma: float | dict = 1.0) -> float:
    """Sum of log local conditionals over training ratings minus 0.5*|w/sigma|^2."""
    total = sum(_block_terms(model, a, b, None) for a, b in _scope_blocks(model, 0, len(model.table)))
    return total + _regulariser(model.params, model.params.sigma_vector(sigma))


def gradient(model: PNModel, scope: slice | None = None, sigma: float | dict = 1.0,
             with_value: bool = False):
    """Gradient of the regularised pseudo-likelihood restricted to ``scope``.

    ``scope`` is a contiguous range of training positions (a user's ratings
    form one).  The regulariser pull is scaled by |scope| / |T|, so summing
    over a partition of the table gives the full gradient.
    """
    n = len(model.table)
    lo, hi = (0, n) if scope is None else (scope.start or 0, n if scope.stop is None else scope.stop)
    grad = np.zeros(model.params.layout.total)
    ll = 0.0
    for a, b in _scope_blocks(model, lo, hi):
        ll += _block_terms(model, a, b, grad)
    sig = model.params.sigma_vector(sigma)
    frac = (hi - lo) / n if n else 0.0
    grad -= frac * model.params.w / sig**2
    if with_value:
        return grad, ll + frac * _regulariser(model.params, sig)
    return grad


def train(model: PNModel, config: TrainConfig = TrainConfig()) -> tuple[PNModel, TrainReport]:
    """Fit the weights of ``model`` in place; returns (model, report).

    SGD mode visits users in a seeded random order each epoch and applies
    w <- w + lr * grad over that user's ratings.
    """
    t0 = time.perf_counter()
    rng = np.random.default_rng(config.seed)
    params = model.params
    if config.init_scale > 0:
        params.w[:] = rng.normal(0.0, config.init_scale, params.w.shape)
    graph = model.graph if model.features.correlation else None
    report = TrainReport(n_nodes=len(model.table), n_active_edges=graph.n_active if graph else 0)
    table = model.table
    users = np.flatnonzero(table.user_counts)
    sigma = config.sigma
    step = 0
    prev = None
    if config.track_objective:
        prev = pseudo_log_likelihood(model, sigma)
        report.objective.append(prev)

    for epoch in range(config.epochs):
        te = time.perf_counter()
        if config.mode == "full":
            grad = gradient(model, None, sigma)
            params.w += config.learning_rate / (1 + config.decay * step) * grad
            step += 1
        else:
            for u in rng.permutation(users):
                grad = gradient(model, table.user_slice(int(u)), sigma)
                params.w += config.learning_rate / (1 + config.decay * step) * grad
                step += 1
        report.epoch_seconds.append(time.perf_counter() - te)
        if config.track_objective:
            grad, obj = gradient(model, None, sigma, with_value=True)
            report.objective.append(obj)
            report.grad_norm.append(float(np.linalg.norm(grad)))
            log.info("epoch %d objective %.4f |grad| %.4f (%.1fs)", epoch + 1, obj,
                     report.grad_norm[-1], report.epoch_seconds[-1])
            if not np.isfinite(obj) or obj < prev - config.divergence_tolerance * abs(prev):
                raise TrainingDiverged(f"objective fell from {prev:.6g} to {obj:.6g} in epoch {epoch + 1}; "
                                       f"lower the learning rate (currently {config.learning_rate})")
            prev = obj
    report.wall_seconds = time.perf_counter() - t0
    return model, report
