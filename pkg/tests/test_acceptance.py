"""Acceptance suite: one printed PASS/FAIL line per criterion.

The data-dependent criteria (1 to 3) need the MovieLens 100k split under
``PREFNET_DATA`` and skip without it. They take several minutes.
"""
import time

import numpy as np
import pytest

from prefnet.evaluation import expected_utility
from prefnet.experiment import ExperimentConfig, Workspace, evaluate, fit_pn, load_split, sparsity
from prefnet.inference import candidate_set, joint_predict
from prefnet.model import energy_change
from prefnet.train import TrainConfig, gradient, pseudo_log_likelihood, train

from oracles import (brute_conditional, brute_energy_change, brute_joint_map, cooccurrence_pairs,
                     finite_difference, random_model, random_table, verdict)

# top-N targets: (MAE on hits, expected utility)
TARGETS = {"pn-expected-energy": (0.607, 48.49), "pn-maximal-energy": (0.603, 47.43),
           "user-based": (0.669, 46.61)}
MAE_TOL, UTILITY_TOL = 0.05, 3.0
TRAIN_BUDGET_S, EVAL_BUDGET_S = 30 * 60, 10 * 60
HYBRID_SLACK = 0.02
FD_STEP, FD_RTOL = 1e-4, 1e-5
ORACLE_ATOL = 1e-10
NORM_ATOL = 1e-12

# the pinned top-N protocol, and a longer one used for the rating-MAE criteria
PINNED = dict(lr=0.001, epochs=3)
CONVERGED = dict(lr=0.01, epochs=6)
HYBRID = "content+identity+correlation"


def ml_config(root, **kw) -> ExperimentConfig:
    return ExperimentConfig(train=str(root / "train.tsv"), test=str(root / "test.tsv"),
                            users=str(root / "u.user"), items=str(root / "u.item"), **kw)


@pytest.fixture(scope="module")
def pinned_run(movielens):
    cfg = ml_config(movielens, **PINNED)
    table, test, attrs = load_split(cfg)
    ws = Workspace(table, attrs, cfg.min_co_ratings)
    t0 = time.perf_counter()
    model, _ = fit_pn(ws, cfg.feature_config, cfg.train_config)
    train_s = time.perf_counter() - t0
    out = evaluate(model, ws, test, cfg)
    out["train_seconds"] = train_s
    return out


@pytest.fixture(scope="module")
def sweep_run(movielens):
    cfg = ml_config(movielens, **CONVERGED)
    table, test, attrs = load_split(cfg)
    rows = sparsity(cfg, table, test, attrs)
    return {(r["fraction"], r["method"]): r["mae"] for r in rows}


def test_criterion_1_topn_table(pinned_run):
    rows = {r["method"]: r for r in pinned_run["table1.csv"]}
    soft, off = [], 0
    for name, (mae, util) in TARGETS.items():
        got_mae, got_util = rows[name]["mae_on_hits"], rows[name]["expected_utility"]
        ok_mae, ok_util = abs(got_mae - mae) <= MAE_TOL, abs(got_util - util) <= UTILITY_TOL
        off += (not ok_mae) + (not ok_util)
        soft.append(f"{name} mae_on_hits {got_mae:.3f} (target {mae}, {'ok' if ok_mae else 'off'}) "
                    f"utility {got_util:.2f} (target {util}, {'ok' if ok_util else 'off'})")
    ub = rows["user-based"]["expected_utility"]
    ordering = all(rows[n]["expected_utility"] > ub for n in ("pn-expected-energy", "pn-maximal-energy"))
    budget = pinned_run["train_seconds"] <= TRAIN_BUDGET_S and pinned_run["seconds"] <= EVAL_BUDGET_S
    passed = verdict(1, ordering and budget,
                     f"hard: utility ordering {'holds' if ordering else 'violated'}, "
                     f"train {pinned_run['train_seconds']:.0f}s, eval {pinned_run['seconds']:.0f}s | "
                     f"soft: {off} of {2 * len(TARGETS)} targets outside tolerance: " + "; ".join(soft))
    assert passed


def test_criterion_2_rating_mae_ordering(sweep_run, pinned_run):
    pn = sweep_run[(1.0, HYBRID)]
    ib, ub = sweep_run[(1.0, "item-based-rounded")], sweep_run[(1.0, "user-based-rounded")]
    short = {r["method"]: r["mae"] for r in pinned_run["fig4_mae.csv"]}
    passed = verdict(2, pn < ib and pn < ub,
                     f"hybrid PN {pn:.4f} vs item-based {ib:.4f}, user-based {ub:.4f} "
                     f"(lr {CONVERGED['lr']} x {CONVERGED['epochs']} epochs); "
                     f"at lr {PINNED['lr']} x {PINNED['epochs']}: PN {short['pn']:.4f}")
    assert passed


def test_criterion_3_sparsity_trends(sweep_run):
    fracs = sorted({f for f, _ in sweep_run})
    assert fracs == [0.1, 0.25, 0.5, 1.0]
    content = {f: sweep_run[(f, "content")] for f in fracs}
    corr = {f: sweep_run[(f, "correlation")] for f in fracs}
    hybrid = {f: sweep_run[(f, HYBRID)] for f in fracs}
    sparse_ok = content[0.1] < corr[0.1]
    dense_ok = corr[1.0] < content[1.0]
    hybrid_ok = all(hybrid[f] <= min(content[f], corr[f]) + HYBRID_SLACK for f in fracs)
    table = ", ".join(f"{f}: c {content[f]:.3f} r {corr[f]:.3f} h {hybrid[f]:.3f}" for f in fracs)
    passed = verdict(3, sparse_ok and dense_ok and hybrid_ok,
                     f"content<corr at 0.1 {sparse_ok}, corr<content at 1.0 {dense_ok}, "
                     f"hybrid within {HYBRID_SLACK} {hybrid_ok} [{table}]")
    assert passed


def test_criterion_4_gradient_finite_differences():
    worst, n = 0.0, 0
    blocks = ("item_identity", "user_identity", "content_item", "content_user", "item_pair", "user_pair")
    for seed in range(24):
        rng = np.random.default_rng(1000 + seed)
        S = (2, 3, 5)[seed % 3]
        m = random_model(rng, 3, 4, int(rng.integers(5, 11)), S, keep=0.8, scale=0.5)
        assert all(m.params.layout.slice(b).stop > m.params.layout.slice(b).start for b in blocks)
        a = gradient(m)
        f = finite_difference(lambda: pseudo_log_likelihood(m), m.params.w, FD_STEP)
        worst = max(worst, np.linalg.norm(a - f) / max(np.linalg.norm(a), np.linalg.norm(f), 1e-12))
        n += 1
    passed = verdict(4, worst < FD_RTOL, f"{n} instances, worst relative error {worst:.2e} (< {FD_RTOL})")
    assert passed


def test_criterion_5_brute_force_oracles():
    worst, seeds = 0.0, 0
    for seed in range(120):
        rng = np.random.default_rng(seed)
        S = int(rng.integers(2, 4))
        m = random_model(rng, 2, 2, int(rng.integers(1, 4)), S, keep=rng.random())
        for u, i in zip(m.table.users.tolist(), m.table.items.tolist()):
            P = m.conditionals([u], [i])[0]
            worst = max(worst, float(np.abs(P - brute_conditional(m, u, i)).max()))
        free = [(u, i) for u in (1, 2) for i in (1, 2) if m.table.rating(u, i) is None]
        for u, i in free:
            ec, want = energy_change(m, u, i), brute_energy_change(m, u, i)
            worst = max(worst, abs(ec.maximal - want[0]), abs(ec.expected - want[1]))
        jp = joint_predict(m, free)
        assignment, score = brute_joint_map(m, free)
        assert jp.method == "exact"
        worst = max(worst, abs(jp.score - score))
        seeds += 1
    passed = verdict(5, worst <= ORACLE_ATOL,
                     f"{seeds} seeds (<= 4 nodes, S <= 3), worst deviation {worst:.1e} (<= {ORACLE_ATOL})")
    assert passed


def test_criterion_6_candidate_equivalence():
    mismatches, tables = 0, 0
    for seed in range(120):
        rng = np.random.default_rng(seed)
        t = random_table(rng, 10, 10, int(rng.integers(5, 45)), 5)
        pairs = cooccurrence_pairs(t)
        for u in np.flatnonzero(t.user_counts).tolist():
            ub = candidate_set(u, t, pairs.user_pairs, pairs.item_pairs, None, "user-based")
            ib = candidate_set(u, t, pairs.user_pairs, pairs.item_pairs, None, "item-based")
            mismatches += ub != ib
        tables += 1
    passed = verdict(6, mismatches == 0, f"{tables} random 10x10 tables, {mismatches} mismatching sets")
    assert passed


def test_criterion_7_normalisation_and_utility():
    worst = 0.0
    for seed in range(300):
        rng = np.random.default_rng(seed)
        S = int(rng.integers(2, 8))
        m = random_model(rng, 5, 5, int(rng.integers(1, 20)), S, keep=rng.random(), scale=rng.uniform(0, 50))
        P = m.conditionals(rng.integers(1, 6, 10), rng.integers(1, 6, 10))
        worst = max(worst, float(np.abs(P.sum(axis=1) - 1).max()))
    rank1 = expected_utility({1: [7, 8]}, {1: {7: 4}}, alpha=5.0).per_user[1][0]
    rank5 = expected_utility({1: [1, 2, 3, 4, 7]}, {1: {7: 4}}, alpha=5.0).per_user[1][0]
    passed = verdict(7, worst <= NORM_ATOL and rank1 == 1.0 and rank5 == 0.5,
                     f"300 fuzzed models, worst |sum - 1| {worst:.1e}; rank-1 hit {rank1}, rank-5 hit {rank5}")
    assert passed


def test_criterion_8_concavity_and_determinism():
    spread = []
    for seed in range(3):
        rng = np.random.default_rng(seed)
        base = random_model(rng, 2, 3, 5, 3, keep=1.0, scale=0.0)
        finals = []
        for init in (1, 2):
            m = base.with_params(base.params.copy())
            train(m, TrainConfig(learning_rate=0.2, epochs=3000, mode="full", seed=init, init_scale=1.0,
                                 track_objective=False))
            finals.append(pseudo_log_likelihood(m))
        spread.append(abs(finals[0] - finals[1]))
    rng = np.random.default_rng(9)
    base = random_model(rng, 6, 6, 25, 5, keep=0.5, scale=0.0)
    runs = []
    for _ in range(2):
        m = base.with_params(base.params.copy())
        train(m, TrainConfig(learning_rate=0.05, epochs=3, seed=7))
        runs.append(m.params.w.tobytes())
    identical = runs[0] == runs[1]
    passed = verdict(8, max(spread) < 1e-6 and identical,
                     f"full-batch objective spread across inits {max(spread):.1e} (< 1e-6); "
                     f"fixed-seed SGD bit-identical {identical}")
    assert passed
