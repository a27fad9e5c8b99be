"""Acceptance criteria, one test per criterion.

Each test records a PASS/FAIL line (shown in the "acceptance criteria" section
of the pytest summary) before asserting, so a failing criterion still reports
its measured values.
"""

import itertools
import time
import tracemalloc

import numpy as np
import pytest

from conftest import random_dataset, random_spec, record_criterion
from sybilreg.estimators import default_estimators, fit_weighted
from sybilreg.graph import (
    ReferralEdge,
    TransferRecord,
    build_referral_forest,
    flag_large_trees,
    flag_transfer_clusters,
)
from sybilreg.model import CandidateNetwork, Dataset, DisjointNetworkSpec, validate_spec
from sybilreg.regression import ols_fit
from sybilreg.simulation import SimConfig, generate_replication, run_simulation
from sybilreg.weights import expected_topology_disjoint, optimal_weights_closed_form, roll_up_guaranteed

SAMPLE_PATH = [("W1", "W2"), ("W2", "W3"), ("W3", "W4"), ("W3", "W5"), ("W5", "W6"), ("W5", "W7"), ("W6", "W8")]
TRUE_BETA = np.array([2.0, 3.0, -0.5])


@pytest.fixture(scope="module")
def oracle_specs():
    rng = np.random.default_rng(1001)
    return [random_spec(rng, n_max=200, k_max=7, size_range=(2, 50), pi_range=(0.01, 0.99)) for _ in range(500)]


def test_criterion_1_closed_form_matches_dense_inverse(oracle_specs):
    start = time.perf_counter()
    worst = 0.0
    for spec in oracle_specs:
        block = optimal_weights_closed_form(spec).to_dense()
        dense = np.linalg.inv(expected_topology_disjoint(spec).matrix)
        worst = max(worst, float(np.abs(block - dense).max()))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-10 and elapsed < 30
    record_criterion("1", ok, f"500 specs, max |block - inv(EG)| = {worst:.2e} (tol 1e-10), {elapsed:.1f} s (limit 30 s)")
    assert ok


def test_criterion_2_row_sum_ratio(oracle_specs):
    worst = 0.0
    checked = 0
    for spec in oracle_specs:
        sums = optimal_weights_closed_form(spec).row_sums()
        labels = spec.labels()
        # an independent row carries weight 1 on itself and 0 elsewhere
        indep = float(sums[labels < 0][0]) if np.any(labels < 0) else 1.0
        for k, net in enumerate(spec.networks):
            ratio = indep / sums[labels == k]
            target = 1 + net.pi * (net.size - 1)
            worst = max(worst, float(np.abs(ratio / target - 1).max()))
            checked += 1
    ok = worst <= 1e-12
    record_criterion("2", ok, f"{checked} networks, max relative error of ratio vs 1 + pi(n - 1) = {worst:.2e} (tol 1e-12)")
    assert ok


def test_criterion_3a_zero_probability_agreement():
    rng = np.random.default_rng(3001)
    worst = 0.0
    for _ in range(100):
        spec = random_spec(rng, n_max=150, size_range=(2, 20))
        if spec.n_total < 10:
            spec = DisjointNetworkSpec(spec.networks, 10)
        spec = DisjointNetworkSpec(tuple(CandidateNetwork(n.members, 0.0) for n in spec.networks), spec.n_total)
        ds = random_dataset(rng, spec.n_total)
        betas = np.array([k.fit(ds, spec, seed=0).beta for k in default_estimators()])
        worst = max(worst, float(np.abs(betas - betas[0]).max()))
    ok = worst <= 1e-12
    record_criterion("3a", ok, f"100 instances with all pi = 0, max spread across six estimators = {worst:.2e} (tol 1e-12)")
    assert ok


def test_criterion_3b_near_certain_network_matches_roll_up():
    """Instances follow the simulation data-generating process: i.i.d. N(0, 1)
    covariates and one network that shares a single error draw."""
    rng = np.random.default_rng(3002)
    diffs = []
    for i in range(100):
        n = int(rng.integers(10, 101))
        size = int(rng.integers(2, n - 3))
        cfg = SimConfig(n_obs=n, networks=((size, 1 - 1e-6),), seed=int(rng.integers(2**31)))
        ds, spec, _ = generate_replication(cfg, 0)
        sure = DisjointNetworkSpec((CandidateNetwork(spec.networks[0].members, 1.0),), n)
        b_near = fit_weighted(ds, spec).beta
        b_roll = ols_fit(roll_up_guaranteed(ds, sure)[0]).beta
        diffs.append(float(np.abs(b_near - b_roll).max()))
    diffs = np.array(diffs)
    n_ok = int((diffs <= 1e-3).sum())
    ok = n_ok == len(diffs)
    record_criterion(
        "3b",
        ok,
        f"{n_ok}/100 instances within 1e-3 of the rolled-up OLS beta; "
        f"median diff {np.median(diffs):.2e}, max diff {diffs.max():.2e}",
    )
    assert ok


@pytest.fixture(scope="module")
def default_run():
    cfg = SimConfig()
    start = time.perf_counter()
    report = run_simulation(cfg)
    return cfg, report, time.perf_counter() - start


def test_criterion_4_weighted_lowest_exclusion_highest(default_run):
    cfg, rep, elapsed = default_run
    mse, se = rep.mse, rep.mc_se
    others = [name for name in rep.estimators if name != "weighted"]
    lowest = all(mse["weighted"] < mse[name] for name in others)
    highest = all(mse["exclusion"] > mse[name] for name in rep.estimators if name != "exclusion")
    # gap to the weighted MSE measured in SE of the difference of independent means
    gaps = {name: (mse[name] - mse["weighted"]) / np.hypot(se[name], se["weighted"]) for name in others}
    separated = all(g > 2 for g in gaps.values())
    ok = lowest and highest and separated and elapsed < 300
    table = ", ".join(f"{n}={mse[n]:.4f}({se[n]:.4f})" for n in rep.estimators)
    record_criterion(
        "4",
        ok,
        f"seed {cfg.seed}, {rep.n_reps} reps, MSE(MC SE): {table}; min gap {min(gaps.values()):.1f} SE; {elapsed:.0f} s",
    )
    assert ok


def test_criterion_5_unbiased_and_calibrated(default_run):
    cfg, rep, _ = default_run
    mean = np.asarray(rep.mean_beta["weighted"])
    mc_se = np.asarray(rep.beta_mc_se["weighted"])
    z = np.abs(mean - TRUE_BETA) / mc_se
    ratio = np.asarray(rep.mean_reported_var["weighted"]) / np.asarray(rep.empirical_var["weighted"])
    ok = bool(np.all(z < 4) and np.all(np.abs(ratio - 1) < 0.15))
    record_criterion(
        "5",
        ok,
        f"|mean - truth| / MC SE = {np.round(z, 2).tolist()} (limit 4); "
        f"reported / empirical variance = {np.round(ratio, 3).tolist()} (within 15%)",
    )
    assert ok


def test_criterion_6_scalability():
    n, n_networks, size = 1_000_000, 1000, 100
    tracemalloc.start()
    try:
        start = time.perf_counter()
        rng = np.random.default_rng(6001)
        X = np.column_stack([np.ones(n), rng.standard_normal((n, 2))])
        ds = Dataset(X @ TRUE_BETA + rng.standard_normal(n), X)
        del X
        pis = rng.uniform(0.1, 0.9, n_networks)
        nets = tuple(CandidateNetwork(tuple(range(k * size, (k + 1) * size)), float(pis[k])) for k in range(n_networks))
        spec = DisjointNetworkSpec(nets, n)
        fit = fit_weighted(ds, spec)
        elapsed = time.perf_counter() - start
        peak = tracemalloc.get_traced_memory()[1]
    finally:
        tracemalloc.stop()
    ok = elapsed < 60 and peak < 2 * 2**30 and np.all(np.abs(fit.beta - TRUE_BETA) < 0.01)
    record_criterion("6", ok, f"N=1e6, 1000 networks of 100, p=3: {elapsed:.2f} s (limit 60), peak {peak / 2**20:.0f} MiB (limit 2048)")
    assert ok


def test_criterion_7_graph_ingest():
    checks = {}
    edges = [ReferralEdge(a, b) for a, b in SAMPLE_PATH]
    forest = build_referral_forest(edges)
    checks["one 8-member tree"] = list(forest) == ["W1"] and forest["W1"].size == 8

    wallets = [f"W{i}" for i in range(1, 9)]
    id_map = {w: i for i, w in enumerate(wallets)}
    checks["size 8 < 20 gives no network"] = flag_large_trees(forest, 20, 0.5, id_map).networks == ()
    big = build_referral_forest([ReferralEdge("R", f"w{i}") for i in range(1, 25)])
    big_map = {w: i for i, w in enumerate(big["R"].members)}
    spec = flag_large_trees(big, 20, 0.5, big_map)
    checks["size 25 >= 20 gives one network"] = len(spec.networks) == 1 and spec.networks[0].size == 25
    checks["min size 5 takes all members"] = flag_large_trees(forest, 5, 0.5, id_map).networks[0].members == tuple(range(8))

    above = flag_transfer_clusters(forest, [TransferRecord("W1", "W2", 12)], 10, 0.5, id_map)
    below = flag_transfer_clusters(forest, [TransferRecord("W1", "W2", 9)], 10, 0.5, id_map)
    checks["12 transfers >= 10 flags the pair"] = [n.members for n in above.networks] == [(0, 1)]
    checks["9 transfers < 10 flags nothing"] = below.networks == ()
    for s in (spec, above, below):
        validate_spec(s)

    transfers = [TransferRecord("W1", "W2", 6), TransferRecord("W2", "W1", 6), TransferRecord("W5", "W7", 11)]
    ref_tree = flag_large_trees(forest, 5, 0.5, id_map)
    ref_tr = flag_transfer_clusters(forest, transfers, 10, 0.5, id_map)
    stable = True
    for perm in itertools.permutations(edges):
        f = build_referral_forest(perm)
        stable &= f == forest and flag_large_trees(f, 5, 0.5, id_map) == ref_tree
        stable &= flag_transfer_clusters(f, transfers[::-1], 10, 0.5, id_map) == ref_tr
    checks["identical output under all 5040 edge orders"] = stable

    failed = [name for name, passed in checks.items() if not passed]
    record_criterion("7", not failed, f"{len(checks) - len(failed)}/{len(checks)} checks" + (f"; failed: {failed}" if failed else ""))
    assert not failed


def test_criterion_8_field_results_not_reproducible():
    record_criterion(
        "8",
        None,
        "field-experiment standard-error reductions rely on proprietary data; covered by criteria 4 and 5 instead",
    )
