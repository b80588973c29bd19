import itertools
import json
import random
import threading
import time

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pairsample.lns import (CliqueTable, DestroyController, SharedState, SolveOptions, UniverseCoverage,
                            _Context, destroy_and_repair, select_destroy, solve, unique_coverage_counts)
from pairsample.lowerbound import ConflictGraph
from pairsample.model import FeatureModel, covers
from pairsample.preprocess import restore_sample
from pairsample.trails import Unsatisfiable
from pairsample.verify import verify_sample

from conftest import small_models
from corpus import corpus
from oracles import all_solutions, feasible_interactions, min_sample_size_milp, mutually_exclusive

X, NX, Y, NY, Z, NZ = range(6)
XY = FeatureModel.from_clauses(3, [[X, Y]])
XY_SAMPLE = [(True, True, True), (True, False, False), (True, False, True),
             (False, True, False), (False, True, True)]


def make_context(model, sample, time_left=30.0):
    universe = sorted(feasible_interactions(model))
    shared = SharedState(sample, [])
    return _Context(model, universe, UniverseCoverage(universe), ConflictGraph(model), shared, CliqueTable(),
                    DestroyController(len(universe)), threading.Lock(), time.monotonic() + time_left, {})


# -- whole pipeline --------------------------------------------------------------------
def test_worked_example():
    res = solve(XY, SolveOptions(time_limit=60, deterministic=True))
    assert len(res.sample) == 5 and res.lower_bound == 5 and res.optimal
    assert res.stats["feasible_interactions"] == 11
    assert res.detail["certificate"] in ("clique", "full_problem")
    assert verify_sample(XY, res.sample).ok


def test_optimal_initial_sample_skips_lns():
    res = solve(XY, SolveOptions(deterministic=True))
    assert res.stats["initial_size"] == 5
    assert res.stats["lns_rounds"] == 0


def test_zero_time_limit_returns_initial_result():
    model = FeatureModel.from_clauses(5, [])
    res = solve(model, SolveOptions(time_limit=0, deterministic=True))
    assert res.stats["lns_rounds"] == 0
    assert len(res.sample) == res.stats["initial_size"]
    assert verify_sample(model, res.sample).ok
    assert res.lower_bound <= min_sample_size_milp(model)


def test_unsatisfiable_model_raises():
    with pytest.raises(Unsatisfiable):
        solve(FeatureModel.from_clauses(2, [[X], [NX]]))


def test_degenerate_concrete_sets():
    one = FeatureModel.from_clauses(3, [[X, Y]], [0])
    res = solve(one, SolveOptions(deterministic=True))
    assert len(res.sample) == 2 and res.optimal
    assert sorted(c[0] for c in res.sample) == [False, True]
    forced = FeatureModel.from_clauses(2, [[X], [Y]])
    res = solve(forced, SolveOptions(deterministic=True))
    assert len(res.sample) == 1 and res.optimal


def test_history_strictly_decreases_and_is_valid():
    model = corpus()[10]
    res = solve(model, SolveOptions(time_limit=5, deterministic=True, full_solver=False))
    sizes = [len(h) for h in res.history]
    assert len(sizes) >= 3
    assert all(a > b for a, b in zip(sizes, sizes[1:]))
    assert sizes[-1] == len(res.sample)
    for h in res.history:
        assert verify_sample(res.simplified, h).ok
        assert verify_sample(model, restore_sample(res.reconstruction, h)).ok
    assert res.stats["lns_rounds"] == len(sizes) - 1


def test_deterministic_json_is_identical():
    model = corpus()[10]
    opts = SolveOptions(time_limit=30, deterministic=True, seed=5)
    a = json.dumps(solve(model, opts).to_json(), sort_keys=True)
    b = json.dumps(solve(model, opts).to_json(), sort_keys=True)
    assert a == b


def test_threaded_mode():
    model = corpus()[4]
    res = solve(model, SolveOptions(threads=3, time_limit=30, seed=1))
    assert verify_sample(model, res.sample).ok
    assert res.optimal and len(res.sample) == min_sample_size_milp(model)
    assert res.stats["wall_time_s"] is not None


def test_lower_bound_certificate_is_exclusive():
    model = corpus()[0]
    res = solve(model, SolveOptions(time_limit=30, deterministic=True))
    sols = all_solutions(model)
    ex = [tuple(i) for i in res.to_json()["exclusive_set"]]
    assert len(ex) <= res.lower_bound <= len(res.sample)
    for a, b in itertools.combinations(ex, 2):
        assert mutually_exclusive(model, a, b, sols)


# -- destroy and repair ------------------------------------------------------------------
def test_locally_optimal_destruction_is_skipped():
    ctx = make_context(XY, XY_SAMPLE)
    rng = random.Random(0)
    for _ in range(10):
        assert destroy_and_repair(ctx, XY_SAMPLE, rng, lambda: False) is None
    assert ctx.stats["skipped"] == ctx.stats["repairs"] == 10
    assert ctx.controller.size == 2


def test_destroy_and_repair_improves_redundant_sample():
    model = FeatureModel.from_clauses(3, [])
    sample = [c for c in itertools.product((False, True), repeat=3)]  # 8 configurations, optimum 4
    ctx = make_context(model, sample)
    rng = random.Random(3)
    improved = None
    for _ in range(50):
        improved = destroy_and_repair(ctx, sample, rng, lambda: False)
        if improved is not None:
            break
    assert improved is not None and len(improved) < len(sample)
    assert verify_sample(model, improved).ok


def test_select_destroy_whole_sample():
    rng = random.Random(0)
    for strategy in ("uniform", "avoid_doomed", "randomized_greedy"):
        assert select_destroy(strategy, XY_SAMPLE, 5, rng, np.ones((11, 5), dtype=bool)) == list(range(5))
        assert select_destroy(strategy, XY_SAMPLE, 9, rng, np.ones((11, 5), dtype=bool)) == list(range(5))


def test_avoid_doomed_without_cliques_matches_uniform_sizes():
    rng = random.Random(0)
    counts = {}
    for _ in range(2000):
        removed = select_destroy("avoid_doomed", XY_SAMPLE, 2, rng, cliques=())
        assert len(removed) == 2 == len(set(removed))
        counts[tuple(removed)] = counts.get(tuple(removed), 0) + 1
    # every pair reachable, roughly evenly
    assert len(counts) == 10
    assert min(counts.values()) > 2000 / 10 * 0.6


def test_avoid_doomed_extends_with_configuration_missing_the_clique():
    # configs 0, 1 and 2 each contain a clique member; 3 and 4 contain none
    clique = [(X, Y), (X, NY)]
    rng = random.Random(1)
    for _ in range(200):
        removed = select_destroy("avoid_doomed", XY_SAMPLE, 2, rng, cliques=[clique])
        assert len(removed) == 2
        assert len(set(removed) & {0, 1, 2}) <= 1


@given(st.integers(1, 7), st.integers(0, 2**32 - 1))
@settings(max_examples=50)
def test_unique_counts_match_recount(n_configs, seed):
    rng = random.Random(seed)
    universe = sorted(feasible_interactions(XY))
    sample = [rng.choice(all_solutions(XY)) for _ in range(n_configs)]
    cover = UniverseCoverage(universe).matrix(sample)
    keep = sorted(rng.sample(range(n_configs), rng.randint(0, n_configs)))
    counts = unique_coverage_counts(cover, keep)
    for k in keep:
        naive = sum(1 for i in universe
                    if covers(sample[k], i) and not any(covers(sample[j], i) for j in keep if j != k))
        assert counts[k] == naive


def test_randomized_greedy_removes_least_unique():
    # configuration 5 duplicates configuration 0, so while both remain neither covers anything uniquely
    sample = XY_SAMPLE + [XY_SAMPLE[0]]
    cover = UniverseCoverage(sorted(feasible_interactions(XY))).matrix(sample)
    rng = random.Random(0)
    for _ in range(200):
        removed = select_destroy("randomized_greedy", sample, 2, rng, cover)
        assert len(set(removed)) == 2
        assert 0 in removed or 5 in removed


# -- adaptive destroy size -------------------------------------------------------------------
def test_controller_rules():
    c = DestroyController(100)
    assert c.size == 2
    assert DestroyController(1_000_000).size == 3
    c.update(True, 0.1, 10)
    assert c.size == 2 and c.failures == 0
    for _ in range(24):
        c.update(False, 0.1, 10)
    assert c.size == 2 and c.failures == 24
    c.update(True, 0.1, 10)
    assert c.failures == 0
    for _ in range(25):
        c.update(False, 0.1, 10)
    assert c.size == 3 and c.failures == 0


def test_controller_slow_failures_need_more_attempts():
    c = DestroyController(100)
    for _ in range(59):
        c.update(False, 2.0, 10)
    assert c.size == 2
    c.update(False, 2.0, 10)
    assert c.size == 3


def test_controller_capped_by_sample_size():
    c = DestroyController(100)
    for _ in range(200):
        c.update(False, 0.0, 4)
    assert c.size == 4
    assert c.current(3) == 3
    assert c.current(1) == 1


# -- doomed destructions ------------------------------------------------------------------------
def _doomed(model, sample, removed, sols, unique_only):
    """Brute force: is there an exclusive set with a distinct member inside each removed configuration?"""
    rest = [c for i, c in enumerate(sample) if i not in removed]
    feas = feasible_interactions(model, sols)
    uncovered = [i for i in feas if not any(covers(c, i) for c in rest)]
    if unique_only:
        uncovered = [i for i in uncovered if sum(covers(c, i) for c in sample) == 1]
    options = [[i for i in uncovered if covers(sample[k], i)] for k in removed]
    for pick in itertools.product(*options):
        if len(set(pick)) < len(pick):
            continue
        if all(mutually_exclusive(model, a, b, sols) for a, b in itertools.combinations(pick, 2)):
            return True
    return False


@given(small_models(max_features=5), st.integers(0, 2**32 - 1))
@settings(max_examples=60)
def test_doomed_check_needs_only_uniquely_covered(model, seed):
    sols = all_solutions(model)
    if not sols:
        return
    rng = random.Random(seed)
    sample = [rng.choice(sols) for _ in range(rng.randint(2, 6))]
    for size in range(1, min(len(sample), 3) + 1):
        removed = rng.sample(range(len(sample)), size)
        assert _doomed(model, sample, removed, sols, False) == _doomed(model, sample, removed, sols, True)


def test_doomed_check_on_corpus():
    rng = random.Random(0)
    outcomes = {True: 0, False: 0}
    for model in corpus(60, max_features=5):
        sols = all_solutions(model)
        for _ in range(5):
            sample = [rng.choice(sols) for _ in range(rng.randint(2, 6))]
            for size in range(1, min(len(sample), 3) + 1):
                removed = rng.sample(range(len(sample)), size)
                full = _doomed(model, sample, removed, sols, False)
                assert full == _doomed(model, sample, removed, sols, True)
                outcomes[full] += 1
    assert outcomes[True] > 0 and outcomes[False] > 0
