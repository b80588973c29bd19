import itertools

import pytest
from hypothesis import given, strategies as st

from pairsample.model import FeatureModel, unit_propagate
from pairsample.trails import (ClauseDatabase, Propagator, Trail, Unsatisfiable, adjacent, decide_feasibility,
                               is_satisfiable, luby)

from conftest import small_models
from fuzz import exercise
from oracles import all_solutions

X, NX, Y, NY, Z, NZ = range(6)
XY = FeatureModel.from_clauses(3, [[X, Y]])


def trail_for(model):
    return Trail(ClauseDatabase.from_model(model))


def test_push_forces_unit():
    t = trail_for(XY)
    assert t.push_and_propagate([NX])
    assert set(t.literals()) == {NX, Y}


def test_push_complement_conflicts_and_reverts():
    t = trail_for(XY)
    t.push_and_propagate([NX])
    assert not t.push_and_propagate([NY])
    assert set(t.literals()) == {NX, Y}
    t.check_watches()


def test_push_consistent_extension():
    t = trail_for(XY)
    t.push_and_propagate([Z])
    assert t.push_and_propagate([X, NY])
    assert {Z, X, NY} <= set(t.literals())


def test_complete_keeps_literals():
    for seed in ([X], [NX]):
        t = trail_for(XY)
        t.push_and_propagate(seed)
        assert t.complete()
        config = t.assignment(3)
        assert XY.is_satisfied_by(config)
        assert all(config[l >> 1] != bool(l & 1) for l in seed)
    assert t.is_true(Y)


def test_complete_flips_refuted_decision():
    # x is not refuted by propagation alone, but every completion of x fails
    model = FeatureModel.from_clauses(3, [[NX, Y, Z], [NX, Y, NZ], [NX, NY, Z], [NX, NY, NZ]])
    assert not any(s[0] for s in all_solutions(model))
    t = trail_for(model)
    assert t.push_and_propagate([X])
    assert not t.complete()
    assert t.is_true(NX)
    assert model.is_satisfied_by(t.assignment(3))


def test_decide_feasibility_examples():
    db = ClauseDatabase.from_model(XY)
    assert decide_feasibility(db, (NX, NY)) is None
    w = decide_feasibility(db, (NX, Y))
    assert w is not None and not w[0] and w[1]
    free = ClauseDatabase.from_model(FeatureModel.from_clauses(2, []))
    for a in (X, NX):
        for b in (Y, NY):
            assert decide_feasibility(free, (a, b)) is not None


def test_single_decision_conflict_learns_unit():
    model = FeatureModel.from_clauses(2, [[NX, Y], [NX, NY]])
    db = ClauseDatabase.from_model(model)
    t = Trail(db)
    assert not t.push_and_propagate([X])
    assert (NX,) in db.learned
    assert t.decision_level == 0 and t.is_true(NX)


def test_level_zero_conflict_is_unsat():
    db = ClauseDatabase.from_model(FeatureModel.from_clauses(1, [[X], [NX]]))
    with pytest.raises(Unsatisfiable):
        Trail(db).complete()
    assert not is_satisfiable(db)


def test_learned_clauses_reach_other_trails_lazily():
    model = FeatureModel.from_clauses(3, [[NX, Y], [NX, NY]])
    db = ClauseDatabase.from_model(model)
    a, b = Trail(db), Trail(db)
    b.push_and_propagate([Z])
    before = b.literals()
    a.push_and_propagate([X])  # learns the unit not-x
    assert b.literals() == before
    b.push_and_propagate([Y])
    assert b.is_true(NX)


def test_luby_prefix():
    assert [luby(i) for i in range(15)] == [1, 1, 2, 1, 1, 2, 4, 1, 1, 2, 1, 1, 2, 4, 8]


def test_propagator_and_adjacency():
    prop = Propagator(XY)
    assert set(prop.up([NX])) == {NX, Y}
    assert prop.conflicts([NX, NY])
    assert adjacent(prop, (X, Y), (NX, Z))
    assert adjacent(prop, (NX, Z), (NY, NZ))
    assert not adjacent(prop, (X, Z), (Y, Z))


def test_engine_fuzz_small():
    stats = exercise(seed=7, operations=5000)
    assert stats.operations >= 5000


@given(small_models(max_features=7, max_clauses=12), st.randoms(use_true_random=False))
def test_feasibility_matches_brute_force(model, rnd):
    sols = all_solutions(model)
    db = ClauseDatabase.from_model(model)
    lits = range(2 * model.num_features)
    pairs = [(a, b) for a, b in itertools.combinations(lits, 2) if a >> 1 != b >> 1]
    for a, b in rnd.sample(pairs, min(len(pairs), 12)):
        w = decide_feasibility(db, (a, b))
        truth = any(s[a >> 1] != bool(a & 1) and s[b >> 1] != bool(b & 1) for s in sols)
        assert (w is not None) == truth
        if w is not None:
            assert model.is_satisfied_by(w)
    assert all_solutions(FeatureModel(model.num_features, tuple(db.clauses))) == sols


@given(small_models(max_features=6, max_clauses=10), st.lists(st.integers(0, 11), min_size=1, max_size=6))
def test_trail_closed_after_pushes(model, pushes):
    db = ClauseDatabase.from_model(model)
    t = Trail(db)
    try:
        for l in pushes:
            if l >> 1 >= model.num_features:
                continue
            t.push_and_propagate([l])
            t.check_watches()
            up = unit_propagate(FeatureModel(db.num_vars, tuple(db.clauses)), t.literals())
            assert up is not None and set(up) == set(t.literals())
    except Unsatisfiable:
        assert not all_solutions(model)


def test_propagator_is_safe_across_threads():
    import threading

    model = FeatureModel.from_clauses(6, [[2 * a + 1, 2 * b] for a, b in zip(range(5), range(1, 6))])
    prop = Propagator(model)
    expected = {(a, b): prop.conflicts((a, b)) for a in range(12) for b in range(12)}
    errors = []

    def hammer():
        try:
            for _ in range(300):
                for (a, b), want in expected.items():
                    assert prop.conflicts((a, b)) == want
        except Exception as exc:  # pragma: no cover - only on failure
            errors.append(exc)

    workers = [threading.Thread(target=hammer) for _ in range(4)]
    for w in workers:
        w.start()
    for w in workers:
        w.join()
    assert not errors
