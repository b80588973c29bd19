import itertools

import pytest
from hypothesis import given, settings, strategies as st

from pairsample.model import FeatureModel, covers, enumerate_candidate_interactions
from pairsample.preprocess import (ReconstructionMap, bounded_variable_elimination,
                                   detect_failed_and_equivalent_literals, learn_infeasible_binaries,
                                   map_to_impliers, restore_sample, simplify, universe_reduce,
                                   vivify_and_subsume)
from pairsample.trails import Propagator, Unsatisfiable

from conftest import small_models
from oracles import all_solutions, feasible_interactions, min_sample_size_milp, mutually_exclusive

X, NX, Y, NY, Z, NZ, W, NW = range(8)


def test_failed_literal_fixes_both():
    model = FeatureModel.from_clauses(2, [[X], [NX, Y]])
    out, rmap = detect_failed_and_equivalent_literals(model)
    assert out.num_features == 0
    assert rmap.disposition(0) == ("fixed", 0, True)
    assert rmap.disposition(1) == ("fixed", 1, True)
    assert rmap.restore(()) == (True, True)


def test_equivalence_collapses():
    model = FeatureModel.from_clauses(3, [[NX, Y], [NY, X]])
    out, rmap = detect_failed_and_equivalent_literals(model)
    assert out.num_features == 2 and out.clauses == ()
    assert rmap.disposition(1) == ("equiv", 1, X)
    assert rmap.restore((True, False)) == (True, True, False)
    assert rmap.restore((False, True)) == (False, False, True)


def test_equivalence_suppressed_below_two_concrete():
    model = FeatureModel.from_clauses(3, [[NX, Y], [NY, X]], concrete=[0, 1])
    out, rmap = simplify(model)
    assert len(out.concrete) == 2


def test_contradiction_is_unsat():
    with pytest.raises(Unsatisfiable):
        simplify(FeatureModel.from_clauses(1, [[X], [NX]]))


def test_bve_single_resolvent():
    model = FeatureModel.from_clauses(3, [[X, Y], [NY, Z]], concrete=[0, 2])
    out, rmap = bounded_variable_elimination(model)
    assert out.clauses == ((X, NX + 1),)  # x or z in the two-feature simplified space
    assert rmap.disposition(1)[0] == "elim"
    for config in all_solutions(out):
        assert model.is_satisfied_by(rmap.restore(config))


def test_bve_pure_literal():
    model = FeatureModel.from_clauses(3, [[X, Y], [Y, NZ]], concrete=[0, 2])
    out, rmap = bounded_variable_elimination(model)
    assert out.clauses == ()
    for config in itertools.product((False, True), repeat=2):
        assert model.is_satisfied_by(rmap.restore(config))


def test_bve_restore_checks_both_polarities():
    model = FeatureModel.from_clauses(3, [[X, Y], [NY, Z]], concrete=[0, 2])
    out, rmap = bounded_variable_elimination(model)
    (_, _, recorded), = rmap.events
    for config in all_solutions(out):
        full = rmap.restore(config)
        ok = [v for v in (False, True)
              if all(any((v if l >> 1 == 1 else full[l >> 1]) != bool(l & 1) for l in c) for c in recorded)]
        assert full[1] in ok


def test_subsumption():
    out = vivify_and_subsume(FeatureModel.from_clauses(3, [[X, Y], [X, Y, Z]]))
    assert out.clauses == ((X, Y),)


def test_vivification_shortens():
    # under not-x and not-y: w is forced, which forces not-z
    model = FeatureModel.from_clauses(4, [[X, Y, Z], [X, W], [NW, NZ]])
    out = vivify_and_subsume(model)
    assert (X, Y) in out.clauses and (X, Y, Z) not in out.clauses
    assert all_solutions(out) == all_solutions(model)


def test_identity_when_nothing_applies():
    model = FeatureModel.from_clauses(3, [])
    out, rmap = simplify(model)
    assert out == model
    assert rmap.kept == {0: 0, 1: 1, 2: 2} and not rmap.events
    assert restore_sample(rmap, [(True, False, True)]) == [(True, False, True)]


def test_reconstruction_json_round_trip():
    model = FeatureModel.from_clauses(5, [[NX, Y], [NY, X], [Z], [W, 8], [NW, 9]], concrete=[0, 1, 3])
    out, rmap = simplify(model)
    back = ReconstructionMap.from_json(rmap.to_json())
    assert back.kept == rmap.kept and back.events == rmap.events


def test_learn_binaries_no_duplicate():
    model = FeatureModel.from_clauses(3, [[X, Y]])
    assert learn_infeasible_binaries(model, [(NX, NY)]).clauses == ((X, Y),)


def test_learn_binaries_adds_clause():
    # x and not-z are jointly infeasible, but UP cannot see it
    model = FeatureModel.from_clauses(4, [[NX, Y, Z], [NX, NY, Z], [NX, W]])
    assert all(not (s[0] and not s[2]) for s in all_solutions(model))
    prop = Propagator(model)
    assert NZ not in prop.up([X])
    strong = learn_infeasible_binaries(model, [(X, NZ)])
    assert (NX, Z) in strong.clauses
    prop = Propagator(strong)
    assert Z in prop.up([X]) and NX in prop.up([NZ])


def test_universe_reduce_chain():
    model = FeatureModel.from_clauses(3, [[NX, Y], [NY, Z]])
    feasible = sorted(feasible_interactions(model))
    retained, implier = universe_reduce(model, feasible)
    assert (X, Y) in retained
    assert implier[(Y, Z)] == (X, Y)
    assert implier[(X, Z)] == (X, Y)


def test_universe_reduce_identity_without_implications():
    model = FeatureModel.from_clauses(3, [])
    feasible = list(enumerate_candidate_interactions(model))
    retained, implier = universe_reduce(model, feasible)
    assert retained == sorted(feasible) and implier == {}


@settings(max_examples=60)
@given(small_models(max_features=7, max_clauses=10))
def test_sampling_safety(model):
    sols = all_solutions(model)
    try:
        out, rmap = simplify(model)
    except Unsatisfiable:
        assert not sols
        return
    assert sols
    simplified_sols = all_solutions(out)
    restored = restore_sample(rmap, simplified_sols)
    assert all(model.is_satisfied_by(c) for c in restored)
    feasible = feasible_interactions(model, sols)
    assert all(any(covers(c, i) for c in restored) for i in feasible)
    if len(out.concrete) >= 2:
        assert min_sample_size_milp(out) == min_sample_size_milp(model)
    # simplified concrete features come from original concrete ones
    assert all(rmap.original_literal(2 * f) >> 1 in model.concrete for f in out.concrete)


@given(small_models(max_features=7, max_clauses=12))
def test_vivify_preserves_solutions(model):
    try:
        out = vivify_and_subsume(model)
    except Unsatisfiable:
        assert not all_solutions(model)
        return
    assert all_solutions(out) == all_solutions(model)


@given(small_models(max_features=6, max_clauses=10))
def test_learned_binaries_make_up_complete(model):
    sols = all_solutions(model)
    if not sols:
        return
    feasible = feasible_interactions(model, sols)
    infeasible = [i for i in enumerate_candidate_interactions(model) if i not in feasible]
    strong = learn_infeasible_binaries(model, infeasible)
    assert all_solutions(strong) == sols
    prop = Propagator(strong)
    for a, b in infeasible:
        up_a, up_b = prop.up([a]), prop.up([b])
        assert up_a is None or b ^ 1 in up_a
        assert up_b is None or a ^ 1 in up_b


@given(small_models(max_features=6, max_clauses=10), st.randoms(use_true_random=False))
def test_universe_reduction_soundness(model, rnd):
    sols = all_solutions(model)
    if not sols:
        return
    feasible = sorted(feasible_interactions(model, sols))
    retained, implier = universe_reduce(model, feasible)
    assert set(retained) | set(implier) == set(feasible)
    assert not set(retained) & set(implier)
    assert all(v in retained for v in implier.values())
    # a sample covering the retained set covers everything: greedy random covers
    for _ in range(5):
        pool = list(sols)
        rnd.shuffle(pool)
        sample = []
        for i in retained:
            if not any(covers(c, i) for c in sample):
                sample.append(next(c for c in pool if covers(c, i)))
        assert all(any(covers(c, i) for c in sample) for i in feasible)
    # each implier forces its implied interaction
    for j, i in implier.items():
        assert all(covers(s, j) for s in sols if covers(s, i))


@given(small_models(max_features=6, max_clauses=10), st.randoms(use_true_random=False))
def test_implier_mapping_keeps_exclusivity(model, rnd):
    sols = all_solutions(model)
    if not sols:
        return
    feasible = sorted(feasible_interactions(model, sols))
    _, implier = universe_reduce(model, feasible)
    prop = Propagator(model)
    # random UP-exclusive set by greedy insertion
    order = list(feasible)
    rnd.shuffle(order)
    chosen = []
    for i in order:
        if all(prop.conflicts(i + j) for j in chosen):
            chosen.append(i)
    mapped = map_to_impliers(chosen, implier)
    assert len(mapped) == len(chosen)
    for a, b in itertools.combinations(mapped, 2):
        assert prop.conflicts(a + b)
        assert mutually_exclusive(model, a, b, sols)
