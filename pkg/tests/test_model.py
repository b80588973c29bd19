import itertools
import math

import pytest
from hypothesis import given, strategies as st

from pairsample.model import (FeatureModel, ParseError, ParseOptions, covers, enumerate_candidate_interactions,
                              from_dimacs, interaction, neg, normalize_clause, num_candidate_interactions,
                              parse_model, to_dimacs, unit_propagate, write_dimacs)

from conftest import small_models
from oracles import all_solutions

X, NX, Y, NY, Z, NZ = range(6)
XY = FeatureModel.from_clauses(3, [[X, Y]])


def test_parse_default_all_concrete():
    m = parse_model("p cnf 3 1\n1 2 0\n")
    assert m.num_features == 3
    assert m.clauses == ((X, Y),)
    assert m.concrete == {0, 1, 2}


def test_parse_concrete_comment():
    m = parse_model("c concrete 1 2\np cnf 3 1\n1 2 0\n")
    assert m.concrete == {0, 1}


def test_parse_concrete_repeated_and_override():
    text = "c concrete 1\nc concrete 3\np cnf 3 0\n"
    assert parse_model(text).concrete == {0, 2}
    assert parse_model(text, ParseOptions(concrete=[2])).concrete == {1}


def test_parse_drops_tautology():
    m = parse_model("p cnf 2 1\n1 -1 0\n")
    assert m.clauses == ()
    assert m.num_features == 2


def test_parse_dedups_literals_and_keeps_unused_features():
    m = parse_model("p cnf 5 1\n1 1 -2 0\n")
    assert m.clauses == ((X, NY),)
    assert m.num_features == 5


def test_parse_clause_spanning_lines():
    m = parse_model("p cnf 3 1\n1\n2 3\n0\n")
    assert m.clauses == ((X, Y, Z),)


@pytest.mark.parametrize("text", [
    "1 2 0\n",
    "p cnf x 1\n1 0\n",
    "p dnf 2 1\n1 0\n",
    "p cnf 2 1\n3 0\n",
    "p cnf 0 0\n",
    "c concrete 4\np cnf 3 0\n",
    "p cnf 2 1\n1 a 0\n",
])
def test_parse_errors(text):
    with pytest.raises(ParseError):
        parse_model(text)


def test_write_dimacs_round_trip():
    m = FeatureModel.from_clauses(4, [[X, NZ], [NY]], concrete=[0, 2])
    assert parse_model(write_dimacs(m)) == m


def test_literal_helpers():
    assert from_dimacs(1) == 0 and from_dimacs(-1) == 1 and from_dimacs(-3) == 5
    for code in range(10):
        assert from_dimacs(to_dimacs(code)) == code
        assert neg(neg(code)) == code
    assert interaction(Y, X) == (X, Y)
    with pytest.raises(ValueError):
        interaction(X, NX)
    assert normalize_clause([X, NX]) is None
    assert normalize_clause([Y, X, Y]) == [Y, X]


def test_unit_propagate_examples():
    assert unit_propagate(XY, {NX}) == {NX, Y}
    assert unit_propagate(XY, {NX, NY}) is None
    assert unit_propagate(XY, set()) == frozenset()


def test_candidate_counts():
    for k in (1, 2, 3, 5):
        m = FeatureModel.from_clauses(6, [], concrete=range(k))
        inters = list(enumerate_candidate_interactions(m))
        assert len(inters) == num_candidate_interactions(m) == 4 * math.comb(k, 2)
        assert len(set(inters)) == len(inters)
        assert all(a >> 1 < b >> 1 for a, b in inters)
    assert num_candidate_interactions(XY) == 12


def test_covers_examples():
    assert covers((True, True, True), (X, Y))
    assert not covers((True, False, False), (X, Y))
    config = (True, False, True)
    lits = [2 * f + (0 if v else 1) for f, v in enumerate(config)]
    for a, b in itertools.combinations(lits, 2):
        assert covers(config, (a, b))


@given(small_models(max_features=7), st.data())
def test_unit_propagate_properties(model, data):
    n = model.num_features
    feats = data.draw(st.sets(st.integers(0, n - 1), max_size=3))
    seed = {2 * f + data.draw(st.integers(0, 1)) for f in feats}
    up = unit_propagate(model, seed)
    sols = [s for s in all_solutions(model) if all(s[l >> 1] != bool(l & 1) for l in seed)]
    if up is None:
        assert not sols  # soundness: a conflict means no extension exists
        return
    assert seed <= up
    assert unit_propagate(model, up) == up
    for s in sols:
        assert all(s[l >> 1] != bool(l & 1) for l in up)
