"""Sampling-safe simplification and the reverse mapping of samples.

Every rule here keeps the minimum sample size unchanged: failed and
equivalent literals, bounded variable elimination restricted to
non-concrete features, vivification and subsumption.  Universe reduction
shrinks the interaction set instead of the formula.
"""
from __future__ import annotations

import itertools
import logging
import time
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .model import (Configuration, FeatureModel, Interaction, from_dimacs,
                    interaction, to_dimacs)
from .trails import ClauseDatabase, Propagator, Unsatisfiable

log = logging.getLogger(__name__)

MAX_ROUNDS = 10
RULE2_BUDGET = 5.0


@dataclass
class ReconstructionMap:
    """How each original feature is recovered from a simplified configuration.

    ``kept`` maps original features to simplified indices.  ``events`` is the
    chronological log of removals; restoring replays it backwards:

    * ``("fixed", f, value)``
    * ``("equiv", f, literal)`` -- ``f`` takes the value of an original literal
    * ``("elim", f, clauses)`` -- ``f`` picks a value satisfying the recorded
      clauses (original literal codes)
    """

    num_original: int
    kept: dict[int, int] = field(default_factory=dict)
    events: list[tuple] = field(default_factory=list)

    @property
    def num_simplified(self) -> int:
        return len(self.kept)

    @classmethod
    def identity(cls, n: int) -> "ReconstructionMap":
        return cls(n, {f: f for f in range(n)}, [])

    def disposition(self, f: int) -> tuple:
        if f in self.kept:
            return ("kept", self.kept[f])
        for ev in self.events:
            if ev[1] == f:
                return ev
        raise KeyError(f)

    def restore(self, config: Sequence[bool]) -> Configuration:
        if len(config) != len(self.kept):
            raise ValueError(f"configuration has {len(config)} features, expected {len(self.kept)}")
        full: list[bool | None] = [None] * self.num_original
        for f, j in self.kept.items():
            full[f] = bool(config[j])
        for ev in reversed(self.events):
            kind, f = ev[0], ev[1]
            if kind == "fixed":
                full[f] = ev[2]
            elif kind == "equiv":
                l = ev[2]
                full[f] = full[l >> 1] != bool(l & 1)
            else:
                full[f] = False
                if not all(_clause_sat(c, full) for c in ev[2]):
                    full[f] = True
        assert all(v is not None for v in full)
        return tuple(full)  # type: ignore[arg-type]

    def original_literal(self, literal: int) -> int:
        """Literal over the original feature that a simplified literal stands for."""
        inverse = {j: f for f, j in self.kept.items()}
        return 2 * inverse[literal >> 1] + (literal & 1)

    def to_json(self) -> dict:
        features = []
        for f in range(self.num_original):
            d = self.disposition(f)
            if d[0] == "kept":
                features.append({"kind": "kept", "simplified": d[1] + 1})
            elif d[0] == "fixed":
                features.append({"kind": "fixed", "value": d[2]})
            elif d[0] == "equiv":
                features.append({"kind": "equivalent", "literal": to_dimacs(d[2])})
            else:
                features.append({"kind": "eliminated",
                                 "clauses": [[to_dimacs(l) for l in c] for c in d[2]]})
        return {
            "num_original": self.num_original,
            "num_simplified": self.num_simplified,
            "features": features,
            "order": [ev[1] + 1 for ev in self.events],
        }

    @classmethod
    def from_json(cls, data: dict) -> "ReconstructionMap":
        rmap = cls(data["num_original"])
        feats = data["features"]
        for f, d in enumerate(feats):
            if d["kind"] == "kept":
                rmap.kept[f] = d["simplified"] - 1
        for fid in data["order"]:
            f = fid - 1
            d = feats[f]
            if d["kind"] == "fixed":
                rmap.events.append(("fixed", f, bool(d["value"])))
            elif d["kind"] == "equivalent":
                rmap.events.append(("equiv", f, from_dimacs(d["literal"])))
            else:
                rmap.events.append(("elim", f, [tuple(from_dimacs(v) for v in c) for c in d["clauses"]]))
        return rmap


def _clause_sat(c: Sequence[int], full: Sequence[bool | None]) -> bool:
    return any(full[l >> 1] is not None and full[l >> 1] != bool(l & 1) for l in c)


class _Simplifier:
    def __init__(self, model: FeatureModel):
        self.n = model.num_features
        self.concrete = set(model.concrete)
        self.clauses: set[tuple[int, ...]] = {tuple(sorted(c)) for c in model.clauses}
        self.events: list[tuple] = []
        self.removed: set[int] = set()
        self.fixed: dict[int, bool] = {}
        if () in self.clauses:
            raise Unsatisfiable("empty clause")

    # -- primitive edits -------------------------------------------------
    def fix(self, l: int) -> None:
        """Make literal ``l`` true and simplify the clause set."""
        f = l >> 1
        if f in self.fixed:
            if self.fixed[f] != (not l & 1):
                raise Unsatisfiable("feature fixed both ways")
            return
        if f in self.removed:
            return
        self.fixed[f] = not l & 1
        self.events.append(("fixed", f, not l & 1))
        self.removed.add(f)
        self.concrete.discard(f)
        out = set()
        for c in self.clauses:
            if l in c:
                continue
            if l ^ 1 in c:
                c = tuple(x for x in c if x != l ^ 1)
                if not c:
                    raise Unsatisfiable("empty clause after fixing")
            out.add(c)
        self.clauses = out

    def substitute(self, f: int, rep: int) -> None:
        """Replace feature ``f`` by literal ``rep`` (``x_f == rep``)."""
        self.events.append(("equiv", f, rep))
        self.removed.add(f)
        if f in self.concrete:
            self.concrete.discard(f)
            self.concrete.add(rep >> 1)
        pos, negl = 2 * f, 2 * f + 1
        out = set()
        for c in self.clauses:
            if pos in c or negl in c:
                mapped = set()
                taut = False
                for x in c:
                    y = rep if x == pos else rep ^ 1 if x == negl else x
                    if y ^ 1 in mapped:
                        taut = True
                        break
                    mapped.add(y)
                if taut:
                    continue
                c = tuple(sorted(mapped))
            out.add(c)
        self.clauses = out

    def units(self) -> bool:
        changed = False
        while True:
            unit = next((c for c in self.clauses if len(c) == 1), None)
            if unit is None:
                return changed
            self.fix(unit[0])
            changed = True

    def live_features(self) -> list[int]:
        return [f for f in range(self.n) if f not in self.removed]

    def _propagator(self) -> Propagator:
        return Propagator(ClauseDatabase(self.n, sorted(self.clauses)))

    # -- rules -------------------------------------------------------------
    def failed_and_equivalent(self) -> bool:
        changed = self.units()
        prop = self._propagator()
        # failed literals and literals implied by both polarities
        fixes: list[int] = []
        for f in self.live_features():
            up_pos = prop.up((2 * f,))
            up_neg = prop.up((2 * f + 1,))
            if up_pos is None and up_neg is None:
                raise Unsatisfiable("both polarities failed")
            if up_pos is None:
                fixes.append(2 * f + 1)
            elif up_neg is None:
                fixes.append(2 * f)
            else:
                fixes.extend(set(up_pos) & set(up_neg))
        if fixes:
            for l in fixes:
                if (l >> 1) not in self.removed:
                    self.fix(l)
            self.units()
            return True
        # equivalent literals: SCCs of the UP implication graph
        live = self.live_features()
        if not live:
            return changed
        rows, cols = [], []
        for f in live:
            for l in (2 * f, 2 * f + 1):
                for m in prop.up((l,)):
                    if m != l:
                        rows.append(l)
                        cols.append(m)
        if not rows:
            return changed
        size = 2 * self.n
        graph = csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(size, size))
        _, labels = connected_components(graph, directed=True, connection="strong")
        groups: dict[int, list[int]] = {}
        for f in live:
            for l in (2 * f, 2 * f + 1):
                groups.setdefault(int(labels[l]), []).append(l)
        for members in groups.values():
            if len(members) < 2:
                continue
            feats = {m >> 1 for m in members}
            if len(feats) < len(members):
                raise Unsatisfiable("literal equivalent to its negation")
            # a concrete representative keeps simplified concrete features concrete in the original
            rep = min(members, key=lambda m: ((m >> 1) not in self.concrete, m))
            for m in sorted(members):
                f = m >> 1
                if m == rep or f in self.removed or (rep >> 1) in self.removed:
                    continue
                if f in self.concrete and (rep >> 1) in self.concrete and len(self.concrete) <= 2:
                    continue
                self.substitute(f, rep if not m & 1 else rep ^ 1)
                changed = True
        if changed:
            self.units()
        return changed

    def eliminate_variables(self) -> bool:
        changed = False
        occ: dict[int, list[tuple[int, ...]]] = {}
        for c in self.clauses:
            for l in c:
                occ.setdefault(l, []).append(c)
        order = sorted((f for f in self.live_features() if f not in self.concrete),
                       key=lambda f: len(occ.get(2 * f, ())) + len(occ.get(2 * f + 1, ())))
        for f in order:
            pos = [c for c in self.clauses if 2 * f in c]
            negc = [c for c in self.clauses if 2 * f + 1 in c]
            resolvents = set()
            ok = True
            for a in pos:
                for b in negc:
                    r = set(a) | set(b)
                    r.discard(2 * f)
                    r.discard(2 * f + 1)
                    if any(x ^ 1 in r for x in r):
                        continue
                    resolvents.add(tuple(sorted(r)))
                    if len(resolvents) > len(pos) + len(negc):
                        ok = False
                        break
                if not ok:
                    break
            if not ok:
                continue
            if () in resolvents:
                raise Unsatisfiable("empty resolvent")
            self.events.append(("elim", f, pos + negc))
            self.removed.add(f)
            self.clauses.difference_update(pos)
            self.clauses.difference_update(negc)
            self.clauses.update(resolvents)
            changed = True
        if changed:
            self.units()
        return changed

    def vivify_and_subsume(self, budget: float | None = None) -> bool:
        changed = self.subsume()
        start = time.monotonic()
        for c in sorted(self.clauses, key=lambda c: (-len(c), c)):
            if budget is not None and time.monotonic() - start > budget:
                break
            if len(c) < 2 or c not in self.clauses:
                continue
            others = [d for d in self.clauses if d != c]
            prop = Propagator(ClauseDatabase(self.n, others))
            t = prop.trail
            t._backtrack(0)
            kept: list[int] = []
            shorter = None
            for l in c:
                if t.is_true(l):
                    shorter = kept + [l]
                    break
                if t.is_false(l):
                    continue
                kept.append(l)
                if not t.push_level((l ^ 1,)):
                    shorter = list(kept)
                    break
            else:
                shorter = kept
            t._backtrack(0)
            if shorter is not None and len(shorter) < len(c):
                if not shorter:
                    raise Unsatisfiable("vivified to the empty clause")
                self.clauses.discard(c)
                self.clauses.add(tuple(sorted(shorter)))
                changed = True
        if changed:
            self.units()
            self.subsume()
        return changed

    def subsume(self) -> bool:
        ordered = sorted(self.clauses, key=len)
        occ: dict[int, list[frozenset[int]]] = {}
        kept: set[tuple[int, ...]] = set()
        for c in ordered:
            s = frozenset(c)
            if any(d <= s for l in c for d in occ.get(l, ())):
                continue
            kept.add(c)
            for l in c:
                occ.setdefault(l, []).append(s)
        changed = len(kept) != len(self.clauses)
        self.clauses = kept
        return changed

    # -- result ------------------------------------------------------------
    def result(self) -> tuple[FeatureModel, ReconstructionMap]:
        live = self.live_features()
        index = {f: i for i, f in enumerate(live)}
        clauses = []
        for c in sorted(self.clauses):
            clauses.append(tuple(2 * index[l >> 1] + (l & 1) for l in c))
        concrete = frozenset(index[f] for f in self.concrete if f in index)
        model = FeatureModel(len(live), tuple(clauses), concrete)
        return model, ReconstructionMap(self.n, index, list(self.events))


def detect_failed_and_equivalent_literals(model: FeatureModel) -> tuple[FeatureModel, ReconstructionMap]:
    s = _Simplifier(model)
    s.failed_and_equivalent()
    return s.result()


def bounded_variable_elimination(model: FeatureModel) -> tuple[FeatureModel, ReconstructionMap]:
    s = _Simplifier(model)
    s.eliminate_variables()
    return s.result()


def vivify_and_subsume(model: FeatureModel) -> FeatureModel:
    """Logically equivalent model with shortened and non-subsumed clauses."""
    s = _Simplifier(model)
    s.vivify_and_subsume()
    out = FeatureModel(model.num_features, tuple(sorted(s.clauses)), model.concrete)
    if s.events:
        # units created by vivification are kept as unit clauses
        units = tuple((2 * ev[1] + (0 if ev[2] else 1),) for ev in s.events)
        out = FeatureModel(model.num_features, tuple(sorted(s.clauses)) + units, model.concrete)
    return out


def simplify(model: FeatureModel, max_rounds: int = MAX_ROUNDS,
             vivify_budget: float | None = 10.0) -> tuple[FeatureModel, ReconstructionMap]:
    """Run all formula rules to a fixed point (or ``max_rounds``)."""
    s = _Simplifier(model)
    s.units()
    for rnd in range(max_rounds):
        changed = s.failed_and_equivalent()
        changed |= s.eliminate_variables()
        changed |= s.vivify_and_subsume(vivify_budget)
        if not changed:
            break
    out, rmap = s.result()
    log.info("simplified %d features/%d clauses to %d/%d (concrete %d -> %d)",
             model.num_features, len(model.clauses), out.num_features, len(out.clauses),
             len(model.concrete), len(out.concrete))
    return out, rmap


def restore_sample(rmap: ReconstructionMap, sample: Iterable[Sequence[bool]]) -> list[Configuration]:
    return [rmap.restore(c) for c in sample]


def learn_infeasible_binaries(model: FeatureModel, infeasible: Iterable[Interaction]) -> FeatureModel:
    """Add clauses so that UP refutes every infeasible interaction."""
    db = ClauseDatabase.from_model(model)
    prop = Propagator(db)
    infeasible = sorted(set(infeasible))
    partners: dict[int, int] = {}
    for a, b in infeasible:
        partners[a] = partners.get(a, 0) + 1
        partners[b] = partners.get(b, 0) + 1
    k = len(model.concrete)
    added: list[tuple[int, ...]] = []
    # a literal infeasible with every concrete partner is infeasible on its own
    for l, count in sorted(partners.items()):
        if k >= 2 and count == 2 * (k - 1) and prop.up((l,)) is not None:
            db.add_clause((l ^ 1,))
            added.append((l ^ 1,))
    for a, b in infeasible:
        up_a = prop.up((a,))
        up_b = prop.up((b,))
        if (up_a is None or b ^ 1 in up_a) and (up_b is None or a ^ 1 in up_b):
            continue
        c = (a ^ 1, b ^ 1)
        db.add_clause(c)
        added.append(c)
    if not added:
        return model
    return FeatureModel(model.num_features, model.clauses + tuple(added), model.concrete)


ImplierMap = dict


def universe_reduce(model: FeatureModel, feasible: Iterable[Interaction],
                    budget: float = RULE2_BUDGET) -> tuple[list[Interaction], dict[Interaction, Interaction]]:
    """Drop interactions whose coverage is implied by another feasible one.

    Returns the retained interactions (sorted) and a map from each dropped
    interaction to a retained implier.
    """
    feasible_set = set(feasible)
    prop = Propagator(model)
    concrete = model.concrete
    implier: dict[Interaction, Interaction] = {}
    partners: dict[int, list[int]] = {}
    for a, b in feasible_set:
        partners.setdefault(a, []).append(b)
        partners.setdefault(b, []).append(a)
    # rule (I): l2 in UP(l1) makes {l2, l3} implied by {l1, l3}
    for l1 in sorted(partners):
        up = prop.up((l1,))
        if up is None:
            continue
        for l2 in up:
            if l2 == l1 or (l2 >> 1) not in concrete:
                continue
            for l3 in partners[l1]:
                if l3 >> 1 == l2 >> 1:
                    continue
                j = interaction(l2, l3)
                i = interaction(l1, l3)
                if j != i and j not in implier and j in feasible_set:
                    implier[j] = i
    # rule (II): every concrete pair inside UP(I) is implied by I
    deadline = time.monotonic() + budget
    for i in sorted(feasible_set):
        if time.monotonic() > deadline:
            break
        if i in implier:
            continue
        up = prop.up(i)
        if up is None:
            continue
        conc = sorted(l for l in up if (l >> 1) in concrete)
        for a, b in itertools.combinations(conc, 2):
            if a >> 1 == b >> 1:
                continue
            j = interaction(a, b)
            if j != i and j not in implier and j in feasible_set:
                implier[j] = i
    # point every implied interaction at a non-implied one, breaking cycles
    for j in sorted(implier):
        if j not in implier:
            continue
        path = [j]
        seen = {j}
        cur = implier[j]
        cycle = False
        while cur in implier:
            if cur in seen:
                cycle = True
                break
            seen.add(cur)
            path.append(cur)
            cur = implier[cur]
        if cycle:
            del implier[j]
            continue
        for p in path:
            implier[p] = cur
    retained = sorted(feasible_set - implier.keys())
    return retained, implier


def map_to_impliers(items: Iterable[Interaction], implier: dict[Interaction, Interaction]) -> list[Interaction]:
    out = []
    seen = set()
    for i in items:
        r = implier.get(i, i)
        if r not in seen:
            seen.add(r)
            out.append(r)
    return out
