"""Covering a set of interactions with a bounded number of configurations.

The core SAT model holds ``s`` copies of the formula plus one coverage
variable per (interaction, copy).  Members of a mutually exclusive set are
pinned to distinct copies, which both breaks symmetry and lets unit
propagation fix parts of those copies up front.
"""
from __future__ import annotations

import enum
import logging
import math
import os
import random
import subprocess
import tempfile
import time
from dataclasses import dataclass, field
from typing import Callable, Protocol, Sequence

from .model import Configuration, FeatureModel, Interaction, config_mask, covers
from .trails import ClauseDatabase, Propagator, Trail, Unsatisfiable

log = logging.getLogger(__name__)

SIMPLE_GROWTH = 0.025
SIMPLE_SWITCH = 0.33
GREEDY_GROWTH = 0.01
LB_ITERATIONS = 10

TRUE = -2
FALSE = -1


class SatBackend(Protocol):
    def new_var(self) -> int: ...
    def add_clause(self, lits: Sequence[int]) -> None: ...
    def solve(self, deadline: float | None = None, stop: Callable[[], bool] | None = None) -> bool | None: ...
    def value(self, var: int) -> bool: ...


class TrailBackend:
    """Incremental backend on top of the trail CDCL engine."""

    def __init__(self):
        self.db = ClauseDatabase(0)
        self.trail: Trail | None = None
        self._model: list[bool] = []
        self.calls = 0

    def new_var(self) -> int:
        return self.db.new_var()

    def add_clause(self, lits: Sequence[int]) -> None:
        self.db.add_clause(tuple(lits))

    def solve(self, deadline=None, stop=None) -> bool | None:
        self.calls += 1
        if self.trail is None:
            self.trail = Trail(self.db)
        t = self.trail
        try:
            t.reset()
            ok = t.solve(deadline=deadline, stop=stop)
        except Unsatisfiable:
            return False
        if ok:
            self._model = [t.value[2 * v] == 1 for v in range(self.db.num_vars)]
        return ok

    def value(self, var: int) -> bool:
        return self._model[var]


class DimacsBackend:
    """Non-incremental handoff to an external solver executable.

    The solver receives a DIMACS file path as its last argument and must
    print ``s SATISFIABLE``/``s UNSATISFIABLE`` and ``v`` lines.
    """

    def __init__(self, command: Sequence[str]):
        self.command = list(command)
        self.num_vars = 0
        self.clauses: list[tuple[int, ...]] = []
        self._model: dict[int, bool] = {}
        self.calls = 0

    def new_var(self) -> int:
        self.num_vars += 1
        return self.num_vars - 1

    def add_clause(self, lits: Sequence[int]) -> None:
        self.clauses.append(tuple(lits))

    def to_dimacs(self) -> str:
        lines = [f"p cnf {self.num_vars} {len(self.clauses)}"]
        for c in self.clauses:
            lines.append(" ".join(str(-(l >> 1) - 1 if l & 1 else (l >> 1) + 1) for l in c) + " 0")
        return "\n".join(lines) + "\n"

    def solve(self, deadline=None, stop=None) -> bool | None:
        self.calls += 1
        timeout = None if deadline is None else max(deadline - time.monotonic(), 0.01)
        fd, path = tempfile.mkstemp(suffix=".cnf")
        try:
            with os.fdopen(fd, "w") as fh:
                fh.write(self.to_dimacs())
            try:
                proc = subprocess.run(self.command + [path], capture_output=True, text=True, timeout=timeout)
            except subprocess.TimeoutExpired:
                return None
        finally:
            os.unlink(path)
        return self.parse_output(proc.stdout)

    def parse_output(self, text: str) -> bool | None:
        status = None
        values: dict[int, bool] = {}
        for line in text.splitlines():
            if line.startswith("s "):
                word = line[2:].strip()
                status = True if word == "SATISFIABLE" else False if word == "UNSATISFIABLE" else None
            elif line.startswith("v "):
                for tok in line[2:].split():
                    v = int(tok)
                    if v:
                        values[abs(v) - 1] = v > 0
        self._model = values
        return status

    def value(self, var: int) -> bool:
        return self._model.get(var, False)


class CoreModel:
    """SAT model: does a cover of the added targets with ``s`` configurations exist?"""

    def __init__(self, model: FeatureModel, s: int, exclusive: Sequence[Interaction] = (),
                 backend: SatBackend | None = None, prop: Propagator | None = None):
        if len(exclusive) > s:
            raise ValueError("exclusive set larger than the configuration budget")
        self.model = model
        self.s = s
        self.backend = backend or TrailBackend()
        self.unsat = False
        self.exclusive = list(exclusive)
        prop = prop or Propagator(model)
        self.pinned: list[frozenset[int]] = []
        for u in self.exclusive:
            up = prop.up(u)
            if up is None:
                raise ValueError(f"exclusive member {u} is infeasible")
            self.pinned.append(frozenset(up))
        n = model.num_features
        self.copies: list[list[int]] = []
        self.num_feature_vars = 0
        for i in range(s):
            fixed = self.pinned[i] if i < len(self.pinned) else frozenset()
            row = []
            for f in range(n):
                if 2 * f in fixed:
                    row.append(TRUE)
                elif 2 * f + 1 in fixed:
                    row.append(FALSE)
                else:
                    row.append(2 * self.backend.new_var())
                    self.num_feature_vars += 1
            self.copies.append(row)
        for i in range(s):
            for c in model.clauses:
                self._clause([self.lit(i, l) for l in c])
        self.targets: list[Interaction] = []
        self.target_set: set[Interaction] = set()
        self.forced_literals: set[int] = set()
        self.num_coverage_vars = 0

    def lit(self, i: int, l: int) -> int:
        v = self.copies[i][l >> 1]
        if v < 0:
            return v if not l & 1 else (TRUE if v == FALSE else FALSE)
        return v ^ (l & 1)

    def _clause(self, lits: Sequence[int]) -> None:
        out = []
        for l in lits:
            if l == TRUE:
                return
            if l != FALSE:
                out.append(l)
        if not out:
            self.unsat = True
            return
        self.backend.add_clause(out)

    def add_targets(self, inters: Sequence[Interaction]) -> None:
        for inter in inters:
            if inter in self.target_set:
                continue
            self.target_set.add(inter)
            self.targets.append(inter)
            a, b = inter
            ys = []
            for i in range(self.s):
                la, lb = self.lit(i, a), self.lit(i, b)
                if la == FALSE or lb == FALSE:
                    continue
                if la == TRUE and lb == TRUE:
                    ys = None
                    break
                if la == TRUE:
                    ys.append(lb)
                elif lb == TRUE:
                    ys.append(la)
                else:
                    y = 2 * self.backend.new_var()
                    self.num_coverage_vars += 1
                    self.backend.add_clause((y, la ^ 1, lb ^ 1))
                    self.backend.add_clause((y ^ 1, la))
                    self.backend.add_clause((y ^ 1, lb))
                    ys.append(y)
            if ys is not None:
                self._clause(ys)
            for l in inter:
                if l not in self.forced_literals:
                    self.forced_literals.add(l)
                    self._clause([self.lit(i, l) for i in range(self.s)])

    def solve(self, deadline=None, stop=None) -> bool | None:
        if self.unsat:
            return False
        return self.backend.solve(deadline=deadline, stop=stop)

    def extract(self) -> list[Configuration]:
        out = []
        for row in self.copies:
            out.append(tuple(v == TRUE if v < 0 else self.backend.value(v >> 1) for v in row))
        return out


class Outcome(enum.Enum):
    IMPROVED = "Improved"
    INFEASIBLE = "Infeasible"
    TIMED_OUT = "TimedOut"


@dataclass
class RepairResult:
    outcome: Outcome
    sample: list[Configuration] = field(default_factory=list)
    exclusive: list[Interaction] = field(default_factory=list)
    sat_calls: int = 0


def _uncovered(sample: Sequence[Configuration], targets: Sequence[Interaction]) -> list[Interaction]:
    masks = [config_mask(c) for c in sample]
    return [i for i in targets if not any((m >> i[0]) & (m >> i[1]) & 1 for m in masks)]


def _finish(model: FeatureModel, sample: list[Configuration], targets, exclusive, calls) -> RepairResult:
    sample = list(dict.fromkeys(sample))
    assert all(model.is_satisfied_by(c) for c in sample), "backend returned an invalid configuration"
    assert not _uncovered(sample, targets), "extracted sample misses targets"
    return RepairResult(Outcome.IMPROVED, sample, list(exclusive), calls)


def _trivial(model: FeatureModel, targets, exclusive, s) -> RepairResult | None:
    if len(exclusive) > s:
        return RepairResult(Outcome.INFEASIBLE, exclusive=list(exclusive))
    if s <= 0:
        return RepairResult(Outcome.IMPROVED if not targets else Outcome.INFEASIBLE, [], list(exclusive))
    return None


def repair_non_incremental(model: FeatureModel, targets: Sequence[Interaction],
                           exclusive: Sequence[Interaction], s: int, deadline=None, stop=None,
                           backend_factory=TrailBackend, **_) -> RepairResult:
    early = _trivial(model, targets, exclusive, s)
    if early:
        return early
    cm = CoreModel(model, s, exclusive, backend_factory())
    cm.add_targets(targets)
    r = cm.solve(deadline, stop)
    if r is None:
        return RepairResult(Outcome.TIMED_OUT, exclusive=list(exclusive), sat_calls=1)
    if not r:
        return RepairResult(Outcome.INFEASIBLE, exclusive=list(exclusive), sat_calls=1)
    return _finish(model, cm.extract(), targets, exclusive, 1)


def repair_simple_incremental(model: FeatureModel, targets: Sequence[Interaction],
                              exclusive: Sequence[Interaction], s: int, deadline=None, stop=None,
                              rng: random.Random | None = None, backend_factory=TrailBackend,
                              **_) -> RepairResult:
    early = _trivial(model, targets, exclusive, s)
    if early:
        return early
    rng = rng or random.Random(0)
    cm = CoreModel(model, s, exclusive, backend_factory())
    cm.add_targets(exclusive)
    floor = max(1, math.ceil(SIMPLE_GROWTH * len(targets)))
    calls = 0
    while True:
        calls += 1
        r = cm.solve(deadline, stop)
        if r is None:
            return RepairResult(Outcome.TIMED_OUT, exclusive=list(exclusive), sat_calls=calls)
        if not r:
            return RepairResult(Outcome.INFEASIBLE, exclusive=list(exclusive), sat_calls=calls)
        sample = cm.extract()
        missing = _uncovered(sample, targets)
        if not missing:
            return _finish(model, sample, targets, exclusive, calls)
        current = len(cm.targets)
        if len(missing) > max(current, 1):
            missing = rng.sample(missing, max(current, 1))
        if len(missing) < floor:
            chosen = set(missing)
            spare = [i for i in targets if i not in cm.target_set and i not in chosen]
            missing += rng.sample(spare, min(len(spare), floor - len(missing)))
        if current + len(missing) > SIMPLE_SWITCH * len(targets):
            missing = list(targets)
        cm.add_targets(missing)


class _GrowOnly:
    """Partial configurations that only ever gain literals (no learning)."""

    def __init__(self, model: FeatureModel):
        self.db = ClauseDatabase.from_model(model)
        self.model = model
        self.trails: list[Trail] = []

    def new_trail(self, inters: Sequence[Interaction]) -> Trail | None:
        t = Trail(self.db, learn=False)
        lits = [l for i in inters for l in i]
        if not t.push_level(lits):
            return None
        self.trails.append(t)
        return t

    def candidates(self, inter: Interaction) -> list[int]:
        a, b = inter
        return [k for k, t in enumerate(self.trails) if not t.is_false(a) and not t.is_false(b)]

    def covered(self, inter: Interaction) -> bool:
        a, b = inter
        return any(t.is_true(a) and t.is_true(b) for t in self.trails)

    def try_push(self, inter: Interaction) -> bool:
        a, b = inter
        order = sorted(self.candidates(inter),
                       key=lambda k: (-(self.trails[k].is_true(a) + self.trails[k].is_true(b)), k))
        for k in order:
            if self.trails[k].push_level(inter):
                return True
        return False

    def complete(self) -> list[Configuration] | None:
        """Full configurations extending every trail, or None."""
        out = []
        n = self.model.num_features
        for t in self.trails:
            solver = Trail(self.db)
            try:
                ok = solver.solve(assumptions=t.literals())
            except Unsatisfiable:
                return None
            if not ok:
                return None
            out.append(solver.assignment(n))
        return out


def _greedy_core(model: FeatureModel, targets: Sequence[Interaction], exclusive: Sequence[Interaction],
                 s: int, deadline, stop, rng: random.Random, backend_factory,
                 lb_step: Callable | None) -> RepairResult:
    early = _trivial(model, targets, exclusive, s)
    if early:
        return early
    exclusive = list(exclusive)
    prop = Propagator(model)
    chosen: list[Interaction] = []  # explicitly covered, grows only
    chosen_set: set[Interaction] = set()

    def choose(i: Interaction) -> None:
        if i not in chosen_set:
            chosen_set.add(i)
            chosen.append(i)

    for u in exclusive:
        choose(u)
    grow = _GrowOnly(model)
    for u in exclusive:
        grow.new_trail([u])
    cm: CoreModel | None = None
    calls = 0
    last_size = -1
    min_growth = max(1, math.ceil(GREEDY_GROWTH * len(targets)))
    while True:
        if deadline is not None and time.monotonic() > deadline or (stop is not None and stop()):
            return RepairResult(Outcome.TIMED_OUT, exclusive=exclusive, sat_calls=calls)
        # heuristic phase: cover what fits without exceeding s trails
        blocked = False
        pending = [i for i in targets if not grow.covered(i)]
        pending.sort(key=lambda i: len(grow.candidates(i)))
        for inter in pending:
            if grow.covered(inter):
                continue
            if grow.try_push(inter):
                choose(inter)
                continue
            if len(grow.trails) < s and grow.new_trail([inter]) is not None:
                choose(inter)
                continue
            blocked = True
            break
        if not blocked:
            sample = grow.complete()
            if sample is not None and not _uncovered(sample, targets):
                return _finish(model, sample, targets, exclusive, calls)
        # SAT phase: first enlarge the chosen set
        uncovered = [i for i in targets if not grow.covered(i)]
        for i in uncovered:
            if len(grow.candidates(i)) <= 1:
                choose(i)
        if len(chosen) - max(last_size, 0) < min_growth or last_size < 0 and not chosen:
            rest = sorted((i for i in uncovered if i not in chosen_set), key=lambda i: len(grow.candidates(i)))
            rest += [i for i in targets if i not in chosen_set and i not in set(rest)]
            for i in rest[:max(0, min_growth - (len(chosen) - max(last_size, 0)))]:
                choose(i)
        if lb_step is not None:
            bigger = lb_step(chosen, grow, exclusive)
            if bigger is not None and len(bigger) > len(exclusive):
                exclusive = list(bigger)
                for u in exclusive:
                    choose(u)
                if len(exclusive) > s:
                    return RepairResult(Outcome.INFEASIBLE, exclusive=exclusive, sat_calls=calls)
                cm = None  # symmetry breaker changed: rebuild
        if cm is None:
            cm = CoreModel(model, s, exclusive, backend_factory(), prop)
        cm.add_targets(chosen)
        last_size = len(chosen)
        calls += 1
        r = cm.solve(deadline, stop)
        if r is None:
            return RepairResult(Outcome.TIMED_OUT, exclusive=exclusive, sat_calls=calls)
        if not r:
            return RepairResult(Outcome.INFEASIBLE, exclusive=exclusive, sat_calls=calls)
        sample = cm.extract()
        if not _uncovered(sample, targets):
            return _finish(model, sample, targets, exclusive, calls)
        # reassign chosen interactions to the copies that cover them
        groups: list[list[Interaction]] = [[] for _ in range(s)]
        masks = [config_mask(c) for c in sample]
        for i in chosen:
            k = next(k for k, m in enumerate(masks) if (m >> i[0]) & (m >> i[1]) & 1)
            groups[k].append(i)
        grow = _GrowOnly(model)
        for g in groups:
            t = grow.new_trail(g)
            assert t is not None, "subset of a valid configuration must propagate"


def repair_greedy_incremental(model: FeatureModel, targets: Sequence[Interaction],
                              exclusive: Sequence[Interaction], s: int, deadline=None, stop=None,
                              rng: random.Random | None = None, backend_factory=TrailBackend,
                              **_) -> RepairResult:
    return _greedy_core(model, targets, exclusive, s, deadline, stop, rng or random.Random(0),
                        backend_factory, None)


def repair_alternating_lbub(model: FeatureModel, targets: Sequence[Interaction],
                            exclusive: Sequence[Interaction], s: int, deadline=None, stop=None,
                            rng: random.Random | None = None, backend_factory=TrailBackend,
                            lb_iterations: int = LB_ITERATIONS, graph=None, **_) -> RepairResult:
    """Greedy incremental with a short clique search before every SAT call."""
    rng = rng or random.Random(0)
    if lb_iterations <= 0:
        return _greedy_core(model, targets, exclusive, s, deadline, stop, rng, backend_factory, None)
    from .lowerbound import ConflictGraph, CutPriceRound
    g = graph or ConflictGraph(model)

    def lb_step(chosen, grow, current):
        rows = [t.mask for t in grow.trails]
        cpr = CutPriceRound(g, targets, rows, chosen, current, rng=rng)
        best, _ = cpr.run(max_iterations=lb_iterations, deadline=deadline, stop=stop)
        return best

    return _greedy_core(model, targets, exclusive, s, deadline, stop, rng, backend_factory, lb_step)


STRATEGIES = {
    "non_incremental": repair_non_incremental,
    "simple_incremental": repair_simple_incremental,
    "greedy_incremental": repair_greedy_incremental,
    "alternating_lbub": repair_alternating_lbub,
}


@dataclass
class FullResult:
    sample: list[Configuration] | None
    lower_bound: int
    optimal: bool
    exclusive: list[Interaction]


def full_problem_solve(model: FeatureModel, universe: Sequence[Interaction], clique: Sequence[Interaction],
                       best_sample: Sequence[Configuration] | None = None, deadline=None, stop=None,
                       rng: random.Random | None = None, on_bound: Callable[[int], None] | None = None,
                       lb_iterations: int = LB_ITERATIONS) -> FullResult:
    """Exact search with a growing configuration count, starting at the clique bound."""
    rng = rng or random.Random(0)
    exclusive = list(clique)
    if not universe:
        lb = 1
        try:
            t = Trail(ClauseDatabase.from_model(model))
            t.complete()
        except Unsatisfiable:
            return FullResult([], 0, True, [])
        return FullResult([t.assignment(model.num_features)], lb, True, [])
    lb = max(len(exclusive), 1)
    ub = len(best_sample) if best_sample is not None else math.inf
    s = lb
    while s < ub:
        res = repair_alternating_lbub(model, universe, exclusive, s, deadline, stop, rng,
                                      lb_iterations=lb_iterations)
        if len(res.exclusive) > len(exclusive):
            exclusive = res.exclusive
            if len(exclusive) > lb:
                lb = len(exclusive)
                if on_bound:
                    on_bound(lb)
        if res.outcome is Outcome.IMPROVED:
            return FullResult(res.sample, max(lb, len(res.sample)), True, exclusive)
        if res.outcome is Outcome.TIMED_OUT:
            return FullResult(None, lb, False, exclusive)
        lb = max(lb, s + 1)
        if on_bound:
            on_bound(lb)
        s = max(s + 1, len(exclusive))
    return FullResult(list(best_sample) if best_sample is not None else None, lb, lb >= ub, exclusive)
