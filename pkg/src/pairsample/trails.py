"""Multi-trail CDCL engine.

Many partial configurations (trails) share one append-only clause
database.  Clauses are never reordered, so every trail keeps its own pair of
watched literals per clause.  Clauses appended by one trail (learned
clauses) are picked up lazily by the others at the start of their next
operation.
"""
from __future__ import annotations

import heapq
import threading
import time
from typing import Callable, Iterable, Sequence

from .model import Configuration, FeatureModel, Interaction


class Unsatisfiable(Exception):
    """The clause database has no satisfying assignment."""


class ClauseDatabase:
    """Append-only clause store; clause handles are list indices."""

    def __init__(self, num_vars: int = 0, clauses: Iterable[Sequence[int]] = ()):
        self.num_vars = num_vars
        self.clauses: list[tuple[int, ...]] = []
        self.num_learned = 0
        for c in clauses:
            self.add_clause(c)
        self.num_original = len(self.clauses)

    @classmethod
    def from_model(cls, model: FeatureModel) -> "ClauseDatabase":
        return cls(model.num_features, model.clauses)

    def new_var(self) -> int:
        self.num_vars += 1
        return self.num_vars - 1

    def add_clause(self, literals: Sequence[int], learned: bool = False) -> int:
        c = tuple(literals)
        for l in c:
            if l >> 1 >= self.num_vars:
                self.num_vars = (l >> 1) + 1
        self.clauses.append(c)
        if learned:
            self.num_learned += 1
        return len(self.clauses) - 1

    @property
    def learned(self) -> list[tuple[int, ...]]:
        return [c for c in self.clauses[self.num_original:]]


def luby(i: int) -> int:
    """The i-th element (0-based) of the Luby sequence 1,1,2,1,1,2,4,..."""
    size, seq = 1, 0
    while size < i + 1:
        seq += 1
        size = 2 * size + 1
    while size - 1 != i:
        size = (size - 1) >> 1
        seq -= 1
        i = i % size
    return 1 << seq


class Trail:
    """One partial configuration over a shared :class:`ClauseDatabase`.

    ``learn=False`` turns the trail into a plain unit propagator: conflicts
    pop the offending level instead of learning.
    """

    RESTART_BASE = 32

    def __init__(self, db: ClauseDatabase, learn: bool = True):
        self.db = db
        self.learn = learn
        self.n = 0
        self.value: list[int] = []
        self.level: list[int] = []
        self.reason: list[int] = []
        self.phase: list[bool] = []
        self.activity: list[float] = []
        self.watches: list[list[int]] = []
        self.watch: list[list[int] | None] = []
        self.stack: list[int] = []
        self.lim: list[int] = []
        self.qhead = 0
        self.nsync = 0
        self.goal: list[int] = []
        self.failed: list[int] = []
        self.var_inc = 1.0
        self.heap: list[tuple[float, int]] = []
        self._seen: list[int] = []
        self._version = 0
        self._mask_cache = (-1, 0)
        self.num_conflicts = 0
        self._grow(db.num_vars)

    # -- bookkeeping -----------------------------------------------------
    def _grow(self, n: int) -> None:
        if n <= self.n:
            return
        extra = n - self.n
        self.value.extend([0] * (2 * extra))
        self.level.extend([0] * extra)
        self.reason.extend([-1] * extra)
        self.phase.extend([False] * extra)
        self.activity.extend([0.0] * extra)
        self._seen.extend([0] * extra)
        self.watches.extend([] for _ in range(2 * extra))
        for v in range(self.n, n):
            heapq.heappush(self.heap, (0.0, v))
        self.n = n

    @property
    def decision_level(self) -> int:
        return len(self.lim)

    def _new_level(self) -> None:
        self.lim.append(len(self.stack))

    def _assign(self, l: int, reason: int) -> None:
        self.value[l] = 1
        self.value[l ^ 1] = -1
        v = l >> 1
        self.level[v] = len(self.lim)
        self.reason[v] = reason
        self.stack.append(l)
        self._version += 1

    def _backtrack(self, lvl: int) -> None:
        if len(self.lim) <= lvl:
            return
        start = self.lim[lvl]
        value, reason, phase, heap, act = self.value, self.reason, self.phase, self.heap, self.activity
        for l in self.stack[start:]:
            value[l] = 0
            value[l ^ 1] = 0
            v = l >> 1
            reason[v] = -1
            phase[v] = not l & 1
            heapq.heappush(heap, (-act[v], v))
        del self.stack[start:]
        del self.lim[lvl:]
        if self.qhead > start:
            self.qhead = start
        self._version += 1

    def _watch_clause(self, ci: int, a: int, b: int) -> None:
        self.watch[ci] = [a, b]
        self.watches[a].append(ci)
        self.watches[b].append(ci)

    # -- clause synchronisation -----------------------------------------
    def _sync(self) -> bool:
        """Attach clauses added to the database since the last call.

        Returns True if the trail had to backtrack to stay consistent.
        """
        db = self.db
        if db.num_vars > self.n:
            self._grow(db.num_vars)
        clauses = db.clauses
        backtracked = False
        value, level = self.value, self.level
        while self.nsync < len(clauses):
            ci = self.nsync
            self.nsync += 1
            self.watch.append(None)
            c = clauses[ci]
            if not c:
                raise Unsatisfiable("empty clause")
            if len(c) == 1:
                u = c[0]
                if value[u] == 1 and level[u >> 1] == 0:
                    continue
                if value[u] == -1 and level[u >> 1] == 0:
                    raise Unsatisfiable("conflicting unit clauses")
                if self.lim:
                    self._backtrack(0)
                    backtracked = True
                if value[u] == 0:
                    self._assign(u, ci)
                continue
            nonfalse = [l for l in c if value[l] != -1]
            if len(nonfalse) >= 2:
                self._watch_clause(ci, nonfalse[0], nonfalse[1])
                continue
            falses = sorted((l for l in c if value[l] == -1), key=lambda l: -level[l >> 1])
            if len(nonfalse) == 1:
                u = nonfalse[0]
                top = falses[0]
                m = level[top >> 1]
                if value[u] == 1 and level[u >> 1] <= m:
                    self._watch_clause(ci, u, top)
                    continue
                if len(self.lim) > m:
                    self._backtrack(m)
                    backtracked = True
                self._watch_clause(ci, u, top)
                if value[u] == 0:
                    self._assign(u, ci)
                continue
            l1, l2 = falses[0], falses[1]
            m1, m2 = level[l1 >> 1], level[l2 >> 1]
            if m1 == 0:
                raise Unsatisfiable("clause falsified at level 0")
            self._watch_clause(ci, l1, l2)
            if m1 > m2:
                self._backtrack(m2)
                self._assign(l1, ci)
            else:
                self._backtrack(m1 - 1)
            backtracked = True
        return backtracked

    # -- propagation -------------------------------------------------------
    def _propagate(self) -> int:
        """Unit propagation; returns a conflicting clause handle or -1."""
        value, watches, watch = self.value, self.watches, self.watch
        clauses = self.db.clauses
        stack, level, reason = self.stack, self.level, self.reason
        lvl = len(self.lim)
        while self.qhead < len(stack):
            fl = stack[self.qhead] ^ 1
            self.qhead += 1
            ws = watches[fl]
            n = len(ws)
            i = j = 0
            while i < n:
                ci = ws[i]
                i += 1
                w = watch[ci]
                if w[0] == fl:
                    other, slot = w[1], 0
                else:
                    other, slot = w[0], 1
                if value[other] == 1:
                    ws[j] = ci
                    j += 1
                    continue
                for l in clauses[ci]:
                    if value[l] != -1 and l != other:
                        w[slot] = l
                        watches[l].append(ci)
                        break
                else:
                    ws[j] = ci
                    j += 1
                    if value[other] == -1:
                        while i < n:
                            ws[j] = ws[i]
                            j += 1
                            i += 1
                        del ws[j:]
                        return ci
                    value[other] = 1
                    value[other ^ 1] = -1
                    v = other >> 1
                    level[v] = lvl
                    reason[v] = ci
                    stack.append(other)
            del ws[j:]
        self._version += 1
        return -1

    # -- conflict analysis -----------------------------------------------
    def _bump(self, v: int) -> None:
        act = self.activity
        act[v] += self.var_inc
        if act[v] > 1e100:
            for k in range(self.n):
                act[k] *= 1e-100
            self.var_inc *= 1e-100
            self.heap = [(-act[k], k) for k in range(self.n) if self.value[2 * k] == 0]
            heapq.heapify(self.heap)
        elif self.value[2 * v] == 0:
            heapq.heappush(self.heap, (-act[v], v))

    def _analyze(self, confl: int) -> tuple[list[int], int]:
        clauses, level, reason, stack = self.db.clauses, self.level, self.reason, self.stack
        seen = self._seen
        lvl = len(self.lim)
        touched = []
        learnt = [0]
        counter = 0
        p = -1
        idx = len(stack) - 1
        c = clauses[confl]
        while True:
            for q in c:
                if q == p:
                    continue
                v = q >> 1
                if not seen[v] and level[v] > 0:
                    seen[v] = 1
                    touched.append(v)
                    self._bump(v)
                    if level[v] >= lvl:
                        counter += 1
                    else:
                        learnt.append(q)
            while not seen[stack[idx] >> 1]:
                idx -= 1
            p = stack[idx]
            idx -= 1
            seen[p >> 1] = 0
            counter -= 1
            if counter <= 0:
                break
            c = clauses[reason[p >> 1]]
        learnt[0] = p ^ 1
        # local minimisation: drop literals implied by other learnt literals
        if len(learnt) > 2:
            keep = [learnt[0]]
            for q in learnt[1:]:
                r = reason[q >> 1]
                if r < 0:
                    keep.append(q)
                    continue
                for x in clauses[r]:
                    vx = x >> 1
                    if vx != q >> 1 and not seen[vx] and level[vx] > 0:
                        keep.append(q)
                        break
            learnt = keep
        for v in touched:
            seen[v] = 0
        self.var_inc /= 0.95
        if len(learnt) == 1:
            return learnt, 0
        best = 1
        for k in range(2, len(learnt)):
            if level[learnt[k] >> 1] > level[learnt[best] >> 1]:
                best = k
        learnt[1], learnt[best] = learnt[best], learnt[1]
        return learnt, level[learnt[1] >> 1]

    def analyze_conflict_and_backjump(self, confl: int) -> int:
        """Learn a first-UIP clause from ``confl``, backjump and assert it.

        Returns the handle of the learned clause.  Raises
        :class:`Unsatisfiable` for conflicts at decision level zero.
        """
        if not self.lim:
            raise Unsatisfiable("conflict at level 0")
        top = max(self.level[l >> 1] for l in self.db.clauses[confl])
        if top == 0:
            raise Unsatisfiable("conflict at level 0")
        if top < len(self.lim):
            self._backtrack(top)
        learnt, bt = self._analyze(confl)
        self.num_conflicts += 1
        ci = self.db.add_clause(learnt, learned=True)
        # every earlier clause is already attached, so this one is next in line
        self.watch.append(None)
        self.nsync = ci + 1
        self._backtrack(bt)
        if len(learnt) > 1:
            self._watch_clause(ci, learnt[0], learnt[1])
        self._assign(learnt[0], ci)
        return ci

    def _resolve(self, confl: int) -> None:
        while confl >= 0:
            self.analyze_conflict_and_backjump(confl)
            confl = self._propagate()

    def _replay(self) -> None:
        """Re-decide goal literals lost through backjumping."""
        value = self.value
        while True:
            again = False
            for l in self.goal:
                if value[l] != 0:
                    continue
                self._new_level()
                self._assign(l, -1)
                confl = self._propagate()
                if confl >= 0:
                    self._resolve(confl)
                    again = True
                    break
            if not again:
                break
        kept = []
        for l in self.goal:
            if value[l] == 1:
                kept.append(l)
            else:
                self.failed.append(l)
        self.goal = kept

    def _settle(self) -> None:
        backtracked = self._sync()
        confl = self._propagate()
        if confl >= 0:
            if not self.lim:
                raise Unsatisfiable("conflict at level 0")
            if not self.learn:
                # only reachable after foreign clauses were attached
                self._backtrack(0)
                confl = self._propagate()
                if confl >= 0:
                    raise Unsatisfiable("conflict at level 0")
            else:
                self._resolve(confl)
            backtracked = True
        if backtracked and self.learn:
            self._replay()

    # -- public operations ---------------------------------------------------
    def push_and_propagate(self, literals: Iterable[int]) -> bool:
        """Add ``literals`` as decisions and propagate.

        On conflict a clause is learned (unless ``learn=False``), the push is
        reverted and False is returned; the trail is conflict-free either way.
        """
        self._settle()
        value = self.value
        new = []
        for l in literals:
            if l >> 1 >= self.n:
                self._grow((l >> 1) + 1)
                value = self.value
            if value[l] == -1:
                return False
            if value[l] == 0 and l not in new:
                new.append(l)
        base = len(self.lim)
        for l in new:
            if value[l] == 1:
                continue
            if value[l] == -1:
                self._backtrack(base)
                return False
            self._new_level()
            self._assign(l, -1)
            confl = self._propagate()
            if confl >= 0:
                if not self.learn:
                    self._backtrack(base)
                    return False
                self._resolve(confl)
                self._backtrack(base)
                self._replay()
                return False
        for l in literals:
            if l not in self.goal:
                self.goal.append(l)
        return True

    def push_level(self, literals: Iterable[int]) -> bool:
        """Open one decision level holding ``literals``; no learning.

        On conflict the level is popped and False returned.
        """
        self._sync_plain()
        value = self.value
        base = len(self.lim)
        self._new_level()
        for l in literals:
            if value[l] == 1:
                continue
            if value[l] == -1:
                self._backtrack(base)
                return False
            self._assign(l, -1)
        if self._propagate() >= 0:
            self._backtrack(base)
            return False
        return True

    def pop_level(self) -> None:
        self._backtrack(len(self.lim) - 1)

    def reset(self) -> None:
        self._backtrack(0)
        self.goal = []
        self.failed = []
        self._settle()

    def _sync_plain(self) -> None:
        if self.nsync < len(self.db.clauses) or self.db.num_vars > self.n:
            self._sync()
            if self._propagate() < 0:
                return
            if self.lim:
                self._backtrack(0)
                if self._propagate() < 0:
                    return
            raise Unsatisfiable("conflict at level 0")

    def probe(self, literals: Iterable[int]) -> list[int] | None:
        """UP closure of the current trail plus ``literals`` (not kept)."""
        if not self.push_level(literals):
            return None
        out = list(self.stack)
        self.pop_level()
        return out

    def solve(self, assumptions: Sequence[int] = (), preferred: Sequence[int] = (),
              deadline: float | None = None, stop: Callable[[], bool] | None = None,
              conflict_limit: int | None = None) -> bool | None:
        """CDCL search for a total assignment.

        Returns True (trail is total), False (some assumption is refuted), or
        None when stopped by ``deadline``/``stop``/``conflict_limit``.  Raises
        :class:`Unsatisfiable` if the database itself is unsatisfiable.
        Preferred literals are soft decisions, retried whenever open.
        """
        self._settle()
        value, phase = self.value, self.phase
        nassume = len(assumptions)
        conflicts = 0
        restarts = 0
        next_restart = luby(0) * self.RESTART_BASE
        pref = list(preferred)
        while True:
            confl = self._propagate()
            if confl >= 0:
                conflicts += 1
                self.analyze_conflict_and_backjump(confl)
                if conflicts >= next_restart:
                    restarts += 1
                    next_restart = conflicts + luby(restarts) * self.RESTART_BASE
                    self._backtrack(0)
                if conflicts & 63 == 0:
                    if conflict_limit is not None and conflicts >= conflict_limit:
                        return None
                    if deadline is not None and time.monotonic() > deadline:
                        return None
                    if stop is not None and stop():
                        return None
                continue
            lvl = len(self.lim)
            if lvl < nassume:
                a = assumptions[lvl]
                if value[a] == -1:
                    return False
                self._new_level()
                if value[a] == 0:
                    self._assign(a, -1)
                continue
            chosen = -1
            for l in pref:
                if value[l] == 0:
                    chosen = l
                    break
            if chosen < 0:
                heap = self.heap
                while heap:
                    _, v = heapq.heappop(heap)
                    if value[2 * v] == 0:
                        chosen = 2 * v + (0 if phase[v] else 1)
                        break
                if chosen < 0:
                    return True
                if len(heap) > 8 * self.n + 64:
                    self.heap = [(-self.activity[k], k) for k in range(self.n) if value[2 * k] == 0]
                    heapq.heapify(self.heap)
            self._new_level()
            self._assign(chosen, -1)

    def complete(self) -> bool:
        """Extend the trail to a total satisfying assignment.

        Returns True iff every literal true before the call is still true.
        Goal literals knocked out by conflict resolution are retried before
        any fresh decision.  Raises :class:`Unsatisfiable` if no completion
        exists at all.
        """
        self._settle()
        before = list(self.stack)
        goal = list(self.goal)
        retry = [l for l in dict.fromkeys(self.failed) if l not in goal]
        ok = self.solve(preferred=goal + retry)
        assert ok
        value = self.value
        self.goal = [l for l in goal if value[l] == 1]
        return all(value[l] == 1 for l in before)

    # -- inspection --------------------------------------------------------
    def is_true(self, l: int) -> bool:
        return self.value[l] == 1

    def is_false(self, l: int) -> bool:
        return self.value[l] == -1

    def literals(self) -> list[int]:
        return list(self.stack)

    @property
    def mask(self) -> int:
        """Bitset of true literal codes."""
        if self._mask_cache[0] != self._version:
            m = 0
            for l in self.stack:
                m |= 1 << l
            self._mask_cache = (self._version, m)
        return self._mask_cache[1]

    def is_total(self, num_vars: int | None = None) -> bool:
        n = self.n if num_vars is None else num_vars
        return all(self.value[2 * v] != 0 for v in range(n))

    def assignment(self, num_vars: int | None = None) -> Configuration:
        n = self.n if num_vars is None else num_vars
        return tuple(self.value[2 * v] == 1 for v in range(n))

    def check_watches(self) -> None:
        """Assert the two-watch invariant for every attached clause."""
        value = self.value
        for ci in range(self.nsync):
            c = self.db.clauses[ci]
            if len(c) < 2:
                assert value[c[0]] == 1, "unit clause not enforced"
                continue
            w = self.watch[ci]
            assert w is not None and w[0] != w[1] and w[0] in c and w[1] in c
            assert ci in self.watches[w[0]] and ci in self.watches[w[1]]
            if any(value[l] == 1 for l in c):
                continue
            assert value[w[0]] != -1 and value[w[1]] != -1, f"clause {c} badly watched"


def decide_feasibility(db: ClauseDatabase, inter: Sequence[int],
                       deadline: float | None = None) -> Configuration | None:
    """Full CDCL search for a configuration containing ``inter``.

    Returns a witness assignment, or None if no valid configuration contains
    all the given literals.  Learned clauses stay in ``db``.
    """
    t = Trail(db)
    try:
        ok = t.solve(assumptions=list(inter), deadline=deadline)
    except Unsatisfiable:
        return None
    if ok is None:
        raise TimeoutError("feasibility check timed out")
    if not ok:
        return None
    return t.assignment(db.num_vars)


def is_satisfiable(db: ClauseDatabase) -> bool:
    return decide_feasibility(db, ()) is not None


class Propagator:
    """Unit propagation over a fixed clause set, no learning."""

    def __init__(self, model_or_db: FeatureModel | ClauseDatabase):
        if isinstance(model_or_db, ClauseDatabase):
            self.db = model_or_db
        else:
            self.db = ClauseDatabase.from_model(model_or_db)
        self._local = threading.local()  # trails are not shareable; one per thread

    @property
    def trail(self) -> Trail:
        t = getattr(self._local, "trail", None)
        if t is None:
            t = Trail(self.db, learn=False)
            t.push_level(())
            t.pop_level()
            self._local.trail = t
        return t

    def up(self, literals: Iterable[int]) -> list[int] | None:
        t = self.trail
        t._backtrack(0)
        return t.probe(literals)

    def up_mask(self, literals: Iterable[int]) -> int | None:
        t = self.trail
        t._backtrack(0)
        if not t.push_level(literals):
            return None
        m = t.mask
        t.pop_level()
        return m

    def conflicts(self, literals: Iterable[int]) -> bool:
        t = self.trail
        t._backtrack(0)
        if t.push_level(literals):
            t.pop_level()
            return False
        return True

    def fixed(self) -> list[int]:
        """Literals implied at level zero."""
        t = self.trail
        t._backtrack(0)
        t._sync_plain()
        return list(t.stack)


def adjacent(prop: Propagator, a: Interaction, b: Interaction) -> bool:
    return prop.conflicts((a[0], a[1], b[0], b[1]))
