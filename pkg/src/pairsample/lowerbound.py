"""Lower bounds from mutually exclusive interaction sets.

Two interactions are adjacent when unit propagation refutes their union; a
clique of that graph needs one configuration per member.  Cliques come from
a randomized greedy pass and from an LP loop over independent-set
constraints (cutting planes, column pricing and greedy rounding).
"""
from __future__ import annotations

import enum
import logging
import math
import random
import time
from typing import Callable, Iterable, Sequence

import numpy as np

from .lp import LpBackend, default_backend
from .model import Configuration, FeatureModel, Interaction, config_mask
from .trails import Propagator

log = logging.getLogger(__name__)

EPS = 1e-6
PRICE_CAP = 5000
PRICE_SAMPLE = 50000
FORCED_PRICING_EVERY = 40
GENERATED_PER_ROUND = 10
SPAWNER_SET_LIMIT = 20000


class ConflictGraph:
    """Adjacency by unit propagation, with cached closures."""

    def __init__(self, model_or_prop: FeatureModel | Propagator):
        self.prop = model_or_prop if isinstance(model_or_prop, Propagator) else Propagator(model_or_prop)
        n = self.prop.db.num_vars
        self._even = int("01" * n, 2) if n else 0
        self._closure: dict[Interaction, int | None] = {}
        self.root = self.prop.up_mask(()) or 0

    def closure(self, inter: Interaction) -> int | None:
        m = self._closure.get(inter, -1)
        if m == -1:
            m = self.prop.up_mask(inter)
            self._closure[inter] = m
        return m

    def negated(self, mask: int) -> int:
        e = self._even
        return ((mask & e) << 1) | ((mask >> 1) & e)

    def adjacent(self, a: Interaction, b: Interaction) -> bool:
        if a == b:
            return False
        ma, mb = self.closure(a), self.closure(b)
        if ma is None or mb is None:
            return True
        if ma & self.negated(mb):
            return True
        return self.prop.conflicts(a + b)

    def is_clique(self, items: Sequence[Interaction]) -> bool:
        return all(self.adjacent(items[i], items[j])
                   for i in range(len(items)) for j in range(i + 1, len(items)))


def g2_adjacent(graph: ConflictGraph | Propagator, a: Interaction, b: Interaction) -> bool:
    if isinstance(graph, Propagator):
        return a != b and graph.conflicts(a + b)
    return graph.adjacent(a, b)


def _as_graph(g) -> ConflictGraph:
    return g if isinstance(g, ConflictGraph) else ConflictGraph(g)


def greedy_clique(graph, candidates: Sequence[Interaction], repeats: int,
                  rng: random.Random) -> list[Interaction]:
    """Best of ``repeats`` random maximal cliques within ``candidates``."""
    g = _as_graph(graph)
    pool = list(dict.fromkeys(candidates))
    best: list[Interaction] = []
    for _ in range(max(repeats, 1)):
        clique: list[Interaction] = []
        remaining = pool
        while remaining:
            v = rng.choice(remaining)
            clique.append(v)
            remaining = [u for u in remaining if u != v and g.adjacent(u, v)]
        if len(clique) > len(best):
            best = clique
    return best


class Status(enum.Enum):
    IMPROVED = "Improved"
    OPTIMAL_ON_SUBGRAPH = "OptimalOnSubgraph"
    STALLED = "Stalled"


class CutPriceRound:
    """LP relaxation of maximum clique over a dynamic set of columns and rows.

    Rows are UP-closed partial configurations stored as literal bitsets; an
    interaction belongs to a row iff both its literals are in the bitset.
    """

    def __init__(self, graph, universe: Sequence[Interaction],
                 constraint_configs: Iterable[Configuration | int],
                 columns: Iterable[Interaction], clique: Sequence[Interaction] = (),
                 tiers: Sequence[Sequence[Interaction]] = (), rng: random.Random | None = None,
                 backend: LpBackend | None = None,
                 heuristic: Callable[[list[Interaction]], list[Configuration]] | None = None):
        self.g = _as_graph(graph)
        self.prop = self.g.prop
        self.universe = list(universe)
        self.rng = rng or random.Random(0)
        self.backend = backend or default_backend()
        self.heuristic = heuristic
        self.tiers = [list(t) for t in tiers]
        self.rows: list[tuple[list[int], int]] = []  # (pushed literals, UP mask)
        for c in constraint_configs:
            m = c if isinstance(c, int) else config_mask(c)
            self.rows.append(([], m))
        self.cols: list[Interaction] = []
        self.col_index: dict[Interaction, int] = {}
        for i in list(clique) + list(columns):
            self._add_column(i)
        self.best: list[Interaction] = list(clique)
        self.seed_size = len(self.best)
        self.upper: int | None = None
        self.iterations = 0
        self.full_pricing_done = False
        self.x: np.ndarray | None = None
        self.z: np.ndarray | None = None
        self._universe_arrays = None

    # -- bookkeeping -------------------------------------------------------
    def _add_column(self, inter: Interaction) -> bool:
        if inter in self.col_index:
            return False
        if not any((m >> inter[0]) & (m >> inter[1]) & 1 for _, m in self.rows):
            # every column must sit in some row, else the LP is unbounded
            m = self.g.closure(inter)
            if m is None:
                return False
            self.rows.append((list(inter), m))
        self.col_index[inter] = len(self.cols)
        self.cols.append(inter)
        return True

    def _literal_matrix(self) -> np.ndarray:
        n2 = 2 * self.prop.db.num_vars
        lm = np.zeros((n2, len(self.rows)), dtype=bool)
        for d, (_, m) in enumerate(self.rows):
            bits = [b for b in range(n2) if (m >> b) & 1]
            lm[bits, d] = True
        return lm

    def _matrix(self, lm: np.ndarray, inters: Sequence[Interaction]) -> np.ndarray:
        if not inters:
            return np.zeros((0, lm.shape[1]), dtype=bool)
        arr = np.asarray(inters, dtype=np.int64)
        return lm[arr[:, 0]] & lm[arr[:, 1]]

    def row_value(self, mask: int, x: np.ndarray) -> float:
        return float(sum(x[j] for j, (a, b) in enumerate(self.cols)
                         if x[j] > 0 and (mask >> a) & (mask >> b) & 1))

    # -- LP ------------------------------------------------------------------
    def solve_relaxation(self) -> float:
        lm = self._literal_matrix()
        a = self._matrix(lm, self.cols).T.astype(float)
        sol = self.backend.solve(a)
        self.x, self.z = sol.x, sol.z
        self._lm = lm
        self.objective = sol.objective
        self.upper = math.floor(sol.objective + EPS)
        return sol.objective

    # -- rounding ------------------------------------------------------------
    def greedy_round(self, x: np.ndarray) -> list[Interaction]:
        order = sorted((j for j in range(len(self.cols)) if x[j] > EPS), key=lambda j: (-x[j], j))
        clique: list[Interaction] = []
        for j in order:
            cand = self.cols[j]
            if all(self.g.adjacent(cand, u) for u in clique):
                clique.append(cand)
        rest = [c for c in self.cols if c not in set(clique)]
        self.rng.shuffle(rest)
        for cand in rest:
            if all(self.g.adjacent(cand, u) for u in clique):
                clique.append(cand)
        return clique

    # -- cutting planes ------------------------------------------------------------
    def _push(self, row: tuple[list[int], int], inter: Sequence[int]) -> tuple[list[int], int] | None:
        lits, m = row
        if all((m >> l) & 1 for l in inter):
            return row
        if any((m >> (l ^ 1)) & 1 for l in inter):
            return None
        base = lits if lits else [b for b in range(2 * self.prop.db.num_vars) if (m >> b) & 1]
        new = self.prop.up_mask(list(base) + list(inter))
        if new is None:
            return None
        return (list(base) + list(inter), new)

    def violated_nonedges(self, x: np.ndarray) -> list[tuple[Interaction, Interaction]]:
        pos = sorted((j for j in range(len(self.cols)) if x[j] > EPS), key=lambda j: -x[j])
        out = []
        for p, i in enumerate(pos):
            for j in pos[p + 1:]:
                if x[i] + x[j] <= 1 + EPS:
                    break
                a, b = self.cols[i], self.cols[j]
                if not self.g.adjacent(a, b):
                    out.append((a, b))
        return out

    def forbid_nonedges(self, pairs: Sequence[tuple[Interaction, Interaction]]) -> int:
        """Strengthen rows (preferred) or add rows so each pair shares a row."""
        changed = 0
        created: dict[Interaction, int] = {}
        for a, b in pairs:
            together = a + b
            if any(all((m >> l) & 1 for l in together) for _, m in self.rows):
                continue
            done = False
            for d, row in enumerate(self.rows):
                m = row[1]
                if any((m >> (l ^ 1)) & 1 for l in together):
                    continue
                new = self._push(row, together)
                if new is not None:
                    self.rows[d] = new
                    done = True
                    break
            if done:
                changed += 1
                continue
            if a in created or b in created:
                continue
            m = self.prop.up_mask(together)
            if m is None:
                continue
            self.rows.append((list(together), m))
            created[a] = created[b] = len(self.rows) - 1
            changed += 1
        return changed

    def strengthen(self, x: np.ndarray) -> bool:
        order = [j for j in sorted(range(len(self.cols)), key=lambda j: (-x[j], j)) if x[j] > EPS]
        violated = False
        for d, row in enumerate(self.rows):
            m = row[1]
            total = 0.0
            for j in order:
                a, b = self.cols[j]
                if not ((m >> (a ^ 1)) & 1 or (m >> (b ^ 1)) & 1):
                    total += x[j]
            if total <= 1 + EPS:
                continue
            for j in order:
                new = self._push(row, self.cols[j])
                if new is not None:
                    row = new
            self.rows[d] = row
            if self.row_value(row[1], x) > 1 + EPS:
                violated = True
        return violated

    def generate(self, x: np.ndarray, max_starts: int = 200) -> bool:
        order = [j for j in sorted(range(len(self.cols)), key=lambda j: (-x[j], j)) if x[j] > EPS]
        found: dict[int, tuple[float, list[int]]] = {}
        for s in range(min(len(order), max_starts)):
            lits: list[int] = []
            m = self.g.root
            for j in order[s:] + order[:s]:
                a, b = self.cols[j]
                if (m >> a) & (m >> b) & 1:
                    continue
                if (m >> (a ^ 1)) & 1 or (m >> (b ^ 1)) & 1:
                    continue
                new = self.prop.up_mask(lits + [a, b])
                if new is not None:
                    lits += [a, b]
                    m = new
            value = self.row_value(m, x)
            if value > 1 + EPS and m not in found:
                found[m] = (value, lits)
        best = sorted(found.items(), key=lambda kv: -kv[1][0])[:GENERATED_PER_ROUND]
        for m, (_, lits) in best:
            self.rows.append((lits, m))
        return bool(best)

    def heuristic_rows(self, x: np.ndarray) -> bool:
        if self.heuristic is None:
            return False
        added = False
        for conf in self.heuristic(list(self.best)):
            m = config_mask(conf)
            if self.row_value(m, x) > 1 + EPS:
                self.rows.append(([], m))
                added = True
        return added

    # -- pricing ---------------------------------------------------------------
    def _dual_sums(self, inters: Sequence[Interaction]) -> np.ndarray:
        out = np.empty(len(inters))
        step = 4096
        for s in range(0, len(inters), step):
            chunk = inters[s:s + step]
            out[s:s + step] = self._matrix(self._lm, chunk).astype(float) @ self.z
        return out

    def price(self, full: bool = False) -> int:
        """Add columns whose dual constraint is violated; returns the count added."""
        tiers = list(self.tiers)
        if len(self.universe) > PRICE_SAMPLE:
            tiers.append(self.rng.sample(self.universe, PRICE_SAMPLE))
        tiers.append(self.universe)
        for k, tier in enumerate(tiers):
            cand = [i for i in dict.fromkeys(tier) if i not in self.col_index]
            if k == len(tiers) - 1:
                self.full_pricing_done = True
            if not cand:
                continue
            sums = self._dual_sums(cand)
            viol = [cand[i] for i in np.argsort(sums, kind="stable") if sums[i] < 1 - EPS]
            if viol:
                self.full_pricing_done = False
                added = 0
                for inter in viol[:PRICE_CAP]:
                    added += self._add_column(inter)
                return added
        return 0

    # -- main loop -------------------------------------------------------------
    def _record(self, clique: list[Interaction], on_improve) -> bool:
        if len(clique) > len(self.best):
            self.best = clique
            if on_improve is not None:
                on_improve(list(clique))
            return True
        return False

    def run(self, max_iterations: int | None = None, deadline: float | None = None,
            stop: Callable[[], bool] | None = None,
            on_improve: Callable[[list[Interaction]], None] | None = None) -> tuple[list[Interaction], Status]:
        quiet = 0
        status = None
        while True:
            if max_iterations is not None and self.iterations >= max_iterations:
                break
            if deadline is not None and time.monotonic() >= deadline:
                break
            if stop is not None and stop():
                break
            self.iterations += 1
            self.solve_relaxation()
            x = self.x
            self._record(self.greedy_round(x), on_improve)
            if len(self.best) >= self.upper:
                if self.price() == 0:
                    status = Status.OPTIMAL_ON_SUBGRAPH
                    break
                continue
            pairs = self.violated_nonedges(x)
            if pairs:
                quiet = 0
                if self.forbid_nonedges(pairs):
                    continue
            else:
                quiet += 1
            if quiet >= FORCED_PRICING_EVERY:
                quiet = 0
                if self.price():
                    continue
            if self.strengthen(x) or self.generate(x) or self.heuristic_rows(x):
                continue
            if self.price():
                continue
            status = Status.STALLED
            break
        if status is None:
            status = Status.STALLED
        if status is Status.STALLED and len(self.best) > self.seed_size:
            status = Status.IMPROVED
        return list(self.best), status


def cut_price_round(model: FeatureModel, feasible: Sequence[Interaction], sample: Sequence[Configuration],
                    clique: Sequence[Interaction], spawners_all: Sequence[Interaction] = (),
                    spawners_best: Sequence[Interaction] = (), pushed_last: Sequence[Interaction] = (),
                    rng: random.Random | None = None, max_iterations: int | None = None,
                    time_limit: float | None = None, backend: LpBackend | None = None,
                    heuristic=None, on_improve=None, stop=None,
                    graph: ConflictGraph | None = None) -> tuple[list[Interaction], Status]:
    """Clique lower bound for the feasible universe, seeded by the initial phase."""
    rng = rng or random.Random(0)
    g = graph or ConflictGraph(model)
    feasible_set = set(feasible)
    all_sp = [i for i in spawners_all if i in feasible_set]
    best_sp = [i for i in spawners_best if i in feasible_set]
    if len(all_sp) > SPAWNER_SET_LIMIT and len(best_sp) > SPAWNER_SET_LIMIT:
        start = min(all_sp, best_sp, key=len)
    elif len(all_sp) > SPAWNER_SET_LIMIT:
        start = best_sp
    else:
        start = all_sp
    cpr = CutPriceRound(g, feasible, sample, start, clique,
                        tiers=[all_sp, [i for i in pushed_last if i in feasible_set]],
                        rng=rng, backend=backend, heuristic=heuristic)
    if time_limit is not None and time_limit <= 0:
        return list(clique), Status.STALLED
    deadline = None if time_limit is None else time.monotonic() + time_limit
    return cpr.run(max_iterations=max_iterations, deadline=deadline, stop=stop, on_improve=on_improve)
