"""Initial sample construction over many simultaneous trails.

A run keeps a working set of trails.  Uncovered interactions are pulled
from a small priority queue (fewest compatible trails first) and pushed into
the trail with the largest overlap; if none accepts, a new trail is opened
after a full feasibility check.  When nothing is left uncovered every trail
is completed into a full configuration.
"""
from __future__ import annotations

import heapq
import logging
import random
import time
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator, Sequence

from .model import Configuration, FeatureModel, Interaction, enumerate_candidate_interactions
from .preprocess import learn_infeasible_binaries
from .trails import ClauseDatabase, Propagator, Trail, decide_feasibility

log = logging.getLogger(__name__)

QUEUE_START = 64
QUEUE_CAP = 4096
ROUNDS = 6
CLIQUE_REPEATS = 10


def _bits(x: int) -> Iterator[int]:
    while x:
        low = x & -x
        yield low.bit_length() - 1
        x ^= low


class CoverageIndex:
    """Literal bitsets for enumerating uncovered interactions.

    Trails contribute a bitset of their true literals; each concrete literal
    keeps a bitset of partners proven infeasible with it.
    """

    def __init__(self, model: FeatureModel):
        self.lits = [2 * f + p for f in model.concrete_sorted for p in (0, 1)]
        self.concrete_mask = 0
        for l in self.lits:
            self.concrete_mask |= 1 << l
        # concrete literals over strictly higher features, per literal
        self.higher: dict[int, int] = {}
        rest = self.concrete_mask
        for f in model.concrete_sorted:
            rest &= ~(3 << (2 * f))
            self.higher[2 * f] = self.higher[2 * f + 1] = rest
        self.infeasible: dict[int, int] = {l: 0 for l in self.lits}
        self.num_infeasible = 0

    def mark_infeasible(self, inter: Interaction) -> None:
        a, b = inter
        if not (self.infeasible[a] >> b) & 1:
            self.num_infeasible += 1
        self.infeasible[a] |= 1 << b
        self.infeasible[b] |= 1 << a

    def is_infeasible(self, inter: Interaction) -> bool:
        return bool((self.infeasible[inter[0]] >> inter[1]) & 1)

    def infeasible_pairs(self) -> list[Interaction]:
        out = []
        for a in self.lits:
            for b in _bits(self.infeasible[a] & self.higher[a]):
                out.append((a, b))
        return out

    def covered_partners(self, masks: Sequence[int]) -> dict[int, int]:
        """For each concrete literal, the union of trail bitsets containing it."""
        cov = {l: 0 for l in self.lits}
        for m in masks:
            for l in _bits(m & self.concrete_mask):
                cov[l] |= m
        return cov

    def uncovered(self, masks: Sequence[int]) -> list[Interaction]:
        cov = self.covered_partners(masks)
        out = []
        for a in self.lits:
            free = self.higher[a] & ~cov[a] & ~self.infeasible[a]
            for b in _bits(free):
                out.append((a, b))
        return out


def mask_covers(mask: int, inter: Interaction) -> bool:
    return bool((mask >> inter[0]) & (mask >> inter[1]) & 1)


def extend_confs(trails: Sequence[Trail], inter: Interaction) -> bool:
    """Push ``inter`` into the first accepting trail, highest overlap first."""
    a, b = inter
    order = []
    for idx, t in enumerate(trails):
        if t.is_false(a) or t.is_false(b):
            continue
        overlap = t.is_true(a) + t.is_true(b)
        order.append((-overlap, idx))
    order.sort()
    for _, idx in order:
        if trails[idx].push_and_propagate(inter):
            return True
    return False


def complete_all(trails: Sequence[Trail]) -> bool:
    for t in trails:
        if not t.complete():
            return False
    return True


@dataclass
class InitialRun:
    sample: list[Configuration]
    spawners: list[Interaction]
    pushed: list[Interaction]
    seeded: bool


class _Queue:
    """Lazy min-heap keyed by the number of trails an interaction fits."""

    def __init__(self):
        self.heap: list[tuple[int, int, Interaction]] = []
        self.seq = 0

    def push(self, inter: Interaction, count: int) -> None:
        heapq.heappush(self.heap, (count, self.seq, inter))
        self.seq += 1

    def __bool__(self) -> bool:
        return bool(self.heap)

    def pop(self, count_fn: Callable[[Interaction], int]) -> Interaction:
        while True:
            c, _, inter = heapq.heappop(self.heap)
            now = count_fn(inter)
            if now > c and self.heap and now > self.heap[0][0]:
                self.push(inter, now)
                continue
            return inter


def initial_solve(model: FeatureModel, db: ClauseDatabase, index: CoverageIndex,
                  rng: random.Random, seed_queue: Sequence[Interaction] = (),
                  greedy_seed: bool = False, known_feasible: set | None = None) -> InitialRun:
    """One run of the heuristic.

    ``index`` carries the infeasibility knowledge and is updated in place.
    ``known_feasible`` (also updated) lets later runs skip feasibility checks.
    """
    known_feasible = set() if known_feasible is None else known_feasible
    trails: list[Trail] = []
    spawners: list[Interaction] = []
    pushed: list[Interaction] = []
    if greedy_seed:
        t = Trail(db)
        t.complete()
        trails.append(t)
    queue = _Queue()
    k = QUEUE_START

    def masks() -> list[int]:
        return [t.mask for t in trails]

    def count(inter: Interaction) -> int:
        na, nb = inter[0] ^ 1, inter[1] ^ 1
        return sum(1 for t in trails if not t.is_true(na) and not t.is_true(nb))

    for inter in seed_queue:
        queue.push(inter, count(inter))
    while True:
        if not queue:
            ms = masks()
            unc = index.uncovered(ms)
            if not unc:
                if complete_all(trails):
                    break
                continue
            if len(unc) > 4 * k:
                unc = rng.sample(unc, 4 * k)
            for inter in unc:
                queue.push(inter, count(inter))
            k = min(2 * k, QUEUE_CAP)
        inter = queue.pop(count)
        if index.is_infeasible(inter) or any(mask_covers(t.mask, inter) for t in trails):
            continue
        if extend_confs(trails, inter):
            pushed.append(inter)
            continue
        if inter not in known_feasible:
            witness = decide_feasibility(db, inter)
            if witness is None:
                index.mark_infeasible(inter)
                continue
            known_feasible.add(inter)
        t = Trail(db)
        if not t.push_and_propagate(inter):
            # cannot happen for a feasible interaction unless UP is incomplete
            # and learning has just refuted it; fall back to a witness trail
            t = Trail(db)
            ok = t.solve(assumptions=list(inter))
            assert ok
        trails.append(t)
        spawners.append(inter)
        pushed.append(inter)
    if not trails:
        t = Trail(db)
        t.complete()
        trails.append(t)
    n = model.num_features
    sample = list(dict.fromkeys(t.assignment(n) for t in trails))
    return InitialRun(sample, spawners, pushed, greedy_seed)


def _positive_seed_pairs(model: FeatureModel, limit: int) -> list[Interaction]:
    occ = {f: 0 for f in model.concrete}
    for c in model.clauses:
        for l in c:
            if not l & 1 and (l >> 1) in occ:
                occ[l >> 1] += 1
    ranked = sorted(model.concrete, key=lambda f: (-occ[f], f))
    out = []
    for i, f in enumerate(ranked):
        for g in ranked[i + 1:]:
            a, b = 2 * min(f, g), 2 * max(f, g)
            out.append((a, b))
            if len(out) >= limit:
                return out
    return out


@dataclass
class InitialPhaseResult:
    sample: list[Configuration]
    feasible: list[Interaction]
    infeasible: list[Interaction]
    clique: list[Interaction]
    model: FeatureModel  # with learned infeasibility binaries
    db: ClauseDatabase
    spawners_all: list[Interaction]
    spawners_best: list[Interaction]
    pushed_last: list[Interaction]
    run_sizes: list[int] = field(default_factory=list)
    trails_created: list[int] = field(default_factory=list)


CliqueFn = Callable[[Propagator, Sequence[Interaction], int, random.Random], list]


def run_initial_phase(model: FeatureModel, rng: random.Random, rounds: int = ROUNDS,
                      clique_repeats: int = CLIQUE_REPEATS,
                      clique_fn: CliqueFn | None = None,
                      deadline: float | None = None) -> InitialPhaseResult:
    """Repeated heuristic runs interleaved with greedy clique bounds."""
    if clique_fn is None:
        from .lowerbound import greedy_clique as clique_fn
    db = ClauseDatabase.from_model(model)
    index = CoverageIndex(model)
    known: set[Interaction] = set()
    first = initial_solve(model, db, index, rng,
                          seed_queue=_positive_seed_pairs(model, QUEUE_START),
                          greedy_seed=True, known_feasible=known)
    infeasible = index.infeasible_pairs()
    bad = set(infeasible)
    feasible = [i for i in enumerate_candidate_interactions(model) if i not in bad]
    index.num_infeasible = len(infeasible)
    strong = learn_infeasible_binaries(model, infeasible)
    for c in strong.clauses[len(model.clauses):]:
        db.add_clause(c)
    prop = Propagator(strong)

    best = first
    sizes = [len(first.sample)]
    created = [len(first.spawners)]
    seen_spawners: dict[Interaction, None] = dict.fromkeys(first.spawners)
    clique: list[Interaction] = []

    def update_clique(run: InitialRun) -> None:
        nonlocal clique
        for pool in (list(seen_spawners), run.spawners):
            if not pool:
                continue
            c = clique_fn(prop, pool, clique_repeats, rng)
            if len(c) > len(clique):
                clique = list(c)

    update_clique(first)
    if not clique and feasible:
        clique = [feasible[0]]
    last = first
    for _ in range(1, rounds):
        if len(best.sample) <= len(clique):
            break
        if deadline is not None and time.monotonic() > deadline:
            break
        run = initial_solve(strong, db, index, rng, seed_queue=clique, known_feasible=known)
        sizes.append(len(run.sample))
        created.append(len(run.spawners))
        seen_spawners.update(dict.fromkeys(run.spawners))
        if len(run.sample) < len(best.sample):
            best = run
        last = run
        update_clique(run)
    log.info("initial phase: runs %s, best %d, clique %d", sizes, len(best.sample), len(clique))
    return InitialPhaseResult(
        sample=best.sample, feasible=feasible, infeasible=infeasible, clique=clique,
        model=strong, db=db, spawners_all=list(seen_spawners), spawners_best=best.spawners,
        pushed_last=last.pushed, run_sizes=sizes, trails_created=created)
