"""End-to-end solver: preprocessing, initial phase, bound workers and LNS.

The coordinator owns the current sample.  Destroy-and-repair workers remove
a few configurations, compute the interactions that became uncovered and
try to cover them again with fewer configurations.  A lower-bound worker and
(for small universes) an exact full-problem worker run alongside.
"""
from __future__ import annotations

import collections
import logging
import math
import queue
import random
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .initial import run_initial_phase, initial_solve, CoverageIndex
from .lowerbound import ConflictGraph, CutPriceRound, Status, cut_price_round
from .model import Configuration, FeatureModel, Interaction, config_mask
from .preprocess import ReconstructionMap, map_to_impliers, restore_sample, simplify, universe_reduce
from .satrepair import STRATEGIES, Outcome, full_problem_solve
from .trails import ClauseDatabase, Trail, Unsatisfiable, decide_feasibility

log = logging.getLogger(__name__)

DESTROY_WEIGHTS = (("uniform", 0.2), ("avoid_doomed", 0.3), ("randomized_greedy", 0.5))
REPAIR_WEIGHTS = (("non_incremental", 0.4), ("simple_incremental", 0.2),
                  ("greedy_incremental", 0.2), ("alternating_lbub", 0.2))
SUB_LB_ITERATIONS = 10
CLIQUE_TABLE_SIZE = 64
FULL_SOLVER_LIMIT = 100000
FAST_REPAIR_S = 1.0
FAST_FAILURES = 25
SLOW_FAILURES = 60
UNIVERSE_RULE2_BUDGET = 5.0


@dataclass
class SolveOptions:
    threads: int = 1
    time_limit: float = 60.0
    seed: int = 0
    deterministic: bool = False
    preprocess: bool = True
    initial_rounds: int = 6
    lb_iterations: int | None = None  # None: run until stalled or stopped
    full_solver: bool = True


@dataclass
class SolveResult:
    sample: list[Configuration]
    lower_bound: int
    optimal: bool
    exclusive: list[Interaction]  # certificate in the simplified model's space
    simplified: FeatureModel
    reconstruction: ReconstructionMap
    stats: dict
    history: list[list[Configuration]] = field(default_factory=list)  # installed samples, simplified space
    detail: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "sample": [[2 * f + (0 if v else 1) for f, v in enumerate(c)] for c in self.sample],
            "lower_bound": self.lower_bound,
            "optimal": self.optimal,
            "stats": self.stats,
            "exclusive_set": [sorted(self.reconstruction.original_literal(l) for l in inter)
                              for inter in self.exclusive],
        }


# -- coverage over a fixed universe ------------------------------------------------
class UniverseCoverage:
    """Vectorised coverage of a fixed interaction list by configurations."""

    def __init__(self, universe: Sequence[Interaction]):
        self.universe = list(universe)
        arr = np.asarray(self.universe, dtype=np.int64).reshape(-1, 2)
        self.a, self.b = arr[:, 0], arr[:, 1]

    def matrix(self, sample: Sequence[Configuration]) -> np.ndarray:
        """Boolean |universe| x |sample| coverage matrix."""
        if not sample:
            return np.zeros((len(self.universe), 0), dtype=bool)
        conf = np.asarray(sample, dtype=bool)  # |S| x n
        lits = np.empty((conf.shape[1] * 2, conf.shape[0]), dtype=bool)
        lits[0::2] = conf.T
        lits[1::2] = ~conf.T
        return lits[self.a] & lits[self.b]

    def missing(self, sample: Sequence[Configuration]) -> list[Interaction]:
        cov = self.matrix(sample)
        idx = np.nonzero(~cov.any(axis=1))[0] if cov.shape[1] else np.arange(len(self.universe))
        return [self.universe[i] for i in idx]


# -- adaptive destroy size -----------------------------------------------------------
class DestroyController:
    def __init__(self, num_interactions: int):
        self.size = 3 if num_interactions >= 1_000_000 else 2
        self.failures = 0
        self.times: list[float] = []

    def threshold(self) -> int:
        mean = sum(self.times) / len(self.times) if self.times else 0.0
        return FAST_FAILURES if mean < FAST_REPAIR_S else SLOW_FAILURES

    def current(self, sample_size: int) -> int:
        return max(min(self.size, sample_size), min(2, sample_size))

    def update(self, improved: bool, elapsed: float, sample_size: int) -> None:
        if improved:
            self.failures = 0
        else:
            self.failures += 1
            self.times.append(elapsed)
            if self.failures >= self.threshold():
                self.size += 1
                self.failures = 0
                self.times = []
        self.size = max(min(self.size, sample_size), 2)


class CliqueTable:
    """Small LRU table of exclusive sets seen so far."""

    def __init__(self, capacity: int = CLIQUE_TABLE_SIZE):
        self.capacity = capacity
        self.items: collections.OrderedDict[tuple, None] = collections.OrderedDict()
        self.lock = threading.Lock()

    def add(self, clique: Sequence[Interaction]) -> None:
        if len(clique) < 2:
            return
        key = tuple(sorted(clique))
        with self.lock:
            self.items[key] = None
            self.items.move_to_end(key)
            while len(self.items) > self.capacity:
                self.items.popitem(last=False)

    def snapshot(self) -> list[tuple]:
        with self.lock:
            return list(reversed(self.items))


def _weighted(rng: random.Random, table) -> str:
    r = rng.random()
    acc = 0.0
    for name, w in table:
        acc += w
        if r < acc:
            return name
    return table[-1][0]


def unique_coverage_counts(cover: np.ndarray, keep: Sequence[int]) -> dict[int, int]:
    """Per kept configuration, the number of interactions only it covers (among ``keep``)."""
    if not keep:
        return {}
    sub = cover[:, list(keep)]
    single = sub.sum(axis=1) == 1
    counts = sub[single].sum(axis=0)
    return {k: int(c) for k, c in zip(keep, counts)}


def select_destroy(strategy: str, sample: Sequence[Configuration], size: int, rng: random.Random,
                   cover: np.ndarray | None = None, cliques: Sequence[Sequence[Interaction]] = ()) -> list[int]:
    """Indices of configurations to remove."""
    n = len(sample)
    size = min(size, n)
    if size >= n:
        return list(range(n))
    if strategy == "uniform" or size < 2:
        return sorted(rng.sample(range(n), size))
    d1 = rng.randrange(1, size)
    removed = rng.sample(range(n), d1)
    rest = [i for i in range(n) if i not in set(removed)]
    if strategy == "avoid_doomed":
        masks = [config_mask(c) for c in sample]

        def hits(i, clique):
            m = masks[i]
            return any((m >> a) & (m >> b) & 1 for a, b in clique)

        for clique in cliques:
            if len(removed) >= size:
                break
            if not all(hits(i, clique) for i in removed):
                continue
            options = [i for i in rest if not hits(i, clique)]
            if options:
                pick = rng.choice(options)
                removed.append(pick)
                rest.remove(pick)
        if len(removed) < size:
            removed += rng.sample(rest, size - len(removed))
        return sorted(removed)
    # randomized greedy
    assert cover is not None
    counts = unique_coverage_counts(cover, rest)
    order = sorted(rest, key=lambda i: (counts[i], i))
    removed += order[:size - d1]
    return sorted(removed)


# -- shared state ----------------------------------------------------------------------
class SharedState:
    def __init__(self, sample, clique):
        self.lock = threading.Lock()
        self.sample = list(sample)
        self.clique = list(clique)
        self.bound = len(clique)
        self.optimal = False
        self.history = [list(sample)]

    def publish_clique(self, clique) -> None:
        with self.lock:
            if len(clique) > len(self.clique):
                self.clique = list(clique)
                self.bound = max(self.bound, len(clique))

    def publish_bound(self, value: int) -> None:
        with self.lock:
            self.bound = max(self.bound, value)

    def install(self, sample) -> bool:
        with self.lock:
            if len(sample) >= len(self.sample):
                return False
            self.sample = list(sample)
            self.history.append(list(sample))
            return True

    def done(self) -> bool:
        with self.lock:
            return self.optimal or self.bound >= len(self.sample)


@dataclass
class _Context:
    model: FeatureModel
    universe: list[Interaction]
    coverage: UniverseCoverage
    graph: ConflictGraph
    shared: SharedState
    table: CliqueTable
    controller: DestroyController
    controller_lock: threading.Lock
    deadline: float
    stats: dict


def _sub_clique(ctx: _Context, missing: list[Interaction], destroyed: list[Configuration],
                rng: random.Random, stop) -> list[Interaction]:
    missing_set = set(missing)
    seeds = [list(c) for c in ctx.table.snapshot()] + [ctx.shared.clique]
    seed: list[Interaction] = []
    for c in seeds:
        part = [i for i in c if i in missing_set]
        if len(part) > len(seed):
            seed = part
    if not seed and missing:
        seed = [missing[0]]
    extra = rng.sample(missing, min(len(missing), 64))
    cpr = CutPriceRound(ctx.graph, missing, destroyed, extra, seed, rng=rng)
    best, _ = cpr.run(max_iterations=SUB_LB_ITERATIONS, deadline=ctx.deadline, stop=stop)
    return best


def destroy_and_repair(ctx: _Context, sample: list[Configuration], rng: random.Random,
                       stop: Callable[[], bool]) -> list[Configuration] | None:
    """One destroy/repair attempt; returns an improved full sample or None."""
    start = time.monotonic()
    with ctx.controller_lock:
        size = ctx.controller.current(len(sample))
    strategy = _weighted(rng, DESTROY_WEIGHTS)
    cover = ctx.coverage.matrix(sample)
    removed = select_destroy(strategy, sample, size, rng, cover, ctx.table.snapshot())
    removed_set = set(removed)
    kept = [c for i, c in enumerate(sample) if i not in removed_set]
    destroyed = [sample[i] for i in removed]
    keep_idx = [i for i in range(len(sample)) if i not in removed_set]
    if keep_idx:
        still = cover[:, keep_idx].any(axis=1)
        missing = [ctx.coverage.universe[i] for i in np.nonzero(~still)[0]]
    else:
        missing = list(ctx.coverage.universe)
    ctx.stats["repairs"] = ctx.stats.get("repairs", 0) + 1
    if not missing:
        if kept:
            return kept
        return None
    sub = _sub_clique(ctx, missing, destroyed, rng, stop)
    ctx.table.add(sub)
    if len(sub) >= len(destroyed):
        # the removed configurations are already optimal for what they cover
        ctx.stats["skipped"] = ctx.stats.get("skipped", 0) + 1
        with ctx.controller_lock:
            ctx.controller.update(False, time.monotonic() - start, len(sample))
        return None
    repair_name = _weighted(rng, REPAIR_WEIGHTS)
    res = STRATEGIES[repair_name](ctx.model, missing, sub, len(destroyed) - 1,
                                  deadline=ctx.deadline, stop=stop, rng=rng, graph=ctx.graph)
    ctx.table.add(res.exclusive)
    improved = res.outcome is Outcome.IMPROVED and len(res.sample) < len(destroyed)
    with ctx.controller_lock:
        ctx.controller.update(improved, time.monotonic() - start, len(sample))
    if improved:
        return list(res.sample) + kept
    return None


def _valid_for(ctx: _Context, sample: Sequence[Configuration]) -> bool:
    return all(ctx.model.is_satisfied_by(c) for c in sample) and not ctx.coverage.missing(sample)


def _degenerate(model: FeatureModel) -> list[Configuration]:
    """Samples for fewer than two concrete features."""
    db = ClauseDatabase.from_model(model)
    if len(model.concrete) == 1:
        (f,) = tuple(model.concrete)
        out = []
        for l in (2 * f, 2 * f + 1):
            w = decide_feasibility(db, (l,))
            if w is not None:
                out.append(w)
        return out
    w = decide_feasibility(db, ())
    return [w] if w is not None else []


def solve(model: FeatureModel, options: SolveOptions | None = None) -> SolveResult:
    """Run the whole pipeline; raises :class:`Unsatisfiable` for unsatisfiable models."""
    opts = options or SolveOptions()
    t0 = time.monotonic()
    deadline = t0 + max(opts.time_limit, 0.0)
    rng = random.Random(opts.seed)
    if opts.preprocess:
        simp, rmap = simplify(model)
    else:
        simp, rmap = model, ReconstructionMap.identity(model.num_features)
    if decide_feasibility(ClauseDatabase.from_model(simp), ()) is None:
        raise Unsatisfiable("model has no valid configuration")
    stats: dict = {}

    def finish(sample, bound, optimal, exclusive, feasible_count, history, extra):
        restored = restore_sample(rmap, sample)
        original_cov = _count_covered(model, restored)
        st = {
            "initial_size": extra.get("initial_size", len(sample)),
            "lns_rounds": extra.get("lns_rounds", 0),
            "feasible_interactions": original_cov,
            "wall_time_s": None if opts.deterministic else round(time.monotonic() - t0, 3),
        }
        return SolveResult(restored, bound, optimal, exclusive, simp, rmap, st, history, extra)

    if len(simp.concrete) < 2:
        sample = _degenerate(simp)
        return finish(sample, len(sample), True, [], 0, [sample], {"initial_size": len(sample)})

    phase = run_initial_phase(simp, rng, rounds=opts.initial_rounds, deadline=deadline)
    strong = phase.model
    retained, implier = universe_reduce(strong, phase.feasible, UNIVERSE_RULE2_BUDGET)
    graph = ConflictGraph(strong)
    clique = map_to_impliers(phase.clique, implier)
    if not graph.is_clique(clique):
        clique = [c for c in phase.clique]
    shared = SharedState(phase.sample, clique)
    extra = {"initial_size": len(phase.sample), "initial_runs": phase.run_sizes,
             "feasible_simplified": len(phase.feasible), "retained": len(retained),
             "initial_clique": len(clique)}
    coverage = UniverseCoverage(retained)
    ctx = _Context(strong, retained, coverage, graph, shared, CliqueTable(),
                   DestroyController(len(phase.feasible)), threading.Lock(), deadline, extra)
    ctx.table.add(clique)

    def heuristic(best_clique):
        run = initial_solve(strong, phase.db, _index_for(strong, phase), random.Random(rng.random()),
                            seed_queue=best_clique)
        return run.sample

    spawners = map_to_impliers(phase.spawners_all, implier)
    spawners_best = map_to_impliers(phase.spawners_best, implier)
    pushed = map_to_impliers(phase.pushed_last, implier)
    lns_rounds = 0
    if not shared.done():
        if opts.deterministic:
            lns_rounds = _run_sequential(ctx, opts, rng, strong, retained, phase, spawners,
                                         spawners_best, pushed, heuristic)
        else:
            lns_rounds = _run_threaded(ctx, opts, rng, strong, retained, phase, spawners,
                                       spawners_best, pushed, heuristic)
    extra["lns_rounds"] = lns_rounds
    with shared.lock:
        sample = shared.sample
        bound = shared.bound
        optimal = shared.optimal or bound >= len(sample)
        exclusive = list(shared.clique)
        history = list(shared.history)
    # a clique as large as the sample proves optimality on its own; otherwise the
    # matching bound came from the full-problem solver's infeasibility proofs
    if optimal:
        extra["certificate"] = "clique" if len(exclusive) >= len(sample) else "full_problem"
    return finish(sample, min(bound, len(sample)), optimal, exclusive, len(phase.feasible), history, extra)


def _index_for(model: FeatureModel, phase) -> CoverageIndex:
    idx = CoverageIndex(model)
    for inter in phase.infeasible:
        idx.mark_infeasible(inter)
    return idx


def _count_covered(model: FeatureModel, sample: Sequence[Configuration]) -> int:
    idx = CoverageIndex(model)
    masks = [config_mask(c) for c in sample]
    cov = idx.covered_partners(masks)
    return sum(bin(cov[a] & idx.higher[a]).count("1") for a in idx.lits)


def _lb_seed(ctx, phase, strong, retained, spawners, spawners_best, pushed, rng, heuristic):
    return dict(model=strong, feasible=retained, sample=ctx.shared.sample, clique=ctx.shared.clique,
                spawners_all=spawners, spawners_best=spawners_best, pushed_last=pushed,
                rng=random.Random(rng.random()), heuristic=heuristic, graph=ctx.graph)


def _install_full(ctx: _Context, res) -> None:
    shared = ctx.shared
    shared.publish_bound(res.lower_bound)
    if len(res.exclusive) > len(shared.clique):
        shared.publish_clique(res.exclusive)
    if res.sample is not None and res.optimal and _valid_for(ctx, res.sample):
        shared.install(res.sample)
        with shared.lock:
            if len(shared.sample) <= res.lower_bound:
                shared.optimal = True


def _run_sequential(ctx, opts, rng, strong, retained, phase, spawners, spawners_best, pushed,
                    heuristic) -> int:
    shared = ctx.shared
    over = lambda: time.monotonic() >= ctx.deadline
    lb_iters = opts.lb_iterations if opts.lb_iterations is not None else 200
    best, status = cut_price_round(**_lb_seed(ctx, phase, strong, retained, spawners, spawners_best,
                                              pushed, rng, heuristic),
                                   max_iterations=lb_iters, stop=over,
                                   time_limit=max(ctx.deadline - time.monotonic(), 0.0))
    shared.publish_clique(best)
    ctx.table.add(best)
    if shared.done():
        return 0
    if opts.full_solver and len(phase.feasible) <= FULL_SOLVER_LIMIT:
        share = time.monotonic() + 0.5 * max(ctx.deadline - time.monotonic(), 0.0)
        res = full_problem_solve(strong, retained, shared.clique, shared.sample, deadline=share,
                                 rng=random.Random(rng.random()), on_bound=shared.publish_bound)
        _install_full(ctx, res)
    rounds = 0
    while not shared.done() and not over():
        sample = list(shared.sample)
        worker_rng = random.Random(rng.random())
        while not over():
            new = destroy_and_repair(ctx, sample, worker_rng, over)
            if new is not None:
                break
        else:
            break
        rounds += 1
        if _valid_for(ctx, new):
            shared.install(new)
    return rounds


def _run_threaded(ctx, opts, rng, strong, retained, phase, spawners, spawners_best, pushed,
                  heuristic) -> int:
    shared = ctx.shared
    halt = threading.Event()
    over = lambda: halt.is_set() or time.monotonic() >= ctx.deadline or shared.done()

    def lb_worker():
        best, _ = cut_price_round(**_lb_seed(ctx, phase, strong, retained, spawners, spawners_best,
                                             pushed, rng, heuristic),
                                  max_iterations=opts.lb_iterations, stop=over,
                                  on_improve=shared.publish_clique,
                                  time_limit=max(ctx.deadline - time.monotonic(), 0.0))
        shared.publish_clique(best)
        ctx.table.add(best)

    def full_worker():
        res = full_problem_solve(strong, retained, shared.clique, shared.sample, deadline=ctx.deadline,
                                 stop=over, rng=full_rng, on_bound=shared.publish_bound)
        _install_full(ctx, res)

    full_rng = random.Random(rng.random())
    background = [threading.Thread(target=lb_worker, name="lower-bound", daemon=True)]
    if opts.full_solver and len(phase.feasible) <= FULL_SOLVER_LIMIT:
        background.append(threading.Thread(target=full_worker, name="full-problem", daemon=True))
    for th in background:
        th.start()
    rounds = 0
    try:
        while not over():
            channel: queue.Queue = queue.Queue()
            round_stop = threading.Event()
            sample = list(shared.sample)
            stop = lambda: round_stop.is_set() or over()

            def worker(seed):
                wrng = random.Random(seed)
                while not stop():
                    new = destroy_and_repair(ctx, sample, wrng, stop)
                    if new is not None:
                        channel.put(new)
                        return

            workers = [threading.Thread(target=worker, args=(rng.random(),), name=f"repair-{k}", daemon=True)
                       for k in range(max(opts.threads, 1))]
            for w in workers:
                w.start()
            new = None
            while new is None and not over():
                try:
                    new = channel.get(timeout=0.02)
                except queue.Empty:
                    if not any(w.is_alive() for w in workers):
                        break
            round_stop.set()
            for w in workers:
                w.join()
            if new is None:
                continue
            rounds += 1
            if _valid_for(ctx, new):
                shared.install(new)
    finally:
        halt.set()
        for th in background:
            th.join()
    return rounds
