"""
Lower bounds from mutually exclusive interactions
=================================================

Two interactions that no valid configuration can contain together need two
different configurations, so any set of pairwise exclusive interactions is
a lower bound.  Cliques of the propagation conflict graph are cheap to
check; a cut-and-price loop over its LP relaxation grows them.  On some
models the best clique still falls short of the optimum, and only the exact
full-problem search closes the gap.
"""
import random

from pairsample.initial import run_initial_phase
from pairsample.lns import SolveOptions, solve
from pairsample.lowerbound import ConflictGraph, cut_price_round, greedy_clique
from pairsample.model import FeatureModel

model = FeatureModel.from_clauses(6, [[0, 2], [3, 5], [7, 9, 10]])
rng = random.Random(1)
phase = run_initial_phase(model, rng)
graph = ConflictGraph(phase.model)
print("initial sample", len(phase.sample), "greedy clique", len(greedy_clique(graph, phase.feasible, 10, rng)))

clique, status = cut_price_round(phase.model, phase.feasible, phase.sample, phase.clique,
                                 spawners_all=phase.spawners_all, rng=rng, time_limit=10)
print("after cut and price:", len(clique), status.name)

# four unconstrained features: every clique has at most 4 members, yet 5 configurations are needed
free = FeatureModel.from_clauses(4, [])
res = solve(free, SolveOptions(time_limit=30, deterministic=True))
print("free model: size", len(res.sample), "clique", len(res.exclusive), "bound", res.lower_bound,
      "certificate", res.detail.get("certificate"))
