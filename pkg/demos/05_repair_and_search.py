"""
Destroy and repair
==================

Large neighbourhood search removes a few configurations, collects the
interactions that became uncovered and asks a SAT model for fewer
configurations covering them.  Four repair strategies differ in how many
interactions they hand to the SAT solver at once.
"""
import random

from pairsample.lns import SolveOptions, solve
from pairsample.model import FeatureModel, covers
from pairsample.satrepair import STRATEGIES
from pairsample.verify import verify_sample

# eight configurations of a free 3-feature model cover everything; four suffice
model = FeatureModel.from_clauses(3, [])
bloated = [(a, b, c) for a in (False, True) for b in (False, True) for c in (False, True)]
removed, kept = bloated[:5], bloated[5:]
missing = [(a, b) for a in range(6) for b in range(a + 1, 6) if a >> 1 != b >> 1
           and not any(covers(c, (a, b)) for c in kept)]
print(len(missing), "interactions uncovered after removing", len(removed), "configurations")
for name, repair in STRATEGIES.items():
    res = repair(model, missing, [], len(removed) - 1, rng=random.Random(0))
    print(f"{name:>20}: {res.outcome.name}, {len(res.sample or [])} configurations, {res.sat_calls} SAT calls")

# the whole loop, single-threaded and reproducible
rng = random.Random(2024)
clauses = [[2 * f + rng.randrange(2) for f in rng.sample(range(9), 3)] for _ in range(6)]
model = FeatureModel.from_clauses(9, clauses)
res = solve(model, SolveOptions(time_limit=20, deterministic=True, seed=1))
print("sizes installed:", [len(h) for h in res.history])
print("final", len(res.sample), "bound", res.lower_bound, "optimal", res.optimal)
print("verified:", verify_sample(model, res.sample).ok)
