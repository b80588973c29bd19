"""
Sampling a three-feature model
==============================

The model is ``x or y`` over three features x, y, z, all concrete.  Every
pair of literals from different features is an interaction; all of them
except (not x, not y) can occur in some valid configuration.  We ask for
the fewest configurations that together contain every feasible pair.
"""
from pairsample import parse_model, to_dimacs
from pairsample.lns import SolveOptions, solve
from pairsample.verify import verify_exclusive_set, verify_sample

model = parse_model("p cnf 3 1\n1 2 0\n")
res = solve(model, SolveOptions(time_limit=10, deterministic=True))

names = "xyz"
for config in res.sample:
    print("  ".join(n if v else "-" + n for n, v in zip(names, config)))

# the size is provably minimal: the bound equals the size
print("size", len(res.sample), "bound", res.lower_bound, "optimal", res.optimal)

# the bound comes with a certificate: interactions no configuration can share
cert = res.to_json()["exclusive_set"]
print("exclusive set:", [[to_dimacs(l) for l in pair] for pair in cert])

# both sides are audited by code that shares nothing with the solver
print(verify_sample(model, res.sample))
print(verify_exclusive_set(model, [tuple(p) for p in cert]))
