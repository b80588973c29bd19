"""
Shrinking the model before sampling
===================================

Simplification fixes forced features, merges equivalent ones and
eliminates non-concrete variables.  A sample for the small model is mapped
back with ``restore_sample`` and stays complete for the original.  Universe
reduction then drops interactions that are covered whenever some other one
is.
"""
import random

from pairsample import parse_model, write_dimacs
from pairsample.initial import run_initial_phase
from pairsample.preprocess import restore_sample, simplify, universe_reduce
from pairsample.verify import verify_sample

text = """c concrete 1 2 3 5
p cnf 6 7
-1 4 0
-4 2 0
-2 1 0
3 5 0
-6 3 0
6 -3 0
4 5 6 0
"""
model = parse_model(text)
simp, rmap = simplify(model)
print(f"{model.num_features} features -> {simp.num_features}")
print(write_dimacs(simp))
print("map:", rmap.to_json())

phase = run_initial_phase(simp, random.Random(0))
print("initial sample of", len(phase.sample), "for the simplified model")
restored = restore_sample(rmap, phase.sample)
print("restored sample is complete for the original:", verify_sample(model, restored).ok)

retained, implier = universe_reduce(phase.model, phase.feasible)
print(f"{len(phase.feasible)} feasible interactions, {len(retained)} retained")
for dropped, by in sorted(implier.items()):
    print("  ", dropped, "is covered whenever", by, "is")
