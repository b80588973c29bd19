"""
Several partial configurations over one clause database
=======================================================

Each ``Trail`` is a partial assignment closed under unit propagation.  All
trails share one append-only clause database; a clause learned while
completing one trail becomes visible to the others the next time they
propagate.
"""
from pairsample.model import FeatureModel
from pairsample.trails import ClauseDatabase, Propagator, Trail, decide_feasibility

# literal code: 2 * feature, +1 for the negation
A, NA, B, NB, C, NC = range(6)
model = FeatureModel.from_clauses(3, [[NA, B], [NA, NB, C], [NC, NB]])  # a -> b, a and b -> c, c -> not b
db = ClauseDatabase.from_model(model)

first, second = Trail(db), Trail(db)
# a forces b and c, but c forbids b: the push fails and "not a" is learned as a unit
print("push a:", first.push_and_propagate([A]), "learned so far:", db.learned)
# the second trail picks up the learned unit when it next propagates
print("push b:", second.push_and_propagate([B]), "literals:", second.literals())

# completing fills every remaining feature; conflicts are learned into db
second.complete()
print("second complete:", second.assignment(3))

# feasibility of an interaction is one assumption-based search
print("a and c feasible?", decide_feasibility(db, (A, C)))
print("not a and c feasible?", decide_feasibility(db, (NA, C)))

# the propagator answers closure queries without learning
prop = Propagator(model)
print("closure of {b}:", prop.up([B]))
print("does {b, c} conflict under propagation?", prop.conflicts([B, C]))
