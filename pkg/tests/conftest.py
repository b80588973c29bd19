import os
import sys

from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

sys.path.insert(0, os.path.dirname(__file__))

from pairsample.model import FeatureModel  # noqa: E402

settings.register_profile("default", deadline=None, derandomize=True, print_blob=True,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@st.composite
def small_models(draw, max_features: int = 6, max_clauses: int = 8, min_concrete: int = 2):
    n = draw(st.integers(max(2, min_concrete), max_features))
    lits = st.integers(0, 2 * n - 1)
    clauses = draw(st.lists(st.lists(lits, min_size=1, max_size=3), max_size=max_clauses))
    concrete = draw(st.sets(st.integers(0, n - 1), min_size=min_concrete, max_size=n))
    return FeatureModel.from_clauses(n, clauses, concrete)
