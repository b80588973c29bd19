"""Independent audit of samples and mutually exclusive interaction sets.

Nothing here touches the solver's coverage bookkeeping: clauses are
evaluated directly on a dense truth table and every feasibility question is
answered by a fresh CDCL instance.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .model import Configuration, FeatureModel, Interaction
from .trails import ClauseDatabase, decide_feasibility


@dataclass
class SampleReport:
    valid_configs: bool
    covered: int
    missing: list[Interaction]
    invalid: list[int] = field(default_factory=list)  # indices of configurations violating a clause
    malformed: bool = False

    @property
    def ok(self) -> bool:
        return self.valid_configs and not self.missing and not self.malformed

    def to_json(self) -> dict:
        return {"ok": self.ok, "valid_configs": self.valid_configs, "covered": self.covered,
                "missing": [list(m) for m in self.missing], "invalid": self.invalid}


@dataclass
class ExclusiveReport:
    all_feasible: bool
    pairwise_exclusive: bool
    infeasible: list[Interaction] = field(default_factory=list)
    overlapping: list[tuple[Interaction, Interaction]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.all_feasible and self.pairwise_exclusive


def _truth_table(model: FeatureModel, sample: Sequence[Configuration]) -> np.ndarray:
    """Literal-indexed boolean matrix, shape (2n, |sample|)."""
    conf = np.asarray(sample, dtype=bool).reshape(len(sample), model.num_features)
    table = np.empty((2 * model.num_features, len(sample)), dtype=bool)
    table[0::2] = conf.T
    table[1::2] = ~conf.T
    return table


def verify_sample(model: FeatureModel, sample: Sequence[Configuration]) -> SampleReport:
    """Check validity of every configuration and completeness of coverage."""
    if any(len(c) != model.num_features for c in sample):
        return SampleReport(False, 0, [], malformed=True)
    table = _truth_table(model, sample)
    ok = np.ones(len(sample), dtype=bool)
    for c in model.clauses:
        ok &= table[list(c)].any(axis=0)
    invalid = [int(i) for i in np.nonzero(~ok)[0]]
    # only valid configurations count towards coverage
    good = table[:, ok]
    concrete = sorted(model.concrete)
    lits = np.array([2 * f + p for f in concrete for p in (0, 1)], dtype=np.int64)
    if good.shape[1]:
        rows = good[lits].astype(np.int64)
        together = rows @ rows.T > 0
    else:
        together = np.zeros((len(lits), len(lits)), dtype=bool)
    db = ClauseDatabase.from_model(model)
    covered = 0
    missing: list[Interaction] = []
    for i, a in enumerate(lits):
        for j in range(i + 1, len(lits)):
            b = lits[j]
            if a >> 1 == b >> 1:
                continue
            if together[i, j]:
                covered += 1
            elif decide_feasibility(db, (int(a), int(b))) is not None:
                missing.append((int(a), int(b)))
    return SampleReport(not invalid, covered, missing, invalid)


def verify_exclusive_set(model: FeatureModel, items: Sequence[Interaction]) -> ExclusiveReport:
    """Every member feasible, and no valid configuration contains two members."""
    db = ClauseDatabase.from_model(model)
    items = [tuple(i) for i in items]
    infeasible = [i for i in items if decide_feasibility(db, i) is None]
    overlapping = []
    for x in range(len(items)):
        for y in range(x + 1, len(items)):
            union = set(items[x]) | set(items[y])
            if any(l ^ 1 in union for l in union):
                continue
            if decide_feasibility(db, sorted(union)) is not None:
                overlapping.append((items[x], items[y]))
    return ExclusiveReport(not infeasible, not overlapping, infeasible, overlapping)
