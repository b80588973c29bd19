"""CNF feature models, literal encoding and unit propagation.

Literals are plain integers: ``2 * feature + (0 if positive else 1)``.  The
negation of a literal ``l`` is ``l ^ 1``.  Interactions are canonical pairs
``(a, b)`` of literal codes with ``feature(a) < feature(b)``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

Interaction = tuple[int, int]
Configuration = tuple[bool, ...]


class ParseError(ValueError):
    """Raised for malformed DIMACS input."""


class Conflict(Exception):
    """Unit propagation derived an empty clause."""


def lit(feature: int, positive: bool = True) -> int:
    return 2 * feature + (0 if positive else 1)


def neg(literal: int) -> int:
    return literal ^ 1


def feature_of(literal: int) -> int:
    return literal >> 1


def is_positive(literal: int) -> bool:
    return not literal & 1


def from_dimacs(value: int) -> int:
    if value == 0:
        raise ValueError("0 is not a literal")
    return lit(abs(value) - 1, value > 0)


def to_dimacs(literal: int) -> int:
    v = (literal >> 1) + 1
    return -v if literal & 1 else v


def interaction(a: int, b: int) -> Interaction:
    """Canonical interaction from two literals over distinct features."""
    if a >> 1 == b >> 1:
        raise ValueError("interaction literals must use distinct features")
    return (a, b) if a >> 1 < b >> 1 else (b, a)


def normalize_clause(literals: Iterable[int]) -> list[int] | None:
    """Deduplicate a clause; ``None`` if it is a tautology."""
    seen: set[int] = set()
    out = []
    for l in literals:
        if l ^ 1 in seen:
            return None
        if l not in seen:
            seen.add(l)
            out.append(l)
    return out


@dataclass(frozen=True)
class FeatureModel:
    num_features: int
    clauses: tuple[tuple[int, ...], ...]
    concrete: frozenset[int] = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.concrete is None:
            object.__setattr__(self, "concrete", frozenset(range(self.num_features)))
        else:
            object.__setattr__(self, "concrete", frozenset(self.concrete))
        limit = 2 * self.num_features
        for c in self.clauses:
            for l in c:
                if not 0 <= l < limit:
                    raise ValueError(f"literal {l} out of range for {self.num_features} features")
        for f in self.concrete:
            if not 0 <= f < self.num_features:
                raise ValueError(f"concrete feature {f} out of range")

    @classmethod
    def from_clauses(cls, num_features: int, clauses: Iterable[Iterable[int]],
                     concrete: Iterable[int] | None = None) -> "FeatureModel":
        """Build a normalized model from literal-code clauses."""
        normalized = []
        for c in clauses:
            nc = normalize_clause(c)
            if nc is not None:
                normalized.append(tuple(nc))
        return cls(num_features, tuple(normalized),
                   None if concrete is None else frozenset(concrete))

    @classmethod
    def from_dimacs_clauses(cls, num_features: int, clauses: Iterable[Iterable[int]],
                            concrete: Iterable[int] | None = None) -> "FeatureModel":
        """Like :meth:`from_clauses` but with signed 1-based DIMACS literals and ids."""
        return cls.from_clauses(
            num_features,
            ([from_dimacs(v) for v in c] for c in clauses),
            None if concrete is None else [abs(v) - 1 for v in concrete],
        )

    @property
    def concrete_sorted(self) -> list[int]:
        return sorted(self.concrete)

    def with_clauses(self, extra: Iterable[Sequence[int]]) -> "FeatureModel":
        existing = set(self.clauses)
        added = []
        for c in extra:
            nc = normalize_clause(c)
            if nc is None:
                continue
            t = tuple(nc)
            if t not in existing:
                existing.add(t)
                added.append(t)
        return FeatureModel(self.num_features, self.clauses + tuple(added), self.concrete)

    def is_satisfied_by(self, config: Sequence[bool]) -> bool:
        return all(any(config[l >> 1] != bool(l & 1) for l in c) for c in self.clauses)


@dataclass
class ParseOptions:
    concrete: Sequence[int] | None = None  # 1-based ids, overrides comment lines


def read_concrete_file(path) -> list[int]:
    """Read a newline-separated list of 1-based feature ids."""
    ids = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            for tok in line.split():
                ids.append(int(tok))
    return ids


def parse_model(text: str, options: ParseOptions | None = None) -> FeatureModel:
    """Parse DIMACS CNF with optional ``c concrete <ids>`` comment lines."""
    options = options or ParseOptions()
    num_vars = None
    declared = None
    concrete_ids: list[int] | None = None
    clauses: list[list[int]] = []
    current: list[int] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("%"):
            continue
        if line.startswith("c"):
            parts = line.split()
            if len(parts) >= 2 and parts[0] == "c" and parts[1] == "concrete":
                try:
                    ids = [int(t) for t in parts[2:]]
                except ValueError as exc:
                    raise ParseError(f"line {lineno}: bad concrete id") from exc
                concrete_ids = (concrete_ids or []) + ids
            continue
        if line.startswith("p"):
            parts = line.split()
            if len(parts) != 4 or parts[1] != "cnf":
                raise ParseError(f"line {lineno}: malformed header {line!r}")
            try:
                num_vars, declared = int(parts[2]), int(parts[3])
            except ValueError as exc:
                raise ParseError(f"line {lineno}: malformed header {line!r}") from exc
            if num_vars < 0 or declared < 0:
                raise ParseError(f"line {lineno}: negative counts in header")
            continue
        if num_vars is None:
            raise ParseError(f"line {lineno}: clause before header")
        for tok in line.split():
            try:
                v = int(tok)
            except ValueError as exc:
                raise ParseError(f"line {lineno}: bad literal {tok!r}") from exc
            if v == 0:
                clauses.append(current)
                current = []
            else:
                if abs(v) > num_vars:
                    raise ParseError(f"line {lineno}: literal {v} out of range")
                current.append(v)
    if num_vars is None:
        raise ParseError("missing 'p cnf' header")
    if current:
        clauses.append(current)
    if num_vars == 0:
        raise ParseError("model has zero features")
    if options.concrete is not None:
        concrete_ids = list(options.concrete)
    if concrete_ids is not None:
        for v in concrete_ids:
            if not 1 <= v <= num_vars:
                raise ParseError(f"concrete id {v} out of range")
        concrete = [v - 1 for v in concrete_ids]
    else:
        concrete = None
    return FeatureModel.from_clauses(
        num_vars, ([from_dimacs(v) for v in c] for c in clauses), concrete)


def write_dimacs(model: FeatureModel) -> str:
    lines = [f"p cnf {model.num_features} {len(model.clauses)}"]
    if model.concrete != frozenset(range(model.num_features)) or not model.concrete:
        ids = " ".join(str(f + 1) for f in model.concrete_sorted)
        lines.insert(0, f"c concrete {ids}".rstrip())
    for c in model.clauses:
        lines.append(" ".join(str(to_dimacs(l)) for l in c) + " 0")
    return "\n".join(lines) + "\n"


def unit_propagate(model: FeatureModel, seed: Iterable[int]) -> frozenset[int] | None:
    """Closure of ``seed`` under unit clauses; ``None`` on conflict.

    A straightforward fixpoint over all clauses.  The trail engine has its
    own watched-literal propagation; this one is kept simple on purpose.
    """
    assigned = set(seed)
    for l in assigned:
        if l ^ 1 in assigned:
            raise ValueError("seed contains a complementary pair")
    changed = True
    while changed:
        changed = False
        for c in model.clauses:
            open_lit = None
            n_open = 0
            sat = False
            for l in c:
                if l in assigned:
                    sat = True
                    break
                if l ^ 1 not in assigned:
                    n_open += 1
                    open_lit = l
            if sat:
                continue
            if n_open == 0:
                return None
            if n_open == 1:
                assigned.add(open_lit)
                changed = True
    return frozenset(assigned)


def enumerate_candidate_interactions(model: FeatureModel) -> Iterator[Interaction]:
    conc = model.concrete_sorted
    for f, g in itertools.combinations(conc, 2):
        for pf in (0, 1):
            for pg in (0, 1):
                yield (2 * f + pf, 2 * g + pg)


def num_candidate_interactions(model: FeatureModel) -> int:
    k = len(model.concrete)
    return 2 * k * (k - 1)


def covers(config: Sequence[bool], inter: Interaction) -> bool:
    a, b = inter
    return config[a >> 1] != bool(a & 1) and config[b >> 1] != bool(b & 1)


def config_literals(config: Sequence[bool]) -> list[int]:
    return [2 * f + (0 if v else 1) for f, v in enumerate(config)]


def config_mask(config: Sequence[bool]) -> int:
    m = 0
    for f, v in enumerate(config):
        m |= 1 << (2 * f + (0 if v else 1))
    return m


def mask_covers(mask: int, inter: Interaction) -> bool:
    return bool((mask >> inter[0]) & (mask >> inter[1]) & 1)
