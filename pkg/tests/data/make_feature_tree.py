"""Generate a synthetic feature-model CNF shaped like a typical product-line tree.

Usage: python3 make_feature_tree.py [features] [seed] > feature_tree.cnf

The tree has mandatory and optional children, or-groups and alternative
groups, plus a handful of requires/excludes constraints between leaves.
"""
import random
import sys


def generate(num_features: int = 80, seed: int = 11):
    rng = random.Random(seed)
    clauses = [[1]]  # root
    parent = {1: None}
    open_nodes = [1]
    next_id = 2
    while next_id <= num_features:
        p = rng.choice(open_nodes)
        kind = rng.choices(["optional", "mandatory", "or", "alternative"], [0.45, 0.15, 0.2, 0.2])[0]
        width = 1 if kind in ("optional", "mandatory") else rng.randint(2, 4)
        kids = list(range(next_id, min(next_id + width, num_features + 1)))
        next_id += len(kids)
        for k in kids:
            parent[k] = p
            clauses.append([-k, p])  # child implies parent
            open_nodes.append(k)
        if kind == "mandatory":
            clauses.append([-p, kids[0]])
        elif kind in ("or", "alternative") and len(kids) > 1:
            clauses.append([-p] + kids)
            if kind == "alternative":
                clauses += [[-a, -b] for i, a in enumerate(kids) for b in kids[i + 1:]]
        if rng.random() < 0.3 and len(open_nodes) > 4:
            open_nodes.remove(p)
    leaves = [f for f in parent if f not in {q for q in parent.values() if q}]
    for _ in range(max(2, num_features // 12)):
        a, b = rng.sample(leaves, 2)
        clauses.append([-a, b] if rng.random() < 0.6 else [-a, -b])
    return num_features, clauses


def to_text(n, clauses) -> str:
    lines = [f"p cnf {n} {len(clauses)}"] + [" ".join(map(str, c)) + " 0" for c in clauses]
    return "\n".join(lines) + "\n"


if __name__ == "__main__":
    n = int(sys.argv[1]) if len(sys.argv) > 1 else 80
    seed = int(sys.argv[2]) if len(sys.argv) > 2 else 11
    sys.stdout.write(to_text(*generate(n, seed)))
