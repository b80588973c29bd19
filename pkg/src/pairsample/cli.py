"""Command-line interface.

Exit codes: 0 success, 1 parse or I/O error, 2 unsatisfiable model,
3 verification failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import random
import sys
from typing import Sequence

from .model import (FeatureModel, ParseError, ParseOptions, num_candidate_interactions, parse_model,
                    read_concrete_file, to_dimacs, write_dimacs)
from .trails import Unsatisfiable

EXIT_OK, EXIT_IO, EXIT_UNSAT, EXIT_VERIFY = 0, 1, 2, 3

log = logging.getLogger("pairsample")


class _Fail(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def load_model(path: str, concrete: str | None = None) -> FeatureModel:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
        ids = read_concrete_file(concrete) if concrete else None
        return parse_model(text, ParseOptions(concrete=ids))
    except (OSError, ValueError) as exc:
        raise _Fail(EXIT_IO, f"cannot read model: {exc}") from exc


def load_sample(path: str, num_features: int) -> tuple[list[tuple[bool, ...]], dict]:
    """Read a sample JSON file (configurations as lists of literal codes)."""
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        sample = []
        for row in data["sample"]:
            config: list[bool | None] = [None] * num_features
            for code in row:
                code = int(code)
                if not 0 <= code < 2 * num_features:
                    raise ValueError(f"literal code {code} out of range")
                config[code >> 1] = not code & 1
            if any(v is None for v in config):
                raise ValueError("configuration does not assign every feature")
            sample.append(tuple(config))  # type: ignore[arg-type]
        return sample, data
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise _Fail(EXIT_IO, f"cannot read sample: {exc}") from exc


def _write(text: str, path: str | None) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    except OSError as exc:
        raise _Fail(EXIT_IO, f"cannot write {path}: {exc}") from exc


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


# -- subcommands ---------------------------------------------------------------
def cmd_sample(args) -> int:
    from .lns import SolveOptions, solve

    model = load_model(args.model, args.concrete)
    opts = SolveOptions(threads=1 if args.deterministic else args.threads, time_limit=args.time_limit,
                        seed=args.seed, deterministic=args.deterministic,
                        preprocess=not args.no_preprocess)
    res = solve(model, opts)
    log.info("sample size %d, lower bound %d, optimal %s", len(res.sample), res.lower_bound, res.optimal)
    _write(_dump(res.to_json()), args.output)
    return EXIT_OK


def cmd_bound(args) -> int:
    from .initial import run_initial_phase
    from .lowerbound import cut_price_round
    from .preprocess import ReconstructionMap, map_to_impliers, simplify, universe_reduce
    from .trails import ClauseDatabase, decide_feasibility

    model = load_model(args.model, args.concrete)
    if args.no_preprocess:
        simp, rmap = model, ReconstructionMap.identity(model.num_features)
    else:
        simp, rmap = simplify(model)
    if decide_feasibility(ClauseDatabase.from_model(simp), ()) is None:
        raise Unsatisfiable("model has no valid configuration")
    rng = random.Random(args.seed)
    if len(simp.concrete) < 2:
        out = {"lower_bound": 1, "initial_size": 1, "status": "degenerate", "exclusive_set": []}
        _write(_dump(out), args.output)
        return EXIT_OK
    phase = run_initial_phase(simp, rng)
    retained, implier = universe_reduce(phase.model, phase.feasible)
    clique, status = cut_price_round(
        phase.model, retained, phase.sample, map_to_impliers(phase.clique, implier),
        spawners_all=map_to_impliers(phase.spawners_all, implier),
        spawners_best=map_to_impliers(phase.spawners_best, implier),
        pushed_last=map_to_impliers(phase.pushed_last, implier),
        rng=rng, time_limit=args.time_limit)
    if len(clique) < len(phase.clique):
        clique = phase.clique
    out = {
        "lower_bound": len(clique),
        "initial_size": len(phase.sample),
        "status": status.name.lower(),
        "exclusive_set": [sorted(rmap.original_literal(l) for l in inter) for inter in clique],
    }
    _write(_dump(out), args.output)
    return EXIT_OK


def cmd_verify(args) -> int:
    from .verify import verify_exclusive_set, verify_sample

    model = load_model(args.model, args.concrete)
    sample, data = load_sample(args.sample, model.num_features)
    rep = verify_sample(model, sample)
    report = {"sample": rep.to_json(), "size": len(sample)}
    ok = rep.ok
    if "exclusive_set" in data:
        ex = verify_exclusive_set(model, [tuple(int(l) for l in i) for i in data["exclusive_set"]])
        report["exclusive_set"] = {"ok": ex.ok, "size": len(data["exclusive_set"]),
                                   "all_feasible": ex.all_feasible,
                                   "pairwise_exclusive": ex.pairwise_exclusive}
        ok &= ex.ok
        if ex.ok and len(data["exclusive_set"]) > len(sample):
            ok = False  # a valid certificate larger than a complete sample is impossible
    bound = data.get("lower_bound")
    if isinstance(bound, int) and rep.ok and bound > len(sample):
        ok = False
        report["bound_exceeds_size"] = True
    report["ok"] = ok
    print(f"configurations: {len(sample)} {'valid' if rep.valid_configs else 'INVALID'}", file=sys.stderr)
    print(f"covered interactions: {rep.covered}, missing: {len(rep.missing)}", file=sys.stderr)
    for a, b in rep.missing[:20]:
        print(f"  missing {to_dimacs(a)} {to_dimacs(b)}", file=sys.stderr)
    if "exclusive_set" in report:
        ex_rep = report["exclusive_set"]
        print(f"exclusive set of {ex_rep['size']}: {'ok' if ex_rep['ok'] else 'FAILED'}", file=sys.stderr)
    print("verification " + ("passed" if ok else "FAILED"), file=sys.stderr)
    _write(_dump(report), args.output)
    return EXIT_OK if ok else EXIT_VERIFY


def cmd_preprocess(args) -> int:
    from .preprocess import simplify

    model = load_model(args.model, args.concrete)
    simp, rmap = simplify(model)
    _write(write_dimacs(simp), args.output)
    if args.map:
        data = rmap.to_json()
        if args.impliers:
            data["impliers"] = _implier_pairs(simp, rmap, args.seed)
        _write(_dump(data), args.map)
    return EXIT_OK


def _implier_pairs(simp: FeatureModel, rmap, seed: int) -> list:
    from .initial import run_initial_phase
    from .preprocess import universe_reduce

    if len(simp.concrete) < 2:
        return []
    phase = run_initial_phase(simp, random.Random(seed))
    _, implier = universe_reduce(phase.model, phase.feasible)

    def dimacs(inter):
        return [to_dimacs(rmap.original_literal(l)) for l in inter]
    return [{"eliminated": dimacs(e), "implier": dimacs(i)} for e, i in sorted(implier.items())]


def cmd_stats(args) -> int:
    model = load_model(args.model, args.concrete)
    out = {
        "features": model.num_features,
        "clauses": len(model.clauses),
        "concrete": len(model.concrete),
        "universe": num_candidate_interactions(model),
    }
    _write(_dump(out), args.output)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pairsample", description="Pairwise interaction sampling for CNF feature models.")
    p.add_argument("-v", "--verbose", action="count", default=0, help="progress logging to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("model", help="DIMACS CNF file")
        sp.add_argument("--concrete", help="file of 1-based concrete feature ids")
        sp.add_argument("--output", "-o", help="output path (default stdout)")

    s = sub.add_parser("sample", help="compute a small pairwise sample")
    common(s)
    s.add_argument("--threads", type=int, default=1)
    s.add_argument("--time-limit", type=float, default=60.0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--deterministic", action="store_true", help="one worker, reproducible output")
    s.add_argument("--no-preprocess", action="store_true")
    s.set_defaults(func=cmd_sample)

    b = sub.add_parser("bound", help="initial phase plus lower bound only")
    common(b)
    b.add_argument("--time-limit", type=float, default=60.0)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--no-preprocess", action="store_true")
    b.set_defaults(func=cmd_bound)

    v = sub.add_parser("verify", help="audit a sample JSON against a model")
    common(v)
    v.add_argument("sample", help="sample JSON as written by 'sample'")
    v.set_defaults(func=cmd_verify)

    pp = sub.add_parser("preprocess", help="write the simplified model")
    common(pp)
    pp.add_argument("--map", help="write the reconstruction map JSON here")
    pp.add_argument("--impliers", action="store_true", help="include universe-reduction implier pairs in the map")
    pp.add_argument("--seed", type=int, default=0)
    pp.set_defaults(func=cmd_preprocess)

    st = sub.add_parser("stats", help="instance metrics")
    common(st)
    st.set_defaults(func=cmd_stats)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_IO if exc.code else EXIT_OK
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, stream=sys.stderr, format="%(asctime)s %(name)s %(message)s")
    try:
        return args.func(args)
    except _Fail as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except ParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except Unsatisfiable as exc:
        print(f"unsatisfiable: {exc}", file=sys.stderr)
        return EXIT_UNSAT


if __name__ == "__main__":
    sys.exit(main())
