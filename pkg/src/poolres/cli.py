"""Command-line entry point: gen, prove, check, solve, fit.

Exit codes: 0 ok, 1 verification failure, 2 usage error.
Every artifact is a deterministic function of the flags.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from poolres import __version__
from poolres.formula import FormulaError, ParseError, emit_dimacs, parse_dimacs
from poolres.proof import CHECKS, ProofError, emit_proof, parse_proof, stats

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
STATS_SCHEMA = 1


class UsageError(Exception):
    pass


@dataclass(frozen=True)
class RunConfig:
    """One (family, parameters) job; validated before dispatch."""

    command: str
    family: str
    n: int | None = None
    seed: int = 0
    k: int = 1
    pyramid: int | None = None
    graph: str | None = None
    fresh_guard: bool = False
    mode: str = "pool"
    learning: str = "transitivity"
    checks: tuple = ()
    out_dir: str | None = None
    extra: dict = field(default_factory=dict)

    def params(self) -> dict:
        if self.family in ("gt",):
            return {"n": self.n}
        if self.family in ("ggt",):
            return {"n": self.n, "seed": self.seed}
        out = {"k": self.k, "seed": self.seed, "fresh_guard": self.fresh_guard}
        if self.graph is not None:
            out["graph"] = self.graph
        else:
            out["pyramid"] = self.pyramid
        return out

    def stem(self) -> str:
        if self.family == "gt":
            core = f"gt_n{self.n}"
        elif self.family == "ggt":
            core = f"ggt_n{self.n}_s{self.seed}"
        else:
            g = f"h{self.pyramid}" if self.graph is None else Path(self.graph).stem
            core = f"gpeb_{g}_k{self.k}_s{self.seed}"
        return core


def parse_int_list(text: str) -> list[int]:
    """'6', '4..14', '1,3,5' or '0..9,20'."""
    out: list[int] = []
    try:
        for part in text.split(","):
            if ".." in part:
                a, b = part.split("..")
                lo, hi = int(a), int(b)
                if hi < lo:
                    raise ValueError
                out.extend(range(lo, hi + 1))
            else:
                out.append(int(part))
    except ValueError:
        raise UsageError(f"bad integer list {text!r}") from None
    return out


# ---------------------------------------------------------------------------
# family construction


def validate(cfg: RunConfig) -> None:
    fam = cfg.family
    if fam in ("gt", "ggt"):
        if cfg.n is None:
            raise UsageError(f"{fam} needs --n")
        lo = 2 if fam == "gt" else 4
        if cfg.n < lo:
            raise UsageError(f"{fam} needs n >= {lo}, got {cfg.n}")
    elif fam == "gpeb":
        if (cfg.pyramid is None) == (cfg.graph is None):
            raise UsageError("gpeb needs exactly one of --pyramid and --graph")
        if cfg.pyramid is not None and cfg.pyramid < 1:
            raise UsageError("pyramid height must be >= 1")
        if cfg.k < 1:
            raise UsageError("k must be >= 1")
    else:
        raise UsageError(f"unknown family {fam!r}")
    if cfg.mode not in ("pool", "regrti"):
        raise UsageError(f"unknown mode {cfg.mode!r}")
    for c in cfg.checks:
        if c not in CHECKS:
            raise UsageError(f"unknown check {c!r}; choose from {', '.join(CHECKS)}")


def _graph(cfg: RunConfig):
    from poolres.families import parse_dag, pyramid

    if cfg.graph is not None:
        try:
            return parse_dag(Path(cfg.graph).read_text())
        except OSError as exc:
            raise UsageError(f"cannot read graph: {exc}") from None
    return pyramid(cfg.pyramid)


def build_formula(cfg: RunConfig):
    """Formula plus the objects the provers need (guards or graph and guard map)."""
    from poolres import families

    try:
        if cfg.family == "gt":
            return families.gen_gt(cfg.n), None
        if cfg.family == "ggt":
            guards = families.make_guards(cfg.n, cfg.seed)
            return families.gen_ggt(cfg.n, guards), guards
        g = _graph(cfg)
        rho = families.make_guard_map(g, cfg.k, cfg.seed, cfg.fresh_guard)
        return families.gen_gpeb(g, cfg.k, rho), (g, rho)
    except FormulaError as exc:
        raise UsageError(str(exc)) from None


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


# ---------------------------------------------------------------------------
# commands


def cmd_gen(cfg: RunConfig, out: str | None) -> int:
    validate(cfg)
    f, _ = build_formula(cfg)
    text = emit_dimacs(f)
    if out is None:
        sys.stdout.write(text)
    else:
        _write(Path(out), text)
    return EXIT_OK


def _prove_one(cfg: RunConfig) -> dict:
    """Build, check and (if all checks pass) write one proof.  Returns a summary."""
    f, aux = build_formula(cfg)
    log = None
    if cfg.family == "gt":
        from poolres.bpo import build_gt_refutation
        from poolres.proof import dag_to_proof

        proof = dag_to_proof(f, build_gt_refutation(cfg.n), cfg.mode)
    elif cfg.family == "ggt":
        from poolres.ggt_prover import run_ggt

        res = run_ggt(cfg.n, aux, cfg.mode)
        proof, log = res.proof, res.log.to_json()
    else:
        from poolres.gpeb_prover import run_gpeb

        g, rho = aux
        res = run_gpeb(g, cfg.k, rho, cfg.mode)
        proof, log = res.proof, res.log.to_json()
    checks = cfg.checks or default_checks(cfg)
    verdicts = [CHECKS[c](proof) for c in checks]
    ok = all(verdicts)
    if log is not None:
        log.pop("steps", None)
        log.pop("learned_timeline", None)
    record = {
        "schema": STATS_SCHEMA,
        "command": "prove",
        "family": cfg.family,
        "mode": cfg.mode,
        "params": cfg.params(),
        "formula": {"num_vars": f.num_vars, "num_clauses": len(f.clauses)},
        "proof": stats(proof).to_json(),
        "construction": log,
        "checks": [v.to_json() for v in verdicts],
        "ok": ok,
    }
    stem = f"{cfg.stem()}_{cfg.mode}"
    if ok and cfg.out_dir is not None:
        d = Path(cfg.out_dir)
        _write(d / f"{cfg.stem()}.cnf", emit_dimacs(f))
        _write(d / f"{stem}.proof", emit_proof(proof, f"{cfg.stem()}.cnf"))
        _write(d / f"{stem}.json", _dump(record))
    record["stem"] = stem
    return record


def default_checks(cfg: RunConfig) -> tuple:
    return ("soundness", "regular", "regrtl", "regrti") if cfg.mode == "regrti" else (
        "soundness", "regrtl")


def _run_jobs(fn, cfgs: list, jobs: int) -> list:
    if jobs <= 1 or len(cfgs) == 1:
        return [fn(c) for c in cfgs]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, cfgs))


def _report(records: list, quiet: bool) -> int:
    failed = [r for r in records if not r["ok"]]
    if not quiet:
        for r in records:
            status = "ok" if r["ok"] else "FAIL"
            size = r.get("proof", {}).get("node_count", r.get("solver", {}).get("decisions"))
            sys.stdout.write(f"{r['stem']}\t{status}\t{size}\n")
            for v in r.get("checks", []):
                if not v["ok"]:
                    sys.stdout.write(f"  {v['check']}: node {v.get('node')}: {v.get('message', '')}\n")
    return EXIT_FAIL if failed else EXIT_OK


def cmd_prove(cfgs: list, jobs: int, quiet: bool = False) -> int:
    for c in cfgs:
        validate(c)
    return _report(_run_jobs(_prove_one, cfgs, jobs), quiet)


def _solve_one(cfg: RunConfig) -> dict:
    from poolres.dpll import solve_ggt, trace_to_proof

    f, guards = build_formula(cfg)
    status, trace, st = solve_ggt(cfg.n, guards, cfg.learning)
    record = {
        "schema": STATS_SCHEMA,
        "command": "solve",
        "family": "ggt",
        "params": {**cfg.params(), "learning": cfg.learning},
        "formula": {"num_vars": f.num_vars, "num_clauses": len(f.clauses)},
        "status": status,
        "solver": st.to_json(),
        "trace_sha256": trace.digest(),
        "ok": status == "UNSAT",
    }
    proof = None
    if cfg.extra.get("export_proof"):
        proof = trace_to_proof(trace, f)
        verdicts = [CHECKS[c](proof) for c in (cfg.checks or ("soundness", "regrtl", "greedy_up"))]
        record["proof"] = stats(proof).to_json()
        record["checks"] = [v.to_json() for v in verdicts]
        # greedy_up may only flag nodes, which still counts as a pass
        record["ok"] = record["ok"] and all(verdicts)
    stem = f"{cfg.stem()}_{cfg.learning}"
    if record["ok"] and cfg.out_dir is not None:
        d = Path(cfg.out_dir)
        _write(d / f"{stem}.trace", trace.to_text())
        _write(d / f"{stem}.json", _dump(record))
        if proof is not None:
            _write(d / f"{cfg.stem()}.cnf", emit_dimacs(f))
            _write(d / f"{stem}.proof", emit_proof(proof, f"{cfg.stem()}.cnf"))
    record["stem"] = stem
    return record


def cmd_solve(cfgs: list, jobs: int, quiet: bool = False) -> int:
    for c in cfgs:
        validate(c)
    return _report(_run_jobs(_solve_one, cfgs, jobs), quiet)


def check_files(formula_path: str, proof_path: str, checks) -> dict:
    """Verdict JSON for a proof file.  Parse errors carry a file and line."""
    try:
        ftext = Path(formula_path).read_text()
        ptext = Path(proof_path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read input: {exc}") from None
    try:
        f = parse_dimacs(ftext)
    except ParseError as exc:
        return {"ok": False, "error": "parse", "file": formula_path, "line": exc.line,
                "message": str(exc)}
    try:
        p = parse_proof(ptext, f)
    except ParseError as exc:
        return {"ok": False, "error": "parse", "file": proof_path, "line": exc.line,
                "message": str(exc)}
    verdicts = []
    for c in checks:
        try:
            verdicts.append(CHECKS[c](p).to_json())
        except ProofError as exc:  # malformed structure the parser let through
            verdicts.append({"check": c, "ok": False, "message": str(exc)})
    return {"ok": all(v["ok"] for v in verdicts), "proof": proof_path, "checks": verdicts,
            "refutation": p.is_refutation()}


def cmd_check(formula_path: str, proof_path: str, checks) -> int:
    for c in checks:
        if c not in CHECKS:
            raise UsageError(f"unknown check {c!r}; choose from {', '.join(CHECKS)}")
    report = check_files(formula_path, proof_path, checks)
    sys.stdout.write(_dump(report))
    return EXIT_OK if report["ok"] else EXIT_FAIL


def _lookup(record: dict, key: str):
    cur = record
    for part in key.split("."):
        if not isinstance(cur, dict) or part not in cur:
            return None
        cur = cur[part]
    return cur


def loglog_fit(xs, ys) -> tuple[float, float]:
    """Least-squares slope and intercept of log y against log x."""
    lx = np.log(np.asarray(xs, dtype=float))
    ly = np.log(np.asarray(ys, dtype=float))
    slope, intercept = np.polyfit(lx, ly, 1)
    return float(slope), float(intercept)


def growth_report(points: dict, x_min=None, x_max=None) -> dict:
    """Mean y per x, log-log slope, successive ratios and y / x^slope."""
    xs = sorted(x for x in points if (x_min is None or x >= x_min) and (x_max is None or x <= x_max))
    if len(xs) < 2:
        raise UsageError("fit needs at least two distinct x values")
    ys = [float(np.mean(points[x])) for x in xs]
    if min(xs) <= 0 or min(ys) <= 0:
        raise UsageError("log-log fit needs positive data")
    slope, intercept = loglog_fit(xs, ys)
    rows = []
    for i, (x, y) in enumerate(zip(xs, ys)):
        rows.append({
            "x": x,
            "y": y,
            "runs": len(points[x]),
            "ratio_prev": None if i == 0 else y / ys[i - 1],
            "y_over_x_pow_slope": y / x ** slope,
        })
    return {"slope": round(slope, 6), "intercept": round(intercept, 6), "table": rows}


def cmd_fit(paths: list, x_key: str, y_key: str, x_min, x_max, as_json: bool) -> int:
    points: dict = {}
    if not paths:
        raise UsageError("fit needs at least one stats file")
    for p in paths:
        try:
            rec = json.loads(Path(p).read_text())
        except OSError as exc:
            raise UsageError(f"cannot read {p}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise UsageError(f"{p}: not JSON ({exc})") from None
        recs = rec if isinstance(rec, list) else [rec]
        for r in recs:
            x, y = _lookup(r, x_key), _lookup(r, y_key)
            if x is None or y is None:
                raise UsageError(f"{p}: missing {x_key!r} or {y_key!r}")
            points.setdefault(x, []).append(y)
    rep = growth_report(points, x_min, x_max)
    rep.update({"x": x_key, "y": y_key})
    if as_json:
        sys.stdout.write(_dump(rep))
    else:
        sys.stdout.write(f"slope {rep['slope']:.2f}  ({y_key} vs {x_key}, log-log)\n")
        sys.stdout.write(f"{'x':>8} {'mean y':>14} {'runs':>5} {'ratio':>8} {'y/x^s':>12}\n")
        for r in rep["table"]:
            ratio = "" if r["ratio_prev"] is None else f"{r['ratio_prev']:.3f}"
            sys.stdout.write(f"{r['x']:>8} {r['y']:>14.2f} {r['runs']:>5} {ratio:>8} "
                             f"{r['y_over_x_pow_slope']:>12.4g}\n")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


def _family_args(sp, with_mode: bool):
    sp.add_argument("family", choices=("gt", "ggt", "gpeb"))
    sp.add_argument("--n", help="order size; lists like 4..14 allowed where sweeping")
    sp.add_argument("--seed", default="0", help="guard seed or list of seeds")
    sp.add_argument("--k", type=int, default=1, help="xor arity for gpeb")
    sp.add_argument("--pyramid", type=int, help="pyramid height for gpeb")
    sp.add_argument("--graph", help="edge-list file 'n m sink' for gpeb")
    sp.add_argument("--fresh-guard", action="store_true",
                    help="guard clauses that mention every variable with one extra variable")
    if with_mode:
        sp.add_argument("--mode", choices=("pool", "regrti"), default="pool")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="poolres", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"poolres {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="write a formula as DIMACS")
    _family_args(g, with_mode=False)
    g.add_argument("--out", help="output file (default stdout)")

    p = sub.add_parser("prove", help="construct, check and write refutations")
    _family_args(p, with_mode=True)
    p.add_argument("--checks", help="comma-separated checks run before writing")
    p.add_argument("--out-dir", help="directory for .cnf/.proof/.json artifacts")
    p.add_argument("--jobs", type=int, default=1, help="parallel (n, seed) runs")
    p.add_argument("--quiet", action="store_true")

    c = sub.add_parser("check", help="run checkers on a proof file")
    c.add_argument("formula")
    c.add_argument("proof")
    c.add_argument("--checks", default="soundness,regular,regrtl,regrti",
                   help=f"comma-separated subset of {','.join(CHECKS)}")

    s = sub.add_parser("solve", help="run the greedy learning DPLL on GGT_n")
    s.add_argument("--n", required=True)
    s.add_argument("--seed", default="0")
    s.add_argument("--learning", choices=("transitivity", "input", "none"),
                   default="transitivity")
    s.add_argument("--export-proof", action="store_true",
                   help="replay the trace into a checked proof")
    s.add_argument("--checks", help="checks for the exported proof")
    s.add_argument("--out-dir")
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--quiet", action="store_true")

    f = sub.add_parser("fit", help="log-log growth fit over stats JSON files")
    f.add_argument("stats", nargs="+")
    f.add_argument("--x", default="params.n", help="dotted key for x (default params.n)")
    f.add_argument("--y", default="proof.node_count", help="dotted key for y")
    f.add_argument("--x-min", type=float)
    f.add_argument("--x-max", type=float)
    f.add_argument("--json", action="store_true")
    return ap


def _checks_arg(text) -> tuple:
    return tuple(t for t in text.split(",") if t) if text else ()


def _configs(args, command: str) -> list:
    ns = parse_int_list(args.n) if args.n is not None else [None]
    seeds = parse_int_list(args.seed)
    base = dict(
        command=command,
        family=getattr(args, "family", "ggt"),
        k=getattr(args, "k", 1),
        pyramid=getattr(args, "pyramid", None),
        graph=getattr(args, "graph", None),
        fresh_guard=getattr(args, "fresh_guard", False),
        mode=getattr(args, "mode", "pool"),
        learning=getattr(args, "learning", "transitivity"),
        checks=_checks_arg(getattr(args, "checks", None)),
        out_dir=getattr(args, "out_dir", None),
        extra={"export_proof": getattr(args, "export_proof", False)},
    )
    if base["family"] == "gt":
        seeds = seeds[:1]
    return [RunConfig(n=n, seed=s, **base) for n in ns for s in seeds]


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        if args.command == "gen":
            cfgs = _configs(args, "gen")
            if len(cfgs) != 1:
                raise UsageError("gen takes a single --n and --seed")
            return cmd_gen(cfgs[0], args.out)
        if args.command == "prove":
            return cmd_prove(_configs(args, "prove"), args.jobs, args.quiet)
        if args.command == "solve":
            return cmd_solve(_configs(args, "solve"), args.jobs, args.quiet)
        if args.command == "check":
            return cmd_check(args.formula, args.proof, _checks_arg(args.checks))
        return cmd_fit(args.stats, args.x, args.y, args.x_min, args.x_max, args.json)
    except UsageError as exc:
        sys.stderr.write(f"poolres: error: {exc}\n")
        return EXIT_USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
