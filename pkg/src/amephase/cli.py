"""Command-line interface: ``amephase <command> ...``.

Exit codes:
    0  success (certificate found, matrix is AME, oracle residuals in tolerance)
    1  invalid flags or input files
    2  not found / not AME / oracle residual above tolerance
    3  search blocked by a known nonexistence result for a prime factor
    4  instance too large for explicit state-vector verification
"""

from __future__ import annotations

import argparse
import contextlib
import json
import os
import sys
import tempfile

from . import __version__
from .crt import compose_matrices, crt_gate, split_matrix
from .errors import AmePhaseError, InstanceTooLargeError
from .field import COMPOSITE, FieldSpec
from .fixtures import FIXTURES, load_fixture
from .matrixio import RunManifest, Stopwatch, dumps, load, matrix_digest, read_manifest, save
from .oracle import DEFAULT_CAP, build_state, reduce, verify_duality
from .phasecore import Bipartition, certify_ame, default_workers
from .search import (
    COST_ZERO,
    ParallelTempering,
    SearchConfig,
    run_composite_search,
)

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_NOT_FOUND = 2
EXIT_GATE_BLOCKED = 3
EXIT_TOO_LARGE = 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


class _Records:
    """Line-delimited JSON records, written to a file or stdout ('-')."""

    def __init__(self, target):
        self.fh = None
        if target == "-":
            self.fh = sys.stdout
        elif target:
            self.fh = open(target, "w")

    def emit(self, kind: str, **fields):
        if self.fh is not None:
            self.fh.write(json.dumps({"record": kind, **fields}) + "\n")

    def close(self):
        if self.fh not in (None, sys.stdout):
            self.fh.close()


# -- report formatting

def _fmt_deficit(v: float) -> str:
    return "0.0" if v == 0 else f"{v:.8f}"


def entropy_table(report) -> str:
    """Per-size Renyi-2 entropy table (smallest entropy at each size)."""
    head = f"{'k':>3}  {'n_bips':>7}  {'computed S2 [bits]':>19}  {'target S2 [bits]':>17}  {'deficit [bits]':>14}"
    lines = [head]
    for r in report.sizes:
        lines.append(f"{r.size:>3}  {r.n_bips:>7}  {r.s2_bits:>19.8f}  {r.target_bits:>17.8f}  "
                     f"{_fmt_deficit(r.deficit_bits):>14}")
    return "\n".join(lines)


def saturation_table(report) -> str:
    """Per-size saturation summary with k-uniformity and code distance."""
    rows = [("Size", "Subsets", "Target Rank", "Rank Saturation", "Ratio", "Status")]
    for r in report.sizes:
        rows.append((str(r.size), f"{r.n_bips:,}", str(r.size), f"{r.saturated:,}/{r.n_bips:,}",
                     f"{r.ratio:.3f}", "ok" if r.failed == 0 else "FAIL"))
    total, sat = report.total_bips, report.total_saturated
    pct = "100% Perfect" if sat == total else f"{100 * sat / total:.2f}%"
    rows.append(("Total", f"{total:,}", "--", pct,
                 f"{min(r.ratio for r in report.sizes):.1f}",
                 "CERTIFIED" if report.is_ame else "NOT AME"))
    widths = [max(len(row[c]) for row in rows) for c in range(6)]
    lines = ["  ".join(cell.rjust(w) for cell, w in zip(row, widths)) for row in rows]
    n, d = report.n_parties, report.field.cardinality
    lines.append(f"k-uniformity {report.k_uniformity}, code distance {report.code_distance}")
    if report.is_ame:
        lines.append(f"pure [[{n},1,{report.code_distance}]]_{d} quantum MDS code")
    return "\n".join(lines)


def failed_summary(report) -> str:
    counts = report.failed_counts()
    n = report.n_parties
    c, s, b = counts["classes"], counts["subsets"], counts["balanced"]
    lines = [f"failed complement classes (|S| <= {n // 2}): {c[0]} of {c[1]}",
             f"failed subsets (|S| <= {n // 2}, both sides counted): {s[0]} of {s[1]}"]
    if n % 2 == 0:
        lines.append(f"failed balanced subsets (|S| = {n // 2}): {b[0]} of {b[1]}")
    return "\n".join(lines)


def emit_report(records: _Records, report):
    for r in report.sizes:
        records.emit("size", k=r.size, n_bips=r.n_bips, n_subsets=r.n_subsets,
                     s2_bits=r.s2_bits, target_bits=r.target_bits, deficit_bits=r.deficit_bits,
                     saturated=r.saturated, min_rank=r.min_rank, rank_deficit=r.rank_deficit)
    records.emit("summary", n_parties=report.n_parties, field=report.field.flag(),
                 is_ame=report.is_ame, k_uniformity=report.k_uniformity,
                 code_distance=report.code_distance,
                 failed={k: list(v) for k, v in report.failed_counts().items()})


def print_report(report, out=None):
    print(entropy_table(report), file=out)
    print(file=out)
    print(saturation_table(report), file=out)


def _manifest(args, argv, field: FieldSpec | None, watch: Stopwatch, digest: str) -> RunManifest:
    config = {k: v for k, v in vars(args).items() if k != "func"}
    config["argv"] = list(argv)
    return RunManifest(command=" ".join(["amephase", *argv]), config=config,
                       field=field.flag() if field else "",
                       seed=getattr(args, "seed", None), seconds=watch.seconds, digest=digest)


# -- commands

def cmd_search(args, argv) -> int:
    watch = Stopwatch()
    records = _Records(args.jsonl)
    try:
        if args.resume:
            engine = ParallelTempering.load_checkpoint(args.resume)
            config = engine.config
        else:
            field = FieldSpec.parse(args.field)
            config = SearchConfig(
                n_parties=args.n, field=field, replicas=args.replicas, t_min=args.tmin,
                t_max=args.tmax, max_steps=args.steps, stall_limit=args.stall,
                exchange_interval=args.exchange, guide_probability=args.guide,
                rng_seed=args.seed, restarts=args.restarts, auto_ladder=args.auto_ladder,
                check_interval=args.check_interval).validate()
            engine = None
        field = config.field

        if field.kind == COMPOSITE:
            if args.checkpoint or args.resume:
                raise AmePhaseError("checkpoints are per prime; search the components separately")
            gate = crt_gate(config.n_parties, field.primes)
            if gate.blocked and not args.force_gate_off:
                print(f"GateBlocked: {gate.reason} (prime {gate.prime})")
                print(f"  {gate.citation}")
                records.emit("gate", blocked=True, prime=gate.prime, reason=gate.reason,
                             citation=gate.citation)
                return EXIT_GATE_BLOCKED
            if gate.blocked:
                print(f"gate forced off: {gate.reason} (prime {gate.prime})")
            with _trace_file(args.trace) as trace:
                res = run_composite_search(config, force=True, trace=trace)
            for comp in res.components:
                print(f"F_{comp.config.field.p}: best cost {comp.best_cost} after "
                      f"{comp.steps_taken} steps, {comp.restarts_used} restarts "
                      f"({comp.terminated_by})")
                records.emit("component", prime=comp.config.field.p, best_cost=comp.best_cost,
                             steps=comp.steps_taken, restarts=comp.restarts_used,
                             terminated_by=comp.terminated_by)
            best, report, found = res.best, res.report, res.found
            best_cost = res.best_cost
        else:
            with _trace_file(args.trace) as trace:
                if engine is None:
                    engine = ParallelTempering(config, trace)
                else:
                    engine.trace = trace
                budget = args.steps if args.resume and args.steps_given else config.max_steps
                every = args.checkpoint_every
                while engine.best_cost > 0 and engine.step_count < budget:
                    stop = budget if not (args.checkpoint and every) else min(
                        budget, engine.step_count + every)
                    while engine.best_cost > 0 and engine.step_count < stop:
                        engine.step()
                    if args.checkpoint:
                        engine.save_checkpoint(args.checkpoint)
                res = engine.result()
            if args.checkpoint:
                engine.save_checkpoint(args.checkpoint)
            best, report, found = res.best, res.report, res.terminated_by == COST_ZERO
            best_cost = res.best_cost
            print(f"{field.label()}: best cost {res.best_cost} after {res.steps_taken} steps, "
                  f"{res.restarts_used} restarts ({res.terminated_by})")
            records.emit("search", best_cost=res.best_cost, steps=res.steps_taken,
                         restarts=res.restarts_used, terminated_by=res.terminated_by,
                         t_min=config.t_min, t_max=config.t_max,
                         cost_trace=[list(t) for t in res.cost_trace])

        manifest = _manifest(args, argv, field, watch, matrix_digest(best))
        records.emit("manifest", **json.loads(manifest.to_json()))
        if args.out:
            save(best, args.out, manifest)
        if found:
            print(f"AME({config.n_parties},{field.cardinality}) certificate found")
        else:
            print(f"NotFound: best cost {best_cost}")
            print(failed_summary(report))
        if not args.out:
            print(dumps(best), end="")
        print()
        print_report(report)
        emit_report(records, report)
        print(f"digest {manifest.digest}")
        return EXIT_OK if found else EXIT_NOT_FOUND
    finally:
        records.close()


@contextlib.contextmanager
def _trace_file(path):
    if not path:
        yield None
        return
    with open(path, "w") as fh:
        yield fh


def cmd_certify(args, argv) -> int:
    records = _Records(args.jsonl)
    try:
        P = load(args.file)
        report = certify_ame(P, workers=args.threads)
        print(f"N = {P.n}, field {P.field.label()}")
        for comp in report.components:
            print(f"  component {comp.field.label()}: "
                  f"{'AME' if comp.is_ame else 'not AME'}, k-uniformity {comp.k_uniformity}")
        print_report(report)
        if not report.is_ame:
            print(failed_summary(report))
        emit_report(records, report)
        return EXIT_OK if report.is_ame else EXIT_NOT_FOUND
    finally:
        records.close()


def cmd_crt_compose(args, argv) -> int:
    watch = Stopwatch()
    mats = [load(f) for f in args.files]
    if len(mats) < 2:
        raise AmePhaseError("compose needs at least two prime-field matrices")
    P = compose_matrices(mats)
    manifest = _manifest(args, argv, P.field, watch, matrix_digest(P))
    if args.out:
        save(P, args.out, manifest)
        print(f"wrote {args.out} ({P.field.label()}, N = {P.n})")
    else:
        print(dumps(P, manifest), end="")
    return EXIT_OK


def cmd_crt_split(args, argv) -> int:
    watch = Stopwatch()
    parts = split_matrix(load(args.file))
    for C in parts:
        path = f"{args.prefix}_{C.field.p}.txt"
        save(C, path, _manifest(args, argv, C.field, watch, matrix_digest(C)))
        print(f"wrote {path} ({C.field.label()})")
    return EXIT_OK


def cmd_verify(args, argv) -> int:
    P = load(args.file)
    rep = verify_duality(P, tolerance=args.tolerance, cap=args.cap)
    print(f"N = {P.n}, field {P.field.label()}, {len(rep.cuts)} bipartitions")
    print(f"max |purity_exact - q^-rk|      {rep.max_residual:.3e}")
    print(f"max |rho^2 - q^-rk rho|         {rep.max_flatness:.3e}")
    if rep.max_identity is not None:
        print(f"max |rho - q^-|S| I| (|S|<=N/2) {rep.max_identity:.3e}")
    if rep.max_eigen is not None:
        print(f"max eigenvalue deviation        {rep.max_eigen:.3e}")
    print(f"AME: {rep.is_ame}; tolerance {args.tolerance:g}: {'ok' if rep.ok else 'FAILED'}")
    if args.dump is not None:
        S = Bipartition.of([int(t) for t in args.dump.split(",") if t], P.n)
        print(f"rho_S for S = {S.members}:")
        print(reduce(build_state(P, args.cap), S).to_text())
    return EXIT_OK if rep.ok else EXIT_NOT_FOUND


def cmd_gate(args, argv) -> int:
    field = FieldSpec.parse(args.field)
    gate = crt_gate(args.n, [c.p for c in field.components()])
    print(str(gate))
    if gate.blocked:
        print(f"  {gate.citation}")
        return EXIT_GATE_BLOCKED
    return EXIT_OK


def cmd_fixture(args, argv) -> int:
    P = load_fixture(args.name)
    if args.out:
        save(P, args.out)
    else:
        print(dumps(P), end="")
    return EXIT_OK


def cmd_replay(args, argv) -> int:
    """Re-run the command recorded in a file's manifest and compare digests."""
    with open(args.file) as fh:
        manifest = read_manifest(fh.read())
    if manifest is None:
        raise AmePhaseError(f"{args.file} has no manifest")
    old = list(manifest.config["argv"])
    with tempfile.TemporaryDirectory() as tmp:
        out = os.path.join(tmp, "replay.txt")
        if "--out" in old:
            old[old.index("--out") + 1] = out
        else:
            old += ["--out", out]
        with contextlib.redirect_stdout(open(os.devnull, "w")):
            code = main(old)
        with open(out) as fh:
            new = read_manifest(fh.read())
    same = new is not None and new.digest == manifest.digest
    print(f"recorded {manifest.digest}")
    print(f"replayed {new.digest if new else '-'} (exit {code})")
    print("digest reproduced" if same else "digest MISMATCH")
    return EXIT_OK if same else EXIT_NOT_FOUND


# -- parser

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="amephase", description="AME phase-state search and certification")
    p.add_argument("--version", action="version", version=f"amephase {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("search", help="parallel-tempering search for an AME phase matrix")
    s.add_argument("--n", type=int, help="number of parties")
    s.add_argument("--field", help="prime:p | primepower:p:m[:c0,c1,..] | composite:p1,p2,..")
    s.add_argument("--replicas", type=int, default=8)
    s.add_argument("--tmin", type=float, default=0.2)
    s.add_argument("--tmax", type=float, default=5.0)
    s.add_argument("--steps", type=int, default=100_000)
    s.add_argument("--stall", type=int, default=5000)
    s.add_argument("--exchange", type=int, default=50, help="steps between exchange sweeps")
    s.add_argument("--guide", type=float, default=0.05, help="guide (copy-best) probability")
    s.add_argument("--restarts", type=int, default=None, help="maximum stall restarts")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--auto-ladder", action="store_true")
    s.add_argument("--check-interval", type=int, default=10_000)
    s.add_argument("--force-gate-off", action="store_true")
    s.add_argument("--out", help="write the best matrix here")
    s.add_argument("--trace", help="stream per-replica JSON lines here")
    s.add_argument("--checkpoint", help="save engine state here")
    s.add_argument("--checkpoint-every", type=int, default=0)
    s.add_argument("--resume", help="continue from a checkpoint")
    s.add_argument("--jsonl", help="machine-readable records ('-' for stdout)")
    s.set_defaults(func=cmd_search)

    c = sub.add_parser("certify", help="cut-rank certification report")
    c.add_argument("file")
    c.add_argument("--threads", type=int, default=None)
    c.add_argument("--jsonl")
    c.set_defaults(func=cmd_certify)

    r = sub.add_parser("crt", help="compose or split square-free composite matrices")
    rs = r.add_subparsers(dest="crt_command", required=True, parser_class=_Parser)
    rc = rs.add_parser("compose")
    rc.add_argument("files", nargs="+")
    rc.add_argument("--out")
    rc.set_defaults(func=cmd_crt_compose)
    rp = rs.add_parser("split")
    rp.add_argument("file")
    rp.add_argument("--prefix", required=True, help="writes <prefix>_<p>.txt per prime")
    rp.set_defaults(func=cmd_crt_split)

    v = sub.add_parser("verify", help="explicit state-vector check of the rank/purity identity")
    v.add_argument("file")
    v.add_argument("--cap", type=int, default=DEFAULT_CAP, help="maximum q**N amplitudes")
    v.add_argument("--tolerance", type=float, default=1e-10)
    v.add_argument("--dump", help="print rho_S for comma-separated parties S")
    v.set_defaults(func=cmd_verify)

    g = sub.add_parser("gate", help="check prime factors against known nonexistence results")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--field", required=True)
    g.set_defaults(func=cmd_gate)

    f = sub.add_parser("fixture", help="export a bundled AME(17,10001) matrix")
    f.add_argument("name", choices=sorted(FIXTURES))
    f.add_argument("--out")
    f.set_defaults(func=cmd_fixture)

    rr = sub.add_parser("replay", help="re-run a file's manifest command and compare digests")
    rr.add_argument("file")
    rr.set_defaults(func=cmd_replay)
    return p


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "search":
            args.steps_given = "--steps" in argv
            if not args.resume and (args.n is None or args.field is None):
                parser.error("search needs --n and --field (or --resume)")
    except SystemExit as exc:
        return exc.code
    if getattr(args, "threads", None) is None and hasattr(args, "threads"):
        args.threads = default_workers()
    try:
        return args.func(args, argv)
    except InstanceTooLargeError as exc:
        print(f"InstanceTooLarge: {exc}", file=sys.stderr)
        print(f"required cap {exc.required}", file=sys.stderr)
        return EXIT_TOO_LARGE
    except (AmePhaseError, ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
