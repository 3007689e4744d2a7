"""Command-line entry point: ``regen-sim tradeoff|simulate|verify|export-graph``.

Exit codes: 0 when every enabled check passed, 1 when a check failed or
the coefficient search gave up, 2 for bad input.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from fractions import Fraction
from pathlib import Path

from .choice import FailureHistory, choose_history
from .codec import load_snapshot
from .errors import InvalidParams, RegenError, TooLarge
from .flowgraph import build_graph
from .params import auto_field_size, normalized_params
from .runner import (FAILURE_MODELS, RunConfig, parse_script, run_simulation, tradeoff_csv,
                     verify_replay, verify_snapshot, write_outputs)

log = logging.getLogger("regen_sim")


def _add_params(p: argparse.ArgumentParser, need_q: bool = True) -> None:
    p.add_argument("--n", type=int, required=True, help="number of storage nodes")
    p.add_argument("--k", type=int, required=True, help="nodes needed to recover the file")
    p.add_argument("--ell", type=int, required=True, help="tradeoff corner, 1..k")
    if need_q:
        g = p.add_mutually_exclusive_group()
        g.add_argument("--q", type=int, help="prime field size")
        g.add_argument("--auto-q", action="store_true",
                       help="smallest admissible prime (the default)")
    p.add_argument("--allow-small-field", action="store_true",
                   help="accept q below the field-size bound")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="regen-sim", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    t = sub.add_parser("tradeoff", help="corner points of the storage/bandwidth tradeoff as CSV")
    t.add_argument("--B", type=Fraction, required=True, help="file size, may be a fraction")
    t.add_argument("--k", type=int, required=True)
    t.add_argument("--d", type=int, required=True)
    t.add_argument("--out", type=Path)

    s = sub.add_parser("simulate", help="run repair rounds and verify every stage")
    _add_params(s)
    s.add_argument("--rounds", type=int, default=100)
    s.add_argument("--failure-model", choices=FAILURE_MODELS, default="uniform-random")
    s.add_argument("--script", type=Path, help="failed nodes, one stage each (scripted model)")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--tier", choices=("recovery", "fast", "strict"), default="fast")
    s.add_argument("--collectors", default="all",
                   help="'all' or the number of k-subsets to sample per stage")
    s.add_argument("--retries", type=int, default=64)
    s.add_argument("--timings", action="store_true",
                   help="add wall-clock times to reports (breaks byte-identical replays)")
    s.add_argument("--out", type=Path, help="directory for report.jsonl, snapshot.json, replay.txt")

    v = sub.add_parser("verify", help="check a snapshot or replay file")
    v.add_argument("path", type=Path)
    v.add_argument("--tier", choices=("fast", "strict"), default="fast")
    v.add_argument("--windows", choices=("suffix", "all"), default="suffix",
                   help="failure windows checked by the choice condition")
    v.add_argument("--n", type=int, help="replay files only")
    v.add_argument("--k", type=int, help="replay files only")
    v.add_argument("--ell", type=int, help="replay files only")
    v.add_argument("--q", type=int, help="replay files only; default auto")

    e = sub.add_parser("export-graph", help="print the signal flow graph edge list")
    src = e.add_mutually_exclusive_group(required=True)
    src.add_argument("--snapshot", type=Path)
    src.add_argument("--replay", type=Path)
    src.add_argument("--failures", help="comma-separated failed nodes; choices by the rule")
    e.add_argument("--n", type=int)
    e.add_argument("--k", type=int)
    e.add_argument("--ell", type=int)
    e.add_argument("--stages", type=int, help="truncate after this many stages")
    e.add_argument("--out", type=Path)
    return ap


def _emit(text: str, out: Path | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        out.write_text(text)


def _params_from(args, what: str):
    if args.n is None or args.k is None or args.ell is None:
        raise InvalidParams(f"{what} needs --n, --k and --ell")
    q = getattr(args, "q", None) or auto_field_size(args.n, args.k, args.ell)
    return normalized_params(args.n, args.k, args.ell, q, allow_small_field=True)


def cmd_tradeoff(args) -> int:
    _emit(tradeoff_csv(args.B, args.k, args.d), args.out)
    return 0


def cmd_simulate(args) -> int:
    script = ()
    if args.failure_model == "scripted":
        if args.script is None:
            raise InvalidParams("the scripted model needs --script")
        script = parse_script(args.script.read_text())
    if args.collectors == "all":
        collectors = None
    else:
        try:
            collectors = int(args.collectors)
        except ValueError:
            raise InvalidParams("--collectors must be 'all' or an integer") from None
    cfg = RunConfig(args.n, args.k, args.ell, args.q, args.rounds, args.failure_model, script,
                    args.seed, args.tier, collectors, args.allow_small_field, args.retries,
                    args.timings)
    cfg.params()  # bad parameters are an input error, not a failed run
    log.info("simulate seed=%d q=%d", cfg.seed, cfg.resolved_q())
    result = run_simulation(cfg)
    if args.out is not None:
        write_outputs(result, args.out)
    else:
        sys.stdout.write("\n".join(result.report_lines()) + "\n")
    if result.error is not None:
        print(f"regen-sim: {result.error['error']}: {result.error['message']}", file=sys.stderr)
    elif not result.ok:
        bad = next(r for r in result.reports if not r.ok)
        print(f"regen-sim: verification failed at stage {bad.t}", file=sys.stderr)
    return 0 if result.ok else 1


def _load_history(path: Path, args):
    text = path.read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError:
        return None, FailureHistory.from_replay(text, args.n)
    return data, None


def cmd_verify(args) -> int:
    data, history = _load_history(args.path, args)
    if data is not None:
        verdict = verify_snapshot(data, args.tier, args.windows)
    else:
        verdict = verify_replay(history, _params_from(args, "a replay file"), args.windows)
    print(verdict.to_json())
    return 0 if verdict.ok else 1


def cmd_export_graph(args) -> int:
    coefficients = None
    if args.snapshot is not None:
        params, _, history, records, _ = load_snapshot(json.loads(args.snapshot.read_text()))
        if records:
            coefficients = [r.L.tolist() for r in records]
    else:
        params = _params_from(args, "export-graph")
        if args.replay is not None:
            history = FailureHistory.from_replay(args.replay.read_text(), params.n)
        else:
            failures = [int(x) for x in args.failures.split(",") if x.strip()]
            history = choose_history(failures, params.n, params.alpha)
    N = history.stages if args.stages is None else args.stages
    graph = build_graph(params, history, N, coefficients)
    _emit(graph.export(), args.out)
    return 0


COMMANDS = {"tradeoff": cmd_tradeoff, "simulate": cmd_simulate, "verify": cmd_verify,
            "export-graph": cmd_export_graph}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except TooLarge as exc:
        print(f"regen-sim: instance too large: {exc}", file=sys.stderr)
        return 2
    except (RegenError, ValueError, OSError) as exc:
        print(f"regen-sim: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
