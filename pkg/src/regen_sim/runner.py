"""Experiment driving: run configs, failure models, stage reports and verification.

Everything here is deterministic given the seed. Reports are JSON lines
serialized with sorted keys, so two runs with the same config produce
byte-identical files unless wall-clock timings are requested.
"""
from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from itertools import combinations
from typing import Iterator, Sequence

import numpy as np

from .choice import FailureHistory, stage_choices, verify_fpair_condition
from .codec import (TIERS, EncodingState, StorageSystem, collector_groups, load_snapshot,
                    recovery_check, replay_states)
from .errors import InvalidHistory, InvalidParams, RegenError
from .field import FieldContext
from .flowgraph import build_graph
from .params import SystemParams, auto_field_size, normalized_params, tradeoff_vertices
from .verdict import Verdict

FAILURE_MODELS = ("scripted", "uniform-random", "round-robin", "adversarial-worst-node")


def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


# tradeoff

def tradeoff_rows(B, k: int, d: int) -> list[dict]:
    """Corner points for ell = k down to 1 (minimum storage first)."""
    rows = []
    for pt in reversed(tradeoff_vertices(Fraction(B), k, d)):
        rows.append({"ell": pt.ell, "alpha": pt.alpha, "beta": pt.beta})
    return rows


def tradeoff_csv(B, k: int, d: int) -> str:
    lines = ["ell,alpha,beta,alpha_decimal,beta_decimal"]
    for r in tradeoff_rows(B, k, d):
        a, b = r["alpha"], r["beta"]
        lines.append(f"{r['ell']},{a},{b},{float(a):.12g},{float(b):.12g}")
    return "\n".join(lines) + "\n"


# run configuration

@dataclass
class RunConfig:
    n: int
    k: int
    ell: int
    q: int | None = None  # None selects the smallest admissible prime
    rounds: int = 100
    failure_model: str = "uniform-random"
    script: tuple[int, ...] = ()
    seed: int = 0
    tier: str = "fast"
    collectors: int | None = None  # None checks every k-subset, else a sample of this many
    allow_small_field: bool = False
    retries: int = 64
    timings: bool = False

    def __post_init__(self):
        if self.failure_model not in FAILURE_MODELS:
            raise InvalidParams(f"unknown failure model {self.failure_model!r}")
        if self.tier not in TIERS:
            raise InvalidParams(f"unknown tier {self.tier!r}")
        if self.rounds < 0:
            raise InvalidParams("rounds must be non-negative")
        if self.failure_model == "scripted":
            if len(self.script) < self.rounds:
                raise InvalidParams(f"script has {len(self.script)} failures, "
                                    f"{self.rounds} rounds requested")
            for f in self.script:
                if not 1 <= f <= self.n:
                    raise InvalidParams(f"scripted failure {f} outside [1, {self.n}]")
        if self.collectors is not None and self.collectors < 1:
            raise InvalidParams("collector sample size must be positive")

    def resolved_q(self) -> int:
        return auto_field_size(self.n, self.k, self.ell) if self.q is None else self.q

    def params(self) -> SystemParams:
        return normalized_params(self.n, self.k, self.ell, self.resolved_q(),
                                 allow_small_field=self.allow_small_field)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["q"] = self.resolved_q()
        d["script"] = list(self.script)
        del d["timings"]
        return d


def parse_script(text: str) -> tuple[int, ...]:
    """Failed nodes separated by whitespace or commas; ``#`` starts a comment."""
    out = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].replace(",", " ")
        for tok in line.split():
            try:
                out.append(int(tok))
            except ValueError:
                raise InvalidParams(f"line {lineno}: {tok!r} is not a node index") from None
    return tuple(out)


@dataclass
class StageReport:
    t: int
    event: str
    failed: int | None = None
    choices: list[int] | None = None
    attempts: int | None = None
    checks: dict = field(default_factory=dict)
    io: dict | None = None
    elapsed_ms: float | None = None

    @property
    def ok(self) -> bool:
        return all(c.get("ok", True) for c in self.checks.values())

    def to_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}


# failure models

def redundancy(state: EncodingState, field_: FieldContext | None = None) -> tuple[int, int]:
    """Two slack measures, smaller meaning closer to losing data.

    First, the minimum over collector groups of the number of columns
    whose removal leaves the group at full rank. Second, how many B-column
    subsets of the whole state are linearly independent.
    """
    p = state.params
    fld = field_ or FieldContext(p.q)
    groups = collector_groups(p.n, p.k)
    mats = []
    for g in groups:
        cols = p.group_columns(g)
        for c in cols:
            mats.append(state.E[:, [x for x in cols if x != c]].T)
    ok = fld.full_column_rank_batch(np.stack(mats)).reshape(len(groups), -1)
    spare = int(ok.sum(axis=1).min())
    subsets = np.array(list(combinations(range(p.num_symbols), p.B)))
    indep = fld.full_column_rank_batch(np.transpose(state.E[:, subsets], (1, 2, 0)))
    return spare, int(indep.sum())


class Adversary:
    """Fails the node whose repair leaves the least slack behind.

    Every candidate repair is carried out on a copy with its own seeded
    generator and scored by :func:`redundancy`. Ties, which are the norm
    once the state is generic for its gammoid, are broken by a seeded
    random pick among the tied nodes. The chosen trial repair is kept.
    """

    def __init__(self, rng: np.random.Generator):
        self.rng = rng

    def choose(self, sys: StorageSystem):
        p = sys.params
        round_seed = int(self.rng.integers(0, 2**63 - 1))
        fld = FieldContext(p.q)
        scored = []
        for node in range(1, p.n + 1):
            nxt, rec = sys.propose(node, np.random.default_rng([round_seed, node]))
            scored.append((redundancy(nxt, fld), nxt, rec))
        worst = min(key for key, _, _ in scored)
        tied = [(nxt, rec) for key, nxt, rec in scored if key == worst]
        return tied[int(self.rng.integers(0, len(tied)))]


def failure_stream(cfg: RunConfig, rng: np.random.Generator) -> Iterator[int]:
    t = 0
    while True:
        if cfg.failure_model == "scripted":
            yield cfg.script[t]
        elif cfg.failure_model == "round-robin":
            yield t % cfg.n + 1
        else:
            yield int(rng.integers(1, cfg.n + 1))
        t += 1


# simulation

@dataclass
class RunResult:
    config: RunConfig
    reports: list[StageReport]
    system: StorageSystem | None
    error: dict | None = None

    @property
    def ok(self) -> bool:
        return self.error is None and all(r.ok for r in self.reports)

    def report_lines(self) -> list[str]:
        lines = [dumps({"event": "config", **self.config.to_dict()})]
        lines += [dumps(r.to_dict()) for r in self.reports]
        if self.error is not None:
            lines.append(dumps({"event": "error", **self.error}))
        return lines

    def snapshot(self) -> dict | None:
        return None if self.system is None else self.system.snapshot()

    def replay(self) -> str:
        return "" if self.system is None else self.system.history.to_replay()


def _entry(v: Verdict) -> dict:
    out = {"ok": v.ok, **v.stats}
    if v.witness:
        out["witness"] = v.witness
    return out


def _stage_checks(sys: StorageSystem, groups: Sequence) -> dict:
    checks = {"recovery": _entry(recovery_check(sys.state, groups))}
    checks["payload"] = {"ok": sys.payload_consistent()}
    return checks


def run_simulation(cfg: RunConfig) -> RunResult:
    """Drive ``cfg.rounds`` repairs; errors end the run with diagnostics instead of raising."""
    ss = np.random.SeedSequence(cfg.seed)
    coef_seed, fail_seed, coll_seed, msg_seed = ss.spawn(4)
    fail_rng = np.random.default_rng(fail_seed)
    coll_rng = np.random.default_rng(coll_seed)
    reports: list[StageReport] = []
    sys = None
    try:
        p = cfg.params()
        message = np.random.default_rng(msg_seed).integers(0, p.q, size=p.B).tolist()
        sys = StorageSystem.start(p, seed=coef_seed, tier=cfg.tier, retries=cfg.retries,
                                  message=message)
        all_groups = collector_groups(p.n, p.k)

        def groups():
            if cfg.collectors is None or cfg.collectors >= len(all_groups):
                return all_groups
            pick = coll_rng.choice(len(all_groups), size=cfg.collectors, replace=False)
            return [all_groups[i] for i in sorted(pick.tolist())]

        reports.append(StageReport(0, "init", checks=_stage_checks(sys, groups())))
        adversary = Adversary(fail_rng) if cfg.failure_model == "adversarial-worst-node" else None
        stream = failure_stream(cfg, fail_rng)
        for _ in range(cfg.rounds):
            t0 = time.perf_counter()
            t = sys.state.t
            if adversary is not None:
                nxt, rec = adversary.choose(sys)
            else:
                nxt, rec = sys.propose(next(stream))
            io = sys.commit(nxt, rec)
            rep = StageReport(t, "repair", rec.failed, list(rec.choices), rec.attempts,
                              _stage_checks(sys, groups()), io.to_dict())
            if cfg.timings:
                rep.elapsed_ms = round((time.perf_counter() - t0) * 1000, 3)
            reports.append(rep)
        final = {"fpair": _entry(verify_fpair_condition(sys.history, p.alpha))}
        decoded = all(sys.decode(g) == sys.message for g in all_groups)
        final["decode"] = {"ok": decoded, "groups": len(all_groups)}
        reports.append(StageReport(sys.state.t, "final", checks=final))
    except RegenError as exc:
        err = {"error": type(exc).__name__, "message": str(exc)}
        if sys is not None:
            err["stage"] = sys.state.t
        return RunResult(cfg, reports, sys, err)
    return RunResult(cfg, reports, sys)


# verification of saved runs

def _combine(checks: dict, extra_stats: dict | None = None) -> Verdict:
    ok = all(v["ok"] for v in checks.values())
    witness = None
    for name, v in checks.items():
        if not v["ok"]:
            witness = {"check": name, **(v.get("witness") or {})}
            break
    return Verdict(ok, "verify", witness, {"checks": checks, **(extra_stats or {})})


def _rule_agreement(history: FailureHistory, alpha: int) -> dict:
    """Whether the recorded choices are those the choice rule would make."""
    h = history.truncated(0)
    for t, f in enumerate(history.failures[:history.stages]):
        h = h.with_failure(f)
        row = stage_choices(h, alpha)
        if row != history.choices[t]:
            return {"agrees": False, "stage": t, "recorded": list(history.choices[t]),
                    "rule": list(row)}
        h = h.with_choices(row)
    return {"agrees": True}


def verify_snapshot(data: dict, tier: str = "fast", windows: str = "suffix") -> Verdict:
    """Recovery ranks, state replay, choice condition and (strict) isomorphism."""
    params, state, history, records, E0 = load_snapshot(data)
    checks = {}
    checks["recovery"] = _entry(recovery_check(state))
    states = None
    if E0 is not None and records:
        states = replay_states(params, E0, records)
        same = np.array_equal(states[-1].E, state.E)
        checks["replay"] = {"ok": bool(same), "stages": len(records)}
        if not same:
            diff = np.argwhere(states[-1].E != state.E)[0].tolist()
            checks["replay"]["witness"] = {"row": diff[0], "column": diff[1]}
        bad = next((s.t for s in states if not recovery_check(s)), None)
        checks["stage_recovery"] = {"ok": bad is None, "stages": len(states)}
        if bad is not None:
            checks["stage_recovery"]["witness"] = {"stage": bad}
    checks["fpair"] = _entry(verify_fpair_condition(history, params.alpha, windows=windows))
    if tier == "strict":
        if states is None:
            raise InvalidHistory("strict verification needs E0 and the local coefficients")
        from .oracle import StrictChecker
        graph = build_graph(params, history, coefficients=[r.L for r in records])
        fld = FieldContext(params.q)
        failed_at = None
        subsets = 0
        for t in range(len(records)):
            v = StrictChecker(graph, t).check(states[t], states[t + 1], fld)
            subsets += v.stats["subsets_checked"]
            if not v:
                failed_at = v.witness
                break
        checks["isomorphism"] = {"ok": failed_at is None, "subsets_checked": subsets}
        if failed_at:
            checks["isomorphism"]["witness"] = failed_at
    return _combine(checks, {"t": state.t, "choice_rule": _rule_agreement(history, params.alpha)})


GRAPH_CHECK_LIMIT = 20000


def verify_replay(history: FailureHistory, params: SystemParams,
                  windows: str = "suffix") -> Verdict:
    """Coefficient-free checks on a failure/choice log: the choice condition and
    graph-level recoverability of every collector set."""
    if history.n != params.n:
        raise InvalidHistory(f"replay has {history.n} nodes, parameters say {params.n}")
    history.check_alpha(params.alpha)
    checks = {}
    checks["fpair"] = _entry(verify_fpair_condition(history, params.alpha, windows=windows))
    graph = build_graph(params, history)
    # links point toward the sources, so stage t ranks ignore later stages
    stages = range(graph.N + 1) if graph.size <= GRAPH_CHECK_LIMIT else [graph.N]
    bad = None
    for t in stages:
        for g in combinations(range(1, params.n + 1), params.k):
            r = graph.rank(graph.stage_vertices(t, g))
            if r < params.B:
                bad = {"stage": t, "collectors": list(g), "rank": r, "B": params.B}
                break
        if bad:
            break
    checks["graph_recovery"] = {"ok": bad is None, "stages": len(stages)}
    if bad:
        checks["graph_recovery"]["witness"] = bad
    return _combine(checks, {"t": history.stages, "choices": [list(r) for r in history.choices],
                             "choice_rule": _rule_agreement(history, params.alpha)})


def write_outputs(result: RunResult, out_dir) -> None:
    from pathlib import Path
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.jsonl").write_text("\n".join(result.report_lines()) + "\n")
    snap = result.snapshot()
    if snap is not None:
        (out / "snapshot.json").write_text(json.dumps(snap, sort_keys=True) + "\n")
        (out / "replay.txt").write_text(result.replay())

