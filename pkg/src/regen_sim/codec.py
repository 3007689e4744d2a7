"""The repair-by-transfer storage system.

Global encoding vectors live in a B x (n*alpha) matrix ``E`` whose column
``(i - 1) * alpha + (j - 1)`` belongs to symbol ``j`` of node ``i``. A
repair at stage t reads one stored symbol from each of the n - 1 helpers,
chosen by :mod:`regen_sim.choice`, and the newcomer stores alpha linear
combinations of what it received.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterable, Mapping, Sequence

import numpy as np

from .choice import FailureHistory, stage_choices
from .errors import (CoefficientSearchExhausted, FieldTooSmall, InvalidHistory,
                     MissingHelper)
from .field import CountingField, FieldContext
from .flowgraph import StageGammoid, build_graph
from .params import SystemParams
from .verdict import Verdict

log = logging.getLogger(__name__)

DEFAULT_RETRIES = 64
TIERS = ("recovery", "fast", "strict")


@dataclass(frozen=True)
class EncodingState:
    params: SystemParams
    t: int
    E: np.ndarray

    def __post_init__(self):
        p = self.params
        if self.E.shape != (p.B, p.num_symbols):
            raise ValueError(f"E has shape {self.E.shape}, expected {(p.B, p.num_symbols)}")
        self.E.setflags(write=False)

    def vector(self, node: int, j: int) -> np.ndarray:
        return self.E[:, self.params.column(node, j)]

    def group(self, nodes: Iterable[int]) -> np.ndarray:
        return self.E[:, self.params.group_columns(nodes)]


@dataclass(frozen=True)
class RepairRecord:
    """One repair: failed node, every node's choice, and the alpha x (n-1)
    local coefficients (columns are helpers in ascending order)."""

    t: int
    failed: int
    choices: tuple[int, ...]
    L: np.ndarray
    attempts: int = 1

    @property
    def helpers(self) -> list[int]:
        return [i for i in range(1, len(self.choices) + 1) if i != self.failed]

    def to_dict(self) -> dict:
        return {"t": self.t, "F": self.failed, "p": list(self.choices),
                "L": self.L.tolist(), "attempts": self.attempts}


@dataclass(frozen=True)
class NodePayload:
    node: int
    symbols: tuple[int, ...]


@dataclass
class IOCounter:
    """Per-repair traffic at the helpers."""

    reads: int = 0
    sent: int = 0
    helper_field_ops: int = 0

    def to_dict(self) -> dict:
        return {"read": self.reads, "sent": self.sent, "helper_ops": self.helper_field_ops}


def init_state(params: SystemParams, seed: int | None = None) -> EncodingState:
    """Stage-0 vectors: a B x n*alpha Vandermonde matrix on distinct nonzero points.

    Any B columns are independent. With ``seed`` the points are a random
    sample of the nonzero field elements, otherwise 1..n*alpha.
    """
    q, na = params.q, params.num_symbols
    if q <= na:
        raise FieldTooSmall(q, na + 1, "distinct Vandermonde points")
    if seed is None:
        points = np.arange(1, na + 1)
    else:
        rng = np.random.default_rng(seed)
        points = rng.choice(np.arange(1, q), size=na, replace=False)
    E = FieldContext(q).vandermonde(points, params.B)
    return EncodingState(params, 0, E)


def apply_repair(state: EncodingState, failed: int, choices: Sequence[int],
                 L: np.ndarray) -> EncodingState:
    """Successor state: the failed node's columns become L-combinations of the
    transferred vectors; every other column is copied."""
    p = state.params
    fld = FieldContext(p.q)
    helpers = [i for i in range(1, p.n + 1) if i != failed]
    L = np.asarray(L, dtype=np.int64)
    if L.shape != (p.alpha, p.n - 1):
        raise ValueError(f"L has shape {L.shape}, expected {(p.alpha, p.n - 1)}")
    T = state.E[:, [p.column(i, choices[i - 1]) for i in helpers]]
    E = state.E.copy()
    E[:, p.node_columns(failed)] = fld.matmul(T, L.T)
    return EncodingState(p, state.t + 1, E)


def collector_groups(n: int, k: int, touching: int | None = None) -> list[tuple[int, ...]]:
    groups = combinations(range(1, n + 1), k)
    return [g for g in groups if touching is None or touching in g]


def recovery_check(state: EncodingState, groups: Iterable[Sequence[int]] | None = None,
                   field: FieldContext | None = None) -> Verdict:
    """Every listed k-node group (all of them by default) has rank B."""
    p = state.params
    fld = field or FieldContext(p.q)
    groups = collector_groups(p.n, p.k) if groups is None else list(groups)
    if not groups:
        return Verdict(True, "recovery", None, {"groups": 0, "min_rank": p.B})
    # rank B of a B x k*alpha block is full column rank of its transpose
    mats = np.stack([state.group(g).T for g in groups])
    ok = fld.full_column_rank_batch(mats)
    if not ok.all():
        g = groups[int(np.argmin(ok))]
        r = fld.rank(state.group(g))
        return Verdict(False, "recovery", {"stage": state.t, "collectors": list(g),
                                           "rank": r, "B": p.B},
                       {"groups": len(groups), "min_rank": r})
    return Verdict(True, "recovery", None, {"groups": len(groups), "min_rank": p.B})


def basis_check(state_t1: EncodingState, gammoid_t1: StageGammoid, failed: int,
                field: FieldContext | None = None) -> Verdict:
    """Every gammoid basis of the new stage that uses a new symbol is linearly independent."""
    p = state_t1.params
    fld = field or FieldContext(p.q)
    bases = gammoid_t1.bases_touching(failed)
    if not bases:
        return Verdict(True, "bases", None, {"bases": 0})
    mats = np.stack([state_t1.E[:, cols] for cols in bases])
    ok = fld.full_column_rank_batch(mats)
    if not ok.all():
        bad = bases[int(np.argmin(ok))]
        return Verdict(False, "bases", {"stage": state_t1.t, "columns": bad,
                                        "symbols": [list(p.symbol(c)) for c in bad]},
                       {"bases": len(bases)})
    return Verdict(True, "bases", None, {"bases": len(bases)})


def stage_gammoid_at(params: SystemParams, history: FailureHistory) -> StageGammoid:
    g = StageGammoid.initial(params)
    for f, row in zip(history.failures, history.choices):
        g = g.after_repair(f, row)
    return g


def repair(state: EncodingState, failed: int, history: FailureHistory,
           rng: np.random.Generator, tier: str = "fast", retries: int = DEFAULT_RETRIES,
           first_candidate: np.ndarray | None = None, gammoid: StageGammoid | None = None):
    """Repair node ``failed`` at stage ``state.t``.

    ``history`` covers stages 0..t-1. Local coefficients are drawn
    uniformly until the successor passes the tier's acceptance test:

    * ``recovery``: every k-node group containing the new node has rank B;
    * ``fast``: additionally, every basis of the next stage's gammoid that
      uses a new symbol is linearly independent;
    * ``strict``: additionally, linear and gammoid independence agree on
      every subset of the stage-t ground set (reduced form).

    ``gammoid`` is the current stage's gammoid; it is rebuilt from the
    history when omitted. Returns the new state and the record; raises
    CoefficientSearchExhausted after ``retries`` rejected draws.
    """
    p = state.params
    if tier not in TIERS:
        raise ValueError(f"unknown tier {tier!r}")
    if not 1 <= failed <= p.n:
        raise InvalidHistory(f"failed node {failed} outside [1, {p.n}]")
    if history.stages != state.t:
        raise InvalidHistory(f"history has {history.stages} stages, state is at {state.t}")
    fld = FieldContext(p.q)
    pending = history.with_failure(failed)
    choices = stage_choices(pending, p.alpha)
    groups = collector_groups(p.n, p.k, touching=failed)
    next_gammoid = None
    if tier != "recovery":
        if gammoid is None:
            gammoid = stage_gammoid_at(p, history)
        next_gammoid = gammoid.after_repair(failed, choices)
    checker = None
    if tier == "strict":
        from .oracle import StrictChecker
        checker = StrictChecker(build_graph(p, pending.with_choices(choices)), state.t)
    last = None
    for attempt in range(1, retries + 1):
        if attempt == 1 and first_candidate is not None:
            L = np.asarray(first_candidate, dtype=np.int64) % p.q
        else:
            L = fld.random_matrix(rng, p.alpha, p.n - 1)
        nxt = apply_repair(state, failed, choices, L)
        verdict = recovery_check(nxt, groups, fld)
        if verdict and next_gammoid is not None:
            verdict = basis_check(nxt, next_gammoid, failed, fld)
        if verdict and checker is not None:
            verdict = checker.check(state, nxt, fld)
        if verdict:
            L.setflags(write=False)
            return nxt, RepairRecord(state.t, failed, choices, L, attempts=attempt)
        last = verdict
    raise CoefficientSearchExhausted(state.t, failed, retries,
                                     "" if last is None else json.dumps(last.to_dict()))


def extend_history(history: FailureHistory, record: RepairRecord) -> FailureHistory:
    return history.with_failure(record.failed).with_choices(record.choices)


def build_transfer_matrix(record: RepairRecord, params: SystemParams) -> np.ndarray:
    """n*alpha x n*alpha matrix H with E_{t+1} = E_t H."""
    p = params
    if not 1 <= record.failed <= p.n:
        raise ValueError(f"failed node {record.failed} outside 1..{p.n}")
    H = np.zeros((p.num_symbols, p.num_symbols), dtype=np.int64)
    for i in range(1, p.n + 1):
        if i == record.failed:
            continue
        for j in range(1, p.alpha + 1):
            c = p.column(i, j)
            H[c, c] = 1
    for col, i in enumerate(record.helpers):
        src = p.column(i, record.choices[i - 1])
        for jj in range(1, p.alpha + 1):
            H[src, p.column(record.failed, jj)] = record.L[jj - 1, col]
    return H


# payload path

def encode_file(message: Sequence[int], state: EncodingState) -> dict[int, NodePayload]:
    p = state.params
    m = np.asarray(message, dtype=np.int64) % p.q
    if m.shape != (p.B,):
        raise ValueError(f"message must have {p.B} symbols")
    S = FieldContext(p.q).matmul(m[None, :], state.E)[0]
    return {i: NodePayload(i, tuple(int(x) for x in S[p.node_columns(i)]))
            for i in range(1, p.n + 1)}


def helper_extract(payloads: Mapping[int, NodePayload], failed: int,
                   choices: Sequence[int], counter: IOCounter | None = None,
                   field: FieldContext | None = None) -> list[int]:
    """Symbols sent by the helpers, in ascending helper order.

    Each helper copies its chosen stored symbol unchanged. ``field`` is
    what a helper could compute with; it is never called here, which a
    :class:`~regen_sim.field.CountingField` makes observable.
    """
    n = len(choices)
    out = []
    for i in range(1, n + 1):
        if i == failed:
            continue
        if i not in payloads:
            raise MissingHelper(f"no payload for helper {i}")
        symbol = payloads[i].symbols[choices[i - 1] - 1]
        if counter is not None:
            counter.reads += 1
            counter.sent += 1
        out.append(symbol)
    if counter is not None and isinstance(field, CountingField):
        counter.helper_field_ops += field.ops
    return out


def newcomer_compute(received: Sequence[int], L: np.ndarray, node: int,
                     field: FieldContext) -> NodePayload:
    L = np.asarray(L, dtype=np.int64)
    if len(received) != L.shape[1]:
        raise ValueError(f"expected {L.shape[1]} received symbols, got {len(received)}")
    r = np.asarray(received, dtype=np.int64)[:, None]
    out = field.matmul(L, r)[:, 0]
    return NodePayload(node, tuple(int(x) for x in out))


def reconstruct(collectors: Iterable[int], payloads: Mapping[int, NodePayload],
                state: EncodingState) -> list[int]:
    """Recover the message from the payloads of the given nodes."""
    p = state.params
    nodes = sorted(set(collectors))
    A = state.group(nodes).T
    y = np.array([s for i in nodes for s in payloads[i].symbols], dtype=np.int64)
    x = FieldContext(p.q).solve(A, y)
    return [int(v) for v in x]


# the running system

@dataclass
class StorageSystem:
    """A storage system evolving through repairs, optionally carrying a payload."""

    params: SystemParams
    state: EncodingState
    history: FailureHistory
    rng: np.random.Generator
    tier: str = "fast"
    retries: int = DEFAULT_RETRIES
    E0: np.ndarray | None = None
    records: list[RepairRecord] = field(default_factory=list)
    message: list[int] | None = None
    payloads: dict[int, NodePayload] | None = None
    gammoid: StageGammoid | None = None

    @classmethod
    def start(cls, params: SystemParams, seed: int = 0, tier: str = "fast",
              retries: int = DEFAULT_RETRIES, message: Sequence[int] | None = None,
              init_seed: int | None = None) -> "StorageSystem":
        state = init_state(params, init_seed)
        rng = np.random.default_rng(seed)
        sys = cls(params, state, FailureHistory(params.n), rng, tier, retries, state.E.copy())
        if tier != "recovery":
            sys.gammoid = StageGammoid.initial(params)
        if message is not None:
            sys.store(message)
        return sys

    def store(self, message: Sequence[int]) -> None:
        self.message = [int(x) % self.params.q for x in message]
        self.payloads = encode_file(self.message, self.state)

    def fail(self, node: int) -> tuple[RepairRecord, IOCounter]:
        nxt, rec = self.propose(node)
        return rec, self.commit(nxt, rec)

    def propose(self, node: int, rng: np.random.Generator | None = None):
        """Search coefficients for repairing ``node`` without changing the system."""
        return repair(self.state, node, self.history, self.rng if rng is None else rng,
                      self.tier, self.retries, gammoid=self.gammoid)

    def commit(self, nxt: EncodingState, rec: RepairRecord) -> IOCounter:
        """Adopt a proposed repair; moves the payload when one is stored."""
        if rec.t != self.state.t:
            raise InvalidHistory(f"record for stage {rec.t}, system is at {self.state.t}")
        if self.gammoid is not None:
            self.gammoid = self.gammoid.after_repair(rec.failed, rec.choices)
        io = IOCounter()
        if self.payloads is not None:
            helper_field = CountingField(self.params.q)
            received = helper_extract(self.payloads, rec.failed, rec.choices, io, helper_field)
            self.payloads = dict(self.payloads)
            self.payloads[rec.failed] = newcomer_compute(received, rec.L, rec.failed,
                                                         FieldContext(self.params.q))
        self.state = nxt
        self.history = extend_history(self.history, rec)
        self.records.append(rec)
        return io

    def payload_consistent(self) -> bool:
        if self.payloads is None:
            return True
        return encode_file(self.message, self.state) == self.payloads

    def decode(self, collectors: Iterable[int]) -> list[int]:
        if self.payloads is None:
            raise ValueError("no payload stored")
        return reconstruct(collectors, self.payloads, self.state)

    def snapshot(self) -> dict:
        return make_snapshot(self.params, self.state, self.history, self.records, self.E0)


SNAPSHOT_FORMAT = "regen-sim-snapshot/1"


def make_snapshot(params: SystemParams, state: EncodingState, history: FailureHistory,
                  records: Sequence[RepairRecord] = (), E0: np.ndarray | None = None) -> dict:
    snap = {"format": SNAPSHOT_FORMAT, "params": params.to_dict(), "t": state.t,
            "E": state.E.tolist(),
            "history": [{"t": t, "F": f, "p": list(row)}
                        for t, (f, row) in enumerate(zip(history.failures, history.choices))]}
    if E0 is not None:
        snap["E0"] = np.asarray(E0).tolist()
    if records:
        snap["L"] = [r.L.tolist() for r in records]
    return snap


def load_snapshot(data: dict, allow_small_field: bool = True):
    """Parse a snapshot into (params, state, history, records, E0)."""
    if data.get("format") != SNAPSHOT_FORMAT:
        raise ValueError(f"not a {SNAPSHOT_FORMAT} document")
    params = SystemParams.from_dict(data["params"], allow_small_field=allow_small_field)
    state = EncodingState(params, int(data["t"]), np.array(data["E"], dtype=np.int64))
    hist = data.get("history", [])
    for t, row in enumerate(hist):
        if row["t"] != t:
            raise InvalidHistory(f"snapshot history out of order at {t}")
    history = FailureHistory(params.n, tuple(r["F"] for r in hist),
                             tuple(tuple(r["p"]) for r in hist))
    records = []
    for t, L in enumerate(data.get("L", [])):
        records.append(RepairRecord(t, history.failures[t], history.choices[t],
                                    np.array(L, dtype=np.int64)))
    E0 = np.array(data["E0"], dtype=np.int64) if "E0" in data else None
    return params, state, history, records, E0


def replay_states(params: SystemParams, E0: np.ndarray,
                  records: Sequence[RepairRecord]) -> list[EncodingState]:
    """States E_0..E_N recomputed from the initial vectors and the repair records."""
    states = [EncodingState(params, 0, np.array(E0, dtype=np.int64))]
    for rec in records:
        states.append(apply_repair(states[-1], rec.failed, rec.choices, rec.L))
    return states

