"""Causal choice of which stored symbol each helper sends during a repair.

Stages are numbered from 0 and nodes from 1. A choice value of 0 marks the
failed node of a stage, which sends nothing.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import ExhaustedIndices, InvalidHistory, NotEnoughHistory
from .verdict import Verdict


@dataclass(frozen=True)
class FailureHistory:
    """Failed node per stage and, per stage, the choice value of every node.

    ``choices[t][i - 1]`` is the index of the symbol node ``i`` sends at
    stage ``t``. ``failures`` may run one stage ahead of ``choices`` while
    the choices for the newest stage are being computed.
    """

    n: int
    failures: tuple[int, ...] = ()
    choices: tuple[tuple[int, ...], ...] = ()

    def __post_init__(self):
        if len(self.choices) > len(self.failures):
            raise InvalidHistory("more choice rows than failures")
        for t, f in enumerate(self.failures):
            self._check_failure(t, f)
        for t, row in enumerate(self.choices):
            self._check_row(t, row)

    def _check_failure(self, t: int, f: int) -> None:
        if not 1 <= f <= self.n:
            raise InvalidHistory(f"F_{t}={f} outside [1, {self.n}]")

    def _check_row(self, t: int, row: tuple) -> None:
        if len(row) != self.n:
            raise InvalidHistory(f"stage {t}: expected {self.n} choices, got {len(row)}")
        if row[self.failures[t] - 1] != 0:
            raise InvalidHistory(f"stage {t}: failed node {self.failures[t]} has a nonzero choice")
        if any(p < 1 for i, p in enumerate(row, 1) if i != self.failures[t]):
            raise InvalidHistory(f"stage {t}: helper without a choice")

    @classmethod
    def _trusted(cls, n, failures, choices) -> "FailureHistory":
        # skips full revalidation; callers check only what they appended
        h = object.__new__(cls)
        object.__setattr__(h, "n", n)
        object.__setattr__(h, "failures", failures)
        object.__setattr__(h, "choices", choices)
        return h

    @property
    def stages(self) -> int:
        """Number of completed stages (failures with choices)."""
        return len(self.choices)

    def choice(self, t: int, node: int) -> int:
        return self.choices[t][node - 1]

    def with_failure(self, f: int) -> "FailureHistory":
        if len(self.failures) != len(self.choices):
            raise InvalidHistory("previous stage has no choices yet")
        self._check_failure(len(self.failures), f)
        return self._trusted(self.n, self.failures + (f,), self.choices)

    def with_choices(self, row: Sequence[int]) -> "FailureHistory":
        row = tuple(row)
        t = len(self.choices)
        if t >= len(self.failures):
            raise InvalidHistory("more choice rows than failures")
        self._check_row(t, row)
        return self._trusted(self.n, self.failures, self.choices + (row,))

    def truncated(self, stages: int) -> "FailureHistory":
        return self._trusted(self.n, self.failures[:stages], self.choices[:stages])

    def check_alpha(self, alpha: int) -> None:
        for t, row in enumerate(self.choices):
            if max(row) > alpha:
                raise InvalidHistory(f"stage {t}: choice {max(row)} exceeds alpha={alpha}")

    def to_replay(self) -> str:
        lines = [f"# stage failed_node choices(1..{self.n})"]
        for t, (f, row) in enumerate(zip(self.failures, self.choices)):
            lines.append(" ".join(map(str, (t, f, *row))))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_replay(cls, text: str, n: int | None = None) -> "FailureHistory":
        """Parse lines ``t F_t p_t(1) ... p_t(n)``; ``#`` starts a comment."""
        failures, choices = [], []
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            try:
                fields = [int(x) for x in line.split()]
            except ValueError:
                raise InvalidHistory(f"line {lineno}: non-integer field") from None
            if len(fields) < 3:
                raise InvalidHistory(f"line {lineno}: expected 't F_t p_t(1) ... p_t(n)'")
            t, f, row = fields[0], fields[1], fields[2:]
            if t != len(failures):
                raise InvalidHistory(f"line {lineno}: stage {t} out of order")
            if n is None:
                n = len(row)
            failures.append(f)
            choices.append(tuple(row))
        return cls(n or 0, tuple(failures), tuple(choices))


@dataclass(frozen=True)
class FPair:
    """Two stages failing the same node with no repeat in between.

    ``s == -1`` means the node had not failed before ``t``; ``t == N``
    means it does not fail again before the end of the history.
    """

    s: int
    t: int
    node: int

    @property
    def intermediate(self) -> range:
        return range(self.s + 1, self.t)


def cutoff_stage(history: FailureHistory, t: int, alpha: int) -> int:
    """Latest stage c < t such that F_c..F_{t-1} contain ``alpha`` distinct nodes."""
    seen: set[int] = set()
    for m in range(t - 1, -1, -1):
        seen.add(history.failures[m])
        if len(seen) == alpha:
            return m
    raise NotEnoughHistory(f"fewer than {alpha} distinct failures before stage {t}")


def compute_choice(i: int, t: int, history: FailureHistory, alpha: int) -> int:
    """Index of the symbol node ``i`` sends at stage ``t`` (0 if it is the failed node).

    Looks back for the latest stage s whose failure is either the current
    failed node or ``i`` itself. If fewer than ``alpha`` distinct nodes
    failed strictly between s and t, the choice made at s is repeated when
    there was one; otherwise the smallest index not used by ``i`` since s
    is taken. If ``alpha`` or more distinct nodes failed in between, the
    choice from the cutoff stage (the latest point where the window of
    recent failures covers ``alpha`` distinct nodes) is reused.

    Only stages <= t are read, so the rule is causal.
    """
    if len(history.failures) <= t or len(history.choices) < t:
        raise InvalidHistory(f"history does not cover stage {t}")
    f_t = history.failures[t]
    if i == f_t:
        return 0
    seen: set[int] = set()
    used: set[int] = set()
    for m in range(t - 1, -1, -1):
        f_m = history.failures[m]
        if f_m == f_t or f_m == i:
            prev = history.choices[m][i - 1]
            if prev != 0:
                return prev
            break
        seen.add(f_m)
        if len(seen) >= alpha:
            # m is the cutoff stage for t
            return history.choices[m][i - 1]
        used.add(history.choices[m][i - 1])
    for j in range(1, alpha + 1):
        if j not in used:
            return j
    raise ExhaustedIndices(f"node {i}, stage {t}: all {alpha} indices used since the last reset")


def stage_choices(history: FailureHistory, alpha: int) -> tuple[int, ...]:
    """Choices of every node for the newest stage of ``history``."""
    t = len(history.choices)
    return tuple(compute_choice(i, t, history, alpha) for i in range(1, history.n + 1))


def choose_history(failures: Iterable[int], n: int, alpha: int) -> FailureHistory:
    """Run the choice rule over a whole failure sequence."""
    h = FailureHistory(n)
    for f in failures:
        h = h.with_failure(f)
        h = h.with_choices(stage_choices(h, alpha))
    return h


def fpairs(history: FailureHistory, N: int | None = None) -> list[FPair]:
    """All F-pairs of the first N stages, including the boundary pairs.

    Nodes that never fail contribute the pair (-1, N): their choices over
    the whole history are subject to the same distinctness requirement.
    """
    N = history.stages if N is None else N
    last: dict[int, int] = {}
    out = []
    for t in range(N):
        f = history.failures[t]
        out.append(FPair(last.get(f, -1), t, f))
        last[f] = t
    for node in range(1, history.n + 1):
        out.append(FPair(last.get(node, -1), N, node))
    return out


def verify_fpair_condition(history: FailureHistory, alpha: int, N: int | None = None,
                           windows: str = "suffix") -> Verdict:
    """Check that choices spread over enough distinct symbols.

    For each F-pair of node f and each window M of consecutive intermediate
    stages with at most ``alpha`` distinct failures, the values p_m(f) for
    m in M must take exactly as many distinct values as there are distinct
    failures in M. ``windows="suffix"`` checks windows ending just before
    the pair's right stage; ``windows="all"`` checks every window.
    """
    if windows not in ("suffix", "all"):
        raise ValueError(f"windows must be 'suffix' or 'all', got {windows!r}")
    N = history.stages if N is None else N
    if N > history.stages:
        raise InvalidHistory(f"history has {history.stages} stages, {N} requested")
    checked = 0
    for pair in fpairs(history, N):
        ends = [pair.t - 1] if windows == "suffix" else list(pair.intermediate)
        for end in ends:
            fails: set[int] = set()
            picks: set[int] = set()
            for o in range(end, pair.s, -1):
                fails.add(history.failures[o])
                if len(fails) > alpha:
                    break
                picks.add(history.choices[o][pair.node - 1])
                checked += 1
                if len(picks) != len(fails):
                    return Verdict(False, "fpair_condition", {
                        "pair": [pair.s, pair.t], "node": pair.node, "window": [o, end],
                        "failures": sorted(fails), "choices": sorted(picks)},
                        {"windows_checked": checked})
    return Verdict(True, "fpair_condition", None, {"windows_checked": checked})
