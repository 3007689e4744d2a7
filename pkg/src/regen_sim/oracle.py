"""Exhaustive ground truth for small instances.

Everything here enumerates: path systems for linkings, subsets of the
ground set for matroid comparisons. Size guards raise TooLarge instead of
running for hours.
"""
from __future__ import annotations

import os
from dataclasses import dataclass
from itertools import combinations
from typing import Iterable

import numpy as np

from .errors import TooLarge
from .field import FieldContext
from .flowgraph import FlowGraph, GammoidQuery, LinkingGraph, is_independent
from .verdict import Verdict

MAX_BRUTE_VERTICES = 30
DEFAULT_MAX_STRICT_GROUND_SET = 24
STRICT_ENV = "REGEN_SIM_MAX_STRICT_GROUND_SET"


def max_strict_ground_set() -> int:
    return int(os.environ.get(STRICT_ENV, DEFAULT_MAX_STRICT_GROUND_SET))


# linkings

def linkable_family(graph: LinkingGraph, limit: int = MAX_BRUTE_VERTICES) -> np.ndarray:
    """Bitmasks of every vertex set linkable into the sinks.

    Enumerates all systems of vertex-disjoint paths, at most one per sink,
    by growing each path backwards from its sink. Independent of any flow
    computation.
    """
    if graph.size > limit:
        raise TooLarge(f"{graph.size} vertices exceeds the brute-force limit {limit}")
    cached = getattr(graph, "_linkable_family", None)
    if cached is not None:
        return cached
    into: list[list[int]] = [[] for _ in range(graph.size)]
    for v, succ in enumerate(graph.links):
        for w in succ:
            into[w].append(v)
    sinks = sorted(graph.sinks)
    found: set[int] = set()

    def paths_to(end: int, used: int):
        # yields (start, vertex mask) for simple paths ending at `end`
        stack = [(end, 1 << end)]
        while stack:
            v, mask = stack.pop()
            yield v, mask
            for u in into[v]:
                if not (used | mask) >> u & 1:
                    stack.append((u, mask | 1 << u))

    def extend(pos: int, used: int, starts: int):
        if pos == len(sinks):
            found.add(starts)
            return
        extend(pos + 1, used, starts)
        t = sinks[pos]
        if used >> t & 1:
            return
        for start, mask in paths_to(t, used):
            extend(pos + 1, used | mask, starts | 1 << start)

    extend(0, 0, 0)
    fam = np.array(sorted(found), dtype=np.int64)
    graph._linkable_family = fam
    return fam


_POP = np.array([bin(i).count("1") for i in range(1 << 16)], dtype=np.int64)


def _popcount(arr: np.ndarray) -> np.ndarray:
    out = np.zeros_like(arr)
    x = arr.copy()
    while x.any():
        out += _POP[x & 0xFFFF]
        x >>= 16
    return out


def _linkable(graph: LinkingGraph, verts: list[int]) -> bool:
    """Backtracking search for vertex-disjoint paths from every vertex to distinct sinks."""
    sinks = graph.sinks

    def route(pos: int, used: int) -> bool:
        if pos == len(verts):
            return True
        start = verts[pos]
        if used >> start & 1:
            return False
        stack = [(start, used | 1 << start, iter(graph.links[start]))]
        if start in sinks and route(pos + 1, used | 1 << start):
            return True
        while stack:
            v, mask, it = stack[-1]
            w = next(it, None)
            if w is None:
                stack.pop()
                continue
            if mask >> w & 1:
                continue
            mask_w = mask | 1 << w
            if w in sinks and route(pos + 1, mask_w):
                return True
            stack.append((w, mask_w, iter(graph.links[w])))
        return False

    return route(0, 0)


def brute_linking_rank(graph: LinkingGraph, vertices: Iterable) -> int:
    """Largest linkable subset of ``vertices``, by exhaustive path search.

    Tries subsets from the largest down, each by backtracking over simple
    paths; no flow computation is involved.
    """
    if graph.size > MAX_BRUTE_VERTICES:
        raise TooLarge(f"{graph.size} vertices exceeds the brute-force limit "
                       f"{MAX_BRUTE_VERTICES}")
    verts = sorted({v if isinstance(v, int) else graph.vertex(v) for v in vertices})
    for r in range(len(verts), 0, -1):
        if any(_linkable(graph, list(s)) for s in combinations(verts, r)):
            return r
    return 0


def brute_rank_table(graph: LinkingGraph) -> np.ndarray:
    """Rank of every vertex subset, indexed by bitmask."""
    fam = linkable_family(graph)
    size = graph.size
    indep = np.zeros(1 << size, dtype=bool)
    indep[fam] = True
    rank = np.where(indep, _popcount(np.arange(1 << size, dtype=np.int64)), 0)
    # rank(S) = max over S minus one element, unless S itself is independent
    for v in range(size):
        bit = 1 << v
        idx = np.arange(1 << size, dtype=np.int64)
        has = (idx & bit) != 0
        rank[has] = np.maximum(rank[has], rank[idx[has] ^ bit])
    return rank


def independent_sets(graph: LinkingGraph) -> list[frozenset]:
    """Independent sets as label sets, ordered by size then lexicographically."""
    out = []
    for m in linkable_family(graph):
        out.append(frozenset(graph.labels[v] for v in range(graph.size) if int(m) >> v & 1))
    return sorted(out, key=lambda s: (len(s), sorted(map(str, s))))


@dataclass(frozen=True)
class MatroidSnapshot:
    """Independence over every subset of size <= max_size of a small ground set."""

    ground: tuple
    independent: frozenset
    max_size: int
    source: str

    def __post_init__(self):
        bad = check_independence_axioms(self.ground, self.independent, self.max_size)
        if bad is not None:
            raise ValueError(f"{self.source} family violates {bad}")

    @classmethod
    def from_gammoid(cls, graph: LinkingGraph, ground: Iterable, max_size: int):
        ground = tuple(ground)
        ind = frozenset(frozenset(s) for r in range(max_size + 1)
                        for s in combinations(ground, r) if graph.rank_labels(s) == len(s))
        return cls(ground, ind, max_size, "gammoid")

    @classmethod
    def from_vectors(cls, field: FieldContext, vectors: dict, max_size: int):
        ground = tuple(vectors)
        ind = set()
        for r in range(max_size + 1):
            for s in combinations(ground, r):
                if not s or field.rank(np.column_stack([vectors[x] for x in s])) == r:
                    ind.add(frozenset(s))
        return cls(ground, frozenset(ind), max_size, "linear")


def check_independence_axioms(ground, family, max_size) -> str | None:
    """Name of the first independence axiom violated by ``family``, if any."""
    family = set(family)
    if frozenset() not in family:
        return "I1"
    for b in family:
        for x in b:
            if b - {x} not in family:
                return "I2"
    for a in family:
        for b in family:
            if len(a) < len(b) and not any(a | {x} in family for x in b - a):
                return "I3"
    return None


# matroid isomorphism between encoding vectors and the gammoid

def _element_vectors(state_t, state_t1, t: int):
    p = state_t.params

    def vec(el):
        i, j, m = el
        E = state_t.E if m == t else state_t1.E
        return E[:, p.column(i, j)]
    return vec


class StrictChecker:
    """Compares linear and gammoid independence on subsets of the stage-t ground set.

    With ``reduced=True`` the new-stage part of a subset is restricted to
    the repaired node; surviving nodes carry identical vectors and vertices
    across the repair, so the remaining subsets follow from these. Gammoid
    verdicts do not depend on the coefficients and are computed once.
    """

    def __init__(self, graph: FlowGraph, t: int, reduced: bool = True,
                 max_ground: int | None = None):
        p = graph.params
        if t + 1 > graph.N:
            raise ValueError(f"graph truncated at {graph.N}, need stage {t + 1}")
        limit = max_strict_ground_set() if max_ground is None else max_ground
        ground_size = 2 * p.n * p.alpha
        if ground_size > limit:
            raise TooLarge(f"ground set of {ground_size} elements exceeds {limit} "
                           f"(set {STRICT_ENV} to raise the cap)")
        self.params = p
        self.t = t
        f = graph.history.failures[t]
        old = [(i, j, t) for i in range(1, p.n + 1) for j in range(1, p.alpha + 1)]
        if reduced:
            new = [(f, j, t + 1) for j in range(1, p.alpha + 1)]
        else:
            new = [(i, j, t + 1) for i in range(1, p.n + 1) for j in range(1, p.alpha + 1)]
        self.ground = old + new
        self.subsets = []
        for r in range(1, p.B + 1):
            for s in combinations(self.ground, r):
                q = GammoidQuery(t, frozenset(s))
                self.subsets.append((s, is_independent(q, graph)))

    def check(self, state_t, state_t1, field: FieldContext) -> Verdict:
        vec = _element_vectors(state_t, state_t1, self.t)
        cols = {el: vec(el) for el in self.ground}
        for s, indep in self.subsets:
            lin = field.rank(np.column_stack([cols[x] for x in s])) == len(s)
            if lin != indep:
                return Verdict(False, "isomorphism", {
                    "stage": self.t, "subset": [list(x) for x in s],
                    "linear_independent": lin, "gammoid_independent": indep},
                    {"subsets_checked": len(self.subsets)})
        return Verdict(True, "isomorphism", None, {"subsets_checked": len(self.subsets)})


def isomorphism_check(state_t, state_t1, graph: FlowGraph, t: int,
                      reduced: bool = True, field: FieldContext | None = None) -> Verdict:
    """Linear independence of encoding vectors agrees with gammoid independence at stage t."""
    field = field or FieldContext(state_t.params.q)
    return StrictChecker(graph, t, reduced).check(state_t, state_t1, field)


def lemma6_check(graph: FlowGraph, t: int, subset: Iterable) -> bool:
    """Whether the transferred-symbol criterion agrees with direct linking.

    The criterion: a subset is independent iff some set Y of transferred
    symbols, disjoint from the subset and as large as its new-stage part,
    joined with the old-stage part is independent at stage t. Subsets are
    first reduced so that only the repaired node appears at stage t+1.
    """
    p = graph.params
    if graph.size > 2000:
        raise TooLarge(f"graph with {graph.size} vertices")
    f = graph.history.failures[t]
    row = graph.history.choices[t]
    I = set(subset)
    direct = is_independent(GammoidQuery(t, frozenset(I)), graph)
    reduced = set()
    for (i, j, m) in I:
        if m == t + 1 and i != f:
            if (i, j, t) in I:
                return direct is False
            reduced.add((i, j, t))
        else:
            reduced.add((i, j, m))
    new = [e for e in reduced if e[2] == t + 1]
    old = [e for e in reduced if e[2] == t]
    transferred = [(i, row[i - 1], t) for i in range(1, p.n + 1) if i != f]
    free = [y for y in transferred if y not in old]
    criterion = False
    if len(new) <= len(free):
        for Y in combinations(free, len(new)):
            verts = [graph.index[(m, i, j)] for (i, j, m) in (*Y, *old)]
            if graph.rank(verts) == len(verts):
                criterion = True
                break
    return criterion == direct
