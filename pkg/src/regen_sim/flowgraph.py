"""Signal flow graphs and gammoid rank by vertex-disjoint paths.

A :class:`LinkingGraph` is any digraph with a distinguished sink set; the
rank of a vertex set is the largest subset that reaches the sinks along
vertex-disjoint directed paths. :class:`FlowGraph` is the staged graph of a
repair history; its linkings run against the data-flow direction, from
later stages back to the source layer (stage -1).
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from itertools import combinations
from typing import Hashable, Iterable, Sequence

import numpy as np

from .choice import FailureHistory, fpairs
from .errors import InfeasibleLinking, InvalidHistory
from .params import SystemParams

SOURCE_STAGE = -1


class LinkingGraph:
    """Digraph on vertices ``0..size-1`` with labels and a sink set.

    ``links[v]`` lists the successors of ``v`` in the direction paths are
    followed when linking into ``sinks``.
    """

    def __init__(self, labels: Sequence[Hashable], links: Sequence[Iterable[int]],
                 sinks: Iterable[int]):
        self.labels = list(labels)
        self.links = [tuple(a) for a in links]
        self.sinks = frozenset(sinks)
        self.index = {lab: v for v, lab in enumerate(self.labels)}
        if len(self.index) != len(self.labels):
            raise ValueError("vertex labels must be distinct")
        self._network = None

    @property
    def size(self) -> int:
        return len(self.labels)

    def vertex(self, label) -> int:
        return self.index[label]

    def rank(self, vertices: Iterable[int]) -> int:
        if self._network is None:
            self._network = _SplitNetwork(self.links, self.sinks)
        return self._network.max_disjoint(set(vertices))

    def rank_labels(self, labels: Iterable[Hashable]) -> int:
        return self.rank(self.index[lab] for lab in labels)

    def rank_table(self, limit: int = 22) -> np.ndarray:
        """Max-flow rank of every vertex subset, indexed by bitmask.

        Subsets are visited depth first, adding one vertex at a time; each
        addition is a single augmenting-path search from the new vertex,
        which is exactly how the flow for the larger set would grow.
        """
        if self.size > limit:
            raise ValueError(f"{self.size} vertices exceeds the table limit {limit}")
        if self._network is None:
            self._network = _SplitNetwork(self.links, self.sinks)
        net = self._network
        table = np.zeros(1 << self.size, dtype=np.int64)

        def visit(v, mask, cap, flow):
            if v == self.size:
                table[mask] = flow
                return
            visit(v + 1, mask, cap, flow)
            cap = cap[:]
            gained = net.augment_from(cap, v)
            visit(v + 1, mask | 1 << v, cap, flow + gained)

        visit(0, 0, net.closed_capacities(), 0)
        return table


class _SplitNetwork:
    """Unit-capacity flow network with every vertex split into in/out halves.

    Node 2v is the in-half and 2v+1 the out-half of vertex v; the edge
    2v -> 2v+1 has capacity 1, so flow paths are vertex-disjoint.
    """

    def __init__(self, links, sinks):
        nv = len(links)
        self.nv = nv
        self.source = 2 * nv
        self.sink = 2 * nv + 1
        self.head: list[int] = []
        self.cap0: list[int] = []
        self.adj: list[list[int]] = [[] for _ in range(2 * nv + 2)]
        for v in range(nv):
            self._edge(2 * v, 2 * v + 1, 1)
        for v, succ in enumerate(links):
            for w in succ:
                self._edge(2 * v + 1, 2 * w, 1)
        for v in sorted(sinks):
            self._edge(2 * v + 1, self.sink, 1)
        self.src_edge = {}
        for v in range(nv):
            self.src_edge[v] = len(self.head)
            self._edge(self.source, 2 * v, 1)

    def _edge(self, u, w, c):
        self.adj[u].append(len(self.head))
        self.head.append(w)
        self.cap0.append(c)
        self.adj[w].append(len(self.head))
        self.head.append(u)
        self.cap0.append(0)

    def closed_capacities(self) -> list[int]:
        cap = self.cap0[:]
        for e in self.src_edge.values():
            cap[e] = 0
        return cap

    def augment_from(self, cap: list[int], v: int) -> int:
        """Open the source edge of ``v`` and push one more unit if possible.

        Only paths through the new edge can be augmenting, since the rest
        of the residual network is unchanged. Updates ``cap`` in place.
        """
        head, adj, sink = self.head, self.adj, self.sink
        e0 = self.src_edge[v]
        cap[e0] = 1
        start = 2 * v
        parent_edge = {start: e0}
        dq = deque([start])
        while dq:
            u = dq.popleft()
            for e in adj[u]:
                w = head[e]
                if cap[e] and w not in parent_edge and w != self.source:
                    parent_edge[w] = e
                    if w == sink:
                        x = sink
                        while x != self.source:
                            e = parent_edge[x]
                            cap[e] -= 1
                            cap[e ^ 1] += 1
                            x = head[e ^ 1]
                        return 1
                    dq.append(w)
        return 0

    def max_disjoint(self, vertices: set[int]) -> int:
        cap = self.cap0[:]
        for v in range(self.nv):
            if v not in vertices:
                cap[self.src_edge[v]] = 0
        head, adj, source, sink = self.head, self.adj, self.source, self.sink
        flow = 0
        while True:
            parent_edge = {source: -1}
            dq = deque([source])
            found = False
            while dq and not found:
                u = dq.popleft()
                for e in adj[u]:
                    if cap[e] and head[e] not in parent_edge:
                        parent_edge[head[e]] = e
                        if head[e] == sink:
                            found = True
                            break
                        dq.append(head[e])
            if not found:
                return flow
            x = sink
            while x != source:
                e = parent_edge[x]
                cap[e] -= 1
                cap[e ^ 1] += 1
                x = head[e ^ 1]
            flow += 1


def path_graph(num: int, sinks: Iterable[int]) -> LinkingGraph:
    """Directed path v1 -> v2 -> ... -> v_num with the given (1-based) sinks."""
    labels = [f"v{i}" for i in range(1, num + 1)]
    links = [[i + 1] if i + 1 < num else [] for i in range(num)]
    return LinkingGraph(labels, links, [s - 1 for s in sinks])


def gammoid_rank(graph: LinkingGraph, vertices: Iterable) -> int:
    """Largest subset of ``vertices`` linkable into the sinks by disjoint paths.

    ``vertices`` may hold vertex ids or labels.
    """
    ids = [v if isinstance(v, int) and not isinstance(v, bool) else graph.vertex(v)
           for v in vertices]
    return graph.rank(ids)


@dataclass(frozen=True)
class GammoidQuery:
    """Subset of the ground set at stage ``t``: elements ``(i, j, m)`` with m in {t, t+1}."""

    t: int
    elements: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        for el in self.elements:
            if len(el) != 3 or el[2] not in (self.t, self.t + 1):
                raise ValueError(f"element {el} not in the ground set at stage {self.t}")

    @property
    def new(self):
        return {e for e in self.elements if e[2] == self.t + 1}

    @property
    def old(self):
        return {e for e in self.elements if e[2] == self.t}


class FlowGraph(LinkingGraph):
    """Signal flow graph truncated at stage N.

    Labels are ``("src", b)`` for the B source vertices and ``(t, i, j)``
    for symbol ``j`` of node ``i`` at stage ``t``. ``edges`` keeps the
    data-flow direction with an optional coefficient label per edge.
    """

    def __init__(self, params: SystemParams, history: FailureHistory, N: int,
                 coefficients: Sequence | None = None):
        n, alpha, B = params.n, params.alpha, params.B
        if history.n != n:
            raise InvalidHistory(f"history is for {history.n} nodes, params for {n}")
        if N < 0 or N > history.stages:
            raise InvalidHistory(f"history has {history.stages} complete stages, need {N}")
        history.check_alpha(alpha)
        self.params = params
        self.history = history.truncated(N)
        self.N = N
        labels = [("src", b) for b in range(1, B + 1)]
        labels += [(t, i, j) for t in range(N + 1) for i in range(1, n + 1)
                   for j in range(1, alpha + 1)]
        idx = {lab: v for v, lab in enumerate(labels)}
        edges: list[tuple[int, int, object]] = []
        for i in range(1, n + 1):
            for j in range(1, alpha + 1):
                for b in range(1, B + 1):
                    edges.append((idx[("src", b)], idx[(0, i, j)], None))
        for t in range(N):
            f = history.failures[t]
            row = history.choices[t]
            L = None if coefficients is None else coefficients[t]
            for i in range(1, n + 1):
                if i == f:
                    continue
                for j in range(1, alpha + 1):
                    edges.append((idx[(t, i, j)], idx[(t + 1, i, j)], 1))
            helpers = [i for i in range(1, n + 1) if i != f]
            for jj in range(1, alpha + 1):
                for col, i in enumerate(helpers):
                    lab = None if L is None else int(L[jj - 1][col])
                    edges.append((idx[(t, i, row[i - 1])], idx[(t + 1, f, jj)], lab))
        self.edges = edges
        rev: list[list[int]] = [[] for _ in labels]
        for u, w, _ in edges:
            rev[w].append(u)
        super().__init__(labels, rev, range(B))

    def stage_vertices(self, t: int, nodes: Iterable[int] | None = None) -> list[int]:
        nodes = range(1, self.params.n + 1) if nodes is None else sorted(nodes)
        return [self.index[(t, i, j)] for i in nodes for j in range(1, self.params.alpha + 1)]

    def in_degree(self, label) -> int:
        return len(self.links[self.index[label]])

    def predecessors(self, label) -> list:
        return [self.labels[u] for u in self.links[self.index[label]]]

    def export(self) -> str:
        """One edge per line: ``stage:vertex -> stage:vertex label``."""
        def name(lab):
            if lab[0] == "src":
                return f"{SOURCE_STAGE}:u{lab[1]}"
            return f"{lab[0]}:v({lab[1]},{lab[2]})"
        lines = []
        for u, w, lab in self.edges:
            lines.append(f"{name(self.labels[u])} -> {name(self.labels[w])} "
                         f"{'-' if lab is None else lab}")
        return "\n".join(lines) + "\n"


def build_graph(params: SystemParams, history: FailureHistory, N: int | None = None,
                coefficients: Sequence | None = None) -> FlowGraph:
    return FlowGraph(params, history, history.stages if N is None else N, coefficients)


def element_vertex(graph: FlowGraph, el) -> int:
    i, j, m = el
    return graph.index[(m, i, j)]


def is_independent(query: GammoidQuery, graph: FlowGraph) -> bool:
    if not query.elements:
        return True
    if query.t + 1 > graph.N:
        raise InvalidHistory(f"graph truncated at {graph.N}, query needs stage {query.t + 1}")
    verts = [element_vertex(graph, e) for e in query.elements]
    return graph.rank(verts) == len(verts)


def recovery_rank_at_stage(graph: FlowGraph, collectors: Iterable[int]) -> int:
    """Gammoid rank of all symbols of ``collectors`` at the last stage."""
    return graph.rank(graph.stage_vertices(graph.N, collectors))


@dataclass
class ActiveStage:
    stage: int
    size: int
    predicted: int
    rule: str
    failed_vertices: int
    available_nodes: int


def active_vertex_trace(graph: FlowGraph, collectors: Iterable[int],
                        detail: bool = False):
    """Backward construction of active vertices from stage N down to stage 0.

    Returns the sizes |AV_N|, ..., |AV_0| (or per-stage details). At each
    stage the failed vertices are matched to the transferred symbols of
    available nodes, smallest node index first. The realized size is
    compared with the size predicted from the F-pair structure and
    InfeasibleLinking is raised when it falls short.
    """
    p = graph.params
    n, k, alpha = p.n, p.k, p.alpha
    collectors = sorted(set(collectors))
    if len(collectors) != k or not all(1 <= c <= n for c in collectors):
        raise ValueError(f"need {k} distinct collectors in [1, {n}]")
    hist, N = graph.history, graph.N
    outsiders = set(range(1, n + 1)) - set(collectors)
    right = {pr.s: pr.t for pr in fpairs(hist, N) if pr.s >= 0}

    active = {(i, j) for i in collectors for j in range(1, alpha + 1)}
    sizes = [len(active)]
    details = [ActiveStage(N, len(active), len(active), "collectors", 0, 0)]
    for s in range(N - 1, -1, -1):
        f = hist.failures[s]
        row = hist.choices[s]
        failed = sorted((i, j) for (i, j) in active if i == f)
        avail = [i for i in range(1, n + 1)
                 if i != f and (i, row[i - 1]) not in active]
        prev = {(i, j) for (i, j) in active if i != f}
        for _, i in zip(failed, avail):
            prev.add((i, row[i - 1]))
        t = right[s]
        size_next = len(active)
        if t < N:
            rule, predicted = "pair", size_next
        elif f not in collectors:
            rule, predicted = "last-outside", size_next
        else:
            between = {hist.failures[m] for m in range(s + 1, N)}
            o = min(alpha, len(between | outsiders))
            rule, predicted = "last-collector", size_next - (alpha - o)
        if len(prev) < predicted:
            raise InfeasibleLinking(
                f"stage {s}: realized {len(prev)} active vertices, predicted {predicted} ({rule})")
        active = prev
        sizes.append(len(active))
        details.append(ActiveStage(s, len(active), predicted, rule, len(failed), len(avail)))
    return details if detail else sizes


def all_collector_sets(n: int, k: int):
    return list(combinations(range(1, n + 1), k))


_POP8 = np.array([bin(i).count("1") for i in range(256)], dtype=np.int64)


def _popcount(x: np.ndarray) -> np.ndarray:
    out = np.zeros_like(x)
    while x.any():
        out += _POP8[x & 0xFF]
        x = x >> 8
    return out


class StageGammoid:
    """The gammoid restricted to one stage, as an independence bitmap.

    Subsets of the stage's n*alpha vertices are bitmasks over the columns
    of E. Stage 0 is uniform of rank B (every stage-0 vertex sees every
    source). A repair maps it to the next stage without touching the
    whole signal flow graph: a next-stage set is independent iff some
    transferred vertices outside its surviving part, as many as it has
    new-node vertices, together with that surviving part are independent
    at the current stage. Memory is 2**(n*alpha) booleans.
    """

    MAX_SYMBOLS = 20

    def __init__(self, params: SystemParams, t: int, independent: np.ndarray):
        self.params = params
        self.t = t
        self.independent = independent
        self.independent.setflags(write=False)

    @classmethod
    def initial(cls, params: SystemParams) -> "StageGammoid":
        na = params.num_symbols
        if na > cls.MAX_SYMBOLS:
            raise ValueError(f"{na} symbols per stage exceeds the bitmap limit {cls.MAX_SYMBOLS}")
        sizes = _popcount(np.arange(1 << na, dtype=np.int64))
        return cls(params, 0, sizes <= params.B)

    def after_repair(self, failed: int, choices: Sequence[int]) -> "StageGammoid":
        p = self.params
        na = p.num_symbols
        masks = np.arange(1 << na, dtype=np.int64)
        new_mask = sum(1 << c for c in p.node_columns(failed))
        transferred = [p.column(i, choices[i - 1]) for i in range(1, p.n + 1) if i != failed]
        new_part = masks & new_mask
        kept = masks & ~new_mask
        need = _popcount(new_part)
        out = np.zeros(1 << na, dtype=bool)
        for r in range(len(transferred) + 1):
            for ys in combinations(transferred, r):
                y = sum(1 << c for c in ys)
                hit = (need == r) & ((kept & y) == 0)
                out |= hit & self.independent[kept | y]
        return StageGammoid(p, self.t + 1, out)

    def is_independent(self, columns: Iterable[int]) -> bool:
        return bool(self.independent[sum(1 << c for c in columns)])

    def rank_of(self, columns: Iterable[int]) -> int:
        cols = list(columns)
        for r in range(len(cols), 0, -1):
            if any(self.is_independent(s) for s in combinations(cols, r)):
                return r
        return 0

    def bases_touching(self, node: int) -> list[list[int]]:
        """Size-B independent sets containing at least one symbol of ``node``."""
        p = self.params
        masks = np.arange(1 << p.num_symbols, dtype=np.int64)
        node_mask = sum(1 << c for c in p.node_columns(node))
        sel = self.independent & (_popcount(masks) == p.B) & ((masks & node_mask) != 0)
        return [[c for c in range(p.num_symbols) if m >> c & 1] for m in masks[sel].tolist()]
