"""Maximal flow between vertex sets of an undirected capacitated graph.

Dinic's blocking-flow algorithm on a CSR residual structure, compiled with
numba.  Every undirected edge e = <u, v> becomes the arc pair (2e, 2e+1),
u->v and v->u, each with residual capacity t(e); the net throughput from u
to v is then ``(res[2e+1] - res[2e]) / 2``.  Multiple terminals are joined
to a virtual source and sink by arcs whose capacity exceeds the total
capacity of the graph.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numba
import numpy as np

FLOAT_EPS = 1e-12


class InvalidInputError(ValueError):
    pass


class DegenerateCylinderError(ValueError):
    pass


class OracleSizeError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class SimpleGraph:
    """An abstract undirected graph on vertices ``0..num_vertices-1``."""

    num_vertices: int
    edges: np.ndarray

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        if len(edges) and (edges.min() < 0 or edges.max() >= self.num_vertices):
            raise InvalidInputError("edge endpoint out of range")
        if len(edges) and np.any(edges[:, 0] == edges[:, 1]):
            raise InvalidInputError("self loops are not allowed")
        object.__setattr__(self, "edges", edges)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @cached_property
    def csr(self):
        tails = np.concatenate([self.edges[:, 0], self.edges[:, 1]])
        heads = np.concatenate([self.edges[:, 1], self.edges[:, 0]])
        eids = np.concatenate([np.arange(self.num_edges)] * 2)
        order = np.lexsort((heads, tails))
        start = np.zeros(self.num_vertices + 1, dtype=np.int64)
        np.add.at(start, tails + 1, 1)
        return np.cumsum(start), heads[order], eids[order]


@dataclass(eq=False)
class Stream:
    """Throughput ``g`` and orientation ``o`` per edge.

    ``orientation[e]`` is +1 when fluid runs from ``edges[e,0]`` to
    ``edges[e,1]``, -1 for the reverse and 0 where ``g[e] = 0``.  ``exits``
    maps ``(u, w)`` to the fluid leaving sink vertex u towards the outside
    point w (``None`` when the graph has no geometry); ``entries`` is the
    same for source vertices.
    """

    g: np.ndarray
    orientation: np.ndarray
    exits: dict = field(default_factory=dict)
    entries: dict = field(default_factory=dict)

    @classmethod
    def zero(cls, num_edges: int, integer: bool = False) -> "Stream":
        dtype = np.int64 if integer else np.float64
        return cls(np.zeros(num_edges, dtype=dtype), np.zeros(num_edges, dtype=np.int8))

    def signed(self) -> np.ndarray:
        return self.g * self.orientation


@dataclass(eq=False)
class FlowResult:
    value: float
    stream: Stream
    cut: np.ndarray
    source_side: np.ndarray
    integer: bool

    @property
    def sides(self) -> tuple[np.ndarray, np.ndarray]:
        return np.flatnonzero(self.source_side), np.flatnonzero(~self.source_side)

    def cut_value(self, caps) -> float:
        caps = _cap_values(caps)
        total = caps[self.cut].sum()
        return int(total) if self.integer else float(total)


# -- numba kernels -----------------------------------------------------------


@numba.njit(cache=True)
def _bfs_levels(s, adj_start, adj_arcs, arc_to, res, eps, level, queue):
    level[:] = -1
    level[s] = 0
    qh = 0
    qt = 0
    queue[qt] = s
    qt += 1
    while qh < qt:
        u = queue[qh]
        qh += 1
        for k in range(adj_start[u], adj_start[u + 1]):
            a = adj_arcs[k]
            v = arc_to[a]
            if level[v] < 0 and res[a] > eps:
                level[v] = level[u] + 1
                queue[qt] = v
                qt += 1


@numba.njit(cache=True)
def _dinic(n, s, t, adj_start, adj_arcs, arc_to, res, eps):
    level = np.empty(n, dtype=np.int64)
    queue = np.empty(n, dtype=np.int64)
    it = np.empty(n, dtype=np.int64)
    path = np.empty(n, dtype=np.int64)
    total = res[0] - res[0]
    while True:
        _bfs_levels(s, adj_start, adj_arcs, arc_to, res, eps, level, queue)
        if level[t] < 0:
            break
        it[:] = adj_start[:n]
        while True:
            # walk level-increasing admissible arcs from s to t
            u = s
            depth = 0
            found = False
            while True:
                if u == t:
                    found = True
                    break
                end = adj_start[u + 1]
                while it[u] < end:
                    a = adj_arcs[it[u]]
                    if res[a] > eps and level[arc_to[a]] == level[u] + 1:
                        break
                    it[u] += 1
                if it[u] < end:
                    a = adj_arcs[it[u]]
                    path[depth] = a
                    depth += 1
                    u = arc_to[a]
                else:
                    level[u] = -1
                    if depth == 0:
                        break
                    depth -= 1
                    u = arc_to[path[depth] ^ 1]
                    it[u] += 1
            if not found:
                break
            push = res[path[0]]
            for i in range(1, depth):
                if res[path[i]] < push:
                    push = res[path[i]]
            for i in range(depth):
                res[path[i]] -= push
                res[path[i] ^ 1] += push
            total += push
    return total


# -- solver ------------------------------------------------------------------


def _cap_values(caps) -> np.ndarray:
    values = getattr(caps, "values", caps)
    return np.asarray(values)


def resolve_vertex_set(graph, vertices) -> np.ndarray:
    """Vertex indices from a boolean mask, an index array or a set of points."""
    if isinstance(vertices, np.ndarray) and vertices.dtype == bool:
        if vertices.shape != (graph.num_vertices,):
            raise InvalidInputError("mask length differs from vertex count")
        return np.flatnonzero(vertices)
    items = list(vertices)
    if items and isinstance(items[0], (tuple, list, np.ndarray)) and np.ndim(items[0]) == 1:
        if not hasattr(graph, "index_of"):
            raise InvalidInputError("point sets need a lattice graph")
        idx = graph.index_of(np.array(items, dtype=np.int64))
        if np.any(idx < 0):
            raise InvalidInputError("point not in graph")
        return np.unique(idx)
    idx = np.unique(np.asarray(items, dtype=np.int64))
    if len(idx) and (idx[0] < 0 or idx[-1] >= graph.num_vertices):
        raise InvalidInputError("vertex index out of range")
    return idx


class FlowNetwork:
    """Residual arc structure for fixed terminals; reusable across capacity draws."""

    def __init__(self, graph, sources, sinks):
        src = resolve_vertex_set(graph, sources)
        snk = resolve_vertex_set(graph, sinks)
        if len(src) == 0 or len(snk) == 0:
            raise InvalidInputError("source and sink sets must be nonempty")
        if np.intersect1d(src, snk).size:
            raise InvalidInputError("source and sink sets overlap")
        self.graph, self.src, self.snk = graph, src, snk
        V, E = graph.num_vertices, graph.num_edges
        s, t = V, V + 1
        ns, nt = len(src), len(snk)
        # arcs: 2e / 2e+1 graph edges, then source arcs, then sink arcs
        pair_tail = np.empty(2 * E, dtype=np.int64)
        pair_tail[0::2] = graph.edges[:, 0]
        pair_tail[1::2] = graph.edges[:, 1]
        pair_head = np.empty(2 * E, dtype=np.int64)
        pair_head[0::2] = graph.edges[:, 1]
        pair_head[1::2] = graph.edges[:, 0]
        arc_from = np.concatenate([
            pair_tail,
            np.ravel(np.stack([np.full(ns, s), src], axis=1)),
            np.ravel(np.stack([snk, np.full(nt, t)], axis=1)),
        ]).astype(np.int64)
        self.arc_to = np.concatenate([
            pair_head,
            np.ravel(np.stack([src, np.full(ns, s)], axis=1)),
            np.ravel(np.stack([np.full(nt, t), snk], axis=1)),
        ]).astype(np.int64)
        self.order = np.argsort(arc_from, kind="stable").astype(np.int64)
        adj_start = np.zeros(V + 3, dtype=np.int64)
        np.add.at(adj_start, arc_from + 1, 1)
        self.adj_start = np.cumsum(adj_start)

    def _run(self, caps):
        t_e = _cap_values(caps)
        graph = self.graph
        if t_e.shape != (graph.num_edges,):
            raise InvalidInputError("one capacity per edge is required")
        if np.any(t_e < 0):
            raise InvalidInputError("capacities must be nonnegative")
        integer = bool(np.issubdtype(t_e.dtype, np.integer))
        dtype = np.int64 if integer else np.float64
        E, ns = graph.num_edges, len(self.src)
        res = np.zeros(len(self.arc_to), dtype=dtype)
        res[0:2 * E:2] = t_e
        res[1:2 * E:2] = t_e
        res[2 * E::2] = t_e.sum() + 1
        eps = dtype(0) if integer else dtype(FLOAT_EPS)
        n = graph.num_vertices + 2
        value = _dinic(n, n - 2, n - 1, self.adj_start, self.order, self.arc_to, res, eps)
        return (int(value) if integer else float(value)), res, integer, eps

    def value(self, caps) -> float:
        return self._run(caps)[0]

    def solve(self, caps) -> FlowResult:
        value, res, integer, eps = self._run(caps)
        graph = self.graph
        V, E, ns = graph.num_vertices, graph.num_edges, len(self.src)
        level = np.empty(V + 2, dtype=np.int64)
        _bfs_levels(V, self.adj_start, self.order, self.arc_to, res, eps, level,
                    np.empty(V + 2, dtype=np.int64))
        reach = level[:V] >= 0
        cut = np.flatnonzero(reach[graph.edges[:, 0]] != reach[graph.edges[:, 1]])

        net = res[1:2 * E:2] - res[0:2 * E:2]
        net = net // 2 if integer else net / 2
        if not integer:
            net[np.abs(net) <= FLOAT_EPS] = 0.0
        g = np.abs(net)
        orientation = np.sign(net).astype(np.int8)
        into_sink = res[2 * E + 2 * ns + 1::2]
        out_of_source = res[2 * E + 1:2 * E + 2 * ns:2]
        stream = Stream(g, orientation,
                        exits=_terminal_throughput(graph, self.snk, into_sink),
                        entries=_terminal_throughput(graph, self.src, out_of_source))
        return FlowResult(value, stream, cut, reach, integer)


def max_flow(graph, caps, sources, sinks) -> FlowResult:
    """Maximal flow from vertex set ``sources`` to ``sinks``.

    Integer capacities are solved exactly in int64; float capacities use an
    absolute residual slack of 1e-12.  The returned cut is the set of edges
    leaving the vertices reachable from the sources in the final residual
    graph.
    """
    return FlowNetwork(graph, sources, sinks).solve(caps)


def _terminal_throughput(graph, vertices, amounts) -> dict:
    out = {}
    for u, q in zip(vertices.tolist(), amounts.tolist()):
        if q == 0:
            continue
        w = None
        if hasattr(graph, "outside_neighbours"):
            nbrs = graph.outside_neighbours(u)
            w = nbrs[0] if nbrs else None
        out[(u, w)] = q
    return out


# -- cylinder flows ----------------------------------------------------------


def _lattice(spec_or_graph):
    if hasattr(spec_or_graph, "num_edges"):
        return spec_or_graph
    from .lattice_cylinder import build_cylinder

    return build_cylinder(spec_or_graph)


def tau(spec_or_graph, caps) -> FlowResult:
    """Flow from the upper half boundary to the lower half boundary."""
    graph = _lattice(spec_or_graph)
    if not graph.upper.any() or not graph.lower.any():
        raise DegenerateCylinderError("half boundaries are empty; height too small")
    return max_flow(graph, caps, graph.upper, graph.lower)


def phi(spec_or_graph, caps) -> FlowResult:
    """Flow from the bottom face set to the top face set."""
    graph = _lattice(spec_or_graph)
    if not graph.top.any() or not graph.bottom.any():
        raise DegenerateCylinderError("top or bottom set is empty")
    if np.any(graph.top & graph.bottom):
        raise DegenerateCylinderError("top and bottom sets overlap; height too small")
    return max_flow(graph, caps, graph.bottom, graph.top)


# -- checks ------------------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    kind: str  # "capacity", "conservation" or "orientation"
    where: int
    detail: str


def validate_stream(graph, caps, sources, sinks, stream: Stream, tol: float | None = None) -> list[Violation]:
    """Capacity and conservation violations of ``stream``; empty when feasible."""
    t_e = _cap_values(caps)
    g = np.asarray(stream.g)
    o = np.asarray(stream.orientation)
    if tol is None:
        tol = 0 if np.issubdtype(g.dtype, np.integer) and np.issubdtype(t_e.dtype, np.integer) else 1e-9
    out = []
    for e in np.flatnonzero((g < 0) | (g > t_e + tol * np.maximum(1, t_e))):
        out.append(Violation("capacity", int(e), f"g={g[e]} outside [0, {t_e[e]}]"))
    for e in np.flatnonzero((g > 0) & (o == 0)):
        out.append(Violation("orientation", int(e), "positive throughput without orientation"))
    signed = g * o
    balance = np.zeros(graph.num_vertices, dtype=np.result_type(signed.dtype, np.float64))
    np.add.at(balance, graph.edges[:, 0], -signed)
    np.add.at(balance, graph.edges[:, 1], signed)
    terminals = np.zeros(graph.num_vertices, dtype=bool)
    terminals[resolve_vertex_set(graph, sources)] = True
    terminals[resolve_vertex_set(graph, sinks)] = True
    scale = 1 + np.abs(g).sum()
    for v in np.flatnonzero(~terminals & (np.abs(balance) > tol * scale)):
        out.append(Violation("conservation", int(v), f"inflow - outflow = {balance[v]}"))
    return out


def flow_value(stream: Stream, graph, sinks, region=None) -> float:
    """Signed fluid leaving the region through the sink set.

    Sums the recorded exits ``(u, w)`` with u a sink vertex and w outside
    ``region`` (``None`` exits count unconditionally).
    """
    snk = set(resolve_vertex_set(graph, sinks).tolist())
    coords = None
    if region is not None:
        from .lattice_cylinder import CylinderCoords

        coords = CylinderCoords(region)
    total = 0
    for (u, w), q in stream.exits.items():
        if u not in snk:
            continue
        if w is not None and coords is not None and coords.contains(np.array([w]))[0]:
            continue
        total += q
    return total


def min_cut_bruteforce(graph, caps, sources, sinks, max_edges: int = 16):
    """Minimal capacity of an edge set separating sources from sinks, by enumeration."""
    E = graph.num_edges
    if E > max_edges:
        raise OracleSizeError(f"{E} edges exceeds the enumeration limit {max_edges}")
    t_e = _cap_values(caps)
    src = resolve_vertex_set(graph, sources)
    snk = resolve_vertex_set(graph, sinks)
    if np.intersect1d(src, snk).size:
        raise InvalidInputError("source and sink sets overlap")
    masks = np.arange(1 << E, dtype=np.int64)
    removed = ((masks[:, None] >> np.arange(E)) & 1).astype(bool)
    keep = ~removed
    reach = np.zeros((len(masks), graph.num_vertices), dtype=bool)
    reach[:, src] = True
    u, v = graph.edges[:, 0], graph.edges[:, 1]
    while True:
        nxt = reach.copy()
        for e in range(E):
            k = keep[:, e]
            nxt[:, v[e]] |= k & reach[:, u[e]]
            nxt[:, u[e]] |= k & reach[:, v[e]]
        if np.array_equal(nxt, reach):
            break
        reach = nxt
    ok = ~reach[:, snk].any(axis=1)
    values = removed.astype(t_e.dtype) @ t_e if E else np.zeros(1, dtype=t_e.dtype)
    best = values[ok].min()
    return int(best) if np.issubdtype(t_e.dtype, np.integer) else float(best)


# -- DIMACS ------------------------------------------------------------------


def write_dimacs(graph, caps, sources, sinks, fh, comment: str | None = None) -> None:
    """Write the instance as a DIMACS max-flow problem.

    Graph vertex i becomes node i+1; the virtual source and sink are nodes
    V+1 and V+2, joined to the terminal sets by arcs of capacity
    ``sum(t) + 1``.  Each undirected edge yields two opposite arcs.
    """
    t_e = _cap_values(caps)
    src = resolve_vertex_set(graph, sources)
    snk = resolve_vertex_set(graph, sinks)
    V = graph.num_vertices
    s, t = V + 1, V + 2
    big = t_e.sum() + 1
    fmt = (lambda x: str(int(x))) if np.issubdtype(t_e.dtype, np.integer) else (lambda x: repr(float(x)))
    if comment:
        for line in comment.splitlines():
            fh.write(f"c {line}\n")
    fh.write(f"p max {V + 2} {2 * graph.num_edges + len(src) + len(snk)}\n")
    fh.write(f"n {s} s\nn {t} t\n")
    for (a, b), c in zip(graph.edges.tolist(), t_e):
        fh.write(f"a {a + 1} {b + 1} {fmt(c)}\n")
        fh.write(f"a {b + 1} {a + 1} {fmt(c)}\n")
    for u in src.tolist():
        fh.write(f"a {s} {u + 1} {fmt(big)}\n")
    for u in snk.tolist():
        fh.write(f"a {u + 1} {t} {fmt(big)}\n")


@dataclass
class DimacsProblem:
    num_nodes: int
    source: int
    sink: int
    arcs: list[tuple[int, int, float]]


def read_dimacs(lines: Iterable[str]) -> DimacsProblem:
    num_nodes = source = sink = None
    arcs = []
    for lineno, raw in enumerate(lines, 1):
        parts = raw.split()
        if not parts or parts[0] == "c":
            continue
        tag = parts[0]
        if tag == "p":
            if len(parts) != 4 or parts[1] != "max":
                raise ValueError(f"line {lineno}: bad problem line")
            num_nodes = int(parts[2])
        elif tag == "n":
            if parts[2] == "s":
                source = int(parts[1])
            elif parts[2] == "t":
                sink = int(parts[1])
            else:
                raise ValueError(f"line {lineno}: bad node designator")
        elif tag == "a":
            c = float(parts[3])
            arcs.append((int(parts[1]), int(parts[2]), int(c) if c.is_integer() else c))
        else:
            raise ValueError(f"line {lineno}: unknown line type {tag!r}")
    if num_nodes is None or source is None or sink is None:
        raise ValueError("missing problem or terminal line")
    return DimacsProblem(num_nodes, source, sink, arcs)


def path_graph(num_vertices: int) -> SimpleGraph:
    return SimpleGraph(num_vertices, np.array([(i, i + 1) for i in range(num_vertices - 1)]))


def graph_from_edges(num_vertices: int, edges: Sequence[Sequence[int]]) -> SimpleGraph:
    return SimpleGraph(num_vertices, np.asarray(edges, dtype=np.int64).reshape(-1, 2))


__all__ = [
    "DegenerateCylinderError", "DimacsProblem", "FlowResult", "InvalidInputError",
    "FlowNetwork", "OracleSizeError", "SimpleGraph", "Stream", "Violation", "flow_value", "graph_from_edges",
    "max_flow", "min_cut_bruteforce", "path_graph", "phi", "read_dimacs", "tau",
    "validate_stream", "write_dimacs",
]
