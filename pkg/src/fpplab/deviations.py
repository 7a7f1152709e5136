"""Slab decomposition of a large cylinder, glue edge sets and tail-bound calculators.

Local coordinates of the large cylinder are ``(a_1, ..., a_{d-1}, t)``: a_k
runs along side k of NA from its corner, t along the normal.  The large
cylinder is tiled in t by slabs of thickness ``2h(n) + zeta`` and every slab
by translates of the enlarged small cylinder (margin zeta/2 all round).
Glue edges are selected by exact region tests in these coordinates.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np
from scipy import optimize, sparse
from scipy.sparse import csgraph

from .capacities import DistributionSpec, empirical_log_mgf, log_mgf
from .exact import Surd, floor_surd
from .lattice_cylinder import CylinderCoords, CylinderSpec, LatticeGraph, build_cylinder
from .maxflow import FlowResult, max_flow


class DecompositionInfeasibleError(ValueError):
    pass


class ConsistencyError(ValueError):
    pass


class TooSmallCylinderError(ValueError):
    pass


M_RULES = ("max", "bounded", "slow")


# -- exact segment/box tests ---------------------------------------------------


def _edge_hits_open_box(coords: CylinderCoords, graph: LatticeGraph, edge_ids: np.ndarray,
                        R: np.ndarray, lo: Sequence, hi: Sequence) -> np.ndarray:
    """Whether each edge's closed segment meets the open box ``prod (lo_k, hi_k)``.

    Cheap exact tests settle almost every edge; the rest (segments passing
    near a box corner) are resolved with exact surd arithmetic.
    """
    u = graph.edges[edge_ids, 0]
    v = graph.edges[edge_ids, 1]
    Ru, Rv = R[u], R[v]
    d = coords.d
    miss = np.zeros(len(edge_ids), dtype=bool)
    u_in = np.ones(len(edge_ids), dtype=bool)
    v_in = np.ones(len(edge_ids), dtype=bool)
    for k in range(d):
        ul = coords.compare(Ru[:, k], k, lo[k])
        vl = coords.compare(Rv[:, k], k, lo[k])
        uh = coords.compare(Ru[:, k], k, hi[k])
        vh = coords.compare(Rv[:, k], k, hi[k])
        miss |= ((ul <= 0) & (vl <= 0)) | ((uh >= 0) & (vh >= 0))
        u_in &= (ul > 0) & (uh < 0)
        v_in &= (vl > 0) & (vh < 0)
    hit = ~miss & (u_in | v_in)
    for pos in np.flatnonzero(~miss & ~hit):
        hit[pos] = _segment_meets_box(coords, graph.vertices[u[pos]], graph.vertices[v[pos]], lo, hi)
    return hit


def _segment_meets_box(coords: CylinderCoords, x, y, lo, hi) -> bool:
    a = coords.surd_coords(x)
    step = coords.surd_step(np.asarray(y) - np.asarray(x))
    s_lo, s_hi = Surd.rational(0), Surd.rational(1)
    lower = []
    upper = []
    for k in range(coords.d):
        if not step[k].terms:
            if not (a[k] > lo[k] and a[k] < hi[k]):
                return False
            continue
        p = (Surd.rational(lo[k]) - a[k]) / step[k]
        q = (Surd.rational(hi[k]) - a[k]) / step[k]
        if step[k].sign() < 0:
            p, q = q, p
        lower.append(p)
        upper.append(q)
    # open interval (max lower, min upper) against the closed [0, 1]
    L = max(lower, default=None)
    U = min(upper, default=None)
    if L is None:
        return True
    return L < U and L < s_hi and U > s_lo


def _edges_in_frame_region(coords, graph, R, outer_lo, outer_hi, holes, candidates=None) -> np.ndarray:
    """Edges with both endpoints in the closed outer box whose segment avoids every open hole."""
    inside = coords.in_box(R, outer_lo, outer_hi)
    ok = inside[graph.edges[:, 0]] & inside[graph.edges[:, 1]]
    if candidates is not None:
        ok &= candidates
    ids = np.flatnonzero(ok)
    keep = np.ones(len(ids), dtype=bool)
    for lo, hi in holes:
        if any(l >= h for l, h in zip(lo, hi)):
            continue
        keep &= ~_edge_hits_open_box(coords, graph, ids, R, lo, hi)
    return ids[keep]


# -- decomposition -------------------------------------------------------------


@dataclass(frozen=True)
class SmallBox:
    slab: int
    index: tuple[int, ...]
    translation: tuple[int, ...]
    offset: tuple[float, ...]
    enlarged_lo: tuple[Fraction, ...]
    enlarged_hi: tuple[Fraction, ...]
    spec: CylinderSpec


@dataclass(eq=False)
class DecompositionPlan:
    family: CylinderSpec
    N: int
    n: int
    zeta: Fraction
    M: int
    m: int
    m_rule: str
    capacity_budget: int
    big: CylinderSpec
    small: CylinderSpec
    slab_ranges: list[tuple[Fraction, Fraction]]
    band_ranges: list[tuple[Fraction, Fraction]]
    boxes: list[list[SmallBox]]
    graph: LatticeGraph
    glue_E1: np.ndarray
    glue_E0: list[np.ndarray]
    counts_per_axis: tuple[int, ...] = ()

    @property
    def l0(self) -> int:
        return max((len(e) for e in self.glue_E0), default=0)

    @property
    def l1(self) -> int:
        return len(self.glue_E1)

    def summary(self) -> dict:
        return {
            "N": self.N, "n": self.n, "zeta": str(self.zeta), "M": self.M, "m": self.m,
            "m_rule": self.m_rule, "capacity_budget": self.capacity_budget,
            "h_N": str(self.big.height), "h_n": str(self.small.height),
            "card_E1": self.l1, "card_E0": [len(e) for e in self.glue_E0],
            "big_vertices": self.graph.num_vertices, "big_edges": self.graph.num_edges,
        }


def choose_M(rule: str, N: int, h_N: Fraction, h_n: Fraction, zeta: Fraction,
             kappa: float | None = None) -> int:
    """Slab count.

    ``max``: floor(h(N)/(h(n)+zeta/2)).  ``bounded``: min(floor(kappa*N), max).
    ``slow``: min(floor(sqrt(N)), max), which grows without bound while
    M/N -> 0.
    """
    largest = math.floor(h_N / (h_n + zeta / 2))
    if rule == "max":
        return largest
    if rule == "bounded":
        if kappa is None or kappa <= 0:
            raise ValueError("bounded rule needs a positive kappa")
        return min(math.floor(kappa * N), largest)
    if rule == "slow":
        return min(math.isqrt(N), largest)
    raise ValueError(f"unknown M rule {rule!r}; expected one of {M_RULES}")


def default_kappa(family: CylinderSpec, n: int, zeta: Fraction, dist: DistributionSpec | None = None,
                  epsilon: float = 0.1) -> float:
    """Largest kappa keeping ``2 K card(E_1) < epsilon H(NA)`` for capacities bounded by K.

    card(E_1) is estimated by ``c1 * N^{d-2} M h(n)`` with the crude
    constant ``c1 = 8 d zeta``.
    """
    K = dist.support_max() if dist is not None else 1.0
    if not math.isfinite(K) or K <= 0:
        K = 1.0
    d = family.d
    area_A = float(family.at(1).area())
    h_n = float(family.at(n).height)
    return epsilon * area_A / (2 * K * 8 * d * float(zeta) * max(h_n, 1.0))


def slab_decomposition(family: CylinderSpec, N: int, n: int, zeta=None, m_rule: str = "max",
                       kappa: float | None = None, graph: LatticeGraph | None = None) -> DecompositionPlan:
    """Tile ``cyl(NA, h(N))`` with disjoint integer translates of ``cyl(nA, h(n))``.

    Slab i covers t in ``[-R + (i-1)w, -R + i w]`` with ``w = 2h(n)+zeta`` and
    ``R = M w / 2``.  Slab i is cut by Euclidean division of each side of NA
    by ``nL_k + zeta``.  The band of slab i is its centre level +- 3 zeta.
    """
    if not 1 <= n <= N:
        raise DecompositionInfeasibleError("need 1 <= n <= N")
    d = family.d
    zeta = Fraction(2 * d) if zeta is None else Fraction(zeta)
    if zeta < 2 * d:
        raise DecompositionInfeasibleError("zeta must be at least 2d")
    big = family.at(N)
    small = family.at(n)
    if graph is None:
        graph = build_cylinder(big)
    elif graph.spec != big:
        raise ConsistencyError("graph does not belong to the large cylinder")
    coords = CylinderCoords(big)
    R = coords.numerators(graph.vertices)
    budget = math.floor(big.area() / small.area())

    if N == n:
        # the large cylinder is itself the only box
        box = SmallBox(0, (0,) * (d - 1), (0,) * d, (0.0,) * d,
                       tuple([Fraction(0)] * (d - 1) + [-big.height]),
                       tuple(list(big.base.widths()) + [big.height]), big)
        empty = np.zeros(0, dtype=np.int64)
        return DecompositionPlan(family, N, n, zeta, 1, 1, m_rule, budget, big, small,
                                 [(-big.height, big.height)], [], [[box]], graph, empty, [empty],
                                 (1,) * (d - 1))

    h_n, h_N = small.height, big.height
    M = choose_M(m_rule, N, h_N, h_n, zeta, kappa)
    if M < 1:
        raise DecompositionInfeasibleError("slab thinner than the enlarged small cylinder")
    width = 2 * h_n + zeta
    assert M * width <= 2 * h_N
    R_t = M * (h_n + zeta / 2)
    big_w = big.base.widths()
    small_w = small.base.widths()
    cell = [sw + zeta for sw in small_w]
    counts = tuple(math.floor(bw / c) for bw, c in zip(big_w, cell))
    if any(q < 1 for q in counts):
        raise DecompositionInfeasibleError("NA is narrower than the enlarged small base")
    m = math.prod(counts)
    assert m <= budget

    slabs, bands, boxes = [], [], []
    for i in range(1, M + 1):
        t0 = -R_t + (i - 1) * width
        centre = t0 + width / 2
        slabs.append((t0, t0 + width))
        bands.append((centre - 3 * zeta, centre + 3 * zeta))
        row = []
        for idx in np.ndindex(*counts):
            lo = tuple([c * j for c, j in zip(cell, idx)] + [t0])
            hi = tuple([c * (j + 1) for c, j in zip(cell, idx)] + [t0 + width])
            corner = [c * j + zeta / 2 for c, j in zip(cell, idx)] + [centre]
            z, u = _integer_translation(big, small, corner)
            row.append(SmallBox(i - 1, tuple(int(j) for j in idx), z, u, lo, hi, small.translated(z)))
        boxes.append(row)

    # E_1: within 2 zeta of the boundary of NA, |t| <= R_t
    outer_lo = [Fraction(0)] * (d - 1) + [-R_t]
    outer_hi = list(big_w) + [R_t]
    hole = ([2 * zeta] * (d - 1) + [-R_t - 1], [w - 2 * zeta for w in big_w] + [R_t + 1])
    E1 = _edges_in_frame_region(coords, graph, R, outer_lo, outer_hi, [hole])

    # E_{0,i}: the band minus the open 3-zeta cores of the enlarged boxes
    E0 = []
    for i, (b_lo, b_hi) in enumerate(bands):
        lo = [Fraction(0)] * (d - 1) + [b_lo]
        hi = list(big_w) + [b_hi]
        holes = [([a + 3 * zeta for a in bx.enlarged_lo], [b - 3 * zeta for b in bx.enlarged_hi])
                 for bx in boxes[i]]
        E0.append(_edges_in_frame_region(coords, graph, R, lo, hi, holes))

    return DecompositionPlan(family, N, n, zeta, M, m, m_rule, budget, big, small, slabs, bands,
                             boxes, graph, E1, E0, counts)


def _integer_translation(big: CylinderSpec, small: CylinderSpec, local_corner) -> tuple[tuple[int, ...], tuple[float, ...]]:
    """Integer z with ``nA + z`` close to the ideal placement; returns (z, u = z - w).

    The ideal translation w maps the corner of nA (at t = 0) to the point
    with the given local coordinates of the large cylinder.  z rounds w
    coordinatewise, so ``|u|_inf <= 1/2``; both facts are checked exactly.
    """
    coords = CylinderCoords(big)
    d = big.d
    origin = big.base.origin()
    small_origin = small.base.origin()
    w = []
    for c in range(d):
        val = Surd.rational(origin[c] - small_origin[c])
        for k in range(d):
            g = int(coords.axes[k][c])
            if g:
                val = val + Surd.root(Fraction(local_corner[k]) * g / coords.G[k], coords.G[k])
        w.append(val)
    z = tuple(floor_surd(x + Fraction(1, 2)) for x in w)
    u = [Surd.rational(zc) - wc for zc, wc in zip(z, w)]
    if any(not (x < 1 and x > -1) for x in u):
        raise ConsistencyError("integer translation off by more than one")
    return z, tuple(float(x) for x in u)


# -- gluing verification ---------------------------------------------------------


@dataclass
class SlabCheck:
    slab: int
    tau_big: float
    sum_small: float
    glue_value: float
    slack: float
    holds: bool
    separated: bool


@dataclass
class GluingReport:
    plan: dict
    slabs: list[SlabCheck]

    @property
    def violations(self) -> int:
        return sum(1 for s in self.slabs if not (s.holds and s.separated))

    def to_json(self) -> str:
        return json.dumps({"plan": self.plan, "slabs": [asdict(s) for s in self.slabs],
                           "violations": self.violations}, indent=2)


def _edge_map(big: LatticeGraph, small: LatticeGraph) -> np.ndarray:
    idx = big.index_of(small.vertices)
    if np.any(idx < 0):
        raise ConsistencyError("small cylinder is not contained in the large one")
    eids = big.edge_index(idx[small.edges[:, 0]], idx[small.edges[:, 1]])
    if np.any(eids < 0):
        raise ConsistencyError("small cylinder edge missing from the large graph")
    return eids


def separates(graph: LatticeGraph, removed: np.ndarray) -> bool:
    """Whether deleting the edge ids ``removed`` disconnects upper from lower half boundary."""
    keep = np.ones(graph.num_edges, dtype=bool)
    keep[removed] = False
    e = graph.edges[keep]
    V = graph.num_vertices
    adj = sparse.coo_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(V, V))
    _, label = csgraph.connected_components(adj, directed=False)
    return not np.intersect1d(label[graph.upper], label[graph.lower]).size


def verify_cut_gluing(plan: DecompositionPlan, caps, tol: float = 1e-9) -> GluingReport:
    """Check ``tau(NA,h(N)) <= sum_j tau(B_ij) + V(E_1 u E_0i)`` for every slab.

    Also deletes the small-cylinder minimal cuts together with the glue
    edges and confirms by graph search that the half boundaries of the large
    cylinder are disconnected.
    """
    values = np.asarray(getattr(caps, "values", caps))
    graph = plan.graph
    if values.shape != (graph.num_edges,):
        raise ConsistencyError("capacities do not match the plan's graph")
    integer = np.issubdtype(values.dtype, np.integer)
    tau_big = max_flow(graph, values, graph.upper, graph.lower).value
    out = []
    small_graphs = {}
    for i, row in enumerate(plan.boxes):
        total = 0
        cut_edges = []
        for bx in row:
            key = bx.translation
            if key not in small_graphs:
                g = build_cylinder(bx.spec)
                small_graphs[key] = (g, _edge_map(graph, g))
            g, emap = small_graphs[key]
            res: FlowResult = max_flow(g, values[emap], g.upper, g.lower)
            total += res.value
            cut_edges.append(emap[res.cut])
        glue = np.union1d(plan.glue_E1, plan.glue_E0[i])
        glue_value = values[glue].sum()
        rhs = total + glue_value
        slack = rhs - tau_big
        holds = slack >= 0 if integer else slack >= -tol * max(1.0, abs(tau_big))
        removed = np.concatenate(cut_edges + [glue]).astype(np.int64)
        sep = separates(graph, removed)
        conv = int if integer else float
        out.append(SlabCheck(i, conv(tau_big), conv(total), conv(glue_value), conv(slack),
                             bool(holds), bool(sep)))
    return GluingReport(plan.summary(), out)


# -- cardinalities ---------------------------------------------------------------


@dataclass
class CardinalityRow:
    N: int
    n: int
    M: int
    card_E0: int
    card_E1: int
    C0: float
    C1: float


@dataclass
class CardinalityReport:
    rows: list[CardinalityRow]

    def spread(self, which: str) -> float:
        """Relative variation ``max/min - 1`` of a fitted constant over the ladder."""
        vals = [getattr(r, which) for r in self.rows]
        lo, hi = min(vals), max(vals)
        return math.inf if lo <= 0 else hi / lo - 1

    def to_json(self) -> str:
        return json.dumps({"rows": [asdict(r) for r in self.rows],
                           "spread_C0": self.spread("C0"), "spread_C1": self.spread("C1")}, indent=2)


def cardinality_row(plan: DecompositionPlan) -> CardinalityRow:
    """Smallest constants with ``card(E_0i) <= C0 (N^{d-1}/n + N^{d-2} n)`` and
    ``card(E_1) <= C1 N^{d-2} M h(n)``."""
    d, N, n = plan.big.d, plan.N, plan.n
    e0 = plan.l0
    e1 = plan.l1
    c0 = e0 / (N ** (d - 1) / n + N ** (d - 2) * n)
    c1 = e1 / (N ** (d - 2) * plan.M * float(plan.small.height)) if plan.small.height > 0 else math.inf
    return CardinalityRow(N, n, plan.M, e0, e1, c0, c1)


def cardinality_bounds(family: CylinderSpec, N_list: Sequence[int], n: int, zeta=None,
                       m_rule: str = "max", kappa: float | None = None) -> CardinalityReport:
    return CardinalityReport([cardinality_row(slab_decomposition(family, N, n, zeta, m_rule, kappa))
                              for N in N_list])


# -- rate functions and tail bounds ------------------------------------------------


@dataclass
class RateFunction:
    """Legendre transform ``x -> sup_{theta >= 0} (theta x - Lambda(theta))`` on a grid."""

    theta_grid: np.ndarray
    logmgf_values: np.ndarray
    logmgf: object = field(repr=False, default=None)
    mean: float = math.nan
    degenerate_value: float | None = None

    def __call__(self, x: float) -> float:
        if self.degenerate_value is not None:
            return 0.0 if x == self.degenerate_value else math.inf
        vals = self.theta_grid * x - self.logmgf_values
        k = int(np.argmax(vals))
        best = max(0.0, float(vals[k]))
        if k == 0 or self.logmgf is None:
            return best
        # polish the grid maximiser on the neighbouring grid cells
        a = self.theta_grid[k - 1]
        b = self.theta_grid[min(k + 1, len(self.theta_grid) - 1)]
        res = optimize.minimize_scalar(lambda th: -(th * x - self.logmgf(th)),
                                       bounds=(a, b), method="bounded",
                                       options={"xatol": 1e-12 * max(1.0, b)})
        if res.success and math.isfinite(res.fun):
            best = max(best, -float(res.fun))
        return best


def _geometric_grid(theta_max: float, size: int = 64) -> np.ndarray:
    return np.concatenate([[0.0], np.geomspace(theta_max * 1e-4, theta_max, size)])


def rate_function(source, size: int = 64, min_effective: float = 10.0) -> RateFunction:
    """Rate function of a distribution (analytic) or of a sample (empirical).

    Analytic laws use theta up to just below the MGF's abscissa of
    convergence (capped at 50).  Samples use theta up to the largest value
    at which the exponential weights keep an effective sample size of at
    least ``min_effective``.
    """
    if isinstance(source, DistributionSpec):
        lam = lambda th: log_mgf(source, th)
        if source.kind == "exponential":
            theta_max = source.param * (1 - 1e-9)
        else:
            theta_max = 50.0 / max(source.mean(), 1e-12)
        grid = _geometric_grid(theta_max, size)
        vals = np.array([lam(t) for t in grid])
        if source.kind == "constant" or (source.kind == "bernoulli" and source.param in (0.0, 1.0)):
            return RateFunction(grid, vals, lam, source.mean(), degenerate_value=source.mean())
        return RateFunction(grid, vals, lam, source.mean())
    x = np.asarray(source, dtype=np.float64)
    if len(x) == 0:
        raise ValueError("samples must be nonempty")
    if np.all(x == x[0]):
        return RateFunction(np.zeros(1), np.zeros(1), None, float(x[0]), degenerate_value=float(x[0]))
    spread = float(x.max() - x.min())
    theta_max = _effective_theta_cap(x, min_effective, 50.0 / spread)
    lam = lambda th: empirical_log_mgf(x, th)
    grid = _geometric_grid(theta_max, size)
    return RateFunction(grid, np.array([lam(t) for t in grid]), lam, float(x.mean()))


def _effective_theta_cap(x: np.ndarray, min_effective: float, hi: float) -> float:
    def ess(th):
        w = np.exp(th * (x - x.max()))
        return w.sum() ** 2 / (w * w).sum()

    if ess(hi) >= min_effective:
        return hi
    lo = 0.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if ess(mid) >= min_effective:
            lo = mid
        else:
            hi = mid
    return lo


def cramer_rate(source, x: float, size: int = 64) -> float:
    """``Lambda*(x)`` from samples or from an analytic DistributionSpec."""
    if x < 0:
        raise ValueError("x must be nonnegative")
    return rate_function(source, size)(x)


@dataclass(frozen=True)
class TailBound:
    value: float
    vacuous: bool
    divergent: bool


def chebyshev_tail_bound(dist: DistributionSpec, l: int, epsilon: float, H: float, theta: float) -> TailBound:
    """``exp(-H (theta eps / 2 - l Lambda(theta) / H))`` for a sum of l capacities."""
    if theta < 0:
        raise ValueError("theta must be nonnegative")
    lam = log_mgf(dist, theta)
    if not math.isfinite(lam):
        return TailBound(math.inf, True, True)
    exponent = -H * theta * epsilon / 2 + l * lam
    value = math.exp(exponent) if exponent < 700 else math.inf
    return TailBound(value, value >= 1, False)


# -- pinned boundary and crossing paths ----------------------------------------------


@dataclass
class PinnedWitness:
    edges: list[tuple[tuple[int, ...], tuple[int, ...]]]
    edge_ids: np.ndarray
    K: int
    x0: tuple


def witness_size_bound(d: int, zeta) -> int:
    """Number of Z^d edges whose midpoint lies within ``zeta/2 + 1/2`` of a point.

    Counted around the worst-placed centre among a fine grid of offsets in
    the unit cube, this bounds the size of any edge set contained in a ball
    of diameter zeta.
    """
    r = float(zeta) / 2 + 0.5
    best = 0
    span = int(math.ceil(r)) + 1
    offsets = np.linspace(0, 1, 5)
    axes = np.arange(-span, span + 1)
    pts = np.stack(np.meshgrid(*([axes] * d), indexing="ij"), axis=-1).reshape(-1, d).astype(float)
    mids = np.concatenate([pts + 0.5 * np.eye(d)[c] for c in range(d)])
    for off in np.stack(np.meshgrid(*([offsets] * d), indexing="ij"), axis=-1).reshape(-1, d):
        best = max(best, int((np.linalg.norm(mids - off, axis=1) <= r + 1e-12).sum()))
    return best


def pinned_boundary_witness(spec: CylinderSpec, x0=None, zeta=None,
                            graph: LatticeGraph | None = None) -> PinnedWitness:
    """A shortest lattice path from the lower to the upper half boundary near ``x0``.

    Every edge of the path lies in the ball of diameter zeta about x0, a
    point of the boundary of nA (default: its corner).
    """
    d = spec.d
    zeta = Fraction(2 * d) if zeta is None else Fraction(zeta)
    if any(w < zeta for w in spec.base.widths()) or 2 * spec.height < zeta:
        raise TooSmallCylinderError("cylinder side lengths must be at least zeta")
    graph = build_cylinder(spec) if graph is None else graph
    x0 = np.array([float(c) for c in (x0 if x0 is not None else spec.base.origin())])
    r = float(zeta) / 2
    near = np.linalg.norm(graph.vertices - x0, axis=1) <= r - 1e-12
    e = graph.edges
    ok = near[e[:, 0]] & near[e[:, 1]]
    V = graph.num_vertices
    sub = e[ok]
    adj = sparse.coo_matrix((np.ones(len(sub)), (sub[:, 0], sub[:, 1])), shape=(V, V)).tocsr()
    starts = np.flatnonzero(graph.lower & near)
    ends = set(np.flatnonzero(graph.upper & near).tolist())
    if len(starts) == 0 or not ends:
        raise TooSmallCylinderError("no half-boundary vertex near x0")
    dist, pred = csgraph.shortest_path(adj, directed=False, unweighted=True, indices=starts,
                                       return_predecessors=True)
    best = None
    for row, s in enumerate(starts):
        for t in ends:
            if math.isfinite(dist[row, t]) and (best is None or dist[row, t] < best[0]):
                best = (dist[row, t], row, t)
    if best is None:
        raise TooSmallCylinderError("half boundaries are not joined inside the ball")
    _, row, t = best
    path = [t]
    while pred[row, path[-1]] >= 0:
        path.append(int(pred[row, path[-1]]))
    path.reverse()
    pairs = list(zip(path[:-1], path[1:]))
    ids = graph.edge_index(np.array([p[0] for p in pairs]), np.array([p[1] for p in pairs]))
    edges = [tuple(sorted((tuple(int(c) for c in graph.vertices[a]),
                           tuple(int(c) for c in graph.vertices[b])))) for a, b in pairs]
    return PinnedWitness(edges, ids, witness_size_bound(d, zeta), tuple(x0.tolist()))


def disjoint_crossing_paths(spec: CylinderSpec, K_margin: float = 1.0,
                            graph: LatticeGraph | None = None) -> list[list[int]]:
    """Edge-disjoint paths from the lower to the upper half boundary near nA.

    Only edges whose endpoints lie within ``K_margin * n`` of nA are used;
    a unit-capacity maximal flow on that subgraph is decomposed into paths,
    so the count is the largest possible in the restricted region.  Paths
    are returned as lists of edge ids.
    """
    graph = build_cylinder(spec) if graph is None else graph
    coords = CylinderCoords(spec)
    R = coords.numerators(graph.vertices)
    lim = Fraction(K_margin).limit_denominator(10**6) * spec.n
    near = coords.in_box(R, [Fraction(0)] * (spec.d - 1) + [-lim], list(spec.base.widths()) + [lim])
    usable = (near[graph.edges[:, 0]] & near[graph.edges[:, 1]]).astype(np.int64)
    if not (graph.upper & near).any() or not (graph.lower & near).any():
        return []
    res = max_flow(graph, usable, graph.lower & near, graph.upper & near)
    return _decompose_paths(graph, res, graph.lower, graph.upper)


def _decompose_paths(graph: LatticeGraph, res: FlowResult, sources, sinks) -> list[list[int]]:
    """Split an integral unit-capacity flow into edge-disjoint source-to-sink paths."""
    o = res.stream.orientation
    out_arcs: dict[int, list[tuple[int, int]]] = {}
    for e in np.flatnonzero(res.stream.g > 0):
        a, b = (int(x) for x in graph.edges[e])
        if o[e] < 0:
            a, b = b, a
        out_arcs.setdefault(a, []).append((int(e), b))
    paths = []
    for s in np.flatnonzero(sources).tolist():
        while out_arcs.get(s):
            path, verts, u = [], [s], s
            while not (sinks[u] and path):
                if not out_arcs.get(u):
                    path = []
                    break
                e, v = out_arcs[u].pop()
                if sources[v]:
                    path, verts = [], [v]
                elif v in verts:
                    k = verts.index(v)
                    path, verts = path[:k], verts[:k + 1]
                else:
                    path.append(e)
                    verts.append(v)
                u = v
            if path:
                paths.append(path)
    return paths
