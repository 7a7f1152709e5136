"""Lattice cylinders: exact construction, edge sets and boundary vertex sets.

A cylinder is ``cyl(nA, h) = {x + t v : x in nA, |t| <= h}`` where ``nA`` is a
(d-1)-dimensional box with a rational anchor, a rational orthogonal frame and
rational Euclidean side lengths, and ``v`` is the unit vector along an integer
direction.  Membership of lattice points is decided exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from functools import cached_property, reduce
from typing import Iterable, Sequence

import mpmath
import numpy as np

from .exact import (
    Surd,
    as_fraction,
    ceil_surd,
    dot,
    format_fraction,
    format_vector,
    parse_vector,
)


class InvalidSpecError(ValueError):
    """Raised for degenerate or inconsistent cylinder specifications."""


class EmptyGraphError(ValueError):
    """Raised when a cylinder contains no lattice point."""


def _lcm(values: Iterable[int]) -> int:
    return reduce(lambda a, b: a * b // math.gcd(a, b), values, 1)


def _primitive(vec: Sequence[Fraction]) -> tuple[int, ...]:
    """Smallest integer vector with the same direction as ``vec``."""
    scale = _lcm(Fraction(x).denominator for x in vec)
    ints = [int(Fraction(x) * scale) for x in vec]
    g = reduce(math.gcd, (abs(x) for x in ints), 0)
    return tuple(x // g for x in ints)


@dataclass(frozen=True)
class Direction:
    """Integer direction normal to the cylinder basis (gcd of components is 1)."""

    v_int: tuple[int, ...]

    def __post_init__(self):
        v = tuple(int(x) for x in self.v_int)
        object.__setattr__(self, "v_int", v)
        if len(v) < 2:
            raise InvalidSpecError("dimension must be at least 2")
        if not any(v):
            raise InvalidSpecError("normal direction must be nonzero")
        if reduce(math.gcd, (abs(x) for x in v), 0) != 1:
            raise InvalidSpecError(f"normal {v} is not primitive (gcd != 1)")

    @property
    def d(self) -> int:
        return len(self.v_int)

    @property
    def norm_sq(self) -> int:
        return sum(x * x for x in self.v_int)

    def unit(self) -> tuple[Surd, ...]:
        """Exact unit normal ``v_int / |v_int|``."""
        return tuple(Surd.root(Fraction(x, self.norm_sq), self.norm_sq) for x in self.v_int)

    def negated(self) -> "Direction":
        return Direction(tuple(-x for x in self.v_int))


def orthogonal_frame(v_int: Sequence[int]) -> tuple[tuple[Fraction, ...], ...]:
    """A rational orthogonal basis of the hyperplane normal to ``v_int``.

    Gram-Schmidt over the rationals on the standard basis vectors, dropping
    the ones that become dependent.  Axis-aligned normals give axis-aligned
    frames.
    """
    d = len(v_int)
    basis = [tuple(Fraction(x) for x in v_int)]
    frame: list[tuple[Fraction, ...]] = []
    for i in range(d):
        w = [Fraction(int(i == j)) for j in range(d)]
        for b in basis:
            coef = dot(w, b) / dot(b, b)
            w = [wi - coef * bi for wi, bi in zip(w, b)]
        if any(w):
            vec = tuple(Fraction(x) for x in _primitive(w))
            basis.append(vec)
            frame.append(vec)
        if len(frame) == d - 1:
            break
    return tuple(frame)


@dataclass(frozen=True)
class Hyperrectangle:
    """The box ``n*A``: ``anchor`` is the corner of A (before scaling by n).

    Side k of A runs from the anchor along ``frame[k]`` for Euclidean length
    ``side_lengths[k]``.  Frame vectors only give directions; their own
    lengths are irrelevant.
    """

    anchor: tuple[Fraction, ...]
    frame: tuple[tuple[Fraction, ...], ...]
    side_lengths: tuple[Fraction, ...]
    scale: int = 1

    def __post_init__(self):
        anchor = tuple(as_fraction(x) for x in self.anchor)
        frame = tuple(tuple(as_fraction(x) for x in f) for f in self.frame)
        lengths = tuple(as_fraction(x) for x in self.side_lengths)
        object.__setattr__(self, "anchor", anchor)
        object.__setattr__(self, "frame", frame)
        object.__setattr__(self, "side_lengths", lengths)
        object.__setattr__(self, "scale", int(self.scale))
        d = len(anchor)
        if len(frame) != d - 1 or len(lengths) != d - 1:
            raise InvalidSpecError("need d-1 frame vectors and d-1 side lengths")
        if any(len(f) != d for f in frame):
            raise InvalidSpecError("frame vectors must have length d")
        if any(not any(f) for f in frame):
            raise InvalidSpecError("zero frame vector")
        for i in range(d - 1):
            for j in range(i + 1, d - 1):
                if dot(frame[i], frame[j]) != 0:
                    raise InvalidSpecError("frame vectors are not orthogonal")
        if any(L <= 0 for L in lengths):
            raise InvalidSpecError("side lengths must be positive (zero-area base)")
        if self.scale < 1:
            raise InvalidSpecError("scale n must be a positive integer")

    @property
    def d(self) -> int:
        return len(self.anchor)

    def area(self) -> Fraction:
        """Hausdorff measure H^{d-1}(nA), exact."""
        out = Fraction(self.scale) ** (self.d - 1)
        for L in self.side_lengths:
            out *= L
        return out

    def widths(self) -> tuple[Fraction, ...]:
        return tuple(self.scale * L for L in self.side_lengths)

    def origin(self) -> tuple[Fraction, ...]:
        """Corner of nA in R^d."""
        return tuple(self.scale * x for x in self.anchor)


@dataclass(frozen=True)
class HeightRule:
    """Named rule n -> h(n).

    ``fixed``: h(n) = c.  ``power``: h(n) = ceil(c * n**alpha), alpha in
    {0, 1/2, 1, 2}.  ``log``: h(n) = ceil(c * log(n + 1)).
    """

    kind: str
    c: Fraction
    alpha: Fraction = Fraction(0)

    def __post_init__(self):
        object.__setattr__(self, "c", as_fraction(self.c))
        object.__setattr__(self, "alpha", as_fraction(self.alpha))
        if self.kind not in ("fixed", "power", "log"):
            raise InvalidSpecError(f"unknown height rule {self.kind!r}")
        if self.kind == "fixed":
            if self.c < 0:
                raise InvalidSpecError("fixed height must be nonnegative")
        elif self.c <= 0:
            raise InvalidSpecError("height rule constant must be positive")
        if self.kind == "power" and self.alpha not in (0, Fraction(1, 2), 1, 2):
            raise InvalidSpecError("power rule exponent must be one of 0, 1/2, 1, 2")

    def __call__(self, n: int) -> Fraction:
        if self.kind == "fixed":
            return self.c
        if self.kind == "log":
            with mpmath.workdps(50):
                return Fraction(int(mpmath.ceil(mpmath.mpf(self.c.numerator) / self.c.denominator
                                                * mpmath.log(n + 1))))
        if self.alpha == Fraction(1, 2):
            return Fraction(ceil_surd(Surd.root(self.c, n)))
        return Fraction(math.ceil(self.c * Fraction(n) ** int(self.alpha)))

    def param_text(self) -> str:
        if self.kind == "power":
            return f"{format_fraction(self.c)},{format_fraction(self.alpha)}"
        return format_fraction(self.c)

    @classmethod
    def parse(cls, kind: str, param: str) -> "HeightRule":
        parts = parse_vector(param)
        if kind == "power":
            if len(parts) != 2:
                raise InvalidSpecError("power height rule needs 'c,alpha'")
            return cls("power", parts[0], parts[1])
        if len(parts) != 1:
            raise InvalidSpecError(f"{kind} height rule takes one parameter")
        return cls(kind, parts[0])


_SPEC_KEYS = ("dim", "normal", "anchor", "lengths", "n", "height_rule", "height_param")


@dataclass(frozen=True)
class CylinderSpec:
    """``cyl(nA, h)`` for a base box, a normal direction and a height.

    When ``height_rule`` is set the spec describes a family; :meth:`at`
    instantiates the member at scale n with height h(n).
    """

    base: Hyperrectangle
    normal: Direction
    height: Fraction
    height_rule: HeightRule | None = None

    def __post_init__(self):
        object.__setattr__(self, "height", as_fraction(self.height))
        if self.height < 0:
            raise InvalidSpecError("height must be nonnegative")
        if self.base.d != self.normal.d:
            raise InvalidSpecError("base and normal dimensions differ")
        for f in self.base.frame:
            if dot(f, self.normal.v_int) != 0:
                raise InvalidSpecError("frame vector not orthogonal to the normal")

    @property
    def d(self) -> int:
        return self.base.d

    @property
    def n(self) -> int:
        return self.base.scale

    def area(self) -> Fraction:
        return self.base.area()

    def at(self, n: int) -> "CylinderSpec":
        height = self.height_rule(n) if self.height_rule is not None else self.height
        return replace(self, base=replace(self.base, scale=n), height=height)

    def translated(self, z: Sequence[int]) -> "CylinderSpec":
        """Translate the cylinder (at its current scale) by an integer vector."""
        shift = tuple(Fraction(int(zi), self.n) for zi in z)
        anchor = tuple(a + s for a, s in zip(self.base.anchor, shift))
        return replace(self, base=replace(self.base, anchor=anchor))

    def flipped(self) -> "CylinderSpec":
        return replace(self, normal=self.normal.negated())

    def is_straight(self) -> bool:
        return sum(1 for x in self.normal.v_int if x) == 1

    @classmethod
    def straight(cls, d: int = 2, lengths: Sequence = None, n: int = 1, height=None,
                 height_rule: HeightRule | None = None, anchor: Sequence = None) -> "CylinderSpec":
        """Base ``prod [0, L_k] x {0}`` normal to the last axis."""
        lengths = lengths if lengths is not None else [1] * (d - 1)
        anchor = anchor if anchor is not None else [0] * d
        frame = tuple(tuple(Fraction(int(i == k)) for i in range(d)) for k in range(d - 1))
        normal = Direction(tuple(int(i == d - 1) for i in range(d)))
        base = Hyperrectangle(tuple(anchor), frame, tuple(lengths), n)
        return cls._with_height(base, normal, height, height_rule)

    @classmethod
    def tilted(cls, normal: Sequence[int], lengths: Sequence = None, n: int = 1, height=None,
               height_rule: HeightRule | None = None, anchor: Sequence = None) -> "CylinderSpec":
        direction = Direction(tuple(normal))
        d = direction.d
        lengths = lengths if lengths is not None else [1] * (d - 1)
        anchor = anchor if anchor is not None else [0] * d
        base = Hyperrectangle(tuple(anchor), orthogonal_frame(direction.v_int), tuple(lengths), n)
        return cls._with_height(base, direction, height, height_rule)

    @classmethod
    def _with_height(cls, base, normal, height, rule):
        if height is None:
            if rule is None:
                raise InvalidSpecError("need a height or a height rule")
            height = rule(base.scale)
        return cls(base, normal, as_fraction(height), rule)

    # -- flat key-value serialization -------------------------------------

    def to_text(self) -> str:
        lines = [
            f"dim = {self.d}",
            f"normal = {format_vector(self.normal.v_int)}",
            f"anchor = {format_vector(self.base.anchor)}",
        ]
        for k, f in enumerate(self.base.frame, start=1):
            lines.append(f"frame_{k} = {format_vector(f)}")
        lines.append(f"lengths = {format_vector(self.base.side_lengths)}")
        lines.append(f"n = {self.n}")
        rule = self.height_rule or HeightRule("fixed", self.height)
        lines.append(f"height_rule = {rule.kind}")
        lines.append(f"height_param = {rule.param_text()}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_mapping(cls, values: dict[str, str]) -> "CylinderSpec":
        try:
            d = int(values["dim"])
            normal = Direction(tuple(int(x) for x in parse_vector(values["normal"])))
            anchor = parse_vector(values.get("anchor", ",".join(["0"] * d)))
            frame_keys = [f"frame_{k}" for k in range(1, d)]
            if all(k in values for k in frame_keys):
                frame = tuple(parse_vector(values[k]) for k in frame_keys)
            elif any(k in values for k in frame_keys):
                raise InvalidSpecError("either all or none of the frame_i keys must be given")
            else:
                frame = orthogonal_frame(normal.v_int)
            lengths = parse_vector(values.get("lengths", ",".join(["1"] * (d - 1))))
            n = int(values.get("n", "1"))
            rule = HeightRule.parse(values.get("height_rule", "power"),
                                    values.get("height_param", "1,1"))
        except KeyError as exc:
            raise InvalidSpecError(f"missing key {exc.args[0]!r}") from None
        except (TypeError, ValueError, ZeroDivisionError) as exc:
            if isinstance(exc, InvalidSpecError):
                raise
            raise InvalidSpecError(str(exc)) from None
        if len(normal.v_int) != d or len(anchor) != d:
            raise InvalidSpecError("vector lengths disagree with dim")
        base = Hyperrectangle(anchor, frame, lengths, n)
        rule_or_none = None if rule.kind == "fixed" else rule
        return cls(base, normal, rule(n), rule_or_none)

    @classmethod
    def from_text(cls, text: str) -> "CylinderSpec":
        return cls.from_mapping(parse_key_values(text))


def parse_key_values(text: str) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidSpecError(f"line {lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key in out:
            raise InvalidSpecError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


# -- exact coordinates -------------------------------------------------------


def _sign(x: np.ndarray) -> np.ndarray:
    return (x > 0).astype(np.int64) - (x < 0).astype(np.int64)


def _sign_sub_root(A: np.ndarray, B: int, G: int) -> np.ndarray:
    """Elementwise sign of ``A - B*sqrt(G)`` for integer arrays A."""
    s = math.isqrt(G)
    if s * s == G:
        return _sign(A - B * s)
    if B == 0:
        return _sign(A)
    big = 1 << 62
    if A.dtype != object and (int(np.abs(A).max(initial=0)) ** 2 >= big or B * B * G >= big):
        A = A.astype(object)
    A2 = A * A
    B2G = B * B * G
    if B > 0:
        return np.where(A <= 0, -1, _sign(A2 - B2G)).astype(np.int64)
    return np.where(A >= 0, 1, _sign(B2G - A2)).astype(np.int64)


class CylinderCoords:
    """Exact orthonormal coordinates ``(a_1, ..., a_{d-1}, t)`` attached to a spec.

    For an integer point x, coordinate k equals ``R_k / (D * sqrt(G_k))`` with
    ``R_k = (D*x - D*origin) . g_k`` an integer, ``g_k`` the primitive integer
    axis and ``G_k = |g_k|^2``.  The last axis is the normal.
    """

    def __init__(self, spec: CylinderSpec):
        self.spec = spec
        self.d = spec.d
        origin = spec.base.origin()
        self.D = _lcm(x.denominator for x in origin)
        self.DO = tuple(int(x * self.D) for x in origin)
        axes = [_primitive(f) for f in spec.base.frame] + [spec.normal.v_int]
        self.axes = np.array(axes, dtype=np.int64)
        self.G = [sum(x * x for x in ax) for ax in axes]
        self.widths = spec.base.widths()
        self.h = spec.height
        # g_k . origin shifts; kept as python ints
        self._shift = [sum(int(a) * o for a, o in zip(ax, self.DO)) for ax in axes]

    def numerators(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=np.int64).reshape(-1, self.d)
        R = (pts * self.D) @ self.axes.T
        return R - np.array(self._shift, dtype=np.int64)

    def compare(self, R_col: np.ndarray, k: int, c) -> np.ndarray:
        """Sign of (coordinate k) - c for each numerator in ``R_col``."""
        c = Fraction(c)
        return _sign_sub_root(R_col * c.denominator, c.numerator * self.D, self.G[k])

    def in_box(self, R: np.ndarray, lo: Sequence, hi: Sequence, strict: bool = False) -> np.ndarray:
        """Points whose coordinates lie in ``prod [lo_k, hi_k]`` (open if strict)."""
        mask = np.ones(len(R), dtype=bool)
        for k in range(self.d):
            a = self.compare(R[:, k], k, lo[k])
            b = self.compare(R[:, k], k, hi[k])
            if strict:
                mask &= (a > 0) & (b < 0)
            else:
                mask &= (a >= 0) & (b <= 0)
        return mask

    def contains(self, pts: np.ndarray) -> np.ndarray:
        R = self.numerators(pts)
        lo = [0] * (self.d - 1) + [-self.h]
        hi = list(self.widths) + [self.h]
        return self.in_box(R, lo, hi)

    def surd_coords(self, point: Sequence[int]) -> list[Surd]:
        R = self.numerators(np.asarray(point).reshape(1, -1))[0]
        return [Surd.root(Fraction(int(R[k]), self.D * self.G[k]), self.G[k]) for k in range(self.d)]

    def surd_step(self, delta: Sequence[int]) -> list[Surd]:
        """Coordinate increments for a move by the integer vector ``delta``."""
        out = []
        for k in range(self.d):
            num = int(np.dot(self.axes[k], np.asarray(delta, dtype=np.int64)))
            out.append(Surd.root(Fraction(num, self.G[k]), self.G[k]))
        return out

    def bounding_box(self, margin: Fraction = Fraction(0)) -> tuple[np.ndarray, np.ndarray]:
        """Integer bounds enclosing the cylinder enlarged by ``margin``."""
        origin = np.array([float(x) for x in self.spec.base.origin()])
        units = [self.axes[k] / math.sqrt(self.G[k]) for k in range(self.d)]
        corners = []
        hs = float(self.h) + float(margin)
        ranges = [(-float(margin), float(w) + float(margin)) for w in self.widths] + [(-hs, hs)]
        for choice in np.ndindex(*([2] * self.d)):
            p = origin.copy()
            for k, bit in enumerate(choice):
                p = p + ranges[k][bit] * units[k]
            corners.append(p)
        corners = np.array(corners)
        lo = np.floor(corners.min(axis=0)).astype(np.int64) - 1
        hi = np.ceil(corners.max(axis=0)).astype(np.int64) + 1
        return lo, hi


# -- graphs ------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class LatticeGraph:
    """Vertices and nearest-neighbour edges of Z^d inside a cylinder.

    Vertices are sorted lexicographically; ``edges[e] = (u, v)`` with
    ``u < v`` and rows sorted lexicographically.  The boolean tag arrays mark
    the upper/lower half boundaries and the top/bottom sets.
    """

    spec: CylinderSpec
    vertices: np.ndarray
    edges: np.ndarray
    upper: np.ndarray
    lower: np.ndarray
    top: np.ndarray
    bottom: np.ndarray
    _grid_lo: np.ndarray = field(repr=False)
    _grid_shape: tuple = field(repr=False)
    _keys: np.ndarray = field(repr=False)

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def _encode(self, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        rel = np.asarray(pts, dtype=np.int64).reshape(-1, self.spec.d) - self._grid_lo
        shape = np.array(self._grid_shape)
        inside = np.all((rel >= 0) & (rel < shape), axis=1)
        keys = np.ravel_multi_index(tuple(np.clip(rel, 0, shape - 1).T), self._grid_shape)
        return keys, inside

    def index_of(self, pts) -> np.ndarray:
        """Vertex indices of the given integer points, -1 where absent."""
        keys, inside = self._encode(pts)
        pos = np.searchsorted(self._keys, keys)
        pos = np.minimum(pos, len(self._keys) - 1)
        found = inside & (self._keys[pos] == keys)
        return np.where(found, pos, -1)

    @cached_property
    def _edge_keys(self) -> np.ndarray:
        return self.edges[:, 0] * self.num_vertices + self.edges[:, 1]

    def edge_index(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Edge indices for vertex-index pairs (either order), -1 where absent."""
        u = np.asarray(u, dtype=np.int64)
        v = np.asarray(v, dtype=np.int64)
        lo, hi = np.minimum(u, v), np.maximum(u, v)
        keys = lo * self.num_vertices + hi
        if self.num_edges == 0:
            return np.full(len(keys), -1)
        pos = np.minimum(np.searchsorted(self._edge_keys, keys), self.num_edges - 1)
        ok = (lo >= 0) & (self._edge_keys[pos] == keys)
        return np.where(ok, pos, -1)

    @cached_property
    def csr(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """``(start, neighbour, edge_id)`` adjacency in CSR form."""
        tails = np.concatenate([self.edges[:, 0], self.edges[:, 1]])
        heads = np.concatenate([self.edges[:, 1], self.edges[:, 0]])
        eids = np.concatenate([np.arange(self.num_edges)] * 2)
        order = np.lexsort((heads, tails))
        start = np.zeros(self.num_vertices + 1, dtype=np.int64)
        np.add.at(start, tails + 1, 1)
        return np.cumsum(start), heads[order], eids[order]

    def outside_neighbours(self, u: int) -> list[tuple[int, ...]]:
        """Lattice neighbours of vertex u that are not in the cylinder."""
        x = self.vertices[u]
        out = []
        for c in range(self.spec.d):
            for s in (-1, 1):
                y = x.copy()
                y[c] += s
                if self.index_of(y)[0] < 0:
                    out.append(tuple(int(t) for t in y))
        return sorted(out)

    def vertex_set(self, mask: np.ndarray) -> set[tuple[int, ...]]:
        return {tuple(int(t) for t in p) for p in self.vertices[mask]}


def edge_in_region(edge: Sequence[Sequence[int]], region: CylinderSpec) -> bool:
    """Whether the open segment between two lattice neighbours lies in the cylinder.

    The cylinder is closed and convex, so the open segment lies in it exactly
    when both endpoints do.
    """
    x, y = (np.asarray(p, dtype=np.int64) for p in edge)
    if x.shape != (region.d,) or y.shape != (region.d,) or int(np.abs(x - y).sum()) != 1:
        raise ValueError("edge endpoints must be nearest neighbours in Z^d")
    return bool(CylinderCoords(region).contains(np.stack([x, y])).all())


def build_cylinder(spec: CylinderSpec) -> LatticeGraph:
    coords = CylinderCoords(spec)
    d = spec.d
    lo, hi = coords.bounding_box()
    shape = tuple(int(s) for s in hi - lo + 1)
    grid = np.indices(shape).reshape(d, -1).T + lo
    inside = coords.contains(grid)
    if not inside.any():
        raise EmptyGraphError("cylinder contains no lattice point")
    vertices = grid[inside]
    keys = np.flatnonzero(inside)
    graph_stub = dict(_grid_lo=lo, _grid_shape=shape, _keys=keys)

    # neighbour lookups
    def lookup(pts):
        rel = pts - lo
        ok = np.all((rel >= 0) & (rel < np.array(shape)), axis=1)
        k = np.ravel_multi_index(tuple(np.clip(rel, 0, np.array(shape) - 1).T), shape)
        pos = np.minimum(np.searchsorted(keys, k), len(keys) - 1)
        return np.where(ok & (keys[pos] == k), pos, -1)

    eye = np.eye(d, dtype=np.int64)
    edge_rows = []
    outside = np.zeros(len(vertices), dtype=bool)
    nbr_index = {}
    for c in range(d):
        for s in (1, -1):
            idx = lookup(vertices + s * eye[c])
            nbr_index[(c, s)] = idx
            outside |= idx < 0
        fwd = nbr_index[(c, 1)]
        src = np.flatnonzero(fwd >= 0)
        edge_rows.append(np.stack([src, fwd[src]], axis=1))
    edges = np.concatenate(edge_rows) if edge_rows else np.zeros((0, 2), dtype=np.int64)
    edges = edges[np.lexsort((edges[:, 1], edges[:, 0]))].astype(np.int64)

    R = coords.numerators(vertices)
    side = coords.compare(R[:, d - 1], d - 1, 0)
    upper = (side > 0) & outside
    lower = (side < 0) & outside
    top = _face_set(coords, vertices, R, nbr_index, +1)
    bottom = _face_set(coords, vertices, R, nbr_index, -1)

    for arr in (vertices, edges, upper, lower, top, bottom):
        arr.setflags(write=False)
    return LatticeGraph(spec, vertices, edges, upper, lower, top, bottom, **graph_stub)


def _face_set(coords: CylinderCoords, vertices, R, nbr_index, sign: int) -> np.ndarray:
    """Vertices with an outside neighbour whose edge meets the face ``nA + sign*h*v``."""
    d = coords.d
    level = sign * coords.h
    has_out = np.zeros(len(vertices), dtype=bool)
    for idx in nbr_index.values():
        has_out |= idx < 0
    on_plane = coords.compare(R[:, d - 1], d - 1, level) == 0
    result = on_plane & has_out
    eye = np.eye(d, dtype=np.int64)
    # edges crossing the face plane from inside to outside
    for (c, s), idx in nbr_index.items():
        delta = s * eye[c]
        cand = np.flatnonzero((idx < 0) & ~result)
        if len(cand) == 0:
            continue
        Ry = coords.numerators(vertices[cand] + delta)
        beyond = sign * coords.compare(Ry[:, d - 1], d - 1, level) > 0
        step = coords.surd_step(delta)
        for v in cand[beyond]:
            if result[v]:
                continue
            a = coords.surd_coords(vertices[v])
            s_cross = (Surd.rational(level) - a[d - 1]) / step[d - 1]
            hit = True
            for k in range(d - 1):
                ak = a[k] + s_cross * step[k]
                if ak.sign() < 0 or (ak - coords.widths[k]).sign() > 0:
                    hit = False
                    break
            result[v] = hit
    return result


def boundary_half_sets(graph: LatticeGraph, spec: CylinderSpec | None = None):
    """``(A_1^h, A_2^h)`` as sets of integer points."""
    return graph.vertex_set(graph.upper), graph.vertex_set(graph.lower)


def top_bottom_sets(graph: LatticeGraph, spec: CylinderSpec | None = None):
    """``(T(A,h), B(A,h))`` as sets of integer points."""
    return graph.vertex_set(graph.top), graph.vertex_set(graph.bottom)
