"""Rotated checkerboard lattice, discrete domains and their boundary structure.

Squares carry integer coordinates ``(n, m)`` with ``n + m`` even and centre
``(delta / sqrt2) * (n + i m)``.  Black squares have both coordinates even,
white squares both odd.  Vertices ``(p, q)`` have ``p + q`` odd; the corners
of the square ``c`` are ``c + (1, 0)``, ``c + (0, 1)``, ``c + (-1, 0)`` and
``c + (0, -1)``, listed counter-clockwise.

Neighbouring squares differ by ``(+-1, +-1)``: the step ``(1, 1)`` is the
physical displacement ``delta * lam`` and ``(1, -1)`` is ``delta * lambar``.

Generators work in an axis-aligned *grid frame* in which the square ``(x, y)``
is the lattice square ``(n, m) = (x - y, x + y)``.  In that frame a square is
black iff ``x + y`` is even, it is B0 iff ``x`` and ``y`` are both even, B1
iff both odd, W0 iff ``x`` odd and ``y`` even, W1 iff ``x`` even and ``y`` odd.
"""
from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Iterable, NamedTuple, Optional, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_bipartite_matching

__all__ = [
    "SquareCoord", "VertexCoord", "Domain", "DomainError", "Corner", "CornerReport",
    "BoundaryArcPair", "PiecewiseClass", "classify_square", "is_black", "grid_to_square",
    "square_to_grid", "vertex_to_grid", "build_rectangle", "build_polyomino",
    "build_from_polygon", "build_odd_temperley", "build_temperley", "build_from_spec",
    "find_corners", "classify_piecewise_temperley", "boundary_arcs", "split_boundary",
    "random_domain", "random_odd_temperley", "is_tileable", "CORNER_OFFSETS", "NEIGHBOR_OFFSETS",
]


class SquareCoord(NamedTuple):
    n: int
    m: int


class VertexCoord(NamedTuple):
    p: int
    q: int


class DomainError(ValueError):
    """Invalid geometry or a violated precondition on a domain."""


# counter-clockwise corner offsets of a square; edge k joins corners k and k+1
CORNER_OFFSETS = ((1, 0), (0, 1), (-1, 0), (0, -1))
# square across edge k
EDGE_NEIGHBOR = tuple(
    (CORNER_OFFSETS[k][0] + CORNER_OFFSETS[(k + 1) % 4][0],
     CORNER_OFFSETS[k][1] + CORNER_OFFSETS[(k + 1) % 4][1]) for k in range(4)
)
NEIGHBOR_OFFSETS = ((1, 1), (-1, -1), (1, -1), (-1, 1))


def classify_square(s) -> str:
    """Subtype B0, B1, W0 or W1 of a square."""
    n, m = s
    if (n + m) % 2:
        raise DomainError(f"invalid square coordinate {tuple(s)}: n+m must be even")
    if n % 2 == 0:
        return "B0" if (n + m) % 4 == 0 else "B1"
    return "W1" if (n + m) % 4 == 0 else "W0"


def is_black(s) -> bool:
    return s[0] % 2 == 0


def grid_to_square(x: int, y: int) -> tuple[int, int]:
    return (x - y, x + y)


def square_to_grid(s) -> tuple[int, int]:
    n, m = s
    return ((n + m) // 2, (m - n) // 2)


def vertex_to_grid(z) -> tuple[Fraction, Fraction]:
    p, q = z
    return (Fraction(p + q, 2), Fraction(q - p, 2))


def _corners(c):
    n, m = c
    return ((n + 1, m), (n, m + 1), (n - 1, m), (n, m - 1))


class Domain:
    """A finite simply connected set of lattice squares with mesh ``delta``.

    Immutable; every derived structure is computed lazily and cached.
    """

    def __init__(self, squares: Iterable, mesh=1, validate: bool = True):
        sq = frozenset((int(s[0]), int(s[1])) for s in squares)
        if not sq:
            raise DomainError("empty domain")
        for s in sq:
            if (s[0] + s[1]) % 2:
                raise DomainError(f"invalid square coordinate {s}: n+m must be even")
        if not (isinstance(mesh, (int, Fraction, float)) and mesh > 0):
            raise DomainError("mesh must be a positive number")
        self.squares = sq
        self.mesh = mesh
        if validate:
            self._validate()

    # -- identity ---------------------------------------------------------
    def __eq__(self, other):
        return isinstance(other, Domain) and self.squares == other.squares and self.mesh == other.mesh

    def __hash__(self):
        return hash((self.squares, self.mesh))

    def __repr__(self):
        return f"Domain({len(self.squares)} squares, {len(self.blacks)}B/{len(self.whites)}W, mesh={self.mesh})"

    def __contains__(self, s):
        return tuple(s) in self.squares

    def __len__(self):
        return len(self.squares)

    # -- validation -------------------------------------------------------
    def _validate(self):
        start = next(iter(self.squares))
        seen = {start}
        stack = [start]
        while stack:
            n, m = stack.pop()
            for dn, dm in NEIGHBOR_OFFSETS:
                t = (n + dn, m + dm)
                if t in self.squares and t not in seen:
                    seen.add(t)
                    stack.append(t)
        if len(seen) != len(self.squares):
            raise DomainError("domain is not edge-connected")
        # complement flood fill (edge adjacency) inside a padded bounding box
        ns = [s[0] for s in self.squares]
        ms = [s[1] for s in self.squares]
        lo_n, hi_n, lo_m, hi_m = min(ns) - 2, max(ns) + 2, min(ms) - 2, max(ms) + 2
        start = (lo_n, lo_m) if (lo_n + lo_m) % 2 == 0 else (lo_n + 1, lo_m)
        outside = {start}
        stack = [start]
        while stack:
            n, m = stack.pop()
            for dn, dm in NEIGHBOR_OFFSETS:
                t = (n + dn, m + dm)
                if (lo_n <= t[0] <= hi_n and lo_m <= t[1] <= hi_m
                        and t not in self.squares and t not in outside):
                    outside.add(t)
                    stack.append(t)
        for (n, m) in self.squares:
            for dn, dm in NEIGHBOR_OFFSETS:
                t = (n + dn, m + dm)
                if t not in self.squares and t not in outside:
                    raise DomainError("domain is not simply connected")
        if len(self.boundary_walk) != len(self._boundary_edge_set):
            raise DomainError("domain is not simply connected")

    # -- colour classes ---------------------------------------------------
    @cached_property
    def blacks(self) -> tuple:
        return tuple(sorted(s for s in self.squares if s[0] % 2 == 0))

    @cached_property
    def whites(self) -> tuple:
        return tuple(sorted(s for s in self.squares if s[0] % 2))

    @property
    def is_balanced(self) -> bool:
        return len(self.blacks) == len(self.whites)

    @property
    def is_odd(self) -> bool:
        return len(self.blacks) == len(self.whites) + 1

    @cached_property
    def boundary_blacks(self) -> tuple:
        """Black squares outside the domain adjacent to a white square inside."""
        out = set()
        for n, m in self.whites:
            for dn, dm in NEIGHBOR_OFFSETS:
                t = (n + dn, m + dm)
                if t not in self.squares:
                    out.add(t)
        return tuple(sorted(out))

    @cached_property
    def boundary_whites(self) -> tuple:
        out = set()
        for n, m in self.blacks:
            for dn, dm in NEIGHBOR_OFFSETS:
                t = (n + dn, m + dm)
                if t not in self.squares:
                    out.add(t)
        return tuple(sorted(out))

    @cached_property
    def closed_blacks(self) -> frozenset:
        return frozenset(self.blacks) | frozenset(self.boundary_blacks)

    @cached_property
    def closed_whites(self) -> frozenset:
        return frozenset(self.whites) | frozenset(self.boundary_whites)

    @cached_property
    def interior_boundary(self) -> tuple:
        """Squares of the domain having at least one side on the boundary."""
        return tuple(sorted({c for c, _ in self._boundary_edge_set}))

    # -- vertices and edges -----------------------------------------------
    @cached_property
    def vertices(self) -> tuple:
        vs = set()
        for c in self.squares:
            vs.update(_corners(c))
        return tuple(sorted(vs))

    @cached_property
    def vertex_set(self) -> frozenset:
        return frozenset(self.vertices)

    @cached_property
    def edges(self) -> tuple:
        """Undirected vertex-vertex edges as sorted pairs."""
        es = set()
        for c in self.squares:
            cs = _corners(c)
            for k in range(4):
                a, b = cs[k], cs[(k + 1) % 4]
                es.add((a, b) if a < b else (b, a))
        return tuple(sorted(es))

    @cached_property
    def _boundary_edge_set(self) -> frozenset:
        out = set()
        for c in self.squares:
            for k, (dn, dm) in enumerate(EDGE_NEIGHBOR):
                if (c[0] + dn, c[1] + dm) not in self.squares:
                    out.add((c, k))
        return frozenset(out)

    @cached_property
    def boundary_walk(self) -> tuple:
        """Counter-clockwise boundary walk as a tuple of (square, edge index).

        The domain lies to the left.  At pinch vertices the walk keeps to the
        current square, so each passage is recorded as its own convex turn.
        """
        edges = self._boundary_edge_set
        if not edges:
            return ()
        start = min(edges)
        walk = [start]
        cur = start
        for _ in range(len(edges) + 1):
            c, k = cur
            k1 = (k + 1) % 4
            if (c, k1) in edges:
                nxt = (c, k1)
            else:
                dn, dm = EDGE_NEIGHBOR[k1]
                c1 = (c[0] + dn, c[1] + dm)
                if (c1, k) in edges:
                    nxt = (c1, k)
                else:
                    dn2, dm2 = EDGE_NEIGHBOR[k]
                    c2 = (c1[0] + dn2, c1[1] + dm2)
                    nxt = (c2, (k - 1) % 4)
            if nxt == start:
                break
            walk.append(nxt)
            cur = nxt
        return tuple(walk)

    @cached_property
    def boundary_vertices(self) -> tuple:
        """Start vertices of the boundary walk edges, in walk order."""
        return tuple(_corners(c)[k] for c, k in self.boundary_walk)

    @cached_property
    def boundary_vertex_set(self) -> frozenset:
        return frozenset(self.boundary_vertices)

    @cached_property
    def interior_vertices(self) -> tuple:
        return tuple(v for v in self.vertices if v not in self.boundary_vertex_set)

    @property
    def z0(self):
        """Reference vertex: the start of the boundary walk."""
        return self.boundary_vertices[0]

    def squares_at(self, z) -> list:
        """Domain squares incident to vertex ``z``."""
        p, q = z
        return [s for s in ((p + 1, q), (p - 1, q), (p, q + 1), (p, q - 1)) if s in self.squares]

    # -- geometry ---------------------------------------------------------
    def position(self, coord) -> complex:
        s = float(self.mesh) / math.sqrt(2.0)
        return complex(coord[0] * s, coord[1] * s)

    def grid_position(self, coord) -> tuple[float, float]:
        """Axis-aligned position in units of the mesh (rotation of ``position``)."""
        a, b = coord
        return ((a + b) / 2 * float(self.mesh), (b - a) / 2 * float(self.mesh))

    def euler_characteristic(self) -> int:
        return len(self.vertices) - len(self.edges) + len(self.squares)

    # -- derived domains --------------------------------------------------
    def without(self, *squares) -> "Domain":
        rest = self.squares.difference(tuple(s) for s in squares)
        return Domain(rest, self.mesh)

    def with_mesh(self, mesh) -> "Domain":
        return Domain(self.squares, mesh, validate=False)

    # -- serialisation ----------------------------------------------------
    def to_json(self) -> str:
        mesh = self.mesh
        if isinstance(mesh, Fraction):
            mesh = str(mesh)
        return json.dumps({"mesh": mesh, "squares": [list(s) for s in sorted(self.squares)]})

    @classmethod
    def from_json(cls, text: str) -> "Domain":
        data = json.loads(text)
        mesh = data.get("mesh", 1)
        if isinstance(mesh, str):
            mesh = Fraction(mesh)
        return cls([tuple(s) for s in data["squares"]], mesh)


# -- generators -------------------------------------------------------------

def build_polyomino(cells: Iterable, mesh=1) -> Domain:
    """Domain from grid-frame cells ``(x, y)``."""
    return Domain([grid_to_square(x, y) for x, y in cells], mesh)


def build_rectangle(width: int, height: int, anchor=(0, 0), mesh=1) -> Domain:
    if width <= 0 or height <= 0:
        raise DomainError("rectangle dimensions must be positive")
    ax, ay = anchor
    return build_polyomino(((ax + i, ay + j) for i in range(width) for j in range(height)), mesh)


def build_from_polygon(vertices: Sequence, mesh=1) -> Domain:
    """Rasterise a rectilinear grid-frame polygon with integer vertices."""
    xs = [v[0] for v in vertices]
    ys = [v[1] for v in vertices]
    cells = []
    for x in range(min(xs), max(xs)):
        for y in range(min(ys), max(ys)):
            if _inside(vertices, x + 0.5, y + 0.5):
                cells.append((x, y))
    return build_polyomino(cells, mesh)


def _inside(poly, px, py) -> bool:
    inside = False
    k = len(poly)
    for i in range(k):
        x1, y1 = poly[i]
        x2, y2 = poly[(i + 1) % k]
        if (y1 > py) != (y2 > py):
            xc = x1 + (py - y1) * (x2 - x1) / (y2 - y1)
            if xc > px:
                inside = not inside
    return inside


def _corner_squares_all_b0(d: Domain) -> bool:
    return all(classify_square(c.square) == "B0" for c in find_corners(d).corners)


def build_odd_temperley(spec, mesh=1) -> Domain:
    """Odd Temperley domain: every corner square is B0.

    ``spec`` is either ``(width, height)`` in grid units (both odd, anchored
    at the origin), a dict with ``width``/``height``, a dict with
    ``coarse_cells`` (each coarse cell ``(i, j)`` contributes the 3x3 block
    of grid squares starting at ``(2i, 2j)``), or a ready ``Domain``.
    """
    if isinstance(spec, Domain):
        d = spec
    elif isinstance(spec, dict) and "coarse_cells" in spec:
        cells = set()
        for i, j in spec["coarse_cells"]:
            cells.update((2 * i + a, 2 * j + b) for a in range(3) for b in range(3))
        d = build_polyomino(cells, mesh)
    else:
        if isinstance(spec, dict):
            w, h = spec["width"], spec["height"]
            anchor = tuple(spec.get("anchor", (0, 0)))
        else:
            w, h = spec
            anchor = (0, 0)
        d = build_rectangle(w, h, anchor, mesh)
    if not _corner_squares_all_b0(d):
        raise DomainError("odd Temperley spec must have all corner squares of type B0")
    if not d.is_odd:
        raise DomainError("odd Temperley domain must have one more black than white square")
    return d


def build_temperley(spec, removed=None, mesh=1) -> Domain:
    """Temperley domain: an odd Temperley domain minus a boundary B0 square.

    By default the first corner square met along the boundary walk is removed.
    """
    d = build_odd_temperley(spec, mesh)
    if removed is None:
        removed = find_corners(d).corners[0].square
    removed = tuple(removed)
    if classify_square(removed) != "B0" or removed not in d.interior_boundary:
        raise DomainError("removed square must be a B0 square on the interior boundary")
    return d.without(removed)


def build_from_spec(spec: dict) -> Domain:
    """Build a domain from a generator spec dict (JSON-compatible)."""
    kind = spec.get("kind")
    mesh = spec.get("mesh", 1)
    if isinstance(mesh, str):
        mesh = Fraction(mesh)
    if kind == "rectangle":
        return build_rectangle(spec["width"], spec["height"], tuple(spec.get("anchor", (0, 0))), mesh)
    if kind == "odd_temperley":
        return build_odd_temperley(spec, mesh)
    if kind == "temperley":
        removed = spec.get("removed")
        return build_temperley(spec, tuple(removed) if removed else None, mesh)
    if kind == "polyomino":
        if "polygon" in spec:
            return build_from_polygon([tuple(v) for v in spec["polygon"]], mesh)
        return build_polyomino([tuple(c) for c in spec["cells"]], mesh)
    raise DomainError(f"unknown generator kind {kind!r}")


def is_tileable(d: Domain) -> bool:
    """Perfect matching existence via maximum bipartite matching."""
    if not d.is_balanced:
        return False
    widx = {w: i for i, w in enumerate(d.whites)}
    rows, cols = [], []
    for j, (n, m) in enumerate(d.blacks):
        for dn, dm in NEIGHBOR_OFFSETS:
            w = (n + dn, m + dm)
            if w in widx:
                rows.append(j)
                cols.append(widx[w])
    k = len(d.blacks)
    graph = csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(k, k))
    match = maximum_bipartite_matching(graph, perm_type="column")
    return bool(np.all(match >= 0))


def random_domain(rng: random.Random, max_squares: int = 12, min_squares: int = 2,
                  balanced: bool = True, tileable: bool = False, max_tries: int = 10000) -> Domain:
    """Random simply connected polyomino grown cell by cell in the grid frame."""
    for _ in range(max_tries):
        target = rng.randint(min_squares, max_squares)
        if balanced and target % 2:
            target -= 1 if target > min_squares else -1
        cells = {(0, 0)}
        frontier = [(0, 0)]
        while len(cells) < target:
            x, y = rng.choice(frontier)
            dx, dy = rng.choice(((1, 0), (-1, 0), (0, 1), (0, -1)))
            t = (x + dx, y + dy)
            if t not in cells:
                cells.add(t)
                frontier.append(t)
        try:
            d = build_polyomino(cells)
        except DomainError:
            continue
        if balanced and not d.is_balanced:
            continue
        if tileable and not is_tileable(d):
            continue
        return d
    raise DomainError("random_domain: no acceptable domain found")


def random_odd_temperley(rng: random.Random, max_coarse: int = 6, max_extent: int = 6) -> Domain:
    """Random odd Temperley domain as a union of overlapping 3x3 blocks."""
    for _ in range(10000):
        target = rng.randint(1, max_coarse)
        coarse = {(0, 0)}
        while len(coarse) < target:
            i, j = rng.choice(sorted(coarse))
            di, dj = rng.choice(((1, 0), (-1, 0), (0, 1), (0, -1)))
            t = (i + di, j + dj)
            if abs(t[0]) < max_extent and abs(t[1]) < max_extent:
                coarse.add(t)
        try:
            return build_odd_temperley({"coarse_cells": sorted(coarse)})
        except DomainError:
            continue
    raise DomainError("random_odd_temperley: no acceptable domain found")


# -- corners --------------------------------------------------------------

@dataclass(frozen=True)
class Corner:
    vertex: tuple
    color: str          # "black" | "white"
    convexity: str      # "convex" | "concave"
    square: tuple       # square filling the pi/2 wedge at the corner
    walk_index: int = 0  # index of the incoming boundary edge


@dataclass
class CornerReport:
    corners: list
    counts: dict = field(default_factory=dict)

    def count(self, color: str, convexity: str) -> int:
        return self.counts.get((color, convexity), 0)

    def lemma_holds(self) -> bool:
        """Both corner-count identities for balanced domains."""
        convex = self.count("white", "convex") + self.count("black", "convex")
        concave = self.count("white", "concave") + self.count("black", "concave")
        return (convex == concave + 4
                and self.count("white", "convex") == self.count("white", "concave") + 2
                and self.count("black", "convex") == self.count("black", "concave") + 2)


def find_corners(d: Domain) -> CornerReport:
    """All corners from one counter-clockwise boundary traversal."""
    walk = d.boundary_walk
    corners = []
    L = len(walk)
    for j in range(L):
        c, k = walk[j]
        c2, k2 = walk[(j + 1) % L]
        vertex = _corners(c)[(k + 1) % 4]
        if c2 == c:
            sq, conv = c, "convex"
        elif k2 == k:
            continue
        else:
            dn, dm = EDGE_NEIGHBOR[(k + 1) % 4]
            sq, conv = (c[0] + dn, c[1] + dm), "concave"
        color = "black" if is_black(sq) else "white"
        corners.append(Corner(vertex, color, conv, sq, j))
    counts: dict = {}
    for cr in corners:
        counts[(cr.color, cr.convexity)] = counts.get((cr.color, cr.convexity), 0) + 1
    return CornerReport(corners, counts)


@dataclass(frozen=True)
class PiecewiseClass:
    black_n: Optional[int]   # n for 2n-black-piecewise Temperley, else None
    white_m: Optional[int]   # m for 2m-white-piecewise Temperley, else None
    white_convex: int
    white_concave: int
    black_convex: int
    black_concave: int
    segment_types: tuple     # subtypes carried by each black Temperley segment


def _segment_types(d: Domain, rep: CornerReport, color: str, other: str) -> Optional[tuple]:
    """Subtypes of ``other``-coloured boundary squares between ``color`` corners."""
    walk = d.boundary_walk
    L = len(walk)
    cuts = sorted({cr.walk_index for cr in rep.corners if cr.color == color})
    if not cuts:
        return None
    out = []
    for a, b in zip(cuts, cuts[1:] + [cuts[0] + L]):
        kinds = set()
        for j in range(a + 1, b + 1):
            sq = walk[j % L][0]
            if ("black" if is_black(sq) else "white") == other:
                kinds.add(classify_square(sq))
        if len(kinds) > 1:
            return None
        out.append(next(iter(kinds)) if kinds else None)
    return tuple(out)


def classify_piecewise_temperley(d: Domain) -> PiecewiseClass:
    rep = find_corners(d)
    wc, wk = rep.count("white", "convex"), rep.count("white", "concave")
    bc, bk = rep.count("black", "convex"), rep.count("black", "concave")
    black_n = None
    segs = _segment_types(d, rep, "white", "black")
    if wc >= 2 and wk == wc - 2 and segs is not None:
        black_n = wc - 1
    white_m = None
    if bc >= 2 and bk == bc - 2 and _segment_types(d, rep, "black", "white") is not None:
        white_m = bc - 1
    return PiecewiseClass(black_n, white_m, wc, wk, bc, bk, segs or ())


# -- boundary arcs ----------------------------------------------------------

@dataclass(frozen=True)
class BoundaryArcPair:
    u0: tuple
    v0: tuple
    arc_u0v0: tuple         # vertices from u0's side midpoint to v0's, walk order
    arc_v0u0: tuple
    mid_u0: tuple           # midpoint of u0's boundary side, (p, q) as Fractions
    mid_v0: tuple


def _boundary_run(d: Domain, s) -> tuple[int, int]:
    """First and last walk index of the boundary sides of ``s`` (cyclically contiguous)."""
    if s not in d.squares:
        raise DomainError(f"square {s} is not in the domain")
    walk = d.boundary_walk
    L = len(walk)
    idx = [j for j, (c, _) in enumerate(walk) if c == s]
    if not idx:
        raise DomainError(f"square {s} is not on the interior boundary")
    first = next(j for j in idx if walk[(j - 1) % L][0] != s) if len(idx) < L else idx[0]
    n = 0
    while walk[(first + n) % L][0] == s and n < L:
        n += 1
    if n != len(idx):
        raise DomainError(f"square {s} meets the boundary in several separate passages")
    return first, (first + n - 1) % L


def split_boundary(d: Domain, s1, s2) -> BoundaryArcPair:
    """Split the boundary walk at the boundary sides of two squares.

    Each arc runs from the end of one square's boundary sides to the start
    of the other's, so a corner vertex of a marked corner square lies on
    neither arc.
    """
    s1, s2 = tuple(s1), tuple(s2)
    if s1 == s2:
        raise DomainError("the two marked squares must differ")
    f1, l1 = _boundary_run(d, s1)
    f2, l2 = _boundary_run(d, s2)
    verts = d.boundary_vertices
    L = len(verts)

    def arc(i, j):
        out = []
        t = (i + 1) % L
        while True:
            out.append(verts[t])
            if t == j:
                break
            t = (t + 1) % L
        return tuple(out)

    def mid(i):
        a, b = verts[i], verts[(i + 1) % L]
        return (Fraction(a[0] + b[0], 2), Fraction(a[1] + b[1], 2))

    return BoundaryArcPair(s1, s2, arc(l1, f2), arc(l2, f1), mid(f1), mid(f2))


def boundary_arcs(d: Domain, u0, v0) -> BoundaryArcPair:
    if not is_black(u0):
        raise DomainError("u0 must be black")
    if is_black(v0):
        raise DomainError("v0 must be white")
    return split_boundary(d, u0, v0)
