"""Conforming triangle meshes refined by newest-vertex bisection.

A triangle is stored as ``[v0, v1, v2]`` in counter-clockwise order.  Its
refinement edge is ``(v1, v2)`` and ``v0`` is its newest vertex, so
bisection puts the midpoint ``m`` of ``(v1, v2)`` into two children
``[m, v0, v1]`` and ``[m, v2, v0]`` whose refinement edges are the two
remaining edges of the parent.
"""
from __future__ import annotations

import enum
import math
from pathlib import Path

import numpy as np

__all__ = [
    "TriMesh2D",
    "DomainCase",
    "ClosureOverflow",
    "initial_mesh",
    "bisect2d",
    "uniform_refine",
    "tag_boundary",
    "read_mesh2d",
    "write_mesh2d",
    "BOUNDARY_TAGS",
]

BOUNDARY_TAGS = ("inflow", "outflow", "other")


class ClosureOverflow(RuntimeError):
    """The conformity closure marked more edges than the mesh can hold."""


def _edge(a, b):
    return (a, b) if a < b else (b, a)


class TriMesh2D:
    """Immutable conforming triangulation.

    Parameters
    ----------
    vertices : (n, 2) array_like
    triangles : (m, 3) array_like of int
        Counter-clockwise, refinement edge opposite the first vertex.
    boundary : dict
        Maps every boundary edge ``(i, j)`` with ``i < j`` to a tag from
        :data:`BOUNDARY_TAGS`.
    arc : tuple, optional
        ``(cx, cy, radius)``.  Boundary edges whose two end points lie on
        this circle are curved: their midpoints are pushed onto it when
        they get bisected.
    """

    __slots__ = ("_v", "_t", "_boundary", "_arc")

    def __init__(self, vertices, triangles, boundary, arc=None, *, check=True):
        v = np.array(vertices, dtype=float).reshape(-1, 2)
        t = np.array(triangles, dtype=np.int64).reshape(-1, 3)
        v.setflags(write=False)
        t.setflags(write=False)
        self._v = v
        self._t = t
        self._boundary = {_edge(int(a), int(b)): tag for (a, b), tag in boundary.items()}
        self._arc = None if arc is None else tuple(float(c) for c in arc)
        if check:
            self._validate()

    def _validate(self):
        if len(self._t) == 0:
            raise ValueError("mesh has no triangles")
        if self._t.min() < 0 or self._t.max() >= len(self._v):
            raise ValueError("triangle refers to a missing vertex")
        if np.any(self.areas <= 0):
            raise ValueError("triangles must be positively oriented")
        count = {}
        for tri in self._t:
            for e in self.triangle_edges(tri):
                count[e] = count.get(e, 0) + 1
        if any(c > 2 for c in count.values()):
            raise ValueError("an edge is shared by more than two triangles")
        outer = {e for e, c in count.items() if c == 1}
        if outer != set(self._boundary):
            raise ValueError("boundary tags must cover exactly the boundary edges")
        bad = set(self._boundary.values()) - set(BOUNDARY_TAGS)
        if bad:
            raise ValueError(f"unknown boundary tags {sorted(bad)}")

    @staticmethod
    def triangle_edges(tri):
        a, b, c = (int(x) for x in tri)
        # local edge i is opposite local vertex i
        return _edge(b, c), _edge(c, a), _edge(a, b)

    @property
    def vertices(self) -> np.ndarray:
        return self._v

    @property
    def triangles(self) -> np.ndarray:
        return self._t

    @property
    def boundary(self) -> dict:
        return dict(self._boundary)

    @property
    def arc(self):
        return self._arc

    @property
    def n_triangles(self) -> int:
        return len(self._t)

    def __len__(self):
        return len(self._t)

    def __eq__(self, other):
        if not isinstance(other, TriMesh2D):
            return NotImplemented
        return (np.array_equal(self._v, other._v) and np.array_equal(self._t, other._t)
                and self._boundary == other._boundary and self._arc == other._arc)

    def __hash__(self):
        return hash((self._v.tobytes(), self._t.tobytes()))

    def __repr__(self):
        return f"TriMesh2D({len(self._v)} vertices, {len(self._t)} triangles)"

    @property
    def areas(self) -> np.ndarray:
        p = self._v[self._t]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    @property
    def centroids(self) -> np.ndarray:
        return self._v[self._t].mean(axis=1)

    @property
    def diameters(self) -> np.ndarray:
        p = self._v[self._t]
        e = np.stack([p[:, 2] - p[:, 1], p[:, 0] - p[:, 2], p[:, 1] - p[:, 0]], axis=1)
        return np.linalg.norm(e, axis=2).max(axis=1)

    def min_angles(self) -> np.ndarray:
        p = self._v[self._t]
        out = np.full(len(p), np.inf)
        for i in range(3):
            u = p[:, (i + 1) % 3] - p[:, i]
            w = p[:, (i + 2) % 3] - p[:, i]
            c = np.einsum("ij,ij->i", u, w) / (np.linalg.norm(u, axis=1) * np.linalg.norm(w, axis=1))
            out = np.minimum(out, np.arccos(np.clip(c, -1, 1)))
        return out

    def edge_map(self) -> dict:
        """``{edge: [(triangle, local edge index), ...]}``."""
        m = {}
        for k, tri in enumerate(self._t):
            for i, e in enumerate(self.triangle_edges(tri)):
                m.setdefault(e, []).append((k, i))
        return m

    def is_conforming(self) -> bool:
        """Every edge lies in two triangles or is a tagged boundary edge, and
        no vertex sits in the interior of another triangle's edge."""
        em = self.edge_map()
        for e, owners in em.items():
            if len(owners) > 2 or (len(owners) == 1 and e not in self._boundary):
                return False
        # Euler characteristic of a simply connected triangulated disk
        nv, ne, nt = len(np.unique(self._t)), len(em), len(self._t)
        return nv - ne + nt == 1

    def is_arc_edge(self, e) -> bool:
        if self._arc is None or e not in self._boundary:
            return False
        cx, cy, r = self._arc
        p = self._v[list(e)]
        return bool(np.all(np.abs(np.hypot(p[:, 0] - cx, p[:, 1] - cy) - r) < 1e-12))


class DomainCase(enum.Enum):
    strip_pi3 = "strip_pi3"
    half_disk = "half_disk"
    unit_square = "unit_square"


def _orient(vertices, tris):
    """Make every triangle counter-clockwise with its longest edge opposite
    the first vertex."""
    v = np.asarray(vertices, dtype=float)
    out = []
    for tri in tris:
        a, b, c = tri
        p = v[[a, b, c]]
        d1, d2 = p[1] - p[0], p[2] - p[0]
        if d1[0] * d2[1] - d1[1] * d2[0] < 0:
            b, c = c, b
        tri = [a, b, c]
        lengths = [np.linalg.norm(v[tri[(i + 2) % 3]] - v[tri[(i + 1) % 3]]) for i in range(3)]
        i = int(np.argmax(lengths))
        out.append(tri[i:] + tri[:i])
    return out


def _boundary_edges(tris):
    count = {}
    for tri in tris:
        for e in TriMesh2D.triangle_edges(tri):
            count[e] = count.get(e, 0) + 1
    return [e for e, c in count.items() if c == 1]


def tag_boundary(vertices, triangles, beta, tol=1e-12) -> dict:
    """Tag boundary edges by the sign of ``beta . n`` at their midpoints."""
    v = np.asarray(vertices, dtype=float)
    tags = {}
    for tri in triangles:
        for i in range(3):
            a, b = int(tri[(i + 1) % 3]), int(tri[(i + 2) % 3])
            tags.setdefault(_edge(a, b), []).append((a, b))
    out = {}
    for e, owners in tags.items():
        if len(owners) != 1:
            continue
        a, b = owners[0]
        d = v[b] - v[a]
        n = np.array([d[1], -d[0]]) / np.hypot(*d)
        mid = 0.5 * (v[a] + v[b])
        bn = float(np.dot(np.asarray(beta(mid[None, :]), dtype=float).reshape(2), n))
        out[e] = "inflow" if bn < -tol else "outflow" if bn > tol else "other"
    return out


def _strip_tags(mid):
    x, y = mid
    if abs(y) < 1e-14:
        return "inflow"
    if abs(y - 1) < 1e-14:
        return "outflow"
    return "other"


def _half_disk_tags(mid):
    x, y = mid
    if abs(y) < 1e-14:
        return "inflow" if x < 0 else "outflow"
    return "other"


def _square_tags(mid):
    # velocity (y + 1, -x) enters through the west and north sides
    x, y = mid
    if abs(x) < 1e-14 or abs(y - 1) < 1e-14:
        return "inflow"
    return "outflow"


def _build(vertices, tris, tagger, arc=None):
    v = np.asarray(vertices, dtype=float)
    tris = _orient(v, tris)
    boundary = {e: tagger(0.5 * (v[e[0]] + v[e[1]])) for e in _boundary_edges(tris)}
    return TriMesh2D(v, tris, boundary, arc)


def initial_mesh(case) -> TriMesh2D:
    """Coarse starting mesh for one of the benchmark domains.

    ``strip_pi3`` is (0, 2) x (0, 1) with its bottom centre vertex at
    (pi/3, 0) and top centre vertex at (1, 1), so no bisection descendant
    has an edge on the line x = pi/3.  ``half_disk`` has vertices at
    x = -1, -0.5, 0, 0.5, 1 on the diameter and three more on the arc.
    ``unit_square`` is split along its diagonal.
    """
    case = DomainCase(case)
    if case is DomainCase.strip_pi3:
        v = [(0, 0), (math.pi / 3, 0), (2, 0), (0, 1), (1, 1), (2, 1)]
        tris = [(0, 1, 3), (1, 4, 3), (1, 2, 4), (2, 5, 4)]
        return _build(v, tris, _strip_tags)
    if case is DomainCase.half_disk:
        s = math.sqrt(0.5)
        v = [(-1, 0), (-0.5, 0), (0, 0), (0.5, 0), (1, 0),
             (s, s), (0, 1), (-s, s), (0, 0.4)]
        tris = [(0, 1, 7), (1, 8, 7), (1, 2, 8), (2, 3, 8),
                (3, 5, 8), (3, 4, 5), (8, 5, 6), (8, 6, 7)]
        return _build(v, tris, _half_disk_tags, arc=(0.0, 0.0, 1.0))
    v = [(0, 0), (1, 0), (1, 1), (0, 1)]
    return _build(v, [(0, 1, 2), (0, 2, 3)], _square_tags)


def bisect2d(mesh: TriMesh2D, marked, max_closure_factor: int = 20) -> TriMesh2D:
    """Bisect the marked triangles and restore conformity.

    Every marked triangle has its refinement edge split.  Any triangle that
    then has a split edge gets its own refinement edge split too, until no
    hanging vertex remains.  A triangle whose refinement edge and another
    edge are both split is bisected twice.
    """
    t = mesh.triangles
    marked = {int(k) for k in marked}
    if any(not 0 <= k < len(t) for k in marked):
        raise IndexError("invalid triangle id")
    if not marked:
        return mesh
    ref = [_edge(int(a), int(b)) for a, b in t[:, 1:]]
    em = mesh.edge_map()
    split = set()
    work = [ref[k] for k in marked]
    limit = max_closure_factor * len(t)
    while work:
        e = work.pop()
        if e in split:
            continue
        split.add(e)
        if len(split) > limit:
            raise ClosureOverflow(f"closure exceeded {limit} edges")
        for k, _ in em[e]:
            if ref[k] not in split:
                work.append(ref[k])

    verts = [tuple(p) for p in mesh.vertices]
    bnd = mesh.boundary
    mid = {}
    for e in sorted(split):
        a, b = e
        p = 0.5 * (mesh.vertices[a] + mesh.vertices[b])
        if mesh.is_arc_edge(e):
            cx, cy, r = mesh.arc
            d = p - (cx, cy)
            p = np.array([cx, cy]) + r * d / np.hypot(*d)
        m = len(verts)
        verts.append(tuple(p))
        mid[e] = m
        if e in bnd:
            tag = bnd.pop(e)
            bnd[_edge(a, m)] = tag
            bnd[_edge(m, b)] = tag

    out = []

    def refine(tri):
        v0, v1, v2 = tri
        e = _edge(v1, v2)
        if e not in mid:
            out.append(tri)
            return
        m = mid[e]
        refine((m, v0, v1))
        refine((m, v2, v0))

    for tri in t:
        refine(tuple(int(x) for x in tri))
    return TriMesh2D(np.array(verts), out, bnd, mesh.arc, check=False)


def uniform_refine(mesh: TriMesh2D, times: int = 1) -> TriMesh2D:
    for _ in range(times):
        mesh = bisect2d(mesh, range(mesh.n_triangles))
    return mesh


def write_mesh2d(mesh: TriMesh2D, path) -> None:
    """Write the text format::

        mesh2d [arc cx cy r]
        <vertex count>
        x y            (one line per vertex)
        <triangle count>
        i j k r        (r = local index of the refinement edge, always 0 here)
        <boundary edge count>
        i j tag
    """
    head = "mesh2d" if mesh.arc is None else "mesh2d arc " + " ".join(repr(c) for c in mesh.arc)
    lines = [head, str(len(mesh.vertices))]
    lines += [f"{x!r} {y!r}" for x, y in mesh.vertices.tolist()]
    lines.append(str(mesh.n_triangles))
    lines += [f"{i} {j} {k} 0" for i, j, k in mesh.triangles.tolist()]
    bnd = sorted(mesh.boundary.items())
    lines.append(str(len(bnd)))
    lines += [f"{a} {b} {tag}" for (a, b), tag in bnd]
    Path(path).write_text("\n".join(lines) + "\n")


def read_mesh2d(path) -> TriMesh2D:
    lines = [ln.split() for ln in Path(path).read_text().splitlines() if ln.strip()]
    if not lines or lines[0][0] != "mesh2d":
        raise ValueError("missing 'mesh2d' header")
    arc = None
    if len(lines[0]) == 5 and lines[0][1] == "arc":
        arc = tuple(float(c) for c in lines[0][2:])
    pos = 1

    def block(ncols):
        nonlocal pos
        n = int(lines[pos][0])
        rows = lines[pos + 1:pos + 1 + n]
        if len(rows) != n or any(len(r) != ncols for r in rows):
            raise ValueError(f"malformed block at line {pos + 1}")
        pos += 1 + n
        return rows

    verts = [(float(x), float(y)) for x, y in block(2)]
    tris = []
    for i, j, k, r in block(4):
        tri = [int(i), int(j), int(k)]
        r = int(r)
        if r not in (0, 1, 2):
            raise ValueError("refinement edge index must be 0, 1 or 2")
        tris.append(tri[r:] + tri[:r])
    bnd = {_edge(int(a), int(b)): tag for a, b, tag in block(3)}
    return TriMesh2D(verts, tris, bnd, arc)
