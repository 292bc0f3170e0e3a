"""One-dimensional interval meshes with bisection and coarsening.

Every element carries a *path*: the index of the root element it descends
from followed by the 0/1 choices taken at each bisection.  Two elements are
siblings when their paths differ only in the last entry, which is all the
history coarsening needs.
"""
from __future__ import annotations

import enum
from pathlib import Path

import numpy as np

__all__ = [
    "Mesh1D",
    "SpaceKind1D",
    "OutOfDomain",
    "bisect",
    "coarsen",
    "merge",
    "cut_position",
    "read_mesh",
    "write_mesh",
]


class OutOfDomain(ValueError):
    pass


class SpaceKind1D(enum.Enum):
    P0 = "p0"
    P1Discontinuous = "p1dg"
    P1Continuous = "s1"
    P1ContinuousZeroBC = "s10"

    def ndofs(self, mesh: "Mesh1D") -> int:
        ne = mesh.n_elements
        return {
            SpaceKind1D.P0: ne,
            SpaceKind1D.P1Discontinuous: 2 * ne,
            SpaceKind1D.P1Continuous: ne + 1,
            SpaceKind1D.P1ContinuousZeroBC: ne - 1,
        }[self]


class Mesh1D:
    """Immutable interval mesh.

    Parameters
    ----------
    nodes : array_like
        Strictly increasing node coordinates.
    paths : sequence of tuple, optional
        Refinement history, one path per element.  Fresh meshes use the
        element index as root.
    """

    __slots__ = ("_nodes", "_paths", "_next_root")

    def __init__(self, nodes, paths=None, next_root=None):
        x = np.array(nodes, dtype=float)
        if x.ndim != 1 or len(x) < 2:
            raise ValueError("a mesh needs at least two nodes")
        if not np.all(np.diff(x) > 0):
            raise ValueError("nodes must be strictly increasing")
        x.setflags(write=False)
        if paths is None:
            paths = tuple((i,) for i in range(len(x) - 1))
        paths = tuple(tuple(p) for p in paths)
        if len(paths) != len(x) - 1:
            raise ValueError("one history path per element required")
        if next_root is None:
            next_root = 1 + max(p[0] for p in paths)
        self._nodes = x
        self._paths = paths
        self._next_root = next_root

    @classmethod
    def uniform(cls, a, b, n):
        return cls(np.linspace(a, b, n + 1))

    @property
    def nodes(self) -> np.ndarray:
        return self._nodes

    @property
    def paths(self):
        return self._paths

    @property
    def n_elements(self) -> int:
        return len(self._nodes) - 1

    @property
    def h(self) -> np.ndarray:
        return np.diff(self._nodes)

    @property
    def elements(self) -> np.ndarray:
        n = self.n_elements
        return np.column_stack([np.arange(n), np.arange(1, n + 1)])

    def __len__(self):
        return self.n_elements

    def __eq__(self, other):
        if not isinstance(other, Mesh1D):
            return NotImplemented
        return (np.array_equal(self._nodes, other._nodes)
                and self._paths == other._paths)

    def __hash__(self):
        return hash((self._nodes.tobytes(), self._paths))

    def __repr__(self):
        return f"Mesh1D({self.n_elements} elements on [{self._nodes[0]:g}, {self._nodes[-1]:g}])"

    def siblings(self):
        """Yield ``i`` for every adjacent pair (i, i+1) of siblings."""
        p = self._paths
        for i in range(len(p) - 1):
            a, b = p[i], p[i + 1]
            if len(a) > 1 and a[:-1] == b[:-1] and a[-1] == 0 and b[-1] == 1:
                yield i

    def element_at(self, x) -> int:
        """Index of the element whose left node is exactly ``x``."""
        i = int(np.searchsorted(self._nodes, x))
        if i >= self.n_elements or self._nodes[i] != x:
            raise KeyError(x)
        return i


def _check_ids(mesh, ids):
    ids = {int(i) for i in ids}
    bad = [i for i in ids if not 0 <= i < mesh.n_elements]
    if bad:
        raise IndexError(f"invalid element ids {sorted(bad)[:5]}")
    return ids


def bisect(mesh: Mesh1D, marked) -> Mesh1D:
    """Split every marked element at its midpoint."""
    marked = _check_ids(mesh, marked)
    if not marked:
        return mesh
    x = mesh.nodes
    nodes, paths = [x[0]], []
    for i, p in enumerate(mesh.paths):
        if i in marked:
            nodes.append(0.5 * (x[i] + x[i + 1]))
            paths += [p + (0,), p + (1,)]
        else:
            paths.append(p)
        nodes.append(x[i + 1])
    return Mesh1D(nodes, paths, mesh._next_root)


def coarsen(mesh: Mesh1D, marked) -> Mesh1D:
    """Merge sibling pairs back into their parent when both are marked."""
    marked = _check_ids(mesh, marked)
    drop = {i + 1 for i in mesh.siblings() if i in marked and i + 1 in marked}
    if not drop:
        return mesh
    x = mesh.nodes
    keep = [k for k in range(len(x)) if k not in drop]
    paths, skip = [], False
    for i, p in enumerate(mesh.paths):
        if skip:
            skip = False
            continue
        if i + 1 in drop:
            paths.append(p[:-1])
            skip = True
        else:
            paths.append(p)
    return Mesh1D(x[keep], paths, mesh._next_root)


def merge(mesh: Mesh1D, marked) -> Mesh1D:
    """Remove every interior node whose two neighbouring elements are marked.

    Runs of consecutive marked elements collapse into one element.  Unlike
    :func:`coarsen` this can merge elements that were never siblings; a
    merged element starts a fresh history root.
    """
    marked = _check_ids(mesh, marked)
    x = mesh.nodes
    drop = {i + 1 for i in range(mesh.n_elements - 1)
            if i in marked and i + 1 in marked}
    if not drop:
        return mesh
    nroot = mesh._next_root
    sibs = set(mesh.siblings())
    nodes, paths = [x[0]], []
    i = 0
    while i < mesh.n_elements:
        j = i
        while j + 1 in drop:
            j += 1
        if j == i:
            paths.append(mesh.paths[i])
        else:
            # a sibling pair merges back into its parent, anything else is new
            if j == i + 1 and i in sibs:
                paths.append(mesh.paths[i][:-1])
            else:
                paths.append((nroot,))
                nroot += 1
        nodes.append(x[j + 1])
        i = j + 1
    return Mesh1D(nodes, paths, nroot)


def cut_position(mesh: Mesh1D, x0: float) -> tuple[int, float]:
    """Element containing ``x0`` and the relative position of ``x0`` in it.

    A point that coincides with an interior node belongs to the element on
    its right (t = 0); the right end of the domain gives t = 1.
    """
    x = mesh.nodes
    if not x[0] <= x0 <= x[-1]:
        raise OutOfDomain(f"{x0} outside [{x[0]}, {x[-1]}]")
    k = int(np.searchsorted(x, x0, side="right")) - 1
    k = min(k, mesh.n_elements - 1)
    t = (x0 - x[k]) / (x[k + 1] - x[k])
    return k, float(t)


def write_mesh(mesh: Mesh1D, path) -> None:
    lines = [f"mesh1d {len(mesh.nodes)}"]
    lines += [repr(float(v)) for v in mesh.nodes]
    Path(path).write_text("\n".join(lines) + "\n")


def read_mesh(path) -> Mesh1D:
    lines = Path(path).read_text().split("\n")
    head = lines[0].split()
    if len(head) != 2 or head[0] != "mesh1d":
        raise ValueError("missing 'mesh1d <node_count>' header")
    n = int(head[1])
    vals = [float(s) for s in lines[1:] if s.strip()]
    if len(vals) != n:
        raise ValueError(f"header announces {n} nodes, found {len(vals)}")
    return Mesh1D(vals)
