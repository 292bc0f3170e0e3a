"""L2 projections of a step function onto P0, discontinuous P1 and
continuous P1 spaces.

Two independent routes are provided.  ``closed_*`` evaluate the explicit
formulas for the element cut by the jump (and, for continuous P1, the few
elements around it with exact values imposed further out).
:func:`numeric_l2_project` assembles and solves the projection on an
arbitrary :class:`~overshoot.mesh1d.Mesh1D`, integrating the data exactly
by splitting elements at its break points.

All closed forms use the normalised step with value -1 left of the jump and
+1 right of it; coefficients are indexed like the nodes around the jump,
``-2, -1`` on the left and ``1, 2`` on the right.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

from . import adapt
from .mesh1d import Mesh1D, SpaceKind1D, bisect, cut_position
from .numkit import LinearSolveOptions, assemble_coo, gauss_interval, solve

__all__ = [
    "StepFunction",
    "CutInterval",
    "ProjectionResult",
    "FEFunction",
    "l2_project",
    "l2_error_on",
    "element_l2_errors",
    "refine_coarsen_projection",
    "mass_matrix_s1",
    "numeric_l2_project",
    "closed_p0",
    "closed_p1disc",
    "closed_s1_matched_local",
    "closed_s1_uniform",
    "closed_s1_graded",
    "closed_s1_coarsened",
    "overshoot_of",
    "local_mesh_uniform",
    "local_mesh_graded",
    "bisection_overshoots",
    "sweep",
    "write_sweep_csv",
    "SWEEP_COLUMNS",
]

BANDED = LinearSolveOptions(method="direct-banded")


@dataclass(frozen=True)
class StepFunction:
    jump_location: float = 0.0
    left_value: float = -1.0
    right_value: float = 1.0

    def __post_init__(self):
        if self.left_value == self.right_value:
            raise ValueError("a step function needs two different values")

    @property
    def gap(self) -> float:
        return self.right_value - self.left_value

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x < self.jump_location, self.left_value, self.right_value)


@dataclass(frozen=True)
class CutInterval:
    """The element (-t h, (1 - t) h) that contains the jump at 0."""

    t: float
    h: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.t <= 1.0:
            raise ValueError(f"t={self.t} not in [0, 1]")
        if not self.h > 0:
            raise ValueError("h must be positive")


@dataclass
class ProjectionResult:
    coefficients: dict
    overshoot: float
    l2_error_on_cut: float


@dataclass
class FEFunction:
    """Coefficients of a 1D finite element function.

    P0 stores one value per element, P1Discontinuous the (left, right)
    endpoint values of every element, the continuous spaces their nodal
    values (interior nodes only for the zero-BC space).
    """

    space: SpaceKind1D
    mesh: Mesh1D
    coefficients: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=float)
        n = self.space.ndofs(self.mesh)
        if self.coefficients.shape != (n,):
            raise ValueError(f"{self.space.name} on this mesh has {n} DOFs, "
                             f"got {self.coefficients.shape}")

    def endpoint_values(self) -> np.ndarray:
        """(n_elements, 2) array of the one-sided values at element ends."""
        c = self.coefficients
        if self.space is SpaceKind1D.P0:
            return np.column_stack([c, c])
        if self.space is SpaceKind1D.P1Discontinuous:
            return c.reshape(-1, 2)
        v = self.nodal_values()
        return np.column_stack([v[:-1], v[1:]])

    def nodal_values(self) -> np.ndarray:
        """Values at the mesh nodes; only for the continuous spaces."""
        if self.space is SpaceKind1D.P1Continuous:
            return self.coefficients
        if self.space is SpaceKind1D.P1ContinuousZeroBC:
            return np.concatenate([[0.0], self.coefficients, [0.0]])
        raise TypeError(f"{self.space.name} has no nodal values")

    def sample_values(self) -> np.ndarray:
        """The DOF values the overshoot is measured on."""
        if self.space is SpaceKind1D.P1ContinuousZeroBC:
            return self.nodal_values()
        return self.coefficients

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        nodes = self.mesh.nodes
        k = np.clip(np.searchsorted(nodes, x, side="right") - 1, 0,
                    self.mesh.n_elements - 1)
        ev = self.endpoint_values()
        s = (x - nodes[k]) / (nodes[k + 1] - nodes[k])
        return (1 - s) * ev[k, 0] + s * ev[k, 1]


def _subintervals(mesh, breakpoints):
    """Split the mesh at the break points; returns (a, b, element)."""
    x = mesh.nodes
    bp = [p for p in breakpoints if x[0] < p < x[-1]]
    pts = np.union1d(x, bp)
    a, b = pts[:-1], pts[1:]
    elem = np.searchsorted(x, a, side="right") - 1
    return a, b, elem


def _load_integrals(func, mesh, breakpoints, degree):
    """Per element: integrals of func against the two hat pieces.

    Returns an (n_elements, 2) array whose rows are
    (int func*(x_r - x)/h, int func*(x - x_l)/h).
    """
    rule = gauss_interval(degree)
    a, b, elem = _subintervals(mesh, breakpoints)
    xq = a[:, None] + (b - a)[:, None] * rule.points[None, :]
    wq = (b - a)[:, None] * rule.weights[None, :]
    fq = np.asarray(func(xq), dtype=float) * wq
    xl = mesh.nodes[elem][:, None]
    h = mesh.h[elem][:, None]
    s = (xq - xl) / h
    out = np.zeros((mesh.n_elements, 2))
    np.add.at(out[:, 0], elem, np.sum(fq * (1 - s), axis=1))
    np.add.at(out[:, 1], elem, np.sum(fq * s, axis=1))
    return out


def mass_matrix_s1(mesh: Mesh1D) -> sp.csr_matrix:
    h = mesh.h
    n = mesh.n_elements
    i = np.arange(n)
    rows = np.concatenate([i, i, i + 1, i + 1])
    cols = np.concatenate([i, i + 1, i, i + 1])
    vals = np.concatenate([h / 3, h / 6, h / 6, h / 3])
    return assemble_coo(rows, cols, vals, (n + 1, n + 1))


def l2_project(func: Callable, mesh: Mesh1D, space: SpaceKind1D,
               breakpoints: Sequence[float] = (), boundary_values=None,
               degree: int = 7, opts: LinearSolveOptions = BANDED) -> FEFunction:
    """L2 projection of ``func`` onto ``space`` over ``mesh``.

    Elements are split at ``breakpoints`` before quadrature so that data
    with jumps there is integrated exactly whenever it is polynomial of
    degree at most ``degree - 1`` on each piece.

    ``boundary_values`` (left, right) pins the two end nodes of a
    continuous space and projects only the interior values.  The zero-BC
    space always pins (0, 0).
    """
    loads = _load_integrals(func, mesh, breakpoints, degree)
    h = mesh.h
    if space is SpaceKind1D.P0:
        return FEFunction(space, mesh, loads.sum(axis=1) / h)
    if space is SpaceKind1D.P1Discontinuous:
        # inverse of h [[1/3, 1/6], [1/6, 1/3]] is (2/h) [[2, -1], [-1, 2]]
        left = 2 * (2 * loads[:, 0] - loads[:, 1]) / h
        right = 2 * (2 * loads[:, 1] - loads[:, 0]) / h
        return FEFunction(space, mesh, np.column_stack([left, right]).ravel())

    n = mesh.n_elements
    rhs = np.zeros(n + 1)
    rhs[:-1] += loads[:, 0]
    rhs[1:] += loads[:, 1]
    M = mass_matrix_s1(mesh)
    if space is SpaceKind1D.P1ContinuousZeroBC:
        boundary_values = (0.0, 0.0)
    if boundary_values is None:
        return FEFunction(space, mesh, solve(M, rhs, opts))
    gl, gr = boundary_values
    inner = slice(1, n)
    rhs_i = rhs[inner] - M[inner, 0].toarray().ravel() * gl \
        - M[inner, n].toarray().ravel() * gr
    vals = solve(M[inner, inner], rhs_i, opts)
    if space is SpaceKind1D.P1ContinuousZeroBC:
        return FEFunction(space, mesh, vals)
    return FEFunction(space, mesh, np.concatenate([[gl], vals, [gr]]))


def numeric_l2_project(u: StepFunction, mesh: Mesh1D, space: SpaceKind1D,
                       boundary_values=None) -> FEFunction:
    """Projection of a step function, integrated exactly."""
    cut_position(mesh, u.jump_location)  # raises OutOfDomain
    return l2_project(u, mesh, space, breakpoints=[u.jump_location],
                      boundary_values=boundary_values, degree=1)


def l2_error_on(fe: FEFunction, func, a, b, breakpoints=(), degree=9):
    """||func - fe|| on (a, b), splitting at break points."""
    pts = np.union1d([a, b], [p for p in breakpoints if a < p < b])
    pts = np.union1d(pts, [x for x in fe.mesh.nodes if a < x < b])
    rule = gauss_interval(degree)
    total = 0.0
    for lo, hi in zip(pts[:-1], pts[1:]):
        xq, wq = rule.map_interval(lo, hi)
        total += np.sum(wq * (func(xq) - fe(xq)) ** 2)
    return math.sqrt(total)


def element_l2_errors(fe: FEFunction, func, breakpoints=(), degree=9) -> np.ndarray:
    """||func - fe||_{0,K} for every element K."""
    mesh = fe.mesh
    rule = gauss_interval(degree)
    a, b, elem = _subintervals(mesh, breakpoints)
    xq = a[:, None] + (b - a)[:, None] * rule.points[None, :]
    wq = (b - a)[:, None] * rule.weights[None, :]
    ev = fe.endpoint_values()[elem]
    s = (xq - mesh.nodes[elem][:, None]) / mesh.h[elem][:, None]
    uh = (1 - s) * ev[:, :1] + s * ev[:, 1:]
    sq = np.sum(wq * (func(xq) - uh) ** 2, axis=1)
    out = np.zeros(mesh.n_elements)
    np.add.at(out, elem, sq)
    return np.sqrt(out)


# ---------------------------------------------------------------------------
# closed forms for the element cut by the jump
# ---------------------------------------------------------------------------

def _os(coef, lo=-1.0, hi=1.0):
    vals = np.array(list(coef.values()))
    return float(max(np.max(vals - hi), np.max(lo - vals), 0.0))


def closed_p0(cut: CutInterval) -> ProjectionResult:
    t, h = cut.t, cut.h
    c = 1 - 2 * t
    return ProjectionResult({-1: c, 1: c}, 0.0, 2 * math.sqrt(t * (1 - t) * h))


def closed_p1disc(cut: CutInterval) -> ProjectionResult:
    t, h = cut.t, cut.h
    um1 = 1 - 8 * t + 6 * t * t
    up1 = 1 + 4 * t - 6 * t * t
    os = max(up1 - 1, -(um1 + 1), 0.0)
    err = 2 * math.sqrt(max(t * (1 - t) * (1 - 3 * t + 3 * t * t) * h, 0.0))
    return ProjectionResult({-1: um1, 1: up1}, os, err)


def closed_s1_matched_local(delta: float) -> float:
    """Value next to the jump on a symmetric matched mesh when the value
    one node further out is 1 + delta."""
    return 1.25 - delta / 4


def closed_s1_uniform(cut: CutInterval) -> ProjectionResult:
    """Continuous P1 on five equal elements of size h around the jump, exact
    values imposed at the outermost nodes."""
    t, h = cut.t, cut.h
    c = {
        -2: -3 * (87 - 60 * t + 38 * t * t) / 209,
        -1: (-1 - 720 * t + 456 * t * t) / 209,
        1: (265 + 192 * t - 456 * t * t) / 209,
        2: 3 * (65 - 16 * t + 38 * t * t) / 209,
    }
    poly = 8869 + 60189 * t - 294117 * t**2 + 467856 * t**3 - 233928 * t**4
    return ProjectionResult(c, _os(c), 2 * math.sqrt(h * poly / 131043))


def closed_s1_graded(cut: CutInterval) -> ProjectionResult:
    """As :func:`closed_s1_uniform` with the outermost elements of size 2h."""
    t, h = cut.t, cut.h
    c = {
        -2: (-281 + 138 * t - 87 * t * t) / 241,
        -1: 3 * (-27 - 184 * t + 116 * t * t) / 241,
        1: (325 + 144 * t - 468 * t * t) / 241,
        2: (227 - 24 * t + 78 * t * t) / 241,
    }
    poly = 20923 + 13173 * t - 221541 * t**2 + 450576 * t**3 - 250668 * t**4
    return ProjectionResult(c, _os(c), 2 * math.sqrt(h * poly / 174243))


def closed_s1_coarsened(c: float, delta: float = 0.0) -> float:
    """Value next to a matched jump when the element beyond it is ``c``
    times larger and the node after that carries 1 + delta."""
    if c < 1:
        raise ValueError("mesh ratio c must be >= 1")
    return 1 + (1 - c * delta) / (2 * (1 + c))


def local_mesh_uniform(t, h=1.0) -> Mesh1D:
    return Mesh1D(h * np.array([-(t + 2), -(t + 1), -t, 1 - t, 2 - t, 3 - t]))


def local_mesh_graded(t, h=1.0) -> Mesh1D:
    # element sizes 2h, 2h, h, h, 2h
    return Mesh1D(h * np.array([-(t + 4), -(t + 2), -t, 1 - t, 2 - t, 4 - t]))


def overshoot_of(fe: FEFunction, exact_min: float, exact_max: float) -> float:
    """Largest excursion of the DOF values outside [exact_min, exact_max]."""
    if not exact_min <= exact_max:
        raise ValueError("exact_min must not exceed exact_max")
    v = fe.sample_values()
    if v.size == 0:
        return 0.0
    return float(max(np.max(v - exact_max), np.max(exact_min - v), 0.0))


def bisection_overshoots(mesh: Mesh1D, x0: float = 0.0, steps: int = 10):
    """Bisect the element containing ``x0`` repeatedly.

    Returns a list of (t, os) for the discontinuous P1 projection before
    each bisection.
    """
    out = []
    for _ in range(steps + 1):
        k, t = cut_position(mesh, x0)
        out.append((t, closed_p1disc(CutInterval(t)).overshoot))
        mesh = bisect(mesh, {k})
    return out


def refine_coarsen_projection(nodes=(-1.0, -1.0 / 3.0, 2.0 / 3.0, 1.0), max_iter=20,
                              step: StepFunction | None = None,
                              params: adapt.MarkParams | None = None,
                              coarsening: str = "merge"):
    """Adaptive continuous P1 projection of a step function.

    The indicator on each element is the exact L2 error there.  With the
    default data the run collapses onto three elements with a tiny one
    around the jump, which removes the overshoot.
    """
    step = step or StepFunction()
    params = params or adapt.MarkParams(strategy="refine-coarsen")
    lo, hi = sorted((step.left_value, step.right_value))
    return adapt.run_adaptive(
        Mesh1D(nodes),
        solve=lambda m: numeric_l2_project(step, m, SpaceKind1D.P1Continuous),
        estimate=lambda m, fe: element_l2_errors(fe, step, (step.jump_location,)),
        p=params, max_iter=max_iter, remesh=adapt.remesh_1d(coarsening),
        overshoot=lambda fe: overshoot_of(fe, lo, hi),
    )


# ---------------------------------------------------------------------------
# t sweeps
# ---------------------------------------------------------------------------

SWEEP_COLUMNS = ["t", "h", "space", "U_minus2", "U_minus1", "U_plus1",
                 "U_plus2", "os", "l2_error"]

_CLOSED = {
    "p0": closed_p0,
    "p1dg": closed_p1disc,
    "s1-uniform": closed_s1_uniform,
    "s1-graded": closed_s1_graded,
}


def sweep(space: str, t_steps: int = 101, h: float = 1.0):
    """Evaluate a closed form on ``t_steps`` equispaced t in [0, 1]."""
    try:
        fn = _CLOSED[space]
    except KeyError:
        raise ValueError(f"unknown space {space!r}; "
                         f"choose from {sorted(_CLOSED)}") from None
    rows = []
    for t in np.linspace(0.0, 1.0, t_steps):
        r = fn(CutInterval(float(t), h))
        c = r.coefficients
        rows.append({
            "t": float(t), "h": h, "space": space,
            "U_minus2": c.get(-2), "U_minus1": c.get(-1),
            "U_plus1": c.get(1), "U_plus2": c.get(2),
            "os": r.overshoot, "l2_error": r.l2_error_on_cut,
        })
    return rows


def write_sweep_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SWEEP_COLUMNS)
        for r in rows:
            w.writerow(["" if r[k] is None else
                        (r[k] if isinstance(r[k], str) else repr(float(r[k])))
                        for k in SWEEP_COLUMNS])
