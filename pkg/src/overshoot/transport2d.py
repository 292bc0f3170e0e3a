"""Upwind discontinuous Galerkin for  div(beta u) + gamma u = f,  u = g on
the inflow boundary, with P0 or P1 elements on a :class:`TriMesh2D`.

For trial w and test v the bilinear form is

    sum_K (w, -beta.grad v + gamma v)_K
      + sum over interior and outflow faces of (upwind(beta.n w), [v])_F

and the load is (f, v) minus the inflow face integrals of (beta.n g, v).
The upwind side is chosen per face quadrature point from the sign of
beta.n there, so faces on which the flow turns around need no special
case.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import adapt
from .mesh2d import DomainCase, TriMesh2D, bisect2d, initial_mesh
from .numkit import (DIRECT_LIMIT, LinearSolveOptions, assemble_coo, gauss_interval,
                     gauss_triangle, solve)

__all__ = [
    "TransportProblem",
    "DGFunction2D",
    "AmbiguousUpwind",
    "assemble_transport",
    "solve_transport",
    "estimate_transport",
    "overshoot_2d",
    "benchmark_problem",
    "benchmark",
    "projected_solution",
    "write_projected_csv",
    "CURVED2_RANGE",
]

_TRI = gauss_triangle(5)
# Far beyond the degree 2k + 1 the upwind terms need: with a curved velocity
# field P0 stays within the data range only if the face fluxes of every
# element cancel, and 3 points leave an imbalance of about 1e-6.
FACE_DEGREE = 21
_SEG = gauss_interval(FACE_DEGREE)


class AmbiguousUpwind(ValueError):
    """beta.n changes sign inside an inflow or outflow boundary face."""


def _zero(x):
    return np.zeros(x.shape[:-1])


@dataclass(frozen=True)
class TransportProblem:
    """Coefficients of the transport problem.

    Every callable takes points of shape ``(..., 2)``; ``beta`` returns
    shape ``(..., 2)`` and the others ``(...)``.  ``bounds`` is the range
    of the exact solution used for the overshoot metric.
    """

    beta: Callable
    gamma: Callable = _zero
    f: Callable = _zero
    g: Callable = _zero
    div_beta: Callable = _zero
    exact: Callable | None = None
    bounds: tuple | None = None
    name: str = field(default="", compare=False)


@dataclass
class DGFunction2D:
    """Discontinuous P0/P1 function; ``coefficients[K]`` holds the value of
    element K (k = 0) or its three vertex values (k = 1)."""

    mesh: TriMesh2D
    k: int
    coefficients: np.ndarray

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=float).reshape(
            self.mesh.n_triangles, _nbasis(self.k))

    @property
    def ndofs(self) -> int:
        return self.coefficients.size

    def sample_values(self) -> np.ndarray:
        """Cell values for P0, all vertex values for P1."""
        return self.coefficients.ravel()

    def sample_points(self) -> np.ndarray:
        if self.k == 0:
            return self.mesh.centroids
        return self.mesh.vertices[self.mesh.triangles].reshape(-1, 2)

    def at_bary(self, lam) -> np.ndarray:
        """Values at barycentric points ``lam`` of shape (m, q, 3)."""
        if self.k == 0:
            return np.broadcast_to(self.coefficients, lam.shape[:2]).copy()
        return np.einsum("mqi,mi->mq", lam, self.coefficients)


def _nbasis(k):
    if k not in (0, 1):
        raise ValueError("degree must be 0 or 1")
    return 1 if k == 0 else 3


def _basis(k, lam):
    return np.ones(lam.shape[:-1] + (1,)) if k == 0 else lam


# ---------------------------------------------------------------- geometry

def _volume_data(mesh):
    p = mesh.vertices[mesh.triangles]                      # (m, 3, 2)
    ref = _TRI.points                                       # (q, 2)
    lam = np.column_stack([1 - ref.sum(axis=1), ref])       # (q, 3)
    x = np.einsum("qi,mid->mqd", lam, p)
    w = 2 * mesh.areas[:, None] * _TRI.weights[None, :]
    # gradients of the barycentric coordinates
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    g1 = np.column_stack([d2[:, 1], -d2[:, 0]]) / det[:, None]
    g2 = np.column_stack([-d1[:, 1], d1[:, 0]]) / det[:, None]
    grad = np.stack([-g1 - g2, g1, g2], axis=1)             # (m, 3, 2)
    lam = np.broadcast_to(lam, (len(p),) + lam.shape)
    return x, w, lam, grad


@dataclass
class _Faces:
    k1: np.ndarray          # owning triangle (normal points out of it)
    k2: np.ndarray          # neighbour, -1 on the boundary
    x: np.ndarray           # (nf, q, 2) quadrature points
    w: np.ndarray           # (nf, q)
    n: np.ndarray           # (nf, 2) unit normal
    lam1: np.ndarray        # (nf, q, 3) barycentrics in k1
    lam2: np.ndarray        # (nf, q, 3) barycentrics in k2 (zeros on boundary)
    tag: list               # boundary tag or None
    ends: np.ndarray        # (nf, 2, 2) end points


def _face_data(mesh):
    t = mesh.triangles
    v = mesh.vertices
    bnd = mesh.boundary
    s = _SEG.points
    first = {}
    k1, k2, i1, i2 = [], [], [], []
    for k, tri in enumerate(t):
        for i, e in enumerate(mesh.triangle_edges(tri)):
            if e in first:
                kk, ii = first.pop(e)
                k1.append(kk)
                i1.append(ii)
                k2.append(k)
                i2.append(i)
            else:
                first[e] = (k, i)
    for e, (k, i) in first.items():
        k1.append(k)
        i1.append(i)
        k2.append(-1)
        i2.append(-1)
    k1, k2, i1, i2 = map(np.asarray, (k1, k2, i1, i2))
    a = t[k1, (i1 + 1) % 3]
    b = t[k1, (i1 + 2) % 3]
    pa, pb = v[a], v[b]
    d = pb - pa
    length = np.hypot(d[:, 0], d[:, 1])
    n = np.column_stack([d[:, 1], -d[:, 0]]) / length[:, None]
    x = pa[:, None, :] + s[None, :, None] * d[:, None, :]
    w = length[:, None] * _SEG.weights[None, :]
    nf = len(k1)
    rows = np.arange(nf)
    lam1 = np.zeros((nf, len(s), 3))
    lam1[rows, :, (i1 + 1) % 3] = 1 - s
    lam1[rows, :, (i1 + 2) % 3] = s
    lam2 = np.zeros_like(lam1)
    inner = k2 >= 0
    # the neighbour runs along the same edge from b to a
    r = rows[inner]
    lam2[r, :, (i2[inner] + 1) % 3] = s
    lam2[r, :, (i2[inner] + 2) % 3] = 1 - s
    tags = [None if kk >= 0 else bnd[(min(aa, bb), max(aa, bb))]
            for kk, aa, bb in zip(k2.tolist(), a.tolist(), b.tolist())]
    return _Faces(k1, k2, x, w, n, lam1, lam2, tags, np.stack([pa, pb], axis=1))


def _bn(p, x, n):
    return np.einsum("fqd,fd->fq", np.asarray(p.beta(x), dtype=float), n)


def _check_boundary(p, faces, tol=1e-10):
    bd = np.flatnonzero(faces.k2 < 0)
    if len(bd) == 0:
        return
    ends = faces.ends[bd]
    be = np.einsum("fed,fd->fe", np.asarray(p.beta(ends), dtype=float), faces.n[bd])
    for j, f in enumerate(bd):
        tag = faces.tag[f]
        if tag not in ("inflow", "outflow"):
            continue
        lo, hi = be[j]
        if lo * hi < 0 and min(abs(lo), abs(hi)) > tol:
            raise AmbiguousUpwind(
                f"beta.n changes sign on {tag} face {faces.ends[f].tolist()}")


# ---------------------------------------------------------------- assembly

def assemble_transport(p: TransportProblem, mesh: TriMesh2D, k: int):
    """Sparse upwind DG matrix and load vector.

    DOF ``K * nb + i`` is basis function i of triangle K, with nb = 1
    (k = 0) or 3 (vertex Lagrange basis, k = 1).
    """
    nb = _nbasis(k)
    m = mesh.n_triangles
    rows, cols, vals = [], [], []
    rhs = np.zeros(m * nb)
    dof = np.arange(m * nb).reshape(m, nb)

    x, w, lam, grad = _volume_data(mesh)
    phi = _basis(k, lam)                                    # (m, q, nb)
    beta = np.asarray(p.beta(x), dtype=float)
    gam = np.asarray(p.gamma(x), dtype=float)
    if k == 0:
        adv = np.zeros_like(phi)
    else:
        adv = np.einsum("mqd,mid->mqi", beta, grad)         # beta . grad phi_i
    test = -adv + gam[..., None] * phi                      # (m, q, nb_test)
    Ak = np.einsum("mq,mqi,mqj->mij", w, test, phi)
    rows.append(np.repeat(dof[:, :, None], nb, 2))
    cols.append(np.repeat(dof[:, None, :], nb, 1))
    vals.append(Ak)
    np.add.at(rhs, dof, np.einsum("mq,mq,mqi->mi", w, np.asarray(p.f(x), dtype=float), phi))

    faces = _face_data(mesh)
    _check_boundary(p, faces)
    bn = _bn(p, faces.x, faces.n)
    wbn = faces.w * bn
    phi1 = _basis(k, faces.lam1)
    d1 = dof[faces.k1]

    inner = faces.k2 >= 0
    if inner.any():
        i = np.flatnonzero(inner)
        ph1, ph2 = phi1[i], _basis(k, faces.lam2[i])
        da, db = d1[i], dof[faces.k2[i]]
        up = (bn[i] > 0).astype(float)
        wu1 = wbn[i] * up                   # flux taken from k1
        wu2 = wbn[i] * (1 - up)             # flux taken from k2
        for tdof, tphi, sign in ((da, ph1, 1.0), (db, ph2, -1.0)):
            for sdof, sphi, wq in ((da, ph1, wu1), (db, ph2, wu2)):
                rows.append(np.repeat(tdof[:, :, None], nb, 2))
                cols.append(np.repeat(sdof[:, None, :], nb, 1))
                vals.append(sign * np.einsum("fq,fqi,fqj->fij", wq, tphi, sphi))

    b = np.flatnonzero(~inner)
    if len(b):
        ph = phi1[b]
        out = bn[b] > 0
        wout = np.where(out, wbn[b], 0.0)
        rows.append(np.repeat(d1[b][:, :, None], nb, 2))
        cols.append(np.repeat(d1[b][:, None, :], nb, 1))
        vals.append(np.einsum("fq,fqi,fqj->fij", wout, ph, ph))
        g = np.asarray(p.g(faces.x[b]), dtype=float)
        win = np.where(out, 0.0, -wbn[b])
        np.add.at(rhs, d1[b], np.einsum("fq,fq,fqi->fi", win, g, ph))

    A = assemble_coo(np.concatenate([r.ravel() for r in rows]),
                     np.concatenate([c.ravel() for c in cols]),
                     np.concatenate([v.ravel() for v in vals]), (m * nb, m * nb))
    return A, rhs


def solve_transport(p: TransportProblem, mesh: TriMesh2D, k: int,
                    opts: LinearSolveOptions | None = None) -> DGFunction2D:
    """Assemble and solve.  Systems of :data:`~overshoot.numkit.DIRECT_LIMIT`
    unknowns or more go to GMRES(30) preconditioned by the inverse element
    blocks; smaller ones use sparse LU."""
    A, b = assemble_transport(p, mesh, k)
    if opts is None:
        opts = LinearSolveOptions(
            method="direct-sparse" if len(b) < DIRECT_LIMIT else "iterative",
            block_size=_nbasis(k))
    return DGFunction2D(mesh, k, solve(A, b, opts))


# ---------------------------------------------------------------- estimator

def estimate_transport(u: DGFunction2D, p: TransportProblem, mesh: TriMesh2D | None = None):
    """Residual indicators

        eta_K = h_K^1/2 ||f - div(beta u) - gamma u||_K
                + 1/2 sum over interior faces ||  |beta.n|^1/2 [u] ||_F
                + sum over inflow parts of the boundary || |beta.n|^1/2 (g - u) ||_F
    """
    mesh = u.mesh if mesh is None else mesh
    x, w, lam, grad = _volume_data(mesh)
    uq = u.at_bary(lam)
    beta = np.asarray(p.beta(x), dtype=float)
    if u.k == 1:
        gu = np.einsum("mi,mid->md", u.coefficients, grad)
        conv = np.einsum("mqd,md->mq", beta, gu)
    else:
        conv = 0.0
    res = (np.asarray(p.f(x), dtype=float) - conv
           - (np.asarray(p.div_beta(x), dtype=float) + np.asarray(p.gamma(x), dtype=float)) * uq)
    eta = np.sqrt(mesh.diameters) * np.sqrt(np.sum(w * res ** 2, axis=1))

    faces = _face_data(mesh)
    bn = _bn(p, faces.x, faces.n)
    u1 = _face_values(u, faces.k1, faces.lam1)
    inner = faces.k2 >= 0
    i = np.flatnonzero(inner)
    if len(i):
        u2 = _face_values(u, faces.k2[i], faces.lam2[i])
        jn = 0.5 * np.sqrt(np.sum(faces.w[i] * np.abs(bn[i]) * (u1[i] - u2) ** 2, axis=1))
        np.add.at(eta, faces.k1[i], jn)
        np.add.at(eta, faces.k2[i], jn)
    b = np.flatnonzero(~inner)
    if len(b):
        g = np.asarray(p.g(faces.x[b]), dtype=float)
        wi = np.where(bn[b] < 0, -bn[b], 0.0) * faces.w[b]
        np.add.at(eta, faces.k1[b], np.sqrt(np.sum(wi * (g - u1[b]) ** 2, axis=1)))
    return eta


def _face_values(u, k, lam):
    c = u.coefficients[k]
    if u.k == 0:
        return np.broadcast_to(c, lam.shape[:2])
    return np.einsum("fqi,fi->fq", lam, c)


def overshoot_2d(u: DGFunction2D, lo: float, hi: float) -> float:
    s = u.sample_values()
    return float(max(s.max() - hi, lo - s.min(), 0.0))


# ---------------------------------------------------------------- benchmarks

def _strip_beta(x):
    out = np.zeros(x.shape)
    out[..., 1] = 1.0
    return out


def _strip_exact(x):
    return (x[..., 0] > math.pi / 3).astype(float)


def _half_disk_beta(x):
    r = np.hypot(x[..., 0], x[..., 1])
    safe = np.where(r > 0, r, 1.0)
    out = np.stack([x[..., 1] / safe, -x[..., 0] / safe], axis=-1)
    return np.where((r > 0)[..., None], out, 0.0)


def _half_disk_exact(x):
    return (np.hypot(x[..., 0], x[..., 1]) > 0.5).astype(float)


CURVED2_GAMMA = 0.1
CURVED2_EPS = 1e-10


def _curved2_beta(x):
    r = np.hypot(x[..., 0], x[..., 1] + 1)
    return np.stack([x[..., 1] + 1, -x[..., 0]], axis=-1) / r[..., None]


def _curved2_exact(x):
    r = np.hypot(x[..., 0], x[..., 1] + 1)
    phase = np.arcsin(np.clip((x[..., 1] + 1) / r, -1, 1))
    return 0.25 * np.exp(CURVED2_GAMMA * r * phase) * np.arctan((r - 1.5) / CURVED2_EPS)


def curved2_range_sampled(n=2001):
    """Extremes of the curved2 solution over an n x n grid of [0, 1]^2."""
    s = np.linspace(0, 1, n)
    X, Y = np.meshgrid(s, s)
    u = _curved2_exact(np.stack([X, Y], axis=-1))
    return float(u.min()), float(u.max())


# Along each streamline |u| grows with r * arcsin((y + 1) / r), which peaks on
# x = 0.  The infimum is approached as r -> 1.5 from below there and the
# maximum sits at the corner (0, 1).  A sample grid misses the infimum by
# about 3e-5, enough to flag inflow data as overshoot, so the closed form is
# recorded instead.
CURVED2_RANGE = (
    -0.25 * math.exp(CURVED2_GAMMA * 1.5 * math.pi / 2) * math.pi / 2,
    float(_curved2_exact(np.array([0.0, 1.0]))),
)


def _const(c):
    def fn(x):
        return np.full(x.shape[:-1], c, dtype=float)
    return fn


def benchmark_problem(case: str) -> tuple[TransportProblem, TriMesh2D]:
    """Problem data and initial mesh for ``strip_pi3``, ``half_disk`` or
    ``curved2``."""
    if case == "strip_pi3":
        p = TransportProblem(beta=_strip_beta, g=_strip_exact, exact=_strip_exact,
                             bounds=(0.0, 1.0), name=case)
        return p, initial_mesh(DomainCase.strip_pi3)
    if case == "half_disk":
        # on the inflow diameter the exact solution is 1 for x < -0.5, else 0
        p = TransportProblem(beta=_half_disk_beta, g=_half_disk_exact,
                             exact=_half_disk_exact, bounds=(0.0, 1.0), name=case)
        return p, initial_mesh(DomainCase.half_disk)
    if case == "curved2":
        p = TransportProblem(beta=_curved2_beta, gamma=_const(CURVED2_GAMMA), g=_curved2_exact,
                             exact=_curved2_exact, bounds=CURVED2_RANGE, name=case)
        return p, initial_mesh(DomainCase.unit_square)
    raise ValueError(f"unknown benchmark {case!r}")


def benchmark(case: str, k: int, iters: int, theta: float = 0.8,
              opts: LinearSolveOptions | None = None) -> list[adapt.AdaptRecord]:
    """Adaptive run with maximum marking; ``iters`` refinement steps, so
    ``iters + 1`` solves are recorded."""
    if iters < 0:
        raise ValueError("iters must be non-negative")
    p, mesh = benchmark_problem(case)
    lo, hi = p.bounds
    return adapt.run_adaptive(
        mesh,
        solve=lambda m: solve_transport(p, m, k, opts),
        estimate=lambda m, u: estimate_transport(u, p, m),
        p=adapt.MarkParams(strategy="maximum", theta=theta),
        max_iter=iters + 1,
        remesh=lambda m, refine, coarse: bisect2d(m, refine),
        overshoot=lambda u: overshoot_2d(u, lo, hi),
        dofs=lambda u: u.ndofs,
    )


def projected_solution(u: DGFunction2D, case: str):
    """(coordinate, value) pairs: x for the strip, the radius about the
    origin for the half disk and about (0, -1) for curved2."""
    pts = u.sample_points()
    if case == "strip_pi3":
        c = pts[:, 0]
    elif case == "half_disk":
        c = np.hypot(pts[:, 0], pts[:, 1])
    elif case == "curved2":
        c = np.hypot(pts[:, 0], pts[:, 1] + 1)
    else:
        raise ValueError(f"unknown benchmark {case!r}")
    order = np.argsort(c, kind="stable")
    return c[order], u.sample_values()[order]


PROJECTED_COLUMNS = ["coord", "value"]


def write_projected_csv(u: DGFunction2D, case: str, path) -> None:
    c, v = projected_solution(u, case)
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(PROJECTED_COLUMNS)
        for a, b in zip(c.tolist(), v.tolist()):
            wr.writerow([repr(a), repr(b)])
