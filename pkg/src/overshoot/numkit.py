"""Quadrature rules and the small amount of sparse linear algebra shared by
the 1D and 2D solvers.

Sparse matrices are plain :class:`scipy.sparse.csr_matrix` objects; the
helpers here only take care of assembly from COO triplets and of picking a
solver (banded, dense, sparse LU or restarted GMRES).
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

log = logging.getLogger(__name__)

__all__ = [
    "QuadratureRule",
    "gauss_interval",
    "gauss_triangle",
    "LinearSolveOptions",
    "SingularMatrix",
    "NoConvergence",
    "assemble_coo",
    "is_symmetric",
    "solve",
]

# systems at or above this size go to GMRES under method="auto"
DIRECT_LIMIT = 5000


class SingularMatrix(ArithmeticError):
    """A direct factorisation hit a zero (or sub-1e-300) pivot."""


class NoConvergence(ArithmeticError):
    """The iterative solver did not reach the requested tolerance."""


@dataclass(frozen=True)
class QuadratureRule:
    """Points and weights on a reference cell.

    For the interval the reference cell is [0, 1] and ``points`` has shape
    (n,); for the triangle it is {x, y >= 0, x + y <= 1} and ``points`` has
    shape (n, 2).  ``degree`` is the highest total polynomial degree that is
    integrated exactly.
    """

    points: np.ndarray
    weights: np.ndarray
    degree: int

    def __len__(self):
        return len(self.weights)

    def map_interval(self, a, b):
        """Physical points and weights of the rule on [a, b]."""
        h = b - a
        return a + h * self.points, h * self.weights


def gauss_interval(degree: int) -> QuadratureRule:
    """Gauss-Legendre rule on [0, 1] exact for polynomials up to ``degree``."""
    if degree < 0:
        raise ValueError("degree must be non-negative")
    n = degree // 2 + 1
    x, w = np.polynomial.legendre.leggauss(n)
    return QuadratureRule(0.5 * (x + 1.0), 0.5 * w, 2 * n - 1)


def _bary(rows):
    pts, wts = [], []
    for lam, w in rows:
        pts.append(lam[1:])
        wts.append(w)
    return np.array(pts, dtype=float), np.array(wts, dtype=float)


def _perm3(a, b):
    # the three distinct permutations of (a, b, b)
    return [(a, b, b), (b, a, b), (b, b, a)]


def gauss_triangle(degree: int) -> QuadratureRule:
    """Symmetric rule on the reference triangle (area 1/2).

    Degrees 1, 2 and up to 5 are served by the centroid, the 3-point edge
    rule and the 7-point Dunavant rule respectively.
    """
    if degree < 0:
        raise ValueError("degree must be non-negative")
    if degree > 5:
        raise ValueError("triangle rules are only tabulated up to degree 5")
    if degree <= 1:
        rows = [((1 / 3, 1 / 3, 1 / 3), 1.0)]
        deg = 1
    elif degree == 2:
        rows = [(lam, 1 / 3) for lam in _perm3(2 / 3, 1 / 6)]
        deg = 2
    else:
        a1, b1 = 0.059715871789770, 0.470142064105115
        a2, b2 = 0.797426985353087, 0.101286507323456
        rows = [((1 / 3, 1 / 3, 1 / 3), 0.225)]
        rows += [(lam, 0.132394152788506) for lam in _perm3(a1, b1)]
        rows += [(lam, 0.125939180544827) for lam in _perm3(a2, b2)]
        deg = 5
    pts, wts = _bary(rows)
    return QuadratureRule(pts, 0.5 * wts, deg)


@dataclass(frozen=True)
class LinearSolveOptions:
    """How :func:`solve` should treat a system.

    ``method`` is one of ``"auto"``, ``"direct-banded"``, ``"direct-dense"``,
    ``"direct-sparse"`` or ``"iterative"``.  ``block_size`` is the size of
    the diagonal blocks used by the GMRES preconditioner (the number of DOFs
    per element for DG matrices).
    """

    method: str = "auto"
    tolerance: float = 1e-12
    max_iterations: int = 20000
    restart: int = 30
    block_size: int = 1

    def __post_init__(self):
        if self.method not in ("auto", "direct-banded", "direct-dense",
                               "direct-sparse", "iterative"):
            raise ValueError(f"unknown solve method {self.method!r}")
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")


def assemble_coo(rows, cols, vals, shape) -> sp.csr_matrix:
    """Sum COO triplets into a CSR matrix (duplicates are added)."""
    A = sp.coo_matrix((np.asarray(vals, dtype=float).ravel(),
                       (np.asarray(rows).ravel(), np.asarray(cols).ravel())),
                      shape=shape)
    A = A.tocsr()
    A.sum_duplicates()
    A.eliminate_zeros()
    return A


def is_symmetric(A, rtol=1e-14) -> bool:
    A = sp.csr_matrix(A)
    diff = abs(A - A.T)
    scale = abs(A).max() if A.nnz else 0.0
    return diff.nnz == 0 or diff.max() <= rtol * scale


def _bandwidths(A):
    A = A.tocoo()
    if A.nnz == 0:
        return 0, 0
    d = A.col.astype(np.int64) - A.row.astype(np.int64)
    return int(max(0, -d.min())), int(max(0, d.max()))


def _solve_banded(A, b):
    lo, up = _bandwidths(A)
    n = A.shape[0]
    ab = np.zeros((lo + up + 1, n))
    C = A.tocoo()
    ab[up + C.row - C.col, C.col] = C.data
    try:
        return scipy.linalg.solve_banded((lo, up), ab, b, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrix(str(exc)) from exc


def _solve_dense(A, b):
    M = A.toarray() if sp.issparse(A) else np.asarray(A, dtype=float)
    with warnings.catch_warnings():
        # a zero pivot is reported below as SingularMatrix
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(M, check_finite=False)
    if np.min(np.abs(np.diag(lu))) < 1e-300:
        raise SingularMatrix("zero pivot in dense LU")
    return scipy.linalg.lu_solve((lu, piv), b, check_finite=False)


def _solve_sparse(A, b):
    try:
        lu = spla.splu(sp.csc_matrix(A))
    except RuntimeError as exc:  # "Factor is exactly singular"
        raise SingularMatrix(str(exc)) from exc
    return lu.solve(b)


def _block_jacobi(A, bs):
    n = A.shape[0]
    if n % bs:
        raise ValueError("matrix size is not a multiple of block_size")
    nb = n // bs
    C = A.tocoo()
    keep = C.row // bs == C.col // bs
    blocks = np.zeros((nb, bs, bs))
    np.add.at(blocks, (C.row[keep] // bs, C.row[keep] % bs, C.col[keep] % bs), C.data[keep])
    try:
        inv = np.linalg.inv(blocks)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrix("singular diagonal block in preconditioner") from exc

    def apply(r):
        return np.einsum("kij,kj->ki", inv, r.reshape(nb, bs)).ravel()

    return spla.LinearOperator(A.shape, matvec=apply, dtype=float)


def _solve_gmres(A, b, opts):
    A = sp.csr_matrix(A)
    M = _block_jacobi(A, opts.block_size)
    cycles = max(1, math.ceil(opts.max_iterations / opts.restart))
    x, info = spla.gmres(A, b, rtol=opts.tolerance, atol=0.0,
                         restart=opts.restart, maxiter=cycles, M=M)
    if info != 0:
        raise NoConvergence(f"GMRES({opts.restart}) stopped with info={info}")
    return x


def solve(A, b, opts: LinearSolveOptions | None = None) -> np.ndarray:
    """Solve ``A x = b``.

    Raises :class:`SingularMatrix` when a direct factorisation breaks down
    and :class:`NoConvergence` when GMRES runs out of iterations.
    """
    opts = opts or LinearSolveOptions()
    b = np.asarray(b, dtype=float)
    n, m = A.shape
    if n != m or b.shape[0] != n:
        raise ValueError(f"shape mismatch: A is {A.shape}, b has {b.shape[0]} rows")
    if n == 0:
        return np.zeros(0)
    method = opts.method
    if method == "auto":
        method = "direct-sparse" if n < DIRECT_LIMIT else "iterative"
    if method == "direct-banded":
        x = _solve_banded(sp.csr_matrix(A), b)
    elif method == "direct-dense":
        x = _solve_dense(A, b)
    elif method == "direct-sparse":
        x = _solve_sparse(A, b)
    else:
        x = _solve_gmres(A, b, opts)
    if not np.all(np.isfinite(x)):
        raise SingularMatrix("non-finite entries in solution")
    bn = np.linalg.norm(b)
    if bn > 0:
        res = np.linalg.norm(A @ x - b) / bn
        if res > opts.tolerance:
            log.debug("relative residual %.3e above tolerance %.1e (%s)",
                      res, opts.tolerance, method)
    return x
