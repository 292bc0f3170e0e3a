"""Conforming P1, interior-penalty P1-DG and P0 mixed discretisations of

    -eps u'' + u = f  on (0, 1),   u(0) = u(1) = 0,

plus a residual estimator for the conforming solution that stays robust as
eps -> 0.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import adapt
from .mesh1d import Mesh1D, SpaceKind1D
from .numkit import LinearSolveOptions, assemble_coo, solve
from .stepproj import FEFunction, _load_integrals, element_l2_errors, overshoot_of

__all__ = [
    "ReactionDiffusionProblem",
    "DgPenalty",
    "benchmark_problem",
    "benchmark_problem_f2",
    "solve_p1_conforming",
    "solve_p1_dg",
    "solve_p0_mixed",
    "estimate_robust",
    "CASES",
    "Rd1dRun",
    "run_case",
]

BANDED = LinearSolveOptions(method="direct-banded")
LOAD_RULES = ("split", "gauss2")


@dataclass(frozen=True)
class ReactionDiffusionProblem:
    """Data for -eps u'' + u = f with homogeneous Dirichlet conditions.

    ``jumps`` lists the points where ``f`` may be discontinuous.  With
    ``load_rule="split"`` the load vector is integrated exactly by cutting
    elements at those points; ``"gauss2"`` applies the 2-point Gauss rule on
    each whole element and ignores the jumps, which is what the published
    non-matched values were computed with.  ``bounds`` is the (min, max)
    used to measure overshoot; when omitted it is sampled from ``f``.
    """

    epsilon: float
    f: Callable = field(compare=False)
    jumps: tuple = ()
    bounds: tuple | None = None
    name: str = ""
    load_rule: str = "split"

    def __post_init__(self):
        if self.load_rule not in LOAD_RULES:
            raise ValueError(f"unknown load rule {self.load_rule!r}")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if any(not 0 < x < 1 for x in self.jumps):
            raise ValueError("jump points must lie inside (0, 1)")

    def value_range(self):
        if self.bounds is not None:
            return self.bounds
        x = np.linspace(0, 1, 20001)
        eps = 1e-13
        x = np.concatenate([x] + [[j - eps, j + eps] for j in self.jumps])
        v = self.f(np.clip(x, 0, 1))
        return float(v.min()), float(v.max())


@dataclass(frozen=True)
class DgPenalty:
    mu: float = 10.0

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError("mu must be positive")


def _f_data(x):
    x = np.asarray(x, dtype=float)
    return np.where(x < 0.5, 2 * x, 2 * x - 2)


def _f2_data(x):
    x = np.asarray(x, dtype=float)
    return np.where(x < 0.5, x * x, x * x - 1)


def benchmark_problem(epsilon=1e-16, load_rule="split") -> ReactionDiffusionProblem:
    """f = 2x left of 1/2 and 2x - 2 right of it."""
    return ReactionDiffusionProblem(epsilon, _f_data, (0.5,), (-1.0, 1.0), "f",
                                    load_rule)


def benchmark_problem_f2(epsilon=1e-16, load_rule="split") -> ReactionDiffusionProblem:
    """f = x^2 left of 1/2 and x^2 - 1 right of it."""
    return ReactionDiffusionProblem(epsilon, _f2_data, (0.5,), (-0.75, 0.25), "f2",
                                    load_rule)


def _loads(p, mesh):
    if p.load_rule == "gauss2":
        return _load_integrals(p.f, mesh, (), degree=3)
    return _load_integrals(p.f, mesh, p.jumps, degree=7)


def solve_p1_conforming(p: ReactionDiffusionProblem, mesh: Mesh1D) -> FEFunction:
    h = mesh.h
    n = mesh.n_elements
    i = np.arange(n)
    k11 = p.epsilon / h + h / 3
    k12 = -p.epsilon / h + h / 6
    rows = np.concatenate([i, i, i + 1, i + 1])
    cols = np.concatenate([i, i + 1, i, i + 1])
    vals = np.concatenate([k11, k12, k12, k11])
    A = assemble_coo(rows, cols, vals, (n + 1, n + 1))
    F = _loads(p, mesh)
    b = np.zeros(n + 1)
    b[:-1] += F[:, 0]
    b[1:] += F[:, 1]
    inner = slice(1, n)
    u = solve(A[inner, inner], b[inner], BANDED)
    return FEFunction(SpaceKind1D.P1ContinuousZeroBC, mesh, u)


def solve_p1_dg(p: ReactionDiffusionProblem, mesh: Mesh1D,
                pen: DgPenalty = DgPenalty()) -> FEFunction:
    """Symmetric interior penalty DG with linear elements.

    Element k owns DOFs 2k (value at its left end) and 2k + 1 (right end).
    Only interior nodes carry flux and penalty terms.
    """
    eps = p.epsilon
    h = mesh.h
    n = mesh.n_elements
    rows, cols, vals = [], [], []

    def add(r, c, v):
        rows.append(r)
        cols.append(c)
        vals.append(v)

    # element terms: eps (w', v') + (w, v)
    k = np.arange(n)
    dl, dr = 2 * k, 2 * k + 1
    s = eps / h
    for a, b, v in [(dl, dl, s + h / 3), (dl, dr, -s + h / 6),
                    (dr, dl, -s + h / 6), (dr, dr, s + h / 3)]:
        add(a, b, v)

    # interior node i sits between element i-1 (dofs 2i-2, 2i-1) and i
    if n > 1:
        i = np.arange(1, n)
        hl, hr = h[i - 1], h[i]
        # jump [v] = v(x_i-) - v(x_i+) as a row vector over the 4 local dofs
        jump_dofs = (2 * i - 1, 2 * i)
        jump_coef = (np.ones_like(hl), -np.ones_like(hl))
        # average {eps v'} over the same 4 dofs
        avg_dofs = (2 * i - 2, 2 * i - 1, 2 * i, 2 * i + 1)
        avg_coef = (-eps / (2 * hl), eps / (2 * hl), -eps / (2 * hr), eps / (2 * hr))
        pen_c = eps * pen.mu / (hl + hr)
        for jd, jc in zip(jump_dofs, jump_coef):
            for ad, ac in zip(avg_dofs, avg_coef):
                # -{eps w'}[v] - {eps v'}[w]
                add(jd, ad, -jc * ac)
                add(ad, jd, -jc * ac)
            for jd2, jc2 in zip(jump_dofs, jump_coef):
                add(jd, jd2, pen_c * jc * jc2)

    A = assemble_coo(np.concatenate(rows), np.concatenate(cols),
                     np.concatenate(vals), (2 * n, 2 * n))
    b = _loads(p, mesh).ravel()
    u = solve(A, b, BANDED)
    return FEFunction(SpaceKind1D.P1Discontinuous, mesh, u)


def solve_p0_mixed(p: ReactionDiffusionProblem, mesh: Mesh1D):
    """Flux sigma = -eps u' in continuous P1, u in P0.

    The first equation is multiplied through by eps so the system stays
    well scaled for tiny eps.  Unknowns are interleaved (sigma_0, u_0,
    sigma_1, u_1, ..., sigma_N) to keep the matrix banded.

    Returns ``(sigma, u)``.
    """
    eps = p.epsilon
    h = mesh.h
    n = mesh.n_elements
    k = np.arange(n)
    sig = lambda j: 2 * j  # noqa: E731
    uu = 2 * k + 1
    rows = [sig(k), sig(k), sig(k + 1), sig(k + 1),
            # -eps (tau', u): tau' = (tau_{k+1} - tau_k) / h on element k
            sig(k), sig(k + 1),
            # -(sigma', v) - (u, v)
            uu, uu, uu]
    cols = [sig(k), sig(k + 1), sig(k), sig(k + 1),
            uu, uu,
            sig(k), sig(k + 1), uu]
    vals = [h / 3, h / 6, h / 6, h / 3,
            eps * np.ones(n), -eps * np.ones(n),
            np.ones(n), -np.ones(n), -h]
    A = assemble_coo(np.concatenate(rows), np.concatenate(cols),
                     np.concatenate(vals), (2 * n + 1, 2 * n + 1))
    b = np.zeros(2 * n + 1)
    b[uu] = -_loads(p, mesh).sum(axis=1)
    x = solve(A, b, BANDED)
    sigma = FEFunction(SpaceKind1D.P1Continuous, mesh, x[0::2])
    u = FEFunction(SpaceKind1D.P0, mesh, x[1::2])
    return sigma, u


def estimate_robust(u_h: FEFunction, p: ReactionDiffusionProblem) -> np.ndarray:
    """Residual indicators for the conforming solution.

    eta_K = a_K ||f - u_h||_K
            + 1/2 sum over interior end points x of
              (eps^-1/2 a_x)^1/2 |jump of eps u_h'(x)|,

    with a_K = min(h_K eps^-1/2, 1) and a_x the same weight built from the
    mean length of the two elements meeting at x.  u_h'' vanishes on
    linear elements.
    """
    mesh = u_h.mesh
    eps = p.epsilon
    h = mesh.h
    rs = 1.0 / math.sqrt(eps)
    aK = np.minimum(h * rs, 1.0)
    vol = aK * element_l2_errors(u_h, p.f, p.jumps)
    eta = vol.copy()
    if mesh.n_elements > 1:
        v = u_h.nodal_values()
        du = np.diff(v) / h
        jump = np.abs(eps * (du[1:] - du[:-1]))
        ax = np.minimum(0.5 * (h[:-1] + h[1:]) * rs, 1.0)
        w = 0.5 * np.sqrt(rs * ax) * jump
        eta[:-1] += w
        eta[1:] += w
    return eta


# name -> (initial nodes, data factory, marking strategy)
CASES = {
    "matched": (np.linspace(0.0, 1.0, 6), benchmark_problem, "maximum"),
    "nonmatched": (np.array([0.0, 1 / 3, 5 / 6, 1.0]), benchmark_problem, "maximum"),
    "coarsen": (np.linspace(0.0, 1.0, 18), benchmark_problem, "refine-coarsen"),
    "f2": (np.linspace(0.0, 1.0, 18), benchmark_problem_f2, "refine-coarsen"),
}


@dataclass
class Rd1dRun:
    """Adaptive conforming run plus the DG and mixed solutions on its last mesh."""

    problem: ReactionDiffusionProblem
    records: list
    dg: FEFunction
    sigma: FEFunction
    mixed: FEFunction

    @property
    def mesh(self) -> Mesh1D:
        return self.records[-1].mesh

    @property
    def conforming(self) -> FEFunction:
        return self.records[-1].solution

    def overshoots(self) -> dict:
        lo, hi = self.problem.value_range()
        return {
            "conforming": overshoot_of(self.conforming, lo, hi),
            "dg": overshoot_of(self.dg, lo, hi),
            "mixed": overshoot_of(self.mixed, lo, hi),
        }


def run_case(case: str, epsilon: float = 1e-16, theta: float = 0.8, iters: int = 20,
             mu: float = 10.0, load_rule: str = "split",
             coarsening: str = "merge") -> Rd1dRun:
    """Adapt the conforming solution for ``iters`` mesh changes.

    The estimator drives the mesh; DG and mixed solutions are computed on
    the final mesh of the sequence.  ``iters`` counts remeshing steps, so
    the run records ``iters + 1`` solves.
    """
    try:
        nodes, make, strategy = CASES[case]
    except KeyError:
        raise ValueError(f"unknown case {case!r}; choose from {sorted(CASES)}") from None
    if iters < 0:
        raise ValueError("iters must be non-negative")
    p = make(epsilon, load_rule)
    lo, hi = p.value_range()
    records = adapt.run_adaptive(
        Mesh1D(nodes),
        solve=lambda m: solve_p1_conforming(p, m),
        estimate=lambda m, u: estimate_robust(u, p),
        p=adapt.MarkParams(strategy=strategy, theta=theta),
        max_iter=iters + 1,
        remesh=adapt.remesh_1d(coarsening),
        overshoot=lambda u: overshoot_of(u, lo, hi),
        dofs=lambda u: u.mesh.n_elements - 1,
    )
    mesh = records[-1].mesh
    dg = solve_p1_dg(p, mesh, DgPenalty(mu))
    sigma, u = solve_p0_mixed(p, mesh)
    return Rd1dRun(p, records, dg, sigma, u)
