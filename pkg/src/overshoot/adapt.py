"""Marking strategies and the SOLVE -> ESTIMATE -> MARK -> REFINE/COARSEN
loop."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from . import mesh1d

__all__ = [
    "MarkParams",
    "AdaptRecord",
    "mark_maximum",
    "mark_refine_coarsen",
    "run_adaptive",
    "remesh_1d",
    "write_records_csv",
    "RECORD_COLUMNS",
]


@dataclass(frozen=True)
class MarkParams:
    strategy: str = "maximum"
    theta: float = 0.8
    theta_refine: float = 0.6
    theta_coarsen: float = 0.3

    def __post_init__(self):
        if self.strategy not in ("maximum", "refine-coarsen"):
            raise ValueError(f"unknown marking strategy {self.strategy!r}")
        if not 0 < self.theta < 1:
            raise ValueError("theta must lie in (0, 1)")
        if not 0 <= self.theta_coarsen < self.theta_refine <= 1:
            raise ValueError("need 0 <= theta_coarsen < theta_refine <= 1")


@dataclass
class AdaptRecord:
    iteration: int
    dofs: int
    eta_total: float
    overshoot: float
    mesh: Any = field(repr=False)
    solution: Any = field(default=None, repr=False)
    eta: np.ndarray = field(default=None, repr=False)


def _as_eta(eta):
    eta = np.asarray(eta, dtype=float)
    if eta.ndim != 1:
        raise ValueError("indicators must be a flat array")
    if np.any(eta < 0) or not np.all(np.isfinite(eta)):
        raise ValueError("indicators must be finite and non-negative")
    return eta


def mark_maximum(eta, theta: float) -> set[int]:
    """Elements whose indicator is strictly above ``theta * max(eta)``.

    Nothing is marked when every indicator is zero.
    """
    if not 0 < theta < 1:
        raise ValueError("theta must lie in (0, 1)")
    eta = _as_eta(eta)
    if eta.size == 0:
        return set()
    top = eta.max()
    if top == 0:
        return set()
    return set(np.flatnonzero(eta > theta * top).tolist())


def mark_refine_coarsen(eta, p: MarkParams) -> tuple[set[int], set[int]]:
    eta = _as_eta(eta)
    if eta.size == 0:
        return set(), set()
    top = eta.max()
    if top == 0:
        return set(), set()
    refine = set(np.flatnonzero(eta > p.theta_refine * top).tolist())
    coarse = set(np.flatnonzero(eta < p.theta_coarsen * top).tolist())
    return refine, coarse


COARSENING_MODES = ("merge", "siblings")


def remesh_1d(coarsening: str = "merge") -> Callable:
    """Build a refine-then-coarsen step for :class:`~overshoot.mesh1d.Mesh1D`.

    ``coarsening="merge"`` joins any run of adjacent coarsen-marked
    elements; ``"siblings"`` only undoes bisections whose two halves are
    both marked.
    """
    if coarsening not in COARSENING_MODES:
        raise ValueError(f"unknown coarsening mode {coarsening!r}")
    join = mesh1d.merge if coarsening == "merge" else mesh1d.coarsen

    def step(mesh, refine, coarse):
        refine, coarse = set(refine), set(coarse) - set(refine)
        # coarsen ids are remapped through their left node after bisection
        left = [mesh.nodes[i] for i in sorted(coarse)]
        new = mesh1d.bisect(mesh, refine)
        if left:
            new = join(new, [new.element_at(x) for x in left])
        return new

    return step


def run_adaptive(mesh, solve: Callable, estimate: Callable, p: MarkParams,
                 max_iter: int, remesh: Callable, overshoot: Callable = None,
                 dofs: Callable = None) -> list[AdaptRecord]:
    """Drive an adaptive computation.

    Parameters
    ----------
    mesh
        Initial mesh.
    solve : callable
        ``solve(mesh) -> solution``.
    estimate : callable
        ``estimate(mesh, solution) -> eta`` with one indicator per element.
    p : MarkParams
        Marking strategy.
    max_iter : int
        Number of recorded SOLVE steps; the last mesh is solved but not
        adapted any more.
    remesh : callable
        ``remesh(mesh, refine_ids, coarsen_ids) -> mesh``.
    overshoot, dofs : callable, optional
        ``overshoot(solution)`` and ``dofs(solution)`` for the records.

    Under ``"maximum"`` marking an iteration only refines.  Under
    ``"refine-coarsen"`` the refined mesh is solved and estimated again and
    the coarsening set is taken from those fresh indicators, so elements
    produced by this iteration's refinement can already be coarsened.

    The loop ends early when nothing is marked or the mesh comes back
    unchanged.
    """
    if max_iter < 1:
        raise ValueError("max_iter must be at least 1")
    if dofs is None:
        def dofs(sol):
            return len(sol.coefficients)
    records = []
    for it in range(max_iter):
        sol = solve(mesh)
        eta = _as_eta(estimate(mesh, sol))
        records.append(AdaptRecord(
            iteration=it,
            dofs=int(dofs(sol)),
            eta_total=float(math.sqrt(np.sum(eta * eta))),
            overshoot=float(overshoot(sol)) if overshoot else float("nan"),
            mesh=mesh, solution=sol, eta=eta,
        ))
        if it == max_iter - 1:
            break
        if p.strategy == "maximum":
            new = remesh(mesh, mark_maximum(eta, p.theta), set())
        else:
            refine, coarse = mark_refine_coarsen(eta, p)
            if not refine and not coarse:
                break
            new = remesh(mesh, refine, set()) if refine else mesh
            if new is not mesh:
                eta = _as_eta(estimate(new, solve(new)))
                _, coarse = mark_refine_coarsen(eta, p)
            if coarse:
                new = remesh(new, set(), coarse)
        if new == mesh:
            break
        mesh = new
    return records


RECORD_COLUMNS = ["iter", "dofs", "eta_total", "overshoot"]


def write_records_csv(records, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(RECORD_COLUMNS)
        for r in records:
            w.writerow([r.iteration, r.dofs, repr(r.eta_total), repr(r.overshoot)])
