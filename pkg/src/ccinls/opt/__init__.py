"""Linear / mixed-binary programming kernel.

Two interchangeable backends take a :class:`LinearModel` and return a
:class:`Solution`: the embedded dense simplex with branch-and-bound
(``"embedded"``) and HiGHS via scipy (``"highs"``).
"""

from __future__ import annotations

from .bnb import MAX_BINARIES, branch_and_bound
from .highs import highs_lp, highs_milp
from .lpformat import to_lp_string, write_lp
from .model import INF, TOL, LinearModel, ModelBuilder, Solution, Status, Tolerances
from .simplex import dual_objective, simplex

BACKENDS = ("embedded", "highs")


def solve_lp(model: LinearModel, backend: str = "embedded", tol: Tolerances = TOL) -> Solution:
    """Solve the continuous relaxation of ``model``."""
    relaxed = model.relaxed() if model.binaries.size else model
    if backend == "embedded":
        return simplex(relaxed, tol)
    if backend == "highs":
        return highs_lp(relaxed, tol)
    raise ValueError(f"unknown backend {backend!r}; expected one of {BACKENDS}")


def solve_milp(model: LinearModel, backend: str = "embedded", tol: Tolerances = TOL,
               node_limit: int = 100_000) -> Solution:
    """Solve ``model`` to global optimality over its binary variables."""
    if backend == "embedded":
        if model.binaries.size == 0:
            return simplex(model, tol)
        return branch_and_bound(model, tol, node_limit=node_limit)
    if backend == "highs":
        return highs_milp(model, tol, node_limit=node_limit)
    raise ValueError(f"unknown backend {backend!r}; expected one of {BACKENDS}")


__all__ = [
    "BACKENDS", "INF", "MAX_BINARIES", "TOL", "LinearModel", "ModelBuilder", "Solution",
    "Status", "Tolerances", "branch_and_bound", "dual_objective", "highs_lp", "highs_milp",
    "simplex", "solve_lp", "solve_milp", "to_lp_string", "write_lp",
]
