"""External-solver adapter: HiGHS through ``scipy.optimize``."""

from __future__ import annotations

import numpy as np
from scipy import optimize

from .model import TOL, LinearModel, Solution, Status, Tolerances
from .simplex import dual_objective

_LP_STATUS = {0: Status.OPTIMAL, 1: Status.ITERATION_LIMIT, 2: Status.INFEASIBLE, 3: Status.UNBOUNDED}


def highs_lp(model: LinearModel, tol: Tolerances = TOL) -> Solution:
    c = -model.c if model.maximize else model.c
    le = model.row_sense == "<="
    ge = model.row_sense == ">="
    eq = model.row_sense == "="
    ineq = le | ge
    flip = np.where(ge, -1.0, 1.0)
    A = model.A
    A_ub = (A[ineq].multiply(flip[ineq][:, None])).tocsr() if ineq.any() else None
    b_ub = (model.rhs * flip)[ineq] if ineq.any() else None
    A_eq = A[eq] if eq.any() else None
    b_eq = model.rhs[eq] if eq.any() else None
    res = optimize.linprog(
        c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq,
        bounds=np.column_stack([model.lb, model.ub]), method="highs",
        options={"primal_feasibility_tolerance": tol.feasibility,
                 "dual_feasibility_tolerance": tol.feasibility},
    )
    status = _LP_STATUS.get(res.status, Status.INFEASIBLE)
    if status is not Status.OPTIMAL:
        return Solution(status, message=res.message)
    duals = np.zeros(model.n_rows)
    if ineq.any():
        duals[ineq] = res.ineqlin.marginals * flip[ineq]
    if eq.any():
        duals[eq] = res.eqlin.marginals
    if model.maximize:
        duals = -duals
    obj = float(model.c @ res.x)
    return Solution(Status.OPTIMAL, objective=obj, x=res.x, duals=duals,
                    dual_objective=dual_objective(model, duals, tol),
                    iterations=int(res.nit), message=res.message)


def highs_milp(model: LinearModel, tol: Tolerances = TOL, node_limit: int = 100_000,
               time_limit: float | None = None) -> Solution:
    if model.binaries.size == 0:
        return highs_lp(model, tol)
    c = -model.c if model.maximize else model.c
    lo = np.where(model.row_sense == "<=", -np.inf, model.rhs)
    hi = np.where(model.row_sense == ">=", np.inf, model.rhs)
    options = {"mip_rel_gap": 1e-9, "node_limit": node_limit, "presolve": True}
    if time_limit is not None:
        options["time_limit"] = time_limit
    res = optimize.milp(
        c,
        integrality=(model.kind == "B").astype(int),
        bounds=optimize.Bounds(model.lb, model.ub),
        constraints=optimize.LinearConstraint(model.A, lo, hi),
        options=options,
    )
    if res.status == 0:
        x = res.x.copy()
        bins = model.binaries
        x[bins] = np.round(x[bins])
        return Solution(Status.OPTIMAL, objective=float(model.c @ res.x), x=x, message=res.message)
    if res.status == 1:
        return Solution(Status.ITERATION_LIMIT, message=res.message)
    if res.status == 2:
        return Solution(Status.INFEASIBLE, message=res.message)
    if res.status == 3:
        return Solution(Status.UNBOUNDED, message=res.message)
    return Solution(Status.INFEASIBLE, message=res.message)
