"""Best-first branch-and-bound over binary variables."""

from __future__ import annotations

import heapq
import itertools

import numpy as np

from .model import TOL, LinearModel, Solution, Status, Tolerances
from .simplex import simplex

MAX_BINARIES = 64


def branch_and_bound(model: LinearModel, tol: Tolerances = TOL, node_limit: int = 100_000,
                     lp_iter_limit: int = 50_000) -> Solution:
    """Solve a mixed-binary model to global optimality (absolute gap ``tol.gap``).

    Node selection is best bound first, deeper nodes first among equal bounds;
    branching picks the most fractional binary (lowest index on ties).
    """
    bins = model.binaries
    if bins.size > MAX_BINARIES:
        raise ValueError(f"{bins.size} binaries exceeds the embedded limit of {MAX_BINARIES}")
    relaxed = model.relaxed()
    sign = 1.0 if model.maximize else -1.0  # internal: maximize sign * obj
    counter = itertools.count()

    best: Solution | None = None
    best_val = -np.inf
    nodes = 0
    iters = 0
    saw_unbounded = False
    heap: list = []

    def push(lb, ub, bound, depth):
        heapq.heappush(heap, (-bound, -depth, next(counter), lb, ub))

    push(relaxed.lb.copy(), relaxed.ub.copy(), np.inf, 0)
    while heap:
        neg_bound, neg_depth, _, lb, ub = heapq.heappop(heap)
        if -neg_bound <= best_val + tol.gap:
            continue
        if nodes >= node_limit:
            return Solution(Status.ITERATION_LIMIT, objective=best.objective if best else np.nan,
                            x=None if best is None else best.x, nodes=nodes, iterations=iters)
        nodes += 1
        sol = simplex(relaxed.with_bounds(lb, ub), tol, lp_iter_limit)
        iters += sol.iterations
        if sol.status is Status.INFEASIBLE:
            continue
        if sol.status is Status.UNBOUNDED:
            saw_unbounded = True
            if nodes == 1:
                return Solution(Status.UNBOUNDED, nodes=nodes, iterations=iters)
            continue
        if sol.status is Status.ITERATION_LIMIT:
            return Solution(Status.ITERATION_LIMIT, nodes=nodes, iterations=iters)
        val = sign * sol.objective
        if val <= best_val + tol.gap:
            continue
        xb = sol.x[bins]
        frac = np.abs(xb - np.round(xb))
        if frac.max(initial=0.0) <= tol.integrality:
            x = sol.x.copy()
            x[bins] = np.round(xb)
            best, best_val = Solution(Status.OPTIMAL, objective=sol.objective, x=x), val
            continue
        pick = int(np.argmax(np.where(frac > tol.integrality, 0.5 - np.abs(xb - np.floor(xb) - 0.5), -1.0)))
        j = int(bins[pick])
        depth = -neg_depth + 1
        lb_up, ub_dn = lb.copy(), ub.copy()
        lb_up[j] = 1.0
        ub_dn[j] = 0.0
        push(lb_up, ub, val, depth)
        push(lb, ub_dn, val, depth)

    if best is None:
        status = Status.UNBOUNDED if saw_unbounded else Status.INFEASIBLE
        return Solution(status, nodes=nodes, iterations=iters)
    best.nodes, best.iterations = nodes, iters
    return best
