"""Dense two-phase primal simplex with Bland's anti-cycling rule."""

from __future__ import annotations

import numpy as np

from .model import TOL, LinearModel, Solution, Status, Tolerances


class _StandardForm:
    """``min cbar @ y  s.t.  Abar @ y = bbar, y >= 0`` with a map back to ``x``.

    ``x = offset + T @ y[:n_struct]``.  Upper bounds that survive the shift
    become extra ``<=`` rows appended after the model rows.
    """

    def __init__(self, model: LinearModel):
        n = model.n_vars
        lb, ub = model.lb, model.ub
        cols_of: list[list[tuple[int, float]]] = []
        offset = np.zeros(n)
        bound_rows: list[tuple[int, float]] = []  # (struct col, rhs)
        k = 0
        for j in range(n):
            if np.isfinite(lb[j]):
                offset[j] = lb[j]
                cols_of.append([(k, 1.0)])
                if np.isfinite(ub[j]):
                    bound_rows.append((k, ub[j] - lb[j]))
                k += 1
            elif np.isfinite(ub[j]):
                offset[j] = ub[j]
                cols_of.append([(k, -1.0)])
                k += 1
            else:
                cols_of.append([(k, 1.0), (k + 1, -1.0)])
                k += 2
        self.n_struct = k
        T = np.zeros((n, k))
        for j, cols in enumerate(cols_of):
            for col, s in cols:
                T[j, col] = s
        self.T = T
        self.offset = offset

        A = model.A.toarray()
        m0 = model.n_rows
        m = m0 + len(bound_rows)
        rows = np.zeros((m, k))
        rows[:m0] = A @ T
        rhs = np.empty(m)
        rhs[:m0] = model.rhs - A @ offset
        sense = list(model.row_sense)
        for r, (col, b) in enumerate(bound_rows):
            rows[m0 + r, col] = 1.0
            rhs[m0 + r] = b
            sense.append("<=")
        self.m_model = m0
        self.m = m

        slack_cols = [i for i in range(m) if sense[i] != "="]
        n_slack = len(slack_cols)
        S = np.zeros((m, n_slack))
        slack_of_row = -np.ones(m, dtype=int)
        for s_idx, i in enumerate(slack_cols):
            S[i, s_idx] = 1.0 if sense[i] == "<=" else -1.0
            slack_of_row[i] = k + s_idx
        full = np.hstack([rows, S])
        sign = np.where(rhs < 0, -1.0, 1.0)
        full *= sign[:, None]
        rhs = rhs * sign
        self.sign = sign
        self.A = full
        self.b = rhs
        self.n_cols = k + n_slack
        self.slack_of_row = slack_of_row

        c = model.c if not model.maximize else -model.c
        self.c = np.concatenate([T.T @ c, np.zeros(n_slack)])
        self.c0 = float(c @ offset)

    def to_x(self, y: np.ndarray) -> np.ndarray:
        return self.offset + self.T @ y[: self.n_struct]


def _pivot(tab: np.ndarray, i: int, j: int) -> None:
    tab[i] /= tab[i, j]
    col = tab[:, j].copy()
    col[i] = 0.0
    tab -= np.outer(col, tab[i])


def _run(tab, basis, allowed, tol: Tolerances, max_iter: int, it0: int):
    """Minimize the cost row (last row) of ``tab``; returns (status, iterations)."""
    m = tab.shape[0] - 1
    it = it0
    while True:
        rc = tab[-1, :-1]
        cand = np.flatnonzero((rc < -tol.pivot) & allowed)
        if cand.size == 0:
            return Status.OPTIMAL, it
        if it >= max_iter:
            return Status.ITERATION_LIMIT, it
        j = int(cand[0])
        col = tab[:m, j]
        pos = np.flatnonzero(col > tol.pivot)
        if pos.size == 0:
            return Status.UNBOUNDED, it
        ratios = tab[pos, -1] / col[pos]
        rmin = ratios.min()
        ties = pos[ratios <= rmin + tol.pivot * max(1.0, abs(rmin))]
        i = int(ties[np.argmin(basis[ties])])
        _pivot(tab, i, j)
        basis[i] = j
        it += 1


def simplex(model: LinearModel, tol: Tolerances = TOL, max_iter: int = 50_000) -> Solution:
    """Solve ``model`` as an LP (integrality ignored)."""
    sf = _StandardForm(model)
    m, n = sf.m, sf.n_cols
    # initial basis: a +1 slack where available, otherwise an artificial
    basis = np.empty(m, dtype=int)
    art_rows = []
    for i in range(m):
        s = sf.slack_of_row[i]
        if s >= 0 and sf.A[i, s] > 0:
            basis[i] = s
        else:
            art_rows.append(i)
    n_art = len(art_rows)
    tab = np.zeros((m + 1, n + n_art + 1))
    tab[:m, :n] = sf.A
    tab[:m, -1] = sf.b
    for a, i in enumerate(art_rows):
        tab[i, n + a] = 1.0
        basis[i] = n + a
    # identity column of each row in the initial basis, for dual recovery
    init_col = basis.copy()
    allowed = np.ones(n + n_art, dtype=bool)

    it = 0
    if n_art:
        tab[-1, n:n + n_art] = 1.0
        for i in art_rows:
            tab[-1] -= tab[i]
        status, it = _run(tab, basis, allowed, tol, max_iter, it)
        if status is Status.ITERATION_LIMIT:
            return Solution(Status.ITERATION_LIMIT, iterations=it)
        if -tab[-1, -1] > tol.feasibility * max(1.0, np.abs(sf.b).max(initial=0.0)):
            return Solution(Status.INFEASIBLE, iterations=it)
        # drive artificials out of the basis; drop redundant rows
        keep = np.ones(m, dtype=bool)
        for i in range(m):
            if basis[i] >= n:
                row = tab[i, :n]
                nz = np.flatnonzero(np.abs(row) > 1e-7)
                if nz.size:
                    _pivot(tab, i, int(nz[0]))
                    basis[i] = int(nz[0])
                else:
                    keep[i] = False
        allowed[n:] = False
        if not keep.all():
            idx = np.concatenate([np.flatnonzero(keep), [m]])
            tab = tab[idx]
            basis = basis[keep]
            init_rows = np.flatnonzero(keep)
        else:
            init_rows = np.arange(m)
    else:
        init_rows = np.arange(m)

    cost = np.zeros(n + n_art + 1)
    cost[:n] = sf.c
    tab[-1] = cost
    for i, bj in enumerate(basis):
        if cost[bj] != 0.0:
            tab[-1] -= cost[bj] * tab[i]
    status, it = _run(tab, basis, allowed, tol, max_iter, it)
    if status is not Status.OPTIMAL:
        return Solution(status, iterations=it)

    y = np.zeros(n + n_art)
    y[basis] = tab[:-1, -1]
    x = sf.to_x(y[:n])
    obj_min = float(sf.c @ y[:n]) + sf.c0

    # standard-form duals pi_i = cost(col_i) - rc(col_i) for the initial identity columns
    pi = np.zeros(m)
    for i in init_rows:
        col = init_col[i]
        pi[i] = cost[col] - tab[-1, col]
    flip = -1.0 if model.maximize else 1.0
    shadow = flip * sf.sign[: sf.m_model] * pi[: sf.m_model]
    obj = -obj_min if model.maximize else obj_min
    return Solution(
        Status.OPTIMAL,
        objective=obj,
        x=x,
        duals=shadow,
        dual_objective=dual_objective(model, shadow, tol),
        iterations=it,
    )


def dual_objective(model: LinearModel, duals: np.ndarray, tol: Tolerances = TOL) -> float:
    """Lagrangian dual value for row shadow prices ``duals``.

    Reduced costs are priced at the bound they push toward; NaN when that
    bound is infinite (dual infeasible).
    """
    r = model.c - model.A.T @ duals
    scale = max(1.0, float(np.abs(model.c).max(initial=0.0)))
    push_up = r > tol.gap * scale if model.maximize else r < -tol.gap * scale
    push_dn = r < -tol.gap * scale if model.maximize else r > tol.gap * scale
    bound = np.zeros_like(r)
    bound[push_up] = model.ub[push_up]
    bound[push_dn] = model.lb[push_dn]
    active = push_up | push_dn
    if not np.all(np.isfinite(bound[active])):
        return float("nan")
    return float(model.rhs @ duals + r[active] @ bound[active])
