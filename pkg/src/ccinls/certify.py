"""Conditional-convexity certificates for anchor subsets.

A subset ``S`` of anchors is admissible when no convex combination of its
members weakly dominates another anchor (smaller or equal inputs, larger or
equal level, not identical).  For anchor ``k`` the follower LP computes

    tau_k = max min(t_1, ..., t_s, t_plus)
    s.t.    sum_j lam_j x_j + t = x_k,  sum_j lam_j alpha_j - t_plus = alpha_k,
            sum_j lam_j = 1,  lam >= 0,

and ``S`` fails at ``k`` when ``tau_k > tol``, or when ``|tau_k| <= tol`` and
some combination reaching ``k`` with all slacks non-negative has positive
total slack.

Admissibility is inherited by subsets, so any failing support yields a valid
cut on every superset.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import Sequence

import numpy as np

from .anchors import AnchorSet
from .opt import INF, ModelBuilder, solve_lp


class CcError(RuntimeError):
    pass


@dataclass(frozen=True)
class CcCheck:
    k: int
    tau: float
    max_slack: float
    passed: bool


def follower_lp(X: np.ndarray, alpha: np.ndarray, S: Sequence[int], k: int, mode: str = "tau"):
    """Follower LP for anchor ``k`` over combinations of anchors ``S``.

    ``mode="tau"`` maximizes the smallest slack; ``mode="slack"`` maximizes
    the total slack with every slack held non-negative.
    """
    s = X.shape[1]
    mb = ModelBuilder(maximize=True, name=f"follower_{k}")
    lam = [mb.add_var(f"lam_{j}") for j in S]
    if mode == "tau":
        tm = [mb.add_var(f"tminus_{r}", -INF, INF) for r in range(s)]
        tp = mb.add_var("tplus", -INF, INF)
        tau = mb.add_var("tau", -INF, INF, obj=1.0)
    elif mode == "slack":
        tm = [mb.add_var(f"tminus_{r}", 0.0, INF, obj=1.0) for r in range(s)]
        tp = mb.add_var("tplus", 0.0, INF, obj=1.0)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    for r in range(s):
        row = {lam[i]: X[j, r] for i, j in enumerate(S)}
        row[tm[r]] = 1.0
        mb.add_row(row, "=", X[k, r], f"x_{r}")
    row = {lam[i]: alpha[j] for i, j in enumerate(S)}
    row[tp] = -1.0
    mb.add_row(row, "=", alpha[k], "y")
    mb.add_row({l: 1.0 for l in lam}, "=", 1.0, "sum")
    if mode == "tau":
        for r in range(s):
            mb.add_row({tm[r]: 1.0, tau: -1.0}, ">=", 0.0, f"tm_{r}")
        mb.add_row({tp: 1.0, tau: -1.0}, ">=", 0.0, "tp")
    return mb.build()


def verify_conditional_convexity(active_set: Sequence[int], anchors: AnchorSet,
                                 tau_tol: float = 1e-7, slack_tol: float = 1e-7,
                                 backend: str = "highs") -> list[CcCheck]:
    """Per-anchor report: one follower LP per ``k``, plus a total-slack LP
    whenever ``|tau_k| <= tau_tol``."""
    S = sorted(int(j) for j in active_set)
    if not S:
        raise ValueError("active set must be non-empty")
    X, alpha = anchors.x, anchors.alpha
    out = []
    for k in range(anchors.m):
        sol = solve_lp(follower_lp(X, alpha, S, k, "tau"), backend)
        if not sol.optimal:
            raise CcError(f"follower LP for anchor {k} returned {sol.status.value}")
        tau = float(sol.objective)
        slack = 0.0
        if tau > tau_tol:
            passed = False
        elif tau < -tau_tol:
            passed = True
        else:
            sl = solve_lp(follower_lp(X, alpha, S, k, "slack"), backend)
            slack = float(sl.objective) if sl.optimal else 0.0
            passed = slack <= slack_tol
        out.append(CcCheck(k, tau, slack, passed))
    return out


@dataclass(frozen=True)
class Certificate:
    """Outcome of :func:`certify`: ``tau`` for every anchor and, on failure,
    the supports of the dominating combinations found (one per failing anchor,
    duplicates removed)."""

    passed: bool
    tau: np.ndarray
    violators: tuple[int, ...] = ()
    supports: tuple[tuple[int, ...], ...] = ()

    @property
    def support(self) -> tuple[int, ...]:
        return self.supports[0] if self.supports else ()


def _joint_model(X, alpha, S, ks, mode):
    """Block-diagonal stack of follower LPs for anchors ``ks``."""
    m_s, s = len(S), X.shape[1]
    mb = ModelBuilder(maximize=True, name="followers")
    XS, aS = X[S], alpha[S]
    lam_cols = []
    for k in ks:
        lam = [mb.add_var(f"lam_{k}_{j}") for j in S]
        lam_cols.append(lam)
        if mode == "tau":
            tm = [mb.add_var(f"tm_{k}_{r}", -INF, INF) for r in range(s)]
            tp = mb.add_var(f"tp_{k}", -INF, INF)
            tau = mb.add_var(f"tau_{k}", -INF, INF, obj=1.0)
        else:
            tm = [mb.add_var(f"tm_{k}_{r}", 0.0, INF, obj=1.0) for r in range(s)]
            tp = mb.add_var(f"tp_{k}", 0.0, INF, obj=1.0)
        for r in range(s):
            row = {lam[i]: XS[i, r] for i in range(m_s)}
            row[tm[r]] = 1.0
            mb.add_row(row, "=", X[k, r])
        row = {lam[i]: aS[i] for i in range(m_s)}
        row[tp] = -1.0
        mb.add_row(row, "=", alpha[k])
        mb.add_row({l: 1.0 for l in lam}, "=", 1.0)
        if mode == "tau":
            for r in range(s):
                mb.add_row({tm[r]: 1.0, tau: -1.0}, ">=", 0.0)
            mb.add_row({tp: 1.0, tau: -1.0}, ">=", 0.0)
    width = m_s + s + (2 if mode == "tau" else 1)
    return mb.build(), width


def certify(S: Sequence[int], anchors: AnchorSet, tau_tol: float = 1e-7,
            slack_tol: float = 1e-7, backend: str = "highs") -> Certificate:
    """Same decision rule as :func:`verify_conditional_convexity`, batched.

    All follower LPs are solved as one block-diagonal LP; the total-slack
    LPs for boundary anchors are batched the same way (for ``k`` in ``S``
    the block is always feasible, others are solved one by one).
    """
    S = sorted(int(j) for j in S)
    if not S:
        raise ValueError("active set must be non-empty")
    X, alpha = anchors.x, anchors.alpha
    m, s = X.shape
    ks = list(range(m))
    model, width = _joint_model(X, alpha, S, ks, "tau")
    sol = solve_lp(model, backend)
    if not sol.optimal:
        raise CcError(f"joint follower LP returned {sol.status.value}")
    blocks = sol.x.reshape(m, width)
    tau = blocks[:, -1].copy()
    bad = np.flatnonzero(tau > tau_tol)
    if bad.size:
        bad = bad[np.argsort(-tau[bad], kind="stable")]
        return _failed(tau, bad, [_support(S, blocks[k, : len(S)]) for k in bad])
    edge = [k for k in ks if abs(tau[k]) <= tau_tol]
    inside = [k for k in edge if k in S]
    outside = [k for k in edge if k not in S]
    ks_bad, sups = [], []
    if inside:
        model, width = _joint_model(X, alpha, S, inside, "slack")
        sol = solve_lp(model, backend)
        if sol.optimal:
            blocks = sol.x.reshape(len(inside), width)
            slack = blocks[:, len(S):].sum(axis=1)
            for i in np.flatnonzero(slack > slack_tol):
                ks_bad.append(inside[i])
                sups.append(_support(S, blocks[i, : len(S)]))
    for k in outside:
        model, width = _joint_model(X, alpha, S, [k], "slack")
        sol = solve_lp(model, backend)
        if sol.optimal and sol.objective > slack_tol:
            ks_bad.append(k)
            sups.append(_support(S, sol.x[: len(S)]))
    if ks_bad:
        return _failed(tau, ks_bad, sups)
    return Certificate(True, tau)


def _failed(tau, ks, sups):
    seen = dict.fromkeys(tuple(sorted(s)) for s in sups)
    return Certificate(False, tau, tuple(int(k) for k in ks), tuple(seen))


def _support(S, lam):
    lam = np.asarray(lam)
    sup = tuple(S[i] for i in np.flatnonzero(lam > 1e-9))
    return sup or tuple(S)


def subset_conflicts(anchors: AnchorSet, tau_tol: float = 1e-7, slack_tol: float = 1e-7,
                     coplanar_tol: float = 1e-9) -> tuple[np.ndarray, np.ndarray]:
    """Inadmissible singletons and pairs, in closed form.

    Returns ``(bad_single, bad_pairs)``: a boolean mask over anchors and an
    ``(q, 2)`` array of index pairs ``i < j`` (both singletons admissible)
    that either admit no monotone hyperplane through both points or fail
    the follower test.  On a segment each slack is affine in the mixing
    weight, so ``tau`` is attained at an endpoint or at a crossing of two
    slack lines, and the total slack at an endpoint of the region where all
    slacks are non-negative.
    """
    X, a = anchors.x, anchors.alpha
    m, s = X.shape
    P = np.column_stack([X, a])
    sign = np.r_[-np.ones(s), 1.0]  # slack_r = sign_r * (p_r - P_k,r) for combination p
    # singletons: f[j, k, r]
    f = sign * (P[:, None, :] - P[None, :, :])
    single_fail = _decide(f.min(axis=2), f.min(axis=2) >= 0, f.sum(axis=2), tau_tol, slack_tol)
    np.fill_diagonal(single_fail, False)
    bad_single = single_fail.any(axis=1)

    good = np.flatnonzero(~bad_single)
    if good.size < 2:
        return bad_single, np.zeros((0, 2), dtype=int)
    pairs = np.array(list(combinations(good.tolist(), 2)))
    i, j = pairs[:, 0], pairs[:, 1]
    # alpha strictly increasing, so the plane needs v @ (x_j - x_i) = u (a_j - a_i) > 0
    noplane = (X[j] - X[i]).max(axis=1) <= coplanar_tol

    c = f[i]                    # (q, m, s+1): slack at lam = 0
    g = f[j] - c                # slope in lam
    cand = [np.zeros(len(pairs)), np.ones(len(pairs))]
    cands = np.stack(cand, axis=1)[:, None, :].repeat(m, axis=1)  # (q, m, 2)
    extra = []
    for r, q in combinations(range(s + 1), 2):
        den = g[:, :, r] - g[:, :, q]
        with np.errstate(divide="ignore", invalid="ignore"):
            lam = np.where(np.abs(den) > 1e-15, (c[:, :, q] - c[:, :, r]) / den, 0.0)
        extra.append(np.clip(lam, 0.0, 1.0))
    if extra:
        cands = np.concatenate([cands, np.stack(extra, axis=2)], axis=2)
    vals = c[:, :, None, :] + cands[..., None] * g[:, :, None, :]  # (q, m, C, s+1)
    tau = vals.min(axis=3).max(axis=2)

    # region where every slack is non-negative: an interval [lo, hi]
    with np.errstate(divide="ignore", invalid="ignore"):
        root = -c / g
    lo = np.where(g > 0, root, -np.inf).max(axis=2)
    hi = np.where(g < 0, root, np.inf).min(axis=2)
    flat_ok = np.where(g == 0, c >= 0, True).all(axis=2)
    lo, hi = np.maximum(lo, 0.0), np.minimum(hi, 1.0)
    feasible = flat_ok & (lo <= hi)
    tot = lambda t: (c + np.where(np.isfinite(t), t, 0.0)[..., None] * g).sum(axis=2)
    total = np.where(feasible, np.maximum(tot(lo), tot(hi)), 0.0)
    pair_fail = _decide(tau, feasible, total, tau_tol, slack_tol).any(axis=1)
    return bad_single, pairs[noplane | pair_fail]


def _decide(tau, slack_feasible, total_slack, tau_tol, slack_tol):
    edge = (np.abs(tau) <= tau_tol) & slack_feasible & (total_slack > slack_tol)
    return (tau > tau_tol) | edge
