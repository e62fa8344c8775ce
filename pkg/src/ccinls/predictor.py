"""Conditionally convex piece-wise linear prediction from an anchor set.

For each evaluation point a mixed-binary model selects a set of coplanar
anchors (``b_j = 0``) spanning a monotone facet and maximizes the
interpolated value ``theta``, subject to the selected set passing the
follower test of :mod:`ccinls.certify`.

Two exact routes are available.  ``"single_level"`` embeds, for every anchor
``k``, the primal and dual feasibility of the follower LP plus one shared
strong-duality row, so the MILP itself only admits facets with
``tau_k <= 0``.  ``"decomposed"`` keeps only the leader rows and separates
inadmissible selections lazily: each failing follower yields a no-good cut on
the support of the dominating combination.  Both routes solve the same
problem per evaluation point; nothing is shared between points.
"""

from __future__ import annotations

import enum
import logging
import os
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .anchors import AnchorSet
from .certify import CcCheck, CcError, Certificate, certify, subset_conflicts, verify_conditional_convexity
from .opt import INF, LinearModel, ModelBuilder, Solution, Status, solve_lp, solve_milp, write_lp

log = logging.getLogger(__name__)

FORMULATIONS = ("single_level", "decomposed", "enumerate")


class InfeasiblePoint(CcError):
    """No admissible facet reaches the evaluation point."""


class RepairExhausted(CcError):
    """Boundary repair did not produce a certified facet within the round budget."""


class DeltaMode(str, enum.Enum):
    LEXICOGRAPHIC = "lexicographic"
    EPSILON = "epsilon"


class InfeasiblePolicy(str, enum.Enum):
    ERROR = "error"
    FLOOR = "floor"


@dataclass(frozen=True)
class CcModelConfig:
    """Settings for model assembly and the predict loop.

    ``big_M=None`` selects a data-driven constant (see :func:`default_big_M`).
    ``standardize`` rescales anchors to unit ranges before assembly; results
    are mapped back to the original units.  ``conflict_rows`` appends the
    closed-form singleton and pair exclusions from
    :func:`ccinls.certify.subset_conflicts` (valid inequalities).
    ``max_separation_rounds`` bounds the lazy cut loop of the decomposed route;
    ``max_repair_rounds`` bounds boundary repairs of the single-level route.
    """

    big_M: float | None = None
    delta_mode: DeltaMode = DeltaMode.LEXICOGRAPHIC
    delta: float = 1e-6
    tau_tol: float = 1e-7
    slack_tol: float = 1e-7
    max_repair_rounds: int = 10
    infeasible_policy: InfeasiblePolicy = InfeasiblePolicy.FLOOR
    backend: str = "highs"
    standardize: bool = True
    dump_lp: str | None = None
    formulation: str = "single_level"
    conflict_rows: bool = True
    max_separation_rounds: int = 1000

    def __post_init__(self):
        object.__setattr__(self, "delta_mode", DeltaMode(self.delta_mode))
        object.__setattr__(self, "infeasible_policy", InfeasiblePolicy(self.infeasible_policy))
        if self.big_M is not None and not self.big_M > 0:
            raise ValueError("big_M must be positive")
        if self.delta_mode is DeltaMode.EPSILON and not self.delta > 0:
            raise ValueError("delta must be positive in epsilon mode")
        if self.max_repair_rounds < 0:
            raise ValueError("max_repair_rounds must be non-negative")
        if self.formulation not in FORMULATIONS:
            raise ValueError(f"formulation must be one of {FORMULATIONS}")


@dataclass(frozen=True)
class Layout:
    """Column positions of every variable block in the assembled model."""

    m: int
    s: int

    @property
    def theta(self) -> int:
        return 0

    @property
    def b(self) -> np.ndarray:
        return 1 + np.arange(self.m)

    @property
    def lam(self) -> np.ndarray:
        return 1 + self.m + np.arange(self.m)

    @property
    def v(self) -> np.ndarray:
        return 1 + 2 * self.m + np.arange(self.s)

    @property
    def u(self) -> int:
        return 1 + 2 * self.m + self.s

    @property
    def u0(self) -> int:
        return self.u + 1

    @property
    def d(self) -> np.ndarray:
        return self.u0 + 1 + np.arange(self.m)

    @property
    def _follower0(self) -> int:
        return self.u0 + 1 + self.m

    @property
    def follower_width(self) -> int:
        return self.m + self.s + 2

    def lamk(self, k: int) -> np.ndarray:
        return self._follower0 + k * self.follower_width + np.arange(self.m)

    def tminus(self, k: int) -> np.ndarray:
        return self._follower0 + k * self.follower_width + self.m + np.arange(self.s)

    def tplus(self, k: int) -> int:
        return self._follower0 + k * self.follower_width + self.m + self.s

    def tau(self, k: int) -> int:
        return self.tplus(k) + 1

    @property
    def _dual0(self) -> int:
        return self._follower0 + self.m * self.follower_width

    def vk(self, k: int) -> np.ndarray:
        return self._dual0 + k * (self.s + 2) + np.arange(self.s)

    def uk(self, k: int) -> int:
        return self._dual0 + k * (self.s + 2) + self.s

    def wk(self, k: int) -> int:
        return self.uk(k) + 1

    def z(self, j: int, k: int) -> int:
        return self._dual0 + self.m * (self.s + 2) + k * self.m + j

    @property
    def n_vars(self) -> int:
        return self._dual0 + self.m * (self.s + 2) + self.m * self.m


def default_big_M(anchors: AnchorSet) -> float:
    """``10 * max(coordinate ranges, level range, 1)``, enlarged when a facet needs it.

    The enlargement is twice the largest plane slack ``|d_j|`` that any
    admissible subset of at most ``s + 1`` anchors requires: for ``s + 1``
    points the monotone plane is unique (scaled so ``min(v, u) = 1``); for
    smaller subsets an LP finds the plane through them with the smallest
    worst-case slack.  Larger coplanar sets share a plane with one of these.
    """
    X, a = anchors.x, anchors.alpha
    ranges = np.concatenate([np.ptp(X, axis=0), [np.ptp(a)]])
    base = 10.0 * max(float(ranges.max()), 1.0)
    need = _facet_slack_bound(anchors)
    return float(max(base, 2.0 * need))


def _facet_slack_bound(anchors: AnchorSet, max_subsets: int = 50_000) -> float:
    from itertools import combinations

    X, a = anchors.x, anchors.alpha
    m, s = X.shape
    bad_single, bad_pairs = subset_conflicts(anchors)
    banned = {tuple(p) for p in bad_pairs.tolist()}
    ok = [j for j in range(m) if not bad_single[j]]

    def admissible(idx):
        return all(p not in banned for p in combinations(idx, 2))

    best = 0.0
    P = np.column_stack([X, a])  # points in (x, alpha) space
    for size in range(2, min(s + 1, len(ok)) + 1):
        combos = [c for c in combinations(ok, size) if admissible(c)]
        if len(combos) > max_subsets:
            pick = np.random.default_rng(0).choice(len(combos), max_subsets, replace=False)
            combos = [combos[i] for i in pick]
        for idx in combos:
            idx = list(idx)
            if size == s + 1:
                base = P[idx[0]]
                _, sv, vt = np.linalg.svd(P[idx[1:]] - base)
                if sv.size < s or sv[-1] < 1e-12 * max(1.0, sv[0]):
                    res = min_slack_plane(X, a, idx)  # degenerate: a family of planes
                    best = max(best, res[3]) if res is not None else best
                    continue
                nvec = vt[-1]  # coefficients on (x..., alpha): (-v, u)
                if nvec[-1] < 0:
                    nvec = -nvec
                coefs = np.concatenate([-nvec[:-1], [nvec[-1]]])
                if np.any(coefs <= 1e-12):
                    continue
                coefs = coefs / coefs.min()
                v, u = coefs[:-1], coefs[-1]
                d = X @ v - u * a - (v @ base[:-1] - u * base[-1])
                best = max(best, float(np.abs(d).max()))
            else:
                res = min_slack_plane(X, a, idx)
                if res is not None:
                    best = max(best, res[3])
    return best


def min_slack_plane(X: np.ndarray, a: np.ndarray, idx: Sequence[int]):
    """Monotone plane ``-v.x + u*alpha + u0 = 0`` (``v, u >= 1``) through the anchors
    ``idx`` with the smallest worst-case slack over all anchors.

    Returns ``(v, u, u0, max_slack)`` or ``None`` when no such plane exists.
    """
    from scipy.optimize import linprog

    m, s = X.shape
    idx = list(idx)
    G = np.column_stack([X, -a, -np.ones(m)])  # d_l = G_l @ (v, u, u0)
    A_ub = np.block([[G, -np.ones((m, 1))], [-G, -np.ones((m, 1))]])
    A_eq = np.column_stack([G[idx], np.zeros((len(idx), 1))])
    res = linprog(np.r_[np.zeros(s + 2), 1.0], A_ub=A_ub, b_ub=np.zeros(2 * m),
                  A_eq=A_eq, b_eq=np.zeros(len(idx)),
                  bounds=[(1, None)] * (s + 1) + [(None, None), (0, None)], method="highs")
    if res.status != 0:
        return None
    z = res.x
    return z[:s], float(z[s]), float(z[s + 1]), float(z[-1])


def has_monotone_plane(X: np.ndarray, a: np.ndarray, idx: Sequence[int], tol: float = 1e-12) -> bool:
    """Whether some plane with ``v, u >= 1`` passes through every anchor in ``idx``."""
    idx = sorted(int(i) for i in idx)
    q, s = len(idx), X.shape[1]
    if q == 1:
        return True
    if q == 2:
        # levels strictly increase with the index
        return bool((X[idx[1]] - X[idx[0]]).max() > tol)
    if q == s + 1:
        P = np.column_stack([X[idx], a[idx]])
        _, sv, vt = np.linalg.svd(P[1:] - P[0])
        if sv.size == s and sv[-1] > 1e-10 * max(1.0, sv[0]):
            nvec = vt[-1]
            coefs = np.r_[-nvec[:-1], nvec[-1]] * np.sign(nvec[-1] or 1.0)
            return bool(np.all(coefs > tol * np.abs(coefs).max()))
    return min_slack_plane(X, a, idx) is not None


def build_cc_model(x0: Sequence[float], anchors: AnchorSet, cfg: CcModelConfig | None = None,
                   big_M: float | None = None) -> LinearModel:
    """Assemble the single-level MILP for evaluation point ``x0``.

    The objective is ``theta`` alone for lexicographic mode (the second stage
    swaps it for ``sum(b)``) and ``theta + delta * sum(b)`` in epsilon mode.
    """
    return _assemble(x0, anchors, cfg or CcModelConfig(), big_M, full=True)


def build_leader_model(x0: Sequence[float], anchors: AnchorSet, cfg: CcModelConfig | None = None,
                       big_M: float | None = None) -> LinearModel:
    """Leader rows only (selection, interpolation, plane and Big-M rows).

    Columns coincide with the first ``1 + 3m + s + 2`` columns of
    :func:`build_cc_model`; the follower test is left to lazy separation.
    """
    return _assemble(x0, anchors, cfg or CcModelConfig(), big_M, full=False)


def _assemble(x0, anchors: AnchorSet, cfg: CcModelConfig, big_M, full: bool) -> LinearModel:
    X, alpha = anchors.x, anchors.alpha
    m, s = X.shape
    if m == 0:
        raise ValueError("anchor set is empty")
    x0 = np.asarray(x0, dtype=float).ravel()
    if x0.size != s:
        raise ValueError(f"x0 has {x0.size} components, anchors have {s}")
    if not np.all(np.isfinite(x0)):
        raise ValueError("x0 must be finite")
    M = big_M or cfg.big_M or default_big_M(anchors)
    L = Layout(m, s)
    mb = ModelBuilder(maximize=True, name="cc_inls" if full else "cc_leader")
    eps_obj = cfg.delta if cfg.delta_mode is DeltaMode.EPSILON else 0.0

    # variables, in Layout order
    mb.add_var("theta", -INF, INF, obj=1.0)
    for j in range(m):
        mb.add_var(f"b_{j}", kind="B", obj=eps_obj)
    for j in range(m):
        mb.add_var(f"lam_{j}", 0.0, INF)
    for r in range(s):
        mb.add_var(f"v_{r}", 1.0, INF)
    mb.add_var("u", 1.0, INF)
    mb.add_var("u0", -INF, INF)
    for j in range(m):
        mb.add_var(f"d_{j}", -INF, INF)
    if not full:
        _leader_rows(mb, L, X, alpha, x0, M, cc_rows=False)
        return mb.build()
    for k in range(m):
        for j in range(m):
            mb.add_var(f"lamk_{k}_{j}", 0.0, INF)
        for r in range(s):
            mb.add_var(f"tminus_{k}_{r}", -INF, INF)
        mb.add_var(f"tplus_{k}", -INF, INF)
        mb.add_var(f"tau_{k}", -INF, INF)
    for k in range(m):
        for r in range(s):
            mb.add_var(f"vk_{k}_{r}", 0.0, INF)
        mb.add_var(f"uk_{k}", -INF, 0.0)
        mb.add_var(f"wk_{k}", -INF, INF)
    for k in range(m):
        for j in range(m):
            mb.add_var(f"z_{k}_{j}", 0.0, INF)
    assert len(mb._names) == L.n_vars

    _leader_rows(mb, L, X, alpha, x0, M, cc_rows=True)
    b = L.b
    # follower primal
    for k in range(m):
        lk, tm = L.lamk(k), L.tminus(k)
        for r in range(s):
            row = {int(lk[j]): X[j, r] for j in range(m)}
            row[int(tm[r])] = 1.0
            mb.add_row(row, "=", X[k, r], f"F_x_{k}_{r}")
        row = {int(lk[j]): alpha[j] for j in range(m)}
        row[L.tplus(k)] = -1.0
        mb.add_row(row, "=", alpha[k], f"F_y_{k}")
        mb.add_row({int(lk[j]): 1.0 for j in range(m)}, "=", 1.0, f"F_sum_{k}")
        for r in range(s):
            mb.add_row({int(tm[r]): 1.0, L.tau(k): -1.0}, ">=", 0.0, f"F_tm_{k}_{r}")
        mb.add_row({L.tplus(k): 1.0, L.tau(k): -1.0}, ">=", 0.0, f"F_tp_{k}")
    # follower dual
    for k in range(m):
        vk = L.vk(k)
        for j in range(m):
            row = {int(vk[r]): -X[j, r] for r in range(s)}
            row.update({L.uk(k): -alpha[j], L.wk(k): -1.0, int(b[j]): -M})
            mb.add_row(row, "<=", 0.0, f"D_lam_{k}_{j}")
        row = {int(vk[r]): 1.0 for r in range(s)}
        row[L.uk(k)] = -1.0
        mb.add_row(row, "=", 1.0, f"D_norm_{k}")
    # strong duality, linearized with z_jk = b_j * lamk_kj
    row: dict[int, float] = {}
    for k in range(m):
        row[L.tau(k)] = 1.0
        for j in range(m):
            row[L.z(j, k)] = -M
        for r in range(s):
            row[int(L.vk(k)[r])] = -X[k, r]
        row[L.uk(k)] = -alpha[k]
        row[L.wk(k)] = -1.0
    mb.add_row(row, "=", 0.0, "SD")
    for k in range(m):
        lk = L.lamk(k)
        for j in range(m):
            z = L.z(j, k)
            mb.add_row({z: 1.0, int(b[j]): -1.0}, "<=", 0.0, f"MC_b_{k}_{j}")
            mb.add_row({z: 1.0, int(lk[j]): -1.0}, "<=", 0.0, f"MC_l_{k}_{j}")
            mb.add_row({z: 1.0, int(lk[j]): -1.0, int(b[j]): -1.0}, ">=", -1.0, f"MC_u_{k}_{j}")
    return mb.build()


def _leader_rows(mb: ModelBuilder, L: Layout, X, alpha, x0, M: float, cc_rows: bool) -> None:
    m, s = X.shape
    lam, b, d = L.lam, L.b, L.d
    # leader
    for r in range(s):
        mb.add_row({int(lam[j]): X[j, r] for j in range(m)}, "<=", x0[r], f"L_x_{r}")
    row = {int(lam[j]): alpha[j] for j in range(m)}
    row[L.theta] = -1.0
    mb.add_row(row, ">=", 0.0, "L_y")
    mb.add_row({int(lam[j]): 1.0 for j in range(m)}, "=", 1.0, "L_sum")
    for j in range(m):
        mb.add_row({int(lam[j]): 1.0, int(b[j]): 1.0}, "<=", 1.0, f"L_sel_{j}")
    for j in range(m):
        row = {int(L.v[r]): -X[j, r] for r in range(s)}
        row.update({L.u: alpha[j], L.u0: 1.0, int(d[j]): 1.0})
        mb.add_row(row, "=", 0.0, f"L_plane_{j}")
    if cc_rows:
        for k in range(m):
            mb.add_row({L.tau(k): 1.0}, "<=", 0.0, f"L_cc_{k}")
    for j in range(m):
        mb.add_row({int(d[j]): 1.0, int(b[j]): -M}, "<=", 0.0, f"L_dhi_{j}")
        mb.add_row({int(d[j]): 1.0, int(b[j]): M}, ">=", 0.0, f"L_dlo_{j}")


def no_good_cut(model: LinearModel, selected: Iterable[int]) -> LinearModel:
    """Forbid the selected anchor set (and every superset): ``sum_{j in S} b_j >= 1``."""
    sel = sorted(int(j) for j in selected)
    L_b = 1 + np.asarray(sel)
    name = "CUT_" + "_".join(map(str, sel))
    return model.with_rows([({int(c): 1.0 for c in L_b}, ">=", 1.0, name)])


@dataclass(frozen=True)
class Hyperplane:
    v: np.ndarray
    u: float
    u0: float

    def value(self, x: np.ndarray) -> float:
        """Facet height ``(v @ x - u0) / u``."""
        return float((self.v @ np.asarray(x, dtype=float) - self.u0) / self.u)


@dataclass
class Prediction:
    theta: float
    lambda_: np.ndarray
    active_set: tuple[int, ...]
    selected: tuple[int, ...]
    hyperplane: Hyperplane | None
    tau: np.ndarray
    repair_rounds_used: int = 0
    extrapolated: bool = False
    big_M: float = float("nan")
    x0: np.ndarray | None = None
    cuts: list[tuple[int, ...]] = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)

    @property
    def degenerate_facet(self) -> bool:
        """True when the facet does not pin down a unique gradient."""
        return self.hyperplane is None or len(self.active_set) < (0 if self.x0 is None else len(self.x0)) + 1

    def to_dict(self) -> dict:
        hp = None if self.hyperplane is None else {
            "v": self.hyperplane.v.tolist(), "u": self.hyperplane.u, "u0": self.hyperplane.u0}
        return {
            "x0": None if self.x0 is None else self.x0.tolist(),
            "theta": self.theta,
            "lambda": self.lambda_.tolist(),
            "active_set": list(self.active_set),
            "selected": list(self.selected),
            "hyperplane": hp,
            "tau": self.tau.tolist(),
            "repair_rounds_used": self.repair_rounds_used,
            "extrapolated": self.extrapolated,
            "degenerate_facet": self.degenerate_facet,
            "big_M": self.big_M,
            "cuts": [list(c) for c in self.cuts],
            "diagnostics": self.diagnostics,
        }


class _Scaler:
    """Per-coordinate affine map of anchors onto unit ranges."""

    def __init__(self, anchors: AnchorSet, enabled: bool):
        X, a = anchors.x, anchors.alpha
        if enabled:
            self.xlo = X.min(axis=0)
            self.xr = np.where(np.ptp(X, axis=0) > 0, np.ptp(X, axis=0), 1.0)
            self.alo = float(a.min())
            self.ar = float(np.ptp(a)) if np.ptp(a) > 0 else 1.0
        else:
            self.xlo = np.zeros(X.shape[1])
            self.xr = np.ones(X.shape[1])
            self.alo, self.ar = 0.0, 1.0
        self.anchors = AnchorSet((X - self.xlo) / self.xr, (a - self.alo) / self.ar,
                                 anchors.strategy, anchors.centroid_stat)

    def x(self, x0):
        return (np.asarray(x0, dtype=float) - self.xlo) / self.xr

    def theta_back(self, t):
        return self.alo + self.ar * t

    def plane_back(self, v, u, u0) -> Hyperplane:
        vo = v / self.xr
        uo = u / self.ar
        u0o = u0 + float(v @ (self.xlo / self.xr)) - u * self.alo / self.ar
        c = 1.0 / min(float(vo.min()), uo)
        return Hyperplane(vo * c, uo * c, u0o * c)


def basic_candidates(X: np.ndarray, alpha: np.ndarray, x0: np.ndarray, feas_tol: float = 1e-9):
    """Every basic feasible point of ``max sum(lam alpha)`` s.t. ``sum(lam x) <= x0``,
    ``lam`` in the simplex, over all supports of size at most ``s + 1``.

    A support of size ``q`` is paired with ``q - 1`` tight input rows and the
    square system is solved in batch.  Returns ``(values, supports, lams)``
    sorted by value (descending), ties by support size.
    """
    from itertools import combinations

    m, s = X.shape
    vals, sups, lams = [], [], []
    ok = np.all(X <= x0 + feas_tol, axis=1)
    for j in np.flatnonzero(ok):
        vals.append(alpha[j])
        sups.append((int(j),))
        lams.append(np.ones(1))
    for q in range(2, min(s + 1, m) + 1):
        supp = np.array(list(combinations(range(m), q)))
        for T in combinations(range(s), q - 1):
            T = list(T)
            # rows: tight inputs, then the simplex row
            A = np.concatenate([np.transpose(X[supp][:, :, T], (0, 2, 1)),
                                np.ones((len(supp), 1, q))], axis=1)
            rhs = np.r_[x0[T], 1.0]
            det = np.linalg.det(A)
            good = np.abs(det) > 1e-12
            if not good.any():
                continue
            lam = np.linalg.solve(A[good], np.broadcast_to(rhs, (good.sum(), q))[..., None])[..., 0]
            sp = supp[good]
            keep = np.all(lam > 1e-12, axis=1)
            pts = np.einsum("nq,nqr->nr", lam, X[sp])
            keep &= np.all(pts <= x0 + feas_tol, axis=1)
            for lk, sk in zip(lam[keep], sp[keep]):
                vals.append(float(lk @ alpha[sk]))
                sups.append(tuple(int(i) for i in sk))
                lams.append(lk)
    order = sorted(range(len(vals)), key=lambda i: (-vals[i], len(sups[i])))
    return (np.array([vals[i] for i in order]), [sups[i] for i in order],
            [lams[i] for i in order])


def conflict_rows(anchors: AnchorSet, tau_tol: float = 1e-7, slack_tol: float = 1e-7) -> list:
    """Valid rows ``b_j >= 1`` / ``b_i + b_j >= 1`` for inadmissible singletons and pairs."""
    bad_single, bad_pairs = subset_conflicts(anchors, tau_tol, slack_tol)
    rows = [({1 + int(j): 1.0}, ">=", 1.0, f"CF_{j}") for j in np.flatnonzero(bad_single)]
    rows += [({1 + int(i): 1.0, 1 + int(j): 1.0}, ">=", 1.0, f"CF_{i}_{j}") for i, j in bad_pairs]
    return rows


class CcPredictor:
    """Evaluates the smoothed surface for one anchor set.

    The assembled model is built once; each point only changes the
    right-hand side of the input rows.
    """

    def __init__(self, anchors: AnchorSet, cfg: CcModelConfig | None = None):
        self.cfg = cfg or CcModelConfig()
        self.anchors = anchors
        self._sc = _Scaler(anchors, self.cfg.standardize)
        work = self._sc.anchors
        self.big_M = self.cfg.big_M or default_big_M(work)
        self._single = self.cfg.formulation == "single_level"
        build = build_cc_model if self._single else build_leader_model
        template = build(work.x[0], work, self.cfg, big_M=self.big_M)
        if self.cfg.conflict_rows:
            rows = conflict_rows(work, self.cfg.tau_tol, self.cfg.slack_tol)
            if rows:
                template = template.with_rows(rows)
        self._template = template
        self._layout = Layout(anchors.m, anchors.s)
        bad_single, bad_pairs = subset_conflicts(work, self.cfg.tau_tol, self.cfg.slack_tol)
        self._bad_single = bad_single
        self._bad_pairs = {tuple(p) for p in bad_pairs.tolist()}
        self._dumps = 0

    def _model_for(self, x0s: np.ndarray) -> LinearModel:
        rhs = self._template.rhs.copy()
        rhs[: self.anchors.s] = x0s
        return self._template.with_rhs(rhs)

    def _dump(self, model: LinearModel, tag: str) -> None:
        if not self.cfg.dump_lp:
            return
        os.makedirs(self.cfg.dump_lp, exist_ok=True)
        self._dumps += 1
        write_lp(model, os.path.join(self.cfg.dump_lp, f"model_{self._dumps:05d}_{tag}.lp"))

    def _milp(self, model: LinearModel, tag: str) -> Solution:
        self._dump(model, tag)
        sol = solve_milp(model, self.cfg.backend)
        if sol.status not in (Status.OPTIMAL, Status.INFEASIBLE):
            raise CcError(f"MILP solve returned {sol.status.value}: {sol.message}")
        return sol

    def _certify(self, S) -> Certificate:
        c = self.cfg
        return certify(S, self._sc.anchors, c.tau_tol, c.slack_tol, c.backend)

    def _stage2(self, model: LinearModel, theta_star: float) -> LinearModel:
        L = self._layout
        c2 = np.zeros(model.n_vars)
        c2[L.b] = 1.0
        return model.with_objective(c2).with_rows(
            [({L.theta: 1.0}, ">=", theta_star - self.cfg.tau_tol, "LEX_theta")])

    def _select_single(self, model: LinearModel) -> np.ndarray | None:
        """Selection maximizing theta, then sum(b) (or the weighted sum)."""
        L = self._layout
        sol = self._milp(model, "stage1")
        if sol.status is Status.INFEASIBLE:
            return None
        if self.cfg.delta_mode is DeltaMode.EPSILON:
            return np.round(sol.x[L.b])
        sol2 = self._milp(self._stage2(model, float(sol.x[L.theta])), "stage2")
        if not sol2.optimal:
            log.debug("second stage returned %s; keeping first-stage selection", sol2.status.value)
            return np.round(sol.x[L.b])
        return np.round(sol2.x[L.b])

    def _separate(self, model: LinearModel, cuts: list, active_only: bool, tag: str):
        """Lazy loop: solve, certify, cut the failing support, repeat."""
        L = self._layout
        while True:
            sol = self._milp(model, tag)
            if sol.status is Status.INFEASIBLE:
                return model, None
            bsel = np.round(sol.x[L.b])
            S = np.flatnonzero(bsel < 0.5)
            if active_only:
                S = S[sol.x[L.lam][S] > 1e-9]
            cert = self._certify(S)
            if cert.passed:
                return model, sol
            if len(cuts) >= self.cfg.max_separation_rounds:
                raise RepairExhausted(f"separation did not converge after {len(cuts)} cuts")
            for cut in cert.supports:
                cuts.append(cut)
                model = no_good_cut(model, cut)

    def _select_decomposed(self, model: LinearModel, cuts: list) -> np.ndarray | None:
        L = self._layout
        if self.cfg.delta_mode is DeltaMode.EPSILON:
            _, sol = self._separate(model, cuts, False, "leader")
            return None if sol is None else np.round(sol.x[L.b])
        model, sol = self._separate(model, cuts, True, "leader")
        if sol is None:
            return None
        _, sol2 = self._separate(self._stage2(model, float(sol.x[L.theta])), cuts, False, "stage2")
        if sol2 is None:
            # the first-stage active set is certified; drop everything else
            bsel = np.ones(self.anchors.m)
            bsel[np.flatnonzero((np.round(sol.x[L.b]) < 0.5) & (sol.x[L.lam] > 1e-9))] = 0.0
            return bsel
        return np.round(sol2.x[L.b])

    def _admissible(self, B: tuple[int, ...], failed: list, cuts: list) -> bool:
        from itertools import combinations

        if any(self._bad_single[j] for j in B):
            return False
        if any(p in self._bad_pairs for p in combinations(B, 2)):
            return False
        if any(f.issubset(B) for f in failed):
            return False
        work = self._sc.anchors
        if not has_monotone_plane(work.x, work.alpha, B):
            return False
        cert = self._certify(B)
        if cert.passed:
            return True
        for sup in cert.supports:
            failed.append(frozenset(sup))
            cuts.append(sup)
        return False

    def _select_enumerate(self, x0s: np.ndarray, cuts: list):
        """Scan basic points by value; the first admissible support is optimal."""
        cfg = self.cfg
        work = self._sc.anchors
        vals, sups, lams = basic_candidates(work.x, work.alpha, x0s)
        failed: list[frozenset] = []
        memo: dict[tuple, bool] = {}

        def ok(i):
            B = sups[i]
            if B not in memo:
                memo[B] = self._admissible(B, failed, cuts)
            return memo[B]

        first = next((i for i in range(len(vals)) if ok(i)), None)
        if first is None:
            return None
        theta = vals[first]
        if cfg.delta_mode is DeltaMode.EPSILON:
            window = theta - cfg.delta * len(sups[first])
            score = lambda i: vals[i] - cfg.delta * len(sups[i])
        else:
            window = theta - cfg.tau_tol
            score = lambda i: (-len(sups[i]), vals[i])
        best = first
        for i in range(first + 1, len(vals)):
            if vals[i] < window:
                break
            if score(i) > score(best) and ok(i):
                best = i
        bsel = np.ones(self.anchors.m)
        bsel[list(sups[best])] = 0.0
        return bsel, sups[best], lams[best]

    def _polish(self, model: LinearModel, bsel: np.ndarray) -> Solution:
        L = self._layout
        lb, ub = model.lb.copy(), model.ub.copy()
        lb[L.b] = bsel
        ub[L.b] = bsel
        c = np.zeros(model.n_vars)
        c[L.theta] = 1.0
        return solve_lp(model.with_bounds(lb, ub).with_objective(c).relaxed(), self.cfg.backend)

    def _floor(self, x0, rounds, cuts) -> Prediction:
        m = self.anchors.m
        return Prediction(theta=float(self.anchors.alpha[0]), lambda_=np.zeros(m), active_set=(),
                          selected=(), hyperplane=None, tau=np.full(m, np.nan),
                          repair_rounds_used=rounds, extrapolated=True, big_M=self.big_M,
                          x0=x0, cuts=cuts)

    def _sd_residual(self, x: np.ndarray) -> float:
        """Largest per-anchor gap between follower primal and dual objectives."""
        L, X, a = self._layout, self._sc.anchors.x, self._sc.anchors.alpha
        gaps = [x[L.tau(k)] - self.big_M * sum(x[L.z(j, k)] for j in range(L.m))
                - X[k] @ x[L.vk(k)] - a[k] * x[L.uk(k)] - x[L.wk(k)] for k in range(L.m)]
        return float(np.max(np.abs(gaps)))

    def predict(self, x0: Sequence[float]) -> Prediction:
        cfg = self.cfg
        L = self._layout
        x0 = np.asarray(x0, dtype=float).ravel()
        if x0.size != self.anchors.s:
            raise ValueError(f"x0 has {x0.size} components, anchors have {self.anchors.s}")
        if not np.all(np.isfinite(x0)):
            raise ValueError("x0 must be finite")
        model = self._model_for(self._sc.x(x0))
        cuts: list[tuple[int, ...]] = []
        rounds = 0
        while True:
            fallback = None
            if self._single:
                bsel = self._select_single(model)
            elif cfg.formulation == "decomposed":
                bsel = self._select_decomposed(model, cuts)
            else:
                picked = self._select_enumerate(self._sc.x(x0), cuts)
                bsel = None if picked is None else picked[0]
                fallback = picked
            if bsel is None:
                if cfg.infeasible_policy is InfeasiblePolicy.ERROR:
                    raise InfeasiblePoint(f"no admissible facet for x0={x0.tolist()}")
                return self._floor(x0, rounds, cuts)
            selected = tuple(int(j) for j in np.flatnonzero(bsel < 0.5))
            sol = self._polish(model, bsel)
            if sol.optimal:
                x = sol.x
            elif fallback is not None:
                x = self._direct_point(*fallback)
            else:
                raise CcError(f"polish LP returned {sol.status.value}")
            cert = self._certify(selected)
            if cert.passed:
                break
            # boundary case missed by the embedded follower rows
            if rounds >= cfg.max_repair_rounds:
                raise RepairExhausted(
                    f"selection {selected} still fails after {rounds} repair rounds")
            offending = tuple(sorted(cert.support))
            model = resolve_boundary_case(model, offending)
            cuts.append(offending)
            rounds += 1

        lam = np.where(x[L.lam] > 1e-12, x[L.lam], 0.0)
        lam = lam / lam.sum()
        active = tuple(j for j in selected if lam[j] > 1e-9)
        diag = {"sd_residual": self._sd_residual(x)} if self._single else {}
        v, u, u0 = x[L.v], float(x[L.u]), float(x[L.u0])
        if 0 < len(active) <= L.s:
            # the solver's plane is arbitrary here; report the tightest one
            work = self._sc.anchors
            tight = min_slack_plane(work.x, work.alpha, active)
            if tight is not None:
                v, u, u0 = tight[0], tight[1], tight[2]
                diag["plane"] = "min_slack"
        hp = self._sc.plane_back(v, u, u0)
        return Prediction(
            theta=float(self._sc.theta_back(x[L.theta])), lambda_=lam, active_set=active,
            selected=selected, hyperplane=hp, tau=cert.tau, repair_rounds_used=rounds,
            extrapolated=False, big_M=self.big_M, x0=x0, cuts=cuts,
            diagnostics=diag)

    def _direct_point(self, bsel, support, lam_s) -> np.ndarray:
        """Leader point built from an enumerated support when Big-M blocks the polish LP."""
        L, work = self._layout, self._sc.anchors
        plane = min_slack_plane(work.x, work.alpha, support)
        if plane is None:
            raise CcError(f"no monotone plane through {support}")
        x = np.zeros(self._template.n_vars)
        x[L.lam[list(support)]] = lam_s
        x[L.theta] = float(lam_s @ work.alpha[list(support)])
        x[L.v], x[L.u], x[L.u0] = plane[0], plane[1], plane[2]
        x[L.b] = bsel
        return x

    def predict_batch(self, points: np.ndarray) -> list[Prediction]:
        pts = np.asarray(points, dtype=float)
        if pts.size == 0:
            return []
        if pts.ndim == 1:
            pts = pts[:, None] if self.anchors.s == 1 else pts[None, :]
        return [self.predict(p) for p in pts]


def resolve_boundary_case(model: LinearModel, offending: Iterable[int]) -> LinearModel:
    """Append the no-good cut for ``offending``; the caller re-solves."""
    return no_good_cut(model, offending)


def predict(x0: Sequence[float], anchors: AnchorSet, cfg: CcModelConfig | None = None) -> Prediction:
    return CcPredictor(anchors, cfg).predict(x0)


def predict_batch(points, anchors: AnchorSet, cfg: CcModelConfig | None = None) -> list[Prediction]:
    pts = np.asarray(points, dtype=float)
    if pts.size == 0:
        return []
    return CcPredictor(anchors, cfg).predict_batch(pts)


def marginal_products(pred: Prediction) -> np.ndarray:
    """Gradient ``v / u`` of the supporting facet (zeros on the flat floor)."""
    if pred.hyperplane is None:
        n = 0 if pred.x0 is None else pred.x0.size
        return np.zeros(n)
    return pred.hyperplane.v / pred.hyperplane.u


def elasticity(pred: Prediction, x0: Sequence[float] | None = None) -> np.ndarray:
    """Scale elasticity ``(v_r / u) * x0_r / theta`` per input."""
    if pred.theta == 0:
        raise ZeroDivisionError("elasticity undefined at theta = 0")
    x0 = pred.x0 if x0 is None else np.asarray(x0, dtype=float).ravel()
    return marginal_products(pred) * x0 / pred.theta
