"""Linear and mixed-binary model containers shared by every solver backend."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np
from scipy import sparse

INF = float("inf")


@dataclass(frozen=True)
class Tolerances:
    """Numerical tolerances used by the embedded solvers and their tests."""

    feasibility: float = 1e-7
    integrality: float = 1e-6
    gap: float = 1e-6
    pivot: float = 1e-9


TOL = Tolerances()


class Status(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    ITERATION_LIMIT = "iteration_limit"


_SENSES = ("<=", "=", ">=")


@dataclass(frozen=True)
class LinearModel:
    """Immutable LP/MILP: optimize ``c @ x`` subject to ``A @ x (sense) rhs``.

    ``kind`` holds ``"C"`` (continuous) or ``"B"`` (binary) per variable.
    ``row_sense`` holds one of ``"<="``, ``"="``, ``">="`` per row.
    """

    maximize: bool
    c: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    kind: np.ndarray
    A: sparse.csr_array
    row_sense: np.ndarray
    rhs: np.ndarray
    var_names: tuple[str, ...]
    row_names: tuple[str, ...]
    name: str = "model"

    def __post_init__(self):
        n = len(self.c)
        if self.A.shape != (len(self.rhs), n):
            raise ValueError(f"A has shape {self.A.shape}, expected {(len(self.rhs), n)}")
        for arr, label in ((self.lb, "lb"), (self.ub, "ub"), (self.kind, "kind")):
            if len(arr) != n:
                raise ValueError(f"{label} has length {len(arr)}, expected {n}")
        if len(self.row_sense) != len(self.rhs):
            raise ValueError("row_sense and rhs lengths differ")
        if not set(self.row_sense.tolist()) <= set(_SENSES):
            raise ValueError("row senses must be '<=', '=' or '>='")
        binary = self.kind == "B"
        if np.any(self.lb[binary] < 0) or np.any(self.ub[binary] > 1):
            raise ValueError("binary variables must have bounds within [0, 1]")
        if not (np.all(np.isfinite(self.c)) and np.all(np.isfinite(self.A.data))
                and np.all(np.isfinite(self.rhs))):
            raise ValueError("model coefficients must be finite")
        if np.any(np.isnan(self.lb)) or np.any(np.isnan(self.ub)):
            raise ValueError("bounds must not be NaN")

    @property
    def n_vars(self) -> int:
        return len(self.c)

    @property
    def n_rows(self) -> int:
        return len(self.rhs)

    @property
    def binaries(self) -> np.ndarray:
        return np.flatnonzero(self.kind == "B")

    def var_index(self, name: str | None = None) -> int:
        return self.var_names.index(name)

    def with_bounds(self, lb: np.ndarray | None = None, ub: np.ndarray | None = None) -> "LinearModel":
        return replace(
            self,
            lb=self.lb if lb is None else np.asarray(lb, dtype=float),
            ub=self.ub if ub is None else np.asarray(ub, dtype=float),
        )

    def with_rhs(self, rhs: np.ndarray) -> "LinearModel":
        return replace(self, rhs=np.asarray(rhs, dtype=float))

    def relaxed(self) -> "LinearModel":
        """Continuous relaxation (binaries become continuous on [0, 1])."""
        return replace(self, kind=np.full(self.n_vars, "C"))

    def with_objective(self, c: np.ndarray, maximize: bool | None = None) -> "LinearModel":
        return replace(self, c=np.asarray(c, dtype=float),
                       maximize=self.maximize if maximize is None else maximize)

    def with_rows(self, rows: Sequence[tuple[Mapping[int, float], str, float, str]]) -> "LinearModel":
        """Return a copy with extra rows ``(coefs, sense, rhs, name)`` appended."""
        if not rows:
            return self
        data, ri, ci = [], [], []
        for r, (coefs, _, _, _) in enumerate(rows):
            for j, a in coefs.items():
                ri.append(r)
                ci.append(j)
                data.append(a)
        extra = sparse.csr_array((data, (ri, ci)), shape=(len(rows), self.n_vars))
        return replace(
            self,
            A=sparse.vstack([self.A, extra], format="csr"),
            row_sense=np.concatenate([self.row_sense, [s for _, s, _, _ in rows]]),
            rhs=np.concatenate([self.rhs, [float(b) for _, _, b, _ in rows]]),
            row_names=self.row_names + tuple(nm for _, _, _, nm in rows),
        )

    def row_activity(self, x: np.ndarray) -> np.ndarray:
        return self.A @ x

    def max_violation(self, x: np.ndarray) -> float:
        """Largest absolute violation over rows and bounds at ``x``."""
        act = self.row_activity(x)
        viol = np.zeros(self.n_rows)
        le = self.row_sense == "<="
        ge = self.row_sense == ">="
        eq = self.row_sense == "="
        viol[le] = np.maximum(act[le] - self.rhs[le], 0.0)
        viol[ge] = np.maximum(self.rhs[ge] - act[ge], 0.0)
        viol[eq] = np.abs(act[eq] - self.rhs[eq])
        bound = np.maximum(np.maximum(self.lb - x, x - self.ub), 0.0)
        return float(max(viol.max(initial=0.0), bound.max(initial=0.0)))


@dataclass
class Solution:
    """Solver outcome; ``duals`` are row shadow prices d(objective)/d(rhs)."""

    status: Status
    objective: float = float("nan")
    x: np.ndarray | None = None
    duals: np.ndarray | None = None
    dual_objective: float = float("nan")
    nodes: int = 0
    iterations: int = 0
    message: str = ""

    @property
    def optimal(self) -> bool:
        return self.status is Status.OPTIMAL


@dataclass
class ModelBuilder:
    """Incremental construction of a :class:`LinearModel`."""

    maximize: bool = True
    name: str = "model"
    _lb: list[float] = field(default_factory=list)
    _ub: list[float] = field(default_factory=list)
    _kind: list[str] = field(default_factory=list)
    _c: list[float] = field(default_factory=list)
    _names: list[str] = field(default_factory=list)
    _data: list[float] = field(default_factory=list)
    _ri: list[int] = field(default_factory=list)
    _ci: list[int] = field(default_factory=list)
    _sense: list[str] = field(default_factory=list)
    _rhs: list[float] = field(default_factory=list)
    _row_names: list[str] = field(default_factory=list)

    def add_var(self, name: str, lb: float = 0.0, ub: float = INF,
                kind: str = "C", obj: float = 0.0) -> int:
        if kind == "B":
            lb, ub = max(lb, 0.0), min(ub, 1.0)
        self._lb.append(float(lb))
        self._ub.append(float(ub))
        self._kind.append(kind)
        self._c.append(float(obj))
        self._names.append(name)
        return len(self._names) - 1

    def add_row(self, coefs: Mapping[int, float], sense: str, rhs: float, name: str | None = None) -> int:
        if sense not in _SENSES:
            raise ValueError(f"unknown row sense {sense!r}")
        r = len(self._rhs)
        for j, a in coefs.items():
            if a != 0.0:
                self._ri.append(r)
                self._ci.append(j)
                self._data.append(float(a))
        self._sense.append(sense)
        self._rhs.append(float(rhs))
        self._row_names.append(name if name is not None else f"r{r}")
        return r

    def set_obj(self, j: int, coef: float) -> None:
        self._c[j] = float(coef)

    def build(self) -> LinearModel:
        n, m = len(self._names), len(self._rhs)
        A = sparse.csr_array((self._data, (self._ri, self._ci)), shape=(m, n))
        A.sum_duplicates()
        return LinearModel(
            maximize=self.maximize,
            c=np.array(self._c, dtype=float),
            lb=np.array(self._lb, dtype=float),
            ub=np.array(self._ub, dtype=float),
            kind=np.array(self._kind, dtype="<U1"),
            A=A,
            row_sense=np.array(self._sense, dtype="<U2"),
            rhs=np.array(self._rhs, dtype=float),
            var_names=tuple(self._names),
            row_names=tuple(self._row_names),
            name=self.name,
        )
