"""Isotonic nonparametric least squares (INLS) on a component-wise partial order.

The default solver is the recursive minimum-cut partitioning algorithm for
least-squares isotonic regression: split the current block at its mean into
the maximum-weight upper set and its complement, and recurse until no split
improves the fit.  An active-set route (Lawson-Hanson NNLS on the dual cone)
is available through the same interface.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import networkx as nx
import numpy as np
from scipy.optimize import nnls

from .data import DataError, Dataset, DominanceMatrix, dominance_matrix

DEFAULT_GROUPING_TOL = 1e-9


@dataclass(frozen=True)
class BlockPartition:
    """Unique fitted levels (strictly increasing) and their member indices."""

    levels: np.ndarray
    membership: tuple[np.ndarray, ...]

    @property
    def m(self) -> int:
        return len(self.levels)

    def labels(self, n: int) -> np.ndarray:
        lab = np.empty(n, dtype=int)
        for k, idx in enumerate(self.membership):
            lab[idx] = k
        return lab


@dataclass(frozen=True)
class InlsFit:
    alpha: np.ndarray
    residuals: np.ndarray
    sse: float
    blocks: BlockPartition

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha.tolist(),
            "sse": self.sse,
            "levels": self.blocks.levels.tolist(),
            "blocks": [idx.tolist() for idx in self.blocks.membership],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, doc: dict, y: np.ndarray) -> "InlsFit":
        alpha = np.asarray(doc["alpha"], dtype=float)
        blocks = BlockPartition(np.asarray(doc["levels"], dtype=float),
                                tuple(np.asarray(b, dtype=int) for b in doc["blocks"]))
        return cls(alpha, np.asarray(y, dtype=float) - alpha, float(doc["sse"]), blocks)


def _sub_cover(P: np.ndarray, idx: np.ndarray) -> np.ndarray:
    """Generating pairs of the order induced on ``idx`` (local indices)."""
    sub = DominanceMatrix(P[np.ix_(idx, idx)])
    return sub.cover_pairs()


def _max_weight_upper_set(w: np.ndarray, pairs: np.ndarray) -> tuple[np.ndarray, float]:
    """Upward-closed subset maximizing the sum of ``w`` (via s-t minimum cut)."""
    G = nx.DiGraph()
    src, snk = "s", "t"
    G.add_node(src)
    G.add_node(snk)
    n = len(w)
    for i in range(n):
        if w[i] > 0:
            G.add_edge(src, i, capacity=float(w[i]))
        elif w[i] < 0:
            G.add_edge(i, snk, capacity=float(-w[i]))
        else:
            G.add_node(i)
    for i, j in pairs:
        G.add_edge(int(i), int(j))  # no capacity attribute: infinite
    cut, (side, _) = nx.minimum_cut(G, src, snk)
    upper = np.array(sorted(v for v in side if v != src), dtype=int)
    gain = float(w[w > 0].sum() - cut)
    return upper, gain


def _mincut_isotonic(y: np.ndarray, P: np.ndarray) -> np.ndarray:
    n = len(y)
    alpha = np.empty(n)
    stack = [np.arange(n)]
    while stack:
        idx = stack.pop()
        mu = y[idx].mean()
        if idx.size == 1:
            alpha[idx] = mu
            continue
        w = y[idx] - mu
        upper, gain = _max_weight_upper_set(w, _sub_cover(P, idx))
        if gain <= 1e-12 * max(1.0, np.abs(w).sum()) or upper.size in (0, idx.size):
            alpha[idx] = mu
            continue
        mask = np.zeros(idx.size, dtype=bool)
        mask[upper] = True
        stack.append(idx[mask])
        stack.append(idx[~mask])
    return alpha


def _active_set_isotonic(y: np.ndarray, order: DominanceMatrix) -> np.ndarray:
    pairs = order.cover_pairs()
    if len(pairs) == 0:
        return y.copy()
    n = len(y)
    # projection onto {a_i <= a_j} = y minus projection onto the polar cone
    At = np.zeros((n, len(pairs)))
    At[pairs[:, 0], np.arange(len(pairs))] = 1.0
    At[pairs[:, 1], np.arange(len(pairs))] = -1.0
    mu, _ = nnls(At, y, maxiter=50 * max(n, len(pairs)))
    return y - At @ mu


def extract_blocks(alpha: np.ndarray | InlsFit, grouping_tol: float = DEFAULT_GROUPING_TOL) -> BlockPartition:
    """Group fitted values into levels; neighbours within ``grouping_tol`` merge."""
    if isinstance(alpha, InlsFit):
        alpha = alpha.alpha
    alpha = np.asarray(alpha, dtype=float)
    order = np.argsort(alpha, kind="stable")
    groups: list[list[int]] = [[int(order[0])]]
    for prev, cur in zip(order[:-1], order[1:]):
        if alpha[cur] - alpha[prev] <= grouping_tol:
            groups[-1].append(int(cur))
        else:
            groups.append([int(cur)])
    levels = np.array([alpha[g].mean() for g in groups])
    membership = tuple(np.array(sorted(g), dtype=int) for g in groups)
    return BlockPartition(levels, membership)


def fit_inls(data: Dataset, order: DominanceMatrix | None = None, method: str = "mincut",
             grouping_tol: float = DEFAULT_GROUPING_TOL) -> InlsFit:
    """Least-squares fit that is non-decreasing in the dominance order.

    Parameters
    ----------
    data : Dataset
    order : DominanceMatrix, optional
        Order on ``data.X``; computed when omitted.
    method : {"mincut", "active_set"}
    grouping_tol : float
        Tolerance used to build the block partition.
    """
    if order is None:
        order = dominance_matrix(data.X)
    if order.n != data.n:
        raise DataError(f"order has dimension {order.n} but data has {data.n} rows")
    y = data.y
    if method == "mincut":
        alpha = _mincut_isotonic(y, np.asarray(order.P))
    elif method == "active_set":
        alpha = _active_set_isotonic(y, order)
    else:
        raise ValueError(f"unknown method {method!r}")
    resid = y - alpha
    return InlsFit(alpha=alpha, residuals=resid, sse=float(resid @ resid),
                   blocks=extract_blocks(alpha, grouping_tol))
