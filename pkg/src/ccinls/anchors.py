"""Anchor points summarizing each INLS block."""

from __future__ import annotations

import csv
import enum
import io
import json
from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .inls import BlockPartition


class Strategy(str, enum.Enum):
    VERTICES = "vertices"
    CENTROIDS = "centroids"


class CentroidStat(str, enum.Enum):
    MEAN = "mean"
    MEDIAN = "median"


@dataclass(frozen=True)
class AnchorSet:
    """``m`` anchors ``(x[k], alpha[k])`` with ``alpha`` strictly increasing."""

    x: np.ndarray
    alpha: np.ndarray
    strategy: Strategy = Strategy.VERTICES
    centroid_stat: CentroidStat = CentroidStat.MEAN

    def __post_init__(self):
        x = np.array(self.x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        alpha = np.array(self.alpha, dtype=float).ravel()
        if x.shape[0] < 1 or x.shape[0] != alpha.size:
            raise ValueError("anchor set needs m >= 1 anchors with matching levels")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(alpha))):
            raise ValueError("anchor coordinates must be finite")
        if np.any(np.diff(alpha) <= 0):
            raise ValueError("anchor levels must be strictly increasing")
        x.setflags(write=False)
        alpha.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "strategy", Strategy(self.strategy))
        object.__setattr__(self, "centroid_stat", CentroidStat(self.centroid_stat))

    @property
    def m(self) -> int:
        return self.alpha.size

    @property
    def s(self) -> int:
        return self.x.shape[1]

    def to_dict(self) -> dict:
        doc = {"strategy": self.strategy.value,
               "anchors": [{"x": xk.tolist(), "alpha": float(ak)} for xk, ak in zip(self.x, self.alpha)]}
        if self.strategy is Strategy.CENTROIDS:
            doc["centroid_stat"] = self.centroid_stat.value
        return doc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, doc: dict) -> "AnchorSet":
        anchors = doc["anchors"]
        return cls(x=np.array([a["x"] for a in anchors], dtype=float),
                   alpha=np.array([a["alpha"] for a in anchors], dtype=float),
                   strategy=doc.get("strategy", "vertices"),
                   centroid_stat=doc.get("centroid_stat", "mean"))

    @classmethod
    def from_json(cls, text: str) -> "AnchorSet":
        return cls.from_dict(json.loads(text))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([f"x{r + 1}" for r in range(self.s)] + ["alpha"])
        for xk, ak in zip(self.x, self.alpha):
            w.writerow([repr(float(v)) for v in xk] + [repr(float(ak))])
        return buf.getvalue()


def extract_anchors(data: Dataset, partition: BlockPartition,
                    strategy: Strategy | str = Strategy.VERTICES,
                    centroid_stat: CentroidStat | str = CentroidStat.MEAN) -> AnchorSet:
    """One anchor per block: per-dimension minimum (vertices) or mean/median (centroids)."""
    strategy = Strategy(strategy)
    centroid_stat = CentroidStat(centroid_stat)
    rows = []
    for idx in partition.membership:
        assert idx.size > 0, "empty block"
        block = data.X[idx]
        if strategy is Strategy.VERTICES:
            rows.append(block.min(axis=0))
        elif centroid_stat is CentroidStat.MEAN:
            rows.append(block.mean(axis=0))
        else:
            rows.append(np.median(block, axis=0))
    return AnchorSet(np.array(rows), partition.levels.copy(), strategy, centroid_stat)


def step_predict(anchors: AnchorSet, points: np.ndarray) -> np.ndarray:
    """Step-function extension: highest level whose anchor is dominated by the point.

    Points dominating no anchor get the lowest level.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None] if anchors.s == 1 else pts[None, :]
    below = np.all(anchors.x[None, :, :] <= pts[:, None, :], axis=2)
    levels = np.where(below, anchors.alpha[None, :], -np.inf).max(axis=1)
    return np.where(np.isfinite(levels), levels, anchors.alpha[0])
