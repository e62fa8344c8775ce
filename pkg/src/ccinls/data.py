"""Datasets, CSV/JSON ingestion and the component-wise dominance order."""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass
from typing import Sequence

import numpy as np


class DataError(ValueError):
    """Raised on malformed or non-finite input data."""


@dataclass(frozen=True)
class Dataset:
    """Regression sample: ``X`` is ``(n, s)``, ``y`` has length ``n``."""

    X: np.ndarray
    y: np.ndarray
    names: tuple[str, ...] | None = None
    ids: tuple[str, ...] | None = None

    def __post_init__(self):
        X = np.array(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        y = np.array(self.y, dtype=float).ravel()
        if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
            raise DataError("empty dataset")
        if X.shape[0] != y.shape[0]:
            raise DataError(f"X has {X.shape[0]} rows but y has {y.shape[0]} entries")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise DataError("dataset contains non-finite values")
        if self.names is not None and len(self.names) != X.shape[1]:
            raise DataError("names length does not match number of columns")
        if self.ids is not None and len(self.ids) != X.shape[0]:
            raise DataError("ids length does not match number of rows")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        if self.names is not None:
            object.__setattr__(self, "names", tuple(self.names))
        if self.ids is not None:
            object.__setattr__(self, "ids", tuple(self.ids))

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def s(self) -> int:
        return self.X.shape[1]

    def to_dict(self) -> dict:
        out = {"X": self.X.tolist(), "y": self.y.tolist()}
        if self.names is not None:
            out["names"] = list(self.names)
        if self.ids is not None:
            out["ids"] = list(self.ids)
        return out

    @classmethod
    def from_dict(cls, doc: dict) -> "Dataset":
        return cls(X=np.asarray(doc["X"], dtype=float), y=np.asarray(doc["y"], dtype=float),
                   names=doc.get("names"), ids=doc.get("ids"))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "Dataset":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class DominanceMatrix:
    """Binary matrix with ``P[i, j] = 1`` iff ``x_i <= x_j`` component-wise."""

    P: np.ndarray

    @property
    def n(self) -> int:
        return self.P.shape[0]

    def pairs(self) -> np.ndarray:
        """Off-diagonal pairs ``(i, j)`` with ``x_i <= x_j``."""
        P = self.P.copy()
        np.fill_diagonal(P, 0)
        return np.argwhere(P)

    def cover_pairs(self) -> np.ndarray:
        """Generating pairs of the order: the strict covering relation plus
        both directions of every tie between duplicate rows.

        Constraining only these pairs implies every other ``p_ij = 1`` pair.
        """
        P = self.P.astype(bool)
        tie = P & P.T
        np.fill_diagonal(tie, False)
        strict = P & ~P.T
        S = strict.astype(np.int64)
        implied = (S @ S) > 0
        return np.argwhere((strict & ~implied) | tie)


def dominance_matrix(X: np.ndarray | Dataset) -> DominanceMatrix:
    """Exact component-wise order on the rows of ``X`` (ties give mutual dominance)."""
    if isinstance(X, Dataset):
        X = X.X
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if not np.all(np.isfinite(X)):
        raise DataError("dominance_matrix requires finite input")
    P = np.all(X[:, None, :] <= X[None, :, :], axis=2).astype(np.int8)
    P.setflags(write=False)
    return DominanceMatrix(P)


def _parse_cell(text: str, row: int, column: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise DataError(f"row {row}, column {column!r}: cannot parse {text!r} as a number") from None
    if not math.isfinite(value):
        raise DataError(f"row {row}, column {column!r}: non-finite value {text!r}")
    return value


def load_csv(path: str | os.PathLike, response_column: str,
             feature_columns: Sequence[str], id_column: str | None = None) -> Dataset:
    """Read a comma-separated UTF-8 file with a header row.

    Rows are kept in file order; row numbers in error messages are 1-based
    data rows (the header is row 0).
    """
    if not os.path.exists(path):
        raise DataError(f"no such file: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        wanted = [response_column, *feature_columns] + ([id_column] if id_column else [])
        missing = [c for c in wanted if c not in header]
        if missing:
            raise DataError(f"missing column(s): {', '.join(missing)}")
        X, y, ids = [], [], []
        for r, rec in enumerate(reader, start=1):
            X.append([_parse_cell(rec[c], r, c) for c in feature_columns])
            y.append(_parse_cell(rec[response_column], r, response_column))
            if id_column:
                ids.append(rec[id_column])
    if not y:
        raise DataError("empty dataset")
    return Dataset(np.array(X, dtype=float), np.array(y, dtype=float),
                   names=tuple(feature_columns), ids=tuple(ids) if id_column else None)
