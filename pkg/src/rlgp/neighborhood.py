"""Training corpus, CSV ingestion and exact nearest-neighbor selection."""
from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .exceptions import InvalidInputError, SchemaError
from .kernel import cross_sq_dist, pairwise_sq_dist

__all__ = ["Dataset", "Neighborhood", "MinMaxScaler", "load_dataset",
           "load_inputs", "select_neighbors", "default_neighbors"]


@dataclass(frozen=True)
class Dataset:
    """Inputs `X` (N x d) paired row-wise with responses `y` (N,)."""

    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        y = np.asarray(self.y, dtype=float).ravel()
        if X.ndim == 1:
            X = X[:, None]
        if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
            raise InvalidInputError(f"X must be a non-empty N x d array, got shape {X.shape}")
        if y.shape[0] != X.shape[0]:
            raise InvalidInputError(f"X has {X.shape[0]} rows but y has {y.shape[0]} entries")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise InvalidInputError("dataset contains non-finite values")
        X.flags.writeable = False
        y.flags.writeable = False
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def N(self):
        return self.X.shape[0]

    @property
    def d(self):
        return self.X.shape[1]


@dataclass(frozen=True)
class Neighborhood:
    """The `n` training points nearest to a query, with their distance matrices."""

    indices: np.ndarray
    Xn: np.ndarray
    yn: np.ndarray
    query: np.ndarray
    D: np.ndarray = field(repr=False)
    cross_sq_dist: np.ndarray = field(repr=False)

    @property
    def n(self):
        return self.indices.shape[0]

    @classmethod
    def from_arrays(cls, Xn, yn, query, indices=None):
        """Wrap local data directly, e.g. for fitting a hand-built neighborhood."""
        Xn = np.asarray(Xn, dtype=float)
        if Xn.ndim == 1:
            Xn = Xn[:, None]
        yn = np.asarray(yn, dtype=float).ravel()
        query = np.asarray(query, dtype=float).ravel()
        if indices is None:
            indices = np.arange(Xn.shape[0])
        return cls(indices=np.asarray(indices), Xn=Xn, yn=yn, query=query,
                   D=pairwise_sq_dist(Xn), cross_sq_dist=cross_sq_dist(Xn, query))


class MinMaxScaler:
    """Per-feature affine map of the training inputs onto [0, 1].

    Constant features are left centred at zero.
    """

    def __init__(self, X):
        X = np.asarray(X, dtype=float)
        self.lo = X.min(axis=0)
        span = X.max(axis=0) - self.lo
        self.span = np.where(span > 0, span, 1.0)

    def transform(self, X):
        return (np.asarray(X, dtype=float) - self.lo) / self.span

    def transform_dataset(self, ds):
        return Dataset(self.transform(ds.X), ds.y)


def default_neighbors(N):
    return min(50, N)


def _read_rows(source):
    if isinstance(source, (str, os.PathLike)):
        with open(source, newline="", encoding="utf-8") as fh:
            return list(csv.reader(fh))
    if isinstance(source, (bytes, bytearray)):
        source = io.StringIO(source.decode("utf-8"))
    elif hasattr(source, "mode") and "b" in getattr(source, "mode", ""):
        source = io.TextIOWrapper(source, encoding="utf-8", newline="")
    return list(csv.reader(source))


def _parse_table(source, with_y, d=None):
    rows = [r for r in _read_rows(source) if any(cell.strip() for cell in r)]
    if not rows:
        raise SchemaError("missing header row")
    header = [h.strip() for h in rows[0]]
    nfeat = len(header) - (1 if with_y else 0)
    expected = [f"x{i + 1}" for i in range(nfeat)] + (["y"] if with_y else [])
    if nfeat < 1 or header != expected:
        raise SchemaError(f"header must be {','.join(expected) if nfeat >= 1 else 'x1,...,xd,y'}, "
                          f"got {','.join(header)}")
    if d is not None and nfeat != d:
        raise SchemaError(f"dimension mismatch: file has {nfeat} features, expected {d}")
    body = rows[1:]
    if not body:
        raise SchemaError("no rows")
    out = np.empty((len(body), len(header)))
    for i, row in enumerate(body, start=1):
        if len(row) != len(header):
            raise SchemaError(f"expected {len(header)} cells, found {len(row)}", row=i)
        for j, cell in enumerate(row):
            try:
                v = float(cell)
            except ValueError:
                raise SchemaError(f"non-numeric cell {cell!r}", row=i, column=header[j]) from None
            if not math.isfinite(v):
                raise SchemaError(f"non-finite cell {cell!r}", row=i, column=header[j])
            out[i - 1, j] = v
    return out


def load_dataset(source, d=None):
    """Read a training table with header ``x1,...,xd,y``.

    Parameters
    ----------
    source : path, bytes or file-like
        UTF-8 CSV content.
    d : int, optional
        Expected input dimension; a different column count is a
        :class:`~rlgp.exceptions.SchemaError`.
    """
    table = _parse_table(source, with_y=True, d=d)
    return Dataset(table[:, :-1], table[:, -1])


def load_inputs(source, d=None):
    """Read query inputs with header ``x1,...,xd`` (an optional trailing ``y`` is ignored)."""
    rows_source = source
    if not isinstance(source, (str, os.PathLike, bytes, bytearray)):
        rows_source = source.read()
        if isinstance(rows_source, str):
            rows_source = rows_source.encode("utf-8")
    try:
        return _parse_table(rows_source, with_y=False, d=d)
    except SchemaError as first:
        try:
            table = _parse_table(rows_source, with_y=True, d=d)
        except SchemaError:
            raise first from None
        return table[:, :-1]


def select_neighbors(ds, query, n):
    """The `n` rows of `ds` closest to `query` in squared Euclidean distance.

    Ties are broken by ascending row index, so the result is deterministic.
    Rows of the returned neighborhood are ordered by (distance, index).
    """
    n = int(n)
    if not 1 <= n <= ds.N:
        raise InvalidInputError(f"neighborhood size must be in [1, {ds.N}], got {n}")
    query = np.asarray(query, dtype=float).ravel()
    dist = cross_sq_dist(ds.X, query)
    if n < ds.N:
        kth = np.partition(dist, n - 1)[n - 1]
        cand = np.flatnonzero(dist <= kth)
    else:
        cand = np.arange(ds.N)
    order = np.lexsort((cand, dist[cand]))[:n]
    idx = cand[order]
    Xn = ds.X[idx]
    return Neighborhood(indices=idx, Xn=Xn, yn=ds.y[idx], query=query,
                        D=pairwise_sq_dist(Xn), cross_sq_dist=dist[idx])
