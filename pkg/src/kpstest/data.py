"""Dataset ingestion and least-squares residualization for the CLI."""

from dataclasses import dataclass

import numpy as np
import pandas as pd

from kpstest.core import KpsSample
from kpstest.exceptions import (
    EmptyAfterFilteringError,
    ParseError,
    RankDeficientDesignError,
    SchemaError,
)


@dataclass
class Dataset:
    """Parsed input data: endogenous block, instruments, optional controls."""

    y: np.ndarray
    z: np.ndarray
    w: np.ndarray | None = None
    clusters: np.ndarray | None = None
    dropped_rows: int = 0
    add_constant: bool = True

    def __post_init__(self):
        n = self.y.shape[0]
        q = 0 if self.w is None else self.w.shape[1]
        if self.z.shape[0] != n or (self.w is not None and self.w.shape[0] != n):
            raise SchemaError("y, z and w must have the same number of rows")
        if n <= self.z.shape[1] + q + 1:
            raise SchemaError(
                f"need more than k + q + 1 = {self.z.shape[1] + q + 1} rows, got {n}"
            )


def _expand_columns(spec, header):
    """Expand a comma-separated list of names and a:b ranges to column names."""
    cols = []
    for item in spec.split(","):
        item = item.strip()
        if not item:
            continue
        if ":" in item:
            lo, hi = (s.strip() for s in item.split(":", 1))
            if lo not in header or hi not in header:
                missing = lo if lo not in header else hi
                raise SchemaError(f"column {missing!r} not found in header")
            i, j = header.index(lo), header.index(hi)
            if j < i:
                raise SchemaError(f"range {item!r} runs backwards in the header order")
            cols.extend(header[i : j + 1])
        else:
            if item not in header:
                raise SchemaError(f"column {item!r} not found in header")
            cols.append(item)
    if not cols:
        raise SchemaError(f"column specification {spec!r} selects nothing")
    return cols


def ingest(path, y_cols, z_cols, w_cols=None, cluster_col=None, add_constant=True):
    """Read a CSV and assemble the designated matrices.

    Rows with a missing value in any designated column are dropped (the
    count is recorded on the returned Dataset); a non-numeric entry in a
    numeric column is an error.  Cluster labels are taken verbatim as
    strings.
    """
    try:
        frame = pd.read_csv(path)
    except (OSError, pd.errors.ParserError, UnicodeDecodeError, pd.errors.EmptyDataError) as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    header = list(frame.columns)

    y_names = _expand_columns(y_cols, header)
    z_names = _expand_columns(z_cols, header)
    w_names = _expand_columns(w_cols, header) if w_cols else []
    cluster_names = _expand_columns(cluster_col, header) if cluster_col else []
    if len(cluster_names) > 1:
        raise SchemaError("exactly one cluster column may be designated")

    numeric_names = y_names + z_names + w_names
    numeric = pd.DataFrame(index=frame.index)
    for name in numeric_names:
        try:
            numeric[name] = pd.to_numeric(frame[name], errors="raise")
        except (ValueError, TypeError) as exc:
            raise ParseError(f"non-numeric value in column {name!r}: {exc}") from exc

    keep = numeric.notna().all(axis=1)
    if cluster_names:
        keep &= frame[cluster_names[0]].notna()
    dropped = int((~keep).sum())
    numeric = numeric[keep]
    if numeric.shape[0] == 0:
        raise EmptyAfterFilteringError("no rows remain after dropping missing values")

    clusters = None
    if cluster_names:
        clusters = frame.loc[keep, cluster_names[0]].astype(str).to_numpy()

    return Dataset(
        y=numeric[y_names].to_numpy(dtype=float),
        z=numeric[z_names].to_numpy(dtype=float),
        w=numeric[w_names].to_numpy(dtype=float) if w_names else None,
        clusters=clusters,
        dropped_rows=dropped,
        add_constant=add_constant,
    )


def _residuals(x, design, block_name):
    if design.shape[1] == 0:
        return x.copy()
    if np.linalg.matrix_rank(design) < design.shape[1]:
        raise RankDeficientDesignError(f"{block_name} design block is rank deficient")
    coef, *_ = np.linalg.lstsq(design, x, rcond=None)
    return x - design @ coef


def residualize(data):
    """Two-step least-squares residualization producing the test's input.

    First the endogenous block and the instruments are each replaced by
    their residuals from a regression on the controls (a constant column is
    appended unless suppressed); then the residuals of the partialled
    endogenous block on the partialled instruments become the test's
    residual matrix, paired with the partialled instruments.
    """
    n = data.y.shape[0]
    w = data.w if data.w is not None else np.empty((n, 0))
    if data.add_constant:
        w = np.hstack([np.ones((n, 1)), w])
    y = _residuals(data.y, w, "control")
    z = _residuals(data.z, w, "control")
    vhat = _residuals(y, z, "instrument")
    return KpsSample(vhat=vhat, z=z, clusters=data.clusters)
