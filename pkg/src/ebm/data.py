"""CSV ingestion into typed, immutable in-memory datasets.

Columns are either numeric (every non-missing cell parses as a finite real)
or categorical (cells are opaque strings).  Missing cells are flagged, not
imputed; downstream binning reserves bin 0 for them.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

DEFAULT_MISSING_TOKENS = frozenset({"", "NA", "N/A", "?", "nan"})


class DataError(ValueError):
    """Malformed or unusable input data."""


class ColumnKind(Enum):
    NUMERIC = "numeric"
    CATEGORICAL = "categorical"


class Task(Enum):
    CLASSIFICATION = "classification"
    REGRESSION = "regression"


def _parse_finite(cell: str) -> float | None:
    """Parse a cell as a finite float, or None if it does not qualify."""
    try:
        v = float(cell)
    except ValueError:
        return None
    return v if np.isfinite(v) else None


def infer_column_kind(
    values: list[str], missing_tokens: frozenset[str] = DEFAULT_MISSING_TOKENS
) -> ColumnKind:
    """Numeric iff every non-missing cell parses as a finite real.

    An all-missing column is categorical (every row lands in the missing bin).
    """
    if not values:
        raise DataError("cannot infer kind of an empty column")
    saw_value = False
    for cell in values:
        if cell in missing_tokens:
            continue
        saw_value = True
        if _parse_finite(cell) is None:
            return ColumnKind.CATEGORICAL
    return ColumnKind.NUMERIC if saw_value else ColumnKind.CATEGORICAL


@dataclass(frozen=True)
class Column:
    """One feature column: parsed values plus a per-cell missing mask.

    ``values`` is float64 for numeric columns (NaN at missing cells) and an
    object array of strings for categorical columns ("" at missing cells).
    """

    kind: ColumnKind
    values: np.ndarray
    missing: np.ndarray

    def __post_init__(self) -> None:
        if len(self.values) != len(self.missing):
            raise DataError("column values and missing mask differ in length")

    def cell(self, row: int):
        """Raw cell for prediction/explanation: float, str, or None if missing."""
        if self.missing[row]:
            return None
        v = self.values[row]
        return float(v) if self.kind is ColumnKind.NUMERIC else str(v)


@dataclass(frozen=True)
class Dataset:
    """Column-typed tabular data with a target, row weights, and feature names."""

    feature_names: tuple[str, ...]
    columns: tuple[Column, ...]
    target: np.ndarray
    task: Task
    weights: np.ndarray = None  # type: ignore[assignment]
    target_name: str = "target"
    # (negative_label, positive_label) raw strings; classification only.
    class_labels: tuple[str, str] | None = None

    def __post_init__(self) -> None:
        if self.weights is None:
            object.__setattr__(self, "weights", np.ones(len(self.target)))
        n = len(self.target)
        if len(self.feature_names) != len(self.columns):
            raise DataError("feature_names and columns differ in length")
        if len(set(self.feature_names)) != len(self.feature_names):
            raise DataError("feature names must be unique")
        if any(not name for name in self.feature_names):
            raise DataError("feature names must be non-empty")
        for name, col in zip(self.feature_names, self.columns):
            if len(col.values) != n:
                raise DataError(f"column {name!r} row count differs from target")
        if len(self.weights) != n:
            raise DataError("row weights length differs from target")
        if self.task is Task.CLASSIFICATION:
            labels = set(np.unique(self.target))
            if not labels <= {0.0, 1.0} or len(labels) != 2:
                raise DataError("degenerate target: classification needs both classes 0 and 1")
        else:
            if not np.all(np.isfinite(self.target)):
                raise DataError("regression target contains non-finite values")

    @property
    def n_rows(self) -> int:
        return len(self.target)

    @property
    def n_features(self) -> int:
        return len(self.columns)

    def row(self, r: int) -> list:
        """Raw feature cells of one row, in feature order."""
        return [col.cell(r) for col in self.columns]

    def select(self, indices: np.ndarray) -> "Dataset":
        """Row subset as a new Dataset (used for CV folds and splits)."""
        idx = np.asarray(indices)
        cols = tuple(
            Column(c.kind, c.values[idx], c.missing[idx]) for c in self.columns
        )
        return Dataset(
            feature_names=self.feature_names,
            columns=cols,
            target=self.target[idx],
            task=self.task,
            weights=self.weights[idx],
            target_name=self.target_name,
            class_labels=self.class_labels,
        )

    @staticmethod
    def from_numeric(
        X: np.ndarray,
        y: np.ndarray,
        task: Task,
        feature_names: list[str] | None = None,
        target_name: str = "target",
    ) -> "Dataset":
        """Build a fully-numeric dataset from arrays (handy for synthetic data)."""
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        names = feature_names or [f"x{j}" for j in range(X.shape[1])]
        cols = tuple(
            Column(ColumnKind.NUMERIC, X[:, j].copy(), np.isnan(X[:, j]))
            for j in range(X.shape[1])
        )
        labels = ("0", "1") if task is Task.CLASSIFICATION else None
        return Dataset(
            feature_names=tuple(names),
            columns=cols,
            target=y,
            task=task,
            target_name=target_name,
            class_labels=labels,
        )


def _build_column(
    raw: list[str], missing_tokens: frozenset[str]
) -> Column:
    kind = infer_column_kind(raw, missing_tokens)
    missing = np.array([cell in missing_tokens for cell in raw], dtype=bool)
    if kind is ColumnKind.NUMERIC:
        values = np.array(
            [np.nan if m else float(cell) for cell, m in zip(raw, missing)],
            dtype=float,
        )
    else:
        values = np.array(
            ["" if m else cell for cell, m in zip(raw, missing)], dtype=object
        )
    return Column(kind, values, missing)


def _encode_target(
    raw: list[str],
    task: Task,
    missing_tokens: frozenset[str],
    positive_label: str | None,
) -> tuple[np.ndarray, tuple[str, str] | None]:
    if task is Task.REGRESSION:
        out = np.empty(len(raw))
        for i, cell in enumerate(raw):
            if cell in missing_tokens:
                raise DataError(f"missing value in target column at row {i}")
            v = _parse_finite(cell)
            if v is None:
                raise DataError(f"regression target has non-numeric cell {cell!r} at row {i}")
            out[i] = v
        return out, None

    for i, cell in enumerate(raw):
        if cell in missing_tokens:
            raise DataError(f"missing value in target column at row {i}")
    distinct = sorted(set(raw))
    if len(distinct) < 2:
        raise DataError("degenerate target: fewer than two distinct class labels")
    if len(distinct) > 2:
        raise DataError(
            f"classification target has {len(distinct)} distinct values, expected 2"
        )
    if positive_label is None:
        negative, positive = distinct[0], distinct[1]
    else:
        if positive_label not in distinct:
            raise DataError(f"positive label {positive_label!r} not found in target")
        positive = positive_label
        negative = distinct[0] if distinct[1] == positive else distinct[1]
    y = np.array([1.0 if cell == positive else 0.0 for cell in raw])
    return y, (negative, positive)


def load_csv(
    path: str | Path,
    target_name: str,
    task: Task = Task.CLASSIFICATION,
    missing_tokens: frozenset[str] = DEFAULT_MISSING_TOKENS,
    positive_label: str | None = None,
) -> Dataset:
    """Load a headered, RFC-quoted CSV into a Dataset.

    The target column is removed from the features.  Classification labels
    are encoded 0/1 with the lexicographically larger raw label as 1 unless
    ``positive_label`` says otherwise.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"file not found: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"empty file: {path}") from None
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise DataError(
                    f"ragged row at line {lineno}: {len(row)} cells, header has {len(header)}"
                )
            rows.append(row)
    if target_name not in header:
        raise DataError(f"target column {target_name!r} not in header {header}")
    if not rows:
        raise DataError(f"no data rows in {path}")

    t_idx = header.index(target_name)
    feature_names = tuple(h for i, h in enumerate(header) if i != t_idx)
    raw_cols = [[row[i] for row in rows] for i in range(len(header))]
    target, class_labels = _encode_target(
        raw_cols[t_idx], task, missing_tokens, positive_label
    )
    columns = tuple(
        _build_column(raw_cols[i], missing_tokens)
        for i in range(len(header))
        if i != t_idx
    )
    return Dataset(
        feature_names=feature_names,
        columns=columns,
        target=target,
        task=task,
        target_name=target_name,
        class_labels=class_labels,
    )


def save_csv(dataset: Dataset, path: str | Path) -> None:
    """Write a Dataset back to CSV; reloading reproduces values, masks, kinds.

    Numeric cells use shortest round-trip decimal formatting; missing cells
    are written as the empty string.
    """
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(dataset.feature_names) + [dataset.target_name])
        for r in range(dataset.n_rows):
            row = []
            for col in dataset.columns:
                if col.missing[r]:
                    row.append("")
                elif col.kind is ColumnKind.NUMERIC:
                    row.append(repr(float(col.values[r])))
                else:
                    row.append(str(col.values[r]))
            if dataset.task is Task.CLASSIFICATION:
                assert dataset.class_labels is not None
                row.append(dataset.class_labels[int(dataset.target[r])])
            else:
                row.append(repr(float(dataset.target[r])))
            writer.writerow(row)
