"""Per-feature discretization: quantile bins for numeric columns, dictionaries
for categorical ones.

Bin index 0 is always the missing/unseen bin.  Numeric data bins are
left-closed: a value lands one bin to the right of every cut it exceeds
(``x > c`` moves right).  The fitted Preprocessor is immutable and fixes the
domain of every lookup-table term.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import Column, ColumnKind, Dataset, DataError

DEFAULT_MAX_BINS = 256
PAIR_MAX_GRID = 32  # per-axis cap for pairwise joint histograms


@dataclass(frozen=True)
class BinDefinition:
    """Discretizer for one feature.

    Numeric: strictly ascending finite cut points; n_bins = len(cuts) + 2
    (missing bin plus one more data bin than cuts).  Categorical: category ->
    bin index map with indices 1..len(categories); n_bins = len(categories) + 1.
    """

    kind: ColumnKind
    cuts: np.ndarray = field(default_factory=lambda: np.empty(0))
    categories: dict[str, int] = field(default_factory=dict)

    def __post_init__(self) -> None:
        cuts = np.asarray(self.cuts, dtype=float)
        object.__setattr__(self, "cuts", cuts)
        if self.kind is ColumnKind.NUMERIC:
            if not np.all(np.isfinite(cuts)):
                raise DataError("bin cuts must be finite")
            if np.any(np.diff(cuts) <= 0):
                raise DataError("bin cuts must be strictly ascending")
        else:
            expected = set(range(1, len(self.categories) + 1))
            if set(self.categories.values()) != expected:
                raise DataError("category bin indices must be 1..n_categories")

    @property
    def n_bins(self) -> int:
        if self.kind is ColumnKind.NUMERIC:
            return len(self.cuts) + 2
        return len(self.categories) + 1


def fit_quantile_bins(
    values: np.ndarray,
    missing: np.ndarray | None = None,
    max_bins: int = DEFAULT_MAX_BINS,
) -> BinDefinition:
    """Equal-frequency cut points over the non-missing values.

    Cuts sit at midpoints between adjacent distinct sorted values; when there
    are more distinct values than ``max_bins``, the midpoint nearest each
    equal-frequency boundary k*n/max_bins is chosen.  Fewer distinct values
    than ``max_bins`` get one bin per distinct value.
    """
    if max_bins < 2:
        raise ValueError("max_bins must be >= 2")
    values = np.asarray(values, dtype=float)
    if missing is None:
        missing = np.isnan(values)
    vals = np.sort(values[~missing])
    n = len(vals)
    if n == 0:
        return BinDefinition(ColumnKind.NUMERIC, np.empty(0))
    # Sorted positions where adjacent values differ; a cut may sit only there.
    change = np.flatnonzero(np.diff(vals)) + 1
    if len(change) == 0:
        return BinDefinition(ColumnKind.NUMERIC, np.empty(0))
    n_distinct = len(change) + 1
    if n_distinct <= max_bins:
        boundaries = change
    else:
        picks = []
        for k in range(1, max_bins):
            p = int(np.floor(k * n / max_bins))
            p = min(max(p, 1), n - 1)
            if vals[p - 1] != vals[p]:
                picks.append(p)
            else:
                # Snap to the nearest position between distinct values.
                i = np.searchsorted(change, p)
                cands = []
                if i > 0:
                    cands.append(change[i - 1])
                if i < len(change):
                    cands.append(change[i])
                picks.append(min(cands, key=lambda b: (abs(b - p), b)))
        boundaries = np.unique(picks)
    cuts = (vals[boundaries - 1] + vals[boundaries]) / 2.0
    return BinDefinition(ColumnKind.NUMERIC, cuts)


def fit_categorical_bins(
    values: np.ndarray, missing: np.ndarray
) -> BinDefinition:
    """Dictionary bins: distinct seen categories in sorted order, indices 1..m."""
    seen = sorted({str(v) for v, m in zip(values, missing) if not m})
    return BinDefinition(
        ColumnKind.CATEGORICAL, categories={c: i + 1 for i, c in enumerate(seen)}
    )


def bin_value(x, bindef: BinDefinition) -> int:
    """Map one raw cell to its bin index.

    Missing (None/NaN/unparseable numeric) and unseen categories go to bin 0;
    numeric x lands in 1 + (number of cuts strictly below x).
    """
    if x is None:
        return 0
    if bindef.kind is ColumnKind.NUMERIC:
        if isinstance(x, str):
            try:
                x = float(x)
            except ValueError:
                return 0
        if np.isnan(x):
            return 0
        return 1 + int(np.searchsorted(bindef.cuts, x, side="left"))
    return bindef.categories.get(str(x), 0)


def _bin_column(col: Column, bindef: BinDefinition) -> np.ndarray:
    if bindef.kind is ColumnKind.NUMERIC:
        out = np.searchsorted(bindef.cuts, col.values, side="left").astype(np.int32) + 1
    else:
        cats = bindef.categories
        out = np.fromiter(
            (cats.get(str(v), 0) for v in col.values), dtype=np.int32, count=len(col.values)
        )
    out[col.missing] = 0
    return out


@dataclass(frozen=True)
class Preprocessor:
    """Fitted per-feature discretizers plus per-bin training counts.

    ``bin_weights[j]`` sums to the number of training rows for every feature.
    ``feature_ranges[j]`` is the training (min, max) of numeric features,
    kept for plot axes; None for categorical or all-missing features.
    """

    bins: tuple[BinDefinition, ...]
    bin_weights: tuple[np.ndarray, ...]
    feature_ranges: tuple[tuple[float, float] | None, ...]

    @property
    def n_features(self) -> int:
        return len(self.bins)

    def bin_row(self, row: list) -> list[int]:
        if len(row) != self.n_features:
            raise DataError(
                f"row has {len(row)} cells, preprocessor expects {self.n_features}"
            )
        return [bin_value(x, b) for x, b in zip(row, self.bins)]


def bin_dataset(dataset: Dataset, pre: Preprocessor) -> np.ndarray:
    """Bin every cell: entry [r, j] = bin_value(dataset[r][j], pre.bins[j])."""
    if dataset.n_features != pre.n_features:
        raise DataError(
            f"dataset has {dataset.n_features} features, preprocessor expects {pre.n_features}"
        )
    if dataset.n_rows == 0:
        return np.zeros((0, pre.n_features), dtype=np.int32)
    return np.column_stack(
        [_bin_column(col, b) for col, b in zip(dataset.columns, pre.bins)]
    )


def fit_preprocessor(dataset: Dataset, max_bins: int = DEFAULT_MAX_BINS) -> Preprocessor:
    """Fit one BinDefinition per feature and record per-bin training counts."""
    bins = []
    ranges: list[tuple[float, float] | None] = []
    for col in dataset.columns:
        if col.kind is ColumnKind.NUMERIC:
            bins.append(fit_quantile_bins(col.values, col.missing, max_bins))
            present = col.values[~col.missing]
            ranges.append(
                (float(present.min()), float(present.max())) if len(present) else None
            )
        else:
            bins.append(fit_categorical_bins(col.values, col.missing))
            ranges.append(None)
    pre = Preprocessor(tuple(bins), tuple(()), tuple(ranges))
    binned = bin_dataset(dataset, pre)
    weights = tuple(
        np.bincount(binned[:, j], weights=dataset.weights, minlength=b.n_bins)
        for j, b in enumerate(bins)
    )
    return Preprocessor(tuple(bins), weights, tuple(ranges))


def coarsen_bin_map(weights: np.ndarray, max_bins: int = PAIR_MAX_GRID) -> np.ndarray:
    """Merge adjacent data bins until at most ``max_bins`` bins remain.

    Returns an array mapping original bin index to coarse bin index.  The
    missing bin stays index 0; the pair of adjacent data bins with the
    smallest combined count is merged first (ties: lowest index).
    """
    n = len(weights)
    groups = [[b] for b in range(1, n)]
    while len(groups) > max_bins - 1:
        totals = [sum(weights[b] for b in g) for g in groups]
        combined = [totals[i] + totals[i + 1] for i in range(len(groups) - 1)]
        i = int(np.argmin(combined))  # argmin takes the first minimum: lowest index
        groups[i : i + 2] = [groups[i] + groups[i + 1]]
    out = np.zeros(n, dtype=np.int32)
    for coarse, g in enumerate(groups, start=1):
        for b in g:
            out[b] = coarse
    return out
