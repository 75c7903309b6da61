"""Metrics and the cross-validation benchmark harness.

AUROC uses the rank-sum formulation with average ranks for ties (exact,
O(n log n)).  The harness runs seeded stratified k-fold CV with the
preprocessor and model fit on the training folds only.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .binning import bin_dataset
from .data import DataError, Dataset, Task, load_csv
from .interactions import train_model
from .model import predict_mean_batch, predict_score_batch
from .train import TrainConfig

_SEED_MASK = 0xFFFF_FFFF_FFFF_FFFF


def _average_ranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks; tied values share the mean of their rank range."""
    order = np.argsort(values, kind="mergesort")
    sorted_vals = values[order]
    ranks = np.empty(len(values))
    boundaries = np.flatnonzero(np.diff(sorted_vals)) + 1
    start = 0
    for stop in list(boundaries) + [len(values)]:
        ranks[order[start:stop]] = (start + stop + 1) / 2.0
        start = stop
    return ranks


def auroc(scores: np.ndarray, labels: np.ndarray) -> float:
    """Probability a random positive outranks a random negative, ties = 1/2."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("auroc needs both classes present")
    ranks = _average_ranks(scores)
    return float((ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def rmse(preds: np.ndarray, targets: np.ndarray) -> float:
    preds = np.asarray(preds, dtype=float)
    targets = np.asarray(targets, dtype=float)
    if len(preds) == 0 or len(preds) != len(targets):
        raise ValueError("rmse needs equal-length, non-empty inputs")
    return float(np.sqrt(np.mean((preds - targets) ** 2)))


@dataclass
class MetricReport:
    """Per-fold metric values with timings; mean/std are recomputable."""

    metric: str
    fold_values: list[float]
    fit_seconds: list[float]
    predict_seconds: list[float]
    fold_sizes: list[int]
    n_rows: int
    n_features: int

    @property
    def mean(self) -> float:
        return float(np.mean(self.fold_values))

    @property
    def std(self) -> float:
        return float(np.std(self.fold_values))  # population std over folds

    @property
    def mean_fit_seconds(self) -> float:
        return float(np.mean(self.fit_seconds))

    @property
    def predict_us_per_row(self) -> float:
        per_fold = [
            s / max(n, 1) * 1e6 for s, n in zip(self.predict_seconds, self.fold_sizes)
        ]
        return float(np.mean(per_fold))


def kfold_indices(
    dataset: Dataset, k: int, cv_seed: int
) -> list[np.ndarray]:
    """Deterministic validation-fold assignment; stratified by class for
    classification.  Every row lands in exactly one fold."""
    if k < 2:
        raise ValueError("k must be >= 2")
    rng = np.random.default_rng(np.random.SeedSequence(entropy=cv_seed & _SEED_MASK))
    folds: list[list[int]] = [[] for _ in range(k)]
    if dataset.task is Task.CLASSIFICATION:
        strata = [np.flatnonzero(dataset.target == v) for v in (0.0, 1.0)]
    else:
        strata = [np.arange(dataset.n_rows)]
    for idx in strata:
        perm = idx[rng.permutation(len(idx))]
        for f, chunk in enumerate(np.array_split(perm, k)):
            folds[f].extend(chunk.tolist())
    return [np.sort(np.array(f, dtype=np.int64)) for f in folds]


def kfold_cv(
    dataset: Dataset,
    k: int,
    config: TrainConfig,
    metric: str = "auroc",
    cv_seed: int = 42,
    threads: int = 0,
) -> MetricReport:
    """Stratified k-fold CV: preprocessor and model fit on train folds only."""
    if metric not in ("auroc", "rmse"):
        raise ValueError(f"unknown metric {metric!r}")
    folds = kfold_indices(dataset, k, cv_seed)
    values, fit_s, pred_s, sizes = [], [], [], []
    all_rows = np.arange(dataset.n_rows)
    for val_idx in folds:
        train_idx = np.setdiff1d(all_rows, val_idx)
        train_ds = dataset.select(train_idx)
        val_ds = dataset.select(val_idx)
        t0 = time.perf_counter()
        model = train_model(train_ds, config, threads)
        fit_s.append(time.perf_counter() - t0)
        t0 = time.perf_counter()
        binned = bin_dataset(val_ds, model.preprocessor)
        if metric == "auroc":
            out = predict_score_batch(model, binned)
        else:
            out = predict_mean_batch(model, binned)
        pred_s.append(time.perf_counter() - t0)
        sizes.append(val_ds.n_rows)
        if metric == "auroc":
            values.append(auroc(out, val_ds.target))
        else:
            values.append(rmse(out, val_ds.target))
    return MetricReport(
        metric=metric,
        fold_values=values,
        fit_seconds=fit_s,
        predict_seconds=pred_s,
        fold_sizes=sizes,
        n_rows=dataset.n_rows,
        n_features=dataset.n_features,
    )


@dataclass(frozen=True)
class BenchmarkEntry:
    name: str
    path: str
    target: str
    positive_label: str | None = None


BENCHMARK_CSV_COLUMNS = [
    "dataset",
    "rows",
    "features",
    "auroc_mean",
    "auroc_std",
    "fit_seconds",
    "predict_us_per_row",
    "skipped",
]


def run_benchmark(
    entries: list[BenchmarkEntry],
    config: TrainConfig,
    out_path: str | Path,
    k: int = 5,
    cv_seed: int = 42,
    threads: int = 0,
) -> list[dict]:
    """One CSV row per dataset; missing or unusable datasets are marked
    skipped and the run continues."""
    rows: list[dict] = []
    for entry in entries:
        try:
            dataset = load_csv(
                entry.path,
                entry.target,
                Task.CLASSIFICATION,
                positive_label=entry.positive_label,
            )
            report = kfold_cv(dataset, k, config, "auroc", cv_seed, threads)
            rows.append(
                {
                    "dataset": entry.name,
                    "rows": dataset.n_rows,
                    "features": dataset.n_features,
                    "auroc_mean": repr(report.mean),
                    "auroc_std": repr(report.std),
                    "fit_seconds": f"{report.mean_fit_seconds:.3f}",
                    "predict_us_per_row": f"{report.predict_us_per_row:.2f}",
                    "skipped": "false",
                }
            )
        except (DataError, OSError) as exc:
            rows.append(
                {
                    "dataset": entry.name,
                    "rows": "",
                    "features": "",
                    "auroc_mean": "",
                    "auroc_std": "",
                    "fit_seconds": "",
                    "predict_us_per_row": "",
                    "skipped": "true",
                }
            )
    with open(out_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=BENCHMARK_CSV_COLUMNS)
        writer.writeheader()
        writer.writerows(rows)
    return rows
