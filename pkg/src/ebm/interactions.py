"""Pairwise interaction detection and 2-D term training.

Candidate pairs are ranked on main-effect residuals by the squared-error
reduction of the best one-cut-per-axis 2x2 partition of the joint histogram
(computed from cumulative sums).  The top-K pairs are then boosted round-robin
with the main-effect tables frozen, using the same bagging, learning-rate and
early-stopping machinery as the main stage.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from itertools import combinations
from pathlib import Path

import numpy as np

from .binning import PAIR_MAX_GRID, bin_dataset, coarsen_bin_map, Preprocessor
from .data import Dataset
from .model import AdditiveModel, Term, predict_score_batch
from .train import (
    BagState,
    TrainConfig,
    TrainingError,
    _split_bag_rows,
    bag_rng,
    compute_pseudo_residuals,
    link_for_task,
    loss_from_scores,
    run_bags,
    train_main_effects,
)

_PAIR_STAGE = 1  # seed-derivation stage tag; mains use 0


@dataclass(frozen=True)
class PairScore:
    """Candidate feature pair (i < j) with its residual variance-reduction score."""

    pair: tuple[int, int]
    score: float


def _padded_cumsum2(a: np.ndarray) -> np.ndarray:
    out = np.zeros((a.shape[0] + 1, a.shape[1] + 1))
    out[1:, 1:] = a.cumsum(axis=0).cumsum(axis=1)
    return out


def _sq_over(s: np.ndarray, w: np.ndarray) -> np.ndarray:
    return np.where(w > 0, s * s / np.where(w > 0, w, 1.0), 0.0)


def _best_2x2_gain(sums: np.ndarray, weights: np.ndarray) -> float:
    """Max over one cut per axis of sum(S_q^2/W_q) - S^2/W over the 2x2 cells."""
    nr, nc = sums.shape
    if nr < 2 or nc < 2:
        return 0.0
    cs = _padded_cumsum2(sums)
    cw = _padded_cumsum2(weights)
    s_tot, w_tot = cs[nr, nc], cw[nr, nc]
    # Quadrant sums for every cut position (a, b), a in 1..nr-1, b in 1..nc-1.
    s11 = cs[1:nr, 1:nc]
    s12 = cs[1:nr, nc:] - s11
    s21 = cs[nr:, 1:nc] - s11
    s22 = s_tot - s11 - s12 - s21
    w11 = cw[1:nr, 1:nc]
    w12 = cw[1:nr, nc:] - w11
    w21 = cw[nr:, 1:nc] - w11
    w22 = w_tot - w11 - w12 - w21
    gains = (
        _sq_over(s11, w11)
        + _sq_over(s12, w12)
        + _sq_over(s21, w21)
        + _sq_over(s22, w22)
        - _sq_over(np.asarray(s_tot), np.asarray(w_tot))
    )
    return max(float(gains.max()), 0.0)


def _coarse_maps(pre: Preprocessor, max_grid: int) -> list[np.ndarray]:
    return [coarsen_bin_map(w, max_grid) for w in pre.bin_weights]


def _joint_histogram(
    ci: np.ndarray, cj: np.ndarray, n_i: int, n_j: int, residuals: np.ndarray, weights: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    flat = ci.astype(np.int64) * n_j + cj
    sums = np.bincount(flat, weights=weights * residuals, minlength=n_i * n_j)
    wts = np.bincount(flat, weights=weights, minlength=n_i * n_j)
    return sums.reshape(n_i, n_j), wts.reshape(n_i, n_j)


def rank_pairs(
    binned: np.ndarray,
    residuals: np.ndarray,
    pre: Preprocessor,
    row_weights: np.ndarray | None = None,
    max_grid: int = PAIR_MAX_GRID,
) -> list[PairScore]:
    """Score every feature pair on the joint residual histogram, descending.

    Ties break by lexicographic pair order.  Fewer than two features yields an
    empty list.
    """
    n, p = binned.shape
    if p < 2:
        return []
    if row_weights is None:
        row_weights = np.ones(n)
    maps = _coarse_maps(pre, max_grid)
    n_coarse = [int(m.max()) + 1 if len(m) else 1 for m in maps]
    coarse_cols = [maps[j][binned[:, j]] for j in range(p)]
    scored = []
    for i, j in combinations(range(p), 2):
        sums, weights = _joint_histogram(
            coarse_cols[i], coarse_cols[j], n_coarse[i], n_coarse[j], residuals, row_weights
        )
        scored.append(PairScore((i, j), _best_2x2_gain(sums, weights)))
    scored.sort(key=lambda ps: (-ps.score, ps.pair))
    return scored


def pair_scores_to_csv(
    pairs: list[PairScore], feature_names: tuple[str, ...], path: str | Path
) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["pair_i", "pair_j", "name_i", "name_j", "score"])
        for ps in pairs:
            i, j = ps.pair
            writer.writerow([i, j, feature_names[i], feature_names[j], repr(ps.score)])


# ---------------------------------------------------------------------------
# 2-D boosting
# ---------------------------------------------------------------------------


def _grow_rect_tree(
    sums: np.ndarray, weights: np.ndarray, max_leaves: int, min_samples_leaf: int
) -> list[tuple[int, int, int, int]]:
    """Greedy axis-aligned splits of the joint grid into rectangles."""
    nr, nc = sums.shape
    cs = _padded_cumsum2(sums)
    cw = _padded_cumsum2(weights)

    def rect(c: np.ndarray, r0: int, r1: int, c0: int, c1: int) -> float:
        return float(c[r1, c1] - c[r0, c1] - c[r1, c0] + c[r0, c0])

    leaves = [(0, nr, 0, nc)]
    while len(leaves) < max_leaves:
        best_gain = 0.0
        best = None  # (leaf index, axis, cut)
        for li, (r0, r1, c0, c1) in enumerate(leaves):
            s, w = rect(cs, r0, r1, c0, c1), rect(cw, r0, r1, c0, c1)
            if w <= 0:
                continue
            parent = s * s / w
            for a in range(r0 + 1, r1):
                wl = rect(cw, r0, a, c0, c1)
                wr = w - wl
                if wl < min_samples_leaf or wr < min_samples_leaf:
                    continue
                sl = rect(cs, r0, a, c0, c1)
                gain = (
                    (sl * sl / wl if wl > 0 else 0.0)
                    + ((s - sl) ** 2 / wr if wr > 0 else 0.0)
                    - parent
                )
                if gain > best_gain:
                    best_gain, best = gain, (li, 0, a)
            for b in range(c0 + 1, c1):
                wl = rect(cw, r0, r1, c0, b)
                wr = w - wl
                if wl < min_samples_leaf or wr < min_samples_leaf:
                    continue
                sl = rect(cs, r0, r1, c0, b)
                gain = (
                    (sl * sl / wl if wl > 0 else 0.0)
                    + ((s - sl) ** 2 / wr if wr > 0 else 0.0)
                    - parent
                )
                if gain > best_gain:
                    best_gain, best = gain, (li, 1, b)
        if best is None:
            break
        li, axis, cut = best
        r0, r1, c0, c1 = leaves[li]
        if axis == 0:
            leaves[li : li + 1] = [(r0, cut, c0, c1), (cut, r1, c0, c1)]
        else:
            leaves[li : li + 1] = [(r0, r1, c0, cut), (r0, r1, cut, c1)]
    return leaves


def boost_pair_round(
    sums: np.ndarray, weights: np.ndarray, config: TrainConfig
) -> np.ndarray:
    """2-D analog of the per-feature round: greedy rectangles, mean-residual
    leaf values scaled by the learning rate; empty cells inherit their leaf."""
    cs = _padded_cumsum2(sums)
    cw = _padded_cumsum2(weights)
    update = np.zeros_like(sums)
    for r0, r1, c0, c1 in _grow_rect_tree(sums, weights, config.max_leaves, config.min_samples_leaf):
        w = cw[r1, c1] - cw[r0, c1] - cw[r1, c0] + cw[r0, c0]
        s = cs[r1, c1] - cs[r0, c1] - cs[r1, c0] + cs[r0, c0]
        value = s / w if w > 0 else 0.0
        update[r0:r1, c0:c1] = config.learning_rate * value
    return update


def _fit_pair_bag(
    coarse_cols: list[np.ndarray],
    grids: list[tuple[int, int]],
    base_scores: np.ndarray,
    y: np.ndarray,
    row_weights: np.ndarray,
    link,
    config: TrainConfig,
    bag_id: int,
) -> BagState:
    rng = bag_rng(config.seed, bag_id, _PAIR_STAGE)
    n = len(y)
    val, boot = _split_bag_rows(
        rng, n, config.validation_fraction, bootstrap=config.outer_bags >= 2
    )
    counts = np.bincount(boot, minlength=n).astype(float) * row_weights
    scores = base_scores.copy()
    tables = [np.zeros(g) for g in grids]
    flat_cols = [
        (ci.astype(np.int64) * g[1] + cj) for (ci, cj), g in zip(coarse_cols, grids)
    ]

    has_val = len(val) > 0
    val_w = row_weights[val]
    val_hist: list[float] = []
    train_hist: list[float] = []
    best_val = loss_from_scores(y[val], scores[val], val_w, link) if has_val else None
    best_epoch = 0
    best_tables = [t.copy() for t in tables]

    epochs_run = 0
    for epoch in range(1, config.max_epochs + 1):
        for k, (g, flat) in enumerate(zip(grids, flat_cols)):
            residuals = compute_pseudo_residuals(y, scores, link)
            if config.inner_bags == 0:
                s = np.bincount(flat, weights=counts * residuals, minlength=g[0] * g[1])
                w = np.bincount(flat, weights=counts, minlength=g[0] * g[1])
                update = boost_pair_round(s.reshape(g), w.reshape(g), config)
            else:
                update = np.zeros(g)
                for _ in range(config.inner_bags):
                    sub = boot[rng.integers(0, len(boot), size=len(boot))]
                    c_ib = np.bincount(sub, minlength=n).astype(float) * row_weights
                    s = np.bincount(flat, weights=c_ib * residuals, minlength=g[0] * g[1])
                    w = np.bincount(flat, weights=c_ib, minlength=g[0] * g[1])
                    update += boost_pair_round(s.reshape(g), w.reshape(g), config)
                update /= config.inner_bags
            tables[k] += update
            scores += update.ravel()[flat]
        epochs_run = epoch
        train_hist.append(loss_from_scores(y, scores, counts, link))
        if has_val:
            vloss = loss_from_scores(y[val], scores[val], val_w, link)
            val_hist.append(vloss)
            if vloss < best_val:
                best_val = vloss
                best_epoch = epoch
                best_tables = [t.copy() for t in tables]
            elif epoch - best_epoch >= config.early_stop_patience:
                break

    if has_val:
        tables = best_tables
    else:
        best_epoch = epochs_run
    return BagState(
        bootstrap=boot,
        validation=val,
        scores=scores,
        tables=tables,
        base_score=0.0,
        best_epoch=best_epoch,
        epochs_run=epochs_run,
        best_val_loss=best_val,
        val_loss_history=val_hist,
        train_loss_history=train_hist,
    )


def train_pair_terms(
    model: AdditiveModel,
    dataset: Dataset,
    pairs: list[PairScore],
    config: TrainConfig,
    threads: int = 0,
) -> AdditiveModel:
    """Boost 2-D lookup terms for the top-K ranked pairs on top of the frozen
    main-effects model; the new terms are centered into the intercept."""
    k = config.n_interactions
    if k == 0:
        return model
    if k > len(pairs):
        warnings.warn(
            f"requested {k} interactions but only {len(pairs)} pairs exist; training all"
        )
        k = len(pairs)
    chosen = [ps.pair for ps in pairs[:k]]

    pre = model.preprocessor
    X = bin_dataset(dataset, pre)
    base_scores = predict_score_batch(model, X)
    link = link_for_task(dataset.task)

    maps = _coarse_maps(pre, PAIR_MAX_GRID)
    n_coarse = [int(m.max()) + 1 if len(m) else 1 for m in maps]
    coarse_cols = [
        (maps[i][X[:, i]], maps[j][X[:, j]]) for (i, j) in chosen
    ]
    grids = [(n_coarse[i], n_coarse[j]) for (i, j) in chosen]

    def worker(bag_id: int) -> BagState:
        return _fit_pair_bag(
            coarse_cols, grids, base_scores, dataset.target, dataset.weights,
            link, config, bag_id,
        )

    bags = run_bags(worker, config.outer_bags, threads)
    intercept = model.intercept
    new_terms = []
    for idx, (i, j) in enumerate(chosen):
        coarse = np.mean(np.stack([bag.tables[idx] for bag in bags]), axis=0)
        full = coarse[np.ix_(maps[i], maps[j])]
        nbi, nbj = pre.bins[i].n_bins, pre.bins[j].n_bins
        flat = X[:, i].astype(np.int64) * nbj + X[:, j]
        joint_w = np.bincount(flat, weights=dataset.weights, minlength=nbi * nbj).reshape(
            nbi, nbj
        )
        total = joint_w.sum()
        mu = float((joint_w * full).sum() / total) if total > 0 else 0.0
        intercept = intercept + mu
        new_terms.append(Term((i, j), full - mu, bin_weights=joint_w))

    metadata = dict(model.metadata)
    metadata["pairs"] = [list(p) for p in chosen]
    metadata["pair_scores"] = [float(ps.score) for ps in pairs[:k]]
    metadata["pair_bag_best_epochs"] = [bag.best_epoch for bag in bags]
    return AdditiveModel(
        intercept=intercept,
        link=model.link,
        preprocessor=pre,
        terms=model.terms + tuple(new_terms),
        feature_names=model.feature_names,
        task=model.task,
        metadata=metadata,
    )


def train_model(dataset: Dataset, config: TrainConfig, threads: int = 0) -> AdditiveModel:
    """Full pipeline: main effects, then (when configured) ranked pair terms."""
    model = train_main_effects(dataset, config, threads)
    if config.n_interactions == 0:
        return model
    X = bin_dataset(dataset, model.preprocessor)
    scores = predict_score_batch(model, X)
    residuals = compute_pseudo_residuals(
        dataset.target, scores, link_for_task(dataset.task)
    )
    pairs = rank_pairs(X, residuals, model.preprocessor, dataset.weights)
    if not pairs:
        return model
    return train_pair_terms(model, dataset, pairs, config, threads)
