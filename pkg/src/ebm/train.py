"""Main-effect training: outer-bagged, round-robin, one-feature-at-a-time
gradient boosting over binned data.

Each outer bag bootstraps the training partition, boosts every feature in
ascending index order with a depth-limited histogram tree per round (residuals
recomputed from current scores before every feature round), early-stops on a
held-out validation slice, and the per-bag tables are averaged bag-wise before
the terms are centered into the intercept.

Determinism contract: every random draw comes from a per-bag generator derived
from (seed, stage, bag_id), and the bag reduction is ordered by bag id, so
results are bit-identical regardless of how many worker threads run the bags.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .binning import bin_dataset, fit_preprocessor
from .data import ColumnKind, DataError, Dataset, Task
from .model import AdditiveModel, LinkFunction, Term, apply_link, sigmoid


class TrainingError(RuntimeError):
    """Training could not proceed (degenerate target, empty partitions, ...)."""


@dataclass(frozen=True)
class TrainConfig:
    """Knobs for the boosting procedure.  One epoch is one full round-robin
    pass over all boosted terms."""

    learning_rate: float = 0.01
    max_epochs: int = 5000
    outer_bags: int = 8
    inner_bags: int = 0
    max_bins: int = 256
    max_leaves: int = 3
    n_interactions: int = 0
    validation_fraction: float = 0.15
    early_stop_patience: int = 50
    min_samples_leaf: int = 2
    seed: int = 0

    def __post_init__(self) -> None:
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")
        if self.outer_bags < 1:
            raise ValueError("outer_bags must be >= 1")
        if self.inner_bags < 0:
            raise ValueError("inner_bags must be >= 0")
        if self.max_bins < 2:
            raise ValueError("max_bins must be >= 2")
        if self.max_leaves < 1:
            raise ValueError("max_leaves must be >= 1")
        if self.n_interactions < 0:
            raise ValueError("n_interactions must be >= 0")
        if not 0.0 <= self.validation_fraction <= 0.5:
            raise ValueError("validation_fraction must be in [0, 0.5]")
        if self.early_stop_patience < 1:
            raise ValueError("early_stop_patience must be >= 1")
        if self.min_samples_leaf < 0:
            raise ValueError("min_samples_leaf must be >= 0")


def fast_preset(**overrides) -> TrainConfig:
    """Default configuration: favors speed (8 bags, no inner bags, early stop)."""
    return replace(TrainConfig(), **overrides)


def reference_preset(**overrides) -> TrainConfig:
    """Accuracy-oriented reference configuration: 100 inner bags, 100 outer
    bags, 5000 epochs, learning rate 0.01."""
    return replace(
        TrainConfig(outer_bags=100, inner_bags=100, max_epochs=5000, learning_rate=0.01),
        **overrides,
    )


def benchmark_preset(**overrides) -> TrainConfig:
    """Fast preset plus 10 pairwise interaction terms (benchmark harness)."""
    return replace(TrainConfig(n_interactions=10), **overrides)


def config_to_dict(config: TrainConfig) -> dict:
    return asdict(config)


def config_from_dict(doc: dict) -> TrainConfig:
    return TrainConfig(**doc)


def link_for_task(task: Task) -> LinkFunction:
    return LinkFunction.LOGIT if task is Task.CLASSIFICATION else LinkFunction.IDENTITY


# ---------------------------------------------------------------------------
# Randomness
# ---------------------------------------------------------------------------

_SEED_MASK = 0xFFFF_FFFF_FFFF_FFFF


def bag_rng(seed: int, bag_id: int, stage: int = 0) -> np.random.Generator:
    """Per-bag generator derived from (seed, stage, bag_id); independent of
    thread count and of every other bag's stream."""
    ss = np.random.SeedSequence(entropy=seed & _SEED_MASK, spawn_key=(stage, bag_id))
    return np.random.default_rng(ss)


def bootstrap_indices(n: int, rng: np.random.Generator) -> np.ndarray:
    """n uniform draws with replacement from 0..n-1."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return rng.integers(0, n, size=n)


# ---------------------------------------------------------------------------
# Losses and residuals
# ---------------------------------------------------------------------------


def compute_pseudo_residuals(
    y: np.ndarray, scores: np.ndarray, link: LinkFunction
) -> np.ndarray:
    """Negative gradient of the loss: y - sigmoid(score) for log-loss,
    y - score for squared loss."""
    if link is LinkFunction.LOGIT:
        return y - sigmoid(scores)
    return y - scores


def loss_from_scores(
    y: np.ndarray, scores: np.ndarray, weights: np.ndarray, link: LinkFunction
) -> float:
    """Weighted mean loss: log-loss (logit) or squared error (identity)."""
    total = weights.sum()
    if total <= 0:
        return 0.0
    if link is LinkFunction.LOGIT:
        # log(1 + e^s) - y*s, evaluated stably.
        per_row = np.logaddexp(0.0, scores) - y * scores
    else:
        per_row = (y - scores) ** 2
    return float(np.dot(weights, per_row) / total)


# ---------------------------------------------------------------------------
# Histogram + per-feature tree round
# ---------------------------------------------------------------------------


def build_feature_histogram(
    binned_col: np.ndarray,
    residuals: np.ndarray,
    row_weights: np.ndarray,
    n_bins: int,
    active_rows: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-bin (sum of weight*residual, sum of weight); bins absent from the
    active rows are zero."""
    if active_rows is not None:
        binned_col = binned_col[active_rows]
        residuals = residuals[active_rows]
        row_weights = row_weights[active_rows]
    sums = np.bincount(binned_col, weights=row_weights * residuals, minlength=n_bins)
    weights = np.bincount(binned_col, weights=row_weights, minlength=n_bins)
    return sums, weights


def _gain_term(s: float, w: float) -> float:
    return s * s / w if w > 0 else 0.0


def _grow_numeric_tree(
    sums: np.ndarray, weights: np.ndarray, max_leaves: int, min_samples_leaf: int
) -> list[tuple[int, int]]:
    """Greedy contiguous-range splits over ordered bin positions.

    The missing bin sits at position 0, so the cut isolating it is always a
    candidate.  Returns leaves as [lo, hi) ranges covering all positions.
    """
    n = len(sums)
    cs = np.concatenate(([0.0], np.cumsum(sums)))
    cw = np.concatenate(([0.0], np.cumsum(weights)))
    leaves: list[tuple[int, int]] = [(0, n)]
    while len(leaves) < max_leaves:
        best_gain = 0.0
        best: tuple[int, int, int] | None = None  # (leaf index, lo, cut)
        for li, (lo, hi) in enumerate(leaves):
            s, w = cs[hi] - cs[lo], cw[hi] - cw[lo]
            if w <= 0:
                continue
            parent = _gain_term(s, w)
            for cut in range(lo + 1, hi):
                wl = cw[cut] - cw[lo]
                wr = w - wl
                if wl < min_samples_leaf or wr < min_samples_leaf:
                    continue
                sl = cs[cut] - cs[lo]
                gain = _gain_term(sl, wl) + _gain_term(s - sl, wr) - parent
                if gain > best_gain:
                    best_gain = gain
                    best = (li, lo, cut)
        if best is None:
            break
        li, lo, cut = best
        hi = leaves[li][1]
        leaves[li : li + 1] = [(lo, cut), (cut, hi)]
    return leaves


def _grow_categorical_tree(
    sums: np.ndarray, weights: np.ndarray, max_leaves: int, min_samples_leaf: int
) -> list[list[int]]:
    """Greedy single-bin isolation over unordered bins (missing bin included
    as its own splittable unit).  Only bins with data belong to a leaf."""
    members = [b for b in range(len(sums)) if weights[b] > 0]
    if not members:
        return []
    leaves: list[list[int]] = [members]
    while len(leaves) < max_leaves:
        best_gain = 0.0
        best: tuple[int, int] | None = None  # (leaf index, member position)
        for li, leaf in enumerate(leaves):
            if len(leaf) < 2:
                continue
            s = sum(float(sums[b]) for b in leaf)
            w = sum(float(weights[b]) for b in leaf)
            parent = _gain_term(s, w)
            for pi, b in enumerate(leaf):
                wu = float(weights[b])
                wr = w - wu
                if wu < min_samples_leaf or wr < min_samples_leaf:
                    continue
                su = float(sums[b])
                gain = _gain_term(su, wu) + _gain_term(s - su, wr) - parent
                if gain > best_gain:
                    best_gain = gain
                    best = (li, pi)
        if best is None:
            break
        li, pi = best
        leaf = leaves[li]
        isolated = leaf[pi]
        leaves[li] = [b for b in leaf if b != isolated]
        leaves.append([isolated])
        leaves.sort(key=lambda l: l[0])  # keep lowest-index-first iteration order
    return leaves


def boost_feature_round(
    sums: np.ndarray,
    weights: np.ndarray,
    kind: ColumnKind,
    config: TrainConfig,
) -> np.ndarray:
    """One boosting step for one feature: fit a depth-limited tree over the
    histogram, return learning_rate * leaf mean residual per bin.

    Numeric empty bins inherit the covering leaf's value; categorical bins
    never seen in the data stay 0.
    """
    update = np.zeros(len(sums))
    if kind is ColumnKind.NUMERIC:
        leaves = _grow_numeric_tree(sums, weights, config.max_leaves, config.min_samples_leaf)
        cs = np.concatenate(([0.0], np.cumsum(sums)))
        cw = np.concatenate(([0.0], np.cumsum(weights)))
        for lo, hi in leaves:
            w = cw[hi] - cw[lo]
            value = (cs[hi] - cs[lo]) / w if w > 0 else 0.0
            update[lo:hi] = config.learning_rate * value
    else:
        leaves = _grow_categorical_tree(sums, weights, config.max_leaves, config.min_samples_leaf)
        for leaf in leaves:
            w = sum(float(weights[b]) for b in leaf)
            value = sum(float(sums[b]) for b in leaf) / w if w > 0 else 0.0
            for b in leaf:
                update[b] = config.learning_rate * value
    return update


# ---------------------------------------------------------------------------
# Per-bag boosting loop
# ---------------------------------------------------------------------------


@dataclass
class BagState:
    """Result of boosting one outer bag."""

    bootstrap: np.ndarray
    validation: np.ndarray
    scores: np.ndarray
    tables: list[np.ndarray]
    base_score: float
    best_epoch: int
    epochs_run: int
    best_val_loss: float | None
    val_loss_history: list[float] = field(default_factory=list)
    train_loss_history: list[float] = field(default_factory=list)


def _split_bag_rows(
    rng: np.random.Generator, n: int, validation_fraction: float, bootstrap: bool
) -> tuple[np.ndarray, np.ndarray]:
    """(validation indices, bootstrap row indices) for one bag.

    The bootstrap draws len(pool) rows with replacement from the non-validation
    pool; a single-bag run (bootstrap=False) uses the pool as-is so small-scale
    results are reproducible functions of the dataset alone.
    """
    n_val = int(round(n * validation_fraction))
    n_val = min(n_val, n - 1)
    if n_val > 0:
        perm = rng.permutation(n)
        val, pool = perm[:n_val], perm[n_val:]
    else:
        val, pool = np.empty(0, dtype=np.int64), np.arange(n)
    if len(pool) == 0:
        raise TrainingError("zero training rows after validation split")
    boot = pool[bootstrap_indices(len(pool), rng)] if bootstrap else pool.copy()
    return val, boot


def _fit_single_bag(
    X: np.ndarray,
    y: np.ndarray,
    row_weights: np.ndarray,
    kinds: list[ColumnKind],
    n_bins: list[int],
    link: LinkFunction,
    config: TrainConfig,
    bag_id: int,
    stage: int = 0,
) -> BagState:
    rng = bag_rng(config.seed, bag_id, stage)
    n, p = X.shape
    val, boot = _split_bag_rows(
        rng, n, config.validation_fraction, bootstrap=config.outer_bags >= 2
    )
    counts = np.bincount(boot, minlength=n).astype(float) * row_weights
    total = counts.sum()

    base = float(np.dot(counts, y) / total)
    base_score = apply_link(link, base)
    scores = np.full(n, base_score)
    tables = [np.zeros(nb) for nb in n_bins]

    has_val = len(val) > 0
    val_w = row_weights[val]
    val_hist: list[float] = []
    train_hist: list[float] = []
    best_val = (
        loss_from_scores(y[val], scores[val], val_w, link) if has_val else None
    )
    best_epoch = 0
    best_tables = [t.copy() for t in tables]

    epochs_run = 0
    for epoch in range(1, config.max_epochs + 1):
        for j in range(p):
            residuals = compute_pseudo_residuals(y, scores, link)
            col = X[:, j]
            if config.inner_bags == 0:
                sums, weights = build_feature_histogram(col, residuals, counts, n_bins[j])
                update = boost_feature_round(sums, weights, kinds[j], config)
            else:
                update = np.zeros(n_bins[j])
                for _ in range(config.inner_bags):
                    sub = boot[rng.integers(0, len(boot), size=len(boot))]
                    c_ib = np.bincount(sub, minlength=n).astype(float) * row_weights
                    s_ib, w_ib = build_feature_histogram(col, residuals, c_ib, n_bins[j])
                    update += boost_feature_round(s_ib, w_ib, kinds[j], config)
                update /= config.inner_bags
            tables[j] += update
            scores += update[col]
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
        base_score=base_score,
        best_epoch=best_epoch,
        epochs_run=epochs_run,
        best_val_loss=best_val,
        val_loss_history=val_hist,
        train_loss_history=train_hist,
    )


def resolve_threads(threads: int, n_tasks: int) -> int:
    if threads <= 0:
        threads = os.cpu_count() or 1
    return max(1, min(threads, n_tasks))


def run_bags(worker, n_bags: int, threads: int) -> list:
    """Execute per-bag workers, in parallel if allowed; results come back in
    ascending bag id order so reductions are order-fixed."""
    workers = resolve_threads(threads, n_bags)
    if workers == 1:
        return [worker(b) for b in range(n_bags)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(worker, range(n_bags)))


def train_main_effects(
    dataset: Dataset, config: TrainConfig, threads: int = 0
) -> AdditiveModel:
    """Fit one centered main-effect term per feature by bagged cyclic boosting."""
    if dataset.n_rows == 0:
        raise TrainingError("cannot train on an empty dataset")
    link = link_for_task(dataset.task)
    if dataset.task is Task.CLASSIFICATION and len(np.unique(dataset.target)) < 2:
        raise TrainingError("degenerate target: single class")
    pre = fit_preprocessor(dataset, config.max_bins)
    X = bin_dataset(dataset, pre)
    kinds = [b.kind for b in pre.bins]
    n_bins = [b.n_bins for b in pre.bins]

    def worker(bag_id: int) -> BagState:
        return _fit_single_bag(
            X, dataset.target, dataset.weights, kinds, n_bins, link, config, bag_id
        )

    bags = run_bags(worker, config.outer_bags, threads)

    p = dataset.n_features
    tables = [
        np.mean(np.stack([bag.tables[j] for bag in bags]), axis=0) for j in range(p)
    ]
    intercept = float(np.mean([bag.base_score for bag in bags]))
    terms = tuple(Term((j,), tables[j]) for j in range(p))
    metadata = {
        "seed": config.seed,
        "config": config_to_dict(config),
        "train_timestamp": None,
        "bag_best_epochs": [bag.best_epoch for bag in bags],
        "bag_val_loss": [bag.best_val_loss for bag in bags],
    }
    model = AdditiveModel(
        intercept=intercept,
        link=link,
        preprocessor=pre,
        terms=terms,
        feature_names=dataset.feature_names,
        task=dataset.task,
        metadata=metadata,
    )
    return center_terms(model)


def term_weights(model: AdditiveModel, term: Term) -> np.ndarray:
    """Training bin counts used for centering and importance: the feature's
    bin weights for 1-D terms, the stored joint counts for 2-D terms (outer
    product fallback when a hand-built pair term carries none)."""
    if len(term.features) == 1:
        return model.preprocessor.bin_weights[term.features[0]]
    if term.bin_weights is not None:
        return term.bin_weights
    wi = model.preprocessor.bin_weights[term.features[0]]
    wj = model.preprocessor.bin_weights[term.features[1]]
    total = wi.sum()
    return np.outer(wi, wj) / total if total > 0 else np.outer(wi, wj)


def center_terms(model: AdditiveModel) -> AdditiveModel:
    """Shift every term to zero weighted mean, absorbing the shifts into the
    intercept; scores on any row move by at most float reassociation noise."""
    intercept = model.intercept
    new_terms = []
    for term in model.terms:
        w = term_weights(model, term)
        total = float(w.sum())
        mu = float((w * term.scores).sum() / total) if total > 0 else 0.0
        new_terms.append(Term(term.features, term.scores - mu, term.bin_weights))
        intercept = intercept + mu
    return AdditiveModel(
        intercept=intercept,
        link=model.link,
        preprocessor=model.preprocessor,
        terms=tuple(new_terms),
        feature_names=model.feature_names,
        task=model.task,
        metadata=model.metadata,
    )
