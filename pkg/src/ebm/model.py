"""The additive model: intercept + per-term lookup tables, link functions,
exact prediction, and the versioned text serialization format.

Prediction is pure lookups and additions in stored term order, left to right;
that fixed summation order is what lets explanation additivity and
serialization round-trips demand exact floating-point equality.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .binning import BinDefinition, Preprocessor
from .data import ColumnKind, DataError, Task

FORMAT_VERSION = 1


class ModelFormatError(ValueError):
    """Unusable model file: bad version, schema violation, non-finite values."""


class LinkFunction(Enum):
    LOGIT = "logit"
    IDENTITY = "identity"


def sigmoid(s):
    """Overflow-safe logistic: exp(s)/(1+exp(s)) for s<0, 1/(1+exp(-s)) otherwise."""
    s = np.asarray(s, dtype=float)
    out = np.empty_like(s)
    neg = s < 0
    out[~neg] = 1.0 / (1.0 + np.exp(-s[~neg]))
    es = np.exp(s[neg])
    out[neg] = es / (1.0 + es)
    return out if out.ndim else float(out)


def inverse_link(link: LinkFunction, score):
    """Score -> E[y]: sigmoid for logit, identity otherwise."""
    if link is LinkFunction.LOGIT:
        return sigmoid(score)
    return score


def apply_link(link: LinkFunction, mean: float) -> float:
    """E[y] -> score; the logit branch clamps away exact 0/1 to stay finite."""
    if link is LinkFunction.LOGIT:
        p = min(max(mean, 1e-9), 1.0 - 1e-9)
        return float(np.log(p / (1.0 - p)))
    return float(mean)


@dataclass
class OpCounter:
    """Structural operation tally for the prediction-cost contract."""

    lookups: int = 0
    additions: int = 0
    link_evals: int = 0


@dataclass(frozen=True)
class Term:
    """One additive component: 1 or 2 feature indices plus a per-bin score table.

    ``bin_weights`` carries joint training counts for 2-D terms so centering
    and importance stay computable from the model file alone; 1-D terms use
    the preprocessor's per-feature counts instead and leave it None.
    """

    features: tuple[int, ...]
    scores: np.ndarray
    bin_weights: np.ndarray | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "features", tuple(int(f) for f in self.features))
        scores = np.asarray(self.scores, dtype=float)
        object.__setattr__(self, "scores", scores)
        if len(self.features) not in (1, 2):
            raise ModelFormatError("a term references 1 or 2 features")
        if scores.ndim != len(self.features):
            raise ModelFormatError("score array rank must match feature count")
        if not np.all(np.isfinite(scores)):
            raise ModelFormatError("non-finite value encountered in term scores")

    def contribution(self, bins: list[int]) -> float:
        """Lookup of this term's score at the row's bin indices (one lookup)."""
        if len(self.features) == 1:
            return float(self.scores[bins[self.features[0]]])
        return float(self.scores[bins[self.features[0]], bins[self.features[1]]])


@dataclass(frozen=True)
class AdditiveModel:
    """Intercept + link + preprocessor + ordered terms; immutable once built."""

    intercept: float
    link: LinkFunction
    preprocessor: Preprocessor
    terms: tuple[Term, ...]
    feature_names: tuple[str, ...]
    task: Task
    metadata: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not np.isfinite(self.intercept):
            raise ModelFormatError("non-finite intercept")
        if len(self.feature_names) != self.preprocessor.n_features:
            raise ModelFormatError("feature_names length differs from preprocessor")
        seen: set[tuple[int, ...]] = set()
        pair_started = False
        for t in self.terms:
            if t.features in seen:
                raise ModelFormatError(f"duplicate term for features {t.features}")
            seen.add(t.features)
            if len(t.features) == 1:
                if pair_started:
                    raise ModelFormatError("1-feature terms must precede 2-feature terms")
            else:
                pair_started = True
            expected = tuple(
                self.preprocessor.bins[f].n_bins for f in t.features
            )
            if any(f < 0 or f >= self.preprocessor.n_features for f in t.features):
                raise ModelFormatError(f"term references unknown feature {t.features}")
            if t.scores.shape != expected:
                raise ModelFormatError(
                    f"term {t.features} score shape {t.scores.shape} != bins {expected}"
                )

    @property
    def n_features(self) -> int:
        return self.preprocessor.n_features

    def score_from_bins(
        self,
        bins: list[int],
        op_counter: OpCounter | None = None,
        contributions_out: list[float] | None = None,
    ) -> float:
        """Additive score for pre-binned cells: intercept, then one lookup and
        one addition per term, in stored order."""
        s = self.intercept
        for term in self.terms:
            c = term.contribution(bins)
            s = s + c
            if op_counter is not None:
                op_counter.lookups += 1
                op_counter.additions += 1
            if contributions_out is not None:
                contributions_out.append(c)
        return s


def predict_score(
    model: AdditiveModel, row: list, op_counter: OpCounter | None = None
) -> float:
    """intercept + sum of term lookups for one raw row (exact, fixed order)."""
    bins = model.preprocessor.bin_row(row)
    return model.score_from_bins(bins, op_counter)


def predict_mean(
    model: AdditiveModel, row: list, op_counter: OpCounter | None = None
) -> float:
    """Score passed through the inverse link: probability for classification."""
    s = predict_score(model, row, op_counter)
    if op_counter is not None:
        op_counter.link_evals += 1
    return float(inverse_link(model.link, s))


def predict_score_batch(model: AdditiveModel, binned: np.ndarray) -> np.ndarray:
    """Vectorized scores for a pre-binned matrix.

    Accumulates per term in stored order, so each row sees the identical
    floating-point operation sequence as ``predict_score``.
    """
    s = np.full(binned.shape[0], model.intercept)
    for term in model.terms:
        if len(term.features) == 1:
            c = term.scores[binned[:, term.features[0]]]
        else:
            c = term.scores[binned[:, term.features[0]], binned[:, term.features[1]]]
        s = s + c
    return s


def predict_mean_batch(model: AdditiveModel, binned: np.ndarray) -> np.ndarray:
    return inverse_link(model.link, predict_score_batch(model, binned))


# ---------------------------------------------------------------------------
# Serialization: a single self-describing JSON document (format_version 1).
# Floats rely on shortest-round-trip decimal encoding, so load(save(m)) is
# bit-exact; NaN/Inf are rejected outright.
# ---------------------------------------------------------------------------


def model_to_dict(model: AdditiveModel) -> dict:
    features = []
    for j, (name, bindef) in enumerate(
        zip(model.feature_names, model.preprocessor.bins)
    ):
        entry: dict = {"name": name, "kind": bindef.kind.value}
        if bindef.kind is ColumnKind.NUMERIC:
            entry["cuts"] = [float(c) for c in bindef.cuts]
        else:
            entry["categories"] = dict(bindef.categories)
        entry["bin_weights"] = [float(w) for w in model.preprocessor.bin_weights[j]]
        features.append(entry)
    terms = []
    for t in model.terms:
        entry = {"features": list(t.features), "scores": t.scores.tolist()}
        if t.bin_weights is not None:
            entry["bin_weights"] = t.bin_weights.tolist()
        terms.append(entry)
    metadata = dict(model.metadata)
    metadata.setdefault("train_timestamp", None)
    metadata["feature_ranges"] = {
        name: (list(rng) if rng is not None else None)
        for name, rng in zip(model.feature_names, model.preprocessor.feature_ranges)
    }
    return {
        "format_version": FORMAT_VERSION,
        "task": model.task.value,
        "link": model.link.value,
        "intercept": float(model.intercept),
        "features": features,
        "terms": terms,
        "metadata": metadata,
    }


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ModelFormatError(msg)


def model_from_dict(doc: dict) -> AdditiveModel:
    _require(isinstance(doc, dict), "model document must be an object")
    version = doc.get("format_version")
    _require(
        version == FORMAT_VERSION,
        f"unsupported format_version {version!r}, expected {FORMAT_VERSION}",
    )
    try:
        task = Task(doc["task"])
        link = LinkFunction(doc["link"])
    except (KeyError, ValueError) as exc:
        raise ModelFormatError(f"bad task/link field: {exc}") from exc
    expected_link = LinkFunction.LOGIT if task is Task.CLASSIFICATION else LinkFunction.IDENTITY
    _require(link is expected_link, f"link {link.value!r} inconsistent with task {task.value!r}")
    _require("intercept" in doc, "missing intercept")
    _require("features" in doc and isinstance(doc["features"], list), "missing features array")
    _require("terms" in doc and isinstance(doc["terms"], list), "missing terms array")

    metadata = doc.get("metadata", {})
    _require(isinstance(metadata, dict), "metadata must be an object")
    ranges_by_name = metadata.get("feature_ranges", {})

    names, bins, weights, ranges = [], [], [], []
    for entry in doc["features"]:
        _require(isinstance(entry, dict) and "name" in entry, "feature entry needs a name")
        name = entry["name"]
        kind = entry.get("kind")
        if kind == ColumnKind.NUMERIC.value:
            _require("cuts" in entry, f"numeric feature {name!r} needs cuts")
            bindef = BinDefinition(ColumnKind.NUMERIC, np.asarray(entry["cuts"], dtype=float))
        elif kind == ColumnKind.CATEGORICAL.value:
            _require("categories" in entry, f"categorical feature {name!r} needs categories")
            bindef = BinDefinition(
                ColumnKind.CATEGORICAL,
                categories={str(k): int(v) for k, v in entry["categories"].items()},
            )
        else:
            raise ModelFormatError(f"unknown column kind {kind!r} for feature {name!r}")
        w = np.asarray(entry.get("bin_weights", []), dtype=float)
        _require(
            len(w) == bindef.n_bins,
            f"feature {name!r}: bin_weights length {len(w)} != n_bins {bindef.n_bins}",
        )
        _require(bool(np.all(np.isfinite(w))), f"non-finite value encountered in bin_weights of {name!r}")
        rng = ranges_by_name.get(name)
        names.append(name)
        bins.append(bindef)
        weights.append(w)
        ranges.append(tuple(float(v) for v in rng) if rng is not None else None)
    pre = Preprocessor(tuple(bins), tuple(weights), tuple(ranges))

    terms = []
    for entry in doc["terms"]:
        _require(
            isinstance(entry, dict) and "features" in entry and "scores" in entry,
            "term entry needs features and scores",
        )
        feats = tuple(int(f) for f in entry["features"])
        scores = np.asarray(entry["scores"], dtype=float)
        _require(
            scores.ndim == len(feats),
            f"term {feats}: score rank {scores.ndim} != feature count {len(feats)}",
        )
        tw = entry.get("bin_weights")
        tw_arr = None
        if tw is not None:
            tw_arr = np.asarray(tw, dtype=float)
            _require(
                tw_arr.shape == scores.shape,
                f"term {feats}: bin_weights shape differs from scores",
            )
        try:
            terms.append(Term(feats, scores, tw_arr))
        except ModelFormatError:
            raise
    intercept = doc["intercept"]
    _require(
        isinstance(intercept, (int, float)) and np.isfinite(intercept),
        "non-finite value encountered in intercept",
    )
    try:
        return AdditiveModel(
            intercept=float(intercept),
            link=link,
            preprocessor=pre,
            terms=tuple(terms),
            feature_names=tuple(names),
            task=task,
            metadata={k: v for k, v in metadata.items() if k != "feature_ranges"},
        )
    except DataError as exc:
        raise ModelFormatError(str(exc)) from exc


def save_model(model: AdditiveModel, path: str | Path) -> None:
    doc = model_to_dict(model)
    with open(path, "w", encoding="utf-8") as fh:
        try:
            json.dump(doc, fh, indent=1, allow_nan=False)
        except ValueError as exc:
            raise ModelFormatError(f"non-finite value encountered: {exc}") from exc
        fh.write("\n")


def load_model(path: str | Path) -> AdditiveModel:
    path = Path(path)
    if not path.exists():
        raise ModelFormatError(f"model file not found: {path}")
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh, parse_constant=_reject_constant)
        except json.JSONDecodeError as exc:
            raise ModelFormatError(f"model file is not valid JSON: {exc}") from exc
    return model_from_dict(doc)


def _reject_constant(name: str):
    raise ModelFormatError(f"non-finite value encountered: {name}")
