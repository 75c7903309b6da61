"""Global and local explanations plus static plot rendering.

Global: per-term shape data and an importance ranking (training-weighted mean
absolute score).  Local: the exact per-term additive contributions to one
prediction, sorted by magnitude; intercept + contributions reproduces the
score with zero tolerance because both use the same lookups in the same order.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import ColumnKind, DataError
from .model import AdditiveModel, Term, inverse_link
from .svg import Canvas, diverging_color
from .train import term_weights


@dataclass(frozen=True)
class TermSummary:
    term_id: int
    feature_names: tuple[str, ...]
    importance: float
    scores: np.ndarray
    bin_weights: np.ndarray


@dataclass(frozen=True)
class GlobalExplanation:
    """Per-term shape and importance, sorted by importance descending."""

    terms: tuple[TermSummary, ...]


@dataclass(frozen=True)
class Contribution:
    term_id: int
    feature_names: tuple[str, ...]
    values: tuple
    contribution: float


@dataclass(frozen=True)
class LocalExplanation:
    """Exact additive breakdown of one prediction."""

    intercept: float
    contributions: tuple[Contribution, ...]  # sorted by |contribution| desc
    score: float
    mean: float


def term_importance(model: AdditiveModel, term: Term) -> float:
    """Training-weighted mean absolute score of a term."""
    w = term_weights(model, term)
    total = float(w.sum())
    if total <= 0:
        return 0.0
    return float((w * np.abs(term.scores)).sum() / total)


def global_explanation(model: AdditiveModel) -> GlobalExplanation:
    entries = []
    for tid, term in enumerate(model.terms):
        entries.append(
            TermSummary(
                term_id=tid,
                feature_names=tuple(model.feature_names[f] for f in term.features),
                importance=term_importance(model, term),
                scores=term.scores,
                bin_weights=term_weights(model, term),
            )
        )
    entries.sort(key=lambda e: (-e.importance, e.term_id))
    return GlobalExplanation(terms=tuple(entries))


def local_explanation(model: AdditiveModel, row: list) -> LocalExplanation:
    bins = model.preprocessor.bin_row(row)
    per_term: list[float] = []
    score = model.score_from_bins(bins, contributions_out=per_term)
    contributions = [
        Contribution(
            term_id=tid,
            feature_names=tuple(model.feature_names[f] for f in term.features),
            values=tuple(row[f] for f in term.features),
            contribution=c,
        )
        for tid, (term, c) in enumerate(zip(model.terms, per_term))
    ]
    contributions.sort(key=lambda c: (-abs(c.contribution), c.term_id))
    return LocalExplanation(
        intercept=model.intercept,
        contributions=tuple(contributions),
        score=score,
        mean=float(inverse_link(model.link, score)),
    )


def global_to_csv(explanation: GlobalExplanation, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["term", "features", "importance"])
        for e in explanation.terms:
            writer.writerow([e.term_id, " x ".join(e.feature_names), repr(e.importance)])


# ---------------------------------------------------------------------------
# Plot rendering (static SVG; byte-deterministic for fixed input)
# ---------------------------------------------------------------------------

_W, _H = 640, 420
_MARGIN_L, _MARGIN_R, _MARGIN_T, _MARGIN_B = 70, 20, 44, 30
_STRIP_H = 48  # weight histogram strip under 1-D plots


def _value_span(values: np.ndarray) -> tuple[float, float]:
    lo = min(float(values.min()), 0.0)
    hi = max(float(values.max()), 0.0)
    if hi - lo < 1e-12:
        lo, hi = lo - 1.0, hi + 1.0
    pad = 0.08 * (hi - lo)
    return lo - pad, hi + pad


class _YScale:
    def __init__(self, lo: float, hi: float, top: float, bottom: float):
        self.lo, self.hi, self.top, self.bottom = lo, hi, top, bottom

    def __call__(self, v: float) -> float:
        frac = (v - self.lo) / (self.hi - self.lo)
        return self.bottom - frac * (self.bottom - self.top)


def _numeric_edges(model: AdditiveModel, feature: int) -> list[float]:
    """Plot edges for the data bins: training range extended over the cuts."""
    bindef = model.preprocessor.bins[feature]
    cuts = list(map(float, bindef.cuts))
    rng = model.preprocessor.feature_ranges[feature]
    if not cuts:
        if rng is None:
            return [0.0, 1.0]
        lo, hi = rng
        return [lo - 0.5, hi + 0.5] if lo == hi else [lo, hi]
    first_w = (cuts[1] - cuts[0]) if len(cuts) > 1 else 1.0
    last_w = (cuts[-1] - cuts[-2]) if len(cuts) > 1 else 1.0
    lo = rng[0] if rng is not None else cuts[0] - first_w / 2
    hi = rng[1] if rng is not None else cuts[-1] + last_w / 2
    lo = min(lo, cuts[0] - first_w / 2)
    hi = max(hi, cuts[-1] + last_w / 2)
    return [lo] + cuts + [hi]


def _render_numeric_term(model: AdditiveModel, term: Term, name: str) -> str:
    feature = term.features[0]
    scores = term.scores
    weights = term_weights(model, term)
    edges = _numeric_edges(model, feature)
    canvas = Canvas(_W, _H)
    canvas.text(_MARGIN_L, 24, f"{name} (score, log-odds for classification)", size=14)

    plot_l = _MARGIN_L + 44  # leave room for the missing-bin block
    plot_r = _W - _MARGIN_R
    plot_t = _MARGIN_T
    plot_b = _H - _MARGIN_B - _STRIP_H
    ylo, yhi = _value_span(scores)
    yscale = _YScale(ylo, yhi, plot_t, plot_b)
    x_lo, x_hi = edges[0], edges[-1]
    span = (x_hi - x_lo) or 1.0

    def xpix(v: float) -> float:
        return plot_l + (v - x_lo) / span * (plot_r - plot_l)

    canvas.line(plot_l, yscale(0.0), plot_r, yscale(0.0), "#bbbbbb")
    # Step function over data bins 1..n-1; hover rects carry exact values.
    points = []
    for b in range(1, len(scores)):
        x0, x1 = xpix(edges[b - 1]), xpix(edges[b])
        y = yscale(float(scores[b]))
        points.extend([(x0, y), (x1, y)])
        canvas.rect(
            x0,
            plot_t,
            x1 - x0,
            plot_b - plot_t,
            fill="#000000",
            extra='fill-opacity="0.0"',
            title=(
                f"bin {b} [{edges[b - 1]!r}, {edges[b]!r}): "
                f"score={float(scores[b])!r} weight={float(weights[b])!r}"
            ),
        )
    canvas.path(points, stroke="#1f6fb4")
    # Missing bin as a detached block on the left.
    my = yscale(float(scores[0]))
    canvas.rect(
        _MARGIN_L,
        my - 3,
        30,
        6,
        fill="#b44b1f",
        title=f"missing bin: score={float(scores[0])!r} weight={float(weights[0])!r}",
    )
    canvas.text(_MARGIN_L, plot_b + 14, "missing", size=10)
    # Weight strip.
    strip_t = plot_b + 20
    wmax = float(weights[1:].max()) if len(weights) > 1 else 0.0
    if wmax > 0:
        for b in range(1, len(scores)):
            x0, x1 = xpix(edges[b - 1]), xpix(edges[b])
            h = (_STRIP_H - 14) * float(weights[b]) / wmax
            canvas.rect(x0, strip_t + (_STRIP_H - 14) - h, x1 - x0, h, fill="#999999")
    canvas.text(plot_l, _H - 8, repr(float(x_lo)), size=10)
    canvas.text(plot_r, _H - 8, repr(float(x_hi)), size=10, anchor="end")
    canvas.text(_MARGIN_L - 6, plot_t + 4, repr(float(yhi)), size=10, anchor="end")
    canvas.text(_MARGIN_L - 6, plot_b + 4, repr(float(ylo)), size=10, anchor="end")
    return canvas.tostring()


def _render_categorical_term(model: AdditiveModel, term: Term, name: str) -> str:
    bindef = model.preprocessor.bins[term.features[0]]
    scores = term.scores
    weights = term_weights(model, term)
    labels = ["missing"] + sorted(bindef.categories, key=bindef.categories.get)
    canvas = Canvas(_W, _H)
    canvas.text(_MARGIN_L, 24, f"{name} (per-category score)", size=14)
    plot_l, plot_r = _MARGIN_L, _W - _MARGIN_R
    plot_t, plot_b = _MARGIN_T, _H - _MARGIN_B - _STRIP_H
    ylo, yhi = _value_span(scores)
    yscale = _YScale(ylo, yhi, plot_t, plot_b)
    zero = yscale(0.0)
    canvas.line(plot_l, zero, plot_r, zero, "#bbbbbb")
    n = len(scores)
    slot = (plot_r - plot_l) / n
    for b in range(n):
        x = plot_l + b * slot
        y = yscale(float(scores[b]))
        top, h = (y, zero - y) if y <= zero else (zero, y - zero)
        canvas.rect(
            x + slot * 0.12,
            top,
            slot * 0.76,
            max(h, 0.5),
            fill="#1f6fb4" if scores[b] >= 0 else "#b44b1f",
            title=f"{labels[b]}: score={float(scores[b])!r} weight={float(weights[b])!r}",
        )
        canvas.text(x + slot / 2, plot_b + 14, labels[b][:10], size=9, anchor="middle")
    return canvas.tostring()


def _render_pair_term(model: AdditiveModel, term: Term, names: tuple[str, ...]) -> str:
    scores = term.scores
    weights = term_weights(model, term)
    canvas = Canvas(_W, _H)
    canvas.text(_MARGIN_L, 24, f"{names[0]} x {names[1]} (joint score)", size=14)
    plot_l, plot_r = _MARGIN_L, _W - _MARGIN_R
    plot_t, plot_b = _MARGIN_T, _H - _MARGIN_B
    nr, nc = scores.shape
    scale = float(np.abs(scores).max())
    cw, ch = (plot_r - plot_l) / nc, (plot_b - plot_t) / nr
    for r in range(nr):
        for c in range(nc):
            canvas.rect(
                plot_l + c * cw,
                plot_t + r * ch,
                cw,
                ch,
                fill=diverging_color(float(scores[r, c]), scale),
                title=(
                    f"bins ({r},{c}): score={float(scores[r, c])!r} "
                    f"weight={float(weights[r, c])!r}"
                ),
            )
    canvas.text(plot_l, _H - 8, f"{names[0]} bins (rows), {names[1]} bins (cols)", size=10)
    return canvas.tostring()


def render_term_plot(model: AdditiveModel, term_id: int) -> str:
    """Self-contained SVG for one term: step plot (numeric), bars
    (categorical), or heatmap (pair)."""
    if term_id < 0 or term_id >= len(model.terms):
        raise DataError(f"unknown term id {term_id}")
    term = model.terms[term_id]
    names = tuple(model.feature_names[f] for f in term.features)
    if len(term.features) == 2:
        return _render_pair_term(model, term, names)
    kind = model.preprocessor.bins[term.features[0]].kind
    if kind is ColumnKind.NUMERIC:
        return _render_numeric_term(model, term, names[0])
    return _render_categorical_term(model, term, names[0])


def render_local_plot(explanation: LocalExplanation) -> str:
    """Signed horizontal bars, largest magnitude first, plus intercept/score."""
    contribs = explanation.contributions
    row_h = 26
    height = _MARGIN_T + row_h * max(len(contribs), 1) + 70
    canvas = Canvas(_W, height)
    canvas.text(
        _MARGIN_L,
        24,
        f"prediction: score={explanation.score!r} mean={explanation.mean!r}",
        size=13,
    )
    scale = max((abs(c.contribution) for c in contribs), default=0.0)
    mid = _W / 2
    half = (_W - _MARGIN_L - _MARGIN_R) / 2 - 10
    canvas.line(mid, _MARGIN_T, mid, height - 46, "#bbbbbb")
    for i, c in enumerate(contribs):
        y = _MARGIN_T + i * row_h
        frac = 0.0 if scale == 0 else c.contribution / scale
        w = abs(frac) * half
        x = mid if frac >= 0 else mid - w
        label = " x ".join(
            f"{n}={'missing' if v is None else v}" for n, v in zip(c.feature_names, c.values)
        )
        canvas.rect(
            x,
            y + 4,
            max(w, 0.5),
            row_h - 10,
            fill="#1f6fb4" if frac >= 0 else "#b44b1f",
            title=f"term {c.term_id} {label}: contribution={c.contribution!r}",
        )
        anchor, tx = ("end", mid - w - 6) if frac < 0 else ("start", mid + w + 6)
        canvas.text(tx, y + row_h - 9, label[:46], size=10, anchor=anchor)
    canvas.text(
        _MARGIN_L,
        height - 24,
        f"intercept={explanation.intercept!r}",
        size=11,
    )
    return canvas.tostring()
