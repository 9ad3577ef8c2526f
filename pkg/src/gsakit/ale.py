"""First-order accumulated local effects."""

from __future__ import annotations

import warnings

import numpy as np

from .core import TableModel
from .errors import ConfigError, GivenDataError
from .results import EffectCurve

DEFAULT_BINS = 32


def quantile_edges(x, bins):
    """Empirical-quantile bin edges with coincident edges merged.

    Returns ``(edges, merged)``; ``merged`` is the number of bins lost.
    """
    edges = np.unique(np.quantile(x, np.linspace(0.0, 1.0, bins + 1)))
    if edges.size < 2:
        raise ConfigError("input is constant in the data; no ALE bins can be formed")
    return edges, bins - (edges.size - 1)


def _assign(x, edges):
    # bin k holds (e_k, e_{k+1}]; the minimum goes to the first bin
    return np.clip(np.searchsorted(edges, x, side="left") - 1, 0, edges.size - 2)


def ale_first_order(model, X, input_index, bins=DEFAULT_BINS):
    """Accumulated local effect curve of input ``input_index``.

    Every observation is moved to the lower and upper edge of its bin with
    its other coordinates kept, so only points that share the observed
    complements are evaluated (``2n`` model runs).  Within-bin mean
    differences are accumulated from the lowest edge.  The curve is
    reported at the edges, interpolated linearly between them, and shifted
    so that its mean over the observations is zero; ``weight`` holds the
    matching interpolation masses on the edges.
    """
    if isinstance(model, TableModel):
        raise GivenDataError("ALE needs model evaluations at bin edges; "
                             "a given-data table cannot supply them")
    X = np.asarray(X, float)
    n = X.shape[0]
    if n < 10 * bins:
        raise ConfigError(f"need n >= 10*bins = {10 * bins} observations, got {n}")
    x = X[:, input_index]
    edges, merged = quantile_edges(x, bins)
    k = _assign(x, edges)
    counts = np.bincount(k, minlength=edges.size - 1)
    while np.any(counts == 0):
        merged += 1
        edges = np.delete(edges, np.flatnonzero(counts == 0)[0] + 1)
        k = _assign(x, edges)
        counts = np.bincount(k, minlength=edges.size - 1)
    if merged:
        warnings.warn(f"input {input_index}: {merged} ALE bin(s) merged for ties or emptiness")

    lo, hi = X.copy(), X.copy()
    lo[:, input_index] = edges[k]
    hi[:, input_index] = edges[k + 1]
    y = model.evaluate(np.vstack([lo, hi]))
    diff = y[n:] - y[:n]
    local = np.bincount(k, weights=diff, minlength=edges.size - 1) / counts
    g = np.concatenate([[0.0], np.cumsum(local)])

    t = (x - edges[k]) / (edges[k + 1] - edges[k])
    t = np.clip(t, 0.0, 1.0)
    w = np.bincount(k, weights=1 - t, minlength=edges.size)
    w += np.bincount(k + 1, weights=t, minlength=edges.size)
    w /= n
    g = g - np.dot(w, g)
    return EffectCurve(input_index, edges, g, "ale", weight=w,
                       meta={"bins": edges.size - 1, "merged": merged, "counts": counts,
                             "local_effect": local})


def ale_curves(model, X, bins=DEFAULT_BINS):
    X = np.asarray(X, float)
    return [ale_first_order(model, X, i, bins) for i in range(X.shape[1])]
