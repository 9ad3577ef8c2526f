"""Result containers shared across methods, with tabular export helpers."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np


def _names(p, names=None):
    if names is not None:
        return list(names)
    return [f"X{i + 1}" for i in range(p)]


@dataclass(frozen=True)
class DesignMatrix:
    """A run plan.

    ``block`` labels the provenance of every row (e.g. ``"A"``, ``"B"``,
    ``"AB3"`` for pick-freeze designs, ``"traj7"`` for Morris).
    """

    X: np.ndarray
    block: np.ndarray
    kind: str
    params: dict = field(default_factory=dict)

    @property
    def n_rows(self):
        return self.X.shape[0]

    def rows_of(self, label):
        return np.flatnonzero(self.block == label)


@dataclass(frozen=True)
class SobolResult:
    """First-order and total Sobol' indices.

    ``first_order`` and ``total`` are the headline (clamped) values; the
    unclamped estimates are kept in ``raw_first_order`` / ``raw_total``.
    ``ci`` maps ``"S"``/``"ST"`` to ``(lo, hi)`` arrays when bootstrapped,
    ``se`` holds the matching bootstrap standard errors.
    """

    first_order: np.ndarray
    total: np.ndarray
    total_variance: float
    n_base: int
    n_evals: int
    estimator: str
    raw_first_order: np.ndarray | None = None
    raw_total: np.ndarray | None = None
    ci: dict | None = None
    se: dict | None = None
    zero_variance: bool = False
    names: list | None = None
    meta: dict = field(default_factory=dict)

    columns = ("input", "S", "S_lo", "S_hi", "ST", "ST_lo", "ST_hi",
               "n_evals", "estimator")

    def rows(self):
        p = len(self.first_order)
        nan = np.full(p, np.nan)
        s_lo, s_hi = self.ci["S"] if self.ci else (nan, nan)
        t_lo, t_hi = self.ci["ST"] if self.ci else (nan, nan)
        out = []
        for i, name in enumerate(_names(p, self.names)):
            out.append({
                "input": name,
                "S": float(self.first_order[i]),
                "S_lo": float(s_lo[i]),
                "S_hi": float(s_hi[i]),
                "ST": float(self.total[i]),
                "ST_lo": float(t_lo[i]),
                "ST_hi": float(t_hi[i]),
                "n_evals": int(self.n_evals),
                "estimator": self.estimator,
            })
        return out


@dataclass(frozen=True)
class EffectCurve:
    """A tabulated one-dimensional effect.

    ``weight`` is the probability mass attached to each grid point; for
    ``sobol_main`` and ``ale`` curves ``sum(weight * value) == 0``.
    Density slices store the slice's x-range and L1 area in ``meta``.
    """

    input_index: int
    grid: np.ndarray
    value: np.ndarray
    kind: str
    weight: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    columns = ("input", "x", "value", "kind")

    def weighted_mean(self):
        return float(np.sum(self.weight * self.value))

    def __call__(self, x):
        """Linear interpolation of the curve."""
        return np.interp(x, self.grid, self.value)

    def rows(self, name=None):
        label = name or f"X{self.input_index + 1}"
        if self.kind == "density_slice":
            s = self.meta.get("slice")
            label = f"{label}|all" if s is None else f"{label}|s{s}"
        return [{"input": label, "x": float(g), "value": float(v), "kind": self.kind}
                for g, v in zip(self.grid, self.value)]


def curves_rows(curves, names=None) -> list[dict[str, Any]]:
    out = []
    for c in curves:
        label = names[c.input_index] if names else None
        out.extend(c.rows(label))
    return out
