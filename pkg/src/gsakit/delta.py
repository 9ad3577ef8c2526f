"""Moment-independent delta indices from given data.

Densities are estimated in quantile space: responses are replaced by
their normal scores ``Phi^-1((rank - 1/2) / n)``.  The L1 distance between
two densities is unchanged by a strictly monotone change of variable, so
this loses nothing and makes the estimate exactly invariant to monotone
transformations of the response.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import special, stats
from scipy.signal import fftconvolve

from .errors import ConfigError
from .results import EffectCurve

GRID_SIZE = 512
MIN_PER_CLASS = 50
KERNEL_REACH = 4.0


@dataclass(frozen=True)
class DeltaResult:
    values: np.ndarray
    raw: np.ndarray
    partitions: int
    n: int
    bandwidth: list
    zero_variance: bool = False
    names: list | None = None
    meta: dict = field(default_factory=dict)

    columns = ("input", "delta", "partitions", "n")

    def rows(self):
        names = self.names or [f"X{i + 1}" for i in range(len(self.values))]
        return [{"input": nm, "delta": float(self.values[i]), "partitions": int(self.partitions),
                 "n": int(self.n)} for i, nm in enumerate(names)]


def default_partitions(n):
    return max(8, int(np.floor(np.sqrt(n) / 5)))


def silverman_bandwidth(z):
    z = np.asarray(z, float)
    n = z.size
    sd = z.std(ddof=1) if n > 1 else 0.0
    iqr = np.subtract(*np.percentile(z, [75, 25]))
    spread = min(sd, iqr / 1.34) if iqr > 0 else sd
    return 0.9 * spread * n ** -0.2


def normal_scores(y):
    y = np.asarray(y, float)
    u = (stats.rankdata(y) - 0.5) / y.size
    return special.ndtri(u)


def _equal_count_classes(x, partitions):
    order = np.argsort(x, kind="stable")
    cls = np.empty(x.size, dtype=np.int64)
    cls[order] = np.arange(x.size) * partitions // x.size
    return cls


def _linear_binning(z, cls, n_cls, lo, dz, G):
    pos = (z - lo) / dz
    left = np.clip(np.floor(pos).astype(np.int64), 0, G - 2)
    frac = np.clip(pos - left, 0.0, 1.0)
    counts = np.bincount(cls * G + left, weights=1 - frac, minlength=n_cls * G)
    counts += np.bincount(cls * G + left + 1, weights=frac, minlength=n_cls * G)
    return counts.reshape(n_cls, G)


def _smooth(counts, h, dz):
    """Gaussian-kernel densities from binned counts, one row per sample group."""
    G = counts.shape[1]
    offsets = np.arange(-(G - 1), G) * dz
    kern = np.exp(-0.5 * (offsets[None, :] / h[:, None]) ** 2)
    dens = fftconvolve(counts, kern, mode="same", axes=1)
    dens = np.clip(dens, 0.0, None)
    mass = np.trapezoid(dens, dx=dz, axis=1)
    return dens / mass[:, None]


def delta_given_data(X, y, partitions=None, seed=None, grid_size=GRID_SIZE):
    """Delta index of every input from an (X, y) sample.

    Each input axis is cut into ``partitions`` equal-count classes; the
    response density within each class is compared with the pooled one
    by trapezoid quadrature of ``|f(z) - f_c(z)|`` on a shared grid, and
    the halved L1 distances are averaged with the class masses as weights.
    ``seed`` is recorded only; the estimator itself is deterministic.
    """
    X = np.asarray(X, float)
    y = np.asarray(y, float).reshape(-1)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ConfigError("X must be n x p with n == len(y)")
    n, p = X.shape
    P = default_partitions(n) if partitions is None else int(partitions)
    if P < 2:
        raise ConfigError("delta estimation needs at least 2 classes per input")
    if n < MIN_PER_CLASS * P:
        feasible = n // MIN_PER_CLASS
        if feasible < 2:
            raise ConfigError(f"n={n} is too small: fewer than 2 classes of {MIN_PER_CLASS} points")
        raise ConfigError(f"n={n} < {MIN_PER_CLASS}*partitions={MIN_PER_CLASS * P}; "
                          f"use at most {feasible} partitions")
    meta = {"seed": seed, "grid_size": grid_size}
    if np.ptp(y) == 0:
        z = np.zeros(p)
        return DeltaResult(z, z.copy(), P, n, [np.zeros(P)] * p, zero_variance=True, meta=meta)

    z = normal_scores(y)
    classes = [_equal_count_classes(X[:, i], P) for i in range(p)]
    h_all = silverman_bandwidth(z)
    h_cls = []
    for cls in classes:
        h_cls.append(np.array([silverman_bandwidth(z[cls == c]) for c in range(P)]))
    reach = KERNEL_REACH * max(h_all, max(h.max() for h in h_cls))
    lo, hi = z.min() - reach, z.max() + reach
    G = int(grid_size)
    dz = (hi - lo) / (G - 1)

    raw = np.zeros(p)
    used = []
    for i, cls in enumerate(classes):
        h = np.maximum(h_cls[i], dz)
        dens = _smooth(_linear_binning(z, cls, P, lo, dz, G), h, dz)
        w = np.bincount(cls, minlength=P) / n
        # the pooled density is the class mixture, so smoothing bias shared
        # by all classes cancels in the difference
        mix = w @ dens
        l1 = np.trapezoid(np.abs(dens - mix[None, :]), dx=dz, axis=1)
        raw[i] = 0.5 * np.dot(w, l1)
        used.append(h)
    meta["grid"] = (lo, hi)
    return DeltaResult(np.clip(raw, 0.0, 1.0), raw, P, n, used, meta=meta)


def _kde(samples, grid, h, chunk=4096):
    out = np.zeros(grid.size)
    for start in range(0, samples.size, chunk):
        s = samples[start:start + chunk]
        out += np.exp(-0.5 * ((grid[:, None] - s[None, :]) / h) ** 2).sum(axis=1)
    return out / (samples.size * h * np.sqrt(2 * np.pi))


def conditional_density_curves(X, y, input_index, n_slices=8, grid=None, grid_size=GRID_SIZE):
    """Response density overall and within each slice of one input.

    Returns ``[pooled, slice_0, ..., slice_{n_slices-1}]`` as
    ``density_slice`` curves on a common response grid (in response units).
    Slices are equal-count classes of ``x_i``; each slice curve carries its
    x-range, mass and the area ``int |pooled - slice| dy`` in ``meta``.
    """
    X = np.asarray(X, float)
    y = np.asarray(y, float).reshape(-1)
    n = y.size
    S = int(n_slices)
    if S < 2:
        raise ConfigError("need at least 2 slices")
    if n < MIN_PER_CLASS * S:
        raise ConfigError(f"n={n} < {MIN_PER_CLASS}*n_slices={MIN_PER_CLASS * S}")
    x = X[:, input_index]
    cls = _equal_count_classes(x, S)

    def bw(v):
        h = silverman_bandwidth(v)
        return h if h > 0 else 1.0

    h_all = bw(y)
    h_s = [bw(y[cls == s]) for s in range(S)]
    if grid is None:
        reach = KERNEL_REACH * max(h_all, max(h_s))
        grid = np.linspace(y.min() - reach, y.max() + reach, grid_size)
    grid = np.asarray(grid, float)
    if grid.ndim != 1 or grid.size < 2 or np.any(np.diff(grid) <= 0):
        raise ConfigError("grid must be strictly increasing")

    pooled = _kde(y, grid, h_all)
    curves = [EffectCurve(input_index, grid, pooled, "density_slice",
                          meta={"slice": None, "bandwidth": h_all})]
    for s in range(S):
        member = cls == s
        dens = _kde(y[member], grid, h_s[s])
        area = float(np.trapezoid(np.abs(pooled - dens), grid))
        curves.append(EffectCurve(input_index, grid, dens, "density_slice",
                                  meta={"slice": s, "x_range": (float(x[member].min()),
                                                                float(x[member].max())),
                                        "mass": member.mean(), "bandwidth": h_s[s],
                                        "area": area}))
    return curves
