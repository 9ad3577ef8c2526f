"""Variance-based indices: pick-freeze Sobol' estimation, extended FAST and
binned main-effect curves."""

from __future__ import annotations

import warnings

import numpy as np

from .core import InputSpace, make_rng, unit_sample
from .errors import ConfigError
from .results import DesignMatrix, EffectCurve, SobolResult

N_BOOT = 500
CI_LEVEL = 0.95
BOOT_CHUNK = 25


def pick_freeze_design(space: InputSpace, n, seed, scheme="sobol"):
    """Build the ``n(p+2)``-row pick-freeze design.

    Rows come in blocks ``A``, ``B`` and ``AB1 .. ABp`` where ``ABi`` is
    ``A`` with column ``i`` taken from ``B``.  Base points are drawn with
    ``scheme`` from a single 2p-dimensional stream so that ``A`` and ``B``
    are independent.
    """
    space.require_independent("pick-freeze sampling")
    n = int(n)
    if n < 2:
        raise ConfigError("pick-freeze needs n >= 2 base samples")
    p = space.p
    U = unit_sample(n, 2 * p, make_rng(seed), scheme)
    A = space.from_unit(U[:, :p])
    B = space.from_unit(U[:, p:])
    blocks = [A, B]
    labels = ["A", "B"]
    for i in range(p):
        AB = A.copy()
        AB[:, i] = B[:, i]
        blocks.append(AB)
        labels.append(f"AB{i + 1}")
    X = np.vstack(blocks)
    block = np.repeat(np.array(labels), n)
    return DesignMatrix(X, block, "pick_freeze",
                        {"n": n, "p": p, "seed": int(seed), "scheme": scheme,
                         "names": space.labels})


def _split(design, y):
    y = np.asarray(y, float).reshape(-1)
    if y.shape[0] != design.n_rows:
        raise ConfigError(f"response length {y.shape[0]} does not match {design.n_rows} design rows")
    n, p = design.params["n"], design.params["p"]
    Y = y.reshape(p + 2, n)
    return Y[0], Y[1], Y[2:]


def _pf_indices(yA, yB, yAB):
    """Raw first-order (Saltelli 2010) and total (Jansen) indices.

    Works on the last axis so that a leading bootstrap axis broadcasts.
    Responses are centred on the pooled A/B mean first; this leaves the
    estimators unchanged in expectation and makes them exactly invariant
    to affine rescaling of y.
    """
    m = 0.5 * (yA.mean(axis=-1) + yB.mean(axis=-1))
    yA = yA - m[..., None]
    yB = yB - m[..., None]
    yAB = yAB - m[..., None, None]
    var = 0.5 * ((yA ** 2).mean(axis=-1) + (yB ** 2).mean(axis=-1))
    vi = (yB[..., None, :] * (yAB - yA[..., None, :])).mean(axis=-1)
    vt = 0.5 * ((yA[..., None, :] - yAB) ** 2).mean(axis=-1)
    return vi, vt, var


def sobol_estimate(design: DesignMatrix, y, n_boot=N_BOOT, clamp=(0.0, 1.0)):
    """First-order and total Sobol' indices from a pick-freeze design.

    Bootstrap intervals resample base-sample indices jointly across all
    blocks; the resampling stream is derived from the design seed.
    """
    yA, yB, yAB = _split(design, y)
    n, p = design.params["n"], design.params["p"]
    vi, vt, var = _pf_indices(yA, yB, yAB)
    n_evals = n * (p + 2)
    names = design.params.get("names")
    if not var > 0.0:
        z = np.zeros(p)
        return SobolResult(z, z.copy(), 0.0, n, n_evals, "saltelli2010/jansen",
                           raw_first_order=z.copy(), raw_total=z.copy(),
                           zero_variance=True, names=names)
    S_raw, ST_raw = vi / var, vt / var
    ci = se = None
    boot = None
    if n_boot:
        rng = make_rng(design.params["seed"], 1)
        boot_s, boot_t = [], []
        left = n_boot
        while left:
            k = min(BOOT_CHUNK, left)
            idx = rng.integers(0, n, size=(k, n))
            bvi, bvt, bvar = _pf_indices(yA[idx], yB[idx], np.moveaxis(yAB[:, idx], 0, 1))
            with np.errstate(invalid="ignore", divide="ignore"):
                boot_s.append(bvi / bvar[:, None])
                boot_t.append(bvt / bvar[:, None])
            left -= k
        bs, bt = np.vstack(boot_s), np.vstack(boot_t)
        alpha = 100 * (1 - CI_LEVEL) / 2
        lo, hi = clamp
        ci = {
            "S": tuple(np.clip(np.nanpercentile(bs, [alpha, 100 - alpha], axis=0), lo, hi)),
            "ST": tuple(np.clip(np.nanpercentile(bt, [alpha, 100 - alpha], axis=0), lo, hi)),
        }
        se = {"S": np.nanstd(bs, axis=0, ddof=1), "ST": np.nanstd(bt, axis=0, ddof=1)}
        boot = {"S": bs, "ST": bt}
    return SobolResult(
        first_order=np.clip(S_raw, *clamp), total=np.clip(ST_raw, *clamp),
        total_variance=float(var), n_base=n, n_evals=n_evals,
        estimator="saltelli2010/jansen", raw_first_order=S_raw, raw_total=ST_raw,
        ci=ci, se=se, names=names, meta={"n_boot": n_boot, "bootstrap": boot},
    )


def sobol_indices(model, space, n, seed, scheme="sobol", n_boot=N_BOOT):
    """Convenience wrapper: design, evaluate, estimate."""
    design = pick_freeze_design(space, n, seed, scheme)
    return sobol_estimate(design, model.evaluate(design.X), n_boot=n_boot)


# ---------------------------------------------------------------------------
# extended FAST
# ---------------------------------------------------------------------------

def fast_frequencies(n, M, p):
    """Driver frequency and complementary frequencies for eFAST."""
    w_max = (n - 1) // (2 * M)
    m = w_max // (2 * M)
    k = p - 1
    if k == 0:
        others = np.zeros(0, dtype=int)
    elif m >= k:
        others = np.floor(np.linspace(1, m, k)).astype(int)
    else:
        others = np.arange(k) % m + 1
    return w_max, others


def fast_indices(model, space: InputSpace, n_per_input, M=4, seed=0):
    """Extended FAST first-order and total indices.

    One search curve of ``n_per_input`` points per input.  The input under
    study runs at the driver frequency, the others at low complementary
    frequencies; every curve gets random phase shifts.  First-order power
    is read at the first ``M`` harmonics of the driver, total power as the
    complement of everything below half the driver frequency.
    """
    space.require_independent("FAST")
    N, M, p = int(n_per_input), int(M), space.p
    bound = 4 * M * M + 2
    if M < 1:
        raise ConfigError("interference order M must be >= 1")
    if N < bound:
        raise ConfigError(f"n_per_input={N} is below the Nyquist bound 4*M^2 + 2 = {bound}")
    w_max, others = fast_frequencies(N, M, p)
    rng = make_rng(seed)
    s = 2 * np.pi / N * np.arange(N)
    harmonics = np.arange(1, M + 1) * w_max
    S_raw, ST_raw, V = np.zeros(p), np.zeros(p), np.zeros(p)
    for i in range(p):
        omega = np.empty(p, dtype=int)
        omega[i] = w_max
        omega[np.arange(p) != i] = others
        phi = 2 * np.pi * rng.random(p)
        U = 0.5 + np.arcsin(np.sin(np.outer(s, omega) + phi)) / np.pi
        y = model.evaluate(space.from_unit(U))
        spec = np.abs(np.fft.fft(y)[1:(N + 1) // 2] / N) ** 2
        var = 2 * spec.sum()
        if np.ptp(y) == 0:
            continue
        V[i] = var
        S_raw[i] = 2 * spec[harmonics - 1].sum() / var
        ST_raw[i] = 1 - 2 * spec[: w_max // 2].sum() / var
    zero = not np.any(V > 0)
    return SobolResult(
        first_order=np.clip(S_raw, 0, 1), total=np.clip(ST_raw, 0, 1),
        total_variance=float(V.mean()), n_base=N, n_evals=N * p, estimator="efast",
        raw_first_order=S_raw, raw_total=ST_raw, zero_variance=zero, names=space.labels,
        meta={"M": M, "w_max": int(w_max), "complementary": others.tolist()},
    )


# ---------------------------------------------------------------------------
# main-effect curves
# ---------------------------------------------------------------------------

def equal_probability_bins(u, bins):
    """Assign probabilities ``u`` in [0, 1] to ``bins`` equal-mass bins.

    Empty bins trigger a reduction of the bin count; returns
    ``(index, bins_used, reduced)``.
    """
    u = np.asarray(u, float)
    reduced = False
    while bins >= 1:
        idx = np.minimum((u * bins).astype(int), bins - 1)
        if np.all(np.bincount(idx, minlength=bins) > 0):
            return idx, bins, reduced
        bins -= 1
        reduced = True
    raise ConfigError("no observations to bin")


def binned_effect(x, y, u, bins, input_index, kind="sobol_main"):
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    if y.shape[0] < 10 * bins:
        raise ConfigError(f"need n >= 10*bins = {10 * bins} observations, got {y.shape[0]}")
    idx, used, reduced = equal_probability_bins(u, bins)
    if reduced:
        warnings.warn(f"input {input_index}: empty bins, reduced from {bins} to {used}")
    counts = np.bincount(idx, minlength=used)
    ybar = np.bincount(idx, weights=y, minlength=used) / counts
    xbar = np.bincount(idx, weights=x, minlength=used) / counts
    w = counts / counts.sum()
    value = ybar - y.mean()
    return EffectCurve(input_index, xbar, value, kind, weight=w,
                       meta={"bins": used, "reduced": reduced, "counts": counts})


def main_effect_curves(X, y, space: InputSpace, bins=20):
    """Binned estimates of ``E[f | x_i] - f0`` for every input.

    Bins have equal probability under each input's marginal; the curve is
    reported at the within-bin means of ``x_i``.
    """
    space.require_independent("Sobol' main-effect curves")
    X = np.asarray(X, float)
    y = np.asarray(y, float).reshape(-1)
    if X.shape[0] != y.shape[0]:
        raise ConfigError("X and y have different lengths")
    return [binned_effect(X[:, i], y, space.dims[i].cdf(X[:, i]), bins, i)
            for i in range(space.p)]


def empirical_cdf(x):
    """Fraction of observations strictly below each value (ties share a bin)."""
    srt = np.sort(x)
    return np.searchsorted(srt, x, side="left") / len(x)

