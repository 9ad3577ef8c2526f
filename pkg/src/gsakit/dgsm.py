"""Derivative-based global sensitivity measures and Poincare bounds."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .core import InputSpace, Normal, Uniform, sample
from .errors import ConfigError

FD_STEP = 1e-4


@dataclass(frozen=True)
class DgsmResult:
    """``w = E[df/dx_i]``, ``v = E[(df/dx_i)^2]`` and total-index bounds.

    ``total_bound`` is ``None`` when some marginal has no Poincare constant
    implemented; ``one_sided`` counts boundary points per input.
    """

    w: np.ndarray
    v: np.ndarray
    total_bound: np.ndarray | None
    n: int
    fd_step: float
    se_w: np.ndarray
    se_v: np.ndarray
    variance: float
    n_evals: int
    one_sided: np.ndarray
    names: list | None = None
    meta: dict = field(default_factory=dict)

    columns = ("input", "w", "v", "total_bound", "n_evals")

    @property
    def se_bound(self):
        if self.total_bound is None or not self.variance > 0:
            return None
        return self.meta["poincare"] * self.se_v / self.variance

    def rows(self):
        names = self.names or [f"X{i + 1}" for i in range(len(self.v))]
        bound = self.total_bound if self.total_bound is not None else np.full(len(self.v), np.nan)
        return [{"input": nm, "w": float(self.w[i]), "v": float(self.v[i]),
                 "total_bound": float(bound[i]), "n_evals": int(self.n_evals)}
                for i, nm in enumerate(names)]


def poincare_constant(marginal):
    if isinstance(marginal, Uniform):
        return (marginal.b - marginal.a) ** 2 / np.pi ** 2
    if isinstance(marginal, Normal):
        return marginal.sigma ** 2
    return None


def dgsm(model, space: InputSpace, n, fd_step=FD_STEP, seed=0):
    """Monte Carlo DGSMs from central differences at ``n`` random points.

    Input ``i`` is stepped by ``h_i = fd_step * scale_i`` (range for uniform,
    sigma for normal inputs).  Where ``x_i +- h_i`` leaves the support, the
    pair ``(x, x + h)`` or ``(x - h, x)`` is used instead, keeping the
    budget at ``n(2p + 1)`` runs; the response variance for the bound comes
    from the ``n`` base runs.
    """
    space.require_independent("DGSM bounds")
    n = int(n)
    if n < 10:
        raise ConfigError(f"DGSM needs n >= 10 points, got {n}")
    if not fd_step > 0:
        raise ConfigError("fd_step must be positive")
    p = space.p
    X = sample(space, n, seed)
    h = np.array([fd_step * d.scale for d in space.dims])
    lo_sup = np.array([d.support[0] for d in space.dims])
    hi_sup = np.array([d.support[1] for d in space.dims])

    start = model.eval_count
    plus = np.repeat(X[None], p, axis=0)
    minus = plus.copy()
    one_sided = np.zeros(p, dtype=int)
    for i in range(p):
        up = X[:, i] + h[i]
        down = X[:, i] - h[i]
        at_top = up > hi_sup[i]
        at_bottom = down < lo_sup[i]
        one_sided[i] = int(at_top.sum() + at_bottom.sum())
        up = np.where(at_top, X[:, i], up)
        down = np.where(at_top, X[:, i] - h[i], np.where(at_bottom, X[:, i], down))
        plus[i, :, i] = up
        minus[i, :, i] = down
    if one_sided.any():
        warnings.warn(f"one-sided differences used at {int(one_sided.sum())} boundary points")
    y = model.evaluate(np.vstack([X, plus.reshape(-1, p), minus.reshape(-1, p)]))
    y0 = y[:n]
    yp = y[n:n + n * p].reshape(p, n)
    ym = y[n + n * p:].reshape(p, n)
    steps = plus[np.arange(p), :, np.arange(p)] - minus[np.arange(p), :, np.arange(p)]
    grad = (yp - ym) / steps

    w = grad.mean(axis=1)
    d2 = grad ** 2
    v = d2.mean(axis=1)
    se_w = grad.std(axis=1, ddof=1) / np.sqrt(n)
    se_v = d2.std(axis=1, ddof=1) / np.sqrt(n)
    var = float(y0.var(ddof=1))
    consts = [poincare_constant(d) for d in space.dims]
    bound = None
    if all(c is not None for c in consts):
        consts = np.array(consts)
        bound = consts * v / var if var > 0 else np.zeros(p)
    else:
        consts = None
    return DgsmResult(w=w, v=v, total_bound=bound, n=n, fd_step=float(fd_step), se_w=se_w,
                      se_v=se_v, variance=var, n_evals=model.eval_count - start,
                      one_sided=one_sided, names=space.labels,
                      meta={"poincare": consts, "step": h})
