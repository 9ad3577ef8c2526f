"""Shapley effects by Monte Carlo, for independent or copula-dependent inputs.

The cost attached to a set ``J`` of inputs is ``c(J) = E[Var(f | x_{-J})]``,
estimated with ``n_outer`` draws of the complement and ``n_inner`` draws of
``x_J`` conditional on it.  This cost yields the same Shapley values as the
value function ``Var(E[f | x_J])`` while admitting an unbiased nested
estimator.  ``c({}) = 0`` and ``c(all) = Var f``, so the increments along
any ordering of the inputs telescope to the variance estimate.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .core import InputSpace, make_rng, sample
from .errors import ConfigError, MethodPreconditionError
from .variance import binned_effect, empirical_cdf

N_PERM = 300
N_OUTER = 100
N_INNER = 3
N_VAR = 10_000
MAX_EXACT_P = 10


@dataclass(frozen=True)
class ShapleyResult:
    values: np.ndarray
    normalized: bool
    variance: float
    se: np.ndarray
    n_perm: int
    n_outer: int
    n_inner: int
    n_var: int
    n_evals: int
    method: str
    perm_sums: np.ndarray
    names: list | None = None
    zero_variance: bool = False
    meta: dict = field(default_factory=dict)

    columns = ("input", "Sh", "Sh_lo", "Sh_hi", "n_evals", "estimator")

    @property
    def ci(self):
        return self.values - 1.96 * self.se, self.values + 1.96 * self.se

    def rows(self):
        lo, hi = self.ci
        names = self.names or [f"X{i + 1}" for i in range(len(self.values))]
        return [{"input": nm, "Sh": float(self.values[i]), "Sh_lo": float(lo[i]),
                 "Sh_hi": float(hi[i]), "n_evals": int(self.n_evals),
                 "estimator": f"shapley-{self.method}"}
                for i, nm in enumerate(names)]


class _CostEstimator:
    def __init__(self, model, space, sampler, n_outer, n_inner):
        self.model, self.space, self.sampler = model, space, sampler
        self.n_outer, self.n_inner = n_outer, n_inner
        self.p = space.p

    def joint(self, n, rng):
        if self.sampler is None:
            return sample(self.space, n, rng)
        return self.sampler(list(range(self.p)), [], np.empty((n, 0)), 1, rng)[:, 0, :]

    def conditional(self, target, given, x_given, rng):
        if self.sampler is None:
            return self.space.conditional_sample(target, given, x_given, self.n_inner, rng)
        return self.sampler(target, given, x_given, self.n_inner, rng)

    def __call__(self, target, rng):
        """Mean and standard error of the inner conditional variances."""
        target = sorted(target)
        given = [j for j in range(self.p) if j not in target]
        No, Ni = self.n_outer, self.n_inner
        outer = self.joint(No, rng)[:, given]
        inner = self.conditional(target, given, outer, rng)
        X = np.empty((No, Ni, self.p))
        X[:, :, given] = outer[:, None, :]
        X[:, :, target] = inner
        y = self.model.evaluate(X.reshape(No * Ni, self.p)).reshape(No, Ni)
        v = y.var(axis=1, ddof=1)
        return v.mean(), v.std(ddof=1) / math.sqrt(No) if No > 1 else np.inf


def shapley_effects(model, space: InputSpace, n_perm=N_PERM, n_outer=N_OUTER, n_inner=N_INNER,
                    seed=0, conditional_sampler=None, n_var=N_VAR, method="auto",
                    normalized=False):
    """Shapley effects of every input.

    ``method`` is ``"permutation"`` (random orderings), ``"exact"`` (every
    subset cost estimated once and combined with the Shapley weights) or
    ``"auto"``, which picks ``exact`` when ``p <= 10`` and the subset count
    does not exceed the permutation budget.

    ``conditional_sampler(target, given, x_given, n_inner, rng)`` must
    return an array of shape ``(len(x_given), n_inner, len(target))`` of
    draws of ``x[target]`` given ``x[given]``; it is required for dependent
    inputs that lack a Gaussian copula.
    """
    p = space.p
    if n_inner < 2:
        raise ConfigError("n_inner must be >= 2 to estimate a conditional variance")
    if n_outer < 1 or n_perm < 1 or n_var < 2:
        raise ConfigError("n_outer, n_perm must be >= 1 and n_var >= 2")
    if not space.independent and space.correlation is None and conditional_sampler is None:
        raise MethodPreconditionError("dependent inputs need a conditional sampler")
    if method == "auto":
        exact = p <= MAX_EXACT_P and (2 ** p - 2) <= n_perm * max(p - 1, 1)
        method = "exact" if exact else "permutation"
    if method not in ("exact", "permutation"):
        raise ConfigError(f"unknown Shapley method {method!r}")

    cost = _CostEstimator(model, space, conditional_sampler, int(n_outer), int(n_inner))
    start = model.eval_count
    yv = model.evaluate(cost.joint(int(n_var), make_rng(seed, 0)))
    var_y = float(yv.var(ddof=1))
    var_se = float(((yv - yv.mean()) ** 2).std(ddof=1) / math.sqrt(len(yv)))
    order_rng = make_rng(seed, 3)

    if method == "permutation":
        deltas = np.zeros((n_perm, p))
        for m in range(n_perm):
            rng = make_rng(seed, 1, m)
            perm = order_rng.permutation(p)
            prev = 0.0
            for j in range(p):
                c = var_y if j == p - 1 else cost(perm[: j + 1], rng)[0]
                deltas[m, perm[j]] = c - prev
                prev = c
        values = deltas.mean(axis=0)
        se = deltas.std(axis=0, ddof=1) / math.sqrt(n_perm) if n_perm > 1 else np.full(p, np.inf)
        perm_sums = deltas.sum(axis=1)
    else:
        table, table_se = {0: 0.0}, {0: 0.0}
        full = (1 << p) - 1
        table[full], table_se[full] = var_y, var_se
        for mask in range(1, full):
            members = [j for j in range(p) if mask >> j & 1]
            table[mask], table_se[mask] = cost(members, make_rng(seed, 2, mask))
        values, se = np.zeros(p), np.zeros(p)
        for i in range(p):
            bit = 1 << i
            for mask in range(full + 1):
                if mask & bit:
                    continue
                s = bin(mask).count("1")
                w = 1.0 / (p * math.comb(p - 1, s))
                values[i] += w * (table[mask | bit] - table[mask])
                se[i] += w * w * (table_se[mask | bit] ** 2 + table_se[mask] ** 2)
        se = np.sqrt(se)
        perm_sums = np.empty(n_perm)
        for m in range(n_perm):
            perm = order_rng.permutation(p)
            mask, prev, total = 0, 0.0, 0.0
            for j in perm:
                mask |= 1 << j
                total += table[mask] - prev
                prev = table[mask]
            perm_sums[m] = total

    zero = not var_y > 0
    if normalized:
        scale = var_y if not zero else 1.0
        values, se, perm_sums = values / scale, se / scale, perm_sums / scale
    if zero:
        values = np.zeros(p)
    return ShapleyResult(values=values, normalized=normalized, variance=var_y, se=se,
                         n_perm=int(n_perm), n_outer=int(n_outer), n_inner=int(n_inner),
                         n_var=int(n_var), n_evals=model.eval_count - start, method=method,
                         perm_sums=perm_sums, names=space.labels, zero_variance=zero)


def exact_shapley(value, p):
    """Shapley values for an arbitrary set function ``value(frozenset)``.

    Direct weighted-sum definition over all subsets; used as an oracle.
    """
    out = np.zeros(p)
    for i in range(p):
        rest = [j for j in range(p) if j != i]
        for s in range(p):
            for u in itertools.combinations(rest, s):
                u = frozenset(u)
                out[i] += (value(u | {i}) - value(u)) / (p * math.comb(p - 1, s))
    return out


def shapley_effect_curve(X, y, input_index, bins=20):
    """First-order conditional-expectation curve ``E[f | x_i] - f0`` from data.

    Bins are equal-count under the empirical distribution of ``x_i``.
    """
    X = np.asarray(X, float)
    x = X[:, input_index]
    return binned_effect(x, y, empirical_cdf(x), bins, input_index)

