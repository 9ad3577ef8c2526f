"""Definitive screening designs: conference matrices, construction and the
two-stage odd/even model fit."""

from __future__ import annotations

import functools
import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .core import make_rng
from .errors import ConfigError, ConstructionError, FitError

MAX_ORDER = 20
ALPHA_MAIN = 0.01
ALPHA_EVEN = 0.01
LENTH_REPS = 20_000


# ---------------------------------------------------------------------------
# conference matrices
# ---------------------------------------------------------------------------

def _prime_power(q):
    for base in range(2, q + 1):
        if q % base == 0:
            k, r = 0, q
            while r % base == 0:
                r //= base
                k += 1
            return (base, k) if r == 1 else None
    return None


def _field(q):
    """Elements of GF(q) and a subtraction table, for q = prime or 9."""
    base, k = _prime_power(q)
    if k == 1:
        elems = list(range(q))
        sub = lambda a, b: (a - b) % q
        mul = lambda a, b: (a * b) % q
    elif q == 9:
        # GF(3)[i] with i^2 = -1
        elems = [(a, b) for a in range(3) for b in range(3)]
        sub = lambda u, v: ((u[0] - v[0]) % 3, (u[1] - v[1]) % 3)
        mul = lambda u, v: ((u[0] * v[0] - u[1] * v[1]) % 3, (u[0] * v[1] + u[1] * v[0]) % 3)
    else:
        raise ConstructionError(f"GF({q}) is not implemented")
    return elems, sub, mul


def _paley(q):
    elems, sub, mul = _field(q)
    zero = elems[0]
    squares = {mul(e, e) for e in elems if e != zero}
    chi = lambda e: 0 if e == zero else (1 if e in squares else -1)
    Q = np.array([[chi(sub(a, b)) for b in elems] for a in elems], dtype=np.int64)
    C = np.zeros((q + 1, q + 1), dtype=np.int64)
    C[0, 1:] = 1
    C[1:, 0] = 1 if q % 4 == 1 else -1
    C[1:, 1:] = Q
    return C


def _double_skew(S):
    eye = np.eye(S.shape[0], dtype=np.int64)
    return np.block([[S, S + eye], [S - eye, -S]])


def _supported():
    out = []
    for order in range(2, MAX_ORDER + 1, 2):
        try:
            conference_matrix(order)
            out.append(order)
        except ConstructionError:
            pass
    return out


@functools.lru_cache(maxsize=None)
def _conference(order):
    if order == 2:
        return np.array([[0, 1], [1, 0]], dtype=np.int64)
    q = order - 1
    pp = _prime_power(q)
    if pp is not None and (pp[1] == 1 or q == 9):
        return _paley(q)
    if order % 2 == 0 and (order // 2 - 1) % 4 == 3:
        half = _conference(order // 2)
        if np.array_equal(half.T, -half):
            return _double_skew(half)
    raise ConstructionError(f"no conference matrix construction for order {order}")


def conference_matrix(order):
    """Conference matrix ``C`` with zero diagonal, +-1 elsewhere and
    ``C^T C = (order - 1) I``.

    Paley matrices for ``order - 1`` a prime or 9 (symmetric for
    ``order - 1 = 1 mod 4``, skew otherwise) and skew doubling of order 8
    for order 16 cover every even order up to 20.
    """
    if int(order) != order or order < 2 or order % 2 or order > MAX_ORDER:
        raise ConstructionError(f"conference matrix order must be even and in [2, {MAX_ORDER}], "
                                f"got {order}; supported: {list(range(2, MAX_ORDER + 1, 2))}")
    return _conference(int(order)).copy()


# ---------------------------------------------------------------------------
# design
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DsdDesign:
    """Definitive screening design in coded units.

    ``full`` keeps every conference column, including fake and padding
    columns, which the fit uses to estimate error; ``runs`` holds the ``p``
    retained columns.  ``pair_map[k] = (k, k + p_eff)`` pairs every row with
    its fold-over; the final row is the centre run.
    """

    p: int
    p_eff: int
    runs: np.ndarray
    full: np.ndarray
    fake_dropped: list
    pair_map: np.ndarray
    n_fake: int
    seed: int
    names: list | None = None

    @property
    def n_runs(self):
        return self.runs.shape[0]

    @property
    def labels(self):
        return self.names or [f"X{i + 1}" for i in range(self.p)]

    def physical(self, space):
        """Map coded levels linearly onto each marginal's design range."""
        if space.p != self.p:
            raise ConfigError(f"space has {space.p} inputs, design has {self.p}")
        lo = np.array([d.design_range[0] for d in space.dims])
        hi = np.array([d.design_range[1] for d in space.dims])
        return 0.5 * (lo + hi) + 0.5 * (hi - lo) * self.runs


def dsd(p, n_fake=2, seed=0, names=None):
    """Minimum-run DSD ``(C; -C; 0)`` with ``n_fake`` fake factors.

    The conference matrix has order ``p + n_fake``, rounded up to even;
    the seed applies a random column permutation and column sign flips.
    """
    p = int(p)
    if p < 3:
        raise ConfigError(f"a DSD needs p >= 3 factors, got {p}")
    if n_fake not in (0, 2):
        raise ConfigError(f"n_fake must be 0 or 2, got {n_fake}")
    m = p + n_fake
    m += m % 2
    if m > MAX_ORDER:
        raise ConstructionError(f"p={p} with {n_fake} fake factors needs a conference matrix "
                                f"of order {m}; supported orders are {_supported()}")
    C = conference_matrix(m)
    rng = make_rng(seed)
    C = C[:, rng.permutation(m)] * rng.choice(np.array([-1, 1]), size=m)[None, :]
    full = np.vstack([C, -C, np.zeros((1, m), dtype=np.int64)])
    pairs = np.column_stack([np.arange(m), np.arange(m) + m])
    return DsdDesign(p=p, p_eff=m, runs=full[:, :p].copy(), full=full,
                     fake_dropped=list(range(p, m)), pair_map=pairs, n_fake=int(n_fake),
                     seed=int(seed), names=list(names) if names is not None else None)


# ---------------------------------------------------------------------------
# fit
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DsdFitResult:
    """Selected terms sorted by ``|t|``; ``stage`` records both stages."""

    terms: list
    intercept: float
    sigma2: float
    df_resid: int
    stage: dict
    labels: list
    meta: dict = field(default_factory=dict)

    columns = ("Term", "Estimate", "Std Error", "t Ratio", "Prob>|t|")

    @property
    def active_terms(self):
        return [t["term"] for t in self.terms]

    def rows(self):
        return [{"Term": t["term"], "Estimate": t["estimate"], "Std Error": t["std_error"],
                 "t Ratio": t["t_ratio"], "Prob>|t|": t["p_value"]} for t in self.terms]


def lenth_pse(b):
    """Lenth's pseudo standard error of a set of contrasts (last axis)."""
    b = np.abs(np.asarray(b, float))
    s0 = 1.5 * np.median(b, axis=-1, keepdims=True)
    keep = b < 2.5 * s0
    trimmed = np.where(keep, b, np.nan)
    with np.errstate(invalid="ignore"):
        med = np.nanmedian(np.where(keep.any(axis=-1, keepdims=True), trimmed, 0.0), axis=-1)
    return 1.5 * med


@functools.lru_cache(maxsize=None)
def lenth_critical(m, p, alpha=ALPHA_MAIN, reps=LENTH_REPS):
    """Critical ``max |b_j| / PSE`` over ``p`` of ``m`` null contrasts.

    Calibrated once by a fixed-seed simulation, so the threshold is
    experimentwise at level ``alpha`` and reproducible.
    """
    rng = make_rng(0xD5D, m, p, reps)
    b = rng.standard_normal((reps, m))
    stat = np.abs(b[:, :p]).max(axis=1) / lenth_pse(b)
    return float(np.quantile(stat, 1 - alpha))


def _term_column(runs, term):
    kind, idx = term
    if kind == "main":
        return runs[:, idx[0]].astype(float)
    return (runs[:, idx[0]] * runs[:, idx[1]]).astype(float)


def _term_name(term, labels):
    kind, idx = term
    if kind == "main":
        return labels[idx[0]]
    if kind == "quadratic":
        return f"{labels[idx[0]]}^2"
    return f"{labels[idx[0]]}*{labels[idx[1]]}"


def _wls_rss(F, v, w):
    sw = np.sqrt(w)
    coef, *_ = np.linalg.lstsq(F * sw[:, None], v * sw, rcond=None)
    r = (v - F @ coef) * sw
    return float(r @ r)


def dsd_fit(design: DsdDesign, y, alpha_main=ALPHA_MAIN, alpha_even=ALPHA_EVEN):
    """Two-stage fit exploiting the fold-over structure.

    Stage 1 works on the odd responses ``(y_k - y_fold(k)) / 2``, which
    depend only on main effects: every conference column (fake and padding
    columns included) gives an orthogonal contrast, and real mains are
    declared active when ``|b| / PSE`` (Lenth's pseudo standard error)
    exceeds a simulated experimentwise critical value.  The odd residual,
    made of all inactive contrasts, estimates the error variance.

    Stage 2 works on the even responses, the fold-over pair means and the
    centre run, which carry only the intercept, quadratics and
    interactions.  Candidates obey strong heredity over the stage-1 mains;
    the best one enters while its partial F statistic, against the error
    pooled from the odd residual and the remaining even residual, is
    significant at ``alpha_even`` divided by the number of candidates left.  The selected model
    is finally refit by least squares on all runs.
    """
    y = np.asarray(y, float).reshape(-1)
    if y.shape[0] != design.n_runs:
        raise ConfigError(f"response length {y.shape[0]} does not match {design.n_runs} runs")
    m, p, labels = design.p_eff, design.p, design.labels
    C = design.full[:m].astype(float)
    a, b_ = design.pair_map[:, 0], design.pair_map[:, 1]
    odd = 0.5 * (y[a] - y[b_])
    contrasts = C.T @ odd / (m - 1)

    pse = float(lenth_pse(contrasts))
    crit = lenth_critical(m, p, alpha_main)
    real = np.abs(contrasts[:p])
    if pse > 0:
        mains = [j for j in range(p) if real[j] / pse > crit]
    else:
        mains = [j for j in range(p) if real[j] > 0]
    mains.sort(key=lambda j: -real[j])
    df_odd = m - len(mains)
    if df_odd == 0:
        raise FitError("no odd-space error degrees of freedom left after stage 1; "
                       "add fake factors (n_fake=2) to estimate error")
    inactive = [j for j in range(m) if j not in mains]
    rss_odd = (m - 1) * float(np.sum(contrasts[inactive] ** 2))
    sigma2 = 2 * rss_odd / df_odd

    # even space: pair means (variance sigma^2 / 2) and the centre run
    ev = np.concatenate([0.5 * (y[a] + y[b_]), y[-1:]])
    wt = np.concatenate([np.full(m, 2.0), [1.0]])
    Rev = np.vstack([design.runs[:m], design.runs[-1:]])
    candidates = [("quadratic", (j, j)) for j in sorted(mains)]
    candidates += [("interaction", (i, j)) for i, j in itertools.combinations(sorted(mains), 2)]
    chosen = []
    F = np.ones((m + 1, 1))
    rss_even = _wls_rss(F, ev, wt)
    history = []
    # gains below this are rounding noise, not signal
    tiny = 1e-12 * (rss_even + 2 * rss_odd)
    while candidates:
        best, best_rss = None, np.inf
        for t in candidates:
            G = np.column_stack([F, _term_column(Rev, t)])
            if np.linalg.matrix_rank(G) < G.shape[1]:
                continue
            r = _wls_rss(G, ev, wt)
            if r < best_rss:
                best, best_rss = t, r
        if best is None:
            break
        # error pooled from the odd residual and what the even space would
        # leave unexplained; Bonferroni over the candidates still in play
        df_left = m - F.shape[1]
        df_pool = df_odd + df_left
        pooled = (2 * rss_odd + best_rss) / df_pool
        gain = rss_even - best_rss
        if gain <= tiny:
            pval = 1.0
        elif pooled * df_pool > tiny:
            pval = float(stats.f.sf(gain / pooled, 1, df_pool))
        else:
            pval = 0.0
        history.append({"term": _term_name(best, labels), "gain": gain,
                        "pooled_var": pooled, "df": df_pool, "p_value": pval})
        if pval > alpha_even / len(candidates):
            break
        chosen.append(best)
        candidates.remove(best)
        F = np.column_stack([F, _term_column(Rev, best)])
        rss_even = best_rss
    df_even = m + 1 - F.shape[1]

    terms = [("main", (j,)) for j in mains] + chosen
    X = np.column_stack([np.ones(y.size)] + [_term_column(design.runs, t) for t in terms])
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ coef
    df = y.size - X.shape[1]
    if df > 0:
        s2 = float(resid @ resid) / df
    else:
        s2, df = sigma2, df_odd
    cov = s2 * np.linalg.pinv(X.T @ X)
    table = []
    for k, t in enumerate(terms, start=1):
        se = float(np.sqrt(cov[k, k]))
        tr = coef[k] / se if se > 0 else np.copysign(np.inf, coef[k])
        table.append({"term": _term_name(t, labels), "kind": t[0], "index": t[1],
                      "estimate": float(coef[k]), "std_error": se, "t_ratio": float(tr),
                      "p_value": float(2 * stats.t.sf(abs(tr), df))})
    table.sort(key=lambda r: -abs(r["t_ratio"]))
    stage = {"contrasts": contrasts, "lenth_pse": pse, "lenth_critical": crit,
             "odd_residual_var": sigma2, "odd_df": df_odd,
             "even_residual_var": rss_even / df_even if df_even > 0 else float("nan"),
             "even_df": df_even, "even_steps": history}
    return DsdFitResult(terms=table, intercept=float(coef[0]), sigma2=s2, df_resid=df,
                        stage=stage, labels=labels, meta={"design": design})


def dsd_variance_explained(fit: DsdFitResult, y):
    """Cumulative R^2 of nested least-squares models adding terms in table order."""
    design = fit.meta["design"]
    y = np.asarray(y, float).reshape(-1)
    out = [("intercept", 0.0)]
    sst = float(np.sum((y - y.mean()) ** 2))
    cols = [np.ones(y.size)]
    for t in fit.terms:
        cols.append(_term_column(design.runs, (t["kind"], t["index"])))
        X = np.column_stack(cols)
        coef, *_ = np.linalg.lstsq(X, y, rcond=None)
        r = y - X @ coef
        r2 = 1.0 - float(r @ r) / sst if sst > 0 else 1.0
        out.append((t["term"], r2))
    return out
