"""Input spaces, seeded sampling, model handles and builtin test functions.

Random streams
--------------
All randomness flows through :func:`make_rng`, which builds a numpy
``Generator`` on the PCG64 bit generator seeded from a ``SeedSequence``
with entropy ``seed`` and spawn key ``key``.  Distinct keys give
statistically independent streams, so e.g. replicate ``r`` at sample
size ``n`` can use ``make_rng(root, n, r)`` regardless of which other
(n, r) cells are run.
"""

from __future__ import annotations

import math
import shlex
import subprocess
import threading
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import special
from scipy.stats import qmc

from .errors import (ConfigError, EvaluationError, GivenDataError,
                     MethodPreconditionError, RegistryError)
from .results import SobolResult

NORMAL_TRUNCATION = 8.0


def make_rng(seed, *key):
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))


# ---------------------------------------------------------------------------
# marginals and input spaces
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Uniform:
    a: float
    b: float
    kind = "uniform"

    def __post_init__(self):
        if not (np.isfinite(self.a) and np.isfinite(self.b) and self.a < self.b):
            raise ConfigError(f"uniform marginal needs finite a < b, got ({self.a}, {self.b})")

    @property
    def mean(self):
        return 0.5 * (self.a + self.b)

    @property
    def var(self):
        return (self.b - self.a) ** 2 / 12.0

    @property
    def scale(self):
        return self.b - self.a

    @property
    def support(self):
        return self.a, self.b

    @property
    def design_range(self):
        return self.a, self.b

    def cdf(self, x):
        return np.clip((np.asarray(x, float) - self.a) / (self.b - self.a), 0.0, 1.0)

    def ppf(self, u):
        return self.a + (self.b - self.a) * np.asarray(u, float)

    def pdf(self, x):
        x = np.asarray(x, float)
        return np.where((x >= self.a) & (x <= self.b), 1.0 / (self.b - self.a), 0.0)

    def moment(self, k):
        """Raw moment E[x^k]."""
        return (self.b ** (k + 1) - self.a ** (k + 1)) / ((k + 1) * (self.b - self.a))

    def spec(self):
        return f"uniform:{self.a!r}:{self.b!r}"


@dataclass(frozen=True)
class Normal:
    mu: float
    sigma: float
    kind = "normal"

    def __post_init__(self):
        if not (np.isfinite(self.mu) and np.isfinite(self.sigma) and self.sigma > 0):
            raise ConfigError(f"normal marginal needs finite mu and sigma > 0, got ({self.mu}, {self.sigma})")

    @property
    def mean(self):
        return self.mu

    @property
    def var(self):
        return self.sigma ** 2

    @property
    def scale(self):
        return self.sigma

    @property
    def support(self):
        t = NORMAL_TRUNCATION * self.sigma
        return self.mu - t, self.mu + t

    @property
    def design_range(self):
        return self.mu - 2 * self.sigma, self.mu + 2 * self.sigma

    def cdf(self, x):
        return special.ndtr((np.asarray(x, float) - self.mu) / self.sigma)

    def ppf(self, u):
        z = special.ndtri(np.asarray(u, float))
        z = np.clip(z, -NORMAL_TRUNCATION, NORMAL_TRUNCATION)
        return self.mu + self.sigma * z

    def pdf(self, x):
        z = (np.asarray(x, float) - self.mu) / self.sigma
        return np.exp(-0.5 * z * z) / (self.sigma * math.sqrt(2 * math.pi))

    def moment(self, k):
        # E[(mu + sigma z)^k] via the binomial expansion; odd normal moments vanish
        total = 0.0
        for j in range(0, k + 1, 2):
            total += math.comb(k, j) * self.mu ** (k - j) * self.sigma ** j * _double_factorial(j - 1)
        return total

    def spec(self):
        return f"normal:{self.mu!r}:{self.sigma!r}"


def _double_factorial(n):
    return 1 if n <= 0 else n * _double_factorial(n - 2)


def parse_marginal(text):
    """Parse ``uniform:a:b`` or ``normal:mu:sigma``."""
    parts = text.strip().split(":")
    try:
        kind, vals = parts[0].lower(), [float(v) for v in parts[1:]]
    except ValueError as exc:
        raise ConfigError(f"cannot parse marginal {text!r}") from exc
    if kind in ("uniform", "u") and len(vals) == 2:
        return Uniform(*vals)
    if kind in ("normal", "n") and len(vals) == 2:
        return Normal(*vals)
    raise ConfigError(f"cannot parse marginal {text!r}; expected uniform:a:b or normal:mu:sigma")


@dataclass(frozen=True, eq=False)
class InputSpace:
    """Product of marginals, optionally coupled by a Gaussian copula.

    ``correlation`` is the copula's correlation matrix of the normal scores.
    ``independent`` is derived from it unless given explicitly; an explicit
    ``independent=False`` without a correlation matrix marks a space whose
    dependence structure is unknown to the toolkit.
    """

    dims: tuple
    correlation: np.ndarray | None = None
    names: tuple | None = None
    independent: bool | None = None

    def __post_init__(self):
        dims = tuple(self.dims)
        if len(dims) == 0:
            raise ConfigError("input space must have at least one dimension")
        object.__setattr__(self, "dims", dims)
        if self.correlation is not None:
            R = np.array(self.correlation, dtype=float)
            if R.shape != (len(dims), len(dims)) or not np.allclose(R, R.T):
                raise ConfigError("correlation must be a symmetric p x p matrix")
            if not np.allclose(np.diag(R), 1.0):
                raise ConfigError("correlation matrix must have unit diagonal")
            try:
                np.linalg.cholesky(R)
            except np.linalg.LinAlgError as exc:
                raise ConfigError("correlation matrix is not positive definite") from exc
            R.setflags(write=False)
            object.__setattr__(self, "correlation", R)
        if self.independent is None:
            indep = self.correlation is None or np.allclose(self.correlation, np.eye(len(dims)))
            object.__setattr__(self, "independent", bool(indep))
        if self.names is not None:
            if len(self.names) != len(dims):
                raise ConfigError("names must match the number of dimensions")
            object.__setattr__(self, "names", tuple(self.names))

    @classmethod
    def uniform(cls, p, a=0.0, b=1.0, **kw):
        return cls(tuple(Uniform(a, b) for _ in range(p)), **kw)

    @classmethod
    def parse(cls, text, p=None):
        """Parse a comma-separated marginal list; a single entry with ``p`` repeats."""
        items = [s for s in text.split(",") if s.strip()]
        dims = [parse_marginal(s) for s in items]
        if p is not None and len(dims) == 1:
            dims = dims * p
        return cls(tuple(dims))

    @property
    def p(self):
        return len(self.dims)

    @property
    def labels(self):
        return list(self.names) if self.names else [f"X{i + 1}" for i in range(self.p)]

    def spec(self):
        return ",".join(d.spec() for d in self.dims)

    def from_unit(self, U):
        U = np.asarray(U, float)
        return np.column_stack([d.ppf(U[:, j]) for j, d in enumerate(self.dims)])

    def to_unit(self, X):
        X = np.asarray(X, float)
        return np.column_stack([d.cdf(X[:, j]) for j, d in enumerate(self.dims)])

    def contains(self, X):
        X = np.atleast_2d(X)
        lo = np.array([d.support[0] for d in self.dims])
        hi = np.array([d.support[1] for d in self.dims])
        return np.all((X >= lo) & (X <= hi), axis=1)

    def require_independent(self, method):
        if not self.independent:
            raise MethodPreconditionError(f"{method} requires independent inputs")

    # Gaussian copula helpers ---------------------------------------------

    def _scores_to_x(self, Z, cols):
        return np.column_stack([self.dims[j].ppf(special.ndtr(Z[:, k]))
                                for k, j in enumerate(cols)])

    def _x_to_scores(self, X, cols):
        out = []
        for k, j in enumerate(cols):
            u = np.clip(self.dims[j].cdf(X[:, k]), 1e-300, 1 - 1e-16)
            out.append(special.ndtri(u))
        return np.column_stack(out)

    def sample_dependent(self, n, rng):
        if self.correlation is None:
            raise MethodPreconditionError("dependent space has no copula; supply a sampler")
        L = np.linalg.cholesky(self.correlation)
        Z = rng.standard_normal((n, self.p)) @ L.T
        return self._scores_to_x(Z, range(self.p))

    def conditional_sample(self, target, given, x_given, n_inner, rng):
        """Draw ``n_inner`` values of ``x[target]`` given ``x[given] = x_given``.

        ``x_given`` has shape (n_outer, len(given)); the result has shape
        (n_outer, n_inner, len(target)).
        """
        target, given = list(target), list(given)
        x_given = np.atleast_2d(x_given)
        n_outer = x_given.shape[0]
        if self.independent or not given:
            U = rng.random((n_outer * n_inner, len(target)))
            X = np.column_stack([self.dims[j].ppf(U[:, k]) for k, j in enumerate(target)])
            return X.reshape(n_outer, n_inner, len(target))
        if self.correlation is None:
            raise MethodPreconditionError("dependent space has no copula; supply a sampler")
        R = self.correlation
        Rtg = R[np.ix_(target, given)]
        Rgg = R[np.ix_(given, given)]
        Rtt = R[np.ix_(target, target)]
        W = np.linalg.solve(Rgg, Rtg.T).T
        cov = Rtt - W @ Rtg.T
        L = np.linalg.cholesky(cov + 1e-14 * np.eye(len(target)))
        zg = self._x_to_scores(x_given, given)
        mean = zg @ W.T
        E = rng.standard_normal((n_outer, n_inner, len(target))) @ L.T
        Z = (mean[:, None, :] + E).reshape(-1, len(target))
        return self._scores_to_x(Z, target).reshape(n_outer, n_inner, len(target))


def sample(space, n, seed, scheme="iid"):
    """Draw ``n`` points from ``space``.

    ``scheme`` is ``"iid"``, ``"lhs"`` (one point per equal-probability
    stratum in every column) or ``"sobol"`` (scrambled Sobol' sequence).
    Identical arguments give bit-identical output.
    """
    if not isinstance(space, InputSpace) or space.p == 0:
        raise ConfigError("sample needs a non-empty InputSpace")
    n = int(n)
    if n < 1:
        raise ConfigError("sample size must be >= 1")
    rng = seed if isinstance(seed, np.random.Generator) else make_rng(seed)
    if not space.independent:
        if scheme != "iid":
            raise ConfigError(f"scheme {scheme!r} is only available for independent inputs")
        return space.sample_dependent(n, rng)
    U = unit_sample(n, space.p, rng, scheme)
    return space.from_unit(U)


def unit_sample(n, d, rng, scheme="iid"):
    if scheme == "iid":
        return rng.random((n, d))
    if scheme == "lhs":
        cols = []
        for _ in range(d):
            cols.append((rng.permutation(n) + rng.random(n)) / n)
        return np.minimum(np.column_stack(cols), np.nextafter(1.0, 0.0))
    if scheme == "sobol":
        engine = qmc.Sobol(d, scramble=True, seed=rng)
        m = int(round(math.log2(n)))
        if 2 ** m == n:
            return engine.random_base2(m)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UserWarning)
            return engine.random(n)
    raise ConfigError(f"unknown sampling scheme {scheme!r}; use iid, lhs or sobol")


# ---------------------------------------------------------------------------
# builtin models
# ---------------------------------------------------------------------------

def _ishigami(X, a=7.0, b=0.1):
    s1 = np.sin(X[:, 0])
    return s1 + a * np.sin(X[:, 1]) ** 2 + b * X[:, 2] ** 4 * s1


def _gfunction(X, a):
    a = np.asarray(a, float)
    return np.prod((np.abs(4.0 * X - 2.0) + a) / (1.0 + a), axis=1)


def _linear(X, beta):
    return X @ np.asarray(beta, float)


def _product(X):
    return np.prod(X, axis=1)


def _constant(X, c=0.0):
    return np.full(X.shape[0], float(c))


def _as_vector(v):
    if isinstance(v, str):
        v = [float(s) for s in v.replace(";", ",").split(",") if s.strip()]
    return tuple(float(x) for x in np.atleast_1d(v))


@dataclass(frozen=True)
class _Builtin:
    func: object
    defaults: dict
    arity: object      # callable(params, p_requested) -> p
    space: object      # callable(p) -> InputSpace


def _fixed_len(key):
    def arity(params, p):
        n = len(params[key])
        if p is not None and p != n:
            raise ConfigError(f"model expects {n} inputs ({key} has length {n}), got p={p}")
        return n
    return arity


def _at_least(k, default):
    def arity(params, p):
        p = default if p is None else p
        if p < k:
            raise ConfigError(f"model needs at least {k} inputs, got p={p}")
        return p
    return arity


REGISTRY = {
    "ishigami": _Builtin(_ishigami, {"a": 7.0, "b": 0.1}, _at_least(3, 3),
                         lambda p: InputSpace.uniform(p, -math.pi, math.pi)),
    "gfunction": _Builtin(_gfunction, {"a": (0.0, 1.0, 4.5, 9.0, 99.0, 99.0, 99.0, 99.0)},
                          _fixed_len("a"), lambda p: InputSpace.uniform(p)),
    "linear": _Builtin(_linear, {"beta": (1.0, 2.0)}, _fixed_len("beta"),
                       lambda p: InputSpace.uniform(p)),
    "product": _Builtin(_product, {}, _at_least(1, 2), lambda p: InputSpace.uniform(p)),
    "constant": _Builtin(_constant, {"c": 0.0}, _at_least(1, 1), lambda p: InputSpace.uniform(p)),
}

_VECTOR_PARAMS = {"a": "gfunction", "beta": "linear"}


def _lookup(name):
    try:
        return REGISTRY[name]
    except KeyError:
        raise RegistryError(f"unknown builtin model {name!r}; choose from {sorted(REGISTRY)}") from None


def _normalize_params(name, params):
    entry = _lookup(name)
    out = dict(entry.defaults)
    for k, v in (params or {}).items():
        if k not in entry.defaults:
            raise ConfigError(f"model {name!r} has no parameter {k!r}")
        out[k] = _as_vector(v) if _VECTOR_PARAMS.get(k) == name else float(v)
    return out


# ---------------------------------------------------------------------------
# model handles
# ---------------------------------------------------------------------------

class Model:
    """A scalar model ``f(x)`` with a cumulative evaluation counter."""

    kind = "abstract"

    def __init__(self, p):
        self.p = p
        self.eval_count = 0

    def _check(self, X):
        X = np.asarray(X, float)
        if X.ndim != 2:
            raise ConfigError("design must be a 2-D array")
        if self.p is not None and X.shape[1] != self.p:
            raise ConfigError(f"model expects {self.p} inputs, design has {X.shape[1]}")
        return X

    def evaluate(self, X):
        X = self._check(X)
        y = np.asarray(self._evaluate(X), float).reshape(-1)
        self.eval_count += X.shape[0]
        return y

    __call__ = evaluate

    def describe(self):
        return {"kind": self.kind}


class BuiltinModel(Model):
    kind = "builtin"

    def __init__(self, name, params=None, p=None):
        self.name = name
        self.params = _normalize_params(name, params)
        super().__init__(_lookup(name).arity(self.params, p))

    def _evaluate(self, X):
        return _lookup(self.name).func(X, **self.params)

    def default_space(self):
        return _lookup(self.name).space(self.p)

    def truth(self, space=None):
        return builtin_truth(self.name, self.params, space or self.default_space())

    def describe(self):
        return {"kind": self.kind, "name": self.name, "params": self.params, "p": self.p}


class FunctionModel(Model):
    """Wraps a vectorized Python callable ``f(X) -> y``."""

    kind = "function"

    def __init__(self, func, p=None, name=None):
        super().__init__(p)
        self.func = func
        self.name = name or getattr(func, "__name__", "function")

    def _evaluate(self, X):
        return self.func(X)

    def describe(self):
        return {"kind": self.kind, "name": self.name, "p": self.p}


class ExternalModel(Model):
    """A model run as a child process speaking the line protocol.

    The child receives ``p,n`` followed by ``n`` CSV rows of ``%.17g``
    floats on stdin and must print exactly ``n`` lines, one float each.
    Calls on one handle are serialized.
    """

    kind = "external"

    def __init__(self, command, args=(), p=None, timeout=None):
        super().__init__(p)
        if isinstance(command, str):
            parts = shlex.split(command)
            command, args = parts[0], [*parts[1:], *args]
        self.command = command
        self.args = list(args)
        self.timeout = timeout
        self._lock = threading.Lock()

    def _evaluate(self, X):
        n, p = X.shape
        lines = [f"{p},{n}"]
        lines += [",".join("%.17g" % v for v in row) for row in X]
        payload = "\n".join(lines) + "\n"
        with self._lock:
            try:
                proc = subprocess.run([self.command, *self.args], input=payload,
                                      capture_output=True, text=True, timeout=self.timeout)
            except (OSError, subprocess.TimeoutExpired) as exc:
                raise EvaluationError(f"could not run external model: {exc}", completed=0) from exc
        out = [ln for ln in proc.stdout.splitlines() if ln.strip()]
        y = np.empty(n)
        done = 0
        for i, ln in enumerate(out[:n]):
            try:
                y[i] = float(ln.strip())
            except ValueError:
                raise EvaluationError(f"malformed output line for row {i}: {ln!r}",
                                      row=i, completed=i) from None
            if not np.isfinite(y[i]):
                raise EvaluationError(f"non-finite output for row {i}", row=i, completed=i)
            done = i + 1
        if proc.returncode != 0:
            msg = proc.stderr.strip().splitlines()[-1:] or [""]
            raise EvaluationError(f"external model exited with status {proc.returncode}: {msg[0]}",
                                  row=done if done < n else None, completed=done)
        if len(out) != n:
            raise EvaluationError(f"external model returned {len(out)} lines for {n} rows",
                                  row=min(done, n - 1), completed=done)
        return y

    def describe(self):
        return {"kind": self.kind, "command": self.command, "args": self.args, "p": self.p}


class TableModel(Model):
    """Fixed (X, y) data; evaluation only replays the stored rows."""

    kind = "table"

    def __init__(self, X, y):
        X = np.asarray(X, float)
        y = np.asarray(y, float).reshape(-1)
        if X.ndim != 2 or X.shape[0] != y.shape[0] or y.shape[0] < 2:
            raise ConfigError("table model needs rows(X) == len(y) >= 2")
        super().__init__(X.shape[1])
        self.X, self.y = X, y

    def evaluate(self, X):
        X = self._check(X)
        if X.shape != self.X.shape or not np.array_equal(X, self.X):
            raise GivenDataError("given-data model cannot evaluate new points")
        return self.y.copy()

    __call__ = evaluate

    @classmethod
    def from_csv(cls, path):
        X, y, names = read_table_csv(path)
        m = cls(X, y)
        m.names = names
        return m

    def describe(self):
        return {"kind": self.kind, "n": int(self.X.shape[0]), "p": self.p}


def read_table_csv(path):
    """Read a headered CSV whose last column is the response."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.shape[1] < 2:
        raise ConfigError(f"{path}: need at least one input column and a response column")
    return data[:, :-1], data[:, -1], header[:-1]


def builtin(name, p=None, **params):
    return BuiltinModel(name, params, p)


@dataclass
class EvalBatch:
    X: np.ndarray
    y: np.ndarray
    seed: int | None
    eval_count: int


def evaluate(model, X, seed=None):
    """Evaluate ``model`` on the rows of ``X`` and return an :class:`EvalBatch`."""
    y = model.evaluate(X)
    return EvalBatch(np.asarray(X, float), y, seed, model.eval_count)


# ---------------------------------------------------------------------------
# analytic indices
# ---------------------------------------------------------------------------

def builtin_truth(name, params=None, space=None):
    """Closed-form first-order and total Sobol' indices of a builtin model.

    ``space`` defaults to the model's standard input space; ``linear``,
    ``product`` and ``constant`` accept any independent space, ``ishigami``
    and ``gfunction`` only their standard one.
    """
    entry = _lookup(name)
    params = _normalize_params(name, params)
    p = entry.arity(params, space.p if space is not None else None)
    standard = space is None
    space = space or entry.space(p)
    if not space.independent:
        raise MethodPreconditionError("analytic Sobol' indices need independent inputs")

    if name == "ishigami":
        if not standard and space.dims != entry.space(p).dims:
            raise ConfigError("ishigami indices are only tabulated for uniform(-pi, pi) inputs")
        a, b = params["a"], params["b"]
        pi = math.pi
        v1 = 0.5 * (1 + b * pi ** 4 / 5) ** 2
        v2 = a ** 2 / 8
        v13 = 8 * b ** 2 * pi ** 8 / 225
        first = np.zeros(p)
        total = np.zeros(p)
        first[:3] = v1, v2, 0.0
        total[:3] = v1 + v13, v2, v13
        var = v1 + v2 + v13
    elif name == "gfunction":
        if not standard and any(d != Uniform(0.0, 1.0) for d in space.dims):
            raise ConfigError("g-function indices are only tabulated for uniform(0, 1) inputs")
        a = np.asarray(params["a"])
        vi = 1.0 / (3.0 * (1.0 + a) ** 2)
        var = float(np.prod(1 + vi) - 1)
        first = vi
        total = np.array([vi[i] * np.prod(np.delete(1 + vi, i)) for i in range(p)])
    elif name == "linear":
        beta = np.asarray(params["beta"])
        first = beta ** 2 * np.array([d.var for d in space.dims])
        total = first.copy()
        var = float(first.sum())
    elif name == "product":
        m2 = np.array([d.mean ** 2 for d in space.dims])
        s2 = np.array([d.moment(2) for d in space.dims])
        vv = s2 - m2
        var = float(np.prod(s2) - np.prod(m2))
        first = np.array([vv[i] * np.prod(np.delete(m2, i)) for i in range(p)])
        total = np.array([vv[i] * np.prod(np.delete(s2, i)) for i in range(p)])
    else:  # constant
        first = np.zeros(p)
        total = np.zeros(p)
        var = 0.0

    zero = var <= 0.0
    if zero:
        S, ST = np.zeros(p), np.zeros(p)
    else:
        S, ST = np.asarray(first, float) / var, np.asarray(total, float) / var
    return SobolResult(first_order=S, total=ST, total_variance=float(var), n_base=0,
                       n_evals=0, estimator="analytic", raw_first_order=S.copy(),
                       raw_total=ST.copy(), zero_variance=zero, names=space.labels,
                       meta={"model": name, "params": params})
