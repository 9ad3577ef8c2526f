"""Morris elementary-effects screening."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import make_rng
from .errors import ConfigError


@dataclass(frozen=True)
class MorrisDesign:
    """``r`` stacked random orientations of the one-at-a-time matrix.

    ``X`` lives on the unit grid ``{0, 1/(k-1), ..., 1}^p``; ``levels`` holds
    the same points as integer grid levels.  ``perturbed_input[row]`` is
    the coordinate that changed between ``row - 1`` and ``row`` within a
    trajectory (``-1`` on each trajectory's first row).
    """

    p: int
    k: int
    delta_mult: int
    r: int
    X: np.ndarray
    levels: np.ndarray
    trajectory_id: np.ndarray
    perturbed_input: np.ndarray
    seed: int

    @property
    def delta(self):
        return self.delta_mult / (self.k - 1)

    @property
    def m(self):
        return self.p + 1


@dataclass(frozen=True)
class MorrisResult:
    mean: np.ndarray
    mean_abs: np.ndarray
    std: np.ndarray
    sem: np.ndarray
    effects: np.ndarray
    names: list | None = None
    meta: dict = field(default_factory=dict)

    columns = ("input", "mean", "mean_abs", "std", "sem")

    @property
    def r(self):
        return self.effects.shape[0]

    def rows(self):
        names = self.names or [f"X{i + 1}" for i in range(len(self.mean))]
        return [{"input": nm, "mean": float(self.mean[i]), "mean_abs": float(self.mean_abs[i]),
                 "std": float(self.std[i]), "sem": float(self.sem[i])}
                for i, nm in enumerate(names)]


def _check_grid(k, delta_mult):
    if int(k) != k or k < 2:
        raise ConfigError(f"number of grid levels k must be an integer >= 2, got {k}")
    k = int(k)
    if delta_mult is None:
        delta_mult = max(1, k // 2)
    if float(delta_mult) != int(delta_mult) or delta_mult < 1:
        raise ConfigError(f"step must be a positive multiple of 1/(k-1); got {delta_mult}/(k-1)")
    delta_mult = int(delta_mult)
    if delta_mult >= k - 1:
        raise ConfigError(f"step {delta_mult}/(k-1) must be < 1")
    return k, delta_mult


def morris_design(p, k=4, delta_mult=None, r=10, seed=0):
    """Random-orientation trajectory design with ``r * (p + 1)`` rows.

    Each trajectory starts at a base point drawn uniformly from grid levels
    ``0 .. k-1-delta_mult`` (so that both step directions stay on the grid),
    gets random step signs and a random column order, and moves one
    coordinate at a time.
    """
    k, dm = _check_grid(k, delta_mult)
    p, r = int(p), int(r)
    if p < 1 or r < 1:
        raise ConfigError("morris design needs p >= 1 and r >= 1")
    m = p + 1
    B = np.tril(np.ones((m, p), dtype=np.int64), -1)
    J = np.ones((m, p), dtype=np.int64)
    n_base = k - dm
    levels, perturbed = [], []
    for t in range(r):
        rng = make_rng(seed, t)
        x_star = rng.integers(0, n_base, size=p)
        signs = rng.choice(np.array([-1, 1]), size=p)
        perm = rng.permutation(p)
        # (Delta/2)[(2B - J)D + J] in integer grid units
        L = x_star[None, :] + dm * (((2 * B - J) * signs[None, :] + J) // 2)
        # column c of the oriented matrix is column perm[c] of the unpermuted one
        levels.append(L[:, perm])
        moved = np.empty(m, dtype=np.int64)
        moved[0] = -1
        moved[1:] = np.argsort(perm)[np.arange(p)]
        perturbed.append(moved)
    levels = np.vstack(levels)
    X = levels / (k - 1)
    return MorrisDesign(p, k, dm, r, X, levels, np.repeat(np.arange(r), m),
                        np.concatenate(perturbed), int(seed))


def elementary_effects(design: MorrisDesign, y):
    """``(r, p)`` array of signed elementary effects keyed by input."""
    y = np.asarray(y, float).reshape(-1)
    if y.shape[0] != design.X.shape[0]:
        raise ConfigError(f"response length {y.shape[0]} does not match {design.X.shape[0]} design rows")
    effects = np.full((design.r, design.p), np.nan)
    for t in range(design.r):
        rows = np.flatnonzero(design.trajectory_id == t)
        for a, b in zip(rows[:-1], rows[1:]):
            j = design.perturbed_input[b]
            step = design.levels[b, j] - design.levels[a, j]
            effects[t, j] = (y[b] - y[a]) / (np.sign(step) * design.delta)
    if np.isnan(effects).any():
        raise ConfigError("design does not perturb every input exactly once per trajectory")
    return effects


def morris_analyze(design: MorrisDesign, y, names=None):
    if design.r < 2:
        raise ConfigError("standard deviation of elementary effects needs r >= 2")
    d = elementary_effects(design, y)
    std = d.std(axis=0, ddof=1)
    return MorrisResult(mean=d.mean(axis=0), mean_abs=np.abs(d).mean(axis=0), std=std,
                        sem=std / np.sqrt(design.r), effects=d, names=names,
                        meta={"k": design.k, "delta": design.delta, "r": design.r})


def morris(model, space, r=10, k=4, delta_mult=None, seed=0):
    """Design, evaluate (grid mapped through each marginal's quantiles), analyze."""
    space.require_independent("Morris screening")
    design = morris_design(space.p, k, delta_mult, r, seed)
    y = model.evaluate(space.from_unit(design.X))
    return design, morris_analyze(design, y, names=space.labels)
