"""Box-constrained differential evolution (DE/rand/1/bin)."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from .imagegrid import InvalidParameterError


@dataclass(frozen=True)
class DeConfig:
    population_factor: int = 15
    mutation: float = 0.8
    crossover: float = 0.9
    max_generations: int = 300
    tol: float = 1e-7
    seed: int = 0

    def population_size(self, dims: int) -> int:
        return self.population_factor * dims

    def validate(self, dims: int) -> None:
        if self.population_size(dims) < 4:
            raise InvalidParameterError("DE population must have at least 4 members")
        if not 0.0 <= self.mutation <= 2.0:
            raise InvalidParameterError(f"mutation {self.mutation} not in [0, 2]")
        if not 0.0 <= self.crossover <= 1.0:
            raise InvalidParameterError(f"crossover {self.crossover} not in [0, 1]")
        if self.max_generations < 0 or self.tol < 0:
            raise InvalidParameterError("max_generations and tol must be non-negative")


@dataclass(frozen=True, eq=False)
class Bounds:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float).ravel()
        hi = np.asarray(self.upper, dtype=float).ravel()
        if lo.shape != hi.shape or lo.size == 0:
            raise InvalidParameterError("bounds must be nonempty vectors of equal length")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise InvalidParameterError("bounds must be finite")
        if not np.all(lo < hi):
            raise InvalidParameterError("lower bounds must be strictly below upper bounds")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def from_pairs(cls, pairs) -> "Bounds":
        pairs = np.asarray(pairs, dtype=float)
        return cls(pairs[:, 0], pairs[:, 1])

    @property
    def dims(self) -> int:
        return self.lower.size

    def contains(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        return np.all((x >= self.lower) & (x <= self.upper), axis=-1)


class DeResult(NamedTuple):
    x_best: np.ndarray
    f_best: float
    evals: int


def reflect(x: np.ndarray, lower: np.ndarray, upper: np.ndarray) -> np.ndarray:
    """Fold coordinates back into the box by mirror reflection at the faces."""
    span = upper - lower
    t = np.mod(x - lower, 2.0 * span)
    t = np.where(t > span, 2.0 * span - t, t)
    return np.clip(lower + t, lower, upper)


def differential_evolution(
    f: Callable,
    bounds: Bounds,
    cfg: DeConfig = DeConfig(),
    vectorized: bool = False,
    callback: Callable | None = None,
) -> DeResult:
    """Minimize ``f`` over ``bounds``.

    With ``vectorized=True`` the objective receives an ``(n, dims)`` array and
    returns ``n`` values; otherwise it is called once per candidate.  All
    random draws of a generation happen before its evaluations, so the result
    depends only on the seed.  ``callback(generation, x_best, f_best)`` is
    invoked after initialization and after every generation.
    """
    if not isinstance(bounds, Bounds):
        bounds = Bounds.from_pairs(bounds)
    dims = bounds.dims
    cfg.validate(dims)
    lo, hi = bounds.lower, bounds.upper
    npop = cfg.population_size(dims)
    rng = np.random.default_rng(cfg.seed)

    def evaluate(pop):
        if vectorized:
            vals = np.asarray(f(pop), dtype=float).reshape(len(pop))
        else:
            vals = np.array([float(f(row)) for row in pop])
        return np.where(np.isnan(vals), np.inf, vals)

    pop = lo + rng.random((npop, dims)) * (hi - lo)
    fit = evaluate(pop)
    evals = npop
    best = int(np.argmin(fit))
    if callback is not None:
        callback(0, pop[best].copy(), float(fit[best]))

    idx = np.arange(npop)
    for gen in range(1, cfg.max_generations + 1):
        if _converged(fit, cfg.tol):
            break
        r = _donors(rng, idx)
        mutant = pop[r[:, 0]] + cfg.mutation * (pop[r[:, 1]] - pop[r[:, 2]])
        cross = rng.random((npop, dims)) < cfg.crossover
        cross[idx, rng.integers(0, dims, size=npop)] = True
        trial = reflect(np.where(cross, mutant, pop), lo, hi)

        f_trial = evaluate(trial)
        evals += npop
        improved = f_trial <= fit
        pop[improved] = trial[improved]
        fit[improved] = f_trial[improved]
        best = int(np.argmin(fit))
        if callback is not None:
            callback(gen, pop[best].copy(), float(fit[best]))

    best = int(np.argmin(fit))
    return DeResult(pop[best].copy(), float(fit[best]), evals)


def _donors(rng: np.random.Generator, idx: np.ndarray) -> np.ndarray:
    """Three mutually distinct donor indices per target, none equal to the target.

    Each draw picks uniformly among the slots not yet taken, so every ordered
    triple is equally likely.
    """
    n = idx.size
    a = rng.integers(0, n - 1, size=n)
    b = rng.integers(0, n - 2, size=n)
    b += b >= a
    c = rng.integers(0, n - 3, size=n)
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    c += c >= lo
    c += c >= hi
    r = np.column_stack([a, b, c])
    return r + (r >= idx[:, None])


def _converged(fit: np.ndarray, tol: float) -> bool:
    if not np.all(np.isfinite(fit)):
        return False
    return bool(np.std(fit) <= tol * abs(np.mean(fit)))
