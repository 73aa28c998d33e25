"""Fit a synthetic triangle to a measured image and emit the fit feature vector.

The fit minimizes a blend of two L2 similarities between the measured image
and a rendered candidate: one on the raw pixels and one on the gradient
magnitude of the Gaussian-blurred images.  The blur scale is optimized
jointly with the ten triangle parameters, so the search runs over an 11-D
box.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field, replace

import numpy as np

from ._kernels import grad_mag_distance, grad_mag_stack, render_distance_f32, row_distances, to_float32_flushed
from .features import SYNTH_FEATURES, FeatureVector
from .gabor import HYBRID_FILTER, Filterbank, make_default_filterbank, response_norm
from .imagegrid import Image, InvalidParameterError, gaussian_blur, gradient_magnitude
from .optimize import Bounds, DeConfig, differential_evolution
from .synthtri import R_MAX, TriangleParams, check_constraints, feasible_batch, render_batch

MIN_PENALTY = 1e6


def default_param_bounds(size: int = 64) -> tuple[tuple[float, float], ...]:
    mag, rate, shift = (0.0, 1.5), (-R_MAX, 0.0), (0.0, float(size))
    return (mag, rate, shift) * 3 + ((0.0, math.pi / 2),)


@dataclass(frozen=True)
class FitConfig:
    blend_weight: float = 0.5
    penalty: float = 1e9
    sigma_bounds: tuple[float, float] = (0.5, 8.0)
    param_bounds: tuple = field(default_factory=default_param_bounds)
    de: DeConfig = field(default_factory=DeConfig)
    # precision of the blur products inside the search; "float64" is exact
    # to rounding, "float32" is about three times faster
    blur_dtype: str = "float32"

    def __post_init__(self):
        if self.blur_dtype not in ("float32", "float64"):
            raise InvalidParameterError(f"blur_dtype must be float32 or float64, not {self.blur_dtype!r}")
        if not 0.0 <= self.blend_weight <= 1.0:
            raise InvalidParameterError(f"blend weight {self.blend_weight} not in [0, 1]")
        if not self.penalty >= MIN_PENALTY:
            raise InvalidParameterError(f"penalty constant must be >= {MIN_PENALTY:g}")
        if len(self.param_bounds) != 10:
            raise InvalidParameterError("param_bounds needs one (lo, hi) pair per triangle parameter")
        lo, hi = self.sigma_bounds
        if not 0 < lo < hi:
            raise InvalidParameterError("sigma bounds must satisfy 0 < lo < hi")

    def bounds(self) -> Bounds:
        return Bounds.from_pairs(list(self.param_bounds) + [tuple(self.sigma_bounds)])

    def with_seed(self, seed: int) -> "FitConfig":
        return replace(self, de=replace(self.de, seed=seed))


@dataclass(frozen=True)
class FitResult:
    params: TriangleParams
    sigma_star: float
    fitness: float
    evals: int


class FitFailedError(RuntimeError):
    def __init__(self, result: FitResult):
        self.result = result
        super().__init__(f"fit ended on the penalty plateau (F={result.fitness:g})")


# ---------------------------------------------------------------------------
# transforms and similarity


def transform_identity(img: Image) -> Image:
    return img


def transform_grad_gaussian(img: Image, sigma: float) -> Image:
    return gradient_magnitude(gaussian_blur(img, sigma))


def similarity(u: Image, v: Image, transform=transform_identity, **params) -> float:
    if u.shape != v.shape:
        raise ValueError(f"image shapes differ: {u.shape} vs {v.shape}")
    return float(np.linalg.norm(transform(u, **params).values - transform(v, **params).values))


def blur_matrices(n: int, sigmas: np.ndarray) -> np.ndarray:
    """Stack of ``(n, n)`` replicate-border Gaussian blur matrices, one per sigma.

    Row ``i`` of each matrix holds the truncated (4 sigma), unit-sum kernel
    centred on ``i``; taps falling outside ``[0, n)`` are folded onto the
    border sample.  Matches :func:`imagegrid.blur_matrix`.
    """
    sigmas = np.asarray(sigmas, dtype=float).ravel()
    radius = np.ceil(4.0 * sigmas).astype(int)
    rmax = int(radius.max())
    t = np.arange(-rmax, rmax + 1, dtype=float)
    g = np.exp(-0.5 * (t[None, :] / sigmas[:, None]) ** 2)
    g[np.abs(t)[None, :] > radius[:, None]] = 0.0
    g /= g.sum(axis=1, keepdims=True)
    cdf = np.cumsum(g, axis=1)

    i = np.arange(n)
    d = i[None, :] - i[:, None]  # column minus row = tap offset
    inside = np.abs(d) <= rmax
    m = np.where(inside[None], g[:, np.clip(d, -rmax, rmax) + rmax], 0.0)
    # taps at offsets <= -i land on column 0; offsets >= n-1-i land on column n-1
    lo_idx = np.clip(-i + rmax, -1, 2 * rmax)
    left = np.where(lo_idx[None, :] >= 0, cdf[:, np.clip(lo_idx, 0, 2 * rmax)], 0.0)
    hi_idx = np.clip(n - 2 - i + rmax, -1, 2 * rmax)
    right = 1.0 - np.where(hi_idx[None, :] >= 0, cdf[:, np.clip(hi_idx, 0, 2 * rmax)], 0.0)
    m[:, :, 0] = left
    m[:, :, n - 1] = np.maximum(right, 0.0)
    if n == 1:
        m[:, 0, 0] = 1.0
    return np.ascontiguousarray(m)


SIGMA_STEP = 0.01
FLUSH_BELOW = 1e-10
FLUSH_TAPS_BELOW = 1e-10


def quantize_sigma(sigma):
    """Snap blur scales to the lattice the objective evaluates them on."""
    return np.round(np.asarray(sigma, dtype=float) / SIGMA_STEP) * SIGMA_STEP


@functools.lru_cache(maxsize=8)
def _blur_table(n: int, lo: int, hi: int, dtype: str) -> tuple[np.ndarray, np.ndarray]:
    """Blur matrices and their transposes for lattice levels ``lo..hi``."""
    k = blur_matrices(n, np.arange(lo, hi + 1) * SIGMA_STEP)
    if dtype == "float32":
        k[k < FLUSH_TAPS_BELOW] = 0.0  # rounding residue of the border folds
    k = k.astype(dtype)
    return k, np.ascontiguousarray(k.transpose(0, 2, 1))


def _blur_stack(stack: np.ndarray, levels: np.ndarray, level_range: tuple[int, int], dtype: str, flushed: bool = False) -> np.ndarray:
    """Blur every image of ``stack`` at its own lattice level.

    ``flushed`` marks a float32 stack already passed through the subnormal flush.
    """
    levels = np.asarray(levels, dtype=int)
    lo, hi = level_range
    lo, hi = min(lo, int(levels.min())), max(hi, int(levels.max()))
    _, h, w = stack.shape
    ky = _blur_table(h, lo, hi, dtype)[0][levels - lo]
    kxt = _blur_table(w, lo, hi, dtype)[1][levels - lo]
    if dtype == "float32" and not flushed:
        # single precision slows to a crawl on subnormals; drop negligible values
        stack = to_float32_flushed(np.ascontiguousarray(stack), FLUSH_BELOW)
    return np.matmul(ky, np.matmul(stack, kxt))


class Objective:
    """Batched fit objective for one measured image.

    Calling with an ``(n, 11)`` array returns ``n`` objective values.  Rows
    violating the triangle constraints score ``penalty`` plus their
    unpenalized value.  The blur scale is evaluated on a ``SIGMA_STEP``
    lattice so the measured image's transform can be cached per level.
    """

    def __init__(self, img: Image, cfg: FitConfig = FitConfig()):
        self.img = img
        self.cfg = cfg
        self.u = np.ascontiguousarray(img.values, dtype=float)
        self.h, self.w = img.shape
        lo, hi = cfg.sigma_bounds
        self._levels = (max(1, int(np.floor(lo / SIGMA_STEP))), int(np.ceil(hi / SIGMA_STEP)))
        n_levels = self._levels[1] - self._levels[0] + 1
        self._target = np.empty((n_levels, self.h, self.w))
        self._have = np.zeros(n_levels, dtype=bool)

    def _target_index(self, levels: np.ndarray) -> np.ndarray:
        """Rows of the |grad(blur(U))| table for ``levels``, filling it on demand."""
        lo, hi = self._levels
        if levels.min() < lo or levels.max() > hi:
            raise InvalidParameterError(f"blur scale outside the configured bounds {self.cfg.sigma_bounds}")
        idx = levels - lo
        missing = np.unique(idx[~self._have[idx]])
        if missing.size:
            stack = np.broadcast_to(self.u, (missing.size, self.h, self.w))
            blurred = _blur_stack(stack, missing + lo, self._levels, self.cfg.blur_dtype)
            self._target[missing] = grad_mag_stack(blurred)
            self._have[missing] = True
        return idx

    def terms(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Return (gradient-space distance, identity-space distance) per row."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        n = len(x)
        single = self.cfg.blur_dtype == "float32"
        if single and self.cfg.blend_weight > 0.0:
            synth, s_id = render_distance_f32(np.ascontiguousarray(x[:, :10]), self.u, FLUSH_BELOW)
        else:
            synth = render_batch(x[:, :10], self.h, self.w)
            s_id = row_distances(synth, self.u)
        if self.cfg.blend_weight == 0.0:
            return np.zeros(n), s_id
        levels = np.rint(x[:, 10] / SIGMA_STEP).astype(np.int64)
        idx = self._target_index(levels)
        blurred = _blur_stack(synth, levels, self._levels, self.cfg.blur_dtype, flushed=single)
        return grad_mag_distance(blurred, self._target, idx), s_id

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        lam = self.cfg.blend_weight
        s_grad, s_id = self.terms(x)
        val = lam * s_grad + (1.0 - lam) * s_id
        feasible = feasible_batch(x[:, :10], self.h, self.w)
        return np.where(feasible, val, val + self.cfg.penalty)


def objective(x, img: Image, cfg: FitConfig = FitConfig()) -> float:
    return float(Objective(img, cfg)(np.asarray(x, dtype=float)[None, :])[0])


def unpack(x) -> tuple[TriangleParams, float]:
    x = np.asarray(x, dtype=float)
    return TriangleParams.from_vector(x[:10]), float(x[10])


def pack(tp: TriangleParams, sigma: float) -> np.ndarray:
    return np.append(tp.to_vector(), sigma)


def fit_synthetic(img: Image, cfg: FitConfig = FitConfig()) -> FitResult:
    obj = Objective(img, cfg)
    res = differential_evolution(obj, cfg.bounds(), cfg.de, vectorized=True)
    tp, sigma = unpack(res.x_best)
    result = FitResult(tp, float(quantize_sigma(sigma)), res.f_best, res.evals)
    if res.f_best >= cfg.penalty or check_constraints(tp, *img.shape):
        raise FitFailedError(result)
    return result


def vectorize_synth(fr: FitResult) -> FeatureVector:
    p = fr.params
    values = [
        fr.sigma_star,
        p.h.b, p.h.m, p.h.r,
        p.v.b, p.v.m, p.v.r,
        p.d.b, p.d.m, p.d.r, p.theta,
        fr.fitness,
    ]
    return FeatureVector(SYNTH_FEATURES, np.array(values))


def hybrid_vector(sv: FeatureVector, img: Image, bank: Filterbank | None = None) -> FeatureVector:
    if sv.names != SYNTH_FEATURES:
        raise ValueError("hybrid vector needs the 12-feature synthetic layout")
    if bank is None:
        bank = make_default_filterbank()
    return sv.extend([HYBRID_FILTER], [response_norm(img, bank[HYBRID_FILTER])])
