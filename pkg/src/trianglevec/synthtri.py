"""Parametric synthetic triangle plots.

A synthetic plot is the pixel-wise maximum of three sigmoids: a horizontal
wall (function of ``x``), a vertical wall (function of ``y``) and a diagonal
region (function of the projection ``x sin(theta) + y cos(theta)``).  Walls
rise toward the high-``x`` / high-``y`` edges, which corresponds to negative
rates.

The module also provides a seeded, labeled corpus generator used for
desk-scale validation of the whole pipeline.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ._kernels import render_stack
from .imagegrid import BAD, GOOD, Image, InvalidParameterError, LabeledImage, normalize_minmax

R_MAX = 10.0
EXP_CLAMP = 500.0
MIN_TRIANGLE_FRACTION = 0.02
PARAM_NAMES = ("m_h", "r_h", "b_h", "m_v", "r_v", "b_v", "m_d", "r_d", "b_d", "theta")


@dataclass(frozen=True)
class SigmoidParams:
    m: float
    r: float
    b: float


@dataclass(frozen=True)
class TriangleParams:
    h: SigmoidParams
    v: SigmoidParams
    d: SigmoidParams
    theta: float

    def to_vector(self) -> np.ndarray:
        h, v, d = self.h, self.v, self.d
        return np.array([h.m, h.r, h.b, v.m, v.r, v.b, d.m, d.r, d.b, self.theta], dtype=float)

    @classmethod
    def from_vector(cls, x) -> "TriangleParams":
        x = [float(t) for t in x[:10]]
        return cls(SigmoidParams(*x[0:3]), SigmoidParams(*x[3:6]), SigmoidParams(*x[6:9]), x[9])

    def swapped(self) -> "TriangleParams":
        """Exchange the two walls (the image-transpose partner at theta = 45 deg)."""
        return TriangleParams(self.v, self.h, self.d, self.theta)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TriangleParams":
        return cls(SigmoidParams(**d["h"]), SigmoidParams(**d["v"]), SigmoidParams(**d["d"]), d["theta"])


def sigmoid(x, p: SigmoidParams):
    z = np.clip(p.r * (np.asarray(x, dtype=float) - p.b), -EXP_CLAMP, EXP_CLAMP)
    out = p.m / (1.0 + np.exp(z))
    return float(out) if out.ndim == 0 else out


def _sig(m, r, b, x):
    # broadcasting helper over (n, 1) parameter columns
    return m / (1.0 + np.exp(np.clip(r * (x - b), -EXP_CLAMP, EXP_CLAMP)))


def _sig_inplace(z: np.ndarray, m: np.ndarray) -> np.ndarray:
    """``m / (1 + exp(z))`` with the exponent clamped, computed in place."""
    np.clip(z, -EXP_CLAMP, EXP_CLAMP, out=z)
    np.exp(z, out=z)
    z += 1.0
    np.divide(m, z, out=z)
    return z


def component_batch(x: np.ndarray, h: int, w: int):
    """Per-candidate wall and diagonal layers for a batch of parameter rows.

    Returns ``(s_h, s_v, s_d)`` shaped ``(n, 1, w)``, ``(n, h, 1)`` and
    ``(n, h, w)``.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    cols = np.arange(w, dtype=float)
    rows = np.arange(h, dtype=float)
    p = x[:, :, None]
    s_h = _sig(p[:, 0], p[:, 1], p[:, 2], cols[None, :])[:, None, :]
    s_v = _sig(p[:, 3], p[:, 4], p[:, 5], rows[None, :])[:, :, None]
    # r (x sin + y cos - b) split into a column part and a row part
    th, r = x[:, 9], x[:, 7]
    zx = (r * np.sin(th))[:, None] * cols[None, :] - (r * x[:, 8])[:, None]
    zy = (r * np.cos(th))[:, None] * rows[None, :]
    z = zx[:, None, :] + zy[:, :, None]
    s_d = _sig_inplace(z, x[:, 6, None, None])
    return s_h, s_v, s_d


def render_batch(x: np.ndarray, h: int, w: int) -> np.ndarray:
    """Render ``(n, 10+)`` parameter rows to an ``(n, h, w)`` stack."""
    x = np.ascontiguousarray(np.atleast_2d(np.asarray(x, dtype=float))[:, :10])
    return render_stack(x, h, w)


@dataclass(frozen=True)
class Violation:
    code: str
    param: str
    message: str

    def __str__(self) -> str:
        return f"{self.code}: {self.message}"


class ConstraintError(InvalidParameterError):
    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(str(v) for v in self.violations))


def check_constraints(tp: TriangleParams, h: int = 64, w: int = 64, r_max: float = R_MAX) -> list[Violation]:
    out = []
    if not all(math.isfinite(v) for v in tp.to_vector()):
        out.append(Violation("non-finite", "params", "all parameters must be finite"))
        return out
    if not 0.0 <= tp.theta <= math.pi / 2:
        out.append(Violation("theta-out-of-range", "theta", f"theta={tp.theta:g} not in [0, pi/2]"))
    for name, sp in (("h", tp.h), ("v", tp.v), ("d", tp.d)):
        if sp.m < 0:
            out.append(Violation("negative-magnitude", f"{name}.m", f"{name}.m={sp.m:g} < 0"))
        if abs(sp.r) > r_max:
            out.append(Violation("rate-bound", f"{name}.r", f"|{name}.r|={abs(sp.r):g} > {r_max:g}"))
    for name, sp, extent in (("h", tp.h, w), ("v", tp.v, h)):
        if sp.m > 0 and not 0.0 <= sp.b < extent:
            out.append(Violation("wall-outside-image", f"{name}.b", f"{name}.b={sp.b:g} not in [0, {extent})"))
    return out


def feasible_batch(x: np.ndarray, h: int = 64, w: int = 64, r_max: float = R_MAX) -> np.ndarray:
    """Vectorized counterpart of :func:`check_constraints` (True = no violations)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))[:, :10]
    ok = np.all(np.isfinite(x), axis=1)
    th = x[:, 9]
    ok &= (th >= 0.0) & (th <= math.pi / 2)
    ok &= np.all(x[:, [0, 3, 6]] >= 0, axis=1)
    ok &= np.all(np.abs(x[:, [1, 4, 7]]) <= r_max, axis=1)
    for mi, bi, extent in ((0, 2, w), (3, 5, h)):
        present = x[:, mi] > 0
        ok &= ~present | ((x[:, bi] >= 0.0) & (x[:, bi] < extent))
    return ok


def render_triangle(tp: TriangleParams, h: int = 64, w: int = 64, check: bool = True, image_id: str = "") -> Image:
    if h < 2 or w < 2:
        raise InvalidParameterError(f"render size must be at least 2x2, got {h}x{w}")
    if check:
        bad = check_constraints(tp, h, w)
        if bad:
            raise ConstraintError(bad)
    return Image(render_batch(tp.to_vector(), h, w)[0], id=image_id)


def dominance_mask(tp: TriangleParams, h: int = 64, w: int = 64) -> np.ndarray:
    """Pixels where the diagonal strictly beats both walls and exceeds half its height."""
    s_h, s_v, s_d = component_batch(tp.to_vector(), h, w)
    s_h, s_v, s_d = s_h[0], s_v[0], s_d[0]
    return (s_d > s_h) & (s_d > s_v) & (s_d > 0.5 * tp.d.m)


def has_triangle_region(tp: TriangleParams, h: int = 64, w: int = 64, min_fraction: float = MIN_TRIANGLE_FRACTION) -> bool:
    if tp.d.m <= 0:
        return False
    return bool(dominance_mask(tp, h, w).mean() >= min_fraction)


# ---------------------------------------------------------------------------
# corpus generation

AMBIGUOUS_MODES = ("dropout", "vertical-fringe", "oversized-triangle")
_MASK64 = (1 << 64) - 1


def splitmix64(x: int) -> int:
    """SplitMix64 finalizer; used to derive independent per-sample seeds."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def sample_seed(seed: int, index: int) -> int:
    return splitmix64((seed & _MASK64) ^ index)


@dataclass(frozen=True)
class CorpusSpec:
    n: int = 500
    good_fraction: float = 0.3
    noise_sigma: float = 0.05
    ridge_amplitude: float = 0.3
    ridge_period: float = 6.0
    ambiguous_modes: frozenset = field(default_factory=frozenset)
    ambiguous_fraction: float = 0.25
    seed: int = 0
    size: int = 64

    def __post_init__(self):
        object.__setattr__(self, "ambiguous_modes", frozenset(self.ambiguous_modes))
        if self.n <= 0:
            raise InvalidParameterError("corpus size must be positive")
        if not 0.0 <= self.good_fraction <= 1.0 or not 0.0 <= self.ambiguous_fraction <= 1.0:
            raise InvalidParameterError("fractions must lie in [0, 1]")
        if self.noise_sigma < 0 or self.ridge_amplitude < 0 or self.ridge_period <= 0:
            raise InvalidParameterError("noise, ridge amplitude and ridge period must be non-negative/positive")
        unknown = self.ambiguous_modes - set(AMBIGUOUS_MODES)
        if unknown:
            raise InvalidParameterError(f"unknown ambiguous modes {sorted(unknown)}")

    @property
    def n_good(self) -> int:
        return int(math.floor(self.n * self.good_fraction + 0.5))


@dataclass(frozen=True)
class CorpusSample:
    image: Image
    label: str
    params: TriangleParams
    mode: str  # "good", "walls", or an ambiguous mode name

    def labeled(self) -> LabeledImage:
        return LabeledImage(self.image, self.label)


def _wall(rng, size) -> SigmoidParams:
    return SigmoidParams(
        m=float(rng.uniform(0.6, 1.0)),
        r=float(rng.uniform(-3.0, -0.8)),
        b=float(rng.uniform(size * 0.72, size * 0.9)),
    )


def sample_good_params(rng: np.random.Generator, size: int = 64, max_tries: int = 100) -> TriangleParams:
    """Walls near the high edges plus a dominant diagonal region between them."""
    for _ in range(max_tries):
        h, v = _wall(rng, size), _wall(rng, size)
        theta = math.radians(float(rng.uniform(35.0, 55.0)))
        corner = h.b * math.sin(theta) + v.b * math.cos(theta)
        extent = float(rng.uniform(12.0, 28.0))
        b_d = float(np.clip(corner - extent, 0.3 * size, size - 2.0))
        d = SigmoidParams(
            m=float(rng.uniform(0.35, 0.85)) * min(h.m, v.m),
            r=float(rng.uniform(-3.0, -0.8)),
            b=b_d,
        )
        tp = TriangleParams(h, v, d, theta)
        if has_triangle_region(tp, size, size):
            return tp
    raise RuntimeError("could not sample a triangle configuration")


def sample_bad_params(rng: np.random.Generator, size: int = 64) -> TriangleParams:
    h, v = _wall(rng, size), _wall(rng, size)
    if rng.uniform() < 0.2:
        if rng.uniform() < 0.5:
            h = SigmoidParams(0.0, h.r, h.b)
        else:
            v = SigmoidParams(0.0, v.r, v.b)
    theta = math.radians(float(rng.uniform(35.0, 55.0)))
    d = SigmoidParams(0.0, float(rng.uniform(-3.0, -0.8)), float(rng.uniform(0.3 * size, size - 2.0)))
    return TriangleParams(h, v, d, theta)


def ridge_texture(h: int, w: int, theta: float, period: float, amplitude: float, phase: float = 0.0) -> np.ndarray:
    y, x = np.mgrid[0:h, 0:w].astype(float)
    return amplitude * np.sin(2.0 * math.pi * (x * math.sin(theta) + y * math.cos(theta)) / period + phase)


def _make_sample(spec: CorpusSpec, index: int, good: bool) -> CorpusSample:
    rng = np.random.default_rng(sample_seed(spec.seed, index))
    size = spec.size
    mode = "good" if good else "walls"
    if not good and spec.ambiguous_modes and rng.uniform() < spec.ambiguous_fraction:
        mode = str(rng.choice(sorted(spec.ambiguous_modes)))
    if mode == "walls":
        tp = sample_bad_params(rng, size)
    else:
        tp = sample_good_params(rng, size)
        if mode == "oversized-triangle":
            tp = TriangleParams(tp.h, tp.v, SigmoidParams(tp.d.m, tp.d.r, float(rng.uniform(2.0, 10.0))), tp.theta)
    values = render_batch(tp.to_vector(), size, size)[0]
    if mode != "walls":
        mask = dominance_mask(tp, size, size)
        ridge_theta = math.pi / 2 if mode == "vertical-fringe" else tp.theta
        phase = float(rng.uniform(0.0, 2.0 * math.pi))
        values = values + mask * ridge_texture(size, size, ridge_theta, spec.ridge_period, spec.ridge_amplitude, phase)
        if mode == "dropout":
            pts = np.argwhere(mask)
            cy, cx = pts[rng.integers(len(pts))]
            radius = float(rng.uniform(5.0, 9.0))
            y, x = np.mgrid[0:size, 0:size]
            values = np.where(mask & ((y - cy) ** 2 + (x - cx) ** 2 <= radius**2), 0.0, values)
    if spec.noise_sigma > 0:
        values = values + rng.normal(0.0, spec.noise_sigma, values.shape)
    label = GOOD if (mode == "good" and has_triangle_region(tp, size, size)) else BAD
    img = normalize_minmax(Image(values, id=f"s{index:05d}"))
    return CorpusSample(img, label, tp, mode)


def generate_samples(spec: CorpusSpec) -> list[CorpusSample]:
    """Deterministic labeled corpus with ground-truth parameters."""
    order = np.random.default_rng(splitmix64(spec.seed & _MASK64)).permutation(spec.n)
    is_good = np.zeros(spec.n, dtype=bool)
    is_good[order[: spec.n_good]] = True
    return [_make_sample(spec, i, bool(is_good[i])) for i in range(spec.n)]


def generate_corpus(spec: CorpusSpec) -> list[LabeledImage]:
    return [s.labeled() for s in generate_samples(spec)]


def write_params_sidecar(samples, path: str | Path) -> None:
    """One JSON object per line: id, label, mode and ground-truth parameters."""
    with open(path, "w", encoding="utf-8") as fh:
        for s in samples:
            rec = {"id": s.image.id, "label": s.label, "mode": s.mode, "params": s.params.to_dict()}
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def read_params_sidecar(path: str | Path) -> dict[str, TriangleParams]:
    out = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            rec = json.loads(line)
            out[rec["id"]] = TriangleParams.from_dict(rec["params"])
    return out
