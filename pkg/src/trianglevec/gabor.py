"""Complex Gabor kernels, filterbanks and the Gabor feature vector."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .features import FeatureVector
from .imagegrid import Image, InvalidParameterError, InvalidSizeError

FILTERBANK_FORMAT_VERSION = 1

# Edge-like kernels used to localize the wall boundaries: narrow across the
# edge, long along it.
EDGE_SIGMA_ALONG = 8.0
EDGE_SIGMA_ACROSS = 1.0
EDGE_WAVELENGTH = 1.0
EDGE_FEATURES = ("wall_x", "wall_y", "wall_strength_x", "wall_strength_y")
EDGE_ZERO_TOL = 1e-9


def _wrap_orientation(deg: float) -> float:
    """Map an angle in degrees into (-180, 180]."""
    d = math.fmod(float(deg), 360.0)
    if d <= -180.0:
        d += 360.0
    elif d > 180.0:
        d -= 360.0
    return d


@dataclass(frozen=True)
class GaborParams:
    sigma_x: float
    sigma_y: float
    wavelength: float
    orientation: float  # degrees

    def __post_init__(self):
        if not (self.sigma_x > 0 and self.sigma_y > 0):
            raise InvalidParameterError("Gabor scales must be positive")
        if not self.wavelength > 0:
            raise InvalidParameterError("Gabor wavelength must be positive")
        object.__setattr__(self, "orientation", _wrap_orientation(self.orientation))

    @property
    def name(self) -> str:
        return f"G{_fmt(self.orientation)}_{_fmt(self.sigma_x)}_{_fmt(self.sigma_y)}"


def _fmt(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else repr(float(v))


def default_size(p: GaborParams) -> int:
    """Smallest odd integer >= 8 * sigma + 1 for the wider scale."""
    n = int(math.ceil(8.0 * max(p.sigma_x, p.sigma_y) + 1.0))
    return n if n % 2 else n + 1


@dataclass(frozen=True, eq=False)
class GaborKernel:
    params: GaborParams
    size: int
    values: np.ndarray

    @property
    def name(self) -> str:
        return self.params.name


def gabor_kernel(p: GaborParams, size: int | None = None) -> GaborKernel:
    """Sample the complex Gabor function on an integer grid centred at 0.

    ``x`` runs along columns and ``y`` along rows.  No discrete
    renormalization is applied.
    """
    if size is None:
        size = default_size(p)
    if size < 3 or size % 2 == 0:
        raise InvalidSizeError(f"kernel size must be odd and >= 3, got {size}")
    r = size // 2
    y, x = np.mgrid[-r : r + 1, -r : r + 1].astype(float)
    theta = math.radians(p.orientation)
    envelope = np.exp(-0.5 * ((x / p.sigma_x) ** 2 + (y / p.sigma_y) ** 2))
    envelope /= math.sqrt(2.0 * math.pi) * p.sigma_x * p.sigma_y
    phase = p.wavelength * (x * math.sin(theta) + y * math.cos(theta))
    vals = envelope * np.exp(1j * phase)
    vals.setflags(write=False)
    return GaborKernel(p, size, vals)


@dataclass(frozen=True)
class Filterbank:
    kernels: tuple[GaborKernel, ...]
    names: tuple[str, ...] = field(default=())

    def __post_init__(self):
        kernels = tuple(self.kernels)
        names = tuple(self.names) if self.names else tuple(k.name for k in kernels)
        if len(names) != len(kernels):
            raise ValueError("filterbank names and kernels are misaligned")
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate filter names in {names}")
        object.__setattr__(self, "kernels", kernels)
        object.__setattr__(self, "names", names)

    def __len__(self) -> int:
        return len(self.kernels)

    def __getitem__(self, name: str) -> GaborKernel:
        return self.kernels[self.names.index(name)]

    def subset(self, names) -> "Filterbank":
        keep = [i for i, n in enumerate(self.names) if n in set(names)]
        return Filterbank(tuple(self.kernels[i] for i in keep), tuple(self.names[i] for i in keep))


DEFAULT_SCALES = (4.0, 8.0, 16.0)
DEFAULT_ORIENTATIONS = (45.0, -45.0)
HYBRID_FILTER = "G45_16_16"


def make_filterbank(scales=DEFAULT_SCALES, orientations=DEFAULT_ORIENTATIONS, wavelength=1.0) -> Filterbank:
    kernels = [
        gabor_kernel(GaborParams(s, s, wavelength, o)) for s in scales for o in orientations
    ]
    return Filterbank(tuple(kernels))


def make_default_filterbank() -> Filterbank:
    return make_filterbank()


# ---------------------------------------------------------------------------
# convolution


def _next_fast(n: int) -> int:
    from scipy.fft import next_fast_len

    return next_fast_len(n)


def _fft_full(u: np.ndarray, k: np.ndarray) -> np.ndarray:
    sh = (u.shape[0] + k.shape[0] - 1, u.shape[1] + k.shape[1] - 1)
    fs = (_next_fast(sh[0]), _next_fast(sh[1]))
    out = np.fft.ifft2(np.fft.fft2(u, fs) * np.fft.fft2(k, fs))
    return out[: sh[0], : sh[1]]


def convolve(img: Image, k: GaborKernel, mode: str = "zero", method: str = "fft") -> np.ndarray:
    """'Same'-size convolution of an image with a kernel; returns a complex array.

    ``mode`` selects the border: ``"zero"`` pads with zeros, ``"replicate"``
    repeats the border pixels.  ``method`` is ``"fft"`` or ``"direct"``.
    """
    u = img.values
    kv = k.values
    r = kv.shape[0] // 2
    h, w = u.shape
    if mode == "replicate":
        u = np.pad(u, r, mode="edge")
        off = 2 * r
    elif mode == "zero":
        off = r
    else:
        raise ValueError(f"unknown border mode {mode!r}")
    if method == "fft":
        full = _fft_full(u, kv)
    elif method == "direct":
        full = _direct_full(u, kv)
    else:
        raise ValueError(f"unknown convolution method {method!r}")
    return full[off : off + h, off : off + w]


def _direct_full(u: np.ndarray, k: np.ndarray) -> np.ndarray:
    kh, kw = k.shape
    h, w = u.shape
    out = np.zeros((h + kh - 1, w + kw - 1), dtype=complex)
    for i in range(kh):
        for j in range(kw):
            c = k[i, j]
            if c != 0:
                out[i : i + h, j : j + w] += c * u
    return out


def response_norm(img: Image, k: GaborKernel) -> float:
    """L2 norm of the complex response magnitude over all pixels."""
    return float(np.linalg.norm(np.abs(convolve(img, k))))


def edge_kernels() -> tuple[GaborKernel, GaborKernel]:
    """(vertical-edge, horizontal-edge) kernels; the first varies along x."""
    vert = gabor_kernel(GaborParams(EDGE_SIGMA_ACROSS, EDGE_SIGMA_ALONG, EDGE_WAVELENGTH, 90.0))
    horiz = gabor_kernel(GaborParams(EDGE_SIGMA_ALONG, EDGE_SIGMA_ACROSS, EDGE_WAVELENGTH, 0.0))
    return vert, horiz


def _locate(profile: np.ndarray) -> tuple[float, float]:
    strength = float(profile.max())
    if strength <= EDGE_ZERO_TOL:
        return 0.0, 0.0
    return float(np.argmax(profile)), strength


def edge_locations(img: Image) -> tuple[float, float, float, float]:
    """Locate the strongest vertical and horizontal wall boundaries.

    Uses the odd (imaginary) part of the edge-like kernel responses, which is
    zero on flat regions, with replicate borders so the image frame itself
    does not register as an edge.  Returns ``(wall_x, wall_y, strength_x,
    strength_y)``.
    """
    vert, horiz = edge_kernels()
    rv = np.abs(convolve(img, vert, mode="replicate").imag)
    rh = np.abs(convolve(img, horiz, mode="replicate").imag)
    wx, sx = _locate(rv.sum(axis=0))
    wy, sy = _locate(rh.sum(axis=1))
    return wx, wy, sx, sy


def vectorize_gabor(img: Image, bank: Filterbank | None = None, edges: bool = True) -> FeatureVector:
    if bank is None:
        bank = make_default_filterbank()
    names = list(bank.names)
    values = [response_norm(img, k) for k in bank.kernels]
    if edges:
        names += EDGE_FEATURES
        values += edge_locations(img)
    return FeatureVector(tuple(names), np.array(values, dtype=float))


# ---------------------------------------------------------------------------
# serialization


FILTERBANK_HEADER = "# trianglevec-filterbank"
FILTERBANK_COLUMNS = ("name", "sigma_x", "sigma_y", "wavelength", "orientation", "size")


def save_filterbank(bank: Filterbank, path: str | Path) -> None:
    """One tab-separated line per filter after a versioned header."""
    lines = [f"{FILTERBANK_HEADER} v{FILTERBANK_FORMAT_VERSION}", "\t".join(FILTERBANK_COLUMNS)]
    for n, k in zip(bank.names, bank.kernels):
        p = k.params
        lines.append("\t".join([n, repr(p.sigma_x), repr(p.sigma_y), repr(p.wavelength), repr(p.orientation), str(k.size)]))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_filterbank(path: str | Path) -> Filterbank:
    lines = [ln for ln in Path(path).read_text(encoding="utf-8").splitlines() if ln.strip()]
    if not lines or lines[0] != f"{FILTERBANK_HEADER} v{FILTERBANK_FORMAT_VERSION}":
        raise ValueError(f"{path}: unsupported filterbank file")
    if tuple(lines[1].split("\t")) != FILTERBANK_COLUMNS:
        raise ValueError(f"{path}: unexpected filterbank columns")
    kernels, names = [], []
    for ln in lines[2:]:
        name, sx, sy, wl, ori, size = ln.split("\t")
        kernels.append(gabor_kernel(GaborParams(float(sx), float(sy), float(wl), float(ori)), int(size)))
        names.append(name)
    return Filterbank(tuple(kernels), tuple(names))
