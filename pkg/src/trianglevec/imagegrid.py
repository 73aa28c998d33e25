"""Image container, file formats, resizing and the elementary filters.

Every vectorizer in the package consumes :class:`Image` values.  Pixel values
are stored as a read-only ``(height, width)`` float64 array; row index is ``y``
(increasing downward) and column index is ``x`` (increasing rightward).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

GOOD = "good"
BAD = "bad"
CLASSES = (GOOD, BAD)


class ImageError(ValueError):
    """Base class for image construction and parsing failures."""


class ParseError(ImageError):
    pass


class RaggedRowsError(ImageError):
    pass


class NonFiniteError(ImageError):
    def __init__(self, row: int, col: int, text: str = ""):
        self.row = row
        self.col = col
        super().__init__(f"non-finite entry at ({row},{col}){': ' + text if text else ''}")


class InvalidSizeError(ImageError):
    pass


class InvalidParameterError(ValueError):
    pass


def _check_axis(axis, n, name):
    if axis is None:
        return None
    arr = np.asarray(axis, dtype=float)
    if arr.ndim != 1 or arr.size != n:
        raise ImageError(f"{name} has length {arr.size}, expected {n}")
    if not np.all(np.isfinite(arr)):
        raise ImageError(f"{name} contains non-finite values")
    d = np.diff(arr)
    if arr.size > 1 and not (np.all(d > 0) or np.all(d < 0)):
        raise ImageError(f"{name} is not strictly monotone")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Image:
    """A real-valued measurement grid with optional voltage axes."""

    values: np.ndarray
    x_axis: np.ndarray | None = None
    y_axis: np.ndarray | None = None
    id: str = ""

    def __post_init__(self):
        vals = np.array(self.values, dtype=np.float64)
        if vals.ndim != 2 or vals.size == 0:
            raise ImageError(f"image values must be a nonempty 2-D grid, got shape {vals.shape}")
        bad = np.argwhere(~np.isfinite(vals))
        if bad.size:
            r, c = bad[0]
            raise NonFiniteError(int(r), int(c))
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "x_axis", _check_axis(self.x_axis, vals.shape[1], "x_axis"))
        object.__setattr__(self, "y_axis", _check_axis(self.y_axis, vals.shape[0], "y_axis"))

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def with_values(self, values: np.ndarray, keep_axes: bool = True) -> "Image":
        """Return a new image sharing this one's id (and axes when shapes agree)."""
        values = np.asarray(values, dtype=np.float64)
        same = keep_axes and values.shape == self.values.shape
        return Image(
            values,
            x_axis=self.x_axis if same else None,
            y_axis=self.y_axis if same else None,
            id=self.id,
        )


@dataclass(frozen=True)
class LabeledImage:
    image: Image
    label: str

    def __post_init__(self):
        if self.label not in CLASSES:
            raise ImageError(f"label must be one of {CLASSES}, got {self.label!r}")


# ---------------------------------------------------------------------------
# file formats


def _parse_float(text: str, row: int, col: int) -> float:
    try:
        v = float(text)
    except ValueError as exc:
        raise ParseError(f"cannot parse {text!r} at ({row},{col})") from exc
    if not math.isfinite(v):
        raise NonFiniteError(row, col, text.strip())
    return v


def _parse_axis_line(line: str, tag: str) -> np.ndarray:
    body = line.split(":", 1)[1]
    try:
        return np.array([float(t) for t in body.split(",") if t.strip()], dtype=float)
    except ValueError as exc:
        raise ParseError(f"bad {tag} axis header: {line.strip()!r}") from exc


def read_csv_grid(path: str | Path, image_id: str | None = None) -> Image:
    path = Path(path)
    x_axis = y_axis = None
    rows: list[list[float]] = []
    with open(path, encoding="utf-8") as fh:
        for raw in fh:
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                tag = line[1:].strip().lower()
                if tag.startswith("x:"):
                    x_axis = _parse_axis_line(line, "x")
                elif tag.startswith("y:"):
                    y_axis = _parse_axis_line(line, "y")
                continue
            r = len(rows)
            cells = line.split(",")
            if rows and len(cells) != len(rows[0]):
                raise RaggedRowsError(f"row {r} has {len(cells)} columns, expected {len(rows[0])}")
            rows.append([_parse_float(t, r, c) for c, t in enumerate(cells)])
    if not rows:
        raise ParseError(f"{path}: no data rows")
    return Image(np.array(rows), x_axis=x_axis, y_axis=y_axis, id=image_id or path.stem)


def write_csv_grid(img: Image, path: str | Path) -> None:
    lines = []
    if img.x_axis is not None:
        lines.append("# x: " + ",".join(repr(float(v)) for v in img.x_axis))
    if img.y_axis is not None:
        lines.append("# y: " + ",".join(repr(float(v)) for v in img.y_axis))
    for row in img.values:
        lines.append(",".join(repr(float(v)) for v in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _pgm_tokens(data: bytes, count: int):
    """Read ``count`` whitespace-separated header tokens, skipping comments."""
    tokens, pos = [], 0
    while len(tokens) < count:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ParseError("truncated PGM header")
        tokens.append(data[start:pos])
    # exactly one whitespace byte separates header from raster
    return tokens, pos + 1


def read_pgm16(path: str | Path, image_id: str | None = None) -> Image:
    path = Path(path)
    data = path.read_bytes()
    tokens, offset = _pgm_tokens(data, 4)
    if tokens[0] != b"P5":
        raise ParseError(f"{path}: not a binary PGM (magic {tokens[0]!r})")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise ParseError(f"{path}: malformed PGM header") from exc
    if maxval != 65535:
        raise ParseError(f"{path}: expected maxval 65535, got {maxval}")
    raster = data[offset : offset + 2 * width * height]
    if len(raster) != 2 * width * height:
        raise ParseError(f"{path}: raster truncated")
    vals = np.frombuffer(raster, dtype=">u2").reshape(height, width).astype(np.float64) / 65535.0
    return Image(vals, id=image_id or path.stem)


def write_pgm16(img: Image, path: str | Path) -> None:
    """Write values clipped to [0, 1] as 16-bit big-endian PGM."""
    q = np.rint(np.clip(img.values, 0.0, 1.0) * 65535.0).astype(">u2")
    header = f"P5\n{img.width} {img.height}\n65535\n".encode("ascii")
    Path(path).write_bytes(header + q.tobytes())


def load_image(path: str | Path, format: str | None = None, image_id: str | None = None) -> Image:
    """Load an image from ``csv-grid`` or ``pgm16``; format is guessed from the suffix if omitted."""
    path = Path(path)
    if format is None:
        format = "pgm16" if path.suffix.lower() == ".pgm" else "csv-grid"
    if format == "csv-grid":
        return read_csv_grid(path, image_id)
    if format == "pgm16":
        return read_pgm16(path, image_id)
    raise ValueError(f"unknown image format {format!r}")


def read_manifest(path: str | Path) -> list[tuple[str, Path, str]]:
    """Parse ``id<TAB>path<TAB>label`` records; relative paths resolve against the manifest."""
    path = Path(path)
    out = []
    for n, raw in enumerate(path.read_text(encoding="utf-8").splitlines()):
        if not raw.strip() or raw.startswith("#"):
            continue
        parts = raw.split("\t")
        if len(parts) != 3:
            raise ParseError(f"{path}:{n + 1}: expected 3 tab-separated fields")
        image_id, rel, label = parts
        if label not in CLASSES:
            raise ParseError(f"{path}:{n + 1}: bad label {label!r}")
        p = Path(rel)
        out.append((image_id, p if p.is_absolute() else path.parent / p, label))
    return out


def write_manifest(records, path: str | Path) -> None:
    lines = [f"{i}\t{p}\t{lab}" for i, p, lab in records]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# resampling


def _cubic(t: np.ndarray, a: float = -0.5) -> np.ndarray:
    t = np.abs(t)
    t2, t3 = t * t, t * t * t
    return np.where(
        t <= 1.0,
        (a + 2.0) * t3 - (a + 3.0) * t2 + 1.0,
        np.where(t < 2.0, a * t3 - 5.0 * a * t2 + 8.0 * a * t - 4.0 * a, 0.0),
    )


def _resample_matrix(n_in: int, n_out: int) -> np.ndarray:
    """Row-stochastic (n_out, n_in) Catmull-Rom resampling matrix.

    Pixel centres are aligned, taps outside the input clamp to the border
    sample, and the kernel is widened by the scale factor when shrinking.
    """
    scale = n_in / n_out
    support = max(scale, 1.0)
    centers = (np.arange(n_out) + 0.5) * scale - 0.5
    radius = int(math.ceil(2.0 * support)) + 1
    taps = np.floor(centers)[:, None] + np.arange(-radius + 1, radius + 1)[None, :]
    w = _cubic((taps - centers[:, None]) / support)
    w /= w.sum(axis=1, keepdims=True)
    idx = np.clip(taps.astype(int), 0, n_in - 1)
    m = np.zeros((n_out, n_in))
    rows = np.repeat(np.arange(n_out), taps.shape[1])
    np.add.at(m, (rows, idx.ravel()), w.ravel())
    return m


def resize_bicubic(img: Image, out_h: int, out_w: int) -> Image:
    if out_h < 2 or out_w < 2:
        raise InvalidSizeError(f"output size must be at least 2x2, got {out_h}x{out_w}")
    if img.height < 2 or img.width < 2:
        raise InvalidSizeError(f"input must be at least 2x2, got {img.height}x{img.width}")
    if (out_h, out_w) == img.shape:
        return img
    ry = _resample_matrix(img.height, out_h)
    rx = _resample_matrix(img.width, out_w)
    x_axis = rx @ img.x_axis if img.x_axis is not None else None
    y_axis = ry @ img.y_axis if img.y_axis is not None else None
    return Image(ry @ img.values @ rx.T, x_axis=x_axis, y_axis=y_axis, id=img.id)


def normalize_minmax(img: Image) -> Image:
    v = img.values
    lo, hi = v.min(), v.max()
    if hi <= lo:
        return img.with_values(np.zeros_like(v))
    if lo == 0.0 and hi == 1.0:
        return img
    return img.with_values((v - lo) / (hi - lo))


def prepare(img: Image, size: int = 64) -> Image:
    """Resize to ``size`` x ``size`` and min-max normalize."""
    return normalize_minmax(resize_bicubic(img, size, size))


# ---------------------------------------------------------------------------
# filters


def gaussian_kernel1d(sigma: float) -> np.ndarray:
    """Unit-sum sampled Gaussian truncated at 4 sigma."""
    if not sigma > 0:
        raise InvalidParameterError(f"sigma must be positive, got {sigma}")
    radius = int(math.ceil(4.0 * sigma))
    t = np.arange(-radius, radius + 1, dtype=float)
    k = np.exp(-0.5 * (t / sigma) ** 2)
    return k / k.sum()


def blur_matrix(n: int, sigma: float) -> np.ndarray:
    """(n, n) matrix applying the truncated Gaussian with replicate borders along one axis."""
    k = gaussian_kernel1d(sigma)
    radius = k.size // 2
    offsets = np.arange(n)[:, None] + np.arange(-radius, radius + 1)[None, :]
    idx = np.clip(offsets, 0, n - 1)
    m = np.zeros((n, n))
    rows = np.repeat(np.arange(n), k.size)
    np.add.at(m, (rows, idx.ravel()), np.tile(k, n))
    return m


def gaussian_blur(img: Image, sigma: float) -> Image:
    k = gaussian_kernel1d(sigma)
    r = k.size // 2
    v = np.pad(img.values, r, mode="edge")
    h, w = img.shape
    # separable pass along rows then columns
    tmp = np.zeros((v.shape[0], w))
    for i, kv in enumerate(k):
        tmp += kv * v[:, i : i + w]
    out = np.zeros((h, w))
    for i, kv in enumerate(k):
        out += kv * tmp[i : i + h, :]
    return img.with_values(out)


def gradient_magnitude(img: Image) -> Image:
    if img.height < 2 or img.width < 2:
        raise InvalidSizeError("gradient needs at least a 2x2 image")
    gy, gx = np.gradient(img.values)
    return img.with_values(np.hypot(gx, gy))
