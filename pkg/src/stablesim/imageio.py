"""Binary PPM images, coordinate lattices and the parity pixel split."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import BadMagicError, BadMaxvalError, TooSmallError, TruncatedError


@dataclass
class ImageGrid:
    """RGB image with channels in [0, 1]; ``pixels`` has shape (height, width, 3)."""

    pixels: np.ndarray

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=np.float64)
        if self.pixels.ndim != 3 or self.pixels.shape[2] != 3:
            raise ValueError(f"expected (height, width, 3) pixels, got {self.pixels.shape}")

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    def to_bytes(self) -> np.ndarray:
        return np.rint(np.clip(self.pixels, 0.0, 1.0) * 255.0).astype(np.uint8)


def _tokens(buf: bytes, count: int):
    """Read ``count`` whitespace-separated header tokens, skipping comments."""
    out, i, n = [], 0, len(buf)
    while len(out) < count:
        while i < n and buf[i:i + 1].isspace():
            i += 1
        if i < n and buf[i:i + 1] == b"#":
            while i < n and buf[i:i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        start = i
        while i < n and not buf[i:i + 1].isspace() and buf[i:i + 1] != b"#":
            i += 1
        if start == i:
            raise TruncatedError("PPM header ends early")
        out.append(buf[start:i])
    return out, i


def decode_ppm(buf: bytes) -> ImageGrid:
    if buf[:2] != b"P6":
        raise BadMagicError(f"expected P6 magic, got {buf[:2]!r}")
    (w, h, maxval), end = _tokens(buf[2:], 3)
    try:
        w, h, maxval = int(w), int(h), int(maxval)
    except ValueError:
        raise TruncatedError("malformed PPM header") from None
    if maxval != 255:
        raise BadMaxvalError(f"only maxval 255 is supported, got {maxval}")
    start = 2 + end + 1  # single whitespace byte after maxval
    need = w * h * 3
    body = buf[start:start + need]
    if len(body) < need:
        raise TruncatedError(f"PPM body has {len(body)} bytes, expected {need}")
    arr = np.frombuffer(body, dtype=np.uint8).reshape(h, w, 3)
    return ImageGrid(arr.astype(np.float64) / 255.0)


def encode_ppm(grid: ImageGrid) -> bytes:
    header = f"P6\n{grid.width} {grid.height}\n255\n".encode("ascii")
    return header + grid.to_bytes().tobytes()


def load_ppm(path) -> ImageGrid:
    return decode_ppm(Path(path).read_bytes())


def save_ppm(grid: ImageGrid, path) -> None:
    Path(path).write_bytes(encode_ppm(grid))


# ---------------------------------------------------------------------------
# pixel bookkeeping


@dataclass(frozen=True)
class PixelSplit:
    """Disjoint (row, col) index arrays, each of shape (n, 2)."""

    train: np.ndarray
    valid: np.ndarray
    test: np.ndarray


def _parity(h: int, w: int, row: int, col: int) -> np.ndarray:
    r, c = np.meshgrid(np.arange(row, h, 2), np.arange(col, w, 2), indexing="ij")
    return np.stack([r.ravel(), c.ravel()], axis=1)


def split_pixels(grid_or_shape) -> PixelSplit:
    """train = (even, even), valid = (even, odd), test = (odd, odd).

    The (odd, even) class is left unused, so three quarters of the pixels are
    assigned.  Depends only on the image size.
    """
    if isinstance(grid_or_shape, ImageGrid):
        h, w = grid_or_shape.height, grid_or_shape.width
    else:
        h, w = grid_or_shape
    if h < 2 or w < 2:
        raise TooSmallError(f"image must be at least 2x2, got {w}x{h}")
    return PixelSplit(_parity(h, w, 0, 0), _parity(h, w, 0, 1), _parity(h, w, 1, 1))


def pixel_coords(idx: np.ndarray, width: int, height: int) -> np.ndarray:
    """Normalized half-pixel centres ``((col + 0.5) / W, (row + 0.5) / H)``."""
    idx = np.asarray(idx)
    return np.stack([(idx[:, 1] + 0.5) / width, (idx[:, 0] + 0.5) / height], axis=1)


def lattice(width: int, height: int) -> np.ndarray:
    """Coordinates of every pixel in row-major order, shape (H*W, 2)."""
    r, c = np.meshgrid(np.arange(height), np.arange(width), indexing="ij")
    return pixel_coords(np.stack([r.ravel(), c.ravel()], axis=1), width, height)


def gather(grid: ImageGrid, idx: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(coordinates, rgb) for the given (row, col) indices."""
    return pixel_coords(idx, grid.width, grid.height), grid.pixels[idx[:, 0], idx[:, 1]]
