"""Pixel-grid carrier type and image file I/O.

Images are stored as float64 arrays of shape (height, width, channels) with
values in [0, 255]. All math in the toolkit happens in double precision;
quantization to 8 bits happens only when an image crosses a file boundary
(PNG/JPEG write) or when a caller explicitly asks for the 8-bit view.
"""

from __future__ import annotations

import dataclasses

import numpy as np
from PIL import Image

from .errors import DimensionMismatch


@dataclasses.dataclass(frozen=True)
class RasterImage:
    """An H x W x C grid of intensities in [0, 255], C in {1, 3}."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.ndim == 2:
            px = px[:, :, np.newaxis]
        if px.ndim != 3:
            raise DimensionMismatch(f"expected 2-D or 3-D pixel array, got ndim={px.ndim}")
        h, w, c = px.shape
        if h < 1 or w < 1:
            raise DimensionMismatch(f"image dimensions must be >= 1, got {h}x{w}")
        if c not in (1, 3):
            raise DimensionMismatch(f"channel count must be 1 or 3, got {c}")
        if not np.isfinite(px).all():
            raise ValueError("pixel values must be finite")
        if px.min() < 0.0 or px.max() > 255.0:
            raise ValueError(
                f"pixel values must lie in [0, 255], got range "
                f"[{px.min():.3f}, {px.max():.3f}]"
            )
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return self.pixels.shape[2]

    @property
    def size(self) -> tuple[int, int]:
        """(height, width)."""
        return self.pixels.shape[0], self.pixels.shape[1]

    def to_uint8(self) -> np.ndarray:
        """Rounded 8-bit view; lossless for already-integral values."""
        return np.clip(np.rint(self.pixels), 0, 255).astype(np.uint8)

    def luma(self) -> np.ndarray:
        """Grayscale plane via 0.299 R + 0.587 G + 0.114 B (identity for 1-channel)."""
        if self.channels == 1:
            return self.pixels[:, :, 0].copy()
        weights = np.array([0.299, 0.587, 0.114])
        return self.pixels @ weights


def from_array(arr: np.ndarray) -> RasterImage:
    """Wrap a float or integer array (2-D or H x W x C) as a RasterImage."""
    return RasterImage(np.asarray(arr, dtype=np.float64))


def quantize(img: RasterImage) -> RasterImage:
    """Round to the 8-bit grid but keep the float carrier type."""
    return RasterImage(img.to_uint8().astype(np.float64))


def load_image(path) -> RasterImage:
    """Read a PNG/JPEG file; grayscale files load as 1 channel, color as 3."""
    with Image.open(path) as im:
        if im.mode in ("1", "I", "I;16", "F"):
            im = im.convert("L")
        if im.mode not in ("L", "RGB"):
            im = im.convert("RGB")
        arr = np.asarray(im, dtype=np.float64)
    return from_array(arr)


def save_png(img: RasterImage, path) -> None:
    """Write losslessly; mandatory for attack images (JPEG would destroy them)."""
    arr = img.to_uint8()
    if arr.shape[2] == 1:
        pil = Image.fromarray(arr[:, :, 0], mode="L")
    else:
        pil = Image.fromarray(arr, mode="RGB")
    pil.save(path, format="PNG")


def save_jpeg(img: RasterImage, path, quality: int = 92) -> None:
    """Lossy write, acceptable for benign corpus images only."""
    arr = img.to_uint8()
    if arr.shape[2] == 1:
        pil = Image.fromarray(arr[:, :, 0], mode="L")
    else:
        pil = Image.fromarray(arr, mode="RGB")
    pil.save(path, format="JPEG", quality=quality)
