"""Separable resize operators: nearest, bilinear, and area interpolation.

Each algorithm is implemented twice, on purpose:

- as an explicit linear operator (one row-stochastic coefficient matrix per
  axis, applied as ``row_matrix @ X @ col_matrix.T`` per channel), which is
  what the perturbation solver needs, and
- as a direct pixel routine (``resize_direct``), used as an independent
  reference implementation.

Conventions (one per algorithm, fixed and documented here):

- Output pixel x' samples source coordinate u = (x' + 0.5) * (src/dst) - 0.5
  (half-pixel centers), with u clamped to [0, src-1] at the edges.
- ``bilinear``: linear interpolation between floor(u) and floor(u)+1.
- ``nearest``: u rounded to the closest integer, halves rounding *down*
  (idx = ceil(u - 0.5)); for 4 -> 2 this samples indices {0, 2}.
- ``area``: exact fractional coverage of the source box
  [x' * src/dst, (x'+1) * src/dst).
"""

from __future__ import annotations

import dataclasses
import json

import numpy as np
from scipy import sparse

from .errors import (
    DimensionMismatch,
    DownscaleRequested,
    UnsupportedAlgorithm,
    UpscaleRequested,
)
from .raster import RasterImage

ALGORITHMS = ("nearest", "bilinear", "area")
UPSCALE_ALGORITHMS = ("nearest", "bilinear")


def _source_coords(src: int, dst: int) -> np.ndarray:
    """Half-pixel-centered source coordinates for each output index."""
    return (np.arange(dst) + 0.5) * (src / dst) - 0.5


def nearest_axis_matrix(src: int, dst: int) -> np.ndarray:
    u = _source_coords(src, dst)
    idx = np.clip(np.ceil(u - 0.5).astype(np.int64), 0, src - 1)
    m = np.zeros((dst, src))
    m[np.arange(dst), idx] = 1.0
    return m


def bilinear_axis_matrix(src: int, dst: int) -> np.ndarray:
    u = np.clip(_source_coords(src, dst), 0.0, src - 1.0)
    lo = np.floor(u).astype(np.int64)
    hi = np.minimum(lo + 1, src - 1)
    f = u - lo
    m = np.zeros((dst, src))
    rows = np.arange(dst)
    # add.at collapses lo == hi (edge clamp) into a single weight of 1
    np.add.at(m, (rows, lo), 1.0 - f)
    np.add.at(m, (rows, hi), f)
    return m


def area_axis_matrix(src: int, dst: int) -> np.ndarray:
    r = src / dst
    left = np.arange(dst) * r
    right = left + r
    cells = np.arange(src)
    overlap = np.minimum(right[:, None], cells + 1.0) - np.maximum(left[:, None], cells[None, :])
    return np.clip(overlap, 0.0, 1.0) / r


_AXIS_BUILDERS = {
    "nearest": nearest_axis_matrix,
    "bilinear": bilinear_axis_matrix,
    "area": area_axis_matrix,
}


@dataclasses.dataclass(frozen=True)
class ScalingOperator:
    """A named interpolation algorithm realized as per-axis coefficient matrices.

    ``row_matrix`` is dst_h x src_h and acts on the vertical axis;
    ``col_matrix`` is dst_w x src_w and acts on the horizontal axis.
    Every row of both matrices is nonnegative and sums to 1, so the operator
    preserves constant images and maps [0, 255] inputs into [0, 255].
    """

    algorithm: str
    src_h: int
    src_w: int
    dst_h: int
    dst_w: int
    row_matrix: np.ndarray
    col_matrix: np.ndarray

    def __post_init__(self):
        for name, m, dst, src in (
            ("row_matrix", self.row_matrix, self.dst_h, self.src_h),
            ("col_matrix", self.col_matrix, self.dst_w, self.src_w),
        ):
            if m.shape != (dst, src):
                raise DimensionMismatch(f"{name} shape {m.shape} != ({dst}, {src})")
            if m.min() < 0.0:
                raise ValueError(f"{name} has negative coefficients")
            sums = m.sum(axis=1)
            if np.abs(sums - 1.0).max() > 1e-9:
                raise ValueError(f"{name} rows must sum to 1 (worst {sums})")
        self.row_matrix.setflags(write=False)
        self.col_matrix.setflags(write=False)

    @property
    def src_size(self) -> tuple[int, int]:
        return self.src_h, self.src_w

    @property
    def dst_size(self) -> tuple[int, int]:
        return self.dst_h, self.dst_w

    def sparse_matrices(self) -> tuple[sparse.csr_matrix, sparse.csr_matrix]:
        """CSR forms for hot paths (bilinear rows have at most 2 nonzeros)."""
        return sparse.csr_matrix(self.row_matrix), sparse.csr_matrix(self.col_matrix)

    def apply_plane(self, plane: np.ndarray) -> np.ndarray:
        """Resize one 2-D float plane through the coefficient matrices."""
        if plane.shape != (self.src_h, self.src_w):
            raise DimensionMismatch(
                f"plane shape {plane.shape} != operator source ({self.src_h}, {self.src_w})"
            )
        rm, cm = self.sparse_matrices()
        return np.asarray(rm @ plane @ cm.T)


def build_operator(algorithm: str, src: tuple[int, int], dst: tuple[int, int]) -> ScalingOperator:
    """Build a downscaling operator from (src_h, src_w) to (dst_h, dst_w)."""
    if algorithm not in _AXIS_BUILDERS:
        raise UnsupportedAlgorithm(f"algorithm {algorithm!r} not in {ALGORITHMS}")
    src_h, src_w = int(src[0]), int(src[1])
    dst_h, dst_w = int(dst[0]), int(dst[1])
    if min(src_h, src_w, dst_h, dst_w) < 1:
        raise DimensionMismatch("all dimensions must be >= 1")
    if dst_h > src_h or dst_w > src_w:
        raise UpscaleRequested(f"destination {dst_h}x{dst_w} exceeds source {src_h}x{src_w}")
    build = _AXIS_BUILDERS[algorithm]
    return ScalingOperator(
        algorithm=algorithm,
        src_h=src_h,
        src_w=src_w,
        dst_h=dst_h,
        dst_w=dst_w,
        row_matrix=build(src_h, dst_h),
        col_matrix=build(src_w, dst_w),
    )


def downscale(img: RasterImage, op: ScalingOperator) -> RasterImage:
    """Resize through the operator matrices; output stays in double precision."""
    if (img.height, img.width) != (op.src_h, op.src_w):
        raise DimensionMismatch(
            f"image {img.height}x{img.width} != operator source {op.src_h}x{op.src_w}"
        )
    rm, cm = op.sparse_matrices()
    out = np.empty((op.dst_h, op.dst_w, img.channels))
    for c in range(img.channels):
        out[:, :, c] = np.asarray(rm @ img.pixels[:, :, c] @ cm.T)
    return RasterImage(np.clip(out, 0.0, 255.0))


def upscale(img: RasterImage, algorithm: str, dst: tuple[int, int]) -> RasterImage:
    """Upsample with the same half-pixel convention (nearest or bilinear only)."""
    if algorithm not in UPSCALE_ALGORITHMS:
        raise UnsupportedAlgorithm(
            f"upscaling supports {UPSCALE_ALGORITHMS}, got {algorithm!r}"
        )
    dst_h, dst_w = int(dst[0]), int(dst[1])
    if dst_h < img.height or dst_w < img.width:
        raise DownscaleRequested(
            f"destination {dst_h}x{dst_w} smaller than source {img.height}x{img.width}"
        )
    build = _AXIS_BUILDERS[algorithm]
    rm = sparse.csr_matrix(build(img.height, dst_h))
    cm = sparse.csr_matrix(build(img.width, dst_w))
    out = np.empty((dst_h, dst_w, img.channels))
    for c in range(img.channels):
        out[:, :, c] = np.asarray(rm @ img.pixels[:, :, c] @ cm.T)
    return RasterImage(np.clip(out, 0.0, 255.0))


# ---------------------------------------------------------------------------
# Direct pixel routines (independent reference implementations)
# ---------------------------------------------------------------------------

def _direct_nearest_axis(arr: np.ndarray, dst: int, axis: int) -> np.ndarray:
    src = arr.shape[axis]
    u = _source_coords(src, dst)
    idx = np.clip(np.ceil(u - 0.5).astype(np.int64), 0, src - 1)
    return np.take(arr, idx, axis=axis)


def _direct_bilinear_axis(arr: np.ndarray, dst: int, axis: int) -> np.ndarray:
    src = arr.shape[axis]
    u = np.clip(_source_coords(src, dst), 0.0, src - 1.0)
    lo = np.floor(u).astype(np.int64)
    hi = np.minimum(lo + 1, src - 1)
    f = u - lo
    shape = [1] * arr.ndim
    shape[axis] = dst
    f = f.reshape(shape)
    return (1.0 - f) * np.take(arr, lo, axis=axis) + f * np.take(arr, hi, axis=axis)


def _direct_area_axis(arr: np.ndarray, dst: int, axis: int) -> np.ndarray:
    # Integrate the prefix sum at fractional box edges: the mean of arr over
    # [a, b) equals (S(b) - S(a)) / (b - a), where S is piecewise-linear in
    # the running sum.
    src = arr.shape[axis]
    arr = np.moveaxis(arr, axis, 0)
    prefix = np.concatenate(
        [np.zeros((1,) + arr.shape[1:]), np.cumsum(arr, axis=0)], axis=0
    )

    def integral_to(t: np.ndarray) -> np.ndarray:
        k = np.clip(np.floor(t).astype(np.int64), 0, src - 1)
        frac = (t - k).reshape((-1,) + (1,) * (arr.ndim - 1))
        return prefix[k] + frac * arr[k]

    r = src / dst
    edges = np.arange(dst + 1) * r
    lower = integral_to(edges[:-1])
    upper = integral_to(np.minimum(edges[1:], float(src)))
    return np.moveaxis((upper - lower) / r, 0, axis)


_DIRECT_AXIS = {
    "nearest": _direct_nearest_axis,
    "bilinear": _direct_bilinear_axis,
    "area": _direct_area_axis,
}


def resize_direct(arr: np.ndarray, algorithm: str, dst: tuple[int, int]) -> np.ndarray:
    """Resize a 2-D or 3-D float array without going through operator matrices."""
    if algorithm not in _DIRECT_AXIS:
        raise UnsupportedAlgorithm(f"algorithm {algorithm!r} not in {ALGORITHMS}")
    routine = _DIRECT_AXIS[algorithm]
    arr = np.asarray(arr, dtype=np.float64)
    out = routine(arr, int(dst[0]), 0)
    out = routine(out, int(dst[1]), 1)
    return out


# ---------------------------------------------------------------------------
# Victim input-size registry
# ---------------------------------------------------------------------------

@dataclasses.dataclass(frozen=True)
class InputSizeProfile:
    """Default input geometry and resize algorithm of one detector family."""

    model_name: str
    input_sizes: tuple[tuple[int, int], ...]
    algorithm: str

    def __post_init__(self):
        if not self.input_sizes:
            raise ValueError("input_sizes must be non-empty")
        for h, w in self.input_sizes:
            if h < 32 or w < 32:
                raise ValueError(f"input size {h}x{w} below 32 pixels")
        if self.algorithm not in ALGORITHMS:
            raise UnsupportedAlgorithm(self.algorithm)


MODEL_PROFILES: dict[str, InputSizeProfile] = {
    "centernet": InputSizeProfile("centernet", ((512, 512),), "bilinear"),
    "yolov3": InputSizeProfile("yolov3", ((320, 320), (416, 416), (608, 608)), "bilinear"),
    "yolov4": InputSizeProfile("yolov4", ((416, 416), (512, 512), (608, 608)), "bilinear"),
    "faster_rcnn": InputSizeProfile("faster_rcnn", ((600, 600),), "bilinear"),
}


def profile_for(model_name: str) -> InputSizeProfile:
    key = model_name.lower()
    if key not in MODEL_PROFILES:
        raise KeyError(
            f"unknown model {model_name!r}; known: {sorted(MODEL_PROFILES)}"
        )
    return MODEL_PROFILES[key]


# ---------------------------------------------------------------------------
# Operator debugging dump
# ---------------------------------------------------------------------------

def dump_operator(op: ScalingOperator, path) -> None:
    """Write the operator as an .npz archive (matrices + JSON header)."""
    header = json.dumps(
        {
            "algorithm": op.algorithm,
            "src": [op.src_h, op.src_w],
            "dst": [op.dst_h, op.dst_w],
        }
    )
    np.savez(
        path,
        header=np.array(header),
        row_matrix=op.row_matrix,
        col_matrix=op.col_matrix,
    )


def load_operator(path) -> ScalingOperator:
    with np.load(path, allow_pickle=False) as data:
        header = json.loads(str(data["header"]))
        return ScalingOperator(
            algorithm=header["algorithm"],
            src_h=header["src"][0],
            src_w=header["src"][1],
            dst_h=header["dst"][0],
            dst_w=header["dst"][1],
            row_matrix=data["row_matrix"].copy(),
            col_matrix=data["col_matrix"].copy(),
        )
