"""Spatial splitting of images into two complementary sub-images.

The split uses two 2x2 index kernels sliding with stride 2: each block
contributes its main diagonal to the left sub-image and its anti-diagonal to
the right one.  Odd image sides are padded by edge replication to the next
even size first, so the two sub-images always have exactly half the (padded)
pixels each.

Sub-image layout rule: parent row r contributes its selected pixels, in
ascending column order, to sub-image row r.  This keeps vertical structure
intact so that bilinear up-sampling of a sub-image is meaningful.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ImageTensor",
    "PartitionIndex",
    "SubImagePair",
    "make_diagonal_partition",
    "downsample",
    "reassemble",
    "add_gaussian_noise",
    "resize_to",
]


@dataclass(frozen=True)
class ImageTensor:
    """A (channels, height, width) image.

    Clean images must have intensities in [0, 1]; tensors carrying additive
    noise set ``noised=True`` and are exempt from the range check.  The pixel
    buffer is frozen after construction.
    """

    data: np.ndarray
    noised: bool = False

    def __post_init__(self) -> None:
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim != 3 or min(arr.shape) < 1:
            raise ValueError(f"image data must be (C, H, W), got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("image data must be finite")
        if not self.noised and (arr.min() < 0.0 or arr.max() > 1.0):
            raise ValueError("clean image intensities must lie in [0, 1]")
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def dim(self) -> int:
        return int(self.data.size)

    def flat(self) -> np.ndarray:
        return self.data.reshape(-1)


@dataclass(frozen=True)
class PartitionIndex:
    """The two disjoint pixel-index sets covering a (possibly padded) grid.

    ``left_indices`` and ``right_indices`` are (N, 2) arrays of (row, col)
    positions into the padded grid, ordered row-major with ascending columns
    inside each row.  ``source_shape`` is the pre-padding (H, W).
    """

    left_indices: np.ndarray
    right_indices: np.ndarray
    source_shape: tuple[int, int]
    padded_shape: tuple[int, int] = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        if self.padded_shape is None:
            object.__setattr__(self, "padded_shape", self.source_shape)
        h, w = self.padded_shape
        n = h * w
        left = np.asarray(self.left_indices)
        right = np.asarray(self.right_indices)
        if len(left) != n // 2 or len(right) != n // 2:
            raise ValueError("each side must hold exactly half the padded pixels")
        flat_l = left[:, 0] * w + left[:, 1]
        flat_r = right[:, 0] * w + right[:, 1]
        union = np.concatenate([flat_l, flat_r])
        if len(np.unique(union)) != n:
            raise ValueError("index sets must disjointly cover the padded grid")

    def replicated_mask(self, side: str) -> np.ndarray:
        """True where an index points at a padding-replicated row or column."""
        idx = self.left_indices if side == "left" else self.right_indices
        h, w = self.source_shape
        return (idx[:, 0] >= h) | (idx[:, 1] >= w)


@dataclass(frozen=True)
class SubImagePair:
    """The two sub-images of a split, each C x H x W/2 of the padded parent."""

    left: ImageTensor
    right: ImageTensor
    parent_shape: tuple[int, int, int]

    def __post_init__(self) -> None:
        c, h, w = self.parent_shape
        if self.left.dim != self.right.dim or self.left.dim * 2 != c * h * w:
            raise ValueError("sub-images must each hold half the parent values")


def make_diagonal_partition(height: int, width: int) -> PartitionIndex:
    """Build the stride-2 diagonal index kernels for an H x W grid.

    Within every 2x2 block at even offsets the main diagonal goes left, the
    anti-diagonal right; equivalently even rows contribute even columns to
    the left set and odd rows contribute odd columns.  Odd H or W are padded
    (by edge replication at apply time) to the next even size.
    """
    if height < 1 or width < 1:
        raise ValueError("height and width must be >= 1")
    ph = height + (height % 2)
    pw = width + (width % 2)
    rows = np.arange(ph)
    left_cols = [np.arange(r % 2, pw, 2) for r in rows]
    right_cols = [np.arange((r + 1) % 2, pw, 2) for r in rows]
    left = np.array([(r, c) for r in rows for c in left_cols[r]], dtype=np.int64)
    right = np.array([(r, c) for r in rows for c in right_cols[r]], dtype=np.int64)
    return PartitionIndex(
        left_indices=left,
        right_indices=right,
        source_shape=(height, width),
        padded_shape=(ph, pw),
    )


def _pad_to(data: np.ndarray, padded_shape: tuple[int, int]) -> np.ndarray:
    ph, pw = padded_shape
    dh, dw = ph - data.shape[1], pw - data.shape[2]
    if dh == 0 and dw == 0:
        return data
    return np.pad(data, ((0, 0), (0, dh), (0, dw)), mode="edge")


def downsample(x: ImageTensor, idx: PartitionIndex) -> SubImagePair:
    """Split an image into its two sub-images according to the index sets."""
    if (x.height, x.width) != idx.source_shape:
        raise ValueError(
            f"image shape {(x.height, x.width)} does not match partition "
            f"source shape {idx.source_shape}"
        )
    padded = _pad_to(x.data, idx.padded_shape)
    ph, pw = idx.padded_shape
    c = x.channels

    def gather(indices: np.ndarray) -> ImageTensor:
        vals = padded[:, indices[:, 0], indices[:, 1]]
        return ImageTensor(vals.reshape(c, ph, pw // 2), noised=x.noised)

    return SubImagePair(
        left=gather(idx.left_indices),
        right=gather(idx.right_indices),
        parent_shape=(c, ph, pw),
    )


def reassemble(pair: SubImagePair, idx: PartitionIndex) -> ImageTensor:
    """Scatter the two sub-images back into the padded parent grid."""
    c, ph, pw = pair.parent_shape
    out = np.empty((c, ph, pw), dtype=np.float64)
    li, ri = idx.left_indices, idx.right_indices
    out[:, li[:, 0], li[:, 1]] = pair.left.data.reshape(c, -1)
    out[:, ri[:, 0], ri[:, 1]] = pair.right.data.reshape(c, -1)
    noised = pair.left.noised or pair.right.noised
    return ImageTensor(out, noised=noised)


def add_gaussian_noise(x: ImageTensor, sigma: float, stream) -> ImageTensor:
    """Corrupt an image with elementwise N(0, sigma^2) noise from a stream."""
    if not sigma > 0.0:
        raise ValueError(f"sigma must be > 0, got {sigma!r}")
    noise = stream.normal(sigma, x.data.shape)
    return ImageTensor(x.data + noise, noised=True)


def _axis_coeffs(src: int, dst: int, method: str):
    # align-corners-false sample positions: (i + 0.5) / scale - 0.5
    pos = (np.arange(dst) + 0.5) * (src / dst) - 0.5
    if method == "nearest":
        i0 = np.clip(np.floor(pos).astype(np.int64), 0, src - 1)
        return i0, i0, np.zeros(dst)
    i0 = np.floor(pos).astype(np.int64)
    frac = pos - i0
    i1 = np.clip(i0 + 1, 0, src - 1)
    i0 = np.clip(i0, 0, src - 1)
    return i0, i1, frac


def resize_batch(batch: np.ndarray, target_h: int, target_w: int, method: str = "bilinear") -> np.ndarray:
    """Resize a (..., H, W) array up to (target_h, target_w)."""
    if method not in ("bilinear", "nearest"):
        raise ValueError(f"unknown interpolation method {method!r}")
    src_h, src_w = batch.shape[-2], batch.shape[-1]
    if target_h < src_h or target_w < src_w:
        raise ValueError("resize_to only upscales; target must be >= source dims")
    if (target_h, target_w) == (src_h, src_w):
        return batch
    y0, y1, fy = _axis_coeffs(src_h, target_h, method)
    x0, x1, fx = _axis_coeffs(src_w, target_w, method)
    rows = batch[..., y0, :] * (1.0 - fy)[:, None] + batch[..., y1, :] * fy[:, None]
    return rows[..., :, x0] * (1.0 - fx) + rows[..., :, x1] * fx


def resize_to(sub: ImageTensor, target_h: int, target_w: int, method: str = "bilinear") -> ImageTensor:
    """Resize a sub-image up to the target spatial resolution."""
    out = resize_batch(sub.data, target_h, target_w, method)
    return ImageTensor(out, noised=sub.noised)
