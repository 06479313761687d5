"""Volume-grid preparation and mask-to-volume conversion around the
segmentation network."""

from __future__ import annotations

import numpy as np

from volumetrica.grid import BinaryMask, Spacing, VoxelGrid


def resize_volume(grid, target: tuple[int, int, int] = (32, 32, 32)) -> np.ndarray:
    """Trilinear resample onto the target lattice (align-corners).

    Accepts a VoxelGrid or a raw (nz, ny, nx) array; returns a float64
    array of the target shape with values inside the input range.
    """
    data = grid.data if isinstance(grid, VoxelGrid) else np.asarray(grid, dtype=np.float64)
    if data.ndim != 3:
        raise ValueError("volume must be 3-D")
    if tuple(data.shape) == tuple(target):
        return data.astype(np.float64, copy=True)
    out = data.astype(np.float64)
    for axis, (n_src, n_tgt) in enumerate(zip(data.shape, target)):
        if n_src < 2:
            raise ValueError(f"axis {axis} has extent {n_src}; need >= 2 to interpolate")
        if n_tgt < 1:
            raise ValueError("target extents must be >= 1")
        if n_src == n_tgt:
            continue
        if n_tgt == 1:
            pos = np.array([(n_src - 1) / 2.0])
        else:
            pos = np.arange(n_tgt) * ((n_src - 1) / (n_tgt - 1))
        i0 = np.clip(np.floor(pos).astype(int), 0, n_src - 2)
        frac = pos - i0
        lo = np.take(out, i0, axis=axis)
        hi = np.take(out, i0 + 1, axis=axis)
        shape = [1] * out.ndim
        shape[axis] = n_tgt
        frac = frac.reshape(shape)
        out = lo * (1.0 - frac) + hi * frac
    return out


def extract_tumor_mask(pred: np.ndarray, threshold: float = 0.5) -> np.ndarray:
    """Binarize a prediction map; threshold must lie strictly in (0, 1)."""
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must be in (0, 1), got {threshold}")
    pred = np.asarray(pred)
    if pred.ndim >= 2 and pred.shape[-1] == 1:
        pred = pred[..., 0]
    return pred > threshold


def cnn_volume(pred_mask: np.ndarray, source_dims, spacing: Spacing) -> float:
    """Total volume of a predicted mask, rescaled to source geometry.

    The prediction lattice may be coarser than the source grid (the
    network downsamples); each predicted pixel then covers
    (nx/ox)*(ny/oy) source pixels per slice and each predicted slice
    spans (nz/oz) source slices.
    """
    mask = np.asarray(pred_mask, dtype=bool)
    if mask.ndim != 3:
        raise ValueError("predicted mask must be 3-D (z, y, x)")
    nx, ny, nz = source_dims
    oz, oy, ox = mask.shape
    pixel_area = (nx / ox) * (ny / oy) * spacing.sx * spacing.sy
    slice_areas = mask.sum(axis=(1, 2)) * pixel_area
    thickness = (nz / oz) * spacing.sz
    return float(slice_areas.sum() * thickness)


def dice(a: np.ndarray, b: np.ndarray) -> float:
    """Overlap score 2|A&B| / (|A|+|B|); two empty masks count as 1."""
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    if a.shape != b.shape:
        raise ValueError("masks must share a shape")
    denom = int(a.sum()) + int(b.sum())
    if denom == 0:
        return 1.0
    return 2.0 * int((a & b).sum()) / denom


def prepare_input(grid: VoxelGrid, target: tuple[int, int, int] = (32, 32, 32)) -> np.ndarray:
    """Resize and append the channel axis expected by the 3-D network."""
    return resize_volume(grid, target)[..., None]


def mask_training_target(mask: BinaryMask, target: tuple[int, int, int] = (32, 32, 32)) -> np.ndarray:
    """Fractional-occupancy target: the mask resampled like the input."""
    return resize_volume(mask.data.astype(np.float64), target)[..., None]
