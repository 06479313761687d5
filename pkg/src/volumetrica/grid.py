"""Voxel-grid data model.

Canonical memory layout for all volumes in this package: C-contiguous
arrays indexed ``[z, y, x]`` (row-major, z-outermost). ``dims`` tuples
are always reported as ``(nx, ny, nz)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Spacing:
    """Physical voxel size in millimetres. ``sz`` is the slice thickness."""

    sx: float
    sy: float
    sz: float

    def __post_init__(self):
        for name in ("sx", "sy", "sz"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"spacing {name} must be finite and > 0, got {v!r}")

    @property
    def voxel_volume_mm3(self) -> float:
        return self.sx * self.sy * self.sz

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.sx, self.sy, self.sz)


def _freeze(a: np.ndarray) -> np.ndarray:
    """Read-only view; never flips flags on a caller-owned buffer."""
    a = np.ascontiguousarray(a).view()
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class VoxelGrid:
    """Scalar intensity volume with physical spacing.

    ``data`` has shape ``(nz, ny, nx)``, dtype float64, all values finite.
    """

    data: np.ndarray
    spacing: Spacing

    def __post_init__(self):
        a = np.asarray(self.data, dtype=np.float64)
        if a.ndim != 3:
            raise ValueError(f"grid data must be 3-D (nz, ny, nx), got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ValueError("grid data contains non-finite values")
        object.__setattr__(self, "data", _freeze(a))

    @property
    def dims(self) -> tuple[int, int, int]:
        nz, ny, nx = self.data.shape
        return (nx, ny, nz)

    @classmethod
    def from_flat(cls, dims, flat, spacing: Spacing) -> "VoxelGrid":
        nx, ny, nz = dims
        a = np.asarray(flat, dtype=np.float64)
        if a.size != nx * ny * nz:
            raise ValueError(f"flat data length {a.size} != nx*ny*nz = {nx * ny * nz}")
        return cls(a.reshape(nz, ny, nx), spacing)


@dataclass(frozen=True)
class BinaryMask:
    """Boolean volume with the same layout and spacing rules as VoxelGrid."""

    data: np.ndarray
    spacing: Spacing

    def __post_init__(self):
        a = np.asarray(self.data)
        if a.ndim != 3:
            raise ValueError(f"mask data must be 3-D (nz, ny, nx), got shape {a.shape}")
        object.__setattr__(self, "data", _freeze(a.astype(bool)))

    @property
    def dims(self) -> tuple[int, int, int]:
        nz, ny, nx = self.data.shape
        return (nx, ny, nz)

    @classmethod
    def from_flat(cls, dims, flat, spacing: Spacing) -> "BinaryMask":
        nx, ny, nz = dims
        a = np.asarray(flat)
        if a.size != nx * ny * nz:
            raise ValueError(f"flat data length {a.size} != nx*ny*nz = {nx * ny * nz}")
        return cls(a.reshape(nz, ny, nx), spacing)
