"""Volume estimation for compact 3D objects in voxel grids.

Four estimators (spherical approximation, slice-area summation,
polynomial-regression integration, and a small convolutional
segmentation network) behind one interface, plus the statistical
machinery to compare them on synthetic phantom cohorts.
"""

__version__ = "0.1.0"

from volumetrica.grid import BinaryMask, Spacing, VoxelGrid
from volumetrica.geometry import (
    SliceAreaSeries,
    ctr,
    ellipse_fit_area,
    max_equivalent_diameter,
    max_feret_diameter,
    slice_areas,
    voxel_volume,
)
from volumetrica.phantoms import PhantomSpec, make_phantom

__all__ = [
    "BinaryMask",
    "PhantomSpec",
    "SliceAreaSeries",
    "Spacing",
    "VoxelGrid",
    "ctr",
    "ellipse_fit_area",
    "make_phantom",
    "max_equivalent_diameter",
    "max_feret_diameter",
    "slice_areas",
    "voxel_volume",
]
