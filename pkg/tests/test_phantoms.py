import numpy as np
import pytest

from volumetrica.geometry import voxel_volume
from volumetrica.grid import Spacing
from volumetrica.phantoms import (
    PhantomSpec,
    ShapeOutOfBoundsError,
    load_phantom_config,
    make_phantom,
)


def test_sphere_r10_volume(sphere_phantom):
    grid, mask, analytic = sphere_phantom
    assert analytic == pytest.approx(4188.790, abs=0.001)
    assert voxel_volume(mask) == pytest.approx(analytic, rel=0.02)
    assert grid.data.max() == 1.0 and grid.data.min() == 0.0


def test_subvoxel_sphere_has_at_most_one_voxel():
    spec = PhantomSpec(kind="sphere", radius=0.4, center=(8.5, 8.5, 8.5))
    _, mask, _ = make_phantom(spec, (16, 16, 16), Spacing(1, 1, 1))
    assert mask.data.sum() <= 1


def test_ellipsoid_with_equal_axes_matches_sphere():
    sphere = PhantomSpec(kind="sphere", radius=7.0)
    ellip = PhantomSpec(kind="ellipsoid", semi_axes=(7.0, 7.0, 7.0))
    _, m1, v1 = make_phantom(sphere, (32, 32, 32), Spacing(1, 1, 1))
    _, m2, v2 = make_phantom(ellip, (32, 32, 32), Spacing(1, 1, 1))
    assert np.array_equal(m1.data, m2.data)
    assert v1 == v2


def test_out_of_bounds_rejected():
    spec = PhantomSpec(kind="sphere", radius=20.0)
    with pytest.raises(ShapeOutOfBoundsError):
        make_phantom(spec, (32, 32, 32), Spacing(1, 1, 1))


def test_rasterization_converges_under_refinement():
    # fixed physical shape, halving spacing must shrink the error
    errors = []
    for spacing, n in [(2.0, 32), (1.0, 64), (0.5, 128)]:
        spec = PhantomSpec(kind="sphere", radius=10.0)
        _, mask, analytic = make_phantom(spec, (n, n, n), Spacing(spacing, spacing, spacing))
        errors.append(abs(voxel_volume(mask) - analytic) / analytic)
    assert errors[0] > errors[1] > errors[2]


def test_lobulated_oracle_volume_matches_rasterization():
    spec = PhantomSpec(kind="lobulated", semi_axes=(10, 8, 6), seed=3)
    _, mask, analytic = make_phantom(spec, (128, 128, 128), Spacing(0.25, 0.25, 0.25))
    assert analytic > 0
    assert voxel_volume(mask) == pytest.approx(analytic, rel=0.01)


def test_lobulated_is_deterministic_per_seed():
    a = PhantomSpec(kind="lobulated", semi_axes=(9, 8, 7), seed=11)
    b = PhantomSpec(kind="lobulated", semi_axes=(9, 8, 7), seed=11)
    c = PhantomSpec(kind="lobulated", semi_axes=(9, 8, 7), seed=12)
    assert a.lobes == b.lobes
    assert a.analytic_volume == b.analytic_volume
    assert a.lobes != c.lobes


def test_lobulated_amplitude_capped():
    spec = PhantomSpec(kind="lobulated", semi_axes=(10, 8, 6), seed=5, lobe_amplitude=0.2)
    assert sum(l.amplitude_mm for l in spec.lobes) <= 0.2 * 6.0 + 1e-12
    with pytest.raises(ValueError):
        PhantomSpec(kind="lobulated", semi_axes=(10, 8, 6), lobe_amplitude=0.3)
    with pytest.raises(ValueError):
        PhantomSpec(kind="lobulated", semi_axes=(10, 8, 6), lobe_count=9)


def test_noise_is_seeded():
    spec = PhantomSpec(kind="sphere", radius=6.0, noise_sigma=0.1, seed=4)
    g1, _, _ = make_phantom(spec, (24, 24, 24), Spacing(1, 1, 1))
    g2, _, _ = make_phantom(spec, (24, 24, 24), Spacing(1, 1, 1))
    assert np.array_equal(g1.data, g2.data)
    assert g1.data.std() > 0.05


def test_config_roundtrip():
    spec, dims, spacing = load_phantom_config(
        {
            "shape": "ellipsoid",
            "semi_axes_mm": [11, 9, 7],
            "dims": [48, 48, 48],
            "spacing_mm": [0.5, 0.5, 1.0],
            "noise_sigma": 0.02,
            "seed": 9,
        }
    )
    assert spec.kind == "ellipsoid"
    assert spec.semi_axes == (11.0, 9.0, 7.0)
    assert dims == (48, 48, 48)
    assert spacing.sz == 1.0


def test_config_rejects_bad_dims():
    with pytest.raises(ValueError):
        load_phantom_config({"shape": "sphere", "radius_mm": 5, "dims": [0, 4, 4],
                             "spacing_mm": [1, 1, 1]})
    with pytest.raises(ValueError):
        load_phantom_config({"shape": "sphere", "radius_mm": 5, "spacing_mm": [1, 1, 1]})
