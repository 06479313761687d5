import numpy as np
import pytest

from volumetrica.geometry import SliceAreaSeries
from volumetrica.grid import Spacing
from volumetrica.phantoms import PhantomSpec, make_phantom

# the worked sample: 11 measured slice areas at 1 mm thickness
SAMPLE_NODULE_AREAS = [16.0, 31.8, 55.8, 80.0, 150.0, 154.1, 89.6, 63.5, 84.6, 42.3, 29.3]


@pytest.fixture
def sample_nodule_series() -> SliceAreaSeries:
    return SliceAreaSeries(np.arange(1.0, 12.0), np.array(SAMPLE_NODULE_AREAS), 1.0)


@pytest.fixture
def unit_spacing() -> Spacing:
    return Spacing(1.0, 1.0, 1.0)


@pytest.fixture
def sphere_phantom(unit_spacing):
    spec = PhantomSpec(kind="sphere", radius=10.0)
    return make_phantom(spec, (64, 64, 64), unit_spacing)
