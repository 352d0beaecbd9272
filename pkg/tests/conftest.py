import numpy as np
import pytest

from scanmix import PointCloud, SensorConfig


def random_cloud(rng, n, labeled=False, k=6, span=40.0):
    coords = rng.uniform(-span, span, (n, 3)).astype(np.float32)
    intensity = rng.uniform(0.0, 1.0, n).astype(np.float32)
    labels = rng.integers(0, k, n).astype(np.int32) if labeled else None
    return PointCloud(coords, intensity, labels)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def sensor():
    return SensorConfig(num_beams=16, incl_up=10.0, incl_down=30.0, width=64, max_range=50.0)
