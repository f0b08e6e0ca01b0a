import functools

import numpy as np
import pytest

from acvem import meshgen
from acvem.meshgen import Rectangle


def regular_polygon(m, radius=1.0, center=(0.0, 0.0), phase=0.0):
    t = phase + 2 * np.pi * np.arange(m) / m
    return np.column_stack([center[0] + radius * np.cos(t), center[1] + radius * np.sin(t)])


def random_star_polygon(rng, m, jitter=0.3):
    """Polygon star-shaped about the origin with random radii and angles."""
    t = np.sort(rng.uniform(0, 2 * np.pi, m))
    t = 2 * np.pi * np.arange(m) / m + rng.uniform(-0.3, 0.3, m) * (np.pi / m)
    r = 1.0 + jitter * rng.uniform(-1, 1, m)
    return np.column_stack([r * np.cos(t), r * np.sin(t)])


@functools.lru_cache(maxsize=None)
def cached_mesh(family, level, domain="rect"):
    dom = meshgen.LShape() if domain == "lshape" else Rectangle()
    return meshgen.generate(family, level, dom)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def unit_square_two_triangles():
    v = np.array([[0, 0], [1, 0], [1, 1], [0, 1.0]])
    return meshgen.build_mesh(v, [[0, 1, 2], [0, 2, 3]], Rectangle(1.0, 1.0))


@pytest.fixture
def hexagon():
    return regular_polygon(6)
