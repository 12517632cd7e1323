import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

import math

from horolab.horo import Busemann, FreeRay, IdealPoint, Interior, MatrixDirection, Signature
from horolab.spaces import FreeGroup, HyperbolicPlane, PosDefinite, ZdLattice

settings.register_profile(
    "default",
    max_examples=200,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")

SPACES = {
    "z2": ZdLattice(2),
    "z3": ZdLattice(3),
    "f2": FreeGroup(2),
    "f3": FreeGroup(3),
    "h2": HyperbolicPlane(),
    "pos2": PosDefinite(2),
    "pos3": PosDefinite(3),
}

seeds = st.integers(min_value=0, max_value=2**32 - 1)


def random_point(space, rng):
    return space.random_point(rng)


def random_element(space, rng):
    if isinstance(space, (ZdLattice, FreeGroup)):
        return space.random_point(rng)
    return space.random_element(rng)


def random_direction(space, rng):
    if isinstance(space, ZdLattice):
        while True:
            s = tuple(int(x) for x in rng.integers(-1, 2, size=space.dim))
            if any(s):
                return Signature(s)
    if isinstance(space, FreeGroup):
        prefix = space.random_point(rng, max_len=4)
        while True:
            letter = int(rng.integers(1, space.rank + 1)) * int(rng.choice([-1, 1]))
            if not prefix or prefix[-1] != -letter:
                return FreeRay(prefix, (letter,))
    if isinstance(space, HyperbolicPlane):
        return IdealPoint(math.inf if rng.random() < 0.1 else float(rng.normal() * 3))
    x = rng.normal(size=(space.size, space.size))
    return MatrixDirection.normalized(x + x.T)


def random_horofunction(space, rng):
    if rng.random() < 0.5:
        return Interior(space, random_point(space, rng))
    return Busemann(space, random_direction(space, rng))


def close(space, a, b, tol):
    """Equality for discrete values, ``tol`` (relative to scale) otherwise."""
    if space.discrete:
        return a == b
    return abs(a - b) <= tol * max(1.0, abs(a), abs(b))


@pytest.fixture(params=sorted(SPACES))
def space(request):
    return SPACES[request.param]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
