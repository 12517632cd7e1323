import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import SPACES, random_point, seeds
from horolab.errors import NotBallisticError, ValidationError
from horolab.laws import IncrementLaw, iid, parse_driver
from horolab.shadows import (
    admissible_delta,
    find_intersection_witness,
    in_shadow,
    shadow_via_horofunction,
    suggest_start_time,
    verify_witness,
)
from horolab.spaces import FreeGroup, ZdLattice
from horolab.walks import sample_walk

Z1, Z2, F2 = ZdLattice(1), ZdLattice(2), FreeGroup(2)


def det_e1(T=200):
    return sample_walk(Z2, iid(IncrementLaw(((1, 0),), (1.0,))), T, 0)


def test_shadow_examples():
    assert in_shadow(Z1, (3,), (10,), 0.1) == (True, 10 - 7 - 0.9 * 3)
    assert not in_shadow(Z1, (3,), (-10,), 0.1)[0]
    assert in_shadow(F2, "ab", "abab", 0.01)[0]
    assert not in_shadow(F2, "ab", "aab", 0.5)[0]
    assert shadow_via_horofunction(F2, "ab", "abab", 0.01)


@given(st.sampled_from(sorted(SPACES)), seeds, st.floats(0.001, 0.999))
def test_shadow_predicates_agree(name, seed, eps):
    sp = SPACES[name]
    rng = np.random.default_rng(seed)
    y, z = random_point(sp, rng), random_point(sp, rng)
    assert in_shadow(sp, y, z, eps)[0] == shadow_via_horofunction(sp, y, z, eps)


@pytest.mark.parametrize("eps", [0.0, 1.0, -0.2, 1.5])
def test_eps_is_validated(eps):
    with pytest.raises(ValidationError):
        in_shadow(Z1, (1,), (2,), eps)
    with pytest.raises(ValidationError):
        find_intersection_witness(det_e1(), eps, 1, 10)


@given(st.floats(0.01, 0.99), st.floats(0.01, 10.0))
def test_admissible_delta(eps, A):
    d = admissible_delta(eps, A)
    assert 0 < d and 2 * d / (A + d) < eps


def test_deterministic_start_time():
    st_ = suggest_start_time(det_e1(), 0.5)
    assert st_.N == st_.K == 1 and st_.delta < 1 / 3
    assert json.loads(json.dumps(st_.to_json()))["N"] == 1


def test_deterministic_witness():
    traj = det_e1()
    w = find_intersection_witness(traj, 0.1, 1, 10, horizon=100)
    assert w.found and w.n == 11
    assert np.allclose(w.margins, 0.1 * np.arange(1, 11))
    assert verify_witness(traj, w)
    assert json.loads(json.dumps(w.to_json()))["margin_min"] == pytest.approx(0.1)


def test_free_group_witness():
    traj = sample_walk(F2, parse_driver("srw", F2), 20_000, 0)
    st_ = suggest_start_time(traj, 0.2)
    w = find_intersection_witness(traj, 0.2, st_.N, st_.N + 100, horizon=min(20_000, 10 * (st_.N + 100)))
    assert w.found and np.all(w.margins >= 0) and verify_witness(traj, w)


def test_opposite_sides_never_intersect():
    # pick M where the symmetric walk changes sign; shadows of points on opposite sides are disjoint
    traj = sample_walk(Z1, parse_driver("srw", Z1), 20_000, 2)
    pos = np.array([traj.point(k)[0] for k in range(2001)])
    k_plus = int(np.flatnonzero(pos > 0)[0])
    k_minus = int(np.flatnonzero(pos < 0)[0])
    M = max(k_plus, k_minus)
    w = find_intersection_witness(traj, 0.1, 1, M, horizon=min(20_000, 10 * M), record=True)
    assert not w.found and w.near_miss_margin < 0
    assert not verify_witness(traj, w)
    assert w.near_miss_csv().startswith("n,min_margin,complete\n")
    assert "near_miss_n" in w.to_json()


def test_symmetric_walk_is_not_ballistic():
    # |Z_n|/n ~ n^(-1/2) needs n ~ 1e6 to fall below the 1e-3 threshold
    traj = sample_walk(Z1, parse_driver("srw", Z1), 1_000_000, 0)
    with pytest.raises(NotBallisticError):
        suggest_start_time(traj, 0.2)


def test_witness_range_is_validated():
    with pytest.raises(ValidationError):
        find_intersection_witness(det_e1(50), 0.1, 5, 3)
    with pytest.raises(ValidationError):
        find_intersection_witness(det_e1(50), 0.1, 1, 10, horizon=500)
