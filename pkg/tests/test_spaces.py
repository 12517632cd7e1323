import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import SPACES, close, random_element, random_point, seeds
from horolab.errors import ValidationError
from horolab.spaces import (
    FreeGroup,
    HyperbolicPlane,
    LogSPD,
    PosDefinite,
    ZdLattice,
    catzero_sample,
    common_prefix_length,
    format_word,
    invert_word,
    lattice_ball,
    lattice_counterexample,
    parse_space,
    parse_word,
    reduce_word,
    semiparallelogram_check,
    semiparallelogram_slack,
    space_from_json,
)

space_names = st.sampled_from(sorted(SPACES))


# --- worked examples --------------------------------------------------------


def test_distance_examples():
    assert ZdLattice(2).distance((0, 0), (3, -4)) == 7
    assert FreeGroup(2).distance("a", "ab") == 1
    assert PosDefinite(2).distance(np.eye(2), np.diag([math.e**2, math.e**-2])) == pytest.approx(2 * math.sqrt(2))
    assert HyperbolicPlane().distance(1j, 2j) == pytest.approx(math.log(2), abs=1e-15)


def test_action_examples():
    assert ZdLattice(2).act((1, 0), (3, -4)) == (4, -4)
    f2 = FreeGroup(2)
    assert f2.act("ab", "b^-1 a") == parse_word("aa")
    assert np.allclose(PosDefinite(2).act(np.diag([2.0, 1.0]), np.eye(2)), np.diag([4.0, 1.0]))


def test_compose_and_inverse_examples():
    f2, z2, pos = FreeGroup(2), ZdLattice(2), PosDefinite(2)
    assert f2.compose("ab", "b^-1") == parse_word("a")
    assert z2.compose((1, 2), (3, -1)) == (4, 1)
    assert np.allclose(pos.compose(np.diag([2.0, 1.0]), np.diag([3.0, 1.0])), np.diag([6.0, 1.0]))
    assert f2.inverse("ab") == parse_word("b^-1 a^-1")
    assert z2.inverse((1, -2)) == (-1, 2)
    assert np.allclose(pos.inverse(np.diag([2.0, 4.0])), np.diag([0.5, 0.25]))


def test_words():
    assert reduce_word((1, 2, -2, -1, 2)) == (2,)
    assert invert_word((1, -2)) == (2, -1)
    assert common_prefix_length((1, 2, 1), (1, 2, -1)) == 2
    assert format_word(parse_word("a b^-1 a")) == format_word((1, -2, 1))
    assert parse_word(format_word((1, -2, 2 - 4))) == (1, -2, -2)


@pytest.mark.parametrize(
    "bad",
    [
        (FreeGroup(2), (1, -1)),
        (FreeGroup(2), (3,)),
        (HyperbolicPlane(), -1j),
        (PosDefinite(2), np.array([[1.0, 2.0], [2.0, 1.0]])),
        (PosDefinite(2), np.array([[1.0, 0.5], [0.0, 1.0]])),
        (ZdLattice(2), (1, 2, 3)),
    ],
)
def test_invalid_points_are_rejected(bad):
    sp, p = bad
    with pytest.raises(ValidationError):
        sp.check_point(p)


def test_parse_space_round_trip():
    for text in ["z:2", "z2", "f2", "f:3", "h2", "pos:3", "pos2"]:
        sp = parse_space(text)
        assert space_from_json(sp.describe()) == sp
    with pytest.raises(ValidationError):
        parse_space("torus")


# --- metric axioms and isometry invariance -----------------------------------


@given(space_names, seeds)
def test_metric_axioms(name, seed):
    sp = SPACES[name]
    rng = np.random.default_rng(seed)
    x, y, z = (random_point(sp, rng) for _ in range(3))
    dxy, dyx = sp.distance(x, y), sp.distance(y, x)
    assert sp.distance(x, x) == pytest.approx(0, abs=1e-7)
    assert dxy >= 0
    assert close(sp, dxy, dyx, 1e-9)
    assert dxy <= sp.distance(x, z) + sp.distance(z, y) + 1e-9 * max(1.0, dxy)


@given(space_names, seeds)
def test_isometry_invariance(name, seed):
    sp = SPACES[name]
    rng = np.random.default_rng(seed)
    x, y = random_point(sp, rng), random_point(sp, rng)
    g = random_element(sp, rng)
    assert close(sp, sp.distance(sp.act(g, x), sp.act(g, y)), sp.distance(x, y), 1e-8)


@given(space_names, seeds)
def test_group_laws(name, seed):
    sp = SPACES[name]
    rng = np.random.default_rng(seed)
    g, h = random_element(sp, rng), random_element(sp, rng)
    x = random_point(sp, rng)
    gh = sp.compose(g, h)
    assert sp.points_close(sp.act(gh, x), sp.act(g, sp.act(h, x)), 1e-7)
    assert sp.points_close(sp.act(sp.compose(g, sp.inverse(g)), x), x, 1e-7)


def test_positive_distance_for_distinct_points(space, rng):
    for _ in range(200):
        x, y = random_point(space, rng), random_point(space, rng)
        if not space.points_close(x, y, 1e-9):
            assert space.distance(x, y) > 0


def test_hyperbolic_matches_pos2():
    # d_H2(g.i, i) = d_Pos2(g g^T, I) / sqrt(2) for g in SL2
    h2, pos = HyperbolicPlane(), PosDefinite(2)
    rng = np.random.default_rng(3)
    for _ in range(200):
        g = h2.random_element(rng)
        assert h2.radius(h2.act(g, 1j)) == pytest.approx(pos.radius(g @ g.T) / math.sqrt(2), rel=1e-9)


def test_hyperbolic_small_separation_is_accurate():
    h2 = HyperbolicPlane()
    assert h2.distance(1j, 1j * (1 + 1e-12)) == pytest.approx(1e-12, rel=1e-6)


def test_logspd_distance_matches_dense():
    pos = PosDefinite(3)
    rng = np.random.default_rng(4)
    for _ in range(50):
        p, q = pos.random_point(rng), pos.random_point(rng)
        assert pos.distance(p, LogSPD.from_dense(q)) == pytest.approx(pos.distance(p, q), rel=1e-9, abs=1e-9)


# --- CAT(0) ------------------------------------------------------------------


@pytest.mark.parametrize("sp", [HyperbolicPlane(), PosDefinite(2), PosDefinite(3)])
def test_semiparallelogram_holds(sp):
    fails, worst = catzero_sample(sp, 300, np.random.default_rng(0))
    assert fails == 0 and worst >= -1e-9


def test_midpoints_are_midpoints():
    for sp in (HyperbolicPlane(), PosDefinite(2)):
        rng = np.random.default_rng(5)
        for _ in range(100):
            x, y = sp.random_point(rng), sp.random_point(rng)
            m = sp.midpoint(x, y)
            d = sp.distance(x, y)
            assert sp.distance(x, m) == pytest.approx(d / 2, rel=1e-7, abs=1e-9)
            assert sp.distance(m, y) == pytest.approx(d / 2, rel=1e-7, abs=1e-9)


def test_lattice_is_not_catzero():
    ok, z, worst = lattice_counterexample()
    assert not ok and z is None and worst < 0


def test_lattice_check_accepts_trivial_pair():
    # x = y: z = x satisfies the law against every w
    ball = lattice_ball(2, 2)
    ok, z, _ = semiparallelogram_check(ZdLattice(2), (0, 0), (0, 0), ball, candidates=ball)
    assert ok and semiparallelogram_slack(ZdLattice(2), (0, 0), (0, 0), z, (2, 0)) >= 0


def test_lattice_ball_size():
    # |{v in Z^2 : |v|_1 <= r}| = 2r^2 + 2r + 1
    assert len(lattice_ball(2, 3)) == 25


def test_lattice_quadruple_alone_has_no_midpoint():
    # w = (1, 1) pins z to (1, 1) and w' = (0, 0) pins it to (0, 0)
    cands = lattice_ball(2, 3)
    z2 = ZdLattice(2)
    assert semiparallelogram_check(z2, (1, 0), (0, 1), [(1, 1)], candidates=cands)[1] == (1, 1)
    assert semiparallelogram_check(z2, (1, 0), (0, 1), [(0, 0)], candidates=cands)[1] == (0, 0)
    assert not semiparallelogram_check(z2, (1, 0), (0, 1), [(1, 1), (0, 0)], candidates=cands)[0]
