import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import SPACES, close, random_direction, random_element, random_horofunction, random_point, seeds
from horolab.errors import NonConvergenceError, ValidationError
from horolab.horo import (
    Approximant,
    Busemann,
    FreeRay,
    IdealPoint,
    MatrixDirection,
    Signature,
    Translated,
    act_on_h,
    busemann_limit,
    f_cocycle,
    horofunction_from_json,
    phi_embed,
)
from horolab.spaces import FreeGroup, HyperbolicPlane, PosDefinite, ZdLattice, parse_word

space_names = st.sampled_from(sorted(SPACES))


# --- worked examples --------------------------------------------------------


def test_busemann_examples():
    f2, z2, h2 = FreeGroup(2), ZdLattice(2), HyperbolicPlane()
    assert Busemann(f2, FreeRay((), (1,)))("ab") == 0
    assert Busemann(z2, Signature((1, 0)))((3, -2)) == -1
    assert Busemann(h2, IdealPoint(math.inf))(2j) == pytest.approx(-math.log(2), abs=1e-15)


def test_phi_examples():
    z1, f2 = ZdLattice(1), FreeGroup(2)
    assert phi_embed(z1, (0,))((0,)) == 0
    assert phi_embed(z1, (5,))((8,)) == -2
    assert phi_embed(f2, "a")("a") == -1


def test_f_cocycle_examples():
    z1 = ZdLattice(1)
    h = Busemann(z1, Signature((1,)))
    assert f_cocycle(z1, (0,), h) == 0
    assert f_cocycle(z1, (3,), h) == -3


def test_busemann_limit_examples():
    v, cert = busemann_limit(PosDefinite(2), MatrixDirection(np.diag([1.0, -1.0]) / math.sqrt(2)), np.eye(2))
    assert v == pytest.approx(0, abs=1e-9) and cert.converged
    v, _ = busemann_limit(FreeGroup(2), FreeRay((), (1,)), "b")
    assert v == 1
    v, _ = busemann_limit(HyperbolicPlane(), IdealPoint(math.inf), 2j)
    assert v == pytest.approx(-math.log(2), abs=1e-9)


def test_pos_busemann_far_point():
    # the orbit point of diag(2, 1/2)^1000 is exp(1000 log 4 diag(1, -1)) / ...; -b/n = 2 sqrt(2) log 2
    pos = PosDefinite(2)
    d = MatrixDirection(np.diag([1.0, -1.0]) / math.sqrt(2))
    from horolab.spaces import LogSPD

    p = LogSPD(np.eye(2), np.array([2000 * math.log(2), -2000 * math.log(2)]))
    assert -Busemann(pos, d)(p) / 1000 == pytest.approx(2 * math.sqrt(2) * math.log(2), rel=1e-13)


def test_directions_are_validated():
    with pytest.raises(ValidationError):
        FreeRay((1,), (-1,))
    with pytest.raises(ValidationError):
        Signature((0, 0))
    with pytest.raises(ValidationError):
        MatrixDirection(np.diag([1.0, 0.0, 0.0]) * 2)
    with pytest.raises(ValidationError):
        Busemann(FreeGroup(2), FreeRay((), (3,)))
    with pytest.raises(ValidationError):
        Busemann(ZdLattice(2), IdealPoint(0.0))


# --- closed forms against the defining limit -------------------------------


@pytest.mark.parametrize("name", ["z2", "z3", "f2", "f3", "h2"])
def test_closed_form_matches_ray_limit(name):
    sp = SPACES[name]
    rng = np.random.default_rng(7)
    for _ in range(40):
        d = random_direction(sp, rng)
        z = random_point(sp, rng)
        v, _ = busemann_limit(sp, d, z, tol=1e-11)
        assert close(sp, Busemann(sp, d)(z), v, 1e-7)


@pytest.mark.parametrize("name", ["pos2", "pos3"])
def test_pos_closed_form_matches_extrapolated_limit(name):
    # the ray terms approach the limit like c/t, so extrapolate the last two doublings
    sp = SPACES[name]
    rng = np.random.default_rng(7)
    for _ in range(40):
        d = random_direction(sp, rng)
        z = random_point(sp, rng)
        with pytest.raises(NonConvergenceError) as exc:
            busemann_limit(sp, d, z, budget=2**16, tol=0.0)
        prev, last = exc.value.last_values
        assert Busemann(sp, d)(z) == pytest.approx(2 * last - prev, abs=1e-7)


def test_free_group_cone_oracle():
    # every reduced word of length <= 8 against d(xi_k, z) - k with k = 20
    f2 = FreeGroup(2)
    ray = FreeRay((2, 1), (-2,))
    h = Busemann(f2, ray)
    far = ray.word(20)
    words = [()]
    for n in range(1, 9):
        words += [w for w in itertools.product((1, -1, 2, -2), repeat=n) if all(a != -b for a, b in zip(w, w[1:]))]
    assert len(words) == 1 + sum(4 * 3 ** (n - 1) for n in range(1, 9))
    for w in words:
        assert h(w) == f2.distance(far, w) - 20


def test_approximant_settles_and_reports_failure():
    f2 = FreeGroup(2)
    pts = [tuple([1] * k) for k in range(1, 200)]
    assert Approximant(f2, pts)("ab") == 0
    with pytest.raises(NonConvergenceError) as exc:
        Approximant(f2, pts[:3])("aaaaaaaab")
    assert len(exc.value.last_values) == 2


# --- horofunction invariants -------------------------------------------------


@given(space_names, seeds)
def test_horofunction_bounds(name, seed):
    sp = SPACES[name]
    rng = np.random.default_rng(seed)
    h = random_horofunction(sp, rng)
    x, y = random_point(sp, rng), random_point(sp, rng)
    hx, hy = h(x), h(y)
    assert abs(h(sp.basepoint())) <= 1e-9
    assert abs(hx - hy) <= sp.distance(x, y) + 1e-8 * max(1.0, abs(hx), abs(hy))
    assert abs(hx) <= sp.radius(x) + 1e-8 * max(1.0, abs(hx))


@given(space_names, seeds)
def test_cocycle_relation(name, seed):
    # F(g1, g2.h) + F(g2, h) = F(g1 g2, h)
    sp = SPACES[name]
    rng = np.random.default_rng(seed)
    h = random_horofunction(sp, rng)
    g1, g2 = random_element(sp, rng), random_element(sp, rng)
    lhs = f_cocycle(sp, g1, act_on_h(sp, g2, h)) + f_cocycle(sp, g2, h)
    rhs = f_cocycle(sp, sp.compose(g1, g2), h)
    assert close(sp, lhs, rhs, 1e-9)


@given(space_names, seeds)
def test_max_formula(name, seed):
    sp = SPACES[name]
    rng = np.random.default_rng(seed)
    g = random_element(sp, rng)
    r = sp.radius(sp.orbit(g))
    best = f_cocycle(sp, g, phi_embed(sp, sp.orbit(sp.inverse(g))))
    assert close(sp, best, r, 1e-9)
    h = random_horofunction(sp, rng)
    assert f_cocycle(sp, g, h) <= r + 1e-9 * max(1.0, r)


@given(space_names, seeds)
def test_action_is_normalized_and_composes(name, seed):
    sp = SPACES[name]
    rng = np.random.default_rng(seed)
    h = random_horofunction(sp, rng)
    g1, g2 = random_element(sp, rng), random_element(sp, rng)
    z = random_point(sp, rng)
    a = act_on_h(sp, g1, act_on_h(sp, g2, h))
    b = act_on_h(sp, sp.compose(g1, g2), h)
    assert abs(a(sp.basepoint())) <= 1e-9
    assert close(sp, a(z), b(z), 1e-7)
    assert close(sp, act_on_h(sp, sp.identity(), h)(z), h(z), 1e-9)


def test_h2_busemann_image_matches_translation():
    h2 = HyperbolicPlane()
    rng = np.random.default_rng(8)
    for _ in range(200):
        h = Busemann(h2, random_direction(h2, rng))
        g = h2.random_element(rng)
        img = act_on_h(h2, g, h)
        assert isinstance(img, Busemann)
        z = h2.random_point(rng)
        assert img(z) == pytest.approx(Translated(h2, g, h)(z), abs=1e-7)


def test_interior_action_is_phi_of_image():
    for name in ("f2", "pos2"):
        sp = SPACES[name]
        rng = np.random.default_rng(9)
        x, g, z = random_point(sp, rng), random_element(sp, rng), random_point(sp, rng)
        assert close(sp, act_on_h(sp, g, phi_embed(sp, x))(z), phi_embed(sp, sp.act(g, x))(z), 1e-9)


def test_json_round_trip():
    rng = np.random.default_rng(10)
    for name, sp in SPACES.items():
        for _ in range(10):
            h = random_horofunction(sp, rng)
            h = act_on_h(sp, random_element(sp, rng), h)
            back = horofunction_from_json(h.to_json(), sp)
            z = random_point(sp, rng)
            assert close(sp, back(z), h(z), 1e-9)


def test_word_parsing_in_horofunctions():
    f2 = FreeGroup(2)
    h = Busemann(f2, FreeRay(parse_word("ab"), parse_word("a")))
    assert h("ab a a") == -4
    assert h("b") == 1
