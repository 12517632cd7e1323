"""Horofunctions: Busemann functions, interior functions and the cocycle ``F``.

Every horofunction is normalized by ``h(x0) = 0``.  The isometry action is
``(g.h)(z) = h(g^-1 z) - h(g^-1 x0)`` and the cocycle is ``F(g, h) = -h(g^-1 x0)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NonConvergenceError, ValidationError
from .linalg import graded_svd, log_gram_minors
from .spaces import (
    FreeGroup,
    HyperbolicPlane,
    LogSPD,
    PosDefinite,
    ZdLattice,
    as_logspd,
    common_prefix_length,
    format_word,
    parse_word,
    reduce_word,
)

DEFAULT_BUDGET = 2**20
DEFAULT_TOL = 1e-9


# ---------------------------------------------------------------------------
# boundary directions


@dataclass(frozen=True)
class FreeRay:
    """The eventually periodic reduced word ``prefix period period ...``."""

    prefix: tuple
    period: tuple

    def __post_init__(self):
        pre = tuple(int(x) for x in self.prefix)
        per = tuple(int(x) for x in self.period)
        if not per:
            raise ValidationError("periodic part must be nonempty")
        if reduce_word(pre) != pre or reduce_word(per + per) != per + per:
            raise ValidationError("infinite word is not reduced")
        if pre and pre[-1] == -per[0]:
            raise ValidationError("infinite word is not reduced")
        object.__setattr__(self, "prefix", pre)
        object.__setattr__(self, "period", per)

    def letter(self, k):
        """The ``k``-th letter, counting from 0."""
        if k < len(self.prefix):
            return self.prefix[k]
        return self.period[(k - len(self.prefix)) % len(self.period)]

    def word(self, length):
        return tuple(self.letter(k) for k in range(length))

    def to_json(self):
        return {"kind": "free", "prefix": format_word(self.prefix), "period": format_word(self.period)}


@dataclass(frozen=True)
class Signature:
    """A lattice drift signature in ``{-1, 0, 1}^N``, not all zero."""

    signs: tuple

    def __post_init__(self):
        s = tuple(int(x) for x in self.signs)
        if any(x not in (-1, 0, 1) for x in s) or not any(s):
            raise ValidationError("signature entries must be -1, 0, 1 and not all zero")
        object.__setattr__(self, "signs", s)

    def to_json(self):
        return {"kind": "zd", "signs": list(self.signs)}


@dataclass(frozen=True)
class IdealPoint:
    """A point of ``R`` or ``inf`` on the boundary of the upper half-plane."""

    xi: float

    def __post_init__(self):
        xi = float(self.xi)
        if math.isnan(xi) or xi == -math.inf:
            raise ValidationError("ideal point must be real or +inf")
        object.__setattr__(self, "xi", xi)

    @property
    def at_infinity(self):
        return math.isinf(self.xi)

    def to_json(self):
        return {"kind": "h2", "xi": "inf" if self.at_infinity else self.xi}


@dataclass(frozen=True, eq=False)
class MatrixDirection:
    """A unit Frobenius-norm symmetric matrix; the ray is ``exp(t X)``."""

    X: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.X, dtype=float)
        if x.ndim != 2 or x.shape[0] != x.shape[1]:
            raise ValidationError("direction must be a square matrix")
        if np.max(np.abs(x - x.T)) > 1e-12:
            raise ValidationError("direction must be symmetric")
        nrm = np.linalg.norm(x)
        if abs(nrm - 1.0) > 1e-12:
            raise ValidationError(f"direction must have unit Frobenius norm, got {nrm:.3e}")
        x = 0.5 * (x + x.T)
        lam, k = np.linalg.eigh(x)
        order = np.argsort(-lam, kind="stable")
        object.__setattr__(self, "X", x)
        object.__setattr__(self, "_lam", lam[order])
        object.__setattr__(self, "_basis", k[:, order])

    @classmethod
    def normalized(cls, x):
        x = np.asarray(x, dtype=float)
        x = 0.5 * (x + x.T)
        nrm = np.linalg.norm(x)
        if nrm == 0:
            raise ValidationError("cannot normalize the zero matrix")
        return cls(x / nrm)

    @property
    def eigenvalues(self):
        """Eigenvalues sorted descending."""
        return self._lam

    @property
    def basis(self):
        return self._basis

    def to_json(self):
        return {"kind": "pos", "X": self.X.tolist()}


def direction_from_json(obj):
    kind = obj.get("kind")
    if kind == "free":
        return FreeRay(parse_word(obj["prefix"]), parse_word(obj["period"]))
    if kind == "zd":
        return Signature(tuple(obj["signs"]))
    if kind == "h2":
        return IdealPoint(math.inf if obj["xi"] == "inf" else float(obj["xi"]))
    if kind == "pos":
        return MatrixDirection(np.asarray(obj["X"], dtype=float))
    raise ValidationError(f"unknown direction kind {kind!r}")


def _check_direction(space, direction):
    ok = {
        FreeGroup: FreeRay,
        ZdLattice: Signature,
        HyperbolicPlane: IdealPoint,
        PosDefinite: MatrixDirection,
    }
    want = ok.get(type(space))
    if want is None or not isinstance(direction, want):
        raise ValidationError(f"{type(direction).__name__} is not a direction in {space.kind}")
    if isinstance(space, FreeGroup):
        letters = set(abs(x) for x in direction.prefix + direction.period)
        if max(letters) > space.rank:
            raise ValidationError("infinite word uses letters outside the group")
    if isinstance(space, ZdLattice) and len(direction.signs) != space.dim:
        raise ValidationError("signature length does not match the lattice dimension")
    if isinstance(space, PosDefinite) and direction.X.shape != (space.size, space.size):
        raise ValidationError("direction size does not match the space")
    return direction


# ---------------------------------------------------------------------------
# closed-form Busemann functions


def _busemann_free(ray, z):
    return len(z) - 2 * common_prefix_length(z, ray.word(len(z)))


def _busemann_zd(sig, z):
    return sum(-s * x if s else abs(x) for s, x in zip(sig.signs, z))


def _busemann_h2(pt, z):
    if pt.at_infinity:
        return -math.log(z.imag)
    xi = pt.xi
    return math.log(abs(z - xi) ** 2 / z.imag) - math.log(1.0 + xi * xi)


def _udu_log_pivots(direction, p):
    """``log d_i`` of ``k^T P k = U D U^T`` (``U`` unit upper triangular)."""
    p = as_logspd(p)
    c = direction.basis.T @ p.vecs
    g = log_gram_minors(c, 0.5 * p.logeig)
    return g[:-1] - g[1:]


def _busemann_pos(direction, p):
    return float(-np.dot(direction.eigenvalues, _udu_log_pivots(direction, p)))


# ---------------------------------------------------------------------------
# horofunctions


class Horofunction:
    def eval(self, z):
        raise NotImplementedError

    def __call__(self, z):
        return self.eval(z)

    def to_json(self):
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class Busemann(Horofunction):
    """Busemann function of the ray from ``x0`` toward ``direction``."""

    space: object
    direction: object

    def __post_init__(self):
        _check_direction(self.space, self.direction)

    def eval(self, z):
        sp = self.space
        z = sp.check_point(z)
        if isinstance(sp, FreeGroup):
            return _busemann_free(self.direction, z)
        if isinstance(sp, ZdLattice):
            return _busemann_zd(self.direction, z)
        if isinstance(sp, HyperbolicPlane):
            return _busemann_h2(self.direction, z)
        return _busemann_pos(self.direction, z)

    def to_json(self):
        return {"variant": "busemann", "space": self.space.describe(), "direction": self.direction.to_json()}


@dataclass(frozen=True, eq=False)
class Interior(Horofunction):
    """``Phi(x) = d(x, .) - d(x, x0)``."""

    space: object
    x: object

    def __post_init__(self):
        object.__setattr__(self, "x", self.space.check_point(self.x))
        object.__setattr__(self, "_offset", self.space.radius(self.x))

    def eval(self, z):
        return self.space.distance(self.x, z) - self._offset

    def to_json(self):
        return {"variant": "interior", "space": self.space.describe(), "x": self.space.point_to_json(self.x)}


@dataclass(frozen=True, eq=False)
class Translated(Horofunction):
    """``g.h`` for a horofunction with no closed-form image under ``g``."""

    space: object
    g: object
    base: Horofunction

    def __post_init__(self):
        g = self.space.check_element(self.g)
        ginv = self.space.inverse(g)
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "_ginv", ginv)
        object.__setattr__(self, "_offset", self.base.eval(self.space.orbit(ginv)))

    def eval(self, z):
        return self.base.eval(self.space.act(self._ginv, z)) - self._offset

    def to_json(self):
        return {
            "variant": "translated",
            "space": self.space.describe(),
            "g": self.space.element_to_json(self.g),
            "base": self.base.to_json(),
        }


@dataclass(frozen=True, eq=False)
class Approximant(Horofunction):
    """``d(x_k, z) - d(x_k, x0)`` along a sequence, truncated where it settles.

    Indices are doubled from ``start``; the value is accepted once two
    consecutive doublings change it by at most ``tol`` (by nothing at all in
    discrete spaces).
    """

    space: object
    points: tuple
    tol: float = DEFAULT_TOL
    start: int = 1
    budget: int = DEFAULT_BUDGET

    def __post_init__(self):
        object.__setattr__(self, "points", tuple(self.points))
        if not self.points:
            raise ValidationError("approximant needs at least one point")

    def _term(self, k, z):
        x = self.points[k]
        return self.space.distance(x, z) - self.space.radius(x)

    def eval(self, z):
        z = self.space.check_point(z)
        last = min(len(self.points), self.budget) - 1
        discrete = isinstance(self.space, (FreeGroup, ZdLattice))
        tol = 0.0 if discrete else self.tol
        k = min(max(0, self.start), last)
        vals = [self._term(k, z)]
        while k < last:
            k = min(2 * k + 1, last)
            vals.append(self._term(k, z))
            if len(vals) >= 3 and abs(vals[-1] - vals[-2]) <= tol and abs(vals[-2] - vals[-3]) <= tol:
                return vals[-1]
        raise NonConvergenceError(
            "approximant did not settle within the available points",
            last_values=vals[-2:],
            value=vals[-1],
        )

    def to_json(self):
        return {
            "variant": "approximant",
            "space": self.space.describe(),
            "length": len(self.points),
            "tol": self.tol,
        }


def phi_embed(space, x):
    return Interior(space, x)


def act_on_h(space, g, h):
    """The horofunction ``g.h``."""
    g = space.check_element(g)
    if isinstance(h, Interior):
        return Interior(space, space.act(g, h.x))
    if isinstance(h, Translated):
        return Translated(space, space.compose(g, h.g), h.base)
    if isinstance(h, Busemann) and isinstance(space, HyperbolicPlane):
        # Moebius maps send the horocycles at xi to those at g(xi)
        (a, b), (c, d) = np.asarray(g, dtype=float)
        xi = h.direction.xi
        if h.direction.at_infinity:
            img = math.inf if c == 0 else a / c
        else:
            den = c * xi + d
            img = math.inf if den == 0 else (a * xi + b) / den
        return Busemann(space, IdealPoint(img))
    return Translated(space, g, h)


def f_cocycle(space, g, h):
    """``F(g, h) = -h(g^-1 x0)``."""
    g = space.check_element(g)
    return -h.eval(space.orbit(space.inverse(g)))


# ---------------------------------------------------------------------------
# numeric monotone limit


@dataclass(frozen=True)
class LimitCertificate:
    t_final: float
    last_decrement: float
    values: list = field(default_factory=list)
    converged: bool = True

    def to_json(self):
        return {
            "t_final": self.t_final,
            "last_decrement": self.last_decrement,
            "converged": self.converged,
            "values": [[t, v] for t, v in self.values],
        }


def _pos_ray_term(direction, p, t):
    """``d(exp(tX), P) - t`` without forming ``exp(tX)`` or cancelling.

    With ``k^T P k = U D U^T`` and ``x`` the eigenvalues of ``X`` in the same
    (descending) order, ``exp(-tX/2) P exp(-tX/2)`` is
    ``V diag(D e^{-tx}) V^T`` with ``V = e^{-tx/2} U e^{tx/2}`` unit upper
    triangular with decaying entries, so its spectrum comes from a graded
    SVD at any ``t``.
    """
    x = direction.eigenvalues
    p = as_logspd(p)
    q = direction.basis.T @ p.dense() @ direction.basis
    q = 0.5 * (q + q.T)
    # U D U^T from a Cholesky factorization of the reversed matrix
    rev = q[::-1, ::-1]
    low = np.linalg.cholesky(rev)[::-1, ::-1]  # upper triangular, q = low low^T
    piv = np.diag(low).copy()
    u = low / piv
    logd = 2.0 * np.log(piv)
    scale = np.exp(np.minimum(0.0, -0.5 * t * np.subtract.outer(x, x)))
    v = np.triu(u * scale)
    np.fill_diagonal(v, 1.0)
    _, logsig = graded_svd(v, 0.5 * (logd - t * x))
    lam = 2.0 * logsig  # log eigenvalues, descending; pair with -t x ascending
    r = lam + t * x[::-1]
    xs = x[::-1]
    d = math.sqrt(float(np.sum(lam**2)))
    return float((np.sum(r**2) - 2.0 * t * np.dot(xs, r)) / (d + t))


def _ray_term(space, direction, z, t):
    if isinstance(space, FreeGroup):
        word = direction.word(int(t))
        return space.distance(word, z) - int(t)
    if isinstance(space, ZdLattice):
        t = int(t)
        pt = tuple(t * s for s in direction.signs)
        return space.distance(pt, z) - t * sum(abs(s) for s in direction.signs)
    if isinstance(space, HyperbolicPlane):
        if direction.at_infinity:
            g = np.eye(2)
        else:
            theta = math.atan2(-1.0, direction.xi)  # rotation about i sending inf to xi
            c, s = math.cos(theta), math.sin(theta)
            g = np.array([[c, s], [-s, c]])
        y = math.exp(min(t, 700.0))
        w = space.act(g, complex(0.0, y))
        return space.distance(w, z) - t
    return _pos_ray_term(direction, z, t)


def busemann_limit(space, direction, z, budget=DEFAULT_BUDGET, tol=DEFAULT_TOL, t0=1.0):
    """``lim_t d(gamma(t), z) - t`` along doubling ``t``.

    Returns ``(value, certificate)``.  Successive values must be
    non-increasing (within 1e-9); the loop stops when two consecutive
    doublings change the value by less than ``tol`` (by nothing, in discrete
    spaces).  Raises :class:`NonConvergenceError` when ``t`` would exceed
    ``budget``.
    """
    _check_direction(space, direction)
    z = space.check_point(z)
    discrete = isinstance(space, (FreeGroup, ZdLattice))
    t = max(1, int(t0)) if discrete else float(t0)
    vals = [(t, _ray_term(space, direction, z, t))]
    while True:
        if 2 * t > budget:
            prev = vals[-2][1] if len(vals) > 1 else vals[-1][1]
            raise NonConvergenceError(
                f"ray limit not settled by t = {t}",
                last_values=[prev, vals[-1][1]],
                value=vals[-1][1],
            )
        t = 2 * t
        v = _ray_term(space, direction, z, t)
        dec = vals[-1][1] - v
        if dec < -1e-9 * max(1.0, abs(v)):
            raise NonConvergenceError(
                f"monotonicity violated at t = {t}: increase of {-dec:.3e}",
                last_values=[vals[-1][1], v],
                value=v,
            )
        vals.append((t, v))
        if len(vals) >= 3:
            d1 = vals[-3][1] - vals[-2][1]
            if (discrete and d1 == 0 and dec == 0) or (not discrete and d1 < tol and dec < tol):
                return v, LimitCertificate(float(t), float(dec), vals)


def horofunction_from_json(obj, space):
    variant = obj.get("variant")
    if variant == "busemann":
        return Busemann(space, direction_from_json(obj["direction"]))
    if variant == "interior":
        return Interior(space, space.point_from_json(obj["x"]))
    if variant == "translated":
        return Translated(space, space.element_from_json(obj["g"]), horofunction_from_json(obj["base"], space))
    raise ValidationError(f"cannot rebuild horofunction variant {variant!r} from JSON")


__all__ = [
    "Approximant",
    "Busemann",
    "FreeRay",
    "Horofunction",
    "IdealPoint",
    "Interior",
    "LimitCertificate",
    "LogSPD",
    "MatrixDirection",
    "Signature",
    "Translated",
    "act_on_h",
    "busemann_limit",
    "direction_from_json",
    "f_cocycle",
    "horofunction_from_json",
    "phi_embed",
]
