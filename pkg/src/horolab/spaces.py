"""Pointed metric spaces with isometric group actions.

Four model spaces share one interface:

* ``ZdLattice(n)``: the Cayley graph of Z^n with the L1 word metric.
* ``FreeGroup(n)``: the 2n-regular tree, points and isometries are reduced words.
* ``HyperbolicPlane()``: the upper half-plane, isometries act by Moebius maps.
* ``PosDefinite(n)``: symmetric positive-definite matrices with the
  affine-invariant metric, ``GL_n`` acting by ``P -> g P g^T``.

Points and isometries are plain immutable values (tuples, complex numbers,
numpy arrays), so every method is a pure function.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

from .errors import NumericalError, ValidationError
from .linalg import graded_svd

# ---------------------------------------------------------------------------
# reduced words


def reduce_word(letters):
    """Freely reduce a sequence of signed generator indices."""
    out = []
    for x in letters:
        x = int(x)
        if x == 0:
            raise ValidationError("generator index 0 is not allowed")
        if out and out[-1] == -x:
            out.pop()
        else:
            out.append(x)
    return tuple(out)


def invert_word(w):
    return tuple(-x for x in reversed(w))


def common_prefix_length(u, v):
    k = 0
    for a, b in zip(u, v):
        if a != b:
            break
        k += 1
    return k


_LETTERS = "abcdefghijklmnopqrstuvwxyz"
_TOKEN = re.compile(r"([a-zA-Z])\s*(\^\s*\(?\s*(-?\d+)\s*\)?|⁻¹)?")


def parse_word(text):
    """Parse ``"ab"``, ``"b^-1 a"``, ``"b⁻¹a"`` or ``"Ba"`` (capital = inverse).

    Also accepts a list of signed integers.
    """
    if not isinstance(text, str):
        return reduce_word(text)
    letters = []
    pos = 0
    text = text.strip()
    if text in ("", "e", "1"):
        return ()
    while pos < len(text):
        if text[pos].isspace():
            pos += 1
            continue
        m = _TOKEN.match(text, pos)
        if not m:
            raise ValidationError(f"cannot parse word {text!r} at position {pos}")
        ch, _, power = m.group(1), m.group(2), m.group(3)
        idx = _LETTERS.index(ch.lower()) + 1
        sign = -1 if ch.isupper() else 1
        if m.group(2) == "⁻¹":
            power = -1
        power = 1 if power is None else int(power)
        letters.extend([sign * idx if power > 0 else -sign * idx] * abs(power))
        pos = m.end()
    return reduce_word(letters)


def format_word(w):
    if not w:
        return "e"
    return "".join(_LETTERS[x - 1] if x > 0 else _LETTERS[-x - 1].upper() for x in w)


# ---------------------------------------------------------------------------
# far-away SPD matrices


@dataclass(frozen=True, eq=False)
class LogSPD:
    """An SPD matrix ``vecs @ diag(exp(logeig)) @ vecs.T`` kept in log form.

    Used for orbit points of long matrix products, whose eigenvalues leave the
    float64 range.
    """

    vecs: np.ndarray
    logeig: np.ndarray

    @classmethod
    def from_dense(cls, p):
        lam, v = np.linalg.eigh(0.5 * (p + p.T))
        if lam[0] <= 0:
            raise ValidationError("matrix is not positive definite")
        return cls(v, np.log(lam))

    def dense(self):
        if np.max(np.abs(self.logeig)) > 700:
            raise NumericalError(
                "eigenvalues overflow float64; keep the point in log form",
                diagnostics={"max_abs_logeig": float(np.max(np.abs(self.logeig)))},
            )
        p = (self.vecs * np.exp(self.logeig)) @ self.vecs.T
        return 0.5 * (p + p.T)

    @property
    def spread(self):
        return float(np.max(np.abs(self.logeig)))


def as_logspd(p):
    return p if isinstance(p, LogSPD) else LogSPD.from_dense(np.asarray(p, dtype=float))


# ---------------------------------------------------------------------------
# spaces


class Space:
    """Common interface; subclasses fill in the geometry."""

    discrete = True
    kind = ""

    def basepoint(self):
        raise NotImplementedError

    def identity(self):
        raise NotImplementedError

    def distance(self, p, q):
        raise NotImplementedError

    def act(self, g, p):
        raise NotImplementedError

    def compose(self, g1, g2):
        raise NotImplementedError

    def inverse(self, g):
        raise NotImplementedError

    def check_point(self, p):
        return p

    def check_element(self, g):
        return g

    def orbit(self, g):
        """``g`` applied to the basepoint."""
        return self.act(g, self.basepoint())

    def radius(self, p):
        return self.distance(self.basepoint(), p)

    def points_close(self, p, q, tol=1e-6):
        return self.distance(p, q) <= tol

    def point_to_json(self, p):
        raise NotImplementedError

    def element_to_json(self, g):
        return self.point_to_json(g)

    def describe(self):
        return {"kind": self.kind}


@dataclass(frozen=True)
class ZdLattice(Space):
    dim: int = 1

    discrete = True
    kind = "zd"

    def __post_init__(self):
        if int(self.dim) < 1:
            raise ValidationError("lattice dimension must be >= 1")

    def basepoint(self):
        return (0,) * self.dim

    identity = basepoint

    def check_point(self, p):
        try:
            p = tuple(int(x) for x in p)
        except (TypeError, ValueError) as exc:
            raise ValidationError(f"not an integer vector: {p!r}") from exc
        if len(p) != self.dim:
            raise ValidationError(f"expected a vector of length {self.dim}, got {len(p)}")
        return p

    check_element = check_point

    def distance(self, p, q):
        p, q = self.check_point(p), self.check_point(q)
        return sum(abs(a - b) for a, b in zip(p, q))

    def act(self, g, p):
        g, p = self.check_element(g), self.check_point(p)
        return tuple(a + b for a, b in zip(g, p))

    compose = act

    def inverse(self, g):
        return tuple(-a for a in self.check_element(g))

    def point_to_json(self, p):
        return list(p)

    def point_from_json(self, obj):
        return self.check_point(obj)

    element_from_json = point_from_json

    def random_point(self, rng, scale=10):
        return tuple(int(x) for x in rng.integers(-scale, scale + 1, size=self.dim))

    random_element = random_point

    def generators(self):
        out = []
        for i in range(self.dim):
            e = [0] * self.dim
            e[i] = 1
            out.append(tuple(e))
            e[i] = -1
            out.append(tuple(e))
        return out

    def describe(self):
        return {"kind": self.kind, "dim": self.dim}


@dataclass(frozen=True)
class FreeGroup(Space):
    rank: int = 2

    discrete = True
    kind = "free"

    def __post_init__(self):
        if int(self.rank) < 2:
            raise ValidationError("free group rank must be >= 2")

    def basepoint(self):
        return ()

    identity = basepoint

    def check_point(self, p):
        if isinstance(p, str):
            p = parse_word(p)
        w = tuple(int(x) for x in p)
        for a, b in zip(w, w[1:]):
            if a == -b:
                raise ValidationError(f"word {format_word(w)} is not reduced")
        for a in w:
            if a == 0 or abs(a) > self.rank:
                raise ValidationError(f"letter {a} out of range for rank {self.rank}")
        return w

    check_element = check_point

    def distance(self, p, q):
        p, q = self.check_point(p), self.check_point(q)
        return len(p) + len(q) - 2 * common_prefix_length(p, q)

    def act(self, g, p):
        return reduce_word(self.check_element(g) + self.check_point(p))

    compose = act

    def inverse(self, g):
        return invert_word(self.check_element(g))

    def point_to_json(self, p):
        return list(p)

    def point_from_json(self, obj):
        return self.check_point(obj)

    element_from_json = point_from_json

    def random_point(self, rng, max_len=8):
        n = int(rng.integers(0, max_len + 1))
        w = []
        while len(w) < n:
            x = int(rng.integers(1, self.rank + 1)) * int(rng.choice([-1, 1]))
            if w and w[-1] == -x:
                continue
            w.append(x)
        return tuple(w)

    random_element = random_point

    def generators(self):
        out = []
        for i in range(1, self.rank + 1):
            out.extend([(i,), (-i,)])
        return out

    def describe(self):
        return {"kind": self.kind, "rank": self.rank}


def _normalize_sl2(g):
    g = np.asarray(g, dtype=float)
    if g.shape != (2, 2):
        raise ValidationError("hyperbolic isometries are 2x2 real matrices")
    det = g[0, 0] * g[1, 1] - g[0, 1] * g[1, 0]
    if not det > 0:
        raise ValidationError("hyperbolic isometries need positive determinant")
    out = g / math.sqrt(det)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class HyperbolicPlane(Space):
    discrete = False
    kind = "h2"

    def basepoint(self):
        return 1j

    def identity(self):
        return _normalize_sl2(np.eye(2))

    def check_point(self, p):
        if isinstance(p, (list, tuple)):
            p = complex(p[0], p[1])
        p = complex(p)
        if not p.imag > 0 or not math.isfinite(p.real) or not math.isfinite(p.imag):
            raise ValidationError(f"point {p} is not in the upper half-plane")
        return p

    def check_element(self, g):
        return _normalize_sl2(g)

    def distance(self, p, q):
        p, q = self.check_point(p), self.check_point(q)
        return 2.0 * math.asinh(abs(p - q) / (2.0 * math.sqrt(p.imag * q.imag)))

    def act(self, g, p):
        g = self.check_element(g)
        p = self.check_point(p)
        (a, b), (c, d) = g
        den = c * p + d
        if den == 0:
            raise NumericalError("Moebius denominator vanished")
        z = (a * p + b) / den
        return self.check_point(complex(z.real, p.imag / abs(den) ** 2))

    def compose(self, g1, g2):
        return _normalize_sl2(self.check_element(g1) @ self.check_element(g2))

    def inverse(self, g):
        (a, b), (c, d) = self.check_element(g)
        return _normalize_sl2([[d, -b], [-c, a]])

    def geodesic_point(self, p, q, t):
        """Point a fraction ``t`` of the way from ``p`` to ``q``."""
        p, q = self.check_point(p), self.check_point(q)
        if p == q:
            return p
        w = (q - p) / (q - p.conjugate())
        r = math.tanh(t * self.distance(p, q) / 2.0)
        wm = r * w / abs(w)
        return self.check_point((p - wm * p.conjugate()) / (1 - wm))

    def midpoint(self, p, q):
        return self.geodesic_point(p, q, 0.5)

    def point_to_json(self, p):
        return [p.real, p.imag]

    def element_to_json(self, g):
        return np.asarray(g).tolist()

    def point_from_json(self, obj):
        return self.check_point(obj)

    def element_from_json(self, obj):
        return self.check_element(obj)

    def random_point(self, rng, scale=2.0):
        return complex(rng.normal() * scale, math.exp(rng.normal() * scale / 2))

    def random_element(self, rng, scale=1.0):
        a, b, c = rng.normal(size=3) * scale
        # exp of a random sl2 element
        x = np.array([[a, b], [c, -a]])
        lam, v = np.linalg.eig(x)
        g = (v @ np.diag(np.exp(lam)) @ np.linalg.inv(v)).real
        return _normalize_sl2(g)

    def describe(self):
        return {"kind": self.kind}


@dataclass(frozen=True)
class PosDefinite(Space):
    size: int = 2

    discrete = False
    kind = "pos"

    # smallest eigenvalue must exceed this fraction of the largest
    min_eig_ratio = 1e-12

    def __post_init__(self):
        if int(self.size) < 2:
            raise ValidationError("matrix size must be >= 2")

    def basepoint(self):
        return _frozen(np.eye(self.size))

    def identity(self):
        return _frozen(np.eye(self.size))

    def check_point(self, p):
        if isinstance(p, LogSPD):
            if p.vecs.shape != (self.size, self.size):
                raise ValidationError("LogSPD point has the wrong size")
            return p
        p = np.asarray(p, dtype=float)
        if p.shape != (self.size, self.size):
            raise ValidationError(f"expected a {self.size}x{self.size} matrix")
        if not np.all(np.isfinite(p)):
            raise ValidationError("matrix has non-finite entries")
        scale = np.max(np.abs(p))
        if np.max(np.abs(p - p.T)) > 1e-12 * scale:
            raise ValidationError("matrix is not symmetric")
        lam = np.linalg.eigvalsh(0.5 * (p + p.T))
        if not lam[0] > self.min_eig_ratio * lam[-1]:
            raise ValidationError(
                f"matrix is not safely positive definite (eigenvalues {lam[0]:.3g} .. {lam[-1]:.3g})"
            )
        return p

    def check_element(self, g):
        g = np.asarray(g, dtype=float)
        if g.shape != (self.size, self.size):
            raise ValidationError(f"expected a {self.size}x{self.size} matrix")
        if not np.all(np.isfinite(g)) or np.linalg.det(g) == 0:
            raise ValidationError("matrix is not invertible")
        return g

    def _whiten(self, p):
        try:
            return np.linalg.cholesky(p)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(
                "Cholesky factorisation failed", diagnostics={"cond": float(np.linalg.cond(p))}
            ) from exc

    def distance(self, p, q):
        p, q = self.check_point(p), self.check_point(q)
        if isinstance(p, LogSPD) and not isinstance(q, LogSPD):
            p, q = q, p
        if isinstance(p, LogSPD):
            if p.spread <= q.spread and p.spread < 300:
                p = p.dense()
            elif q.spread < 300:
                p, q = q.dense(), p
            else:
                raise NumericalError(
                    "distance between two far log-form points is not supported",
                    diagnostics={"spreads": (p.spread, q.spread)},
                )
        chol = self._whiten(p)
        if isinstance(q, LogSPD):
            b = np.linalg.solve(chol, q.vecs)
            _, logsig = graded_svd(b, q.logeig / 2.0)
            return float(2.0 * np.sqrt(np.sum(logsig**2)))
        x = np.linalg.solve(chol, q)
        w = np.linalg.solve(chol, x.T)
        w = 0.5 * (w + w.T)
        try:
            lam = np.linalg.eigvalsh(w)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(
                "symmetric eigensolve failed", diagnostics={"cond": float(np.linalg.cond(w))}
            ) from exc
        if lam[0] <= 0:
            raise NumericalError("whitened matrix lost definiteness", diagnostics={"eig": lam.tolist()})
        return float(np.sqrt(np.sum(np.log(lam) ** 2)))

    def act(self, g, p):
        g, p = self.check_element(g), self.check_point(p)
        if isinstance(p, LogSPD):
            u, logsig = graded_svd(g @ p.vecs, p.logeig / 2.0)
            return LogSPD(u, 2.0 * logsig)
        m = g @ p @ g.T
        return _frozen(0.5 * (m + m.T))

    def compose(self, g1, g2):
        return _frozen(self.check_element(g1) @ self.check_element(g2))

    def inverse(self, g):
        g = self.check_element(g)
        try:
            return _frozen(np.linalg.inv(g))
        except np.linalg.LinAlgError as exc:
            raise NumericalError("singular matrix has no inverse") from exc

    def midpoint(self, p, q):
        p, q = self.check_point(p), self.check_point(q)
        lam, v = np.linalg.eigh(p)
        half = (v * np.sqrt(lam)) @ v.T
        ihalf = (v / np.sqrt(lam)) @ v.T
        inner = ihalf @ q @ ihalf
        lam2, v2 = np.linalg.eigh(0.5 * (inner + inner.T))
        m = half @ ((v2 * np.sqrt(lam2)) @ v2.T) @ half
        return _frozen(0.5 * (m + m.T))

    def point_to_json(self, p):
        if isinstance(p, LogSPD):
            if p.spread < 700:
                return p.dense().tolist()
            return {"eigvecs": p.vecs.tolist(), "logeig": p.logeig.tolist()}
        return np.asarray(p).tolist()

    def element_to_json(self, g):
        return np.asarray(g).tolist()

    def point_from_json(self, obj):
        if isinstance(obj, dict):
            return LogSPD(np.asarray(obj["eigvecs"], float), np.asarray(obj["logeig"], float))
        return self.check_point(obj)

    def element_from_json(self, obj):
        return self.check_element(obj)

    def random_point(self, rng, scale=1.0):
        x = rng.normal(size=(self.size, self.size)) * scale
        return _frozen(expm_sym(0.5 * (x + x.T)))

    def random_element(self, rng, scale=1.0):
        q1, _ = np.linalg.qr(rng.normal(size=(self.size, self.size)))
        q2, _ = np.linalg.qr(rng.normal(size=(self.size, self.size)))
        return _frozen(q1 @ np.diag(np.exp(rng.normal(size=self.size) * scale)) @ q2)

    def describe(self):
        return {"kind": self.kind, "size": self.size}


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def expm_sym(x):
    lam, v = np.linalg.eigh(0.5 * (x + x.T))
    return (v * np.exp(lam)) @ v.T


def logm_spd(p):
    lam, v = np.linalg.eigh(0.5 * (p + p.T))
    return (v * np.log(lam)) @ v.T


# ---------------------------------------------------------------------------
# CAT(0) checks


def semiparallelogram_slack(space, x, y, z, w):
    """``2d(x,w)^2 + 2d(y,w)^2 - d(x,y)^2 - 4d(z,w)^2``; nonnegative when the law holds."""
    d = space.distance
    return 2 * d(x, w) ** 2 + 2 * d(y, w) ** 2 - d(x, y) ** 2 - 4 * d(z, w) ** 2


def semiparallelogram_check(space, x, y, ws, candidates=None, tol=1e-9):
    """Look for a point ``z`` satisfying the law for ``x, y`` against every ``w``.

    With ``candidates=None`` the space's own geodesic midpoint is the only
    candidate.  Returns ``(ok, z, worst_slack)``; ``z`` is None on failure.
    """
    if candidates is None:
        candidates = [space.midpoint(x, y)]
    best = None
    for z in candidates:
        worst = min(semiparallelogram_slack(space, x, y, z, w) for w in ws)
        if best is None or worst > best[1]:
            best = (z, worst)
        if worst >= -tol:
            return True, z, worst
    return False, None, best[1] if best else -math.inf


def catzero_sample(space, count, rng, tol=1e-9):
    """Semiparallelogram slack on ``count`` random ``(x, y, w)`` with ``z`` the midpoint.

    Returns ``(failures, worst_slack)``.  For lattices, where midpoints are
    not unique, use :func:`semiparallelogram_check` with explicit candidates.
    """
    failures, worst = 0, math.inf
    for _ in range(count):
        x, y, w = (space.random_point(rng) for _ in range(3))
        s = semiparallelogram_slack(space, x, y, space.midpoint(x, y), w)
        worst = min(worst, s)
        failures += s < -tol
    return failures, worst


def lattice_counterexample(radius=3):
    """The semiparallelogram check for ``x = (1, 0)``, ``y = (0, 1)`` in ``(Z^2, L1)``.

    Every point of the radius ball is tried as ``z`` against every ``w`` in
    the ball.  ``w = (1, 1)`` forces ``z = (1, 1)`` and ``w = (0, 0)`` forces
    ``z = (0, 0)``, so none works and the lattice is not CAT(0).
    """
    space = ZdLattice(2)
    ball = lattice_ball(2, radius)
    return semiparallelogram_check(space, (1, 0), (0, 1), ball, candidates=ball)


def lattice_ball(dim, radius):
    """All integer vectors of L1 norm at most ``radius``."""
    out = [()]
    for _ in range(dim):
        out = [p + (k,) for p in out for k in range(-radius, radius + 1)]
    return [p for p in out if sum(abs(a) for a in p) <= radius]


# ---------------------------------------------------------------------------
# DSL


_SPACE_RE = re.compile(r"^\s*(z|zd|f|free|h2|h|pos)\s*:?\s*(\d*)\s*$", re.IGNORECASE)


def parse_space(text):
    """``"z:2"``/``"z2"``, ``"f:2"``/``"f2"``, ``"h2"``, ``"pos:2"``/``"pos2"``."""
    m = _SPACE_RE.match(text or "")
    if not m:
        raise ValidationError(f"unknown space {text!r}")
    kind, num = m.group(1).lower(), m.group(2)
    if kind in ("h", "h2"):
        if kind == "h" and num not in ("", "2"):
            raise ValidationError(f"unknown space {text!r}")
        return HyperbolicPlane()
    n = int(num) if num else 2
    if kind in ("z", "zd"):
        return ZdLattice(int(num) if num else 1)
    if kind in ("f", "free"):
        return FreeGroup(n)
    return PosDefinite(n)


def space_from_json(obj):
    kind = obj["kind"]
    if kind == "zd":
        return ZdLattice(obj["dim"])
    if kind == "free":
        return FreeGroup(obj["rank"])
    if kind == "h2":
        return HyperbolicPlane()
    if kind == "pos":
        return PosDefinite(obj["size"])
    raise ValidationError(f"unknown space kind {kind!r}")
