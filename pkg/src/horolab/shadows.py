"""Epsilon-shadows and intersection witnesses along trajectories.

``U_eps(y) = {z : d(x0, y) + d(y, z) <= d(x0, z) + eps d(x0, y)}``.

The margin of ``z`` in ``U_eps(y)`` is ``(d(x0, z) - d(y, z)) - (1 - eps) d(x0, y)``.
The horofunction form ``Phi(z)(y) <= (eps - 1) d(x0, y)`` negates both sides
of the same floating-point comparison, so the two predicates agree bit for
bit, not just up to rounding.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NotBallisticError, ValidationError
from .lln import BALLISTIC_THRESHOLD, good_time_cutoff, tail_mean
from .spaces import FreeGroup, ZdLattice
from .walks import SCHEMA_VERSION


def _check_eps(eps):
    eps = float(eps)
    if not 0.0 < eps < 1.0:
        raise ValidationError("eps must lie strictly between 0 and 1 (eps = 0 gives sets too thin to intersect)")
    return eps


def shadow_margin(d0y, dyz, d0z, eps):
    return (d0z - dyz) - (1.0 - eps) * d0y


def in_shadow(space, y, z, eps):
    """``(z in U_eps(y), margin)``."""
    eps = _check_eps(eps)
    y, z = space.check_point(y), space.check_point(z)
    m = shadow_margin(space.radius(y), space.distance(y, z), space.radius(z), eps)
    return bool(m >= 0), float(m)


def shadow_via_horofunction(space, y, z, eps):
    """``Phi(z)(y) <= (eps - 1) d(x0, y)`` with ``Phi(z) = d(z, .) - d(z, x0)``."""
    eps = _check_eps(eps)
    y, z = space.check_point(y), space.check_point(z)
    phi = space.distance(z, y) - space.radius(z)
    return bool(phi <= (eps - 1.0) * space.radius(y))


# ---------------------------------------------------------------------------
# start times


@dataclass(frozen=True)
class StartTime:
    N: int
    K: int
    delta: float
    A_hat: float
    eps: float
    N_radial: int
    sampled_n: int

    def to_json(self):
        return dict(self.__dict__)


def admissible_delta(eps, A, safety=0.9):
    """``safety * eps A / (2 - eps)``; any ``delta`` below ``eps A/(2-eps)`` has ``2 delta/(A + delta) < eps``."""
    return safety * eps * A / (2.0 - eps)


def suggest_start_time(traj, eps, A_hat=None, samples=200, threshold=BALLISTIC_THRESHOLD):
    """Start parameters ``(N, K, delta)`` for the witness search.

    ``K`` is the smallest good-time cutoff (with tolerance ``delta``) over
    ``samples`` evenly spaced ``n`` in ``[T/2, T]``; ``N`` is at least ``K``
    and beyond the last observed ``k`` with ``a(k) >= (A + delta) k``.
    """
    eps = _check_eps(eps)
    if A_hat is None:
        A_hat = tail_mean(traj)
    A = float(getattr(A_hat, "A_hat", A_hat))
    if A <= threshold:
        raise NotBallisticError(f"drift estimate {A:.3g} is not above {threshold:g}")
    delta = admissible_delta(eps, A)
    assert 2 * delta / (A + delta) < eps
    T = traj.T
    ns = np.unique(np.linspace(max(1, T // 2), T, samples).astype(np.int64))
    K = int(good_time_cutoff(traj, delta, A, ns).min())
    a = traj.radial_all()
    ks = np.arange(1, T + 1)
    over = np.flatnonzero(a[1:] >= (A + delta) * ks)
    n_rad = int(ks[over[-1]]) + 1 if len(over) else 1
    return StartTime(max(K, n_rad), K, delta, A, eps, n_rad, len(ns))


# ---------------------------------------------------------------------------
# intersection witnesses


@dataclass(frozen=True)
class IntersectionWitness:
    eps: float
    N: int
    M: int
    horizon: int
    found: bool
    n: int | None
    margins: np.ndarray | None
    near_miss_n: int | None = None
    near_miss_margin: float | None = None
    scanned: list = field(default_factory=list)

    def to_json(self):
        out = {
            "schema_version": SCHEMA_VERSION,
            "eps": self.eps,
            "N": self.N,
            "M": self.M,
            "horizon": self.horizon,
            "found": self.found,
            "n": self.n,
        }
        if self.margins is not None:
            out["margin_min"] = float(np.min(self.margins))
            out["margin_median"] = float(np.median(self.margins))
        if not self.found:
            out["near_miss_n"] = self.near_miss_n
            out["near_miss_margin"] = self.near_miss_margin
        return out

    def near_miss_csv(self):
        """``n, min_margin, complete``; ``complete = 0`` rows stopped at the first violation."""
        buf = io.StringIO()
        buf.write("n,min_margin,complete\n")
        for n, m, full in self.scanned:
            buf.write(f"{int(n)},{float(m)!r},{int(full)}\n")
        return buf.getvalue()


def witness_margins(traj, n, ks, eps):
    ks = np.asarray(ks, dtype=np.int64)
    return shadow_margin(traj.radial_at(ks), traj.pair_distances(n, ks), traj.radial(n), eps)


def find_intersection_witness(traj, eps, N, M, horizon=None, block=256, record=False):
    """First ``n in (M, horizon]`` with ``Z_n x0`` in every ``U_eps(Z_k x0)``, ``N <= k <= M``.

    A miss is a value, not an error: the result then carries the best near
    miss (largest minimal margin seen).
    """
    eps = _check_eps(eps)
    N, M = int(N), int(M)
    horizon = 10 * M if horizon is None else int(horizon)
    if not 0 <= N <= M <= horizon <= traj.T:
        raise ValidationError(f"need 0 <= N <= M <= horizon <= T, got {N}, {M}, {horizon}, T={traj.T}")
    ks = np.arange(M, N - 1, -1, dtype=np.int64)
    a_k = traj.radial_at(ks)
    slack = (1.0 - eps) * a_k
    best_n, best = None, -math.inf
    scanned = []
    for n in range(M + 1, horizon + 1):
        a_n = traj.radial(n)
        worst = math.inf
        complete = True
        for lo in range(0, len(ks), block):
            m = (a_n - traj.pair_distances(n, ks[lo : lo + block])) - slack[lo : lo + block]
            worst = min(worst, float(m.min()))
            # a negative running minimum that cannot beat the best near miss ends this n
            if worst < 0 and worst <= best:
                complete = lo + block >= len(ks)
                break
        if record:
            scanned.append((n, worst, complete))
        if worst >= 0:
            margins = witness_margins(traj, n, np.arange(N, M + 1), eps)
            return IntersectionWitness(eps, N, M, horizon, True, n, margins, scanned=scanned)
        if worst > best:
            best_n, best = n, worst
    return IntersectionWitness(eps, N, M, horizon, False, None, None, best_n, best, scanned)


def verify_witness(traj, witness):
    """Recheck every ``k in [N, M]`` with :func:`in_shadow` on the orbit points.

    Discrete spaces use the points themselves; elsewhere the trajectory's
    distances stand in, since far orbit points need not be representable.
    """
    if not witness.found:
        return False
    n = witness.n
    sp = traj.space
    if isinstance(sp, (ZdLattice, FreeGroup)):
        z = traj.point(n)
        return all(in_shadow(sp, traj.point(k), z, witness.eps)[0] for k in range(witness.N, witness.M + 1))
    m = witness_margins(traj, n, np.arange(witness.N, witness.M + 1), witness.eps)
    return bool(np.all(m >= -1e-9))
