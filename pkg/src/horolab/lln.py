"""Drift estimation, limit horofunctions and the checks built on them.

``a(n) = d(x0, Z_n x0)``.  The drift ``A`` is estimated by averaging
``a(n)/n`` over the second half of a trajectory; the per-space limit
horofunction then lets us watch ``-h(Z_n x0)/n`` approach ``A``.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import NotBallisticError, ValidationError
from .horo import Busemann, FreeRay, IdealPoint, MatrixDirection, Signature, _pos_ray_term, _ray_term
from .spaces import FreeGroup, HyperbolicPlane, PosDefinite, ZdLattice
from .walks import SCHEMA_VERSION, log_spaced, sample_walk

BALLISTIC_THRESHOLD = 1e-3
TAIL_POINTS = 2000
RESOLUTION_RADIUS = 30.0


# ---------------------------------------------------------------------------
# drift


@dataclass(frozen=True)
class DriftEstimate:
    A_hat: float
    T: int
    per_seed: np.ndarray
    ci: float
    method: str = "tail-mean"
    window: tuple = (0.5, 1.0)
    late: float | None = None  # the same estimate over [3T/4, T]

    def __post_init__(self):
        if self.A_hat < 0 or self.ci < 0:
            raise ValidationError("drift estimate and its CI must be nonnegative")

    def to_json(self):
        return {
            "schema_version": SCHEMA_VERSION,
            "A_hat": self.A_hat,
            "T": self.T,
            "per_seed": [float(x) for x in self.per_seed],
            "ci": self.ci,
            "method": self.method,
            "window": list(self.window),
            "late": self.late,
        }


def tail_mean(traj, lo=0.5, hi=1.0, points=TAIL_POINTS):
    """Mean of ``a(n)/n`` over ``n`` in ``[lo T, hi T]`` at an even stride."""
    T = traj.T
    a, b = max(1, int(math.ceil(lo * T))), max(1, int(hi * T))
    stride = max(1, (b - a) // points)
    ns = np.arange(a, b + 1, stride)
    return float(np.mean(traj.radial_at(ns) / ns))


def _seed_drift(args):
    space, driver, T, seed = args
    traj = sample_walk(space, driver, T, seed)
    return tail_mean(traj), tail_mean(traj, 0.75)


def _ci(vals):
    return float(np.std(vals, ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else 0.0


def estimate_drift(space, driver, T, seeds, workers=1, min_T=1000):
    """Tail-mean drift estimate over several seeds, with a standard-error CI."""
    T = int(T)
    if T < min_T:
        raise ValidationError(f"T must be at least {min_T}")
    seeds = list(seeds)
    if not seeds:
        raise ValidationError("at least one seed is required")
    jobs = [(space, driver, T, s) for s in seeds]
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_seed_drift, jobs))
    else:
        rows = [_seed_drift(j) for j in jobs]
    per_seed = np.array([r[0] for r in rows])
    late = np.array([r[1] for r in rows])
    return DriftEstimate(float(per_seed.mean()), T, per_seed, _ci(per_seed), late=float(late.mean()))


def drift_from_trajectories(trajs):
    per_seed = np.array([tail_mean(t) for t in trajs])
    late = np.array([tail_mean(t, 0.75) for t in trajs])
    return DriftEstimate(float(per_seed.mean()), trajs[0].T, per_seed, _ci(per_seed), late=float(late.mean()))


# ---------------------------------------------------------------------------
# limit horofunctions


def _free_direction(traj):
    back = traj._backend
    T = traj.T
    window = np.arange((3 * T) // 4, T + 1)
    stable = int(back.lcp(T, window).min())
    word = traj.point(T)
    if not word:
        raise NotBallisticError("the walk ended at the identity; no direction to extend")
    ray = FreeRay(word, (word[-1],))
    return ray, {"stable_prefix_length": stable, "window": [int(window[0]), T]}


def _zd_direction(traj, A_hat, stderr):
    v = np.asarray(traj.point(traj.T), dtype=float) / traj.T
    thr = max(0.05 * A_hat, 3.0 * stderr)
    signs = tuple(int(np.sign(x)) if abs(x) > thr else 0 for x in v)
    if not any(signs):
        raise NotBallisticError("no coordinate grows linearly")
    return Signature(signs), {"velocity": v.tolist(), "threshold": thr}


def boundary_estimates(traj, ns):
    """Boundary points ``Z_n(inf) ~ top singular direction`` on the upper half-plane.

    Returned as angles ``theta in [0, pi)`` with ``xi = cot(theta)``, which
    avoids the chart singularity at infinity.
    """
    out = []
    for _, state in traj.iter_states(ns):
        u, _ = state.svd()
        theta = math.atan2(u[1, 0], u[0, 0]) % math.pi
        out.append(theta)
    return np.array(out)


def _angle_to_xi(theta):
    s = math.sin(theta)
    if abs(s) < 1e-12:
        return math.inf
    return math.cos(theta) / s


def _h2_direction(traj):
    T = traj.T
    ns = np.unique(np.linspace((3 * T) // 4, T, min(200, T // 4 + 1)).astype(int))
    theta = boundary_estimates(traj, ns)
    # successive boundary estimates should form a Cauchy sequence
    steps = np.abs(np.angle(np.exp(2j * np.diff(theta)))) / 2
    return IdealPoint(_angle_to_xi(theta[-1])), {
        "angle": float(theta[-1]),
        "window": [int(ns[0]), T],
        "last_step": float(steps[-1]) if len(steps) else 0.0,
    }


def _pos_direction(traj):
    u, logsig = traj.stabilized_state(traj.T).svd()
    x = (u * logsig) @ u.T / traj.T
    if np.linalg.norm(x) == 0:
        raise NotBallisticError("log(Z Z^T) vanishes")
    return MatrixDirection.normalized(x), {"exponents": (logsig / traj.T).tolist()}


@dataclass(frozen=True, eq=False)
class LimitHorofunction:
    h: Busemann
    A_hat: float
    details: dict = field(default_factory=dict)
    # the trajectory the direction was read from, if any
    source: object = field(default=None, repr=False)

    def to_json(self):
        return {"horofunction": self.h.to_json(), "A_hat": self.A_hat, "details": self.details}


def limit_horofunction(traj, A_hat=None, stderr=0.0, threshold=BALLISTIC_THRESHOLD):
    """Candidate ``h`` for which ``-h(Z_n x0)/n -> A`` along this trajectory."""
    if A_hat is None:
        A_hat = tail_mean(traj)
    A_hat = float(getattr(A_hat, "A_hat", A_hat))
    if A_hat <= threshold:
        raise NotBallisticError(f"drift estimate {A_hat:.3g} is not above {threshold:g}")
    sp = traj.space
    if isinstance(sp, FreeGroup):
        d, info = _free_direction(traj)
    elif isinstance(sp, ZdLattice):
        d, info = _zd_direction(traj, A_hat, stderr)
    elif isinstance(sp, HyperbolicPlane):
        d, info = _h2_direction(traj)
    elif isinstance(sp, PosDefinite):
        d, info = _pos_direction(traj)
    else:
        raise ValidationError(f"unsupported space {sp!r}")
    return LimitHorofunction(Busemann(sp, d), A_hat, info, traj)


# ---------------------------------------------------------------------------
# LLN check


def _h2_busemann_logspd(direction, p):
    # for P = g g^T with det 1: |z - xi|^2 / Im z = v^T P v, v = (1, -xi)
    if direction.at_infinity:
        v = np.array([0.0, 1.0])
        off = 0.0
    else:
        v = np.array([1.0, -direction.xi])
        off = math.log(1.0 + direction.xi**2)
    w = (v @ p.vecs) ** 2
    mask = w > 0
    logs = np.log(w[mask]) + p.logeig[mask]
    top = logs.max()
    return float(top + math.log(np.exp(logs - top).sum()) - off)


def eval_on_trajectory(traj, h, ns):
    """``h(Z_n x0)`` for each ``n``, without leaving log form on matrix spaces."""
    sp = traj.space
    ns = np.asarray(ns, dtype=np.int64)
    if isinstance(sp, (PosDefinite, HyperbolicPlane)):
        vals = {}
        for n, state in traj.iter_states(ns):
            p = state.orbit_point()
            if isinstance(sp, HyperbolicPlane) and isinstance(h, Busemann):
                vals[n] = _h2_busemann_logspd(h.direction, p)
            elif isinstance(sp, HyperbolicPlane):
                vals[n] = h.eval(traj.point(n))
            else:
                vals[n] = h.eval(p)
        return np.array([vals[int(n)] for n in ns])
    return np.array([float(h.eval(traj.point(int(n)))) for n in ns])


def _adapted_values(traj, h, ns):
    # h's direction is the eigenflag of log(Z_T Z_T^T) on this very trajectory,
    # so h(Z_n x0) reads off the pivots of the backward sweep
    piv = traj.flag_sweep().log_pivots(ns)
    if isinstance(traj.space, HyperbolicPlane):
        return 0.5 * (piv[:, 1] - piv[:, 0])
    return -piv @ h.direction.eigenvalues


@dataclass(frozen=True)
class LLNReport:
    ns: np.ndarray
    values: np.ndarray
    radial: np.ndarray
    A: float
    terminal_deviation: float
    horofunction: dict
    bound_ok: bool
    warnings: tuple = ()

    def to_json(self):
        return {
            "schema_version": SCHEMA_VERSION,
            "A": self.A,
            "terminal_deviation": self.terminal_deviation,
            "horofunction": self.horofunction,
            "bound_ok": self.bound_ok,
            "warnings": list(self.warnings),
            "sequence": [[int(n), float(v)] for n, v in zip(self.ns, self.values)],
        }

    def to_csv(self):
        lines = ["n,value"]
        lines += [f"{int(n)},{float(v)!r}" for n, v in zip(self.ns, self.values)]
        return "\n".join(lines) + "\n"


def check_lln(traj, h, A, points=40):
    """Evaluate ``-h(Z_n x0)/n`` at log-spaced ``n`` and compare with ``A``.

    On matrix spaces, a :class:`LimitHorofunction` read off ``traj`` itself
    is evaluated through the trajectory's flag sweep, which stays exact at
    any distance; other horofunctions go through the closed forms.
    """
    A = float(getattr(A, "A_hat", A))
    matrix = isinstance(traj.space, (HyperbolicPlane, PosDefinite))
    adapted = matrix and isinstance(h, LimitHorofunction) and h.source is traj
    if isinstance(h, LimitHorofunction):
        h = h.h
    ns = log_spaced(traj.T, points)
    if ns[-1] != traj.T:
        ns = np.append(ns, traj.T)
    raw = _adapted_values(traj, h, ns) if adapted else eval_on_trajectory(traj, h, ns)
    vals = -raw / ns
    radial = traj.radial_at(ns) / ns
    bound_ok = bool(np.all(vals <= radial + 1e-9))
    warnings = []
    if matrix and not adapted and radial[-1] * ns[-1] > RESOLUTION_RADIUS:
        # a boundary point known to ~1e-16 cannot separate orbit points
        # closer to the boundary than that
        last = int(ns[np.flatnonzero(radial * ns <= RESOLUTION_RADIUS)[-1]]) if radial[0] * ns[0] <= RESOLUTION_RADIUS else 0
        warnings.append(
            f"orbit leaves the float64 resolution of a boundary estimate after n = {last}; "
            "later values are exact only for directions known exactly"
        )
    return LLNReport(ns, vals, radial, A, float(abs(vals[-1] - A)), h.to_json(), bound_ok, tuple(warnings))


# ---------------------------------------------------------------------------
# good times


@dataclass(frozen=True)
class GoodTimeReport:
    eps: float
    A_used: float
    K: int
    T: int
    good_times: np.ndarray
    min_margins: np.ndarray
    mode: str = "exact"
    reverify_min_margin: float | None = None

    @property
    def density(self):
        return len(self.good_times) / self.T

    @property
    def verified(self):
        return self.reverify_min_margin is None or self.reverify_min_margin >= -1e-9

    def to_json(self):
        return {
            "schema_version": SCHEMA_VERSION,
            "eps": self.eps,
            "A_used": self.A_used,
            "K": self.K,
            "T": self.T,
            "mode": self.mode,
            "density": self.density,
            "count": int(len(self.good_times)),
            "good_times": [int(n) for n in self.good_times],
            "min_margins": [float(m) for m in self.min_margins],
            "reverify_min_margin": self.reverify_min_margin,
        }


def _k_grid(K, n, mode):
    if mode == "exact":
        return np.arange(n, K - 1, -1, dtype=np.int64)
    grid = np.unique(np.round(np.geomspace(K, n, 200)).astype(np.int64))
    return grid[::-1]


def _scan(traj, n, K, slope, a_n, mode, block=1024, stop_at_failure=True):
    """Minimal margin over ``k in [K, n]`` (scanned downward) and the largest failing ``k``."""
    ks = _k_grid(K, n, mode)
    worst = math.inf
    for lo in range(0, len(ks), block):
        chunk = ks[lo : lo + block]
        m = a_n - traj.pair_distances(n, chunk) - slope * chunk
        worst = min(worst, float(m.min()))
        bad = np.flatnonzero(m < 0)
        if len(bad) and stop_at_failure:
            return worst, int(chunk[bad[0]])
    return worst, None


def find_good_times(traj, eps, A, K, mode=None, ns=None, verify=True):
    """All ``n in [K, T]`` with ``a(n) - d(Z_k x0, Z_n x0) >= (A - eps) k`` for ``K <= k <= n``.

    ``mode="grid"`` checks ``k`` on a geometric grid only and is flagged as
    approximate; it is the default for ``T > 1e5``.
    """
    eps = float(eps)
    A = float(getattr(A, "A_hat", A))
    K = int(K)
    if eps <= 0:
        raise ValidationError("eps must be positive")
    if K < 1:
        raise ValidationError("K must be at least 1")
    T = traj.T
    mode = mode or ("exact" if T <= 100_000 else "grid")
    slope = A - eps
    cand = np.arange(K, T + 1) if ns is None else np.asarray(ns, dtype=np.int64)
    radial = traj.radial_at(cand)
    good, margins = [], []
    for n, a_n in zip(cand, radial):
        worst, fail = _scan(traj, int(n), K, slope, a_n, mode)
        if fail is None:
            good.append(int(n))
            margins.append(worst)
    good = np.array(good, dtype=np.int64)
    rep = GoodTimeReport(eps, A, K, T, good, np.array(margins), mode)
    if verify:
        rep = GoodTimeReport(eps, A, K, T, good, rep.min_margins, mode, reverify(traj, rep))
    return rep


def reverify(traj, report):
    """Second pass: recompute every margin of every reported good time, no early exit."""
    worst = math.inf
    slope = report.A_used - report.eps
    for n in report.good_times:
        n = int(n)
        ks = np.arange(report.K, n + 1)
        m = traj.radial(n) - traj.pair_distances(n, ks) - slope * ks
        worst = min(worst, float(m.min()))
    return None if worst == math.inf else worst


def good_time_cutoff(traj, eps, A, ns):
    """For each ``n``: the smallest ``K`` for which ``n`` is a good time."""
    slope = float(A) - float(eps)
    out = []
    for n in np.asarray(ns, dtype=np.int64):
        _, fail = _scan(traj, int(n), 1, slope, traj.radial(int(n)), "exact")
        out.append(1 if fail is None else fail + 1)
    return np.array(out, dtype=np.int64)


# ---------------------------------------------------------------------------
# ray approximation


def ray_distance(space, direction, t, x):
    """``d(gamma(t), x)`` for the unit-speed ray from ``x0`` toward ``direction``."""
    if isinstance(space, ZdLattice):
        s = np.asarray(direction.signs, dtype=float)
        m = np.count_nonzero(s)
        return float(np.abs(np.asarray(x, dtype=float) - t * s / m).sum())
    if isinstance(space, FreeGroup):
        return float(space.distance(direction.word(int(math.floor(t))), x))
    if isinstance(space, HyperbolicPlane):
        return float(_ray_term(space, direction, x, t) + t)
    return float(_pos_ray_term(direction, x, t) + t)


@dataclass(frozen=True)
class RayApproxReport:
    ray_gaps: np.ndarray
    horo_values: np.ndarray
    A: float
    delta: float
    tol: float
    verdict: str
    tail_start: int

    def to_json(self):
        return {
            "schema_version": SCHEMA_VERSION,
            "A": self.A,
            "delta": self.delta,
            "tol": self.tol,
            "verdict": self.verdict,
            "tail_start": self.tail_start,
            "ray_gaps": self.ray_gaps.tolist(),
            "horo_values": self.horo_values.tolist(),
        }


def ray_approx_check(space, points, ray, A, delta=0.1, tol=1e-9, tail=0.25):
    """Test: ``d(x_n, gamma(An))/n`` small on the tail implies ``-h(x_n)/n`` near ``A``.

    ``points[n-1]`` is ``x_n``.  Verdict is ``"holds"``, ``"fails"`` or
    ``"premise fails"`` (then nothing is claimed about the conclusion).
    """
    points = list(points)
    if not points:
        raise ValidationError("need at least one point")
    h = Busemann(space, ray)
    ns = np.arange(1, len(points) + 1)
    gaps = np.array([ray_distance(space, ray, A * n, x) / n for n, x in zip(ns, points)])
    horo = np.array([-h.eval(x) / n for n, x in zip(ns, points)])
    start = int(len(points) * (1 - tail))
    if np.max(gaps[start:]) >= delta:
        verdict = "premise fails"
    elif np.max(np.abs(horo[start:] - A)) <= delta + tol:
        verdict = "holds"
    else:
        verdict = "fails"
    return RayApproxReport(gaps, horo, float(A), float(delta), float(tol), verdict, start + 1)
