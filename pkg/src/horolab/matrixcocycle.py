"""Matrix cocycles: stabilized products, Lyapunov spectra, the Oseledec matrix.

For ``Z_n = g_1 g_2 ... g_n`` the transposed product ``Z_n^T = g_n^T ... g_1^T``
is accumulated as ``Q_n T_n`` with ``Q_n`` orthogonal (re-orthonormalized
every step) and ``T_n = R_n ... R_1`` upper triangular.  ``T_n`` is stored
entrywise as (sign, log|entry|), so nothing overflows however long the
product.  The log-diagonal of the ``R_k`` gives the classical QR estimate of
the Lyapunov exponents; the graded factor ``Z_n = T_n^T Q_n^T`` gives exact
singular values and the orbit point ``Z_n Z_n^T`` in log form.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .errors import NotBallisticError, NumericalError, ValidationError
from .laws import sample_increments
from .linalg import column_graded, graded_svd
from .spaces import LogSPD

COND_WARN = 1e12


@njit(cache=True)
def _extend(gs, q, ts, tl, logdiag, track):
    n = q.shape[0]
    for m in range(gs.shape[0]):
        a = np.ascontiguousarray(gs[m].T) @ q
        qn, r = np.linalg.qr(a)
        for i in range(n):
            if r[i, i] < 0:
                for k in range(n):
                    qn[k, i] = -qn[k, i]
                    r[i, k] = -r[i, k]
        q[:, :] = qn
        for i in range(n):
            logdiag[i] += np.log(r[i, i])
        if not track:
            continue
        ns = np.zeros((n, n))
        nl = np.full((n, n), -np.inf)
        for i in range(n):
            for j in range(i, n):
                mx = -np.inf
                for l in range(i, j + 1):
                    if r[i, l] != 0.0 and ts[l, j] != 0.0:
                        v = np.log(abs(r[i, l])) + tl[l, j]
                        if v > mx:
                            mx = v
                if mx == -np.inf:
                    continue
                acc = 0.0
                for l in range(i, j + 1):
                    if r[i, l] != 0.0 and ts[l, j] != 0.0:
                        acc += np.sign(r[i, l]) * ts[l, j] * np.exp(np.log(abs(r[i, l])) + tl[l, j] - mx)
                if acc != 0.0:
                    ns[i, j] = np.sign(acc)
                    nl[i, j] = mx + np.log(abs(acc))
        ts[:, :] = ns
        tl[:, :] = nl


class StabilizedProduct:
    """Running QR accumulation of ``Z_n = g_1 ... g_n``.

    With ``track_factor=False`` only the orthogonal factor and the
    log-diagonal are kept (enough for Lyapunov exponents, and cheaper).
    """

    def __init__(self, size, track_factor=True):
        self.size = int(size)
        self.track_factor = bool(track_factor)
        self.q = np.eye(self.size)
        self.ts = np.eye(self.size)
        self.tl = np.where(np.eye(self.size) > 0, 0.0, -np.inf)
        self.logdiag = np.zeros(self.size)
        self.n = 0
        self.warnings = []

    def copy(self):
        out = StabilizedProduct.__new__(StabilizedProduct)
        out.size, out.track_factor, out.n = self.size, self.track_factor, self.n
        out.q, out.ts, out.tl, out.logdiag = self.q.copy(), self.ts.copy(), self.tl.copy(), self.logdiag.copy()
        out.warnings = list(self.warnings)
        return out

    def extend(self, gs, check_condition=True):
        gs = np.ascontiguousarray(np.asarray(gs, dtype=float))
        if gs.ndim == 2:
            gs = gs[None]
        if gs.shape[1:] != (self.size, self.size):
            raise ValidationError("increment size does not match the product")
        if len(gs) == 0:
            return self
        if check_condition:
            cond = np.linalg.cond(gs)
            bad = np.flatnonzero(~(cond <= COND_WARN))
            if len(bad):
                self.warnings.append(
                    f"{len(bad)} increments with condition number > {COND_WARN:.0e} "
                    f"(first at step {self.n + int(bad[0]) + 1})"
                )
        _extend(gs, self.q, self.ts, self.tl, self.logdiag, self.track_factor)
        self.n += len(gs)
        if not np.all(np.isfinite(self.logdiag)):
            raise NumericalError("singular increment in stabilized product", diagnostics={"n": self.n})
        return self

    def push(self, g):
        return self.extend(np.asarray(g, dtype=float)[None])

    @property
    def log_diagonal(self):
        return self.logdiag.copy()

    def orthogonality_error(self):
        return float(np.max(np.abs(self.q.T @ self.q - np.eye(self.size))))

    def graded_factor(self):
        """``(b, c)`` with ``Z_n = b @ diag(exp(c)) @ Q_n^T``."""
        if not self.track_factor:
            raise ValidationError("product was accumulated without its triangular factor")
        return column_graded(self.ts.T, self.tl.T)

    def svd(self):
        """Left singular vectors and log singular values of ``Z_n``."""
        b, c = self.graded_factor()
        return graded_svd(b, c)

    def log_singular_values(self):
        return self.svd()[1]

    def orbit_point(self):
        """``Z_n Z_n^T`` (the orbit of the identity) in log form."""
        u, logsig = self.svd()
        return LogSPD(u, 2.0 * logsig)

    def radius(self):
        """Affine-invariant distance from the identity to ``Z_n Z_n^T``."""
        return float(2.0 * np.sqrt(np.sum(self.log_singular_values() ** 2)))

    def dense(self):
        b, c = self.graded_factor()
        if np.max(np.abs(c)) > 700:
            raise NumericalError("product overflows float64", diagnostics={"max_log_scale": float(np.max(np.abs(c)))})
        return (b * np.exp(c)) @ self.q.T


def stabilized_product(increments, track_factor=True):
    gs = np.asarray(increments, dtype=float)
    return StabilizedProduct(gs.shape[-1], track_factor).extend(gs)


# ---------------------------------------------------------------------------
# spectra


@dataclass(frozen=True)
class LyapunovSpectrum:
    exponents: np.ndarray
    n_used: int
    per_seed: np.ndarray
    spread: np.ndarray
    method: str = "qr"

    def __post_init__(self):
        e = np.asarray(self.exponents)
        if np.any(np.diff(e) > 1e-12):
            raise ValidationError("spectrum must be sorted nonincreasing")

    def to_json(self):
        return {
            "exponents": self.exponents.tolist(),
            "n_used": self.n_used,
            "per_seed": self.per_seed.tolist(),
            "spread": self.spread.tolist(),
            "method": self.method,
        }


def _driver_size(driver):
    for law in driver.laws:
        if law.parametric:
            return len(law.params.get("diag", [0, 0]))
        return np.asarray(law.support[0]).shape[0]


def lyapunov_spectrum(driver, n, seeds, size=None, method="qr"):
    """Per-step exponents of ``Z_n`` averaged over seeds.

    ``method="qr"`` divides the accumulated log-diagonal by ``n``;
    ``method="svd"`` uses the exact log singular values of ``Z_n``.  The two
    agree as ``n`` grows; only the latter is exact at finite ``n``.
    """
    n = int(n)
    if n < 1:
        raise ValidationError("n must be positive")
    seeds = list(seeds)
    if not seeds:
        raise ValidationError("at least one seed is required")
    size = size or _driver_size(driver)
    rows = []
    warnings = []
    for seed in seeds:
        gs = increment_matrices(driver, n, seed, size)
        prod = StabilizedProduct(size, track_factor=(method == "svd")).extend(gs)
        warnings.extend(prod.warnings)
        if method == "svd":
            rows.append(prod.log_singular_values() / n)
        else:
            rows.append(np.sort(prod.logdiag)[::-1] / n)
    rows = np.asarray(rows)
    mean = np.sort(rows.mean(axis=0))[::-1]
    spread = rows.std(axis=0, ddof=1) / math.sqrt(len(seeds)) if len(seeds) > 1 else np.zeros(size)
    return LyapunovSpectrum(mean, n, rows, spread, method)


class _Space:
    def __init__(self, size):
        self.size = size


def increment_matrices(driver, T, seed, size):
    sample = sample_increments(driver, T, seed, _Space(size))
    if sample.matrices is not None:
        return sample.matrices
    table, _ = driver.support_table()
    sup = np.asarray([np.asarray(g, dtype=float) for g in table])
    return sup[sample.index]


# ---------------------------------------------------------------------------
# Oseledec matrix


@dataclass(frozen=True)
class OseledecDirection:
    X: np.ndarray
    Lambda: np.ndarray | None
    exponents: np.ndarray
    basis: np.ndarray
    n: int
    residuals: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    def tail_residual(self, frac=0.1):
        """Largest ``r_n`` over ``T frac <= n < T`` (``r_T`` is zero by construction)."""
        vals = [r for k, r in self.residuals if frac * self.n <= k < self.n]
        return max(vals) if vals else float("nan")

    @property
    def unit_direction(self):
        nrm = np.linalg.norm(self.X)
        if nrm == 0:
            raise NotBallisticError("Oseledec matrix is zero; no direction")
        return self.X / nrm

    def to_json(self):
        return {
            "X": self.X.tolist(),
            "Lambda": None if self.Lambda is None else self.Lambda.tolist(),
            "exponents": self.exponents.tolist(),
            "n": self.n,
            "residuals": [[int(k), float(r)] for k, r in self.residuals],
            "tail_residual": self.tail_residual(),
            "warnings": list(self.warnings),
        }


@njit(cache=True)
def _backward_flags(gs, q):
    """QR-propagate the frame ``q`` through ``g_T, ..., g_1``; ``out[k-1]`` is ``R_k``."""
    n = q.shape[0]
    out = np.zeros(gs.shape)
    for m in range(gs.shape[0] - 1, -1, -1):
        qn, r = np.linalg.qr(gs[m] @ np.ascontiguousarray(q))
        for i in range(n):
            if r[i, i] < 0:
                for k in range(n):
                    qn[k, i] = -qn[k, i]
                    r[i, k] = -r[i, k]
        q = qn
        out[m] = r
    return out


@njit(cache=True)
def _prefix_products(rs, grid):
    """``R_1 ... R_n`` in (sign, log) form for each ``n`` in the sorted ``grid``."""
    n = rs.shape[1]
    ps = np.eye(n)
    pl = np.full((n, n), -np.inf)
    for i in range(n):
        pl[i, i] = 0.0
    out_s = np.zeros((len(grid), n, n))
    out_l = np.full((len(grid), n, n), -np.inf)
    g = 0
    for m in range(rs.shape[0]):
        r = rs[m]
        ns = np.zeros((n, n))
        nl = np.full((n, n), -np.inf)
        for i in range(n):
            for j in range(i, n):
                mx = -np.inf
                for l in range(i, j + 1):
                    if ps[i, l] != 0.0 and r[l, j] != 0.0:
                        v = pl[i, l] + np.log(abs(r[l, j]))
                        if v > mx:
                            mx = v
                if mx == -np.inf:
                    continue
                acc = 0.0
                for l in range(i, j + 1):
                    if ps[i, l] != 0.0 and r[l, j] != 0.0:
                        acc += ps[i, l] * np.sign(r[l, j]) * np.exp(pl[i, l] + np.log(abs(r[l, j])) - mx)
                if acc != 0.0:
                    ns[i, j] = np.sign(acc)
                    nl[i, j] = mx + np.log(abs(acc))
        ps = ns
        pl = nl
        while g < len(grid) and grid[g] == m + 1:
            out_s[g] = ps
            out_l[g] = pl
            g += 1
    return out_s, out_l


@dataclass(frozen=True, eq=False)
class FlagSweep:
    """Backward QR sweep of ``Z_T`` started from its right singular vectors.

    ``factors[k-1]`` is ``R_k``.  For every ``n <= T``,
    ``U_T^T Z_n = R_1 ... R_n Q_n^T`` with ``U_T`` the left singular vectors
    of ``Z_T`` (the eigenbasis of the Oseledec matrix) and ``Q_n`` orthogonal.
    """

    v_T: np.ndarray
    log_singular_values: np.ndarray
    factors: np.ndarray

    @property
    def T(self):
        return len(self.factors)

    def log_pivots(self, ns):
        """``log d_i(n)`` for ``U_T^T Z_n Z_n^T U_T = U D U^T``, ``U`` unit upper triangular."""
        ns = np.asarray(ns, dtype=np.int64)
        cum = np.cumsum(np.log(np.abs(np.diagonal(self.factors, axis1=1, axis2=2))), axis=0)
        cum = np.vstack([np.zeros((1, cum.shape[1])), cum])
        return 2.0 * cum[ns]


def flag_sweep(gs):
    gs = np.ascontiguousarray(np.asarray(gs, dtype=float))
    if gs.ndim != 3 or len(gs) == 0:
        raise ValidationError("need a nonempty stack of square matrices")
    rev = StabilizedProduct(gs.shape[1]).extend(np.transpose(gs[::-1], (0, 2, 1)), check_condition=False)
    v_T, logsig = rev.svd()
    return FlagSweep(v_T, logsig, _backward_flags(gs, np.ascontiguousarray(v_T)))


def oseledec_residuals(gs, ns, exponents=None, sweep=None):
    """``r_n = max((1/n) log||L^-n Z_n||, (1/n) log||(L^-n Z_n)^-1||)`` at each ``n``.

    ``L = exp X`` with ``X`` taken at ``T = len(gs)``.  In the basis ``U_T``,
    ``L^-n Z_n`` is ``diag(exp(-n lambda)) R_1 ... R_n`` up to an orthogonal
    factor (see :class:`FlagSweep`), so no small angle is ever computed as a
    difference.  That is what keeps the residual meaningful once
    ``n (lambda_1 - lambda_N)`` exceeds the float range.
    """
    sweep = sweep or flag_sweep(gs)
    T = sweep.T
    ns = np.asarray(ns, dtype=np.int64)
    if len(ns) and (ns.min() < 1 or ns.max() > T):
        raise ValidationError(f"residual times must lie in [1, {T}]")
    if exponents is None:
        exponents = sweep.log_singular_values / T
    order = np.argsort(ns, kind="stable")
    ps, pl = _prefix_products(sweep.factors, ns[order])
    out = np.empty(len(ns))
    for slot, idx in enumerate(order):
        n = int(ns[idx])
        b, c = column_graded(ps[slot], pl[slot] - n * exponents[:, None])
        ls = graded_svd(b, c)[1]
        out[idx] = max(ls[0], -ls[-1]) / n
    return out


def log_grid(T, count=40, start=1):
    grid = np.unique(np.round(np.geomspace(start, T, count)).astype(np.int64))
    return grid[(grid >= start) & (grid <= T)]


def oseledec_direction(traj, residual_points=30, gap_warn=1e-3, ns=None):
    """Oseledec matrix ``X = log(Z_T Z_T^T) / (2T)`` and its residual sequence.

    Residuals are taken at log-spaced ``n`` (see :func:`oseledec_residuals`).
    """
    space = traj.space
    if getattr(space, "kind", None) != "pos":
        raise ValidationError("Oseledec direction needs a trajectory on a matrix space")
    T = traj.T
    final = traj.stabilized_state(T)
    u, logsig = final.svd()
    exponents = logsig / T
    X = (u * exponents) @ u.T
    X = 0.5 * (X + X.T)
    warnings = list(final.warnings)
    gaps = np.abs(np.diff(exponents))
    if len(gaps) and np.min(gaps) < gap_warn:
        warnings.append(f"degenerate spectrum: exponent gap {np.min(gaps):.2e} < {gap_warn:g}")
    try:
        lam = (u * np.exp(exponents)) @ u.T
    except FloatingPointError:
        lam = None
    grid = log_grid(T, residual_points) if ns is None else np.unique(np.asarray(ns, dtype=np.int64))
    vals = oseledec_residuals(None, grid, exponents, sweep=traj.flag_sweep())
    residuals = [(int(k), float(r)) for k, r in zip(grid, vals)]
    return OseledecDirection(X, lam, exponents, u, T, residuals, warnings)


@dataclass(frozen=True)
class DriftIdentityReport:
    A_hat: float
    predicted: float
    deviation: float
    tolerance: float
    passed: bool

    def to_json(self):
        return dict(self.__dict__)


def posn_drift_identity(A_hat, spectrum, tol=0.02):
    """Compare a drift estimate on ``Pos_N`` with ``2 sqrt(sum lambda_i^2)``."""
    lam = np.asarray(getattr(spectrum, "exponents", spectrum), dtype=float)
    predicted = float(2.0 * np.sqrt(np.sum(lam**2)))
    A = float(getattr(A_hat, "A_hat", A_hat))
    dev = abs(A - predicted)
    return DriftIdentityReport(A, predicted, dev, tol, dev <= tol)
