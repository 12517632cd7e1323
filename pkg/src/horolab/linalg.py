"""Small dense linear algebra for matrices whose entries do not fit in float64.

Products of many random matrices have singular values spread over thousands
of nats.  Everything here works on *graded* factorisations, where a matrix is
held as ``B @ diag(exp(c))`` with ``B`` of moderate size and ``c`` arbitrary,
or entrywise as a (sign, log|entry|) pair.
"""
from __future__ import annotations

import itertools

import numpy as np

from .errors import NumericalError

# Gaps (in nats) above which two graded scales are treated as decoupled.
_GAP = 1.0
_COUPLING_TOL = 1e-17


def _qr_pos(a):
    q, r = np.linalg.qr(a)
    s = np.sign(np.diag(r))
    s[s == 0] = 1.0
    return q * s, s[:, None] * r


def graded_svd(b, c, max_iter=400):
    """Left singular vectors and log singular values of ``b @ diag(exp(c))``.

    ``b`` must be square with entries of moderate size; ``c`` may hold any
    finite reals.  Returns ``(u, logsig)`` with ``logsig`` sorted in
    decreasing order and ``u[:, i]`` the matching left singular vector.

    The method alternates QR and LQ steps in scaled form (an unshifted QR
    iteration on the graded matrix).  Coupling between scales separated by a
    gap ``g`` decays like ``exp(-2 g)`` per sweep; once it is below roundoff
    the remaining clusters of nearby scales are finished with an ordinary
    SVD.
    """
    b = np.array(b, dtype=float)
    c = np.array(c, dtype=float)
    n = b.shape[0]
    if b.shape != (n, n) or c.shape != (n,):
        raise ValueError("graded_svd expects a square matrix and a matching scale vector")
    if not (np.all(np.isfinite(b)) and np.all(np.isfinite(c))):
        raise NumericalError("non-finite input to graded_svd", diagnostics={"c": c.tolist()})
    u = np.eye(n)
    upper = np.triu(np.ones((n, n), dtype=bool), 1)
    lower = upper.T
    w = None
    for _ in range(max_iter):
        order = np.argsort(-c, kind="stable")
        b = b[:, order]
        c = c[order]
        q, r = _qr_pos(b)
        u = u @ q
        d = np.diag(r).copy()
        if np.any(d == 0):
            raise NumericalError("singular factor in graded_svd", diagnostics={"c": c.tolist()})
        diff = c[None, :] - c[:, None]
        w = np.where(upper, r * np.exp(np.minimum(diff, 0.0)), 0.0) / d[:, None]
        np.fill_diagonal(w, 1.0)
        c = c + np.log(d)

        order = np.argsort(-c, kind="stable")
        u = u[:, order]
        c = c[order]
        w = w[order, :]
        sep = np.abs(c[:, None] - c[None, :]) > _GAP
        off = np.abs(w)
        np.fill_diagonal(off, 0.0)
        if not np.any(sep) or off[sep].max() < _COUPLING_TOL:
            break
        # LQ step: diag(e^c) w = diag(e^c) l q2 = b' diag(e^c) q2
        qt, rt = _qr_pos(w.T)
        l = rt.T
        diff = c[:, None] - c[None, :]
        b = np.where(lower, l * np.exp(np.minimum(diff, 0.0)), 0.0)
        np.fill_diagonal(b, np.diag(l))
    else:
        raise NumericalError("graded_svd did not decouple scales", diagnostics={"c": c.tolist()})

    logsig = np.empty(n)
    vecs = np.empty((n, n))
    start = 0
    while start < n:
        stop = start + 1
        while stop < n and c[stop - 1] - c[stop] <= _GAP:
            stop += 1
        blk = slice(start, stop)
        top = c[start]
        block = np.exp(c[blk] - top)[:, None] * w[blk, blk]
        ub, sb, _ = np.linalg.svd(block)
        vecs[:, blk] = u[:, blk] @ ub
        logsig[blk] = top + np.log(sb)
        start = stop
    order = np.argsort(-logsig, kind="stable")
    return vecs[:, order], logsig[order]


def column_graded(s, lg):
    """Split a (sign, log) matrix into ``b @ diag(exp(c))`` with max|column of b| = 1."""
    c = np.max(np.where(s != 0, lg, -np.inf), axis=0)
    if not np.all(np.isfinite(c)):
        raise NumericalError("zero column in graded factor")
    return np.where(s != 0, s * np.exp(lg - c[None, :]), 0.0), c


def log_gram_minors(cmat, c):
    """log det of the Gram matrices of the trailing rows of ``cmat @ diag(exp(c))``.

    Entry ``i`` is ``log det(M[i:] M[i:]^T)`` for ``M = cmat diag(exp(c))``,
    evaluated by Cauchy-Binet so that no entry of ``M`` is ever formed.
    Entry ``n`` is 0 (empty product).
    """
    n = cmat.shape[0]
    out = np.zeros(n + 1)
    cols = range(cmat.shape[1])
    for i in range(n):
        rows = cmat[i:]
        k = n - i
        logs = []
        for sub in itertools.combinations(cols, k):
            det = np.linalg.det(rows[:, sub])
            if det != 0.0:
                logs.append(2.0 * (np.log(abs(det)) + c[list(sub)].sum()))
        if not logs:
            raise NumericalError("degenerate Gram minor")
        logs = np.asarray(logs)
        top = logs.max()
        out[i] = top + np.log(np.exp(logs - top).sum())
    return out


def sym_funm(p, f):
    """Apply a scalar function to a symmetric matrix through its eigenbasis."""
    p = 0.5 * (p + p.T)
    lam, v = np.linalg.eigh(p)
    return (v * f(lam)) @ v.T
