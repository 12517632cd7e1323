"""Sampled trajectories of cocycles ``Z_n = g_1 g_2 ... g_n`` acting on a space.

A :class:`Trajectory` keeps the increment stream and enough cached orbit data
to answer radial distances ``a(k) = d(x0, Z_k x0)`` and pair distances
``d(Z_k x0, Z_n x0)`` quickly.  How that data is stored depends on the space:

* lattice: all orbit points (cumulative sums);
* free group: a trie of reduced words visited by the walk, with lazily built
  ancestor tables for longest-common-prefix queries;
* hyperbolic plane and SPD matrices: stabilized QR states every ``stride``
  steps, everything else replayed on demand.
"""
from __future__ import annotations

import csv
import io
import json
import math

import numpy as np
from numba import njit

from .errors import NumericalError, ValidationError
from .laws import CocycleDriver, sample_increments
from .matrixcocycle import StabilizedProduct, flag_sweep
from .spaces import FreeGroup, HyperbolicPlane, PosDefinite, ZdLattice

DEFAULT_STRIDE = 64
SCHEMA_VERSION = 1


class Trajectory:
    """A seeded realization of the cocycle, immutable once built."""

    def __init__(self, space, driver, seed, T, sample, stride=DEFAULT_STRIDE):
        self.space = space
        self.driver = driver
        self.seed = int(seed)
        self.T = int(T)
        self.stride = int(stride)
        self.increment_index = sample.index
        self.increment_matrices = sample.matrices
        self.states = sample.states
        self._table, _ = driver.support_table()
        self._backend = _make_backend(self)
        self._radial = None
        self._sweep = None

    # -- increments ------------------------------------------------------
    def increment(self, k):
        """``g_k`` for ``1 <= k <= T``."""
        if not 1 <= k <= self.T:
            raise IndexError(f"increment index {k} outside 1..{self.T}")
        if self.increment_index is not None:
            return self._table[int(self.increment_index[k - 1])]
        return self.increment_matrices[k - 1]

    def increments(self, start, stop):
        """Increments ``g_{start+1}, ..., g_stop`` as a list (or array for matrices)."""
        if self.increment_matrices is not None:
            return self.increment_matrices[start:stop]
        if isinstance(self.space, (PosDefinite, HyperbolicPlane)):
            sup = np.asarray([np.asarray(g, dtype=float) for g in self._table])
            return sup[self.increment_index[start:stop]]
        return [self._table[int(i)] for i in self.increment_index[start:stop]]

    # -- orbit data ------------------------------------------------------
    def point(self, k):
        """The orbit point ``Z_k x0``."""
        self._check_index(k)
        return self._backend.point(k)

    def element(self, k):
        """The partial product ``Z_k`` (recomputed from the nearest checkpoint)."""
        self._check_index(k)
        return self._backend.element(k)

    def radial(self, k):
        self._check_index(k)
        if self._radial is not None:
            return float(self._radial[k])
        return float(self._backend.radial_at(np.array([k]))[0])

    def radial_at(self, ks):
        ks = np.asarray(ks, dtype=np.int64)
        if len(ks) and (ks.min() < 0 or ks.max() > self.T):
            raise IndexError("index out of range")
        if self._radial is not None:
            return self._radial[ks].astype(float)
        return self._backend.radial_at(ks)

    def radial_all(self):
        """``a(0), ..., a(T)`` as a float array (cached)."""
        if self._radial is None:
            self._radial = np.asarray(self._backend.radial_at(np.arange(self.T + 1)), dtype=float)
        return self._radial

    def pair_distance(self, k, n):
        """``d(Z_k x0, Z_n x0)``."""
        self._check_index(k)
        self._check_index(n)
        return float(self._backend.pair_distances(n, np.array([k]))[0])

    def pair_distances(self, n, ks):
        """``d(Z_k x0, Z_n x0)`` for every ``k`` in ``ks``."""
        self._check_index(n)
        ks = np.asarray(ks, dtype=np.int64)
        if len(ks) and (ks.min() < 0 or ks.max() > self.T):
            raise IndexError("index out of range")
        return np.asarray(self._backend.pair_distances(n, ks), dtype=float)

    def stabilized_state(self, k):
        if not isinstance(self._backend, _PosBackend):
            raise ValidationError("stabilized states exist only for matrix trajectories")
        return self._backend.state(k)

    def iter_states(self, ks):
        if not isinstance(self._backend, _PosBackend):
            raise ValidationError("stabilized states exist only for matrix trajectories")
        return self._backend.iter_states(ks)

    def flag_sweep(self):
        """The cached backward sweep of ``Z_T`` (see :class:`horolab.matrixcocycle.FlagSweep`)."""
        if not isinstance(self._backend, _PosBackend):
            raise ValidationError("flag sweeps exist only for matrix trajectories")
        if self._sweep is None:
            self._sweep = flag_sweep(self.increments(0, self.T))
        return self._sweep

    def _check_index(self, k):
        if not 0 <= k <= self.T:
            raise IndexError(f"index {k} outside 0..{self.T}")

    # -- export ----------------------------------------------------------
    def header(self):
        return {
            "schema_version": SCHEMA_VERSION,
            "space": self.space.describe(),
            "driver": self.driver.to_json(self.space),
            "seed": self.seed,
            "T": self.T,
        }

    def to_csv(self, stride=1):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["k", "a_k"])
        ks = np.arange(0, self.T + 1, max(1, int(stride)))
        for k, a in zip(ks, self.radial_at(ks)):
            w.writerow([int(k), repr(float(a))])
        return buf.getvalue()

    def export(self, csv_path, json_path, stride=1):
        with open(csv_path, "w", newline="") as fh:
            fh.write(self.to_csv(stride))
        with open(json_path, "w") as fh:
            json.dump(self.header(), fh, indent=2)


def sample_walk(space, driver, T, seed, stride=DEFAULT_STRIDE):
    """Sample ``T`` steps of the cocycle from the stream keyed by ``seed``."""
    if not isinstance(driver, CocycleDriver):
        raise ValidationError("driver must be a CocycleDriver")
    T = int(T)
    if T < 1:
        raise ValidationError("T must be >= 1")
    driver = driver.validate_for(space)
    sample = sample_increments(driver, T, seed, space)
    return Trajectory(space, driver, seed, T, sample, stride)


def radial_distances(traj):
    """``a(1), ..., a(T)``."""
    return traj.radial_all()[1:]


def pair_distance(traj, k, n):
    if not 0 <= k <= n <= traj.T:
        raise IndexError(f"need 0 <= k <= n <= T, got k={k}, n={n}")
    return traj.pair_distance(k, n)


# ---------------------------------------------------------------------------
# backends


def _make_backend(traj):
    space = traj.space
    if isinstance(space, ZdLattice):
        return _ZdBackend(traj)
    if isinstance(space, FreeGroup):
        return _FreeBackend(traj)
    if isinstance(space, HyperbolicPlane):
        return _H2Backend(traj)
    if isinstance(space, PosDefinite):
        return _PosBackend(traj)
    raise ValidationError(f"unsupported space {space!r}")


class _ZdBackend:
    def __init__(self, traj):
        steps = np.asarray(traj._table, dtype=np.int64)[traj.increment_index]
        pts = np.zeros((traj.T + 1, traj.space.dim), dtype=np.int64)
        np.cumsum(steps, axis=0, out=pts[1:])
        self.points = pts
        self.radial = np.abs(pts).sum(axis=1)

    def point(self, k):
        return tuple(int(x) for x in self.points[k])

    element = point

    def radial_at(self, ks):
        return self.radial[ks]

    def pair_distances(self, n, ks):
        return np.abs(self.points[ks] - self.points[n]).sum(axis=1)


@njit(cache=True)
def _free_walk(letters, offsets, inc_index, rank):
    T = inc_index.shape[0]
    cap = 1
    for k in range(T):
        j = inc_index[k]
        cap += offsets[j + 1] - offsets[j]
    parent = np.empty(cap, np.int64)
    letter = np.zeros(cap, np.int64)
    depth = np.zeros(cap, np.int64)
    children = np.full((cap, 2 * rank), -1, np.int32)
    node_seq = np.zeros(T + 1, np.int64)
    parent[0] = -1
    nn = 1
    cur = 0
    for k in range(T):
        j = inc_index[k]
        for t in range(offsets[j], offsets[j + 1]):
            x = letters[t]
            if cur != 0 and letter[cur] == -x:
                cur = parent[cur]
                continue
            slot = 2 * (x - 1) if x > 0 else 2 * (-x - 1) + 1
            c = children[cur, slot]
            if c < 0:
                c = nn
                nn += 1
                parent[c] = cur
                letter[c] = x
                depth[c] = depth[cur] + 1
                children[cur, slot] = c
            cur = c
        node_seq[k + 1] = cur
    return parent[:nn], letter[:nn], depth[:nn], node_seq


@njit(cache=True)
def _build_lifting(parent, levels):
    nn = parent.shape[0]
    up = np.empty((levels, nn), np.int32)
    for v in range(nn):
        up[0, v] = parent[v] if parent[v] >= 0 else 0
    for j in range(1, levels):
        for v in range(nn):
            up[j, v] = up[j - 1, up[j - 1, v]]
    return up


@njit(cache=True)
def _lcp_depths(up, depth, nodes, target):
    levels = up.shape[0]
    out = np.empty(nodes.shape[0], np.int64)
    for i in range(nodes.shape[0]):
        u = nodes[i]
        v = target
        if depth[u] < depth[v]:
            u, v = v, u
        diff = depth[u] - depth[v]
        j = 0
        while diff > 0:
            if diff & 1:
                u = up[j, u]
            diff >>= 1
            j += 1
        if u != v:
            for j in range(levels - 1, -1, -1):
                if up[j, u] != up[j, v]:
                    u = up[j, u]
                    v = up[j, v]
            u = up[0, u]
        out[i] = depth[u]
    return out


class _FreeBackend:
    def __init__(self, traj):
        words = [tuple(w) for w in traj._table]
        offsets = np.zeros(len(words) + 1, dtype=np.int64)
        offsets[1:] = np.cumsum([len(w) for w in words])
        letters = np.array([x for w in words for x in w] or [1], dtype=np.int64)
        self.parent, self.letter, self.depth, self.nodes = _free_walk(
            letters, offsets, traj.increment_index.astype(np.int64), traj.space.rank
        )
        self._up = None

    def point(self, k):
        v = self.nodes[k]
        out = []
        while v != 0:
            out.append(int(self.letter[v]))
            v = self.parent[v]
        return tuple(reversed(out))

    element = point

    def radial_at(self, ks):
        return self.depth[self.nodes[ks]]

    def _lifting(self):
        if self._up is None:
            levels = max(1, int(self.depth.max()).bit_length() + 1)
            self._up = _build_lifting(self.parent, levels)
        return self._up

    def lcp(self, n, ks):
        return _lcp_depths(self._lifting(), self.depth, self.nodes[ks], self.nodes[n])

    def pair_distances(self, n, ks):
        dn = self.depth[self.nodes[n]]
        dk = self.depth[self.nodes[ks]]
        return dn + dk - 2 * self.lcp(n, ks)


class _PosBackend:
    """Stabilized checkpoints every ``stride`` steps; everything else is replayed.

    Pair distances never difference two far orbit points.  They use the
    product of the increments between the two times instead, which the
    isometric action makes equivalent and which keeps full precision.
    """

    scale = 1.0

    def __init__(self, traj):
        self.size = getattr(traj.space, "size", 2)
        self.gs = np.ascontiguousarray(traj.increments(0, traj.T), dtype=float)
        self.stride = traj.stride
        state = StabilizedProduct(self.size)
        self.checkpoints = [state.copy()]
        for start in range(0, traj.T, self.stride):
            state.extend(self.gs[start : start + self.stride])
            self.checkpoints.append(state.copy())
        self.warnings = state.warnings

    def state(self, k):
        base = self.checkpoints[k // self.stride].copy()
        start = (k // self.stride) * self.stride
        return base.extend(self.gs[start:k], check_condition=False)

    def iter_states(self, ks):
        """Yield ``(k, state)`` for sorted ``ks``, replaying forward between them."""
        cur = None
        for k in sorted(int(x) for x in ks):
            if cur is None or k < cur.n or (k // self.stride) * self.stride > cur.n:
                cur = self.state(k)
            else:
                cur.extend(self.gs[cur.n : k], check_condition=False)
            yield k, cur

    def point(self, k):
        return self.state(k).orbit_point()

    def element(self, k):
        return self.state(k).dense()

    def radial_at(self, ks):
        results = {k: s.radius() for k, s in self.iter_states(np.unique(ks))}
        return self.scale * np.array([results[int(k)] for k in ks], dtype=float)

    def pair_distances(self, n, ks):
        ks = np.asarray(ks, dtype=np.int64)
        found = {n: 0.0}
        # k < n: feed g_n^T, g_{n-1}^T, ...; after n - k steps the product
        # is (g_{k+1} ... g_n)^T, whose singular values give d(Z_k x0, Z_n x0)
        prod = StabilizedProduct(self.size)
        for k in sorted({int(k) for k in ks if k < n}, reverse=True):
            seg = self.gs[k : n - prod.n][::-1]
            prod.extend(np.transpose(seg, (0, 2, 1)), check_condition=False)
            found[k] = prod.radius()
        prod = StabilizedProduct(self.size)
        for k in sorted({int(k) for k in ks if k > n}):
            prod.extend(self.gs[n + prod.n : k], check_condition=False)
            found[k] = prod.radius()
        return self.scale * np.array([found[int(k)] for k in ks], dtype=float)


class _H2Backend(_PosBackend):
    """Moebius walks through ``g g^T`` in ``Pos_2``; distances scale by ``1/sqrt 2``."""

    scale = 1.0 / math.sqrt(2.0)

    def point(self, k):
        p = self.state(k).orbit_point()
        if np.max(np.abs(p.logeig)) > 700:
            raise NumericalError(
                "orbit point is too close to the boundary for a float64 coordinate",
                diagnostics={"k": int(k), "log_scale": float(np.max(np.abs(p.logeig)))},
            )
        m = p.dense()
        return complex(m[0, 1] / m[1, 1], 1.0 / m[1, 1])


def trajectory_rows(traj, ks, values, header=("n", "value")):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for k, v in zip(ks, values):
        w.writerow([int(k), repr(float(v))])
    return buf.getvalue()


def log_spaced(T, count=40, start=1):
    grid = np.unique(np.round(np.geomspace(start, T, count)).astype(np.int64))
    return grid[(grid >= start) & (grid <= T)]


def finite(x):
    return x if math.isfinite(x) else None
