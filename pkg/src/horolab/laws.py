"""Increment laws and cocycle drivers.

A driver says how the increments ``g_1, g_2, ...`` of ``Z_n = g_1 g_2 ... g_n``
are drawn: i.i.d. from one law (a random walk), or modulated by a finite
irreducible Markov chain (a stationary ergodic, non-i.i.d. cocycle).
"""
from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .rng import STREAM_CHAIN, STREAM_INCREMENTS, STREAM_PARAMETRIC, make_rng
from .spaces import FreeGroup, HyperbolicPlane, PosDefinite, ZdLattice, parse_word

SAMPLERS = ("random-rotation", "random-rotation-times-diagonal")


@dataclass(frozen=True, eq=False)
class IncrementLaw:
    """A finitely supported law, or a named parametric matrix sampler."""

    support: tuple = ()
    probabilities: tuple = ()
    sampler: str | None = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.sampler is not None:
            if self.sampler not in SAMPLERS:
                raise ValidationError(f"unknown sampler {self.sampler!r}")
            return
        if len(self.support) == 0:
            raise ValidationError("increment law needs a nonempty support")
        p = np.asarray(self.probabilities, dtype=float)
        if p.shape != (len(self.support),):
            raise ValidationError("one probability per support element is required")
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
            raise ValidationError("probabilities must be nonnegative and sum to 1")

    @classmethod
    def uniform(cls, support):
        support = tuple(support)
        return cls(support, tuple([1.0 / len(support)] * len(support)))

    @property
    def parametric(self):
        return self.sampler is not None

    def cdf(self):
        c = np.cumsum(np.asarray(self.probabilities, dtype=float))
        c[-1] = 1.0
        return c

    def validate_for(self, space):
        if self.parametric:
            if not isinstance(space, PosDefinite):
                raise ValidationError(f"sampler {self.sampler!r} only drives matrix spaces")
            return self
        checked = tuple(space.check_element(g) for g in self.support)
        return IncrementLaw(checked, self.probabilities)

    def sample_parametric(self, rng, count, size):
        angles = rng.uniform(0.0, 2.0 * math.pi, size=count)
        if size != 2:
            mats = np.empty((count, size, size))
            for i in range(count):
                q, r = np.linalg.qr(rng.normal(size=(size, size)))
                mats[i] = q * np.sign(np.diag(r))
        else:
            c, s = np.cos(angles), np.sin(angles)
            mats = np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], -2)
        if self.sampler == "random-rotation-times-diagonal":
            mats = mats * np.asarray(self.params["diag"], dtype=float)[None, None, :]
        return mats

    def to_json(self, space=None):
        if self.parametric:
            return {"sampler": self.sampler, "params": self.params}
        conv = space.element_to_json if space is not None else _plain
        return {"support": [conv(g) for g in self.support], "probabilities": list(self.probabilities)}

    def mean_log_abs_det(self):
        if self.parametric:
            d = self.params.get("diag")
            return float(np.sum(np.log(np.abs(d)))) if d is not None else 0.0
        dets = [np.log(abs(np.linalg.det(np.asarray(g)))) for g in self.support]
        return float(np.dot(self.probabilities, dets))


def _plain(g):
    return np.asarray(g).tolist() if isinstance(g, np.ndarray) else list(g)


@dataclass(frozen=True, eq=False)
class CocycleDriver:
    """I.i.d. (one law, no chain) or Markov-modulated increments."""

    laws: tuple
    transition: np.ndarray | None = None
    initial: np.ndarray | None = None
    name: str = ""

    def __post_init__(self):
        if not self.laws:
            raise ValidationError("driver needs at least one law")
        if self.transition is None:
            if len(self.laws) != 1:
                raise ValidationError("an i.i.d. driver has exactly one law")
            return
        p = np.asarray(self.transition, dtype=float)
        k = len(self.laws)
        if p.shape != (k, k):
            raise ValidationError("transition matrix must be K x K for K state laws")
        if np.any(p < 0) or np.max(np.abs(p.sum(axis=1) - 1.0)) > 1e-12:
            raise ValidationError("transition rows must be nonnegative and sum to 1")
        if not _irreducible(p):
            raise ValidationError("Markov chain is not irreducible")
        init = self.initial
        if init is None:
            init = stationary_distribution(p)
        init = np.asarray(init, dtype=float)
        if init.shape != (k,) or np.any(init < 0) or abs(init.sum() - 1.0) > 1e-12:
            raise ValidationError("initial distribution must be a probability vector on the states")
        object.__setattr__(self, "transition", p)
        object.__setattr__(self, "initial", init)

    @property
    def markov(self):
        return self.transition is not None

    @property
    def parametric(self):
        return any(law.parametric for law in self.laws)

    def validate_for(self, space):
        laws = tuple(law.validate_for(space) for law in self.laws)
        return CocycleDriver(laws, self.transition, self.initial, self.name)

    def support_table(self):
        """Concatenated supports of all finite laws and per-law offsets."""
        table, offsets = [], []
        for law in self.laws:
            offsets.append(len(table))
            table.extend(law.support)
        return table, offsets

    def to_json(self, space=None):
        out = {"name": self.name, "laws": [law.to_json(space) for law in self.laws]}
        if self.markov:
            out["transition"] = self.transition.tolist()
            out["initial"] = self.initial.tolist()
        return out


def iid(law, name=""):
    return CocycleDriver((law,), name=name)


def markov(laws, transition, initial=None, name=""):
    return CocycleDriver(tuple(laws), np.asarray(transition, dtype=float), initial, name)


def _irreducible(p):
    k = p.shape[0]
    reach = (p > 0) | np.eye(k, dtype=bool)
    for _ in range(k):
        reach = reach | ((reach.astype(int) @ reach.astype(int)) > 0)
    return bool(reach.all())


def stationary_distribution(p):
    k = p.shape[0]
    a = np.vstack([p.T - np.eye(k), np.ones(k)])
    b = np.zeros(k + 1)
    b[-1] = 1.0
    pi, *_ = np.linalg.lstsq(a, b, rcond=None)
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


@dataclass(frozen=True, eq=False)
class IncrementSample:
    """Sampled increments: support indices for finite laws, matrices otherwise."""

    index: np.ndarray | None
    matrices: np.ndarray | None
    states: np.ndarray | None


def sample_increments(driver, T, seed, space=None):
    """Draw ``T`` increments by inverse CDF from the seeded streams.

    Uniforms for finite laws come from stream 0 (one per step), chain
    transitions from stream 1 (one for the initial state, then one per step).
    Markov mode advances the chain first and then samples that state's law.
    """
    T = int(T)
    if T < 1:
        raise ValidationError("T must be >= 1")
    states = None
    if driver.markov:
        states = _sample_chain(driver, T, make_rng(seed, STREAM_CHAIN))
    else:
        states = np.zeros(T, dtype=np.int64)
    u = make_rng(seed, STREAM_INCREMENTS).random(T)

    if driver.parametric:
        size = space.size if space is not None else 2
        mats = np.empty((T, size, size))
        for s, law in enumerate(driver.laws):
            mask = states == s
            count = int(mask.sum())
            if count == 0:
                continue
            if law.parametric:
                mats[mask] = law.sample_parametric(make_rng(seed, STREAM_PARAMETRIC + s), count, size)
            else:
                idx = np.searchsorted(law.cdf(), u[mask], side="right")
                sup = np.asarray([np.asarray(g, dtype=float) for g in law.support])
                mats[mask] = sup[np.minimum(idx, len(law.support) - 1)]
        return IncrementSample(None, mats, states if driver.markov else None)

    _, offsets = driver.support_table()
    index = np.empty(T, dtype=np.int64)
    for s, law in enumerate(driver.laws):
        mask = states == s
        if not mask.any():
            continue
        idx = np.searchsorted(law.cdf(), u[mask], side="right")
        index[mask] = offsets[s] + np.minimum(idx, len(law.support) - 1)
    return IncrementSample(index, None, states if driver.markov else None)


def _sample_chain(driver, T, rng):
    u = rng.random(T + 1)
    cdfs = np.cumsum(driver.transition, axis=1)
    cdfs[:, -1] = 1.0
    init_cdf = np.cumsum(driver.initial)
    init_cdf[-1] = 1.0
    state = int(np.searchsorted(init_cdf, u[0], side="right"))
    out = np.empty(T, dtype=np.int64)
    for k in range(T):
        state = int(np.searchsorted(cdfs[state], u[k + 1], side="right"))
        out[k] = state
    return out


# ---------------------------------------------------------------------------
# stock drivers and the driver mini-language


def _rot(theta):
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def _embed(m2, n):
    out = np.eye(n)
    out[:2, :2] = m2
    return out


def standard_generators(space):
    if isinstance(space, (ZdLattice, FreeGroup)):
        return space.generators()
    if isinstance(space, HyperbolicPlane):
        a = np.diag([2.0, 0.5])
        r = _rot(math.pi / 4)
        b = r @ a @ r.T
        return [space.check_element(x) for x in (a, np.linalg.inv(a), b, np.linalg.inv(b))]
    if isinstance(space, PosDefinite):
        a = _embed(np.diag([2.0, 0.5]), space.size)
        r = _embed(_rot(math.pi / 4), space.size)
        b = r @ a @ r.T
        return [a, np.linalg.inv(a), b, np.linalg.inv(b)]
    raise ValidationError(f"no standard generators for {space!r}")


def _deterministic_element(space, arg):
    if isinstance(space, ZdLattice):
        if not arg:
            return (1,) + (0,) * (space.dim - 1)
        return space.check_element([int(x) for x in arg.split(",")])
    if isinstance(space, FreeGroup):
        return space.check_element(parse_word(arg or "a"))
    if isinstance(space, HyperbolicPlane):
        if not arg:
            return space.check_element(np.diag([2.0, 0.5]))
        return space.check_element(np.array([float(x) for x in arg.split(",")]).reshape(2, 2))
    if not arg:
        return _embed(np.diag([2.0, 0.5]), space.size)
    vals = [float(x) for x in arg.split(",")]
    if len(vals) == space.size:
        return space.check_element(np.diag(vals))
    return space.check_element(np.array(vals).reshape(space.size, space.size))


def parse_driver(text, space):
    """Build a driver from a short string.

    ``srw``, ``biased:p``, ``det[:element]``, ``sticky:q``, ``lazy``,
    ``diaglaw``, ``conjdiag``, ``rotation:angle``, ``rotations``,
    ``rotdiag[:a,b]``, ``markov:@file.json``, ``matrix:@file.json``.
    """
    text = (text or "").strip()
    m = re.match(r"^([a-z]+)(?::(.*))?$", text)
    if not m:
        raise ValidationError(f"unknown driver {text!r}")
    name, arg = m.group(1), m.group(2)
    matrix_space = isinstance(space, PosDefinite)

    if name == "srw":
        return iid(IncrementLaw.uniform(standard_generators(space)), name=text)
    if name == "lazy":
        gens = standard_generators(space)
        return iid(IncrementLaw.uniform([space.identity()] + list(gens)), name=text)
    if name == "biased":
        if not isinstance(space, ZdLattice):
            raise ValidationError("driver 'biased' needs a lattice space")
        p = float(arg)
        e = (1,) + (0,) * (space.dim - 1)
        return iid(IncrementLaw((e, space.inverse(e)), (p, 1.0 - p)), name=text)
    if name == "det":
        return iid(IncrementLaw((_deterministic_element(space, arg),), (1.0,)), name=text)
    if name == "sticky":
        if not isinstance(space, ZdLattice):
            raise ValidationError("driver 'sticky' needs a lattice space")
        q = float(arg) if arg else 0.9
        e = (1,) + (0,) * (space.dim - 1)
        laws = [IncrementLaw((e,), (1.0,)), IncrementLaw((space.inverse(e),), (1.0,))]
        return markov(laws, [[q, 1 - q], [1 - q, q]], name=text)
    if name in ("diaglaw", "conjdiag", "rotation", "rotations", "rotdiag") and not matrix_space:
        raise ValidationError(f"driver {name!r} needs a matrix space")
    if name == "diaglaw":
        sup = [_embed(np.diag([a, 1.0 / a]), space.size) for a in (2.0, 3.0)]
        return iid(IncrementLaw.uniform(sup), name=text)
    if name == "conjdiag":
        k = _embed(_rot(math.pi / 6), space.size)
        sup = [k @ _embed(np.diag([a, 1.0 / a]), space.size) @ k.T for a in (2.0, 3.0)]
        return iid(IncrementLaw.uniform(sup), name=text)
    if name == "rotation":
        theta = float(arg) if arg else 0.7
        return iid(IncrementLaw((_embed(_rot(theta), space.size),), (1.0,)), name=text)
    if name == "rotations":
        return iid(IncrementLaw(sampler="random-rotation"), name=text)
    if name == "rotdiag":
        vals = [float(x) for x in arg.split(",")] if arg else [2.0, 0.5]
        diag = list(vals) + [1.0] * (space.size - len(vals))
        return iid(IncrementLaw(sampler="random-rotation-times-diagonal", params={"diag": diag}), name=text)
    if name in ("markov", "matrix"):
        if not arg or not arg.startswith("@"):
            raise ValidationError(f"driver {name!r} expects @path-to-json")
        try:
            obj = json.loads(Path(arg[1:]).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ValidationError(f"cannot read driver file {arg[1:]!r}: {exc}") from exc
        return driver_from_json(obj, space, name=text)
    raise ValidationError(f"unknown driver {text!r}")


def law_from_json(obj, space):
    if "sampler" in obj:
        return IncrementLaw(sampler=obj["sampler"], params=obj.get("params", {}))
    support = [space.element_from_json(g) for g in obj["support"]]
    probs = obj.get("probabilities") or [1.0 / len(support)] * len(support)
    return IncrementLaw(tuple(support), tuple(float(p) for p in probs))


def driver_from_json(obj, space, name=""):
    if "laws" in obj:
        laws = [law_from_json(x, space) for x in obj["laws"]]
        if obj.get("transition") is None:
            if len(laws) != 1:
                raise ValidationError("i.i.d. driver file must hold exactly one law")
            return iid(laws[0], name=name or obj.get("name", ""))
        return markov(laws, obj["transition"], obj.get("initial"), name=name or obj.get("name", ""))
    return iid(law_from_json(obj, space), name=name)
