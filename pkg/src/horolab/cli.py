"""Command-line experiments.

    python3 -m horolab drift --space f2 --driver srw --T 1000000 --seeds 20

Each run writes ``<out>/<command>.json`` (a ``header`` with the timestamp and
version, the ``config``, and the ``report``) and, where there is a series,
``<out>/<command>.csv``.  CSV bodies depend only on the config, never on the
clock.  Exit status: 0 success, 1 a check failed, 2 invalid configuration.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import math
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .errors import NonConvergenceError, NotBallisticError, NumericalError, ValidationError
from .horo import direction_from_json
from .laws import parse_driver
from .lln import (
    check_lln,
    estimate_drift,
    find_good_times,
    limit_horofunction,
    ray_approx_check,
    tail_mean,
)
from .matrixcocycle import lyapunov_spectrum, oseledec_direction, posn_drift_identity
from .shadows import find_intersection_witness, suggest_start_time, verify_witness
from .spaces import PosDefinite, catzero_sample, lattice_counterexample, parse_space
from .walks import SCHEMA_VERSION, sample_walk, trajectory_rows

OUT_ENV = "HOROLAB_OUT"
COMMANDS = (
    "walk",
    "drift",
    "lln",
    "goodtimes",
    "shadows",
    "rayapprox",
    "lyapunov",
    "oseledec",
    "catzero-check",
    "demo",
)


class ConfigError(Exception):
    def __init__(self, field_name, message):
        super().__init__(f"invalid {field_name}: {message}")
        self.field = field_name


class CheckFailed(Exception):
    pass


@dataclass
class ExperimentConfig:
    command: str = "drift"
    space: str = "z:1"
    driver: str = "srw"
    T: int = 10_000
    seeds: list = field(default_factory=lambda: [0])
    eps: list = field(default_factory=lambda: [0.2])
    tolerances: dict = field(default_factory=dict)
    out_dir: str = ""
    K: int = 50
    horizon: int | None = None
    gap: int = 100
    t_max: int = 2**20
    A: float | None = None
    workers: int = 1
    method: str = "qr"
    sequence: str = "sqrt"
    direction: str = ""
    points: str = ""

    def to_json(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_json(cls, obj):
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(obj) - names
        if unknown:
            raise ConfigError(sorted(unknown)[0], "unknown config field")
        return cls(**obj)

    def dump(self, path):
        Path(path).write_text(json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path):
        try:
            return cls.from_json(json.loads(Path(path).read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError("config", str(exc)) from exc

    def validate(self):
        if self.command not in COMMANDS:
            raise ConfigError("command", f"unknown command {self.command!r}")
        try:
            space = parse_space(self.space)
        except ValidationError as exc:
            raise ConfigError("space", str(exc)) from exc
        try:
            driver = parse_driver(self.driver, space) if self.command not in ("catzero-check", "rayapprox") else None
        except (ValidationError, ValueError) as exc:
            raise ConfigError("driver", str(exc)) from exc
        if int(self.T) < 1:
            raise ConfigError("T", "must be positive")
        if not self.seeds:
            raise ConfigError("seeds", "need at least one seed")
        for e in self.eps:
            if not 0 < float(e) < 1:
                raise ConfigError("eps", f"{e} is not in (0, 1)")
        if self.method not in ("qr", "svd"):
            raise ConfigError("method", f"unknown method {self.method!r}")
        if self.sequence not in ("sqrt", "exact", "adversarial", "file"):
            raise ConfigError("sequence", f"unknown sequence {self.sequence!r}")
        return space, driver


# ---------------------------------------------------------------------------
# commands; each returns (report dict, csv text or None, passed)


def _first_traj(cfg, space, driver):
    return sample_walk(space, driver, cfg.T, cfg.seeds[0])


def cmd_walk(cfg, space, driver):
    tr = _first_traj(cfg, space, driver)
    a = tr.radial_all()
    report = {"T": tr.T, "seed": tr.seed, "a_T": float(a[-1]), "a_T_over_T": float(a[-1] / tr.T)}
    report["header"] = tr.header()
    return report, tr.to_csv(), True


def cmd_drift(cfg, space, driver):
    est = estimate_drift(space, driver, cfg.T, sorted(cfg.seeds), workers=cfg.workers, min_T=1)
    rows = "seed,A_hat\n" + "".join(f"{s},{float(v)!r}\n" for s, v in zip(sorted(cfg.seeds), est.per_seed))
    return est.to_json(), rows, True


def cmd_lln(cfg, space, driver):
    tr = _first_traj(cfg, space, driver)
    A = cfg.A if cfg.A is not None else tail_mean(tr)
    h = limit_horofunction(tr, A)
    rep = check_lln(tr, h, A)
    out = rep.to_json()
    out["limit"] = h.to_json()
    return out, rep.to_csv(), rep.bound_ok


def cmd_goodtimes(cfg, space, driver):
    tr = _first_traj(cfg, space, driver)
    A = cfg.A if cfg.A is not None else tail_mean(tr)
    rep = find_good_times(tr, cfg.eps[0], A, cfg.K)
    rows = trajectory_rows(tr, rep.good_times, rep.min_margins, ("n", "min_margin"))
    return rep.to_json(), rows, rep.verified


def cmd_shadows(cfg, space, driver):
    tr = _first_traj(cfg, space, driver)
    A = cfg.A if cfg.A is not None else tail_mean(tr)
    results, csv_parts, ok = [], ["eps,n,min_margin,complete\n"], True
    for eps in cfg.eps:
        st = suggest_start_time(tr, eps, A)
        M = st.N + cfg.gap
        horizon = cfg.horizon if cfg.horizon is not None else 10 * M
        horizon = min(horizon, tr.T)
        if M > horizon:
            results.append({"start": st.to_json(), "error": f"M = {M} exceeds the horizon {horizon}"})
            ok = False
            continue
        w = find_intersection_witness(tr, eps, st.N, M, horizon, record=True)
        verified = verify_witness(tr, w)
        ok = ok and w.found and verified
        results.append({"start": st.to_json(), "witness": w.to_json(), "verified": verified})
        body = w.near_miss_csv().split("\n", 1)[1]
        csv_parts.extend(f"{eps!r},{line}\n" for line in body.splitlines())
    return {"A_hat": A, "results": results}, "".join(csv_parts), ok


def _ray_points(cfg, space):
    n = cfg.T
    if cfg.sequence == "sqrt":
        return [(k, math.isqrt(k)) for k in range(1, n + 1)], {"kind": "zd", "signs": [1, 0]}
    if cfg.sequence == "exact":
        return [(k, 0) for k in range(1, n + 1)], {"kind": "zd", "signs": [1, 0]}
    if cfg.sequence == "adversarial":
        return [(0, k) for k in range(1, n + 1)], {"kind": "zd", "signs": [1, 0]}
    try:
        pts = json.loads(Path(cfg.points.lstrip("@")).read_text())
        direction = json.loads(cfg.direction)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError("points", str(exc)) from exc
    return [space.point_from_json(p) for p in pts], direction


def cmd_rayapprox(cfg, space, driver):
    if cfg.sequence != "file":
        space = parse_space("z:2")
    pts, direction = _ray_points(cfg, space)
    A = cfg.A if cfg.A is not None else 1.0
    rep = ray_approx_check(space, pts, direction_from_json(direction), A)
    ns = np.arange(1, len(pts) + 1)
    rows = "n,ray_gap,horofunction\n" + "".join(
        f"{int(n)},{float(g)!r},{float(h)!r}\n" for n, g, h in zip(ns, rep.ray_gaps, rep.horo_values)
    )
    out = rep.to_json()
    out.pop("ray_gaps")
    out.pop("horo_values")
    out["final"] = [float(rep.ray_gaps[-1]), float(rep.horo_values[-1])]
    return out, rows, rep.verdict != "fails"


def cmd_lyapunov(cfg, space, driver):
    if not isinstance(space, PosDefinite):
        raise ConfigError("space", "lyapunov needs a matrix space (pos:N)")
    spectrum = lyapunov_spectrum(driver, cfg.T, sorted(cfg.seeds), size=space.size, method=cfg.method)
    out = spectrum.to_json()
    rows = "i,exponent,stderr\n" + "".join(
        f"{i + 1},{float(l)!r},{float(s)!r}\n" for i, (l, s) in enumerate(zip(spectrum.exponents, spectrum.spread))
    )
    if "drift" in cfg.tolerances:
        est = estimate_drift(space, driver, cfg.T, sorted(cfg.seeds), workers=cfg.workers, min_T=1)
        ident = posn_drift_identity(est, spectrum, cfg.tolerances["drift"])
        out["drift_identity"] = ident.to_json()
        return out, rows, ident.passed
    return out, rows, True


def cmd_oseledec(cfg, space, driver):
    if not isinstance(space, PosDefinite):
        raise ConfigError("space", "oseledec needs a matrix space (pos:N)")
    tr = _first_traj(cfg, space, driver)
    od = oseledec_direction(tr)
    rows = "n,residual\n" + "".join(f"{k},{float(r)!r}\n" for k, r in od.residuals)
    tol = cfg.tolerances.get("residual")
    passed = tol is None or od.tail_residual() <= tol
    return od.to_json(), rows, passed


def cmd_catzero(cfg, space, driver):
    tol = cfg.tolerances.get("slack", 1e-9)
    if space.kind in ("h2", "pos"):
        rng = np.random.default_rng(cfg.seeds[0])
        fails, worst = catzero_sample(space, cfg.T, rng, tol)
        return {"space": space.describe(), "samples": cfg.T, "failures": fails, "worst_slack": worst}, None, fails == 0
    if space.kind == "zd" and space.dim == 2:
        ok, z, worst = lattice_counterexample()
        report = {"space": space.describe(), "x": [1, 0], "y": [0, 1], "found_midpoint": ok, "best_slack": worst}
        return report, None, ok
    raise ConfigError("space", "catzero-check supports h2, pos:N and z:2")


def cmd_demo(cfg, space, driver):
    """A small tour: drift on F_2, the LLN on a biased lattice walk, one witness."""
    f2 = parse_space("f2")
    z1 = parse_space("z1")
    est = estimate_drift(f2, parse_driver("srw", f2), 10_000, [0, 1, 2, 3])
    tr = sample_walk(z1, parse_driver("biased:0.7", z1), 10_000, 0)
    lln = check_lln(tr, limit_horofunction(tr), 0.4)
    st = suggest_start_time(tr, 0.5)
    w = find_intersection_witness(tr, 0.5, st.N, st.N + 100, min(10 * (st.N + 100), tr.T))
    report = {
        "free_group_drift": est.A_hat,
        "lattice_lln_deviation": lln.terminal_deviation,
        "witness": w.to_json(),
    }
    return report, lln.to_csv(), w.found


HANDLERS = {
    "walk": cmd_walk,
    "drift": cmd_drift,
    "lln": cmd_lln,
    "goodtimes": cmd_goodtimes,
    "shadows": cmd_shadows,
    "rayapprox": cmd_rayapprox,
    "lyapunov": cmd_lyapunov,
    "oseledec": cmd_oseledec,
    "catzero-check": cmd_catzero,
    "demo": cmd_demo,
}


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, np.generic):
        return _clean(obj.item())
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    return obj


def run(cfg):
    """Run one command; returns ``(exit_status, summary_line)``."""
    try:
        space, driver = cfg.validate()
    except ConfigError as exc:
        return 2, str(exc)
    out_dir = Path(cfg.out_dir or os.environ.get(OUT_ENV) or "horolab-out")
    try:
        report, rows, passed = HANDLERS[cfg.command](cfg, space, driver)
    except ConfigError as exc:
        return 2, str(exc)
    except NotBallisticError as exc:
        report, rows, passed = {"error": "not-ballistic", "message": str(exc)}, None, False
    except (NumericalError, NonConvergenceError, ValidationError) as exc:
        report, rows, passed = {"error": type(exc).__name__, "message": str(exc)}, None, False
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = cfg.command.replace("-", "_")
    doc = {
        "schema_version": SCHEMA_VERSION,
        "header": {"timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z"), "version": __version__},
        "config": cfg.to_json(),
        "passed": bool(passed),
        "report": report,
    }
    (out_dir / f"{stem}.json").write_text(json.dumps(_clean(doc), indent=2) + "\n", encoding="utf-8")
    if rows is not None:
        with open(out_dir / f"{stem}.csv", "w", newline="", encoding="utf-8") as fh:
            fh.write(rows)
    summary = f"{cfg.command}: {'ok' if passed else 'FAILED'} -> {out_dir / (stem + '.json')}"
    if "error" in report:
        summary += f" ({report['message']})"
    return (0 if passed else 1), summary


def build_parser():
    p = argparse.ArgumentParser(prog="horolab", description="Random walks, horofunctions and drift experiments.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="JSON file holding an ExperimentConfig; flags override it")
        s.add_argument("--space")
        s.add_argument("--driver")
        s.add_argument("--T", type=int)
        s.add_argument("--seeds", help="a count n (seeds 0..n-1) or a comma list")
        s.add_argument("--eps", help="comma list of shadow/good-time tolerances")
        s.add_argument("--K", type=int)
        s.add_argument("--A", type=float, help="drift to use instead of the trajectory estimate")
        s.add_argument("--horizon", type=int)
        s.add_argument("--gap", type=int, help="M - N for the witness search")
        s.add_argument("--t-max", dest="t_max", type=int)
        s.add_argument("--method", choices=("qr", "svd"))
        s.add_argument("--sequence", help="rayapprox: sqrt, exact, adversarial or file")
        s.add_argument("--points", help="rayapprox: @file with a JSON list of points")
        s.add_argument("--direction", help="rayapprox: JSON boundary direction")
        s.add_argument("--tol", action="append", default=[], metavar="NAME=VALUE")
        s.add_argument("--out", dest="out_dir", help=f"output directory (default ${OUT_ENV} or ./horolab-out)")
        s.add_argument("--workers", type=int, help="worker processes for seed fan-out (default: CPU count)")
        s.add_argument("--save-config", help="write the effective config to this file")
    return p


def _parse_seeds(text):
    text = text.strip()
    if "," in text or text.startswith("["):
        return [int(x) for x in text.strip("[]").split(",") if x.strip()]
    return list(range(int(text)))


def config_from_args(args):
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    cfg.command = args.command
    for name in ("space", "driver", "T", "K", "A", "horizon", "gap", "t_max", "method", "sequence", "points", "direction", "out_dir"):
        val = getattr(args, name)
        if val is not None:
            setattr(cfg, name, val)
    try:
        if args.seeds is not None:
            cfg.seeds = _parse_seeds(args.seeds)
    except ValueError as exc:
        raise ConfigError("seeds", str(exc)) from exc
    try:
        if args.eps is not None:
            cfg.eps = [float(x) for x in args.eps.split(",")]
    except ValueError as exc:
        raise ConfigError("eps", str(exc)) from exc
    for item in args.tol:
        name, _, val = item.partition("=")
        try:
            cfg.tolerances[name] = float(val)
        except ValueError as exc:
            raise ConfigError("tol", f"bad entry {item!r}") from exc
    if args.workers is not None:
        cfg.workers = args.workers
    elif not args.config:
        cfg.workers = os.cpu_count() or 1
    if args.sequence is None and args.points:
        cfg.sequence = "file"
    return cfg


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.save_config:
        cfg.dump(args.save_config)
    status, summary = run(cfg)
    print(summary if status != 2 else f"error: {summary}", file=sys.stderr if status == 2 else sys.stdout)
    return status


if __name__ == "__main__":
    sys.exit(main())
