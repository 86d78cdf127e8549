"""Command-line experiment runner.

Every subcommand reads an optional JSON config (``--config``), lets flags
override it, and prints a JSON report that embeds the resolved parameters.
Exit codes: 0 success, 1 negative experimental outcome, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import asdict, is_dataclass
from fractions import Fraction

import numpy as np

from . import __version__
from .arithmetic import CirclePoint, cf_expand, sieve
from .birkhoff import BirkhoffRequest, birkhoff_sum, diff_series
from .ceiling import CeilingSpec
from .drift import DriftParams, find_drift, resolve, swr_ensemble, wr_failure_construct, wr_failure_verify
from .errors import (
    ConfigInvalid,
    OutOfRange,
    RationalInput,
    SpecialFlowError,
)
from .specialflow import PhasePoint, trajectory, trajectory_csv

SCHEMA_VERSION = 1
USAGE_ERRORS = (ConfigInvalid, RationalInput, OutOfRange)
DEFAULTS = {"seed": 0, "precision_bits": 256, "threads": 1}


def jsonable(obj):
    """Recursively convert results into plain JSON values."""
    if is_dataclass(obj) and not isinstance(obj, type):
        if hasattr(obj, "to_dict"):
            return jsonable(obj.to_dict())
        if hasattr(obj, "as_dict"):
            return jsonable(obj.as_dict())
        return jsonable(asdict(obj))
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, Fraction):
        return f"{obj.numerator}/{obj.denominator}"
    if isinstance(obj, CirclePoint):
        return float(obj)
    return obj


def dumps(obj) -> str:
    return json.dumps(jsonable(obj), sort_keys=True, indent=2, allow_nan=False)


# ---------------------------------------------------------------------------
# config handling
# ---------------------------------------------------------------------------


def load_config(path: str | None) -> dict:
    if not path:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigInvalid(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigInvalid(f"malformed JSON in {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigInvalid("config must be a JSON object")
    version = data.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigInvalid(f"unsupported schema_version {version}; expected {SCHEMA_VERSION}")
    return data


def merged(args, config: dict) -> dict:
    """Config values overridden by any flag the user set explicitly."""
    out = dict(DEFAULTS)
    out.update(config)
    for key, val in vars(args).items():
        if key in ("command", "config", "func") or val is None:
            continue
        out[key] = val
    out["schema_version"] = SCHEMA_VERSION
    return out


def _ceiling(cfg: dict) -> CeilingSpec:
    spec = cfg.get("ceiling")
    if spec is None:
        raise ConfigInvalid("a ceiling spec is required (config key 'ceiling')")
    if isinstance(spec, str):
        if os.path.exists(spec):
            with open(spec, encoding="utf-8") as fh:
                return CeilingSpec.from_json(fh.read())
        return CeilingSpec.from_json(spec)
    return CeilingSpec.from_dict(spec)


def _alpha(cfg: dict, extra: int = 0):
    alpha = cfg.get("alpha")
    if alpha is None:
        raise ConfigInvalid("a rotation number is required (--alpha or config key 'alpha')")
    return cf_expand(alpha, int(cfg.get("depth", 40)) + extra)


def _point(v, bits: int) -> CirclePoint:
    return CirclePoint.from_value(str(v) if isinstance(v, (int, float)) and not isinstance(v, bool) else v, bits)


def _params(cfg: dict) -> DriftParams:
    block = dict(cfg.get("params", {}))
    allowed = set(DriftParams.__dataclass_fields__)
    unknown = set(block) - allowed
    if unknown:
        raise ConfigInvalid(f"unknown drift parameters: {sorted(unknown)}")
    if "P_band" in block and block["P_band"] is not None:
        block["P_band"] = tuple(block["P_band"])
    return DriftParams(**block)


def _int_list(v) -> list[int]:
    if isinstance(v, str):
        return [int(t) for t in v.split(",") if t.strip()]
    if isinstance(v, (int, float)):
        return [int(v)]
    return [int(t) for t in v]


def _float_list(v) -> list[float]:
    if isinstance(v, str):
        return [float(t) for t in v.split(",") if t.strip()]
    if isinstance(v, (int, float)):
        return [float(v)]
    return [float(t) for t in v]


# ---------------------------------------------------------------------------
# subcommands; each returns (result, csv text or None, negative flag)
# ---------------------------------------------------------------------------


def cmd_cf(cfg):
    cf = _alpha(cfg)
    return cf.as_dict(), None, False


def cmd_sieve(cfg):
    cf = _alpha(cfg, extra=2)
    rep = sieve(cf, cfg.get("x_rule"), int(cfg.get("depth", 40)), int(cfg.get("bound", 10)))
    return rep.as_dict(), None, False


def cmd_birkhoff(cfg):
    cf = _alpha(cfg)
    spec = _ceiling(cfg)
    bits = int(cfg["precision_bits"])
    x = _point(cfg.get("x", 0.1), bits)
    ns = _int_list(cfg.get("n", [1000]))
    method = cfg.get("method", "fast")
    sums = [birkhoff_sum(BirkhoffRequest(spec, cf, x, n), method) for n in ns]
    out = {"n": ns, "sums": sums, "method": method, "x": float(x)}
    rows = ["n,sum"] + [f"{n},{v!r}" for n, v in zip(ns, sums)]
    if cfg.get("y") is not None:
        y = _point(cfg["y"], bits)
        pos = [n for n in ns if n >= 0]
        neg = [n for n in ns if n < 0]
        diffs = {}
        if pos:
            diffs.update(zip(pos, diff_series(spec, cf, x, y, pos)))
        if neg:
            diffs.update(zip(neg, diff_series(spec, cf, x, y, neg)))
        out["y"] = float(y)
        out["differences"] = [float(diffs[n]) for n in ns]
    return out, "\n".join(rows) + "\n", False


def cmd_flow(cfg):
    cf = _alpha(cfg)
    spec = _ceiling(cfg)
    bits = int(cfg["precision_bits"])
    p = PhasePoint(_point(cfg.get("x", 0.1), bits), float(cfg.get("s", 0.0)))
    times = _float_list(cfg.get("times", [1.0, 10.0, 100.0]))
    rows = trajectory(spec, cf, p, times)
    return {"start": p.as_tuple(), "rows": rows}, trajectory_csv(rows), False


def cmd_drift(cfg):
    cf = _alpha(cfg)
    spec = _ceiling(cfg)
    params = _params(cfg)
    resolved = resolve(params, spec, cf)
    if cfg.get("x") is not None and cfg.get("y") is not None:
        bits = int(cfg["precision_bits"])
        rep = find_drift(_point(cfg["x"], bits), _point(cfg["y"], bits), params, spec, cf, resolved)
        csv_text = "R,value\n" + "".join(f"{i},{v!r}\n" for i, v in enumerate(rep.trace))
        return {"report": rep.to_dict(), "resolved": resolved.to_dict()}, csv_text, not rep.success
    s_range = tuple(_int_list(cfg.get("s_range", [8, 14])))
    out = swr_ensemble(params, spec, cf, int(cfg.get("pairs", 200)), int(cfg["seed"]), s_range, int(cfg["threads"]))
    return out, None, False


def cmd_wrfail(cfg):
    cf = _alpha(cfg)
    gamma = float(cfg.get("gamma", -0.5))
    r = float(cfg.get("r", 1.0))
    w = int(cfg.get("w", 8))
    samples = int(cfg.get("samples", 50))
    con = wr_failure_construct(cf, gamma, r, w, samples=samples, seed=int(cfg["seed"]), gap_kmax=int(cfg.get("gap_kmax", 10_000)))
    spec = CeilingSpec.power(gamma, 0.0, 1.0, 0.0, r)
    checks = []
    for smp in con.samples:
        x = CirclePoint(smp["x_frac"], 256)
        checks.append(wr_failure_verify(x, con.delta0_point, None, spec, cf, w, con.d, con.c, i0=smp["i0"]))
    passed = sum(c["passed"] for c in checks)
    out = {"construction": con.to_dict(), "checks": checks, "passed": passed, "samples": len(checks)}
    return out, None, passed < len(checks)


def cmd_mixing(cfg):
    from .mixing import RectSet, decay_scan, kochergin_setup

    cf = _alpha(cfg)
    if cfg.get("ceiling") is None:
        spec, rect = kochergin_setup()
        sets_cfg = cfg.get("sets") or [rect.to_dict()] * 3
    else:
        spec = _ceiling(cfg)
        sets_cfg = cfg.get("sets")
        if not sets_cfg:
            raise ConfigInvalid("mixing with a custom ceiling needs 'sets'")
    sets = [RectSet.from_dict(d) for d in sets_cfg]
    order = int(cfg.get("order", 2))
    grid = _float_list(cfg.get("t_grid", [0, 5, 50, 500]))
    series = decay_scan(spec, cf, sets, grid, order, int(cfg.get("samples", 100_000)), int(cfg["seed"]), int(cfg["threads"]))
    out = {"ceiling": spec.to_dict(), "sets": [s.to_dict() for s in sets], "measures": [s.measure(spec) for s in sets], **series.to_dict()}
    return out, series.to_csv(), False


def cmd_gauss(cfg):
    from . import gauss

    task = cfg.get("task", "blocks")
    seed = int(cfg["seed"])
    samples = int(cfg.get("samples", 100_000))
    if task == "ks":
        xs = gauss.gauss_invariant_sample(samples, seed)
        stat, p = gauss.ks_test(xs)
        stat1, p1 = gauss.ks_test(gauss.gauss_map(xs))
        return {"task": task, "samples": samples, "ks_statistic": stat, "p_value": p, "pushforward_statistic": stat1, "pushforward_p_value": p1}, None, False
    if task == "ratio":
        a = float(cfg.get("a", 0.01))
        ks = _int_list(cfg.get("k", list(range(1, 11))))
        ls = _int_list(cfg.get("l", list(range(1, 11))))
        grid = gauss.correlation_grid(a, ks, ls, samples, seed)
        rows = "k,l,ratio,stderr\n" + "".join(f"{e.k},{e.l},{e.ratio!r},{e.stderr!r}\n" for e in grid)
        return {"task": task, "a": a, "grid": [e.to_dict() for e in grid], "max_ratio": max(e.ratio for e in grid)}, rows, False
    if task == "blocks":
        st = gauss.block_quotient_stat(int(cfg.get("n_min", 3)), int(cfg.get("n_max", 12)), float(cfg.get("d", 4.0)), samples, seed, cfg.get("method", "cylinder"), int(cfg.get("gauss_bits", 512)))
        rows = "n,fraction,stderr\n" + "".join(f"{n},{f!r},{e!r}\n" for n, f, e in zip(st.n, st.fraction, st.stderr))
        return {"task": task, **st.to_dict()}, rows, False
    if task == "evidence":
        cf = _alpha(cfg, extra=2)
        depth = int(cfg.get("depth", 40))
        return {"task": task, "partial_sums": gauss.e_membership_evidence(cf, depth)}, None, False
    raise ConfigInvalid(f"unknown gauss task {task!r}")


COMMANDS = {
    "cf": cmd_cf,
    "sieve": cmd_sieve,
    "birkhoff": cmd_birkhoff,
    "flow": cmd_flow,
    "drift": cmd_drift,
    "wrfail": cmd_wrfail,
    "mixing": cmd_mixing,
    "gauss": cmd_gauss,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--seed", type=int)
    common.add_argument("--precision-bits", dest="precision_bits", type=int)
    common.add_argument("--threads", type=int)
    common.add_argument("--out", help="directory for report.json and series.csv")
    common.add_argument("--alpha", help="rotation number descriptor, e.g. surd:-1,1,5,2")
    common.add_argument("--depth", type=int)
    common.add_argument("--ceiling", help="ceiling spec as JSON text or a path")
    common.add_argument("--x", type=float)
    common.add_argument("--y", type=float)

    parser = argparse.ArgumentParser(prog="specialflows", description="Special flows over rotations: experiments")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("cf", parents=[common], help="continued fraction table")
    p = sub.add_parser("sieve", parents=[common], help="K_alpha, E partial sums, DC estimate")
    p.add_argument("--x-rule", dest="x_rule")
    p = sub.add_parser("birkhoff", parents=[common], help="Birkhoff sums and differences")
    p.add_argument("--n", help="comma-separated list of n")
    p.add_argument("--method", choices=["fast", "naive"])
    p = sub.add_parser("flow", parents=[common], help="flow trajectory")
    p.add_argument("--s", type=float)
    p.add_argument("--times", help="comma-separated times")
    p = sub.add_parser("drift", parents=[common], help="drift search for one pair or an ensemble")
    p.add_argument("--pairs", type=int)
    p.add_argument("--s-range", dest="s_range", help="lo,hi scale range")
    p = sub.add_parser("wrfail", parents=[common], help="weak Ratner failure construction")
    p.add_argument("--gamma", type=float)
    p.add_argument("--r", type=float)
    p.add_argument("--w", type=int)
    p.add_argument("--samples", type=int)
    p = sub.add_parser("mixing", parents=[common], help="correlation decay scan")
    p.add_argument("--order", type=int, choices=[2, 3])
    p.add_argument("--t-grid", dest="t_grid")
    p.add_argument("--samples", type=int)
    p = sub.add_parser("gauss", parents=[common], help="Gauss map statistics")
    p.add_argument("--task", choices=["ks", "ratio", "blocks", "evidence"])
    p.add_argument("--samples", type=int)
    p.add_argument("--a", type=float)
    p.add_argument("--d", type=float)
    p.add_argument("--n-min", dest="n_min", type=int)
    p.add_argument("--n-max", dest="n_max", type=int)
    return parser


def run(argv=None, stdout=None) -> int:
    stdout = stdout or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) and 2
    report = {"schema_version": SCHEMA_VERSION, "command": args.command, "version": __version__}
    csv_text = None
    code = 0
    try:
        cfg = merged(args, load_config(args.config))
        report["config"] = {k: v for k, v in cfg.items() if k != "out"}
        result, csv_text, negative = COMMANDS[args.command](cfg)
        report["result"] = result
        report["status"] = "negative" if negative else "ok"
        code = 1 if negative else 0
    except USAGE_ERRORS as exc:
        report["status"] = "error"
        report["error"] = exc.to_dict()
        code = 2
    except SpecialFlowError as exc:
        report["status"] = "negative"
        report["error"] = exc.to_dict()
        code = 1
    text = dumps(report)
    stdout.write(text + "\n")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "report.json"), "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
        if csv_text:
            with open(os.path.join(args.out, "series.csv"), "w", encoding="utf-8") as fh:
                fh.write(csv_text)
    return code


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
