"""Command-line front end: capacity, exponent, surface, simulate, wring.

Exit codes: 0 success, 2 input or guard error, 3 outside / hypothesis unmet.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import codes as C
from . import suite
from .channel import Mac, RatePair, SearchOptions, capacity_membership, load_channel
from .exponents import compute_exponent, exponent_surface, surface_csv
from .results import jsonable

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_OUTSIDE = 3
BUILTIN_PREFIX = "builtin:"


class InputError(Exception):
    """Bad input; reported with exit code 2."""


class Unmet(Exception):
    """Outside verdict or unmet hypothesis; reported with exit code 3."""


@dataclass
class RunConfig:
    command: str
    channel_path: str
    code_path: Optional[str] = None
    rates: Optional[RatePair] = None
    method: str = "sphere_packing"
    search: SearchOptions = field(default_factory=SearchOptions)
    out: Optional[str] = None
    seed: int = 0
    extra: dict = field(default_factory=dict)


def _builtin_channels() -> dict:
    out = dict(suite.suite())
    out["binary_adder"] = suite.binary_adder()
    out["noisy_adder"] = suite.binary_adder(0.1)
    return out


def _channel(path: str) -> Mac:
    if path.startswith(BUILTIN_PREFIX):
        name = path[len(BUILTIN_PREFIX):]
        table = _builtin_channels()
        if name not in table:
            raise InputError(f"unknown builtin channel {name!r}; choose from {', '.join(sorted(table))}")
        return table[name]
    p = Path(path)
    if not p.is_file():
        raise InputError(f"{path}: no such file")
    return load_channel(p)


def _threads() -> int:
    raw = os.environ.get("MACX_THREADS", "1")
    try:
        val = int(raw)
    except ValueError:
        raise InputError(f"MACX_THREADS must be a positive integer, got {raw!r}") from None
    if val < 1:
        raise InputError(f"MACX_THREADS must be a positive integer, got {raw!r}")
    return val


def _range(spec: str, name: str) -> list[float]:
    parts = spec.split(":")
    if len(parts) != 3:
        raise InputError(f"{name}: expected start:stop:steps, got {spec!r}")
    try:
        start, stop, steps = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise InputError(f"{name}: expected start:stop:steps, got {spec!r}") from None
    if steps < 1:
        raise InputError(f"{name}: steps must be positive")
    if stop < start:
        raise InputError(f"{name}: inverted range {start} > {stop}")
    if steps == 1:
        return [start]
    return [float(x) for x in np.linspace(start, stop, steps)]


def _emit(cfg: RunConfig, doc) -> None:
    text = json.dumps(jsonable(doc), indent=2) + "\n"
    if cfg.out:
        Path(cfg.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _verdict_json(v) -> dict:
    return {
        "inside": v.inside,
        "slack": v.slack,
        "witness": v.witness.to_json() if v.witness is not None else None,
        "diagnostics": v.diagnostics,
    }


def cmd_capacity(cfg: RunConfig) -> int:
    w = _channel(cfg.channel_path)
    verdict = capacity_membership(w, cfg.rates, cfg.search)
    _emit(cfg, {"rates": [cfg.rates.r1, cfg.rates.r2]} | _verdict_json(verdict))
    return EXIT_OK if verdict.inside else EXIT_OUTSIDE


def cmd_exponent(cfg: RunConfig) -> int:
    w = _channel(cfg.channel_path)
    res = compute_exponent(w, cfg.rates, cfg.method, cfg.search, cfg.extra.get("resolution"),
                           cfg.extra.get("target", "sphere_packing"))
    _emit(cfg, {"rates": [cfg.rates.r1, cfg.rates.r2]} | res.to_json())
    return EXIT_OK


def cmd_surface(cfg: RunConfig) -> int:
    w = _channel(cfg.channel_path)
    r1 = _range(cfg.extra["r1"], "--r1")
    r2 = _range(cfg.extra["r2"], "--r2")
    rows = exponent_surface(w, r1, r2, cfg.method, cfg.search, cfg.extra.get("resolution"), _threads())
    text = surface_csv(rows, cfg.method)
    if cfg.out:
        Path(cfg.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _code(cfg: RunConfig, w: Mac) -> C.MultiUserCode:
    if cfg.code_path:
        p = Path(cfg.code_path)
        if not p.is_file():
            raise InputError(f"{cfg.code_path}: no such file")
        return C.load_code(p, w.nx, w.ny)
    spec = cfg.extra.get("type")
    if spec is None:
        raise InputError("give either --code PATH or --type with --n, --m and --n-codewords")
    try:
        counts = np.array([int(c) for c in spec.split(",")], dtype=np.int64)
    except ValueError:
        raise InputError(f"--type: expected comma-separated counts, got {spec!r}") from None
    if counts.size != w.nx * w.ny:
        raise InputError(f"--type: expected {w.nx * w.ny} counts, got {counts.size}")
    n = int(counts.sum())
    if cfg.extra.get("n") is not None and cfg.extra["n"] != n:
        raise InputError(f"--type counts sum to {n}, not --n {cfg.extra['n']}")
    if n < 1 or np.any(counts < 0):
        raise InputError("--type: counts must be nonnegative with a positive sum")
    p = counts.reshape(w.nx, w.ny) / n
    return C.constant_composition_code(p, n, cfg.extra.get("m", 1), cfg.extra.get("n_codewords", 1), cfg.seed)


def cmd_simulate(cfg: RunConfig) -> int:
    w = _channel(cfg.channel_path)
    code = _code(cfg, w)
    stats = C.error_probabilities(w, code)
    lam = cfg.extra.get("lambda")
    if lam is None:
        lam = stats.avg_error
    if not 0 <= lam < 1:
        raise InputError(f"--lambda must lie in [0, 1), got {lam}")
    report = {"code": code.to_json(), "rates": [code.rates.r1, code.rates.r2], "stats": stats.to_json(),
              "lambda": lam}
    dom = C.dominant_type(code, stats, lam)
    report["dominant_type"] = None if dom is None else {
        "joint_type": dom.type.distribution.tolist(), "pairs": [list(p) for p in dom.pairs],
        "threshold": dom.threshold,
    }
    report["strong_converse"] = C.strong_converse_check(w, code, lam, stats, cfg.search).to_json()
    if cfg.rates is not None:
        delta = cfg.extra.get("delta", 0.05)
        rates = code.rates
        if rates.r1 < cfg.rates.r1 + delta - 1e-12 or rates.r2 < cfg.rates.r2 + delta - 1e-12:
            _emit(cfg, report | {"sphere_packing": {"error": "rate precondition unmet"}})
            raise Unmet(
                f"code rates ({rates.r1:.6g}, {rates.r2:.6g}) must exceed target rates "
                f"({cfg.rates.r1:.6g}, {cfg.rates.r2:.6g}) by delta={delta}"
            )
        e_sp = compute_exponent(w, cfg.rates, cfg.method, cfg.search, cfg.extra.get("resolution"),
                                "sphere_packing")
        chk = C.sphere_packing_verify(w, code, cfg.rates, delta, e_sp, stats)
        report["sphere_packing"] = {
            "target_rates": [cfg.rates.r1, cfg.rates.r2], "delta": delta, "exponent": e_sp.value,
            "exponent_method": e_sp.method, "max_error": chk.max_error, "bound": chk.bound,
            "passed": chk.passed,
        }
    _emit(cfg, report)
    return EXIT_OK


def cmd_wring(cfg: RunConfig) -> int:
    w = _channel(cfg.channel_path)
    lam = cfg.extra.get("lambda", 0.1)
    if lam is None:
        lam = 0.1
    if not 0 <= lam < 1:
        raise InputError(f"--lambda must lie in [0, 1), got {lam}")
    code = _code(cfg, w)
    stats = C.error_probabilities(w, code)
    dom = C.dominant_type(code, stats, lam)
    if dom is None:
        _emit(cfg, {"lambda": lam, "dominant_type": None})
        raise Unmet(f"no dominant joint type at lambda={lam}")
    res = C.wring(code, dom, cfg.extra.get("delta"), cfg.extra.get("sigma"), lam)
    report = {"lambda": lam, "joint_type": dom.type.distribution.tolist(), "pair_count": dom.size}
    report |= res.to_json()
    report["per_letter_ok"] = bool(res.max_information <= res.delta)
    if not res.cap_hit:
        gap = C.independence_gap(code, res.subcode_indices)
        report["independence_gap"] = gap
        report["gap_bound"] = C.pinsker_gap_bound(res.delta)
    _emit(cfg, report)
    return EXIT_OK


COMMANDS = {
    "capacity": cmd_capacity,
    "exponent": cmd_exponent,
    "surface": cmd_surface,
    "simulate": cmd_simulate,
    "wring": cmd_wring,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="macx",
        description="Error exponents, rate regions and small-code experiments for two-user MACs.",
        epilog="Channels: a JSON file {x_size, y_size, z_size, w} or builtin:NAME "
        f"({', '.join(sorted(_builtin_channels()))}). "
        "MACX_THREADS caps the number of surface cells evaluated in parallel (default 1). "
        "Exit codes: 0 success, 2 input or guard error, 3 outside or hypothesis unmet.",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, rates_required):
        p.add_argument("--channel", required=True, help="channel JSON file or builtin:NAME")
        p.add_argument("--rates", nargs=2, type=float, metavar=("R1", "R2"), required=rates_required,
                       help="rate pair in bits per channel use")
        p.add_argument("--resolution", type=int, default=None, help="grid resolution (default 32)")
        p.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
        p.add_argument("--out", default=None, help="write output here instead of stdout")

    methods = ["haroutunian", "sphere_packing", "grid_oracle"]
    p = sub.add_parser("capacity", help="is a rate pair inside the capacity region")
    common(p, True)
    p = sub.add_parser("exponent", help="one exponent value with witnesses")
    common(p, True)
    p.add_argument("--method", choices=methods, default="sphere_packing")
    p.add_argument("--target", choices=methods[:2], default="sphere_packing",
                   help="exponent the grid oracle evaluates")
    p = sub.add_parser("surface", help="exponent over a rate grid, as CSV")
    common(p, False)
    p.add_argument("--method", choices=methods, default="sphere_packing")
    p.add_argument("--r1", required=True, help="start:stop:steps")
    p.add_argument("--r2", required=True, help="start:stop:steps")
    for name, text in (("simulate", "exact error analysis of a small code"),
                       ("wring", "dominant subcode and wringing report")):
        p = sub.add_parser(name, help=text)
        common(p, False)
        p.add_argument("--code", default=None, help="code JSON file {n, u, v}")
        p.add_argument("--type", default=None, help="generate a code: joint type counts, row-major")
        p.add_argument("--n", type=int, default=None, help="block length check for --type")
        p.add_argument("--m", type=int, default=1, help="number of X codewords for --type")
        p.add_argument("--n-codewords", type=int, default=1, help="number of Y codewords for --type")
        p.add_argument("--lambda", dest="lam", type=float, default=None, help="error level")
        p.add_argument("--delta", type=float, default=None, help="rate margin / wringing threshold")
        if name == "simulate":
            p.add_argument("--method", choices=methods, default="grid_oracle",
                           help="exponent used for the bound (default grid_oracle)")
        else:
            p.add_argument("--sigma", type=float, default=None, help="wringing budget")
    return ap


def _config(args) -> RunConfig:
    search = SearchOptions(seed=args.seed, grid_resolution=args.resolution or 32)
    rates = RatePair(*args.rates) if getattr(args, "rates", None) else None
    extra = {"resolution": args.resolution}
    for key in ("target", "r1", "r2", "type", "n", "m", "n_codewords", "sigma"):
        if hasattr(args, key):
            extra[key] = getattr(args, key)
    if hasattr(args, "lam"):
        extra["lambda"] = args.lam
    if getattr(args, "delta", None) is not None:
        extra["delta"] = args.delta
    return RunConfig(args.command, args.channel, getattr(args, "code", None), rates,
                     getattr(args, "method", "sphere_packing"), search, args.out, args.seed, extra)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _config(args)
        return COMMANDS[cfg.command](cfg)
    except Unmet as exc:
        print(f"macx: {exc}", file=sys.stderr)
        return EXIT_OUTSIDE
    except (InputError, ValueError, OSError) as exc:
        print(f"macx: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
