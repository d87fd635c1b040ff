"""``tds`` command line.

Exit codes: 0 completed (whatever the verdict), 2 input error,
3 Lyapunov condition violated, 4 order cap exceeded, 5 numerical failure.
"""

import argparse
import json
import logging
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor

from . import __version__
from ._config import load_config
from .certificate import VerdictKind, hierarchical_sweep, theorem_test, unstable_regions, find_flip_interval
from .exceptions import (
    InvalidInput,
    LyapunovConditionViolated,
    NotScalar,
    NumericalFailure,
    OrderTooLarge,
    TDSError,
)
from .io import SCHEMA_VERSION, format_float, load_sweep_spec, load_system, load_template, write_csv
from .oracles import scalar_critical_delay, simulate_dde
from .system import build_MN, compute_n_star

log = logging.getLogger("tdscert")

EXIT_OK, EXIT_INPUT, EXIT_LYAPUNOV, EXIT_ORDER, EXIT_NUMERIC = 0, 2, 3, 4, 5

CONSTANT_KEYS = ("r", "mu", "rho", "b0", "eta0", "kappa1", "kappa2", "eps_star")
RESULT_KEYS = (
    "schema_version",
    "name",
    "h",
    "mode",
    "verdict",
    "n_star",
    "first_failing_order",
    "margin",
    "constants",
    "wall_time",
)
SWEEP_COLUMNS = ("verdict", "n_star", "first_failing_order", "margin")


def _finite_or_none(x):
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else None


def _order_or_none(n):
    if n is None or not math.isfinite(n) or n < 0:
        return None
    return int(n)


def _constants_dict(constants):
    if constants is None:
        return None
    return {k: _finite_or_none(v) for k, v in constants.as_dict().items()}


def _record(sys_, mode, verdict=None, n_star=None, first=None, margin=None, constants=None, wall=None, **extra):
    rec = {
        "schema_version": SCHEMA_VERSION,
        "name": sys_.name,
        "h": sys_.h,
        "mode": mode,
        "verdict": verdict,
        "n_star": n_star,
        "first_failing_order": first,
        "margin": _finite_or_none(margin),
        "constants": _constants_dict(constants),
        "wall_time": wall,
    }
    rec.update(extra)
    return rec


def _verdict_record(sys_, v, wall):
    return _record(sys_, v.mode, str(v.kind), _order_or_none(v.n_star), v.first_failing_order, v.margin, v.constants, wall)


def _emit(rec, as_text, out=None):
    out = out or sys.stdout
    if not as_text:
        out.write(json.dumps(rec, indent=2, allow_nan=False) + "\n")
        return
    for key, value in rec.items():
        if isinstance(value, dict):
            out.write(f"{key}:\n")
            for k, v in value.items():
                out.write(f"  {k:<8} {_text_value(v)}\n")
        else:
            out.write(f"{key:<20} {_text_value(value)}\n")


def _text_value(v):
    if v is None:
        return "-"
    if isinstance(v, float):
        return format_float(v)
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_text_value(x) for x in v) + "]"
    return str(v)


def _run(sys_, mode, config, max_order=None):
    if mode == "sweep":
        return hierarchical_sweep(sys_, n_max=max_order, config=config)
    return theorem_test(sys_, config=config)


# --- commands ----------------------------------------------------------------


def cmd_analyze(args, config):
    sys_ = load_system(args.system)
    t0 = time.perf_counter()
    try:
        v = _run(sys_, args.mode, config)
    except LyapunovConditionViolated as exc:
        _emit(_record(sys_, args.mode, str(VerdictKind.LYAPUNOV_CONDITION_VIOLATED), error=str(exc)), args.text)
        raise
    except OrderTooLarge as exc:
        _emit(_record(sys_, args.mode, None, _order_or_none(exc.n_star), constants=exc.constants, error=str(exc)), args.text)
        raise
    wall = None if args.deterministic else time.perf_counter() - t0
    _emit(_verdict_record(sys_, v, wall), args.text)
    return EXIT_OK


def cmd_order(args, config):
    sys_ = load_system(args.system)
    data = build_MN(sys_, config)
    try:
        c = compute_n_star(sys_, data, config)
    except OrderTooLarge as exc:
        c = exc.constants
        rec = {"schema_version": SCHEMA_VERSION, "name": sys_.name, "h": sys_.h, "n_star": None}
        rec["constants"] = _constants_dict(c)
        rec["error"] = str(exc)
        _emit(rec, args.text)
        raise
    rec = {
        "schema_version": SCHEMA_VERSION,
        "name": sys_.name,
        "h": sys_.h,
        "n_star": c.n_star,
        "constants": _constants_dict(c),
        "log_eta0": c.log_eta0,
        "log_eps_star": c.log_eps_star,
        "kappa_grid": c.kappa_grid,
        "rcond_N": data.rcond_N,
    }
    _emit(rec, args.text)
    return EXIT_OK


def _sweep_point(task):
    """One grid point; every failure is turned into a status string."""
    template, bindings, spec, config = task
    row = {"verdict": None, "n_star": None, "first_failing_order": None, "margin": None, "regions": None}
    try:
        sys_ = template.instantiate(**bindings)
        data = build_MN(sys_, config)
        if spec.dims == 2:
            row["regions"] = unstable_regions(sys_, spec.regions, config, data)
        if spec.verdict:
            if spec.mode == "sweep":
                v = hierarchical_sweep(sys_, n_max=spec.max_order, config=config, data=data)
            else:
                v = theorem_test(sys_, config=config, data=data)
            row.update(
                verdict=str(v.kind),
                n_star=_order_or_none(v.n_star),
                first_failing_order=v.first_failing_order,
                margin=v.margin,
            )
        row["status"] = "ok"
    except LyapunovConditionViolated:
        row["verdict"] = str(VerdictKind.LYAPUNOV_CONDITION_VIOLATED)
        row["status"] = "LyapunovConditionViolated"
    except OrderTooLarge as exc:
        row["n_star"] = _order_or_none(exc.n_star)
        row["status"] = "OrderTooLarge"
    except TDSError as exc:
        row["status"] = type(exc).__name__
    return row


def sweep_header(spec):
    header = [p.target for p in spec.parameters] + list(SWEEP_COLUMNS)
    if spec.dims == 2:
        header += [f"U_{k}" for k in range(1, spec.regions + 1)]
    return header + ["status"]


def run_sweep(template, spec, config):
    """Rows (lists aligned with :func:`sweep_header`) in grid order."""
    points = spec.grid()
    tasks = [(template, b, spec, config) for b in points]
    if config.workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(_sweep_point, tasks, chunksize=max(1, len(tasks) // (8 * config.workers))))
    else:
        results = [_sweep_point(t) for t in tasks]
    rows = []
    for bindings, res in zip(points, results):
        row = [bindings[p.target] for p in spec.parameters]
        row += [res["verdict"] or "", res["n_star"], res["first_failing_order"], res["margin"]]
        if spec.dims == 2:
            regions = res["regions"]
            row += [None] * spec.regions if regions is None else [int(bool(x)) for x in regions]
        row.append(res["status"])
        rows.append(row)
    return rows


def cmd_sweep(args, config):
    template = load_template(args.template)
    spec = load_sweep_spec(args.spec)
    known = set(template.defaults) | {"h"}
    for p in spec.parameters:
        if p.target not in known and p.target not in template.names():
            raise InvalidInput(f"sweep target {p.target!r} does not appear in the template")
    bound = {p.target for p in spec.parameters}
    missing = template.names() - set(template.defaults) - bound
    if missing:
        raise InvalidInput(f"template parameters without a value: {', '.join(sorted(missing))}")
    if template.h is None and "h" not in bound:
        raise InvalidInput("template has no delay h and the sweep does not bind it")
    rows = run_sweep(template, spec, config)
    write_csv(args.output, sweep_header(spec), rows)
    bad = sum(1 for r in rows if r[-1] != "ok")
    log.info("wrote %d rows to %s (%d with errors)", len(rows), args.output, bad)
    return EXIT_OK


def cmd_oracle(args, config):
    sys_ = load_system(args.system)
    do_cd = args.critical_delay or not args.simulate
    do_sim = args.simulate or not args.critical_delay
    rec = {"schema_version": SCHEMA_VERSION, "name": sys_.name, "h": sys_.h}
    try:
        rec["certificate"] = str(theorem_test(sys_, config=config).kind)
    except LyapunovConditionViolated:
        rec["certificate"] = str(VerdictKind.LYAPUNOV_CONDITION_VIOLATED)
    except OrderTooLarge:
        rec["certificate"] = None
    if do_cd:
        cd = {"h_c": None, "status": "ok", "flip_interval": None}
        try:
            hc = scalar_critical_delay(sys_)
        except NotScalar as exc:
            cd["status"] = "NotScalar"
            cd["message"] = str(exc)
        else:
            if hc is None:
                cd["status"] = "stable for all delays"
            elif hc == 0.0:
                cd["h_c"] = 0.0
                cd["status"] = "unstable for all delays"
            else:
                cd["h_c"] = hc
                try:
                    lo, hi = find_flip_interval(sys_, 0.9 * hc, 1.13 * hc, args.width, config)
                    cd["flip_interval"] = [lo, hi]
                except (ValueError, TDSError) as exc:
                    cd["status"] = f"no flip found: {exc}"
        rec["critical_delay"] = cd
    if do_sim:
        tr = simulate_dde(sys_, horizon=args.horizon, step=args.step, config=config)
        rec["simulation"] = {
            "growth_estimate": _finite_or_none(tr.growth_estimate),
            "diverged": tr.diverged,
            "step": tr.step,
            "horizon": float(tr.times[-1]),
            "samples": int(tr.times.size),
            "final_norm": _finite_or_none(tr.norms[-1]),
        }
    _emit(rec, args.text)
    return EXIT_OK


# --- argument parsing ----------------------------------------------------------


def _positive_float(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not (math.isfinite(v) and v > 0):
        raise argparse.ArgumentTypeError(f"must be positive: {text!r}")
    return v


def _key_value(text):
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    k, v = text.split("=", 1)
    return k.strip().replace("-", "_"), v.strip()


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="FILE", help="key=value configuration file")
    common.add_argument("--set", dest="settings", action="append", type=_key_value, default=[], metavar="KEY=VALUE",
                        help="override one configuration value (repeatable)")
    common.add_argument("--workers", type=int, default=None, help="worker processes for sweeps")
    common.add_argument("--deterministic", action="store_true", help="omit wall-clock times from the output")
    common.add_argument("-v", "--verbose", action="count", default=0)
    fmt = common.add_mutually_exclusive_group()
    fmt.add_argument("--json", dest="text", action="store_false", help="JSON output (default)")
    fmt.add_argument("--text", dest="text", action="store_true", help="human-readable output")
    common.set_defaults(text=False)

    parser = argparse.ArgumentParser(prog="tds", description="Stability certificates for linear time-delay systems.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", parents=[common], help="certify stability of one system")
    p.add_argument("system")
    p.add_argument("--mode", choices=("theorem", "sweep"), default="theorem")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("order", parents=[common], help="print the constants chain and n*")
    p.add_argument("system")
    p.set_defaults(func=cmd_order)

    p = sub.add_parser("sweep", parents=[common], help="evaluate a parameter grid to CSV")
    p.add_argument("template")
    p.add_argument("--spec", required=True)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("oracle", parents=[common], help="independent references next to the certificate")
    p.add_argument("system")
    p.add_argument("--critical-delay", action="store_true")
    p.add_argument("--simulate", action="store_true")
    p.add_argument("--horizon", type=_positive_float, default=None)
    p.add_argument("--step", type=_positive_float, default=None)
    p.add_argument("--width", type=_positive_float, default=1e-3, help="flip-interval width")
    p.set_defaults(func=cmd_oracle)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="tds: %(message)s")
    try:
        overrides = dict(args.settings)
        overrides["workers"] = args.workers
        config = load_config(args.config, overrides=overrides)
        return args.func(args, config)
    except InvalidInput as exc:
        print(f"tds: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except LyapunovConditionViolated as exc:
        print(f"tds: Lyapunov condition violated (N is singular, rcond={exc.rcond:.3e}): {exc}", file=sys.stderr)
        return EXIT_LYAPUNOV
    except OrderTooLarge as exc:
        print(f"tds: {exc}", file=sys.stderr)
        return EXIT_ORDER
    except NumericalFailure as exc:
        print(f"tds: numerical failure ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except TDSError as exc:
        print(f"tds: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
