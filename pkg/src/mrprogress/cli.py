"""Command line entry point: ``mrprogress <verb> ...``.

Exit codes: 0 success, 1 invalid input or config, 2 runtime or I/O failure.
"""

from __future__ import annotations

import argparse
import json
import sys

from .core import InvalidArgument
from .experiment import (_strip, apply_overrides, build_workload, bundled_configs, load_config,
                         replay, run_experiment, run_sweep, simulate, sweep_rows, validate_config)
from .reports import emit_reports
from .simulator import load_trace, save_trace, write_event_log
from .workloads import save_workload

# flag -> dotted config field
FIELD_FLAGS = {
    "sigma": ("workload.sigma", float, "skew factor of the sigma_skew generator"),
    "n_max": ("workload.n_max", int, "largest key group size (sigma_skew)"),
    "generator": ("workload.generator", str, "sigma_skew, zipf_join, matmult or file"),
    "workload_file": ("workload.path", str, "workload CSV for generator=file"),
    "exponent": ("reduce_cost.exponent", float, "reduce cost exponent p"),
    "reducers": ("job.reducers", int, "number of reduce tasks"),
    "workers": ("cluster.workers", int, "number of workers"),
    "slots": ("cluster.slots_per_worker", int, "slots per worker"),
    "lam": ("nearestfit.lambda", int, "explicit keys per map task"),
    "replicates": ("replicates", int, "replicate seeds per experiment"),
    "update_interval": ("replay.update_interval_ms", int, "ms between predictions"),
    "prediction_points": ("replay.prediction_points", int, "fixed number of predictions"),
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        # usage errors are validation failures, not runtime ones
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _parse_set(items):
    out = {}
    for item in items or ():
        path, sep, value = item.partition("=")
        if not sep or not path:
            raise InvalidArgument(f"--set expects FIELD=VALUE, got {item!r}")
        try:
            out[path] = json.loads(value)
        except json.JSONDecodeError:
            out[path] = value
    return out


def _overrides(args):
    ov = {}
    for flag, (path, _, _) in FIELD_FLAGS.items():
        v = getattr(args, flag, None)
        if v is not None:
            ov[path] = v
    if getattr(args, "indicators", None):
        ov["indicators"] = [s.strip() for s in args.indicators.split(",") if s.strip()]
    ov.update(_parse_set(getattr(args, "set", None)))
    if getattr(args, "seed", None) is not None:
        ov["seed"] = args.seed
    return ov


def _config(args):
    """The named config without its sweep, with command line overrides applied."""
    raw = _strip(load_config(args.config))
    ov = _overrides(args)
    gen = ov.get("workload.generator")
    if gen is not None and gen != raw["workload"]["generator"]:
        # the old generator's fields do not apply to the new one
        raw["workload"] = {"generator": gen}
    return validate_config(apply_overrides(raw, ov), str(args.config))


def _add_common(p, seed_required=False):
    p.add_argument("--config", "-c", default="synthetic_sigma_sweep",
                   help="config path or bundled name (default: %(default)s)")
    p.add_argument("--seed", type=int, required=seed_required, help="base random seed")
    for flag, (path, typ, hlp) in FIELD_FLAGS.items():
        p.add_argument("--" + flag.replace("_", "-"), dest=flag, type=typ, help=f"{hlp} [{path}]")
    p.add_argument("--indicators", help="comma separated indicator names")
    p.add_argument("--set", action="append", metavar="FIELD=VALUE",
                   help="override any config field by dotted path (JSON value)")


def cmd_gen(args):
    cfg = _config(args)
    keys, assignment = build_workload(cfg, cfg["seed"])
    save_workload(args.out, keys, assignment)
    total = sum(ik.size_bytes for ik in keys)
    print(f"wrote {len(keys)} keys ({total} bytes) to {args.out}")


def cmd_simulate(args):
    cfg = _config(args)
    trace = simulate(cfg, cfg["seed"])
    save_trace(trace, args.out)
    if args.events:
        write_event_log(trace, args.events)
    print(f"map end {trace.map_end} ms, reduce start {trace.t_start} ms, "
          f"job end {trace.job_end} ms; trace saved to {args.out}")


def cmd_replay(args):
    cfg = _config(args)
    trace = load_trace(args.trace)
    series, overheads = replay(cfg, trace)
    reports = emit_reports(trace, series, args.out, {n: o.percent for n, o in overheads.items()},
                           title=cfg["name"])
    _print_summary([(n, r.avg_err, r.max_err, overheads[n].percent if n in overheads else None)
                    for n, r in reports.items()])
    print(f"reports written to {args.out}")


def cmd_report(args):
    cfg = _config(args)
    res = run_experiment(cfg, args.out)
    _print_summary(res.summary_rows())
    print(f"reports written to {args.out}")


def cmd_sweep(args):
    cfg = load_config(args.config)
    if cfg["sweep"] is None:
        raise InvalidArgument(f"{args.config}: config has no 'sweep' field")
    results = run_sweep(cfg, args.out, _overrides(args))
    rows = sweep_rows(results)
    params = list(results[0].overrides)
    for r in rows:
        label = " ".join(f"{p}={r[p]}" for p in params)
        ov = "" if r["overhead"] is None else f"  overhead {r['overhead']:.3f}%"
        print(f"{label:32s} {r['indicator']:18s} avgErr {r['avgErr']:8.3f}  "
              f"maxErr {r['maxErr']:8.3f}{ov}")
    print(f"sweep written to {args.out}")


def cmd_configs(args):
    for name in bundled_configs():
        print(name)


def _print_summary(rows):
    print(f"{'indicator':18s} {'avgErr':>9s} {'maxErr':>9s} {'overhead':>9s}")
    for n, avg, mx, ov in rows:
        print(f"{n:18s} {avg:9.3f} {mx:9.3f} {'' if ov is None else format(ov, '9.3f'):>9s}")


def build_parser():
    ap = _Parser(prog="mrprogress", description="Simulated MapReduce progress-indicator lab.")
    sub = ap.add_subparsers(dest="verb", required=True, parser_class=_Parser)

    p = sub.add_parser("gen", help="generate a workload and write it as CSV")
    _add_common(p)
    p.add_argument("--out", "-o", required=True, help="output workload CSV")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("simulate", help="simulate one job and save its trace")
    _add_common(p, seed_required=True)
    p.add_argument("--out", "-o", required=True, help="output trace JSON")
    p.add_argument("--events", help="also write the event log CSV here")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("replay", help="run indicators over a saved trace and emit reports")
    _add_common(p)
    p.add_argument("--trace", "-t", required=True, help="trace JSON from 'simulate'")
    p.add_argument("--out", "-o", required=True, help="report directory")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("report", help="generate, simulate, replay and emit reports")
    _add_common(p)
    p.add_argument("--out", "-o", required=True, help="report directory")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("sweep", help="run every point of a config's sweep")
    _add_common(p)
    p.add_argument("--out", "-o", required=True, help="output directory")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("configs", help="list bundled configs")
    p.set_defaults(func=cmd_configs)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except InvalidArgument as exc:
        print(f"mrprogress: error: {exc}", file=sys.stderr)
        return 1
    except (OSError, RuntimeError, ArithmeticError) as exc:
        print(f"mrprogress: runtime error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
