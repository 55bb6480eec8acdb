"""Config-driven experiments: generate -> simulate -> replay -> summarize -> emit."""

from __future__ import annotations

import copy
import csv
import itertools
import json
import math
import os
from dataclasses import dataclass, field
from importlib import resources
from typing import Optional

from .core import (ClusterSpec, CostModel, DeltaPolicy, InvalidArgument, KeyGroup,
                   NearestFitConfig)
from .indicators import NearestFitIndicator, make_indicator
from .metrics import OverheadReport
from .reports import emit_reports, error_reports, fmt, plot_sweep, write_summary_csv
from .simulator import build_job, replay_with_indicators, run_job
from .workloads import (SkewSpec, ZipfSpec, gen_join, gen_matmult_products, gen_sigma_skew,
                        load_workload, spread_round_robin)


class ConfigError(InvalidArgument):
    """Malformed experiment configuration; the message names the field or position."""


_REQUIRED = object()

INDICATOR_NAMES = ("nearestfit", "nearestfit-oracle", "hadoop", "jobratio", "taskratio", "optimal")
GENERATORS = ("sigma_skew", "zipf_join", "matmult", "file")

DEFAULTS = {
    "name": "experiment",
    "seed": 0,
    "replicates": 1,
    "workload": {"generator": "sigma_skew"},
    "reduce_cost": {"kind": "polynomial", "exponent": 2.0, "coefficient": None,
                    "max_cost_ms": 1e6, "noise": 0.0, "knots": None},
    "map_cost": {"kind": "polynomial", "exponent": 1.0, "coefficient": 0.01,
                 "max_cost_ms": None, "noise": 0.0, "knots": None},
    "job": {"reducers": 1, "partitioner": "hash", "shuffle_rate": None,
            "pairs_per_split": 1000, "bytes_per_pair": 100},
    "cluster": {"workers": 1, "slots_per_worker": 1},
    "nearestfit": {"lambda": 2000, "master_sketch_capacity": None, "delta_floor_bytes": 64.0,
                   "delta_fraction": 0.05, "r2_threshold": 0.9, "smoothing_window_ms": 500.0,
                   "burst_size_threshold_bytes": 50, "burst_skip_threshold": 100,
                   "match_tolerance": 0.05, "histogram_capacity": 1024},
    "baselines": {"ewma": False, "alpha": 0.3, "warmup": 0.05},
    "replay": {"update_interval_ms": 1000, "prediction_points": None},
    "indicators": ["nearestfit", "hadoop", "jobratio", "taskratio"],
    "sweep": None,
}

WORKLOAD_DEFAULTS = {
    "sigma_skew": {"sigma": _REQUIRED, "n_max": 300, "value_bytes": 100, "map_tasks": 4,
                   "total_budget": None},
    "zipf_join": {"skew": 1.0, "distinct_keys": 20000, "tuples": 200000, "s_skew": None,
                  "s_const": 1, "tuple_bytes": 16, "map_tasks": 4, "mode": "quota"},
    "matmult": {"block_count": 16, "balance": "unbalanced", "dataset": "skewed",
                "block_side": 100, "entry_bytes": 12, "map_tasks": 4},
    "file": {"path": _REQUIRED},
}


# -- loading and validation -------------------------------------------------------

def bundled_configs():
    return sorted(p.name[:-5] for p in resources.files("mrprogress.configs").iterdir()
                  if p.name.endswith(".json"))


def load_config(source):
    """Parse a config from a path or a bundled config name; returns a validated dict."""
    if isinstance(source, dict):
        return validate_config(source)
    path = str(source)
    if not os.path.exists(path) and path in bundled_configs():
        text = resources.files("mrprogress.configs").joinpath(path + ".json").read_text()
        origin = f"<bundled {path}>"
    else:
        try:
            with open(path) as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from None
        origin = path
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{origin}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return validate_config(raw, origin)


def _merge(defaults, given, where, origin):
    if not isinstance(given, dict):
        raise ConfigError(f"{origin}: field '{where}' must be an object")
    out = copy.deepcopy(defaults)
    for k, v in given.items():
        if k not in defaults:
            path = f"{where}.{k}" if where else k
            raise ConfigError(f"{origin}: unknown field '{path}'")
        out[k] = v
    return out


def _num(cfg, section, key, origin, *, integer=False, low=None, low_open=False, high=None,
         high_open=False, optional=False):
    v = cfg[section][key] if section else cfg[key]
    name = f"{section}.{key}" if section else key
    if v is None and optional:
        return None
    if v is _REQUIRED:
        raise ConfigError(f"{origin}: missing required field '{name}'")
    ok_type = isinstance(v, int) if integer else isinstance(v, (int, float))
    if isinstance(v, bool) or not ok_type:
        kind = "an integer" if integer else "a number"
        raise ConfigError(f"{origin}: field '{name}' must be {kind}, got {v!r}")
    if low is not None and (v <= low if low_open else v < low):
        raise ConfigError(f"{origin}: field '{name}' must be {'>' if low_open else '>='} {low}, "
                          f"got {v}")
    if high is not None and (v >= high if high_open else v > high):
        raise ConfigError(f"{origin}: field '{name}' must be {'<' if high_open else '<='} {high}, "
                          f"got {v}")
    return v


def _choice(cfg, section, key, options, origin):
    v = cfg[section][key] if section else cfg[key]
    if v not in options:
        name = f"{section}.{key}" if section else key
        raise ConfigError(f"{origin}: field '{name}' must be one of {list(options)}, got {v!r}")
    return v


def validate_config(raw, origin="<config>"):
    cfg = _merge(DEFAULTS, raw, "", origin)
    for section in ("reduce_cost", "map_cost", "job", "cluster", "nearestfit", "baselines",
                    "replay"):
        cfg[section] = _merge(DEFAULTS[section], raw.get(section, {}), section, origin)
    wl = raw.get("workload", {})
    if not isinstance(wl, dict):
        raise ConfigError(f"{origin}: field 'workload' must be an object")
    gen = wl.get("generator", "sigma_skew")
    if gen not in GENERATORS:
        raise ConfigError(f"{origin}: field 'workload.generator' must be one of "
                          f"{list(GENERATORS)}, got {gen!r}")
    cfg["workload"] = _merge(dict(WORKLOAD_DEFAULTS[gen], generator=gen), wl, "workload", origin)

    if not isinstance(cfg["name"], str):
        raise ConfigError(f"{origin}: field 'name' must be a string")
    _num(cfg, None, "seed", origin, integer=True, low=0)
    _num(cfg, None, "replicates", origin, integer=True, low=1)

    w = cfg["workload"]
    if gen == "sigma_skew":
        _num(cfg, "workload", "sigma", origin, low=1, low_open=True)
        _num(cfg, "workload", "n_max", origin, integer=True, low=1)
        _num(cfg, "workload", "value_bytes", origin, integer=True, low=1)
        _num(cfg, "workload", "total_budget", origin, integer=True, low=1, optional=True)
    elif gen == "zipf_join":
        _num(cfg, "workload", "skew", origin, low=0, low_open=True)
        _num(cfg, "workload", "s_skew", origin, low=0, low_open=True, optional=True)
        _num(cfg, "workload", "distinct_keys", origin, integer=True, low=1)
        _num(cfg, "workload", "tuples", origin, integer=True, low=1)
        _num(cfg, "workload", "s_const", origin, integer=True, low=1)
        _num(cfg, "workload", "tuple_bytes", origin, integer=True, low=1)
        _choice(cfg, "workload", "mode", ("quota", "sample"), origin)
    elif gen == "matmult":
        k = _num(cfg, "workload", "block_count", origin, integer=True, low=1)
        if math.isqrt(k) ** 2 != k:
            raise ConfigError(f"{origin}: field 'workload.block_count' must be a perfect square, "
                              f"got {k}")
        _choice(cfg, "workload", "balance", ("optimal", "random", "unbalanced"), origin)
        _choice(cfg, "workload", "dataset", ("skewed", "uniform"), origin)
        _num(cfg, "workload", "block_side", origin, integer=True, low=1)
        _num(cfg, "workload", "entry_bytes", origin, integer=True, low=1)
    else:
        if not isinstance(w["path"], str):
            raise ConfigError(f"{origin}: field 'workload.path' must be a string")
    if gen != "file":
        _num(cfg, "workload", "map_tasks", origin, integer=True, low=1)

    for section in ("reduce_cost", "map_cost"):
        c = cfg[section]
        kind = _choice(cfg, section, "kind", ("polynomial", "product", "lookup"), origin)
        _num(cfg, section, "noise", origin, low=0, high=1, high_open=True)
        if kind == "polynomial":
            _num(cfg, section, "exponent", origin, low=0)
        if kind == "lookup":
            if not isinstance(c.get("knots"), list) or not c["knots"]:
                raise ConfigError(f"{origin}: field '{section}.knots' must be a non-empty list")
        elif c.get("coefficient") is None and c.get("max_cost_ms") is None:
            raise ConfigError(f"{origin}: field '{section}' needs 'coefficient' or 'max_cost_ms'")
        for key in ("coefficient", "max_cost_ms"):
            if c.get(key) is not None:
                _num(cfg, section, key, origin, low=0)

    _num(cfg, "job", "reducers", origin, integer=True, low=1)
    _choice(cfg, "job", "partitioner", ("hash", "random", "unbalanced", "optimal"), origin)
    _num(cfg, "job", "shuffle_rate", origin, low=0, low_open=True, optional=True)
    _num(cfg, "job", "pairs_per_split", origin, integer=True, low=1)
    _num(cfg, "job", "bytes_per_pair", origin, integer=True, low=1)
    _num(cfg, "cluster", "workers", origin, integer=True, low=1)
    _num(cfg, "cluster", "slots_per_worker", origin, integer=True, low=1)

    _num(cfg, "nearestfit", "lambda", origin, integer=True, low=1, optional=True)
    _num(cfg, "nearestfit", "master_sketch_capacity", origin, integer=True, low=1, optional=True)
    _num(cfg, "nearestfit", "delta_floor_bytes", origin, low=0)
    _num(cfg, "nearestfit", "delta_fraction", origin, low=0)
    if cfg["nearestfit"]["delta_floor_bytes"] == 0 and cfg["nearestfit"]["delta_fraction"] == 0:
        raise ConfigError(f"{origin}: field 'nearestfit.delta_floor_bytes' and "
                          "'nearestfit.delta_fraction' cannot both be 0")
    _num(cfg, "nearestfit", "r2_threshold", origin, low=0, low_open=True, high=1)
    _num(cfg, "nearestfit", "smoothing_window_ms", origin, low=0, low_open=True)
    _num(cfg, "nearestfit", "burst_size_threshold_bytes", origin, integer=True, low=1)
    _num(cfg, "nearestfit", "burst_skip_threshold", origin, integer=True, low=1)
    _num(cfg, "nearestfit", "match_tolerance", origin, low=0)
    _num(cfg, "nearestfit", "histogram_capacity", origin, integer=True, low=1)
    if not isinstance(cfg["baselines"]["ewma"], bool):
        raise ConfigError(f"{origin}: field 'baselines.ewma' must be true or false")
    _num(cfg, "baselines", "alpha", origin, low=0, low_open=True, high=1)
    _num(cfg, "baselines", "warmup", origin, low=0, high=1)
    _num(cfg, "replay", "update_interval_ms", origin, integer=True, low=1, optional=True)
    _num(cfg, "replay", "prediction_points", origin, integer=True, low=1, optional=True)
    if cfg["replay"]["update_interval_ms"] is None and cfg["replay"]["prediction_points"] is None:
        raise ConfigError(f"{origin}: field 'replay' needs 'update_interval_ms' or "
                          "'prediction_points'")

    inds = cfg["indicators"]
    if not isinstance(inds, list) or not inds:
        raise ConfigError(f"{origin}: field 'indicators' must be a non-empty list")
    for name in inds:
        if name not in INDICATOR_NAMES:
            raise ConfigError(f"{origin}: field 'indicators' has unknown indicator {name!r}; "
                              f"known: {list(INDICATOR_NAMES)}")
    if len(set(inds)) != len(inds):
        raise ConfigError(f"{origin}: field 'indicators' lists an indicator twice")

    if cfg["sweep"] is not None:
        points = sweep_points(cfg["sweep"], origin)
        for overrides in points:
            # every sweep point must itself be a valid config
            validate_config(apply_overrides(_strip(raw), overrides, origin), origin)
    return cfg


def _strip(raw):
    out = dict(raw)
    out.pop("sweep", None)
    return out


def sweep_points(sweep, origin="<config>"):
    """Expand a sweep into a list of {dotted path: value} override dicts.

    A mapping of path -> list of values is a cartesian product; a list of
    mappings gives the points verbatim.
    """
    if isinstance(sweep, dict):
        if not sweep:
            raise ConfigError(f"{origin}: field 'sweep' is empty")
        for k, v in sweep.items():
            if not isinstance(v, list) or not v:
                raise ConfigError(f"{origin}: field 'sweep.{k}' must be a non-empty list")
        keys = list(sweep)
        return [dict(zip(keys, combo)) for combo in itertools.product(*(sweep[k] for k in keys))]
    if isinstance(sweep, list) and sweep and all(isinstance(p, dict) and p for p in sweep):
        return [dict(p) for p in sweep]
    raise ConfigError(f"{origin}: field 'sweep' must map parameters to value lists "
                      "or be a list of parameter objects")


def apply_overrides(raw, overrides, origin="<config>"):
    out = copy.deepcopy(raw)
    for path, value in overrides.items():
        parts = path.split(".")
        node = out
        for p in parts[:-1]:
            nxt = node.setdefault(p, {})
            if not isinstance(nxt, dict):
                raise ConfigError(f"{origin}: sweep parameter '{path}' does not name a field")
            node = nxt
        node[parts[-1]] = value
    return out


# -- building the pieces ----------------------------------------------------------------

def nearestfit_config(cfg) -> NearestFitConfig:
    nf = cfg["nearestfit"]
    return NearestFitConfig(
        lam=nf["lambda"], master_sketch_capacity=nf["master_sketch_capacity"],
        delta_policy=DeltaPolicy(nf["delta_floor_bytes"], nf["delta_fraction"]),
        r2_threshold=nf["r2_threshold"], smoothing_window_ms=nf["smoothing_window_ms"],
        burst_size_threshold_bytes=nf["burst_size_threshold_bytes"],
        burst_skip_threshold=nf["burst_skip_threshold"],
        update_interval_ms=cfg["replay"]["update_interval_ms"] or 60000,
        ewma_alpha=cfg["baselines"]["alpha"], match_tolerance=nf["match_tolerance"],
        histogram_capacity=nf["histogram_capacity"])


def build_workload(cfg, seed):
    """(intermediate keys, explicit assignment or None) for the configured generator."""
    w = cfg["workload"]
    gen = w["generator"]
    ns = f"{gen}-{seed}"
    if gen == "sigma_skew":
        spec = SkewSpec(w["sigma"], w["n_max"], w["total_budget"])
        unit = w["value_bytes"]
        groups = [KeyGroup(g.key, g.size_bytes * unit) for g in gen_sigma_skew(spec, ns)]
        return spread_round_robin(groups, w["map_tasks"], unit), None
    if gen == "zipf_join":
        r = ZipfSpec(w["skew"], w["distinct_keys"], w["tuples"])
        s = None if w["s_skew"] is None else ZipfSpec(w["s_skew"], w["distinct_keys"], w["tuples"])
        keys = gen_join(r, s, s_const=w["s_const"], tuple_bytes=w["tuple_bytes"],
                        map_tasks=w["map_tasks"], seed=seed, mode=w["mode"], namespace=ns)
        return keys, None
    if gen == "matmult":
        mm = gen_matmult_products(w["block_count"], w["balance"], seed,
                                  reducers=cfg["job"]["reducers"], block_side=w["block_side"],
                                  dataset=w["dataset"], entry_bytes=w["entry_bytes"],
                                  map_tasks=w["map_tasks"], namespace=ns)
        return mm.keys, mm.assignment
    return load_workload(w["path"])


def cost_model(c, keys):
    """CostModel for a cost section; ``max_cost_ms`` scales the costliest key to that value."""
    kind = c["kind"]
    if kind == "lookup":
        return CostModel.lookup([tuple(k) for k in c["knots"]], c["noise"])
    coef = c.get("coefficient")
    if coef is None:
        if kind == "polynomial":
            top = max(ik.size_bytes for ik in keys) ** c["exponent"]
        else:
            top = max(math.prod(ik.factors) if ik.factors else ik.size_bytes for ik in keys)
        coef = c["max_cost_ms"] / top if top > 0 else 0.0
    if kind == "polynomial":
        return CostModel.polynomial(coef, c["exponent"], c["noise"])
    return CostModel.product(coef, c["noise"])


def build_indicators(cfg):
    nfc = nearestfit_config(cfg)
    b = cfg["baselines"]
    out = []
    for name in cfg["indicators"]:
        ind = make_indicator(name, nfc, b["ewma"])
        if name == "taskratio":
            ind.warmup = b["warmup"]
        out.append(ind)
    return out


# -- running -------------------------------------------------------------------------------

@dataclass
class RunResult:
    seed: int
    trace: object
    series: dict
    reports: dict
    overheads: dict  # indicator -> OverheadReport (NearestFit variants only)

    def summary_rows(self):
        return [(n, r.avg_err, r.max_err,
                 self.overheads[n].percent if n in self.overheads else None)
                for n, r in self.reports.items()]


@dataclass
class ExperimentResult:
    config: dict
    runs: list
    overrides: dict = field(default_factory=dict)

    def summary_rows(self):
        """Per indicator: mean avgErr and mean maxErr over replicates, mean overhead."""
        names = list(self.runs[0].reports)
        rows = []
        for n in names:
            avg = sum(r.reports[n].avg_err for r in self.runs) / len(self.runs)
            mx = sum(r.reports[n].max_err for r in self.runs) / len(self.runs)
            ovs = [r.overheads[n].percent for r in self.runs if n in r.overheads]
            rows.append((n, avg, mx, sum(ovs) / len(ovs) if ovs else None))
        return rows

    def metric(self, indicator, name="avg_err"):
        vals = [getattr(r.reports[indicator], name) for r in self.runs]
        return sum(vals) / len(vals)

    def profile_bytes(self, indicator):
        """Mean (map, reduce) profile bytes of a NearestFit indicator."""
        reps = [r.overheads[indicator] for r in self.runs]
        return (sum(o.map_profile_bytes for o in reps) / len(reps),
                sum(o.reduce_profile_bytes for o in reps) / len(reps))


def simulate(cfg, seed):
    keys, assignment = build_workload(cfg, seed)
    job = cfg["job"]
    nf = cfg["nearestfit"]
    spec = build_job(keys, map_cost=cost_model(cfg["map_cost"], keys),
                     reduce_cost=cost_model(cfg["reduce_cost"], keys),
                     reducers=job["reducers"], partitioner=job["partitioner"],
                     shuffle_rate=math.inf if job["shuffle_rate"] is None else job["shuffle_rate"],
                     assignment=assignment, pairs_per_split=job["pairs_per_split"],
                     bytes_per_pair=job["bytes_per_pair"])
    cluster = ClusterSpec(cfg["cluster"]["workers"], cfg["cluster"]["slots_per_worker"])
    burst = (nf["burst_size_threshold_bytes"], nf["burst_skip_threshold"])
    return run_job(spec, cluster, seed, burst=burst)


def replay(cfg, trace):
    """Run the configured indicators over ``trace``; returns (series, overheads)."""
    inds = build_indicators(cfg)
    rp = cfg["replay"]
    series = replay_with_indicators(trace, inds, rp["update_interval_ms"] if
                                    rp["prediction_points"] is None else None,
                                    rp["prediction_points"])
    overheads = {}
    for ind in inds:
        if isinstance(ind, NearestFitIndicator):
            overheads[ind.name] = OverheadReport(ind.map_profile_bytes(),
                                                 ind.reduce_profile_bytes(),
                                                 trace.spec.shuffle_bytes)
    return series, overheads


def run_once(cfg, seed, out_dir=None):
    trace = simulate(cfg, seed)
    series, overheads = replay(cfg, trace)
    if out_dir is not None:
        reports = emit_reports(trace, series, out_dir,
                               {n: o.percent for n, o in overheads.items()},
                               title=f"{cfg['name']} (seed {seed})")
    else:
        reports = error_reports(trace, series)
    return RunResult(seed, trace, series, reports, overheads)


def run_experiment(config, out_dir=None) -> ExperimentResult:
    """Run every replicate of one config (path, bundled name or dict), ignoring any sweep."""
    return _run_validated(load_config(config), out_dir)


def _run_validated(cfg, out_dir):
    seeds = [cfg["seed"] + r for r in range(cfg["replicates"])]
    runs = []
    for s in seeds:
        sub = None
        if out_dir is not None:
            sub = out_dir if len(seeds) == 1 else os.path.join(out_dir, f"seed-{s}")
        runs.append(run_once(cfg, s, sub))
    result = ExperimentResult(cfg, runs)
    if out_dir is not None and len(seeds) > 1:
        write_summary_csv(os.path.join(out_dir, "summary.csv"), result.summary_rows())
    return result


def run_sweep(config, out_dir=None, overrides=None):
    """Run every sweep point; returns [ExperimentResult] and writes sweep_summary.csv.

    ``overrides`` ({dotted path: value}) apply to the base config before the
    sweep expands.
    """
    cfg = load_config(config)
    raw = _strip(cfg)
    if overrides:
        raw = apply_overrides(raw, overrides)
        validate_config(raw)
    points = sweep_points(cfg["sweep"]) if cfg["sweep"] is not None else [{}]
    results = []
    for point in points:
        point_cfg = validate_config(apply_overrides(raw, point))
        sub = None
        if out_dir is not None:
            label = "_".join(f"{k.split('.')[-1]}={v}" for k, v in point.items()) or "base"
            sub = os.path.join(out_dir, label)
        res = _run_validated(point_cfg, sub)
        res.overrides = point
        results.append(res)
    if out_dir is not None:
        write_sweep_summary(out_dir, results)
    return results


SWEEP_EXTRA_COLUMNS = ("map_profile_bytes", "reduce_profile_bytes")


def sweep_rows(results):
    rows = []
    for res in results:
        for n, avg, mx, ov in res.summary_rows():
            row = dict(res.overrides)
            row.update(indicator=n, avgErr=avg, maxErr=mx, overhead=ov)
            if n in res.runs[0].overheads:
                m, r = res.profile_bytes(n)
                row.update(map_profile_bytes=m, reduce_profile_bytes=r)
            rows.append(row)
    return rows


def write_sweep_summary(out_dir, results):
    os.makedirs(out_dir, exist_ok=True)
    rows = sweep_rows(results)
    params = list(results[0].overrides) if results else []
    cols = params + ["indicator", "avgErr", "maxErr", "overhead", *SWEEP_EXTRA_COLUMNS]
    with open(os.path.join(out_dir, "sweep_summary.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for row in rows:
            out = []
            for c in cols:
                v = row.get(c)
                if v is None:
                    out.append("")
                elif isinstance(v, float) and c not in params:
                    out.append(fmt(v))
                else:
                    out.append(v)
            w.writerow(out)
    numeric = len(params) == 1 and all(isinstance(r[params[0]], (int, float)) for r in rows)
    if numeric:
        plot_sweep(os.path.join(out_dir, "sweep_avgErr.svg"), params[0], rows, "avgErr")
        plot_sweep(os.path.join(out_dir, "sweep_maxErr.svg"), params[0], rows, "maxErr")
    return rows
