"""Command-line sweep runner.

A recipe is a YAML file::

    name: fig3
    n_trials: 200
    seed: 1
    scenario:            # ScenarioConfig fields, plus nested oscillator/frame
      p_ici_dbc: -50
      snr_db: 30
      oscillator: {kind: free_running}
    sweep: {axis: isr, values: [40, 50, 60, 70]}
    variants:
      - {label: time-M32, domain: time, order: 32, channel: exact}

Each variant may also carry ``n_observations``, ``omit_cpe`` and a
``scenario`` mapping of overrides.  With ``axis: m`` the sweep value replaces
the variant's order; with ``axis: snr`` and a link budget (``tx_power_dbm``,
``passive_suppression_db``, ``noise_floor_dbm``) the ISR follows the SNR.

Output rows are sorted by (variant, axis value).  CSV columns::

    variant,axis,axis_value,gain_db,gain_stderr,sinr_db,op_est,op_cancel,n_trials,seed

``op_est`` / ``op_cancel`` are per-symbol multiply-accumulate counts of the
weight computation and the SI reconstruction, filled only with
``--benchmark-opcounts``.  Grid points run on ``FDPNSIM_WORKERS`` worker
processes (default 1).
"""

import argparse
import csv
import io
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np
import yaml

from .channel import ScenarioConfig
from .estimator import Domain, EstimatorConfig
from .metrics import run_trials
from .ofdm import FrameConfig
from .oscillator import CalibrationError, OscillatorModel, default_pll

__all__ = ["RecipeError", "Variant", "SweepSpec", "load_recipe", "run_sweep", "write_rows", "main"]

CSV_COLUMNS = ("variant", "axis", "axis_value", "gain_db", "gain_stderr", "sinr_db",
               "op_est", "op_cancel", "n_trials", "seed")
AXES = ("isr", "m", "snr")
WORKERS_ENV = "FDPNSIM_WORKERS"


class RecipeError(ValueError):
    """Recipe problem, reported as ``path:line: field: message``."""


@dataclass(frozen=True)
class Variant:
    label: str
    estimator: EstimatorConfig
    channel: str = "exact"
    scenario_overrides: dict = field(default_factory=dict, hash=False)


@dataclass(frozen=True)
class SweepSpec:
    scenario: ScenarioConfig
    axis: str
    values: tuple
    variants: tuple
    n_trials: int = 100
    master_seed: int = 0
    output_path: str = None
    output_format: str = "csv"
    name: str = "sweep"

    def __post_init__(self):
        if self.axis not in AXES:
            raise ValueError(f"axis must be one of {AXES}, got {self.axis!r}")
        if not self.values:
            raise ValueError("sweep needs at least one value")
        if not self.variants:
            raise ValueError("sweep needs at least one variant")
        labels = [v.label for v in self.variants]
        if len(set(labels)) != len(labels):
            raise ValueError(f"variant labels must be distinct, got {labels}")
        if self.output_format not in ("csv", "jsonl"):
            raise ValueError(f"output_format must be csv or jsonl, got {self.output_format!r}")


# --- recipe parsing ---------------------------------------------------------


def _line_map(node, path=(), out=None):
    """Map each key path of a composed YAML tree to its 1-based line."""
    out = {} if out is None else out
    out[path] = node.start_mark.line + 1
    if isinstance(node, yaml.MappingNode):
        for key, value in node.value:
            _line_map(value, path + (key.value,), out)
            out[path + (key.value,)] = key.start_mark.line + 1
    elif isinstance(node, yaml.SequenceNode):
        for i, item in enumerate(node.value):
            _line_map(item, path + (i,), out)
    return out


class _Ctx:
    def __init__(self, source, lines):
        self.source, self.lines = source, lines

    def error(self, path, msg):
        line = next((self.lines[path[:k]] for k in range(len(path), -1, -1) if path[:k] in self.lines), "?")
        dotted = ".".join(str(p) for p in path) or "<root>"
        return RecipeError(f"{self.source}:{line}: {dotted}: {msg}")

    def mapping(self, value, path, allowed):
        if value is None:
            return {}
        if not isinstance(value, dict):
            raise self.error(path, f"expected a mapping, got {type(value).__name__}")
        for key in value:
            if key not in allowed:
                raise self.error(path + (key,), f"unknown field (expected one of {sorted(allowed)})")
        return value


_OSC_FIELDS = {"kind", "c_param", "f3db_hz", "carrier_hz", "sample_interval_s", "half_lag",
               "drift_fraction", "components"}
_FRAME_FIELDS = {f.name for f in fields(FrameConfig)}
_SCENARIO_FIELDS = {f.name for f in fields(ScenarioConfig)}
_VARIANT_FIELDS = {"label", "domain", "order", "n_observations", "channel", "omit_cpe", "scenario"}
_TOP_FIELDS = {"name", "n_trials", "seed", "scenario", "sweep", "variants", "output", "format"}


def _oscillator(ctx, raw, path, n_fft):
    raw = ctx.mapping(raw, path, _OSC_FIELDS)
    kind = raw.get("kind", "free_running")
    common = {k: float(raw[k]) for k in ("carrier_hz", "sample_interval_s") if k in raw}
    try:
        if kind == "free_running":
            if "f3db_hz" in raw:
                return OscillatorModel.from_3db_bandwidth(float(raw["f3db_hz"]), **common)
            return OscillatorModel.free_running(float(raw.get("c_param", 1e-18)), **common)
        if kind == "pll":
            if "components" in raw:
                comps = [tuple(float(x) for x in c) for c in raw["components"]]
                return OscillatorModel.pll(comps, float(raw.get("c_param", 0.0)), **common)
            return default_pll(n_fft, half_lag=raw.get("half_lag"),
                               drift_fraction=float(raw.get("drift_fraction", 0.0)), **common)
    except (TypeError, ValueError) as exc:
        raise ctx.error(path, str(exc)) from None
    raise ctx.error(path + ("kind",), f"unknown oscillator kind {kind!r}")


def _scenario_kwargs(ctx, raw, path, base_n_fft=64):
    raw = dict(ctx.mapping(raw, path, _SCENARIO_FIELDS))
    if "frame" in raw:
        frame_raw = ctx.mapping(raw["frame"], path + ("frame",), _FRAME_FIELDS)
        try:
            raw["frame"] = FrameConfig(**{k: tuple(v) if isinstance(v, list) else v for k, v in frame_raw.items()})
        except (TypeError, ValueError) as exc:
            raise ctx.error(path + ("frame",), str(exc)) from None
    n_fft = raw["frame"].n_fft if "frame" in raw else base_n_fft
    if "oscillator" in raw:
        raw["oscillator"] = _oscillator(ctx, raw["oscillator"], path + ("oscillator",), n_fft)
    return raw


def _build_scenario(ctx, kwargs, path):
    try:
        budget = ("tx_power_dbm", "passive_suppression_db", "noise_floor_dbm")
        if kwargs.get("tx_power_dbm") is not None and kwargs.get("noise_floor_dbm") is not None:
            rest = {k: v for k, v in kwargs.items() if k not in budget + ("snr_db", "isr_db")}
            return ScenarioConfig.from_link_budget(kwargs["tx_power_dbm"], kwargs.get("passive_suppression_db", 0.0),
                                                   kwargs["noise_floor_dbm"], kwargs.get("snr_db", 30.0), **rest)
        return ScenarioConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ctx.error(path, str(exc)) from None


def parse_recipe(text, source="<recipe>"):
    """Parse recipe text into a :class:`SweepSpec`."""
    try:
        node = yaml.compose(text)
    except yaml.YAMLError as exc:
        raise RecipeError(f"{source}: {exc}") from None
    if node is None:
        raise RecipeError(f"{source}: empty recipe")
    ctx = _Ctx(source, _line_map(node))
    raw = ctx.mapping(yaml.safe_load(text), (), _TOP_FIELDS)

    base_kw = _scenario_kwargs(ctx, raw.get("scenario"), ("scenario",))
    scenario = _build_scenario(ctx, base_kw, ("scenario",))

    sweep = ctx.mapping(raw.get("sweep"), ("sweep",), {"axis", "values"})
    axis = str(sweep.get("axis", "isr")).lower()
    if axis not in AXES:
        raise ctx.error(("sweep", "axis"), f"must be one of {AXES}")
    values = sweep.get("values")
    if not isinstance(values, list) or not values:
        raise ctx.error(("sweep", "values"), "must be a non-empty list")
    try:
        values = tuple(int(v) if axis == "m" else float(v) for v in values)
    except (TypeError, ValueError):
        raise ctx.error(("sweep", "values"), "values must be numeric") from None

    raw_variants = raw.get("variants")
    if not isinstance(raw_variants, list) or not raw_variants:
        raise ctx.error(("variants",), "must be a non-empty list")
    variants = []
    for i, rv in enumerate(raw_variants):
        p = ("variants", i)
        rv = ctx.mapping(rv, p, _VARIANT_FIELDS)
        order = int(rv.get("order", 0))
        domain = rv.get("domain", "time")
        try:
            est = EstimatorConfig(order if axis != "m" else 0, Domain(domain),
                                  n_observations=rv.get("n_observations"),
                                  omit_cpe=bool(rv.get("omit_cpe", False)), label=rv.get("label"))
        except ValueError as exc:
            raise ctx.error(p, str(exc)) from None
        channel = rv.get("channel", "exact")
        if channel not in ("exact", "estimated"):
            raise ctx.error(p + ("channel",), "must be 'exact' or 'estimated'")
        overrides = _scenario_kwargs(ctx, rv.get("scenario"), p + ("scenario",), scenario.frame.n_fft)
        label = rv.get("label") or f"{Domain(domain).value}-M{order}-{channel}"
        variants.append(Variant(label, est, channel, overrides))
        _build_scenario(ctx, {**base_kw, **overrides}, p + ("scenario",))

    try:
        return SweepSpec(scenario, axis, values, tuple(variants), int(raw.get("n_trials", 100)),
                         int(raw.get("seed", 0)), raw.get("output"), raw.get("format", "csv"),
                         str(raw.get("name", Path(source).stem)))
    except ValueError as exc:
        raise ctx.error((), str(exc)) from None


def load_recipe(path):
    path = Path(path)
    return parse_recipe(path.read_text(), str(path))


# --- sweep execution --------------------------------------------------------


def _point(spec, variant, value):
    """Scenario and estimator config for one grid point."""
    sc = spec.scenario
    if variant.scenario_overrides:
        kw = {f.name: getattr(sc, f.name) for f in fields(ScenarioConfig)}
        kw.update(variant.scenario_overrides)
        if sc.tx_power_dbm is not None and sc.noise_floor_dbm is not None:
            kw["isr_db"] = (kw["tx_power_dbm"] - kw["passive_suppression_db"]) - (kw["noise_floor_dbm"] + kw["snr_db"])
        sc = ScenarioConfig(**kw)
    est = variant.estimator
    if spec.axis == "isr":
        sc = sc.replace(isr_db=value)
    elif spec.axis == "snr":
        if sc.tx_power_dbm is not None and sc.noise_floor_dbm is not None:
            isr = (sc.tx_power_dbm - sc.passive_suppression_db) - (sc.noise_floor_dbm + value)
            sc = sc.replace(snr_db=value, isr_db=isr)
        else:
            sc = sc.replace(snr_db=value)
    else:
        est = EstimatorConfig(int(value), est.domain, est.observation_indices, est.n_observations,
                              est.assumed_soi_power, est.noise_variance, est.omit_cpe, est.label)
    return sc, est


def _run_point(args):
    spec, vi, xi, count_ops = args
    variant, value = spec.variants[vi], spec.values[xi]
    sc, est = _point(spec, variant, value)
    # common random numbers across variants at the same grid point
    seed = np.random.SeedSequence([spec.master_seed, xi])
    rep = run_trials(sc, est, spec.n_trials, seed, variant.channel, count_ops)
    return {
        "variant": variant.label,
        "axis": spec.axis,
        "axis_value": value,
        "gain_db": rep.gain_db,
        "gain_stderr": rep.std_err,
        "sinr_db": rep.sinr_db,
        "op_est": rep.op_counts.get("estimate") if count_ops else None,
        "op_cancel": rep.op_counts.get("cancel") if count_ops else None,
        "n_trials": rep.n_trials,
        "seed": spec.master_seed,
        "gain_capped": rep.gain_capped,
        "isr_db": rep.isr_db,
        "snr_db": rep.snr_db,
        "p_ici_dbc": rep.p_ici_dbc,
        "op_counts": rep.op_counts,
    }


def worker_count():
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None
    return max(1, n)


def run_sweep(spec, count_ops=False, workers=None):
    """Run every (variant, axis value) point; rows sorted by variant label then axis value."""
    jobs = [(spec, vi, xi, count_ops) for vi in range(len(spec.variants)) for xi in range(len(spec.values))]
    workers = worker_count() if workers is None else workers
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_run_point, jobs))
    else:
        rows = [_run_point(j) for j in jobs]
    return sorted(rows, key=lambda r: (r["variant"], r["axis_value"]))


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.6f}"
    return str(value)


def format_rows(rows, fmt="csv"):
    buf = io.StringIO()
    if fmt == "csv":
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in CSV_COLUMNS])
    elif fmt == "jsonl":
        for r in rows:
            buf.write(json.dumps(r, sort_keys=True) + "\n")
    else:
        raise ValueError(f"unknown format {fmt!r}")
    return buf.getvalue()


def write_rows(rows, path=None, fmt="csv"):
    text = format_rows(rows, fmt)
    if path is None or str(path) == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)
    return text


def build_parser():
    p = argparse.ArgumentParser(prog="fdpnsim", description="Run phase-noise suppression sweeps from a recipe.")
    p.add_argument("--recipe", required=True, help="YAML recipe file")
    p.add_argument("--trials", type=int, help="trials per grid point (overrides the recipe)")
    p.add_argument("--seed", type=int, help="master seed (overrides the recipe)")
    p.add_argument("--out", help="output file (default: recipe 'output' or stdout)")
    p.add_argument("--format", choices=("csv", "jsonl"), help="output format (default csv)")
    p.add_argument("--benchmark-opcounts", action="store_true",
                   help="count multiply-accumulates per stage and fill op_est/op_cancel")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        spec = load_recipe(args.recipe)
        overrides = {}
        if args.trials is not None:
            if args.trials < 1:
                raise RecipeError("--trials must be >= 1")
            overrides["n_trials"] = args.trials
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise RecipeError("--seed must be an unsigned 64-bit integer")
            overrides["master_seed"] = args.seed
        if args.out is not None:
            overrides["output_path"] = args.out
        if args.format is not None:
            overrides["output_format"] = args.format
        if overrides:
            spec = SweepSpec(**{**{f.name: getattr(spec, f.name) for f in fields(SweepSpec)}, **overrides})
    except (OSError, RecipeError, ValueError) as exc:
        print(f"fdpnsim: {exc}", file=sys.stderr)
        return 2
    try:
        rows = run_sweep(spec, count_ops=args.benchmark_opcounts)
        write_rows(rows, spec.output_path, spec.output_format)
    except (CalibrationError, RuntimeError, ValueError, OSError) as exc:
        print(f"fdpnsim: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
