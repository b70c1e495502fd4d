"""Configuration-driven experiments: obfuscate, attack, score, emit.

A scenario config is a JSON document::

    {
      "id": "optional-name",
      "household": {"synthetic": true},
      "duration_days": 2,
      "seed": 0,
      "technique": "blh",
      "battery": {"nominal_voltage_v": 12},
      "blh": {"capacity_ah": 100},
      "nilm": {"particles": 1000, "sigma_w": 10},
      "outputs": {"dir": "results"}
    }

``technique`` is one of ``none``, ``blh`` or ``llh``; only the block of the
chosen technique may be present. The household is the same for every
scenario sharing a seed, while the obfuscation and the attacker draw from
streams derived from the seed and the scenario id.
"""

from __future__ import annotations

import copy
import csv
import json
import logging
import math
import os
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import jsonschema
import numpy as np

from . import metrics
from .battery import BatteryConfig
from .blh import SteppingConfig, run_blh
from .llh import LlhConfig, run_llh
from .nilm import FilterConfig, disaggregate
from .traces import (
    aggregate,
    load_models_json,
    load_traces_csv,
    median_filter,
    states_from_power,
    synthesize_household,
    synthetic_household,
    ApplianceModel,
)

log = logging.getLogger(__name__)

SEED_ENV = "LOADVEIL_SEED"
TECHNIQUES = ("none", "blh", "llh")
CAPACITIES_AH = (10, 70, 100, 200, 400, 600)
DAILY_TARGETS_KWH = (2.5, 5, 7.5, 10)

_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_FRAC = {"type": "number", "minimum": 0, "maximum": 1}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["technique"],
    "properties": {
        "id": {"type": "string"},
        "household": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "synthetic": {"type": "boolean"},
                "models": {"type": ["string", "array"]},
                "csv": {"type": "string"},
            },
        },
        "duration_days": _POS,
        "step_seconds": _POS,
        "seed": {"type": "integer", "minimum": 0},
        "technique": {"enum": list(TECHNIQUES)},
        "battery": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "nominal_voltage_v": _POS,
                "soc_min": _FRAC,
                "soc_max": _FRAC,
                "initial_soc": _FRAC,
                "c_rate_per_hour": _POS,
            },
        },
        "blh": {
            "type": "object",
            "additionalProperties": False,
            "required": ["capacity_ah"],
            "properties": {
                "capacity_ah": _POS,
                "soc_force_low": _FRAC,
                "soc_force_high": _FRAC,
                "beta_override_w": {"type": ["number", "null"], "exclusiveMinimum": 0},
            },
        },
        "llh": {
            "type": "object",
            "additionalProperties": False,
            "required": ["daily_target_kwh"],
            "properties": {
                "daily_target_kwh": _POS,
                "p_max_w": _POS,
                "alpha": _POS,
                "gap_limit_kwh": {"type": "number", "minimum": 0},
                "frame_max_s": _POS,
                "frame_min_s": _POS,
                "hold_samples": {"type": "integer", "minimum": 1},
            },
        },
        "nilm": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "particles": {"type": "integer", "minimum": 10},
                "sigma_w": _POS,
                "threshold": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "ess_fraction": _FRAC,
                "median_order": {"type": "integer", "minimum": 1},
            },
        },
        "outputs": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"dir": {"type": "string"}, "traces": {"type": "boolean"}},
        },
    },
}


class ConfigError(ValueError):
    pass


class ScenarioError(RuntimeError):
    def __init__(self, scenario_id, cause):
        super().__init__(f"scenario {scenario_id!r}: {cause}")
        self.scenario_id = scenario_id
        self.cause = cause


@dataclass(frozen=True)
class ScenarioConfig:
    scenario_id: str
    technique: str
    models: tuple = field(repr=False)
    csv_path: str | None
    duration_days: float
    step_seconds: float
    seed: int
    battery: BatteryConfig | None
    stepping: SteppingConfig | None
    llh: LlhConfig | None
    nilm: FilterConfig
    median_order: int
    out_dir: str | None
    write_traces: bool
    parameter: str = ""
    value: float = math.nan

    @property
    def n_samples(self):
        return int(round(self.duration_days * 86400 / self.step_seconds))


@dataclass(eq=False)
class ScenarioResult:
    scenario_id: str
    technique: str
    parameter: str
    value: float
    rmse_w: float = math.nan
    turnover_kwh: float = math.nan
    accuracy: metrics.AccuracyReport | None = None
    reference: metrics.AccuracyReport | None = None
    fallback_fraction: float = math.nan
    daily_energy_kwh: list = field(default_factory=list)
    error: str | None = None
    traces: dict = field(default_factory=dict, repr=False)

    @property
    def ok(self):
        return self.error is None


def load_config(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc


def _default_id(doc):
    tech = doc["technique"]
    if tech == "blh":
        return f"blh-{_fmt(doc['blh']['capacity_ah'])}Ah"
    if tech == "llh":
        return f"llh-{_fmt(doc['llh']['daily_target_kwh'])}kWh"
    return "none"


def _fmt(v):
    return f"{v:g}" if isinstance(v, (int, float)) else str(v)


def parse_config(doc, base_dir=".", seed=None):
    """Validate a config document and build a :class:`ScenarioConfig`.

    ``seed`` (or the ``LOADVEIL_SEED`` environment variable) overrides the
    document's seed; an explicit ``seed`` wins over the environment.
    """
    try:
        jsonschema.validate(doc, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config invalid at {where}: {exc.message}") from None

    tech = doc["technique"]
    present = [t for t in ("blh", "llh") if t in doc]
    if tech == "none" and present:
        raise ConfigError(f"technique 'none' must not carry a {present[0]!r} block")
    if tech != "none" and present != [tech]:
        raise ConfigError(f"technique {tech!r} needs exactly its own block, found {present}")
    if "battery" in doc and tech != "blh":
        raise ConfigError("a 'battery' block is only valid with technique 'blh'")

    if seed is None and os.environ.get(SEED_ENV):
        try:
            seed = int(os.environ[SEED_ENV])
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer") from None
    if seed is None:
        seed = int(doc.get("seed", 0))

    step = float(doc.get("step_seconds", 1.0))
    days = float(doc.get("duration_days", 1.0))
    samples = days * 86400 / step
    if abs(samples - round(samples)) > 1e-9 or round(samples) < 1:
        raise ConfigError(f"duration_days * 86400 / step_seconds must be a positive integer, got {samples}")

    hh = doc.get("household", {"synthetic": True})
    csv_path = None
    if hh.get("models") is not None:
        spec = hh["models"]
        try:
            if isinstance(spec, str):
                models = load_models_json(os.path.join(base_dir, spec))
            else:
                models = [ApplianceModel.from_dict(d) for d in spec]
        except (OSError, ValueError) as exc:
            raise ConfigError(f"household models: {exc}") from exc
        if hh.get("csv"):
            csv_path = os.path.join(base_dir, hh["csv"])
            if step != 1.0:
                raise ConfigError("CSV households are sampled at 1 s; step_seconds must be 1")
    elif hh.get("csv"):
        raise ConfigError("a CSV household needs 'models' for the attacker and ground truth")
    elif hh.get("synthetic", True):
        models = synthetic_household(step)
    else:
        raise ConfigError("household must be synthetic or give models")

    battery = stepping = llh = None
    param, value = "", math.nan
    try:
        if tech == "blh":
            b = doc["blh"]
            battery = BatteryConfig(rated_capacity_ah=float(b["capacity_ah"]), **doc.get("battery", {}))
            stepping = SteppingConfig.for_battery(
                battery,
                soc_force_low=b.get("soc_force_low", 0.25),
                soc_force_high=b.get("soc_force_high", 0.85),
                beta_override_w=b.get("beta_override_w"),
            )
            param, value = "capacity_ah", float(b["capacity_ah"])
        elif tech == "llh":
            l_ = doc["llh"]
            llh = LlhConfig(
                daily_target_kwh=float(l_["daily_target_kwh"]),
                p_max_w=l_.get("p_max_w", 1600.0),
                alpha=l_.get("alpha", 0.9),
                gap_limit_kwh=l_.get("gap_limit_kwh", 0.5),
                frame_max_seconds=l_.get("frame_max_s", 3600.0),
                frame_min_seconds=l_.get("frame_min_s", 60.0),
                hold_samples=l_.get("hold_samples", 1),
            )
            param, value = "daily_target_kwh", float(l_["daily_target_kwh"])
        n = doc.get("nilm", {})
        nilm = FilterConfig(
            particle_count=n.get("particles", 1000),
            likelihood_sigma_w=n.get("sigma_w", 10.0),
            on_probability_threshold=n.get("threshold", 0.5),
            resample_ess_fraction=n.get("ess_fraction", 0.5),
        )
        order = n.get("median_order", 5)
        if order % 2 == 0:
            raise ValueError(f"median_order must be odd, got {order}")
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc

    out = doc.get("outputs", {})
    return ScenarioConfig(
        scenario_id=doc.get("id") or _default_id(doc),
        technique=tech,
        models=tuple(models),
        csv_path=csv_path,
        duration_days=days,
        step_seconds=step,
        seed=seed,
        battery=battery,
        stepping=stepping,
        llh=llh,
        nilm=nilm,
        median_order=order,
        out_dir=out.get("dir"),
        write_traces=out.get("traces", True),
        parameter=param,
        value=value,
    )


def scenario_streams(seed, scenario_id):
    """Independent seeds for the obfuscation and the attacker of one scenario."""
    root = np.random.SeedSequence([int(seed) & 0xFFFFFFFF, zlib.crc32(scenario_id.encode())])
    obf, attack = root.spawn(2)
    return obf, attack


def build_household(cfg):
    """Return ``(net, per-appliance traces, truth states)`` for a scenario."""
    n = cfg.n_samples
    if cfg.csv_path is None:
        traces, truth = synthesize_household(cfg.models, n, cfg.seed, cfg.step_seconds)
    else:
        loaded = load_traces_csv(cfg.csv_path)
        names = [m.name for m in cfg.models]
        missing = [nm for nm in names if nm not in loaded]
        if missing:
            raise ValueError(f"{cfg.csv_path}: no column for appliances {missing}")
        traces, truth = {}, {}
        for m in cfg.models:
            tr = loaded[m.name]
            if len(tr) < n:
                raise ValueError(f"{cfg.csv_path}: {m.name} has {len(tr)} samples, need {n}")
            traces[m.name] = tr.with_samples(tr.samples[:n])
            truth[m.name] = states_from_power(traces[m.name], m)
    net = aggregate([traces[m.name] for m in cfg.models])
    return net, traces, truth


def run_scenario(cfg):
    """Run one scenario end to end: household, obfuscation, attack, metrics."""
    if isinstance(cfg, dict):
        cfg = parse_config(cfg)
    try:
        return _run(cfg)
    except ScenarioError:
        raise
    except Exception as exc:
        raise ScenarioError(cfg.scenario_id, exc) from exc


def _run(cfg):
    log.info("scenario %s: %d samples", cfg.scenario_id, cfg.n_samples)
    net, _, truth = build_household(cfg)
    obf_seed, attack_seed = scenario_streams(cfg.seed, cfg.scenario_id)
    result = ScenarioResult(cfg.scenario_id, cfg.technique, cfg.parameter, cfg.value)
    traces = {"net_w": net.samples}

    if cfg.technique == "blh":
        out = run_blh(net, cfg.battery, cfg.stepping, np.random.default_rng(obf_seed))
        metered, device = out.metered, out.battery_power
        result.fallback_fraction = out.fallback_fraction
        traces.update(metered_w=metered.samples, battery_w=device, soc=out.soc_series,
                      fallback=out.fallback_flags.astype(np.int64))
    elif cfg.technique == "llh":
        out = run_llh(net, cfg.llh, np.random.default_rng(obf_seed))
        metered, device = out.metered, out.noise.samples
        result.daily_energy_kwh = [float(x) for x in out.daily_energy_kwh]
        traces.update(metered_w=metered.samples, noise_w=device)
    else:
        metered, device = net, np.zeros(len(net))
        traces.update(metered_w=metered.samples)

    result.rmse_w = metrics.rmse(net, metered)
    result.turnover_kwh = metrics.energy_turnover_kwh(device, net.step_seconds)

    observed = median_filter(metered, cfg.median_order)
    attack = disaggregate(observed, cfg.models, cfg.nilm, attack_seed)
    result.accuracy = metrics.accuracy(attack.on, truth)
    result.reference = metrics.all_off_reference(truth)
    if cfg.write_traces:
        result.traces = traces
    return result


def _run_safe(doc, base_dir, seed):
    try:
        cfg = parse_config(doc, base_dir, seed)
    except ConfigError as exc:
        return ScenarioResult(doc.get("id", "?"), doc.get("technique", "?"), "", math.nan,
                              error=str(exc))
    try:
        return _run(cfg)
    except Exception as exc:  # reported per scenario, the sweep continues
        log.error("scenario %s failed: %s", cfg.scenario_id, exc)
        return ScenarioResult(cfg.scenario_id, cfg.technique, cfg.parameter, cfg.value,
                              error=f"{type(exc).__name__}: {exc}")


def set_path(doc, dotted, value):
    """Return a copy of ``doc`` with ``a.b.c`` set to ``value``."""
    out = copy.deepcopy(doc)
    node = out
    keys = dotted.split(".")
    for k in keys[:-1]:
        node = node.setdefault(k, {})
    node[keys[-1]] = value
    return out


def sweep_configs(base, axis, values):
    docs = []
    for v in values:
        doc = set_path(base, axis, v)
        doc["id"] = f"{doc['technique']}-{axis}={_fmt(v)}"
        docs.append(doc)
    return docs


def run_configs(docs, jobs=1, base_dir=".", seed=None):
    """Run independent scenario documents, optionally in worker processes."""
    if jobs and jobs > 1 and len(docs) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_run_safe, d, base_dir, seed) for d in docs]
            return [f.result() for f in futures]
    return [_run_safe(d, base_dir, seed) for d in docs]


def run_sweep(base_config, axis, values, jobs=1, base_dir=".", seed=None):
    """One scenario per axis value; failures are recorded, not raised."""
    values = list(values)
    if not values:
        raise ValueError("sweep axis needs at least one value")
    return run_configs(sweep_configs(base_config, axis, values), jobs, base_dir, seed)


def grid_configs(base, capacities=CAPACITIES_AH, targets=DAILY_TARGETS_KWH):
    """The full experiment grid: no hiding, every battery, every boiler target."""
    core = {k: v for k, v in base.items() if k not in ("blh", "llh", "battery", "technique", "id")}
    docs = [dict(core, technique="none", id="none")]
    battery = base.get("battery")
    for c in capacities:
        d = dict(core, technique="blh", id=f"blh-capacity_ah={_fmt(c)}",
                 blh=dict(base.get("blh", {}), capacity_ah=c))
        if battery:
            d["battery"] = battery
        docs.append(d)
    for e in targets:
        docs.append(dict(core, technique="llh", id=f"llh-daily_target_kwh={_fmt(e)}",
                         llh=dict(base.get("llh", {}), daily_target_kwh=e)))
    return docs


# ---------------------------------------------------------------------------
# emission

def _num(x):
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    return repr(float(x))


def _order_key(r):
    tech = TECHNIQUES.index(r.technique) if r.technique in TECHNIQUES else len(TECHNIQUES)
    v = r.value if isinstance(r.value, float) and not math.isnan(r.value) else -math.inf
    return (tech, r.parameter, v, r.scenario_id)


def _appliances(results):
    names = []
    for r in results:
        if r.accuracy is not None:
            for k in r.accuracy.per_appliance:
                if k not in names:
                    names.append(k)
    return names


def _safe_name(s):
    return "".join(c if c.isalnum() or c in "-_.=" else "_" for c in s)


def emit_results(results, out_dir):
    """Write ``results.csv``, ``plotdata.csv``, ``accuracy_table.csv`` and traces.

    Rows are sorted by technique and parameter value, so the files do not
    depend on the order in which scenarios were run.
    """
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out_dir}: {exc}") from exc
    rows = sorted(results, key=_order_key)
    names = _appliances(rows)
    written = []

    path = os.path.join(out_dir, "results.csv")
    header = ["scenario_id", "technique", "parameter", "value", "rmse_w", "turnover_kwh",
              "acc_total", "acc_reference_total", "fallback_fraction", "daily_energy_kwh",
              "error"] + [f"acc_{n}" for n in names]
    with _open_w(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            acc = r.accuracy.per_appliance if r.accuracy else {}
            w.writerow([
                r.scenario_id, r.technique, r.parameter, _num(r.value), _num(r.rmse_w),
                _num(r.turnover_kwh), _num(r.accuracy.total if r.accuracy else None),
                _num(r.reference.total if r.reference else None), _num(r.fallback_fraction),
                ";".join(repr(x) for x in r.daily_energy_kwh), r.error or "",
            ] + [_num(acc.get(n)) for n in names])
    written.append(path)

    path = os.path.join(out_dir, "plotdata.csv")
    with _open_w(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["scenario_id", "technique", "value", "turnover_kwh", "rmse_w"])
        for r in rows:
            if r.ok:
                w.writerow([r.scenario_id, r.technique, _num(r.value), _num(r.turnover_kwh),
                            _num(r.rmse_w)])
    written.append(path)

    path = os.path.join(out_dir, "accuracy_table.csv")
    with _open_w(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["case", "parameter"] + names + ["total"])
        ok = [r for r in rows if r.ok]
        for r in ok:
            case = "original" if r.technique == "none" else r.technique
            w.writerow([case, _num(r.value)]
                       + [_num(r.accuracy.per_appliance.get(n)) for n in names]
                       + [_num(r.accuracy.total)])
        if ok:
            ref = ok[0].reference
            w.writerow(["reference", ""] + [_num(ref.per_appliance.get(n)) for n in names]
                       + [_num(ref.total)])
    written.append(path)

    trace_dir = os.path.join(out_dir, "traces")
    for r in rows:
        if not r.traces:
            continue
        os.makedirs(trace_dir, exist_ok=True)
        path = os.path.join(trace_dir, f"{_safe_name(r.scenario_id)}.csv")
        cols = list(r.traces)
        with _open_w(path) as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(cols)
            data = [np.asarray(r.traces[c]).tolist() for c in cols]
            for row in zip(*data):
                w.writerow([repr(x) for x in row])
        written.append(path)
    return written


def _open_w(path):
    try:
        return open(path, "w", newline="")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
