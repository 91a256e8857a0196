"""Experiment configuration, parallel ensemble runs and result persistence."""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from datetime import datetime, timezone
import csv
import hashlib
import json
import math
import os

import numpy as np
import yaml

from . import __version__
from .coupling import COUPLING_MODES, attach_bernoulli, find_regenerations
from .encounter import EncounterConfig, encounter_probability
from .environment import EnvironmentSpec, make_environment, with_seed
from .errors import ConfigError, CouplingError, InsufficientDataError
from .path_events import oscillation_stats
from .renewal import (classify_escape, iid_tests, limit_velocity_summary, tau1_moment_report,
                      velocity_direct, velocity_renewal, zero_one_report)
from .rng import TAG_ENV, TAG_NOISE, derive_seed
from .sde import SimConfig, simulate_path

KINDS = ("simulate", "regen", "velocity", "zeroone", "encounter", "oscillation")


@dataclass(frozen=True)
class CouplingConfig:
    epsilon: float = 0.1
    mode: str = "forced_bridge"
    guard: float | None = None  # defaults to 10 R
    max_tries: int = 100_000


@dataclass(frozen=True)
class EscapeConfig:
    theta: float | None = None  # defaults to 20 R
    beta: float | None = None


@dataclass(frozen=True)
class EncounterSettings:
    levels: tuple = (8.0, 16.0)
    replicates: int = 400
    y_factor: float = 3.0
    horizon_x: float = 400.0
    horizon_y: float = 400.0


@dataclass(frozen=True)
class OscillationSettings:
    L: float = 4.5
    alphas: tuple = (2, 3, 4)
    M: int = 20
    h_values: tuple = tuple(range(1, 11))


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    environment: EnvironmentSpec
    simulation: SimConfig
    coupling: CouplingConfig = CouplingConfig()
    escape: EscapeConfig = EscapeConfig()
    encounter: EncounterSettings = EncounterSettings()
    oscillation: OscillationSettings = OscillationSettings()
    ensemble: int = 100
    direction: tuple | None = None
    directions: tuple | None = None
    seed: int = 0
    threads: int = 1
    out: str | None = None
    dump_trajectories: bool = False
    plots: tuple = ()

    @property
    def l(self):
        d = self.environment.dimension
        if self.direction is None:
            return np.eye(d)[0]
        return np.asarray(self.direction, dtype=float)

    def canonical(self):
        """Semantic content only: output location, threads and plots excluded."""
        d = asdict(self)
        for k in ("out", "threads", "plots"):
            d.pop(k)
        return json.dumps(_jsonable(d), sort_keys=True, separators=(",", ":"))

    def config_hash(self):
        return hashlib.sha256(self.canonical().encode()).hexdigest()

    def validate(self):
        if self.kind not in KINDS:
            raise ConfigError(f"kind must be one of {KINDS}", "kind")
        for name in ("environment", "simulation"):
            try:
                getattr(self, name).validate()
            except ConfigError as exc:
                sub = f"{name}.{exc.field}" if exc.field else name
                raise ConfigError(str(exc), sub) from exc
        if self.ensemble < 1:
            raise ConfigError("ensemble must be >= 1", "ensemble")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1", "threads")
        if self.coupling.mode not in COUPLING_MODES:
            raise ConfigError(f"coupling.mode must be one of {COUPLING_MODES}", "coupling.mode")
        if not 0.0 <= self.coupling.epsilon <= 1.0:
            raise ConfigError("coupling.epsilon must lie in [0, 1]", "coupling.epsilon")
        if self.coupling.max_tries < 1:
            raise ConfigError("coupling.max_tries must be >= 1", "coupling.max_tries")
        if self.direction is not None:
            if len(self.direction) != self.environment.dimension:
                raise ConfigError("direction length must equal dimension", "direction")
            if abs(np.linalg.norm(self.direction) - 1.0) > 1e-9:
                raise ConfigError("direction must be a unit vector", "direction")
        return self


def _build(cls, data, prefix):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(f"{prefix} must be a mapping", prefix)
    known = {f.name for f in fields(cls)}
    for k in data:
        if k not in known:
            raise ConfigError(f"unknown field {prefix}.{k}", f"{prefix}.{k}")
    kw = {k: tuple(v) if isinstance(v, list) else v for k, v in data.items()}
    try:
        return cls(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{prefix}: {exc}", prefix) from exc


def config_from_dict(data):
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a mapping")
    data = dict(data)
    top = {f.name for f in fields(ExperimentConfig)}
    for k in data:
        if k not in top:
            raise ConfigError(f"unknown field {k}", k)
    if "kind" not in data:
        raise ConfigError("missing field kind", "kind")
    kw = {
        "kind": data.pop("kind"),
        "environment": _build(EnvironmentSpec, data.pop("environment", None), "environment"),
        "simulation": _build(SimConfig, data.pop("simulation", None), "simulation"),
        "coupling": _build(CouplingConfig, data.pop("coupling", None), "coupling"),
        "escape": _build(EscapeConfig, data.pop("escape", None), "escape"),
        "encounter": _build(EncounterSettings, data.pop("encounter", None), "encounter"),
        "oscillation": _build(OscillationSettings, data.pop("oscillation", None), "oscillation"),
    }
    for k, v in data.items():
        kw[k] = tuple(v) if isinstance(v, list) else v
    if kw.get("directions") is not None:
        kw["directions"] = tuple(tuple(r) for r in kw["directions"])
    try:
        cfg = ExperimentConfig(**kw)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg.validate()


def load_config(path):
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}", "config") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"config is not valid YAML: {exc}", "config") from exc
    return config_from_dict(data)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if hasattr(obj, "to_dict"):
        return _jsonable(obj.to_dict())
    return obj


@dataclass
class ResultEnvelope:
    config_hash: str
    tool_version: str
    kind: str
    started: str
    finished: str
    replicates: list
    summary: dict
    tables: dict = field(default_factory=dict)
    trajectories: list = field(default_factory=list, repr=False)

    def summary_document(self):
        return _jsonable({
            "config_hash": self.config_hash,
            "tool_version": self.tool_version,
            "kind": self.kind,
            "timestamps": {"started": self.started, "finished": self.finished},
            "summary": self.summary,
        })

    def write(self, out_dir):
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "summary.json"), "w") as fh:
            json.dump(self.summary_document(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        with open(os.path.join(out_dir, "replicates.jsonl"), "w") as fh:
            for rep in self.replicates:
                fh.write(json.dumps(_jsonable(rep), sort_keys=True) + "\n")
        for name, (header, rows) in self.tables.items():
            with open(os.path.join(out_dir, f"{name}.csv"), "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(header)
                w.writerows(rows)
        for i, tr in enumerate(self.trajectories):
            tr.to_csv(os.path.join(out_dir, f"trajectory_{i:05d}.csv"))


def replicate_seeds(master, i):
    """(environment seed, path seed) of replicate i."""
    return derive_seed(master, i, TAG_ENV), derive_seed(master, i, TAG_NOISE)


def _pmap(fn, n, threads):
    if threads <= 1:
        return [fn(i) for i in range(n)]
    with ThreadPoolExecutor(threads) as ex:
        return list(ex.map(fn, range(n)))


def _env_for(cfg, i):
    env_seed, path_seed = replicate_seeds(cfg.seed, i)
    return make_environment(with_seed(cfg.environment, env_seed)), path_seed


def _plain(cfg, i):
    env, seed = _env_for(cfg, i)
    sim = SimConfig(cfg.simulation.dt, cfg.simulation.horizon, seed)
    return simulate_path(env, np.zeros(env.d), sim)


def coupled_replicate(cfg, i):
    """Coupled path and regeneration record of replicate i."""
    env, seed = _env_for(cfg, i)
    sim = SimConfig(cfg.simulation.dt, cfg.simulation.horizon, seed)
    try:
        c = attach_bernoulli(env, np.zeros(env.d), sim, cfg.coupling.epsilon, cfg.coupling.mode,
                             l=cfg.l, max_tries=cfg.coupling.max_tries)
    except CouplingError as exc:
        raise CouplingError(exc.interval, exc.tries, replicate=i) from exc
    rec = find_regenerations(c, cfg.l, env.spec.R, cfg.coupling.guard)
    return c, rec


def _velocity_trace(trajs, l):
    n = trajs[0].n
    idx = np.arange(n, len(trajs[0].points), n)
    t = idx / n
    proj = np.array([(tr.points[idx] - tr.points[0]) @ l for tr in trajs])
    return {"t": t.tolist(), "mean": (proj.mean(axis=0) / t).tolist()}


def _safe(fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except InsufficientDataError as exc:
        return {"insufficient_data": str(exc)}


def _run_simulate(cfg):
    trajs = _pmap(lambda i: _plain(cfg, i), cfg.ensemble, cfg.threads)
    l = cfg.l
    reps = [{"replicate": i, "terminal": tr.points[-1], "velocity": float((tr.points[-1] - tr.points[0]) @ l) / tr.horizon}
            for i, tr in enumerate(trajs)]
    summary = {"velocity_direct": velocity_direct(trajs, l),
               "mean_terminal": np.mean([tr.points[-1] for tr in trajs], axis=0),
               "series": {"velocity_trace": _velocity_trace(trajs, l)}}
    return reps, summary, {}, trajs if cfg.dump_trajectories else []


def _regen_summary(cfg, records):
    incs = [z.dtau for r in records for z in r.increments]
    return {
        "n_regenerations": sum(len(r.taus) for r in records),
        "n_increments": len(incs),
        "n_censored": sum(r.last_block_censored for r in records),
        "velocity_renewal": _safe(velocity_renewal, records),
        "iid_tests": _safe(iid_tests, records),
        "tau1_moments": tau1_moment_report(records),
    }


def _run_regen(cfg):
    out = _pmap(lambda i: coupled_replicate(cfg, i), cfg.ensemble, cfg.threads)
    records = [r for _, r in out]
    reps = [dict(replicate=i, **r.to_dict()) for i, r in enumerate(records)]
    summary = _regen_summary(cfg, records)
    summary["series"] = {"tau_increments": [z.dtau for r in records for z in r.increments]}
    _add_running_mean(summary)
    return reps, summary, {}, []


def _add_running_mean(summary):
    t1 = summary["tau1_moments"]
    if "l_x_tau1" in t1:
        summary["series"]["running_mean"] = t1["l_x_tau1"]["running_mean"]


def _run_velocity(cfg):
    plain = _pmap(lambda i: _plain(cfg, i), cfg.ensemble, cfg.threads)
    out = _pmap(lambda i: coupled_replicate(cfg, i), cfg.ensemble, cfg.threads)
    l = cfg.l
    coupled = [c for c, _ in out]
    records = [r for _, r in out]
    direct = velocity_direct(plain, l)
    summary = {"velocity_direct": direct,
               "velocity_direct_coupled": velocity_direct(coupled, l)}
    summary.update(_regen_summary(cfg, records))
    ren = summary["velocity_renewal"]
    if isinstance(ren, type(direct)):
        summary["agreement_z"] = (ren.estimate - direct.estimate) / math.hypot(ren.se, direct.se) \
            if math.hypot(ren.se, direct.se) > 0 else None
    summary["series"] = {"velocity_trace": _velocity_trace(plain, l),
                         "tau_increments": [z.dtau for r in records for z in r.increments]}
    _add_running_mean(summary)
    reps = [dict(replicate=i, velocity=float((p.points[-1] - p.points[0]) @ l) / p.horizon,
                 **r.to_dict()) for i, (p, r) in enumerate(zip(plain, records))]
    return reps, summary, {}, []


def _theta(cfg):
    return 20 * cfg.environment.R if cfg.escape.theta is None else cfg.escape.theta


def _run_zeroone(cfg):
    trajs = _pmap(lambda i: _plain(cfg, i), cfg.ensemble, cfg.threads)
    l = cfg.l
    theta = _theta(cfg)
    classes = [classify_escape(tr, l, theta, cfg.escape.beta) for tr in trajs]
    summary = {"theta": theta,
               "zero_one": _safe(zero_one_report, classes, l),
               "velocity_direct": velocity_direct(trajs, l),
               "limit_velocity": limit_velocity_summary(trajs, theta, cfg.directions, beta=cfg.escape.beta),
               "series": {"velocity_trace": _velocity_trace(trajs, l)}}
    reps = [{"replicate": i, "label": c.label, "evidence": c.evidence} for i, c in enumerate(classes)]
    return reps, summary, {}, []


def _run_encounter(cfg):
    l = cfg.l
    rows = []
    s = cfg.encounter
    for L in s.levels:
        ec = EncounterConfig(float(L), tuple(s.y_factor * float(L) * l), s.replicates, s.horizon_x, s.horizon_y)
        try:
            ec.validate(l, cfg.environment.R)
        except ValueError as exc:
            raise ConfigError(str(exc), "encounter") from exc
        rows.append(encounter_probability(cfg.environment, ec, cfg.simulation.dt, l, cfg.seed, cfg.threads))
    table = ("L", "y_L", "n", "encounters", "gamma", "ci_low", "ci_high")
    csv_rows = [[r["L"], " ".join(repr(v) for v in r["y_L"]), r["n"], r["encounters"], r["gamma"],
                 r["ci_low"], r["ci_high"]] for r in rows]
    series = {k: [r[k] for r in rows] for k in ("L", "gamma", "ci_low", "ci_high")}
    return rows, {"encounter": rows, "series": {"encounter": series}}, {"encounter": (table, csv_rows)}, []


def _run_oscillation(cfg):
    trajs = _pmap(lambda i: _plain(cfg, i), cfg.ensemble, cfg.threads)
    s = cfg.oscillation
    l = cfg.l
    rows, reps, fractions = [], [], {}
    for alpha in s.alphas:
        per_h = {h: [] for h in s.h_values}
        for i, tr in enumerate(trajs):
            stats_m = [oscillation_stats(tr, l, s.L, m, alpha) for m in range(s.M + 1)]
            for st in stats_m:
                rows.append([i, st.m, st.alpha, st.N, st.k, "inf" if math.isinf(st.h) else st.h])
            for h in s.h_values:
                per_h[h].append(sum(st.h <= h for st in stats_m) / (s.M + 1))
        fractions[str(alpha)] = {str(h): float(np.mean(v)) for h, v in per_h.items()}
    for i in range(len(trajs)):
        reps.append({"replicate": i})
    summary = {"fractions": fractions, "L": s.L, "M": s.M}
    return reps, summary, {"oscillation": (("replicate", "m", "alpha", "N", "k", "h"), rows)}, []


RUNNERS = {"simulate": _run_simulate, "regen": _run_regen, "velocity": _run_velocity,
           "zeroone": _run_zeroone, "encounter": _run_encounter, "oscillation": _run_oscillation}


def run_experiment(cfg):
    cfg.validate()
    started = datetime.now(timezone.utc).isoformat()
    reps, summary, tables, trajs = RUNNERS[cfg.kind](cfg)
    finished = datetime.now(timezone.utc).isoformat()
    return ResultEnvelope(cfg.config_hash(), __version__, cfg.kind, started, finished,
                          reps, _jsonable(summary), tables, trajs)
