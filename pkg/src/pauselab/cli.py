"""Config-driven experiment runner with seeded, persisted, resumable scans.

Subcommands: ``spectrum``, ``pause-scan``, ``relax-scan``, ``target-time``,
``tts``, ``fit``, ``gibbs``. Every run writes into its own directory under
the output root (flag ``--output``, config ``output``, env
``PAUSELAB_OUTPUT_ROOT``, or ``./runs``), named by the configuration hash so
an interrupted scan resumes when rerun. Each directory holds the data CSVs,
a JSON summary, and ``manifest.json`` recording the resolved configuration,
its hash, the package version, schedule provenance, per-point seeds and the
list of files written. Rerunning a manifest reproduces Monte Carlo sample
files byte for byte; master-equation numbers are deterministic to
integrator tolerance.

Configuration is a single JSON object (``--config file.json``) whose keys
are the ``ExperimentConfig`` field names; command-line flags override
individual fields. Exit codes: 0 success, 2 configuration error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import hashlib
import itertools
import json
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (FitError, fit_decay, fit_decay_bootstrap,
                       make_tts_report, pause_time_to_target, runs_test)
from .instance import IsingInstance, bundled_instance, load_instance
from .quantum import (AmePauseScanner, BathParams, NumericalFailure,
                      build_hamiltonian, get_path, gibbs_populations,
                      lowest_eigs, min_gap)
from .schedule import (AnnealSchedule, schedule_from_csv, schedule_to_csv,
                       synthetic_schedule)
from .svmc_engine import DriftError, SvmcParams, run_many

OUTPUT_ROOT_ENV = "PAUSELAB_OUTPUT_ROOT"
ENGINES = ("svmc", "svmc-tf", "ame")


class ConfigError(ValueError):
    """Configuration that cannot be run (exit code 2)."""


def _fmt(x: float) -> str:
    """Stable numeric formatting for CSV cells and resume keys."""
    return f"{float(x):.12g}"


# ---------------------------------------------------------------------------
# Configuration


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment: engine, physical inputs, grids and bookkeeping.

    Times follow the engine: sweeps for the Monte Carlo engines, us for the
    master equation. ``t_anneal`` and ``t_pause`` left unset pick the engine
    default (10^4 sweeps or 1.0 us; no pause).
    """

    engine: str = "svmc"
    instance: str = "I12_0"          # bundled name or a file path
    schedule: str = "synthetic"      # "synthetic" or a tabulated-CSV path
    s_pause: tuple = ()
    t_pause: tuple | None = None
    t_anneal: tuple | None = None
    temperature: tuple = (12.0,)     # mK
    repetitions: int = 10_000
    seed: int = 0
    output: str | None = None
    label: str | None = None
    # master-equation knobs
    coupling_sq: float = 1e-3
    cutoff: float = 8.0 * math.pi    # rad/ns
    levels: int = 16
    slices: int = 1024
    # analysis knobs
    target: float = 0.95
    window: float = 0.01
    crossing_mode: str = "interpolate"
    fit_mode: str = "single"
    bootstrap: int = 0
    # spectrum knobs
    spectrum_points: int = 201
    spectrum_levels: int = 20
    jobs: int = 1

    @property
    def time_unit(self) -> str:
        return "us" if self.engine == "ame" else "sweep"

    @property
    def variant(self) -> str:
        return {"svmc": "standard", "svmc-tf": "transverse-field-restricted",
                "ame": ""}[self.engine]


_GRID_FIELDS = ("s_pause", "t_pause", "t_anneal", "temperature")


def _as_grid(name: str, value) -> tuple:
    if value is None:
        return None
    if np.ndim(value) == 0:
        value = [value]
    try:
        out = tuple(float(v) for v in value)
    except (TypeError, ValueError):
        raise ConfigError(f"{name} must be a list of numbers") from None
    return out


def resolve_config(doc: dict | None, overrides: dict) -> ExperimentConfig:
    """Merge defaults, a JSON document and flag overrides, then validate."""
    known = {f.name for f in fields(ExperimentConfig)}
    merged: dict = {}
    for source, tag in ((doc or {}, "config file"), (overrides, "flags")):
        unknown = set(source) - known
        if unknown:
            raise ConfigError(f"unknown {tag} keys: {', '.join(sorted(unknown))}")
        merged.update(source)
    for name in _GRID_FIELDS:
        if name in merged:
            merged[name] = _as_grid(name, merged[name])
    scalar_types = {"repetitions": int, "seed": int, "jobs": int,
                    "levels": int, "slices": int, "bootstrap": int,
                    "spectrum_points": int, "spectrum_levels": int,
                    "coupling_sq": float, "cutoff": float, "target": float,
                    "window": float}
    for name, cast in scalar_types.items():
        if merged.get(name) is not None:
            try:
                merged[name] = cast(merged[name])
            except (TypeError, ValueError):
                raise ConfigError(
                    f"{name} must be a {cast.__name__}") from None
    try:
        cfg = ExperimentConfig(**merged)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None

    if cfg.engine not in ENGINES:
        raise ConfigError(f"engine must be one of {', '.join(ENGINES)}")
    defaults = {"t_anneal": (1.0,) if cfg.engine == "ame" else (10_000.0,),
                "t_pause": (0.0,)}
    fills = {k: v for k, v in defaults.items() if getattr(cfg, k) is None}
    if fills:
        cfg = replace(cfg, **fills)

    for name in _GRID_FIELDS:
        if len(getattr(cfg, name)) != len(set(getattr(cfg, name))):
            raise ConfigError(f"{name} has repeated values")
    if not cfg.t_pause or not cfg.t_anneal or not cfg.temperature:
        raise ConfigError("t_pause, t_anneal and temperature must be nonempty")
    if any(t < 0 for t in cfg.t_pause) or any(t <= 0 for t in cfg.t_anneal):
        raise ConfigError("t_pause must be nonnegative and t_anneal positive")
    if cfg.engine != "ame":
        whole = all(float(t).is_integer() for t in cfg.t_pause + cfg.t_anneal)
        if not whole:
            raise ConfigError(
                "Monte Carlo times are sweep counts; use whole numbers")
    if any(not 0.0 <= s <= 1.0 for s in cfg.s_pause):
        raise ConfigError("s_pause values must lie in [0, 1]")
    if any(T <= 0 for T in cfg.temperature):
        raise ConfigError("temperature must be positive (mK)")
    if cfg.repetitions < 1:
        raise ConfigError("repetitions must be at least 1")
    if not 0 <= cfg.seed < 2**64:
        raise ConfigError("seed must fit in 64 bits")
    if cfg.jobs < 1:
        raise ConfigError("jobs must be at least 1")
    if cfg.levels < 2 or cfg.slices < 2:
        raise ConfigError("levels and slices must be at least 2")
    if cfg.coupling_sq < 0 or cfg.cutoff <= 0:
        raise ConfigError("coupling_sq must be >= 0 and cutoff > 0")
    if not 0.0 < cfg.target < 1.0:
        raise ConfigError("target must lie strictly between 0 and 1")
    if cfg.crossing_mode not in ("interpolate", "median-window"):
        raise ConfigError("crossing_mode must be interpolate or median-window")
    if cfg.fit_mode not in ("single", "two-scale", "fixed-alpha"):
        raise ConfigError("fit_mode must be single, two-scale or fixed-alpha")
    if cfg.spectrum_points < 2 or cfg.spectrum_levels < 1:
        raise ConfigError("spectrum_points >= 2 and spectrum_levels >= 1")
    return cfg


def _load_instance(cfg: ExperimentConfig) -> IsingInstance:
    path = Path(cfg.instance)
    if path.exists():
        return load_instance(path.read_text())
    try:
        return bundled_instance(cfg.instance)
    except FileNotFoundError:
        raise ConfigError(
            f"instance {cfg.instance!r} is neither a file nor bundled") from None


def _load_schedule(cfg: ExperimentConfig) -> tuple[AnnealSchedule, dict]:
    if cfg.schedule == "synthetic":
        sched = synthetic_schedule()
        digest = hashlib.sha256(schedule_to_csv(sched).encode()).hexdigest()
        return sched, {"source": "synthetic", "sha256": digest}
    path = Path(cfg.schedule)
    if not path.exists():
        raise ConfigError(f"schedule file not found: {cfg.schedule}")
    text = path.read_text()
    sched = schedule_from_csv(text)
    return sched, {"source": str(path.resolve()),
                   "sha256": hashlib.sha256(text.encode()).hexdigest()}


# ---------------------------------------------------------------------------
# Manifest and run directory


@dataclass
class RunManifest:
    """Reproducibility record written next to every output file."""

    command: str
    config: dict
    config_hash: str
    version: str
    created: str
    completed: str | None
    schedule_provenance: dict
    point_seeds: list
    outputs: list

    def to_dict(self) -> dict:
        return asdict(self)


def config_hash(command: str, cfg: ExperimentConfig) -> str:
    doc = {"command": command, "config": asdict(cfg)}
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def _now() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%S%z")


class RunDir:
    """Output directory plus its manifest; append-only result files."""

    def __init__(self, command: str, cfg: ExperimentConfig,
                 provenance: dict, point_seeds: list):
        root = Path(cfg.output or os.environ.get(OUTPUT_ROOT_ENV) or "runs")
        digest = config_hash(command, cfg)
        name = cfg.label or f"{command}-{digest[:12]}"
        self.path = root / name
        self.path.mkdir(parents=True, exist_ok=True)
        existing = self._read_manifest()
        if existing is not None and existing.get("config_hash") != digest:
            raise ConfigError(
                f"{self.path} holds a different configuration; "
                "change label or output root")
        if existing is None and any(self.path.iterdir()):
            raise ConfigError(
                f"{self.path} contains files but no manifest; refusing to mix")
        self.resumed = existing is not None
        outputs = existing["outputs"] if self.resumed else []
        created = existing["created"] if self.resumed else _now()
        self.manifest = RunManifest(
            command=command, config=asdict(cfg), config_hash=digest,
            version=__version__, created=created, completed=None,
            schedule_provenance=provenance, point_seeds=point_seeds,
            outputs=outputs)
        self._flush()

    def _read_manifest(self) -> dict | None:
        path = self.path / "manifest.json"
        if not path.exists():
            return None
        try:
            return json.loads(path.read_text())
        except json.JSONDecodeError:
            raise ConfigError(f"unreadable manifest: {path}") from None

    def _flush(self):
        tmp = self.path / "manifest.json.tmp"
        tmp.write_text(json.dumps(self.manifest.to_dict(), indent=1) + "\n")
        tmp.replace(self.path / "manifest.json")

    def register(self, relative: str):
        if relative not in self.manifest.outputs:
            self.manifest.outputs.append(relative)
            self._flush()

    def write_text(self, relative: str, text: str):
        target = self.path / relative
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(text)
        self.register(relative)

    def write_json(self, relative: str, doc: dict):
        self.write_text(relative, json.dumps(doc, indent=1) + "\n")

    def append_csv(self, relative: str, header: str, lines):
        """Append rows, writing the header only on file creation."""
        target = self.path / relative
        fresh = not target.exists()
        with open(target, "a") as fh:
            if fresh:
                fh.write(header + "\n")
            for line in lines:
                fh.write(line + "\n")
        self.register(relative)

    def rewrite_csv(self, relative: str, header: str, lines):
        self.write_text(relative, "\n".join([header, *lines]) + "\n")

    def existing_keys(self, relative: str, key_cols: int) -> set:
        """Resume support: keys of rows already present in a results CSV."""
        target = self.path / relative
        if not target.exists():
            return set()
        keys = set()
        for line in target.read_text().splitlines()[1:]:
            if line:
                keys.add(tuple(line.split(",")[:key_cols]))
        return keys

    def finish(self):
        self.manifest.completed = _now()
        self._flush()


# ---------------------------------------------------------------------------
# Engine adapters


def _svmc_batch(instance, schedule, cfg: ExperimentConfig, T, t_a, s_p, t_p,
                seed):
    params = SvmcParams(variant=cfg.variant, temperature=T,
                        sweeps_anneal=int(t_a), sweeps_pause=int(t_p),
                        seed=int(seed))
    plan = params.default_plan(s_p=s_p if t_p > 0 else None)
    return run_many(instance, schedule, plan, params, cfg.repetitions)


def _bath(cfg: ExperimentConfig, T: float) -> BathParams:
    return BathParams(temperature=T, coupling_sq=cfg.coupling_sq,
                      cutoff=cfg.cutoff)


def _scanner(instance, schedule, cfg: ExperimentConfig, T, t_a):
    path = get_path(instance, schedule, m=cfg.levels, slices=cfg.slices)
    return AmePauseScanner(path, _bath(cfg, T), t_a=t_a)


def _scan_grid(cfg: ExperimentConfig) -> list:
    return list(itertools.product(cfg.temperature, cfg.t_anneal,
                                  cfg.s_pause, cfg.t_pause))


def _point_seeds(cfg: ExperimentConfig, n_points: int) -> np.ndarray:
    return np.random.SeedSequence(cfg.seed).generate_state(
        n_points, dtype=np.uint64)


def _run_points(instance, schedule, cfg, run: RunDir, grid, seeds,
                relative: str, header: str, key_cols: int, sample_dir: bool):
    """Shared grid executor behind pause-scan and relax-scan.

    Completed rows (matched by formatted key columns) are skipped so a rerun
    continues where an interruption stopped. Monte Carlo points run in up to
    ``jobs`` threads (the sweep kernel releases the GIL); master-equation
    points share one scanner per (temperature, t_anneal) pair and are cheap.
    Rows append as points finish and the file is rewritten in grid order at
    the end.
    """
    done = run.existing_keys(relative, key_cols)
    keys = [tuple(map(_fmt, point)) for point in grid]
    pending = [i for i, key in enumerate(keys) if key[:key_cols] not in done]
    rows: dict[int, str] = {}
    baselines = []

    if cfg.engine == "ame":
        for (T, t_a), members in itertools.groupby(
                enumerate(grid), key=lambda item: item[1][:2]):
            members = [(i, point) for i, point in members
                       if i in set(pending)]
            if not members:
                continue
            scanner = _scanner(instance, schedule, cfg, T, t_a)
            baselines.append({"temperature_mk": T, "t_a": t_a,
                              "p0_no_pause": scanner.baseline_p0,
                              "nonadiabatic_leak": scanner.leak})
            traj = _trajectory_rows(scanner)
            run.rewrite_csv(f"trajectory-T{_fmt(T)}-ta{_fmt(t_a)}.csv", *traj)
            for i, (_, _, s_p, t_p) in members:
                p0 = scanner.p0_with_pause(s_p, t_p)
                rows[i] = ",".join([*keys[i], _fmt(p0), "", ""])
                run.append_csv(relative, header, [rows[i]])
    else:
        def job(item):
            i, (T, t_a, s_p, t_p) = item
            batch = _svmc_batch(instance, schedule, cfg, T, t_a, s_p, t_p,
                                seeds[i])
            return i, batch

        with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
            for i, batch in pool.map(job, [(i, grid[i]) for i in pending]):
                rows[i] = ",".join([*keys[i], _fmt(batch.success_prob),
                                    _fmt(batch.error_2sigma),
                                    str(batch.repetitions)])
                run.append_csv(relative, header, [rows[i]])
                if sample_dir:
                    lines = list(batch.csv_rows())
                    run.rewrite_csv(f"samples/point-{i:04d}.csv",
                                    "seed,rep,bitstring,ising_energy,is_ground",
                                    lines)
                print(f"  [{len(rows)}/{len(pending)}] "
                      f"{dict(zip(('T', 't_a', 's_p', 't_p'), grid[i]))} "
                      f"-> P0 = {batch.success_prob:.4f}", flush=True)

    # reread to fold in rows from earlier sessions, then order by grid
    target = run.path / relative
    by_key = {}
    for line in target.read_text().splitlines()[1:]:
        if line:
            by_key[tuple(line.split(",")[:key_cols])] = line
    ordered = [by_key[key[:key_cols]] for key in keys]
    run.rewrite_csv(relative, header, ordered)
    return ordered, baselines


def _merge_baselines(run: RunDir, fresh: list) -> list:
    """Keep baseline records from an earlier session a resume did not redo."""
    old_path = run.path / "summary.json"
    if not old_path.exists():
        return fresh
    try:
        old = json.loads(old_path.read_text()).get("baselines", [])
    except json.JSONDecodeError:
        return fresh
    seen = {(b["temperature_mk"], b["t_a"]) for b in fresh}
    return fresh + [b for b in old
                    if (b["temperature_mk"], b["t_a"]) not in seen]


def _trajectory_rows(scanner: AmePauseScanner):
    """No-pause populations at every ramp node: s, t, p0..p(m-1), trace."""
    m = scanner.path.m
    header = "s,t," + ",".join(f"p{a}" for a in range(m)) + ",trace"
    lines = []
    for k in range(scanner.path.n_nodes):
        pops = np.real(np.diag(scanner.prefixes[k]))
        s_k = scanner.path.s[k]
        cells = [_fmt(s_k), _fmt(s_k * scanner.t_a),
                 *(_fmt(p) for p in pops), _fmt(pops.sum())]
        lines.append(",".join(cells))
    return header, lines


# ---------------------------------------------------------------------------
# Subcommands


def cmd_spectrum(cfg: ExperimentConfig) -> RunDir:
    instance = _load_instance(cfg)
    schedule, provenance = _load_schedule(cfg)
    run = RunDir("spectrum", cfg, provenance, [])
    dim = 1 << instance.n
    k = min(cfg.spectrum_levels, dim)
    svals = np.linspace(0.0, 1.0, cfg.spectrum_points)
    header = "s," + ",".join(f"E{j}" for j in range(k))
    lines = []
    prev = None
    for s in svals:
        H = build_hamiltonian(instance, schedule, s)
        sl = lowest_eigs(H, k, prev=prev, s=float(s))
        prev = sl
        lines.append(",".join([_fmt(s), *(_fmt(e) for e in sl.energies)]))
    run.rewrite_csv("spectrum.csv", header, lines)
    summary = {"levels": k, "points": cfg.spectrum_points}
    try:
        gap = min_gap(instance, schedule)
        summary.update({"s_gap": gap.s, "gap": gap.gap,
                        "gap_flagged": gap.flagged})
    except ValueError as exc:
        summary.update({"s_gap": None, "gap": None, "gap_note": str(exc)})
    run.write_json("summary.json", summary)
    run.finish()
    if summary.get("gap") is not None:
        print(f"minimum gap {summary['gap']:.6f} GHz at s = {summary['s_gap']:.5f}")
    return run


_SCAN_HEADER = "temperature_mk,t_anneal,s_p,t_p,p0,err_2sigma,repetitions"


def cmd_pause_scan(cfg: ExperimentConfig) -> RunDir:
    if not cfg.s_pause:
        raise ConfigError("pause-scan needs a nonempty s_pause grid")
    instance = _load_instance(cfg)
    schedule, provenance = _load_schedule(cfg)
    grid = _scan_grid(cfg)
    seeds = _point_seeds(cfg, len(grid))
    point_seeds = [[*map(_fmt, point), int(seed)]
                   for point, seed in zip(grid, seeds)]
    run = RunDir("pause-scan", cfg, provenance,
                 point_seeds if cfg.engine != "ame" else [])
    t0 = time.time()
    rows, baselines = _run_points(
        instance, schedule, cfg, run, grid, seeds, "results.csv",
        _SCAN_HEADER, key_cols=4, sample_dir=cfg.engine != "ame")
    summary = {"engine": cfg.engine, "time_unit": cfg.time_unit,
               "points": len(grid), "elapsed_s": round(time.time() - t0, 2)}
    baselines = _merge_baselines(run, baselines)
    if baselines:
        summary["baselines"] = baselines
    run.write_json("summary.json", summary)
    run.finish()
    print(f"{len(rows)} grid points -> {run.path / 'results.csv'}")
    return run


def cmd_relax_scan(cfg: ExperimentConfig) -> RunDir:
    if len(cfg.s_pause) != 1:
        raise ConfigError("relax-scan needs exactly one pause location")
    if len(cfg.t_anneal) != 1 or len(cfg.temperature) != 1:
        raise ConfigError("relax-scan varies t_p only; fix t_anneal and "
                          "temperature to one value each")
    if len(cfg.t_pause) < 2:
        raise ConfigError("relax-scan needs a grid of pause durations")
    instance = _load_instance(cfg)
    schedule, provenance = _load_schedule(cfg)
    grid = _scan_grid(cfg)
    seeds = _point_seeds(cfg, len(grid))
    point_seeds = [[*map(_fmt, point), int(seed)]
                   for point, seed in zip(grid, seeds)]
    run = RunDir("relax-scan", cfg, provenance,
                 point_seeds if cfg.engine != "ame" else [])
    rows, baselines = _run_points(
        instance, schedule, cfg, run, grid, seeds, "results.csv",
        _SCAN_HEADER, key_cols=4, sample_dir=cfg.engine != "ame")
    t_p = np.array([float(r.split(",")[3]) for r in rows])
    p0 = np.array([float(r.split(",")[4]) for r in rows])
    summary = {"engine": cfg.engine, "time_unit": cfg.time_unit,
               "s_p": cfg.s_pause[0], "points": len(grid)}
    baselines = _merge_baselines(run, baselines)
    if baselines:
        summary["baselines"] = baselines
    fit = fit_decay(np.column_stack([t_p, p0]), mode=cfg.fit_mode,
                    unit=cfg.time_unit)
    doc = fit.to_dict()
    doc["time_unit"] = cfg.time_unit
    doc["runs_test_p"] = runs_test(p0 - fit.predict(t_p))
    if cfg.bootstrap > 0:
        shots = cfg.repetitions if cfg.engine != "ame" else None
        boot = fit_decay_bootstrap(np.column_stack([t_p, p0]),
                                   mode=cfg.fit_mode, unit=cfg.time_unit,
                                   shots=shots, n_boot=cfg.bootstrap,
                                   seed=cfg.seed)
        doc["ci95"] = boot["ci"]
        doc["bootstrap_failures"] = boot["failures"]
    run.write_json("fit.json", doc)
    run.write_json("summary.json", summary)
    run.finish()
    gamma = doc.get("gamma", doc.get("gamma1"))
    print(f"fitted rate {gamma:.6g} per {cfg.time_unit} "
          f"-> {run.path / 'fit.json'}")
    return run


def _load_scan_csv(path: Path):
    """(s_values, t_values, p_matrix) from a pause-scan results CSV."""
    if not path.exists():
        raise ConfigError(f"scan file not found: {path}")
    lines = [ln for ln in path.read_text().splitlines() if ln.strip()]
    if not lines:
        raise ConfigError(f"{path} is empty")
    header = [c.strip().lower() for c in lines[0].split(",")]
    name_map = {"s_p": "s_p", "t_p": "t_p", "p0": "p0"}
    if not set(name_map) <= set(header):
        raise ConfigError(f"{path} needs columns s_p, t_p, p0")
    cols = {name: header.index(name) for name in name_map}
    table: dict[tuple, float] = {}
    for ln in lines[1:]:
        cells = ln.split(",")
        key = (float(cells[cols["s_p"]]), float(cells[cols["t_p"]]))
        val = float(cells[cols["p0"]])
        if key in table and table[key] != val:
            raise ConfigError(f"{path} repeats grid point {key}")
        table[key] = val
    s_values = sorted({k[0] for k in table})
    t_values = sorted({k[1] for k in table})
    p = np.empty((len(s_values), len(t_values)))
    for i, s in enumerate(s_values):
        for j, t in enumerate(t_values):
            if (s, t) not in table:
                raise ConfigError(f"{path} is missing grid point ({s}, {t})")
            p[i, j] = table[(s, t)]
    return np.array(s_values), np.array(t_values), p


def cmd_target_time(cfg: ExperimentConfig, source: str | None) -> RunDir:
    if source is None:
        if not cfg.s_pause or len(cfg.t_pause) < 2:
            raise ConfigError("target-time without --from needs s_pause and "
                              "a t_pause grid")
        if len(cfg.t_anneal) != 1 or len(cfg.temperature) != 1:
            raise ConfigError("target-time uses one t_anneal and one "
                              "temperature")
        instance = _load_instance(cfg)
        schedule, provenance = _load_schedule(cfg)
        run = RunDir("target-time", cfg, provenance, [])
        grid = _scan_grid(cfg)
        seeds = _point_seeds(cfg, len(grid))
        rows, _ = _run_points(instance, schedule, cfg, run, grid, seeds,
                              "results.csv", _SCAN_HEADER, key_cols=4,
                              sample_dir=False)
        s_values = np.array(sorted(cfg.s_pause))
        t_values = np.array(sorted(cfg.t_pause))
        p = np.empty((s_values.size, t_values.size))
        for row in rows:
            cells = row.split(",")
            i = int(np.argmin(np.abs(s_values - float(cells[2]))))
            j = int(np.argmin(np.abs(t_values - float(cells[3]))))
            p[i, j] = float(cells[4])
    else:
        s_values, t_values, p = _load_scan_csv(Path(source))
        provenance = {"source": str(Path(source).resolve()),
                      "sha256": hashlib.sha256(
                          Path(source).read_bytes()).hexdigest()}
        run = RunDir("target-time", cfg, provenance, [])
    result = pause_time_to_target(s_values, t_values, p, cfg.target,
                                  mode=cfg.crossing_mode, window=cfg.window,
                                  unit=cfg.time_unit)
    header = "s_p,t_star,lo,hi,monotone"
    lines = [",".join([_fmt(c.s_p), _fmt(c.t_star), _fmt(c.lo), _fmt(c.hi),
                       str(int(c.monotone))]) for c in result.crossings]
    run.rewrite_csv("target_time.csv", header, lines)
    run.write_json("summary.json", {
        "target": result.target, "mode": result.mode,
        "time_unit": result.unit, "reached": len(result.crossings),
        "omitted": [list(o) for o in result.omitted]})
    run.finish()
    print(f"{len(result.crossings)} locations reach P0 = {cfg.target} "
          f"({len(result.omitted)} omitted) -> {run.path / 'target_time.csv'}")
    return run


def _fit_params_from_json(path: Path) -> dict:
    if not path.exists():
        raise ConfigError(f"fit file not found: {path}")
    doc = json.loads(path.read_text())
    if doc.get("model") != "single":
        raise ConfigError("tts needs a single-rate fit (model 'single')")
    unit = doc.get("rate_unit", "1/us").removeprefix("1/")
    return {"p_g": doc["alpha"], "p_a": doc["alpha"] - doc["beta"],
            "gamma": doc["gamma"], "fit_unit": unit}


def cmd_tts(cfg: ExperimentConfig, source: str | None,
            p_ground: float | None, p_anneal: float | None,
            gamma: float | None) -> RunDir:
    if source is not None:
        params = _fit_params_from_json(Path(source))
    else:
        if None in (p_ground, p_anneal, gamma):
            raise ConfigError("tts needs --from fit.json or all of "
                              "--p-ground, --p-anneal and --gamma")
        params = {"p_g": p_ground, "p_a": p_anneal, "gamma": gamma,
                  "fit_unit": None}
    if len(cfg.t_anneal) != 1:
        raise ConfigError("tts uses a single t_anneal")
    if params["fit_unit"] is not None and params["fit_unit"] != cfg.time_unit:
        raise ConfigError(
            f"rate fitted in 1/{params['fit_unit']} cannot enter a "
            f"{cfg.time_unit}-domain report; set --engine to match")
    run = RunDir("tts", cfg, {"source": source or "parameters"}, [])
    report = make_tts_report(params["p_g"], params["p_a"], params["gamma"],
                             cfg.t_anneal[0], unit=cfg.time_unit,
                             fit_unit=params["fit_unit"])
    run.write_json("tts.json", report.to_dict())
    t_p, curve = report.curve()
    lines = [",".join([_fmt(a), _fmt(b)]) for a, b in zip(t_p, curve)]
    run.rewrite_csv("tts_curve.csv", f"t_p,tts_{cfg.time_unit}", lines)
    run.finish()
    print(f"verdict: pausing {report.verdict.replace('-', ' ')} the time to "
          f"solution (optimal t_p = {report.t_p_optimal:.6g} "
          f"{cfg.time_unit}) -> {run.path / 'tts.json'}")
    return run


def _load_fit_points(path: Path):
    """(t, p, shots) from `t_p,P0[,shots]` or `s_p,t_p,P0` CSV data."""
    if not path.exists():
        raise ConfigError(f"data file not found: {path}")
    lines = [ln for ln in path.read_text().splitlines() if ln.strip()]
    if not lines:
        raise ConfigError(f"{path} is empty")
    first = lines[0].split(",")
    shots = None
    try:
        [float(c) for c in first]
        has_header = False
    except ValueError:
        has_header = True
    if has_header:
        header = [c.strip().lower() for c in first]
        body = lines[1:]
        want_p = "p0" in header
        if not want_p or "t_p" not in header:
            raise ConfigError(f"{path} needs t_p and p0 columns")
        ti, pi = header.index("t_p"), header.index("p0")
        si = header.index("shots") if "shots" in header else None
        rows = [ln.split(",") for ln in body]
        t = np.array([float(r[ti]) for r in rows])
        p = np.array([float(r[pi]) for r in rows])
        if si is not None:
            counts = {int(float(r[si])) for r in rows}
            if len(counts) == 1:
                shots = counts.pop()
    else:
        rows = [ln.split(",") for ln in lines]
        width = {len(r) for r in rows}
        if width != {2} and width != {3}:
            raise ConfigError(f"{path}: headerless data must have two "
                              "columns t_p,P0 (use a header for more)")
        t = np.array([float(r[0]) for r in rows])
        p = np.array([float(r[1]) for r in rows])
        if width == {3}:
            raise ConfigError(f"{path}: three headerless columns are "
                              "ambiguous; add a header line")
    return t, p, shots


def cmd_fit(cfg: ExperimentConfig, source: str) -> RunDir:
    path = Path(source)
    t, p, shots = _load_fit_points(path)
    provenance = {"source": str(path.resolve()),
                  "sha256": hashlib.sha256(path.read_bytes()).hexdigest()}
    run = RunDir("fit", cfg, provenance, [])
    fit = fit_decay(np.column_stack([t, p]), mode=cfg.fit_mode,
                    unit=cfg.time_unit)
    doc = fit.to_dict()
    doc["time_unit"] = cfg.time_unit
    doc["points"] = int(t.size)
    doc["runs_test_p"] = runs_test(p - fit.predict(t))
    if cfg.bootstrap > 0:
        boot = fit_decay_bootstrap(np.column_stack([t, p]), mode=cfg.fit_mode,
                                   unit=cfg.time_unit, shots=shots,
                                   n_boot=cfg.bootstrap, seed=cfg.seed)
        doc["ci95"] = boot["ci"]
        doc["bootstrap_failures"] = boot["failures"]
        doc["bootstrap_shots"] = shots
    run.write_json("fit.json", doc)
    run.finish()
    gamma = doc.get("gamma", doc.get("gamma1"))
    print(f"fitted rate {gamma:.6g} per {cfg.time_unit}, runs-test p = "
          f"{doc['runs_test_p']:.3g} -> {run.path / 'fit.json'}")
    return run


def cmd_gibbs(cfg: ExperimentConfig) -> RunDir:
    if not cfg.s_pause:
        raise ConfigError("gibbs needs s values in s_pause")
    instance = _load_instance(cfg)
    schedule, provenance = _load_schedule(cfg)
    run = RunDir("gibbs", cfg, provenance, [])
    m = min(cfg.levels, 1 << instance.n)
    header = ("temperature_mk,s,"
              + ",".join(f"p{a}" for a in range(m)))
    lines = []
    for T in cfg.temperature:
        bath = _bath(cfg, T)
        for s in cfg.s_pause:
            H = build_hamiltonian(instance, schedule, s)
            sl = lowest_eigs(H, m, s=float(s))
            pops = gibbs_populations(sl, bath)
            lines.append(",".join([_fmt(T), _fmt(s),
                                   *(_fmt(v) for v in pops)]))
    run.rewrite_csv("gibbs.csv", header, lines)
    run.write_json("summary.json", {"levels": m,
                                    "temperatures_mk": list(cfg.temperature),
                                    "s_values": list(cfg.s_pause)})
    run.finish()
    print(f"{len(lines)} thermal population rows -> {run.path / 'gibbs.csv'}")
    return run


# ---------------------------------------------------------------------------
# Argument parsing


def _add_common(parser: argparse.ArgumentParser):
    parser.add_argument("--config", help="JSON configuration file")
    parser.add_argument("--engine", choices=ENGINES)
    parser.add_argument("--instance", help="bundled name or instance file")
    parser.add_argument("--schedule", help="'synthetic' or a schedule CSV")
    parser.add_argument("--s-pause", dest="s_pause",
                        help="comma list of pause locations in [0, 1]")
    parser.add_argument("--t-pause", dest="t_pause",
                        help="comma list of pause durations (sweeps or us)")
    parser.add_argument("--t-anneal", dest="t_anneal",
                        help="comma list of anneal times (sweeps or us)")
    parser.add_argument("--temperature", help="comma list, mK")
    parser.add_argument("--repetitions", type=int)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--output", help="output root directory")
    parser.add_argument("--label", help="run directory name override")
    parser.add_argument("--jobs", type=int, help="worker threads")
    parser.add_argument("--coupling-sq", dest="coupling_sq", type=float)
    parser.add_argument("--cutoff", type=float, help="bath cutoff, rad/ns")
    parser.add_argument("--levels", type=int, help="kept eigenlevels")
    parser.add_argument("--slices", type=int, help="ramp grid slices")
    parser.add_argument("--target", type=float)
    parser.add_argument("--window", type=float)
    parser.add_argument("--crossing-mode", dest="crossing_mode",
                        choices=("interpolate", "median-window"))
    parser.add_argument("--fit-mode", dest="fit_mode",
                        choices=("single", "two-scale", "fixed-alpha"))
    parser.add_argument("--bootstrap", type=int,
                        help="bootstrap resamples for fit intervals")
    parser.add_argument("--spectrum-points", dest="spectrum_points", type=int)
    parser.add_argument("--spectrum-levels", dest="spectrum_levels", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pauselab",
        description="Anneal-and-pause experiments: spectra, scans, fits.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    specs = {
        "spectrum": "low-lying spectrum along the anneal plus the gap",
        "pause-scan": "P0 over a grid of pause locations and durations",
        "relax-scan": "P0 against pause duration at one location, with fit",
        "target-time": "pause duration reaching a target P0 per location",
        "tts": "time-to-solution verdict from fitted relaxation parameters",
        "fit": "relaxation fit of an external t_p,P0 data file",
        "gibbs": "truncated thermal populations at chosen s and T",
    }
    parsers = {}
    for name, blurb in specs.items():
        p = sub.add_parser(name, help=blurb, description=blurb)
        _add_common(p)
        parsers[name] = p
    parsers["target-time"].add_argument(
        "--from", dest="source", help="existing pause-scan results.csv")
    parsers["tts"].add_argument(
        "--from", dest="source", help="fit.json from relax-scan or fit")
    parsers["tts"].add_argument("--p-ground", dest="p_ground", type=float)
    parsers["tts"].add_argument("--p-anneal", dest="p_anneal", type=float)
    parsers["tts"].add_argument("--gamma", type=float,
                                help="relaxation rate, 1/unit")
    parsers["fit"].add_argument("--data", required=True,
                                help="CSV of t_p,P0[,shots] or s_p,t_p,P0")
    return parser


_LIST_FLAGS = ("s_pause", "t_pause", "t_anneal", "temperature")


def _overrides_from_args(args: argparse.Namespace) -> dict:
    skip = {"command", "config", "source", "data", "p_ground", "p_anneal",
            "gamma"}
    out = {}
    for key, value in vars(args).items():
        if key in skip or value is None:
            continue
        if key in _LIST_FLAGS:
            try:
                value = tuple(float(v) for v in str(value).split(","))
            except ValueError:
                raise ConfigError(f"--{key.replace('_', '-')} expects a "
                                  "comma-separated number list") from None
        out[key] = value
    return out


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        doc = None
        if args.config:
            path = Path(args.config)
            if not path.exists():
                raise ConfigError(f"config file not found: {args.config}")
            try:
                doc = json.loads(path.read_text())
            except json.JSONDecodeError as exc:
                raise ConfigError(f"bad JSON in {args.config}: {exc}") from None
            if not isinstance(doc, dict):
                raise ConfigError("config file must hold a JSON object")
        cfg = resolve_config(doc, _overrides_from_args(args))
        if args.command == "spectrum":
            cmd_spectrum(cfg)
        elif args.command == "pause-scan":
            cmd_pause_scan(cfg)
        elif args.command == "relax-scan":
            cmd_relax_scan(cfg)
        elif args.command == "target-time":
            cmd_target_time(cfg, args.source)
        elif args.command == "tts":
            cmd_tts(cfg, args.source, args.p_ground, args.p_anneal,
                    args.gamma)
        elif args.command == "fit":
            cmd_fit(cfg, args.data)
        else:
            cmd_gibbs(cfg)
    except (ConfigError, OSError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (NumericalFailure, DriftError, FitError, ValueError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
