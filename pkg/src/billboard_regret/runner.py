"""Run configuration, experiment execution and report assembly."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .algorithms import POLICIES, PolicyOptions, run_policy
from .algorithms.exchange import DEFAULT_ITERATION_CAP
from .core import Advertiser, Allocation, InfluenceModel, total_regret
from .errors import ConfigError, OracleLimitError
from .instance import (
    CityParams,
    CostParams,
    Horizon,
    Instance,
    PruneStats,
    SlotTable,
    build_instance,
    load_billboards,
    load_locations,
    load_trajectories,
    random_model,
    synthetic_city,
    write_billboards,
    write_locations,
    write_trajectories,
)
from .oracle import DEFAULT_LIMIT, brute_force
from .synth import (
    ALPHAS,
    DEMAND_RATIOS,
    GAMMAS,
    ScenarioParams,
    derive_seed,
    derive_supply,
    gamma_grid,
    generate_advertisers,
    scenario_grid,
)

log = logging.getLogger(__name__)

REPORT_HEADER = (
    "scenario_id", "alpha", "avg_demand_ratio", "gamma", "lambda", "policy", "rep",
    "excessive", "unsatisfied", "total", "satisfied", "seconds", "moves",
)
ORACLE = "OPT"
INPUT_MODES = ("synthetic", "csv", "random")


# ---------------------------------------------------------------- config


@dataclass
class RunConfig:
    mode: str = "synthetic"
    city: dict = field(default_factory=dict)
    paths: dict = field(default_factory=dict)
    random: dict = field(default_factory=lambda: {"slots": 40, "trajectories": 60, "density": 0.1})
    horizon: tuple[int, int] = (0, 86_400)
    slot_duration: int = 300
    match_all_slots: bool = False
    scenario: ScenarioParams = field(default_factory=ScenarioParams)
    advertisers: list | None = None
    cost: CostParams = field(default_factory=CostParams)
    policies: tuple[str, ...] = POLICIES
    repetitions: int = 3
    seed: int = 0
    max_advertisers: int | None = None
    fixed_advertiser_count: bool = False
    ea_skip_rule: bool = False
    best_improvement: bool = False
    iteration_cap: int = DEFAULT_ITERATION_CAP
    oracle_limit: int = DEFAULT_LIMIT
    workers: int = 1
    record_timing: bool = True
    dump_allocations: bool = False
    out: str = "out"
    alphas: tuple[float, ...] = ALPHAS
    ratios: tuple[float, ...] = DEMAND_RATIOS
    gammas: tuple[float, ...] = GAMMAS

    def validate(self) -> "RunConfig":
        if self.mode not in INPUT_MODES:
            raise ConfigError(f"unknown input mode {self.mode!r}")
        if not self.policies:
            raise ConfigError("at least one policy must be selected")
        unknown = [p for p in self.policies if p not in POLICIES + (ORACLE,)]
        if unknown:
            raise ConfigError(f"unknown policies {unknown}; choose from {list(POLICIES)}")
        if len(set(self.policies)) != len(self.policies):
            raise ConfigError("policy list has duplicates")
        if self.repetitions < 1:
            raise ConfigError("repetitions must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.iteration_cap < 1:
            raise ConfigError("iteration_cap must be >= 1")
        if self.max_advertisers is not None and self.max_advertisers < 1:
            raise ConfigError("max_advertisers must be >= 1")
        if self.mode == "csv":
            for key in ("trajectories", "billboards"):
                if key not in self.paths:
                    raise ConfigError(f"csv mode needs paths.{key}")
        Horizon(*self.horizon)
        return self

    @property
    def options(self) -> PolicyOptions:
        return PolicyOptions(self.best_improvement, self.ea_skip_rule, self.iteration_cap)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        data = dict(data)
        known = {f.name for f in fields(cls)}
        extra = set(data) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        try:
            if "scenario" in data:
                data["scenario"] = ScenarioParams.from_dict(data["scenario"])
            if "cost" in data:
                cost = dict(data["cost"])
                if "delta_range" in cost:
                    cost["delta_range"] = tuple(cost["delta_range"])
                data["cost"] = CostParams(**cost)
            for key in ("horizon", "policies", "alphas", "ratios", "gammas"):
                if key in data:
                    data[key] = tuple(data[key])
            return cls(**data).validate()
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def to_dict(self) -> dict:
        d = asdict(self)
        d["scenario"] = self.scenario.to_dict()
        d["cost"] = {"delta_range": list(self.cost.delta_range), "seed": self.cost.seed}
        for key in ("horizon", "policies", "alphas", "ratios", "gammas"):
            d[key] = list(d[key])
        return d


def load_config(path) -> RunConfig:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return RunConfig.from_dict(data)


# ---------------------------------------------------------------- inputs


@dataclass(frozen=True)
class Workload:
    """Instance plus the raw records it came from (synthetic/csv modes)."""

    model: InfluenceModel
    slots: SlotTable | None
    prune: PruneStats
    raw: tuple | None = None


def build_workload(cfg: RunConfig) -> Workload:
    scen = cfg.scenario
    if cfg.mode == "random":
        r = dict(cfg.random)
        model = random_model(int(r["slots"]), int(r["trajectories"]),
                             float(r.get("density", 0.1)), seed=int(r.get("seed", cfg.seed)))
        return Workload(model, None, PruneStats(model.slot_count, model.slot_count))
    horizon = Horizon(*cfg.horizon)
    if cfg.mode == "synthetic":
        city = dict(cfg.city)
        city.setdefault("seed", cfg.seed)
        for key in ("panel_range", "center"):
            if key in city:
                city[key] = tuple(city[key])
        try:
            params = CityParams(**city)
        except TypeError as exc:
            raise ConfigError(f"bad city parameters: {exc}") from exc
        boards, trajectories, coords = synthetic_city(params, horizon)
    else:
        boards = load_billboards(cfg.paths["billboards"])
        trajectories = load_trajectories(cfg.paths["trajectories"], horizon)
        loc = cfg.paths.get("locations")
        coords = load_locations(loc) if loc else None
    inst: Instance = build_instance(boards, trajectories, horizon, cfg.slot_duration,
                                    scen.lambda_m, coords, cfg.cost,
                                    match_all_slots=cfg.match_all_slots)
    return Workload(inst.model, inst.slots, inst.prune, (boards, trajectories, coords))


def advertisers_for(cfg: RunConfig, model: InfluenceModel, params: ScenarioParams,
                    rep: int) -> list[Advertiser]:
    if cfg.advertisers is not None:
        try:
            return [Advertiser(int(a["id"]), float(a["demand"]), float(a["payment"]))
                    for a in cfg.advertisers]
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"bad advertiser entry: {exc}") from exc
    stats = derive_supply(model, params=params,
                          fixed_advertiser_count=cfg.fixed_advertiser_count,
                          max_advertisers=cfg.max_advertisers)
    rng = np.random.default_rng(derive_seed(params.seed, rep))
    return generate_advertisers(stats, params, rng)


# ---------------------------------------------------------------- execution


def scenario_id(params: ScenarioParams, prefix: str = "") -> str:
    return f"{prefix}a{params.alpha:g}_p{params.avg_demand_ratio:g}_g{params.gamma:g}"


@dataclass
class PolicyRun:
    policy: str
    rep: int
    allocation: Allocation | None
    seconds: float
    moves: int
    termination: str | None = None
    error: str | None = None


@dataclass
class CellResult:
    cell_id: str
    params: ScenarioParams
    advertisers: list[list[Advertiser]]
    runs: list[PolicyRun]
    status: str = "ok"
    error: str | None = None


def run_cell(cfg: RunConfig, model: InfluenceModel, params: ScenarioParams,
             cell_id: str) -> CellResult:
    """All policies x repetitions for one scenario."""
    advs_per_rep, runs = [], []
    try:
        for rep in range(cfg.repetitions):
            advs = advertisers_for(cfg, model, params, rep)
            advs_per_rep.append(advs)
            for name in cfg.policies:
                runs.append(_run_one(cfg, model, advs, params, name, rep))
    except Exception as exc:  # a failing cell must not stop the sweep
        log.error("cell %s failed: %s", cell_id, exc)
        return CellResult(cell_id, params, advs_per_rep, runs, "failed", f"{type(exc).__name__}: {exc}")
    return CellResult(cell_id, params, advs_per_rep, runs)


def _run_one(cfg, model, advs, params, name, rep) -> PolicyRun:
    t0 = time.perf_counter()
    if name == ORACLE:
        try:
            res = brute_force(model, advs, params.gamma, limit=cfg.oracle_limit)
        except OracleLimitError as exc:
            return PolicyRun(name, rep, None, 0.0, 0, error=str(exc))
        alloc, trace = res.allocation, None
    else:
        seed = derive_seed(params.seed, rep, 7)
        alloc, trace = run_policy(name, model, advs, params.gamma, cfg.options, seed)
    seconds = time.perf_counter() - t0 if cfg.record_timing else 0.0
    moves = len(trace) if trace is not None else 0
    return PolicyRun(name, rep, alloc, seconds, moves,
                     trace.termination if trace is not None else None)


def _cell_task(args):
    cfg, model, params, cell_id = args
    return run_cell(cfg, model, params, cell_id)


def run_cells(cfg: RunConfig, model: InfluenceModel, cells) -> list[CellResult]:
    """Execute ``(params, cell_id)`` cells; result order follows ``cells``."""
    tasks = [(cfg, model, p, cid) for p, cid in cells]
    if cfg.workers == 1 or len(tasks) <= 1:
        return [_cell_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
        return list(pool.map(_cell_task, tasks))


# ---------------------------------------------------------------- reporting


def _rows_for(cell: CellResult, model: InfluenceModel, params: ScenarioParams,
              cell_id: str) -> tuple[list[dict], list[dict]]:
    """Per-repetition rows then one mean row per policy; plus error records."""
    per_rep: dict[str, list[dict]] = {}
    errors = []
    for run in cell.runs:
        base = {"scenario_id": cell_id, "alpha": params.alpha,
                "avg_demand_ratio": params.avg_demand_ratio, "gamma": params.gamma,
                "lambda": params.lambda_m, "policy": run.policy, "rep": run.rep}
        if run.allocation is None:
            errors.append({**base, "error": run.error})
            continue
        rep = total_regret(model, run.allocation, cell.advertisers[run.rep], params.gamma)
        per_rep.setdefault(run.policy, []).append({
            **base, "excessive": rep.excessive, "unsatisfied": rep.unsatisfied,
            "total": rep.total, "satisfied": rep.satisfied,
            "seconds": run.seconds, "moves": run.moves,
        })
    rows = [r for name in per_rep for r in per_rep[name]]
    for name, reps in per_rep.items():
        mean = dict(reps[0], rep="mean")
        for key in ("excessive", "unsatisfied", "satisfied", "seconds", "moves"):
            mean[key] = math.fsum(r[key] for r in reps) / len(reps)
        mean["total"] = mean["excessive"] + mean["unsatisfied"]
        rows.append(mean)
    return rows, errors


def format_csv(rows: Sequence[dict]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(REPORT_HEADER)
    for r in rows:
        writer.writerow([repr(r[k]) if isinstance(r[k], float) else r[k] for k in REPORT_HEADER])
    return buf.getvalue()


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def _cell_json(cell: CellResult, rows, errors) -> dict:
    return {
        "scenario_id": cell.cell_id,
        "params": cell.params.to_dict(),
        "status": cell.status,
        "error": cell.error,
        "rows": rows,
        "errors": errors,
        "terminations": {f"{r.policy}/{r.rep}": r.termination for r in cell.runs
                         if r.termination is not None},
    }


def _dump_allocations(out: Path, cell: CellResult, cell_id: str, params) -> None:
    for run in cell.runs:
        if run.allocation is None:
            continue
        doc = {"scenario_id": cell_id, "policy": run.policy, "rep": run.rep,
               "gamma": params.gamma,
               "advertisers": [asdict(a) for a in cell.advertisers[run.rep]],
               "allocation": run.allocation.to_dict()}
        _write(out / "allocations" / f"{cell_id}__{run.policy}__{run.rep}.json",
               json.dumps(doc, indent=1) + "\n")


# ---------------------------------------------------------------- commands


def cmd_gen(cfg: RunConfig) -> Path:
    """Write the instance and repetition advertisers as CSV files."""
    out = Path(cfg.out)
    work = build_workload(cfg)
    out.mkdir(parents=True, exist_ok=True)
    if work.raw is not None:
        boards, trajectories, coords = work.raw
        write_billboards(out / "billboards.csv", boards)
        write_trajectories(out / "trajectories.csv", trajectories)
        if coords:
            write_locations(out / "locations.csv", coords)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["slot_id", "billboard_id", "start", "end", "probability", "cost", "influence"])
    if work.slots is not None:
        for r in work.slots.rows():
            w.writerow([r["slot_id"], r["billboard_id"], r["start"], r["end"],
                        repr(r["probability"]), r["cost"], repr(r["influence"])])
    else:
        for s, inf in enumerate(work.model.individual_influence.tolist()):
            w.writerow([s, "", "", "", "", "", repr(inf)])
    _write(out / "slots.csv", buf.getvalue())

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["slot_id", "trajectory", "probability"])
    for s in range(work.model.slot_count):
        idx, p = work.model.entries(s)
        for t, q in zip(idx.tolist(), p.tolist()):
            w.writerow([s, t, repr(q)])
    _write(out / "influence.csv", buf.getvalue())

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["rep", "advertiser_id", "demand", "payment"])
    params = replace(cfg.scenario, seed=cfg.seed)
    for rep in range(cfg.repetitions):
        for a in advertisers_for(cfg, work.model, params, rep):
            w.writerow([rep, a.id, repr(a.demand), repr(a.payment)])
    _write(out / "advertisers.csv", buf.getvalue())
    summary = {"slots_before": work.prune.before, "slots_after": work.prune.after,
               "removed_pct": work.prune.removed_pct,
               "trajectories": work.model.trajectory_count,
               "total_supply": derive_supply(work.model).total_supply}
    _write(out / "instance.json", json.dumps(summary, indent=1) + "\n")
    return out


def _report(cfg: RunConfig, model, cells: list[CellResult], out: Path,
            per_cell_files: bool, fixed_gamma=()) -> list[dict]:
    """Write report.csv/report.json (and per-cell files); return all rows."""
    all_rows, docs = [], []
    for cell in cells:
        rows, errors = _rows_for(cell, model, cell.params, cell.cell_id)
        all_rows += rows
        docs.append(_cell_json(cell, rows, errors))
        if per_cell_files:
            _write(out / "cells" / f"{cell.cell_id}.csv", format_csv(rows))
        if cfg.dump_allocations:
            _dump_allocations(out, cell, cell.cell_id, cell.params)
    # gamma sweep: the base cell's allocations re-evaluated at each gamma
    for base_cell, params_list in fixed_gamma:
        for params in params_list:
            cid = scenario_id(params, "gsweep_")
            gcell = replace(base_cell, cell_id=cid, params=params)
            rows, errors = _rows_for(gcell, model, params, cid)
            all_rows += rows
            docs.append(_cell_json(gcell, rows, errors))
            if per_cell_files:
                _write(out / "cells" / f"{cid}.csv", format_csv(rows))
    _write(out / "report.csv", format_csv(all_rows))
    doc = {"config": cfg.to_dict(), "cells": docs}
    _write(out / "report.json", json.dumps(doc, indent=1, sort_keys=True) + "\n")
    return all_rows


def cmd_run(cfg: RunConfig) -> list[dict]:
    """Run every selected policy on the configured scenario."""
    work = build_workload(cfg)
    params = replace(cfg.scenario, seed=cfg.seed)
    cid = scenario_id(params)
    cells = run_cells(cfg, work.model, [(params, cid)])
    return _report(cfg, work.model, cells, Path(cfg.out), per_cell_files=False)


def cmd_sweep(cfg: RunConfig) -> list[dict]:
    """alpha x p grid, plus the gamma sweep over fixed base-scenario allocations."""
    work = build_workload(cfg)
    base = replace(cfg.scenario, seed=cfg.seed)
    grid = scenario_grid(base, cfg.alphas, cfg.ratios)
    cells = [(p, scenario_id(p)) for p in grid]
    base_cell = (base, scenario_id(base, "gbase_"))
    results = run_cells(cfg, work.model, cells + [base_cell])
    grid_results, base_result = results[:-1], results[-1]
    if base_result.status == "ok":
        gammas = [(base_result, gamma_grid(base, cfg.gammas))]
    else:
        gammas = []
        grid_results.append(base_result)
    return _report(cfg, work.model, grid_results, Path(cfg.out), per_cell_files=True,
                   fixed_gamma=gammas)


@dataclass
class OracleReport:
    optimal: float
    allocation: Allocation
    enumerated: int
    gaps: dict[str, float]


def cmd_oracle(cfg: RunConfig) -> OracleReport:
    """Brute-force optimum of repetition 0 and each policy's gap to it."""
    work = build_workload(cfg)
    params = replace(cfg.scenario, seed=cfg.seed)
    advs = advertisers_for(cfg, work.model, params, 0)
    res = brute_force(work.model, advs, params.gamma, limit=cfg.oracle_limit)
    gaps = {}
    for name in cfg.policies:
        if name == ORACLE:
            continue
        alloc, _ = run_policy(name, work.model, advs, params.gamma, cfg.options,
                              derive_seed(params.seed, 0, 7))
        gaps[name] = total_regret(work.model, alloc, advs, params.gamma).total - res.regret
    report = OracleReport(res.regret, res.allocation, res.enumerated, gaps)
    doc = {"optimal_regret": res.regret, "enumerated": res.enumerated,
           "allocation": res.allocation.to_dict(), "gaps": gaps,
           "advertisers": [asdict(a) for a in advs]}
    _write(Path(cfg.out) / "oracle.json", json.dumps(doc, indent=1) + "\n")
    return report


def read_report(path) -> list[dict[str, Any]]:
    """Parse a report.csv back into typed rows."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    out = []
    for r in rows:
        d: dict[str, Any] = dict(r)
        for k in ("alpha", "avg_demand_ratio", "gamma", "lambda", "excessive",
                  "unsatisfied", "total", "satisfied", "seconds", "moves"):
            d[k] = float(d[k])
        d["rep"] = d["rep"] if d["rep"] == "mean" else int(d["rep"])
        out.append(d)
    return out


__all__ = [
    "RunConfig", "load_config", "cmd_gen", "cmd_run", "cmd_sweep", "cmd_oracle",
    "REPORT_HEADER", "format_csv", "read_report",
]
