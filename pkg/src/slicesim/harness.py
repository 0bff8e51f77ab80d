"""Experiment orchestration: seeded runs, sweeps and artifact emission.

A plan is an INI file:

    [plan]
    name = demo
    scheduler = drra          ; drra | pgacl | sum-rate | sum-log | lmcs | equal
    seeds = 0, 1, 2
    slots = 200
    out = runs/demo

    [sweep]                   ; optional; lists produce a cartesian sweep
    risk_param = -10, -5, -0.1
    arrival_rate = 2.0

    [config]                  ; optional scenario overrides, any config field
    num_embb_users = 4

Every sweep point x seed yields exactly one run directory containing
slots.csv, summary.csv, config.ini (snapshot), solver.jsonl and
manifest.json.  Identical plan + seed reruns are byte-identical on the
CSVs: all randomness flows through the named substreams of the seed.
"""

from __future__ import annotations

import configparser
import csv
import itertools
import json
import os
import subprocess
import time
from dataclasses import dataclass, field

import numpy as np

from . import baselines, drra, metrics, pgacl
from .config import (ConfigError, ScenarioConfig, config_from_mapping,
                     config_hash, dump_config)
from .env import RngStream, sample_geometry, sample_slot
from .model import embb_user_rates, urllc_sum_rate

SCHEDULER_NAMES = ("drra", "pgacl", "sum-rate", "sum-log", "lmcs", "equal")

# scenario fields that may be swept from the [sweep] section
_SWEEPABLE = ("risk_param", "arrival_rate", "outage_target", "num_embb_users",
              "num_urllc_users", "num_rbs", "saa_samples", "warmstart_slots")


@dataclass
class ExperimentPlan:
    name: str = "run"
    scheduler: str = "drra"
    seeds: list = field(default_factory=lambda: [0])
    slots: int = 100
    out_dir: str = "runs"
    sweep: dict = field(default_factory=dict)      # field -> list of values
    overrides: dict = field(default_factory=dict)  # field -> value

    def base_config(self) -> ScenarioConfig:
        return config_from_mapping(self.overrides)

    def sweep_points(self) -> list:
        """Cartesian product of the sweep lists as {field: value} dicts."""
        if not self.sweep:
            return [{}]
        keys = sorted(self.sweep)
        return [dict(zip(keys, combo))
                for combo in itertools.product(*(self.sweep[k] for k in keys))]


def load_plan(path: str) -> ExperimentPlan:
    parser = configparser.ConfigParser()
    if not parser.read(path):
        raise ConfigError(f"plan file not found: {path}")
    if "plan" not in parser:
        raise ConfigError("plan: missing [plan] section")
    sec = parser["plan"]
    plan = ExperimentPlan(
        name=sec.get("name", "run"),
        scheduler=sec.get("scheduler", "drra"),
        seeds=[int(s) for s in sec.get("seeds", "0").split(",")],
        slots=sec.getint("slots", 100),
        out_dir=sec.get("out", "runs"),
    )
    if plan.scheduler not in SCHEDULER_NAMES:
        raise ConfigError(f"scheduler: unknown scheduler {plan.scheduler!r}")
    if plan.slots < 0:
        raise ConfigError("slots: must be >= 0")
    if "sweep" in parser:
        for key, value in parser.items("sweep"):
            if key not in _SWEEPABLE:
                raise ConfigError(f"sweep.{key}: not sweepable")
            plan.sweep[key] = [float(v) for v in value.split(",")]
    if "config" in parser:
        plan.overrides = dict(parser.items("config"))
    plan.base_config()  # validate overrides now, with field-level messages
    return plan


def _version() -> str:
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty"],
                             capture_output=True, text=True, timeout=5,
                             cwd=os.path.dirname(os.path.abspath(__file__)))
        if out.returncode == 0 and out.stdout.strip():
            return out.stdout.strip()
    except OSError:
        pass
    from . import __version__
    return __version__


def run_single(cfg: ScenarioConfig, scheduler: str, slots: int, seed: int,
               out_dir: str, r_min_mbps=(1.5, 2.0, 2.5)) -> metrics.MetricsLog:
    """Simulate one seeded run and write its artifacts under ``out_dir``."""
    if scheduler not in SCHEDULER_NAMES:
        raise ConfigError(f"scheduler: unknown scheduler {scheduler!r}")
    t_start = time.perf_counter()
    os.makedirs(out_dir, exist_ok=True)
    cfg = cfg.replace(seed=seed)

    rng = RngStream(seed)
    geometry = sample_geometry(cfg, rng)
    policy_rng = rng.substream("policy")
    agent = pgacl.AgentState.fresh(cfg) if scheduler == "pgacl" else None

    log = metrics.MetricsLog(num_users=cfg.num_embb_users)
    solver_lines = []
    for t in range(slots):
        slot = sample_slot(cfg, geometry, rng, t)
        saa = drra.saa_fading(slot, cfg, rng)
        alloc, report = drra.run_drra(slot, cfg, saa_gain=saa)
        solver_lines.append(report.to_json_line())

        reward_value, phi = 0.0, 0.0
        if scheduler == "drra":
            executed = alloc
        elif scheduler == "pgacl":
            action, reward_value, _ = pgacl.step(agent, alloc, slot, cfg,
                                                 policy_rng,
                                                 warmstart_z=alloc.z,
                                                 saa_gain=saa)
            executed = alloc.copy()
            executed.z = action.z
            phi = agent.phi
        else:
            demand = baselines.demand_from_load(slot.arrivals, cfg, slot)
            z = baselines.SCHEDULERS[scheduler](alloc, slot, demand, cfg)
            executed = alloc.copy()
            executed.z = z

        served = urllc_sum_rate(executed, slot, cfg)
        outage = int(served < cfg.urllc_packet_bits * slot.arrivals)
        log.add(metrics.SlotRecord(
            t=t,
            user_rates=embb_user_rates(executed, slot, cfg),
            urllc_rate=served,
            arrivals=slot.arrivals,
            outage=outage,
            reward=reward_value,
            phi=phi))

    log.to_csv(os.path.join(out_dir, "slots.csv"))
    with open(os.path.join(out_dir, "solver.jsonl"), "w") as fh:
        fh.write("\n".join(solver_lines) + ("\n" if solver_lines else ""))
    dump_config(cfg, os.path.join(out_dir, "config.ini"))
    write_summary(log, cfg, os.path.join(out_dir, "summary.csv"), r_min_mbps)
    manifest = {
        "scheduler": scheduler,
        "seed": seed,
        "slots": slots,
        "config_sha256": config_hash(cfg),
        "version": _version(),
        "wall_time_s": time.perf_counter() - t_start,
    }
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
    return log


def write_summary(log: metrics.MetricsLog, cfg: ScenarioConfig, path: str,
                  r_min_mbps=(1.5, 2.0, 2.5)) -> None:
    unit = cfg.rate_unit()
    rows = []
    if len(log):
        rates = log.user_rate_matrix() * unit      # Mbps
        sums = log.sum_rates() * unit
        rows = [
            ("mean_sum_rate_mbps", float(sums.mean())),
            ("std_sum_rate_mbps", float(sums.std())),
            ("jain_time_avg", metrics.jain_index(rates.mean(axis=0))),
            ("mean_outage", float(log.outages().mean())),
            ("mean_urllc_rate_mbps", float(log.urllc_rates().mean() * unit)),
            ("final_phi", float(log.phis()[-1])),
        ]
        for r_min in r_min_mbps:
            rows.append((f"reliability_at_{r_min:g}mbps",
                         metrics.embb_reliability(rates, r_min)))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["metric", "value"])
        for name, value in rows:
            writer.writerow([name, f"{value:.10g}"])


def _point_label(point: dict) -> str:
    if not point:
        return "base"
    return "_".join(f"{k}{v:g}" for k, v in sorted(point.items()))


def run_experiment(plan: ExperimentPlan, sweep: bool = True) -> list:
    """Execute the plan; returns the list of run directories written."""
    points = plan.sweep_points() if sweep else [{}]
    run_dirs = []
    for point in points:
        cfg = config_from_mapping({**plan.overrides, **point})
        for seed in plan.seeds:
            out = os.path.join(plan.out_dir, plan.name, _point_label(point),
                               f"seed{seed}")
            run_single(cfg, plan.scheduler, plan.slots, seed, out)
            run_dirs.append(out)
    return run_dirs


def report_run(run_dir: str) -> dict:
    """Recompute aggregates and figures for an existing run directory."""
    slots_csv = os.path.join(run_dir, "slots.csv")
    if not os.path.exists(slots_csv):
        raise ConfigError(f"no slots.csv under {run_dir}")
    log = metrics.MetricsLog.from_csv(slots_csv)
    from .config import load_config
    cfg = load_config(os.path.join(run_dir, "config.ini"))
    write_summary(log, cfg, os.path.join(run_dir, "summary.csv"))
    out = {}
    if len(log):
        unit = cfg.rate_unit()
        window = metrics.outage_series(log.outages(), cfg.outage_window)
        metrics.plot_outage_convergence({"run": window}, cfg.outage_target,
                                        os.path.join(run_dir, "outage.svg"))
        metrics.plot_ccdf({"sum rate": log.sum_rates() * unit},
                          os.path.join(run_dir, "rate_ccdf.svg"),
                          xlabel="sum eMBB rate (Mbps)")
        rates = log.user_rate_matrix().mean(axis=0) * unit
        metrics.plot_fairness({"run": metrics.jain_index(rates)},
                              os.path.join(run_dir, "fairness.svg"))
        r_grid = [0.5, 1.0, 1.5, 2.0, 2.5]
        rel = [metrics.embb_reliability(log.user_rate_matrix() * unit, r)
               for r in r_grid]
        metrics.plot_reliability({"run": rel}, r_grid,
                                 os.path.join(run_dir, "reliability.svg"))
        out = {"jain": metrics.jain_index(rates),
               "mean_outage": float(log.outages().mean())}
    return out
