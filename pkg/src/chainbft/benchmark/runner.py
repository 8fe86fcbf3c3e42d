"""Run a configured experiment in the deterministic simulator."""
from __future__ import annotations

from dataclasses import dataclass

from ..byzantine import attacker_ids, make_attack
from ..runtime.simulation import Simulation
from .config import BenchConfig
from .metrics import Report, summarize
from .trace import RunTrace, losses_per_attack, trace_from_simulation
from .workload import generate_workload


@dataclass
class RunResult:
    report: Report
    trace: RunTrace
    sim: Simulation
    stalled: bool


def drain_views(byz_no: int, depth: int) -> int:
    """Extra views run past the measured window so its last blocks can commit."""
    return max(8, 2 * byz_no + 3 * depth + 2)


def build_simulation(cfg: BenchConfig, attack_views=None) -> Simulation:
    rcfg = cfg.replica_config()
    attacks = {i: make_attack(cfg.strategy, attack_views) for i in attacker_ids(rcfg.n, cfg.byz_no)}
    workload = None
    if cfg.rate > 0:
        # client links share the replica link model
        workload = generate_workload(cfg.rate, cfg.runtime, rcfg.n, cfg.psize, cfg.concurrency, cfg.seed,
                                     client_mean_ms=cfg.net_mean + cfg.delay, client_std_ms=cfg.net_std)
    return Simulation(rcfg, cfg.network_config(), seed=cfg.seed, attacks=attacks, scheme=cfg.scheme,
                      workload=workload)


def longest_commit_gap(sim: Simulation, observer: int, until_view: int) -> int:
    last = 0
    gap = 0
    for rec in sim.replicas[observer].commit_log:
        gap = max(gap, rec.commit_view - last)
        last = rec.commit_view
    return max(gap, until_view - last)


def simulate(cfg: BenchConfig, attack_views=None) -> RunResult:
    """Run ``cfg.views`` views, or ``cfg.runtime`` seconds of virtual time when views is unset."""
    sim = build_simulation(cfg, attack_views)
    depth = sim.replicas[0].rules.commit_depth
    extra = drain_views(cfg.byz_no, depth)
    obs_id = sim.observer_id
    obs = sim.replicas[obs_id]
    if cfg.views is not None:
        measured = cfg.views
        sim.run(views=measured + extra, observer=obs_id)
        end_ms = sim.now
        tx_window = (0.1 * end_ms, end_ms)
    else:
        horizon = cfg.runtime * 1000.0
        sim.run(until_ms=horizon, observer=obs_id)
        measured = max(obs.current_view, 1)
        # keep going until the window's blocks had their chance to commit
        sim.run(views=measured + extra, until_ms=horizon + 100 * cfg.timeout * extra, observer=obs_id)
        end_ms = horizon
        tx_window = (min(1000.0, 0.1 * horizon), horizon)
    trace = trace_from_simulation(sim, measured, observer=obs_id, duration_ms=end_ms)
    trace.meta["tx_window"] = tx_window
    gap = longest_commit_gap(sim, obs_id, obs.current_view)
    trace.meta["longest_commit_gap_views"] = gap
    if sim.attacks:
        trace.meta["honest_blocks_lost_per_attack"] = [a[2] for a in losses_per_attack(sim, obs_id, measured)]
    stalled = bool(cfg.stall_views) and gap > cfg.stall_views
    report = summarize(trace, cfg.effective())
    report.meta["stalled"] = stalled
    return RunResult(report, trace, sim, stalled)
