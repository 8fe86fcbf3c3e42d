"""Run traces: what one observer replica saw, view by view, plus client-side spans."""
from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass, field
from typing import Any


@dataclass
class ViewRecord:
    view: int
    leader: int
    block: str | None = None          # hex id of the leader's block, if one was proposed
    proposer_byzantine: bool = False
    certified: bool = False
    committed_at: int | None = None   # view in which the observer committed it


@dataclass
class TxRecord:
    id: int
    origin: int
    submit: float
    commit: float | None = None       # ack time at the client, ms
    view: int | None = None
    commit_view: int | None = None


@dataclass
class RunTrace:
    protocol: str
    n: int
    commit_depth: int
    measured_views: int
    duration_ms: float
    views: list[ViewRecord] = field(default_factory=list)
    txs: list[TxRecord] = field(default_factory=list)
    meta: dict[str, Any] = field(default_factory=dict)

    @property
    def warmup(self) -> int:
        return max(3, self.commit_depth)

    def window(self) -> tuple[int, int]:
        """Inclusive view range used by the metrics."""
        return self.warmup + 1, self.measured_views - 2

    def windowed(self) -> list[ViewRecord]:
        lo, hi = self.window()
        return [r for r in self.views if lo <= r.view <= hi]

    def views_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=list(ViewRecord.__dataclass_fields__))
        w.writeheader()
        for r in self.views:
            w.writerow(asdict(r))
        return buf.getvalue()


def trace_from_simulation(sim, measured_views: int, observer: int | None = None,
                          duration_ms: float | None = None) -> RunTrace:
    obs = sim.replicas[sim.observer_id if observer is None else observer]
    committed = {rec.block: rec.commit_view for rec in obs.commit_log}
    last_view = max(obs.current_view, measured_views)
    views = []
    for v in range(1, last_view + 1):
        leader = obs.leader_of(v)
        bid = obs.proposals_seen.get(v)
        views.append(ViewRecord(
            view=v, leader=leader, block=bid.hex() if bid else None,
            proposer_byzantine=leader in sim.attacks,
            certified=bid in obs.certified if bid else False,
            committed_at=committed.get(bid) if bid else None,
        ))
    txs = []
    wl = sim.workload
    if wl is not None:
        for i in range(len(wl)):
            ack = sim.acks.get(i)
            txs.append(TxRecord(i, int(wl.origin[i]), float(wl.submit[i]),
                                ack.ack if ack else None, ack.view if ack else None,
                                ack.commit_view if ack else None))
    return RunTrace(
        protocol=sim.cfg.protocol, n=sim.cfg.n, commit_depth=obs.rules.commit_depth,
        measured_views=measured_views, duration_ms=sim.now if duration_ms is None else duration_ms,
        views=views, txs=txs,
        meta={"observer": obs.id, "seed": sim.seed, "attackers": sorted(sim.attacks),
              "overwritten": len(obs.overwritten), "events": sim.events,
              "rejected_txs": len(sim.rejected), "counters": dict(obs.counters)},
    )


def losses_per_attack(sim, observer: int | None = None, until_view: int | None = None) -> list[tuple[int, int, int]]:
    """Honest blocks the observer saw overwritten, charged to each attack.

    An attack is a maximal run of consecutive views led by Byzantine replicas;
    an overwritten honest block is charged to the first attack after it.
    Returns (first view, last view, blocks lost) for every attack that ends by
    ``until_view``.
    """
    obs = sim.replicas[sim.observer_id if observer is None else observer]
    last = obs.current_view if until_view is None else until_view
    attacks = []
    v = 1
    while v <= last:
        if obs.leader_of(v) in sim.attacks:
            start = v
            while obs.leader_of(v + 1) in sim.attacks:
                v += 1
            if v <= last:
                attacks.append([start, v, 0])
        v += 1
    for b in obs.overwritten:
        if b.proposer in sim.attacks:
            continue
        for a in attacks:
            if a[0] > b.view:
                a[2] += 1
                break
    return [tuple(a) for a in attacks]
