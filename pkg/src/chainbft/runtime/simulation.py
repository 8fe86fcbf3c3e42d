"""Deterministic discrete-event simulation of N replicas on a virtual clock (ms).

Messages are passed as objects. Link delay is a clamped normal sample plus the
configured extra delay; block-carrying messages also pay ``2 * size / bandwidth``
in NICs. Each replica owns one CPU: protocol steps that sign or aggregate cost
``t_cpu_ms`` and delay everything queued behind them.

When ``dedup`` is on, only the first scheduled copy of a message per
destination is delivered; later copies (echoes, re-broadcasts) are skipped
before a delay is drawn. Dedup is turned off whenever messages can be lost.
"""
from __future__ import annotations

import heapq
import random
from dataclasses import dataclass, field
from typing import Callable

from ..byzantine import Attack
from ..crypto import make_keyrings
from ..mempool import PushResult
from .messages import Proposal, SyncResponse, approx_size, message_key, message_view
from .replica import BROADCAST, CommitRecord, Effects, Replica, ReplicaConfig

_MSG, _TIMER, _ADMIN = 0, 1, 2


@dataclass
class Fluctuation:
    start_ms: float
    end_ms: float
    low_ms: float = 10.0
    high_ms: float = 100.0


@dataclass
class NetworkConfig:
    mean_ms: float = 0.5            # one-way link delay
    std_ms: float = 0.0
    extra_delay_ms: float = 0.0     # the "delay" knob
    bandwidth: float | None = None  # bytes/s; None means NIC time is ignored
    t_cpu_ms: float = 0.0
    loss_rate: float = 0.0
    fluctuations: list[Fluctuation] = field(default_factory=list)
    dedup: bool = True


@dataclass
class Ack:
    tx: int
    origin: int
    submit: float
    commit: float
    ack: float
    block: bytes
    view: int
    commit_view: int


class Simulation:
    def __init__(self, cfg: ReplicaConfig, net: NetworkConfig | None = None, seed: int = 0,
                 attacks: dict[int, Attack] | None = None, scheme: str = "null", workload=None,
                 on_step: Callable[["Simulation", int], None] | None = None):
        self.cfg = cfg
        self.net = net or NetworkConfig()
        self.seed = seed
        self.rng = random.Random(seed)
        self.now = 0.0
        self._heap: list = []
        self._seq = 0
        self.attacks = dict(attacks or {})
        keyrings = make_keyrings(cfg.n, scheme, seed)
        self.replicas = [
            Replica(i, cfg, keyrings[i], self.attacks.get(i), clock=self._clock, ingest=self._ingest)
            for i in range(cfg.n)
        ]
        for r in self.replicas:
            r.commit_listener = self._on_commit
        self.busy_until = [0.0] * cfg.n
        self.slow = [0.0] * cfg.n
        self._arrivals: dict[tuple, float] = {}
        self._arrival_view: dict[int, list] = {}
        self.delivered = 0
        self.events = 0
        self.dropped_by_loss = 0
        self.on_step = on_step

        self.workload = workload
        self.acks: dict[int, Ack] = {}
        self.rejected: list[int] = []
        self.commit_counts: dict[int, int] = {}
        self._queues: list = []
        self._qpos: list[int] = []
        if workload is not None and len(workload):
            self._queues = workload.per_replica(cfg.n)
            self._arrival_times = workload.arrival
            self._qpos = [0] * cfg.n
        self._started = False

    # ------------------------------------------------------------------ clock and scheduling

    def _clock(self) -> float:
        return self.now

    def _push(self, t: float, kind: int, payload) -> None:
        self._seq += 1
        heapq.heappush(self._heap, (t, self._seq, kind, payload))

    def schedule_admin(self, time_ms: float, action: str, node: int, value: float = 0.0) -> None:
        """Queue an admin action: ``slow`` (extra outbound ms for ``node``) or ``crash``."""
        if action not in ("slow", "crash"):
            raise ValueError(f"unknown admin action {action!r}")
        self._push(time_ms, _ADMIN, (action, node, value))

    def add_fluctuation(self, start_ms: float, end_ms: float, low_ms: float = 10.0, high_ms: float = 100.0) -> None:
        self.net.fluctuations.append(Fluctuation(start_ms, end_ms, low_ms, high_ms))

    # ------------------------------------------------------------------ network

    def link_delay(self, src: int, msg) -> float:
        net = self.net
        base = None
        for fl in net.fluctuations:
            if fl.start_ms <= self.now < fl.end_ms:
                base = self.rng.uniform(fl.low_ms, fl.high_ms)
                break
        if base is None:
            base = self.rng.gauss(net.mean_ms, net.std_ms) if net.std_ms > 0 else net.mean_ms
        d = max(base, 0.0) + net.extra_delay_ms + self.slow[src]
        if net.bandwidth and isinstance(msg, (Proposal, SyncResponse)):
            d += 2000.0 * approx_size(msg) / net.bandwidth
        return d

    def _deliver_later(self, src: int, dst: int, msg, key) -> None:
        if key is not None:
            slot = (dst, key)
            if slot in self._arrivals:
                # the destination already has (or will get) a copy of this message
                return
        delay = 0.0 if dst == src else self.link_delay(src, msg)
        if self.net.loss_rate and dst != src and self.rng.random() < self.net.loss_rate:
            self.dropped_by_loss += 1
            return
        t = self.now + delay
        if key is not None:
            self._arrivals[slot] = t
            self._arrival_view.setdefault(message_view(msg), []).append(slot)
        self._push(t, _MSG, (dst, src, msg, key))

    def _dispatch(self, src: int, effects: Effects) -> None:
        dedup = self.net.dedup
        for dst, msg in effects.sends:
            key = message_key(msg) if dedup else None
            if dst is BROADCAST:
                for d in range(self.cfg.n):
                    if d != src:
                        self._deliver_later(src, d, msg, key)
            else:
                self._deliver_later(src, dst, msg, key)
        for kind, view, delay in effects.timers:
            self._push(self.now + delay, _TIMER, (src, kind, view))

    # ------------------------------------------------------------------ workload

    def _ingest(self, replica: Replica) -> None:
        if not self._queues:
            return
        rid = replica.id
        q = self._queues[rid]
        pos = self._qpos[rid]
        arr = self._arrival_times
        now = self.now
        wl = self.workload
        while pos < len(q) and arr[q[pos]] <= now:
            i = int(q[pos])
            if replica.submit(wl.transaction(i)) is PushResult.FULL:
                self.rejected.append(i)
            pos += 1
        self._qpos[rid] = pos

    def _on_commit(self, replica: Replica, rec: CommitRecord) -> None:
        if replica.id != rec.proposer or self.workload is None or replica.crashed:
            return
        wl = self.workload
        for tx in rec.txs:
            self.commit_counts[tx.id] = self.commit_counts.get(tx.id, 0) + 1
            if tx.id in self.acks:
                continue
            self.acks[tx.id] = Ack(tx.id, rec.proposer, tx.submit_time, self.now,
                                   self.now + float(wl.d_out[tx.id]), rec.block, rec.view, rec.commit_view)

    # ------------------------------------------------------------------ main loop

    def start(self) -> None:
        if self._started:
            return
        self._started = True
        for r in self.replicas:
            self._dispatch(r.id, r.start())

    def step(self) -> bool:
        """Process one event; False when the queue is empty."""
        if not self._heap:
            return False
        t, _, kind, payload = heapq.heappop(self._heap)
        self.now = t
        self.events += 1
        if kind == _ADMIN:
            action, node, value = payload
            if action == "slow":
                self.slow[node] = value
            else:
                self.replicas[node].crash()
            return True
        rid = payload[0]
        if self.busy_until[rid] > t:
            # the replica's CPU is still busy: requeue behind it
            self._push(self.busy_until[rid], kind, payload)
            return True
        r = self.replicas[rid]
        if kind == _MSG:
            _, src, msg, key = payload
            self.delivered += 1
            effects = r.on_message(src, msg)
        else:
            _, kind_name, view = payload
            effects = r.on_timer(kind_name, view)
        if effects.cpu_units and self.net.t_cpu_ms:
            self.busy_until[rid] = t + effects.cpu_units * self.net.t_cpu_ms
            self.now = self.busy_until[rid]
        self._dispatch(rid, effects)
        self.now = t
        if self.on_step is not None:
            self.on_step(self, rid)
        return True

    def _gc_arrivals(self) -> None:
        floor = min((r.current_view for r in self.replicas if not r.crashed), default=0) - 3
        for v in [v for v in self._arrival_view if 0 < v < floor]:
            for slot in self._arrival_view.pop(v):
                self._arrivals.pop(slot, None)

    def run(self, views: int | None = None, until_ms: float | None = None,
            max_events: int | None = None, observer: int | None = None) -> None:
        """Advance until ``observer`` reaches view ``views``, time passes ``until_ms``,
        ``max_events`` have been processed, or nothing is left to do."""
        self.start()
        obs = self.replicas[self.observer_id if observer is None else observer]
        budget = max_events if max_events is not None else float("inf")
        done = 0
        last_gc_view = 0
        heap = self._heap
        while heap and done < budget:
            if until_ms is not None and heap[0][0] > until_ms:
                self.now = until_ms
                break
            if views is not None and obs.current_view >= views:
                break
            self.step()
            done += 1
            if obs.current_view - last_gc_view >= 16:
                last_gc_view = obs.current_view
                self._gc_arrivals()

    # ------------------------------------------------------------------ inspection

    @property
    def honest_ids(self) -> list[int]:
        return [i for i in range(self.cfg.n) if i not in self.attacks]

    @property
    def observer_id(self) -> int:
        ids = [i for i in self.honest_ids if not self.replicas[i].crashed]
        return ids[0] if ids else 0

    @property
    def observer(self) -> Replica:
        return self.replicas[self.observer_id]

    def committed_chains(self, honest_only: bool = True) -> dict[int, list[bytes]]:
        ids = self.honest_ids if honest_only else range(self.cfg.n)
        return {i: self.replicas[i].committed_ids() for i in ids}
