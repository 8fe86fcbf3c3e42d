"""Socket transport: one asyncio event loop per replica process.

Frames on the wire are a 4-byte big-endian length followed by a sealed message.
Outbound links are ordered per peer and reconnect with capped exponential
back-off; a frame that cannot be sent is dropped, since the protocols recover
lost messages through timeouts. All replica state changes run on a single
consumer task, so two events never interleave.
"""
from __future__ import annotations

import asyncio
import logging
import struct
import time
from dataclasses import dataclass

from ..byzantine import Attack
from ..core import EncodingError, Transaction
from ..crypto import Keyring
from ..mempool import PushResult
from .messages import BadEnvelope, seal, unseal
from .replica import BROADCAST, CommitRecord, Effects, Replica, ReplicaConfig

log = logging.getLogger(__name__)

_LEN = struct.Struct(">I")
MAX_FRAME = 64 * 1024 * 1024


class FrameError(ValueError):
    pass


def encode_frame(data: bytes) -> bytes:
    if len(data) > MAX_FRAME:
        raise FrameError(f"frame of {len(data)} bytes exceeds {MAX_FRAME}")
    return _LEN.pack(len(data)) + data


async def read_frame(reader: asyncio.StreamReader) -> bytes:
    (size,) = _LEN.unpack(await reader.readexactly(_LEN.size))
    if size > MAX_FRAME:
        raise FrameError(f"announced frame of {size} bytes exceeds {MAX_FRAME}")
    return await reader.readexactly(size)


@dataclass
class Backoff:
    base_s: float = 0.05
    cap_s: float = 2.0
    attempt: int = 0

    def next_delay(self) -> float:
        d = min(self.cap_s, self.base_s * (2 ** self.attempt))
        self.attempt += 1
        return d

    def reset(self) -> None:
        self.attempt = 0


class PeerLink:
    """Ordered best-effort channel to one peer."""

    def __init__(self, host: str, port: int, queue_limit: int = 10_000, backoff: Backoff | None = None):
        self.host = host
        self.port = port
        self.queue: asyncio.Queue[bytes] = asyncio.Queue(queue_limit)
        self.backoff = backoff or Backoff()
        self.dropped = 0
        self.connects = 0
        self._task: asyncio.Task | None = None
        self._writer: asyncio.StreamWriter | None = None

    def start(self) -> None:
        self._task = asyncio.get_running_loop().create_task(self._run())

    def send(self, frame: bytes) -> None:
        try:
            self.queue.put_nowait(frame)
        except asyncio.QueueFull:
            self.dropped += 1

    async def _connect(self) -> asyncio.StreamWriter:
        while True:
            try:
                _, writer = await asyncio.open_connection(self.host, self.port)
                self.backoff.reset()
                self.connects += 1
                return writer
            except OSError as exc:
                delay = self.backoff.next_delay()
                log.debug("peer %s:%d unreachable (%s); retry in %.2fs", self.host, self.port, exc, delay)
                # frames queued while the peer is down are stale by the time it returns
                while not self.queue.empty():
                    self.queue.get_nowait()
                    self.dropped += 1
                await asyncio.sleep(delay)

    async def _run(self) -> None:
        while True:
            if self._writer is None:
                self._writer = await self._connect()
            frame = await self.queue.get()
            try:
                self._writer.write(frame)
                await self._writer.drain()
            except (OSError, ConnectionError) as exc:
                log.info("link to %s:%d broke: %s", self.host, self.port, exc)
                self.dropped += 1
                self._writer.close()
                self._writer = None

    async def close(self) -> None:
        if self._task is not None:
            self._task.cancel()
            try:
                await self._task
            except asyncio.CancelledError:
                pass
        if self._writer is not None:
            self._writer.close()


@dataclass
class CommitAck:
    tx: int
    block: str
    view: int
    commit_view: int
    latency_ms: float


class Backpressure(RuntimeError):
    """The mempool is full."""


class SocketNode:
    """A replica bound to a TCP listener and outbound links to its peers."""

    def __init__(self, rid: int, cfg: ReplicaConfig, keyring: Keyring, peers: dict[int, tuple[str, int]],
                 attack: Attack | None = None):
        self.id = rid
        self.cfg = cfg
        self.peers = peers
        self.keyring = keyring
        self._t0 = time.monotonic()
        self.replica = Replica(rid, cfg, keyring, attack, clock=self.now_ms)
        self.replica.commit_listener = self._on_commit
        self.events: asyncio.Queue | None = None
        self.links: dict[int, PeerLink] = {}
        self.slow_ms = 0.0
        self.rejected = 0
        self._waiters: dict[int, tuple[asyncio.Future, float]] = {}
        self._server: asyncio.base_events.Server | None = None
        self._tasks: list[asyncio.Task] = []
        self._timers: list[asyncio.TimerHandle] = []

    def now_ms(self) -> float:
        return (time.monotonic() - self._t0) * 1000.0

    # ------------------------------------------------------------------ lifecycle

    async def start(self) -> None:
        loop = asyncio.get_running_loop()
        self.events = asyncio.Queue()
        host, port = self.peers[self.id]
        self._server = await asyncio.start_server(self._serve, host, port)
        for pid, (phost, pport) in self.peers.items():
            if pid != self.id:
                link = PeerLink(phost, pport)
                link.start()
                self.links[pid] = link
        self._tasks.append(loop.create_task(self._consume()))
        self._apply(self.replica.start())

    async def stop(self) -> None:
        for h in self._timers:
            h.cancel()
        for t in self._tasks:
            t.cancel()
        for link in self.links.values():
            await link.close()
        if self._server is not None:
            self._server.close()
            await self._server.wait_closed()
        for fut, _ in self._waiters.values():
            if not fut.done():
                fut.cancel()

    # ------------------------------------------------------------------ inbound

    async def _serve(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter) -> None:
        try:
            while True:
                frame = await read_frame(reader)
                try:
                    sender, msg = unseal(frame, self.keyring)
                except (EncodingError, BadEnvelope) as exc:
                    self.replica.counters["dropped"] += 1
                    log.debug("dropped undecodable frame: %s", exc)
                    continue
                self.events.put_nowait(("msg", sender, msg))
        except (asyncio.IncompleteReadError, ConnectionError, FrameError):
            pass
        finally:
            writer.close()

    async def _consume(self) -> None:
        while True:
            event = await self.events.get()
            kind = event[0]
            if kind == "msg":
                effects = self.replica.on_message(event[1], event[2])
            elif kind == "timer":
                effects = self.replica.on_timer(event[1], event[2])
            else:
                continue
            self._apply(effects)

    # ------------------------------------------------------------------ outbound

    def _apply(self, effects: Effects) -> None:
        if self.replica.crashed:
            return
        loop = asyncio.get_running_loop()
        for dst, msg in effects.sends:
            frame = encode_frame(seal(self.id, msg, self.keyring))
            targets = [p for p in self.links] if dst is BROADCAST else [dst]
            for p in targets:
                if p == self.id or p not in self.links:
                    continue
                if self.slow_ms > 0:
                    loop.call_later(self.slow_ms / 1000.0, self.links[p].send, frame)
                else:
                    self.links[p].send(frame)
        for kind, view, delay in effects.timers:
            handle = loop.call_later(delay / 1000.0, self.events.put_nowait, ("timer", kind, view))
            self._timers.append(handle)
        if len(self._timers) > 4096:
            self._timers = [h for h in self._timers if not h.cancelled() and h.when() > loop.time()]

    # ------------------------------------------------------------------ clients and admin

    def _on_commit(self, replica: Replica, rec: CommitRecord) -> None:
        now = self.now_ms()
        for tx in rec.txs:
            waiter = self._waiters.pop(tx.id, None)
            if waiter is None:
                continue
            fut, started = waiter
            if not fut.done():
                fut.set_result(CommitAck(tx.id, rec.block.hex(), rec.view, rec.commit_view, now - started))

    async def submit_transaction(self, tx_id: int, payload: bytes = b"", client: int = 0,
                                 timeout_s: float | None = None) -> CommitAck:
        """Queue a transaction and wait until this replica commits it."""
        started = self.now_ms()
        tx = Transaction(tx_id, client, started, payload)
        fut = asyncio.get_running_loop().create_future()
        if self.replica.submit(tx) is PushResult.FULL:
            self.rejected += 1
            raise Backpressure("mempool full")
        self._waiters[tx_id] = (fut, started)
        try:
            return await asyncio.wait_for(fut, timeout_s)
        finally:
            self._waiters.pop(tx_id, None)

    def slow(self, ms: float) -> None:
        self.slow_ms = max(0.0, float(ms))

    def crash(self) -> None:
        self.replica.crash()
        for h in self._timers:
            h.cancel()

    def metrics(self) -> dict:
        r = self.replica
        return {
            "id": self.id, "view": r.current_view, "committed_blocks": len(r.commit_log),
            "committed_txs": sum(len(c.txs) for c in r.commit_log),
            "mempool": len(r.mempool), "crashed": r.crashed, "slow_ms": self.slow_ms,
            "rejected": self.rejected, "dropped_links": sum(l.dropped for l in self.links.values()),
            "counters": dict(r.counters),
        }
