"""HTTP client driver: pushes a Poisson workload at a socket-mode cluster."""
from __future__ import annotations

import asyncio
import random
import time
from dataclasses import dataclass

import httpx

from ..runtime.http_api import HTTP_PORT_OFFSET
from .config import BenchConfig
from .metrics import Report, summarize
from .trace import RunTrace, TxRecord


@dataclass
class ClientResult:
    report: Report
    trace: RunTrace
    errors: dict[str, int]


def http_endpoints(cfg: BenchConfig, http_offset: int = HTTP_PORT_OFFSET) -> dict[int, str]:
    return {rid: f"http://{host}:{port + http_offset}" for rid, (host, port) in cfg.peers().items()}


async def send_admin(endpoint: str, command: str) -> dict:
    async with httpx.AsyncClient(timeout=5.0) as http:
        resp = await http.post(f"{endpoint}/admin", content=command.encode())
        resp.raise_for_status()
        return resp.json()


async def run_client(cfg: BenchConfig, endpoints: dict[int, str] | None = None, rate: float | None = None,
                     runtime_s: float | None = None, tx_timeout_s: float = 30.0) -> ClientResult:
    """Submit transactions for ``runtime_s`` seconds at ``rate`` tx/s, at most ``concurrency`` in flight.

    With rate 0 the clients run closed-loop, each sending its next transaction
    as soon as the previous one is acknowledged.
    """
    endpoints = endpoints or http_endpoints(cfg)
    ids = sorted(endpoints)
    rate = cfg.rate if rate is None else rate
    runtime_s = cfg.runtime if runtime_s is None else runtime_s
    rng = random.Random(cfg.seed)
    payload_rng = random.Random(cfg.seed + 1)
    records: list[TxRecord] = []
    errors: dict[str, int] = {}
    t0 = time.monotonic()
    slots = asyncio.Semaphore(cfg.concurrency)

    def now_ms() -> float:
        return (time.monotonic() - t0) * 1000.0

    async def one(http: httpx.AsyncClient, i: int) -> None:
        target = rng.choice(ids)
        body = payload_rng.randbytes(cfg.psize) if cfg.psize else b""
        rec = TxRecord(i, target, now_ms())
        records.append(rec)
        try:
            resp = await http.post(f"{endpoints[target]}/transaction", content=body)
            if resp.status_code == 200:
                data = resp.json()
                rec.commit = now_ms()
                rec.view, rec.commit_view = data["view"], data["commit_view"]
            else:
                errors[str(resp.status_code)] = errors.get(str(resp.status_code), 0) + 1
        except httpx.HTTPError as exc:
            errors[type(exc).__name__] = errors.get(type(exc).__name__, 0) + 1
        finally:
            slots.release()

    async with httpx.AsyncClient(timeout=tx_timeout_s,
                                 limits=httpx.Limits(max_connections=cfg.concurrency * 2)) as http:
        tasks = []
        i = 0
        deadline = runtime_s * 1000.0
        next_at = rng.expovariate(rate) * 1000.0 if rate > 0 else 0.0
        while True:
            if rate > 0:
                wait = next_at - now_ms()
                if wait > 0:
                    await asyncio.sleep(wait / 1000.0)
                next_at += rng.expovariate(rate) * 1000.0
            if now_ms() >= deadline:
                break
            await slots.acquire()
            tasks.append(asyncio.create_task(one(http, i)))
            i += 1
        if tasks:
            await asyncio.wait(tasks, timeout=tx_timeout_s)
    duration = runtime_s * 1000.0
    trace = RunTrace(protocol=cfg.protocol, n=cfg.num_replicas, commit_depth=0, measured_views=0,
                     duration_ms=duration, txs=records,
                     meta={"seed": cfg.seed, "errors": errors, "tx_window": (0.0, duration)})
    return ClientResult(summarize(trace, cfg.effective()), trace, errors)
