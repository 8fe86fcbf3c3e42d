"""Client and admin HTTP interface of a socket-mode replica."""
from __future__ import annotations

import asyncio
import itertools
import logging

from fastapi import FastAPI, HTTPException, Request
from pydantic import BaseModel

from ..byzantine import attacker_ids, make_attack
from ..crypto import make_keyrings
from .sockets import Backpressure, SocketNode

log = logging.getLogger(__name__)

HTTP_PORT_OFFSET = 1000


class SlowBody(BaseModel):
    ms: float


def parse_admin(command: str) -> tuple[str, int, float]:
    """Parse ``slow <node> <ms>`` or ``crash <node>``."""
    parts = command.split()
    try:
        if len(parts) == 3 and parts[0] == "slow":
            return "slow", int(parts[1]), float(parts[2])
        if len(parts) == 2 and parts[0] == "crash":
            return "crash", int(parts[1]), 0.0
    except ValueError:
        pass
    raise ValueError(f"bad admin command {command!r}; expected 'slow <node> <ms>' or 'crash <node>'")


def create_app(node: SocketNode, tx_timeout_s: float = 30.0) -> FastAPI:
    app = FastAPI(title=f"replica {node.id}")
    # ids interleave across replicas so two replicas never mint the same id
    counter = itertools.count()

    @app.post("/transaction")
    async def transaction(request: Request):
        if node.replica.crashed:
            raise HTTPException(503, "replica crashed")
        payload = await request.body()
        tx_id = next(counter) * node.cfg.n + node.id
        try:
            ack = await node.submit_transaction(tx_id, payload, timeout_s=tx_timeout_s)
        except Backpressure:
            raise HTTPException(429, "mempool full") from None
        except asyncio.TimeoutError:
            raise HTTPException(504, "not committed before the client timeout") from None
        return {"tx": ack.tx, "block": ack.block, "view": ack.view, "commit_view": ack.commit_view,
                "latency-ms": ack.latency_ms}

    @app.get("/metrics")
    async def metrics():
        return node.metrics()

    @app.post("/slow")
    async def slow(body: SlowBody):
        node.slow(body.ms)
        return {"id": node.id, "slow_ms": node.slow_ms}

    @app.post("/crash")
    async def crash():
        node.crash()
        return {"id": node.id, "crashed": True}

    @app.post("/admin")
    async def admin(request: Request):
        text = (await request.body()).decode(errors="replace")
        try:
            action, target, value = parse_admin(text)
        except ValueError as exc:
            raise HTTPException(400, str(exc)) from None
        if target != node.id:
            raise HTTPException(409, f"command targets replica {target}, this is replica {node.id}")
        if action == "slow":
            node.slow(value)
        else:
            node.crash()
        return {"id": node.id, "action": action, "value": value}

    return app


def build_node(cfg, rid: int) -> SocketNode:
    """Socket node for replica ``rid`` of a BenchConfig."""
    rcfg = cfg.replica_config()
    peers = cfg.peers()
    if rid not in peers:
        raise ValueError(f"replica {rid} has no address in the config")
    keyring = make_keyrings(rcfg.n, cfg.scheme, cfg.seed)[rid]
    attack = make_attack(cfg.strategy) if rid in attacker_ids(rcfg.n, cfg.byz_no) else None
    return SocketNode(rid, rcfg, keyring, peers, attack)


async def serve_node(cfg, rid: int, http_port: int | None = None, duration_s: float | None = None) -> SocketNode:
    """Run replica ``rid`` with its HTTP API until cancelled or ``duration_s`` passes."""
    import uvicorn

    node = build_node(cfg, rid)
    host, port = node.peers[rid]
    await node.start()
    app = create_app(node)
    server = uvicorn.Server(uvicorn.Config(app, host=host, port=http_port or port + HTTP_PORT_OFFSET,
                                           log_level="warning", lifespan="off"))
    task = asyncio.get_running_loop().create_task(server.serve())
    try:
        if duration_s is None:
            await task
        else:
            await asyncio.sleep(duration_s)
    finally:
        server.should_exit = True
        await asyncio.wait([task], timeout=5)
        await node.stop()
    return node
