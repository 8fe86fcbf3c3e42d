"""Throughput, latency, chain growth rate and block interval, computed from a RunTrace."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Any

import numpy as np

from .trace import RunTrace


class UndefinedMetric(ValueError):
    pass


def compute_cgr(trace: RunTrace) -> float:
    """Committed blocks per productive view (a view whose leader proposed) in the window."""
    rows = [r for r in trace.windowed() if r.block is not None]
    if not rows:
        raise UndefinedMetric("no productive views in the measurement window")
    return sum(r.committed_at is not None for r in rows) / len(rows)


def compute_bi(trace: RunTrace) -> float:
    """Mean number of views between a block's proposal and its commit."""
    spans = [r.committed_at - r.view for r in trace.windowed() if r.committed_at is not None]
    if not spans:
        raise UndefinedMetric("no committed blocks in the measurement window")
    return float(np.mean(spans))


@dataclass
class Report:
    protocol: str
    n: int
    throughput: float                 # tx/s
    arrival_rate: float               # tx/s actually offered in the window
    latency_mean: float | None        # ms; None when nothing committed
    latency_p50: float | None
    latency_p99: float | None
    cgr: float | None
    bi: float | None
    committed_txs: int
    committed_blocks: int
    views: int
    config: dict[str, Any] = field(default_factory=dict)
    meta: dict[str, Any] = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True, default=str)


def _tx_window(trace: RunTrace) -> tuple[float, float]:
    lo, hi = trace.meta.get("tx_window", (0.0, trace.duration_ms))
    return float(lo), float(hi)


def summarize(trace: RunTrace, config: dict[str, Any] | None = None) -> Report:
    t0, t1 = _tx_window(trace)
    span_s = max(t1 - t0, 1e-9) / 1000.0
    submitted = [tx for tx in trace.txs if t0 <= tx.submit < t1]
    acked_in_window = sum(1 for tx in trace.txs if tx.commit is not None and t0 <= tx.commit < t1)
    lat = np.array([tx.commit - tx.submit for tx in submitted if tx.commit is not None])
    try:
        cgr = compute_cgr(trace)
    except UndefinedMetric:
        cgr = None
    try:
        bi = compute_bi(trace)
    except UndefinedMetric:
        bi = None
    windowed = trace.windowed()
    return Report(
        protocol=trace.protocol, n=trace.n,
        throughput=acked_in_window / span_s,
        arrival_rate=len(submitted) / span_s,
        latency_mean=float(lat.mean()) if lat.size else None,
        latency_p50=float(np.percentile(lat, 50)) if lat.size else None,
        latency_p99=float(np.percentile(lat, 99)) if lat.size else None,
        cgr=cgr, bi=bi,
        committed_txs=sum(tx.commit is not None for tx in trace.txs),
        committed_blocks=sum(r.committed_at is not None for r in windowed),
        views=trace.measured_views,
        config=dict(config or {}),
        meta=dict(trace.meta),
    )
