"""Analytic latency model for chained-BFT protocols.

latency = t_L + t_s + t_commit + w_Q, where

* t_L = mu, the client <-> replica round trip;
* t_s = 3 t_CPU + 2 t_NIC + t_Q is the time to certify one block, with
  t_NIC = 2m/b and t_Q the expected 2f-th order statistic of N-1 round trips;
* t_commit is 2 t_s for HotStuff and t_s for two-chain HotStuff and Streamlet;
* w_Q = rho / (2u(1 - rho)) is the M/D/1 wait with u = 1/(N t_s),
  gamma = lambda/(nN) and rho = gamma/u.

All times are in milliseconds, rates in tx/s, sizes in bytes, bandwidth in bytes/s.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace

import numpy as np

from .core import max_faulty

PROTOCOLS = ("hotstuff", "2chs", "streamlet")


class ModelError(ValueError):
    pass


class Saturated(ModelError):
    """Offered load is at or above the service capacity (rho >= 1)."""

    def __init__(self, rho: float):
        super().__init__(f"saturated: rho={rho:.6g} >= 1")
        self.rho = rho


@dataclass(frozen=True)
class ModelParams:
    N: int = 4
    n: int = 400               # transactions per block
    lam: float = 1000.0        # arrival rate, tx/s
    mu: float = 1.0            # RTT mean, ms
    sigma: float = 0.0         # RTT standard deviation, ms
    b: float = math.inf        # bandwidth, bytes/s
    m: float = 0.0             # block size, bytes
    t_cpu: float = 0.0         # ms per crypto step
    protocol: str = "hotstuff"

    def validate(self) -> None:
        if self.N < 1 or self.n < 1:
            raise ModelError("N and n must be positive")
        if self.lam < 0 or self.mu < 0 or self.t_cpu < 0 or self.m < 0:
            raise ModelError("lam, mu, t_cpu and m must be non-negative")
        if self.sigma < 0:
            raise ModelError("sigma must be non-negative")
        if not self.b > 0:
            raise ModelError("bandwidth must be positive")
        if self.protocol not in PROTOCOLS:
            raise ModelError(f"unknown protocol {self.protocol!r}")


@dataclass(frozen=True)
class PredictedLatency:
    t_L: float
    t_NIC: float
    t_Q: float
    t_s: float
    t_commit: float
    w_Q: float
    total: float
    u: float          # effective service rate, blocks/ms
    rho: float
    gamma: float      # block arrival rate per replica, blocks/ms
    t_Q_stderr: float = 0.0

    def as_dict(self) -> dict:
        return asdict(self)


def t_nic(m: float, b: float) -> float:
    if not b > 0:
        raise ModelError("bandwidth must be positive")
    if math.isinf(b):
        return 0.0
    return 2.0 * m / b * 1000.0


def quorum_rank(N: int) -> int:
    """Rank (1-based) of the vote that completes a quorum, among the N-1 other replicas."""
    return 2 * max_faulty(N)


def t_q(N: int, mu: float, sigma: float, samples: int = 200_000, seed: int = 0,
        return_stderr: bool = False):
    """Monte Carlo mean of the 2f-th smallest of N-1 iid normal(mu, sigma) round trips."""
    if sigma < 0:
        raise ModelError("sigma must be non-negative")
    if N < 2:
        raise ModelError("need at least two replicas")
    k = quorum_rank(N)
    if sigma == 0 or k == 0:
        return (float(mu), 0.0) if return_stderr else float(mu)
    rng = np.random.default_rng(seed)
    est = np.empty(0)
    chunks = []
    left = samples
    while left > 0:
        step = min(left, max(1, 4_000_000 // (N - 1)))
        draws = rng.normal(mu, sigma, size=(step, N - 1))
        chunks.append(np.partition(draws, k - 1, axis=1)[:, k - 1])
        left -= step
    est = np.concatenate(chunks)
    mean = float(est.mean())
    stderr = float(est.std(ddof=1) / math.sqrt(len(est)))
    return (mean, stderr) if return_stderr else mean


def t_s(t_cpu: float, nic: float, tq: float) -> float:
    return 3.0 * t_cpu + 2.0 * nic + tq


def t_commit(protocol: str, ts: float) -> float:
    if protocol == "hotstuff":
        return 2.0 * ts
    if protocol in ("2chs", "streamlet"):
        return ts
    raise ModelError(f"unknown protocol {protocol!r}")


def utilization(lam: float, n: int, N: int, ts: float) -> tuple[float, float, float]:
    """(rho, u, gamma) with u in blocks/ms and gamma in blocks/ms."""
    gamma = lam / (n * N) / 1000.0
    u = 1.0 / (N * ts) if ts > 0 else math.inf
    rho = gamma / u if u != math.inf else 0.0
    return rho, u, gamma


def w_q(lam: float, n: int, N: int, ts: float) -> tuple[float, float]:
    """M/D/1 mean wait (ms) and rho. Raises Saturated when rho >= 1."""
    rho, u, _ = utilization(lam, n, N, ts)
    if rho >= 1.0:
        raise Saturated(rho)
    if rho == 0.0:
        return 0.0, 0.0
    return rho / (2.0 * u * (1.0 - rho)), rho


def predict_latency(p: ModelParams, samples: int = 200_000, seed: int = 0) -> PredictedLatency:
    p.validate()
    nic = t_nic(p.m, p.b)
    tq, err = t_q(p.N, p.mu, p.sigma, samples, seed, return_stderr=True)
    ts = t_s(p.t_cpu, nic, tq)
    tc = t_commit(p.protocol, ts)
    wq, rho = w_q(p.lam, p.n, p.N, ts)
    _, u, gamma = utilization(p.lam, p.n, p.N, ts)
    tl = p.mu
    return PredictedLatency(tl, nic, tq, ts, tc, wq, tl + ts + tc + wq, u, rho, gamma, err)


def saturation_rate(p: ModelParams, samples: int = 200_000, seed: int = 0) -> float:
    """Arrival rate (tx/s) at which rho reaches 1."""
    ts = t_s(p.t_cpu, t_nic(p.m, p.b), t_q(p.N, p.mu, p.sigma, samples, seed))
    return p.n / ts * 1000.0


def predict_curve(p: ModelParams, rates=None, points: int = 20, samples: int = 200_000,
                  seed: int = 0) -> list[dict]:
    """Latency over a sweep of arrival rates; rows at or past saturation carry total=inf."""
    sat = saturation_rate(p, samples, seed)
    if rates is None:
        rates = [sat * (i + 1) / (points + 1) for i in range(points)] + [sat]
    rows = []
    for lam in rates:
        q = replace(p, lam=float(lam))
        if lam >= sat * (1 - 1e-12):
            # the asymptote itself; rounding can leave rho a hair below 1 here
            rows.append({"lam": float(lam), "total": math.inf, "rho": lam / sat, "saturated": True})
            continue
        try:
            pred = predict_latency(q, samples, seed)
            rows.append({"lam": float(lam), **pred.as_dict(), "saturated": False})
        except Saturated as exc:
            rows.append({"lam": float(lam), "total": math.inf, "rho": exc.rho, "saturated": True})
    return rows


# ----------------------------------------------------------------------------- calibration

@dataclass
class Calibration:
    mu: float
    sigma: float
    t_cpu: float
    m: float
    b: float


def calibrate_simulation(net, bsize: int, psize: int, n: int = 4, pings: int = 20_000, seed: int = 0,
                         sig_bytes: int = 72) -> Calibration:
    """Measure RTT statistics and block size from the simulated network itself.

    RTTs are sampled by bouncing a message between two replicas through the
    simulator's link model; the block size is that of a full block of ``bsize``
    transactions carrying a quorum certificate.
    """
    from .core import GENESIS_QC, QuorumCertificate, Transaction, make_block, quorum_size
    from .runtime.messages import Proposal, Vote, approx_size
    from .runtime.replica import ReplicaConfig
    from .runtime.simulation import Simulation

    sim = Simulation(ReplicaConfig(n=n), replace(net, fluctuations=[]), seed=seed)
    vote = Vote(1, GENESIS_QC.block, 0, b"")
    rtts = np.array([sim.link_delay(0, vote) + sim.link_delay(1, vote) for _ in range(pings)])
    qc = QuorumCertificate(1, bytes(32), tuple((i, bytes(sig_bytes)) for i in range(quorum_size(n))))
    txs = [Transaction(i, 0, 0.0, bytes(psize)) for i in range(bsize)]
    block = make_block(2, 0, bytes(32), qc, txs, bytes(sig_bytes))
    m = float(approx_size(Proposal(block)))
    b = net.bandwidth if net.bandwidth else math.inf
    return Calibration(float(rtts.mean()), float(rtts.std(ddof=1)), float(net.t_cpu_ms), m, b)


def measure_signing(scheme: str = "secp256k1", rounds: int = 200) -> float:
    """Wall-clock ms for one sign plus one verify with ``scheme``."""
    import time

    from .crypto import make_keyrings

    kr = make_keyrings(2, scheme)[0]
    msg = b"calibration"
    start = time.perf_counter()
    for _ in range(rounds):
        kr.verify(0, msg, kr.sign(msg))
    return (time.perf_counter() - start) * 1000.0 / rounds
