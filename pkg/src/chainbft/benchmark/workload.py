"""Open-loop client workload: Poisson arrivals, each sent to a uniformly random replica."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import Transaction

_POOL_BYTES = 1 << 20


@dataclass
class Workload:
    """A fixed schedule of client submissions (times in ms)."""

    submit: np.ndarray      # client send time
    origin: np.ndarray      # replica the transaction goes to
    client: np.ndarray
    d_in: np.ndarray        # client -> replica one-way delay
    d_out: np.ndarray       # replica -> client one-way delay
    psize: int = 0
    seed: int = 0

    def __post_init__(self):
        rng = np.random.default_rng([self.seed, 7])
        self._pool = rng.bytes(_POOL_BYTES) if self.psize else b""

    def __len__(self) -> int:
        return len(self.submit)

    @property
    def arrival(self) -> np.ndarray:
        return self.submit + self.d_in

    def payload(self, i: int) -> bytes:
        if not self.psize:
            return b""
        start = (i * 7919 * self.psize) % max(_POOL_BYTES - self.psize, 1)
        return self._pool[start:start + self.psize]

    def transaction(self, i: int) -> Transaction:
        return Transaction(int(i), int(self.client[i]), float(self.submit[i]), self.payload(i))

    def per_replica(self, n: int) -> list[np.ndarray]:
        """Indices of the transactions sent to each replica, in arrival order."""
        arr = self.arrival
        out = []
        for r in range(n):
            idx = np.flatnonzero(self.origin == r)
            out.append(idx[np.argsort(arr[idx], kind="stable")])
        return out


def generate_workload(rate: float, runtime_s: float, n: int, psize: int = 0, concurrency: int = 10,
                      seed: int = 0, client_mean_ms: float = 0.0, client_std_ms: float = 0.0,
                      start_ms: float = 0.0) -> Workload:
    """Poisson arrivals at ``rate`` tx/s for ``runtime_s`` seconds.

    ``concurrency`` is the number of client identities the arrivals are spread
    over. Client links use the same clamped-normal delay model as replicas.
    """
    if rate <= 0:
        raise ValueError("arrival rate must be positive")
    rng = np.random.default_rng([seed, 1])
    horizon = runtime_s * 1000.0
    expected = rate * runtime_s
    k = int(expected + 6 * np.sqrt(expected) + 16)
    gaps = rng.exponential(1000.0 / rate, size=k)
    times = np.cumsum(gaps)
    while times[-1] < horizon:
        more = np.cumsum(rng.exponential(1000.0 / rate, size=k)) + times[-1]
        times = np.concatenate([times, more])
    times = times[times < horizon] + start_ms
    m = len(times)
    origin = rng.integers(0, n, size=m)
    client = rng.integers(0, max(concurrency, 1), size=m)
    d_in = np.maximum(rng.normal(client_mean_ms, client_std_ms, size=m), 0.0)
    d_out = np.maximum(rng.normal(client_mean_ms, client_std_ms, size=m), 0.0)
    return Workload(times, origin, client, d_in, d_out, psize, seed)


def empty_workload() -> Workload:
    z = np.zeros(0)
    return Workload(z, z.astype(int), z.astype(int), z, z)
