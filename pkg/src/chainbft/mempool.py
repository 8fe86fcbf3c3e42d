"""Per-replica transaction pool: a deque fed at the back by clients and at the
front by transactions recovered from overwritten blocks."""
from __future__ import annotations

import enum
import threading
from collections import OrderedDict, deque
from typing import Iterable

from .core import Transaction


class PushResult(enum.Enum):
    ACCEPTED = "accepted"
    FULL = "full"
    DUPLICATE = "duplicate"


class Mempool:
    def __init__(self, memsize: int = 1000, committed_window: int | None = None):
        self.memsize = memsize
        self._queue: deque[Transaction] = deque()
        self._ids: set[int] = set()
        self._committed: OrderedDict[int, None] = OrderedDict()
        self._committed_limit = committed_window if committed_window is not None else 10 * memsize
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return len(self._queue)

    def __contains__(self, tx_id: int) -> bool:
        return tx_id in self._ids

    def snapshot(self) -> list[Transaction]:
        with self._lock:
            return list(self._queue)

    def push_back(self, tx: Transaction) -> PushResult:
        with self._lock:
            if tx.id in self._ids or tx.id in self._committed:
                return PushResult.DUPLICATE
            if len(self._queue) >= self.memsize:
                return PushResult.FULL
            self._queue.append(tx)
            self._ids.add(tx.id)
            return PushResult.ACCEPTED

    def recycle_front(self, txs: Iterable[Transaction]) -> int:
        """Prepend uncommitted ``txs`` keeping their order; returns how many went back in.

        Recycled transactions were already admitted once, so they are never
        refused for capacity.
        """
        with self._lock:
            fresh = [tx for tx in txs if tx.id not in self._committed and tx.id not in self._ids]
            self._queue.extendleft(reversed(fresh))
            self._ids.update(tx.id for tx in fresh)
            return len(fresh)

    def next_payload(self, bsize: int) -> list[Transaction]:
        with self._lock:
            k = min(bsize, len(self._queue))
            out = [self._queue.popleft() for _ in range(k)]
            self._ids.difference_update(tx.id for tx in out)
            return out

    def mark_committed(self, txs: Iterable[Transaction]) -> None:
        with self._lock:
            for tx in txs:
                self._committed[tx.id] = None
                self._committed.move_to_end(tx.id)
                if tx.id in self._ids:
                    self._ids.discard(tx.id)
                    self._queue.remove(tx)
            while len(self._committed) > self._committed_limit:
                self._committed.popitem(last=False)

    def is_committed(self, tx_id: int) -> bool:
        return tx_id in self._committed
