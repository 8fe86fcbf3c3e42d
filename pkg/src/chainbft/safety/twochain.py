"""Two-chain HotStuff: same voting and proposing rules as HotStuff, but the lock
sits on the one-chain head and a direct two-chain commits."""
from __future__ import annotations

from ..core import QuorumCertificate
from .hotstuff import HotStuff


class TwoChainHotStuff(HotStuff):
    name = "2chs"
    commit_depth = 2
    always_responsive = False
    fork_depth = 1

    def lock_for(self, qc: QuorumCertificate) -> bytes | None:
        return qc.block if qc.block in self.forest else None

    def commit_target(self, qc: QuorumCertificate) -> bytes | None:
        tail = self.forest.get(qc.block)
        if tail is None:
            return None
        head = self.forest.get(tail.parent)
        if head is not None and head.view > 0 and head.view + 1 == tail.view:
            return head.id
        return None
