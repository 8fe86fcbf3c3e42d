"""Chained HotStuff: lock on the two-chain head, commit on a direct three-chain."""
from __future__ import annotations

from ..core import Block, QuorumCertificate
from .base import SafetyRules


class HotStuff(SafetyRules):
    name = "hotstuff"
    commit_depth = 3
    always_responsive = True
    fork_depth = 2

    def should_vote(self, block: Block) -> bool:
        st = self.state
        if block.view <= st.lv_view:
            return False
        parent = self.forest.get(block.parent)
        if parent is None:
            return False
        if not self.admissible_parent(parent.id, st.locked):
            return False
        st.lv_view = block.view
        return True

    def admissible_parent(self, parent_id: bytes, locked: bytes) -> bool:
        # the new block extends the lock iff its parent is the lock or descends from it
        if parent_id == locked:
            return True
        locked_view = self.view_of(locked)
        parent = self.forest.get(parent_id)
        if parent is None:
            return False
        if parent.view > locked_view:
            return True
        try:
            return self.forest.extends(parent_id, locked)
        except KeyError:
            return False

    def lock_for(self, qc: QuorumCertificate) -> bytes | None:
        certified = self.forest.get(qc.block)
        if certified is None or certified.view == 0:
            return None
        return certified.parent if certified.parent in self.forest else None

    def commit_target(self, qc: QuorumCertificate) -> bytes | None:
        tail = self.forest.get(qc.block)
        if tail is None:
            return None
        mid = self.forest.get(tail.parent)
        if mid is None:
            return None
        head = self.forest.get(mid.parent)
        if head is None:
            return None
        if head.view > 0 and head.view + 1 == mid.view and mid.view + 1 == tail.view:
            return head.id
        return None
