"""Streamlet on the shared pacemaker: extend the longest notarized chain, commit
the middle of three certified blocks from consecutive views."""
from __future__ import annotations

from ..core import Block, QuorumCertificate
from ..forest import BlockForest
from .base import SafetyRules


class Streamlet(SafetyRules):
    name = "streamlet"
    commit_depth = 3
    broadcast_votes = True
    echo = True

    def __init__(self, forest: BlockForest, me: int = 0):
        super().__init__(forest, me)
        self.certified: set[bytes] = {forest.genesis.id}
        self.proposal_views: set[int] = set()

    # ------------------------------------------------------------------ notarized chain

    def _alive(self, block_id: bytes) -> bool:
        return block_id in self.forest.vertices

    def longest_tip(self) -> bytes:
        """Head of a longest notarized chain; ties go to the smallest hash."""
        st = self.state
        tips = {t for t in st.notarized_tips if self._alive(t)}
        if not tips:
            tips, st.notarized_height = self._rescan()
        st.notarized_tips = tips
        return min(tips)

    def _rescan(self) -> tuple[set[bytes], int]:
        best_h, best = -1, set()
        for b in self.certified:
            if not self._alive(b):
                continue
            h = self.forest.height(b)
            if h > best_h:
                best_h, best = h, {b}
            elif h == best_h:
                best.add(b)
        if not best:
            tip = self.forest.committed_tip
            return {tip}, self.forest.height(tip)
        return best, best_h

    def _notarize(self, block_id: bytes) -> None:
        if block_id in self.certified or not self._alive(block_id):
            self.certified.add(block_id)
            return
        self.certified.add(block_id)
        st = self.state
        h = self.forest.height(block_id)
        if h > st.notarized_height:
            st.notarized_height = h
            st.notarized_tips = {block_id}
        elif h == st.notarized_height:
            st.notarized_tips.add(block_id)

    # ------------------------------------------------------------------ rules

    def proposal_parent(self) -> QuorumCertificate:
        tip = self.longest_tip()
        return self.qcs[tip]

    def should_vote(self, block: Block) -> bool:
        st = self.state
        if block.view in self.proposal_views:
            return False
        self.proposal_views.add(block.view)
        if block.view in st.voted_views:
            return False
        if not self.admissible_parent(block.parent, b""):
            return False
        st.voted_views.add(block.view)
        st.lv_view = max(st.lv_view, block.view)
        return True

    def admissible_parent(self, parent_id: bytes, locked: bytes) -> bool:
        if parent_id not in self.certified or not self._alive(parent_id):
            return False
        self.longest_tip()
        return self.forest.height(parent_id) == self.state.notarized_height

    def lock_for(self, qc: QuorumCertificate) -> bytes | None:
        return None

    def on_qc(self, qc: QuorumCertificate) -> bytes | None:
        self._notarize(qc.block)
        return super().on_qc(qc)

    def _certified_child(self, block: Block) -> list[Block]:
        v = self.forest.vertices.get(block.id)
        if v is None:
            return []
        out = []
        for cid in v.children:
            if cid in self.certified:
                c = self.forest.vertices[cid].block
                if c.view == block.view + 1:
                    out.append(c)
        return out

    def commit_target(self, qc: QuorumCertificate) -> bytes | None:
        x = self.forest.get(qc.block)
        if x is None or x.id not in self.certified:
            return None
        middles: list[Block] = []
        p = self.forest.get(x.parent) if x.view > 0 else None
        if p is not None and p.id in self.certified and p.view + 1 == x.view:
            g = self.forest.get(p.parent) if p.view > 0 else None
            if g is not None and g.id in self.certified and g.view + 1 == p.view:
                middles.append(p)
            if self._certified_child(x):
                middles.append(x)
        for c in self._certified_child(x):
            if self._certified_child(c):
                middles.append(c)
        if not middles:
            return None
        best = max(middles, key=lambda b: (self.forest.height(b.id), b.view, b.id))
        return best.id

    def gc(self, keep_from_height: int) -> None:
        super().gc(keep_from_height)
        if len(self.certified) > 2 * len(self.forest) + 64:
            # pruned blocks sit below the committed tip and can no longer start a new commit
            self.certified = {b for b in self.certified if self._alive(b)}
        if len(self.proposal_views) > 4096:
            floor = max(self.proposal_views) - 1024
            self.proposal_views = {v for v in self.proposal_views if v >= floor}
            self.state.voted_views = {v for v in self.state.voted_views if v >= floor}
