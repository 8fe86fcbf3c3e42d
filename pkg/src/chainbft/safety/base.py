"""The four-rule interface (proposing, voting, state updating, commit).

A protocol is a subclass of :class:`SafetyRules` that fills in those rules.
Rules only read the block forest and their own :class:`SafetyState`; they never
send messages themselves.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from ..core import GENESIS_QC, Block, QuorumCertificate, TimeoutCertificate, Transaction, make_block
from ..forest import BlockForest


@dataclass
class SafetyState:
    lv_view: int = 0
    locked: bytes = b""
    high_qc: QuorumCertificate = GENESIS_QC
    voted_views: set[int] = field(default_factory=set)
    notarized_tips: set[bytes] = field(default_factory=set)
    notarized_height: int = 0


class SafetyRules:
    name = "abstract"
    #: number of certified blocks in a row the commit rule needs
    commit_depth = 0
    #: votes go to every replica instead of the next leader
    broadcast_votes = False
    #: every first-seen message is re-broadcast once
    echo = False
    #: the next leader may propose as soon as it holds a TC
    always_responsive = False
    #: how many blocks below the highest certified block a leader can branch
    #: off while honest replicas still vote for it
    fork_depth = 0

    def __init__(self, forest: BlockForest, me: int = 0):
        self.forest = forest
        self.me = me
        self.state = SafetyState(locked=forest.genesis.id, notarized_tips={forest.genesis.id})
        # QC by certified block id; kept so proposals can re-use any certificate
        self.qcs: dict[bytes, QuorumCertificate] = {forest.genesis.id: GENESIS_QC}

    # ------------------------------------------------------------------ helpers

    def view_of(self, block_id: bytes) -> int:
        b = self.forest.get(block_id)
        return -1 if b is None else b.view

    def update_high_qc(self, qc: QuorumCertificate) -> None:
        if qc.view > self.state.high_qc.view:
            self.state.high_qc = qc

    def gc(self, keep_from_height: int) -> None:
        """Forget certificates for blocks that left the forest."""
        if len(self.qcs) > 4 * len(self.forest) + 64:
            alive = self.forest.vertices
            hqc = self.state.high_qc.block
            self.qcs = {b: q for b, q in self.qcs.items() if b in alive or b == hqc}

    # ------------------------------------------------------------------ rules

    def proposal_parent(self) -> QuorumCertificate:
        """The certificate a fresh proposal builds on (proposing rule)."""
        return self.state.high_qc

    def make_proposal(self, view: int, payload: list[Transaction] | tuple = ()) -> Block:
        qc = self.proposal_parent()
        return make_block(view, self.me, qc.block, qc, payload)

    def should_vote(self, block: Block) -> bool:
        raise NotImplementedError

    def lock_for(self, qc: QuorumCertificate) -> bytes | None:
        """The block a replica would lock on after processing ``qc``."""
        raise NotImplementedError

    def commit_target(self, qc: QuorumCertificate) -> bytes | None:
        """Head of the chain that ``qc`` makes committable, or None."""
        raise NotImplementedError

    def on_qc(self, qc: QuorumCertificate) -> bytes | None:
        """State updating + commit rules. Returns the block to commit (with its ancestors)."""
        self.qcs.setdefault(qc.block, qc)
        self.update_high_qc(qc)
        lock = self.lock_for(qc)
        if lock is not None and self.view_of(lock) > self.view_of(self.state.locked):
            self.state.locked = lock
        return self.commit_target(qc)

    def on_tc(self, tc: TimeoutCertificate) -> None:
        if tc.high_qc.block in self.forest:
            self.update_high_qc(tc.high_qc)

    def admissible_parent(self, parent_id: bytes, locked: bytes) -> bool:
        """Would a replica locked on ``locked`` vote for a fresh block on ``parent_id``?"""
        raise NotImplementedError

    def qc_for(self, block_id: bytes) -> QuorumCertificate | None:
        return self.qcs.get(block_id)
