"""Vote and timeout accumulation into quorum / timeout certificates."""
from __future__ import annotations

from .core import (
    QuorumCertificate,
    TimeoutCertificate,
    TimeoutMsg,
    Vote,
    higher_qc,
    quorum_size,
    sorted_sigs,
    timeout_message,
    vote_message,
)
from .crypto import Keyring


class BadVote(ValueError):
    pass


class Quorum:
    """Per-replica vote ledger.

    A certificate is emitted exactly once per key, when the number of
    distinct signers first reaches 2f+1. Entries below ``floor`` are dropped
    and late messages for those views are ignored.
    """

    def __init__(self, n: int, keyring: Keyring | None = None, verify: bool = True):
        self.n = n
        self.threshold = quorum_size(n)
        self.keyring = keyring
        self.verify = verify and keyring is not None
        self.votes: dict[tuple[int, bytes], dict[int, bytes]] = {}
        self.timeouts: dict[int, dict[int, TimeoutMsg]] = {}
        self.emitted: set[tuple[int, bytes]] = set()
        self.emitted_tc: set[int] = set()
        self.floor = 0

    def process_vote(self, vote: Vote) -> QuorumCertificate | None:
        if vote.view < self.floor:
            return None
        if self.verify and not self.keyring.verify(vote.voter, vote_message(vote.view, vote.block), vote.sig):
            raise BadVote(f"bad vote signature from {vote.voter}")
        key = (vote.view, vote.block)
        if key in self.emitted:
            return None
        bucket = self.votes.setdefault(key, {})
        if vote.voter in bucket:
            return None
        bucket[vote.voter] = vote.sig
        if len(bucket) >= self.threshold:
            self.emitted.add(key)
            del self.votes[key]
            return QuorumCertificate(vote.view, vote.block, sorted_sigs(bucket))
        return None

    # Spelled like the two-method interface exposed to protocol code.
    voted = process_vote

    def certified(self, view: int, block: bytes) -> bool:
        return (view, block) in self.emitted

    def process_timeout(self, msg: TimeoutMsg) -> TimeoutCertificate | None:
        if msg.view < self.floor:
            return None
        if self.verify and not self.keyring.verify(msg.signer, timeout_message(msg.view), msg.sig):
            raise BadVote(f"bad timeout signature from {msg.signer}")
        bucket = self.timeouts.setdefault(msg.view, {})
        if msg.signer in bucket:
            prev = bucket[msg.signer]
            if msg.high_qc.view > prev.high_qc.view:
                bucket[msg.signer] = msg
            return None
        bucket[msg.signer] = msg
        if msg.view not in self.emitted_tc and len(bucket) >= self.threshold:
            self.emitted_tc.add(msg.view)
            high = bucket[min(bucket)].high_qc
            for m in bucket.values():
                high = higher_qc(high, m.high_qc)
            return TimeoutCertificate(msg.view, sorted_sigs({s: m.sig for s, m in bucket.items()}), high)
        return None

    def timeout_high_qc(self, view: int) -> QuorumCertificate | None:
        """Highest QC carried by any timeout received for ``view`` so far."""
        bucket = self.timeouts.get(view)
        if not bucket:
            return None
        best = None
        for m in bucket.values():
            best = m.high_qc if best is None else higher_qc(best, m.high_qc)
        return best

    def timeout_count(self, view: int) -> int:
        return len(self.timeouts.get(view, ()))

    def gc(self, floor: int) -> None:
        """Forget every entry for views below ``floor``."""
        if floor <= self.floor:
            return
        self.floor = floor
        self.votes = {k: v for k, v in self.votes.items() if k[0] >= floor}
        self.emitted = {k for k in self.emitted if k[0] >= floor}
        self.timeouts = {v: b for v, b in self.timeouts.items() if v >= floor}
        self.emitted_tc = {v for v in self.emitted_tc if v >= floor}
