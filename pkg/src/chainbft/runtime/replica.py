"""A single replica as a sans-IO state machine.

The owner feeds events (:meth:`Replica.on_message`, :meth:`Replica.on_timer`,
:meth:`Replica.submit`) one at a time and carries out the returned
:class:`Effects`: messages to send, timers to arm, commits to report. The
simulator and the socket runtime drive the same class.
"""
from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Callable

from ..byzantine import SILENT, Attack
from ..core import (
    Block,
    QuorumCertificate,
    TimeoutCertificate,
    TimeoutMsg,
    Transaction,
    Vote,
    block_message,
    higher_qc,
    make_block,
    max_faulty,
    quorum_size,
    timeout_message,
    vote_message,
    with_signature,
)
from ..crypto import Keyring
from ..forest import AddResult, BlockForest, InvalidBlock
from ..mempool import Mempool, PushResult
from ..pacemaker import LeaderElection, Pacemaker, ViewAdvance
from ..quorum import Quorum
from ..safety import get_rules
from .messages import Message, Proposal, SyncRequest, SyncResponse, message_key, message_view

log = logging.getLogger(__name__)

BROADCAST = None


class InvalidMessage(ValueError):
    pass


@dataclass
class ReplicaConfig:
    n: int = 4
    protocol: str = "hotstuff"
    bsize: int = 400
    memsize: int = 1000
    timeout_ms: float = 100.0
    backoff: bool = False
    master: int = 0
    leader_policy: str = "round-robin"
    seed: int = 0
    # 2CHS/Streamlet only: propose right after a TC instead of waiting view_change_wait_ms
    responsive: bool = False
    view_change_wait_ms: float | None = None
    verify: bool = True
    pending_limit: int = 1024

    @property
    def wait_after_tc(self) -> float:
        # followers' timers start together with the leader's wait, so it has to be shorter
        return self.timeout_ms / 2 if self.view_change_wait_ms is None else self.view_change_wait_ms


@dataclass(slots=True)
class CommitRecord:
    block: bytes
    view: int
    proposer: int
    commit_view: int
    time: float
    txs: tuple[Transaction, ...]


@dataclass
class Effects:
    sends: list[tuple[int | None, Message]] = field(default_factory=list)
    timers: list[tuple[str, int, float]] = field(default_factory=list)
    commits: list[CommitRecord] = field(default_factory=list)
    cpu_units: int = 0


class Replica:
    def __init__(self, rid: int, cfg: ReplicaConfig, keyring: Keyring, attack: Attack | None = None,
                 clock: Callable[[], float] = lambda: 0.0,
                 ingest: Callable[["Replica"], None] | None = None):
        if not 0 <= rid < cfg.n:
            raise ValueError(f"replica id {rid} outside 0..{cfg.n - 1}")
        self.id = rid
        self.cfg = cfg
        self.n = cfg.n
        self.f = max_faulty(cfg.n)
        self.keyring = keyring
        self.attack = attack
        self.clock = clock
        self.ingest = ingest
        self.forest = BlockForest(pending_limit=cfg.pending_limit)
        self.rules = get_rules(cfg.protocol)(self.forest, rid)
        self.quorum = Quorum(cfg.n, keyring, verify=False)
        self.election = LeaderElection(cfg.n, cfg.master, cfg.leader_policy, cfg.seed)
        self.pacemaker = Pacemaker(self.election, cfg.timeout_ms, cfg.backoff)
        self.mempool = Mempool(cfg.memsize)
        self.crashed = False

        self.public_qc = self.rules.state.high_qc
        self.pending_qcs: dict[bytes, QuorumCertificate] = {}
        self.future: dict[int, list[bytes]] = defaultdict(list)
        self.proposed: set[int] = set()
        self._deferred_view: int | None = None
        self._seen: dict[int, set] = defaultdict(set)
        self._valid_qcs: set[QuorumCertificate] = set()
        self._stale_replies: set[tuple[int, int]] = set()
        self._requested: dict[bytes, int] = {}
        self._timeouts_sent: dict[int, TimeoutMsg] = {}

        # trace
        self.proposals_seen: dict[int, bytes] = {}
        self.proposal_time: dict[bytes, float] = {}
        self.commit_log: list[CommitRecord] = []
        self.overwritten: list[Block] = []
        self.certified: set[bytes] = set()
        self.view_entries: list[tuple[int, float, bool]] = []
        self.counters: dict[str, int] = defaultdict(int)
        self.commit_listener: Callable[["Replica", CommitRecord], None] | None = None
        self._out = Effects()

    # ------------------------------------------------------------------ plumbing

    @property
    def current_view(self) -> int:
        return self.pacemaker.current_view

    def leader_of(self, view: int) -> int:
        return self.election.leader_of(view)

    def _take(self) -> Effects:
        out, self._out = self._out, Effects()
        return out

    def _send(self, dst: int | None, msg: Message) -> None:
        self.counters["sent"] += 1 if dst is not BROADCAST else self.n - 1
        self._out.sends.append((dst, msg))

    def _timer(self, kind: str, view: int, delay: float) -> None:
        self._out.timers.append((kind, view, delay))

    def _byzantine_leader(self, view: int) -> bool:
        return self.attack is not None and self.leader_of(view) == self.id

    # ------------------------------------------------------------------ public entry points

    def start(self) -> Effects:
        if self.current_view == 0:
            self._enter_view(self.pacemaker.start())
        return self._take()

    def on_message(self, sender: int, msg: Message) -> Effects:
        if self.crashed:
            return self._take()
        try:
            self._dispatch(sender, msg)
        except (InvalidMessage, InvalidBlock) as exc:
            self.counters["dropped"] += 1
            log.debug("replica %d dropped %s from %d: %s", self.id, type(msg).__name__, sender, exc)
        return self._take()

    def on_timer(self, kind: str, view: int) -> Effects:
        if self.crashed:
            return self._take()
        if kind == "view":
            self._on_view_timer(view)
        elif kind == "propose":
            self._on_propose_timer(view)
        return self._take()

    def submit(self, tx: Transaction) -> PushResult:
        return self.mempool.push_back(tx)

    def crash(self) -> None:
        self.crashed = True

    # ------------------------------------------------------------------ dispatch

    def _dispatch(self, sender: int, msg: Message) -> None:
        if not 0 <= sender < self.n:
            raise InvalidMessage(f"unknown sender {sender}")
        if isinstance(msg, TimeoutMsg) and msg.view < self.current_view:
            # lagging peer: handled before dedup so a retransmission still gets an answer
            self._on_stale_timeout(sender, msg)
            return
        key = message_key(msg)
        if key is not None:
            bucket = self._seen.get(message_view(msg))
            if bucket is not None and key in bucket:
                self.counters["duplicates"] += 1
                return
        if isinstance(msg, Proposal):
            self._on_proposal(sender, msg)
        elif isinstance(msg, Vote):
            self._on_vote(sender, msg)
        elif isinstance(msg, TimeoutMsg):
            self._on_timeout(sender, msg)
        elif isinstance(msg, TimeoutCertificate):
            self._on_tc(sender, msg)
        elif isinstance(msg, SyncRequest):
            self._on_sync_request(sender, msg)
        elif isinstance(msg, SyncResponse):
            self._on_proposal(sender, Proposal(msg.block), sync=True)
        else:
            raise InvalidMessage(f"unexpected message type {type(msg).__name__}")
        if key is not None:
            self._seen[message_view(msg)].add(key)
            if self.rules.echo and sender != self.id:
                self._send(BROADCAST, msg)

    # ------------------------------------------------------------------ verification

    def _check_qc(self, qc: QuorumCertificate) -> None:
        if qc.view == 0:
            if qc.sigs or qc.block != self.forest.genesis.id:
                raise InvalidMessage("malformed genesis certificate")
            return
        if qc in self._valid_qcs:
            return
        if self.cfg.verify:
            ok = self.keyring.verify_qc(qc, self.forest.genesis.id)
        else:
            ok = _well_formed(qc.sigs, self.n)
        if not ok:
            raise InvalidMessage(f"invalid QC for view {qc.view}")
        if len(self._valid_qcs) > 4096:
            self._valid_qcs.clear()
        self._valid_qcs.add(qc)

    def _check_tc(self, tc: TimeoutCertificate) -> None:
        ok = self.keyring.verify_tc(tc) if self.cfg.verify else _well_formed(tc.sigs, self.n)
        if not ok:
            raise InvalidMessage(f"invalid TC for view {tc.view}")
        if tc.high_qc.view >= tc.view:
            raise InvalidMessage("TC carries a certificate from its own view or later")
        self._check_qc(tc.high_qc)

    def _check_sig(self, signer: int, message: bytes, sig: bytes) -> None:
        if not 0 <= signer < self.n:
            raise InvalidMessage(f"unknown signer {signer}")
        if self.cfg.verify and not self.keyring.verify(signer, message, sig):
            raise InvalidMessage(f"bad signature from {signer}")

    def _check_block(self, b: Block) -> None:
        if b.view <= 0:
            raise InvalidMessage("proposal for genesis view")
        if b.proposer != self.leader_of(b.view):
            raise InvalidMessage(f"block for view {b.view} not proposed by its leader")
        if b.justify.block != b.parent or b.justify.view >= b.view:
            raise InvalidMessage("justify does not certify the parent")
        if len(b.payload) > self.cfg.bsize:
            raise InvalidMessage("payload larger than bsize")
        self._check_sig(b.proposer, block_message(b.id), b.sig)
        self._check_qc(b.justify)

    # ------------------------------------------------------------------ proposals

    def _on_proposal(self, sender: int, prop: Proposal, sync: bool = False, local: bool = False) -> None:
        b = prop.block
        if b.id in self.forest or b.id in self.forest.pending:
            self.counters["duplicates"] += 1
            return
        if not local:
            self._check_block(b)
            if prop.tc is not None:
                self._check_tc(prop.tc)
        result = self.forest.add_block(b)
        if result is AddResult.BELOW_PRUNE or result is AddResult.DUPLICATE:
            self.counters["stale_blocks"] += 1
            return
        linked = list(self.forest.last_accepted)
        self.proposals_seen.setdefault(b.view, b.id)
        self.proposal_time.setdefault(b.id, self.clock())
        self.public_qc = higher_qc(self.public_qc, b.justify)
        if prop.tc is not None:
            self._on_tc(sender, prop.tc, verified=True)
        self._process_qc(b.justify, sender)
        if result is AddResult.PENDING:
            self._request(b.parent, sender)
            return
        for blk in linked:
            self._on_block_linked(blk)

    def _on_block_linked(self, blk: Block) -> None:
        self._requested.pop(blk.id, None)
        qc = self.pending_qcs.pop(blk.id, None)
        if qc is not None:
            self._apply_qc(qc)
        if blk.id not in self.forest.vertices:
            return
        cur = self.current_view
        if blk.view == cur:
            self._try_vote(blk)
        elif blk.view > cur:
            self.future[blk.view].append(blk.id)
        if self._deferred_view is not None and not self._awaiting_sync():
            v, self._deferred_view = self._deferred_view, None
            self._try_propose(v)

    def _try_vote(self, blk: Block) -> None:
        if blk.view != self.current_view:
            return
        if not self.rules.should_vote(blk):
            self.counters["rejected_proposals"] += 1
            return
        self._out.cpu_units += 1
        vote = Vote(blk.view, blk.id, self.id, self.keyring.sign(vote_message(blk.view, blk.id)))
        if self.rules.broadcast_votes:
            self._send(BROADCAST, vote)
            self._on_vote(self.id, vote, local=True)
            return
        dst = self.leader_of(blk.view + 1)
        if dst == self.id:
            self._on_vote(self.id, vote, local=True)
        else:
            self._send(dst, vote)

    def _awaiting_sync(self) -> bool:
        hv = self.rules.state.high_qc.view
        return any(qc.view > hv for qc in self.pending_qcs.values())

    def _try_propose(self, view: int) -> None:
        if view != self.current_view or view in self.proposed or self.leader_of(view) != self.id:
            return
        if self._awaiting_sync():
            self._deferred_view = view
            return
        parent_qc = None
        if self.attack is not None:
            choice = self.attack.proposal_parent(self.rules, view, self.public_qc)
            if choice is SILENT:
                self.proposed.add(view)
                self.counters["withheld"] += 1
                return
            parent_qc = choice
        if parent_qc is None:
            parent_qc = self.rules.proposal_parent()
        if parent_qc.block not in self.forest:
            self._deferred_view = view
            self._request(parent_qc.block, None)
            return
        self.proposed.add(view)
        if self.ingest is not None:
            self.ingest(self)
        payload = self.mempool.next_payload(self.cfg.bsize)
        block = make_block(view, self.id, parent_qc.block, parent_qc, payload)
        block = with_signature(block, self.keyring.sign(block_message(block.id)))
        self._out.cpu_units += 1
        tc = self.pacemaker.last_tc
        if not (self.pacemaker.entered_via_tc and tc is not None and tc.view == view - 1):
            tc = None
        prop = Proposal(block, tc)
        self.counters["proposed"] += 1
        self._send(BROADCAST, prop)
        self._seen[view].add(message_key(prop))
        self._on_proposal(self.id, prop, local=True)

    # ------------------------------------------------------------------ votes and certificates

    def _on_vote(self, sender: int, vote: Vote, local: bool = False) -> None:
        nxt = vote.view + 1
        if self._byzantine_leader(nxt) and self.attack.silent(nxt) and not self.rules.broadcast_votes:
            # a silent leader throws away the certificate it would have built on
            return
        if not local:
            if not self.rules.broadcast_votes and self.leader_of(vote.view + 1) != self.id:
                self.counters["misrouted_votes"] += 1
                return
            self._check_sig(vote.voter, vote_message(vote.view, vote.block), vote.sig)
        qc = self.quorum.process_vote(vote)
        if qc is not None:
            self._out.cpu_units += 1
            self._process_qc(qc, sender)

    def _process_qc(self, qc: QuorumCertificate, sender: int | None) -> None:
        if qc.view == 0:
            return
        if qc.block not in self.forest:
            if qc.block not in self.forest.discarded:
                self.pending_qcs.setdefault(qc.block, qc)
                self._request(qc.block, sender)
            self._advance(qc)
            return
        self._apply_qc(qc)

    def _apply_qc(self, qc: QuorumCertificate) -> None:
        blk = self.forest.get(qc.block)
        if blk.view != qc.view:
            raise InvalidMessage("certificate view does not match its block")
        self.certified.add(qc.block)
        target = self.rules.on_qc(qc)
        if target is not None and not self.forest.is_committed(target):
            self._commit(target, max(self.current_view, qc.view + 1))
        self._advance(qc)

    def _advance(self, cert) -> None:
        adv = self.pacemaker.on_certificate(cert)
        if adv is not None:
            self._enter_view(adv)

    def _commit(self, head: bytes, commit_view: int) -> None:
        now = self.clock()
        for b in self.forest.commit(head):
            self.mempool.mark_committed(b.payload)
            rec = CommitRecord(b.id, b.view, b.proposer, commit_view, now, b.payload)
            self.commit_log.append(rec)
            self._out.commits.append(rec)
            if self.commit_listener is not None:
                self.commit_listener(self, rec)
        self._collect_garbage()

    def _collect_garbage(self) -> None:
        dropped = self.forest.discard_conflicting()
        if dropped:
            self.overwritten.extend(dropped)
            mine = [tx for b in dropped if b.proposer == self.id for tx in b.payload]
            if mine:
                self.counters["recycled"] += self.mempool.recycle_front(mine)
        depth = max(self.rules.commit_depth, 1)
        floor = self.forest.committed_height - 2 * depth
        if floor > self.forest.pruning_height:
            self.forest.prune_up_to(floor)
            self.rules.gc(floor)

    # ------------------------------------------------------------------ timeouts

    def _on_view_timer(self, view: int) -> None:
        if not self.pacemaker.on_local_timeout(view):
            return
        if self._byzantine_leader(view) and self.attack.silent(view):
            return
        tm = self._timeouts_sent.get(view)
        first = tm is None
        if first:
            tm = TimeoutMsg(view, self.id, self.rules.state.high_qc, self.keyring.sign(timeout_message(view)))
            self._timeouts_sent[view] = tm
            self.counters["timeouts"] += 1
        self._send(BROADCAST, tm)
        # re-broadcast at most once per timeout duration while stuck in this view
        self._timer("view", view, self.pacemaker.timeout_for_view())
        if first:
            self._seen[view].add(message_key(tm))
            self._on_timeout(self.id, tm, local=True)

    def _on_stale_timeout(self, sender: int, tm: TimeoutMsg) -> None:
        tc = self.pacemaker.last_tc
        key = (sender, tm.view)
        if tc is None or tc.view < tm.view or key in self._stale_replies or sender == self.id:
            return
        self._check_sig(tm.signer, timeout_message(tm.view), tm.sig)
        self._stale_replies.add(key)
        self._send(sender, tc)

    def _on_timeout(self, sender: int, tm: TimeoutMsg, local: bool = False) -> None:
        if not local:
            self._check_sig(tm.signer, timeout_message(tm.view), tm.sig)
            if tm.high_qc.view >= tm.view:
                raise InvalidMessage("timeout carries a certificate from its own view or later")
            self._check_qc(tm.high_qc)
            self.public_qc = higher_qc(self.public_qc, tm.high_qc)
        self._process_qc(tm.high_qc, sender)
        tc = self.quorum.process_timeout(tm)
        if tc is not None:
            self._on_tc(self.id, tc, verified=True)

    def _on_tc(self, sender: int, tc: TimeoutCertificate, verified: bool = False) -> None:
        if not verified:
            self._check_tc(tc)
        self.public_qc = higher_qc(self.public_qc, tc.high_qc)
        self._process_qc(tc.high_qc, sender)
        self.rules.on_tc(tc)
        self._advance(tc)

    def _on_propose_timer(self, view: int) -> None:
        if view != self.current_view or self.leader_of(view) != self.id:
            return
        best = self.quorum.timeout_high_qc(view - 1)
        if best is not None and best.block in self.forest:
            self.rules.update_high_qc(best)
        self._try_propose(view)

    # ------------------------------------------------------------------ views

    def _enter_view(self, adv: ViewAdvance) -> None:
        v = adv.view
        self.view_entries.append((v, self.clock(), adv.via_tc))
        self._timer("view", v, self.pacemaker.timeout_for_view())
        self._gc_views(v)
        if adv.via_tc and adv.forward_tc_to is not None and adv.forward_tc_to != self.id:
            self._send(adv.forward_tc_to, adv.cert)
        for bid in self.future.pop(v, ()):
            blk = self.forest.get(bid)
            if blk is not None and bid in self.forest.vertices:
                self._try_vote(blk)
        if self.leader_of(v) == self.id:
            wait = adv.via_tc and not self.rules.always_responsive and not self.cfg.responsive
            if wait:
                self._timer("propose", v, self.cfg.wait_after_tc)
            else:
                self._try_propose(v)

    def _gc_views(self, v: int) -> None:
        floor = v - 2
        self.quorum.gc(floor)
        for old in [k for k in self._seen if k < floor - 1 and k != 0]:
            del self._seen[old]
        for old in [k for k in self.future if k < v]:
            del self.future[old]
        if len(self._timeouts_sent) > 16:
            self._timeouts_sent = {k: t for k, t in self._timeouts_sent.items() if k >= floor}
        if len(self._stale_replies) > 4 * self.n:
            self._stale_replies = {k for k in self._stale_replies if k[1] >= floor - self.n}
        if len(self.proposed) > 64:
            self.proposed = {x for x in self.proposed if x >= floor}
        hv = self.rules.state.high_qc.view
        if self.pending_qcs and len(self.pending_qcs) > 64:
            self.pending_qcs = {k: q for k, q in self.pending_qcs.items() if q.view >= hv}

    # ------------------------------------------------------------------ sync

    def _request(self, block_id: bytes, peer: int | None) -> None:
        if block_id in self.forest:
            return
        last = self._requested.get(block_id)
        if last is not None and last >= self.current_view:
            return
        self._requested[block_id] = self.current_view
        if peer is None or peer == self.id:
            peer = self.leader_of(self.current_view)
            if peer == self.id:
                peer = (self.id + 1) % self.n
        self.counters["sync_requests"] += 1
        self._send(peer, SyncRequest(block_id))

    def _on_sync_request(self, sender: int, req: SyncRequest) -> None:
        b = self.forest.get(req.block)
        if b is not None and b.view > 0 and sender != self.id:
            self._send(sender, SyncResponse(b))

    # ------------------------------------------------------------------ reporting

    @property
    def high_qc(self) -> QuorumCertificate:
        return self.rules.state.high_qc

    def committed_ids(self) -> list[bytes]:
        return list(self.forest.chain)


def _well_formed(sigs, n: int) -> bool:
    if len(sigs) < quorum_size(n):
        return False
    last = -1
    for signer, _ in sigs:
        if signer <= last or signer >= n:
            return False
        last = signer
    return True
