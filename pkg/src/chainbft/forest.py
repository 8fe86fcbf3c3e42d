"""Height-indexed block forest with pruning and main-chain extraction."""
from __future__ import annotations

import enum
import struct
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import BinaryIO, Iterator

from .core import GENESIS, Block, EncodingError, decode_block, encode_block


class AddResult(enum.Enum):
    ACCEPTED = "accepted"
    PENDING = "pending"
    DUPLICATE = "duplicate"
    BELOW_PRUNE = "below_prune"


class InvalidBlock(ValueError):
    pass


class UnknownBlock(KeyError):
    pass


class ConflictingCommit(RuntimeError):
    """A commit target does not extend the committed tip (a safety violation)."""


@dataclass
class ForestVertex:
    block: Block
    height: int
    children: set[bytes] = field(default_factory=set)


class _BoundedSet:
    def __init__(self, limit: int):
        self.limit = limit
        self._d: OrderedDict[bytes, None] = OrderedDict()

    def add(self, key: bytes) -> None:
        self._d[key] = None
        self._d.move_to_end(key)
        while len(self._d) > self.limit:
            self._d.popitem(last=False)

    def __contains__(self, key) -> bool:
        return key in self._d

    def __len__(self) -> int:
        return len(self._d)


class BlockForest:
    """Multi-tree of blocks keyed by hash.

    Heights are structural (parent height + 1) and independent of views.
    Committed blocks form the main chain; once pruned they move to the
    archive, which keeps them queryable by height.
    """

    def __init__(self, genesis: Block = GENESIS, pending_limit: int = 1024,
                 archive_sink: BinaryIO | None = None):
        self.genesis = genesis
        self.vertices: dict[bytes, ForestVertex] = {genesis.id: ForestVertex(genesis, 0)}
        self.pruning_height = 0
        self.committed_tip = genesis.id
        # committed hashes indexed by height; chain[0] is genesis
        self.chain: list[bytes] = [genesis.id]
        self._committed_height: dict[bytes, int] = {genesis.id: 0}
        self._archive: dict[bytes, Block] = {}
        self.pending: OrderedDict[bytes, Block] = OrderedDict()
        self._waiting: dict[bytes, set[bytes]] = {}
        self.pending_limit = pending_limit
        self.discarded = _BoundedSet(max(4 * pending_limit, 4096))
        self.archive_sink = archive_sink
        self.last_accepted: list[Block] = []

    # ------------------------------------------------------------------ queries

    def __contains__(self, block_id: bytes) -> bool:
        return block_id in self.vertices or block_id in self._archive

    def __len__(self) -> int:
        return len(self.vertices)

    def get(self, block_id: bytes) -> Block | None:
        v = self.vertices.get(block_id)
        if v is not None:
            return v.block
        return self._archive.get(block_id)

    def block(self, block_id: bytes) -> Block:
        b = self.get(block_id)
        if b is None:
            raise UnknownBlock(block_id.hex())
        return b

    def height(self, block_id: bytes) -> int:
        v = self.vertices.get(block_id)
        if v is not None:
            return v.height
        h = self._committed_height.get(block_id)
        if h is None or block_id not in self._archive:
            raise UnknownBlock(block_id.hex())
        return h

    def parent(self, block_id: bytes) -> Block | None:
        return self.get(self.block(block_id).parent)

    def is_committed(self, block_id: bytes) -> bool:
        return block_id in self._committed_height

    @property
    def committed_height(self) -> int:
        return len(self.chain) - 1

    def extends(self, descendant: bytes, ancestor: bytes) -> bool:
        """True iff ``ancestor`` lies on the parent path of ``descendant`` (strict)."""
        if descendant not in self or ancestor not in self:
            raise UnknownBlock((descendant if descendant not in self else ancestor).hex())
        target_h = self.height(ancestor)
        cur = descendant
        if cur == ancestor:
            return False
        while True:
            if cur in self._archive:
                # cur sits on the archived main chain, so its ancestors are the chain itself
                return self._committed_height.get(ancestor) == target_h and self.chain[target_h] == ancestor \
                    and self._committed_height[cur] > target_h
            v = self.vertices[cur]
            if v.height <= target_h:
                return False
            parent = v.block.parent
            if parent == ancestor:
                return True
            if parent not in self:
                return False
            cur = parent

    def ancestors(self, block_id: bytes) -> Iterator[Block]:
        """Yield the block and its ancestors while they remain in the forest or archive."""
        cur = self.get(block_id)
        while cur is not None:
            yield cur
            if cur.view == 0:
                return
            cur = self.get(cur.parent)

    def committed_chain(self) -> list[Block]:
        return [self.block(h) for h in self.chain]

    def committed_at(self, height: int) -> bytes | None:
        return self.chain[height] if 0 <= height < len(self.chain) else None

    def descendants(self, block_id: bytes) -> set[bytes]:
        out: set[bytes] = set()
        v = self.vertices.get(block_id)
        if v is None:
            return out
        stack = list(v.children)
        while stack:
            h = stack.pop()
            if h in out:
                continue
            out.add(h)
            stack.extend(self.vertices[h].children)
        return out

    # ------------------------------------------------------------------ mutation

    def add_block(self, block: Block) -> AddResult:
        """Insert ``block``; re-links any buffered children once their parent arrives.

        ``last_accepted`` lists every block linked by this call, in link order.
        """
        self.last_accepted = []
        result = self._add(block)
        if result is AddResult.ACCEPTED:
            self._relink(block.id)
        return result

    def _add(self, block: Block) -> AddResult:
        bid = block.id
        if bid in self.vertices or bid in self._archive or bid in self.pending:
            return AddResult.DUPLICATE
        if bid in self.discarded:
            return AddResult.BELOW_PRUNE
        parent = self.get(block.parent)
        if parent is None:
            if block.parent in self.discarded:
                self.discarded.add(bid)
                return AddResult.BELOW_PRUNE
            self._buffer(block)
            return AddResult.PENDING
        if block.view <= parent.view:
            raise InvalidBlock(f"block view {block.view} not above parent view {parent.view}")
        height = self.height(block.parent) + 1
        if height <= self.pruning_height:
            self.discarded.add(bid)
            return AddResult.BELOW_PRUNE
        self.vertices[bid] = ForestVertex(block, height)
        pv = self.vertices.get(block.parent)
        if pv is not None:
            pv.children.add(bid)
        self.last_accepted.append(block)
        return AddResult.ACCEPTED

    def _buffer(self, block: Block) -> None:
        self.pending[block.id] = block
        self._waiting.setdefault(block.parent, set()).add(block.id)
        while len(self.pending) > self.pending_limit:
            old_id, old = self.pending.popitem(last=False)
            self._unwait(old)

    def _unwait(self, block: Block) -> None:
        waiters = self._waiting.get(block.parent)
        if waiters is not None:
            waiters.discard(block.id)
            if not waiters:
                del self._waiting[block.parent]

    def _relink(self, parent_id: bytes) -> None:
        stack = [parent_id]
        while stack:
            pid = stack.pop()
            for cid in sorted(self._waiting.pop(pid, ())):
                child = self.pending.pop(cid, None)
                if child is None:
                    continue
                try:
                    if self._add(child) is AddResult.ACCEPTED:
                        stack.append(cid)
                except InvalidBlock:
                    self.discarded.add(cid)

    def missing_parents(self) -> list[bytes]:
        return [p for p in self._waiting if p not in self.discarded]

    def commit(self, head: bytes) -> list[Block]:
        """Commit ``head`` and its uncommitted ancestors; returns them oldest first."""
        if head in self._committed_height:
            return []
        if head not in self.vertices:
            raise UnknownBlock(head.hex())
        if not self.extends(head, self.committed_tip):
            raise ConflictingCommit(f"{head.hex()[:8]} does not extend committed tip {self.committed_tip.hex()[:8]}")
        path = []
        cur = head
        while cur != self.committed_tip:
            path.append(cur)
            cur = self.vertices[cur].block.parent
        path.reverse()
        for h in path:
            self._committed_height[h] = len(self.chain)
            self.chain.append(h)
        self.committed_tip = head
        return [self.vertices[h].block for h in path]

    def discard_conflicting(self) -> list[Block]:
        """Drop every uncommitted vertex that does not descend from the committed tip."""
        keep = self.descendants(self.committed_tip)
        dropped = []
        for bid, v in list(self.vertices.items()):
            if bid in keep or bid in self._committed_height:
                continue
            dropped.append(v.block)
        for b in dropped:
            self._remove(b.id)
        dropped.sort(key=lambda b: b.view)
        return dropped

    def _remove(self, bid: bytes) -> None:
        v = self.vertices.pop(bid)
        pv = self.vertices.get(v.block.parent)
        if pv is not None:
            pv.children.discard(bid)
        self.discarded.add(bid)

    def prune_up_to(self, height: int) -> set[bytes]:
        """Archive committed vertices and discard the rest at or below ``height``.

        Committed vertices above the archive boundary are never touched, and the
        committed tip always stays in the forest.
        """
        if height <= self.pruning_height:
            return set()
        discarded = set()
        for bid, v in list(self.vertices.items()):
            if v.height > height or bid == self.committed_tip:
                continue
            if bid in self._committed_height:
                del self.vertices[bid]
                self._archive[bid] = v.block
                if self.archive_sink is not None:
                    write_record(self.archive_sink, encode_block(v.block))
            else:
                discarded.add(bid)
                self._remove(bid)
        for v in self.vertices.values():
            v.children.intersection_update(self.vertices.keys())
        self.pruning_height = height
        return discarded


_LEN = struct.Struct(">I")


def write_record(sink: BinaryIO, data: bytes) -> None:
    sink.write(_LEN.pack(len(data)))
    sink.write(data)


def read_archive(source: BinaryIO) -> Iterator[Block]:
    """Replay an archive log written by :class:`BlockForest`."""
    while True:
        head = source.read(4)
        if not head:
            return
        if len(head) < 4:
            raise EncodingError("truncated archive record header")
        (n,) = _LEN.unpack(head)
        data = source.read(n)
        if len(data) < n:
            raise EncodingError("truncated archive record")
        yield decode_block(data)
