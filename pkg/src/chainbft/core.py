"""Domain types shared by every module: transactions, blocks, votes and certificates.

Canonical encoding
------------------
Everything that is hashed or signed goes through the encoders in this module.
Integers are fixed-width big-endian, floats are IEEE-754 binary64 big-endian,
byte strings are length-prefixed and field order never changes:

    Transaction  = id:u64 client:u32 submit_time:f64 len:u32 payload
    QC / TC body = view:u64 block:32B count:u16 (signer:u32 len:u16 sig)*   signers ascending
    Block body   = view:u64 proposer:u32 parent:32B justify:QC count:u32 Transaction*
    Block id     = sha256(Block body)

The same layout is reused by the wire codec in ``chainbft.runtime.messages``.
"""
from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field
from typing import Iterable, Mapping

HASH_SIZE = 32
ZERO_HASH = bytes(HASH_SIZE)

_U64 = struct.Struct(">Q")
_U32 = struct.Struct(">I")
_U16 = struct.Struct(">H")
_F64 = struct.Struct(">d")
_TX_HEAD = struct.Struct(">QIdI")
_QC_HEAD = struct.Struct(">Q32sH")
_SIG_HEAD = struct.Struct(">IH")
_BLOCK_HEAD = struct.Struct(">QI32s")

VOTE_TAG = b"VOTE"
TIMEOUT_TAG = b"TIMO"
BLOCK_TAG = b"BLCK"


class EncodingError(ValueError):
    """Raised when a byte string is not a valid canonical encoding."""


def max_faulty(n: int) -> int:
    """f = floor((N-1)/3)."""
    return (n - 1) // 3


def quorum_size(n: int) -> int:
    return 2 * max_faulty(n) + 1


@dataclass(frozen=True, slots=True)
class Transaction:
    id: int
    client: int = 0
    submit_time: float = 0.0
    payload: bytes = b""


@dataclass(frozen=True, slots=True)
class QuorumCertificate:
    """2f+1 signed votes for ``block`` in ``view``.

    ``sigs`` is a tuple of (signer, signature) pairs sorted by signer.
    """

    view: int
    block: bytes
    sigs: tuple[tuple[int, bytes], ...] = ()

    @property
    def signers(self) -> frozenset[int]:
        return frozenset(s for s, _ in self.sigs)

    @property
    def is_genesis(self) -> bool:
        return self.view == 0 and not self.sigs


@dataclass(frozen=True, slots=True)
class Vote:
    view: int
    block: bytes
    voter: int
    sig: bytes = b""


@dataclass(frozen=True, slots=True)
class TimeoutMsg:
    """A replica gave up on ``view``; carries its highest QC so the next leader can adopt it."""

    view: int
    signer: int
    high_qc: QuorumCertificate
    sig: bytes = b""


@dataclass(frozen=True, slots=True)
class TimeoutCertificate:
    view: int
    sigs: tuple[tuple[int, bytes], ...]
    high_qc: QuorumCertificate

    @property
    def signers(self) -> frozenset[int]:
        return frozenset(s for s, _ in self.sigs)


@dataclass(frozen=True, slots=True, eq=False)
class Block:
    view: int
    proposer: int
    parent: bytes
    justify: QuorumCertificate
    payload: tuple[Transaction, ...] = ()
    sig: bytes = b""
    id: bytes = field(default=b"", compare=False)

    def __eq__(self, other):
        return isinstance(other, Block) and other.id == self.id and other.sig == self.sig

    def __hash__(self):
        return hash(self.id)

    def short(self) -> str:
        return f"B{self.view}:{self.id[:4].hex()}"


# --------------------------------------------------------------------------- encoding

def encode_tx(tx: Transaction) -> bytes:
    return _TX_HEAD.pack(tx.id, tx.client, tx.submit_time, len(tx.payload)) + tx.payload


def encode_sigs(sigs: Iterable[tuple[int, bytes]]) -> bytes:
    out = []
    for signer, sig in sigs:
        out.append(_SIG_HEAD.pack(signer, len(sig)))
        out.append(sig)
    return b"".join(out)


def encode_qc(qc: QuorumCertificate) -> bytes:
    return _QC_HEAD.pack(qc.view, qc.block, len(qc.sigs)) + encode_sigs(qc.sigs)


def block_body(view: int, proposer: int, parent: bytes, justify: QuorumCertificate,
               payload: Iterable[Transaction]) -> bytes:
    txs = [encode_tx(tx) for tx in payload]
    return b"".join([_BLOCK_HEAD.pack(view, proposer, parent), encode_qc(justify),
                     _U32.pack(len(txs)), *txs])


def hash_block(block: Block) -> bytes:
    """Digest over (view, proposer, parent, justify, payload); the signature is excluded."""
    return hashlib.sha256(
        block_body(block.view, block.proposer, block.parent, block.justify, block.payload)
    ).digest()


def encode_block(block: Block) -> bytes:
    body = block_body(block.view, block.proposer, block.parent, block.justify, block.payload)
    return body + _U16.pack(len(block.sig)) + block.sig


class Reader:
    """Cursor over a canonical encoding; every read is bounds-checked."""

    __slots__ = ("buf", "pos")

    def __init__(self, buf: bytes, pos: int = 0):
        self.buf = buf
        self.pos = pos

    def take(self, n: int) -> bytes:
        end = self.pos + n
        if n < 0 or end > len(self.buf):
            raise EncodingError(f"truncated input at offset {self.pos}")
        out = self.buf[self.pos:end]
        self.pos = end
        return out

    def unpack(self, st: struct.Struct):
        end = self.pos + st.size
        if end > len(self.buf):
            raise EncodingError(f"truncated input at offset {self.pos}")
        out = st.unpack_from(self.buf, self.pos)
        self.pos = end
        return out

    def u8(self) -> int:
        return self.take(1)[0]

    def u16(self) -> int:
        return self.unpack(_U16)[0]

    def u32(self) -> int:
        return self.unpack(_U32)[0]

    def u64(self) -> int:
        return self.unpack(_U64)[0]

    def hash(self) -> bytes:
        return self.take(HASH_SIZE)

    def done(self) -> bool:
        return self.pos == len(self.buf)


MAX_SIGS = 4096
MAX_TXS = 1 << 20


def read_tx(r: Reader) -> Transaction:
    tid, client, ts, n = r.unpack(_TX_HEAD)
    return Transaction(tid, client, ts, r.take(n))


def read_sigs(r: Reader, count: int) -> tuple[tuple[int, bytes], ...]:
    if count > MAX_SIGS:
        raise EncodingError("too many signatures")
    sigs = []
    for _ in range(count):
        signer, n = r.unpack(_SIG_HEAD)
        sigs.append((signer, r.take(n)))
    return tuple(sigs)


def read_qc(r: Reader) -> QuorumCertificate:
    view, block, count = r.unpack(_QC_HEAD)
    return QuorumCertificate(view, block, read_sigs(r, count))


def read_block(r: Reader) -> Block:
    start = r.pos
    view, proposer, parent = r.unpack(_BLOCK_HEAD)
    justify = read_qc(r)
    count = r.u32()
    if count > MAX_TXS:
        raise EncodingError("too many transactions")
    payload = tuple(read_tx(r) for _ in range(count))
    body_end = r.pos
    sig = r.take(r.u16())
    bid = hashlib.sha256(r.buf[start:body_end]).digest()
    return Block(view, proposer, parent, justify, payload, sig, bid)


def decode_block(data: bytes) -> Block:
    r = Reader(data)
    block = read_block(r)
    if not r.done():
        raise EncodingError("trailing bytes after block")
    return block


# --------------------------------------------------------------------------- messages to sign

def vote_message(view: int, block: bytes) -> bytes:
    return VOTE_TAG + _U64.pack(view) + block


def timeout_message(view: int) -> bytes:
    return TIMEOUT_TAG + _U64.pack(view)


def block_message(block_id: bytes) -> bytes:
    return BLOCK_TAG + block_id


# --------------------------------------------------------------------------- genesis

NIL_QC = QuorumCertificate(0, ZERO_HASH, ())


def _make_genesis() -> Block:
    g = Block(0, 0, ZERO_HASH, NIL_QC, ())
    return Block(0, 0, ZERO_HASH, NIL_QC, (), b"", hash_block(g))


GENESIS = _make_genesis()
GENESIS_QC = QuorumCertificate(0, GENESIS.id, ())


def make_block(view: int, proposer: int, parent: bytes, justify: QuorumCertificate,
               payload: Iterable[Transaction] = (), sig: bytes = b"") -> Block:
    payload = tuple(payload)
    b = Block(view, proposer, parent, justify, payload, sig)
    return Block(view, proposer, parent, justify, payload, sig, hash_block(b))


def with_signature(block: Block, sig: bytes) -> Block:
    return Block(block.view, block.proposer, block.parent, block.justify, block.payload, sig, block.id)


def higher_qc(a: QuorumCertificate, b: QuorumCertificate) -> QuorumCertificate:
    return b if b.view > a.view else a


def sorted_sigs(sigs: Mapping[int, bytes]) -> tuple[tuple[int, bytes], ...]:
    return tuple(sorted(sigs.items()))
