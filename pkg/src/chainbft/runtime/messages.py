"""Protocol messages and their wire codec.

Frame layout (inside the 4-byte length prefix added by the socket layer)::

    tag:u8 sender:u32 body siglen:u16 sig

The envelope signature covers ``tag sender body``. Bodies reuse the canonical
encodings from :mod:`chainbft.core`.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Union

from ..core import (
    Block,
    EncodingError,
    QuorumCertificate,
    Reader,
    TimeoutCertificate,
    TimeoutMsg,
    Vote,
    encode_block,
    encode_qc,
    encode_sigs,
    read_block,
    read_qc,
    read_sigs,
)
from ..crypto import Keyring


@dataclass(frozen=True, slots=True)
class Proposal:
    block: Block
    # certificate that let the leader enter this view, if it got there by timeout
    tc: TimeoutCertificate | None = None


@dataclass(frozen=True, slots=True)
class SyncRequest:
    block: bytes


@dataclass(frozen=True, slots=True)
class SyncResponse:
    block: Block


Message = Union[Proposal, Vote, TimeoutMsg, TimeoutCertificate, SyncRequest, SyncResponse]

TAG_PROPOSAL = 1
TAG_VOTE = 2
TAG_TIMEOUT = 3
TAG_TC = 4
TAG_SYNC_REQ = 5
TAG_SYNC_RESP = 6

_TAGS = {Proposal: TAG_PROPOSAL, Vote: TAG_VOTE, TimeoutMsg: TAG_TIMEOUT, TimeoutCertificate: TAG_TC,
         SyncRequest: TAG_SYNC_REQ, SyncResponse: TAG_SYNC_RESP}

_U8 = struct.Struct(">B")
_U16 = struct.Struct(">H")
_U32 = struct.Struct(">I")
_VOTE = struct.Struct(">Q32sI")
_TIMEOUT = struct.Struct(">QI")
_TC = struct.Struct(">QH")


class BadEnvelope(ValueError):
    pass


def _sig(sig: bytes) -> bytes:
    return _U16.pack(len(sig)) + sig


def encode_tc(tc: TimeoutCertificate) -> bytes:
    return _TC.pack(tc.view, len(tc.sigs)) + encode_sigs(tc.sigs) + encode_qc(tc.high_qc)


def read_tc(r: Reader) -> TimeoutCertificate:
    view, count = r.unpack(_TC)
    sigs = read_sigs(r, count)
    return TimeoutCertificate(view, sigs, read_qc(r))


def encode_body(msg: Message) -> bytes:
    if isinstance(msg, Proposal):
        tail = b"\x01" + encode_tc(msg.tc) if msg.tc is not None else b"\x00"
        return encode_block(msg.block) + tail
    if isinstance(msg, Vote):
        return _VOTE.pack(msg.view, msg.block, msg.voter) + _sig(msg.sig)
    if isinstance(msg, TimeoutMsg):
        return _TIMEOUT.pack(msg.view, msg.signer) + _sig(msg.sig) + encode_qc(msg.high_qc)
    if isinstance(msg, TimeoutCertificate):
        return encode_tc(msg)
    if isinstance(msg, SyncRequest):
        if len(msg.block) != 32:
            raise EncodingError("sync request hash must be 32 bytes")
        return msg.block
    if isinstance(msg, SyncResponse):
        return encode_block(msg.block)
    raise TypeError(f"not a protocol message: {type(msg).__name__}")


def decode_body(tag: int, r: Reader) -> Message:
    if tag == TAG_PROPOSAL:
        block = read_block(r)
        flag = r.u8()
        if flag > 1:
            raise EncodingError("bad proposal flag")
        return Proposal(block, read_tc(r) if flag else None)
    if tag == TAG_VOTE:
        view, block, voter = r.unpack(_VOTE)
        return Vote(view, block, voter, r.take(r.u16()))
    if tag == TAG_TIMEOUT:
        view, signer = r.unpack(_TIMEOUT)
        sig = r.take(r.u16())
        return TimeoutMsg(view, signer, read_qc(r), sig)
    if tag == TAG_TC:
        return read_tc(r)
    if tag == TAG_SYNC_REQ:
        return SyncRequest(r.hash())
    if tag == TAG_SYNC_RESP:
        return SyncResponse(read_block(r))
    raise EncodingError(f"unknown message tag {tag}")


def encode_message(sender: int, msg: Message) -> bytes:
    """Unsigned frame: tag, sender, body."""
    return _U8.pack(_TAGS[type(msg)]) + _U32.pack(sender) + encode_body(msg)


def seal(sender: int, msg: Message, keyring: Keyring | None) -> bytes:
    head = encode_message(sender, msg)
    sig = keyring.sign(head) if keyring is not None else b""
    return head + _sig(sig)


def unseal(data: bytes, keyring: Keyring | None) -> tuple[int, Message]:
    """Decode and authenticate a frame. Raises EncodingError or BadEnvelope."""
    r = Reader(data)
    tag = r.u8()
    sender = r.u32()
    msg = decode_body(tag, r)
    body_end = r.pos
    sig = r.take(r.u16())
    if not r.done():
        raise EncodingError("trailing bytes after message")
    if keyring is not None:
        if not 0 <= sender < keyring.n:
            raise BadEnvelope(f"unknown sender {sender}")
        if not keyring.verify(sender, data[:body_end], sig):
            raise BadEnvelope(f"bad envelope signature from {sender}")
    return sender, msg


def message_key(msg: Message) -> tuple | None:
    """Identity used for duplicate suppression; None for messages that are never deduplicated."""
    if isinstance(msg, Proposal):
        return (TAG_PROPOSAL, msg.block.id)
    if isinstance(msg, Vote):
        return (TAG_VOTE, msg.view, msg.block, msg.voter)
    if isinstance(msg, TimeoutMsg):
        return (TAG_TIMEOUT, msg.view, msg.signer)
    if isinstance(msg, TimeoutCertificate):
        return (TAG_TC, msg.view)
    return None


def message_view(msg: Message) -> int:
    if isinstance(msg, (Proposal, SyncResponse)):
        return msg.block.view
    if isinstance(msg, (Vote, TimeoutMsg, TimeoutCertificate)):
        return msg.view
    return 0


# fixed overheads of the encodings above, used to size messages without encoding them
_TX_OVERHEAD = 24
_BLOCK_OVERHEAD = 44 + 42 + 4 + 2


def approx_size(msg: Message, sig_bytes: int = 72) -> int:
    """Encoded size in bytes, estimated without serializing."""
    if isinstance(msg, (Proposal, SyncResponse)):
        b = msg.block
        qc = len(b.justify.sigs) * (6 + sig_bytes)
        return _BLOCK_OVERHEAD + sig_bytes + qc + sum(_TX_OVERHEAD + len(tx.payload) for tx in b.payload)
    if isinstance(msg, Vote):
        return 50 + sig_bytes
    if isinstance(msg, (TimeoutMsg, TimeoutCertificate)):
        return 60 + sig_bytes * 4
    return 40
