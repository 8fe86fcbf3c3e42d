import hashlib
import struct
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chainbft.core import (
    GENESIS,
    GENESIS_QC,
    Block,
    EncodingError,
    QuorumCertificate,
    Transaction,
    decode_block,
    encode_block,
    hash_block,
    make_block,
    max_faulty,
    quorum_size,
    with_signature,
)

GOLDEN = Path(__file__).parent / "golden" / "genesis_digest.txt"

txs = st.builds(Transaction, st.integers(0, 2**64 - 1), st.integers(0, 2**32 - 1),
                st.floats(allow_nan=False, allow_infinity=False), st.binary(max_size=64))
sigs = st.lists(st.tuples(st.integers(0, 2**32 - 1), st.binary(max_size=80)), max_size=5).map(tuple)
qcs = st.builds(QuorumCertificate, st.integers(0, 2**64 - 1), st.binary(min_size=32, max_size=32), sigs)
blocks = st.builds(make_block, st.integers(1, 2**64 - 1), st.integers(0, 2**32 - 1),
                   st.binary(min_size=32, max_size=32), qcs, st.lists(txs, max_size=4), st.binary(max_size=80))


def test_genesis_digest_matches_golden_file():
    assert GENESIS.id.hex() == GOLDEN.read_text().strip()


def test_genesis_digest_matches_documented_layout():
    # view:u64 proposer:u32 parent:32B | qc view:u64 block:32B count:u16 | tx count:u32
    body = struct.pack(">QI32s", 0, 0, bytes(32)) + struct.pack(">Q32sH", 0, bytes(32), 0) + struct.pack(">I", 0)
    assert GENESIS.id == hashlib.sha256(body).digest()


def test_hash_is_deterministic():
    b = make_block(1, 0, GENESIS.id, GENESIS_QC)
    assert hash_block(b) == hash_block(b) == b.id


def test_blocks_differing_only_in_view_hash_differently():
    a = make_block(1, 0, GENESIS.id, GENESIS_QC)
    b = make_block(2, 0, GENESIS.id, GENESIS_QC)
    assert a.id != b.id


def test_signature_is_not_hashed():
    b = make_block(1, 0, GENESIS.id, GENESIS_QC)
    assert with_signature(b, b"sig").id == b.id


@pytest.mark.parametrize("field,value", [
    ("view", 2), ("proposer", 1), ("parent", b"\x01" * 32),
    ("justify", QuorumCertificate(0, b"\x02" * 32, ())), ("payload", (Transaction(1),)),
])
def test_single_field_change_changes_digest(field, value):
    base = dict(view=1, proposer=0, parent=GENESIS.id, justify=GENESIS_QC, payload=())
    changed = {**base, field: value}
    assert make_block(**base).id != make_block(**changed).id


def test_no_collisions_over_random_corpus():
    import random

    rng = random.Random(5)
    ids = set()
    for i in range(10_000):
        b = make_block(rng.randrange(1, 10**6), rng.randrange(64), rng.randbytes(32), GENESIS_QC,
                       [Transaction(i, rng.randrange(8), 0.0, rng.randbytes(rng.randrange(8)))])
        ids.add(b.id)
    assert len(ids) == 10_000


@settings(max_examples=200)
@given(blocks)
def test_block_encoding_round_trips(b):
    out = decode_block(encode_block(b))
    assert out == b
    assert out.payload == b.payload and out.justify == b.justify
    assert out.id == hash_block(b)


@settings(max_examples=200)
@given(blocks, st.data())
def test_truncated_encoding_is_rejected(b, data):
    raw = encode_block(b)
    cut = data.draw(st.integers(0, len(raw) - 1))
    with pytest.raises(EncodingError):
        decode_block(raw[:cut])


def test_trailing_bytes_are_rejected():
    with pytest.raises(EncodingError):
        decode_block(encode_block(GENESIS) + b"\x00")


@pytest.mark.parametrize("n,f,q", [(1, 0, 1), (4, 1, 3), (7, 2, 5), (10, 3, 7), (16, 5, 11), (32, 10, 21)])
def test_fault_threshold(n, f, q):
    assert max_faulty(n) == f
    assert quorum_size(n) == q


def test_block_equality_uses_id_and_signature():
    b = make_block(1, 0, GENESIS.id, GENESIS_QC)
    assert b == with_signature(b, b"")
    assert b != with_signature(b, b"x")
    assert isinstance(b, Block) and hash(b) == hash(b.id)
