"""Builders shared by the test modules."""
from __future__ import annotations

from chainbft.core import GENESIS, GENESIS_QC, QuorumCertificate, Transaction, make_block, vote_message
from chainbft.crypto import make_keyrings


def fake_qc(block, view=None, signers=(0, 1, 2)):
    """A QC with placeholder signatures, for modules that do not verify."""
    return QuorumCertificate(block.view if view is None else view, block.id,
                             tuple((s, bytes([s]) * 16) for s in signers))


def signed_qc(keyrings, block, signers=None):
    n = len(keyrings)
    signers = signers if signers is not None else range(2 * ((n - 1) // 3) + 1)
    msg = vote_message(block.view, block.id)
    return QuorumCertificate(block.view, block.id, tuple((s, keyrings[s].sign(msg)) for s in sorted(signers)))


def child(parent, view, proposer=0, justify=None, txs=(), tag=0):
    """Block at ``view`` on top of ``parent``; ``tag`` varies the id of otherwise equal blocks."""
    if justify is None:
        justify = GENESIS_QC if parent.view == 0 else fake_qc(parent)
    payload = tuple(txs) or ((Transaction(10_000 + tag),) if tag else ())
    return make_block(view, proposer, parent.id, justify, payload)


def chain(views, base=GENESIS):
    """Linear chain with the given views on top of ``base``; returns the new blocks."""
    out = []
    cur = base
    for v in views:
        cur = child(cur, v)
        out.append(cur)
    return out


def keyrings(n=4, scheme="null", seed=0):
    return make_keyrings(n, scheme, seed)


def prefix_ordered(chains):
    """True when every pair of committed chains is prefix-ordered."""
    seqs = sorted(chains, key=len)
    return all(seqs[i] == seqs[-1][:len(seqs[i])] for i in range(len(seqs)))


# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES: list[str] = []
