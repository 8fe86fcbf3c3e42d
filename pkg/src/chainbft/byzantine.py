"""Leader-side attack strategies: replacements for the proposing rule.

Attackers never forge anything. A forking leader proposes a block that honest
replicas still accept but that branches off below the chain tip; a silent
leader sends nothing at all during its own view.
"""
from __future__ import annotations

from dataclasses import dataclass

from .core import QuorumCertificate
from .safety.base import SafetyRules

#: returned by :meth:`Attack.proposal_parent` when the leader withholds its proposal
SILENT = object()


def attacker_ids(n: int, byz_no: int) -> list[int]:
    """Attackers occupy the highest replica ids."""
    if not 0 <= byz_no <= n:
        raise ValueError(f"byzNo={byz_no} outside 0..{n}")
    return list(range(n - byz_no, n))


def forking_parent(rules: SafetyRules, high_qc: QuorumCertificate,
                   public_qc: QuorumCertificate) -> QuorumCertificate | None:
    """Certificate of the deepest ancestor of ``high_qc.block`` that honest replicas still vote on.

    Honest locks are modelled from ``public_qc``, the highest certificate the
    honest replicas are known to have seen. Candidates stop ``rules.fork_depth``
    blocks below ``high_qc.block``. Returns None when no branch point deeper
    than the tip is admissible.
    """
    if rules.fork_depth <= 0:
        return None
    forest = rules.forest
    lock = rules.lock_for(public_qc) or forest.genesis.id
    candidates: list[QuorumCertificate] = [high_qc]
    cur = forest.get(high_qc.block)
    while cur is not None and cur.view > 0 and len(candidates) <= rules.fork_depth:
        candidates.append(cur.justify)
        cur = forest.get(cur.parent)
    for qc in reversed(candidates[1:]):
        if qc.block in forest and rules.admissible_parent(qc.block, lock):
            return qc
    return None


@dataclass
class Attack:
    kind = "honest"

    def proposal_parent(self, rules: SafetyRules, view: int, public_qc: QuorumCertificate):
        """QC to build on, :data:`SILENT` to withhold, or None for the honest choice."""
        return None

    def silent(self, view: int) -> bool:
        return False


@dataclass
class ForkingAttack(Attack):
    kind = "forking"

    def proposal_parent(self, rules, view, public_qc):
        return forking_parent(rules, rules.state.high_qc, public_qc)


@dataclass
class SilenceAttack(Attack):
    """Withhold the proposal (and the timeout message) in the attacker's own views.

    ``views`` restricts the attack to a fixed set of views, for scripted traces.
    """

    views: frozenset[int] | None = None
    kind = "silence"

    def silent(self, view: int) -> bool:
        return self.views is None or view in self.views

    def proposal_parent(self, rules, view, public_qc):
        return SILENT if self.silent(view) else None


def make_attack(strategy: str, views=None) -> Attack:
    if strategy == "forking":
        return ForkingAttack()
    if strategy == "silence":
        return SilenceAttack(frozenset(views) if views is not None else None)
    raise ValueError(f"unknown strategy {strategy!r}; choose silence or forking")
