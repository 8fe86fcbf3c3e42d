"""View synchronization: local timeouts and certificate-driven view advancement."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass

from .core import GENESIS_QC, QuorumCertificate, TimeoutCertificate


class LeaderElection:
    """Deterministic view -> leader map.

    ``master`` != 0 pins a static leader; otherwise ``policy`` is either
    ``round-robin`` (view mod N) or ``random`` (seeded hash of the view).
    """

    def __init__(self, n: int, master: int = 0, policy: str = "round-robin", seed: int = 0):
        if policy not in ("round-robin", "random"):
            raise ValueError(f"unknown leader policy {policy!r}")
        if not 0 <= master < n:
            raise ValueError(f"master {master} outside membership of size {n}")
        self.n = n
        self.master = master
        self.policy = policy
        self.seed = seed

    def leader_of(self, view: int) -> int:
        if self.master:
            return self.master
        if self.policy == "round-robin":
            return view % self.n
        digest = hashlib.sha256(b"leader" + self.seed.to_bytes(8, "big", signed=True) + view.to_bytes(8, "big")).digest()
        return int.from_bytes(digest[:8], "big") % self.n

    __call__ = leader_of


@dataclass
class ViewAdvance:
    view: int
    cert: QuorumCertificate | TimeoutCertificate
    forward_tc_to: int | None = None

    @property
    def via_tc(self) -> bool:
        return isinstance(self.cert, TimeoutCertificate)


class Pacemaker:
    """Tracks the current view and the timer that guards it.

    The pacemaker does not own a clock: callers arm a timer for
    ``timeout_for_view()`` whenever a view is entered and hand expiries back to
    :meth:`on_local_timeout`.
    """

    def __init__(self, election: LeaderElection, timeout_ms: float = 100.0, backoff: bool = False,
                 max_timeout_ms: float = 60_000.0):
        self.election = election
        self.timeout_ms = timeout_ms
        self.backoff = backoff
        self.max_timeout_ms = max_timeout_ms
        self.current_view = 0
        self.highest_seen = 0
        self._consecutive_timeouts = 0
        self.last_tc: TimeoutCertificate | None = None
        self.entered_via_tc = False

    def leader_of(self, view: int) -> int:
        return self.election.leader_of(view)

    def timeout_for_view(self) -> float:
        if not self.backoff:
            return self.timeout_ms
        return min(self.timeout_ms * (2 ** self._consecutive_timeouts), self.max_timeout_ms)

    def start(self) -> ViewAdvance:
        """Enter view 1 on the genesis certificate."""
        self.current_view = 1
        return ViewAdvance(1, GENESIS_QC)

    def on_local_timeout(self, view: int) -> bool:
        """True when the expiry is for the current view and a timeout message must go out."""
        return view == self.current_view

    def on_certificate(self, cert: QuorumCertificate | TimeoutCertificate) -> ViewAdvance | None:
        self.highest_seen = max(self.highest_seen, cert.view)
        if cert.view < self.current_view:
            return None
        new_view = cert.view + 1
        self.current_view = new_view
        forward = None
        if isinstance(cert, TimeoutCertificate):
            self.last_tc = cert
            self.entered_via_tc = True
            self._consecutive_timeouts += 1
            forward = self.election.leader_of(new_view)
        else:
            self.entered_via_tc = False
            self._consecutive_timeouts = 0
        return ViewAdvance(new_view, cert, forward)
