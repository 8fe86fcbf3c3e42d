import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chainbft.core import GENESIS_QC, QuorumCertificate, TimeoutCertificate
from chainbft.pacemaker import LeaderElection, Pacemaker


def qc(view):
    return QuorumCertificate(view, b"\x01" * 32, ((0, b""), (1, b""), (2, b"")))


def tc(view):
    return TimeoutCertificate(view, ((0, b""), (1, b""), (2, b"")), GENESIS_QC)


def at_view(v):
    pm = Pacemaker(LeaderElection(4))
    pm.start()
    pm.current_view = v
    return pm


def test_round_robin():
    e = LeaderElection(4)
    assert [e.leader_of(v) for v in (1, 2, 3, 4)] == [1, 2, 3, 0]


def test_static_master():
    e = LeaderElection(4, master=2)
    assert {e.leader_of(v) for v in range(1, 50)} == {2}


def test_random_policy_is_shared_by_seed():
    a = [LeaderElection(7, policy="random", seed=3).leader_of(v) for v in range(200)]
    b = [LeaderElection(7, policy="random", seed=3).leader_of(v) for v in range(200)]
    c = [LeaderElection(7, policy="random", seed=4).leader_of(v) for v in range(200)]
    assert a == b != c
    assert set(a) == set(range(7))


def test_bad_election_config():
    with pytest.raises(ValueError):
        LeaderElection(4, master=4)
    with pytest.raises(ValueError):
        LeaderElection(4, policy="lottery")


def test_qc_advances():
    pm = at_view(5)
    adv = pm.on_certificate(qc(5))
    assert adv.view == 6 and pm.current_view == 6 and not adv.via_tc


def test_tc_advances_and_forwards():
    pm = at_view(5)
    adv = pm.on_certificate(tc(5))
    assert adv.view == 6 and adv.via_tc and adv.forward_tc_to == 2
    assert pm.last_tc.view == 5 and pm.entered_via_tc


def test_stale_certificate_is_ignored():
    pm = at_view(6)
    assert pm.on_certificate(qc(3)) is None
    assert pm.current_view == 6


def test_local_timeout_only_for_current_view():
    pm = at_view(4)
    assert pm.on_local_timeout(4)
    pm.on_certificate(qc(4))
    assert not pm.on_local_timeout(4)


def test_fixed_timeout_by_default_and_backoff_on_flag():
    pm = Pacemaker(LeaderElection(4), timeout_ms=100)
    pm.start()
    pm.on_certificate(tc(1))
    assert pm.timeout_for_view() == 100
    pb = Pacemaker(LeaderElection(4), timeout_ms=100, backoff=True)
    pb.start()
    pb.on_certificate(tc(1))
    pb.on_certificate(tc(2))
    assert pb.timeout_for_view() == 400
    pb.on_certificate(qc(3))
    assert pb.timeout_for_view() == 100


@settings(max_examples=200)
@given(st.lists(st.tuples(st.booleans(), st.integers(0, 40)), max_size=40))
def test_views_strictly_increase_over_advances(certs):
    pm = Pacemaker(LeaderElection(4))
    views = [pm.start().view]
    for is_tc, v in certs:
        adv = pm.on_certificate(tc(v) if is_tc else qc(v))
        if adv is not None:
            views.append(adv.view)
    assert all(a < b for a, b in zip(views, views[1:]))
