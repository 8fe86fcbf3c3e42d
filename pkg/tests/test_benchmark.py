import json
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chainbft.benchmark.config import ConfigError, build_config, load_config
from chainbft.benchmark.metrics import UndefinedMetric, compute_bi, compute_cgr, summarize
from chainbft.benchmark.presets import forking, happy_path, silence
from chainbft.benchmark.runner import simulate
from chainbft.benchmark.trace import RunTrace, TxRecord, ViewRecord
from chainbft.benchmark.workload import generate_workload


def trace(rows, depth=3, txs=()):
    """Window starts after max(3, depth) views and drops the last two."""
    measured = rows[-1].view + 2
    return RunTrace("hotstuff", 4, depth, measured, 1000.0, list(rows), list(txs))


def rows(start, count, committed=lambda v: v + 3, skip=()):
    out = [ViewRecord(v, v % 4) for v in range(1, start)]
    for v in range(start, start + count):
        out.append(ViewRecord(v, v % 4, block=f"{v:02x}", certified=True,
                              committed_at=None if v in skip else committed(v)))
    return out


# ---------------------------------------------------------------------------- config

def test_table_defaults():
    c = build_config()
    assert (c.master, c.strategy, c.byz_no, c.bsize, c.memsize, c.psize) == (0, "silence", 0, 400, 1000, 0)
    assert (c.delay, c.timeout, c.runtime, c.concurrency) == (0.0, 100.0, 30.0, 10)
    assert c.num_replicas == 4


def test_table_names_round_trip(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"byzNo": 1, "address": {str(i): f"127.0.0.1:{9000 + i}" for i in range(4)}}))
    c = load_config(p, timeout=50.0)
    assert c.byz_no == 1 and c.timeout == 50.0 and c.num_replicas == 4
    assert c.effective()["byzNo"] == 1
    assert c.peers()[3] == ("127.0.0.1", 9003)


@pytest.mark.parametrize("bad, field", [
    ({"byzNo": 2}, "byzNo"),
    ({"bsize": 0}, "bsize"),
    ({"timeout": -1}, "timeout"),
    ({"strategy": "equivocate"}, "strategy"),
    ({"master": 7}, "master"),
    ({"unknown": 1}, "unknown"),
])
def test_invalid_config_names_the_field(bad, field):
    with pytest.raises(ConfigError) as err:
        build_config(bad)
    assert field in str(err.value)


def test_unreadable_config(tmp_path):
    p = tmp_path / "c.json"
    p.write_text("[1, 2]")
    with pytest.raises(ConfigError):
        load_config(p)
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")


# ---------------------------------------------------------------------------- workload

def test_poisson_count():
    wl = generate_workload(1000, 30, 4, seed=1)
    assert abs(len(wl) - 30_000) <= 3 * math.sqrt(30_000)
    assert set(wl.origin.tolist()) == {0, 1, 2, 3}


def test_zero_payload_and_sized_payload():
    assert generate_workload(100, 1, 4, psize=0).transaction(0).payload == b""
    wl = generate_workload(100, 1, 4, psize=128, seed=3)
    assert len(wl.transaction(5).payload) == 128


def test_workload_is_seeded():
    a, b = generate_workload(500, 2, 4, seed=9), generate_workload(500, 2, 4, seed=9)
    assert (a.submit == b.submit).all() and (a.origin == b.origin).all()
    with pytest.raises(ValueError):
        generate_workload(0, 1, 4)


# ---------------------------------------------------------------------------- metrics

def test_cgr_all_committed():
    assert compute_cgr(trace(rows(4, 10))) == 1.0


def test_cgr_two_of_ten_overwritten():
    assert compute_cgr(trace(rows(4, 10, skip={7, 8}))) == pytest.approx(0.8)


def test_bi_of_block_committed_four_views_later():
    t = trace(rows(4, 1, committed=lambda v: 8))
    assert compute_bi(t) == 4.0


def test_undefined_metrics():
    empty = trace([ViewRecord(v, 0) for v in range(1, 12)])
    with pytest.raises(UndefinedMetric):
        compute_cgr(empty)
    with pytest.raises(UndefinedMetric):
        compute_bi(trace(rows(4, 5, skip=set(range(4, 9)))))


def test_zero_commit_report():
    txs = [TxRecord(0, 0, 10.0), TxRecord(1, 1, 20.0)]
    r = summarize(trace(rows(4, 5, skip=set(range(4, 9))), txs=txs))
    assert r.throughput == 0 and r.latency_mean is None and r.latency_p99 is None
    assert r.bi is None and r.cgr == 0.0


def test_summary_is_pure():
    txs = [TxRecord(i, 0, float(i), float(i) + 5.0) for i in range(50)]
    t = trace(rows(4, 10), txs=txs)
    before = t.views_csv()
    assert summarize(t, {"seed": 1}).to_json() == summarize(t, {"seed": 1}).to_json()
    assert t.views_csv() == before
    assert summarize(t).latency_mean == 5.0


# ---------------------------------------------------------------------------- runs

@pytest.mark.parametrize("protocol, bi", [("hotstuff", 3.0), ("2chs", 2.0), ("streamlet", 2.0)])
def test_short_happy_path(protocol, bi):
    r = simulate(happy_path(protocol, views=300)).report
    assert r.cgr == 1.0 and r.bi == bi
    assert r.config["protocol"] == protocol and r.config["seed"] == 1


def test_throughput_matches_arrivals_below_saturation():
    r = simulate(build_config(n=4, rate=5000, runtime=3, seed=1)).report
    assert abs(r.throughput - r.arrival_rate) / r.arrival_rate < 0.02
    assert r.latency_mean is not None and r.latency_p50 <= r.latency_p99


def test_no_loss_or_duplication_under_forking():
    res = simulate(build_config(n=4, rate=2000, runtime=2, seed=4, protocol="2chs", byz_no=1, strategy="forking"))
    sim = res.sim
    assert all(c == 1 for c in sim.commit_counts.values())
    assert set(sim.acks) == set(sim.commit_counts)
    # every uncommitted tx is still held by the replica it was sent to
    held = {t.id for r in sim.replicas for t in r.mempool.snapshot()}
    in_blocks = {t.id for r in sim.replicas for v in r.forest.vertices.values() for t in v.block.payload}
    missing = set(range(len(sim.workload))) - set(sim.acks) - held - in_blocks - set(sim.rejected)
    assert not missing


def test_fault_free_run_commits_everything_before_the_cutoff():
    res = simulate(build_config(n=4, rate=2000, runtime=2, seed=4, protocol="2chs"))
    wl = res.sim.workload
    late = [i for i in range(len(wl)) if i not in res.sim.acks]
    assert all(wl.submit[i] > res.sim.now - 50 for i in late)


@settings(max_examples=12, deadline=None)
@given(st.sampled_from(["hotstuff", "2chs"]), st.sampled_from(["forking", "silence"]),
       st.integers(1, 2), st.integers(0, 10**4))
def test_bi_at_least_commit_depth_and_cgr_in_unit_interval(protocol, strategy, byz, seed):
    make = forking if strategy == "forking" else silence
    r = simulate(make(protocol, byz, n=7, views=120, seed=seed)).report
    assert 0 < r.cgr <= 1
    assert r.bi >= {"hotstuff": 3, "2chs": 2}[protocol]
