import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chainbft.perf_model import (
    ModelError,
    ModelParams,
    Saturated,
    predict_curve,
    predict_latency,
    quorum_rank,
    saturation_rate,
    t_commit,
    t_nic,
    t_q,
    t_s,
    utilization,
    w_q,
)

# Expected 10th smallest of 15 iid normal(1, 0.2) draws, from numerical integration
# of the order-statistic density (scipy.integrate.quad, abs error < 1e-11).
ORDER_STAT_N16 = 1.0670592127780816


# ---------------------------------------------------------------------------- t_nic

def test_t_nic():
    assert t_nic(0, 1e6) == 0
    assert t_nic(1e6, 1e6) == 2000.0
    assert t_nic(2e6, 1e6) == 2 * t_nic(1e6, 1e6)
    assert t_nic(5e6, math.inf) == 0
    with pytest.raises(ModelError):
        t_nic(1, 0)


# ---------------------------------------------------------------------------- t_q

def test_quorum_rank():
    assert [quorum_rank(n) for n in (4, 7, 16, 32)] == [2, 4, 10, 20]


def test_t_q_degenerate():
    assert t_q(16, 3.5, 0.0, return_stderr=True) == (3.5, 0.0)


def test_t_q_median_of_three_is_unbiased():
    est, se = t_q(4, 2.0, 0.5, samples=200_000, seed=1, return_stderr=True)
    assert abs(est - 2.0) <= 3 * se


def test_t_q_matches_order_statistic_integral():
    est, se = t_q(16, 1.0, 0.2, samples=200_000, seed=2, return_stderr=True)
    assert abs(est - ORDER_STAT_N16) <= 3 * se


def test_order_statistic_oracle_is_reproducible():
    from math import comb

    from scipy import integrate, stats

    d = stats.norm(1.0, 0.2)
    n, k = 15, 10
    c = k * comb(n, k)
    val, _ = integrate.quad(lambda x: x * c * d.cdf(x) ** (k - 1) * d.sf(x) ** (n - k) * d.pdf(x), -1, 3)
    assert val == pytest.approx(ORDER_STAT_N16, abs=1e-9)


def test_t_q_stderr_shrinks_with_samples():
    _, small = t_q(16, 1.0, 0.2, samples=10_000, seed=3, return_stderr=True)
    _, big = t_q(16, 1.0, 0.2, samples=640_000, seed=3, return_stderr=True)
    assert big / small == pytest.approx(1 / 8, rel=0.1)


def test_t_q_errors():
    with pytest.raises(ModelError):
        t_q(4, 1.0, -0.1)


# ---------------------------------------------------------------------------- t_s, t_commit

def test_t_s_collapses_to_mu():
    assert t_s(0.0, t_nic(0, math.inf), t_q(4, 1.3, 0.0)) == 1.3


def test_t_s_breakdown_is_term_by_term():
    p = ModelParams(N=4, n=400, mu=1.0, sigma=0.1, m=20_000, b=1e8, t_cpu=0.05)
    pred = predict_latency(p)
    assert pred.t_s == 3 * 0.05 + 2 * pred.t_NIC + pred.t_Q


@settings(max_examples=50)
@given(st.floats(0, 5), st.floats(0, 1e6), st.floats(0.01, 50), st.floats(0, 5), st.floats(0, 1e6),
       st.floats(0, 50))
def test_t_s_monotone(cpu, m, mu, dcpu, dm, dmu):
    base = t_s(cpu, t_nic(m, 1e7), mu)
    assert t_s(cpu + dcpu, t_nic(m + dm, 1e7), mu + dmu) >= base


@pytest.mark.parametrize("protocol, expected", [("hotstuff", 20.0), ("2chs", 10.0), ("streamlet", 10.0)])
def test_t_commit(protocol, expected):
    assert t_commit(protocol, 10.0) == expected


def test_t_commit_unknown_protocol():
    with pytest.raises(ModelError):
        t_commit("pbft", 1.0)


# ---------------------------------------------------------------------------- w_q

def md1_wait(lam_per_ms, service_ms, jobs, seed):
    """Mean queueing delay of a single deterministic server, by the Lindley recursion."""
    rng = np.random.default_rng(seed)
    gaps = rng.exponential(1 / lam_per_ms, size=jobs)
    # W_k = max(0, W_{k-1} + D - A_k) is the random walk minus its running minimum
    walk = np.concatenate([[0.0], np.cumsum(service_ms - gaps[1:])])
    waits = walk - np.minimum.accumulate(np.minimum(walk, 0.0))
    return float(waits[jobs // 10:].mean())


@pytest.mark.parametrize("rho", [0.3, 0.6, 0.9])
def test_w_q_matches_discrete_event_queue(rho):
    N, n, ts = 4, 400, 2.5
    service = N * ts
    lam = rho / service * n * N * 1000.0     # tx/s that gives this rho
    want, got_rho = w_q(lam, n, N, ts)
    assert got_rho == pytest.approx(rho)
    jobs = 4_000_000 if rho == 0.9 else 1_000_000
    sim = md1_wait(lam / (n * N) / 1000.0, service, jobs, seed=int(rho * 10))
    assert abs(sim - want) / want < 0.05


def test_w_q_limits():
    assert w_q(0.0, 400, 4, 2.0) == (0.0, 0.0)
    assert w_q(1e-6, 400, 4, 2.0)[0] < 1e-9
    N, n, ts = 4, 400, 2.0
    lam_sat = n * N * 1000.0 / (N * ts)
    wait, rho = w_q(lam_sat * (1 - 1e-9), n, N, ts)
    assert math.isfinite(wait) and wait > 1e6 and rho < 1
    with pytest.raises(Saturated):
        w_q(lam_sat, n, N, ts)
    with pytest.raises(Saturated):
        w_q(lam_sat * 2, n, N, ts)


def test_utilization_units():
    rho, u, gamma = utilization(4000.0, 400, 4, 2.0)
    assert gamma == pytest.approx(4000 / 1600 / 1000)
    assert u == pytest.approx(1 / 8)
    assert rho == pytest.approx(gamma / u)


# ---------------------------------------------------------------------------- predictions

def test_total_is_four_mu_in_the_bare_case():
    p = ModelParams(mu=2.0, lam=0.0)
    pred = predict_latency(p)
    assert pred.total == 8.0 and pred.w_Q == 0


@settings(max_examples=30, deadline=None)
@given(st.integers(4, 40), st.floats(0.1, 10), st.floats(0, 2), st.floats(0, 1e5), st.floats(0, 1))
def test_term_sum_and_protocol_ordering(N, mu, sigma, m, cpu):
    base = ModelParams(N=N, n=400, lam=0.0, mu=mu, sigma=sigma, m=m, b=1e8, t_cpu=cpu)
    hs = predict_latency(base, samples=20_000)
    two = predict_latency(replace(base, protocol="2chs"), samples=20_000)
    sl = predict_latency(replace(base, protocol="streamlet"), samples=20_000)
    assert hs.total == hs.t_L + hs.t_s + hs.t_commit + hs.w_Q
    assert hs.total - two.total == pytest.approx(hs.t_s, rel=1e-12, abs=1e-12)
    assert two.total == sl.total


def test_curve_is_monotone_and_convex():
    p = ModelParams(N=4, n=400, mu=1.0, sigma=0.2)
    rows = predict_curve(p, points=30)
    live = [r for r in rows if not r["saturated"]]
    assert rows[-1]["saturated"] and rows[-1]["total"] == math.inf
    totals = [r["total"] for r in live]
    assert all(a <= b for a, b in zip(totals, totals[1:]))
    steps = np.diff(totals)
    assert all(a <= b + 1e-12 for a, b in zip(steps, steps[1:]))
    assert saturation_rate(p) == pytest.approx(rows[-1]["lam"])


def test_invalid_params():
    for bad in (ModelParams(N=0), ModelParams(sigma=-1), ModelParams(b=0), ModelParams(protocol="x")):
        with pytest.raises(ModelError):
            predict_latency(bad)
