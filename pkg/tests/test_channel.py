import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from blockfec.analytics import CodeParams, LossModel, burst_ratio
from blockfec.channel import SimConfig, decode_block, decode_blocks, run_length_histogram, simulate_stream
from blockfec.runs import estimate, run_histogram, run_lengths
from oracles import count_runs


def test_decode_block_examples():
    code = CodeParams(5, 2)
    # two voice losses, both repairs in: full recovery
    assert decode_block([0, 1, 1, 0, 1, 1, 1], code).all()
    # three losses: only what arrived survives
    assert decode_block([0, 1, 1, 0, 1, 0, 1], code).tolist() == [False, True, True, False, True]
    # repair losses alone never hurt
    assert decode_block([1, 1, 1, 1, 1, 0, 0], code).all()


def test_decode_block_rejects_bad_mask():
    with pytest.raises(ValueError):
        decode_block([1, 1, 1], CodeParams(5, 2))
    with pytest.raises(ValueError):
        decode_blocks(np.ones((3, 2), dtype=bool), 4)


@pytest.mark.parametrize("n,k", [(3, 1), (4, 2), (5, 2)])
def test_decode_exhaustive(n, k):
    code = CodeParams(n, k)
    for bits in itertools.product((False, True), repeat=n + k):
        out = decode_block(bits, code)
        if sum(bits) >= n:
            assert out.all()
        else:
            assert out.tolist() == list(bits[:n])


def test_config_validation():
    with pytest.raises(ValueError):
        SimConfig(CodeParams(5, 2), LossModel(0.1), 0)
    with pytest.raises(ValueError):
        SimConfig(CodeParams(5, 2), LossModel(0.1), 10, seed=-1)
    with pytest.raises(ValueError):
        SimConfig(CodeParams(5, 2), LossModel(0.1), 10, seed=2**64)


def test_same_seed_same_result():
    cfg = SimConfig(CodeParams(5, 2), LossModel(0.12), 50_000, seed=7)
    a, b = simulate_stream(cfg), simulate_stream(cfg)
    assert a == b
    other = simulate_stream(SimConfig(CodeParams(5, 2), LossModel(0.12), 50_000, seed=8))
    assert other.packets_unrecovered != a.packets_unrecovered or other.run_length_histogram != a.run_length_histogram


def test_lossless_channel_has_no_runs():
    res = simulate_stream(SimConfig(CodeParams(5, 2), LossModel(0.0), 1000))
    assert res.packets_unrecovered == 0
    assert res.stats.burst_ratio is None
    assert res.run_length_histogram == {}


@given(arrays(bool, st.tuples(st.integers(1, 40), st.integers(1, 6))))
@settings(max_examples=200, deadline=None)
def test_run_statistics_against_plain_loop(mask):
    flat = mask.ravel().tolist()
    lengths, cur = [], 0
    for bit in flat:
        if bit:
            cur += 1
        elif cur:
            lengths.append(cur)
            cur = 0
    if cur:
        lengths.append(cur)
    assert run_lengths(mask).tolist() == lengths
    est = estimate(mask)
    assert est.unrecovered == sum(flat)
    assert est.runs == count_runs(flat) == len(lengths)
    if lengths:
        assert est.pooled_mean == pytest.approx(sum(lengths) / len(lengths))


def test_runs_merge_across_block_boundaries():
    # block 0 ends lossy, block 1 starts lossy: one run of length 3
    mask = np.array([[0, 0, 0, 1, 1], [1, 0, 0, 0, 0], [0, 0, 0, 0, 0]], dtype=bool)
    assert run_histogram(mask) == {3: 1}
    est = estimate(mask)
    assert est.runs == 1
    assert est.clusters == 1
    assert est.cluster_mean == 3.0


def test_open_cluster_at_end_is_dropped():
    mask = np.array([[1, 0], [0, 0], [1, 1]], dtype=bool)
    est = estimate(mask)
    assert est.clusters == 1
    assert est.cluster_mean == 1.0
    assert est.pooled_mean == 1.5


def test_uncoded_histogram_is_geometric():
    hist = run_length_histogram(SimConfig(CodeParams(1, 0), LossModel(0.5), 400_000, seed=3))
    total = sum(hist.values())
    for length in range(1, 6):
        want = 0.5**length
        got = hist.get(length, 0) / total
        assert got == pytest.approx(want, abs=5 * np.sqrt(want * (1 - want) / total))


def test_coded_histogram_heavier_than_geometric():
    res = simulate_stream(SimConfig(CodeParams(5, 2), LossModel(0.1), 200_000, seed=4))
    hist = res.run_length_histogram
    total = sum(hist.values())
    longer = sum(c for length, c in hist.items() if length >= 2) / total
    # a geometric law with the same residual loss puts mass Ppl on lengths >= 2
    assert longer > 10 * res.stats.ppl_fraction


@pytest.mark.parametrize("n,k,p", [(5, 2, 0.1), (10, 3, 0.15), (3, 0, 0.2)])
def test_simulation_agrees_with_analytics(n, k, p):
    code, loss = CodeParams(n, k), LossModel(p)
    res = simulate_stream(SimConfig(code, loss, 200_000, seed=11))
    est = res.estimates
    for estimator in ("cluster", "pooled"):
        eq = burst_ratio(code, loss, 1e-8, estimator)
        br, se = est.burst_ratio(estimator)
        assert abs(br - eq.burst_ratio) <= 4 * se
    assert abs(est.ppl - burst_ratio(code, loss).ppl_fraction) <= 4 * est.ppl_se


def test_stats_for_selects_estimator():
    res = simulate_stream(SimConfig(CodeParams(5, 2), LossModel(0.1), 20_000))
    assert res.stats_for("pooled").estimator == "pooled"
    assert res.stats_for("cluster").estimator == "cluster"
    assert res.packets_sent == 100_000
