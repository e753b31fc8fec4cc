"""Acceptance criteria, one test each.

A summary line per criterion (PASS/FAIL plus the measured figures) is printed
at the end of the pytest run.
"""

import contextlib
import itertools
import math
import random
import time
import warnings

import numpy as np
import pytest

from blockfec.analytics import (
    CodeParams,
    LossModel,
    LossVector,
    block_unrecovered_pmf,
    burst_ratio,
    enumerate_loss_vectors,
    loss_vector_probability,
)
from blockfec.channel import SimConfig, simulate_stream
from blockfec.emodel import EModelParams, find_profile, transmission_rating
from blockfec.emulator import EmulationConfig, ScriptedChannel, run_emulation
from blockfec.planner import CodePoint, evaluate, validate_grid
from blockfec.rs import rs_decode_block, rs_encode_block
from oracles import exhaustive_block_pmf, g107_rating

GRID_P = (0.0, 0.05, 0.10, 0.12, 0.15)
# reference Ppl (%) and BurstR per p; '-' where nothing is lost
REFERENCE = {
    (10, 3): ((0.0, "-"), (0.1, 1.4), (1.1, 1.4), (2.0, 1.4), (4.0, 1.4)),
    (5, 2): ((0.0, "-"), (0.2, 1.5), (1.1, 1.5), (1.9, 1.5), (3.4, 1.5)),
}
SIGMA = 4.0


@contextlib.contextmanager
def _quiet():
    # codes with K >= N are enumerated on purpose
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        yield


@pytest.fixture
def detail(record_property):
    def put(text):
        record_property("detail", text)
        print(text)

    return put


@pytest.fixture(scope="module")
def emulated_5_2():
    cfg = EmulationConfig(CodeParams(5, 2), LossModel(0.10), 20.0, 32, 100_000, seed=2024)
    return run_emulation(cfg)


def test_criterion_01_analytic_reference_values(detail):
    start = time.perf_counter()
    bad = []
    for (n, k), rows in REFERENCE.items():
        for p, (ppl_pub, br_pub) in zip(GRID_P, rows):
            stats = burst_ratio(CodeParams(n, k), LossModel(p), 1e-6)
            if round(stats.ppl_percent, 1) != ppl_pub:
                bad.append(f"Ppl({n},{k},{p})={stats.ppl_percent:.3f}")
            if br_pub == "-":
                if stats.burst_ratio is not None:
                    bad.append(f"BurstR({n},{k},{p}) defined")
            elif abs(stats.burst_ratio - br_pub) > 0.1:
                bad.append(f"BurstR({n},{k},{p})={stats.burst_ratio:.4f}")
    elapsed = time.perf_counter() - start
    detail(f"10 cells, {len(bad)} mismatches, {elapsed:.2f}s {bad or ''}")
    assert not bad
    assert elapsed < 10.0


def test_criterion_02_monte_carlo_agreement(detail):
    start = time.perf_counter()
    cells = validate_grid([CodeParams(10, 3), CodeParams(5, 2)], list(GRID_P), 1_000_000, seed=1, sigma=SIGMA)
    elapsed = time.perf_counter() - start
    worst = max(max(c.z_ppl, c.z_br) for c in cells)
    failed = [(c.n, c.k, c.p, c.estimator) for c in cells if not c.passed]
    detail(f"{len(cells)} cells (both estimators), max |z| = {worst:.2f}, {elapsed:.1f}s {failed or ''}")
    assert not failed
    assert elapsed < 120.0


def test_criterion_03_cross_implementation(detail, emulated_5_2):
    cases = [
        (emulated_5_2, CodeParams(5, 2), 0.10),
        (run_emulation(EmulationConfig(CodeParams(10, 3), LossModel(0.12), 20.0, 32, 100_000, seed=2025)),
         CodeParams(10, 3), 0.12),
    ]
    notes, ok = [], True
    for rep, code, p in cases:
        sim = simulate_stream(SimConfig(code, LossModel(p), 1_000_000, seed=77)).estimates
        em = rep.estimates
        z = {"Ppl": abs(em.ppl - sim.ppl) / math.hypot(em.ppl_se, sim.ppl_se)}
        for estimator in ("cluster", "pooled"):
            br_em, se_em = em.burst_ratio(estimator)
            br_sim, se_sim = sim.burst_ratio(estimator)
            z[f"BurstR[{estimator}]"] = abs(br_em - br_sim) / math.hypot(se_em, se_sim)
        ok &= max(z.values()) <= SIGMA and rep.payload_mismatches == 0
        notes.append(f"({code.n_block},{code.k_redundancy},{p:.0%}) " + " ".join(f"z_{k}={v:.2f}" for k, v in z.items()))
    detail("; ".join(notes))
    assert ok


def test_criterion_04_codec_mos_reference(detail):
    start = time.perf_counter()
    rows = [
        ("g729a-vad", "none", 2.8),
        ("g729a-vad", "5:2", 3.6),
        ("g723.1-vad", "none", 2.5),
        ("g723.1-vad", "5:2", 2.7),
    ]
    got = [evaluate(find_profile(c), CodePoint.parse(pt), 0.10).mos for c, pt, _ in rows]
    elapsed = time.perf_counter() - start
    detail("MOS " + ", ".join(f"{g:.3f} (ref {w})" for g, (_, _, w) in zip(got, rows)) + f"; {elapsed * 1000:.0f} ms")
    assert all(abs(g - w) <= 0.1 for g, (_, _, w) in zip(got, rows))
    assert elapsed < 1.0


def test_criterion_05_mos_curve_shape(detail):
    codec = find_profile("g711-plc")

    def mos(point, p):
        return evaluate(codec, CodePoint.parse(point), p).mos

    low = [round(0.001 * i, 3) for i in range(0, 21)]
    mid = [round(0.10 + 0.0025 * i, 4) for i in range(0, 21)]
    high = [round(0.03 + 0.0025 * i, 4) for i in range(0, 49)]
    a = [mos("10:3", p) - mos("none", p) for p in low]
    b = [mos("5:2", p) - mos("none", p) for p in mid]
    c = [mos("5:2", p) - mos("none", p) for p in high]
    detail(f"(a) max diff {max(a):+.3f} for p<=2%; (b) min gain {min(b):.3f} on 10-15%; "
           f"(c) min gain {min(c):+.3f} on 3-15%")
    assert max(a) < 0
    assert min(b) >= 0.5
    assert min(c) >= 0


def test_criterion_06_degeneracy(detail):
    bad, worst = [], 0.0
    for n in (1, 5, 10):
        for p in (0.01, 0.05, 0.20):
            stats = burst_ratio(CodeParams(n, 0), LossModel(p), 1e-4)
            if stats.ppl_percent != 100 * p:
                bad.append(f"Ppl(N={n},p={p})={stats.ppl_percent!r}")
            dev = abs(stats.burst_ratio - 1.0)
            worst = max(worst, dev)
            if dev > 1e-4:
                bad.append(f"BurstR(N={n},p={p})-1={stats.burst_ratio - 1:.2e}")
        zero = burst_ratio(CodeParams(n, 0), LossModel(0.0))
        row = evaluate(find_profile("g711"), CodePoint(CodeParams(n, 0)), 0.0)
        if zero.ppl_fraction != 0.0 or row.display()["BurstR"] != "-":
            bad.append(f"p=0 N={n}")
    detail(f"max |BurstR-1| = {worst:.2e}; failing cells: {bad or 'none'}")
    assert not bad


def test_criterion_07_combinatorial_oracle(detail):
    worst_q = worst_sum = worst_marg = 0.0
    cases = 0
    for total, p in itertools.product(range(1, 15), (0.05, 0.3)):
        for n in range(1, total + 1):
            k = total - n
            with _quiet():
                code = CodeParams(n, k)
            pmf = block_unrecovered_pmf(code, LossModel(p))
            oracle = exhaustive_block_pmf(n, k, p)
            worst_q = max(worst_q, max(abs(a - b) for a, b in zip(pmf.q, oracle)))
            vectors = enumerate_loss_vectors(code, LossModel(p))
            worst_sum = max(worst_sum, abs(math.fsum(pr for _, pr in vectors) - 1.0))
            for a in range(n + 1):
                marg = math.fsum(pr for lv, pr in vectors if lv.unrecovered == a)
                worst_marg = max(worst_marg, abs(marg - pmf[a]))
            cases += 1
    # an impossible vector carries no mass
    assert loss_vector_probability(CodeParams(4, 1), LossModel(0.2), LossVector(0, (2,), 0)) == 0.0
    detail(f"{cases} (code, p) cases with N+K<=14: max |Q-oracle| = {worst_q:.1e}, "
           f"max |sum-1| = {worst_sum:.1e}, max marginal error = {worst_marg:.1e}")
    assert worst_q <= 1e-12
    assert worst_sum <= 1e-10
    assert worst_marg <= 1e-10


def test_criterion_08_delay_invariants(detail, emulated_5_2):
    rep = emulated_5_2
    n, d = 5, 20.0
    first = run_emulation(EmulationConfig(CodeParams(5, 2), LossModel(0.0), d, 32, 3), ScriptedChannel([(1, 0)]))
    delays = first.decoder_delay_us[5:7] / 1000.0
    detail(f"max decoder delay {rep.max_decoder_delay_ms:g} ms, max added delay {rep.end_to_end_added_delay_ms:g} ms, "
           f"first-packet-lost delays {delays.tolist()} ms, underruns {rep.underruns}")
    assert rep.max_decoder_delay_ms <= (n - 1) * d
    assert rep.end_to_end_added_delay_ms <= 2 * n * d
    assert delays.tolist() == [(n - 1) * d, (n - 2) * d]
    assert rep.underruns == 0


def test_criterion_09_rs_codec(detail):
    rng = random.Random(9)
    exhaustive = 0
    for total in range(1, 13):
        for n in range(1, total + 1):
            k = total - n
            with _quiet():
                code = CodeParams(n, k)
            src = [bytes(rng.getrandbits(8) for _ in range(8)) for _ in range(n)]
            coded = rs_encode_block(src, code)
            for lost in range(k + 1):
                for gone in itertools.combinations(range(total), lost):
                    kept = [(i, coded[i]) for i in range(total) if i not in gone]
                    assert rs_decode_block(kept, code) == src, (n, k, gone)
                    exhaustive += 1
    code = CodeParams(20, 5)
    np_rng = np.random.default_rng(9)
    for _ in range(10_000):
        src = [row.tobytes() for row in np_rng.integers(0, 256, (20, 16), dtype=np.uint8)]
        coded = rs_encode_block(src, code)
        keep = np_rng.permutation(25)[: 20 + int(np_rng.integers(0, 6))]
        assert rs_decode_block([(int(i), coded[i]) for i in keep], code) == src
    detail(f"{exhaustive} exhaustive erasure patterns (N+K<=12) and 10000 random (20,5) trials byte-exact")


def test_criterion_10_emodel_fixed_point(detail):
    rep = transmission_rating(EModelParams(), find_profile("g711-plc"), 0.0)
    ref = g107_rating()
    detail(f"R = {rep.r_factor:.4f} (reference {ref['R']:.4f}), MOS = {rep.mos_cq:.4f} (reference {ref['MOS']:.4f})")
    assert 93.1 <= rep.r_factor <= 93.3
    assert 4.36 <= rep.mos_cq <= 4.46
    assert rep.r_factor == pytest.approx(ref["R"], abs=1e-9)
    assert rep.mos_cq == pytest.approx(ref["MOS"], abs=1e-9)
