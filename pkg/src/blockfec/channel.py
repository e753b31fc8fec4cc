"""Monte Carlo simulation of an erasure-coded Bernoulli channel at the loss-pattern level.

Random numbers come from numpy's PCG64 bit generator seeded through
``SeedSequence(seed)``; blocks are drawn in row-major order, so results are
identical whatever the chunk size.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .analytics import CodeParams, LossModel, ResidualLossStats
from .runs import RunEstimates, estimate, run_histogram

CHUNK_BLOCKS = 1 << 16


@dataclass(frozen=True)
class SimConfig:
    code: CodeParams
    loss: LossModel
    num_blocks: int
    seed: int = 0

    def __post_init__(self):
        if int(self.num_blocks) != self.num_blocks or self.num_blocks < 1:
            raise ValueError(f"num_blocks must be a positive integer, got {self.num_blocks!r}")
        if int(self.seed) != self.seed or not 0 <= self.seed < 2**64:
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {self.seed!r}")


@dataclass(frozen=True)
class SimResult:
    """Estimates from one simulated stream.

    ``stats`` uses the pooled run-length mean (what a capture would show),
    ``cluster_stats`` the per-cluster mean.  In both, the
    ``truncation_error_bound`` slot carries the standard error of BurstR.
    """

    config: SimConfig
    stats: ResidualLossStats
    cluster_stats: ResidualLossStats
    packets_sent: int
    packets_unrecovered: int
    run_length_histogram: dict[int, int]
    confidence: dict[str, float] = field(default_factory=dict)
    estimates: RunEstimates | None = None

    def stats_for(self, estimator: str) -> ResidualLossStats:
        return self.stats if estimator == "pooled" else self.cluster_stats


def decode_blocks(received: np.ndarray, n_block: int) -> np.ndarray:
    """Vectorised all-or-nothing decode: rows of received flags -> rows of recovered flags."""
    received = np.asarray(received, dtype=bool)
    if received.ndim != 2 or received.shape[1] < n_block:
        raise ValueError(f"expected (blocks, >= {n_block}) received flags, got shape {received.shape}")
    complete = received.sum(axis=1) >= n_block
    return received[:, :n_block] | complete[:, None]


def decode_block(received_mask, code: CodeParams) -> np.ndarray:
    """Recovered flags for the N source positions of one block.

    ``received_mask`` has N+K entries: source positions first, then repair.
    """
    mask = np.asarray(received_mask, dtype=bool)
    if mask.ndim != 1 or mask.size != code.total:
        raise ValueError(f"received mask must have length {code.total}, got {mask.shape}")
    return decode_blocks(mask[None, :], code.n_block)[0]


def _unrecovered_mask(cfg: SimConfig) -> np.ndarray:
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(cfg.seed)))
    n, width = cfg.code.n_block, cfg.code.total
    out = np.empty((cfg.num_blocks, n), dtype=bool)
    for lo in range(0, cfg.num_blocks, CHUNK_BLOCKS):
        hi = min(lo + CHUNK_BLOCKS, cfg.num_blocks)
        received = rng.random((hi - lo, width)) >= cfg.loss.p
        out[lo:hi] = ~decode_blocks(received, n)
    return out


def _stats(est: RunEstimates, estimator: str) -> ResidualLossStats:
    mean, _ = est.mean(estimator)
    br, br_se = est.burst_ratio(estimator)
    return ResidualLossStats(est.ppl, mean, br, br_se if br is not None else 0.0, estimator)


def simulate_stream(cfg: SimConfig) -> SimResult:
    mask = _unrecovered_mask(cfg)
    est = estimate(mask)
    confidence = {
        "ppl": est.ppl_se,
        "pooled_run_length": est.pooled_mean_se,
        "pooled_burst_ratio": est.pooled_burst_ratio_se,
        "cluster_run_length": est.cluster_mean_se,
        "cluster_burst_ratio": est.cluster_burst_ratio_se,
    }
    return SimResult(
        config=cfg,
        stats=_stats(est, "pooled"),
        cluster_stats=_stats(est, "cluster"),
        packets_sent=cfg.num_blocks * cfg.code.n_block,
        packets_unrecovered=est.unrecovered,
        run_length_histogram=run_histogram(mask),
        confidence=confidence,
        estimates=est,
    )


def run_length_histogram(cfg: SimConfig) -> dict[int, int]:
    """Histogram of maximal unrecovered-run lengths over the simulated stream."""
    return run_histogram(_unrecovered_mask(cfg))
