"""Run-length statistics of a decoded packet stream.

Both simulators reduce their output to a ``(blocks, N)`` boolean array of
unrecovered flags and hand it to :func:`estimate`.  Two mean run lengths are
measured, matching the two analytic estimators in :mod:`blockfec.analytics`:

``pooled``
    total unrecovered packets divided by total runs, runs merged across block
    boundaries.  Standard error by batch means over contiguous batches.
``cluster``
    the average, over clusters of consecutive lossy blocks, of the mean run
    length inside each cluster.  Clusters are i.i.d., so the standard error is
    the sample standard deviation over ``sqrt(#clusters)``.  A cluster still
    open at the end of the stream is discarded.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

DEFAULT_BATCHES = 100


def run_lengths(flat) -> np.ndarray:
    """Lengths of the maximal runs of ``True`` in a 1-D array, in stream order."""
    flat = np.asarray(flat, dtype=bool).ravel()
    if flat.size == 0:
        return np.zeros(0, dtype=np.int64)
    padded = np.concatenate(([False], flat, [False])).astype(np.int8)
    edges = np.diff(padded)
    starts = np.flatnonzero(edges == 1)
    ends = np.flatnonzero(edges == -1)
    return (ends - starts).astype(np.int64)


def run_histogram(flat) -> dict[int, int]:
    lengths = run_lengths(flat)
    if lengths.size == 0:
        return {}
    values, counts = np.unique(lengths, return_counts=True)
    return {int(v): int(c) for v, c in zip(values, counts)}


@dataclass(frozen=True)
class RunEstimates:
    blocks: int
    n_block: int
    unrecovered: int
    runs: int
    clusters: int
    ppl: float
    ppl_se: float
    pooled_mean: float | None
    pooled_mean_se: float
    pooled_burst_ratio: float | None
    pooled_burst_ratio_se: float
    cluster_mean: float | None
    cluster_mean_se: float
    cluster_burst_ratio: float | None
    cluster_burst_ratio_se: float

    def mean(self, estimator: str) -> tuple[float | None, float]:
        if estimator == "pooled":
            return self.pooled_mean, self.pooled_mean_se
        return self.cluster_mean, self.cluster_mean_se

    def burst_ratio(self, estimator: str) -> tuple[float | None, float]:
        if estimator == "pooled":
            return self.pooled_burst_ratio, self.pooled_burst_ratio_se
        return self.cluster_burst_ratio, self.cluster_burst_ratio_se


def _per_block_run_starts(mask: np.ndarray) -> np.ndarray:
    """Runs beginning in each block; a run spilling over a boundary counts once, where it starts."""
    flat = mask.ravel()
    prev = np.concatenate(([False], flat[:-1]))
    starts = flat & ~prev
    return starts.reshape(mask.shape).sum(axis=1)


def _batch_se(values: np.ndarray) -> float:
    if values.size < 2:
        return math.inf
    return float(values.std(ddof=1) / math.sqrt(values.size))


def estimate(mask, batches: int = DEFAULT_BATCHES) -> RunEstimates:
    """Estimate residual loss and both run-length means from unrecovered flags."""
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim != 2 or mask.shape[0] == 0:
        raise ValueError("mask must be a non-empty (blocks, N) array")
    blocks, n = mask.shape
    per_block = mask.sum(axis=1)
    starts = _per_block_run_starts(mask)
    unrecovered = int(per_block.sum())
    runs = int(starts.sum())

    ppl = unrecovered / (blocks * n)
    ppl_se = float(per_block.std(ddof=1) / math.sqrt(blocks) / n) if blocks > 1 else math.inf

    if runs == 0:
        return RunEstimates(blocks, n, 0, 0, 0, ppl, ppl_se, None, 0.0, None, 0.0, None, 0.0, None, 0.0)

    pooled = unrecovered / runs
    nb = max(1, min(batches, blocks))
    bounds = np.linspace(0, blocks, nb + 1).astype(np.int64)
    b_unrec = np.add.reduceat(per_block, bounds[:-1])
    b_runs = np.add.reduceat(starts, bounds[:-1])
    b_size = np.diff(bounds) * n
    ok = b_runs > 0
    b_mean = b_unrec[ok] / b_runs[ok]
    b_br = b_mean * (1.0 - b_unrec[ok] / b_size[ok])
    pooled_se = _batch_se(b_mean)
    pooled_br_se = _batch_se(b_br)

    lossy = per_block > 0
    opens = lossy & ~np.concatenate(([False], lossy[:-1]))
    cluster_id = np.cumsum(opens) - 1
    n_clusters = int(opens.sum())
    c_unrec = np.bincount(cluster_id[lossy], weights=per_block[lossy], minlength=n_clusters)
    c_runs = np.bincount(cluster_id[lossy], weights=starts[lossy], minlength=n_clusters)
    if lossy[-1]:
        c_unrec, c_runs = c_unrec[:-1], c_runs[:-1]
    ratios = c_unrec / c_runs if c_runs.size else np.zeros(0)
    if ratios.size:
        cluster = float(ratios.mean())
        cluster_se = _batch_se(ratios)
        cluster_br = cluster * (1.0 - ppl)
        cluster_br_se = math.hypot((1.0 - ppl) * cluster_se, cluster * ppl_se)
    else:
        cluster, cluster_se, cluster_br, cluster_br_se = None, math.inf, None, math.inf

    return RunEstimates(
        blocks, n, unrecovered, runs, int(ratios.size), ppl, ppl_se,
        pooled, pooled_se, pooled * (1.0 - ppl), pooled_br_se,
        cluster, cluster_se, cluster_br, cluster_br_se,
    )
