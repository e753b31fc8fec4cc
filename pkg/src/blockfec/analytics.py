"""Residual loss statistics of an (N+K, K) block erasure code on a Bernoulli channel.

A block carries N source packets and K repair packets.  If at least N of the
N+K packets arrive, every source packet is recovered; otherwise only the
source packets that arrived are.  Everything here is a pure function of
``CodeParams`` and ``LossModel``.

Two notions of mean run length are provided:

* ``"cluster"``: the expectation, over maximal clusters of consecutive lossy
  blocks, of the mean unrecovered-run length inside the cluster.  This is the
  quantity behind the reference burst-ratio figures (1.4 to 1.5).
* ``"pooled"``: the long-run average length of all unrecovered runs in the
  stream (total unrecovered packets / total runs).  This is what a packet
  capture measures directly.

Both collapse to ``1/(1-p)`` for ``N == 1, K == 0``; they differ slightly for
other block structures.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)

ESTIMATORS = ("cluster", "pooled")
MAX_ENUMERATE_N = 16
MAX_TERMS = 20000
SLOW_CONVERGENCE_TERMS = 50


@dataclass(frozen=True)
class CodeParams:
    """Block size ``n_block`` (N) and redundancy ``k_redundancy`` (K)."""

    n_block: int
    k_redundancy: int

    def __post_init__(self):
        if isinstance(self.n_block, bool) or int(self.n_block) != self.n_block or self.n_block < 1:
            raise ValueError(f"n_block must be a positive integer, got {self.n_block!r}")
        if isinstance(self.k_redundancy, bool) or int(self.k_redundancy) != self.k_redundancy or self.k_redundancy < 0:
            raise ValueError(f"k_redundancy must be a non-negative integer, got {self.k_redundancy!r}")
        object.__setattr__(self, "n_block", int(self.n_block))
        object.__setattr__(self, "k_redundancy", int(self.k_redundancy))
        if self.k_redundancy >= self.n_block and self.n_block > 1:
            warnings.warn(
                f"K={self.k_redundancy} >= N={self.n_block}: repetition would be cheaper",
                stacklevel=3,
            )

    @property
    def total(self) -> int:
        return self.n_block + self.k_redundancy


@dataclass(frozen=True)
class LossModel:
    """Independent per-packet network loss with probability ``p``."""

    p: float

    def __post_init__(self):
        p = float(self.p)
        if not (0.0 <= p < 1.0) or math.isnan(p):
            raise ValueError(f"loss probability must lie in [0, 1), got {self.p!r}")
        object.__setattr__(self, "p", p)


@dataclass(frozen=True)
class BlockLossPmf:
    """``q[i]`` is the probability that a block ends with ``i`` unrecovered packets."""

    q: tuple[float, ...]

    @property
    def n_block(self) -> int:
        return len(self.q) - 1

    def mean(self) -> float:
        return sum(i * qi for i, qi in enumerate(self.q))

    def __getitem__(self, i: int) -> float:
        return self.q[i]

    def __len__(self) -> int:
        return len(self.q)


@dataclass(frozen=True)
class LossVector:
    """Run structure of one decoded block.

    ``s``/``e`` are 1 when the first/last packet is recovered, ``runs`` lists
    the lengths of the maximal unrecovered runs in order.
    """

    s: int
    runs: tuple[int, ...]
    e: int

    def __post_init__(self):
        object.__setattr__(self, "runs", tuple(int(a) for a in self.runs))

    @classmethod
    def from_tuple(cls, values) -> "LossVector":
        """Build from the flat ``(s, a1, ..., aj, e)`` notation; ``(1, 1)`` is lossless."""
        values = tuple(values)
        if len(values) < 2:
            raise ValueError("a loss vector has at least two entries")
        return cls(values[0], values[1:-1], values[-1])

    @classmethod
    def from_pattern(cls, unrecovered) -> "LossVector":
        """Loss vector of a block given per-position unrecovered flags."""
        flags = [bool(u) for u in unrecovered]
        if not flags:
            raise ValueError("empty pattern")
        runs = []
        length = 0
        for lost in flags:
            if lost:
                length += 1
            elif length:
                runs.append(length)
                length = 0
        if length:
            runs.append(length)
        return cls(0 if flags[0] else 1, tuple(runs), 0 if flags[-1] else 1)

    def as_tuple(self) -> tuple[int, ...]:
        return (self.s, *self.runs, self.e)

    @property
    def unrecovered(self) -> int:
        return sum(self.runs)

    @property
    def j(self) -> int:
        return len(self.runs)

    def is_valid(self, n_block: int) -> bool:
        if self.s not in (0, 1) or self.e not in (0, 1):
            return False
        if not self.runs:
            return self.s == 1 and self.e == 1
        if any(a < 1 for a in self.runs):
            return False
        gaps = (self.j - 1) + self.s + self.e
        if gaps == 0:
            return self.unrecovered == n_block
        return self.unrecovered + gaps <= n_block


@dataclass(frozen=True)
class ResidualLossStats:
    """Loss statistics after decoding.

    ``expected_run_length`` and ``burst_ratio`` are ``None`` when nothing is
    ever lost (rendered ``-`` in tables).  ``truncation_error_bound`` bounds
    the absolute error of ``burst_ratio`` from truncating an infinite series;
    it is 0 for closed forms and holds a standard error for estimates.
    """

    ppl_fraction: float
    expected_run_length: float | None
    burst_ratio: float | None
    truncation_error_bound: float = 0.0
    estimator: str = "cluster"
    terms: int = 0

    @property
    def ppl_percent(self) -> float:
        return 100.0 * self.ppl_fraction

    def burst_ratio_or_one(self) -> float:
        """BurstR to feed the E-model: an undefined ratio counts as Bernoulli."""
        return 1.0 if self.burst_ratio is None else self.burst_ratio


def _binom(n: int, k: int) -> int:
    if k < 0 or k > n or n < 0:
        return 0
    return math.comb(n, k)


def block_unrecovered_pmf(code: CodeParams, loss: LossModel) -> BlockLossPmf:
    """Distribution of unrecovered source packets per block.

    Zero unrecovered when at most K of the N+K packets are lost.  With
    ``0 < i <= K`` the block needs ``i`` voice losses and fewer than ``i``
    surviving repair packets; beyond K any voice loss pattern is final.
    """
    n, k, p = code.n_block, code.k_redundancy, loss.p
    r = 1.0 - p
    q = [0.0] * (n + 1)
    q[0] = sum(_binom(n + k, i) * p**i * r ** (n + k - i) for i in range(k + 1))
    for i in range(1, n + 1):
        voice = _binom(n, i) * p**i * r ** (n - i)
        if i <= k:
            voice *= sum(_binom(k, j) * r**j * p ** (k - j) for j in range(i))
        q[i] = voice
    return BlockLossPmf(tuple(q))


def residual_loss(code: CodeParams, loss: LossModel) -> float:
    """Fraction of source packets left unrecovered after decoding.

    Equal to ``sum(i * Q(i)) / N``, computed per packet instead: a source
    packet stays lost iff it is lost and at least K of the other N+K-1 are
    too.  With K=0 that tail is the whole distribution, so Ppl is p exactly.
    """
    n, k, p = code.n_block, code.k_redundancy, loss.p
    if k == 0:
        return p
    others = n + k - 1
    tail = math.fsum(_binom(others, j) * p**j * (1.0 - p) ** (others - j) for j in range(k, others + 1))
    return p * tail


def loss_vector_multiplicity(n_block: int, lv: LossVector) -> int:
    """Number of block patterns of length ``n_block`` with loss vector ``lv``."""
    if not lv.is_valid(n_block):
        return 0
    a = lv.unrecovered
    if a == 0:
        return 1
    gaps = lv.j - 1 + lv.s + lv.e  # recovered stretches, each at least 1 long
    free = n_block - a
    if gaps == 0:
        return 1 if free == 0 else 0
    return _binom(free - 1, gaps - 1)


def loss_vector_probability(code: CodeParams, loss: LossModel, lv: LossVector, pmf: BlockLossPmf | None = None) -> float:
    """Probability that a decoded block has loss vector ``lv``; 0 if ``lv`` is impossible."""
    mult = loss_vector_multiplicity(code.n_block, lv)
    if mult == 0:
        return 0.0
    if pmf is None:
        pmf = block_unrecovered_pmf(code, loss)
    a = lv.unrecovered
    return mult * pmf[a] / _binom(code.n_block, a)


def _compositions(total: int, parts: int):
    if parts == 1:
        yield (total,)
        return
    for first in range(1, total - parts + 2):
        for rest in _compositions(total - first, parts - 1):
            yield (first, *rest)


def enumerate_loss_vectors(code: CodeParams, loss: LossModel, max_n: int = MAX_ENUMERATE_N) -> list[tuple[LossVector, float]]:
    """Every loss vector possible for the block size, with its probability."""
    n = code.n_block
    if n > max_n:
        raise ValueError(f"n_block={n} too large to enumerate (limit {max_n})")
    pmf = block_unrecovered_pmf(code, loss)
    out = [(LossVector(1, (), 1), pmf[0])]
    for a in range(1, n + 1):
        for j in range(1, a + 1):
            if a + j - 1 > n:
                break
            for runs in _compositions(a, j):
                for s in (0, 1):
                    for e in (0, 1):
                        lv = LossVector(s, runs, e)
                        if lv.is_valid(n):
                            out.append((lv, loss_vector_probability(code, loss, lv, pmf)))
    return out


@dataclass(frozen=True)
class _RunClass:
    j: int
    s: int
    e: int
    weight: float  # probability of the class
    moment: float  # sum over the class of unrecovered * probability


def _run_classes(code: CodeParams, pmf: BlockLossPmf) -> list[_RunClass]:
    """Lossy blocks grouped by (j, s, e); compositions of A into j runs share one probability."""
    n = code.n_block
    classes = []
    for j in range(1, (n + 1) // 2 + 1):
        for s in (0, 1):
            for e in (0, 1):
                w = m = 0.0
                for a in range(j, n - (j - 1) - s - e + 1):
                    gaps = j - 1 + s + e
                    free = n - a
                    mult = (1 if free == 0 else 0) if gaps == 0 else _binom(free - 1, gaps - 1)
                    if not mult:
                        continue
                    prob = _binom(a - 1, j - 1) * mult * pmf[a] / _binom(n, a)
                    w += prob
                    m += a * prob
                if w > 0.0:
                    classes.append(_RunClass(j, s, e, w, m))
    return classes


def _tail_bound(mean_unrecovered: float, lossy: float, q0: float, terms: int) -> float:
    # each cluster term is at most the cluster's total unrecovered count, whose
    # weighted sum over i lossy blocks is i * mean * lossy**(i-1)
    return mean_unrecovered * lossy ** (terms - 1) * ((terms + 1) * q0 + lossy) / q0


def expected_consecutive_unrecovered(code: CodeParams, loss: LossModel, tolerance: float = 1e-6) -> tuple[float | None, float]:
    """Mean unrecovered-run length per cluster of lossy blocks, and its truncation bound.

    A cluster is a maximal sequence of blocks each holding at least one
    unrecovered packet.  For every cluster length ``i`` the joint law of
    (merged run count, last-block ``e``) is propagated together with the
    first moment of the unrecovered total, so the within-cluster ratio is
    summed exactly without enumerating block sequences.  The outer series is
    cut once the tail bound falls below ``tolerance``.

    Returns ``(None, 0.0)`` when nothing is ever unrecovered.
    """
    value, bound, _ = _cluster_mean(code, loss, tolerance)
    return value, bound


def _cluster_mean(code: CodeParams, loss: LossModel, tolerance: float) -> tuple[float | None, float, int]:
    if not tolerance > 0:
        raise ValueError(f"tolerance must be positive, got {tolerance!r}")
    pmf = block_unrecovered_pmf(code, loss)
    q0 = pmf[0]
    mean_unrecovered = pmf.mean()
    if mean_unrecovered == 0.0:
        return None, 0.0, 0
    lossy = math.fsum(pmf.q[1:])  # 1 - q0 cancels badly when losses are rare

    terms = 1
    while _tail_bound(mean_unrecovered, lossy, q0, terms) >= tolerance:
        terms += 1
        if terms > MAX_TERMS:
            raise ArithmeticError(f"series needs more than {MAX_TERMS} terms for tolerance {tolerance}")
    if terms > SLOW_CONVERGENCE_TERMS:
        log.warning("cluster series for %s p=%g needs %d terms", code, loss.p, terms)

    total, _ = _cluster_series(code, pmf, terms)
    return q0 / lossy * total, _tail_bound(mean_unrecovered, lossy, q0, terms), terms


def _cluster_series(code: CodeParams, pmf: BlockLossPmf, terms: int) -> tuple[float, list[float]]:
    classes = _run_classes(code, pmf)
    max_runs = terms * ((code.n_block + 1) // 2) + 1
    mass = np.zeros((max_runs + 1, 2))
    moment = np.zeros((max_runs + 1, 2))
    for c in classes:
        mass[c.j, c.e] += c.weight
        moment[c.j, c.e] += c.moment
    inv_runs = np.zeros(max_runs + 1)
    inv_runs[1:] = 1.0 / np.arange(1, max_runs + 1)

    parts = []
    for i in range(1, terms + 1):
        parts.append(float(inv_runs @ moment.sum(axis=1)))
        if i == terms:
            break
        new_mass = np.zeros_like(mass)
        new_moment = np.zeros_like(moment)
        for c in classes:
            for prev_e in (0, 1):
                shift = c.j - (1 - prev_e) * (1 - c.s)
                src_m = mass[: max_runs + 1 - shift, prev_e]
                src_t = moment[: max_runs + 1 - shift, prev_e]
                new_mass[shift:, c.e] += c.weight * src_m
                new_moment[shift:, c.e] += c.weight * src_t + c.moment * src_m
        mass, moment = new_mass, new_moment
    return math.fsum(parts), parts


def cluster_series_terms(code: CodeParams, loss: LossModel, terms: int) -> list[float]:
    """Unnormalised per-cluster-length contributions, for inspection and tests."""
    return _cluster_series(code, block_unrecovered_pmf(code, loss), terms)[1]


def pooled_run_length(code: CodeParams, loss: LossModel) -> float | None:
    """Long-run mean length of all unrecovered runs in the decoded stream.

    Blocks are independent, so runs per block average ``E[j]`` minus the
    chance that a run straddles the boundary with the previous block, which
    is ``Ppl**2`` (last packet of one block and first of the next both
    unrecovered).
    """
    pmf = block_unrecovered_pmf(code, loss)
    mean_unrecovered = pmf.mean()
    if mean_unrecovered == 0.0:
        return None
    ppl = mean_unrecovered / code.n_block
    runs_per_block = sum(c.j * c.weight for c in _run_classes(code, pmf)) - ppl * ppl
    return mean_unrecovered / runs_per_block


def burst_ratio(code: CodeParams, loss: LossModel, tolerance: float = 1e-6, estimator: str = "cluster") -> ResidualLossStats:
    """Residual loss, mean run length and burst ratio ``E[C] * (1 - Ppl)``."""
    if estimator not in ESTIMATORS:
        raise ValueError(f"unknown estimator {estimator!r}; choose from {ESTIMATORS}")
    ppl = residual_loss(code, loss)
    if estimator == "pooled":
        mean_run = pooled_run_length(code, loss)
        bound = 0.0
        terms = 0
    else:
        mean_run, bound, terms = _cluster_mean(code, loss, tolerance)
    if mean_run is None:
        return ResidualLossStats(ppl, None, None, 0.0, estimator, 0)
    return ResidualLossStats(ppl, mean_run, mean_run * (1.0 - ppl), bound * (1.0 - ppl), estimator, terms)

