"""Packet-level discrete-event emulation of sender -> lossy channel -> decoder -> playout.

Timing model (virtual clock in integer microseconds):

* source packet ``i`` of block ``b`` is sent at ``(b*N + i) * d``; the K repair
  packets follow the last source packet of the block at the same instant;
* the channel drops packets independently and delivers survivors instantly
  and in order;
* the decoder buffers a single block.  A source packet is passed on at once
  unless an earlier packet of its block is missing; then it is held until the
  block becomes decodable (N packets in hand) or the block's last repair slot
  has passed, at which point whatever arrived is released;
* playout slot of voice packet ``v = b*N + i`` is ``(v + N - 1) * d``: the
  buffer prefills N-1 packet intervals, then reads one packet per interval and
  stays silent for one interval per unrecovered packet.

A packet released after its slot would be an underrun; it is counted and
treated as lost.
"""

from __future__ import annotations

import csv
import heapq
import itertools
from collections.abc import Callable, Iterable
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .analytics import CodeParams, LossModel
from .rs import rs_decode_block, rs_encode_block
from .runs import RunEstimates, estimate

SOURCE = 0
REPAIR = 1
KIND_NAMES = {SOURCE: "source", REPAIR: "repair"}

# same-instant ordering: arrivals, then block deadlines, then playout
_ARRIVAL, _DEADLINE, _PLAYOUT = 0, 1, 2

TRACE_COLUMNS = (
    "seq", "block_id", "kind", "sent_ms", "received_flag", "recovered_flag", "decoder_delay_ms", "playout_ms",
)


class Packet(NamedTuple):
    seq: int
    block_id: int
    index_in_block: int
    kind: int
    payload: bytes
    send_time_us: int

    @property
    def send_time_ms(self) -> float:
        return self.send_time_us / 1000.0


@dataclass(frozen=True)
class EmulationConfig:
    code: CodeParams
    loss: LossModel
    packet_interval_ms: float = 20.0
    payload_bytes: int = 160
    num_blocks: int = 1000
    seed: int = 0

    def __post_init__(self):
        if not self.packet_interval_ms > 0:
            raise ValueError(f"packet interval must be positive, got {self.packet_interval_ms}")
        if int(self.payload_bytes) != self.payload_bytes or self.payload_bytes < 1:
            raise ValueError(f"payload_bytes must be a positive integer, got {self.payload_bytes}")
        if int(self.num_blocks) != self.num_blocks or self.num_blocks < 1:
            raise ValueError(f"num_blocks must be a positive integer, got {self.num_blocks}")
        if int(self.seed) != self.seed or not 0 <= self.seed < 2**64:
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {self.seed}")

    @property
    def interval_us(self) -> int:
        return int(round(self.packet_interval_ms * 1000))


@dataclass
class EmulationReport:
    """Per-source-packet records plus aggregates.

    Arrays are indexed by voice sequence ``b*N + i``.  Delays are -1 for
    packets that were never released / never played.
    """

    config: EmulationConfig
    sent_us: np.ndarray
    received: np.ndarray
    recovered: np.ndarray
    decoder_delay_us: np.ndarray
    playout_us: np.ndarray
    repair_received: np.ndarray
    estimates: RunEstimates
    underruns: int = 0
    payload_mismatches: int = 0
    extras: dict = field(default_factory=dict)

    @property
    def ppl(self) -> float:
        return self.estimates.ppl

    @property
    def burst_ratio(self) -> float | None:
        return self.estimates.pooled_burst_ratio

    @property
    def max_decoder_delay_ms(self) -> float:
        delays = self.decoder_delay_us[self.decoder_delay_us >= 0]
        return float(delays.max()) / 1000.0 if delays.size else 0.0

    @property
    def end_to_end_added_delay_ms(self) -> float:
        played = self.playout_us >= 0
        if not played.any():
            return 0.0
        return float((self.playout_us[played] - self.sent_us[played]).max()) / 1000.0

    @property
    def delay_budget_ms(self) -> float:
        return 2.0 * self.config.code.n_block * self.config.packet_interval_ms

    def summary(self) -> dict:
        est = self.estimates
        return {
            "n": self.config.code.n_block,
            "k": self.config.code.k_redundancy,
            "p": self.config.loss.p,
            "blocks": self.config.num_blocks,
            "ppl_percent": 100.0 * est.ppl,
            "ppl_percent_se": 100.0 * est.ppl_se,
            "burst_ratio": est.pooled_burst_ratio,
            "burst_ratio_se": est.pooled_burst_ratio_se,
            "cluster_burst_ratio": est.cluster_burst_ratio,
            "cluster_burst_ratio_se": est.cluster_burst_ratio_se,
            "max_decoder_delay_ms": self.max_decoder_delay_ms,
            "end_to_end_added_delay_ms": self.end_to_end_added_delay_ms,
            "delay_budget_ms": self.delay_budget_ms,
            "underruns": self.underruns,
            "payload_mismatches": self.payload_mismatches,
            **self.extras,
        }


class Sender:
    """Produces the coded packets of each block with seeded random payloads."""

    def __init__(self, cfg: EmulationConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.rng = rng
        self._seq = itertools.count()

    def block(self, b: int) -> list[Packet]:
        cfg = self.cfg
        n, k, d = cfg.code.n_block, cfg.code.k_redundancy, cfg.interval_us
        raw = self.rng.integers(0, 256, size=(n, cfg.payload_bytes), dtype=np.uint8)
        coded = rs_encode_block([row.tobytes() for row in raw], cfg.code)
        last = (b * n + n - 1) * d
        out = []
        for idx, payload in enumerate(coded):
            kind = SOURCE if idx < n else REPAIR
            t = (b * n + idx) * d if kind == SOURCE else last
            out.append(Packet(next(self._seq), b, idx, kind, payload, t))
        return out


class BernoulliChannel:
    def __init__(self, p: float, rng: np.random.Generator):
        self.p = p
        self.rng = rng

    def deliver(self, packets: list[Packet]) -> list[Packet]:
        keep = self.rng.random(len(packets)) >= self.p
        return [pkt for pkt, ok in zip(packets, keep) if ok]


class ScriptedChannel:
    """Drops exactly the listed ``(block_id, index_in_block)`` pairs."""

    def __init__(self, lost: Iterable[tuple[int, int]]):
        self.lost = set(lost)

    def deliver(self, packets: list[Packet]) -> list[Packet]:
        return [pkt for pkt in packets if (pkt.block_id, pkt.index_in_block) not in self.lost]


class ReorderError(ValueError):
    """Raised when the channel hands the decoder packets out of order."""


class _BlockState:
    __slots__ = ("got", "next_release", "done")

    def __init__(self):
        self.got: dict[int, bytes] = {}
        self.next_release = 0
        self.done = False


class SingleBlockDecoder:
    """Silent-receiver erasure decoder holding at most one block.

    ``on_release(voice_seq, payload, now_us, recovered)`` is called for every
    source packet handed to playout, in order; ``on_lost(voice_seq)`` for
    packets given up on.
    """

    def __init__(self, code: CodeParams, on_release: Callable, on_lost: Callable):
        self.code = code
        self.on_release = on_release
        self.on_lost = on_lost
        self.blocks: dict[int, _BlockState] = {}
        self._last_seq = -1

    def arrive(self, pkt: Packet, now_us: int):
        if pkt.seq <= self._last_seq:
            raise ReorderError(f"packet {pkt.seq} arrived after {self._last_seq}")
        self._last_seq = pkt.seq
        st = self.blocks.get(pkt.block_id)
        if st is None:
            st = self.blocks[pkt.block_id] = _BlockState()
        if st.done:
            return
        st.got[pkt.index_in_block] = pkt.payload
        n = self.code.n_block
        base = pkt.block_id * n
        # pass through while no gap has opened in this block
        if pkt.kind == SOURCE and pkt.index_in_block == st.next_release:
            self.on_release(base + st.next_release, pkt.payload, now_us, False)
            st.next_release += 1
        if st.next_release == n:
            self._finish(pkt.block_id)
        elif len(st.got) >= n:
            self._decode(pkt.block_id, now_us)

    def _decode(self, block_id: int, now_us: int):
        st = self.blocks[block_id]
        n = self.code.n_block
        sources = rs_decode_block(st.got.items(), self.code)
        base = block_id * n
        for i in range(st.next_release, n):
            self.on_release(base + i, sources[i], now_us, i not in st.got)
        st.next_release = n
        self._finish(block_id)

    def deadline(self, block_id: int, now_us: int):
        """The block's last repair slot has passed: release what arrived, give up on the rest."""
        st = self.blocks.get(block_id)
        if st is None:
            st = self.blocks[block_id] = _BlockState()
        if st.done:
            return
        n = self.code.n_block
        base = block_id * n
        for i in range(st.next_release, n):
            if i in st.got:
                self.on_release(base + i, st.got[i], now_us, False)
            else:
                self.on_lost(base + i)
        st.next_release = n
        self._finish(block_id)

    def _finish(self, block_id: int):
        self.blocks[block_id].done = True
        self.blocks[block_id].got.clear()
        # single-block buffer: anything older is gone
        for old in [b for b in self.blocks if b < block_id]:
            del self.blocks[old]


class _Clock:
    def __init__(self):
        self._heap = []
        self._tie = itertools.count()
        self.now = 0

    def at(self, t: int, order: int, fn: Callable, *args):
        heapq.heappush(self._heap, (t, order, next(self._tie), fn, args))

    def run(self):
        heap = self._heap
        while heap:
            t, _, _, fn, args = heapq.heappop(heap)
            self.now = t
            fn(*args)


def _simulate(cfg: EmulationConfig, deliver: Callable[[list[Packet]], list[Packet]], payload_rng: np.random.Generator, extras: dict | None = None) -> EmulationReport:
    code = cfg.code
    n, k, d = code.n_block, code.k_redundancy, cfg.interval_us
    total = cfg.num_blocks * n

    voice = np.arange(total, dtype=np.int64)
    sent_us = voice * d
    received = np.zeros(total, dtype=bool)
    recovered = np.zeros(total, dtype=bool)
    released_at = np.full(total, -1, dtype=np.int64)
    playout_us = np.full(total, -1, dtype=np.int64)
    repair_received = np.zeros((cfg.num_blocks, k), dtype=bool)
    given_up = np.zeros(total, dtype=bool)
    counters = {"underruns": 0, "mismatches": 0}

    sender = Sender(cfg, payload_rng)
    originals: dict[int, list[bytes]] = {}
    clock = _Clock()

    def on_release(v: int, payload, now: int, was_recovered: bool):
        released_at[v] = now
        recovered[v] = was_recovered
        b, i = divmod(v, n)
        if payload != originals[b][i]:
            counters["mismatches"] += 1

    def on_lost(v: int):
        given_up[v] = True

    decoder = SingleBlockDecoder(code, on_release, on_lost)

    def arrival(pkt: Packet):
        if pkt.kind == SOURCE:
            received[pkt.block_id * n + pkt.index_in_block] = True
        else:
            repair_received[pkt.block_id, pkt.index_in_block - n] = True
        decoder.arrive(pkt, clock.now)

    def block_deadline(b: int):
        decoder.deadline(b, clock.now)
        originals.pop(b, None)

    def playout(v: int):
        if released_at[v] >= 0:
            playout_us[v] = clock.now
        elif not given_up[v]:
            counters["underruns"] += 1

    def start_block(b: int):
        packets = sender.block(b)
        originals[b] = [p.payload for p in packets[:n]]
        for pkt in deliver(packets):
            clock.at(pkt.send_time_us, _ARRIVAL, arrival, pkt)
        clock.at((b * n + n - 1) * d, _DEADLINE, block_deadline, b)
        for i in range(n):
            v = b * n + i
            clock.at((v + n - 1) * d, _PLAYOUT, playout, v)
        if b + 1 < cfg.num_blocks:
            clock.at((b + 1) * n * d, -1, start_block, b + 1)

    clock.at(0, -1, start_block, 0)
    clock.run()

    lost_mask = (playout_us < 0).reshape(cfg.num_blocks, n)
    decoder_delay = np.where(released_at >= 0, released_at - sent_us, -1)
    return EmulationReport(
        config=cfg,
        sent_us=sent_us,
        received=received,
        recovered=recovered,
        decoder_delay_us=decoder_delay,
        playout_us=playout_us,
        repair_received=repair_received,
        estimates=estimate(lost_mask),
        underruns=counters["underruns"],
        payload_mismatches=counters["mismatches"],
        extras=dict(extras or {}),
    )


def _rngs(seed: int) -> tuple[np.random.Generator, np.random.Generator]:
    payload_seq, loss_seq = np.random.SeedSequence(seed).spawn(2)
    return np.random.Generator(np.random.PCG64(payload_seq)), np.random.Generator(np.random.PCG64(loss_seq))


def run_emulation(cfg: EmulationConfig, channel=None) -> EmulationReport:
    """Run the full pipeline on a virtual clock.

    ``channel`` defaults to a Bernoulli channel with ``cfg.loss.p``; any object
    with ``deliver(packets) -> packets`` may be supplied instead.
    """
    payload_rng, loss_rng = _rngs(cfg.seed)
    if channel is None:
        channel = BernoulliChannel(cfg.loss.p, loss_rng)
    return _simulate(cfg, channel.deliver, payload_rng)


def trace_rows(report: EmulationReport):
    """Per-packet trace rows (source and repair), in send order."""
    cfg = report.config
    n, k = cfg.code.n_block, cfg.code.k_redundancy
    seq = 0
    for b in range(cfg.num_blocks):
        last_ms = report.sent_us[b * n + n - 1] / 1000.0
        for i in range(n):
            v = b * n + i
            delay = report.decoder_delay_us[v]
            play = report.playout_us[v]
            yield {
                "seq": seq,
                "block_id": b,
                "kind": "source",
                "sent_ms": report.sent_us[v] / 1000.0,
                "received_flag": int(report.received[v]),
                "recovered_flag": int(play >= 0),
                "decoder_delay_ms": delay / 1000.0 if delay >= 0 else "",
                "playout_ms": play / 1000.0 if play >= 0 else "",
            }
            seq += 1
        for r in range(k):
            yield {
                "seq": seq,
                "block_id": b,
                "kind": "repair",
                "sent_ms": last_ms,
                "received_flag": int(report.repair_received[b, r]),
                "recovered_flag": "",
                "decoder_delay_ms": "",
                "playout_ms": "",
            }
            seq += 1


def write_trace_csv(report: EmulationReport, path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=TRACE_COLUMNS)
        writer.writeheader()
        writer.writerows(trace_rows(report))
    return path


def worst_case_delays(code: CodeParams, interval_ms: float) -> dict[str, float]:
    """Analytic delay figures for single-block decoding with an N-1 interval playout prefill."""
    n = code.n_block
    return {
        "max_decoder_delay_ms": (n - 1) * interval_ms,
        "min_total_delay_ms": 2 * (n - 1) * interval_ms,
        "budget_ms": 2 * n * interval_ms,
        "prefill_ms": (n - 1) * interval_ms,
    }
