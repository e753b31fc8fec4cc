"""Run the emulated pipeline over real UDP sockets on the loopback interface.

Datagram layout (big-endian)::

    seq:u64 | block_id:u32 | index:u8 | kind:u8 | payload

``kind`` is 0 for source, 1 for repair and 255 for the end-of-stream marker
(no payload).  The sender drops packets through a seeded Bernoulli shim before
they reach the socket.  A receiver thread parses datagrams onto a bounded
queue; malformed or out-of-order datagrams are counted and skipped.  Whatever
arrived is then replayed through the virtual-clock decoder and playout, so
timing figures are comparable with :func:`blockfec.emulator.run_emulation`.
"""

from __future__ import annotations

import logging
import queue
import socket
import struct
import threading
import time
from dataclasses import dataclass

import numpy as np

from .emulator import (
    REPAIR,
    SOURCE,
    BernoulliChannel,
    EmulationConfig,
    EmulationReport,
    Packet,
    Sender,
    _simulate,
)

log = logging.getLogger(__name__)

HEADER = struct.Struct(">QIBB")
KIND_END = 0xFF


class MalformedDatagram(ValueError):
    pass


class UdpTransportError(OSError):
    """Socket-level failure, as opposed to a protocol or decode error."""


@dataclass(frozen=True)
class SocketParams:
    host: str = "127.0.0.1"
    port: int = 0
    idle_timeout_s: float = 2.0
    queue_size: int = 4096
    rcvbuf_bytes: int = 1 << 22
    pace_every: int = 64
    pace_s: float = 0.0005


def encode_datagram(pkt: Packet) -> bytes:
    return HEADER.pack(pkt.seq, pkt.block_id, pkt.index_in_block, pkt.kind) + pkt.payload


def end_marker(seq: int) -> bytes:
    return HEADER.pack(seq, 0, 0, KIND_END)


def decode_datagram(data: bytes, cfg: EmulationConfig) -> Packet | None:
    """Parse one datagram; ``None`` for the end marker."""
    if len(data) < HEADER.size:
        raise MalformedDatagram(f"datagram of {len(data)} bytes is shorter than the header")
    seq, block_id, index, kind = HEADER.unpack_from(data)
    if kind == KIND_END:
        return None
    n, k = cfg.code.n_block, cfg.code.k_redundancy
    if kind not in (SOURCE, REPAIR):
        raise MalformedDatagram(f"unknown kind {kind}")
    if index >= n + k or (kind == SOURCE) != (index < n):
        raise MalformedDatagram(f"index {index} inconsistent with kind {kind}")
    if block_id >= cfg.num_blocks or seq != block_id * (n + k) + index:
        raise MalformedDatagram(f"seq {seq} does not match block {block_id} index {index}")
    payload = data[HEADER.size:]
    if len(payload) != cfg.payload_bytes:
        raise MalformedDatagram(f"payload of {len(payload)} bytes, expected {cfg.payload_bytes}")
    d, last = cfg.interval_us, (block_id * n + n - 1) * cfg.interval_us
    t = (block_id * n + index) * d if kind == SOURCE else last
    return Packet(seq, block_id, index, kind, payload, t)


def _receiver(sock: socket.socket, cfg: EmulationConfig, out: queue.Queue, counters: dict):
    try:
        while True:
            try:
                data, _ = sock.recvfrom(65535)
            except socket.timeout:
                counters["timed_out"] = 1
                break
            counters["datagrams"] += 1
            try:
                pkt = decode_datagram(data, cfg)
            except MalformedDatagram as exc:
                counters["malformed"] += 1
                log.debug("skipping datagram: %s", exc)
                continue
            if pkt is None:
                break
            out.put(pkt)
    except OSError as exc:
        counters["error"] = exc
    finally:
        out.put(None)


def _sender(sock: socket.socket, addr, cfg: EmulationConfig, params: SocketParams, payload_rng, loss_rng, inject, counters: dict):
    try:
        for raw in inject:
            sock.sendto(raw, addr)
        sender = Sender(cfg, payload_rng)
        shim = BernoulliChannel(cfg.loss.p, loss_rng)
        sent = 0
        for b in range(cfg.num_blocks):
            packets = sender.block(b)
            kept = shim.deliver(packets)
            counters["shim_dropped"] += len(packets) - len(kept)
            for pkt in kept:
                sock.sendto(encode_datagram(pkt), addr)
                sent += 1
                if params.pace_every and sent % params.pace_every == 0:
                    time.sleep(params.pace_s)
        counters["sent"] = sent
        for _ in range(3):
            sock.sendto(end_marker(cfg.num_blocks * cfg.code.total), addr)
    except OSError as exc:
        counters["error"] = exc


def udp_loopback_run(cfg: EmulationConfig, params: SocketParams | None = None, inject: list[bytes] = ()) -> EmulationReport:
    """Send the coded stream through a UDP socket pair and emulate the receiver.

    ``inject`` datagrams are sent ahead of the stream (used to exercise the
    malformed-datagram path).  Raises :class:`UdpTransportError` on socket
    failures.
    """
    params = params or SocketParams()
    payload_seq, loss_seq = np.random.SeedSequence(cfg.seed).spawn(2)
    try:
        rx = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        tx = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
    except OSError as exc:
        raise UdpTransportError(f"cannot create UDP sockets: {exc}") from exc
    with rx, tx:
        try:
            rx.setsockopt(socket.SOL_SOCKET, socket.SO_RCVBUF, params.rcvbuf_bytes)
            rx.bind((params.host, params.port))
            rx.settimeout(params.idle_timeout_s)
            addr = rx.getsockname()
        except OSError as exc:
            raise UdpTransportError(f"cannot bind receiver on {params.host}:{params.port}: {exc}") from exc

        rx_counts = {"datagrams": 0, "malformed": 0, "timed_out": 0}
        tx_counts = {"shim_dropped": 0, "sent": 0}
        q: queue.Queue = queue.Queue(maxsize=params.queue_size)
        receiver = threading.Thread(target=_receiver, args=(rx, cfg, q, rx_counts), daemon=True)
        sender = threading.Thread(
            target=_sender,
            args=(tx, addr, cfg, params, np.random.Generator(np.random.PCG64(payload_seq)),
                  np.random.Generator(np.random.PCG64(loss_seq)), list(inject), tx_counts),
            daemon=True,
        )
        receiver.start()
        sender.start()

        arrived: dict[int, list[Packet]] = {}
        last_seq = -1
        reordered = 0
        while True:
            pkt = q.get()
            if pkt is None:
                break
            if pkt.seq <= last_seq:
                reordered += 1
                continue
            last_seq = pkt.seq
            arrived.setdefault(pkt.block_id, []).append(pkt)
        sender.join()
        receiver.join()

    for counts in (tx_counts, rx_counts):
        if "error" in counts:
            raise UdpTransportError(f"socket failure during run: {counts['error']}") from counts["error"]

    received = sum(len(v) for v in arrived.values())
    extras = {
        "transport": "udp",
        "datagrams_received": rx_counts["datagrams"],
        "malformed": rx_counts["malformed"],
        "reordered": reordered,
        "shim_dropped": tx_counts["shim_dropped"],
        "transport_lost": tx_counts["sent"] - received,
    }
    replay_rng = np.random.Generator(np.random.PCG64(payload_seq))
    return _simulate(cfg, lambda packets: arrived.get(packets[0].block_id, []), replay_rng, extras)
