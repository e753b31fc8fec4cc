"""Systematic Reed-Solomon erasure codec over GF(256).

The generator is an (N+K) x N Vandermonde matrix on the points 0..N+K-1,
right-multiplied by the inverse of its top N x N block so the first N rows
form the identity.  Any N rows of a Vandermonde matrix on distinct points are
invertible, and that survives the change of basis, so any N of the N+K
coded packets recover the block.
"""

from __future__ import annotations

from collections.abc import Iterable, Sequence
from functools import lru_cache

import numpy as np

from . import gf256
from .analytics import CodeParams

MAX_CODE_LENGTH = 255


class CodecError(ValueError):
    """Malformed codec input (lengths, indices, sizes)."""


def _check_code(code: CodeParams):
    if code.total > MAX_CODE_LENGTH:
        raise CodecError(f"N+K={code.total} exceeds the GF(256) limit of {MAX_CODE_LENGTH}")


@lru_cache(maxsize=128)
def generator_matrix(n: int, k: int) -> np.ndarray:
    vander = np.array([[gf256.power(x, c) for c in range(n)] for x in range(n + k)], dtype=np.uint8)
    g = gf256.matmul(vander, gf256.matinv(vander[:n]))
    g.setflags(write=False)
    return g


@lru_cache(maxsize=4096)
def _recovery_matrix(n: int, k: int, rows: tuple[int, ...]) -> np.ndarray:
    m = gf256.matinv(generator_matrix(n, k)[list(rows)])
    m.setflags(write=False)
    return m


def _as_matrix(payloads: Sequence[bytes]) -> np.ndarray:
    lengths = {len(p) for p in payloads}
    if len(lengths) > 1:
        raise CodecError(f"payloads must share one length, got {sorted(lengths)}")
    size = lengths.pop() if lengths else 0
    return np.frombuffer(b"".join(payloads), dtype=np.uint8).reshape(len(payloads), size)


def rs_encode_block(payloads: Sequence[bytes], code: CodeParams) -> list[bytes]:
    """Return the N source payloads followed by K parity payloads."""
    _check_code(code)
    if len(payloads) != code.n_block:
        raise CodecError(f"expected {code.n_block} payloads, got {len(payloads)}")
    data = _as_matrix([bytes(p) for p in payloads])
    out = [bytes(p) for p in payloads]
    if code.k_redundancy:
        parity = gf256.matmul(generator_matrix(code.n_block, code.k_redundancy)[code.n_block:], data)
        out.extend(row.tobytes() for row in parity)
    return out


def rs_decode_block(received: Iterable[tuple[int, bytes]], code: CodeParams) -> list[bytes | None]:
    """Recover source payloads from ``(index, payload)`` pairs.

    With at least N distinct packets every source payload comes back;
    otherwise the missing sources are ``None``.
    """
    _check_code(code)
    n, k = code.n_block, code.k_redundancy
    got: dict[int, bytes] = {}
    for index, payload in received:
        if not 0 <= index < n + k:
            raise CodecError(f"packet index {index} outside 0..{n + k - 1}")
        if index in got:
            raise CodecError(f"duplicate packet index {index}")
        got[index] = bytes(payload)
    if len({len(p) for p in got.values()}) > 1:
        raise CodecError("received payloads differ in length")

    out: list[bytes | None] = [got.get(i) for i in range(n)]
    missing = [i for i in range(n) if out[i] is None]
    if not missing or len(got) < n:
        return out
    rows = tuple(sorted(got)[:n])
    data = _as_matrix([got[r] for r in rows])
    recovered = gf256.matmul(_recovery_matrix(n, k, rows)[missing], data)
    for i, row in zip(missing, recovered):
        out[i] = row.tobytes()
    return out
