import itertools
import random
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from blockfec import gf256
from blockfec.analytics import CodeParams
from blockfec.rs import CodecError, generator_matrix, rs_decode_block, rs_encode_block


def slow_mul(a, b):
    """Shift-and-add product modulo 0x11D, independent of the lookup tables."""
    out = 0
    while b:
        if b & 1:
            out ^= a
        a <<= 1
        if a & 0x100:
            a ^= 0x11D
        b >>= 1
    return out


def test_multiplication_table_matches_shift_and_add():
    for a in range(256):
        for b in range(0, 256, 7):
            assert gf256.mul(a, b) == slow_mul(a, b)


def test_inverses():
    for a in range(1, 256):
        assert gf256.mul(a, gf256.inv(a)) == 1
    with pytest.raises(ZeroDivisionError):
        gf256.inv(0)


@given(st.integers(1, 8), st.data())
@settings(max_examples=50, deadline=None)
def test_matinv_roundtrip(n, data):
    m = np.array(data.draw(st.lists(st.integers(0, 255), min_size=n * n, max_size=n * n)), dtype=np.uint8).reshape(n, n)
    try:
        inv = gf256.matinv(m)
    except ValueError:
        return
    assert (gf256.matmul(m, inv) == np.eye(n, dtype=np.uint8)).all()


def test_singular_matrix_rejected():
    with pytest.raises(ValueError):
        gf256.matinv(np.array([[1, 2], [1, 2]], dtype=np.uint8))


@pytest.mark.parametrize("n,k", [(1, 1), (5, 2), (10, 3), (20, 5)])
def test_generator_is_systematic(n, k):
    g = generator_matrix(n, k)
    assert g.shape == (n + k, n)
    assert (g[:n] == np.eye(n, dtype=np.uint8)).all()


def _payloads(rng, n, size):
    return [bytes(rng.getrandbits(8) for _ in range(size)) for _ in range(n)]


@pytest.mark.parametrize("n,k", [(1, 0), (1, 3), (3, 2), (5, 2), (4, 4)])
def test_every_erasure_pattern(n, k):
    rng = random.Random(n * 100 + k)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        code = CodeParams(n, k)
    src = _payloads(rng, n, 24)
    coded = rs_encode_block(src, code)
    assert coded[:n] == src
    for lost in range(k + 1):
        for gone in itertools.combinations(range(n + k), lost):
            kept = [(i, coded[i]) for i in range(n + k) if i not in gone]
            assert rs_decode_block(kept, code) == src


def test_too_many_losses_returns_what_arrived():
    code = CodeParams(5, 2)
    src = _payloads(random.Random(1), 5, 8)
    coded = rs_encode_block(src, code)
    kept = [(i, coded[i]) for i in (1, 3, 5, 6)]
    assert rs_decode_block(kept, code) == [None, src[1], None, src[3], None]


def test_randomised_large_code():
    code = CodeParams(20, 5)
    rng = random.Random(5)
    for _ in range(200):
        src = _payloads(rng, 20, rng.choice((1, 16, 160)))
        coded = rs_encode_block(src, code)
        keep = sorted(rng.sample(range(25), 20 + rng.randint(0, 5)))
        rng.shuffle(keep)
        assert rs_decode_block([(i, coded[i]) for i in keep], code) == src


def test_codec_errors():
    code = CodeParams(3, 1)
    with pytest.raises(CodecError):
        rs_encode_block([b"a", b"b"], code)
    with pytest.raises(CodecError):
        rs_encode_block([b"a", b"bb", b"c"], code)
    with pytest.raises(CodecError):
        rs_decode_block([(4, b"x")], code)
    with pytest.raises(CodecError):
        rs_decode_block([(0, b"x"), (0, b"x")], code)
    with pytest.raises(CodecError):
        rs_decode_block([(0, b"x"), (1, b"yy")], code)
    with pytest.raises(CodecError):
        rs_encode_block([b"a"] * 250, CodeParams(250, 10))


def test_empty_payloads():
    code = CodeParams(3, 2)
    coded = rs_encode_block([b"", b"", b""], code)
    assert rs_decode_block([(3, coded[3]), (4, coded[4]), (0, b"")], code) == [b"", b"", b""]
