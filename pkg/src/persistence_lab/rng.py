"""Counter-based random streams.

Philox4x64-10 keyed by ``(seed, replica_id)``.  The block function, the
counter increment and the 53-bit double conversion reproduce
``numpy.random.Generator(numpy.random.Philox(key=[seed, replica_id]))``
bit for bit, so any replica can be replayed from plain numpy.

Compiled kernels carry a stream as ``(key0, key1, ctr, buf, pos)``: ``buf`` is a
float64 scratch array refilled by :func:`refill` one Philox block (four
doubles) at a time.
"""
from __future__ import annotations

from dataclasses import dataclass

import numba as nb
import numpy as np
from llvmlite import ir
from numba import types
from numba.extending import intrinsic

BUFFER_SIZE = 256

_M0 = np.uint64(0xD2E7470EE14C6C93)
_M1 = np.uint64(0xCA5A826395121157)
_W0 = np.uint64(0x9E3779B97F4A7C15)
_W1 = np.uint64(0xBB67AE8584CAA73B)
_ONE = np.uint64(1)
_ZERO = np.uint64(0)
_S11 = np.uint64(11)
_TWO53_INV = 1.0 / 9007199254740992.0


@intrinsic
def _mulhi64(typingctx, a, b):
    sig = types.uint64(types.uint64, types.uint64)

    def codegen(context, builder, signature, args):
        i128 = ir.IntType(128)
        p = builder.mul(builder.zext(args[0], i128), builder.zext(args[1], i128))
        return builder.trunc(builder.lshr(p, ir.Constant(i128, 64)), ir.IntType(64))

    return sig, codegen


@nb.njit(nogil=True, cache=True)
def philox_block(c0, c1, c2, c3, k0, k1):
    """Ten Philox4x64 rounds applied to one counter block."""
    for r in range(10):
        if r > 0:
            k0 = k0 + _W0
            k1 = k1 + _W1
        hi0 = _mulhi64(_M0, c0)
        lo0 = _M0 * c0
        hi1 = _mulhi64(_M1, c2)
        lo1 = _M1 * c2
        c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
    return c0, c1, c2, c3


@nb.njit(nogil=True, cache=True)
def refill(k0, k1, ctr, buf):
    """Fill ``buf`` with the next ``buf.size`` uniforms; return the new counter."""
    for j in range(0, buf.size, 4):
        ctr = ctr + _ONE
        b0, b1, b2, b3 = philox_block(ctr, _ZERO, _ZERO, _ZERO, k0, k1)
        buf[j] = np.float64(b0 >> _S11) * _TWO53_INV
        buf[j + 1] = np.float64(b1 >> _S11) * _TWO53_INV
        buf[j + 2] = np.float64(b2 >> _S11) * _TWO53_INV
        buf[j + 3] = np.float64(b3 >> _S11) * _TWO53_INV
    return ctr


@nb.njit(nogil=True, cache=True)
def raw_words(k0, k1, ctr, n):
    """First ``n`` 64-bit outputs after block counter ``ctr`` (testing aid)."""
    out = np.empty(n, dtype=np.uint64)
    i = 0
    while i < n:
        ctr = ctr + _ONE
        b = philox_block(ctr, _ZERO, _ZERO, _ZERO, k0, k1)
        for j in range(4):
            if i < n:
                out[i] = b[j]
                i += 1
    return out


def _u64(x: int) -> np.uint64:
    return np.uint64(int(x) % 2**64)


@dataclass(frozen=True)
class RngStream:
    """One reproducible stream.

    ``counter`` is the Philox block counter the stream starts after; two
    streams agree draw for draw iff all three fields agree.
    """

    seed: int
    replica_id: int = 0
    counter: int = 0

    @property
    def key(self) -> tuple[np.uint64, np.uint64]:
        return _u64(self.seed), _u64(self.replica_id)

    def uniforms(self, n: int) -> np.ndarray:
        k0, k1 = self.key
        nblk = -(-n // 4)
        buf = np.empty(4 * nblk)
        refill(k0, k1, _u64(self.counter), buf)
        return buf[:n]

    def to_numpy(self) -> np.random.Generator:
        """numpy generator producing the same uniforms as this stream."""
        bg = np.random.Philox(
            key=np.array(self.key, dtype=np.uint64),
            counter=np.array([self.counter, 0, 0, 0], dtype=np.uint64),
        )
        return np.random.Generator(bg)

    def spawn(self, replica_id: int) -> "RngStream":
        return RngStream(self.seed, replica_id, 0)
