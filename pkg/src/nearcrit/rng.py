"""Counter-based uniforms keyed on ``(seed, stream, tile)``.

Philox4x32-10 (Salmon et al. 2011). One block yields four 32-bit words, so
tile ``t`` reads word ``t % 4`` of the block with counter
``(t // 4, replicate, stream_lo, stream_hi)``. No state is carried between
calls; the uniform of a tile never depends on evaluation order.
"""

import numba as nb
import numpy as np

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = np.uint32(0x9E3779B9)
_W1 = np.uint32(0xBB67AE85)
_MASK = np.uint64(0xFFFFFFFF)
_INV32 = 1.0 / 4294967296.0


@nb.njit(cache=True, nogil=True)
def philox4x32(c0, c1, c2, c3, k0, k1):
    """Ten-round Philox4x32 block; all arguments are treated as uint32."""
    x0 = np.uint64(c0) & _MASK
    x1 = np.uint64(c1) & _MASK
    x2 = np.uint64(c2) & _MASK
    x3 = np.uint64(c3) & _MASK
    key0 = np.uint64(k0) & _MASK
    key1 = np.uint64(k1) & _MASK
    w0 = np.uint64(_W0)
    w1 = np.uint64(_W1)
    for _ in range(10):
        p0 = _M0 * x0
        p1 = _M1 * x2
        hi0 = p0 >> np.uint64(32)
        lo0 = p0 & _MASK
        hi1 = p1 >> np.uint64(32)
        lo1 = p1 & _MASK
        x0 = (hi1 ^ x1 ^ key0) & _MASK
        x1 = lo1
        x2 = (hi0 ^ x3 ^ key1) & _MASK
        x3 = lo0
        key0 = (key0 + w0) & _MASK
        key1 = (key1 + w1) & _MASK
    return x0, x1, x2, x3


@nb.njit(cache=True, nogil=True)
def tile_uniform(seed, stream, replicate, tile):
    """Uniform in [0, 1) for one tile of one replicate."""
    s = np.uint64(seed)
    st = np.uint64(stream)
    blk = np.uint64(tile) >> np.uint64(2)
    x0, x1, x2, x3 = philox4x32(
        blk & _MASK,
        np.uint64(replicate) & _MASK,
        st & _MASK,
        st >> np.uint64(32),
        s & _MASK,
        s >> np.uint64(32),
    )
    w = np.uint64(tile) & np.uint64(3)
    if w == 0:
        v = x0
    elif w == 1:
        v = x1
    elif w == 2:
        v = x2
    else:
        v = x3
    return float(v) * _INV32


@nb.njit(cache=True, nogil=True)
def fill_uniforms(seed, stream, replicate, tiles, out):
    n = tiles.shape[0]
    for i in range(n):
        out[i] = tile_uniform(seed, stream, replicate, tiles[i])


def uniforms(seed, stream, replicate, tiles):
    """Vector of uniforms for ``tiles`` (any integer array) in one replicate."""
    tiles = np.ascontiguousarray(tiles, dtype=np.int64)
    out = np.empty(tiles.shape[0], dtype=np.float64)
    fill_uniforms(int(seed), int(stream), int(replicate), tiles, out)
    return out
