# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hashing kernels: double SHA-256, merkle root and nonce scanning.

The nonce scanner hashes the constant first 64 header bytes once (midstate)
and only recompresses the final block per nonce.
"""
from libc.stdint cimport uint8_t, uint32_t, uint64_t
from libc.string cimport memcpy, memset, memcmp

cdef enum:
    HEADER_SIZE = 108
    NONCE_OFFSET = 100

cdef uint32_t K[64]
K[:] = [
    0x428a2f98, 0x71374491, 0xb5c0fbcf, 0xe9b5dba5, 0x3956c25b, 0x59f111f1, 0x923f82a4, 0xab1c5ed5,
    0xd807aa98, 0x12835b01, 0x243185be, 0x550c7dc3, 0x72be5d74, 0x80deb1fe, 0x9bdc06a7, 0xc19bf174,
    0xe49b69c1, 0xefbe4786, 0x0fc19dc6, 0x240ca1cc, 0x2de92c6f, 0x4a7484aa, 0x5cb0a9dc, 0x76f988da,
    0x983e5152, 0xa831c66d, 0xb00327c8, 0xbf597fc7, 0xc6e00bf3, 0xd5a79147, 0x06ca6351, 0x14292967,
    0x27b70a85, 0x2e1b2138, 0x4d2c6dfc, 0x53380d13, 0x650a7354, 0x766a0abb, 0x81c2c92e, 0x92722c85,
    0xa2bfe8a1, 0xa81a664b, 0xc24b8b70, 0xc76c51a3, 0xd192e819, 0xd6990624, 0xf40e3585, 0x106aa070,
    0x19a4c116, 0x1e376c08, 0x2748774c, 0x34b0bcb5, 0x391c0cb3, 0x4ed8aa4a, 0x5b9cca4f, 0x682e6ff3,
    0x748f82ee, 0x78a5636f, 0x84c87814, 0x8cc70208, 0x90befffa, 0xa4506ceb, 0xbef9a3f7, 0xc67178f2,
]

cdef uint32_t H0[8]
H0[:] = [0x6a09e667, 0xbb67ae85, 0x3c6ef372, 0xa54ff53a, 0x510e527f, 0x9b05688c, 0x1f83d9ab, 0x5be0cd19]


cdef inline uint32_t rotr(uint32_t x, int n) noexcept nogil:
    return (x >> n) | (x << (32 - n))


cdef void compress(uint32_t* st, const uint8_t* blk) noexcept nogil:
    cdef uint32_t w[64]
    cdef uint32_t a, b, c, d, e, f, g, h, t1, t2, s0, s1
    cdef int i
    for i in range(16):
        w[i] = ((<uint32_t>blk[4 * i] << 24) | (<uint32_t>blk[4 * i + 1] << 16)
                | (<uint32_t>blk[4 * i + 2] << 8) | <uint32_t>blk[4 * i + 3])
    for i in range(16, 64):
        s0 = rotr(w[i - 15], 7) ^ rotr(w[i - 15], 18) ^ (w[i - 15] >> 3)
        s1 = rotr(w[i - 2], 17) ^ rotr(w[i - 2], 19) ^ (w[i - 2] >> 10)
        w[i] = w[i - 16] + s0 + w[i - 7] + s1
    a = st[0]; b = st[1]; c = st[2]; d = st[3]
    e = st[4]; f = st[5]; g = st[6]; h = st[7]
    for i in range(64):
        s1 = rotr(e, 6) ^ rotr(e, 11) ^ rotr(e, 25)
        t1 = h + s1 + ((e & f) ^ ((~e) & g)) + K[i] + w[i]
        s0 = rotr(a, 2) ^ rotr(a, 13) ^ rotr(a, 22)
        t2 = s0 + ((a & b) ^ (a & c) ^ (b & c))
        h = g; g = f; f = e; e = d + t1
        d = c; c = b; b = a; a = t1 + t2
    st[0] += a; st[1] += b; st[2] += c; st[3] += d
    st[4] += e; st[5] += f; st[6] += g; st[7] += h


cdef inline void store_state(const uint32_t* st, uint8_t* out) noexcept nogil:
    cdef int i
    for i in range(8):
        out[4 * i] = (st[i] >> 24) & 0xff
        out[4 * i + 1] = (st[i] >> 16) & 0xff
        out[4 * i + 2] = (st[i] >> 8) & 0xff
        out[4 * i + 3] = st[i] & 0xff


cdef void sha256_tail(uint32_t* st, const uint8_t* data, size_t n, uint64_t total) noexcept nogil:
    # data holds the n < 64 trailing bytes of a message of `total` bytes
    cdef uint8_t buf[128]
    cdef size_t padded
    cdef uint64_t bits = total * 8
    cdef int i
    memset(buf, 0, 128)
    memcpy(buf, data, n)
    buf[n] = 0x80
    padded = 64 if n < 56 else 128
    for i in range(8):
        buf[padded - 1 - i] = (bits >> (8 * i)) & 0xff
    compress(st, buf)
    if padded == 128:
        compress(st, buf + 64)


cdef void sha256_raw(const uint8_t* data, size_t n, uint8_t* out) noexcept nogil:
    cdef uint32_t st[8]
    cdef size_t off = 0
    memcpy(st, H0, sizeof(st))
    while n - off >= 64:
        compress(st, data + off)
        off += 64
    sha256_tail(st, data + off, n - off, n)
    store_state(st, out)


cdef inline void sha256d_raw(const uint8_t* data, size_t n, uint8_t* out) noexcept nogil:
    cdef uint8_t first[32]
    sha256_raw(data, n, first)
    sha256_raw(first, 32, out)


def sha256d(const uint8_t[::1] data not None):
    cdef uint8_t out[32]
    with nogil:
        sha256d_raw(&data[0] if data.shape[0] else <const uint8_t*>out, data.shape[0], out)
    return bytes(out[:32])


def merkle_root(hashes):
    """Bitcoin-style merkle root; odd layers duplicate their last element."""
    cdef Py_ssize_t n = len(hashes)
    cdef Py_ssize_t i, m
    cdef bytearray layer
    cdef uint8_t pair[64]
    cdef uint8_t* p
    if n == 0:
        raise ValueError("merkle_root of an empty list")
    for h in hashes:
        if len(h) != 32:
            raise ValueError("merkle leaves must be 32 bytes")
    layer = bytearray(b"".join(hashes))
    p = layer
    while n > 1:
        m = (n + 1) // 2
        for i in range(m):
            memcpy(pair, p + 64 * i, 32)
            if 2 * i + 1 < n:
                memcpy(pair + 32, p + 64 * i + 32, 32)
            else:
                memcpy(pair + 32, p + 64 * i, 32)
            sha256d_raw(pair, 64, p + 32 * i)
        n = m
    return bytes(layer[:32])


def scan_nonce(const uint8_t[::1] header not None, const uint8_t[::1] target not None,
               uint64_t start, uint64_t count):
    """First nonce in [start, start + count) whose header hash is <= target, else -1."""
    cdef uint32_t mid[8]
    cdef uint32_t st[8]
    cdef uint8_t tail[44]
    cdef uint8_t first[32]
    cdef uint8_t digest[32]
    cdef uint64_t nonce, end = start + count
    cdef int i
    cdef long long found = -1
    if header.shape[0] != HEADER_SIZE or target.shape[0] != 32:
        raise ValueError("header must be 108 bytes and target 32 bytes")
    if end < start:
        end = 0xFFFFFFFFFFFFFFFF
    with nogil:
        memcpy(mid, H0, sizeof(mid))
        compress(mid, &header[0])
        memcpy(tail, &header[64], 44)
        nonce = start
        while nonce < end:
            for i in range(8):
                tail[NONCE_OFFSET - 64 + i] = (nonce >> (8 * i)) & 0xff
            memcpy(st, mid, sizeof(st))
            sha256_tail(st, tail, 44, HEADER_SIZE)
            store_state(st, first)
            sha256_raw(first, 32, digest)
            if memcmp(digest, &target[0], 32) <= 0:
                found = <long long>nonce
                break
            nonce += 1
    return found
