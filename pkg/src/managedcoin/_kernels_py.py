"""Pure-Python hashing kernels, used when the compiled extension is absent."""

import hashlib
import struct

HEADER_SIZE = 108
NONCE_OFFSET = 100


def sha256d(data) -> bytes:
    return hashlib.sha256(hashlib.sha256(data).digest()).digest()


def merkle_root(hashes) -> bytes:
    layer = list(hashes)
    if not layer:
        raise ValueError("merkle_root of an empty list")
    if any(len(h) != 32 for h in layer):
        raise ValueError("merkle leaves must be 32 bytes")
    while len(layer) > 1:
        if len(layer) % 2:
            layer.append(layer[-1])
        layer = [sha256d(layer[i] + layer[i + 1]) for i in range(0, len(layer), 2)]
    return bytes(layer[0])


def scan_nonce(header, target, start: int, count: int) -> int:
    """First nonce in [start, start + count) whose header hash is <= target, else -1."""
    header = bytes(header)
    target = bytes(target)
    if len(header) != HEADER_SIZE or len(target) != 32:
        raise ValueError("header must be 108 bytes and target 32 bytes")
    mid = hashlib.sha256(header[:64])
    prefix = header[64:NONCE_OFFSET]
    pack = struct.Struct("<Q").pack
    sha = hashlib.sha256
    end = min(start + count, 1 << 64)
    for nonce in range(start, end):
        h = mid.copy()
        h.update(prefix + pack(nonce))
        if sha(h.digest()).digest() <= target:
            return nonce
    return -1
