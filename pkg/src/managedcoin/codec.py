"""Wire format: mode-tagged nValue fields, transactions and blocks.

Integers are little-endian, list counts and script lengths use Bitcoin's
compact-size varint.  Bit 1 of an nValue is its most significant bit.
"""

from __future__ import annotations

import enum
import io
import struct
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Union

from . import errors
from .hashing import merkle_root as _merkle_root
from .hashing import sha256d

TX_VERSION = 1944
NULL_HASH = bytes(32)
COINBASE_INDEX = 0xFFFFFFFF
PUBKEY_SIZE = 33
OP_CHECKSIG = 0xAC
HEADER_SIZE = 108

MAX_AMOUNT = (1 << 63) - 1
MAX_PTYPE = (1 << 27) - 1
U32 = 0xFFFFFFFF
U64 = (1 << 64) - 1


class Role(enum.IntFlag):
    """Role flags; the integer value is the 5-bit M,C,L,U,A group of a role-change nValue."""

    A = 1
    U = 2
    L = 4
    C = 8
    M = 16


NO_ROLES = Role(0)
ALL_ROLES = Role.M | Role.C | Role.L | Role.U | Role.A
ROLE_ORDER = (Role.M, Role.C, Role.L, Role.U, Role.A)


def role_letters(roles: Role) -> str:
    return "".join(r.name for r in ROLE_ORDER if r & roles)


def parse_roles(letters: str) -> Role:
    roles = NO_ROLES
    for ch in letters.upper():
        try:
            roles |= Role[ch]
        except KeyError:
            raise ValueError(f"unknown role letter {ch!r}") from None
    return roles


@dataclass(frozen=True)
class CoinTransfer:
    amount: int


@dataclass(frozen=True)
class RoleChange:
    add: bool
    roles: Role


@dataclass(frozen=True)
class PolicyChange:
    permanent: bool
    ptype: int
    param: int


NValueMode = Union[CoinTransfer, RoleChange, PolicyChange]

_ROLE_RESERVED = (1 << 56) - 1
_POLICY_RESERVED = 0b11 << 59


def encode_nvalue(mode: NValueMode) -> int:
    if isinstance(mode, CoinTransfer):
        if not 0 <= mode.amount <= MAX_AMOUNT:
            raise errors.AmountOverflow(f"amount {mode.amount} does not fit in 63 bits")
        return mode.amount
    if isinstance(mode, RoleChange):
        roles = int(mode.roles)
        if roles & ~int(ALL_ROLES):
            raise ValueError(f"not a role set: {roles}")
        if not roles:
            raise errors.EmptyRoleSet("role change names no roles")
        return (0b10 << 62) | (int(bool(mode.add)) << 61) | (roles << 56)
    if isinstance(mode, PolicyChange):
        if not 0 <= mode.ptype <= MAX_PTYPE:
            raise errors.TypeOverflow(f"policy type {mode.ptype} does not fit in 27 bits")
        if not 0 <= mode.param <= U32:
            raise ValueError(f"policy parameter {mode.param} does not fit in 32 bits")
        return (0b11 << 62) | (int(bool(mode.permanent)) << 61) | (mode.ptype << 32) | mode.param
    raise TypeError(f"not an nValue mode: {mode!r}")


def decode_nvalue(value: int) -> NValueMode:
    if not 0 <= value <= U64:
        raise ValueError("nValue must be a 64-bit unsigned integer")
    if not value >> 63:
        return CoinTransfer(value)
    add = bool((value >> 61) & 1)
    if (value >> 62) == 0b10:
        if value & _ROLE_RESERVED:
            raise errors.NonzeroReservedBits(f"role change {value:#018x} sets bits 9-64")
        roles = (value >> 56) & 0x1F
        if not roles:
            raise errors.EmptyRoleSet(f"role change {value:#018x} names no roles")
        return RoleChange(add, Role(roles))
    if value & _POLICY_RESERVED:
        raise errors.NonzeroReservedBits(f"policy change {value:#018x} sets bits 4-5")
    return PolicyChange(add, (value >> 32) & MAX_PTYPE, value & U32)


# -- varints and readers -----------------------------------------------------


def ser_varint(n: int) -> bytes:
    if n < 0xFD:
        return bytes((n,))
    if n <= 0xFFFF:
        return b"\xfd" + struct.pack("<H", n)
    if n <= U32:
        return b"\xfe" + struct.pack("<I", n)
    return b"\xff" + struct.pack("<Q", n)


def ser_bytes(b: bytes) -> bytes:
    return ser_varint(len(b)) + b


class _Reader:
    def __init__(self, data: bytes):
        self.buf = io.BytesIO(data)
        self.size = len(data)

    def remaining(self) -> int:
        return self.size - self.buf.tell()

    def read(self, n: int) -> bytes:
        b = self.buf.read(n)
        if len(b) != n:
            raise errors.Truncated(f"wanted {n} bytes, got {len(b)}")
        return b

    def u32(self) -> int:
        return struct.unpack("<I", self.read(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self.read(8))[0]

    def varint(self) -> int:
        first = self.read(1)[0]
        if first < 0xFD:
            return first
        if first == 0xFD:
            n, floor = struct.unpack("<H", self.read(2))[0], 0xFD
        elif first == 0xFE:
            n, floor = struct.unpack("<I", self.read(4))[0], 0x10000
        else:
            n, floor = struct.unpack("<Q", self.read(8))[0], 0x100000000
        if n < floor:
            raise errors.NonCanonicalVarInt(f"varint {n} not minimally encoded")
        return n

    def count(self, min_item_size: int) -> int:
        n = self.varint()
        if n * min_item_size > self.remaining():
            raise errors.VarIntOverflow(f"count {n} exceeds remaining {self.remaining()} bytes")
        return n

    def var_bytes(self) -> bytes:
        return self.read(self.count(1))


# -- transactions ------------------------------------------------------------


def p2pk_script(pubkey: bytes) -> bytes:
    return bytes((PUBKEY_SIZE,)) + pubkey + bytes((OP_CHECKSIG,))


def parse_p2pk(script: bytes) -> bytes:
    if len(script) != PUBKEY_SIZE + 2 or script[0] != PUBKEY_SIZE or script[-1] != OP_CHECKSIG:
        raise errors.NotP2PK(f"script {script.hex()} is not pay-to-pubkey")
    return script[1:-1]


def make_script_sig(signature: bytes, pubkey: bytes) -> bytes:
    """Two single-byte-length pushes: signature, then public key."""
    if len(signature) > 75 or len(pubkey) > 75:
        raise ValueError("push too long")
    return bytes((len(signature),)) + signature + bytes((len(pubkey),)) + pubkey


def parse_script_sig(script: bytes) -> tuple[bytes, bytes]:
    try:
        n = script[0]
        sig = script[1 : 1 + n]
        m = script[1 + n]
        pub = script[2 + n : 2 + n + m]
    except IndexError:
        raise errors.BadScriptSig("truncated scriptSig") from None
    if len(sig) != n or len(pub) != m or 2 + n + m != len(script):
        raise errors.BadScriptSig("malformed scriptSig")
    return sig, pub


@dataclass(frozen=True)
class TxIn:
    prev_hash: bytes
    prev_index: int
    script_sig: bytes = b""
    sequence: int = U32

    @property
    def outpoint(self) -> tuple[bytes, int]:
        return (self.prev_hash, self.prev_index)

    @property
    def is_null(self) -> bool:
        return self.prev_hash == NULL_HASH and self.prev_index == COINBASE_INDEX


@dataclass(frozen=True)
class TxOut:
    n_value: int
    pubkey: bytes

    @property
    def mode(self) -> NValueMode:
        return decode_nvalue(self.n_value)

    @classmethod
    def coin(cls, amount: int, pubkey: bytes) -> TxOut:
        return cls(encode_nvalue(CoinTransfer(amount)), pubkey)

    @classmethod
    def role(cls, add: bool, roles: Role, pubkey: bytes) -> TxOut:
        return cls(encode_nvalue(RoleChange(add, roles)), pubkey)

    @classmethod
    def policy(cls, ptype: int, param: int, pubkey: bytes, permanent: bool = False) -> TxOut:
        return cls(encode_nvalue(PolicyChange(permanent, ptype, param)), pubkey)


@dataclass(frozen=True)
class Transaction:
    vin: tuple[TxIn, ...]
    vout: tuple[TxOut, ...]
    locktime: int = 0
    version: int = field(default=TX_VERSION)

    def __post_init__(self):
        object.__setattr__(self, "vin", tuple(self.vin))
        object.__setattr__(self, "vout", tuple(self.vout))

    @cached_property
    def raw(self) -> bytes:
        return serialize_tx(self)

    @cached_property
    def txid(self) -> bytes:
        return sha256d(self.raw)

    @cached_property
    def digest(self) -> bytes:
        return tx_digest(self)

    @property
    def is_coinbase(self) -> bool:
        return bool(self.vin) and self.vin[0].is_null

    def with_script_sigs(self, scripts) -> Transaction:
        vin = tuple(replace(i, script_sig=s) for i, s in zip(self.vin, scripts, strict=True))
        return replace(self, vin=vin)


def _write_tx(tx: Transaction, out: list, blank_scripts: bool = False) -> None:
    if tx.version != TX_VERSION:
        raise errors.BadVersion(f"transaction version {tx.version} (must be {TX_VERSION})")
    out.append(struct.pack("<I", tx.version))
    out.append(ser_varint(len(tx.vin)))
    for i in tx.vin:
        if len(i.prev_hash) != 32:
            raise ValueError("prev_hash must be 32 bytes")
        out.append(i.prev_hash)
        out.append(struct.pack("<I", i.prev_index))
        out.append(ser_bytes(b"" if blank_scripts else i.script_sig))
        out.append(struct.pack("<I", i.sequence))
    out.append(ser_varint(len(tx.vout)))
    for o in tx.vout:
        if len(o.pubkey) != PUBKEY_SIZE:
            raise errors.NotP2PK(f"public key must be {PUBKEY_SIZE} bytes")
        out.append(struct.pack("<Q", o.n_value))
        out.append(ser_bytes(p2pk_script(o.pubkey)))
    out.append(struct.pack("<I", tx.locktime))


def serialize_tx(tx: Transaction) -> bytes:
    out: list = []
    _write_tx(tx, out)
    return b"".join(out)


def _read_tx(r: _Reader) -> Transaction:
    version = r.u32()
    if version != TX_VERSION:
        raise errors.BadVersion(f"transaction version {version} (must be {TX_VERSION})")
    vin = []
    for _ in range(r.count(41)):
        prev_hash = r.read(32)
        prev_index = r.u32()
        script = r.var_bytes()
        vin.append(TxIn(prev_hash, prev_index, script, r.u32()))
    vout = []
    for _ in range(r.count(9)):
        value = r.u64()
        vout.append(TxOut(value, parse_p2pk(r.var_bytes())))
    return Transaction(tuple(vin), tuple(vout), r.u32(), version)


def deserialize_tx(data: bytes) -> Transaction:
    r = _Reader(bytes(data))
    tx = _read_tx(r)
    if r.remaining():
        raise errors.TrailingBytes(f"{r.remaining()} bytes after transaction")
    return tx


def tx_digest(tx: Transaction) -> bytes:
    """Signing digest: double SHA-256 of the transaction with every scriptSig emptied."""
    out: list = []
    _write_tx(tx, out, blank_scripts=True)
    return sha256d(b"".join(out))


def merkle_root(tx_hashes) -> bytes:
    hashes = list(tx_hashes)
    if not hashes:
        raise errors.EmptyList("merkle root of no transactions")
    return _merkle_root(hashes)


# -- blocks ------------------------------------------------------------------


@dataclass(frozen=True)
class BlockHeader:
    prev_hash: bytes
    merkle_root: bytes
    timestamp: int
    target: bytes
    nonce: int = 0

    def serialize(self) -> bytes:
        return (
            self.prev_hash
            + self.merkle_root
            + struct.pack("<I", self.timestamp)
            + self.target
            + struct.pack("<Q", self.nonce)
        )

    @classmethod
    def deserialize(cls, data: bytes) -> BlockHeader:
        if len(data) < HEADER_SIZE:
            raise errors.Truncated("block header shorter than 108 bytes")
        return cls(
            data[:32],
            data[32:64],
            struct.unpack("<I", data[64:68])[0],
            data[68:100],
            struct.unpack("<Q", data[100:108])[0],
        )

    @cached_property
    def hash(self) -> bytes:
        return sha256d(self.serialize())

    def pow_ok(self) -> bool:
        return self.hash <= self.target


@dataclass(frozen=True)
class Block:
    header: BlockHeader
    txs: tuple[Transaction, ...]

    def __post_init__(self):
        object.__setattr__(self, "txs", tuple(self.txs))

    @property
    def hash(self) -> bytes:
        return self.header.hash

    def computed_merkle_root(self) -> bytes:
        return merkle_root(tx.txid for tx in self.txs)


def serialize_block(block: Block) -> bytes:
    parts = [block.header.serialize(), ser_varint(len(block.txs))]
    parts.extend(tx.raw for tx in block.txs)
    return b"".join(parts)


def deserialize_block(data: bytes) -> Block:
    data = bytes(data)
    header = BlockHeader.deserialize(data)
    r = _Reader(data)
    r.read(HEADER_SIZE)
    txs = tuple(_read_tx(r) for _ in range(r.count(10)))
    if r.remaining():
        raise errors.TrailingBytes(f"{r.remaining()} bytes after block")
    return Block(header, txs)


def target_from_int(value: int) -> bytes:
    return value.to_bytes(32, "big")


def block_work(target: bytes) -> int:
    return (1 << 256) // (int.from_bytes(target, "big") + 1)
