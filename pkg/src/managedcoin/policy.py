"""Policy records, authority resolution and permanence.

Effective value of a policy type: take the issuer with the smallest
authority key (depth, M-grant height, M-grant intra-block index); among
that issuer's records the latest one wins.  With no record the default
applies (binary types default to enabled).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Optional

from immutables import Map

from . import errors
from .codec import Role

Q32 = 1 << 32
Q32_MAX = Q32 - 1


class PolicyType(enum.IntEnum):
    ENABLE_M = 0
    ENABLE_C = 1
    ENABLE_L = 2
    ENABLE_U = 3
    ENABLE_A = 4
    L_MOVES_COIN = 5
    C_CREATION_LIMIT = 6
    REWARD_MODE = 7
    MANUAL_REWARD = 8
    MIN_REWARD = 9
    DECAY_RATE = 10
    MAX_DECAY_RATE = 11
    MIN_FEE = 12
    QUOTA_PERIOD = 13
    QUOTA_MIN = 14
    NOOP = 15


NUM_TYPES = 16
BINARY_TYPES = frozenset({0, 1, 2, 3, 4, 5, 7})
NUMERIC_TYPES = frozenset({6, 8, 9, 10, 11, 12, 13, 14})

ROLE_SWITCH = {
    Role.M: PolicyType.ENABLE_M,
    Role.C: PolicyType.ENABLE_C,
    Role.L: PolicyType.ENABLE_L,
    Role.U: PolicyType.ENABLE_U,
    Role.A: PolicyType.ENABLE_A,
}

REWARD_MANUAL = 0
REWARD_SELF_ADJUSTING = 1

DEFAULT_NUMERIC = {
    PolicyType.C_CREATION_LIMIT: 0,
    PolicyType.MANUAL_REWARD: 50,
    PolicyType.MIN_REWARD: 0,
    PolicyType.DECAY_RATE: 0,
    PolicyType.MAX_DECAY_RATE: Q32_MAX,
    PolicyType.MIN_FEE: 0,
    PolicyType.QUOTA_PERIOD: 0,
    PolicyType.QUOTA_MIN: 1,
}


def q32(value) -> int:
    """Encode a fraction in [0, 1] as Q0.32 (1.0 saturates to the largest code)."""
    frac = Fraction(value)
    if not 0 <= frac <= 1:
        raise ValueError(f"{value} outside [0, 1]")
    return min(int(frac * Q32), Q32_MAX)


def q32_value(param: int) -> Fraction:
    return Fraction(param, Q32)


def compare_authority(a: tuple, b: tuple) -> int:
    """-1 if ``a`` is more authoritative than ``b``, 1 if less, 0 if equal."""
    return (a > b) - (a < b)


@dataclass(frozen=True)
class PolicyRecord:
    ptype: int
    param: int
    permanent: bool
    issuer: bytes
    priority_key: tuple
    position: tuple  # (block height, tx index, vout index)

    def to_json(self) -> dict:
        return {
            "type": self.ptype,
            "param": self.param,
            "permanent": self.permanent,
            "issuer": self.issuer.hex(),
            "priority_key": list(self.priority_key),
            "position": list(self.position),
        }


def check_param(ptype: int, param: int) -> None:
    if not 0 <= ptype < NUM_TYPES:
        raise errors.UnknownType(f"policy type {ptype}")
    if not 0 <= param < Q32:
        raise errors.BadParam(f"parameter {param} does not fit in 32 bits")
    if ptype in BINARY_TYPES and param not in (0, 1):
        raise errors.BadParam(f"type {ptype} takes 0 or 1, got {param}")
    if ptype == PolicyType.NOOP and param != 0:
        raise errors.BadParam("no-op policy takes parameter 0")


class PolicyState:
    """Immutable policy book: records per type, permanence flags, effective values."""

    __slots__ = ("defaults", "records", "permanent", "_effective")

    def __init__(self, defaults: tuple, records: Map = Map(), permanent: Map = Map(),
                 effective: Optional[Map] = None):
        self.defaults = defaults
        self.records = records
        self.permanent = permanent
        self._effective = effective if effective is not None else Map()

    @classmethod
    def initial(cls, numeric_defaults: Optional[Mapping[int, int]] = None) -> PolicyState:
        values = [1] * NUM_TYPES
        values[PolicyType.NOOP] = 0
        merged = dict(DEFAULT_NUMERIC)
        merged.update({int(k): v for k, v in (numeric_defaults or {}).items()})
        for ptype, value in merged.items():
            if ptype not in NUMERIC_TYPES:
                raise errors.UnknownType(f"type {ptype} has no numeric default")
            check_param(ptype, value)
            values[ptype] = value
        return cls(tuple(values))

    def effective(self, ptype: int) -> int:
        if not 0 <= ptype < NUM_TYPES:
            raise errors.UnknownType(f"policy type {ptype}")
        return self._effective.get(ptype, self.defaults[ptype])

    def enabled(self, role: Role) -> bool:
        return self.effective(ROLE_SWITCH[role]) == 1

    def decay_rate(self) -> int:
        return min(self.effective(PolicyType.DECAY_RATE), self.effective(PolicyType.MAX_DECAY_RATE))

    def is_permanent(self, issuer: bytes, ptype: int) -> bool:
        return (issuer, ptype) in self.permanent

    def apply(self, record: PolicyRecord) -> PolicyState:
        """Append a record; raises on permanence, parameter or decay-cap violations."""
        check_param(record.ptype, record.param)
        if record.ptype == PolicyType.NOOP:
            return self
        if self.is_permanent(record.issuer, record.ptype):
            raise errors.PermanenceViolation(
                f"issuer {record.issuer.hex()[:16]} fixed type {record.ptype} permanently"
            )
        if record.ptype == PolicyType.DECAY_RATE and record.param > self.effective(PolicyType.MAX_DECAY_RATE):
            raise errors.DecayRateExceedsMax(
                f"decay {record.param} above max {self.effective(PolicyType.MAX_DECAY_RATE)}"
            )
        recs = self.records.get(record.ptype, ()) + (record,)
        permanent = self.permanent
        if record.permanent:
            permanent = permanent.set((record.issuer, record.ptype), True)
        effective = self._effective.set(record.ptype, resolve(recs).param)
        return PolicyState(self.defaults, self.records.set(record.ptype, recs), permanent, effective)

    def records_for(self, ptype: int) -> tuple:
        return self.records.get(ptype, ())

    def table(self) -> dict:
        return {str(t): self.effective(t) for t in range(NUM_TYPES)}

    def to_json(self) -> dict:
        log = [r.to_json() for t in sorted(self.records.keys()) for r in self.records[t]]
        log.sort(key=lambda r: r["position"])
        return {"effective": self.table(), "records": log}


def resolve(records) -> PolicyRecord:
    """Winning record: most authoritative issuer, then that issuer's latest position."""
    return min(records, key=lambda r: (r.priority_key, _neg(r.position)))


def _neg(position: tuple) -> tuple:
    return tuple(-p for p in position)
