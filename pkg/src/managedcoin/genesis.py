"""Genesis configuration, genesis block construction and the block-reward schedule."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

from immutables import Map

from . import errors
from .accounts import AccountTree, RoleRegistry
from .codec import (
    ALL_ROLES,
    COINBASE_INDEX,
    MAX_AMOUNT,
    NULL_HASH,
    PUBKEY_SIZE,
    Block,
    BlockHeader,
    Transaction,
    TxIn,
    TxOut,
    target_from_int,
)
from .crypto import DEFAULT_SCHEME, SCHEMES
from .hashing import scan_nonce, sha256d
from .ledger import LedgerState, QuotaState
from .policy import (
    Q32,
    REWARD_MANUAL,
    PolicyRecord,
    PolicyState,
    PolicyType,
    check_param,
)

DESK_TARGET = target_from_int((1 << 244) - 1)
TRIVIAL_TARGET = b"\xff" * 32


@dataclass(frozen=True)
class GenesisConfig:
    root_pubkey: bytes
    scheme: str = DEFAULT_SCHEME
    pow_target: bytes = DESK_TARGET
    initial_reward: int = 50
    reward_epoch: int = 100
    policy_defaults: tuple = ()  # sorted (type, value) pairs for numeric types
    require_receiver_role_proof: bool = True
    permanent_policies: tuple = ()  # (type, param) pairs issued permanently by the root
    timestamp: int = 0

    def __post_init__(self):
        defaults = self.policy_defaults
        if isinstance(defaults, dict):
            defaults = defaults.items()
        object.__setattr__(self, "policy_defaults", tuple(sorted((int(k), int(v)) for k, v in defaults)))
        object.__setattr__(
            self, "permanent_policies", tuple((int(t), int(p)) for t, p in self.permanent_policies)
        )
        self.validate()

    def validate(self) -> None:
        if len(self.root_pubkey) != PUBKEY_SIZE:
            raise errors.BadConfig("root public key must be 33 bytes")
        if self.scheme not in SCHEMES:
            raise errors.BadConfig(f"unknown signature scheme {self.scheme!r}")
        if len(self.pow_target) != 32 or not any(self.pow_target):
            raise errors.BadConfig("PoW target must be 32 nonzero bytes")
        if not 0 <= self.initial_reward <= MAX_AMOUNT:
            raise errors.BadConfig("initial reward out of range")
        if self.reward_epoch < 1:
            raise errors.BadConfig("reward epoch must be at least one block")
        try:
            state = PolicyState.initial(dict(self.policy_defaults))
            for ptype, param in self.permanent_policies:
                check_param(ptype, param)
                if ptype == PolicyType.NOOP:
                    raise errors.BadParam("no-op cannot be a genesis policy")
                state = state.apply(PolicyRecord(ptype, param, True, self.root_pubkey, (0, 0, 0), (0, 0, 0)))
        except errors.ManagedCoinError as exc:
            raise errors.BadConfig(f"{exc.code}: {exc}") from exc

    def to_json(self) -> dict:
        return {
            "root_pubkey": self.root_pubkey.hex(),
            "scheme": self.scheme,
            "pow_target": self.pow_target.hex(),
            "initial_reward": self.initial_reward,
            "reward_epoch": self.reward_epoch,
            "policy_defaults": {str(k): v for k, v in self.policy_defaults},
            "require_receiver_role_proof": self.require_receiver_role_proof,
            "permanent_policies": [list(p) for p in self.permanent_policies],
            "timestamp": self.timestamp,
        }

    @classmethod
    def from_json(cls, data: dict) -> GenesisConfig:
        try:
            return cls(
                root_pubkey=bytes.fromhex(data["root_pubkey"]),
                scheme=data.get("scheme", DEFAULT_SCHEME),
                pow_target=bytes.fromhex(data["pow_target"]) if "pow_target" in data else DESK_TARGET,
                initial_reward=int(data.get("initial_reward", 50)),
                reward_epoch=int(data.get("reward_epoch", 100)),
                policy_defaults={int(k): int(v) for k, v in data.get("policy_defaults", {}).items()},
                require_receiver_role_proof=bool(data.get("require_receiver_role_proof", True)),
                permanent_policies=tuple(tuple(p) for p in data.get("permanent_policies", ())),
                timestamp=int(data.get("timestamp", 0)),
            )
        except (KeyError, ValueError, TypeError) as exc:
            raise errors.BadConfig(str(exc)) from exc

    def canonical_bytes(self) -> bytes:
        return json.dumps(self.to_json(), sort_keys=True, separators=(",", ":")).encode()

    @property
    def config_hash(self) -> bytes:
        return sha256d(self.canonical_bytes())


def build_genesis_tx(config: GenesisConfig) -> Transaction:
    vout = [TxOut.role(True, ALL_ROLES, config.root_pubkey)]
    vout += [TxOut.policy(t, p, config.root_pubkey, permanent=True) for t, p in config.permanent_policies]
    vin = [TxIn(NULL_HASH, COINBASE_INDEX, config.config_hash)]
    return Transaction(tuple(vin), tuple(vout))


def build_genesis_block(config: GenesisConfig) -> Block:
    tx = build_genesis_tx(config)
    header = BlockHeader(NULL_HASH, tx.txid, config.timestamp, config.pow_target, 0)
    raw = header.serialize()
    start = 0
    while True:
        nonce = scan_nonce(raw, config.pow_target, start, 1 << 22)
        if nonce >= 0:
            break
        start += 1 << 22
    return Block(BlockHeader(NULL_HASH, tx.txid, config.timestamp, config.pow_target, nonce), (tx,))


def genesis_state(config: GenesisConfig, block: Optional[Block] = None) -> LedgerState:
    block = block or build_genesis_block(config)
    tx = block.txs[0]
    root = config.root_pubkey
    tree = AccountTree.with_root(root)
    registry = RoleRegistry().grant((tx.txid, 0), root, ALL_ROLES)
    policy = PolicyState.initial(dict(config.policy_defaults))
    for j, (ptype, param) in enumerate(config.permanent_policies, start=1):
        policy = policy.apply(PolicyRecord(ptype, param, True, root, (0, 0, 0), (0, 0, j)))
    quota = QuotaState(anchor=1, period=policy.effective(PolicyType.QUOTA_PERIOD))
    txindex = Map({tx.txid: tuple(o.n_value for o in tx.vout)})
    return LedgerState(0, block.hash, tree, registry, policy, quota, txindex=txindex)


def decayed_reward(initial: int, rate_q32: int, epochs: int) -> int:
    """Exact floor(initial * (1 - rate / 2**32) ** epochs) without building huge powers."""
    if initial == 0 or rate_q32 == 0 or epochs == 0:
        return initial
    if rate_q32 >= Q32:
        return 0
    keep = Q32 - rate_q32
    precision = 64
    while True:
        lo, hi = _power_bounds(keep, epochs, precision)
        a = (initial * lo) >> precision
        b = (initial * hi) >> precision
        if a == b:
            return a
        if precision >= 32 * epochs + 64:  # lo == hi already; cannot happen
            return a
        precision *= 2


def _power_bounds(keep: int, e: int, p: int) -> tuple[int, int]:
    # bounds on (keep / 2**32) ** e scaled by 2**p; exact once p >= 32 * e
    one = 1 << p
    base_lo = base_hi = keep << (p - 32)
    lo = hi = one
    while e:
        if e & 1:
            lo = (lo * base_lo) >> p
            hi = -((-hi * base_hi) >> p)
        e >>= 1
        if e:
            base_lo = (base_lo * base_lo) >> p
            base_hi = -((-base_hi * base_hi) >> p)
    return lo, hi


def block_reward(policy: PolicyState, config: GenesisConfig, height: int) -> int:
    """Reward for the block at ``height`` given the parent block's policy."""
    if policy.effective(PolicyType.REWARD_MODE) == REWARD_MANUAL:
        return max(policy.effective(PolicyType.MANUAL_REWARD), policy.effective(PolicyType.MIN_REWARD))
    return decayed_reward(config.initial_reward, policy.decay_rate(), height // config.reward_epoch)
