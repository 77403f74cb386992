"""Per-block ledger snapshot: UTXOs, account tree, role grants, policy, quota and supply."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

from immutables import Map

from .accounts import AccountTree, RoleRegistry
from .policy import PolicyState


@dataclass(frozen=True)
class QuotaState:
    anchor: int
    period: int
    management: int = 0
    policy_management: int = 0


@dataclass(frozen=True)
class Supply:
    utxo_total: int = 0
    rewards: int = 0  # scheduled block rewards
    claimed: int = 0  # coinbase outputs actually paid
    created: int = 0  # C-role coin creation
    fees: int = 0


@dataclass(frozen=True)
class LedgerState:
    height: int
    block_hash: bytes
    tree: AccountTree
    registry: RoleRegistry
    policy: PolicyState
    quota: QuotaState
    utxos: Map = field(default_factory=Map)  # (txid, index) -> (pubkey, amount)
    txindex: Map = field(default_factory=Map)  # txid -> tuple of vout nValues
    supply: Supply = field(default_factory=Supply)
    block_management: tuple = ()  # (txid, has_policy_change) for this block's management txs

    def balance(self, pubkey: bytes) -> int:
        return sum(amount for owner, amount in self.utxos.values() if owner == pubkey)

    def coins_of(self, pubkey: bytes) -> list:
        """Sorted (outpoint, amount) pairs owned by ``pubkey``."""
        return sorted((op, amt) for op, (owner, amt) in self.utxos.items() if owner == pubkey)

    def summary(self) -> dict:
        """Canonical JSON-able digest of the whole state, used for replay comparisons."""
        utxos = sorted(
            [op[0].hex(), op[1], owner.hex(), amt] for op, (owner, amt) in self.utxos.items()
        )
        grants = sorted(
            [op[0].hex(), op[1], rec.account_id.hex(), int(rec.roles), int(rec.active)]
            for op, rec in self.registry.grants.items()
        )
        return {
            "height": self.height,
            "block_hash": self.block_hash.hex(),
            "accounts": self.tree.dump(),
            "grants": grants,
            "policy": self.policy.to_json(),
            "quota": [self.quota.anchor, self.quota.period, self.quota.management,
                      self.quota.policy_management],
            "utxos": utxos,
            "supply": self.supply.__dict__,
            "txids": sorted(t.hex() for t in self.txindex.keys()),
        }

    def summary_bytes(self) -> bytes:
        return json.dumps(self.summary(), sort_keys=True, separators=(",", ":")).encode()

    def summary_hash(self) -> str:
        return hashlib.sha256(self.summary_bytes()).hexdigest()
