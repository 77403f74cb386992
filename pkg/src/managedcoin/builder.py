"""Assemble and sign transactions against a ledger state."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional

from . import errors
from .codec import NO_ROLES, Role, Transaction, TxIn, TxOut, make_script_sig
from .crypto import KeyPair
from .ledger import LedgerState
from .policy import PolicyType


@dataclass
class CoinSend:
    sender: bytes
    receiver: bytes
    amount: int
    forced_by: Optional[bytes] = None  # L account moving the coins without the owner's signature


@dataclass
class RoleGrant:
    coverer: bytes
    target: bytes
    add: bool
    roles: Role


@dataclass
class PolicySet:
    issuer: bytes
    ptype: int
    param: int
    permanent: bool = False


@dataclass
class TxPlan:
    sends: list = field(default_factory=list)
    role_changes: list = field(default_factory=list)
    policy_changes: list = field(default_factory=list)
    creations: list = field(default_factory=list)  # (C account, receiver, amount)
    fee: Optional[int] = None
    locktime: int = 0
    receiver_proof: bool = True


def role_inputs(state: LedgerState, account: bytes, needed: Role) -> list:
    """Fewest active grant outpoints of ``account`` jointly providing ``needed`` (best effort)."""
    records = [r for r in state.registry.records_for(account) if r.active]
    if needed == NO_ROLES:
        return []
    # prefer the tightest single grant, newest first on ties
    singles = [r for r in records if r.active & needed == needed]
    if singles:
        best = min(reversed(singles), key=lambda r: bin(int(r.active)).count("1"))
        return [best.outpoint]
    chosen, have = [], NO_ROLES
    for rec in reversed(records):
        if rec.active & needed & ~have:
            chosen.append(rec.outpoint)
            have |= rec.active
        if have & needed == needed:
            break
    return chosen


def all_role_inputs(state: LedgerState, account: bytes) -> list:
    return [r.outpoint for r in state.registry.records_for(account) if r.active]


def build_tx(plan: TxPlan, state: LedgerState, keys: Mapping[bytes, KeyPair]) -> Transaction:
    """Compile a plan to a signed transaction.  Validation is the caller's job."""
    fee = plan.fee
    if fee is None:
        fee = state.policy.effective(PolicyType.MIN_FEE) if plan.sends else 0

    authority_vins: list = []  # (outpoint, owner)
    coin_vins: list = []  # (outpoint, owner, signed)
    u_needed: list = []
    vout: list = []

    def add_authority(account: bytes, ops: list) -> None:
        for op in ops:
            if all(op != o for o, _ in authority_vins):
                authority_vins.append((op, account))

    for rc in plan.role_changes:
        add_authority(rc.coverer, all_role_inputs(state, rc.coverer))
        vout.append(TxOut.role(rc.add, rc.roles, rc.target))
    for pc in plan.policy_changes:
        add_authority(pc.issuer, role_inputs(state, pc.issuer, Role.M))
        vout.append(TxOut.policy(pc.ptype, pc.param, pc.issuer, pc.permanent))
    for c_acct, receiver, amount in plan.creations:
        add_authority(c_acct, role_inputs(state, c_acct, Role.C))
        vout.append(TxOut.coin(amount, receiver))
        if plan.receiver_proof:
            u_needed.append(receiver)

    # group sends per sender so change is computed once
    per_sender: dict = {}
    for s in plan.sends:
        per_sender.setdefault((s.sender, s.forced_by), []).append(s)
    first = True
    used = set()
    for (sender, forced_by), sends in per_sender.items():
        if forced_by is None and not state.tree.active_roles(sender) & Role.U:
            node = state.tree.get(sender)
            if node is not None and node.frozen:
                raise errors.FrozenAccount(f"{sender.hex()[:16]} is frozen")
            raise errors.MissingURole(f"{sender.hex()[:16]} lacks U")
        total = sum(s.amount for s in sends) + (fee if first else 0)
        first = False
        picked, acc = [], 0
        for op, amount in state.coins_of(sender):
            if op in used:
                continue
            picked.append(op)
            used.add(op)
            acc += amount
            if acc >= total:
                break
        if acc < total:
            raise errors.UnresolvableInput(f"{sender.hex()[:16]} holds {acc}, needs {total}")
        for op in picked:
            coin_vins.append((op, sender, forced_by is None))
        if forced_by is not None:
            add_authority(forced_by, role_inputs(state, forced_by, Role.L))
        else:
            u_needed.append(sender)
        for s in sends:
            vout.append(TxOut.coin(s.amount, s.receiver))
            if plan.receiver_proof:
                u_needed.append(s.receiver)
        if acc > total:
            vout.append(TxOut.coin(acc - total, sender))
            if plan.receiver_proof:
                u_needed.append(sender)

    u_vins: list = []
    seen_accounts = {
        owner for op, owner in authority_vins if state.registry.get(op).active & Role.U
    }
    for account in u_needed:
        if account in seen_accounts:
            continue
        seen_accounts.add(account)
        for op in role_inputs(state, account, Role.U):
            u_vins.append((op, account))

    ordered = [(op, owner, True) for op, owner in authority_vins]
    ordered += coin_vins
    ordered += [(op, owner, True) for op, owner in u_vins]
    vin = tuple(TxIn(op[0], op[1]) for op, _, _ in ordered)
    tx = Transaction(vin, tuple(vout), plan.locktime)
    digest = tx.digest
    scripts = []
    for _, owner, signed in ordered:
        if not signed:
            scripts.append(b"")
            continue
        key = keys.get(owner)
        if key is None:
            raise errors.SigningKeyMissing(owner.hex())
        scripts.append(make_script_sig(key.sign(digest), owner))
    return tx.with_script_sigs(scripts)
