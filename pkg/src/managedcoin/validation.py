"""Transaction and block validation.

A transaction brings roles in through vins that reference earlier
role-change vouts (role vins) and spends coin through vins that reference
unspent coin vouts (coin vins).  Rules are evaluated against the parent
block's policy; the account tree, grants and UTXOs are threaded through
the block so later transactions see earlier ones.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

from . import errors
from .accounts import AccountTree
from .codec import (
    CoinTransfer,
    NO_ROLES,
    PolicyChange,
    Role,
    RoleChange,
    Transaction,
    decode_nvalue,
    parse_script_sig,
)
from .crypto import verify
from .genesis import GenesisConfig, block_reward, build_genesis_block
from .ledger import LedgerState, QuotaState, Supply
from .policy import PolicyRecord, PolicyType


@dataclass(frozen=True)
class Rules:
    """Validation rule-set a node runs.  Revolting miners drop quota enforcement."""

    name: str = "compliant"
    enforce_quota: bool = True


COMPLIANT = Rules()
NO_QUOTA = Rules("no_quota", enforce_quota=False)
RULESETS = {r.name: r for r in (COMPLIANT, NO_QUOTA)}


@dataclass(frozen=True)
class TxClassification:
    has_coin_transfer: bool = False
    has_role_change: bool = False
    has_policy_change: bool = False
    is_management: bool = False
    is_coinbase: bool = False
    created: int = 0
    fee: int = 0


@dataclass(frozen=True)
class RoleEffect:
    vout_index: int
    coverer: bytes
    target: bytes
    add: bool
    roles: Role
    via: Role


@dataclass
class _TxResult:
    classification: TxClassification
    spent: list
    coin_outs: list
    tree: AccountTree
    registry: object
    policy: object
    role_effects: list


def quota_satisfied(management: int, policy_management: int, k: int) -> bool:
    if k <= 0:
        return True
    return management >= k and policy_management >= 1


def check_management_quota(window_blocks, n: int, k: int) -> bool:
    """Check every completed window of ``n`` blocks; blocks are lists of TxClassification.

    Returns True or raises QuotaViolation naming the offending window.
    """
    if n <= 0:
        return True
    blocks = list(window_blocks)
    for start in range(0, len(blocks) - n + 1, n):
        txs = [c for block in blocks[start : start + n] for c in block if not c.is_coinbase]
        mgmt = sum(c.is_management for c in txs)
        pol = sum(c.is_management and c.has_policy_change for c in txs)
        if not quota_satisfied(mgmt, pol, k):
            raise errors.QuotaViolation(
                f"window starting at offset {start}: {mgmt} management txs ({pol} policy), need {k}"
            )
    return True


class ValidationContext:
    """Working state for one block built on ``parent``."""

    def __init__(self, parent: LedgerState, config: GenesisConfig, rules: Rules = COMPLIANT):
        self.parent = parent
        self.config = config
        self.rules = rules
        self.rule_policy = parent.policy
        self.height = parent.height + 1
        self.utxos = parent.utxos
        self.txindex = parent.txindex
        self.tree = parent.tree
        self.registry = parent.registry
        self.policy = parent.policy
        self.created = 0
        self.fees = 0
        self.management = 0
        self.policy_management = 0
        self.vout_ordinal = 0
        self.next_tx_index = 1
        self.utxo_delta = 0
        self.classifications: list = []
        self.management_txids: list = []
        # rules come from the parent block's policy, so this is fixed for the whole block
        self._enabled_roles = {r: self.rule_policy.enabled(r) for r in Role}

    # -- helpers -----------------------------------------------------------

    def _check_sig(self, vin, owner: bytes, digest: bytes) -> None:
        try:
            sig, pub = parse_script_sig(vin.script_sig)
        except errors.BadScriptSig as exc:
            raise errors.SignatureInvalid(str(exc)) from None
        if pub != owner:
            raise errors.SignatureInvalid("scriptSig key does not match the referenced output")
        if not verify(self.config.scheme, pub, digest, sig):
            raise errors.SignatureInvalid("signature does not verify")

    def _enabled(self, role: Role) -> bool:
        return self.rule_policy.enabled(role)

    # -- transactions ------------------------------------------------------

    def check_tx(self, tx: Transaction, tx_index: Optional[int] = None) -> _TxResult:
        """Validate ``tx`` against the working state without mutating it."""
        if tx_index is None:
            tx_index = self.next_tx_index
        if not tx.vin or not tx.vout:
            raise errors.BadTxShape("transaction needs at least one vin and one vout")
        if any(vin.is_null for vin in tx.vin):
            raise errors.BadTxShape("coinbase input outside the coinbase position")
        if tx.txid in self.txindex:
            raise errors.DuplicateTx(tx.txid.hex())
        try:
            modes = [decode_nvalue(o.n_value) for o in tx.vout]
        except errors.CodecError as exc:
            raise errors.BadTxShape(f"{exc.code}: {exc}") from None

        digest = tx.digest
        tree = self.tree
        coin_ins = []  # (owner, amount, signed)
        held: dict = {}
        role_accounts: list = []
        seen = set()
        for vin in tx.vin:
            op = vin.outpoint
            coin = self.utxos.get(op)
            if op in seen:
                if coin is not None:
                    raise errors.DoubleSpend(f"outpoint {op[0].hex()}:{op[1]} spent twice")
                raise errors.BadTxShape("duplicate role input")
            seen.add(op)
            if coin is not None:
                owner, amount = coin
                signed = bool(vin.script_sig)
                if signed:
                    self._check_sig(vin, owner, digest)
                coin_ins.append((owner, amount, signed))
                continue
            grant = self.registry.get(op)
            if grant is not None:
                if not grant.active:
                    raise errors.RoleRevoked(f"grant {op[0].hex()}:{op[1]} no longer active")
                if not vin.script_sig:
                    raise errors.SignatureInvalid("role input must be signed")
                self._check_sig(vin, grant.account_id, digest)
                acct = grant.account_id
                if acct not in held:
                    held[acct] = NO_ROLES
                    role_accounts.append(acct)
                held[acct] |= grant.active
                continue
            outputs = self.txindex.get(op[0])
            if outputs is not None and op[1] < len(outputs) and not outputs[op[1]] >> 63:
                raise errors.DoubleSpend(f"outpoint {op[0].hex()}:{op[1]} already spent")
            raise errors.MissingInput(f"outpoint {op[0].hex()}:{op[1]} not found")

        enabled = self._enabled_roles

        def supplies(acct: bytes, role: Role) -> bool:
            return bool(held.get(acct, NO_ROLES) & role) and enabled[role]

        def require(acct: bytes, role: Role, missing) -> None:
            node = tree.get(acct)
            if role == Role.U and node is not None and node.frozen:
                raise errors.FrozenAccount(acct.hex())
            if not held.get(acct, NO_ROLES) & role:
                raise missing(f"{acct.hex()[:16]} lacks {role.name}")
            if not enabled[role]:
                raise errors.RoleDisabledByPolicy(f"role {role.name} disabled")

        is_management = any(supplies(a, Role.M) for a in role_accounts)

        # coin movement
        coin_outs = [(j, tx.vout[j].pubkey, m.amount) for j, m in enumerate(modes) if isinstance(m, CoinTransfer)]
        in_total = sum(a for _, a, _ in coin_ins)
        out_total = sum(a for _, _, a in coin_outs)
        unsigned = [owner for owner, _, signed in coin_ins if not signed]
        l_transfer = bool(unsigned)
        if l_transfer:
            l_accounts = [a for a in role_accounts if held[a] & Role.L]
            if not l_accounts:
                raise errors.SignatureInvalid("unsigned coin input without an L role")
            if not enabled[Role.L] or self.rule_policy.effective(PolicyType.L_MOVES_COIN) != 1:
                raise errors.RoleDisabledByPolicy("L coin movement disabled")
            l_depth = min(tree.depth(a) for a in l_accounts)
            for owner in unsigned:
                if owner not in tree or tree.depth(owner) <= l_depth:
                    raise errors.LDepthViolation(f"{owner.hex()[:16]} not deeper than L account")
        for owner, _, signed in coin_ins:
            if signed:
                require(owner, Role.U, errors.MissingURole)
        for _, pub, _ in coin_outs:
            node = tree.get(pub)
            if node is not None and node.frozen:
                raise errors.FrozenAccount(pub.hex())
            if self.config.require_receiver_role_proof:
                has_u = bool(held.get(pub, NO_ROLES) & Role.U)
            else:
                has_u = bool(tree.active_roles(pub) & Role.U)
            if not has_u:
                raise errors.MissingURole(f"receiver {pub.hex()[:16]} lacks U")
            if not enabled[Role.U] and not l_transfer:
                raise errors.RoleDisabledByPolicy("role U disabled")

        created = max(out_total - in_total, 0)
        fee = max(in_total - out_total, 0)
        c_supplied = any(supplies(a, Role.C) for a in role_accounts)
        if created:
            if not c_supplied:
                if any(held[a] & Role.C for a in role_accounts):
                    raise errors.RoleDisabledByPolicy("role C disabled")
                raise errors.CoinCreationWithoutC(f"outputs exceed inputs by {created}")
            limit = self.rule_policy.effective(PolicyType.C_CREATION_LIMIT)
            if limit and self.created + created > limit:
                raise errors.CoinCreationLimitExceeded(
                    f"{self.created} + {created} exceeds per-block limit {limit}"
                )
        if coin_ins and not c_supplied:
            min_fee = self.rule_policy.effective(PolicyType.MIN_FEE)
            if fee < min_fee:
                raise errors.FeeBelowMinimum(f"fee {fee} below minimum {min_fee}")

        # role changes, authorized against the pre-transaction tree
        role_effects = []
        for j, m in enumerate(modes):
            if isinstance(m, RoleChange):
                target = tx.vout[j].pubkey
                for acct in role_accounts:
                    via = _authorize(tree, acct, target, m.add, m.roles, supplies)
                    if via is not None:
                        role_effects.append(RoleEffect(j, acct, target, m.add, m.roles, via))
                        break
                else:
                    raise _diagnose(tree, role_accounts, held, enabled, target, m.add, m.roles)

        # policy changes
        policy_vouts = [(j, m) for j, m in enumerate(modes) if isinstance(m, PolicyChange)]
        if policy_vouts and not is_management:
            if any(held[a] & Role.M for a in role_accounts):
                raise errors.RoleDisabledByPolicy("role M disabled")
            raise errors.RoleNotHeld("policy change without an M role input")

        new_tree = tree
        registry = self.registry
        txid = tx.txid
        for eff in role_effects:
            ordinal = self.vout_ordinal + eff.vout_index
            new_tree = new_tree.apply_role_change(
                eff.coverer, eff.target, eff.add, eff.roles,
                (self.height, tx_index, eff.vout_index), via=eff.via, grant_index=ordinal,
            )
            if eff.add:
                registry = registry.grant((txid, eff.vout_index), eff.target, eff.roles)
            else:
                registry = registry.revoke(eff.target, eff.roles)

        policy = self.policy
        for j, m in policy_vouts:
            issuer = tx.vout[j].pubkey
            if not supplies(issuer, Role.M):
                raise errors.RoleNotHeld(f"policy issuer {issuer.hex()[:16]} supplies no M role")
            key = tree.node(issuer).authority
            record = PolicyRecord(m.ptype, m.param, m.permanent, issuer, key, (self.height, tx_index, j))
            policy = policy.apply(record)

        cls = TxClassification(
            has_coin_transfer=bool(coin_ins or coin_outs),
            has_role_change=bool(role_effects),
            has_policy_change=bool(policy_vouts),
            is_management=is_management,
            created=created,
            fee=fee,
        )
        spent = [vin.outpoint for vin in tx.vin if vin.outpoint in self.utxos]
        outs = [((txid, j), pub, amt) for j, pub, amt in coin_outs]
        return _TxResult(cls, spent, outs, new_tree, registry, policy, role_effects)

    def commit(self, tx: Transaction, res: _TxResult) -> TxClassification:
        with self.utxos.mutate() as mm:
            for op in res.spent:
                self.utxo_delta -= mm[op][1]
                del mm[op]
            for op, pub, amt in res.coin_outs:
                mm[op] = (pub, amt)
                self.utxo_delta += amt
            self.utxos = mm.finish()
        self.txindex = self.txindex.set(tx.txid, tuple(o.n_value for o in tx.vout))
        self.tree = res.tree
        self.registry = res.registry
        self.policy = res.policy
        c = res.classification
        self.created += c.created
        self.fees += c.fee
        if c.is_management:
            self.management += 1
            self.management_txids.append((tx.txid, c.has_policy_change))
            if c.has_policy_change:
                self.policy_management += 1
        self.vout_ordinal += len(tx.vout)
        self.next_tx_index += 1
        self.classifications.append(c)
        return c

    def connect_tx(self, tx: Transaction) -> TxClassification:
        return self.commit(tx, self.check_tx(tx))

    # -- coinbase ----------------------------------------------------------

    def check_coinbase(self, tx: Transaction, reward: int) -> TxClassification:
        """Validate the coinbase against the fees collected so far."""
        if len(tx.vin) != 2 or not tx.vin[0].is_null or len(tx.vout) != 1:
            raise errors.BadCoinbaseShape("coinbase needs a null vin, a U-role vin and one vout")
        if tx.vin[1].is_null:
            raise errors.BadCoinbaseShape("second coinbase vin must reference a role grant")
        if tx.vin[0].script_sig[:4] != self.height.to_bytes(4, "little"):
            raise errors.BadCoinbaseShape("coinbase script must start with the block height")
        try:
            mode = tx.vout[0].mode
        except errors.CodecError as exc:
            raise errors.BadCoinbaseShape(str(exc)) from None
        if not isinstance(mode, CoinTransfer):
            raise errors.BadCoinbaseShape("coinbase output must be a coin transfer")
        if tx.txid in self.txindex:
            raise errors.DuplicateTx(tx.txid.hex())
        dest = tx.vout[0].pubkey
        grant = self.registry.get(tx.vin[1].outpoint)
        if grant is None or grant.account_id != dest or not grant.active & Role.U:
            raise errors.MissingMinerURole(f"no active U grant for {dest.hex()[:16]}")
        if not self._enabled(Role.U):
            raise errors.RoleDisabledByPolicy("role U disabled")
        self._check_sig(tx.vin[1], dest, tx.digest)
        if mode.amount > reward + self.fees:
            raise errors.ExcessReward(f"coinbase pays {mode.amount} > {reward} + {self.fees}")
        return TxClassification(has_coin_transfer=True, is_coinbase=True)

    def connect_coinbase(self, tx: Transaction, reward: int) -> TxClassification:
        c = self.check_coinbase(tx, reward)
        amount = tx.vout[0].mode.amount
        self.utxos = self.utxos.set((tx.txid, 0), (tx.vout[0].pubkey, amount))
        self.utxo_delta += amount
        self.txindex = self.txindex.set(tx.txid, (tx.vout[0].n_value,))
        self.coinbase_amount = amount
        self.reward = reward
        return c

    # -- quota and finish --------------------------------------------------

    def next_quota(self) -> QuotaState:
        """Advance the quota window; raises QuotaViolation when enforcing."""
        n = self.rule_policy.effective(PolicyType.QUOTA_PERIOD)
        k = self.rule_policy.effective(PolicyType.QUOTA_MIN)
        q = self.parent.quota
        if n != q.period:
            q = QuotaState(anchor=self.height, period=n)
        q = replace(q, management=q.management + self.management,
                    policy_management=q.policy_management + self.policy_management)
        if n > 0 and (self.height - q.anchor + 1) % n == 0:
            if self.rules.enforce_quota and not quota_satisfied(q.management, q.policy_management, k):
                raise errors.QuotaViolation(
                    f"window ending at height {self.height}: {q.management} management txs "
                    f"({q.policy_management} policy), need {k}"
                )
            q = QuotaState(anchor=q.anchor, period=n)
        return q

    def finish(self, block_hash: bytes, quota: QuotaState) -> LedgerState:
        s = self.parent.supply
        supply = Supply(
            utxo_total=s.utxo_total + self.utxo_delta,
            rewards=s.rewards + self.reward,
            claimed=s.claimed + self.coinbase_amount,
            created=s.created + self.created,
            fees=s.fees + self.fees,
        )
        return LedgerState(
            self.height, block_hash, self.tree, self.registry, self.policy, quota,
            self.utxos, self.txindex, supply, tuple(self.management_txids),
        )


def _authorize(tree: AccountTree, coverer: bytes, target: bytes, add: bool, roles: Role, supplies) -> Optional[Role]:
    """Role the coverer may act under for this role-change vout, or None."""
    node = tree.get(target)
    if roles == Role.U:
        if supplies(coverer, Role.L) and node is not None and tree.depth(target) > tree.depth(coverer):
            if not add or node.frozen or node.roles & Role.U:
                return Role.L
        if node is not None and node.frozen and add:
            return None
        if supplies(coverer, Role.A):
            if node is None:
                if add:
                    return Role.A
            elif target != coverer and tree.is_ancestor(coverer, target):
                return Role.A
            elif (add and node.roles == NO_ROLES and target != coverer
                  and node.parent is not None and not tree.is_ancestor(target, coverer)):
                return Role.A
    if supplies(coverer, Role.M) and tree.covers(coverer, target):
        if all(supplies(coverer, r) for r in Role if r & roles):
            if node is None and not add:
                return None
            if node is not None and node.frozen and add and roles & Role.U:
                return None
            return Role.M
    return None


def _diagnose(tree, accounts, held, enabled, target, add, roles) -> errors.ManagedCoinError:
    node = tree.get(target)
    if node is not None and node.frozen and add and roles & Role.U:
        return errors.FrozenTarget(target.hex())
    if node is None and not add:
        return errors.UnknownTarget(target.hex())
    authorities = Role.M | Role.A | Role.L
    if not any(held[a] & authorities for a in accounts):
        return errors.RoleNotHeld("no M, A or L role input")
    if not any(held[a] & authorities & Role(sum(r for r in Role if enabled[r])) for a in accounts):
        return errors.RoleDisabledByPolicy("authorizing roles disabled")
    if roles == Role.U and node is not None:
        l_accts = [a for a in accounts if held[a] & Role.L]
        if l_accts and not any(held[a] & (Role.M | Role.A) for a in accounts):
            return errors.LDepthViolation(f"{target.hex()[:16]} not deeper than L account")
    for a in accounts:
        if held[a] & Role.M and tree.covers(a, target) and roles & ~held[a]:
            return errors.RoleNotHeld(f"coverer lacks roles for {target.hex()[:16]}")
    return errors.NotCovered(f"no input covers {target.hex()[:16]}")


def validate_tx(tx: Transaction, ctx: ValidationContext) -> TxClassification:
    """Check one transaction against a context; the context is left unchanged."""
    return ctx.check_tx(tx).classification


def validate_coinbase(tx: Transaction, ctx: ValidationContext, fees_total: int, reward: int) -> TxClassification:
    saved = ctx.fees
    ctx.fees = fees_total
    try:
        return ctx.check_coinbase(tx, reward)
    finally:
        ctx.fees = saved


def validate_genesis_block(block, config: GenesisConfig) -> None:
    expected = build_genesis_block(config)
    if block.hash != expected.hash or block.txs != expected.txs:
        raise errors.BadGenesis("block does not match the genesis configuration")


def validate_block(block, parent: LedgerState, config: GenesisConfig, rules: Rules = COMPLIANT,
                   check_pow: bool = True) -> LedgerState:
    """Validate ``block`` on top of ``parent`` and return the child state."""
    header = block.header
    if header.prev_hash != parent.block_hash:
        raise errors.BadPrevHash("header does not reference the parent block")
    if header.target != config.pow_target:
        raise errors.BadTarget("header target differs from the chain target")
    if check_pow and not header.pow_ok():
        raise errors.BadPoW(f"header hash {header.hash.hex()} above target")
    if not block.txs:
        raise errors.BadCoinbaseShape("block has no transactions")
    if header.merkle_root != block.computed_merkle_root():
        raise errors.BadMerkleRoot("merkle root does not match transactions")
    coinbase = block.txs[0]
    if not coinbase.is_coinbase:
        raise errors.BadCoinbaseShape("first transaction is not a coinbase")
    ctx = ValidationContext(parent, config, rules)
    for tx in block.txs[1:]:
        ctx.connect_tx(tx)
    reward = block_reward(parent.policy, config, ctx.height)
    ctx.connect_coinbase(coinbase, reward)
    quota = ctx.next_quota()
    return ctx.finish(block.hash, quota)
