"""Block tree with cumulative-work fork choice, mining and the reward schedule.

Every accepted block keeps its persistent post-state, so switching to a
heavier branch is a pointer move and always equals a fresh replay.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, Optional

from . import errors
from .codec import (
    COINBASE_INDEX,
    NULL_HASH,
    Block,
    BlockHeader,
    Role,
    Transaction,
    TxIn,
    TxOut,
    block_work,
    make_script_sig,
    merkle_root,
)
from .crypto import KeyPair
from .genesis import (
    GenesisConfig,
    block_reward as _block_reward,
    build_genesis_block,
    genesis_state,
)
from .hashing import scan_nonce
from .ledger import LedgerState
from .validation import COMPLIANT, Rules, ValidationContext, validate_block

NONCE_CHUNK = 1 << 20


@dataclass(frozen=True)
class BlockEntry:
    block: Block
    height: int
    work: int  # cumulative
    state: LedgerState
    seq: int  # arrival order, for first-seen tie breaks

    @property
    def hash(self) -> bytes:
        return self.block.hash

    @property
    def parent(self) -> bytes:
        return self.block.header.prev_hash


def block_reward(state: LedgerState, config: GenesisConfig, height: int) -> int:
    """Reward for the block at ``height`` given its parent's state."""
    return _block_reward(state.policy, config, height)


@dataclass
class Template:
    """What the last greedy assembly skipped, so callers can prune their pools."""

    confirmed: list = field(default_factory=list)  # already in the parent's chain
    management: list = field(default_factory=list)  # left out on request


class ValidationCache:
    """Shares (rules, block hash) -> post-state or error between nodes with the same rules."""

    def __init__(self):
        self._results: dict = {}

    def get(self, rules: Rules, block_hash: bytes):
        return self._results.get((rules.name, block_hash))

    def put(self, rules: Rules, block_hash: bytes, result) -> None:
        self._results[(rules.name, block_hash)] = result


class Chain:
    def __init__(self, config: GenesisConfig, rules: Rules = COMPLIANT,
                 cache: Optional[ValidationCache] = None):
        self.config = config
        self.rules = rules
        self.cache = cache
        genesis = build_genesis_block(config)
        state = genesis_state(config, genesis)
        entry = BlockEntry(genesis, 0, block_work(config.pow_target), state, 0)
        self.genesis_hash = genesis.hash
        self.entries: dict = {genesis.hash: entry}
        self.rejected: dict = {}  # block hash -> error
        self.tip = genesis.hash
        self._seq = 1
        self._premined: dict = {}  # states of blocks this chain assembled itself
        self.last_template = Template()

    # -- queries -----------------------------------------------------------

    @property
    def tip_entry(self) -> BlockEntry:
        return self.entries[self.tip]

    @property
    def state(self) -> LedgerState:
        return self.tip_entry.state

    @property
    def height(self) -> int:
        return self.tip_entry.height

    def __contains__(self, block_hash: bytes) -> bool:
        return block_hash in self.entries

    def entry(self, block_hash: bytes) -> BlockEntry:
        return self.entries[block_hash]

    def branch(self, tip: Optional[bytes] = None) -> list:
        """Block hashes from genesis to ``tip`` (default: canonical tip)."""
        out = []
        cur = tip or self.tip
        while cur != NULL_HASH:
            out.append(cur)
            cur = self.entries[cur].parent
        out.reverse()
        return out

    def canonical_blocks(self) -> list:
        return [self.entries[h].block for h in self.branch()]

    # -- mutation ----------------------------------------------------------

    def add_block(self, block: Block) -> BlockEntry:
        """Validate and index ``block``; the tip moves only on strictly more work."""
        h = block.hash
        if h in self.entries:
            return self.entries[h]
        if h in self.rejected:
            raise self.rejected[h]
        parent_hash = block.header.prev_hash
        if parent_hash in self.rejected:
            err = errors.InvalidAncestor(f"parent {parent_hash.hex()} was rejected")
            self.rejected[h] = err
            raise err
        parent = self.entries.get(parent_hash)
        if parent is None:
            raise errors.UnknownParent(parent_hash.hex())
        state = self._validate(block, parent.state)
        entry = BlockEntry(block, parent.height + 1, parent.work + block_work(block.header.target),
                           state, self._seq)
        self._seq += 1
        self.entries[h] = entry
        if entry.work > self.tip_entry.work:
            self.tip = h
        return entry

    def _validate(self, block: Block, parent_state: LedgerState) -> LedgerState:
        cached = self.cache.get(self.rules, block.hash) if self.cache else None
        if cached is None:
            mined = self._premined.pop(block.hash, None)
            # reuse only for the very block we assembled; a header alone does not pin the txs
            if mined is not None and mined[0] == block:
                cached = mined[1]
        if cached is None:
            try:
                cached = validate_block(block, parent_state, self.config, self.rules)
            except errors.BadMerkleRoot:
                # the body does not belong to this header; the header itself may still be good
                raise
            except errors.ManagedCoinError as exc:
                cached = exc
            if self.cache:
                self.cache.put(self.rules, block.hash, cached)
        if isinstance(cached, Exception):
            self.rejected[block.hash] = cached
            raise cached
        return cached

    # -- mining ------------------------------------------------------------

    def block_reward(self, height: Optional[int] = None, parent: Optional[bytes] = None) -> int:
        parent_entry = self.entries[parent or self.tip]
        return block_reward(parent_entry.state, self.config, height or parent_entry.height + 1)

    def build_coinbase(self, state: LedgerState, miner: KeyPair, amount: int, extra: bytes = b"") -> Transaction:
        grant = state.registry.latest_grant(miner.public, Role.U)
        if grant is None or not state.tree.active_roles(miner.public) & Role.U:
            raise errors.NoURoleForMiner(miner.public.hex())
        height = state.height + 1
        vin = (
            TxIn(NULL_HASH, COINBASE_INDEX, height.to_bytes(4, "little") + extra),
            TxIn(grant.outpoint[0], grant.outpoint[1]),
        )
        tx = Transaction(vin, (TxOut.coin(amount, miner.public),))
        sig = miner.sign(tx.digest)
        return tx.with_script_sigs([vin[0].script_sig, make_script_sig(sig, miner.public)])

    def mine_block(self, txs: Iterable[Transaction], miner: KeyPair, timestamp: Optional[int] = None,
                   parent: Optional[bytes] = None, extra: bytes = b"") -> Block:
        """Assemble and proof-of-work a block of exactly ``txs`` on ``parent`` (default tip).

        Any invalid transaction, coinbase problem or quota shortfall raises
        before a single nonce is tried.
        """
        return self._assemble(txs, miner, timestamp, parent, extra, strict=True)

    def assemble_block(self, candidates: Iterable[Transaction], miner: KeyPair,
                       timestamp: Optional[int] = None, parent: Optional[bytes] = None,
                       exclude_management: bool = False, max_txs: Optional[int] = None) -> Block:
        """Greedy template: keep each candidate that validates after the ones before it.

        ``max_txs`` is a local miner limit on non-coinbase transactions, not a consensus rule.
        """
        return self._assemble(candidates, miner, timestamp, parent, b"", strict=False,
                              exclude_management=exclude_management, max_txs=max_txs)

    def _assemble(self, txs, miner, timestamp, parent, extra, strict, exclude_management=False,
                  max_txs=None) -> Block:
        parent_entry = self.entries[parent or self.tip]
        state = parent_entry.state
        ctx = ValidationContext(state, self.config, self.rules)
        chosen = []
        self.last_template = template = Template()
        for tx in txs:
            if strict:
                ctx.connect_tx(tx)
                chosen.append(tx)
                continue
            if tx.txid in ctx.txindex:
                template.confirmed.append(tx.txid)
                continue
            if max_txs is not None and len(chosen) >= max_txs:
                break
            try:
                res = ctx.check_tx(tx)
            except errors.ManagedCoinError:
                continue
            if exclude_management and res.classification.is_management:
                template.management.append(tx.txid)
                continue
            ctx.commit(tx, res)
            chosen.append(tx)
        reward = block_reward(state, self.config, ctx.height)
        coinbase = self.build_coinbase(state, miner, reward + ctx.fees, extra)
        ctx.connect_coinbase(coinbase, reward)
        quota = ctx.next_quota()
        all_txs = (coinbase, *chosen)
        if timestamp is None:
            timestamp = parent_entry.block.header.timestamp + 1
        header = BlockHeader(parent_entry.hash, merkle_root(t.txid for t in all_txs), timestamp,
                             self.config.pow_target, 0)
        header = replace(header, nonce=find_nonce(header))
        block = Block(header, all_txs)
        self._premined[block.hash] = (block, ctx.finish(block.hash, quota))
        return block

    def select_transactions(self, candidates: Iterable[Transaction], parent: Optional[bytes] = None) -> list:
        """In-order subset of ``candidates`` that validates on ``parent`` (default tip)."""
        state = self.entries[parent or self.tip].state
        ctx = ValidationContext(state, self.config, self.rules)
        chosen = []
        for tx in candidates:
            if tx.txid in ctx.txindex:
                continue
            try:
                ctx.connect_tx(tx)
            except errors.ManagedCoinError:
                continue
            chosen.append(tx)
        return chosen


def init_genesis(config: GenesisConfig, rules: Rules = COMPLIANT) -> Chain:
    """Fresh chain holding only the genesis block."""
    return Chain(config, rules)


def apply_block(chain: Chain, block: Block) -> Chain:
    """Add ``block`` to ``chain``; on rejection the error propagates and the tip does not move."""
    chain.add_block(block)
    return chain


def find_nonce(header: BlockHeader) -> int:
    raw = header.serialize()
    start = 0
    while True:
        nonce = scan_nonce(raw, header.target, start, NONCE_CHUNK)
        if nonce >= 0:
            return nonce
        start += NONCE_CHUNK
