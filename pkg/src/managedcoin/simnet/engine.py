"""Discrete-event network of miners, an administrator and wallets.

Block discovery is an exponential race: each miner finds blocks at rate
``share / block_interval``.  Headers still carry a valid nonce at the trivial
target so every block goes through full validation.
"""

from __future__ import annotations

import hashlib
import heapq
import random
from dataclasses import dataclass, field
from typing import Optional

from .. import errors
from ..builder import CoinSend, PolicySet, RoleGrant, TxPlan, build_tx
from ..chain import Chain, ValidationCache
from ..codec import Block, Role
from ..crypto import KeyPair
from ..genesis import TRIVIAL_TARGET, GenesisConfig
from ..policy import PolicyType
from ..validation import COMPLIANT, NO_QUOTA, RULESETS
from .scenario import MINERS, SimScenario

SIM_KEY_BASE = 7_000_000
DEFAULT_MAX_BLOCK_TXS = 20
GENESIS_OVERRIDES = frozenset(
    {"initial_reward", "reward_epoch", "policy_defaults", "require_receiver_role_proof", "permanent_policies"}
)

FIND, BLOCK, TX, ADMIN_TICK, WALLET_TICK, ACTION = "find", "block", "tx", "admin", "wallet", "action"


@dataclass(order=True)
class Event:
    time: float
    seq: int
    kind: str = field(compare=False)
    node: str = field(compare=False)
    payload: object = field(compare=False, default=None)


@dataclass(frozen=True)
class BlockInfo:
    block: Block
    miner: str
    time: float
    height: int

    @property
    def parent(self) -> bytes:
        return self.block.header.prev_hash


class SimNode:
    def __init__(self, spec, key: KeyPair, chain: Chain):
        self.spec = spec
        self.id = spec.id
        self.behavior = spec.behavior
        self.params = spec.params
        self.key = key
        self.chain = chain
        self.mempool: dict = {}
        self.confirmed: dict = {}  # pruned from the mempool; restored if a reorg drops them
        self.orphans: dict = {}
        self.revolting = False
        self.revolt_ms: Optional[int] = None
        self.withholding = False
        self.ticks = 0
        self.pending: Optional[tuple] = None  # wallet: (txid, sent_at)

    @property
    def is_miner(self) -> bool:
        return self.behavior in MINERS


class Simulation:
    """Single-threaded event loop; call :meth:`step` until it returns False, or :meth:`run`."""

    def __init__(self, scenario: SimScenario):
        self.scenario = scenario
        self.now = 0.0
        self._queue: list = []
        self._seq = 0
        self._rngs: dict = {}
        self.trace: list = []
        self.cache = ValidationCache()

        self.root = KeyPair.from_seed(SIM_KEY_BASE)
        self.config = self._genesis_config()
        self.keys = {self.root.public: self.root}
        self.nodes: dict = {}
        for i, spec in enumerate(scenario.nodes, start=1):
            key = self.root if spec.behavior == "Administrator" else KeyPair.from_seed(SIM_KEY_BASE + i)
            self.keys[key.public] = key
            self.nodes[spec.id] = SimNode(spec, key, Chain(self.config, COMPLIANT, self.cache))
        self.coalition = {n.id for n in self.nodes.values() if n.behavior == "RevoltingMiner"}
        self.genesis_hash = next(iter(self.nodes.values())).chain.genesis_hash

        self.blocks: dict = {}  # every block produced, by hash
        self.block_order: list = []
        self.admin_txs: dict = {}  # txid -> issue time
        self.refusals: list = []  # (time, node id, attempted height)
        self.resumes: list = []
        self.withholds: list = []
        self.revolts: list = []
        self.mining_errors: list = []
        self._extra_seed = 0

        self._bootstrap()
        self._schedule_initial()

    # -- setup -------------------------------------------------------------

    def _genesis_config(self) -> GenesisConfig:
        overrides = dict(self.scenario.genesis)
        unknown = set(overrides) - GENESIS_OVERRIDES
        if unknown:
            raise errors.BadScenario(f"unsupported genesis keys: {sorted(unknown)}")
        try:
            return GenesisConfig(root_pubkey=self.root.public, pow_target=TRIVIAL_TARGET, **overrides)
        except errors.BadConfig as exc:
            raise errors.BadScenario(f"genesis: {exc}") from exc

    def _bootstrap(self) -> None:
        """Blocks 1 and 2: U for every participant, then starting coins for wallets."""
        chain = next(iter(self.nodes.values())).chain
        members = [n for n in self.nodes.values() if n.key != self.root]
        grant = TxPlan(
            role_changes=[RoleGrant(self.root.public, n.key.public, True, Role.U) for n in members],
            policy_changes=[PolicySet(self.root.public, PolicyType.NOOP, 0)],
        )
        txs = [build_tx(grant, chain.state, self.keys)]
        self._bootstrap_block(chain, txs)
        wallets = [n for n in members if n.behavior == "Wallet"]
        txs = []
        if wallets:
            coins = TxPlan(creations=[(self.root.public, w.key.public, int(w.params.get("initial_coins", 1000)))
                                      for w in wallets])
            txs.append(build_tx(coins, chain.state, self.keys))
        self._bootstrap_block(chain, txs)

    def _bootstrap_block(self, chain: Chain, txs: list) -> None:
        block = chain.mine_block(txs, self.root, timestamp=0)
        self._register(block, "bootstrap", chain.height + 1)
        for node in self.nodes.values():
            node.chain.add_block(block)

    def _schedule_initial(self) -> None:
        for node in self.nodes.values():
            if node.is_miner and node.spec.hashpower > 0:
                self._schedule_find(node)
            elif node.behavior == "Administrator":
                self._push(0.0, ADMIN_TICK, node.id)
            elif node.behavior == "Wallet":
                self._push(self._rng(node.id, "wallet").uniform(0, self._interval(node)), WALLET_TICK, node.id)
            if node.behavior == "RevoltingMiner" and "revolt_at" in node.params:
                self._push(float(node.params["revolt_at"]), ACTION, node.id, ("revolt", {}))
        for a in self.scenario.actions:
            self._push(a.at, ACTION, a.node, (a.action, a.params))

    # -- event plumbing ----------------------------------------------------

    def _rng(self, node_id: str, purpose: str) -> random.Random:
        key = (node_id, purpose)
        rng = self._rngs.get(key)
        if rng is None:
            rng = self._rngs[key] = random.Random(f"{self.scenario.seed}:{node_id}:{purpose}")
        return rng

    def _push(self, time: float, kind: str, node: str, payload=None) -> None:
        heapq.heappush(self._queue, Event(time, self._seq, kind, node, payload))
        self._seq += 1

    def _latency(self, sender: str) -> float:
        lat = self.scenario.latency
        return float(lat.get("base", 0.0)) + self._rng(sender, "latency").uniform(0, float(lat.get("jitter", 0.0)))

    def _broadcast(self, sender: str, kind: str, payload, miners_only: bool = False) -> None:
        for node in self.nodes.values():
            if node.id == sender or (miners_only and not node.is_miner):
                continue
            self._push(self.now + self._latency(sender), kind, node.id, payload)

    def _schedule_find(self, node: SimNode) -> None:
        rate = float(node.spec.hashpower) / self.scenario.block_interval
        self._push(self.now + self._rng(node.id, "mining").expovariate(rate), FIND, node.id)

    def _interval(self, node: SimNode) -> float:
        return float(node.params.get("interval", 1.0))

    @property
    def pending(self) -> int:
        return len(self._queue)

    def step(self) -> bool:
        """Process the earliest event; False once the queue is empty."""
        if not self._queue:
            return False
        ev = heapq.heappop(self._queue)
        self.now = ev.time
        node = self.nodes[ev.node]
        detail = ""
        if ev.kind == FIND:
            detail = self._on_find(node)
        elif ev.kind == BLOCK:
            self._on_block(node, ev.payload)
            detail = ev.payload.hash.hex()[:16]
        elif ev.kind == TX:
            node.mempool.setdefault(ev.payload.txid, ev.payload)
            detail = ev.payload.txid.hex()[:16]
        elif ev.kind == ADMIN_TICK:
            self._on_admin_tick(node)
        elif ev.kind == WALLET_TICK:
            self._on_wallet_tick(node)
        elif ev.kind == ACTION:
            detail = self._on_action(node, *ev.payload)
        self.trace.append((ev.time, ev.kind, ev.node, detail))
        return True

    def run(self):
        from .report import build_report

        while self.step():
            pass
        return build_report(self)

    def trace_digest(self) -> str:
        h = hashlib.sha256()
        for t, kind, node, detail in self.trace:
            h.update(f"{t!r}|{kind}|{node}|{detail}\n".encode())
        return h.hexdigest()

    # -- behaviours ----------------------------------------------------------

    def _register(self, block: Block, miner: str, height: int) -> None:
        self.blocks[block.hash] = BlockInfo(block, miner, self.now, height)
        self.block_order.append(block.hash)

    def _on_find(self, node: SimNode) -> str:
        if self.now >= self.scenario.duration:
            return "stopped"
        self._schedule_find(node)
        chain = node.chain
        try:
            block = chain.assemble_block(node.mempool.values(), node.key, timestamp=int(self.now * 1000),
                                         exclude_management=node.revolting,
                                         max_txs=int(node.params.get("max_block_txs", DEFAULT_MAX_BLOCK_TXS)))
        except errors.QuotaViolation:
            self.refusals.append((self.now, node.id, chain.height + 1))
            return "refused"
        except errors.ManagedCoinError as exc:
            self.mining_errors.append((self.now, node.id, exc.code))
            return exc.code
        template = chain.last_template
        for txid in template.confirmed:
            node.confirmed[txid] = node.mempool.pop(txid)
        for txid in template.management:
            del node.mempool[txid]
        self._register(block, node.id, chain.height + 1)
        self._add(node, block)
        self._broadcast(node.id, BLOCK, block)
        return block.hash.hex()[:16]

    def _on_block(self, node: SimNode, block: Block) -> None:
        if node.revolting:
            info = self.blocks[block.hash]
            if info.miner not in self.coalition and block.header.timestamp >= node.revolt_ms:
                return
        stack = [block]
        chain = node.chain
        while stack:
            b = stack.pop()
            parent = b.header.prev_hash
            if parent not in chain.entries and parent not in chain.rejected:
                node.orphans.setdefault(parent, []).append(b)
                continue
            try:
                self._add(node, b)
            except errors.ManagedCoinError:
                pass
            stack.extend(node.orphans.pop(b.hash, ()))

    def _add(self, node: SimNode, block: Block) -> None:
        chain = node.chain
        old_tip = chain.tip
        chain.add_block(block)
        if chain.tip != old_tip and chain.tip_entry.parent != old_tip and node.confirmed:
            # reorg: anything no longer on the best chain goes back in the pool
            txindex = chain.state.txindex
            for txid in [t for t in node.confirmed if t not in txindex]:
                node.mempool[txid] = node.confirmed.pop(txid)

    def _on_admin_tick(self, node: SimNode) -> None:
        if self.now >= self.scenario.duration:
            return
        if not node.withholding:
            self._issue_management(node)
        self._push(self.now + self._interval(node), ADMIN_TICK, node.id)

    def _issue_management(self, node: SimNode) -> None:
        state = node.chain.state
        batch = int(node.params.get("batch", 1))
        grant_every = int(node.params.get("grant_every", 0))
        node.ticks += 1
        plans = [TxPlan(policy_changes=[PolicySet(node.key.public, PolicyType.NOOP, 0)])
                 for _ in range(batch)]
        if grant_every and node.ticks % grant_every == 0:
            self._extra_seed += 1
            newcomer = KeyPair.from_seed(SIM_KEY_BASE + 100_000 + self._extra_seed)
            plans.append(TxPlan(role_changes=[RoleGrant(node.key.public, newcomer.public, True, Role.U)]))
        for plan in plans:
            plan.locktime = len(self.admin_txs) + 1  # keeps otherwise identical txs distinct
            tx = build_tx(plan, state, self.keys)
            self.admin_txs[tx.txid] = self.now
            self._broadcast(node.id, TX, tx, miners_only=True)

    def _on_wallet_tick(self, node: SimNode) -> None:
        if self.now >= self.scenario.duration:
            return
        interval = self._interval(node)
        self._push(self.now + interval, WALLET_TICK, node.id)
        state = node.chain.state
        if node.pending is not None:
            txid, sent_at = node.pending
            if txid not in state.txindex and self.now - sent_at < 20 * interval:
                return
        peers = [n for n in self.nodes.values() if n.behavior == "Wallet" and n.id != node.id]
        if not peers:
            return
        receiver = self._rng(node.id, "wallet").choice(peers)
        node.ticks += 1
        plan = TxPlan(sends=[CoinSend(node.key.public, receiver.key.public, int(node.params.get("amount", 1)))],
                      locktime=node.ticks)
        try:
            tx = build_tx(plan, state, self.keys)
        except errors.ManagedCoinError:
            return
        node.pending = (tx.txid, self.now)
        self._broadcast(node.id, TX, tx, miners_only=True)

    def _on_action(self, node: SimNode, action: str, params: dict) -> str:
        if action == "withhold":
            node.withholding = True
            self.withholds.append(self.now)
        elif action == "resume":
            node.withholding = False
            self.resumes.append(self.now)
            if self.now < self.scenario.duration:
                self._issue_management(node)
        elif action == "revolt":
            node.revolting = True
            node.revolt_ms = int(self.now * 1000)
            node.chain.rules = RULESETS.get(params.get("rules", NO_QUOTA.name), NO_QUOTA)
            self.coalition.add(node.id)
            self.revolts.append(self.now)
        elif action == "switch_rules":
            name = params.get("rules", NO_QUOTA.name)
            if name not in RULESETS:
                raise errors.BadScenario(f"unknown rule-set {name!r}")
            node.chain.rules = RULESETS[name]
        return action


def run_scenario(scenario: SimScenario):
    """Run ``scenario`` to completion and return its :class:`SimReport`."""
    return Simulation(scenario).run()


def step(sim: Simulation) -> Simulation:
    sim.step()
    return sim
