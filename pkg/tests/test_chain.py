import random
from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

import chaingen
from managedcoin.builder import CoinSend, TxPlan, build_tx
from managedcoin import errors
from managedcoin.chain import Chain, apply_block, init_genesis
from managedcoin.codec import ALL_ROLES, Block, BlockHeader, Role, merkle_root, serialize_block
from managedcoin.genesis import TRIVIAL_TARGET, GenesisConfig, block_reward, decayed_reward
from managedcoin.policy import PolicyRecord, q32
from managedcoin.store import ChainStore

from rewards import Q32, cfg, check_reward_case, policy_with, random_reward_case
from support import Harness, key


# -- genesis ---------------------------------------------------------------------


def test_init_genesis():
    chain = init_genesis(cfg())
    state = chain.state
    assert chain.height == 0 and state.height == 0
    assert state.tree.active_roles(key(1).public) == ALL_ROLES
    assert state.tree.depth(key(1).public) == 0
    assert state.balance(key(1).public) == 0 and not state.utxos


def test_identical_configs_share_genesis():
    assert init_genesis(cfg()).tip == init_genesis(cfg()).tip
    assert init_genesis(cfg()).tip != init_genesis(cfg(initial_reward=51)).tip


def test_permanent_quota_off_at_genesis():
    h = Harness(permanent_policies=[(13, 0)])
    assert h.state.policy.effective(13) == 0
    with pytest.raises(errors.PermanenceViolation):
        h.chain.mine_block([h.policy(13, 5)], h.root)


def test_bad_config():
    with pytest.raises(errors.BadConfig):
        GenesisConfig(root_pubkey=b"\x02" * 10)
    with pytest.raises(errors.BadConfig):
        GenesisConfig(root_pubkey=key(1).public, pow_target=bytes(32))


def test_config_json_round_trip():
    c = cfg(policy_defaults={12: 2, 6: 10}, permanent_policies=[(13, 0)], require_receiver_role_proof=False)
    assert GenesisConfig.from_json(c.to_json()) == c


# -- block application -----------------------------------------------------------


def test_apply_block_advances_tip():
    chain = init_genesis(cfg())
    block = chain.mine_block([], key(1))
    assert apply_block(chain, block) is chain
    assert chain.height == 1 and chain.tip == block.hash


def test_empty_block_and_trivial_target(harness):
    block = harness.chain.mine_block([], harness.root)
    assert len(block.txs) == 1 and block.txs[0].is_coinbase
    assert block.header.nonce == 0  # the all-ff target accepts the first header tried
    harness.chain.add_block(block)
    assert harness.state.balance(harness.root.public) == 50


def test_rejected_block_leaves_state(harness):
    before = harness.state.summary_bytes()
    block = harness.chain.mine_block([], harness.root)
    forged = type(block)(block.header, block.txs + block.txs)
    with pytest.raises(errors.ManagedCoinError):
        harness.chain.add_block(forged)
    assert harness.state.summary_bytes() == before


def test_unknown_parent(harness):
    other = Harness(initial_reward=7)
    other.mine()
    with pytest.raises(errors.UnknownParent):
        harness.chain.add_block(other.chain.mine_block([], other.root))


def test_equal_work_keeps_first_seen(harness):
    parent = harness.chain.tip
    a = harness.chain.mine_block([], harness.root, parent=parent, extra=b"a")
    b = harness.chain.mine_block([], harness.root, parent=parent, extra=b"b")
    harness.chain.add_block(a)
    harness.chain.add_block(b)
    assert harness.chain.tip == a.hash


def _branch(h: Harness, fork: bytes, length: int, tag: bytes, funded) -> list:
    """Mine ``length`` blocks on top of ``fork``, adding each to the chain."""
    blocks, parent = [], fork
    for i in range(length):
        state = h.chain.entry(parent).state
        sender, receiver = funded if i % 2 == 0 else funded[::-1]
        txs = []
        if state.balance(sender.public) > 2:
            txs.append(build_tx(TxPlan(sends=[CoinSend(sender.public, receiver.public, 1 + i)], locktime=tag[0]),
                                state, h.keys))
        block = h.chain.mine_block(txs, h.root, parent=parent, extra=tag + bytes([i]))
        h.chain.add_block(block)
        blocks.append(block)
        parent = block.hash
    return blocks


def test_reorg_matches_fresh_replay(harness):
    u1 = harness.user(coins=40)
    u2 = harness.user(coins=40)
    fork = harness.chain.tip
    short = _branch(harness, fork, 3, b"s", (u1, u2))
    assert harness.chain.tip == short[-1].hash
    long = _branch(harness, fork, 4, b"l", (u2, u1))
    assert harness.chain.tip == long[-1].hash

    fresh = Chain(harness.config)
    for h in harness.chain.branch()[1:]:
        fresh.add_block(harness.chain.entry(h).block)
    assert fresh.tip == harness.chain.tip
    assert fresh.state.summary_bytes() == harness.state.summary_bytes()
    assert not set(fresh.branch()) & {b.hash for b in short}


def test_mismatched_body_does_not_poison_header(harness):
    block = harness.chain.mine_block([], harness.root)
    forged = type(block)(block.header, block.txs + block.txs)
    with pytest.raises(errors.BadMerkleRoot):
        harness.chain.add_block(forged)
    harness.chain.add_block(block)
    assert harness.chain.tip == block.hash


def test_invalid_ancestor_propagates(harness):
    greedy = harness.chain.build_coinbase(harness.state, harness.root, 10**6)
    header = BlockHeader(harness.chain.tip, merkle_root([greedy.txid]), 1, TRIVIAL_TARGET, 0)
    bad = Block(header, (greedy,))
    with pytest.raises(errors.ExcessReward):
        harness.chain.add_block(bad)
    coinbase = harness.chain.build_coinbase(harness.state, harness.root, 1)
    child = Block(BlockHeader(bad.hash, merkle_root([coinbase.txid]), 2, TRIVIAL_TARGET, 0), (coinbase,))
    with pytest.raises(errors.InvalidAncestor):
        harness.chain.add_block(child)
    assert harness.chain.height == 0


def test_mine_block_refuses_quota_shortfall():
    h = Harness(policy_defaults={13: 2})  # n = 2 and the default k = 1
    h.mine()
    with pytest.raises(errors.QuotaViolation):
        h.chain.mine_block([], h.root)
    h.mine(h.policy(15, 0))
    h.mine()
    h.mine(h.policy(15, 0, locktime=1))


# -- rewards ---------------------------------------------------------------------


@pytest.mark.parametrize("manual, floor, expected", [(50, 10, 50), (5, 10, 10)])
def test_manual_reward(manual, floor, expected):
    assert block_reward(policy_with(t7=0, t8=manual, t9=floor), cfg(), 7) == expected


def test_self_adjusting_example():
    policy = policy_with(t10=q32(Fraction(1, 2)))
    assert block_reward(policy, cfg(initial_reward=64, reward_epoch=2), 5) == 16


def test_decay_capped_at_max():
    policy = policy_with(t11=q32(Fraction(1, 4)), t10=q32(Fraction(1, 4)))
    with pytest.raises(errors.DecayRateExceedsMax):
        policy.apply(PolicyRecord(10, q32(Fraction(1, 2)), False, b"root", (0, 0, 0), (2, 1, 0)))
    lowered = policy.apply(PolicyRecord(11, q32(Fraction(1, 8)), False, b"root", (0, 0, 0), (3, 1, 0)))
    assert block_reward(lowered, cfg(initial_reward=64, reward_epoch=1), 1) == 56


def test_reward_schedule_random_tuples():
    rng = random.Random(20_260_1016)
    failures = [c for c in (random_reward_case(rng) for _ in range(300)) if not check_reward_case(c)]
    assert failures == []


@given(st.integers(0, 2**40), st.integers(1, Q32 - 1), st.integers(0, 300))
def test_decay_matches_exact_power(initial, rate, epochs):
    assert decayed_reward(initial, rate, epochs) == (initial * (Q32 - rate) ** epochs) >> (32 * epochs)


@given(st.integers(1, 2**40), st.integers(1, Q32 - 1), st.integers(1, 50))
def test_reward_never_increases(initial, rate, epoch):
    policy = policy_with(t10=rate)
    config = cfg(initial_reward=initial, reward_epoch=epoch)
    rewards = [block_reward(policy, config, h) for h in range(0, 40 * epoch, max(1, epoch // 3))]
    assert rewards == sorted(rewards, reverse=True)


# -- supply and replay -----------------------------------------------------------


@pytest.mark.parametrize("seed", [0, 1])
def test_supply_audit(seed):
    gen = chaingen.generate(seed, blocks=120)
    result = chaingen.audit(gen)
    state = gen.chain.state
    assert result.utxo_total == result.rewards + result.created
    assert state.supply.utxo_total == sum(a for _, a in state.utxos.values()) == result.utxo_total
    assert result.max_created_over_limit <= 0


def test_replay_is_byte_identical():
    gen = chaingen.generate(5, blocks=60)
    first = chaingen.replay(gen.config, gen.blocks_raw)
    second = chaingen.replay(gen.config, gen.blocks_raw)
    assert first.state.summary_bytes() == second.state.summary_bytes() == gen.chain.state.summary_bytes()


# -- persistence -----------------------------------------------------------------


def test_store_round_trip(tmp_path):
    h = Harness()
    store = ChainStore.init(tmp_path / "node", h.config)
    assert store.manifest()["height"] == 0
    for _ in range(3):
        block = h.mine(h.grant(h.new_key(), Role.U))
        store.append(block, h.chain)
    manifest = store.manifest()
    assert manifest["height"] == 3 and manifest["tip"] == h.chain.tip.hex()
    loaded = store.load()
    assert loaded.tip == h.chain.tip
    assert loaded.state.summary_bytes() == h.state.summary_bytes()
    assert [serialize_block(b) for b in store.blocks()] == [serialize_block(h.chain.entry(b).block) for b in h.chain.branch()[1:]]
