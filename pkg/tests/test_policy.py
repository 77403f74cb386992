from fractions import Fraction
from itertools import permutations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import policy_chains
from managedcoin import errors
from managedcoin.policy import (
    BINARY_TYPES,
    PolicyRecord,
    PolicyState,
    PolicyType,
    Q32_MAX,
    check_param,
    compare_authority,
    q32,
    q32_value,
    resolve,
)

ROOT_KEY = (0, 0, 0)
ISSUERS = {b"root": (0, 0, 0), b"m1": (1, 5, 0), b"m2": (2, 7, 1)}


def record(issuer: bytes, ptype: int, param: int, position: tuple, permanent=False, key=None) -> PolicyRecord:
    return PolicyRecord(ptype, param, permanent, issuer, key or ISSUERS[issuer], position)


@pytest.mark.parametrize(
    "a, b",
    [((0, 0, 0), (1, 5, 0)), ((1, 5, 0), (1, 9, 0)), ((1, 5, 0), (1, 5, 2))],
)
def test_authority_examples(a, b):
    assert compare_authority(a, b) == -1
    assert compare_authority(b, a) == 1
    assert compare_authority(a, a) == 0


def test_defaults():
    state = PolicyState.initial()
    assert all(state.effective(t) == 1 for t in BINARY_TYPES)
    assert state.effective(PolicyType.C_CREATION_LIMIT) == 0
    assert state.effective(PolicyType.MANUAL_REWARD) == 50
    assert state.effective(PolicyType.MAX_DECAY_RATE) == Q32_MAX
    assert state.effective(PolicyType.QUOTA_MIN) == 1
    with pytest.raises(errors.UnknownType):
        state.effective(16)


def test_genesis_numeric_defaults():
    state = PolicyState.initial({12: 7})
    assert state.effective(12) == 7
    with pytest.raises(errors.UnknownType):
        PolicyState.initial({3: 0})


def test_deeper_issuer_does_not_override():
    state = PolicyState.initial()
    state = state.apply(record(b"m1", 12, 10, (3, 1, 0)))
    state = state.apply(record(b"m2", 12, 3, (4, 1, 0)))
    assert state.effective(12) == 10


def test_single_record_and_latest_wins():
    state = PolicyState.initial().apply(record(b"root", 8, 50, (1, 1, 0)))
    assert state.effective(8) == 50
    state = state.apply(record(b"root", 8, 40, (2, 1, 0)))
    assert state.effective(8) == 40


def test_same_block_later_vout_wins_for_one_issuer():
    state = PolicyState.initial()
    state = state.apply(record(b"m1", 6, 5, (3, 1, 1)))
    state = state.apply(record(b"m1", 6, 9, (3, 1, 0)))
    assert state.effective(6) == 5


def test_permanence():
    state = PolicyState.initial().apply(record(b"root", 13, 0, (1, 1, 0), permanent=True))
    with pytest.raises(errors.PermanenceViolation):
        state.apply(record(b"root", 13, 5, (2, 1, 0)))
    # other issuers may still append; they just never win
    state = state.apply(record(b"m1", 13, 5, (2, 1, 0)))
    assert state.effective(13) == 0


def test_noop_leaves_state_alone():
    state = PolicyState.initial()
    assert state.apply(record(b"root", 15, 0, (1, 1, 0))) is state
    with pytest.raises(errors.BadParam):
        state.apply(record(b"root", 15, 1, (1, 1, 0)))


def test_decay_rate_above_max_rejected():
    state = PolicyState.initial().apply(record(b"root", 11, q32(Fraction(1, 4)), (1, 1, 0)))
    state = state.apply(record(b"root", 10, q32(Fraction(1, 4)), (2, 1, 0)))
    with pytest.raises(errors.DecayRateExceedsMax):
        state.apply(record(b"root", 10, q32(Fraction(1, 2)), (3, 1, 0)))


@pytest.mark.parametrize(
    "ptype, param, error",
    [(16, 0, errors.UnknownType), (3, 2, errors.BadParam), (8, 2**32, errors.BadParam), (15, 3, errors.BadParam)],
)
def test_check_param(ptype, param, error):
    with pytest.raises(error):
        check_param(ptype, param)


def test_q32():
    assert q32(0) == 0 and q32(1) == Q32_MAX
    assert q32_value(q32(Fraction(1, 2))) == Fraction(1, 2)
    with pytest.raises(ValueError):
        q32(Fraction(3, 2))


@pytest.mark.parametrize("present", [s for n in range(1, 4) for s in permutations(ISSUERS, n)])
def test_shadow_activation_every_ordering(present):
    """Whatever order issuers append in, the most authoritative one present wins."""
    state = PolicyState.initial()
    for i, issuer in enumerate(present):
        state = state.apply(record(issuer, 12, 100 + i, (i + 1, 1, 0)))
    best = min(present, key=ISSUERS.get)
    assert state.effective(12) == 100 + present.index(best)


keys = st.tuples(st.integers(0, 4), st.integers(0, 20), st.integers(0, 3))


@given(st.lists(st.tuples(keys, st.integers(0, 2**32 - 1)), min_size=1, max_size=12))
def test_resolution_matches_brute_force(entries):
    recs = [PolicyRecord(8, p, False, bytes([i]), k, (i, 0, 0)) for i, (k, p) in enumerate(entries)]
    top = min(k for k, _ in entries)
    expected = [p for k, p in entries if k == top][-1]
    assert resolve(recs).param == expected
    state = PolicyState.initial()
    for r in recs:
        state = state.apply(r)
    assert state.effective(8) == expected


@settings(max_examples=40)
@given(st.integers(0, 2**32 - 1))
def test_three_issuer_chains(seed):
    policy_chains.run_chain(seed)
