"""Exhaustive small-instance cases comparing the validator with the oracle.

Each family yields ``(world, vins, vouts)`` triples.  :func:`compare` realizes
the world as a ledger snapshot, builds and signs the transaction, runs the
real validator and checks verdict, post-state and classification against
:func:`oracle.evaluate`.
"""

from __future__ import annotations

import hashlib
import itertools
from dataclasses import dataclass, field, replace

from immutables import Map

import oracle as O
from managedcoin import errors
from managedcoin.accounts import AccountNode, AccountTree, RoleRegistry
from managedcoin.codec import ROLE_ORDER, Role, Transaction, TxIn, TxOut, make_script_sig
from managedcoin.crypto import KeyPair
from managedcoin.genesis import TRIVIAL_TARGET, GenesisConfig
from managedcoin.ledger import LedgerState, QuotaState
from managedcoin.policy import PolicyRecord, PolicyState
from managedcoin.validation import ValidationContext

NAMES = ("R", "P", "X", "Y", "K", "K0", "KF", "S", "S0", "N", "N2", "B", "B0", "BF", "Q")
KEYS = {n: KeyPair.from_seed(9_000 + i) for i, n in enumerate(NAMES)}
PUB = {n: k.public for n, k in KEYS.items()}
NAME_OF = {v: k for k, v in PUB.items()}
STRANGER = KeyPair.from_seed(8_999)

SUBSETS = ["".join(c for c, bit in zip(O.LETTERS, bits) if bit)
           for bits in itertools.product((1, 0), repeat=5)]  # all 32, "MCLUA" first
NONEMPTY = [s for s in SUBSETS if s]


_LETTERS = {int(sum(r for r in ROLE_ORDER if r.name in s)): s for s in SUBSETS}
_FLAGS = {frozenset(s): Role(v) for v, s in _LETTERS.items()}


def flags(letters) -> Role:
    return _FLAGS[frozenset(letters)]


def letters(roles: Role) -> str:
    return _LETTERS[int(roles)]


def outpoint(tag: str, ref: str) -> tuple:
    return (hashlib.sha256(f"{tag}:{ref}".encode()).digest(), 0)


# -- worlds ------------------------------------------------------------------


def make_world(layout: dict, *, policy: dict = (), permanent: tuple = (), coins: dict = (),
               receiver_proof: bool = True, label: str = "") -> O.World:
    """``layout`` maps name -> (parent, roles, frozen); listing order sets M-grant order."""
    accounts, grants = {}, {}
    for i, (name, (parent, roles, frozen)) in enumerate(layout.items()):
        accounts[name] = O.Acct(parent, frozenset(roles), frozen)
        if roles:
            grants[name] = O.Grant(name, frozenset(roles), frozenset(roles))
        else:
            grants[name] = O.Grant(name, frozenset("U"), frozenset())  # U was taken away
    w = O.World(accounts, grants, dict(coins), receiver_proof=receiver_proof, label=label)
    for i, name in enumerate(layout):
        if "M" in accounts[name].roles:
            accounts[name].authority = (0, 0, 0) if name == "R" else (w.depth(name), 1, i)
    for k, (ptype, value) in enumerate(dict(policy).items()):
        w.records.setdefault(ptype, []).append(O.Rec("R", (0, 0, 0), (2, 0, k), value))
    for k, (issuer, ptype, value) in enumerate(permanent):
        w.records.setdefault(ptype, []).append(
            O.Rec(issuer, accounts[issuer].authority, (3, 0, k), value, True))
        w.permanent.add((issuer, ptype))
    return w


@dataclass
class Realized:
    state: LedgerState
    config: GenesisConfig


_CONFIGS = {}


def realize(w: O.World) -> Realized:
    nodes = {}
    for name, a in w.accounts.items():
        parent = PUB[a.parent] if a.parent else None
        nodes[PUB[name]] = AccountNode(PUB[name], parent, flags(a.roles), a.frozen, (1, 0, 0), a.authority)
    tree = AccountTree(Map(nodes), PUB["R"])
    reg = RoleRegistry()
    for gid, g in w.grants.items():
        op = outpoint("grant", gid)
        reg = reg.grant(op, PUB[g.account], flags("".join(g.roles)))
        if g.active != g.roles:
            rec = replace(reg.grants[op], active=flags("".join(g.active)))
            reg = RoleRegistry(reg.grants.set(op, rec), reg.by_account)
    policy = PolicyState.initial()
    recs = sorted(((r.position, t, r) for t, rs in w.records.items() for r in rs), key=lambda x: x[:2])
    for position, ptype, r in recs:
        policy = policy.apply(PolicyRecord(ptype, r.param, r.permanent, PUB[r.issuer], r.priority, position))
    utxos = Map({outpoint("coin", cid): (PUB[owner], amt) for cid, (owner, amt) in w.coins.items()})
    spent_txid = outpoint("spent", "x")[0]
    txindex = Map({spent_txid: (TxOut.coin(5, PUB["R"]).n_value,)})
    config = _CONFIGS.get(w.receiver_proof)
    if config is None:
        config = _CONFIGS[w.receiver_proof] = GenesisConfig(
            root_pubkey=PUB["R"], pow_target=TRIVIAL_TARGET, require_receiver_role_proof=w.receiver_proof)
    state = LedgerState(O.HEIGHT - 1, bytes(32), tree, reg, policy, QuotaState(1, 0), utxos, txindex)
    return Realized(state, config)


# -- transactions ----------------------------------------------------------------


def _vin_source(w: O.World, v: O.Vin) -> tuple:
    if v.kind == "coin":
        return outpoint("coin", v.ref), w.coins[v.ref][0]
    if v.kind == "grant":
        return outpoint("grant", v.ref), w.grants[v.ref].account
    if v.kind == "spent":
        return (outpoint("spent", "x")[0], 0), "R"
    return outpoint("missing", v.ref or "x"), "R"


def _vout(o) -> TxOut:
    if isinstance(o, O.CoinOut):
        return TxOut.coin(o.amount, PUB[o.owner])
    if isinstance(o, O.RoleOut):
        return TxOut.role(o.add, flags(o.roles), PUB[o.target])
    return TxOut.policy(o.ptype, o.param, PUB[o.issuer], o.permanent)


_TX_CACHE: dict = {}


def build(w: O.World, vins: tuple, vouts: tuple) -> Transaction:
    sources = [_vin_source(w, v) for v in vins]
    key = (vins, vouts, tuple(owner for _, owner in sources))
    tx = _TX_CACHE.get(key)
    if tx is not None:
        return tx
    tx = Transaction(tuple(TxIn(op[0], op[1]) for op, _ in sources), tuple(_vout(o) for o in vouts))
    digest = tx.digest
    scripts = []
    for v, (_, owner) in zip(vins, sources):
        if v.sig == "ok":
            scripts.append(make_script_sig(KEYS[owner].sign(digest), PUB[owner]))
        elif v.sig == "bad":
            scripts.append(make_script_sig(STRANGER.sign(digest), PUB[owner]))
        elif v.sig == "wrongkey":
            scripts.append(make_script_sig(STRANGER.sign(digest), STRANGER.public))
        else:
            scripts.append(b"")
    tx = _TX_CACHE[key] = tx.with_script_sigs(scripts)
    return tx


# -- comparison ------------------------------------------------------------------


def real_snapshot(state: LedgerState, res) -> dict:
    accounts = {}
    for pk, node in res.tree.nodes.items():
        parent = NAME_OF[node.parent] if node.parent else None
        accounts[NAME_OF[pk]] = (parent, letters(node.roles), node.frozen, node.authority)
    grants = sorted((NAME_OF[r.account_id], letters(r.roles), letters(r.active))
                    for r in res.registry.grants.values())
    coins = dict(state.utxos)
    for op in res.spent:
        del coins[op]
    for op, pk, amt in res.coin_outs:
        coins[op] = (pk, amt)
    return {
        "accounts": accounts,
        "grants": grants,
        "policy": [res.policy.effective(t) for t in range(16)],
        "permanent": sorted((NAME_OF[i], t) for i, t in res.policy.permanent.keys()),
        "coins": sorted((NAME_OF[pk], amt) for pk, amt in coins.values()),
    }


@dataclass
class Tally:
    total: int = 0
    accepted: int = 0
    mismatches: list = field(default_factory=list)

    @property
    def agree(self) -> int:
        return self.total - len(self.mismatches)


def compare(w: O.World, vins: tuple, vouts: tuple, realized: Realized) -> tuple:
    """(oracle verdict, None or a description of how the validator differs)."""
    expected = O.evaluate(w, vins, vouts)
    tx = build(w, vins, vouts)
    ctx = ValidationContext(realized.state, realized.config)
    try:
        res = ctx.check_tx(tx)
    except errors.ManagedCoinError as exc:
        if expected.ok:
            return True, f"validator rejected ({exc.code}: {exc}) but oracle accepted"
        return False, None
    if not expected.ok:
        return False, f"validator accepted but oracle rejected ({expected.reason})"
    c = res.classification
    got = (c.created, c.fee, c.is_management)
    want = (expected.created, expected.fee, expected.management)
    if got != want:
        return True, f"classification {got} != {want}"
    real = real_snapshot(realized.state, res)
    ref = O.snapshot(expected.world)
    if real != ref:
        diff = {k: (real[k], ref[k]) for k in real if real[k] != ref[k]}
        return True, f"post-state differs: {diff}"
    return True, None


def run(cases, tally: Tally = None, limit_mismatches: int = 25) -> Tally:
    tally = tally or Tally()
    realized: dict = {}
    for w, vins, vouts in cases:
        r = realized.get(id(w))
        if r is None:
            r = realized[id(w)] = (realize(w), w)  # keep w alive so id() stays unique
        accepted, problem = compare(w, vins, vouts, r[0])
        tally.total += 1
        tally.accepted += accepted
        if problem is not None:
            detail = (w.label, vins, vouts, problem) if len(tally.mismatches) < limit_mismatches else None
            tally.mismatches.append(detail)
    return tally


# -- families --------------------------------------------------------------------

DISABLE = (None, "M", "C", "L", "U", "A")


def _disable(letter):
    return {O.SWITCH[letter]: 0} if letter else {}


def _tree_layouts():
    """Small trees around an authority account X (never more than five accounts)."""
    yield "x1-child", {"R": (None, "MCLUA", False), "X": ("R", "", False),
                       "K": ("X", "U", False), "K0": ("X", "", False), "KF": ("X", "", True)}
    yield "x1-side", {"R": (None, "MCLUA", False), "X": ("R", "", False),
                      "S": ("R", "U", False), "S0": ("S", "", False), "K": ("X", "U", False)}
    yield "x2-child", {"R": (None, "MCLUA", False), "P": ("R", "U", False), "X": ("P", "", False),
                       "K": ("X", "U", False), "KF": ("X", "", True)}
    yield "x2-side", {"R": (None, "MCLUA", False), "P": ("R", "", False), "X": ("P", "", False),
                      "S": ("R", "U", False), "S0": ("S", "", False)}


def _with_roles(layout: dict, name: str, roles: str) -> dict:
    out = dict(layout)
    parent, _, frozen = out[name]
    out[name] = (parent, roles, frozen)
    return out


def single_authority():
    """One signed grant of X, every role set X can hold, one role-change vout."""
    for label, layout in _tree_layouts():
        targets = [*layout, "N"]
        for rx in SUBSETS:
            for off in DISABLE:
                w = make_world(_with_roles(layout, "X", rx), policy=_disable(off),
                               label=f"{label} X={rx or '-'} off={off}")
                for target in targets:
                    for roles in NONEMPTY:
                        for add in (True, False):
                            yield w, (O.Vin("grant", "X"),), (O.RoleOut(target, add, roles),)


def two_authorities():
    """X plus a second signer, both orders, a spread of role sets."""
    partner_sets = ("", "U", "A", "L", "M", "MU", "LA", "MCLUA")
    vout_sets = ("U", "M", "A", "L", "C", "MU", "UA", "MCLUA")
    for label, layout in _tree_layouts():
        partners = [n for n in layout if n not in ("R", "X")]
        targets = [*layout, "N"]
        for partner in partners:
            for rx in SUBSETS:
                for ry in partner_sets:
                    base = _with_roles(_with_roles(layout, "X", rx), partner, ry)
                    w = make_world(base, label=f"{label} X={rx or '-'} {partner}={ry or '-'}")
                    for order in ((partner, "X"), ("X", partner)):
                        vins = tuple(O.Vin("grant", n) for n in order)
                        for target in targets:
                            for roles in vout_sets:
                                for add in (True, False):
                                    yield w, vins, (O.RoleOut(target, add, roles),)


def signature_variants():
    """Bad, foreign-key and missing signatures on role inputs, plus unknown and spent inputs."""
    for label, layout in _tree_layouts():
        for rx in ("MCLUA", "U", "A", "L"):
            w = make_world(_with_roles(layout, "X", rx), label=f"{label} X={rx}")
            for sig in ("ok", "bad", "wrongkey", "none"):
                for roles in ("U", "M"):
                    vout = (O.RoleOut("N", True, roles),)
                    yield w, (O.Vin("grant", "X", sig),), vout
                    yield w, (O.Vin("grant", "X"), O.Vin("grant", "R", sig)), vout
            yield w, (O.Vin("grant", "X"), O.Vin("missing", "a")), (O.RoleOut("N", True, "U"),)
            yield w, (O.Vin("grant", "X"), O.Vin("spent")), (O.RoleOut("N", True, "U"),)
            yield w, (O.Vin("grant", "X"), O.Vin("grant", "X")), (O.RoleOut("N", True, "U"),)
            yield w, (O.Vin("grant", "X"),), ()
            yield w, (), (O.RoleOut("N", True, "U"),)


COIN_POLICIES = ({}, {12: 1}, {5: 0}, {3: 0}, {2: 0}, {1: 0}, {6: 1})


def coin_transfers():
    """One coin input (signed, unsigned or badly signed) with optional role proofs.

    Owners: B (U, depth 2), B0 (no roles, depth 2), BF (frozen, depth 2) and X itself.
    """
    layout = {"R": (None, "MCLUA", False), "X": ("R", "", False), "B": ("X", "U", False),
              "B0": ("X", "", False), "BF": ("X", "", True)}
    coins = {"cB": ("B", 10), "cB0": ("B0", 10), "cBF": ("BF", 10), "cX": ("X", 10)}
    receivers = ("B", "B0", "BF", "X", "N")
    for proof in (True, False):
        for pol in COIN_POLICIES:
            for rx in SUBSETS:
                w = make_world(_with_roles(layout, "X", rx), policy=pol, coins=coins, receiver_proof=proof,
                               label=f"X={rx or '-'} pol={pol} proof={proof}")
                for cid, (owner, _) in coins.items():
                    for sig in ("ok", "none", "bad"):
                        for receiver in receivers:
                            for amount in (9, 10, 11):
                                vout = (O.CoinOut(receiver, amount),)
                                for extra in _proof_vins(owner, receiver):
                                    yield w, (O.Vin("coin", cid, sig), *extra), vout


def _proof_vins(owner: str, receiver: str):
    """Role inputs accompanying a coin input: none, X, owner, receiver, and pairs (max 3 vins total)."""
    names = ["X", owner, receiver]
    seen = set()
    for k in range(3):
        for combo in itertools.combinations(names, k):
            combo = tuple(dict.fromkeys(combo))
            if combo in seen or "N" in combo:
                continue
            seen.add(combo)
            yield tuple(O.Vin("grant", n) for n in combo)


def policy_changes():
    """Policy vouts over every type (plus one past the table), edge parameters and issuers."""
    layout = {"R": (None, "MCLUA", False), "X": ("R", "", False), "K": ("X", "MU", False)}
    vin_sets = (("X",), ("R",), ("X", "R"), ("K", "X"), ("K",))
    params = (0, 1, 2, 2**32 - 1)
    for rx in SUBSETS:
        perm = (("X", 8, 40),) if "M" in rx else ()
        for off in (None, "M"):
            pol = {11: 1000, **_disable(off)}
            w = make_world(_with_roles(layout, "X", rx), policy=pol, permanent=perm,
                           label=f"X={rx or '-'} off={off}")
            for names in vin_sets:
                vins = tuple(O.Vin("grant", n) for n in names)
                for issuer in ("X", "R", "K"):
                    for ptype in range(17):
                        for param in params:
                            for permanent in (False, True):
                                yield w, vins, (O.PolicyOut(issuer, ptype, param, permanent),)


def mixed_vouts():
    """Two and three vouts per tx: sequential role changes, stacked policies, role plus coin."""
    layout = {"R": (None, "MCLUA", False), "X": ("R", "", False), "K": ("X", "U", False),
              "KF": ("X", "", True), "S": ("R", "U", False)}
    coins = {"cK": ("K", 10)}
    singles = [O.RoleOut(t, add, roles) for t in ("K", "KF", "S", "N", "X")
               for add in (True, False) for roles in ("U", "M", "A", "MU")]
    singles += [O.PolicyOut("X", t, p, perm) for t, p in ((11, 500), (10, 400), (10, 600), (8, 7), (15, 0))
                for perm in (False, True)]
    singles += [O.CoinOut("K", 10), O.CoinOut("N", 3)]
    for rx in SUBSETS:
        w = make_world(_with_roles(layout, "X", rx), coins=coins, label=f"mixed X={rx or '-'}")
        for vins in ((O.Vin("grant", "X"),), (O.Vin("grant", "X"), O.Vin("grant", "K"))):
            for a, b in itertools.product(singles, repeat=2):
                yield w, vins, (a, b)
        for a, b, c in itertools.product(singles[:8] + singles[40:44], repeat=3):
            yield w, (O.Vin("grant", "X"), O.Vin("coin", "cK")), (a, b, c)


FAMILIES = {
    "single_authority": single_authority,
    "two_authorities": two_authorities,
    "signature_variants": signature_variants,
    "coin_transfers": coin_transfers,
    "policy_changes": policy_changes,
    "mixed_vouts": mixed_vouts,
}
