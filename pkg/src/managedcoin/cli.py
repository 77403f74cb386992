"""``managedcoin`` command line.

Successful commands print canonical JSON (or bare hex) on stdout.  Failures
print a message and then the stable error code as the last line of stderr,
and exit with status 1.
"""

from __future__ import annotations

import argparse
import json
import re
import sys
from pathlib import Path

import yaml

from . import errors
from .builder import CoinSend, PolicySet, RoleGrant, TxPlan, build_tx
from .codec import (
    PUBKEY_SIZE,
    CoinTransfer,
    PolicyChange,
    RoleChange,
    decode_nvalue,
    deserialize_block,
    deserialize_tx,
    parse_roles,
    role_letters,
    serialize_block,
    serialize_tx,
)
from .crypto import DEFAULT_SCHEME, KeyPair
from .genesis import GenesisConfig
from .store import ChainStore, canonical_json
from .validation import ValidationContext, validate_block


# -- key files ----------------------------------------------------------------


def write_key_file(path, key: KeyPair, label: str | None = None) -> None:
    data = {"scheme": key.scheme, "private": key.private.hex(), "public": key.public.hex()}
    if label:
        data["label"] = label
    Path(path).write_text(canonical_json(data) + "\n")


def read_key_file(path) -> KeyPair:
    try:
        data = json.loads(Path(path).read_text())
        key = KeyPair.from_private(bytes.fromhex(data["private"]), data.get("scheme", DEFAULT_SCHEME))
    except (KeyError, ValueError) as exc:
        raise errors.BadConfig(f"{path}: not a key file ({exc})") from exc
    if "public" in data and bytes.fromhex(data["public"]) != key.public:
        raise errors.BadConfig(f"{path}: public key does not match private key")
    return key


# -- tx specs -------------------------------------------------------------------


class TxSpecCompiler:
    """Turns a declarative tx spec (YAML/JSON) into a :class:`TxPlan` and a key ring.

    Accounts are named through ``keys`` (name -> key file, signing capable) or
    ``accounts`` (name -> public key hex), or given directly as 66-char hex.
    """

    def __init__(self, spec: dict, base: Path, extra_keys=()):
        self.spec = spec
        self.names: dict = {}
        self.keys: dict = {}
        for name, path in (spec.get("keys") or {}).items():
            key = read_key_file(base / path)
            self.names[name] = key.public
            self.keys[key.public] = key
        for path in extra_keys:
            key = read_key_file(path)
            self.keys[key.public] = key
            self.names.setdefault(Path(path).stem, key.public)
        for name, pub in (spec.get("accounts") or {}).items():
            self.names[name] = self._hex_pubkey(pub)

    def _hex_pubkey(self, text: str) -> bytes:
        try:
            pub = bytes.fromhex(text)
        except ValueError:
            pub = b""
        if len(pub) != PUBKEY_SIZE:
            raise errors.UnresolvableInput(f"unknown account {text!r}")
        return pub

    def account(self, ref) -> bytes:
        ref = str(ref)
        return self.names[ref] if ref in self.names else self._hex_pubkey(ref)

    def plan(self) -> TxPlan:
        s = self.spec
        try:
            return TxPlan(
                sends=[CoinSend(self.account(x["from"]), self.account(x["to"]), int(x["amount"]),
                                self.account(x["forced_by"]) if x.get("forced_by") else None)
                       for x in s.get("sends") or ()],
                role_changes=[RoleGrant(self.account(x["coverer"]), self.account(x["target"]),
                                        _add_flag(x.get("action", "add")), parse_roles(str(x["roles"])))
                              for x in s.get("role_changes") or ()],
                policy_changes=[PolicySet(self.account(x["issuer"]), int(x["type"]), int(x["param"]),
                                          bool(x.get("permanent", False)))
                                for x in s.get("policy_changes") or ()],
                creations=[(self.account(x["by"]), self.account(x["to"]), int(x["amount"]))
                           for x in s.get("creations") or ()],
                fee=None if s.get("fee") is None else int(s["fee"]),
                locktime=int(s.get("locktime", 0)),
                receiver_proof=bool(s.get("receiver_proof", True)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise errors.UnresolvableInput(f"malformed tx spec: {exc!r}") from exc


def _add_flag(action: str) -> bool:
    if action not in ("add", "remove"):
        raise errors.UnresolvableInput(f"role action must be add or remove, not {action!r}")
    return action == "add"


def _load_doc(path: str):
    text = sys.stdin.read() if path == "-" else Path(path).read_text()
    return yaml.safe_load(text)


_HEX = re.compile(r"(?:[0-9a-fA-F]{2})*")


def _read_hex(arg: str | None) -> bytes:
    text = sys.stdin.read() if arg in (None, "-") else arg
    if not _HEX.fullmatch(text.strip()):
        text = Path(text).read_text()
    try:
        return bytes.fromhex(text.strip())
    except ValueError as exc:
        raise errors.Truncated(f"input is not hex: {exc}") from exc


# -- JSON views -----------------------------------------------------------------


def tx_json(tx) -> dict:
    outs = []
    for o in tx.vout:
        mode = decode_nvalue(o.n_value)
        row = {"pubkey": o.pubkey.hex(), "nvalue": f"{o.n_value:016x}"}
        if isinstance(mode, CoinTransfer):
            row.update(mode="coin", amount=mode.amount)
        elif isinstance(mode, RoleChange):
            row.update(mode="role", add=mode.add, roles=role_letters(mode.roles))
        elif isinstance(mode, PolicyChange):
            row.update(mode="policy", type=mode.ptype, param=mode.param, permanent=mode.permanent)
        outs.append(row)
    return {
        "txid": tx.txid.hex(),
        "version": tx.version,
        "locktime": tx.locktime,
        "vin": [{"prev": i.prev_hash.hex(), "index": i.prev_index, "signed": bool(i.script_sig)} for i in tx.vin],
        "vout": outs,
    }


def classification_json(c) -> dict:
    return {k: getattr(c, k) for k in ("has_coin_transfer", "has_role_change", "has_policy_change",
                                       "is_management", "created", "fee")}


# -- commands -------------------------------------------------------------------


def cmd_keygen(args) -> str:
    key = KeyPair.from_seed(args.seed) if args.seed is not None else KeyPair.generate()
    write_key_file(args.out, key, args.label)
    return canonical_json({"public": key.public.hex(), "scheme": key.scheme})


def cmd_tx_build(args) -> str:
    store = ChainStore(args.chain_dir)
    chain = store.load()
    spec = _load_doc(args.spec)
    base = Path(args.spec).parent if args.spec != "-" else Path.cwd()
    compiler = TxSpecCompiler(spec, base, args.key or ())
    tx = build_tx(compiler.plan(), chain.state, compiler.keys)
    # pre-flight: the same verdict `validate` will give against the current tip
    ValidationContext(chain.state, chain.config, chain.rules).connect_tx(tx)
    if args.json:
        return canonical_json({"hex": serialize_tx(tx).hex(), **tx_json(tx)})
    return serialize_tx(tx).hex()


def cmd_validate(args) -> str:
    raw = _read_hex(args.hex)
    if args.block:
        block = deserialize_block(raw)
        out = {"kind": "block", "hash": block.hash.hex(), "txs": len(block.txs)}
        if args.chain_dir:
            chain = ChainStore(args.chain_dir).load()
            parent = chain.entries.get(block.header.prev_hash)
            if parent is None:
                raise errors.UnknownParent(block.header.prev_hash.hex())
            state = validate_block(block, parent.state, chain.config, chain.rules)
            out.update(height=state.height, valid=True)
        return canonical_json(out)
    tx = deserialize_tx(raw)
    out = {"kind": "tx", **tx_json(tx)}
    if args.chain_dir:
        chain = ChainStore(args.chain_dir).load()
        c = ValidationContext(chain.state, chain.config, chain.rules).connect_tx(tx)
        out.update(valid=True, classification=classification_json(c))
    return canonical_json(out)


def cmd_chain_init(args) -> str:
    data = dict(_load_doc(args.config) or {}) if args.config else {}
    if args.root_key:
        data["root_pubkey"] = read_key_file(args.root_key).public.hex()
    if "root_pubkey" not in data:
        raise errors.BadConfig("genesis config needs root_pubkey (or pass --root-key)")
    config = GenesisConfig.from_json(data)
    store = ChainStore.init(args.chain_dir, config)
    chain = store.load()
    return canonical_json({"genesis": chain.genesis_hash.hex(), "height": 0})


def cmd_chain_mine(args) -> str:
    store = ChainStore(args.chain_dir)
    miner = read_key_file(args.key)
    txs = [deserialize_tx(_read_hex(h)) for h in args.tx or ()]
    with store.lock():
        chain = store.load()
        block = chain.mine_block(txs, miner, timestamp=args.timestamp)
        entry = chain.add_block(block)
        store.append(block, chain)
    return canonical_json({"hash": block.hash.hex(), "height": entry.height, "tip": chain.tip.hex(),
                           "block": serialize_block(block).hex()})


def cmd_chain_apply(args) -> str:
    store = ChainStore(args.chain_dir)
    block = deserialize_block(_read_hex(args.hex))
    with store.lock():
        chain = store.load()
        known = block.hash in chain.entries
        entry = chain.add_block(block)
        if not known:
            store.append(block, chain)
    return canonical_json({"hash": block.hash.hex(), "height": entry.height, "tip": chain.tip.hex()})


def cmd_chain_inspect(args) -> str:
    chain = ChainStore(args.chain_dir).load()
    state = chain.state
    what = args.what
    if what == "accounts":
        return canonical_json(state.tree.dump())
    if what == "policy":
        return canonical_json(state.policy.to_json())
    if what == "utxo":
        return canonical_json([
            {"txid": op[0].hex(), "index": op[1], "owner": owner.hex(), "amount": amt}
            for op, (owner, amt) in sorted(state.utxos.items())
        ])
    if what == "supply":
        return canonical_json(state.supply.__dict__)
    return canonical_json({"tip": chain.tip.hex(), "height": chain.height,
                           "summary_sha256": state.summary_hash()})


def cmd_sim_run(args) -> str:
    from .simnet import SimScenario, run_scenario

    scenario = SimScenario.load(args.scenario)
    if args.seed is not None:
        scenario = scenario.with_seed(args.seed)
    report = run_scenario(scenario).to_json()
    if args.out:
        Path(args.out).write_text(report + "\n")
        return canonical_json({"out": str(args.out), "seed": scenario.seed})
    return report


# -- parser ---------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="managedcoin", description="Managed cryptocurrency toolkit.")
    sub = p.add_subparsers(dest="command", required=True)

    k = sub.add_parser("keygen", help="write a key file")
    k.add_argument("--seed", type=int)
    k.add_argument("--label")
    k.add_argument("--out", required=True)
    k.set_defaults(func=cmd_keygen)

    tx = sub.add_parser("tx", help="transaction tools").add_subparsers(dest="tx_command", required=True)
    tb = tx.add_parser("build", help="compile a tx spec to signed hex")
    tb.add_argument("spec", help="YAML/JSON tx spec, or - for stdin")
    tb.add_argument("--chain-dir", required=True)
    tb.add_argument("--key", action="append", help="extra signing key file (repeatable)")
    tb.add_argument("--json", action="store_true", help="print a JSON view instead of bare hex")
    tb.set_defaults(func=cmd_tx_build)

    v = sub.add_parser("validate", help="decode and (with --chain-dir) validate tx or block hex")
    v.add_argument("hex", nargs="?", help="hex string, file path, or - for stdin")
    v.add_argument("--chain-dir")
    v.add_argument("--block", action="store_true")
    v.set_defaults(func=cmd_validate)

    ch = sub.add_parser("chain", help="chain directory operations").add_subparsers(dest="chain_command",
                                                                                   required=True)
    ci = ch.add_parser("init")
    ci.add_argument("--chain-dir", required=True)
    ci.add_argument("--config", help="GenesisConfig JSON/YAML")
    ci.add_argument("--root-key", help="key file whose public key becomes the root")
    ci.set_defaults(func=cmd_chain_init)
    cm = ch.add_parser("mine")
    cm.add_argument("--chain-dir", required=True)
    cm.add_argument("--key", required=True, help="miner key file (needs the U role)")
    cm.add_argument("--tx", action="append", help="tx hex or file (repeatable)")
    cm.add_argument("--timestamp", type=int)
    cm.set_defaults(func=cmd_chain_mine)
    ca = ch.add_parser("apply")
    ca.add_argument("hex", nargs="?")
    ca.add_argument("--chain-dir", required=True)
    ca.set_defaults(func=cmd_chain_apply)
    cs = ch.add_parser("inspect")
    cs.add_argument("what", choices=("accounts", "policy", "utxo", "supply", "tip"))
    cs.add_argument("--chain-dir", required=True)
    cs.set_defaults(func=cmd_chain_inspect)

    sim = sub.add_parser("sim", help="network simulation").add_subparsers(dest="sim_command", required=True)
    sr = sim.add_parser("run")
    sr.add_argument("scenario")
    sr.add_argument("--seed", type=int)
    sr.add_argument("--out")
    sr.set_defaults(func=cmd_sim_run)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        out = args.func(args)
    except errors.ManagedCoinError as exc:
        print(f"error: {exc}", file=sys.stderr)
        print(exc.code, file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        print("IOError", file=sys.stderr)
        return 1
    print(out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
