"""Post-run analysis.

Report JSON schema (all hashes lowercase hex, times in simulation units)::

    scenario       {seed, duration, block_interval, finality_depth, nodes: [...]}
    nodes          [{id, behavior, rules, revolting, tip, height}]
    canonical      {tip, height, settled_height, settled_tip, revolt_started_at,
                    post_revolt_management_settled}
    branches       [{groups, tip, height, fork_height, length, compliant,
                     first_violation: {code, height, block} | null, miners: {id: blocks}}]
    management     [{txid, issued_at, policy, included_height | null, included_at | null}]
    stalls         [{height, start, end | null, refused, reissued_at | null, refused_after_reissue}]
    supply         {utxo_total, rewards, claimed, created, fees, utxo_sum, balanced}
    miner_share    {miner id: fraction of canonical blocks after bootstrap}
    blocks_total, stale_blocks, events, trace_sha256

``canonical`` is the heaviest chain an omniscient fully-validating node
would select after seeing every produced block.  A block is *settled* when
it is at least ``finality_depth`` blocks below the canonical tip.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction

from ..chain import Chain
from ..errors import ManagedCoinError
from ..validation import COMPLIANT

BOOTSTRAP_BLOCKS = 2


@dataclass(frozen=True)
class SimReport:
    data: dict

    def to_json(self) -> str:
        return json.dumps(self.data, sort_keys=True, separators=(",", ":"))

    def to_bytes(self) -> bytes:
        return self.to_json().encode()

    def __getitem__(self, key):
        return self.data[key]

    @property
    def branches(self) -> list:
        return self.data["branches"]

    @property
    def stalls(self) -> list:
        return self.data["stalls"]

    @property
    def canonical(self) -> dict:
        return self.data["canonical"]


def _ancestry(sim, tip: bytes) -> list:
    out = []
    cur = tip
    while cur in sim.blocks or cur == sim.genesis_hash:
        out.append(cur)
        if cur == sim.genesis_hash:
            break
        cur = sim.blocks[cur].parent
    out.reverse()
    return out


def build_report(sim) -> SimReport:
    sc = sim.scenario
    observer = Chain(sim.config, COMPLIANT, sim.cache)
    for h in sim.block_order:
        try:
            observer.add_block(sim.blocks[h].block)
        except ManagedCoinError:
            pass

    canonical = observer.branch()
    height = len(canonical) - 1
    settled_height = max(0, height - sc.finality_depth)

    def time_of(h: bytes) -> float:
        return sim.blocks[h].time if h in sim.blocks else 0.0

    # -- management timeline -------------------------------------------------
    included = {}
    for hgt, h in enumerate(canonical):
        for txid, policy in observer.entries[h].state.block_management:
            included[txid] = (hgt, time_of(h), policy)
    issued = dict(sim.admin_txs)
    for txid in included:
        issued.setdefault(txid, 0.0)
    management = []
    for txid, at in sorted(issued.items(), key=lambda kv: (kv[1], kv[0])):
        inc = included.get(txid)
        management.append({
            "txid": txid.hex(),
            "issued_at": at,
            "policy": inc[2] if inc else None,
            "included_height": inc[0] if inc else None,
            "included_at": inc[1] if inc else None,
        })

    revolt_at = min(sim.revolts) if sim.revolts else None
    post_revolt_settled = 0
    if revolt_at is not None:
        for h in canonical[1 : settled_height + 1]:
            if time_of(h) >= revolt_at:
                post_revolt_settled += len(observer.entries[h].state.block_management)

    # -- branches --------------------------------------------------------------
    groups: dict = {"compliant": observer.tip}
    for node in sim.nodes.values():
        if not node.is_miner:
            continue
        name = "revolt" if node.revolting else node.chain.rules.name
        if name == "compliant":
            continue
        best = groups.get(name)
        if best is None or node.chain.tip_entry.work > _work(sim, best):
            groups[name] = node.chain.tip
    ancestries = {tip: _ancestry(sim, tip) for tip in set(groups.values())}
    tips = [t for t in ancestries
            if not any(t != o and t in set(ancestries[o]) for o in ancestries)]
    tips.sort(key=lambda t: (t != observer.tip, len(ancestries[t]), t))
    branches = []
    for tip in tips:
        anc = ancestries[tip]
        others = [set(ancestries[o]) for o in tips if o != tip]
        fork = max((max(i for i, h in enumerate(anc) if h in o) for o in others), default=0)
        violation = None
        for i, h in enumerate(anc):
            if h in observer.rejected:
                err = observer.rejected[h]
                violation = {"code": err.code, "height": i, "block": h.hex()}
                break
        miners = Counter(sim.blocks[h].miner for h in anc[fork + 1:])
        branches.append({
            "groups": sorted(g for g, t in groups.items() if t in set(anc)),
            "tip": tip.hex(),
            "height": len(anc) - 1,
            "fork_height": fork,
            "length": len(anc) - 1 - fork,
            "compliant": violation is None,
            "first_violation": violation,
            "miners": dict(sorted(miners.items())),
        })

    # -- stalls ----------------------------------------------------------------
    stalls = []
    times = [time_of(h) for h in canonical]
    refusals = sorted(sim.refusals)
    for hgt in range(BOOTSTRAP_BLOCKS, height + 1):
        start = times[hgt]
        end = times[hgt + 1] if hgt < height else None
        hits = [t for t, _, attempted in refusals
                if attempted == hgt + 1 and t >= start and (end is None or t < end)]
        if not hits:
            continue
        reissue = max((r for r in sim.resumes if r <= (end if end is not None else float("inf"))), default=None)
        after = [t for t in hits if reissue is not None and t >= reissue]
        stalls.append({
            "height": hgt,
            "start": start,
            "end": end,
            "refused": len(hits),
            "reissued_at": reissue,
            "refused_after_reissue": len(after),
        })

    # -- supply, shares --------------------------------------------------------
    state = observer.state
    s = state.supply
    utxo_sum = sum(amt for _, amt in state.utxos.values())
    supply = {
        "utxo_total": s.utxo_total, "rewards": s.rewards, "claimed": s.claimed,
        "created": s.created, "fees": s.fees, "utxo_sum": utxo_sum,
        "balanced": utxo_sum == s.utxo_total == s.rewards + s.created and s.claimed == s.rewards + s.fees,
    }
    mined = Counter(sim.blocks[h].miner for h in canonical[BOOTSTRAP_BLOCKS + 1:])
    total = sum(mined.values())
    share = {m: float(Fraction(c, total)) for m, c in sorted(mined.items())} if total else {}

    data = {
        "scenario": {
            "seed": sc.seed, "duration": sc.duration, "block_interval": sc.block_interval,
            "finality_depth": sc.finality_depth,
            "nodes": [{"id": n.id, "behavior": n.behavior, "hashpower": str(n.hashpower)} for n in sc.nodes],
        },
        "nodes": [
            {"id": n.id, "behavior": n.behavior, "rules": n.chain.rules.name, "revolting": n.revolting,
             "tip": n.chain.tip.hex(), "height": n.chain.height}
            for n in sim.nodes.values()
        ],
        "canonical": {
            "tip": observer.tip.hex(), "height": height, "settled_height": settled_height,
            "settled_tip": canonical[settled_height].hex(), "revolt_started_at": revolt_at,
            "post_revolt_management_settled": post_revolt_settled,
        },
        "branches": branches,
        "management": management,
        "stalls": stalls,
        "supply": supply,
        "miner_share": share,
        "blocks_total": len(sim.block_order),
        "stale_blocks": len(sim.block_order) - (len(canonical) - 1),
        "refused_attempts": len(sim.refusals),
        "events": len(sim.trace),
        "trace_sha256": sim.trace_digest(),
    }
    return SimReport(data)


def _work(sim, tip: bytes) -> int:
    for n in sim.nodes.values():
        if tip in n.chain.entries:
            return n.chain.entries[tip].work
    return 0
