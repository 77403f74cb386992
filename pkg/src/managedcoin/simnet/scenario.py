"""Declarative scenario description.

A scenario file is YAML (JSON is valid YAML) whose top-level keys match
:class:`SimScenario` fields::

    seed: 7
    duration: 400          # time units; mining stops afterwards, messages drain
    block_interval: 1.0    # mean time between blocks for the whole network
    finality_depth: 12
    genesis:
      policy_defaults: {13: 5, 14: 2}
      permanent_policies: [[13, 0]]
    latency: {base: 0.02, jitter: 0.03}
    nodes:
      - {id: admin, behavior: Administrator, params: {interval: 1.5, batch: 1}}
      - {id: m1, behavior: CompliantMiner, hashpower: "2/5"}
      - {id: r1, behavior: RevoltingMiner, hashpower: 0.6, params: {revolt_at: 50}}
      - {id: w1, behavior: Wallet, params: {interval: 3, amount: 5}}
    actions:
      - {at: 120, action: withhold, node: admin}
      - {at: 160, action: resume, node: admin}
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any

import yaml

from ..errors import BadScenario

BEHAVIORS = ("CompliantMiner", "RevoltingMiner", "Administrator", "Wallet")
MINERS = ("CompliantMiner", "RevoltingMiner")
ACTIONS = ("withhold", "resume", "revolt", "switch_rules")


@dataclass(frozen=True)
class NodeSpec:
    id: str
    behavior: str
    hashpower: Fraction = Fraction(0)
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Action:
    at: float
    action: str
    node: str
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class SimScenario:
    seed: int
    duration: float
    nodes: tuple
    genesis: dict = field(default_factory=dict)
    latency: dict = field(default_factory=lambda: {"base": 0.02, "jitter": 0.03})
    actions: tuple = ()
    block_interval: float = 1.0
    finality_depth: int = 12

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        ids = [n.id for n in self.nodes]
        if len(set(ids)) != len(ids):
            raise BadScenario("duplicate node ids")
        for n in self.nodes:
            if n.behavior not in BEHAVIORS:
                raise BadScenario(f"unknown behavior {n.behavior!r}")
            if n.hashpower < 0 or (n.hashpower and n.behavior not in MINERS):
                raise BadScenario(f"node {n.id}: bad hashpower {n.hashpower}")
        miners = [n for n in self.nodes if n.behavior in MINERS]
        if not miners:
            raise BadScenario("scenario has no miners")
        if sum(n.hashpower for n in miners) != 1:
            raise BadScenario(f"hashpower shares sum to {sum(n.hashpower for n in miners)}, not 1")
        if sum(n.behavior == "Administrator" for n in self.nodes) > 1:
            raise BadScenario("at most one administrator")
        for a in self.actions:
            if a.action not in ACTIONS:
                raise BadScenario(f"unknown action {a.action!r}")
            if a.node not in ids:
                raise BadScenario(f"action targets unknown node {a.node!r}")
        if self.duration <= 0 or self.block_interval <= 0:
            raise BadScenario("duration and block_interval must be positive")

    def with_seed(self, seed: int) -> SimScenario:
        return SimScenario(seed, self.duration, self.nodes, self.genesis, self.latency, self.actions,
                           self.block_interval, self.finality_depth)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> SimScenario:
        known = {"seed", "duration", "nodes", "genesis", "latency", "actions", "block_interval",
                 "finality_depth"}
        extra = set(data) - known
        if extra:
            raise BadScenario(f"unknown scenario keys: {sorted(extra)}")
        try:
            nodes = tuple(
                NodeSpec(str(n["id"]), n["behavior"], _share(n.get("hashpower", 0)), dict(n.get("params") or {}))
                for n in data["nodes"]
            )
            actions = tuple(
                Action(float(a["at"]), a["action"], str(a["node"]),
                       {k: v for k, v in a.items() if k not in ("at", "action", "node")})
                for a in data.get("actions") or ()
            )
            return cls(
                seed=int(data.get("seed", 0)),
                duration=float(data["duration"]),
                nodes=nodes,
                genesis=dict(data.get("genesis") or {}),
                latency=dict(data.get("latency") or {"base": 0.02, "jitter": 0.03}),
                actions=actions,
                block_interval=float(data.get("block_interval", 1.0)),
                finality_depth=int(data.get("finality_depth", 12)),
            )
        except (KeyError, TypeError, ValueError, ZeroDivisionError) as exc:
            raise BadScenario(f"malformed scenario: {exc}") from exc

    @classmethod
    def load(cls, path) -> SimScenario:
        with open(Path(path)) as fh:
            return cls.from_dict(yaml.safe_load(fh))


def _share(value) -> Fraction:
    # floats go through str so 0.6 means 3/5, not its binary approximation
    if isinstance(value, float):
        return Fraction(str(value))
    return Fraction(value)
