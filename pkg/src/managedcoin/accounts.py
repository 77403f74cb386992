"""Hierarchical account tree and role-grant registry.

Both structures are persistent: every mutator returns a new value and the
old one stays valid, so per-block snapshots cost nothing to keep.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

from immutables import Map

from . import errors
from .codec import ALL_ROLES, NO_ROLES, Role, role_letters

Outpoint = tuple  # (txid: bytes, vout index: int)
Provenance = tuple  # (block height, tx index, vout index)


@dataclass(frozen=True)
class AccountNode:
    account_id: bytes
    parent: Optional[bytes]
    roles: Role
    frozen: bool = False
    grant_provenance: Optional[Provenance] = None
    # (depth, height, intra-block index) of the first M grant; fixed once set
    authority: Optional[tuple] = None


class AccountTree:
    __slots__ = ("nodes", "root")

    def __init__(self, nodes: Map, root: bytes):
        self.nodes = nodes
        self.root = root

    @classmethod
    def with_root(cls, root: bytes, provenance: Provenance = (0, 0, 0)) -> AccountTree:
        node = AccountNode(root, None, ALL_ROLES, False, provenance, (0, 0, 0))
        return cls(Map({root: node}), root)

    def __contains__(self, account: bytes) -> bool:
        return account in self.nodes

    def __len__(self) -> int:
        return len(self.nodes)

    def node(self, account: bytes) -> AccountNode:
        try:
            return self.nodes[account]
        except KeyError:
            raise errors.UnknownAccount(account.hex()) from None

    def get(self, account: bytes) -> Optional[AccountNode]:
        return self.nodes.get(account)

    def path_to_root(self, account: bytes) -> list:
        path = []
        cur = self.node(account).account_id
        while cur is not None:
            path.append(cur)
            cur = self.nodes[cur].parent
        return path

    def depth(self, account: bytes) -> int:
        return len(self.path_to_root(account)) - 1

    def is_ancestor(self, ancestor: bytes, account: bytes) -> bool:
        """True when ``ancestor`` is a strict ancestor of ``account``."""
        cur = self.node(account).parent
        while cur is not None:
            if cur == ancestor:
                return True
            cur = self.nodes[cur].parent
        return False

    def covers(self, coverer: bytes, target: bytes) -> bool:
        """Coverer lies on the root-to-target path (inclusive); fresh targets are always covered."""
        self.node(coverer)
        if target not in self.nodes:
            return True
        return coverer == target or self.is_ancestor(coverer, target)

    def active_roles(self, account: bytes) -> Role:
        node = self.nodes.get(account)
        if node is None:
            return NO_ROLES
        roles = node.roles
        return roles & ~Role.U if node.frozen else roles

    def apply_role_change(
        self,
        coverer: bytes,
        target: bytes,
        add: bool,
        roles: Role,
        provenance: Provenance,
        via: Role = Role.M,
        grant_index: int = 0,
    ) -> AccountTree:
        """Apply an already-authorized role change.

        ``via`` is the role the coverer acted under (M, A or L); it decides
        freezing (L removing U) and re-parenting (A adding U outside its subtree).
        ``grant_index`` is the intra-block ordinal used for M authority keys.
        """
        nodes = self.nodes
        node = nodes.get(target)
        if node is None:
            if not add:
                raise errors.UnknownTarget(target.hex())
            self.node(coverer)
            node = AccountNode(target, coverer, roles, False, provenance)
            node = self._stamp_authority(node, roles, provenance, grant_index, self.depth(coverer) + 1)
            return AccountTree(nodes.set(target, node), self.root)

        if add:
            if node.frozen and roles & Role.U:
                if via != Role.L:
                    raise errors.FrozenTarget(target.hex())
                node = replace(node, frozen=False)
            parent = node.parent
            if via == Role.A and target != coverer and not self.is_ancestor(coverer, target):
                if parent is None or self.is_ancestor(target, coverer):
                    raise errors.TreeCycle(f"re-parenting {target.hex()} under {coverer.hex()}")
                parent = coverer
            node = replace(node, roles=node.roles | roles, parent=parent, grant_provenance=provenance)
            depth = AccountTree(nodes.set(target, node), self.root).depth(target)
            node = self._stamp_authority(node, roles, provenance, grant_index, depth)
        else:
            node = replace(node, roles=node.roles & ~roles)
            if via == Role.L and roles & Role.U:
                node = replace(node, frozen=True)
        return AccountTree(nodes.set(target, node), self.root)

    @staticmethod
    def _stamp_authority(node, roles, provenance, grant_index, depth):
        if roles & Role.M and node.authority is None:
            return replace(node, authority=(depth, provenance[0], grant_index))
        return node

    def frozen_list(self) -> list:
        return sorted(a for a, n in self.nodes.items() if n.frozen)

    def dump(self) -> list:
        """Inspection rows: account prefix, depth, role letters, frozen flag."""
        rows = []
        for account, node in self.nodes.items():
            rows.append(
                {
                    "account": account.hex(),
                    "parent": node.parent.hex() if node.parent else None,
                    "depth": self.depth(account),
                    "roles": role_letters(node.roles),
                    "frozen": node.frozen,
                }
            )
        rows.sort(key=lambda r: (r["depth"], r["account"]))
        return rows

    def check_invariants(self) -> None:
        """Single root, every parent known, no cycles.  Raises AssertionError."""
        roots = [a for a, n in self.nodes.items() if n.parent is None]
        assert roots == [self.root], f"expected single root, got {len(roots)}"
        for account in self.nodes.keys():
            seen = set()
            cur = account
            while cur is not None:
                assert cur not in seen, "cycle in account tree"
                seen.add(cur)
                assert cur in self.nodes, "dangling parent link"
                cur = self.nodes[cur].parent


@dataclass(frozen=True)
class RoleGrantRecord:
    account_id: bytes
    roles: Role
    active: Role
    outpoint: Outpoint

    @property
    def is_active(self) -> bool:
        return bool(self.active)


class RoleRegistry:
    """Grant records keyed by the outpoint of the role-change vout that created them."""

    __slots__ = ("grants", "by_account")

    def __init__(self, grants: Map = Map(), by_account: Map = Map()):
        self.grants = grants
        self.by_account = by_account

    def get(self, outpoint: Outpoint) -> Optional[RoleGrantRecord]:
        return self.grants.get(outpoint)

    def grant(self, outpoint: Outpoint, account: bytes, roles: Role) -> RoleRegistry:
        rec = RoleGrantRecord(account, roles, roles, outpoint)
        ops = self.by_account.get(account, ()) + (outpoint,)
        return RoleRegistry(self.grants.set(outpoint, rec), self.by_account.set(account, ops))

    def revoke(self, account: bytes, roles: Role) -> RoleRegistry:
        grants = self.grants
        with grants.mutate() as mm:
            for op in self.by_account.get(account, ()):
                rec = mm[op]
                if rec.active & roles:
                    mm[op] = replace(rec, active=rec.active & ~roles)
            grants = mm.finish()
        return RoleRegistry(grants, self.by_account)

    def records_for(self, account: bytes) -> list:
        return [self.grants[op] for op in self.by_account.get(account, ())]

    def latest_grant(self, account: bytes, needed: Role) -> Optional[RoleGrantRecord]:
        """Most recent active record providing every role in ``needed``."""
        for op in reversed(self.by_account.get(account, ())):
            rec = self.grants[op]
            if rec.active & needed == needed:
                return rec
        return None


def active_roles(tree: AccountTree, registry: RoleRegistry, account: bytes) -> Role:
    """Roles an account can currently bring into a transaction."""
    roles = NO_ROLES
    for rec in registry.records_for(account):
        roles |= rec.active
    return roles & tree.active_roles(account)
