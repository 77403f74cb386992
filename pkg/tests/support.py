"""Chain-building helpers shared by the test modules."""

from __future__ import annotations

from managedcoin.builder import CoinSend, PolicySet, RoleGrant, TxPlan, build_tx
from managedcoin.chain import Chain
from managedcoin.codec import Role
from managedcoin.crypto import KeyPair
from managedcoin.genesis import TRIVIAL_TARGET, GenesisConfig

ROOT_SEED = 1


def key(seed: int) -> KeyPair:
    return KeyPair.from_seed(seed)


class Harness:
    """A chain at the trivial target plus a keyring; blocks are mined by the root."""

    def __init__(self, **config):
        self.root = key(ROOT_SEED)
        self.keys = {self.root.public: self.root}
        config.setdefault("pow_target", TRIVIAL_TARGET)
        self.config = GenesisConfig(root_pubkey=self.root.public, **config)
        self.chain = Chain(self.config)
        self._next_seed = 100

    @property
    def state(self):
        return self.chain.state

    def new_key(self) -> KeyPair:
        k = key(self._next_seed)
        self._next_seed += 1
        self.keys[k.public] = k
        return k

    def tx(self, **plan):
        return build_tx(TxPlan(**plan), self.state, self.keys)

    def mine(self, *txs, miner: KeyPair = None):
        block = self.chain.mine_block(txs, miner or self.root)
        self.chain.add_block(block)
        return block

    # common transactions

    def grant(self, target: KeyPair, roles: Role = Role.U, by: KeyPair = None, add: bool = True):
        by = by or self.root
        return self.tx(role_changes=[RoleGrant(by.public, target.public, add, roles)])

    def user(self, coins: int = 0, roles: Role = Role.U, by: KeyPair = None) -> KeyPair:
        """Fresh account with ``roles`` (mined), optionally funded by root creation (mined)."""
        k = self.new_key()
        self.mine(self.grant(k, roles, by))
        if coins:
            self.mine(self.create(k, coins))
        return k

    def create(self, receiver: KeyPair, amount: int, by: KeyPair = None):
        by = by or self.root
        return self.tx(creations=[(by.public, receiver.public, amount)])

    def pay(self, sender: KeyPair, receiver: KeyPair, amount: int, **kw):
        return self.tx(sends=[CoinSend(sender.public, receiver.public, amount)], **kw)

    def policy(self, ptype: int, param: int, issuer: KeyPair = None, permanent: bool = False, **kw):
        issuer = issuer or self.root
        return self.tx(policy_changes=[PolicySet(issuer.public, ptype, param, permanent)], **kw)
