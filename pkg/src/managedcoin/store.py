"""On-disk chain directory.

Layout::

    genesis.json    GenesisConfig.to_json()
    manifest.json   {"format": 1, "genesis": <hash hex>, "tip": <hash hex>, "height": n}
    blocks.dat      accepted blocks, each as a 4-byte little-endian length + serialized block
    LOCK            advisory lock taken while mutating

Opening a store replays ``blocks.dat`` through full validation, so a
directory can never hold a state the rules would not produce.
"""

from __future__ import annotations

import fcntl
import json
import os
import struct
from contextlib import contextmanager
from pathlib import Path

from . import errors
from .chain import Chain
from .codec import Block, deserialize_block, serialize_block
from .genesis import GenesisConfig
from .validation import COMPLIANT, Rules

FORMAT = 1


def canonical_json(data) -> str:
    return json.dumps(data, sort_keys=True, separators=(",", ":"))


class ChainStore:
    def __init__(self, path):
        self.path = Path(path)

    @property
    def genesis_file(self) -> Path:
        return self.path / "genesis.json"

    @property
    def blocks_file(self) -> Path:
        return self.path / "blocks.dat"

    @classmethod
    def init(cls, path, config: GenesisConfig) -> ChainStore:
        store = cls(path)
        store.path.mkdir(parents=True, exist_ok=True)
        with store.lock():
            if store.genesis_file.exists():
                raise errors.BadConfig(f"{store.path} already holds a chain")
            chain = Chain(config)
            store.genesis_file.write_text(canonical_json(config.to_json()) + "\n")
            store.blocks_file.write_bytes(b"")
            store.write_manifest(chain)
        return store

    def manifest(self) -> dict:
        return json.loads((self.path / "manifest.json").read_text())

    def write_manifest(self, chain: Chain) -> None:
        data = {"format": FORMAT, "genesis": chain.genesis_hash.hex(), "tip": chain.tip.hex(),
                "height": chain.height}
        tmp = self.path / "manifest.json.tmp"
        tmp.write_text(canonical_json(data) + "\n")
        os.replace(tmp, self.path / "manifest.json")

    def config(self) -> GenesisConfig:
        try:
            return GenesisConfig.from_json(json.loads(self.genesis_file.read_text()))
        except FileNotFoundError:
            raise errors.BadConfig(f"{self.path} is not a chain directory") from None

    def blocks(self) -> list:
        data = self.blocks_file.read_bytes()
        out, pos = [], 0
        while pos < len(data):
            if pos + 4 > len(data):
                raise errors.Truncated("blocks.dat ends inside a length prefix")
            (size,) = struct.unpack_from("<I", data, pos)
            pos += 4
            if pos + size > len(data):
                raise errors.Truncated("blocks.dat ends inside a block")
            out.append(deserialize_block(data[pos : pos + size]))
            pos += size
        return out

    def load(self, rules: Rules = COMPLIANT) -> Chain:
        chain = Chain(self.config(), rules)
        for block in self.blocks():
            chain.add_block(block)
        return chain

    def append(self, block: Block, chain: Chain) -> None:
        """Persist an accepted block; ``chain`` must already contain it."""
        raw = serialize_block(block)
        with open(self.blocks_file, "ab") as fh:
            fh.write(struct.pack("<I", len(raw)) + raw)
            fh.flush()
            os.fsync(fh.fileno())
        self.write_manifest(chain)

    @contextmanager
    def lock(self):
        self.path.mkdir(parents=True, exist_ok=True)
        with open(self.path / "LOCK", "w") as fh:
            fcntl.flock(fh, fcntl.LOCK_EX)
            try:
                yield
            finally:
                fcntl.flock(fh, fcntl.LOCK_UN)
