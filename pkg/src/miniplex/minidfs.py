"""Chunked, replicated file store over a set of simulated nodes.

Every node is a directory under the store root.  Files are split into
fixed-size blocks, each block is copied onto `replication` distinct nodes
chosen round-robin from a rotating offset, and the namespace is journaled so
a root directory can be reopened by a later process.  Node "failure" is a
flag: reads skip unavailable nodes and fall through the replica list, which
makes failover behaviour testable without real networking.
"""

from __future__ import annotations

import hashlib
import json
import math
import threading
from dataclasses import dataclass, field
from pathlib import Path

from .config import DEFAULT_BLOCK_SIZE, DEFAULT_REPLICATION
from .errors import DfsError

_JOURNAL = "journal.jsonl"
_NODESTATE = "nodes.json"


def _checksum(data: bytes) -> str:
    # 128-bit digest; strong enough to make corrupted-replica failover reliable
    return hashlib.blake2b(data, digest_size=16).hexdigest()


@dataclass
class BlockMeta:
    block_id: str
    file_path: str
    index: int
    length: int
    replicas: list[int]
    checksum: str
    under_replicated: bool = False

    def to_record(self):
        return [self.block_id, self.index, self.length, self.replicas,
                self.checksum, self.under_replicated]

    @classmethod
    def from_record(cls, path, rec):
        return cls(block_id=rec[0], file_path=path, index=rec[1], length=rec[2],
                   replicas=list(rec[3]), checksum=rec[4], under_replicated=rec[5])


@dataclass
class FileMeta:
    path: str
    total_length: int
    block_size: int
    replication: int
    blocks: list[BlockMeta] = field(default_factory=list)


class MiniDfs:
    """A cluster of node directories plus a journaled namespace.

    Thread safety: namespace mutations are serialized; reads of committed
    files may run concurrently.  FileMeta values handed out are snapshots and
    must not be mutated by callers.
    """

    def __init__(self, root, nodes: int = 3,
                 block_size: int = DEFAULT_BLOCK_SIZE,
                 replication: int = DEFAULT_REPLICATION):
        if nodes < 1:
            raise DfsError("cluster needs at least one node")
        self.root = Path(root)
        self.default_block_size = block_size
        self.default_replication = replication
        self._lock = threading.Lock()
        self._namespace: dict[str, FileMeta] = {}
        self._unavailable: set[int] = set()
        self._blocks_placed = 0
        self.stats = {"get_file_calls": 0, "blocks_read": 0}

        self.root.mkdir(parents=True, exist_ok=True)
        state_path = self.root / _NODESTATE
        if state_path.exists():
            state = json.loads(state_path.read_text(encoding="utf-8"))
            self.node_count = state["nodes"]
            self._unavailable = set(state["unavailable"])
        else:
            self.node_count = nodes
            self._save_node_state()
        for node in range(self.node_count):
            self._node_dir(node).mkdir(exist_ok=True)
        self._replay_journal()

    # -- node management ---------------------------------------------------

    @property
    def node_ids(self) -> list[int]:
        return list(range(self.node_count))

    def available_nodes(self) -> list[int]:
        return [n for n in self.node_ids if n not in self._unavailable]

    def is_available(self, node: int) -> bool:
        self._check_node(node)
        return node not in self._unavailable

    def fail_node(self, node: int):
        """Mark a node unavailable.  Idempotent."""
        self._check_node(node)
        with self._lock:
            self._unavailable.add(node)
            self._save_node_state()

    def recover_node(self, node: int):
        """Mark a node available again.  Idempotent."""
        self._check_node(node)
        with self._lock:
            self._unavailable.discard(node)
            self._save_node_state()

    def _check_node(self, node: int):
        if node not in range(self.node_count):
            raise DfsError(f"unknown node: {node}")

    def _save_node_state(self):
        payload = {"nodes": self.node_count,
                   "unavailable": sorted(self._unavailable)}
        (self.root / _NODESTATE).write_text(json.dumps(payload), encoding="utf-8")

    def _node_dir(self, node: int) -> Path:
        return self.root / f"node{node}"

    # -- namespace ---------------------------------------------------------

    def exists(self, path: str) -> bool:
        return path in self._namespace

    def list_files(self) -> list[str]:
        return sorted(self._namespace)

    def file_meta(self, path: str) -> FileMeta:
        try:
            return self._namespace[path]
        except KeyError:
            raise DfsError(f"unknown path: {path}") from None

    def locate(self, path: str) -> list[BlockMeta]:
        """Block metadata in file order.  Never touches block content."""
        return list(self.file_meta(path).blocks)

    # -- write path ----------------------------------------------------------

    def put_file(self, path: str, content: bytes,
                 block_size: int | None = None,
                 replication: int | None = None) -> FileMeta:
        """Store `content` under `path`, splitting into replicated blocks.

        Placement is deterministic: candidates are the available nodes in id
        order and each block starts one position further round the ring than
        the previous block ever placed on this cluster.
        """
        block_size = self.default_block_size if block_size is None else block_size
        replication = self.default_replication if replication is None else replication
        if block_size <= 0:
            raise DfsError("block_size must be positive")
        if replication < 1:
            raise DfsError("replication must be >= 1")
        with self._lock:
            if path in self._namespace:
                raise DfsError(f"duplicate path: {path}")
            candidates = self.available_nodes()
            if not candidates:
                raise DfsError("no available nodes to write to")

            n_blocks = math.ceil(len(content) / block_size)
            meta = FileMeta(path=path, total_length=len(content),
                            block_size=block_size, replication=replication)
            file_seq = len(self._namespace)
            for index in range(n_blocks):
                data = content[index * block_size:(index + 1) * block_size]
                block_id = f"blk_{file_seq:06d}_{index:06d}"
                offset = self._blocks_placed % len(candidates)
                rotated = candidates[offset:] + candidates[:offset]
                replicas = self._write_replicas(block_id, data, rotated, replication)
                meta.blocks.append(BlockMeta(
                    block_id=block_id, file_path=path, index=index,
                    length=len(data), replicas=replicas,
                    checksum=_checksum(data),
                    under_replicated=len(replicas) < replication))
                self._blocks_placed += 1
            self._namespace[path] = meta
            self._append_journal(meta)
            return meta

    def _write_replicas(self, block_id, data, candidates, replication):
        wanted = min(replication, len(candidates))
        replicas = []
        for node in candidates:
            if len(replicas) == wanted:
                break
            try:
                (self._node_dir(node) / f"{block_id}.blk").write_bytes(data)
            except OSError:
                continue
            replicas.append(node)
        if not replicas:
            raise DfsError(f"write failed on all candidate nodes for {block_id}")
        return replicas

    # -- read path -----------------------------------------------------------

    def get_file(self, path: str) -> bytes:
        """Reassemble a file, walking each block's replica list for failover.

        Unavailable nodes are skipped; a replica whose content fails the
        checksum falls through to the next one.
        """
        meta = self.file_meta(path)
        self.stats["get_file_calls"] += 1
        parts = []
        for block in meta.blocks:
            parts.append(self._read_block(block))
        return b"".join(parts)

    def _read_block(self, block: BlockMeta) -> bytes:
        for node in block.replicas:
            if node in self._unavailable:
                continue
            blk_path = self._node_dir(node) / f"{block.block_id}.blk"
            try:
                data = blk_path.read_bytes()
            except OSError:
                continue
            if _checksum(data) != block.checksum:
                continue
            self.stats["blocks_read"] += 1
            return data
        raise DfsError(
            f"block {block.index} of {block.file_path} unreadable: "
            "all replicas unavailable or corrupt")

    def iter_lines(self, path: str, encoding: str = "utf-8"):
        """Decode a file and yield its lines (no trailing newlines)."""
        return iter(self.get_file(path).decode(encoding).splitlines())

    # -- journal -------------------------------------------------------------

    def _append_journal(self, meta: FileMeta):
        record = {"path": meta.path, "total_length": meta.total_length,
                  "block_size": meta.block_size, "replication": meta.replication,
                  "blocks": [b.to_record() for b in meta.blocks]}
        with open(self.root / _JOURNAL, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(record) + "\n")

    def _replay_journal(self):
        journal = self.root / _JOURNAL
        if not journal.exists():
            return
        with open(journal, encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                rec = json.loads(line)
                meta = FileMeta(path=rec["path"], total_length=rec["total_length"],
                                block_size=rec["block_size"],
                                replication=rec["replication"])
                meta.blocks = [BlockMeta.from_record(rec["path"], b)
                               for b in rec["blocks"]]
                self._namespace[rec["path"]] = meta
                self._blocks_placed += len(meta.blocks)
