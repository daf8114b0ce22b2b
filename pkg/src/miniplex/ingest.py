"""Ingestion pipeline: land raw data, preprocess, derive tweets and users.

Landing copies the source bytes unmodified into the block store under
`/landing/<batch_id>/raw.jsonl`; that copy is never rewritten.  Preprocessing
rejects malformed records, drops duplicate ids (first occurrence wins),
normalizes the five engagement counters (absent or junk values become 0),
enriches each record with its batch id and an ingest timestamp, and writes
`/data/<batch_id>/tweets.jsonl` plus the distinct-author
`/data/<batch_id>/users.jsonl`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from .errors import IngestError

METRIC_KEYS = ("impression_count", "like_count", "quote_count",
               "reply_count", "retweet_count")

CONTENT_FIELDS = ("id", "author_id", "text", "created_at", "public_metrics")


@dataclass
class BatchManifest:
    batch_id: str
    landed_at: str
    raw_path: str
    stats: dict = field(default_factory=lambda: {
        "read": 0, "malformed": 0, "duplicates": 0,
        "emitted_tweets": 0, "emitted_users": 0})

    def to_dict(self):
        return {"batch_id": self.batch_id, "landed_at": self.landed_at,
                "raw_path": self.raw_path, "stats": self.stats}

    @classmethod
    def from_dict(cls, d):
        return cls(batch_id=d["batch_id"], landed_at=d["landed_at"],
                   raw_path=d["raw_path"], stats=dict(d["stats"]))


def _coerce_counter(value) -> int:
    if isinstance(value, bool):
        return int(value)
    if isinstance(value, int):
        return max(0, value)
    if isinstance(value, float):
        return max(0, int(value))
    if isinstance(value, str):
        try:
            return max(0, int(value.strip()))
        except ValueError:
            return 0
    return 0


def _clean_required_id(record, key):
    value = record.get(key)
    if value is None or value == "" or isinstance(value, (dict, list, bool)):
        return None
    return str(value)


def normalize_record(record, batch_id: str, ingested_at: str) -> dict | None:
    """None when the record is malformed (not a dict, or id/author_id missing)."""
    if not isinstance(record, dict):
        return None
    tweet_id = _clean_required_id(record, "id")
    author_id = _clean_required_id(record, "author_id")
    if tweet_id is None or author_id is None:
        return None
    metrics = record.get("public_metrics")
    metrics = metrics if isinstance(metrics, dict) else {}
    text = record.get("text")
    username = record.get("username")
    return {
        "id": tweet_id,
        "author_id": author_id,
        "text": text if isinstance(text, str) else "",
        "created_at": str(record.get("created_at") or ""),
        "public_metrics": {k: _coerce_counter(metrics.get(k, 0))
                           for k in METRIC_KEYS},
        "username": username if isinstance(username, str) and username else None,
        "batch_id": batch_id,
        "ingested_at": ingested_at,
    }


class Ingestor:
    def __init__(self, dfs, batches_dir):
        self.dfs = dfs
        self.batches_dir = Path(batches_dir)
        self.batches_dir.mkdir(parents=True, exist_ok=True)

    # -- manifests -----------------------------------------------------------

    def list_batches(self) -> list[str]:
        return sorted(p.stem for p in self.batches_dir.glob("*.json"))

    def manifest(self, batch_id: str) -> BatchManifest:
        path = self.batches_dir / f"{batch_id}.json"
        if not path.exists():
            raise IngestError(f"unknown batch: {batch_id}")
        return BatchManifest.from_dict(
            json.loads(path.read_text(encoding="utf-8")))

    def _save_manifest(self, manifest: BatchManifest):
        path = self.batches_dir / f"{manifest.batch_id}.json"
        path.write_text(json.dumps(manifest.to_dict(), indent=1),
                        encoding="utf-8")

    # -- landing -------------------------------------------------------------

    def land(self, source) -> BatchManifest:
        """Copy raw bytes into the landing zone; the copy stays immutable."""
        if isinstance(source, bytes):
            raw = source
        else:
            source = Path(source)
            if not source.exists():
                raise IngestError(f"source not readable: {source}")
            raw = source.read_bytes()
        batch_id = f"b{len(self.list_batches()):04d}"
        raw_path = f"/landing/{batch_id}/raw.jsonl"
        self.dfs.put_file(raw_path, raw)
        manifest = BatchManifest(
            batch_id=batch_id,
            landed_at=datetime.now(timezone.utc).isoformat(),
            raw_path=raw_path)
        self._save_manifest(manifest)
        return manifest

    # -- preprocessing ----------------------------------------------------------

    def tweets_path(self, batch_id: str) -> str:
        return f"/data/{batch_id}/tweets.jsonl"

    def users_path(self, batch_id: str) -> str:
        return f"/data/{batch_id}/users.jsonl"

    def preprocess(self, batch_id: str):
        """Returns (tweets dfs path, users dfs path, updated manifest)."""
        manifest = self.manifest(batch_id)
        if not self.dfs.exists(manifest.raw_path):
            raise IngestError(f"raw data missing for batch {batch_id}")
        ingested_at = datetime.now(timezone.utc).isoformat()
        stats = {"read": 0, "malformed": 0, "duplicates": 0,
                 "emitted_tweets": 0, "emitted_users": 0}
        tweets: list[dict] = []
        users: dict[str, str] = {}
        seen_ids: set[str] = set()
        for line in self.dfs.iter_lines(manifest.raw_path):
            stats["read"] += 1
            try:
                record = json.loads(line)
            except json.JSONDecodeError:
                stats["malformed"] += 1
                continue
            normalized = normalize_record(record, batch_id, ingested_at)
            if normalized is None:
                stats["malformed"] += 1
                continue
            if normalized["id"] in seen_ids:
                stats["duplicates"] += 1
                continue
            seen_ids.add(normalized["id"])
            username = normalized.pop("username")
            author = normalized["author_id"]
            if author not in users:
                users[author] = username or f"user_{author}"
            tweets.append(normalized)
        stats["emitted_tweets"] = len(tweets)
        stats["emitted_users"] = len(users)

        tweets_path = self.tweets_path(batch_id)
        users_path = self.users_path(batch_id)
        self.dfs.put_file(tweets_path, _jsonl(tweets))
        self.dfs.put_file(users_path, _jsonl(
            [{"id": uid, "username": users[uid]} for uid in users]))
        manifest.stats = stats
        self._save_manifest(manifest)
        return tweets_path, users_path, manifest


def _jsonl(records) -> bytes:
    return "".join(json.dumps(r, sort_keys=True) + "\n" for r in records).encode()


def read_jsonl(dfs, path) -> list[dict]:
    return [json.loads(line) for line in dfs.iter_lines(path) if line.strip()]
