import hashlib
import json

import pytest

from miniplex.config import Config
from miniplex.errors import IngestError
from miniplex.ingest import Ingestor, read_jsonl
from miniplex.workspace import (ALL_TARGETS, TARGET_CF, TARGET_EXTERNAL,
                                TARGET_INTERNAL, Workspace)
from tests.conftest import INFLUENCE_TWEETS, tweets_jsonl


@pytest.fixture
def ingestor(dfs, tmp_path):
    return Ingestor(dfs, tmp_path / "batches")


@pytest.fixture
def workspace(tmp_path):
    return Workspace(Config(root=tmp_path / "ws", nodes=3, block_size=1 << 20,
                            workers=2))


MESSY_LINES = [
    json.dumps(INFLUENCE_TWEETS[0]),
    "this is not json",
    json.dumps({"author_id": "u3", "text": "no id"}),
    json.dumps(INFLUENCE_TWEETS[0]),                      # duplicate id t1
    json.dumps({"id": "t9", "author_id": "u2", "text": "bare",
                "public_metrics": {"like_count": "7", "reply_count": -4}}),
    json.dumps(INFLUENCE_TWEETS[2]),
]


def land_bytes(ingestor, payload: bytes):
    return ingestor.land(payload)


# -- landing ---------------------------------------------------------------

def test_land_copies_bytes_unmodified(dfs, ingestor):
    payload = tweets_jsonl()
    manifest = land_bytes(ingestor, payload)
    assert dfs.get_file(manifest.raw_path) == payload
    assert manifest.stats["read"] == 0  # stats appear after preprocess
    _, _, updated = ingestor.preprocess(manifest.batch_id)
    assert updated.stats["read"] == 3


def test_land_twice_gives_distinct_batches(ingestor):
    m1 = land_bytes(ingestor, b"{}\n")
    m2 = land_bytes(ingestor, b"{}\n")
    assert m1.batch_id != m2.batch_id
    assert set(ingestor.list_batches()) == {m1.batch_id, m2.batch_id}


def test_land_empty_file(ingestor):
    manifest = land_bytes(ingestor, b"")
    _, _, updated = ingestor.preprocess(manifest.batch_id)
    assert updated.stats == {"read": 0, "malformed": 0, "duplicates": 0,
                             "emitted_tweets": 0, "emitted_users": 0}


def test_land_unreadable_source(ingestor, tmp_path):
    with pytest.raises(IngestError, match="not readable"):
        ingestor.land(tmp_path / "absent.jsonl")


def test_unknown_batch(ingestor):
    with pytest.raises(IngestError, match="unknown batch"):
        ingestor.preprocess("b9999")


# -- preprocessing ------------------------------------------------------------

def test_preprocess_counts_and_conservation(dfs, ingestor):
    manifest = land_bytes(ingestor, ("\n".join(MESSY_LINES) + "\n").encode())
    _, _, updated = ingestor.preprocess(manifest.batch_id)
    s = updated.stats
    assert s["read"] == 6
    assert s["malformed"] == 2
    assert s["duplicates"] == 1
    assert s["emitted_tweets"] == 3
    assert s["read"] == s["malformed"] + s["duplicates"] + s["emitted_tweets"]


def test_preprocess_normalizes_counters(dfs, ingestor):
    manifest = land_bytes(ingestor, ("\n".join(MESSY_LINES) + "\n").encode())
    tweets_path, _, _ = ingestor.preprocess(manifest.batch_id)
    by_id = {t["id"]: t for t in read_jsonl(dfs, tweets_path)}
    bare = by_id["t9"]["public_metrics"]
    assert bare == {"impression_count": 0, "like_count": 7, "quote_count": 0,
                    "reply_count": 0, "retweet_count": 0}  # junk and negatives -> 0
    assert by_id["t9"]["batch_id"] == manifest.batch_id
    assert by_id["t9"]["ingested_at"]


def test_preprocess_extracts_distinct_users(dfs, ingestor):
    manifest = land_bytes(ingestor, tweets_jsonl())  # 3 tweets, 2 authors
    _, users_path, updated = ingestor.preprocess(manifest.batch_id)
    users = read_jsonl(dfs, users_path)
    assert updated.stats["emitted_users"] == 2
    assert {u["id"] for u in users} == {"u1", "u2"}
    assert {u["username"] for u in users} == {"user_u1", "user_u2"}


def test_preprocess_uses_payload_username_when_present(dfs, ingestor):
    rec = dict(INFLUENCE_TWEETS[0], username="alice")
    manifest = land_bytes(ingestor, (json.dumps(rec) + "\n").encode())
    _, users_path, _ = ingestor.preprocess(manifest.batch_id)
    assert read_jsonl(dfs, users_path) == [{"id": "u1", "username": "alice"}]


def test_landing_zone_immutable(dfs, ingestor):
    manifest = land_bytes(ingestor, ("\n".join(MESSY_LINES) + "\n").encode())
    before = hashlib.sha256(dfs.get_file(manifest.raw_path)).hexdigest()
    ingestor.preprocess(manifest.batch_id)
    assert hashlib.sha256(dfs.get_file(manifest.raw_path)).hexdigest() == before


def test_preprocess_idempotent(dfs, ingestor):
    first = land_bytes(ingestor, ("\n".join(MESSY_LINES) + "\n").encode())
    tweets_path, _, _ = ingestor.preprocess(first.batch_id)
    clean = dfs.get_file(tweets_path)

    second = land_bytes(ingestor, clean)
    tweets2, _, updated = ingestor.preprocess(second.batch_id)
    assert updated.stats["malformed"] == 0
    assert updated.stats["duplicates"] == 0
    assert updated.stats["emitted_tweets"] == 3

    def content(path):
        rows = read_jsonl(dfs, path)
        for r in rows:
            r.pop("batch_id"), r.pop("ingested_at")  # enrichment tracks the batch
        return rows

    assert content(tweets_path) == content(tweets2)


# -- cross-store loading ---------------------------------------------------------

def test_load_all_counts_agree(workspace):
    manifest = workspace.ingestor.land(tweets_jsonl())
    workspace.ingestor.preprocess(manifest.batch_id)
    report = workspace.load_all(manifest.batch_id, ALL_TARGETS)
    assert report[TARGET_EXTERNAL] == {"tweets": 3, "users": 2}
    assert report[TARGET_INTERNAL] == {"tweets": 3, "users": 2}
    assert report[TARGET_CF]["tweets"] == 3
    assert workspace.state()["batch_id"] == manifest.batch_id


def test_load_all_empty_batch(workspace):
    manifest = workspace.ingestor.land(b"")
    workspace.ingestor.preprocess(manifest.batch_id)
    report = workspace.load_all(manifest.batch_id, ALL_TARGETS)
    assert all(entry["tweets"] == 0 for entry in report.values())


def test_load_all_detects_count_mismatch(workspace):
    # induce a duplicate id in the preprocessed file: the cf store rejects it,
    # the table stores count it, so the cross-store totals cannot agree
    forged = tweets_jsonl(INFLUENCE_TWEETS + [INFLUENCE_TWEETS[0]])
    workspace.dfs.put_file(workspace.ingestor.tweets_path("b0042"), forged)
    workspace.dfs.put_file(workspace.ingestor.users_path("b0042"),
                           b'{"id": "u1", "username": "x"}\n')
    with pytest.raises(IngestError, match="polyglot consistency"):
        workspace.load_all("b0042", ALL_TARGETS)


def test_load_all_rejects_unknown_target(workspace):
    manifest = workspace.ingestor.land(tweets_jsonl())
    workspace.ingestor.preprocess(manifest.batch_id)
    with pytest.raises(IngestError, match="unknown load targets"):
        workspace.load_all(manifest.batch_id, ("elastic",))


def test_load_all_requires_preprocessed_batch(workspace):
    manifest = workspace.ingestor.land(tweets_jsonl())
    with pytest.raises(IngestError, match="not preprocessed"):
        workspace.load_all(manifest.batch_id)


def test_load_all_replaces_previous_batch(workspace):
    m1 = workspace.ingestor.land(tweets_jsonl())
    workspace.ingestor.preprocess(m1.batch_id)
    workspace.load_all(m1.batch_id)
    m2 = workspace.ingestor.land(tweets_jsonl(INFLUENCE_TWEETS[:1]))
    workspace.ingestor.preprocess(m2.batch_id)
    report = workspace.load_all(m2.batch_id)
    assert report[TARGET_EXTERNAL]["tweets"] == 1
    assert workspace.state()["batch_id"] == m2.batch_id
