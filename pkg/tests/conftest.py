import json

import pytest

from miniplex.config import Config
from miniplex.minidfs import MiniDfs
from miniplex.workspace import ALL_TARGETS, Workspace

# Three tweets by two authors; per-author metric sums drive the influence
# task fixtures used across the tablestore, cfstore and tasks tests.
INFLUENCE_TWEETS = [
    {"id": "t1", "author_id": "u1", "text": "good game w1", "created_at": "2023-03-01T00:00:00Z",
     "public_metrics": {"impression_count": 100, "like_count": 10, "quote_count": 1,
                        "reply_count": 2, "retweet_count": 5}},
    {"id": "t2", "author_id": "u1", "text": "more w2", "created_at": "2023-03-01T00:01:00Z",
     "public_metrics": {"impression_count": 50, "like_count": 5, "quote_count": 0,
                        "reply_count": 1, "retweet_count": 2}},
    {"id": "t3", "author_id": "u2", "text": "meh w1", "created_at": "2023-03-01T00:02:00Z",
     "public_metrics": {"impression_count": 10, "like_count": 1, "quote_count": 0,
                        "reply_count": 0, "retweet_count": 0}},
]


def tweets_jsonl(tweets=INFLUENCE_TWEETS) -> bytes:
    return "".join(json.dumps(t) + "\n" for t in tweets).encode()


@pytest.fixture
def dfs(tmp_path):
    """Three-node cluster with a tiny block size so tests exercise splitting."""
    return MiniDfs(tmp_path / "dfs", nodes=3, block_size=128, replication=3)


@pytest.fixture
def influence_tweets():
    return [dict(t) for t in INFLUENCE_TWEETS]


def make_loaded_workspace(root, tweets_bytes, targets=ALL_TARGETS, workers=2):
    """Fresh workspace with one batch landed, preprocessed and loaded."""
    ws = Workspace(Config(root=root, nodes=3, block_size=1 << 20,
                          workers=workers))
    manifest = ws.ingestor.land(tweets_bytes)
    ws.ingestor.preprocess(manifest.batch_id)
    ws.load_all(manifest.batch_id, targets)
    return ws


@pytest.fixture
def loaded_workspace(tmp_path):
    return make_loaded_workspace(tmp_path / "ws", tweets_jsonl())
