"""One root directory wiring every engine together.

The workspace owns the block store, the SQL catalog, the column-family
store and the ingestor, and keeps a small state file recording which batch
is currently loaded so separate CLI invocations can find their data.
"""

from __future__ import annotations

import json
from pathlib import Path

from .cfstore import CfStore, load_tweets
from .config import Config
from .dataflow import Dataflow
from .errors import IngestError
from .ingest import Ingestor, read_jsonl
from .minidfs import MiniDfs
from .mr_engine import MapReduce
from .tablestore import TableCatalog, tweet_table_schema, user_table_schema

TARGET_EXTERNAL = "tablestore-external"
TARGET_INTERNAL = "tablestore-internal"
TARGET_CF = "cfstore"
ALL_TARGETS = (TARGET_EXTERNAL, TARGET_INTERNAL, TARGET_CF)

TWEETS_EXTERNAL = "tweets_external"
TWEETS_INTERNAL = "tweets_internal"
USERS_EXTERNAL = "users_external"
USERS_INTERNAL = "users_internal"
CF_TWEETS = "tweets"


class Workspace:
    def __init__(self, config: Config | None = None):
        self.config = config or Config()
        root = self.config.root
        root.mkdir(parents=True, exist_ok=True)
        self.dfs = MiniDfs(root / "dfs", nodes=self.config.nodes,
                           block_size=self.config.block_size,
                           replication=self.config.replication)
        self.catalog = TableCatalog(self.dfs, root / "tables")
        self.cfstore = CfStore(self.dfs, root / "cf")
        self.ingestor = Ingestor(self.dfs, root / "batches")
        self.report_dir = Path(self.config.report_dir)
        self.workers = self.config.workers

    def mr_engine(self) -> MapReduce:
        return MapReduce(self.dfs, workers=self.workers)

    def dataflow(self) -> Dataflow:
        return Dataflow(self.dfs, workers=self.workers)

    # -- state ---------------------------------------------------------------

    @property
    def _state_path(self) -> Path:
        return self.config.root / "state.json"

    def state(self) -> dict:
        if self._state_path.exists():
            return json.loads(self._state_path.read_text(encoding="utf-8"))
        return {}

    def _save_state(self, state: dict):
        self._state_path.write_text(json.dumps(state, indent=1),
                                    encoding="utf-8")

    def current_batch(self) -> str:
        batch_id = self.state().get("batch_id")
        if batch_id is None:
            raise IngestError("no batch loaded; run ingest land/preprocess/load first")
        return batch_id

    # -- cross-store loading ---------------------------------------------------

    def load_all(self, batch_id: str, targets=ALL_TARGETS) -> dict:
        """Load the batch's tweets and users into every requested target and
        verify the per-target row counts agree.  Existing canonical tables are
        replaced, so at most one batch is active per workspace root."""
        targets = tuple(targets)
        unknown = set(targets) - set(ALL_TARGETS)
        if unknown:
            raise IngestError(f"unknown load targets: {sorted(unknown)}")
        if not targets:
            raise IngestError("no load targets given")
        tweets_path = self.ingestor.tweets_path(batch_id)
        users_path = self.ingestor.users_path(batch_id)
        for path in (tweets_path, users_path):
            if not self.dfs.exists(path):
                raise IngestError(
                    f"batch {batch_id} not preprocessed (missing {path})")

        report: dict[str, dict] = {}
        if TARGET_EXTERNAL in targets:
            self.catalog.drop_if_exists(TWEETS_EXTERNAL)
            self.catalog.drop_if_exists(USERS_EXTERNAL)
            self.catalog.create_external_table(
                tweet_table_schema(TWEETS_EXTERNAL), tweets_path, "jsonl")
            self.catalog.create_external_table(
                user_table_schema(USERS_EXTERNAL), users_path, "jsonl")
            report[TARGET_EXTERNAL] = {
                "tweets": self.catalog.scan_count(TWEETS_EXTERNAL),
                "users": self.catalog.scan_count(USERS_EXTERNAL)}
        if TARGET_INTERNAL in targets:
            if not self.catalog.has_table(TWEETS_EXTERNAL):
                self.catalog.create_external_table(
                    tweet_table_schema(TWEETS_EXTERNAL), tweets_path, "jsonl")
                self.catalog.create_external_table(
                    user_table_schema(USERS_EXTERNAL), users_path, "jsonl")
            self.catalog.drop_if_exists(TWEETS_INTERNAL)
            self.catalog.drop_if_exists(USERS_INTERNAL)
            self.catalog.create_internal_table_as(
                tweet_table_schema(TWEETS_INTERNAL), TWEETS_EXTERNAL)
            self.catalog.create_internal_table_as(
                user_table_schema(USERS_INTERNAL), USERS_EXTERNAL)
            report[TARGET_INTERNAL] = {
                "tweets": self.catalog.table(TWEETS_INTERNAL).row_count,
                "users": self.catalog.table(USERS_INTERNAL).row_count}
        if TARGET_CF in targets:
            if self.cfstore.has_table(CF_TWEETS):
                self.cfstore.drop_table(CF_TWEETS)
            table = self.cfstore.create_table(CF_TWEETS, {"m"})
            load_report = load_tweets(table, read_jsonl(self.dfs, tweets_path))
            report[TARGET_CF] = {"tweets": load_report.loaded,
                                 "rejected": load_report.rejected}

        tweet_counts = {t: report[t]["tweets"] for t in report}
        if len(set(tweet_counts.values())) > 1:
            raise IngestError(
                f"polyglot consistency violated: tweet counts differ {tweet_counts}")
        user_counts = {t: report[t]["users"] for t in report if "users" in report[t]}
        if len(set(user_counts.values())) > 1:
            raise IngestError(
                f"polyglot consistency violated: user counts differ {user_counts}")

        state = self.state()
        state.update({"batch_id": batch_id, "tweets_path": tweets_path,
                      "users_path": users_path, "targets": sorted(targets)})
        self._save_state(state)
        return report
