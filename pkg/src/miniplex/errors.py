"""Exception hierarchy shared by all miniplex engines."""


class MiniplexError(Exception):
    """Base class for every error raised by miniplex itself."""


class DfsError(MiniplexError):
    """Block store failure: unknown path, no available replica, bad write."""


class JobError(MiniplexError):
    """A MapReduce job aborted.  Carries the failing split index when known."""

    def __init__(self, message, split_index=None):
        super().__init__(message)
        self.split_index = split_index


class DataflowError(MiniplexError):
    """A dataflow plan failed at action time.  Carries the partition index."""

    def __init__(self, message, partition_index=None):
        super().__init__(message)
        self.partition_index = partition_index


class SqlError(MiniplexError):
    """Catalog or execution failure in the table store."""


class SqlParseError(SqlError):
    """Query text rejected.  `position` is a character offset into the text."""

    def __init__(self, message, position):
        super().__init__(f"{message} (at position {position})")
        self.position = position


class CfError(MiniplexError):
    """Column-family store failure: unknown table or family, bad arguments."""


class GraphError(MiniplexError):
    """Graph construction or export failure."""


class IngestError(MiniplexError):
    """Landing, preprocessing or cross-store loading failure."""


class TaskError(MiniplexError):
    """A routed task could not run on the requested backend."""


class BenchError(MiniplexError):
    """Benchmark harness failure (bad matrix, empty report, ...)."""


class BenchMismatchError(BenchError):
    """Engines of the same task disagreed; the bench run was aborted."""

    def __init__(self, message, diff=None):
        super().__init__(message)
        self.diff = diff or []


class ConfigError(MiniplexError):
    """Bad configuration file or option value."""
