"""Append-only JSON-lines record of CLI runs."""

import fcntl
import json
import os
import time
from dataclasses import asdict, dataclass, field

__all__ = ["ResultRecord", "append_record", "read_records"]


@dataclass
class ResultRecord:
    command: str
    config_hash: str
    results: dict = field(default_factory=dict)
    artifacts: list = field(default_factory=list)
    timestamp: str = ""
    duplicate: bool = False


def read_records(path):
    if not os.path.exists(path):
        return []
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def append_record(path, record):
    """Append `record` under an exclusive lock; flag reruns of a known hash.

    The duplicate check and the write happen while holding the lock, so
    concurrent writers cannot interleave or both miss each other.
    """
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "a+") as fh:
        fcntl.flock(fh, fcntl.LOCK_EX)
        try:
            fh.seek(0)
            seen = set()
            for line in fh:
                if line.strip():
                    old = json.loads(line)
                    seen.add((old.get("command"), old.get("config_hash")))
            record.duplicate = (record.command, record.config_hash) in seen
            if not record.timestamp:
                record.timestamp = time.strftime("%Y-%m-%dT%H:%M:%S%z")
            fh.seek(0, os.SEEK_END)
            fh.write(json.dumps(asdict(record), sort_keys=True, default=float) + "\n")
            fh.flush()
            os.fsync(fh.fileno())
        finally:
            fcntl.flock(fh, fcntl.LOCK_UN)
    return record
