"""Backends, job queue, HTTP service and run store."""

from .backend import Backend, BackendError, LocalBackend
from .jobs import JobQueue, JobRecord, JobRequest, JobTimeout, submit_and_wait
from .store import StoreError, persist_run, read_runs

__all__ = [
    "Backend",
    "BackendError",
    "LocalBackend",
    "JobQueue",
    "JobRecord",
    "JobRequest",
    "JobTimeout",
    "submit_and_wait",
    "StoreError",
    "persist_run",
    "read_runs",
]
