"""FIFO job queue over a backend."""

from __future__ import annotations

import itertools
import threading
import time
import uuid
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Optional

from ..circuit import Circuit

STATES = ("queued", "running", "done", "failed")
_NEXT = {"queued": {"running", "failed"}, "running": {"done", "failed"}}


class JobTimeout(TimeoutError):
    pass


@dataclass(frozen=True)
class JobRequest:
    circuits: tuple[Circuit, ...]
    shots: int = 1024
    seed: Optional[int] = None
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.shots < 1:
            raise ValueError("shots must be >= 1")
        if not self.circuits:
            raise ValueError("a job needs at least one circuit")
        object.__setattr__(self, "circuits", tuple(self.circuits))

    def to_dict(self) -> dict:
        return {
            "circuits": [c.to_dict() for c in self.circuits],
            "shots": self.shots,
            "seed": self.seed,
            "options": dict(self.options),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "JobRequest":
        return cls(tuple(Circuit.from_dict(c) for c in doc["circuits"]), int(doc.get("shots", 1024)), doc.get("seed"), dict(doc.get("options") or {}))


@dataclass(frozen=True)
class JobRecord:
    job_id: str
    state: str = "queued"
    submitted: float = 0.0
    started: Optional[float] = None
    completed: Optional[float] = None
    counts: Optional[tuple[dict, ...]] = None
    error: Optional[str] = None
    shots: int = 0

    def advance(self, state: str, **changes) -> "JobRecord":
        if state not in _NEXT.get(self.state, ()):
            raise ValueError(f"illegal transition {self.state} -> {state}")
        return replace(self, state=state, **changes)

    @property
    def terminal(self) -> bool:
        return self.state in ("done", "failed")

    def to_dict(self, with_counts: bool = True) -> dict:
        d = {
            "job_id": self.job_id,
            "state": self.state,
            "submitted": self.submitted,
            "started": self.started,
            "completed": self.completed,
            "error": self.error,
            "shots": self.shots,
        }
        if with_counts:
            d["counts"] = None if self.counts is None else [dict(c) for c in self.counts]
        return d

    @classmethod
    def from_dict(cls, doc: dict) -> "JobRecord":
        counts = doc.get("counts")
        return cls(
            job_id=doc["job_id"],
            state=doc["state"],
            submitted=doc.get("submitted", 0.0),
            started=doc.get("started"),
            completed=doc.get("completed"),
            counts=None if counts is None else tuple(dict(c) for c in counts),
            error=doc.get("error"),
            shots=doc.get("shots", 0),
        )


class JobQueue:
    """Single-writer job store with a pool of executor threads draining a FIFO."""

    def __init__(self, backend, workers: int = 1):
        self.backend = backend
        self._records: dict[str, JobRecord] = {}
        self._requests: dict[str, JobRequest] = {}
        self._fifo: deque[str] = deque()
        self._cond = threading.Condition()
        self._counter = itertools.count()
        self._closed = False
        self._threads = [threading.Thread(target=self._loop, daemon=True) for _ in range(max(1, workers))]
        for t in self._threads:
            t.start()

    def submit(self, request: JobRequest) -> str:
        with self._cond:
            job_id = f"job-{next(self._counter):06d}-{uuid.uuid4().hex[:8]}"
            self._records[job_id] = JobRecord(job_id, "queued", time.time(), shots=request.shots)
            self._requests[job_id] = request
            self._fifo.append(job_id)
            self._cond.notify_all()
        return job_id

    def get(self, job_id: str) -> JobRecord:
        with self._cond:
            return self._records[job_id]

    def wait(self, job_id: str, timeout: Optional[float] = None) -> JobRecord:
        deadline = None if timeout is None else time.monotonic() + timeout
        with self._cond:
            while not self._records[job_id].terminal:
                left = None if deadline is None else deadline - time.monotonic()
                if left is not None and left <= 0:
                    raise JobTimeout(f"{job_id} not finished within {timeout}s")
                self._cond.wait(left)
            return self._records[job_id]

    def close(self) -> None:
        with self._cond:
            self._closed = True
            self._cond.notify_all()

    def _set(self, job_id: str, state: str, **changes) -> None:
        with self._cond:
            self._records[job_id] = self._records[job_id].advance(state, **changes)
            self._cond.notify_all()

    def _loop(self) -> None:
        while True:
            with self._cond:
                while not self._fifo and not self._closed:
                    self._cond.wait()
                if self._closed:
                    return
                job_id = self._fifo.popleft()
                request = self._requests.pop(job_id)
            self._set(job_id, "running", started=time.time())
            try:
                counts = self.backend.run(list(request.circuits), request.shots, request.seed)
            except Exception as exc:  # backend failures are recorded, not raised
                self._set(job_id, "failed", completed=time.time(), error=f"{type(exc).__name__}: {exc}")
            else:
                self._set(job_id, "done", completed=time.time(), counts=tuple(counts))


def submit_and_wait(backend, request: JobRequest, timeout: Optional[float] = None) -> JobRecord:
    """Queue a job on ``backend`` (a JobQueue or any Backend) and block until it finishes."""
    if isinstance(backend, JobQueue):
        return backend.wait(backend.submit(request), timeout)
    queue = JobQueue(backend)
    try:
        return queue.wait(queue.submit(request), timeout)
    finally:
        queue.close()
