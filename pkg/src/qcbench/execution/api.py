"""HTTP service exposing a backend through a job queue."""

from __future__ import annotations

import os
import threading
import time
from typing import Optional

from fastapi import FastAPI, HTTPException, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from ..circuit import CIRCUIT_SCHEMA, Circuit, CircuitError
from .jobs import JobQueue, JobRequest

API_SCHEMA = 1
BIND_ENV = "QCBENCH_BIND"
DEFAULT_BIND = "127.0.0.1:8765"


class InstructionModel(BaseModel):
    kind: str
    operands: list[int]
    params: list[float] = []


class CircuitModel(BaseModel):
    schema_version: int = CIRCUIT_SCHEMA
    name: str = "circuit"
    num_qubits: int = Field(ge=1)
    instructions: list[InstructionModel]


class JobRequestModel(BaseModel):
    schema_version: int = API_SCHEMA
    circuits: list[CircuitModel] = Field(min_length=1)
    shots: int = Field(default=1024, ge=1)
    seed: Optional[int] = None
    options: dict = {}


class JobCreated(BaseModel):
    schema_version: int = API_SCHEMA
    job_id: str


class JobStatus(BaseModel):
    schema_version: int = API_SCHEMA
    job_id: str
    state: str
    submitted: float
    started: Optional[float] = None
    completed: Optional[float] = None
    error: Optional[str] = None
    shots: int


class JobCounts(BaseModel):
    schema_version: int = API_SCHEMA
    job_id: str
    counts: list[dict[str, int]]


def create_app(backend, workers: int = 1) -> FastAPI:
    queue = backend if isinstance(backend, JobQueue) else JobQueue(backend, workers=workers)
    app = FastAPI(title="qcbench job service")
    app.state.queue = queue

    @app.exception_handler(RequestValidationError)
    async def bad_request(request: Request, exc: RequestValidationError):
        detail = [{"loc": list(e.get("loc", ())), "msg": str(e.get("msg")), "type": str(e.get("type"))} for e in exc.errors()]
        return JSONResponse(status_code=400, content={"detail": detail})

    def record(job_id: str):
        try:
            return queue.get(job_id)
        except KeyError:
            raise HTTPException(status_code=404, detail=f"unknown job {job_id}")

    @app.post("/v1/jobs", status_code=201, response_model=JobCreated)
    def submit(body: JobRequestModel):
        if body.schema_version != API_SCHEMA:
            raise HTTPException(status_code=400, detail=f"unsupported schema_version {body.schema_version}")
        try:
            circuits = tuple(Circuit.from_dict(c.model_dump()) for c in body.circuits)
            request = JobRequest(circuits, body.shots, body.seed, body.options)
        except (CircuitError, ValueError, KeyError) as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        return JobCreated(job_id=queue.submit(request))

    @app.get("/v1/jobs/{job_id}", response_model=JobStatus)
    def status(job_id: str):
        return JobStatus(**record(job_id).to_dict(with_counts=False))

    @app.get("/v1/jobs/{job_id}/counts", response_model=JobCounts)
    def counts(job_id: str):
        rec = record(job_id)
        if rec.state == "failed":
            raise HTTPException(status_code=409, detail=rec.error)
        if rec.state != "done":
            raise HTTPException(status_code=409, detail=f"job is {rec.state}")
        return JobCounts(job_id=job_id, counts=[dict(c) for c in rec.counts])

    @app.get("/v1/device")
    def device():
        return queue.backend.device.to_dict()

    return app


def parse_bind(bind: Optional[str] = None) -> tuple[str, int]:
    bind = bind or os.environ.get(BIND_ENV, DEFAULT_BIND)
    host, _, port = bind.rpartition(":")
    return host or "127.0.0.1", int(port)


class ServerHandle:
    def __init__(self, server, thread: threading.Thread, host: str, port: int):
        self.server = server
        self.thread = thread
        self.host = host
        self.port = port

    @property
    def url(self) -> str:
        return f"http://{self.host}:{self.port}"

    def stop(self) -> None:
        self.server.should_exit = True
        self.thread.join(timeout=10)


def serve_api(backend, bind: Optional[str] = None, workers: int = 1, block: bool = False) -> ServerHandle:
    """Start the service in a background thread (or in the foreground with ``block``)."""
    import uvicorn

    host, port = parse_bind(bind)
    config = uvicorn.Config(create_app(backend, workers), host=host, port=port, log_level="warning")
    server = uvicorn.Server(config)
    if block:
        server.run()
        return ServerHandle(server, threading.current_thread(), host, port)
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    deadline = time.monotonic() + 10
    while not server.started:
        if not thread.is_alive():
            raise OSError(f"could not bind {host}:{port}")
        if time.monotonic() > deadline:
            raise OSError(f"server on {host}:{port} did not start")
        time.sleep(0.01)
    if port == 0:
        port = server.servers[0].sockets[0].getsockname()[1]
    return ServerHandle(server, thread, host, port)
