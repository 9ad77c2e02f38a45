"""HTTP client backend for the job service."""

from __future__ import annotations

import os
import time
from typing import Optional, Sequence

import httpx

from ..circuit import Circuit
from ..device import DeviceModel
from .api import API_SCHEMA
from .backend import BackendError
from .jobs import JobTimeout

TOKEN_ENV = "QCBENCH_TOKEN"


class RemoteBackend:
    def __init__(
        self,
        base_url: str,
        timeout: float = 600.0,
        poll: float = 0.02,
        client: Optional[httpx.Client] = None,
        token: Optional[str] = None,
    ):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self.poll = poll
        token = token if token is not None else os.environ.get(TOKEN_ENV)
        headers = {"Authorization": f"Bearer {token}"} if token else {}
        self.client = client or httpx.Client(base_url=self.base_url, timeout=30.0, headers=headers)
        self._device: Optional[DeviceModel] = None

    @property
    def name(self) -> str:
        return f"remote:{self.base_url}"

    @property
    def device(self) -> DeviceModel:
        if self._device is None:
            resp = self.client.get("/v1/device")
            resp.raise_for_status()
            self._device = DeviceModel.from_dict(resp.json())
        return self._device

    def submit(self, circuits: Sequence[Circuit], shots: int, seed: Optional[int] = None) -> str:
        body = {"schema_version": API_SCHEMA, "circuits": [c.to_dict() for c in circuits], "shots": shots, "seed": seed}
        resp = self.client.post("/v1/jobs", json=body)
        if resp.status_code != 201:
            raise BackendError(f"submit rejected ({resp.status_code}): {resp.text}")
        return resp.json()["job_id"]

    def status(self, job_id: str) -> dict:
        resp = self.client.get(f"/v1/jobs/{job_id}")
        resp.raise_for_status()
        return resp.json()

    def run(self, circuits: Sequence[Circuit], shots: int, seed: Optional[int] = None) -> list[dict[str, int]]:
        job_id = self.submit(circuits, shots, seed)
        deadline = time.monotonic() + self.timeout
        while True:
            st = self.status(job_id)
            if st["state"] == "done":
                break
            if st["state"] == "failed":
                raise BackendError(st.get("error") or "job failed")
            if time.monotonic() > deadline:
                raise JobTimeout(f"{job_id} not finished within {self.timeout}s")
            time.sleep(self.poll)
        resp = self.client.get(f"/v1/jobs/{job_id}/counts")
        resp.raise_for_status()
        return resp.json()["counts"]
