"""Execution backends: anything with ``run(circuits, shots, seed)`` returning counts."""

from __future__ import annotations

import time
from typing import Optional, Protocol, Sequence, runtime_checkable

import numpy as np

from ..circuit import Circuit
from ..device import DeviceModel
from ..sim import NoiseConfig, run_noisy


class BackendError(RuntimeError):
    pass


@runtime_checkable
class Backend(Protocol):
    device: DeviceModel

    def run(self, circuits: Sequence[Circuit], shots: int, seed: Optional[int] = None) -> list[dict[str, int]]: ...


def circuit_seeds(seed: Optional[int], count: int) -> list[Optional[int]]:
    """Independent per-circuit seeds derived from one job seed."""
    if seed is None:
        return [None] * count
    children = np.random.SeedSequence(seed).spawn(count)
    return [int(c.generate_state(1, dtype=np.uint32)[0]) for c in children]


class LocalBackend:
    """The digital twin: circuits on device wires, executed by the trajectory simulator."""

    def __init__(self, device: DeviceModel, noise: NoiseConfig | None = None, workers: int = 1, delay: float = 0.0):
        self.device = device
        self.noise = noise if noise is not None else NoiseConfig()
        self.workers = workers
        self.delay = delay  # artificial per-job latency, used to exercise timeouts

    @property
    def name(self) -> str:
        return f"local:{self.device.name}"

    def run(self, circuits: Sequence[Circuit], shots: int, seed: Optional[int] = None) -> list[dict[str, int]]:
        if shots < 1:
            raise BackendError("shots must be >= 1")
        if self.delay:
            time.sleep(self.delay)
        out = []
        for circ, s in zip(circuits, circuit_seeds(seed, len(circuits))):
            if circ.num_qubits > self.device.num_qubits:
                raise BackendError(f"circuit {circ.name!r} is wider than the device")
            out.append(run_noisy(circ, self.device, self.noise.with_seed(s), shots=shots, workers=self.workers))
        return out
