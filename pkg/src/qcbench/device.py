"""Processor topologies, device error/timing parameters and crosstalk metrics."""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

PRESETS = ("spark-5", "garnet-20", "emerald-54", "crystal-150")
TOPOLOGY_SCHEMA = 1
DEVICE_SCHEMA = 1


class DeviceError(ValueError):
    pass


def _pair(a: int, b: int) -> tuple[int, int]:
    return (a, b) if a < b else (b, a)


@dataclass(frozen=True)
class Topology:
    qubits: tuple[int, ...]
    couplers: tuple[tuple[int, int], ...]
    coords: tuple[tuple[int, int], ...] = ()
    name: str = "custom"

    def __post_init__(self):
        qs = set(self.qubits)
        if len(qs) != len(self.qubits):
            raise DeviceError("duplicate qubit ids")
        if tuple(sorted(qs)) != tuple(range(len(qs))):
            raise DeviceError("qubit ids must be 0..n-1")
        seen = set()
        canon = []
        for a, b in self.couplers:
            if a == b or a not in qs or b not in qs:
                raise DeviceError(f"invalid coupler ({a}, {b})")
            p = _pair(a, b)
            if p in seen:
                raise DeviceError(f"duplicate coupler {p}")
            seen.add(p)
            canon.append(p)
        object.__setattr__(self, "couplers", tuple(canon))
        if self.coords and len(self.coords) != len(self.qubits):
            raise DeviceError("coords must cover every qubit")

    @property
    def num_qubits(self) -> int:
        return len(self.qubits)

    def neighbors(self, q: int) -> list[int]:
        return self._adj[q]

    @property
    def _adj(self) -> list[list[int]]:
        adj = self.__dict__.get("_adj_cache")
        if adj is None:
            adj = [[] for _ in self.qubits]
            for a, b in self.couplers:
                adj[a].append(b)
                adj[b].append(a)
            for lst in adj:
                lst.sort()
            object.__setattr__(self, "_adj_cache", adj)
        return adj

    def has_coupler(self, a: int, b: int) -> bool:
        return _pair(a, b) in self._coupler_set

    @property
    def _coupler_set(self) -> frozenset:
        s = self.__dict__.get("_cset_cache")
        if s is None:
            s = frozenset(self.couplers)
            object.__setattr__(self, "_cset_cache", s)
        return s

    def distances(self) -> np.ndarray:
        """All-pairs hop distances (BFS); unreachable pairs are -1."""
        d = self.__dict__.get("_dist_cache")
        if d is None:
            n = self.num_qubits
            d = np.full((n, n), -1, dtype=int)
            for s in range(n):
                d[s, s] = 0
                queue = deque([s])
                while queue:
                    u = queue.popleft()
                    for v in self._adj[u]:
                        if d[s, v] < 0:
                            d[s, v] = d[s, u] + 1
                            queue.append(v)
            d.setflags(write=False)
            object.__setattr__(self, "_dist_cache", d)
        return d

    def is_connected(self, subset: Iterable[int] | None = None) -> bool:
        nodes = set(self.qubits if subset is None else subset)
        if not nodes:
            return False
        start = min(nodes)
        seen = {start}
        stack = [start]
        while stack:
            u = stack.pop()
            for v in self._adj[u]:
                if v in nodes and v not in seen:
                    seen.add(v)
                    stack.append(v)
        return seen == nodes

    def is_bipartite(self) -> bool:
        color = {}
        for s in self.qubits:
            if s in color:
                continue
            color[s] = 0
            stack = [s]
            while stack:
                u = stack.pop()
                for v in self._adj[u]:
                    if v not in color:
                        color[v] = 1 - color[u]
                        stack.append(v)
                    elif color[v] == color[u]:
                        return False
        return True

    def check_invariants(self) -> None:
        if not self.is_connected():
            raise DeviceError("topology is not connected")
        if not self.is_bipartite():
            raise DeviceError("topology is not bipartite")
        if self.num_qubits > 1:
            for q in self.qubits:
                if not 1 <= len(self._adj[q]) <= 4:
                    raise DeviceError(f"qubit {q} has degree {len(self._adj[q])}")

    def to_dict(self) -> dict:
        return {
            "schema_version": TOPOLOGY_SCHEMA,
            "name": self.name,
            "qubits": list(self.qubits),
            "couplers": [list(c) for c in self.couplers],
            "coords": [list(c) for c in self.coords],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Topology":
        if doc.get("schema_version", TOPOLOGY_SCHEMA) != TOPOLOGY_SCHEMA:
            raise DeviceError(f"unsupported topology schema {doc.get('schema_version')}")
        return cls(
            qubits=tuple(doc["qubits"]),
            couplers=tuple(tuple(c) for c in doc["couplers"]),
            coords=tuple(tuple(c) for c in doc.get("coords", [])),
            name=doc.get("name", "custom"),
        )


def lattice_from_columns(heights: Sequence[int], name: str = "custom") -> Topology:
    """Square-lattice patch with the given column heights, columns centred vertically.

    Qubits are numbered column by column, bottom to top.
    """
    heights = list(heights)
    if not heights or any(int(h) != h or h < 1 for h in heights):
        raise DeviceError(f"invalid column profile {heights!r}")
    tallest = max(heights)
    coords: list[tuple[int, int]] = []
    for col, h in enumerate(heights):
        off = (tallest - h) // 2
        coords.extend((off + r, col) for r in range(h))
    index = {rc: i for i, rc in enumerate(coords)}
    couplers = []
    for (r, c), i in index.items():
        for nb in ((r + 1, c), (r, c + 1)):
            j = index.get(nb)
            if j is not None:
                couplers.append(_pair(i, j))
    couplers.sort()
    return Topology(tuple(range(len(coords))), tuple(couplers), tuple(coords), name)


def build_crystal_topology(preset_or_rows: str | Sequence[int]) -> Topology:
    if isinstance(preset_or_rows, str):
        if preset_or_rows not in PRESETS:
            raise DeviceError(f"unknown preset {preset_or_rows!r}")
        text = resources.files("qcbench.data.topologies").joinpath(f"{preset_or_rows}.json").read_text()
        topo = Topology.from_dict(json.loads(text))
    else:
        topo = lattice_from_columns(preset_or_rows)
    topo.check_invariants()
    return topo


@dataclass(frozen=True)
class DeviceModel:
    topology: Topology
    err_1q: tuple[float, ...]
    err_cz: dict = field(hash=False)
    ro_err: tuple[tuple[float, float], ...]
    t1: tuple[float, ...]
    t2: tuple[float, ...]
    dur_prx: float = 20e-9
    dur_cz: float = 30e-9
    dur_ro: float = 1e-6
    drive_xtalk: np.ndarray | None = field(default=None, hash=False, compare=False)
    flux_xtalk: np.ndarray | None = field(default=None, hash=False, compare=False)
    name: str = "custom"

    def __post_init__(self):
        n = self.topology.num_qubits
        err_cz = {_pair(*k): float(v) for k, v in dict(self.err_cz).items()}
        object.__setattr__(self, "err_cz", err_cz)
        if set(err_cz) != set(self.topology.couplers):
            raise DeviceError("err_cz must cover exactly the topology couplers")
        for name in ("err_1q", "ro_err", "t1", "t2"):
            if len(getattr(self, name)) != n:
                raise DeviceError(f"{name} must have one entry per qubit")
        vals = list(self.err_1q) + list(err_cz.values()) + [e for pr in self.ro_err for e in pr]
        if any(not (0.0 <= v < 1.0) for v in vals):
            raise DeviceError("error rates must lie in [0, 1)")
        for a, b in zip(self.t1, self.t2):
            if a <= 0 or b <= 0 or b > 2 * a:
                raise DeviceError("require 0 < t2 <= 2*t1")
        if min(self.dur_prx, self.dur_cz, self.dur_ro) <= 0:
            raise DeviceError("durations must be positive")
        for attr in ("drive_xtalk", "flux_xtalk"):
            m = getattr(self, attr)
            m = np.eye(n) if m is None else np.array(m, dtype=float)
            if m.shape != (n, n):
                raise DeviceError(f"{attr} must be {n}x{n}")
            if not np.allclose(np.diag(m), 1.0):
                raise DeviceError(f"{attr} must have unit diagonal")
            off = m - np.diag(np.diag(m))
            if np.any(np.abs(off) >= 1.0):
                raise DeviceError(f"{attr} off-diagonal magnitudes must be < 1")
            m.setflags(write=False)
            object.__setattr__(self, attr, m)

    @property
    def num_qubits(self) -> int:
        return self.topology.num_qubits

    def cz_error(self, a: int, b: int) -> float:
        return self.err_cz[_pair(a, b)]

    def scaled(self, factor: float) -> "DeviceModel":
        """Copy with every gate and readout error multiplied by ``factor``."""
        cap = 0.999
        return replace(
            self,
            err_1q=tuple(min(e * factor, cap) for e in self.err_1q),
            err_cz={k: min(v * factor, cap) for k, v in self.err_cz.items()},
            ro_err=tuple((min(a * factor, cap), min(b * factor, cap)) for a, b in self.ro_err),
            name=f"{self.name}-x{factor:g}",
        )

    def to_dict(self) -> dict:
        return {
            "schema_version": DEVICE_SCHEMA,
            "name": self.name,
            "topology": self.topology.to_dict(),
            "err_1q": list(self.err_1q),
            "err_cz": [[a, b, e] for (a, b), e in sorted(self.err_cz.items())],
            "ro_err": [list(p) for p in self.ro_err],
            "t1": list(self.t1),
            "t2": list(self.t2),
            "dur_prx": self.dur_prx,
            "dur_cz": self.dur_cz,
            "dur_ro": self.dur_ro,
            "drive_xtalk": self.drive_xtalk.tolist(),
            "flux_xtalk": self.flux_xtalk.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "DeviceModel":
        if doc.get("schema_version", DEVICE_SCHEMA) != DEVICE_SCHEMA:
            raise DeviceError(f"unsupported device schema {doc.get('schema_version')}")
        topo_doc = doc["topology"]
        topo = build_crystal_topology(topo_doc) if isinstance(topo_doc, str) else Topology.from_dict(topo_doc)
        return cls(
            topology=topo,
            err_1q=tuple(doc["err_1q"]),
            err_cz={(int(a), int(b)): e for a, b, e in doc["err_cz"]},
            ro_err=tuple(tuple(p) for p in doc["ro_err"]),
            t1=tuple(doc["t1"]),
            t2=tuple(doc["t2"]),
            dur_prx=doc.get("dur_prx", 20e-9),
            dur_cz=doc.get("dur_cz", 30e-9),
            dur_ro=doc.get("dur_ro", 1e-6),
            drive_xtalk=doc.get("drive_xtalk"),
            flux_xtalk=doc.get("flux_xtalk"),
            name=doc.get("name", "custom"),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    @classmethod
    def load(cls, path: str | Path) -> "DeviceModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


DRIVE_XTALK_MEDIAN_DB = -48.0
FLUX_XTALK_MEDIAN_DB = -70.0


def uniform_device(
    topology: Topology,
    err_1q: float = 9e-4,
    err_cz: float = 5e-3,
    ro_err: float = 3e-2,
    t1: float = 40e-6,
    t2: float = 30e-6,
    drive_db: float | None = None,
    flux_db: float | None = None,
    name: str = "uniform",
) -> DeviceModel:
    """Homogeneous device; crosstalk off-diagonals set to the given dB level when provided."""
    n = topology.num_qubits

    def xtalk(db):
        if db is None:
            return None
        m = np.full((n, n), 10 ** (db / 20))
        np.fill_diagonal(m, 1.0)
        return m

    return DeviceModel(
        topology=topology,
        err_1q=(err_1q,) * n,
        err_cz={c: err_cz for c in topology.couplers},
        ro_err=((ro_err, ro_err),) * n,
        t1=(t1,) * n,
        t2=(t2,) * n,
        drive_xtalk=xtalk(drive_db),
        flux_xtalk=xtalk(flux_db),
        name=name,
    )


def garnet_median(topology: Topology | None = None) -> DeviceModel:
    return uniform_device(topology or build_crystal_topology("garnet-20"), name="garnet-median")


def garnet_xtalk(topology: Topology | None = None) -> DeviceModel:
    return uniform_device(
        topology or build_crystal_topology("garnet-20"),
        drive_db=DRIVE_XTALK_MEDIAN_DB,
        flux_db=FLUX_XTALK_MEDIAN_DB,
        name="garnet-xtalk",
    )


def ideal_device(topology: Topology | None = None) -> DeviceModel:
    return uniform_device(
        topology or build_crystal_topology("garnet-20"), err_1q=0.0, err_cz=0.0, ro_err=0.0, name="ideal"
    )


PROFILES = {"garnet-median": garnet_median, "garnet-xtalk": garnet_xtalk, "ideal": ideal_device}


def load_device(spec: str | Path) -> DeviceModel:
    """Resolve a named profile or a device-model file path."""
    if str(spec) in PROFILES:
        return PROFILES[str(spec)]()
    return DeviceModel.load(spec)


def crosstalk_db(sensitivity, i: int, j: int) -> float:
    """Crosstalk of source line ``j`` onto target ``i`` in dB relative to the self-term."""
    m = np.asarray(sensitivity, dtype=float)
    n = m.shape[0]
    if not (0 <= i < n and 0 <= j < n):
        raise IndexError(f"index out of range for {n}x{n} matrix")
    num = abs(m[i, j])
    if num == 0.0:
        return -math.inf
    return 20.0 * math.log10(num / abs(m[j, j]))


@dataclass(frozen=True)
class MetricSummary:
    values: tuple[float, ...]
    median: float
    cdf: tuple[tuple[float, float], ...]

    def to_dict(self) -> dict:
        return {"values": list(self.values), "median": self.median, "cdf": [list(p) for p in self.cdf]}


def metric_cdf(samples: Iterable[float]) -> MetricSummary:
    vals = [float(v) for v in samples]
    if not vals:
        raise ValueError("metric_cdf needs at least one sample")
    xs = sorted(vals)
    n = len(xs)
    cdf = tuple((x, (k + 1) / n) for k, x in enumerate(xs))
    return MetricSummary(tuple(vals), float(np.median(xs)), cdf)
