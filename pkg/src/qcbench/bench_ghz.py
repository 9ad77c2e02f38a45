"""GHZ preparation and fidelity via multiple quantum coherences."""

from __future__ import annotations

import math
import time
from collections import deque
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from .analysis import ConfusionModel, mitigate_or_raw, rem_calibrate
from .circuit import Circuit, Instruction, decompose_to_native, ideal_distribution
from .device import Topology
from .report import BenchmarkReport


@dataclass(frozen=True)
class MqcResult:
    phases: tuple[float, ...]
    S: tuple[float, ...]
    I: tuple[float, ...]  # coherence amplitudes, q = 0..N
    P_all0: float
    P_all1: float
    F: float  # clamped to [0, 1]
    F_raw: float
    mitigated: bool
    N: int

    def to_dict(self) -> dict:
        return {
            "N": self.N,
            "phases": list(self.phases),
            "S": list(self.S),
            "I": list(self.I),
            "P_all0": self.P_all0,
            "P_all1": self.P_all1,
            "F": self.F,
            "F_raw": self.F_raw,
            "mitigated": self.mitigated,
        }


def ghz_qubits(n: int, topology: Topology) -> list[int]:
    """n connected qubits grown breadth-first from the most central qubit."""
    if not 1 <= n <= topology.num_qubits:
        raise ValueError(f"cannot embed a {n}-qubit GHZ state in {topology.num_qubits} qubits")
    dist = topology.distances()
    centre = min(topology.qubits, key=lambda q: (max(dist[q]), q))
    order = sorted(topology.qubits, key=lambda q: (dist[centre][q], q))
    return sorted(order[:n])


def _bfs_tree(qubits: Sequence[int], topology: Topology) -> tuple[int, list[tuple[int, int]]]:
    inside = set(qubits)
    best = None
    for r in sorted(qubits):
        depth = {r: 0}
        queue = deque([r])
        while queue:
            u = queue.popleft()
            for v in topology.neighbors(u):
                if v in inside and v not in depth:
                    depth[v] = depth[u] + 1
                    queue.append(v)
        if len(depth) != len(inside):
            raise ValueError("GHZ qubits are not connected")
        ecc = max(depth.values())
        if best is None or ecc < best[0]:
            best = (ecc, r)
    root = best[1]
    edges, seen, queue = [], {root}, deque([root])
    while queue:
        u = queue.popleft()
        for v in sorted(topology.neighbors(u)):
            if v in inside and v not in seen:
                seen.add(v)
                edges.append((u, v))
                queue.append(v)
    return root, edges


def gen_ghz_circuit(n: int, topology: Topology, qubits: Optional[Sequence[int]] = None, measure: bool = True) -> Circuit:
    """Native GHZ preparation on device wires; GHZ qubit k is read into clbit k."""
    qubits = sorted(qubits) if qubits is not None else ghz_qubits(n, topology)
    if len(qubits) != n:
        raise ValueError("qubit list does not match n")
    root, edges = _bfs_tree(qubits, topology)
    circ = Circuit(topology.num_qubits, name=f"ghz-{n}")
    circ.prx(math.pi / 2, math.pi / 2, root)
    for parent, child in edges:
        circ.cnot(parent, child)
    native = decompose_to_native(circ)
    if measure:
        for k, q in enumerate(qubits):
            native.measure(q, k)
    native.metadata.update(benchmark="ghz", qubits=list(qubits), root=root)
    return native


def inverse_native(circ: Circuit) -> Circuit:
    out = Circuit(circ.num_qubits, name=circ.name + "-inv")
    for inst in reversed(circ.instructions):
        if inst.kind == "PRX":
            out.prx(-inst.params[0], inst.params[1], inst.operands[0])
        elif inst.kind == "RZ":
            out.rz(-inst.params[0], inst.operands[0])
        elif inst.kind == "CZ":
            out.instructions.append(inst)
        elif inst.kind != "MEASURE":
            raise ValueError(f"cannot invert {inst.kind}")
    return out


def mqc_phases(n: int) -> list[float]:
    return [math.pi * j / (n + 1) for j in range(2 * n + 2)]


def mqc_circuits(n: int, topology: Topology, qubits: Optional[Sequence[int]] = None) -> tuple[list[Circuit], Circuit]:
    """Phase-scan circuits (prep, RZ(phi) on every qubit, inverse prep) and the population circuit."""
    prep = gen_ghz_circuit(n, topology, qubits, measure=False)
    qs = prep.metadata["qubits"]
    undo = inverse_native(prep)
    scans = []
    for j, phi in enumerate(mqc_phases(n)):
        c = Circuit(topology.num_qubits, list(prep.instructions), name=f"mqc-{n}-{j}")
        for q in qs:
            c.rz(phi, q)
        c.instructions.extend(undo.instructions)
        c = decompose_to_native(c)
        for k, q in enumerate(qs):
            c.measure(q, k)
        scans.append(c)
    pop = gen_ghz_circuit(n, topology, qs)
    return scans, pop


def coherence_amplitudes(phases: Sequence[float], S: Sequence[float], n: int) -> list[float]:
    """I_q = |mean_j exp(-i q phi_j) S_j| for q = 0..n."""
    ph = np.asarray(phases)
    s = np.asarray(S, dtype=float)
    return [float(abs(np.mean(np.exp(-1j * q * ph) * s))) for q in range(n + 1)]


def mqc_fidelity(p0: float, p1: float, i_n: float) -> tuple[float, float]:
    raw = 0.5 * (p0 + p1) + math.sqrt(max(i_n, 0.0))
    return min(1.0, max(0.0, raw)), raw


def _prob(dist: Mapping[str, float], bits: str) -> float:
    total = float(sum(dist.values()))
    return dist.get(bits, 0.0) / total


def analyze_mqc(n: int, scan_dists: Sequence[Mapping[str, float]], pop_dist: Mapping[str, float], mitigated: bool = False) -> MqcResult:
    zeros, ones = "0" * n, "1" * n
    phases = mqc_phases(n)
    S = [min(1.0, max(0.0, _prob(d, zeros))) for d in scan_dists]
    I = coherence_amplitudes(phases, S, n)
    p0, p1 = _prob(pop_dist, zeros), _prob(pop_dist, ones)
    F, raw = mqc_fidelity(p0, p1, I[n])
    return MqcResult(tuple(phases), tuple(S), tuple(I), p0, p1, F, raw, mitigated, n)


def exact_mqc(n: int, topology: Topology) -> MqcResult:
    """MQC on exact ideal output probabilities (statevector)."""
    scans, pop = mqc_circuits(n, topology)
    return analyze_mqc(n, [ideal_distribution(c) for c in scans], ideal_distribution(pop))


def run_mqc_protocol(
    backend,
    n: int,
    shots: int = 4096,
    rem: bool = False,
    seed: int = 0,
    qubits: Optional[Sequence[int]] = None,
    confusion: Optional[ConfusionModel] = None,
) -> MqcResult:
    topo = backend.device.topology
    scans, pop = mqc_circuits(n, topo, qubits)
    counts = backend.run(scans + [pop], shots=shots, seed=seed)
    if not rem:
        return analyze_mqc(n, counts[:-1], counts[-1])
    model = confusion or rem_calibrate(backend, pop.metadata["qubits"], topo.num_qubits, shots=shots, seed=seed + 1)
    dists, ok = [], True
    for c in counts:
        d, good = mitigate_or_raw(c, model)
        dists.append(d)
        ok &= good
    return analyze_mqc(n, dists[:-1], dists[-1], mitigated=ok)


def ghz_gme_verdict(F: float, N: int) -> dict:
    if not 0.0 <= F <= 1.0:
        raise ValueError("fidelity must lie in [0, 1]")
    return {"gme": F > 0.5, "F": F, "N": N}


def run_ghz(backend, sizes: Sequence[int], shots: int = 4096, seed: int = 0) -> BenchmarkReport:
    """GHZ fidelities with and without readout mitigation for each size."""
    started = time.time()
    report = BenchmarkReport("ghz", spec={"sizes": list(sizes), "shots": shots}, seed=seed)
    topo = backend.device.topology
    for n in sizes:
        key = f"ghz:{n}"
        try:
            scans, pop = mqc_circuits(n, topo)
            counts = backend.run(scans + [pop], shots=shots, seed=seed + n)
            raw = analyze_mqc(n, counts[:-1], counts[-1])
            model = rem_calibrate(backend, pop.metadata["qubits"], topo.num_qubits, shots=shots, seed=seed + 1000 + n)
            dists = [mitigate_or_raw(c, model) for c in counts]
            mit = analyze_mqc(n, [d for d, _ in dists[:-1]], dists[-1][0], mitigated=all(ok for _, ok in dists))
        except Exception as exc:
            report.errors[key] = f"{type(exc).__name__}: {exc}"
            continue
        report.points.append({"element": key, "raw": raw.to_dict(), "rem": mit.to_dict()})
        report.derived[key] = {"F_raw": raw.F, "F_rem": mit.F}
        report.verdicts[key] = {"raw": ghz_gme_verdict(raw.F, n)["gme"], "rem": ghz_gme_verdict(mit.F, n)["gme"]}
    return report.stamp(started)
