"""Noisy digital twin: Monte-Carlo Pauli trajectories over native circuits.

Every shot is an independent trajectory. Two exact accelerations are used:

* qubits that never interact (no CZ, no crosstalk term) are split into
  independent clusters and sampled separately;
* for Clifford clusters without coherent crosstalk, Pauli errors are
  propagated to the end of the circuit as a Pauli frame, so each shot is an
  ideal sample XOR the frame's X bits.

Otherwise shots are grouped by their sampled error pattern and each distinct
pattern is evolved once as a statevector.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import statevector as sv
from .circuit import Circuit, CircuitError, gate_matrix, idle_windows, schedule_asap
from .clifford import PauliTableau
from .device import DeviceModel
from .synthesis import prx

MAX_QUBITS = 24
BLOCK_SHOTS = 1024
TABLEAU_MIN_QUBITS = 12
FLUX_REFERENCE_PHASE = 0.1
_STATE_BUDGET = 1 << 23  # complex amplitudes held at once

_PAULI_MATS = (
    np.eye(2, dtype=complex),
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]], dtype=complex),
    np.diag([1, -1]).astype(complex),
)
# (x, z) bits of I, X, Y, Z
_PAULI_XZ = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=bool)


@dataclass(frozen=True)
class NoiseConfig:
    gate_depolarizing: bool = True
    idle_decoherence: bool = True
    readout_flip: bool = True
    drive_crosstalk: bool = True
    flux_crosstalk: bool = True
    seed: Optional[int] = None

    @classmethod
    def ideal(cls, seed: Optional[int] = None) -> "NoiseConfig":
        return cls(False, False, False, False, False, seed)

    @classmethod
    def only(cls, *channels: str, seed: Optional[int] = None) -> "NoiseConfig":
        flags = {name: name in channels for name in ("gate_depolarizing", "idle_decoherence", "readout_flip", "drive_crosstalk", "flux_crosstalk")}
        unknown = set(channels) - set(flags)
        if unknown:
            raise ValueError(f"unknown noise channels {sorted(unknown)}")
        return cls(**flags, seed=seed)

    def with_seed(self, seed: Optional[int]) -> "NoiseConfig":
        return NoiseConfig(self.gate_depolarizing, self.idle_decoherence, self.readout_flip, self.drive_crosstalk, self.flux_crosstalk, seed)

    @property
    def is_ideal(self) -> bool:
        return not (self.gate_depolarizing or self.idle_decoherence or self.readout_flip or self.drive_crosstalk or self.flux_crosstalk)

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in ("gate_depolarizing", "idle_decoherence", "readout_flip", "drive_crosstalk", "flux_crosstalk", "seed")}


def error_to_depolarizing(r: float, d: int) -> float:
    """Full-depolarization probability whose channel has average gate infidelity r."""
    if d not in (2, 4):
        raise ValueError("dimension must be 2 or 4")
    if not (0.0 <= r < (d - 1) / d):
        raise ValueError(f"infidelity {r} out of range for d={d}")
    return r * d / (d - 1)


def idle_pauli_probs(t: float, t1: float, t2: float) -> tuple[float, float, float]:
    """Pauli-twirled amplitude damping plus dephasing over an idle window of length t."""
    a = 1.0 - math.exp(-t / t1)
    px = py = a / 4
    pz = max(0.0, (1.0 - math.exp(-t / t2)) / 2 - a / 4)
    return px, py, pz


_SYM_CACHE: dict[bytes, np.ndarray | None] = {}


def _clifford_symplectic(mat: np.ndarray) -> np.ndarray | None:
    """2x2 bool map (rows: image of X, image of Z as (x, z)) or None if not Clifford."""
    flat = mat.ravel()
    lead = flat[int(np.argmax(np.abs(flat) > 1e-6))]
    key = np.round(mat * (abs(lead) / lead), 9).tobytes()
    if key in _SYM_CACHE:
        return _SYM_CACHE[key]
    rows = []
    for p in (1, 3):
        img = mat @ _PAULI_MATS[p] @ mat.conj().T
        hit = None
        for code in (1, 2, 3):
            if abs(abs(np.trace(_PAULI_MATS[code] @ img)) - 2.0) < 1e-9:
                hit = code
                break
        if hit is None:
            rows = None
            break
        rows.append(_PAULI_XZ[hit])
    out = None if rows is None else np.array(rows)
    if len(_SYM_CACHE) < 65536:
        _SYM_CACHE[key] = out
    return out


class _Cluster:
    """Compiled event list for one independent group of qubits (local indices)."""

    def __init__(self, qubits: list[int]):
        self.qubits = qubits
        self.local = {q: i for i, q in enumerate(qubits)}
        self.events: list[tuple] = []
        self.noise1: list[np.ndarray] = []
        self.noise2: list[np.ndarray] = []
        self.measures: list[tuple[int, int, float, float]] = []  # local q, clbit, e01, e10
        self.clifford = True

    @property
    def k(self) -> int:
        return len(self.qubits)

    def unitary(self, q: int, mat: np.ndarray) -> None:
        sym = _clifford_symplectic(mat) if self.clifford else None
        if sym is None:
            self.clifford = False
        self.events.append(("U", self.local[q], mat, sym))

    def noise_1q(self, q: int, probs) -> None:
        self.events.append(("N1", self.local[q], len(self.noise1)))
        self.noise1.append(_cdf(tuple(probs)))

    def noise_2q(self, a: int, b: int, probs) -> None:
        self.events.append(("N2", self.local[a], self.local[b], len(self.noise2)))
        self.noise2.append(_cdf(tuple(probs)))


_CDF_CACHE: dict[tuple, np.ndarray] = {}


def _cdf(probs: tuple) -> np.ndarray:
    hit = _CDF_CACHE.get(probs)
    if hit is None:
        hit = np.cumsum(probs)
        if len(_CDF_CACHE) < 4096:
            _CDF_CACHE[probs] = hit
    return hit


class _UnionFind:
    def __init__(self, items):
        self.parent = {i: i for i in items}

    def find(self, x):
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)


def _compile(circuit: Circuit, device: DeviceModel, noise: NoiseConfig) -> list[_Cluster]:
    if not circuit.is_native():
        raise CircuitError("run_noisy needs a native circuit")
    circuit.validate()
    if circuit.num_qubits > device.num_qubits:
        raise CircuitError("circuit is wider than the device")
    active = circuit.active_qubits()
    if len(active) > MAX_QUBITS:
        raise CircuitError(f"{len(active)} active qubits exceed the {MAX_QUBITS}-qubit memory guard")
    topo = device.topology
    act = set(active)

    drive_terms: dict[int, list[tuple[int, float]]] = {}
    flux_terms: dict[tuple[int, int], list[tuple[int, float]]] = {}
    uf = _UnionFind(active)
    for inst in circuit.instructions:
        if inst.kind == "CZ":
            a, b = inst.operands
            if not topo.has_coupler(a, b):
                raise CircuitError(f"CZ on ({a}, {b}) has no coupler; route the circuit first")
            uf.union(a, b)
            if noise.flux_crosstalk and (a, b) not in flux_terms:
                terms = []
                for s in sorted(set(topo.neighbors(a)) | set(topo.neighbors(b))):
                    if s in act and s not in (a, b):
                        ratio = device.flux_xtalk[s, a] + device.flux_xtalk[s, b]
                        if ratio != 0.0:
                            terms.append((s, ratio))
                            uf.union(a, s)
                flux_terms[(a, b)] = terms
        elif inst.kind == "PRX" and noise.drive_crosstalk:
            q = inst.operands[0]
            if q not in drive_terms:
                terms = []
                for s in topo.neighbors(q):
                    ratio = device.drive_xtalk[s, q]
                    if s in act and ratio != 0.0:
                        terms.append((s, ratio))
                        uf.union(q, s)
                drive_terms[q] = terms

    groups: dict[int, list[int]] = {}
    for q in active:
        groups.setdefault(uf.find(q), []).append(q)
    clusters = {root: _Cluster(sorted(qs)) for root, qs in groups.items()}
    owner = {q: clusters[uf.find(q)] for q in active}

    gaps = idle_windows(circuit, device, schedule_asap(circuit, device)) if noise.idle_decoherence else None
    pending: dict[int, np.ndarray] = {}

    def flush(q: int) -> None:
        mat = pending.pop(q, None)
        if mat is not None:
            owner[q].unitary(q, mat)

    for idx, inst in enumerate(circuit.instructions):
        k, ops = inst.kind, inst.operands
        if k == "BARRIER":
            continue
        if gaps is not None:
            for q, t in gaps[idx]:
                px, py, pz = idle_pauli_probs(t, device.t1[q], device.t2[q])
                if px + py + pz > 0.0:
                    flush(q)
                    owner[q].noise_1q(q, (1.0 - px - py - pz, px, py, pz))
        if k == "RZ":
            q = ops[0]
            m = np.diag([np.exp(-0.5j * inst.params[0]), np.exp(0.5j * inst.params[0])])
            pending[q] = m if q not in pending else m @ pending[q]
        elif k == "PRX":
            q = ops[0]
            m = gate_matrix(inst)
            pending[q] = m if q not in pending else m @ pending[q]
            flush(q)
            lam = error_to_depolarizing(device.err_1q[q], 2) if noise.gate_depolarizing else 0.0
            if lam > 0.0:
                owner[q].noise_1q(q, (1.0 - 0.75 * lam, lam / 4, lam / 4, lam / 4))
            for s, ratio in drive_terms.get(q, ()):
                flush(s)
                owner[s].unitary(s, prx(ratio * inst.params[0], inst.params[1]))
        elif k == "CZ":
            a, b = ops
            flush(a)
            flush(b)
            owner[a].events.append(("CZ", owner[a].local[a], owner[a].local[b]))
            lam = error_to_depolarizing(device.cz_error(a, b), 4) if noise.gate_depolarizing else 0.0
            if lam > 0.0:
                probs = np.full(16, lam / 16)
                probs[0] = 1.0 - lam * 15 / 16
                owner[a].noise_2q(a, b, probs)
            for s, ratio in flux_terms.get((a, b), ()):
                phi = 2 * math.pi * ratio * FLUX_REFERENCE_PHASE
                flush(s)
                owner[s].unitary(s, np.diag([np.exp(-0.5j * phi), np.exp(0.5j * phi)]))
        elif k == "MEASURE":
            q = ops[0]
            flush(q)
            e01, e10 = device.ro_err[q] if noise.readout_flip else (0.0, 0.0)
            owner[q].measures.append((owner[q].local[q], inst.clbit, e01, e10))
    for q in sorted(pending):
        flush(q)
    return [clusters[r] for r in sorted(clusters)]


# ---------------------------------------------------------------------------
# execution


def _sample_sparse(rng: np.random.Generator, cdfs: list[np.ndarray], shots: int):
    """Non-identity noise draws as (shot indices, column indices, Pauli codes)."""
    if not cdfs:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty, empty
    table = np.stack(cdfs)  # (L, m)
    u = rng.random((shots, len(cdfs)))
    rows, cols = np.nonzero(u >= table[:, 0])
    codes = (u[rows, cols][:, None] >= table[cols]).sum(-1)
    return rows, cols, codes


def _sample_noise(rng: np.random.Generator, cdfs: list[np.ndarray], shots: int) -> np.ndarray:
    out = np.zeros((shots, len(cdfs)), dtype=np.int8)
    rows, cols, codes = _sample_sparse(rng, cdfs, shots)
    out[rows, cols] = codes
    return out


def _evolve(cluster: _Cluster, n1: np.ndarray, n2: np.ndarray) -> np.ndarray:
    """Outcome probabilities for each row of error patterns (rows: trajectories)."""
    k = cluster.k
    psi = sv.zero_states(n1.shape[0], k)
    for ev in cluster.events:
        kind = ev[0]
        if kind == "U":
            sv.apply_1q(psi, ev[2], ev[1], k)
        elif kind == "CZ":
            sv.apply_cz(psi, ev[1], ev[2], k)
        elif kind == "N1":
            codes = n1[:, ev[2]]
            for code in (1, 2, 3):
                sv.apply_pauli_rows(psi, np.nonzero(codes == code)[0], code, ev[1], k)
        else:
            codes = n2[:, ev[3]]
            for code in range(1, 16):
                rows = np.nonzero(codes == code)[0]
                if rows.size:
                    sv.apply_pauli_rows(psi, rows, code & 3, ev[1], k)
                    sv.apply_pauli_rows(psi, rows, code >> 2, ev[2], k)
    return sv.probabilities(psi)


def _sample_rows(rng: np.random.Generator, probs: np.ndarray, inverse: np.ndarray) -> np.ndarray:
    r = rng.random(inverse.shape[0])
    out = np.empty(inverse.shape[0], dtype=np.int64)
    cum = np.cumsum(probs, axis=1)
    cum[:, -1] = 1.0
    for u in np.unique(inverse):
        mask = inverse == u
        out[mask] = np.searchsorted(cum[u], r[mask], side="right")
    return np.minimum(out, probs.shape[1] - 1)


def _frame_masks(cluster: _Cluster) -> tuple[np.ndarray, np.ndarray]:
    """Final X-bit flip mask caused by each Pauli code at each noise location.

    One backward pass through the Clifford events: mx[q] / mz[q] hold the flips
    that an X / Z on local qubit q at the current point produces at the end.
    """
    k = cluster.k
    mx = [1 << q for q in range(k)]
    mz = [0] * k
    m1 = np.zeros((len(cluster.noise1), 4), dtype=np.int64)
    m2 = np.zeros((len(cluster.noise2), 16), dtype=np.int64)
    for ev in reversed(cluster.events):
        kind = ev[0]
        if kind == "U":
            q, sym = ev[1], ev[3]
            ax = (mx[q] if sym[0, 0] else 0) ^ (mz[q] if sym[0, 1] else 0)
            az = (mx[q] if sym[1, 0] else 0) ^ (mz[q] if sym[1, 1] else 0)
            mx[q], mz[q] = ax, az
        elif kind == "CZ":
            a, b = ev[1], ev[2]
            mx[a], mx[b] = mx[a] ^ mz[b], mx[b] ^ mz[a]
        elif kind == "N1":
            q = ev[1]
            m1[ev[2]] = (0, mx[q], mx[q] ^ mz[q], mz[q])
        else:
            a, b = ev[1], ev[2]
            pa = (0, mx[a], mx[a] ^ mz[a], mz[a])
            pb = (0, mx[b], mx[b] ^ mz[b], mz[b])
            m2[ev[3]] = [pa[c & 3] ^ pb[c >> 2] for c in range(16)]
    return m1, m2


class _ClusterRunner:
    def __init__(self, cluster: _Cluster):
        self.cluster = cluster
        self._cache: dict[bytes, np.ndarray] = {}
        self._ideal: np.ndarray | None = None
        self._space: tuple[int, np.ndarray] | None = None
        self._masks: tuple[np.ndarray, np.ndarray] | None = None

    def _frame_flips(self, rng: np.random.Generator, shots: int) -> np.ndarray:
        if self._masks is None:
            self._masks = _frame_masks(self.cluster)
        m1, m2 = self._masks
        flips = np.zeros(shots, dtype=np.int64)
        r, c, code = _sample_sparse(rng, self.cluster.noise1, shots)
        np.bitwise_xor.at(flips, r, m1[c, code])
        r, c, code = _sample_sparse(rng, self.cluster.noise2, shots)
        np.bitwise_xor.at(flips, r, m2[c, code])
        return flips

    def _ideal_space(self) -> tuple[int, np.ndarray]:
        if self._space is None:
            t = PauliTableau(self.cluster.k)
            for ev in self.cluster.events:
                if ev[0] == "U":
                    t.apply_1q(ev[1], ev[2])
                elif ev[0] == "CZ":
                    t.apply_cz(ev[1], ev[2])
            b0, basis = t.outcome_space()
            weights = (1 << np.arange(self.cluster.k)).astype(np.int64)
            self._space = (int(b0.astype(np.int64) @ weights), basis.astype(np.int64) @ weights)
        return self._space

    def _ideal_probs(self) -> np.ndarray:
        if self._ideal is None:
            empty1 = np.zeros((1, len(self.cluster.noise1)), dtype=np.int8)
            empty2 = np.zeros((1, len(self.cluster.noise2)), dtype=np.int8)
            self._ideal = _evolve(self.cluster, empty1, empty2)[0]
        return self._ideal

    def sample(self, rng: np.random.Generator, shots: int) -> np.ndarray:
        c = self.cluster
        if c.clifford and c.k > TABLEAU_MIN_QUBITS:
            b0, basis = self._ideal_space()
            outcome = np.full(shots, b0, dtype=np.int64)
            for row in basis:
                outcome ^= np.where(rng.random(shots) < 0.5, row, 0)
            outcome ^= self._frame_flips(rng, shots)
        elif c.clifford:
            ideal = self._ideal_probs()
            outcome = _sample_rows(rng, ideal[None, :], np.zeros(shots, dtype=np.int64))
            outcome ^= self._frame_flips(rng, shots)
        else:
            n1 = _sample_noise(rng, c.noise1, shots)
            n2 = _sample_noise(rng, c.noise2, shots)
            patterns = np.concatenate([n1, n2], axis=1)
            uniq, inverse = np.unique(patterns, axis=0, return_inverse=True)
            inverse = inverse.reshape(-1)
            probs = np.empty((uniq.shape[0], 1 << c.k))
            todo = []
            for i, row in enumerate(uniq):
                key = row.tobytes()
                hit = self._cache.get(key)
                if hit is None:
                    todo.append(i)
                else:
                    probs[i] = hit
            chunk = max(1, _STATE_BUDGET >> c.k)
            l1 = n1.shape[1]
            for s in range(0, len(todo), chunk):
                sel = todo[s : s + chunk]
                res = _evolve(c, uniq[sel, :l1], uniq[sel, l1:])
                probs[sel] = res
                if len(self._cache) < 64:
                    for i, p in zip(sel, res):
                        self._cache[uniq[i].tobytes()] = p
            outcome = _sample_rows(rng, probs, inverse)
        return outcome


def _readout(rng: np.random.Generator, cluster: _Cluster, outcome: np.ndarray, shots: int) -> np.ndarray:
    """Map local outcomes to clbit-packed integers with readout flips applied."""
    packed = np.zeros(shots, dtype=np.int64)
    u = rng.random((shots, len(cluster.measures))) if cluster.measures else None
    for j, (q, clbit, e01, e10) in enumerate(cluster.measures):
        bit = (outcome >> q) & 1
        flip_p = np.where(bit == 1, e10, e01)
        bit = bit ^ (u[:, j] < flip_p)
        packed |= bit.astype(np.int64) << clbit
    return packed


def _block_seeds(seed: Optional[int], nblocks: int) -> list[np.random.SeedSequence]:
    root = np.random.SeedSequence(seed) if seed is not None else np.random.SeedSequence()
    return root.spawn(nblocks)


def run_noisy(
    circuit: Circuit,
    device: DeviceModel,
    noise: NoiseConfig | None = None,
    shots: int = 1024,
    workers: int = 1,
) -> dict[str, int]:
    """Sample the circuit on the twin; keys are bitstrings with character k = clbit k."""
    noise = noise or NoiseConfig()
    if shots < 1:
        raise ValueError("shots must be >= 1")
    clusters = _compile(circuit, device, noise)
    runners = [_ClusterRunner(c) for c in clusters]
    nblocks = -(-shots // BLOCK_SHOTS)
    seeds = _block_seeds(noise.seed, nblocks)
    sizes = [min(BLOCK_SHOTS, shots - i * BLOCK_SHOTS) for i in range(nblocks)]

    def do_block(i: int) -> np.ndarray:
        rng = np.random.default_rng(seeds[i])
        packed = np.zeros(sizes[i], dtype=np.int64)
        for runner in runners:
            outcome = runner.sample(rng, sizes[i])
            packed |= _readout(rng, runner.cluster, outcome, sizes[i])
        return packed

    if workers > 1 and nblocks > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            blocks = list(pool.map(do_block, range(nblocks)))
    else:
        blocks = [do_block(i) for i in range(nblocks)]
    values, counts = np.unique(np.concatenate(blocks), return_counts=True)
    ncl = circuit.num_clbits
    return {format_bits(int(v), ncl): int(c) for v, c in zip(values, counts)}


def format_bits(value: int, width: int) -> str:
    return "".join("1" if (value >> k) & 1 else "0" for k in range(width))
