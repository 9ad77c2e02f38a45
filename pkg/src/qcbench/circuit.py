"""Circuit IR over the native gate set, compilation to it, unitaries and scheduling."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import statevector as sv
from .synthesis import CZ as CZ_MATRIX
from .synthesis import H, euler_prx, prx, rx, ry, rz, two_qubit_ops

CIRCUIT_SCHEMA = 1
NATIVE = frozenset({"PRX", "RZ", "CZ", "MEASURE", "BARRIER"})

_FIXED_1Q = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.diag([1, -1]).astype(complex),
    "H": H,
    "S": np.diag([1, 1j]),
    "SDG": np.diag([1, -1j]),
    "T": np.diag([1, np.exp(0.25j * np.pi)]),
    "TDG": np.diag([1, np.exp(-0.25j * np.pi)]),
}
_PARAM_1Q = {"PRX": 2, "RZ": 1, "RX": 1, "RY": 1, "U": 3}
_TWO_Q = {"CZ", "CNOT", "CX", "SWAP"}
SUPPORTED = NATIVE | set(_FIXED_1Q) | set(_PARAM_1Q) | _TWO_Q | {"UNITARY"}


class CircuitError(ValueError):
    pass


@dataclass(frozen=True)
class Instruction:
    kind: str
    operands: tuple[int, ...]
    params: tuple[float, ...] = ()

    def to_dict(self) -> dict:
        return {"kind": self.kind, "operands": list(self.operands), "params": list(self.params)}

    @classmethod
    def from_dict(cls, doc: dict) -> "Instruction":
        return cls(str(doc["kind"]).upper(), tuple(int(q) for q in doc["operands"]), tuple(float(p) for p in doc.get("params", ())))

    @property
    def clbit(self) -> int:
        return int(self.params[0]) if self.params else self.operands[0]


def _unitary_params(mat: np.ndarray) -> tuple[float, ...]:
    flat = np.asarray(mat, dtype=complex).ravel()
    return tuple(float(x) for x in np.concatenate([flat.real, flat.imag]))


def _params_unitary(params: Sequence[float], dim: int) -> np.ndarray:
    arr = np.asarray(params, dtype=float)
    return (arr[: dim * dim] + 1j * arr[dim * dim :]).reshape(dim, dim)


def gate_matrix(inst: Instruction) -> np.ndarray:
    """Matrix of a unitary instruction (4x4 ones indexed bit(op0) + 2*bit(op1))."""
    k, p = inst.kind, inst.params
    if k in _FIXED_1Q:
        return _FIXED_1Q[k]
    if k == "PRX":
        return prx(p[0], p[1])
    if k == "RZ":
        return rz(p[0])
    if k == "RX":
        return rx(p[0])
    if k == "RY":
        return ry(p[0])
    if k == "U":
        theta, phi, lam = p
        return rz(phi) @ ry(theta) @ rz(lam)
    if k == "CZ":
        return CZ_MATRIX
    if k in ("CNOT", "CX"):
        # control = operand 0 (low bit), target = operand 1
        return np.array([[1, 0, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0], [0, 1, 0, 0]], dtype=complex)
    if k == "SWAP":
        return np.array([[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=complex)
    if k == "UNITARY":
        return _params_unitary(p, 1 << len(inst.operands))
    raise CircuitError(f"no matrix for instruction kind {k}")


@dataclass
class Circuit:
    num_qubits: int
    instructions: list[Instruction] = field(default_factory=list)
    name: str = "circuit"
    metadata: dict = field(default_factory=dict)

    # builders -----------------------------------------------------------
    def add(self, kind: str, operands: Iterable[int], params: Iterable[float] = ()) -> "Circuit":
        self.instructions.append(Instruction(kind, tuple(int(q) for q in operands), tuple(float(x) for x in params)))
        return self

    def prx(self, theta: float, phase: float, q: int) -> "Circuit":
        return self.add("PRX", (q,), (theta, phase))

    def rz(self, theta: float, q: int) -> "Circuit":
        return self.add("RZ", (q,), (theta,))

    def cz(self, a: int, b: int) -> "Circuit":
        return self.add("CZ", (a, b))

    def cnot(self, c: int, t: int) -> "Circuit":
        return self.add("CNOT", (c, t))

    def h(self, q: int) -> "Circuit":
        return self.add("H", (q,))

    def swap(self, a: int, b: int) -> "Circuit":
        return self.add("SWAP", (a, b))

    def unitary(self, mat: np.ndarray, qubits: Sequence[int]) -> "Circuit":
        return self.add("UNITARY", qubits, _unitary_params(mat))

    def barrier(self, qubits: Iterable[int] | None = None) -> "Circuit":
        return self.add("BARRIER", range(self.num_qubits) if qubits is None else qubits)

    def measure(self, q: int, clbit: int | None = None) -> "Circuit":
        return self.add("MEASURE", (q,), (q if clbit is None else clbit,))

    def measure_all(self, qubits: Iterable[int] | None = None) -> "Circuit":
        for q in range(self.num_qubits) if qubits is None else qubits:
            self.measure(q)
        return self

    # queries ------------------------------------------------------------
    @property
    def num_clbits(self) -> int:
        clbits = [i.clbit for i in self.instructions if i.kind == "MEASURE"]
        return max(clbits) + 1 if clbits else 0

    def measurements(self) -> list[tuple[int, int]]:
        """(qubit, clbit) pairs in program order."""
        return [(i.operands[0], i.clbit) for i in self.instructions if i.kind == "MEASURE"]

    def count(self, kind: str) -> int:
        return sum(1 for i in self.instructions if i.kind == kind)

    def active_qubits(self) -> list[int]:
        return sorted({q for i in self.instructions if i.kind != "BARRIER" for q in i.operands})

    def is_native(self) -> bool:
        return all(i.kind in NATIVE for i in self.instructions)

    def without_measurements(self) -> "Circuit":
        return Circuit(self.num_qubits, [i for i in self.instructions if i.kind != "MEASURE"], self.name, dict(self.metadata))

    def copy(self) -> "Circuit":
        return Circuit(self.num_qubits, list(self.instructions), self.name, dict(self.metadata))

    def validate(self) -> None:
        n = self.num_qubits
        measured: set[int] = set()
        clbits: set[int] = set()
        for inst in self.instructions:
            if inst.kind not in SUPPORTED:
                raise CircuitError(f"unsupported gate kind {inst.kind}")
            if any(not (0 <= q < n) for q in inst.operands):
                raise CircuitError(f"operand out of range in {inst}")
            if not all(math.isfinite(x) for x in inst.params):
                raise CircuitError(f"non-finite parameter in {inst}")
            if inst.kind == "BARRIER":
                continue
            if inst.kind == "MEASURE":
                q = inst.operands[0]
                if q in measured:
                    raise CircuitError(f"qubit {q} measured twice")
                if inst.clbit in clbits or inst.clbit < 0:
                    raise CircuitError(f"clbit {inst.clbit} reused")
                measured.add(q)
                clbits.add(inst.clbit)
                continue
            if measured.intersection(inst.operands):
                raise CircuitError(f"gate after measurement: {inst}")
            arity = 2 if inst.kind in _TWO_Q else (len(inst.operands) if inst.kind == "UNITARY" else 1)
            if len(inst.operands) != arity or arity not in (1, 2):
                raise CircuitError(f"wrong operand count for {inst.kind}")
            if arity == 2 and inst.operands[0] == inst.operands[1]:
                raise CircuitError(f"{inst.kind} needs distinct operands")
            if inst.kind in _PARAM_1Q and len(inst.params) != _PARAM_1Q[inst.kind]:
                raise CircuitError(f"{inst.kind} expects {_PARAM_1Q[inst.kind]} params")

    # serialization ------------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "schema_version": CIRCUIT_SCHEMA,
            "name": self.name,
            "num_qubits": self.num_qubits,
            "instructions": [i.to_dict() for i in self.instructions],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Circuit":
        if doc.get("schema_version", CIRCUIT_SCHEMA) != CIRCUIT_SCHEMA:
            raise CircuitError(f"unsupported circuit schema {doc.get('schema_version')}")
        circ = cls(int(doc["num_qubits"]), [Instruction.from_dict(d) for d in doc["instructions"]], doc.get("name", "circuit"))
        circ.validate()
        return circ


# ---------------------------------------------------------------------------
# compilation


def decompose_to_native(circuit: Circuit) -> Circuit:
    """Compile to PRX / RZ / CZ, merging runs of 1Q gates into at most one PRX plus one RZ."""
    circuit.validate()
    out = Circuit(circuit.num_qubits, name=circuit.name, metadata=dict(circuit.metadata))
    pending: dict[int, np.ndarray] = {}

    def push(q: int, mat: np.ndarray) -> None:
        prev = pending.get(q)
        pending[q] = mat if prev is None else mat @ prev

    def flush(q: int) -> None:
        mat = pending.pop(q, None)
        if mat is None:
            return
        theta, phase, z = euler_prx(mat)
        if theta > 0.0:
            out.prx(theta, phase, q)
        if z != 0.0:
            out.rz(z, q)

    def emit_cz(a: int, b: int) -> None:
        flush(a)
        flush(b)
        out.cz(a, b)

    def emit_cnot(c: int, t: int) -> None:
        push(t, H)
        emit_cz(c, t)
        push(t, H)

    for inst in circuit.instructions:
        k, ops = inst.kind, inst.operands
        if k == "CZ":
            emit_cz(*ops)
        elif k in ("CNOT", "CX"):
            emit_cnot(*ops)
        elif k == "SWAP":
            a, b = ops
            emit_cnot(a, b)
            emit_cnot(b, a)
            emit_cnot(a, b)
        elif k == "UNITARY" and len(ops) == 2:
            for op in two_qubit_ops(gate_matrix(inst)):
                if op[0] == "CZ":
                    emit_cz(*ops)
                else:
                    push(ops[op[1]], op[2])
        elif k in ("MEASURE", "BARRIER"):
            for q in ops:
                flush(q)
            out.instructions.append(inst)
        else:
            push(ops[0], gate_matrix(inst))
    for q in sorted(pending):
        flush(q)
    return out


# ---------------------------------------------------------------------------
# simulation helpers used as oracles


def apply_instruction(psi: np.ndarray, inst: Instruction, n: int) -> None:
    k, ops = inst.kind, inst.operands
    if k in ("MEASURE", "BARRIER"):
        return
    if k == "CZ":
        sv.apply_cz(psi, ops[0], ops[1], n)
    elif k == "RZ":
        t = inst.params[0]
        sv.apply_diag_1q(psi, np.exp(-0.5j * t), np.exp(0.5j * t), ops[0], n)
    elif len(ops) == 1:
        sv.apply_1q(psi, gate_matrix(inst), ops[0], n)
    else:
        sv.apply_2q(psi, gate_matrix(inst), ops[0], ops[1], n)


def ideal_statevector(circuit: Circuit, initial: np.ndarray | None = None) -> np.ndarray:
    """Final state of the circuit's unitary part (measurements ignored)."""
    n = circuit.num_qubits
    psi = sv.zero_states(1, n) if initial is None else np.array(initial, dtype=complex).reshape(1, -1)
    for inst in circuit.instructions:
        apply_instruction(psi, inst, n)
    return psi[0]


def circuit_unitary(circuit: Circuit) -> np.ndarray:
    n = circuit.num_qubits
    if n > 12:
        raise CircuitError("circuit_unitary supports at most 12 qubits")
    if any(i.kind == "MEASURE" for i in circuit.instructions):
        raise CircuitError("circuit contains measurements")
    circuit.validate()
    # row b of psi evolves basis state b, so psi.T is the unitary
    psi = np.eye(1 << n, dtype=complex)
    for inst in circuit.instructions:
        apply_instruction(psi, inst, n)
    return psi.T


def ideal_distribution(circuit: Circuit) -> dict[str, float]:
    """Exact outcome distribution over the circuit's classical bits."""
    psi = ideal_statevector(circuit)
    probs = psi.real**2 + psi.imag**2
    meas = circuit.measurements()
    ncl = circuit.num_clbits
    out: dict[str, float] = {}
    idx = np.nonzero(probs > 1e-15)[0]
    for b in idx:
        bits = ["0"] * ncl
        for q, c in meas:
            bits[c] = "1" if (b >> q) & 1 else "0"
        key = "".join(bits)
        out[key] = out.get(key, 0.0) + float(probs[b])
    return out


# ---------------------------------------------------------------------------
# scheduling


def instruction_duration(inst: Instruction, device) -> float:
    return {"PRX": device.dur_prx, "CZ": device.dur_cz, "MEASURE": device.dur_ro}.get(inst.kind, 0.0)


def schedule_asap(circuit: Circuit, device) -> list[float]:
    """ASAP start time (seconds) of every instruction; RZ and BARRIER take no time."""
    free = [0.0] * circuit.num_qubits
    starts = []
    for inst in circuit.instructions:
        if inst.kind not in NATIVE:
            raise CircuitError(f"cannot schedule non-native instruction {inst.kind}")
        t = max((free[q] for q in inst.operands), default=0.0)
        starts.append(t)
        end = t + instruction_duration(inst, device)
        for q in inst.operands:
            free[q] = end
    return starts


def idle_windows(circuit: Circuit, device, starts: Sequence[float] | None = None) -> list[list[tuple[int, float]]]:
    """Per instruction, the (qubit, idle duration) gaps that end when it starts.

    Gaps are counted only between a qubit's first and last timed operation.
    """
    starts = schedule_asap(circuit, device) if starts is None else starts
    last_end: dict[int, float] = {}
    out: list[list[tuple[int, float]]] = []
    for inst, t in zip(circuit.instructions, starts):
        gaps = []
        if inst.kind in ("PRX", "CZ", "MEASURE"):
            for q in inst.operands:
                prev = last_end.get(q)
                if prev is not None and t - prev > 1e-15:
                    gaps.append((q, t - prev))
                last_end[q] = t + instruction_duration(inst, device)
        out.append(gaps)
    return out
