"""Single- and two-qubit Clifford groups compiled to PRX / RZ / CZ, plus a signed Pauli tableau."""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

from .circuit import Circuit
from .synthesis import CZ, H, I2, euler_prx, kron2, rx, ry

_S = np.diag([1, 1j])
PAULI_MATS = (
    np.eye(2, dtype=complex),
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]], dtype=complex),
    np.diag([1, -1]).astype(complex),
)


def unitary_key(m: np.ndarray) -> tuple:
    """Hashable key of a unitary up to global phase."""
    f = np.asarray(m).ravel()
    i = int(np.argmax(np.abs(f) > 1e-6))
    v = f * (abs(f[i]) / f[i])
    return tuple(np.round(v.real * 1e6).astype(np.int64) + 0) + tuple(np.round(v.imag * 1e6).astype(np.int64) + 0)


class CliffordGroup1Q:
    """The 24-element group, indexed deterministically (breadth-first over H and S)."""

    def __init__(self):
        mats = [np.eye(2, dtype=complex)]
        index = {unitary_key(mats[0]): 0}
        i = 0
        while i < len(mats):
            for g in (H, _S):
                m = g @ mats[i]
                k = unitary_key(m)
                if k not in index:
                    index[k] = len(mats)
                    mats.append(m)
            i += 1
        self.matrices = mats
        self._index = index
        n = len(mats)
        self.mult = np.array([[index[unitary_key(mats[a] @ mats[b])] for b in range(n)] for a in range(n)])
        self.inverse = np.array([index[unitary_key(m.conj().T)] for m in mats])
        self.native = [euler_prx(m) for m in mats]
        self.paulis = [self.lookup(p) for p in PAULI_MATS]

    def __len__(self) -> int:
        return len(self.matrices)

    def lookup(self, m: np.ndarray) -> int:
        return self._index[unitary_key(m)]

    def compose(self, first: int, then: int) -> int:
        """Index of applying ``first`` and then ``then``."""
        return int(self.mult[then, first])

    def prx_count(self, idx: int) -> int:
        return 1 if self.native[idx][0] > 0 else 0

    @property
    def mean_prx(self) -> float:
        return sum(self.prx_count(i) for i in range(len(self))) / len(self)

    def emit(self, circ: Circuit, idx: int, q: int) -> None:
        theta, phase, z = self.native[idx]
        if theta > 0:
            circ.prx(theta, phase, q)
        if z != 0:
            circ.rz(z, q)


@lru_cache(maxsize=None)
def clifford_1q() -> CliffordGroup1Q:
    return CliffordGroup1Q()


# ---------------------------------------------------------------------------
# two-qubit Clifford group via class decomposition


class CliffordGroup2Q:
    """11520 elements as (layers, cz) programs.

    Classes (time order): C1xC1 | C1xC1, CZ, S1xS1 | C1xC1, CZ, HxH, CZ, S1xS1 |
    C1xC1, CZ, HxH, CZ, HxH, CZ.
    """

    SIZE = 11520
    CLASS_SIZES = (576, 5184, 5184, 576)

    def __init__(self):
        g1 = clifford_1q()
        self.g1 = g1
        s1 = [np.eye(2, dtype=complex), ry(math.pi / 2) @ rx(math.pi / 2), rx(-math.pi / 2) @ ry(-math.pi / 2)]
        self.s1 = [g1.lookup(m) for m in s1]
        self.h = g1.lookup(H)
        self._index: dict | None = None

    def program(self, idx: int) -> list:
        """Time-ordered ops: ('C', qubit(0/1), clifford index) or ('CZ',)."""
        if not 0 <= idx < self.SIZE:
            raise IndexError(idx)
        cls = 0
        while idx >= self.CLASS_SIZES[cls]:
            idx -= self.CLASS_SIZES[cls]
            cls += 1
        a, rest = divmod(idx, self.CLASS_SIZES[cls] // 24)
        ops = [("C", 0, a)]
        if cls in (0, 3):
            b = rest
            ops.append(("C", 1, b))
            if cls == 3:
                ops += [("CZ",), ("C", 0, self.h), ("C", 1, self.h), ("CZ",), ("C", 0, self.h), ("C", 1, self.h), ("CZ",)]
            return ops
        b, rest = divmod(rest, 9)
        sa, sb = divmod(rest, 3)
        ops.append(("C", 1, b))
        ops.append(("CZ",))
        if cls == 2:
            ops += [("C", 0, self.h), ("C", 1, self.h), ("CZ",)]
        ops += [("C", 0, self.s1[sa]), ("C", 1, self.s1[sb])]
        return ops

    def cz_count(self, idx: int) -> int:
        return sum(1 for op in self.program(idx) if op[0] == "CZ")

    @property
    def mean_cz(self) -> float:
        return sum(c * s for c, s in zip(range(4), self.CLASS_SIZES)) / self.SIZE

    def mean_prx(self) -> float:
        total = 0
        for idx in range(self.SIZE):
            total += sum(self.g1.prx_count(op[2]) for op in self.program(idx) if op[0] == "C")
        return total / self.SIZE

    def unitary(self, idx: int) -> np.ndarray:
        return program_unitary(self.program(idx))

    def lookup(self, m: np.ndarray) -> int:
        if self._index is None:
            self._index = {unitary_key(self.unitary(i)): i for i in range(self.SIZE)}
        return self._index[unitary_key(m)]

    def emit(self, circ: Circuit, idx: int, q0: int, q1: int) -> None:
        qs = (q0, q1)
        for op in self.program(idx):
            if op[0] == "CZ":
                circ.cz(q0, q1)
            else:
                self.g1.emit(circ, op[2], qs[op[1]])


def program_unitary(ops) -> np.ndarray:
    g1 = clifford_1q()
    out = np.eye(4, dtype=complex)
    for op in ops:
        if op[0] == "CZ":
            out = CZ @ out
        else:
            m = g1.matrices[op[2]]
            out = (kron2(m, I2) if op[1] == 0 else kron2(I2, m)) @ out
    return out


@lru_cache(maxsize=None)
def clifford_2q() -> CliffordGroup2Q:
    return CliffordGroup2Q()


# ---------------------------------------------------------------------------
# signed Pauli tableau


@lru_cache(maxsize=4096)
def _images(key: tuple, mat_bytes: bytes) -> tuple:
    """For a 1Q Clifford, images of X and Z as (x, z, k) meaning i^k X^x Z^z."""
    m = np.frombuffer(mat_bytes, dtype=complex).reshape(2, 2)
    out = []
    for p in (PAULI_MATS[1], PAULI_MATS[3]):
        img = m @ p @ m.conj().T
        found = None
        for x in (0, 1):
            for z in (0, 1):
                if x == z == 0:
                    continue
                base = np.linalg.matrix_power(PAULI_MATS[1], x) @ np.linalg.matrix_power(PAULI_MATS[3], z)
                for k in range(4):
                    if np.allclose(img, (1j**k) * base, atol=1e-9):
                        found = (x, z, k)
        if found is None:
            raise ValueError("matrix is not a Clifford")
        out.append(found)
    return tuple(out)


def clifford_images(m: np.ndarray) -> tuple:
    m = np.ascontiguousarray(m, dtype=complex)
    return _images(unitary_key(m), m.tobytes())


class PauliTableau:
    """Stabilizer rows i^k X^x Z^z of a state, starting from |0...0>."""

    def __init__(self, n: int):
        self.n = n
        self.x = np.zeros((n, n), dtype=np.uint8)
        self.z = np.eye(n, dtype=np.uint8)
        self.k = np.zeros(n, dtype=np.int64)

    def apply_1q(self, q: int, mat: np.ndarray) -> None:
        (ax, bx, kx), (az, bz, kz) = clifford_images(mat)
        x, z = self.x[:, q].astype(np.int64), self.z[:, q].astype(np.int64)
        self.k = (self.k + x * kx + z * kz + 2 * x * z * bx * az) % 4
        self.x[:, q] = (x * ax) ^ (z * az)
        self.z[:, q] = (x * bx) ^ (z * bz)

    def apply_cz(self, a: int, b: int) -> None:
        xa, xb = self.x[:, a].astype(np.int64), self.x[:, b].astype(np.int64)
        self.k = (self.k + 2 * xa * xb) % 4
        self.z[:, a] ^= self.x[:, b]
        self.z[:, b] ^= self.x[:, a]

    def _rowmul(self, dst: int, src: int) -> None:
        # row[dst] <- row[src] * row[dst]
        sign = 2 * int(np.dot(self.z[src].astype(np.int64), self.x[dst].astype(np.int64)))
        self.k[dst] = (self.k[dst] + self.k[src] + sign) % 4
        self.x[dst] ^= self.x[src]
        self.z[dst] ^= self.z[src]

    def outcome_space(self) -> tuple[np.ndarray, np.ndarray]:
        """(b0, basis): Z-basis outcomes are uniform over b0 xor span(basis)."""
        t = PauliTableau(self.n)
        t.x, t.z, t.k = self.x.copy(), self.z.copy(), self.k.copy()
        n = self.n
        row = 0
        for col in range(n):
            piv = next((r for r in range(row, n) if t.x[r, col]), None)
            if piv is None:
                continue
            if piv != row:
                for arr in (t.x, t.z):
                    arr[[row, piv]] = arr[[piv, row]]
                t.k[[row, piv]] = t.k[[piv, row]]
            for r in range(n):
                if r != row and t.x[r, col]:
                    t._rowmul(r, row)
            row += 1
        rank = row
        basis = t.x[:rank].copy()
        # remaining rows are +-Z strings: z . b = k/2 (mod 2)
        zs = t.z[rank:].copy()
        rhs = (t.k[rank:] // 2) % 2
        b0 = _solve_gf2(zs, rhs.astype(np.uint8), n)
        return b0, basis

    def deterministic_outcome(self) -> np.ndarray | None:
        b0, basis = self.outcome_space()
        return b0 if basis.shape[0] == 0 else None


def _solve_gf2(a: np.ndarray, rhs: np.ndarray, n: int) -> np.ndarray:
    a = a.copy()
    rhs = rhs.copy()
    m = a.shape[0]
    pivots = []
    row = 0
    for col in range(n):
        piv = next((r for r in range(row, m) if a[r, col]), None)
        if piv is None:
            continue
        a[[row, piv]] = a[[piv, row]]
        rhs[[row, piv]] = rhs[[piv, row]]
        for r in range(m):
            if r != row and a[r, col]:
                a[r] ^= a[row]
                rhs[r] ^= rhs[row]
        pivots.append(col)
        row += 1
    if np.any(rhs[row:]):
        raise ValueError("inconsistent stabilizer constraints")
    sol = np.zeros(n, dtype=np.uint8)
    for r, col in enumerate(pivots):
        sol[col] = rhs[r]
    return sol


def tableau_of(circuit: Circuit) -> PauliTableau:
    """Tableau after the unitary part of a native Clifford circuit (all circuit qubits)."""
    from .circuit import gate_matrix

    t = PauliTableau(circuit.num_qubits)
    for inst in circuit.instructions:
        if inst.kind == "CZ":
            t.apply_cz(*inst.operands)
        elif inst.kind in ("PRX", "RZ"):
            t.apply_1q(inst.operands[0], gate_matrix(inst))
    return t


def ideal_clifford_outcome(circuit: Circuit) -> str:
    """Deterministic clbit string of a Clifford circuit; raises if the outcome is random."""
    t = tableau_of(circuit)
    b = t.deterministic_outcome()
    if b is None:
        raise ValueError("circuit output is not deterministic")
    bits = ["0"] * circuit.num_clbits
    for q, c in circuit.measurements():
        bits[c] = "1" if b[q] else "0"
    return "".join(bits)
