"""Exact 1Q and 2Q unitary synthesis into PRX / RZ / CZ.

Matrices are little-endian: for a 2Q matrix on (a, b) the basis index is
bit(a) + 2*bit(b).
"""

from __future__ import annotations

import math

import numpy as np

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.diag([1.0, -1.0]).astype(complex)
H = np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2)
CZ = np.diag([1.0, 1.0, 1.0, -1.0]).astype(complex)

_MAGIC = np.array([[1, 0, 0, 1j], [0, 1j, 1, 0], [0, 1j, -1, 0], [1, 0, 0, -1j]], dtype=complex) / math.sqrt(2)


def rz(theta: float) -> np.ndarray:
    return np.diag([np.exp(-0.5j * theta), np.exp(0.5j * theta)])


def rx(theta: float) -> np.ndarray:
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    return np.array([[c, -1j * s], [-1j * s, c]])


def ry(theta: float) -> np.ndarray:
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    return np.array([[c, -s], [s, c]], dtype=complex)


def prx(theta: float, phase: float) -> np.ndarray:
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    return np.array([[c, -1j * np.exp(-1j * phase) * s], [-1j * np.exp(1j * phase) * s, c]])


def kron2(m0: np.ndarray, m1: np.ndarray) -> np.ndarray:
    """Tensor product with m0 on the low qubit."""
    return np.kron(m1, m0)


def to_su(u: np.ndarray) -> np.ndarray:
    d = u.shape[0]
    det = np.linalg.det(u)
    return u / det ** (1.0 / d)


def phase_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Max-entry distance between two unitaries after removing global phase."""
    overlap = np.vdot(b, a)
    ph = overlap / abs(overlap) if abs(overlap) > 1e-15 else 1.0
    return float(np.max(np.abs(a - ph * b)))


def _wrap(angle: float) -> float:
    a = math.remainder(angle, 2 * math.pi)
    return 0.0 if abs(a) < 1e-14 else a


def euler_prx(u: np.ndarray) -> tuple[float, float, float]:
    """Return (theta, phase, z) with u = RZ(z) @ PRX(theta, phase) up to global phase.

    theta lies in [0, pi]; theta == 0 means no physical pulse is needed.
    """
    v = to_su(np.asarray(u, dtype=complex))
    alpha, beta = v[0, 0], v[1, 0]
    theta = 2.0 * math.atan2(abs(beta), abs(alpha))
    apb = -2.0 * np.angle(alpha) if abs(alpha) > 1e-14 else 0.0
    amb = 2.0 * np.angle(beta) + math.pi if abs(beta) > 1e-14 else 0.0
    a = (apb + amb) / 2
    b = (apb - amb) / 2
    if theta < 1e-13:
        return 0.0, 0.0, _wrap(a + b)
    return theta, _wrap(-b), _wrap(a + b)


def _tensor_factor(k: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Split a 4x4 product unitary kron2(a0, a1) into (a0, a1)."""
    t = k.reshape(2, 2, 2, 2)  # indices (i1, i0, j1, j0)
    m = t.transpose(0, 2, 1, 3).reshape(4, 4)  # rows (i1, j1), cols (i0, j0)
    uu, s, vh = np.linalg.svd(m)
    a1 = (uu[:, 0] * math.sqrt(s[0])).reshape(2, 2)
    a0 = (vh[0, :] * math.sqrt(s[0])).reshape(2, 2)
    return a0, a1


def _real_orthogonal_eig(m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Diagonalise a complex symmetric unitary with a real orthogonal basis."""
    re, im = m.real, m.imag
    rng = np.random.default_rng(1234)
    for _ in range(20):
        t = rng.uniform(0.1, 1.0)
        _, p = np.linalg.eigh(re + t * im)
        d = p.T @ m @ p
        if np.allclose(d, np.diag(np.diag(d)), atol=1e-10):
            if np.linalg.det(p) < 0:
                p[:, 0] = -p[:, 0]
            return p, np.diag(d)
    raise np.linalg.LinAlgError("simultaneous diagonalisation failed")


def kak(u: np.ndarray):
    """u = phase * kron2(k1) @ N(a, b, c) @ kron2(k2) with N = exp(i(a XX + b YY + c ZZ)).

    Returns (k1_pair, (a, b, c), k2_pair) where each pair is (low, high) 2x2 factors.
    """
    su = to_su(np.asarray(u, dtype=complex))
    up = _MAGIC.conj().T @ su @ _MAGIC
    p, d = _real_orthogonal_eig(up.T @ up)
    f = np.sqrt(d)
    o1 = up @ p @ np.diag(1.0 / f)
    if np.linalg.det(o1.real) < 0:
        f[0] = -f[0]
        o1 = up @ p @ np.diag(1.0 / f)
    k1 = _MAGIC @ o1 @ _MAGIC.conj().T
    k2 = _MAGIC @ p.T @ _MAGIC.conj().T
    # f holds the eigenvalues of N in the magic basis, where XX, YY, ZZ are diagonal
    ph = np.angle(f)
    signs = np.array([
        [1, -1, 1],
        [1, 1, -1],
        [-1, -1, -1],
        [-1, 1, 1],
    ], dtype=float)
    # ph = g + signs @ (a, b, c) with g a global phase
    lhs = np.hstack([np.ones((4, 1)), signs])
    sol = np.linalg.solve(lhs, ph)
    a, b, c = sol[1:]
    return _tensor_factor(k1), (float(a), float(b), float(c)), _tensor_factor(k2)


def canonical_gate(a: float, b: float, c: float) -> np.ndarray:
    xx, yy, zz = np.kron(X, X), np.kron(Y, Y), np.kron(Z, Z)
    # XX, YY, ZZ commute; their product exponential is a product of cos/sin terms.
    out = np.eye(4, dtype=complex)
    for coef, op in ((a, xx), (b, yy), (c, zz)):
        out = out @ (math.cos(coef) * np.eye(4) + 1j * math.sin(coef) * op)
    return out


def canonical_to_ops(a: float, b: float, c: float):
    """3-CZ realisation of N(a, b, c) on local qubits (0, 1) as ('U', q, mat) / ('CZ',) ops."""
    ops = [("U", 1, rz(-math.pi / 2))]
    ops += [("U", 0, H), ("CZ",), ("U", 0, H)]  # CNOT 1 -> 0
    ops += [("U", 0, rz(math.pi / 2 - 2 * c)), ("U", 1, ry(2 * a - math.pi / 2))]
    ops += [("U", 1, H), ("CZ",), ("U", 1, H)]  # CNOT 0 -> 1
    ops += [("U", 1, ry(math.pi / 2 - 2 * b))]
    ops += [("U", 0, H), ("CZ",), ("U", 0, H)]
    ops += [("U", 0, rz(math.pi / 2))]
    return ops


def two_qubit_ops(u: np.ndarray):
    """Exact ops list for an arbitrary 4x4 unitary (low qubit = 0)."""
    (k1a, k1b), (a, b, c), (k2a, k2b) = kak(u)
    return [("U", 0, k2a), ("U", 1, k2b)] + canonical_to_ops(a, b, c) + [("U", 0, k1a), ("U", 1, k1b)]


def ops_unitary(ops) -> np.ndarray:
    out = np.eye(4, dtype=complex)
    for op in ops:
        if op[0] == "CZ":
            m = CZ
        else:
            m = kron2(op[2], I2) if op[1] == 0 else kron2(I2, op[2])
        out = m @ out
    return out
