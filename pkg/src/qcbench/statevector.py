"""Batched statevector kernels.

States are arrays of shape (batch, 2**n) in little-endian order: qubit k is
bit k of the basis-state index.
"""

from __future__ import annotations

import numpy as np


def zero_states(batch: int, n: int) -> np.ndarray:
    psi = np.zeros((batch, 1 << n), dtype=complex)
    psi[:, 0] = 1.0
    return psi


def _axis(n: int, q: int) -> int:
    # axis of qubit q in the (batch, 2, ..., 2) view
    return n - q


def apply_1q(psi: np.ndarray, mat: np.ndarray, q: int, n: int) -> None:
    b = psi.shape[0]
    view = psi.reshape(b, 1 << (n - 1 - q), 2, 1 << q)
    view[...] = np.matmul(mat, view)


def apply_diag_1q(psi: np.ndarray, d0: complex, d1: complex, q: int, n: int) -> None:
    view = psi.reshape(psi.shape[0], 1 << (n - 1 - q), 2, 1 << q)
    if d0 != 1:
        view[:, :, 0, :] *= d0
    view[:, :, 1, :] *= d1


def apply_cz(psi: np.ndarray, a: int, b: int, n: int) -> None:
    view = psi.reshape((psi.shape[0],) + (2,) * n)
    idx = [slice(None)] * (n + 1)
    idx[_axis(n, a)] = 1
    idx[_axis(n, b)] = 1
    view[tuple(idx)] *= -1


def apply_2q(psi: np.ndarray, mat: np.ndarray, a: int, b: int, n: int) -> None:
    """Apply a 4x4 matrix whose basis index is bit(a) + 2*bit(b)."""
    bsz = psi.shape[0]
    view = psi.reshape((bsz,) + (2,) * n)
    moved = np.moveaxis(view, (_axis(n, b), _axis(n, a)), (-2, -1))
    shape = moved.shape
    out = moved.reshape(-1, 4) @ mat.T
    view[...] = np.moveaxis(out.reshape(shape), (-2, -1), (_axis(n, b), _axis(n, a)))


def apply_pauli_rows(psi: np.ndarray, rows: np.ndarray, pauli: int, q: int, n: int) -> None:
    """Apply Pauli (1=X, 2=Y, 3=Z) to qubit q of the selected batch rows, global phase dropped."""
    if rows.size == 0 or pauli == 0:
        return
    sub = psi[rows].reshape(rows.size, 1 << (n - 1 - q), 2, 1 << q)
    if pauli in (2, 3):
        sub[:, :, 1, :] *= -1
    if pauli in (1, 2):
        sub = sub[:, :, ::-1, :]
    psi[rows] = sub.reshape(rows.size, -1)


def probabilities(psi: np.ndarray) -> np.ndarray:
    p = psi.real**2 + psi.imag**2
    return p / p.sum(axis=-1, keepdims=True)
