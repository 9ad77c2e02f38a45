"""Statistics shared by the benchmarks."""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import asdict, dataclass
from itertools import product
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.optimize import least_squares
from scipy.sparse.linalg import LinearOperator, gmres

from .circuit import Circuit

log = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# exponential decay fits


@dataclass(frozen=True)
class DecayFit:
    A: float
    p: float
    B: float
    stderr_A: float
    stderr_p: float
    stderr_B: float
    r_squared: float
    converged: bool = True

    def predict(self, depth) -> np.ndarray:
        return self.A * np.power(self.p, np.asarray(depth, dtype=float)) + self.B

    def to_dict(self) -> dict:
        return asdict(self)


def fit_exponential_decay(points: Sequence[tuple[float, float, float]], fix_B: float | None = None) -> DecayFit:
    """Weighted fit of y(d) = A * p**d + B to (depth, mean, stderr) points."""
    arr = np.asarray(points, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValueError("points must be (depth, mean, stderr) triples")
    if not np.all(np.isfinite(arr)):
        raise ValueError("non-finite input to decay fit")
    d, y, err = arr.T
    if len(np.unique(d)) < 3:
        raise ValueError("need at least 3 distinct depths")
    positive = err[err > 0]
    floor = positive.min() * 1e-3 if positive.size else 1.0
    w = 1.0 / np.maximum(err, floor)

    # log-linear initial guess
    b0 = fix_B if fix_B is not None else min(float(y.min()) - 1e-3 * max(1.0, abs(float(y.min()))), 0.0)
    shifted = np.clip(y - b0, 1e-12, None)
    slope, intercept = np.polyfit(d, np.log(shifted), 1, w=np.sqrt(shifted))
    p0 = float(np.clip(math.exp(slope), 1e-6, 1.0))
    a0 = float(math.exp(intercept))

    if fix_B is not None:
        def resid(x):
            return w * (x[0] * np.power(x[1], d) + fix_B - y)

        x0 = np.array([a0, p0])
    else:
        def resid(x):
            return w * (x[0] * np.power(x[1], d) + x[2] - y)

        x0 = np.array([a0, p0, b0])

    converged = True
    try:
        res = least_squares(resid, x0, method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=20000)
        x = res.x
        converged = bool(res.success)
        jac = res.jac
    except (ValueError, FloatingPointError):
        x, jac, converged = x0, None, False

    A, p = float(x[0]), float(x[1])
    B = float(fix_B) if fix_B is not None else float(x[2])
    stderr = [math.nan] * len(x)
    if jac is not None:
        dof = max(len(d) - len(x), 1)
        chi2 = float(np.sum(resid(x) ** 2))
        try:
            cov = np.linalg.pinv(jac.T @ jac)
            # stated stderrs set the scale; inflate only when the scatter exceeds them
            scale = max(chi2 / dof, 1.0) if positive.size else chi2 / dof
            stderr = [float(math.sqrt(max(cov[i, i] * max(scale, 0.0), 0.0))) for i in range(len(x))]
        except np.linalg.LinAlgError:
            pass
    if fix_B is not None:
        stderr = stderr + [0.0]
    pred = A * np.power(p, d) + B
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else min(max(1.0 - ss_res / ss_tot, 0.0), 1.0)
    if not (0.0 < p <= 1.0 + 1e-9) or not math.isfinite(A):
        converged = False
    return DecayFit(A, p, B, stderr[0], stderr[1], stderr[2], r2, converged)


# ---------------------------------------------------------------------------
# error conversions


def rb_error(p: float, n: int) -> float:
    dim = 2**n
    return (1.0 - p) * (dim - 1) / dim


def native_gate_error(r_clifford: float, gates_per_clifford: float) -> float:
    return 1.0 - (1.0 - r_clifford) ** (1.0 / gates_per_clifford)


def irb_error(p_interleaved: float, p_reference: float, n: int) -> float:
    if p_interleaved > p_reference:
        warnings.warn("interleaved decay exceeds reference decay; IRB estimate is negative", RuntimeWarning, stacklevel=2)
    dim = 2**n
    return (dim - 1) / dim * (1.0 - p_interleaved / p_reference)


def polarization_layer_error(p: float, n: int) -> float:
    """Error per layer from a polarization decay constant."""
    dim2 = 4**n
    return (dim2 - 1) / dim2 * (1.0 - p)


def per_qubit_error(r_layer: float, n: int) -> float:
    return 1.0 - (1.0 - r_layer) ** (1.0 / n)


def decay_to_errors(params: Mapping[str, float], n: int, mode: str, extras: Mapping[str, float] | None = None) -> dict:
    """Convert decay constants into error rates.

    ``params`` holds ``p`` (rb), ``p_interleaved``/``p_reference`` (irb) or
    ``r_layer`` (per_layer_per_qubit). ``extras['gates_per_clifford']`` adds
    the error per native gate in rb mode.
    """
    extras = extras or {}
    if mode == "rb":
        p = params["p"]
        if not (0.0 < p <= 1.0):
            raise ValueError("p must lie in (0, 1]")
        r = rb_error(p, n)
        out = {"r": r}
        g = extras.get("gates_per_clifford")
        if g:
            out["r_native"] = native_gate_error(r, g)
            out["gates_per_clifford"] = g
        return out
    if mode == "irb":
        pi, pr = params["p_interleaved"], params["p_reference"]
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            r = irb_error(pi, pr, n)
        out = {"r": r}
        if caught:
            out["warning"] = str(caught[0].message)
            log.warning(out["warning"])
        return out
    if mode == "per_layer_per_qubit":
        r_layer = params["r_layer"]
        return {"r_layer": r_layer, "r_per_qubit": per_qubit_error(r_layer, n)}
    raise ValueError(f"unknown mode {mode!r}")


# ---------------------------------------------------------------------------
# polarization and heavy outputs


def polarization_from_counts(counts: Mapping[str, float], target: str, n: int | None = None) -> float:
    """Effective polarization of the outcome distribution relative to the target bitstring."""
    n = len(target) if n is None else n
    if len(target) != n:
        raise ValueError("target length does not match n")
    total = float(sum(counts.values()))
    if total <= 0:
        raise ValueError("counts are empty")
    tgt = np.frombuffer(target.encode(), dtype=np.uint8)
    acc = 0.0
    for bits, c in counts.items():
        if len(bits) != n:
            raise ValueError(f"bitstring {bits!r} has length {len(bits)}, expected {n}")
        k = int(np.count_nonzero(np.frombuffer(bits.encode(), dtype=np.uint8) != tgt))
        acc += c * (-0.5) ** k
    dim2 = 4.0**n
    return dim2 / (dim2 - 1) * (acc / total - 1.0 / dim2)


def heavy_output_test(hops: Sequence[float], threshold: float = 2.0 / 3.0) -> dict:
    hops = np.asarray(list(hops), dtype=float)
    if hops.size == 0:
        raise ValueError("no heavy-output probabilities given")
    if hops.size < 2:
        raise ValueError("need at least 2 circuits")
    if np.any((hops < 0) | (hops > 1)):
        raise ValueError("HOPs must lie in [0, 1]")
    mean = float(hops.mean())
    sigma = math.sqrt(mean * (1 - mean) / hops.size)
    return {"mean": mean, "sigma": sigma, "pass": bool(mean - 2 * sigma > threshold), "n_circuits": int(hops.size)}


def bootstrap_ci(values: Sequence[float], stat: Callable = np.mean, resamples: int = 1000, level: float = 0.95, seed: int = 0) -> tuple[float, float]:
    """Percentile bootstrap over items (circuits) with replacement."""
    vals = np.asarray(values, dtype=float)
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, vals.size, size=(resamples, vals.size))
    stats = np.array([stat(vals[row]) for row in idx])
    lo, hi = np.percentile(stats, [50 * (1 - level), 50 * (1 + level)])
    return float(lo), float(hi)


# ---------------------------------------------------------------------------
# readout error mitigation


@dataclass(frozen=True)
class ConfusionModel:
    """Per-qubit column-stochastic matrices, M[q][i][j] = P(read i | prepared j)."""

    matrices: tuple[np.ndarray, ...]

    def __post_init__(self):
        mats = tuple(np.asarray(m, dtype=float) for m in self.matrices)
        for m in mats:
            if m.shape != (2, 2) or np.any(m < -1e-12) or np.any(m > 1 + 1e-12):
                raise ValueError("confusion matrices must be 2x2 with entries in [0, 1]")
            if not np.allclose(m.sum(axis=0), 1.0, atol=1e-9):
                raise ValueError("confusion matrix columns must sum to 1")
        object.__setattr__(self, "matrices", mats)

    @classmethod
    def from_errors(cls, errs: Sequence[tuple[float, float]]) -> "ConfusionModel":
        return cls(tuple(np.array([[1 - e01, e10], [e01, 1 - e10]]) for e01, e10 in errs))

    @property
    def num_qubits(self) -> int:
        return len(self.matrices)

    def full_matrix(self) -> np.ndarray:
        """Dense 2^n x 2^n matrix indexed by little-endian bitstring integers."""
        out = np.array([[1.0]])
        for m in self.matrices:
            out = np.kron(m, out)
        return out

    def to_dict(self) -> dict:
        return {"matrices": [m.tolist() for m in self.matrices]}


class MitigationError(RuntimeError):
    pass


def _bits_array(keys: Sequence[str]) -> np.ndarray:
    return np.array([[ch == "1" for ch in k] for k in keys], dtype=np.int8)


def apply_rem(counts: Mapping[str, float], model: ConfusionModel, dense_limit: int = 4096) -> dict[str, float]:
    """Quasi-probabilities solving the confusion system on the observed-bitstring subspace."""
    keys = sorted(k for k, v in counts.items() if v > 0)
    total = float(sum(counts[k] for k in keys))
    if not keys or total <= 0:
        raise ValueError("empty counts")
    n = len(keys[0])
    if n != model.num_qubits:
        raise ValueError("bitstring width does not match confusion model")
    p_obs = np.array([counts[k] / total for k in keys])
    bits = _bits_array(keys)
    mats = model.matrices

    def rows_block(rows: np.ndarray) -> np.ndarray:
        block = np.ones((rows.size, len(keys)))
        for q in range(n):
            block *= mats[q][bits[rows, q][:, None], bits[None, :, q]]
        return block

    size = len(keys)
    if size <= dense_limit:
        a = rows_block(np.arange(size))
        if np.linalg.cond(a) > 1e12:
            raise MitigationError("restricted confusion matrix is singular")
        x = np.linalg.solve(a, p_obs)
    else:
        step = max(1, (1 << 22) // size)

        def matvec(v):
            out = np.empty(size)
            for s in range(0, size, step):
                rows = np.arange(s, min(size, s + step))
                out[rows] = rows_block(rows) @ v
            return out

        op = LinearOperator((size, size), matvec=matvec, dtype=float)
        x, info = gmres(op, p_obs, x0=p_obs, atol=1e-12, maxiter=200)
        if info != 0:
            raise MitigationError("iterative REM solve did not converge")
    x = x / x.sum()
    return {k: float(v) for k, v in zip(keys, x)}


def mitigate_or_raw(counts: Mapping[str, float], model: ConfusionModel) -> tuple[dict[str, float], bool]:
    """REM with fallback to raw normalized counts when the system is singular."""
    try:
        return apply_rem(counts, model), True
    except MitigationError as exc:
        warnings.warn(f"readout mitigation failed ({exc}); using raw counts", RuntimeWarning, stacklevel=2)
        total = float(sum(counts.values()))
        return {k: v / total for k, v in counts.items()}, False


def calibration_circuits(qubits: Sequence[int], width: int) -> list[Circuit]:
    zero = Circuit(width, name="rem-cal-0")
    one = Circuit(width, name="rem-cal-1")
    for i, q in enumerate(qubits):
        one.prx(math.pi, 0.0, q)
    for i, q in enumerate(qubits):
        zero.measure(q, i)
        one.measure(q, i)
    return [zero, one]


def confusion_from_counts(counts0: Mapping[str, int], counts1: Mapping[str, int], n: int) -> ConfusionModel:
    mats = []
    t0, t1 = sum(counts0.values()), sum(counts1.values())
    for q in range(n):
        e01 = sum(c for k, c in counts0.items() if k[q] == "1") / t0
        e10 = sum(c for k, c in counts1.items() if k[q] == "0") / t1
        mats.append(np.array([[1 - e01, e10], [e01, 1 - e10]]))
    return ConfusionModel(tuple(mats))


def rem_calibrate(backend, qubits: Sequence[int], width: int, shots: int = 4096, seed: int | None = None) -> ConfusionModel:
    c0, c1 = backend.run(calibration_circuits(qubits, width), shots=shots, seed=seed)
    return confusion_from_counts(c0, c1, len(qubits))


def rem_calibrate_and_apply(backend, qubits: Sequence[int], raw_counts: Mapping[str, int], width: int | None = None, shots: int = 4096, seed: int | None = None) -> dict[str, float]:
    model = rem_calibrate(backend, qubits, width or (max(qubits) + 1), shots, seed)
    quasi, _ = mitigate_or_raw(raw_counts, model)
    return quasi


def expectation(dist: Mapping[str, float], func: Callable[[str], float]) -> float:
    total = sum(dist.values())
    return sum(v * func(k) for k, v in dist.items()) / total


def full_rem_oracle(dist: Mapping[str, float], model: ConfusionModel) -> dict[str, float]:
    """Full tensor-matrix inversion over all 2^n outcomes."""
    n = model.num_qubits
    vec = np.zeros(2**n)
    for k, v in dist.items():
        vec[int(k[::-1], 2)] = v
    x = np.linalg.solve(model.full_matrix(), vec / vec.sum())
    return {"".join(bits)[::-1]: float(x[int("".join(bits), 2)]) for bits in product("01", repeat=n)}
