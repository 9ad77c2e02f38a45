"""Randomized benchmarking: standard, interleaved (CZ), mirror, parallel groups, drive crosstalk."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import least_squares

from .analysis import decay_to_errors, fit_exponential_decay, polarization_from_counts, polarization_layer_error
from .circuit import Circuit
from .clifford import clifford_1q, clifford_2q, ideal_clifford_outcome
from .device import Topology, metric_cdf
from .report import BenchmarkReport

log = logging.getLogger(__name__)

RB_DEPTHS_1Q = tuple(2**k for k in range(1, 11))
IRB_DEPTHS = tuple(2**k for k in range(1, 9))
MRB_DEPTHS = tuple(2**k for k in range(1, 7))
XTALK_FLOOR_DB = -80.0


@dataclass(frozen=True)
class RbSpec:
    targets: tuple[tuple[int, ...], ...]
    depths: tuple[int, ...] = RB_DEPTHS_1Q
    circuits_per_depth: int = 30
    interleaved: Optional[str] = None
    groups: Optional[tuple[tuple[int, ...], ...]] = None  # indices into targets run simultaneously
    seed: int = 0
    shots: int = 1024

    def __post_init__(self):
        targets = tuple(tuple(int(q) for q in t) if not isinstance(t, int) else (int(t),) for t in self.targets)
        object.__setattr__(self, "targets", targets)
        object.__setattr__(self, "depths", tuple(int(d) for d in self.depths))
        if not targets:
            raise ValueError("no targets")
        if any(len(t) not in (1, 2) for t in targets):
            raise ValueError("Clifford RB supports widths 1 and 2 only")
        if any(len(set(t)) != len(t) for t in targets):
            raise ValueError("repeated qubit in a target")
        if any(b <= a for a, b in zip(self.depths, self.depths[1:])) or not self.depths or self.depths[0] < 0:
            raise ValueError("depths must be non-negative and strictly increasing")
        if self.circuits_per_depth < 10:
            raise ValueError("circuits_per_depth must be >= 10")
        if self.interleaved not in (None, "CZ"):
            raise ValueError("only CZ can be interleaved")
        if self.interleaved and any(len(t) != 2 for t in targets):
            raise ValueError("interleaved CZ needs qubit pairs")
        if self.groups is not None:
            groups = tuple(tuple(int(i) for i in g) for g in self.groups)
            flat = [i for g in groups for i in g]
            if sorted(flat) != list(range(len(targets))):
                raise ValueError("groups must partition the targets")
            for g in groups:
                qs = [q for i in g for q in targets[i]]
                if len(qs) != len(set(qs)):
                    raise ValueError("targets in a group must be disjoint")
            object.__setattr__(self, "groups", groups)

    @property
    def width(self) -> int:
        return len(self.targets[0])

    def group_list(self) -> tuple[tuple[int, ...], ...]:
        return self.groups if self.groups is not None else tuple((i,) for i in range(len(self.targets)))

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class MrbSpec:
    subsets: tuple[tuple[int, ...], ...]
    depths: tuple[int, ...] = MRB_DEPTHS
    samples_per_depth: int = 30
    cz_density: float = 0.5
    seed: int = 0
    shots: int = 1024

    def __post_init__(self):
        object.__setattr__(self, "subsets", tuple(tuple(int(q) for q in s) for s in self.subsets))
        object.__setattr__(self, "depths", tuple(int(d) for d in self.depths))
        if not (0.0 < self.cz_density <= 1.0):
            raise ValueError("cz_density must lie in (0, 1]")
        if any(d < 0 or d % 2 for d in self.depths):
            raise ValueError("mirror depths must be even and non-negative")
        if any(b <= a for a, b in zip(self.depths, self.depths[1:])):
            raise ValueError("depths must be strictly increasing")
        if any(not 1 <= len(s) <= 20 or len(set(s)) != len(s) for s in self.subsets):
            raise ValueError("subsets need 1..20 distinct qubits")
        if self.samples_per_depth < 1:
            raise ValueError("samples_per_depth must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)


def _rng(seed: int, *path: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, path)]))


# ---------------------------------------------------------------------------
# Clifford sequences


def _emit_sequence(circ: Circuit, target: tuple[int, ...], depth: int, rng, interleave: bool) -> list[int]:
    """Append a random Clifford sequence plus its inverse; returns the sampled element indices."""
    if len(target) == 1:
        g1 = clifford_1q()
        q = target[0]
        seq = [int(x) for x in rng.integers(0, len(g1), size=depth)]
        total = 0
        for idx in seq:
            g1.emit(circ, idx, q)
            total = g1.compose(total, idx)
        g1.emit(circ, int(g1.inverse[total]), q)
        return seq + [int(g1.inverse[total])]
    g2 = clifford_2q()
    a, b = target
    seq = [int(x) for x in rng.integers(0, g2.SIZE, size=depth)]
    u = np.eye(4, dtype=complex)
    cz = np.diag([1, 1, 1, -1]).astype(complex)
    for idx in seq:
        g2.emit(circ, idx, a, b)
        u = g2.unitary(idx) @ u
        if interleave:
            circ.cz(a, b)
            u = cz @ u
    inv = g2.lookup(u.conj().T)
    g2.emit(circ, inv, a, b)
    return seq + [inv]


def gen_rb_sequences(spec: RbSpec, num_qubits: Optional[int] = None, interleaved: Optional[bool] = None) -> list[Circuit]:
    """One circuit per (group, depth, sample); targets of a group run side by side.

    Target ``t`` of a circuit is read from clbits ``metadata['clbits'][t]``.
    ``interleaved`` overrides the spec (used to build the IRB reference set).
    """
    interleave = bool(spec.interleaved) if interleaved is None else interleaved
    if interleave and spec.width != 2:
        raise ValueError("interleaved CZ needs qubit pairs")
    n = num_qubits if num_qubits is not None else 1 + max(q for t in spec.targets for q in t)
    out = []
    for gi, group in enumerate(spec.group_list()):
        for di, depth in enumerate(spec.depths):
            for s in range(spec.circuits_per_depth):
                rng = _rng(spec.seed, gi, di, s, int(interleave))
                circ = Circuit(n, name=f"rb-g{gi}-d{depth}-s{s}")
                clbits, elements = {}, {}
                for ti in group:
                    elements[ti] = _emit_sequence(circ, spec.targets[ti], depth, rng, interleave)
                c = 0
                for ti in group:
                    clbits[ti] = list(range(c, c + len(spec.targets[ti])))
                    for q in spec.targets[ti]:
                        circ.measure(q, c)
                        c += 1
                circ.metadata.update(
                    benchmark="irb" if interleave else "rb",
                    group=gi,
                    depth=depth,
                    sample=s,
                    targets=list(group),
                    clbits=clbits,
                    elements=elements,
                    interleaved=depth if interleave else 0,
                )
                out.append(circ)
    return out


def partition_distance_groups(targets: Sequence, topology: Topology, min_distance: int = 2) -> list[list[tuple[int, ...]]]:
    """Greedy first-fit grouping; elements in one group are at least ``min_distance`` apart.

    Distance 2 means two couplers and one idle qubit between the nearest active qubits.
    """
    dist = topology.distances()
    norm = [tuple(t) if not isinstance(t, int) else (t,) for t in targets]
    for t in norm:
        for q in t:
            if q not in topology.qubits:
                raise ValueError(f"qubit {q} not in topology")
    groups: list[list[tuple[int, ...]]] = []
    for t in norm:
        for g in groups:
            if all(dist[a][b] >= min_distance for other in g for a in t for b in other):
                g.append(t)
                break
        else:
            groups.append([t])
    return groups


# ---------------------------------------------------------------------------
# mirror RB


def random_maximal_matching(rng: np.random.Generator, edges: Sequence[tuple[int, int]]) -> list[tuple[int, int]]:
    order = rng.permutation(len(edges))
    used: set[int] = set()
    out = []
    for i in order:
        a, b = edges[i]
        if a not in used and b not in used:
            used.update((a, b))
            out.append((a, b))
    return sorted(out)


def sample_cz_layer(rng: np.random.Generator, edges: Sequence[tuple[int, int]], density: float) -> list[tuple[int, int]]:
    """Layer sampler: random maximal matching, each edge kept with probability ``density``."""
    matching = random_maximal_matching(rng, edges)
    keep = rng.random(len(matching)) < density
    return [e for e, k in zip(matching, keep) if k]


def _mrb_circuit(subset, depth, rng, edges, density, n_wires) -> Circuit:
    g1 = clifford_1q()
    paulis = g1.paulis
    nq = len(subset)
    circ = Circuit(n_wires)

    def one_q_layer(idx):
        # uniformly random Pauli frame compiled into the layer
        frame = rng.integers(0, 4, size=nq)
        for q, g, p in zip(subset, idx, frame):
            g1.emit(circ, g1.compose(int(g), paulis[p]), q)

    def cz_layer(pairs):
        for a, b in pairs:
            circ.cz(a, b)

    cap = rng.integers(0, len(g1), size=nq)
    one_q_layer(cap)
    layers = []
    for _ in range(depth // 2):
        ones = rng.integers(0, len(g1), size=nq)
        pairs = sample_cz_layer(rng, edges, density)
        layers.append((ones, pairs))
        one_q_layer(ones)
        cz_layer(pairs)
    for ones, pairs in reversed(layers):
        cz_layer(pairs)
        one_q_layer(g1.inverse[ones])
    one_q_layer(g1.inverse[cap])
    for c, q in enumerate(subset):
        circ.measure(q, c)
    circ.metadata["cz_layers"] = [len(p) for _, p in layers]
    return circ


def gen_mrb_circuits(spec: MrbSpec, topology: Topology) -> list[Circuit]:
    out = []
    for si, subset in enumerate(spec.subsets):
        if not topology.is_connected(subset):
            raise ValueError(f"subset {subset} is not connected in the topology")
        inside = set(subset)
        edges = [c for c in topology.couplers if c[0] in inside and c[1] in inside]
        for di, depth in enumerate(spec.depths):
            for s in range(spec.samples_per_depth):
                rng = _rng(spec.seed, si, di, s)
                circ = _mrb_circuit(subset, depth, rng, edges, spec.cz_density, topology.num_qubits)
                circ.name = f"mrb-n{len(subset)}-d{depth}-s{s}"
                circ.metadata.update(benchmark="mrb", subset=list(subset), depth=depth, sample=s, target=ideal_clifford_outcome(circ))
                out.append(circ)
    return out


# ---------------------------------------------------------------------------
# running and fitting


def _marginal_zero(counts: dict, clbits: Sequence[int]) -> float:
    total = sum(counts.values())
    hit = sum(c for bits, c in counts.items() if all(bits[i] == "0" for i in clbits))
    return hit / total


def _points(samples: dict[int, list[float]]) -> list[tuple[float, float, float]]:
    pts = []
    for d in sorted(samples):
        v = np.asarray(samples[d])
        sem = float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else 0.0
        pts.append((float(d), float(v.mean()), sem))
    return pts


def _fit(points, fix_b):
    fit = fit_exponential_decay(points, fix_B=fix_b)
    return fit, fit.to_dict()


def _execute(backend, circuits, shots, seed):
    return backend.run(circuits, shots=shots, seed=seed)


def _survivals(spec: RbSpec, circuits, counts) -> dict[int, dict[int, list[float]]]:
    surv: dict[int, dict[int, list[float]]] = {i: {} for i in range(len(spec.targets))}
    for circ, cnt in zip(circuits, counts):
        md = circ.metadata
        for ti in md["targets"]:
            surv[ti].setdefault(md["depth"], []).append(_marginal_zero(cnt, md["clbits"][ti]))
    return surv


def _run_rb(backend, spec: RbSpec, report: BenchmarkReport, idx: int) -> None:
    n_wires = backend.device.num_qubits
    g1 = clifford_1q()
    width = spec.width
    fix_b = 1.0 / 2**width
    ref_circuits = gen_rb_sequences(spec, n_wires, interleaved=False)
    try:
        ref = _survivals(spec, ref_circuits, _execute(backend, ref_circuits, spec.shots, spec.seed))
        inter = None
        if spec.interleaved:
            int_circuits = gen_rb_sequences(spec, n_wires, interleaved=True)
            inter = _survivals(spec, int_circuits, _execute(backend, int_circuits, spec.shots, spec.seed + 1))
    except Exception as exc:  # recorded per element
        for t in spec.targets:
            report.errors[f"{idx}:{t}"] = f"{type(exc).__name__}: {exc}"
        return
    kind = "irb" if spec.interleaved else ("rb_1q" if width == 1 else "rb_2q")
    for ti, target in enumerate(spec.targets):
        key = f"{kind}:{'-'.join(map(str, target))}"
        try:
            pts = _points(ref[ti])
            fit, fd = _fit(pts, fix_b)
            report.points.append({"element": key, "series": "reference", "data": pts})
            report.fits[key] = {"reference": fd}
            if spec.interleaved:
                ipts = _points(inter[ti])
                ifit, ifd = _fit(ipts, fix_b)
                report.points.append({"element": key, "series": "interleaved", "data": ipts})
                report.fits[key]["interleaved"] = ifd
                errs = decay_to_errors({"p_interleaved": ifit.p, "p_reference": fit.p}, 2, "irb")
                report.derived[key] = {"r_cz": errs["r"], **{k: v for k, v in errs.items() if k != "r"}}
            elif width == 1:
                errs = decay_to_errors({"p": fit.p}, 1, "rb", {"gates_per_clifford": g1.mean_prx})
                report.derived[key] = {"r_clifford": errs["r"], "r_1q": errs["r_native"], "gates_per_clifford": g1.mean_prx}
            else:
                errs = decay_to_errors({"p": fit.p}, 2, "rb")
                report.derived[key] = {"r_clifford_2q": errs["r"], "mean_cz_per_clifford": clifford_2q().mean_cz}
        except ValueError as exc:
            report.errors[key] = str(exc)


def _run_mrb(backend, spec: MrbSpec, report: BenchmarkReport) -> None:
    circuits = gen_mrb_circuits(spec, backend.device.topology)
    try:
        counts = _execute(backend, circuits, spec.shots, spec.seed)
    except Exception as exc:
        for s in spec.subsets:
            report.errors[f"mrb:{len(s)}"] = f"{type(exc).__name__}: {exc}"
        return
    by_subset: dict[tuple, dict[int, list[float]]] = {}
    for circ, cnt in zip(circuits, counts):
        md = circ.metadata
        pol = polarization_from_counts(cnt, md["target"])
        by_subset.setdefault(tuple(md["subset"]), {}).setdefault(md["depth"], []).append(pol)
    for subset, samples in by_subset.items():
        n = len(subset)
        key = f"mrb:n{n}:{'-'.join(map(str, subset))}"
        pts = _points(samples)
        report.points.append({"element": key, "series": "polarization", "data": pts})
        try:
            fit, fd = _fit(pts, 0.0)
        except ValueError as exc:
            report.errors[key] = str(exc)
            continue
        report.fits[key] = {"polarization": fd}
        r_layer = polarization_layer_error(fit.p, n)
        errs = decay_to_errors({"r_layer": r_layer}, n, "per_layer_per_qubit")
        report.derived[key] = {"n": n, "r_omega": r_layer, "r_per_qubit": errs["r_per_qubit"]}


def run_rb_suite(backend, specs: Sequence) -> BenchmarkReport:
    """Run RB / IRB / MRB specs and aggregate per-element errors into CDFs and medians."""
    started = time.time()
    specs = list(specs)
    report = BenchmarkReport("rb", spec={"specs": [s.to_dict() for s in specs]}, seed=specs[0].seed if specs else None)
    for i, spec in enumerate(specs):
        if isinstance(spec, MrbSpec):
            _run_mrb(backend, spec, report)
        else:
            _run_rb(backend, spec, report, i)
    summary = {}
    for metric in ("r_1q", "r_cz", "r_clifford_2q", "r_per_qubit"):
        vals = [d[metric] for d in report.derived.values() if metric in d]
        if vals:
            summary[metric] = metric_cdf(vals).to_dict()
    report.derived["summary"] = summary
    report.verdicts = {
        "fits_bounded": all(
            f["p"] <= 1 + 3 * f["stderr_p"] + 1e-12 for fits in report.fits.values() for f in fits.values()
        ),
        "elements_ok": not report.errors,
    }
    return report.stamp(started)


# ---------------------------------------------------------------------------
# drive crosstalk


def _rabi_circuit(n: int, target: int, spectator: int, amp: float) -> Circuit:
    circ = Circuit(n)
    if amp:
        circ.prx(amp, 0.0, target)
    circ.measure(target, 0)
    circ.measure(spectator, 1)
    return circ


def _excited(counts: dict, clbit: int) -> float:
    total = sum(counts.values())
    return sum(c for b, c in counts.items() if b[clbit] == "1") / total


def _fit_rate(amps: np.ndarray, p1: np.ndarray, shots: int) -> Optional[float]:
    """Angular rate s of p1 = c0 - c1 cos(s a); None if no oscillation is resolved."""
    y = p1 - p1.mean()
    pad = 64 * len(amps)
    spec = np.abs(np.fft.rfft(y, n=pad))
    freqs = np.fft.rfftfreq(pad, d=amps[1] - amps[0]) * 2 * math.pi
    k = int(np.argmax(spec[1:])) + 1
    s0 = freqs[k]

    def resid(x):
        c0, c1, s = x
        return c0 - c1 * np.cos(s * amps) - p1

    sol = least_squares(resid, x0=[p1.mean(), max(0.05, 2 * np.std(p1)), s0], method="lm")
    c0, c1, s = sol.x
    noise = math.sqrt(0.25 / shots)
    if abs(c1) < 5 * noise / math.sqrt(len(amps)) * 2 or abs(c1) < 0.02:
        return None
    return abs(float(s))


def estimate_drive_crosstalk(
    backend,
    target: int,
    spectator: int,
    points: int = 64,
    shots: int = 2000,
    seed: int = 0,
    floor_db: float = XTALK_FLOOR_DB,
) -> float:
    """Crosstalk level in dB from amplitude-Rabi sweeps of ``target`` read on both qubits.

    Two sweeps: a short one resolving the target's own rate and a long one
    (one spectator period at the floor level) resolving the spectator's rate.
    """
    if target == spectator:
        return 0.0
    n = backend.device.num_qubits
    short = np.linspace(0.0, 4 * math.pi, points)
    long_max = 2 * math.pi / 10 ** (floor_db / 20.0)
    long = np.linspace(0.0, long_max, 4 * points)
    circuits = [_rabi_circuit(n, target, spectator, a) for a in np.concatenate([short, long])]
    counts = backend.run(circuits, shots=shots, seed=seed)
    p_t = np.array([_excited(c, 0) for c in counts[: len(short)]])
    p_s_short = np.array([_excited(c, 1) for c in counts[: len(short)]])
    p_s_long = np.array([_excited(c, 1) for c in counts[len(short) :]])
    s_t = _fit_rate(short, p_t, shots)
    if s_t is None:
        raise RuntimeError("target qubit shows no Rabi oscillation")
    s_s = _fit_rate(short, p_s_short, shots)
    nyquist = math.pi / (long[1] - long[0])
    if s_s is None or s_s < 0.5 * nyquist:
        s_s = _fit_rate(long, p_s_long, shots)
    if s_s is None:
        return floor_db
    return max(floor_db, 20.0 * math.log10(s_s / s_t))
