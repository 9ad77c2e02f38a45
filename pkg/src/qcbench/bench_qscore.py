"""Q-score: depth-1 QAOA Max-Cut on random graphs, scored against random and optimal cuts."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence

import numpy as np
from scipy.optimize import minimize

from . import statevector as sv
from .analysis import mitigate_or_raw, rem_calibrate
from .circuit import Circuit
from .report import BenchmarkReport
from .routing import route_and_embed
from .synthesis import rx

LIGHTCONE_MAX = 22
PASS_RATIO = 0.2
GRID = 64


@dataclass(frozen=True)
class ProblemGraph:
    n: int
    edges: tuple[tuple[int, int], ...]
    fields: tuple[tuple[int, int], ...] = ()  # (node, weight): adds weight * [node on the far side]

    def __post_init__(self):
        edges = tuple(sorted(tuple(sorted((int(a), int(b)))) for a, b in self.edges))
        if any(a == b for a, b in edges):
            raise ValueError("self-loops are not allowed")
        if len(set(edges)) != len(edges):
            raise ValueError("duplicate edges")
        if any(not (0 <= a < self.n and 0 <= b < self.n) for a, b in edges):
            raise ValueError("edge endpoint out of range")
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "fields", tuple(sorted((int(v), int(w)) for v, w in self.fields if w)))

    def neighbors(self, v: int) -> list[int]:
        return sorted({b if a == v else a for a, b in self.edges if v in (a, b)})

    def field_map(self) -> dict[int, int]:
        return dict(self.fields)

    def cut_values(self, assignments: np.ndarray) -> np.ndarray:
        """Cut value for each row of a (m, n) 0/1 array."""
        x = np.asarray(assignments, dtype=np.int64)
        out = np.zeros(x.shape[0], dtype=np.int64)
        for a, b in self.edges:
            out += x[:, a] ^ x[:, b]
        for v, w in self.fields:
            out += w * x[:, v]
        return out

    def cut(self, bits: str) -> int:
        return int(self.cut_values(np.array([[ch == "1" for ch in bits]]))[0])

    def to_dict(self) -> dict:
        return {"n": self.n, "edges": [list(e) for e in self.edges], "fields": [list(f) for f in self.fields]}


@dataclass(frozen=True)
class QaoaAngles:
    gamma: float
    beta: float

    def __post_init__(self):
        if not (math.isfinite(self.gamma) and math.isfinite(self.beta)):
            raise ValueError("angles must be finite")
        object.__setattr__(self, "gamma", float(self.gamma % (2 * math.pi)))
        object.__setattr__(self, "beta", float(self.beta % math.pi))


def gen_er_graph(n: int, p: float = 0.5, seed: int = 0) -> ProblemGraph:
    if n < 2:
        raise ValueError("need at least 2 nodes")
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    pairs = [(a, b) for a in range(n) for b in range(a + 1, n)]
    draws = np.random.default_rng(seed).random(len(pairs))
    return ProblemGraph(n, tuple(e for e, u in zip(pairs, draws) if u < p))


# ---------------------------------------------------------------------------
# expectation values


def _bits(k: int) -> np.ndarray:
    idx = np.arange(1 << k)
    return (idx[:, None] >> np.arange(k)[None, :]) & 1


def _phase_costs(graph: ProblemGraph, nodes: list[int], edges, fields) -> np.ndarray:
    pos = {v: i for i, v in enumerate(nodes)}
    x = _bits(len(nodes))
    cost = np.zeros(x.shape[0])
    for a, b in edges:
        cost += x[:, pos[a]] ^ x[:, pos[b]]
    for v, w in fields:
        cost += w * x[:, pos[v]]
    return cost


def _term_moments(graph: ProblemGraph, term: tuple, gammas: np.ndarray) -> np.ndarray:
    """For an edge term: (<ZY>+<YZ>, <YY>); for a field term: (<Y>, 0), per gamma, on the phased |+> state."""
    fmap = graph.field_map()
    if term[0] == "edge":
        u, v = term[1]
        nodes = sorted({u, v} | set(graph.neighbors(u)) | set(graph.neighbors(v)))
        edges = [e for e in graph.edges if u in e or v in e]
        fields = [(q, fmap[q]) for q in (u, v) if q in fmap]
    else:
        v = term[1]
        nodes = sorted({v} | set(graph.neighbors(v)))
        edges = [e for e in graph.edges if v in e]
        fields = [(v, fmap[v])]
    k = len(nodes)
    if k > LIGHTCONE_MAX:
        raise ValueError("lightcone too large")
    pos = {q: i for i, q in enumerate(nodes)}
    cost = _phase_costs(graph, nodes, edges, fields)
    amp = np.exp(-1j * np.outer(gammas, cost)) / math.sqrt(1 << k)  # (G, 2^k)
    x = np.arange(1 << k)
    if term[0] == "edge":
        bu, bv = 1 << pos[u], 1 << pos[v]
        su = 1 - 2 * ((x & bu) > 0)
        sv_ = 1 - 2 * ((x & bv) > 0)
        zy = np.sum(np.conj(amp[:, x ^ bv]) * 1j * sv_ * su * amp, axis=1)
        yz = np.sum(np.conj(amp[:, x ^ bu]) * 1j * su * sv_ * amp, axis=1)
        yy = -np.sum(np.conj(amp[:, x ^ bu ^ bv]) * su * sv_ * amp, axis=1)
        return np.stack([(zy + yz).real, yy.real], axis=1)
    bv = 1 << pos[v]
    sv_ = 1 - 2 * ((x & bv) > 0)
    y = np.sum(np.conj(amp[:, x ^ bv]) * 1j * sv_ * amp, axis=1)
    return np.stack([y.real, np.zeros_like(y.real)], axis=1)


def _terms(graph: ProblemGraph) -> list[tuple]:
    return [("edge", e) for e in graph.edges] + [("field", v) for v, _ in graph.fields]


def _expectation_grid(graph: ProblemGraph, gammas: np.ndarray, betas: np.ndarray) -> np.ndarray:
    """Expected cut on a (len(gammas), len(betas)) grid."""
    c = np.cos(2 * betas)[None, :]
    s = np.sin(2 * betas)[None, :]
    total = np.full((len(gammas), len(betas)), 0.5 * len(graph.edges) + 0.5 * sum(w for _, w in graph.fields))
    fmap = graph.field_map()
    for term in _terms(graph):
        m = _term_moments(graph, term, gammas)
        if term[0] == "edge":
            zz = c * s * m[:, 0:1] + s * s * m[:, 1:2]
            total -= 0.5 * zz
        else:
            total -= 0.5 * fmap[term[1]] * s * m[:, 0:1]
    return total


def qaoa_p1_expectation(graph: ProblemGraph, angles: QaoaAngles) -> float:
    """Expected cut of the depth-1 QAOA state, summed over per-term lightcones."""
    try:
        return float(_expectation_grid(graph, np.array([angles.gamma]), np.array([angles.beta]))[0, 0])
    except ValueError:
        if graph.n <= LIGHTCONE_MAX:
            return qaoa_full_expectation(graph, angles)
        raise


def qaoa_full_expectation(graph: ProblemGraph, angles: QaoaAngles) -> float:
    """Full-statevector reference evaluation."""
    n = graph.n
    if n > LIGHTCONE_MAX:
        raise ValueError("graph too large for a full statevector")
    cost = graph.cut_values(_bits(n)).astype(float)
    psi = (np.exp(-1j * angles.gamma * cost) / math.sqrt(1 << n))[None, :].astype(complex)
    mix = rx(2 * angles.beta)
    for q in range(n):
        sv.apply_1q(psi, mix, q, n)
    return float(np.sum(np.abs(psi[0]) ** 2 * cost))


def optimize_angles(graph: ProblemGraph) -> tuple[QaoaAngles, float]:
    """64x64 grid over (gamma, beta) then Nelder-Mead from the best cell; never worse than the grid."""
    if not graph.edges and not graph.fields:
        return QaoaAngles(0.0, 0.0), 0.0
    gammas = np.arange(GRID) * (2 * math.pi / GRID)
    betas = np.arange(GRID) * (math.pi / GRID)
    grid = _expectation_grid(graph, gammas, betas)
    i, j = np.unravel_index(int(np.argmax(grid)), grid.shape)
    best = (float(grid[i, j]), float(gammas[i]), float(betas[j]))

    def neg(x):
        return -float(_expectation_grid(graph, np.array([x[0]]), np.array([x[1]]))[0, 0])

    res = minimize(neg, x0=[best[1], best[2]], method="Nelder-Mead", options={"xatol": 1e-9, "fatol": 1e-12, "maxiter": 2000})
    if -res.fun > best[0]:
        best = (float(-res.fun), float(res.x[0]), float(res.x[1]))
    return QaoaAngles(best[1], best[2]), best[0]


# ---------------------------------------------------------------------------
# virtual node


@dataclass(frozen=True)
class VirtualNodeReduction:
    original: ProblemGraph
    reduced: ProblemGraph
    fixed: int  # original node pinned to bit 0

    def reconstruct(self, bits: str) -> str:
        return bits[: self.fixed] + "0" + bits[self.fixed :]


def apply_virtual_node(graph: ProblemGraph) -> VirtualNodeReduction:
    """Pin the highest-degree node (lowest id on ties); its edges become fields on the rest."""
    if graph.n < 2:
        raise ValueError("need at least 2 nodes")
    deg = [len(graph.neighbors(v)) for v in range(graph.n)]
    f = min(range(graph.n), key=lambda v: (-deg[v], v))
    relabel = lambda v: v if v < f else v - 1
    edges = [(relabel(a), relabel(b)) for a, b in graph.edges if f not in (a, b)]
    fields = dict((relabel(v), w) for v, w in graph.fields if v != f)
    for v in graph.neighbors(f):
        fields[relabel(v)] = fields.get(relabel(v), 0) + 1
    # a field on the pinned node itself only adds a constant 0 (pinned bit is 0)
    return VirtualNodeReduction(graph, ProblemGraph(graph.n - 1, tuple(edges), tuple(fields.items())), f)


# ---------------------------------------------------------------------------
# scoring


def max_cut_brute_force(graph: ProblemGraph) -> int:
    if graph.n > LIGHTCONE_MAX:
        raise ValueError("brute force limited to 22 nodes")
    best = 0
    n = graph.n
    step = 1 << 16
    for s in range(0, 1 << n, step):
        idx = np.arange(s, min(1 << n, s + step))
        x = (idx[:, None] >> np.arange(n)[None, :]) & 1
        best = max(best, int(graph.cut_values(x).max()))
    return best


def sk_approximation(n: int) -> float:
    return n * n / 8 + 0.178 * n**1.5


def qscore_ratio(c: float, c_rand: float, c_opt: float) -> float:
    return (c - c_rand) / (c_opt - c_rand)


def mean_cut(dist: Mapping[str, float], graph: ProblemGraph, reduction: Optional[VirtualNodeReduction] = None) -> float:
    total = float(sum(dist.values()))
    acc = 0.0
    for bits, p in dist.items():
        full = reduction.reconstruct(bits) if reduction is not None else bits
        acc += p * graph.cut(full)
    return acc / total


def qaoa_circuit(graph: ProblemGraph, angles: QaoaAngles) -> Circuit:
    """Depth-1 QAOA: H layer, CNOT-RZ-CNOT per edge, RZ fields, PRX mixer, measure."""
    n = graph.n
    circ = Circuit(n, name=f"qaoa-{n}")
    g, b = angles.gamma, angles.beta
    for v in range(n):
        circ.h(v)
    for u, v in graph.edges:
        circ.cnot(u, v)
        circ.rz(-g, v)
        circ.cnot(u, v)
    for v, w in graph.fields:
        circ.rz(-g * w, v)
    for v in range(n):
        circ.prx(2 * b, 0.0, v)
    circ.measure_all()
    return circ


Solver = Callable[[ProblemGraph, Optional[VirtualNodeReduction]], Mapping[str, float]]


@dataclass
class QScoreResult:
    per_n: dict = field(default_factory=dict)
    qscore: int = 0

    def to_dict(self) -> dict:
        return {"per_n": {str(k): v for k, v in self.per_n.items()}, "qscore": self.qscore}


def score_sizes(sizes: Sequence[int], graphs_per_n: int, solver: Solver, use_virtual_node: bool = True, seed: int = 0, errors: Optional[dict] = None) -> QScoreResult:
    """beta(n) for each size given a solver returning a distribution over the (reduced) problem's bitstrings."""
    result = QScoreResult()
    errors = errors if errors is not None else {}
    for n in sizes:
        cs, crs, cos = [], [], []
        failed = 0
        for i in range(graphs_per_n):
            g = gen_er_graph(n, 0.5, seed=int(np.random.SeedSequence([seed, n, i]).generate_state(1)[0]))
            if not g.edges:
                continue
            red = apply_virtual_node(g) if use_virtual_node else None
            try:
                dist = solver(red.reduced if red else g, red)
            except Exception as exc:
                failed += 1
                errors[f"qscore:{n}:{i}"] = f"{type(exc).__name__}: {exc}"
                continue
            cs.append(mean_cut(dist, g, red))
            crs.append(len(g.edges) / 2)
            cos.append(max_cut_brute_force(g))
        if not cs:
            continue
        c, cr, co = float(np.mean(cs)), float(np.mean(crs)), float(np.mean(cos))
        beta = qscore_ratio(c, cr, co)
        result.per_n[n] = {
            "C": c,
            "C_rand": cr,
            "C_opt": co,
            "C_opt_sk": sk_approximation(n),
            "beta": beta,
            "pass": beta >= PASS_RATIO,
            "instances": len(cs),
            "failed": failed,
        }
    q = 0
    for n in sorted(result.per_n):
        if not result.per_n[n]["pass"]:
            break
        q = n
    result.qscore = q
    return result


def exact_qaoa_solver(problem: ProblemGraph, reduction=None) -> dict[str, float]:
    """Exact output distribution of the optimized QAOA state (ideal quantum computer)."""
    angles, _ = optimize_angles(problem)
    n = problem.n
    cost = problem.cut_values(_bits(n)).astype(float)
    psi = (np.exp(-1j * angles.gamma * cost) / math.sqrt(1 << n))[None, :].astype(complex)
    for q in range(n):
        sv.apply_1q(psi, rx(2 * angles.beta), q, n)
    probs = np.abs(psi[0]) ** 2
    return {format(k, f"0{n}b")[::-1]: float(p) for k, p in enumerate(probs) if p > 0}


def backend_solver(backend, shots: int = 1024, use_layout_opt: bool = True, use_rem: bool = False, seed: int = 0, max_candidates: int = 200) -> Solver:
    counter = [0]

    def solve(problem: ProblemGraph, reduction=None) -> Mapping[str, float]:
        angles, _ = optimize_angles(problem)
        circ = qaoa_circuit(problem, angles)
        if use_layout_opt:
            compiled, layout = route_and_embed(circ, backend.device, exclude_readout=use_rem, max_candidates=max_candidates)
        else:
            compiled, layout = route_and_embed(circ, backend.device, initial_layout=range(problem.n))
        counter[0] += 1
        counts = backend.run([compiled], shots=shots, seed=seed + counter[0])[0]
        if not use_rem:
            return counts
        physical = [q for q, _ in sorted(compiled.measurements(), key=lambda m: m[1])]
        model = rem_calibrate(backend, physical, backend.device.num_qubits, shots=shots, seed=seed + 10**6 + counter[0])
        dist, _ = mitigate_or_raw(counts, model)
        return dist

    return solve


def run_qscore(
    backend,
    n_max: int,
    graphs_per_n: int = 100,
    shots: int = 1024,
    use_virtual_node: bool = True,
    use_layout_opt: bool = True,
    use_rem: bool = False,
    seed: int = 0,
    n_min: int = 2,
    max_candidates: int = 200,
) -> BenchmarkReport:
    started = time.time()
    limit = backend.device.num_qubits + (1 if use_virtual_node else 0)
    if n_max > limit:
        raise ValueError(f"n_max {n_max} exceeds the {limit} nodes this device can host")
    report = BenchmarkReport(
        "qscore",
        spec={
            "n_min": n_min,
            "n_max": n_max,
            "graphs_per_n": graphs_per_n,
            "shots": shots,
            "virtual_node": use_virtual_node,
            "layout_opt": use_layout_opt,
            "rem": use_rem,
            "C": "mean sampled cut",
        },
        seed=seed,
    )
    solver = backend_solver(backend, shots, use_layout_opt, use_rem, seed, max_candidates)
    res = score_sizes(range(n_min, n_max + 1), graphs_per_n, solver, use_virtual_node, seed, report.errors)
    report.points = [{"n": n, **v} for n, v in sorted(res.per_n.items())]
    report.derived = {"qscore": res.qscore}
    report.verdicts = {f"qscore:{n}": v["pass"] for n, v in res.per_n.items()}
    return report.stamp(started)
