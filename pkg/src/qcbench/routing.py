"""Noise-aware layout selection and greedy SWAP routing onto a device topology."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .circuit import Circuit, CircuitError, Instruction, decompose_to_native, gate_matrix
from .device import DeviceModel, Topology

MAX_CANDIDATES = 10_000
EXHAUSTIVE_LIMIT = 12


@dataclass(frozen=True)
class Layout:
    mapping: tuple[int, ...]  # logical -> physical at circuit start
    noise_score: float
    final_mapping: tuple[int, ...] = ()  # logical -> physical after routing
    swaps: int = 0


def gate_cost(inst: Instruction, device: DeviceModel, exclude_readout: bool = False) -> float:
    k = inst.kind
    if k == "PRX":
        eps = device.err_1q[inst.operands[0]]
    elif k == "CZ":
        eps = device.cz_error(*inst.operands)
    elif k == "MEASURE" and not exclude_readout:
        e01, e10 = device.ro_err[inst.operands[0]]
        eps = 0.5 * (e01 + e10)
    else:
        return 0.0
    return -math.log1p(-eps)


def noise_score(circuit: Circuit, device: DeviceModel, exclude_readout: bool = False) -> float:
    """Sum of -ln(1 - eps) over the physical gates of a native, routed circuit."""
    return sum(gate_cost(i, device, exclude_readout) for i in circuit.instructions)


# ---------------------------------------------------------------------------
# two-qubit block consolidation

_CZ_COST = {"CZ": 1, "CNOT": 1, "CX": 1, "SWAP": 3, "UNITARY": 3}
_SWAP = gate_matrix(Instruction("SWAP", (0, 1)))


def _embed(inst: Instruction, pair: tuple[int, int]) -> np.ndarray:
    m = gate_matrix(inst)
    if len(inst.operands) == 1:
        eye = np.eye(2, dtype=complex)
        return np.kron(eye, m) if inst.operands[0] == pair[0] else np.kron(m, eye)
    return m if inst.operands == pair else _SWAP @ m @ _SWAP


def consolidate_blocks(circuit: Circuit) -> Circuit:
    """Fuse maximal runs of gates confined to one qubit pair into a single 2Q unitary.

    A run is replaced only when that lowers its CZ cost (a fused block costs at most 3).
    """
    out = Circuit(circuit.num_qubits, name=circuit.name, metadata=dict(circuit.metadata))
    blocks: dict[tuple[int, int], list[Instruction]] = {}
    owner: dict[int, tuple[int, int]] = {}

    def close(pair: tuple[int, int]) -> None:
        insts = blocks.pop(pair)
        for q in pair:
            owner.pop(q, None)
        cost = sum(_CZ_COST.get(i.kind, 0) for i in insts)
        if cost <= 3:
            out.instructions.extend(insts)
            return
        u = np.eye(4, dtype=complex)
        for inst in insts:
            u = _embed(inst, pair) @ u
        out.unitary(u, pair)

    for inst in circuit.instructions:
        ops = inst.operands
        if inst.kind in ("MEASURE", "BARRIER"):
            for q in ops:
                if q in owner:
                    close(owner[q])
            out.instructions.append(inst)
        elif len(ops) == 1:
            if ops[0] in owner:
                blocks[owner[ops[0]]].append(inst)
            else:
                out.instructions.append(inst)
        else:
            pair = tuple(sorted(ops))
            if owner.get(ops[0]) == pair and owner.get(ops[1]) == pair:
                blocks[pair].append(inst)
                continue
            for q in ops:
                if q in owner:
                    close(owner[q])
            blocks[pair] = [inst]
            owner[pair[0]] = owner[pair[1]] = pair
    for pair in sorted(blocks):
        close(pair)
    return out


# ---------------------------------------------------------------------------
# candidate subgraphs


def connected_subsets(topology: Topology, k: int, cap: int = MAX_CANDIDATES) -> list[tuple[int, ...]]:
    """Connected induced vertex subsets of size k in deterministic order (ESU enumeration)."""
    adj = [set(topology.neighbors(q)) for q in topology.qubits]
    out: list[tuple[int, ...]] = []

    def extend(sub: list[int], ext: list[int], v: int, nbhd: set[int]) -> bool:
        if len(sub) == k:
            out.append(tuple(sorted(sub)))
            return len(out) >= cap
        ext = sorted(ext)
        while ext:
            w = ext.pop(0)
            new_ext = set(ext)
            for u in adj[w]:
                if u > v and u not in nbhd and u not in sub:
                    new_ext.add(u)
            if extend(sub + [w], list(new_ext), v, nbhd | adj[w] | {w}):
                return True
        return False

    for v in topology.qubits:
        if extend([v], [u for u in adj[v] if u > v], v, adj[v] | {v}):
            break
    return out


def greedy_subsets(device: DeviceModel, k: int) -> list[tuple[int, ...]]:
    """One candidate per seed qubit, grown by adding the cheapest adjacent coupler."""
    topo = device.topology
    seen = set()
    out = []
    for seed in topo.qubits:
        sub = {seed}
        while len(sub) < k:
            best = None
            for a in sorted(sub):
                for b in topo.neighbors(a):
                    if b not in sub:
                        key = (device.cz_error(a, b) + device.err_1q[b], b)
                        if best is None or key < best:
                            best = key
            if best is None:
                break
            sub.add(best[1])
        t = tuple(sorted(sub))
        if len(t) == k and t not in seen:
            seen.add(t)
            out.append(t)
    return out


def _subset_distances(topology: Topology, nodes: Sequence[int]) -> dict[int, dict[int, int]]:
    allowed = set(nodes)
    dist = {}
    for s in nodes:
        d = {s: 0}
        queue = deque([s])
        while queue:
            u = queue.popleft()
            for v in topology.neighbors(u):
                if v in allowed and v not in d:
                    d[v] = d[u] + 1
                    queue.append(v)
        dist[s] = d
    return dist


def _interactions(circuit: Circuit) -> dict[tuple[int, int], int]:
    w: dict[tuple[int, int], int] = {}
    for inst in circuit.instructions:
        if len(inst.operands) == 2 and inst.kind != "BARRIER":
            a, b = sorted(inst.operands)
            w[(a, b)] = w.get((a, b), 0) + 1
    return w


def _place(circuit: Circuit, subset: Sequence[int], device: DeviceModel, dist) -> tuple[int, ...]:
    n = circuit.num_qubits
    weights = _interactions(circuit)
    partners: dict[int, dict[int, int]] = {q: {} for q in range(n)}
    for (a, b), c in weights.items():
        partners[a][b] = c
        partners[b][a] = c
    topo = device.topology
    inner_deg = {p: sum(1 for v in topo.neighbors(p) if v in dist) for p in subset}
    order: list[int] = []
    remaining = set(range(n))
    while remaining:
        root = min(remaining, key=lambda q: (-sum(partners[q].values()), q))
        queue = deque([root])
        remaining.discard(root)
        while queue:
            q = queue.popleft()
            order.append(q)
            for r in sorted(partners[q], key=lambda r: (-partners[q][r], r)):
                if r in remaining:
                    remaining.discard(r)
                    queue.append(r)
    pos: dict[int, int] = {}
    free = set(subset)
    for q in order:
        placed = [(r, c) for r, c in partners[q].items() if r in pos]
        if placed:
            key = lambda p: (sum(c * dist[p][pos[r]] for r, c in placed), p)
        elif partners[q]:
            key = lambda p: (-inner_deg[p], p)
        else:
            key = lambda p: (device.err_1q[p] + sum(device.ro_err[p]) / 2, p)
        p = min(free, key=key)
        pos[q] = p
        free.discard(p)
    return tuple(pos[q] for q in range(n))


def _path(topology: Topology, allowed: set[int], src: int, dst: int) -> list[int]:
    prev = {src: None}
    queue = deque([src])
    while queue:
        u = queue.popleft()
        if u == dst:
            break
        for v in topology.neighbors(u):
            if v in allowed and v not in prev:
                prev[v] = u
                queue.append(v)
    path = [dst]
    while prev[path[-1]] is not None:
        path.append(prev[path[-1]])
    return path[::-1]


# cost of a generic 2Q block (e.g. one SWAP): 3 CZ, 4 PRX on one side and 2 on the other
def _swap_cost(device: DeviceModel, a: int, b: int) -> float:
    cz = -math.log1p(-device.cz_error(a, b))
    pa = -math.log1p(-device.err_1q[a])
    pb = -math.log1p(-device.err_1q[b])
    return 3 * cz + 2 * pa + 4 * pb


def route(circuit: Circuit, device: DeviceModel, mapping: Sequence[int], subset: Sequence[int] | None = None):
    """Greedy shortest-path SWAP insertion.

    The SWAPs of a path are split between both ends, preferring a split whose
    first SWAP lands on the pair of the previous two-qubit gate (so block fusion
    absorbs it). Returns (routed circuit on device wires with SWAP instructions,
    final mapping, swap count).
    """
    topo = device.topology
    allowed = set(subset) if subset is not None else set(topo.qubits)
    l2p = list(mapping)
    p2l = {p: q for q, p in enumerate(l2p)}
    last_pair: dict[int, tuple[int, int]] = {}
    out = Circuit(device.num_qubits, name=circuit.name, metadata=dict(circuit.metadata))
    swaps = 0

    def do_swap(u: int, v: int) -> None:
        nonlocal swaps
        out.add("SWAP", (u, v))
        swaps += 1
        lu, lv = p2l.pop(u, None), p2l.pop(v, None)
        if lu is not None:
            l2p[lu] = v
            p2l[v] = lu
        if lv is not None:
            l2p[lv] = u
            p2l[u] = lv
        last_pair[u] = last_pair[v] = tuple(sorted((u, v)))

    def fuses(u: int, v: int) -> bool:
        pair = tuple(sorted((u, v)))
        return last_pair.get(u) == pair and last_pair.get(v) == pair

    for inst in circuit.instructions:
        ops = inst.operands
        if inst.kind == "BARRIER":
            out.add("BARRIER", [l2p[q] for q in ops])
            continue
        if len(ops) == 2:
            pa, pb = l2p[ops[0]], l2p[ops[1]]
            if not topo.has_coupler(pa, pb):
                path = _path(topo, allowed, pa, pb)
                if len(path) < 2 or path[-1] != pb:
                    raise CircuitError("no path between operands inside the layout")
                need = len(path) - 2
                best_k, best_cost = need, None
                for k in range(need, -1, -1):  # k swaps from the first operand's end
                    cost = need
                    if k and fuses(path[0], path[1]):
                        cost -= 1
                    if need - k and fuses(path[-1], path[-2]):
                        cost -= 1
                    if best_cost is None or cost < best_cost:
                        best_k, best_cost = k, cost
                for i in range(best_k):
                    do_swap(path[i], path[i + 1])
                for i in range(need - best_k):
                    do_swap(path[-1 - i], path[-2 - i])
            pair = tuple(sorted((l2p[ops[0]], l2p[ops[1]])))
            last_pair[pair[0]] = last_pair[pair[1]] = pair
        elif inst.kind == "MEASURE":
            last_pair.pop(l2p[ops[0]], None)
        out.instructions.append(Instruction(inst.kind, tuple(l2p[q] for q in ops), inst.params))
    return out, tuple(l2p), swaps


_VIRTUAL_1Q = {"RZ", "Z", "S", "SDG", "T", "TDG", "I"}


def _approx_cost(inst: Instruction, device: DeviceModel, exclude_readout: bool) -> float:
    k, ops = inst.kind, inst.operands
    if k in ("SWAP", "UNITARY") and len(ops) == 2:
        # generic 2Q block: 3 CZ, 4 PRX on one side and 2 on the other
        return _swap_cost(device, *ops)
    if k in ("CNOT", "CX"):
        return -math.log1p(-device.cz_error(*ops)) - 2 * math.log1p(-device.err_1q[ops[1]])
    if k in NATIVE_COSTED:
        return gate_cost(inst, device, exclude_readout)
    if len(ops) == 1 and k not in _VIRTUAL_1Q and k != "BARRIER":
        return -math.log1p(-device.err_1q[ops[0]])
    return 0.0


NATIVE_COSTED = {"PRX", "CZ", "MEASURE"}


def _approx_score(routed: Circuit, device: DeviceModel, exclude_readout: bool) -> float:
    return sum(_approx_cost(inst, device, exclude_readout) for inst in consolidate_blocks(routed).instructions)


def route_and_embed(
    circuit: Circuit,
    device: DeviceModel,
    exclude_readout: bool = False,
    max_candidates: int = MAX_CANDIDATES,
    initial_layout: Sequence[int] | None = None,
) -> tuple[Circuit, Layout]:
    """Embed and route a circuit onto the device, keeping the lowest noise score candidate.

    The returned circuit is native and acts on device wires; measurement clbits are
    preserved so outcomes need no un-permuting.
    """
    n = circuit.num_qubits
    topo = device.topology
    if n > topo.num_qubits:
        raise CircuitError(f"circuit needs {n} qubits, device has {topo.num_qubits}")
    if not topo.is_connected():
        raise CircuitError("device graph is disconnected")
    circuit.validate()
    if any(len(i.operands) > 2 for i in circuit.instructions if i.kind not in ("BARRIER",)):
        raise CircuitError("gates on more than two qubits are not supported")
    # route the high-level circuit; decomposition happens once, after block fusion
    native = Circuit(n, [i for i in circuit.instructions], circuit.name, dict(circuit.metadata))

    if initial_layout is not None:
        mapping = tuple(initial_layout)
        if len(set(mapping)) != n:
            raise CircuitError("initial layout must be injective")
        candidates = [(mapping, None)]
    else:
        if n <= EXHAUSTIVE_LIMIT:
            subsets = connected_subsets(topo, n, cap=max_candidates)
        else:
            subsets = greedy_subsets(device, n)[:max_candidates]
        candidates = []
        for sub in subsets:
            dist = _subset_distances(topo, sub)
            candidates.append((_place(native, sub, device, dist), sub))

    best = None
    for mapping, sub in candidates:
        routed, final, swaps = route(native, device, mapping, sub)
        score = _approx_score(routed, device, exclude_readout)
        if best is None or score < best[0] - 1e-12:
            best = (score, routed, mapping, final, swaps)
    _, routed, mapping, final, swaps = best
    compiled = decompose_to_native(consolidate_blocks(routed))
    layout = Layout(tuple(mapping), noise_score(compiled, device, exclude_readout), tuple(final), swaps)
    return compiled, layout
