import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qcbench.circuit import Circuit, CircuitError, ideal_distribution
from qcbench.device import Topology, garnet_median, uniform_device
from qcbench.routing import noise_score, route_and_embed

from test_circuit import random_circuits


def path_device(n=3):
    return uniform_device(Topology(tuple(range(n)), tuple((i, i + 1) for i in range(n - 1))))


def random_topology(rng, n):
    edges = set()
    for v in range(1, n):
        u = int(rng.integers(v))
        edges.add((u, v))
    for _ in range(int(rng.integers(0, n))):
        a, b = sorted(int(x) for x in rng.choice(n, 2, replace=False))
        edges.add((a, b))
    perm = rng.permutation(n)
    return Topology(tuple(range(n)), tuple(sorted((int(perm[a]), int(perm[b])) for a, b in edges)))


def distributions_close(a, b, tol=1e-9):
    keys = set(a) | set(b)
    return max(abs(a.get(k, 0.0) - b.get(k, 0.0)) for k in keys) <= tol


def test_adjacent_pair_needs_no_swaps():
    dev = path_device(2)
    c = Circuit(2).cz(0, 1).measure_all()
    routed, layout = route_and_embed(c, dev)
    assert layout.swaps == 0
    assert sorted(layout.mapping) == [0, 1]


def test_path_ends_need_one_swap():
    dev = path_device(3)
    c = Circuit(3).h(0).h(2).cz(0, 2).h(2).measure_all()
    routed, layout = route_and_embed(c, dev, initial_layout=(0, 1, 2))
    assert layout.swaps == 1
    assert distributions_close(ideal_distribution(routed), ideal_distribution(c), 1e-10)


def test_embeds_on_best_coupler():
    topo = Topology((0, 1, 2), ((0, 1), (1, 2)))
    dev = replace(uniform_device(topo), err_cz={(0, 1): 2e-2, (1, 2): 5e-3})
    routed, layout = route_and_embed(Circuit(2).cz(0, 1), dev)
    assert set(layout.mapping) == {1, 2}
    assert -math.log1p(-5e-3) < -math.log1p(-2e-2)


def test_routed_cz_on_couplers(garnet):
    rng = np.random.default_rng(4)
    c = Circuit(6)
    for _ in range(20):
        a, b = (int(x) for x in rng.choice(6, 2, replace=False))
        c.cnot(a, b)
    routed, layout = route_and_embed(c, garnet, max_candidates=50)
    assert routed.is_native()
    assert all(garnet.topology.has_coupler(*i.operands) for i in routed.instructions if i.kind == "CZ")
    assert len(set(layout.mapping)) == 6


def test_guards(garnet):
    with pytest.raises(CircuitError):
        route_and_embed(Circuit(21), garnet)
    split = uniform_device(Topology((0, 1, 2, 3), ((0, 1), (2, 3))))
    with pytest.raises(CircuitError):
        route_and_embed(Circuit(2).cz(0, 1), split)


@given(random_circuits(max_qubits=5, max_len=12), st.integers(0, 2**31))
def test_routing_preserves_distribution(circ, seed):
    rng = np.random.default_rng(seed)
    n = circ.num_qubits
    topo = random_topology(rng, n + int(rng.integers(0, 2)))
    dev = uniform_device(topo)
    c = circ.copy()
    c.measure_all()
    routed, _ = route_and_embed(c, dev)
    assert distributions_close(ideal_distribution(routed), ideal_distribution(c))


def test_readout_exclusion_changes_score(garnet):
    c = Circuit(1).prx(1.0, 0.0, 0).measure(0)
    assert noise_score(c, garnet) > noise_score(c, garnet, exclude_readout=True) > 0


@given(st.sampled_from(["PRX", "CZ", "MEASURE"]))
def test_noise_score_monotone(kind):
    dev = garnet_median()
    base = Circuit(20).prx(0.5, 0.0, 0).cz(0, 1)
    before = noise_score(base, dev)
    if kind == "PRX":
        base.prx(0.2, 0.1, 3)
    elif kind == "CZ":
        base.cz(*dev.topology.couplers[5])
    else:
        base.measure(7)
    assert noise_score(base, dev) > before
