import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qcbench.bench_qscore import (
    ProblemGraph,
    QaoaAngles,
    apply_virtual_node,
    exact_qaoa_solver,
    gen_er_graph,
    max_cut_brute_force,
    optimize_angles,
    qaoa_circuit,
    qaoa_full_expectation,
    qaoa_p1_expectation,
    qscore_ratio,
    run_qscore,
    score_sizes,
)
from qcbench.execution import BackendError
from qcbench.routing import route_and_embed

angles_st = st.builds(QaoaAngles, st.floats(0, 2 * math.pi), st.floats(0, math.pi))


def all_bits(n):
    return ["".join(b) for b in itertools.product("01", repeat=n)]


def test_er_extremes():
    assert len(gen_er_graph(5, 1.0).edges) == 10
    assert gen_er_graph(5, 0.0).edges == ()
    with pytest.raises(ValueError):
        gen_er_graph(1)


def test_er_edge_count_statistics():
    counts = [len(gen_er_graph(10, 0.5, seed=s).edges) for s in range(1000)]
    sigma = math.sqrt(45 * 0.25 / 1000)
    assert abs(np.mean(counts) - 22.5) <= 3 * sigma
    assert gen_er_graph(10, 0.5, seed=4) == gen_er_graph(10, 0.5, seed=4)


def test_graph_validation():
    with pytest.raises(ValueError):
        ProblemGraph(3, ((1, 1),))
    with pytest.raises(ValueError):
        ProblemGraph(3, ((0, 1), (1, 0)))


def test_angles_canonical():
    a = QaoaAngles(-0.5, 4.0)
    assert 0 <= a.gamma < 2 * math.pi and 0 <= a.beta < math.pi
    with pytest.raises(ValueError):
        QaoaAngles(float("nan"), 0.0)


@given(st.integers(2, 9), st.integers(0, 2**31))
def test_zero_angles_cut_half(n, seed):
    g = gen_er_graph(n, 0.5, seed)
    assert qaoa_p1_expectation(g, QaoaAngles(0, 0)) == pytest.approx(len(g.edges) / 2, abs=1e-12)


@given(st.integers(0, 2**31), angles_st, st.booleans())
def test_lightcone_matches_statevector(seed, angles, reduce):
    g = gen_er_graph(8, 0.5, seed)
    if reduce:
        g = apply_virtual_node(g).reduced
    assert qaoa_p1_expectation(g, angles) == pytest.approx(qaoa_full_expectation(g, angles), abs=1e-9)


def test_k2_optimum():
    k2 = ProblemGraph(2, ((0, 1),))
    angles, value = optimize_angles(k2)
    assert value == pytest.approx(1.0, abs=1e-6)
    assert qaoa_p1_expectation(k2, angles) == pytest.approx(1.0, abs=1e-6)


def test_empty_graph_optimum():
    angles, value = optimize_angles(ProblemGraph(4, ()))
    assert (angles.gamma, angles.beta) == (0.0, 0.0)
    assert value == 0.0


@given(st.integers(0, 2**31))
def test_optimizer_dominates_origin(seed):
    g = gen_er_graph(6, 0.5, seed)
    _, value = optimize_angles(g)
    assert value >= len(g.edges) / 2 - 1e-12


def test_virtual_node_k2():
    red = apply_virtual_node(ProblemGraph(2, ((0, 1),)))
    assert red.reduced.n == 1 and red.reduced.fields == ((0, 1),)
    best = max(all_bits(1), key=red.reduced.cut)
    assert red.original.cut(red.reconstruct(best)) == 1


def test_virtual_node_star():
    star = ProblemGraph(5, tuple((0, k) for k in range(1, 5)))
    red = apply_virtual_node(star)
    assert red.fixed == 0 and red.reduced.edges == ()
    assert max(red.reduced.cut(b) for b in all_bits(4)) == 4 == max_cut_brute_force(star)


def test_virtual_node_empty_graph():
    red = apply_virtual_node(ProblemGraph(3, ()))
    assert red.reduced == ProblemGraph(2, ())
    assert all(red.original.cut(red.reconstruct(b)) == 0 for b in all_bits(2))


@given(st.integers(2, 10), st.integers(0, 2**31))
def test_virtual_node_cut_exact(n, seed):
    g = gen_er_graph(n, 0.5, seed)
    red = apply_virtual_node(g)
    bits = all_bits(n - 1)
    reduced = red.reduced.cut_values(np.array([[c == "1" for c in b] for b in bits]))
    original = [g.cut(red.reconstruct(b)) for b in bits]
    assert list(reduced) == original
    assert max(original) == max_cut_brute_force(g)


def test_sampled_circuit_matches_expectation(ideal_backend):
    g = apply_virtual_node(gen_er_graph(8, 0.5, seed=9)).reduced
    angles, value = optimize_angles(g)
    compiled, _ = route_and_embed(qaoa_circuit(g, angles), ideal_backend.device, max_candidates=50)
    shots = 100_000
    (counts,) = ideal_backend.run([compiled], shots=shots, seed=3)
    cuts = {b: g.cut(b) for b in counts}
    m = sum(c * cuts[b] for b, c in counts.items()) / shots
    var = sum(c * (cuts[b] - m) ** 2 for b, c in counts.items()) / shots
    assert abs(m - value) <= 4 * math.sqrt(var / shots)


@given(st.floats(0, 50), st.floats(0, 50), st.floats(1, 50), st.floats(-100, 100))
def test_ratio_shift_invariant(c, cr, gap, shift):
    co = cr + gap
    assert qscore_ratio(c + shift, cr + shift, co + shift) == pytest.approx(qscore_ratio(c, cr, co), abs=1e-9)


def perfect_solver(problem, reduction=None):
    return {max(all_bits(problem.n), key=problem.cut): 1.0}


def uniform_solver(problem, reduction=None):
    return {b: 1.0 for b in all_bits(problem.n)}


@pytest.mark.parametrize("vn", [True, False])
def test_reference_solvers(vn):
    best = score_sizes(range(2, 7), 10, perfect_solver, use_virtual_node=vn)
    flat = score_sizes(range(2, 7), 10, uniform_solver, use_virtual_node=vn)
    for n in range(2, 7):
        assert best.per_n[n]["beta"] == pytest.approx(1.0)
        assert flat.per_n[n]["beta"] == pytest.approx(0.0, abs=1e-12)
    assert best.qscore == 6 and flat.qscore == 0


def test_exact_solver_small_sizes():
    res = score_sizes(range(2, 7), 10, exact_qaoa_solver)
    assert all(v["beta"] >= 0.2 for v in res.per_n.values())
    assert res.qscore == 6


def test_run_qscore_ideal(ideal_backend):
    rep = run_qscore(ideal_backend, 4, graphs_per_n=4, shots=2000, max_candidates=20)
    assert not rep.errors
    assert rep.derived["qscore"] == 4
    assert [p["n"] for p in rep.points] == [2, 3, 4]


class Broken:
    def __init__(self, device):
        self.device = device

    def run(self, circuits, shots, seed=None):
        raise BackendError("down")


def test_run_qscore_records_failures(garnet):
    rep = run_qscore(Broken(garnet), 3, graphs_per_n=3, max_candidates=10)
    assert rep.points == [] and rep.errors
    with pytest.raises(ValueError):
        run_qscore(Broken(garnet), 22)
