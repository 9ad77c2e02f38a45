import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qcbench.analysis import heavy_output_test
from qcbench.bench_volume import (
    ClopsParams,
    ClopsTemplate,
    clops_value,
    gen_qv_circuit,
    haar_su4,
    heavy_output_probability,
    qv_layers,
    run_clops,
    run_qv,
    run_volumetric,
    volumetric_csv,
)
from qcbench.circuit import Circuit, ideal_distribution
from qcbench.execution import LocalBackend
from qcbench.routing import route_and_embed


@given(st.integers(0, 2**32 - 1))
def test_haar_blocks_are_special_unitary(seed):
    u = haar_su4(np.random.default_rng(seed))
    assert np.allclose(u.conj().T @ u, np.eye(4), atol=1e-12)
    assert abs(np.linalg.det(u) - 1) < 1e-12


@given(st.integers(2, 6), st.integers(0, 2**31))
def test_heavy_set_is_median_split(n, seed):
    circ, heavy = gen_qv_circuit(n, seed)
    assert 1 <= len(heavy) <= 2**n - 1
    assert circ.metadata["heavy_mass"] >= 0.5
    dist = ideal_distribution(circ)
    assert sum(dist.get(b, 0.0) for b in heavy) == pytest.approx(circ.metadata["heavy_mass"], abs=1e-10)


def test_qv_width_bounds():
    for n in (1, 21):
        with pytest.raises(ValueError):
            gen_qv_circuit(n, 0)


def test_qv_layer_structure():
    circ, _ = gen_qv_circuit(5, 11)
    blocks = [i for i in circ.instructions if i.kind == "UNITARY"]
    assert len(blocks) == 5 * 2


def test_sampled_hop_matches_heavy_mass(ideal_backend):
    circ, heavy = gen_qv_circuit(2, 5)
    shots = 4000
    compiled, _ = route_and_embed(circ, ideal_backend.device)
    (counts,) = ideal_backend.run([compiled], shots=shots, seed=1)
    mass = circ.metadata["heavy_mass"]
    sigma = math.sqrt(mass * (1 - mass) / shots)
    assert abs(heavy_output_probability(counts, heavy) - mass) <= 3 * sigma + 1e-12


def test_ideal_qv_width_4(ideal_backend):
    rep = run_qv(ideal_backend, 4, n_circuits=40, shots=512, seed=2)
    assert rep.verdicts["qv:4"]
    assert 0.80 <= rep.derived["qv:4"]["mean"] <= 0.89
    assert rep.derived["quantum_volume"] == 16


def test_flat_hops_fail():
    assert not heavy_output_test([0.5] * 100)["pass"]


def test_scaled_noise_never_rescues_qv(garnet):
    for n in (3, 4):
        base = run_qv(LocalBackend(garnet), n, n_circuits=30, shots=256, seed=3, max_candidates=50)
        worse = run_qv(LocalBackend(garnet.scaled(4.0)), n, n_circuits=30, shots=256, seed=3, max_candidates=50)
        assert worse.derived[f"qv:{n}"]["mean"] < base.derived[f"qv:{n}"]["mean"]
        assert base.verdicts[f"qv:{n}"] or not worse.verdicts[f"qv:{n}"]


def test_volumetric_ideal_and_extrapolation(ideal_backend):
    rep = run_volumetric(ideal_backend, widths=[2, 4], depths=[1, 2, 4, 8], n_circuits=5, shots=128, max_volume=16)
    for cell in rep.points:
        if not cell["extrapolated"]:
            assert cell["fidelity"] == pytest.approx(1.0, abs=1e-9)
    # width 4 has only 3 measured depths, width 2 has all 4
    assert [c["extrapolated"] for c in rep.points] == [False] * 7 + [True]
    csv = volumetric_csv(rep).splitlines()
    assert csv[0] == "width,depth,fidelity,stderr,extrapolated"
    assert len(csv) == 9


def test_volumetric_twin_grid(twin):
    rep = run_volumetric(twin, widths=[2, 8], depths=[2, 4, 8, 16], n_circuits=6, shots=256, max_volume=64, seed=1)
    assert not rep.errors
    cells = {(c["width"], c["depth"]): c for c in rep.points}
    assert cells[(2, 2)]["fidelity"] > cells[(8, 16)]["fidelity"]
    assert cells[(8, 16)]["extrapolated"]
    ext = [cells[(8, d)]["fidelity"] for d in (2, 4, 8, 16)]
    assert ext[-1] <= ext[-2] + 1e-12


def test_volumetric_rejects_empty(ideal_backend):
    with pytest.raises(ValueError):
        run_volumetric(ideal_backend, widths=[], depths=[1])


def test_clops_arithmetic():
    assert clops_value(ClopsParams(100, 10, 100, 5, 192.31)) == pytest.approx(2600, abs=0.5)
    assert clops_value(ClopsParams(500000, 1, 1, 1, 500000.0)) == 1.0
    with pytest.raises(ValueError):
        ClopsParams(0, 1, 1, 1, 1.0)
    with pytest.raises(ValueError):
        ClopsParams(1, 1, 1, 1, 0.0)


def test_qv_layers():
    assert qv_layers(16) == 4
    assert qv_layers(32) == 5
    for bad in (1, 12):
        with pytest.raises(ValueError):
            qv_layers(bad)


def test_template_binding_only_touches_prx():
    c = Circuit(2)
    c.prx(0.1, 0.2, 0)
    c.cz(0, 1)
    c.prx(0.3, 0.4, 1)
    t = ClopsTemplate(c)
    out = t.bind(np.random.default_rng(0))
    assert [i.kind for i in out.instructions] == ["PRX", "CZ", "PRX"]
    assert out.instructions[0].params != (0.1, 0.2)
    assert c.instructions[0].params == (0.1, 0.2)


def test_clops_report(ideal_backend):
    rep = run_clops(ideal_backend, 8, M=3, K=2, S=10, max_candidates=20)
    assert not rep.errors
    timing = rep.metadata["timing"]
    assert len(timing["rounds"]) == 2
    assert timing["clops"] == pytest.approx(3 * 2 * 10 * 3 / timing["elapsed"])
