import math
from itertools import product

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qcbench.analysis import (
    ConfusionModel,
    apply_rem,
    bootstrap_ci,
    confusion_from_counts,
    decay_to_errors,
    fit_exponential_decay,
    full_rem_oracle,
    heavy_output_test,
    mitigate_or_raw,
    polarization_from_counts,
    rem_calibrate,
)


def test_fit_recovers_exact_model():
    d = np.array([1, 2, 4, 8, 16, 32, 64, 128])
    pts = [(x, 0.9 * 0.98**x + 0.5, 0.01) for x in d]
    f = fit_exponential_decay(pts)
    assert (f.A, f.p, f.B) == pytest.approx((0.9, 0.98, 0.5), abs=1e-9)
    assert f.r_squared == pytest.approx(1.0)


def test_fit_constant_with_fixed_floor():
    f = fit_exponential_decay([(d, 1.0, 0.01) for d in (1, 2, 4, 8)], fix_B=0.0)
    assert f.p == pytest.approx(1.0, abs=1e-9) and f.A == pytest.approx(1.0, abs=1e-9)


def test_fit_noisy_synthetic_within_two_stderr():
    rng = np.random.default_rng(21)
    p, shots = 0.95, 1024
    hits = 0
    for trial in range(20):
        pts = []
        for d in (1, 2, 4, 8, 16, 32, 64):
            surv = rng.binomial(shots, 0.5 * p**d + 0.5, size=30) / shots
            pts.append((d, surv.mean(), surv.std(ddof=1) / math.sqrt(30)))
        f = fit_exponential_decay(pts, fix_B=0.5)
        hits += abs(f.p - p) <= 2 * f.stderr_p
    # two standard errors cover ~95% of fits
    assert hits >= 16


@pytest.mark.parametrize("pts", [[(1, 0.9, 0.1), (2, 0.8, 0.1)], [(1, 0.9, 0.1), (1, 0.8, 0.1), (2, 0.7, 0.1)], [(1, math.nan, 0.1), (2, 0.8, 0.1), (3, 0.7, 0.1)]])
def test_fit_input_errors(pts):
    with pytest.raises(ValueError):
        fit_exponential_decay(pts)


@given(st.floats(0.5, 0.999), st.floats(0.1, 1.0), st.floats(0.0, 0.5))
def test_fit_invariants(p, a, b):
    pts = [(d, a * p**d + b, 0.01) for d in (1, 3, 7, 15, 31)]
    f = fit_exponential_decay(pts)
    if f.converged:
        assert 0 < f.p <= 1 + 1e-9
    assert 0.0 <= f.r_squared <= 1.0


def test_decay_conversions():
    assert decay_to_errors({"p": 0.9982}, 1, "rb")["r"] == pytest.approx(9e-4, rel=1e-9)
    irb = decay_to_errors({"p_interleaved": 0.993333 * 0.99, "p_reference": 0.99}, 2, "irb")
    assert irb["r"] == pytest.approx(5e-3, rel=1e-4)
    assert decay_to_errors({"r_layer": 0.02}, 2, "per_layer_per_qubit")["r_per_qubit"] == pytest.approx(0.0100505, abs=1e-7)


def test_native_gate_normalization():
    out = decay_to_errors({"p": 0.998}, 1, "rb", {"gates_per_clifford": 2.0})
    assert out["r_native"] == pytest.approx(1 - (1 - 1e-3) ** 0.5)


def test_irb_inverted_decays_are_flagged():
    out = decay_to_errors({"p_interleaved": 0.99, "p_reference": 0.98}, 2, "irb")
    assert out["r"] < 0 and "warning" in out


def test_decay_errors():
    with pytest.raises(ValueError):
        decay_to_errors({"p": 1.5}, 1, "rb")
    with pytest.raises(ValueError):
        decay_to_errors({"p": 0.9}, 1, "nope")


def test_polarization_examples():
    assert polarization_from_counts({"010": 50}, "010") == pytest.approx(1.0)
    uniform = {"".join(b): 1 for b in product("01", repeat=3)}
    assert polarization_from_counts(uniform, "000") == pytest.approx(0.0, abs=1e-12)
    assert polarization_from_counts({"0": 75, "1": 25}, "0") == pytest.approx(0.5)
    with pytest.raises(ValueError):
        polarization_from_counts({"01": 1}, "011")


@given(st.integers(1, 5), st.integers(0, 2**31))
def test_polarization_relabel_invariance(n, seed):
    rng = np.random.default_rng(seed)
    keys = ["".join(rng.choice(["0", "1"], n)) for _ in range(6)]
    counts = {k: int(rng.integers(1, 50)) for k in keys}
    target = "".join(rng.choice(["0", "1"], n))
    perm = rng.permutation(n)
    relabel = lambda s: "".join(s[i] for i in perm)
    moved = {}
    for k, v in counts.items():
        moved[relabel(k)] = moved.get(relabel(k), 0) + v
    assert polarization_from_counts(moved, relabel(target)) == pytest.approx(polarization_from_counts(counts, target))
    # the estimator is most negative when every shot sits at Hamming distance 1
    lo = 4**n / (4**n - 1) * (-0.5 - 4.0**-n)
    assert lo - 1e-12 <= polarization_from_counts(counts, target) <= 1 + 1e-12


def test_heavy_output_examples():
    assert heavy_output_test([0.85] * 100)["pass"]
    assert not heavy_output_test([0.60] * 100)["pass"]
    assert not heavy_output_test([0.67] * 10)["pass"]
    with pytest.raises(ValueError):
        heavy_output_test([])
    with pytest.raises(ValueError):
        heavy_output_test([1.2, 0.5])


def test_bootstrap_deterministic():
    vals = np.random.default_rng(1).normal(0.7, 0.05, 50)
    a, b = bootstrap_ci(vals, seed=3), bootstrap_ci(vals, seed=3)
    assert a == b and a[0] < vals.mean() < a[1]


def test_rem_identity_and_fixed_points():
    ident = ConfusionModel.from_errors([(0.0, 0.0)] * 2)
    dist = {"00": 0.4, "01": 0.1, "11": 0.5}
    assert apply_rem(dist, ident) == pytest.approx(dist)
    sym = ConfusionModel.from_errors([(0.03, 0.03)])
    assert apply_rem({"0": 0.5, "1": 0.5}, sym) == pytest.approx({"0": 0.5, "1": 0.5})
    out = apply_rem({"0": 0.97, "1": 0.03}, sym)
    assert out["0"] == pytest.approx(1.0, abs=1e-12) and out["1"] == pytest.approx(0.0, abs=1e-12)


def _confused(true: dict, model: ConfusionModel) -> dict:
    n = model.num_qubits
    out = {}
    for read in product("01", repeat=n):
        r = "".join(read)
        p = 0.0
        for t, pt in true.items():
            w = pt
            for q in range(n):
                w *= model.matrices[q][int(r[q]), int(t[q])]
            p += w
        out[r] = p
    return out


@given(st.integers(1, 3), st.integers(0, 2**31))
def test_rem_matches_full_oracle(n, seed):
    rng = np.random.default_rng(seed)
    model = ConfusionModel.from_errors([tuple(rng.uniform(0, 0.15, 2)) for _ in range(n)])
    probs = rng.dirichlet(np.ones(2**n))
    true = {"".join(b): float(p) for b, p in zip(product("01", repeat=n), probs)}
    observed = _confused(true, model)
    fast = apply_rem(observed, model)
    oracle = full_rem_oracle(observed, model)
    for k in oracle:
        assert fast.get(k, 0.0) == pytest.approx(oracle[k], abs=1e-10)
        assert oracle[k] == pytest.approx(true[k], abs=1e-10)


def test_rem_singular_falls_back():
    bad = ConfusionModel((np.array([[0.5, 0.5], [0.5, 0.5]]),))
    with pytest.warns(RuntimeWarning):
        dist, ok = mitigate_or_raw({"0": 3, "1": 1}, bad)
    assert not ok and dist == {"0": 0.75, "1": 0.25}


def test_confusion_model_validation():
    with pytest.raises(ValueError):
        ConfusionModel((np.array([[0.9, 0.2], [0.2, 0.8]]),))


def test_confusion_from_calibration_counts():
    m = confusion_from_counts({"00": 90, "10": 10}, {"11": 80, "01": 20}, 2)
    assert m.matrices[0][1, 0] == pytest.approx(0.1)
    assert m.matrices[1][0, 1] == pytest.approx(0.0)
    assert m.matrices[0][0, 1] == pytest.approx(0.2)


def test_rem_calibrate_on_twin(spark_backend):
    model = rem_calibrate(spark_backend, [0, 2], 5, shots=40_000, seed=1)
    for m in model.matrices:
        assert m[1, 0] == pytest.approx(0.03, abs=0.005)
