import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_circuit
from qcapnet.device_circuit import CTRL, TARG, Circuit, Gate, grid_device, line_device, zrot
from qcapnet.errors import RateOutOfRange, SchemaError, UnsupportedVersion
from qcapnet.noise_models import (
    DoubleTrouble, GrowingPains, LocalPauliStochastic, LpsRates, coherent_angle, consecutive_cnot_mask,
    effective_rate, load_error_model, location_rates, model_from_dict, sample_biased_lps, sample_coherent_model,
    sample_uniform_lps, save_error_model,
)
from qcapnet.statevector import pauli_rotation


def flat_rates(n, eps, edges=(), readout=0.0):
    gates = {(k, q): np.full(3, eps) for q in range(n) for k in ("Z", "Xp", "Xm")}
    gates.update({("CNOT", c, t): np.full((2, 3), eps) for c, t in edges})
    return LpsRates(n, gates, np.full(n, readout))


def test_biased_lps_defaults(t5, rng):
    rates = sample_biased_lps(t5, rng).base()
    for key, v in rates.gates.items():
        rows = v.reshape(-1, 3)
        assert (np.count_nonzero(rows, axis=1) == 1).all()
        assert rows.max() <= (0.01 if key[0] == "CNOT" else 0.0025)
    a = sample_biased_lps(t5, np.random.default_rng(3)).to_dict()
    b = sample_biased_lps(t5, np.random.default_rng(3)).to_dict()
    assert a == b


def test_uniform_lps_parameter_count_on_7x7_grid(rng):
    dev = grid_device(7, 7)
    rates = sample_uniform_lps(dev, rng).base()
    # 84 undirected edges, both directions, 6 rates each; 3 gates x 3 Paulis and one readout per qubit
    assert rates.parameter_count() == 84 * 2 * 6 + 3 * 49 * 3 + 49 == 1498


def test_uniform_lps_range(t5, rng):
    zero = sample_uniform_lps(t5, rng, hi=0.0).base()
    assert all((v == 0).all() for v in zero.gates.values()) and (zero.readout == 0).all()
    small = sample_uniform_lps(t5, rng, hi=1e-4).base()
    assert all(((v >= 0) & (v <= 1e-4)).all() for v in small.gates.values())


def test_rates_out_of_range_rejected():
    with pytest.raises(RateOutOfRange):
        LpsRates(1, {("Z", 0): np.array([0.5, 0.3, 0.3])})
    with pytest.raises(RateOutOfRange):
        LpsRates(1, {}, np.array([1.2]))


def test_growing_pains_factor():
    gp = GrowingPains(flat_rates(1, 0.001))
    g = Gate("Xp")
    assert effective_rate(gp, "X", g, 0, 0) == pytest.approx(0.001)
    assert effective_rate(gp, "X", g, 0, 272) / 0.001 == pytest.approx(3.96, abs=0.005)
    assert effective_rate(gp, "X", g, 0, 10**6) == pytest.approx(0.009, abs=1e-9)


@settings(max_examples=100, deadline=None)
@given(a=st.integers(0, 5000), b=st.integers(0, 5000))
def test_growing_pains_monotone(a, b):
    gp = GrowingPains(flat_rates(1, 0.001))
    lo, hi = sorted((a, b))
    assert effective_rate(gp, "Z", Gate("Xm"), 0, lo) <= effective_rate(gp, "Z", Gate("Xm"), 0, hi)


def test_double_trouble_second_cnot():
    dev = line_device(2)
    dt = DoubleTrouble(flat_rates(2, 0.01, sorted(dev.edges)))
    cn = (Gate(CTRL, partner=1), Gate(TARG, partner=0))
    c = Circuit(dev, (0, 1), (cn, cn))
    assert effective_rate(dt, "X", cn[0], 0, 0, c) == pytest.approx(0.01)
    assert effective_rate(dt, "X", cn[0], 0, 1, c) == pytest.approx(1 - 0.99 * 0.995)
    assert effective_rate(dt, "X", cn[0], 0, 1, c) == pytest.approx(0.014950)
    assert consecutive_cnot_mask(c).tolist() == [[False, True], [False, True]]


def test_double_trouble_reduces_to_base_without_consecutive_cnots(rng):
    dev = grid_device(2, 2)
    base = sample_uniform_lps(dev, rng, hi=0.01).base()
    dt, lps = DoubleTrouble(base), LocalPauliStochastic(base)
    checked = 0
    while checked < 20:
        c = random_circuit(dev, range(4), 6, rng, cnot_prob=0.3)
        if consecutive_cnot_mask(c).any():
            continue
        checked += 1
        assert np.array_equal(location_rates(dt, c), location_rates(lps, c))


def test_location_rates_sum_below_one(rng):
    dev = grid_device(2, 2)
    for model in (GrowingPains(sample_uniform_lps(dev, rng, hi=0.05).base()),
                  DoubleTrouble(sample_uniform_lps(dev, rng, hi=0.05).base()), sample_biased_lps(dev, rng)):
        c = random_circuit(dev, range(4), 40, rng)
        assert (location_rates(model, c).sum(axis=-1) < 1).all()


def test_noop_gates_carry_no_error():
    lps = LocalPauliStochastic(flat_rates(1, 0.01))
    c = Circuit(line_device(1), (0,), ((zrot(0),), (Gate("I"),), (zrot(1),)))
    r = location_rates(lps, c)
    assert (r[0, :2] == 0).all() and (r[0, 2] == 0.01).all()


def test_coherent_angle_and_unitarity(t5, rng):
    assert coherent_angle(0.05) == pytest.approx(0.4510, abs=5e-5)
    # sin^2(theta/2) inverts back to the infidelity
    assert math.sin(coherent_angle(0.05) / 2) ** 2 == pytest.approx(0.05)
    zero = sample_coherent_model(t5, rng, 0.0)
    assert all(t == 0.0 for _, t in zero.rotations.values())
    model = sample_coherent_model(t5, rng, 0.05)
    for axis, theta in model.rotations.values():
        u = pauli_rotation(axis, theta)
        assert np.allclose(u.conj().T @ u, np.eye(len(u)), atol=1e-12)
        assert axis != "I" * len(axis)


def test_model_file_round_trip(tmp_path, t5, rng):
    for model in (sample_biased_lps(t5, rng), GrowingPains(sample_uniform_lps(t5, rng).base()),
                  DoubleTrouble(sample_uniform_lps(t5, rng).base()), sample_coherent_model(t5, rng)):
        save_error_model(model, tmp_path / "m.json", {"seed": 1})
        assert load_error_model(tmp_path / "m.json").to_dict() == model.to_dict()


def test_model_file_errors():
    with pytest.raises(UnsupportedVersion):
        model_from_dict({"version": 99, "variant": "lps"})
    with pytest.raises(SchemaError):
        model_from_dict({"variant": "mystery"})
