import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from conftest import random_circuit
from qcapnet.device_circuit import CTRL, IDLE_GATE, TARG, Circuit, Gate, line_device, t_topology
from qcapnet.errors import NotDefiniteOutcome
from qcapnet.mirror_sampler import (
    SamplerConfig, mirror_from_half, sample_central_pauli, sample_mixed_layer, sample_randomized_mirror_circuit,
)
from qcapnet.stabilizer_engine import (
    PauliString, StabilizerTableau, apply_layer, final_state, ideal_states, pauli_expectation, propagate_pauli,
    sensitivity_channels, success_bitstring,
)

XP, XM = Gate("Xp"), Gate("Xm")
ALL3 = ["".join(p) for p in itertools.product("IXYZ", repeat=3)]


def one(gates):
    dev = line_device(1)
    return Circuit(dev, (0,), tuple((g,) for g in gates))


def test_pauli_algebra():
    x, y, z = (PauliString.from_label(c) for c in "XYZ")
    assert x * y == PauliString.from_label("iZ")
    assert y * x == PauliString.from_label("-iZ")
    assert not x.commutes(z)
    assert PauliString.from_label("XX").commutes(PauliString.from_label("ZZ"))
    assert PauliString.identity(2).label() == "+II"


def test_idle_layer_leaves_tableau_unchanged():
    t = StabilizerTableau.zero_state(3)
    assert apply_layer(t, (IDLE_GATE,) * 3) == t


def test_xp_then_xm_returns_to_initial():
    t = StabilizerTableau.zero_state(1)
    assert apply_layer(apply_layer(t, (XP,)), (XM,)) == t


def test_zero_state_expectations():
    t = StabilizerTableau.zero_state(1)
    assert pauli_expectation(t, PauliString.from_label("Z")) == 1
    assert pauli_expectation(t, PauliString.from_label("X")) == 0


def test_xp_state_has_negative_y():
    # Xp|0> = (|0> - i|1>)/sqrt 2
    t = apply_layer(StabilizerTableau.zero_state(1), (XP,))
    assert pauli_expectation(t, PauliString.from_label("Y")) == -1
    psi = oracles.one_qubit_unitary("Xp") @ np.array([1, 0])
    assert oracles.expectation(psi, "Y") == pytest.approx(-1)


def test_non_hermitian_pauli_rejected():
    with pytest.raises(ValueError):
        pauli_expectation(StabilizerTableau.zero_state(1), PauliString.from_label("iZ"))


@pytest.mark.parametrize("n", [1, 2, 3])
def test_tableau_matches_statevector_exactly(n):
    """Every Pauli expectation after every layer, 1000 random circuits in total."""
    dev = line_device(n)
    rng = np.random.default_rng(100 + n)
    labels = ["".join(p) for p in itertools.product("IXYZ", repeat=n)]
    ops = {lab: oracles.pauli_op(lab) for lab in labels}
    count = {1: 300, 2: 350, 3: 350}[n]
    for _ in range(count):
        c = random_circuit(dev, range(n), int(rng.integers(1, 7)), rng)
        psi = np.zeros(2**n, dtype=complex)
        psi[0] = 1
        for j, tab in enumerate(ideal_states(c)):
            assert tab.is_valid()
            psi = oracles.layer_unitary(c.layers[j], c.qubits) @ psi
            for lab in labels:
                want = np.real(np.vdot(psi, ops[lab] @ psi))
                got = pauli_expectation(tab, PauliString.from_label(lab))
                assert abs(got - want) < 1e-9, (lab, got, want)


def test_success_bitstring_basics():
    assert success_bitstring(Circuit(line_device(2), (0, 1), ())) == (0, 0)
    assert success_bitstring(one([XP, XP])) == (1,)
    with pytest.raises(NotDefiniteOutcome):
        success_bitstring(one([XP]))


def test_propagate_empty_suffix_and_single_gates():
    c = one([XP])
    z = PauliString.from_label("Z")
    assert propagate_pauli(c, z, 1) == z
    out = propagate_pauli(c, z, 0)
    assert out.label()[-1] == "Y"
    # cross-check the sign with 2x2 matrices: U Z U^dagger
    u = oracles.one_qubit_unitary("Xp")
    sign = -1 if out.phase == 2 else 1
    assert np.allclose(u @ oracles.Z @ u.conj().T, sign * oracles.Y)


def test_x_on_control_spreads_through_cnot():
    dev = line_device(2)
    c = Circuit(dev, (0, 1), ((Gate(CTRL, partner=1), Gate(TARG, partner=0)),))
    assert propagate_pauli(c, PauliString.from_label("XI"), 0) == PauliString.from_label("XX")
    assert propagate_pauli(c, PauliString.from_label("IZ"), 0) == PauliString.from_label("ZZ")


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_propagation_matches_conjugation(seed):
    rng = np.random.default_rng(seed)
    dev = line_device(3)
    c = random_circuit(dev, range(3), int(rng.integers(1, 5)), rng)
    lab = ALL3[int(rng.integers(1, 64))]
    j = int(rng.integers(0, c.depth + 1))
    out = propagate_pauli(c, PauliString.from_label(lab), j)
    u = np.eye(8, dtype=complex)
    for layer in c.layers[j:]:
        u = oracles.layer_unitary(layer, c.qubits) @ u
    want = u @ oracles.pauli_op(lab) @ u.conj().T
    got = (1j ** out.phase) * oracles.pauli_op(out.label().lstrip("+-i"))
    assert np.allclose(want, got)


def test_sensitivity_idle_circuit():
    c = Circuit(line_device(2), (0, 1), ((IDLE_GATE, IDLE_GATE),) * 3)
    s = sensitivity_channels(c)
    assert s.shape == (2, 3, 3)
    assert (s[..., 2] == 0).all() and (s[..., :2] == 1).all()


def test_sensitivity_after_xp():
    s = sensitivity_channels(one([XP]))
    assert s[0, 0].tolist() == [1, 0, 1]


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_sensitivity_matches_statevector_threshold(seed):
    rng = np.random.default_rng(seed)
    c = random_circuit(line_device(3), range(3), int(rng.integers(1, 6)), rng)
    s = sensitivity_channels(c)
    for j in range(c.depth):
        psi = oracles.statevector(c, j + 1)
        for i in range(3):
            for a, p in enumerate("XYZ"):
                lab = "".join(p if k == i else "I" for k in range(3))
                assert s[i, j, a] == int(abs(oracles.expectation(psi, lab)) < 0.5)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), width=st.integers(1, 5), half=st.integers(1, 6))
def test_success_bits_come_from_central_pauli(seed, width, half):
    """The success string is the X part of the central Pauli pushed through the inverse half."""
    rng = np.random.default_rng(seed)
    dev = t_topology()
    from qcapnet.mirror_sampler import random_connected_subset

    qubits = random_connected_subset(dev, width, rng)
    forward_half = [sample_mixed_layer(dev, qubits, 0.5, rng) for _ in range(half)]
    central = sample_central_pauli(forward_half[-1], rng)
    c = mirror_from_half(dev, qubits, forward_half, central)
    plain = mirror_from_half(dev, qubits, forward_half, "I" * width)
    assert success_bitstring(plain) == (0,) * width
    # the central Pauli sits between the halves of the plain mirror circuit
    pushed = propagate_pauli(plain, PauliString.from_label(central), half)
    assert success_bitstring(c) == tuple(int(b) for b in pushed.x)


def test_final_state_of_sampled_mirror_is_definite(rng):
    for _ in range(200):
        cfg = SamplerConfig(int(rng.integers(1, 6)), 2 * int(rng.integers(1, 9)), float(rng.random()))
        c = sample_randomized_mirror_circuit(cfg, t_topology(), rng)
        tab = final_state(c)
        assert not tab.x[tab.n:].any()
        success_bitstring(c)
