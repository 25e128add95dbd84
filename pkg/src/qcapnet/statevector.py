"""Dense statevector simulation for small widths (coherent-error labelling)."""
from __future__ import annotations

import numpy as np

from .device_circuit import CTRL, IDLE, TARG, XM, XP, ZROT, Gate

MAX_WIDTH = 12

PAULI_MATRICES = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}

CNOT_MATRIX = np.array(
    [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex
)  # basis |control target>


def gate_matrix(g: Gate) -> np.ndarray:
    """2x2 unitary of a single-qubit gate."""
    if g.kind == ZROT:
        return np.diag([1.0, np.exp(1j * g.theta)]).astype(complex)
    if g.kind == XP:
        return (PAULI_MATRICES["I"] - 1j * PAULI_MATRICES["X"]) / np.sqrt(2)
    if g.kind == XM:
        return (PAULI_MATRICES["I"] + 1j * PAULI_MATRICES["X"]) / np.sqrt(2)
    if g.kind == IDLE:
        return PAULI_MATRICES["I"].copy()
    raise ValueError(f"{g.kind} is not a single-qubit gate")


def pauli_matrix(label: str) -> np.ndarray:
    out = np.ones((1, 1), dtype=complex)
    for c in label:
        out = np.kron(out, PAULI_MATRICES[c])
    return out


def pauli_rotation(label: str, angle: float) -> np.ndarray:
    """exp(-i angle P / 2) for a Pauli string P."""
    p = pauli_matrix(label)
    return np.cos(angle / 2) * np.eye(p.shape[0]) - 1j * np.sin(angle / 2) * p


def zero_state(w: int) -> np.ndarray:
    psi = np.zeros((2,) * w, dtype=complex)
    psi[(0,) * w] = 1.0
    return psi


def apply_matrix(psi: np.ndarray, mat: np.ndarray, axes) -> np.ndarray:
    """Apply a k-qubit matrix to tensor-shaped ``psi`` on the given axes (in order)."""
    k = len(axes)
    m = mat.reshape((2,) * (2 * k))
    out = np.tensordot(m, psi, axes=(list(range(k, 2 * k)), list(axes)))
    return np.moveaxis(out, list(range(k)), list(axes))


def apply_gate_layer(psi: np.ndarray, layer, qubits) -> np.ndarray:
    pos = {q: i for i, q in enumerate(qubits)}
    for i, g in enumerate(layer):
        if g.kind == CTRL:
            psi = apply_matrix(psi, CNOT_MATRIX, (i, pos[g.partner]))
        elif g.kind == TARG:
            continue
        elif not g.is_noop:
            psi = apply_matrix(psi, gate_matrix(g), (i,))
    return psi


def run_circuit(circuit, error_hook=None) -> np.ndarray:
    """Final state tensor; ``error_hook(psi, j)`` may modify the state after layer j."""
    if circuit.width > MAX_WIDTH:
        from .errors import WidthExceeded

        raise WidthExceeded(f"statevector simulation supports at most {MAX_WIDTH} qubits, got {circuit.width}")
    psi = zero_state(circuit.width)
    for j, layer in enumerate(circuit.layers):
        psi = apply_gate_layer(psi, layer, circuit.qubits)
        if error_hook is not None:
            psi = error_hook(psi, j)
    return psi


def expectation(psi: np.ndarray, label: str) -> float:
    vec = psi.reshape(-1)
    return float(np.real(np.vdot(vec, pauli_matrix(label) @ vec)))
