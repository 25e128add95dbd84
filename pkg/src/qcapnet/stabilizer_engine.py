"""Stabilizer-tableau simulation of the Clifford circuits in the IR.

Tableau layout follows Aaronson and Gottesman: rows ``0..n-1`` hold the
destabilizers, rows ``n..2n-1`` the stabilizers, and every row is a Hermitian
Pauli string with a sign bit.  Per qubit, ``(x, z) = (1, 1)`` denotes ``Y``
(not ``XZ``), which is the convention the CHP update rules assume.

Every gate of the simulated gate set is a short word in H and S, so the
engine only implements H, S and CNOT and compiles circuits into layers of
those primitives.  Within a layer the primitives act on distinct qubits and
are applied column-vectorised.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .device_circuit import CTRL, IDLE, XM, XP, ZROT, Circuit, Gate
from .errors import NotDefiniteOutcome

# H/S words implementing each single-qubit gate up to a global phase.
_WORDS = {
    (ZROT, 0): "",
    (ZROT, 1): "S",
    (ZROT, 2): "SS",
    (ZROT, -1): "SSS",
    (XP, None): "HSH",
    (XM, None): "HSSSH",
    (IDLE, None): "",
}

PAULI_INDEX = {"X": 0, "Y": 1, "Z": 2}


def gate_word(g: Gate) -> str:
    return _WORDS.get((g.kind, g.quarter), "")


@dataclass(frozen=True)
class LayerProgram:
    """One circuit layer compiled to vectorisable primitive steps.

    ``steps`` is a sequence of ``(h_cols, s_cols)`` index arrays applied in
    order; CNOTs (on disjoint qubit pairs) are applied after them.
    """

    steps: tuple
    controls: np.ndarray
    targets: np.ndarray


def compile_layer(layer, qubits) -> LayerProgram:
    pos = {q: i for i, q in enumerate(qubits)}
    words = [gate_word(g) if not g.is_cnot else "" for g in layer]
    nsteps = max((len(w) for w in words), default=0)
    steps = []
    for t in range(nsteps):
        h = [i for i, w in enumerate(words) if len(w) > t and w[t] == "H"]
        s = [i for i, w in enumerate(words) if len(w) > t and w[t] == "S"]
        steps.append((np.array(h, dtype=np.intp), np.array(s, dtype=np.intp)))
    ctrl = [i for i, g in enumerate(layer) if g.kind == CTRL]
    targ = [pos[layer[i].partner] for i in ctrl]
    return LayerProgram(tuple(steps), np.array(ctrl, dtype=np.intp), np.array(targ, dtype=np.intp))


@lru_cache(maxsize=8192)
def _compile_cached(layers, qubits):
    return tuple(compile_layer(layer, qubits) for layer in layers)


def compile_circuit(circuit: Circuit) -> tuple:
    return _compile_cached(circuit.layers, circuit.qubits)


# -- primitive updates on (x, z, r) row arrays --------------------------------

def _h(x, z, r, cols):
    if cols.size == 0:
        return
    xc, zc = x[:, cols], z[:, cols]
    r ^= np.bitwise_xor.reduce(xc & zc, axis=1)
    x[:, cols], z[:, cols] = zc, xc


def _s(x, z, r, cols):
    if cols.size == 0:
        return
    xc = x[:, cols]
    r ^= np.bitwise_xor.reduce(xc & z[:, cols], axis=1)
    z[:, cols] ^= xc


def _cnot(x, z, r, c, t):
    if c.size == 0:
        return
    xc, zc, xt, zt = x[:, c], z[:, c], x[:, t], z[:, t]
    r ^= np.bitwise_xor.reduce(xc & zt & ~(xt ^ zc), axis=1)
    x[:, t] = xt ^ xc
    z[:, c] = zc ^ zt


def run_program(prog: LayerProgram, x, z, r):
    for h, s in prog.steps:
        _h(x, z, r, h)
        _s(x, z, r, s)
    _cnot(x, z, r, prog.controls, prog.targets)


def _g(x1, z1, x2, z2):
    """Exponent of i picked up when multiplying single-qubit Paulis (Y convention)."""
    x1, z1, x2, z2 = (np.asarray(a, dtype=np.int64) for a in (x1, z1, x2, z2))
    return np.where(
        (x1 == 0) & (z1 == 0), 0,
        np.where((x1 == 1) & (z1 == 1), z2 - x2,
                 np.where(x1 == 1, z2 * (2 * x2 - 1), x2 * (1 - 2 * z2))))


@dataclass(frozen=True)
class PauliString:
    """``i**phase`` times a tensor product of I/X/Y/Z."""

    x: np.ndarray
    z: np.ndarray
    phase: int = 0

    def __post_init__(self):
        object.__setattr__(self, "x", np.asarray(self.x, dtype=bool).copy())
        object.__setattr__(self, "z", np.asarray(self.z, dtype=bool).copy())
        object.__setattr__(self, "phase", int(self.phase) % 4)
        if self.x.shape != self.z.shape:
            raise ValueError("x and z bit vectors differ in length")

    @property
    def n(self) -> int:
        return self.x.size

    @classmethod
    def from_label(cls, label: str) -> "PauliString":
        phase = 0
        for prefix, k in (("+i", 1), ("-i", 3), ("+", 0), ("-", 2), ("i", 1)):
            if label.startswith(prefix):
                phase, label = k, label[len(prefix):]
                break
        x = [c in "XY" for c in label]
        z = [c in "ZY" for c in label]
        if any(c not in "IXYZ" for c in label):
            raise ValueError(f"bad Pauli label {label!r}")
        return cls(np.array(x), np.array(z), phase)

    @classmethod
    def single(cls, n: int, qubit: int, pauli: str) -> "PauliString":
        lab = ["I"] * n
        lab[qubit] = pauli
        return cls.from_label("".join(lab))

    @classmethod
    def identity(cls, n: int) -> "PauliString":
        return cls(np.zeros(n, bool), np.zeros(n, bool), 0)

    def label(self) -> str:
        sign = {0: "+", 1: "+i", 2: "-", 3: "-i"}[self.phase]
        chars = "".join("IZXY"[int(a) * 2 + int(b)] for a, b in zip(self.x, self.z))
        return sign + chars

    def __mul__(self, other: "PauliString") -> "PauliString":
        k = self.phase + other.phase + int(_g(self.x, self.z, other.x, other.z).sum())
        return PauliString(self.x ^ other.x, self.z ^ other.z, k)

    def commutes(self, other: "PauliString") -> bool:
        return not (np.count_nonzero(self.x & other.z) + np.count_nonzero(self.z & other.x)) % 2

    def __eq__(self, other):
        return (isinstance(other, PauliString) and self.phase == other.phase
                and np.array_equal(self.x, other.x) and np.array_equal(self.z, other.z))

    def __hash__(self):
        return hash((self.x.tobytes(), self.z.tobytes(), self.phase))

    def __repr__(self):
        return f"PauliString({self.label()!r})"


class StabilizerTableau:
    """Pure n-qubit stabilizer state.  Public operations return new tableaus."""

    def __init__(self, x, z, r):
        self.x = x
        self.z = z
        self.r = r

    @classmethod
    def zero_state(cls, n: int) -> "StabilizerTableau":
        eye = np.eye(n, dtype=bool)
        zeros = np.zeros((n, n), dtype=bool)
        return cls(np.vstack([eye, zeros]), np.vstack([zeros, eye]), np.zeros(2 * n, dtype=bool))

    @property
    def n(self) -> int:
        return self.x.shape[1]

    def copy(self) -> "StabilizerTableau":
        return StabilizerTableau(self.x.copy(), self.z.copy(), self.r.copy())

    def row(self, i: int) -> PauliString:
        return PauliString(self.x[i], self.z[i], 2 * int(self.r[i]))

    def stabilizers(self) -> list[PauliString]:
        return [self.row(i) for i in range(self.n, 2 * self.n)]

    def destabilizers(self) -> list[PauliString]:
        return [self.row(i) for i in range(self.n)]

    def __eq__(self, other):
        return (isinstance(other, StabilizerTableau) and np.array_equal(self.x, other.x)
                and np.array_equal(self.z, other.z) and np.array_equal(self.r, other.r))

    def is_valid(self) -> bool:
        """Symplectic form between rows is the standard one."""
        n = self.n
        xi, zi = self.x.astype(np.int64), self.z.astype(np.int64)
        omega = (xi @ zi.T + zi @ xi.T) % 2
        want = np.zeros((2 * n, 2 * n), dtype=np.int64)
        want[:n, n:] = np.eye(n, dtype=np.int64)
        want[n:, :n] = np.eye(n, dtype=np.int64)
        return np.array_equal(omega, want)

    def _apply_inplace(self, prog: LayerProgram):
        run_program(prog, self.x, self.z, self.r)

    # sensitivity is fully determined by which single-qubit Paulis commute
    # with every stabilizer generator
    def insensitive(self) -> np.ndarray:
        """(n, 3) bool: True where the state is an eigenstate of X_i, Y_i, Z_i."""
        n = self.n
        sx, sz = self.x[n:], self.z[n:]
        out = np.empty((n, 3), dtype=bool)
        out[:, 0] = ~sz.any(axis=0)
        out[:, 1] = ~(sx ^ sz).any(axis=0)
        out[:, 2] = ~sx.any(axis=0)
        return out


def apply_layer(tableau: StabilizerTableau, layer, qubits=None) -> StabilizerTableau:
    """Tableau for ``U(layer)|psi>``; ``qubits`` maps layer slots to tableau columns."""
    if qubits is None:
        qubits = tuple(range(tableau.n))
    out = tableau.copy()
    out._apply_inplace(compile_layer(tuple(layer), tuple(qubits)))
    return out


def pauli_expectation(tableau: StabilizerTableau, pauli: PauliString) -> int:
    """<psi|P|psi> for a Hermitian Pauli P; always one of -1, 0, +1."""
    if pauli.phase % 2:
        raise ValueError("expectation requested for a non-Hermitian Pauli")
    n = tableau.n
    if pauli.n != n:
        raise ValueError(f"Pauli acts on {pauli.n} qubits, state has {n}")
    px, pz = pauli.x, pauli.z
    anti = (np.count_nonzero(tableau.x & pz, axis=1) + np.count_nonzero(tableau.z & px, axis=1)) % 2
    if anti[n:].any():
        return 0
    prod = PauliString.identity(n)
    for k in np.flatnonzero(anti[:n]):
        prod = prod * tableau.row(n + k)
    # prod equals +-P as an operator; prod|psi> = |psi>
    diff = (pauli.phase - prod.phase) % 4
    return 1 if diff == 0 else -1


def ideal_states(circuit: Circuit):
    """Yield the tableau after each layer (shared, mutated in place)."""
    tab = StabilizerTableau.zero_state(circuit.width)
    for prog in compile_circuit(circuit):
        tab._apply_inplace(prog)
        yield tab


def final_state(circuit: Circuit) -> StabilizerTableau:
    tab = StabilizerTableau.zero_state(circuit.width)
    for prog in compile_circuit(circuit):
        tab._apply_inplace(prog)
    return tab


def success_bitstring(circuit: Circuit) -> tuple:
    """Ideal output bit per active qubit; raises if the outcome is not definite."""
    tab = final_state(circuit)
    bits = []
    for i in range(circuit.width):
        e = pauli_expectation(tab, PauliString.single(circuit.width, i, "Z"))
        if e == 0:
            raise NotDefiniteOutcome(f"qubit {circuit.qubits[i]} has <Z> = 0 at the end of the circuit")
        bits.append((1 - e) // 2)
    return tuple(bits)


def is_definite_outcome(circuit: Circuit) -> bool:
    tab = final_state(circuit)
    return not tab.x[tab.n:].any()


def propagate_pauli(circuit: Circuit, pauli: PauliString, from_layer: int) -> PauliString:
    """``C_rest P C_rest^dagger`` where ``C_rest`` is layers ``from_layer+1..d`` (1-based)."""
    if not 0 <= from_layer <= circuit.depth:
        raise ValueError(f"from_layer must lie in [0, {circuit.depth}]")
    x = pauli.x.copy()[None, :]
    z = pauli.z.copy()[None, :]
    r = np.zeros(1, dtype=bool)
    for prog in compile_circuit(circuit)[from_layer:]:
        run_program(prog, x, z, r)
    return PauliString(x[0], z[0], pauli.phase + 2 * int(r[0]))


def sensitivity_channels(circuit: Circuit) -> np.ndarray:
    """(w, d, 3) uint8 tensor; entry is 1 unless the state after layer j is a
    (+-1) eigenstate of the Pauli on qubit i.  Last axis is X, Y, Z."""
    out = np.empty((circuit.width, circuit.depth, 3), dtype=np.uint8)
    for j, tab in enumerate(ideal_states(circuit)):
        out[:, j, :] = ~tab.insensitive()
    return out
