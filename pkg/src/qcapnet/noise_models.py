"""Error models: local Pauli stochastic, its two non-Markovian modulations and
local coherent rotations.

Rate tables are keyed by gate and qubit.  Single-qubit keys are
``(kind, qubit)`` with ``kind`` in ``Z``, ``Xp``, ``Xm`` (every Z angle shares
one rate triple); CNOT keys are ``("CNOT", control, target)`` and hold a
``(2, 3)`` array, row 0 for the control and row 1 for the target.  Columns
are the X, Y and Z error probabilities.  Idle and Z(0) are error-free.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .device_circuit import CTRL, ONE_QUBIT_KINDS, TARG, Circuit, DeviceGraph, Gate
from .errors import MissingRate, ModelKindMismatch, RateOutOfRange, SchemaError, UnsupportedVersion

CNOT = "CNOT"
PAULIS = "XYZ"
FORMAT_VERSION = 1

TWO_QUBIT_PAULIS = tuple(a + b for a in "IXYZ" for b in "IXYZ" if a + b != "II")


def gate_key(gate: Gate, qubit: int):
    """Rate-table key for ``gate`` acting on ``qubit``, plus the row for CNOT halves."""
    if gate.kind == CTRL:
        return (CNOT, qubit, gate.partner), 0
    if gate.kind == TARG:
        return (CNOT, gate.partner, qubit), 1
    return (gate.kind, qubit), None


def _key_to_str(key) -> str:
    return ":".join(str(k) for k in key)


def _key_from_str(text: str):
    parts = text.split(":")
    if parts[0] == CNOT and len(parts) == 3:
        return (CNOT, int(parts[1]), int(parts[2]))
    if parts[0] in ONE_QUBIT_KINDS and len(parts) == 2:
        return (parts[0], int(parts[1]))
    raise SchemaError(f"bad rate key {text!r}")


@dataclass
class LpsRates:
    n: int
    gates: dict = field(default_factory=dict)
    readout: np.ndarray | None = None

    def __post_init__(self):
        if self.readout is None:
            self.readout = np.zeros(self.n)
        self.readout = np.asarray(self.readout, dtype=float)
        self.gates = {k: np.asarray(v, dtype=float) for k, v in self.gates.items()}
        self.check()

    def check(self) -> None:
        for key, v in self.gates.items():
            if np.any(v < 0) or np.any(v >= 1) or np.any(v.reshape(-1, 3).sum(axis=1) >= 1):
                raise RateOutOfRange(f"rates for {key} outside [0, 1): {v.tolist()}")
        if self.readout.shape != (self.n,) or np.any(self.readout < 0) or np.any(self.readout >= 1):
            raise RateOutOfRange("readout rates must be n values in [0, 1)")

    def rate(self, gate: Gate, qubit: int) -> np.ndarray:
        """(X, Y, Z) error probabilities for ``gate`` on ``qubit``."""
        if gate.is_noop:
            return np.zeros(3)
        key, row = gate_key(gate, qubit)
        try:
            v = self.gates[key]
        except KeyError:
            raise MissingRate(f"no error rates for {key}") from None
        return v if row is None else v[row]

    def parameter_count(self) -> int:
        return int(sum(v.size for v in self.gates.values()) + self.readout.size)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "gates": {_key_to_str(k): v.tolist() for k, v in sorted(self.gates.items(), key=lambda kv: _key_to_str(kv[0]))},
            "readout": self.readout.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "LpsRates":
        try:
            gates = {_key_from_str(k): np.asarray(v, dtype=float) for k, v in data["gates"].items()}
            return cls(int(data["n"]), gates, np.asarray(data["readout"], dtype=float))
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"malformed rate table: {exc}") from exc


class ErrorModel:
    kind = "abstract"
    stochastic = True

    def base(self) -> LpsRates:
        raise ModelKindMismatch(f"{self.kind} model has no Pauli rates")

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass
class LocalPauliStochastic(ErrorModel):
    rates: LpsRates
    kind = "lps"

    def base(self) -> LpsRates:
        return self.rates

    def modulate(self, circuit: Circuit, base: np.ndarray) -> np.ndarray:
        return base

    def params(self) -> dict:
        return {}

    def to_dict(self) -> dict:
        return {"variant": self.kind, "rates": self.rates.to_dict(), **self.params()}


@dataclass
class GrowingPains(LocalPauliStochastic):
    max_ratio: float = 9.0
    tau: float = 1.0 / 350.0
    kind = "growing_pains"

    def __post_init__(self):
        if self.max_ratio <= 1 or self.tau <= 0:
            raise RateOutOfRange("growing pains needs max_ratio > 1 and tau > 0")

    def factor(self, layer: np.ndarray | int) -> np.ndarray:
        # divided through by exp(l tau) so large layer indices cannot overflow
        u = np.exp(-np.asarray(layer, dtype=float) * self.tau)
        return (2.0 * u + self.max_ratio * (1.0 - u)) / (1.0 + u)

    def modulate(self, circuit, base):
        return base * self.factor(np.arange(base.shape[1]))[None, :, None]

    def params(self):
        return {"max_ratio": self.max_ratio, "tau": self.tau}


def consecutive_cnot_mask(circuit: Circuit) -> np.ndarray:
    """(w, d) bool: CNOT at (i, l) and at (i, l-1)."""
    cn = np.array([[g.is_cnot for g in layer] for layer in circuit.layers], dtype=bool).reshape(circuit.depth, circuit.width).T
    out = np.zeros_like(cn)
    out[:, 1:] = cn[:, 1:] & cn[:, :-1]
    return out


@dataclass
class DoubleTrouble(LocalPauliStochastic):
    eps_add: float = 0.005
    kind = "double_trouble"

    def __post_init__(self):
        if not 0 <= self.eps_add < 1:
            raise RateOutOfRange("eps_add must lie in [0, 1)")

    def modulate(self, circuit, base):
        mask = consecutive_cnot_mask(circuit)[:, :, None]
        return np.where(mask, 1.0 - (1.0 - base) * (1.0 - self.eps_add), base)

    def params(self):
        return {"eps_add": self.eps_add}


@dataclass
class CoherentLocal(ErrorModel):
    """Per (gate, qubit[s]) a Pauli axis and rotation angle; error exp(-i angle P / 2)."""

    n: int
    rotations: dict = field(default_factory=dict)
    kind = "coherent"
    stochastic = False

    def __post_init__(self):
        for key, (axis, angle) in self.rotations.items():
            if not -math.pi < angle <= math.pi:
                raise RateOutOfRange(f"coherent angle for {key} outside (-pi, pi]")
            if len(axis) != (2 if key[0] == CNOT else 1) or set(axis) - set("IXYZ"):
                raise SchemaError(f"bad Pauli axis {axis!r} for {key}")

    def rotation(self, gate: Gate, qubit: int):
        """(axis, angle) for the gate whose control or single qubit is ``qubit``."""
        if gate.is_noop or gate.kind == TARG:
            return None
        key, _ = gate_key(gate, qubit)
        try:
            return self.rotations[key]
        except KeyError:
            raise MissingRate(f"no coherent error for {key}") from None

    def to_dict(self) -> dict:
        return {
            "variant": self.kind,
            "n": self.n,
            "rotations": {_key_to_str(k): [a, float(t)] for k, (a, t) in sorted(self.rotations.items(), key=lambda kv: _key_to_str(kv[0]))},
        }


def location_rates(model: ErrorModel, circuit: Circuit) -> np.ndarray:
    """(w, d, 3) effective X/Y/Z error probabilities at every circuit location."""
    if not model.stochastic:
        raise ModelKindMismatch("coherent models have no Pauli error rates")
    rates = model.base()
    out = np.zeros((circuit.width, circuit.depth, 3))
    for j, layer in enumerate(circuit.layers):
        for i, (q, g) in enumerate(zip(circuit.qubits, layer)):
            if not g.is_noop:
                out[i, j] = rates.rate(g, q)
    return model.modulate(circuit, out)


def readout_rates(model: ErrorModel, circuit: Circuit) -> np.ndarray:
    return model.base().readout[list(circuit.qubits)]


def effective_rate(model: ErrorModel, pauli: str, gate: Gate, qubit: int, layer_index: int, circuit: Circuit | None = None) -> float:
    """Probability of a ``pauli`` error on ``qubit`` after ``gate`` in layer ``layer_index``."""
    if layer_index < 0 or (circuit is not None and layer_index >= circuit.depth):
        raise IndexError(f"layer index {layer_index} out of range")
    eps = float(model.base().rate(gate, qubit)[PAULIS.index(pauli)])
    if isinstance(model, GrowingPains):
        return float(eps * model.factor(layer_index))
    if isinstance(model, DoubleTrouble):
        if circuit is None:
            raise ValueError("double trouble rates depend on the circuit")
        if layer_index > 0 and gate.is_cnot and circuit.layers[layer_index - 1][circuit.index_of(qubit)].is_cnot:
            return 1.0 - (1.0 - eps) * (1.0 - model.eps_add)
    return eps


# -- samplers -----------------------------------------------------------------

def _gate_keys(device: DeviceGraph):
    one = [(k, q) for q in range(device.n) for k in ONE_QUBIT_KINDS]
    two = [(CNOT, c, t) for c, t in sorted(device.edges)]
    return one, two


def sample_biased_lps(device: DeviceGraph, rng, max_1q: float = 0.0025, max_2q: float = 0.01) -> LocalPauliStochastic:
    """Each (gate, qubit) gets one random Pauli axis with rate ``u * max``."""
    one, two = _gate_keys(device)
    gates = {}
    for key in one:
        v = np.zeros(3)
        v[rng.integers(3)] = rng.random() * max_1q
        gates[key] = v
    for key in two:
        v = np.zeros((2, 3))
        for row in range(2):
            v[row, rng.integers(3)] = rng.random() * max_2q
        gates[key] = v
    return LocalPauliStochastic(LpsRates(device.n, gates, np.zeros(device.n)))


def sample_uniform_lps(device: DeviceGraph, rng, hi: float = 1e-4) -> LocalPauliStochastic:
    """Every (gate, qubit, Pauli) rate drawn from U[0, hi]; readout rates equal ``hi``."""
    one, two = _gate_keys(device)
    gates = {key: rng.random(3) * hi for key in one}
    gates.update({key: rng.random((2, 3)) * hi for key in two})
    return LocalPauliStochastic(LpsRates(device.n, gates, np.full(device.n, float(hi))))


def coherent_angle(target_infidelity: float) -> float:
    """Rotation angle whose single-Pauli rotation has process infidelity ``target_infidelity``."""
    return 2.0 * math.asin(math.sqrt(target_infidelity))


def sample_coherent_model(device: DeviceGraph, rng, target_infidelity: float = 0.05) -> CoherentLocal:
    if not 0 <= target_infidelity < 1:
        raise RateOutOfRange("target infidelity must lie in [0, 1)")
    theta = coherent_angle(target_infidelity)
    one, two = _gate_keys(device)
    rot = {key: (PAULIS[rng.integers(3)], theta) for key in one}
    rot.update({key: (TWO_QUBIT_PAULIS[rng.integers(len(TWO_QUBIT_PAULIS))], theta) for key in two})
    return CoherentLocal(device.n, rot)


# -- serialization ------------------------------------------------------------

def model_from_dict(data: dict) -> ErrorModel:
    if data.get("version", FORMAT_VERSION) != FORMAT_VERSION:
        raise UnsupportedVersion(f"error model format version {data.get('version')} not supported")
    variant = data.get("variant")
    try:
        if variant == "coherent":
            rot = {_key_from_str(k): (str(a), float(t)) for k, (a, t) in data["rotations"].items()}
            return CoherentLocal(int(data["n"]), rot)
        rates = LpsRates.from_dict(data["rates"])
        if variant == "lps":
            return LocalPauliStochastic(rates)
        if variant == "growing_pains":
            return GrowingPains(rates, float(data["max_ratio"]), float(data["tau"]))
        if variant == "double_trouble":
            return DoubleTrouble(rates, float(data["eps_add"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"malformed error model: {exc}") from exc
    raise SchemaError(f"unknown error model variant {variant!r}")


def dumps_model(model: ErrorModel, provenance: dict | None = None) -> str:
    data = {"version": FORMAT_VERSION, **model.to_dict()}
    if provenance:
        data["provenance"] = provenance
    return json.dumps(data, indent=1, sort_keys=True) + "\n"


def save_error_model(model: ErrorModel, path, provenance: dict | None = None) -> None:
    with open(path, "w") as fh:
        fh.write(dumps_model(model, provenance))


def load_error_model(path) -> ErrorModel:
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}: not valid JSON ({exc})") from exc
    return model_from_dict(data)
