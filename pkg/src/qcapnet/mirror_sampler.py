"""Randomized and periodic mirror-circuit samplers.

A sampled layer mixes single-qubit gates with CNOTs: qubits covered by a
CNOT of the two-qubit layer take the CNOT, every other qubit takes its
sampled single-qubit gate.  A mirror circuit is ``d/2`` such layers, then
their exact inverse in reverse order.  A uniformly random Pauli sits between
the halves; it is merged into the first inverse layer so the depth stays
exactly ``d``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .device_circuit import CTRL, G1, IDLE_GATE, TARG, XM, XP, ZROT, Circuit, DeviceGraph, Gate, zrot
from .errors import ConfigError

RANDOMIZED = "randomized"
PERIODIC = "periodic"

_ENUMERATION_LIMIT = 16


@dataclass(frozen=True)
class SamplerConfig:
    width: int
    depth: int
    xi: float = 0.25
    qubit_subset: tuple | None = None  # None means "random connected subset"
    kind: str = RANDOMIZED
    germ_length: int | None = None
    seed: int | None = None

    def check(self, device: DeviceGraph) -> None:
        if not 1 <= self.width <= device.n:
            raise ConfigError(f"width {self.width} outside 1..{device.n}")
        if self.depth < 2 or self.depth % 2:
            raise ConfigError(f"depth must be even and at least 2, got {self.depth}")
        if not 0.0 <= self.xi <= 1.0:
            raise ConfigError(f"xi must lie in [0, 1], got {self.xi}")
        if self.qubit_subset is not None:
            if len(set(self.qubit_subset)) != self.width:
                raise ConfigError("qubit_subset size does not match width")
            if not device.is_connected(self.qubit_subset):
                raise ConfigError(f"qubit subset {self.qubit_subset} is not connected")
        if self.kind == PERIODIC:
            g = self.germ_length
            if g is None or g < 1 or (self.depth // 2) % g:
                raise ConfigError(f"germ_length {g} must divide depth/2 = {self.depth // 2}")
        elif self.kind != RANDOMIZED:
            raise ConfigError(f"unknown circuit kind {self.kind!r}")


def random_connected_subset(device: DeviceGraph, w: int, rng) -> tuple:
    """Grow a connected subset from a random seed qubit by random frontier picks."""
    start = int(rng.integers(device.n))
    chosen = [start]
    while len(chosen) < w:
        frontier = sorted({p for q in chosen for p in device.neighbors(q)} - set(chosen))
        if not frontier:
            raise ConfigError(f"device has no connected subset of size {w}")
        chosen.append(int(frontier[rng.integers(len(frontier))]))
    return tuple(sorted(chosen))


def _subset_edges(device: DeviceGraph, qubits) -> tuple:
    qs = set(qubits)
    return tuple(e for e in device.undirected_edges() if e[0] in qs and e[1] in qs)


@lru_cache(maxsize=1024)
def _maximal_matchings(edges: tuple) -> tuple:
    out = []
    for r in range(len(edges), 0, -1):
        for combo in itertools.combinations(edges, r):
            used = [q for e in combo for q in e]
            if len(used) != len(set(used)):
                continue
            covered = set(used)
            if all(a in covered or b in covered for a, b in edges):
                out.append(combo)
    return tuple(out) if out else ((),)


def _greedy_matching(edges, rng) -> tuple:
    used, out = set(), []
    for k in rng.permutation(len(edges)):
        a, b = edges[k]
        if a not in used and b not in used:
            used.update((a, b))
            out.append((a, b))
    return tuple(out)


@lru_cache(maxsize=1024)
def expected_matching_size(edges: tuple) -> float:
    if not edges:
        return 0.0
    if len(edges) <= _ENUMERATION_LIMIT:
        return float(np.mean([len(m) for m in _maximal_matchings(edges)]))
    # fixed internal stream so calibration is a pure function of the subset
    rng = np.random.default_rng(20230101)
    return float(np.mean([len(_greedy_matching(edges, rng)) for _ in range(4000)]))


def edge_keep_probability(device: DeviceGraph, qubits, xi: float) -> float:
    """Per-edge keep probability giving an expected CNOT-occupied fraction of ``xi``."""
    edges = _subset_edges(device, qubits)
    m = expected_matching_size(edges)
    if m == 0.0:
        return 0.0
    return min(1.0, xi * len(qubits) / (2.0 * m))


def sample_layer_pair(device: DeviceGraph, qubits, xi: float, rng):
    """Independent single-qubit layer and CNOT layer over ``qubits``."""
    qubits = tuple(qubits)
    one = tuple(G1[k] for k in rng.integers(len(G1), size=len(qubits)))
    two = [IDLE_GATE] * len(qubits)
    edges = _subset_edges(device, qubits)
    p = edge_keep_probability(device, qubits, xi)
    if edges and p > 0:
        if len(edges) <= _ENUMERATION_LIMIT:
            options = _maximal_matchings(edges)
            matching = options[rng.integers(len(options))]
        else:
            matching = _greedy_matching(edges, rng)
        keep = rng.random(len(matching)) < p
        flip = rng.random(len(matching)) < 0.5
        pos = {q: i for i, q in enumerate(qubits)}
        for (a, b), k, f in zip(matching, keep, flip):
            if not k:
                continue
            c, t = (b, a) if f else (a, b)
            if not device.has_edge(c, t):
                c, t = t, c
            two[pos[c]] = Gate(CTRL, partner=t)
            two[pos[t]] = Gate(TARG, partner=c)
    return one, tuple(two)


def merge_layers(one, two) -> tuple:
    return tuple(t if t.is_cnot else o for o, t in zip(one, two))


def sample_mixed_layer(device, qubits, xi, rng) -> tuple:
    return merge_layers(*sample_layer_pair(device, qubits, xi, rng))


def inverse_layer(layer) -> tuple:
    return tuple(g.inverse() for g in layer)


def absorbable_paulis(layer) -> tuple:
    """Per slot, the Paulis that can be merged into that gate without leaving the gate set."""
    out = []
    for g in layer:
        if g.kind == ZROT:
            out.append("IZ")
        elif g.kind in (XP, XM):
            out.append("IX")
        else:
            out.append("I")
    return tuple(out)


def absorb_pauli(gate: Gate, pauli: str) -> Gate:
    """The gate equal (up to phase) to ``gate`` applied after ``pauli``."""
    if pauli == "I":
        return gate
    if pauli == "Z" and gate.kind == ZROT:
        q = (gate.quarter + 2) % 4
        return zrot(q - 4 if q == 3 else q)
    if pauli == "X" and gate.kind in (XP, XM):
        return Gate(XM if gate.kind == XP else XP)
    raise ValueError(f"cannot merge {pauli} into {gate}")


def mirror_from_half(device, qubits, half, central: str) -> Circuit:
    """Mirror circuit from a forward half and a central Pauli label over ``qubits``."""
    inverse = [inverse_layer(layer) for layer in reversed(half)]
    if inverse:
        inverse[0] = tuple(absorb_pauli(g, p) for g, p in zip(inverse[0], central))
    elif set(central) - {"I"}:
        raise ValueError("a central Pauli needs a non-empty half")
    return Circuit(device, tuple(qubits), tuple(half) + tuple(inverse))


def sample_central_pauli(last_forward_layer, rng) -> str:
    options = absorbable_paulis(inverse_layer(last_forward_layer))
    return "".join(opt[rng.integers(len(opt))] for opt in options)


def _resolve(config: SamplerConfig, device, rng):
    config.check(device)
    if rng is None:
        rng = np.random.default_rng(config.seed)
    qubits = config.qubit_subset
    if qubits is None:
        qubits = random_connected_subset(device, config.width, rng)
    return rng, tuple(sorted(qubits))


def _sample_mirror(device, qubits, depth, germ_length, xi, rng) -> Circuit:
    germ = [sample_mixed_layer(device, qubits, xi, rng) for _ in range(germ_length)]
    half = germ * ((depth // 2) // germ_length)
    central = sample_central_pauli(half[-1], rng)
    return mirror_from_half(device, qubits, half, central)


def sample_randomized_mirror_circuit(config: SamplerConfig, device: DeviceGraph, rng=None) -> Circuit:
    rng, qubits = _resolve(config, device, rng)
    return _sample_mirror(device, qubits, config.depth, config.depth // 2, config.xi, rng)


def sample_periodic_mirror_circuit(config: SamplerConfig, device: DeviceGraph, rng=None) -> Circuit:
    rng, qubits = _resolve(config, device, rng)
    return _sample_mirror(device, qubits, config.depth, config.germ_length, config.xi, rng)


def sample_mirror_circuit(config: SamplerConfig, device: DeviceGraph, rng=None) -> Circuit:
    if config.kind == PERIODIC:
        return sample_periodic_mirror_circuit(config, device, rng)
    return sample_randomized_mirror_circuit(config, device, rng)


def cnot_density(circuit: Circuit) -> float:
    """Fraction of (qubit, layer) slots occupied by CNOTs."""
    if circuit.depth == 0 or circuit.width == 0:
        return 0.0
    n = sum(g.is_cnot for layer in circuit.layers for g in layer)
    return n / (circuit.depth * circuit.width)
