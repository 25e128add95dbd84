"""Device connectivity, the simulated gate set and the layered circuit IR.

Qubits are labelled 0..n-1 and embedded in a square grid.  A circuit runs on
an ordered subset of those qubits; every layer assigns exactly one gate to
each active qubit (``Idle`` included), and layers are never merged.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

from .errors import ConfigError, ParseError, SchemaError

# Gate kinds.  Z rotations carry their angle as a number of quarter turns.
ZROT = "Z"
XP = "Xp"
XM = "Xm"
CTRL = "C"
TARG = "T"
IDLE = "I"

ONE_QUBIT_KINDS = (ZROT, XP, XM)
ALLOWED_QUARTERS = (-1, 0, 1, 2)

_QUARTER_TOKENS = {-1: "-pi/2", 0: "0", 1: "pi/2", 2: "pi"}
_TOKEN_QUARTERS = {v: k for k, v in _QUARTER_TOKENS.items()}


@dataclass(frozen=True)
class Gate:
    kind: str
    quarter: int | None = None
    partner: int | None = None

    def __post_init__(self):
        if self.kind == ZROT:
            if self.quarter not in ALLOWED_QUARTERS:
                raise ValueError(f"Z rotation angle must be one of -pi/2, 0, pi/2, pi (got {self.quarter} quarter turns)")
            if self.partner is not None:
                raise ValueError("Z rotation has no partner")
        elif self.kind in (XP, XM, IDLE):
            if self.quarter is not None or self.partner is not None:
                raise ValueError(f"{self.kind} takes no parameters")
        elif self.kind in (CTRL, TARG):
            if self.partner is None or self.quarter is not None:
                raise ValueError("CNOT halves need a partner qubit and no angle")
        else:
            raise ValueError(f"unknown gate kind {self.kind!r}")

    @property
    def theta(self) -> float | None:
        return None if self.quarter is None else self.quarter * math.pi / 2

    @property
    def is_cnot(self) -> bool:
        return self.kind in (CTRL, TARG)

    @property
    def is_noop(self) -> bool:
        """Idle and Z(0) act as the identity and carry no error."""
        return self.kind == IDLE or (self.kind == ZROT and self.quarter == 0)

    def inverse(self) -> "Gate":
        if self.kind == ZROT:
            q = (-self.quarter) % 4
            return Gate(ZROT, q - 4 if q == 3 else q)
        if self.kind == XP:
            return Gate(XM)
        if self.kind == XM:
            return Gate(XP)
        return self

    def token(self) -> str:
        if self.kind == ZROT:
            return f"Z({_QUARTER_TOKENS[self.quarter]})"
        if self.kind in (CTRL, TARG):
            return f"{self.kind}:{self.partner}"
        return self.kind

    def __str__(self):
        return self.token()


def zrot(quarter: int) -> Gate:
    return Gate(ZROT, quarter)


IDLE_GATE = Gate(IDLE)

# The single-qubit gate set sampled by the mirror-circuit generator.
G1 = (zrot(-1), zrot(0), zrot(1), zrot(2), Gate(XP), Gate(XM))


@dataclass(frozen=True)
class DeviceGraph:
    """Qubit count, directed CNOT availability and grid embedding."""

    n: int
    edges: frozenset
    grid_pos: tuple
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "edges", frozenset((int(a), int(b)) for a, b in self.edges))
        object.__setattr__(self, "grid_pos", tuple((int(r), int(c)) for r, c in self.grid_pos))
        problems = self.violations()
        if problems:
            raise ConfigError("invalid device graph: " + "; ".join(problems))

    def violations(self) -> list[str]:
        out = []
        if self.n < 1:
            out.append("need at least one qubit")
        if len(self.grid_pos) != self.n:
            out.append(f"{len(self.grid_pos)} grid positions for {self.n} qubits")
            return out
        if len(set(self.grid_pos)) != self.n:
            out.append("grid positions are not unique")
        for a, b in sorted(self.edges):
            if not (0 <= a < self.n and 0 <= b < self.n):
                out.append(f"edge {a}->{b} references an unknown qubit")
                continue
            if a == b:
                out.append(f"self-loop on qubit {a}")
                continue
            (ra, ca), (rb, cb) = self.grid_pos[a], self.grid_pos[b]
            if abs(ra - rb) + abs(ca - cb) != 1:
                out.append(f"edge {a}->{b} joins qubits that are not grid neighbours")
        for q in range(self.n):
            if len(self.neighbors(q)) > 4:
                out.append(f"qubit {q} has more than four neighbours")
        return out

    def neighbors(self, q: int) -> set[int]:
        return {b for a, b in self.edges if a == q} | {a for a, b in self.edges if b == q}

    def has_edge(self, control: int, target: int) -> bool:
        return (control, target) in self.edges

    def undirected_edges(self) -> list[tuple[int, int]]:
        return sorted({(min(a, b), max(a, b)) for a, b in self.edges})

    def is_connected(self, qubits: Iterable[int]) -> bool:
        qs = set(qubits)
        if not qs:
            return False
        start = next(iter(qs))
        seen = {start}
        stack = [start]
        while stack:
            q = stack.pop()
            for nb in self.neighbors(q):
                if nb in qs and nb not in seen:
                    seen.add(nb)
                    stack.append(nb)
        return seen == qs

    def direction(self, q: int, partner: int) -> str:
        """Grid direction of ``partner`` as seen from ``q``."""
        (r, c), (rp, cp) = self.grid_pos[q], self.grid_pos[partner]
        if rp == r and cp == c - 1:
            return "left"
        if rp == r and cp == c + 1:
            return "right"
        if cp == c and rp == r - 1:
            return "up"
        if cp == c and rp == r + 1:
            return "down"
        raise ValueError(f"qubits {q} and {partner} are not grid neighbours")

    def neighbor_in_direction(self, q: int, direction: str) -> int | None:
        r, c = self.grid_pos[q]
        dr, dc = {"left": (0, -1), "right": (0, 1), "up": (-1, 0), "down": (1, 0)}[direction]
        want = (r + dr, c + dc)
        for p, pos in enumerate(self.grid_pos):
            if pos == want:
                return p
        return None

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "n": self.n,
            "grid_pos": [list(p) for p in self.grid_pos],
            "edges": [list(e) for e in sorted(self.edges)],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DeviceGraph":
        try:
            return cls(int(data["n"]), frozenset(tuple(e) for e in data["edges"]),
                       tuple(tuple(p) for p in data["grid_pos"]), data.get("name", ""))
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"malformed device description: {exc}") from exc

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def load_device(path) -> DeviceGraph:
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}: not valid JSON ({exc})") from exc
    return DeviceGraph.from_dict(data)


def save_device(device: DeviceGraph, path) -> None:
    with open(path, "w") as fh:
        fh.write(json.dumps(device.to_dict(), sort_keys=True, indent=1) + "\n")


def _both_directions(pairs):
    return frozenset([(a, b) for a, b in pairs] + [(b, a) for a, b in pairs])


def t_topology() -> DeviceGraph:
    """Five qubits: a row of three with a two-qubit tail under the middle one."""
    pos = ((0, 0), (0, 1), (0, 2), (1, 1), (2, 1))
    return DeviceGraph(5, _both_directions([(0, 1), (1, 2), (1, 3), (3, 4)]), pos, "t5")


def grid_device(rows: int, cols: int) -> DeviceGraph:
    pos = tuple((r, c) for r in range(rows) for c in range(cols))
    pairs = []
    for r in range(rows):
        for c in range(cols):
            q = r * cols + c
            if c + 1 < cols:
                pairs.append((q, q + 1))
            if r + 1 < rows:
                pairs.append((q, q + cols))
    return DeviceGraph(rows * cols, _both_directions(pairs), pos, f"grid{rows}x{cols}")


def line_device(n: int) -> DeviceGraph:
    return grid_device(1, n)


def builtin_device(name: str) -> DeviceGraph:
    if name in ("t5", "T", "t-topology"):
        return t_topology()
    if name.startswith("grid"):
        try:
            r, c = name[4:].split("x")
            return grid_device(int(r), int(c))
        except ValueError:
            pass
    if name.startswith("line"):
        return line_device(int(name[4:]))
    raise ConfigError(f"unknown built-in device {name!r}")


@dataclass(frozen=True)
class Circuit:
    device: DeviceGraph
    qubits: tuple
    layers: tuple = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "qubits", tuple(int(q) for q in self.qubits))
        object.__setattr__(self, "layers", tuple(tuple(layer) for layer in self.layers))

    @property
    def width(self) -> int:
        return len(self.qubits)

    @property
    def depth(self) -> int:
        return len(self.layers)

    def index_of(self, qubit: int) -> int:
        return self.qubits.index(qubit)

    def gate(self, layer: int, qubit: int) -> Gate:
        return self.layers[layer][self.index_of(qubit)]

    def cnot_pairs(self, layer: int) -> list[tuple[int, int]]:
        """(control, target) device labels of the CNOTs in one layer."""
        return [(q, g.partner) for q, g in zip(self.qubits, self.layers[layer]) if g.kind == CTRL]

    def with_layers(self, layers: Sequence) -> "Circuit":
        return Circuit(self.device, self.qubits, tuple(layers))

    def __str__(self):
        return serialize_circuit(self)


class Violation(NamedTuple):
    layer: int | None
    qubit: int | None
    message: str


def validate_circuit(circuit: Circuit, device: DeviceGraph | None = None) -> list[Violation]:
    """Every invariant violation of ``circuit`` on ``device``; empty when valid."""
    device = device or circuit.device
    out = []
    qs = circuit.qubits
    if len(set(qs)) != len(qs):
        out.append(Violation(None, None, "active qubit listed twice"))
    for q in qs:
        if not 0 <= q < device.n:
            out.append(Violation(None, q, "qubit not on device"))
    if out:
        return out
    active = set(qs)
    for li, layer in enumerate(circuit.layers):
        if len(layer) != len(qs):
            out.append(Violation(li, None, f"layer assigns {len(layer)} gates to {len(qs)} qubits"))
            continue
        assign = dict(zip(qs, layer))
        for q, g in assign.items():
            if not isinstance(g, Gate):
                out.append(Violation(li, q, f"not a gate: {g!r}"))
                continue
            if not g.is_cnot:
                continue
            p = g.partner
            if p not in active:
                out.append(Violation(li, q, f"CNOT partner {p} is not an active qubit"))
                continue
            want = TARG if g.kind == CTRL else CTRL
            other = assign[p]
            if other.kind != want or other.partner != q:
                out.append(Violation(li, q, f"dangling CNOT: qubit {p} does not carry {want}:{q}"))
                continue
            ctrl, targ = (q, p) if g.kind == CTRL else (p, q)
            if g.kind == CTRL and not device.has_edge(ctrl, targ):
                out.append(Violation(li, q, f"edge not in graph: {ctrl}->{targ}"))
    return out


def serialize_circuit(circuit: Circuit) -> str:
    lines = ["qubits: " + ",".join(str(q) for q in circuit.qubits)]
    for layer in circuit.layers:
        lines.append(",".join(g.token() for g in layer))
    return "\n".join(lines) + "\n"


def _parse_token(tok: str, line: int, col: int) -> Gate:
    if tok in (IDLE, XP, XM):
        return Gate(tok)
    if tok.startswith("Z(") and tok.endswith(")"):
        arg = tok[2:-1].strip()
        if arg not in _TOKEN_QUARTERS:
            raise ParseError(f"Z angle {arg!r} is not one of -pi/2, 0, pi/2, pi", line, col)
        return zrot(_TOKEN_QUARTERS[arg])
    if tok[:2] in ("C:", "T:"):
        try:
            return Gate(tok[0], partner=int(tok[2:]))
        except ValueError:
            raise ParseError(f"bad CNOT partner in {tok!r}", line, col) from None
    raise ParseError(f"unknown gate token {tok!r}", line, col)


def parse_circuit(text: str, device: DeviceGraph) -> Circuit:
    lines = text.splitlines()
    while lines and not lines[-1].strip():
        lines.pop()
    if not lines or not lines[0].startswith("qubits:"):
        raise ParseError("missing 'qubits:' header", 1, 1)
    header = lines[0][len("qubits:"):].strip()
    if not header:
        raise ParseError("header lists no qubits", 1, 8)
    qubits = []
    for tok in header.split(","):
        try:
            q = int(tok)
        except ValueError:
            raise ParseError(f"bad qubit label {tok.strip()!r}", 1, None) from None
        if not 0 <= q < device.n:
            raise ParseError(f"unknown qubit label {q}", 1, None)
        qubits.append(q)
    layers = []
    for lineno, raw in enumerate(lines[1:], start=2):
        toks = raw.split(",")
        if len(toks) != len(qubits):
            raise ParseError(f"expected {len(qubits)} tokens, found {len(toks)}", lineno, 1)
        layer = []
        col = 1
        for tok in toks:
            layer.append(_parse_token(tok.strip(), lineno, col))
            col += len(tok) + 1
        for g in layer:
            if g.is_cnot and not 0 <= g.partner < device.n:
                raise ParseError(f"unknown qubit label {g.partner}", lineno, None)
        layers.append(tuple(layer))
    return Circuit(device, tuple(qubits), tuple(layers))
