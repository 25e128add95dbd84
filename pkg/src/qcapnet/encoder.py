"""Circuit to image encoding: gate channels plus error-sensitivity channels."""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from .device_circuit import CTRL, IDLE, TARG, XM, XP, ZROT, Circuit, DeviceGraph
from .errors import AlreadyStripped, DepthExceeded, NonCliffordGate, SchemaError, UnsupportedVersion
from .stabilizer_engine import sensitivity_channels

CHANNELS = ("ZRot", "Xp", "Xm", "CnotLeft", "CnotRight", "CnotUp", "CnotDown", "SensX", "SensY", "SensZ")
GATE_CHANNELS = CHANNELS[:7]
CNOT_CHANNELS = (3, 4, 5, 6)
SENS_CHANNELS = (7, 8, 9)
DIRECTION_CHANNEL = {"left": 3, "right": 4, "up": 5, "down": 6}
CH = {name: k for k, name in enumerate(CHANNELS)}

TENSOR_MAGIC = b"QCTN"
TENSOR_VERSION = 1


@dataclass(frozen=True)
class CircuitTensor:
    values: np.ndarray  # (n, d_max, h)
    width: int
    depth: int
    active: np.ndarray  # (n,) bool
    channels: tuple = CHANNELS

    @property
    def stripped(self) -> bool:
        return len(self.channels) == len(GATE_CHANNELS)


def encode_values(circuit: Circuit, d_max: int, device: DeviceGraph | None = None, dtype=np.float64) -> np.ndarray:
    """Raw (n, d_max, 10) array for ``circuit``."""
    device = device or circuit.device
    if circuit.depth > d_max:
        raise DepthExceeded(f"circuit depth {circuit.depth} exceeds d_max {d_max}; re-encode with a larger d_max")
    out = np.zeros((device.n, d_max, len(CHANNELS)), dtype=dtype)
    rows = np.array(circuit.qubits, dtype=np.intp)
    for j, layer in enumerate(circuit.layers):
        for q, g in zip(circuit.qubits, layer):
            if g.kind == ZROT:
                out[q, j, CH["ZRot"]] = g.theta
            elif g.kind == XP:
                out[q, j, CH["Xp"]] = 1.0
            elif g.kind == XM:
                out[q, j, CH["Xm"]] = 1.0
            elif g.kind in (CTRL, TARG):
                out[q, j, DIRECTION_CHANNEL[device.direction(q, g.partner)]] = 1.0 if g.kind == CTRL else -1.0
            elif g.kind != IDLE:
                raise NonCliffordGate(f"cannot encode gate {g}")
    if circuit.depth:
        out[rows, : circuit.depth, SENS_CHANNELS[0]:] = sensitivity_channels(circuit)
    return out


def encode(circuit: Circuit, device: DeviceGraph | None = None, d_max: int | None = None) -> CircuitTensor:
    device = device or circuit.device
    d_max = circuit.depth if d_max is None else d_max
    values = encode_values(circuit, d_max, device)
    active = np.zeros(device.n, dtype=bool)
    active[list(circuit.qubits)] = True
    values.setflags(write=False)
    return CircuitTensor(values, circuit.width, circuit.depth, active)


def encode_batch(circuits, d_max: int, device: DeviceGraph | None = None, dtype=np.float32) -> np.ndarray:
    """(N, n, d_max, 10) stack of encodings."""
    circuits = list(circuits)
    device = device or (circuits[0].device if circuits else None)
    out = np.zeros((len(circuits), device.n, d_max, len(CHANNELS)), dtype=dtype)
    for k, c in enumerate(circuits):
        out[k] = encode_values(c, d_max, device, dtype)
    return out


def strip_sensitivity(tensor):
    """Drop the three sensitivity channels (for the channel-ablation study).

    Accepts a CircuitTensor or a raw array whose last axis is the channel axis.
    """
    if isinstance(tensor, CircuitTensor):
        if tensor.stripped:
            raise AlreadyStripped("sensitivity channels were already removed")
        values = tensor.values[..., : len(GATE_CHANNELS)].copy()
        values.setflags(write=False)
        return CircuitTensor(values, tensor.width, tensor.depth, tensor.active, GATE_CHANNELS)
    arr = np.asarray(tensor)
    if arr.shape[-1] != len(CHANNELS):
        raise AlreadyStripped(f"expected {len(CHANNELS)} channels, got {arr.shape[-1]}")
    return arr[..., : len(GATE_CHANNELS)].copy()


# -- serialization ------------------------------------------------------------

def dumps_tensor(tensor: CircuitTensor) -> bytes:
    header = {
        "version": TENSOR_VERSION,
        "shape": list(tensor.values.shape),
        "channels": list(tensor.channels),
        "width": tensor.width,
        "depth": tensor.depth,
        "active": [int(a) for a in tensor.active],
    }
    hbytes = json.dumps(header, sort_keys=True).encode()
    payload = np.ascontiguousarray(tensor.values, dtype="<f8").tobytes()
    return TENSOR_MAGIC + struct.pack("<I", len(hbytes)) + hbytes + payload


def loads_tensor(blob: bytes) -> CircuitTensor:
    if blob[:4] != TENSOR_MAGIC or len(blob) < 8:
        raise SchemaError("not a circuit tensor file")
    (hlen,) = struct.unpack("<I", blob[4:8])
    try:
        header = json.loads(blob[8 : 8 + hlen])
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise SchemaError(f"corrupt tensor header: {exc}") from exc
    if header.get("version") != TENSOR_VERSION:
        raise UnsupportedVersion(f"tensor format version {header.get('version')} not supported")
    shape = tuple(header["shape"])
    payload = blob[8 + hlen :]
    if len(payload) != 8 * int(np.prod(shape)):
        raise SchemaError("tensor payload size does not match header shape")
    values = np.frombuffer(payload, dtype="<f8").reshape(shape).astype(np.float64)
    values.setflags(write=False)
    return CircuitTensor(values, int(header["width"]), int(header["depth"]),
                         np.array(header["active"], dtype=bool), tuple(header["channels"]))


def dump_tensor_text(tensor: CircuitTensor) -> str:
    """Human-readable dump that parses back to the identical tensor."""
    n, d, h = tensor.values.shape
    lines = [
        f"shape {n} {d} {h}",
        "channels " + " ".join(tensor.channels),
        f"width {tensor.width}",
        f"depth {tensor.depth}",
        "active " + " ".join(str(int(a)) for a in tensor.active),
    ]
    for i in range(n):
        for j in range(d):
            row = tensor.values[i, j]
            if row.any():
                lines.append(f"{i} {j} " + " ".join(float(v).hex() for v in row))
    return "\n".join(lines) + "\n"


def parse_tensor_text(text: str) -> CircuitTensor:
    lines = text.splitlines()
    try:
        n, d, h = (int(v) for v in lines[0].split()[1:])
        channels = tuple(lines[1].split()[1:])
        width = int(lines[2].split()[1])
        depth = int(lines[3].split()[1])
        active = np.array([int(v) for v in lines[4].split()[1:]], dtype=bool)
        values = np.zeros((n, d, h))
        for ln in lines[5:]:
            parts = ln.split()
            values[int(parts[0]), int(parts[1])] = [float.fromhex(v) for v in parts[2:]]
    except (IndexError, ValueError) as exc:
        raise SchemaError(f"malformed tensor dump: {exc}") from exc
    values.setflags(write=False)
    return CircuitTensor(values, width, depth, active, channels)
