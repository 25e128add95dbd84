"""Hand-built networks: the exact local-Pauli-stochastic predictor and the
sequential-CNOT detection filters.

The LPS predictor is a 1x1 convolution whose ReLU feature maps are indicators
"gate of kind G sits at this pixel and the state there is sensitive to Pauli
P", followed by a dense head whose weights are ``log(1 - rate)`` for the
qubit (row) and gate the feature belongs to and whose activation is ``exp``.
Two extra features detect active qubits in column 0 and carry the readout
factors.
"""
from __future__ import annotations

import numpy as np

from ..device_circuit import DeviceGraph
from ..encoder import CH, CHANNELS, CNOT_CHANNELS, DIRECTION_CHANNEL, SENS_CHANNELS
from ..errors import ModelKindMismatch
from ..noise_models import CNOT, PAULIS, LocalPauliStochastic
from .layers import Conv2D, Dense, Flatten
from .model import CnnModel, CnnSpec

GATE_MARGIN = 3.0  # large enough to switch a feature off when SensP = 0


def _lps_features():
    """(channel weights, bias, tag) per feature of the 1x1 convolution.

    ``tag`` = (gate kind, pauli index, head sign, extra) drives the head weights.
    """
    h = len(CHANNELS)
    feats = []
    for p in range(3):
        sens = SENS_CHANNELS[p]
        for kind in ("Xp", "Xm"):
            w = np.zeros(h)
            w[CH[kind]] = 1.0
            w[sens] = GATE_MARGIN
            feats.append((w, -GATE_MARGIN, (kind, p, 1.0, None)))
        # Z rotations: indicator of a nonzero angle from three hat pieces of 2*theta/pi
        for scale, shift, sign in ((2 / np.pi, 0.0, 1.0), (2 / np.pi, -1.0, -1.0), (-2 / np.pi, 0.0, 1.0)):
            w = np.zeros(h)
            w[CH["ZRot"]] = scale
            w[sens] = GATE_MARGIN
            feats.append((w, shift - GATE_MARGIN, ("Z", p, sign, None)))
        for direction, ch in DIRECTION_CHANNEL.items():
            for role, v in (("control", 1.0), ("target", -1.0)):
                w = np.zeros(h)
                w[ch] = v
                w[sens] = GATE_MARGIN
                feats.append((w, -GATE_MARGIN, (CNOT, p, 1.0, (direction, role))))
    for shift, sign in ((-1.0, 1.0), (-2.0, -1.0)):
        w = np.zeros(h)
        w[list(SENS_CHANNELS)] = 1.0
        feats.append((w, shift, ("readout", None, sign, None)))
    return feats


def build_lps_reference_network(model, device: DeviceGraph, d_max: int, dtype=np.float64) -> CnnModel:
    """Untrained network whose output equals the analytic success probability."""
    if type(model) is not LocalPauliStochastic:
        raise ModelKindMismatch("the reference network encodes a base local Pauli stochastic model")
    rates = model.rates
    feats = _lps_features()
    nf = len(feats)
    K = np.stack([w for w, _, _ in feats], axis=1)[None, None].astype(dtype)  # (1, 1, h, nf)
    b = np.array([bias for _, bias, _ in feats], dtype=dtype)
    W = np.zeros((device.n, d_max, nf))
    for f, (_, _, (kind, p, sign, extra)) in enumerate(feats):
        for q in range(device.n):
            if kind == "readout":
                W[q, 0, f] = sign * np.log1p(-rates.readout[q])
                continue
            if kind == CNOT:
                direction, role = extra
                nb = device.neighbor_in_direction(q, direction)
                key = (CNOT, q, nb) if role == "control" else (CNOT, nb, q)
                if nb is None or key not in rates.gates:
                    continue
                rate = rates.gates[key][0 if role == "control" else 1, p]
            else:
                key = (kind, q)
                if key not in rates.gates:
                    continue
                rate = rates.gates[key][p]
            W[q, :, f] = sign * np.log1p(-rate)
    spec = CnnSpec(
        (device.n, d_max, len(CHANNELS)),
        [{"kind": "conv", "kernels": nf, "shape": [1, 1], "activation": "relu"},
         {"kind": "flatten"},
         {"kind": "dense", "units": 1, "activation": "exp"}],
        epochs=0,
    )
    spec.check(reference=True)
    layers = [Conv2D(K, b, "relu"), Flatten(), Dense(W.reshape(-1, 1).astype(dtype), np.zeros(1, dtype=dtype), "exp")]
    return CnnModel(spec, layers, reference=True)


def lps_feature_names() -> list:
    out = []
    for _, _, (kind, p, sign, extra) in _lps_features():
        label = kind if p is None else f"{kind}/{PAULIS[p]}"
        if extra:
            label += "/" + "-".join(extra)
        out.append(label)
    return out


def build_sequential_cnot_filters(dtype=np.float64):
    """Four 1x2 kernels (one per sign pattern of two CNOT halves) and their biases.

    Kernel tap 0 reads layer ``j-1`` and tap 1 reads layer ``j``, so the ReLU
    map of the kernel matching the signs of two CNOT halves on qubit ``i`` in
    layers ``j-1`` and ``j`` equals 1/2 at ``(i, j)``; all four maps vanish
    wherever either layer has no CNOT on that qubit.
    """
    h = len(CHANNELS)
    K = np.zeros((1, 2, h, 4), dtype=dtype)
    b = np.full(4, -0.5, dtype=dtype)
    for f, (s1, s2) in enumerate(((1, 1), (1, -1), (-1, 1), (-1, -1))):
        K[0, 0, list(CNOT_CHANNELS), f] = 0.5 * s1
        K[0, 1, list(CNOT_CHANNELS), f] = 0.5 * s2
    return K, b
