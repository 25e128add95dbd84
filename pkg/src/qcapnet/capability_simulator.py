"""Success-probability labelling: analytic product, Pauli-frame Monte Carlo,
dense statevector for coherent models, shot noise and dataset assembly."""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import statevector as sv
from .device_circuit import Circuit, DeviceGraph, parse_circuit, serialize_circuit
from .errors import DataError, ModelKindMismatch, SchemaError, UnsupportedVersion
from .noise_models import ErrorModel, location_rates, readout_rates
from .stabilizer_engine import compile_circuit, sensitivity_channels, success_bitstring

SPLITS = ("train", "validate", "test")
DATASET_VERSION = 1
MC_CHUNK = 8192


def analytic_success_probability(circuit: Circuit, model: ErrorModel) -> float:
    """Product of (1 - rate) over sensitive (location, Pauli) triples and readouts."""
    if not model.stochastic:
        raise ModelKindMismatch("the analytic formula needs a stochastic Pauli model")
    log_s = np.log1p(-readout_rates(model, circuit)).sum()
    if circuit.depth:
        sens = sensitivity_channels(circuit).astype(bool)
        rates = location_rates(model, circuit)
        log_s += np.log1p(-rates[sens]).sum()
    return float(np.exp(log_s))


# -- Monte Carlo --------------------------------------------------------------

def _frame_layer(prog, x, z):
    """Conjugate a batch of sign-free Pauli frames through one compiled layer."""
    for h, s in prog.steps:
        if h.size:
            x[:, h], z[:, h] = z[:, h], x[:, h].copy()
        if s.size:
            z[:, s] ^= x[:, s]
    c, t = prog.controls, prog.targets
    if c.size:
        x[:, t] ^= x[:, c]
        z[:, c] ^= z[:, t]


def _mc_chunk(progs, rates, readout, trials, rng) -> int:
    w = rates.shape[0]
    x = np.zeros((trials, w), dtype=bool)
    z = np.zeros((trials, w), dtype=bool)
    cum = np.cumsum(rates, axis=2)  # (w, d, 3)
    for j, prog in enumerate(progs):
        _frame_layer(prog, x, z)
        cj = cum[:, j, :]
        if not cj[:, 2].any():
            continue
        u = rng.random((trials, w))
        is_x = u < cj[:, 0]
        is_y = (u >= cj[:, 0]) & (u < cj[:, 1])
        is_z = (u >= cj[:, 1]) & (u < cj[:, 2])
        x ^= is_x | is_y
        z ^= is_y | is_z
    if readout.any():
        x ^= rng.random((trials, w)) < readout
    return int(np.count_nonzero(~x.any(axis=1)))


def monte_carlo_success_probability(circuit: Circuit, model: ErrorModel, trials: int, rng, rates=None, readout=None):
    """(estimate, standard error) from explicit sampling of Pauli errors.

    Errors are composed exactly, so cancellations between errors are
    captured.  Trials run in fixed-size chunks with per-chunk seeds, so the
    estimate does not depend on how chunks are distributed.  ``rates`` and
    ``readout`` override the model's location rates (used for forced-error
    constructions).
    """
    if trials < 1:
        raise ValueError("trials must be positive")
    if rates is None:
        if not model.stochastic:
            raise ModelKindMismatch("Monte Carlo sampling needs a stochastic Pauli model")
        rates = location_rates(model, circuit)
        readout = readout_rates(model, circuit)
    readout = np.zeros(circuit.width) if readout is None else np.asarray(readout, dtype=float)
    progs = compile_circuit(circuit)
    base = int(rng.integers(2**63))
    ok = 0
    for k, start in enumerate(range(0, trials, MC_CHUNK)):
        n = min(MC_CHUNK, trials - start)
        ok += _mc_chunk(progs, rates, readout, n, np.random.default_rng([base, k]))
    s = ok / trials
    return s, math.sqrt(s * (1 - s) / trials)


# -- coherent -----------------------------------------------------------------

def statevector_success_probability(circuit: Circuit, model: ErrorModel) -> float:
    """|<x_s| U_noisy |0>|^2 with each gate followed by its coherent error rotation."""
    if model.stochastic:
        raise ModelKindMismatch("statevector labelling is for coherent models")
    if circuit.width > sv.MAX_WIDTH:
        from .errors import WidthExceeded

        raise WidthExceeded(f"statevector simulation supports at most {sv.MAX_WIDTH} qubits, got {circuit.width}")
    pos = {q: i for i, q in enumerate(circuit.qubits)}

    def errors(psi, j):
        for i, (q, g) in enumerate(zip(circuit.qubits, circuit.layers[j])):
            rot = model.rotation(g, q)
            if rot is None or rot[1] == 0.0:
                continue
            axis, angle = rot
            axes = (i,) if len(axis) == 1 else (i, pos[g.partner])
            psi = sv.apply_matrix(psi, sv.pauli_rotation(axis, angle), axes)
        return psi

    bits = success_bitstring(circuit)
    psi = sv.run_circuit(circuit, errors)
    return float(abs(psi[tuple(bits)]) ** 2)


def exact_success_probability(circuit: Circuit, model: ErrorModel) -> float:
    if model.stochastic:
        return analytic_success_probability(circuit, model)
    return statevector_success_probability(circuit, model)


def add_shot_noise(s: float, n_shots, rng) -> float:
    """Binomial estimate of ``s`` from ``n_shots`` repetitions (``None``/inf: exact)."""
    if n_shots is None or n_shots == math.inf:
        return float(s)
    n_shots = int(n_shots)
    if n_shots < 1:
        raise ValueError("n_shots must be positive")
    return rng.binomial(n_shots, min(max(s, 0.0), 1.0)) / n_shots


# -- datasets -----------------------------------------------------------------

def shots_to_json(n_shots):
    return "inf" if n_shots is None or n_shots == math.inf else int(n_shots)


def shots_from_json(value):
    return math.inf if value in ("inf", None) else int(value)


@dataclass
class CapabilityDataset:
    device: DeviceGraph
    d_max: int
    records: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)
    _circuits: dict = field(default_factory=dict, repr=False, compare=False)

    def __len__(self):
        return len(self.records)

    def split(self, name: str) -> "CapabilityDataset":
        return self.subset([r for r in self.records if r["split"] == name])

    def splits(self, *names) -> "CapabilityDataset":
        return self.subset([r for r in self.records if r["split"] in names])

    def subset(self, records) -> "CapabilityDataset":
        out = CapabilityDataset(self.device, self.d_max, list(records), dict(self.meta))
        out._circuits = self._circuits
        return out

    def circuit(self, record) -> Circuit:
        cid = record["circuit_id"]
        if cid not in self._circuits:
            self._circuits[cid] = parse_circuit(record["circuit"], self.device)
        return self._circuits[cid]

    def circuits(self) -> list:
        return [self.circuit(r) for r in self.records]

    def s_hat(self) -> np.ndarray:
        return np.array([r["s_hat"] for r in self.records], dtype=float)

    def s_exact(self) -> np.ndarray:
        return np.array([r.get("s_exact", r["s_hat"]) for r in self.records], dtype=float)

    def ids(self) -> list:
        return [r["circuit_id"] for r in self.records]

    def with_shots(self, n_shots, rng, splits=SPLITS) -> "CapabilityDataset":
        """Fresh shot-noise draw from the exact labels for records in ``splits``.

        Records outside ``splits`` keep their exact label.
        """
        recs = []
        for r in self.records:
            if r["split"] in splits:
                recs.append(dict(r, s_hat=add_shot_noise(r["s_exact"], n_shots, rng), n_shots=shots_to_json(n_shots)))
            else:
                recs.append(dict(r, s_hat=r["s_exact"], n_shots=shots_to_json(None)))
        out = self.subset(recs)
        out.meta["n_shots"] = shots_to_json(n_shots)
        return out

    def dumps(self) -> str:
        header = {"type": "header", "version": DATASET_VERSION, "d_max": self.d_max,
                  "device": self.device.to_dict(), **self.meta}
        lines = [json.dumps(header, sort_keys=True)]
        lines += [json.dumps(r, sort_keys=True) for r in self.records]
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.dumps())

    @classmethod
    def loads(cls, text: str) -> "CapabilityDataset":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines:
            raise SchemaError("empty dataset file")
        try:
            header = json.loads(lines[0])
            records = [json.loads(ln) for ln in lines[1:]]
        except json.JSONDecodeError as exc:
            raise SchemaError(f"dataset is not valid JSON lines: {exc}") from exc
        if header.get("type") != "header":
            raise SchemaError("first dataset line must be the header record")
        if header.get("version") != DATASET_VERSION:
            raise UnsupportedVersion(f"dataset version {header.get('version')} not supported")
        device = DeviceGraph.from_dict(header["device"])
        meta = {k: v for k, v in header.items() if k not in ("type", "version", "d_max", "device")}
        ds = cls(device, int(header["d_max"]), records, meta)
        ds.check()
        return ds

    @classmethod
    def load(cls, path) -> "CapabilityDataset":
        with open(path) as fh:
            return cls.loads(fh.read())

    def check(self) -> None:
        seen = set()
        for r in self.records:
            if r["circuit_id"] in seen:
                raise DataError(f"duplicate circuit id {r['circuit_id']}")
            seen.add(r["circuit_id"])
            if not 0.0 <= r["s_hat"] <= 1.0:
                raise DataError(f"s_hat out of range for {r['circuit_id']}")
            if r["split"] not in SPLITS:
                raise DataError(f"unknown split tag {r['split']!r}")
            n = shots_from_json(r["n_shots"])
            if n != math.inf and abs(r["s_hat"] * n - round(r["s_hat"] * n)) > 1e-9:
                raise DataError(f"s_hat of {r['circuit_id']} is not a multiple of 1/n_shots")
            if r["depth"] > self.d_max:
                raise DataError(f"{r['circuit_id']} is deeper than d_max")


def split_tags(n: int, fracs, rng) -> list:
    fracs = np.asarray(fracs, dtype=float)
    if fracs.shape != (3,) or abs(fracs.sum() - 1) > 1e-9 or np.any(fracs < 0):
        raise ValueError("split fractions must be three non-negative numbers summing to 1")
    n_train = int(round(fracs[0] * n))
    n_val = min(n - n_train, int(round(fracs[1] * n)))
    tags = np.array(["test"] * n, dtype=object)
    perm = rng.permutation(n)
    tags[perm[:n_train]] = "train"
    tags[perm[n_train:n_train + n_val]] = "validate"
    return list(tags)


def model_hash(model: ErrorModel) -> str:
    return hashlib.sha256(json.dumps(model.to_dict(), sort_keys=True).encode()).hexdigest()[:16]


def build_dataset(circuits, model: ErrorModel, n_shots, split_fracs, rng, d_max=None, kinds=None,
                  generator="", id_prefix="c", backend="auto", meta=None, device=None,
                  labels=None) -> CapabilityDataset:
    """Label ``circuits`` under ``model``, add shot noise and assign splits.

    ``labels`` may carry precomputed exact success probabilities (one per
    circuit), e.g. from a worker pool.
    """
    circuits = list(circuits)
    if backend == "analytic" and not model.stochastic:
        raise ModelKindMismatch("analytic labelling requested for a coherent model")
    if backend == "statevector" and model.stochastic:
        raise ModelKindMismatch("statevector labelling requested for a stochastic model")
    if device is None:
        if not circuits:
            raise ValueError("an empty dataset needs an explicit device")
        device = circuits[0].device
    d_max = d_max if d_max is not None else max((c.depth for c in circuits), default=0)
    tags = split_tags(len(circuits), split_fracs, rng)
    shot_rng = np.random.default_rng(rng.integers(2**63))
    records = []
    if labels is None:
        labels = [exact_success_probability(c, model) for c in circuits]
    if len(labels) != len(circuits):
        raise ValueError("one label per circuit required")
    for k, (c, tag, s) in enumerate(zip(circuits, tags, labels)):
        s = float(s)
        records.append({
            "circuit_id": f"{id_prefix}{k:06d}",
            "circuit": serialize_circuit(c),
            "width": c.width,
            "depth": c.depth,
            "qubit_subset": list(c.qubits),
            "kind": kinds[k] if kinds is not None else "randomized",
            "s_exact": s,
            "s_hat": add_shot_noise(s, n_shots, shot_rng),
            "n_shots": shots_to_json(n_shots),
            "split": tag,
            "generator": generator or model.kind,
        })
    ds = CapabilityDataset(device, d_max, records, {"model_hash": model_hash(model), "n_shots": shots_to_json(n_shots), **(meta or {})})
    ds._circuits = {r["circuit_id"]: c for r, c in zip(records, circuits)}
    return ds


def nested_subsets(dataset: CapabilityDataset, sizes, rng) -> dict:
    """Nested train+validate subsets (each keeps every test record).

    A single random order over the train and validate records is drawn and
    each subset takes its prefix, so smaller subsets sit inside larger ones
    and every record keeps its split tag.
    """
    pool = [r for r in dataset.records if r["split"] != "test"]
    test = [r for r in dataset.records if r["split"] == "test"]
    order = rng.permutation(len(pool))
    out = {}
    for n in sorted(sizes):
        if n > len(pool):
            raise ValueError(f"subset of {n} requested from {len(pool)} train+validate records")
        chosen = [pool[k] for k in sorted(order[:n])]
        out[n] = dataset.subset(chosen + test)
    return out
