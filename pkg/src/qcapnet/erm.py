"""Error-rates model: product-formula predictions, maximum-likelihood fits
and loading of externally supplied rates."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .device_circuit import CTRL, ONE_QUBIT_KINDS, Circuit, DeviceGraph
from .errors import EmptyTrainingSplit, MissingRate, NonConvergence, RateOutOfRange, SchemaError, UnsupportedVersion
from .neuralnet.optim import AdamState, adam_step

CNOT = "CNOT"
READOUT = "readout"
FORMAT_VERSION = 1


def parameter_keys(device: DeviceGraph) -> list:
    """Readouts, then single-qubit gate kinds per qubit, then directed CNOT edges."""
    keys = [(READOUT, q) for q in range(device.n)]
    keys += [(k, q) for q in range(device.n) for k in ONE_QUBIT_KINDS]
    keys += [(CNOT, c, t) for c, t in sorted(device.edges)]
    return keys


def circuit_keys(circuit: Circuit):
    """Every rate key the product formula multiplies for ``circuit``."""
    for q in circuit.qubits:
        yield (READOUT, q)
    for layer in circuit.layers:
        for q, g in zip(circuit.qubits, layer):
            if g.is_noop or g.kind not in ONE_QUBIT_KINDS + (CTRL,):
                continue
            yield (CNOT, q, g.partner) if g.kind == CTRL else (g.kind, q)


def _key_str(key) -> str:
    return ":".join(str(k) for k in key)


def _key_parse(text: str):
    parts = text.split(":")
    try:
        if parts[0] == CNOT and len(parts) == 3:
            return (CNOT, int(parts[1]), int(parts[2]))
        if parts[0] in ONE_QUBIT_KINDS + (READOUT,) and len(parts) == 2:
            return (parts[0], int(parts[1]))
    except ValueError:
        pass
    raise SchemaError(f"bad ERM key {text!r}")


@dataclass
class ErmParams:
    rates: dict = field(default_factory=dict)
    device_hash: str = ""

    def __post_init__(self):
        for key, r in self.rates.items():
            if not 0.0 <= r < 1.0:
                raise RateOutOfRange(f"rate {r} for {_key_str(key)} outside [0, 1)")

    def __len__(self):
        return len(self.rates)

    def get(self, key) -> float:
        try:
            return self.rates[key]
        except KeyError:
            raise MissingRate(f"no error rate for {_key_str(key)}") from None

    def to_dict(self) -> dict:
        return {
            "version": FORMAT_VERSION,
            "device_hash": self.device_hash,
            "rates": {_key_str(k): float(v) for k, v in sorted(self.rates.items(), key=lambda kv: _key_str(kv[0]))},
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, data: dict) -> "ErmParams":
        if not isinstance(data, dict) or "rates" not in data:
            raise SchemaError("ERM file needs a 'rates' table")
        if data.get("version", FORMAT_VERSION) != FORMAT_VERSION:
            raise UnsupportedVersion(f"ERM format version {data.get('version')} not supported")
        rates = {}
        for k, v in data["rates"].items():
            if not isinstance(v, (int, float)):
                raise SchemaError(f"rate for {k} is not a number")
            rates[_key_parse(k)] = float(v)
        return cls(rates, str(data.get("device_hash", "")))


def device_hash(device: DeviceGraph) -> str:
    return hashlib.sha256(device.dumps().encode()).hexdigest()[:16]


def erm_predict(params: ErmParams, circuit: Circuit) -> float:
    """Readout and gate success factors multiplied together; Idle and Z(0) are free."""
    log_s = sum(np.log1p(-params.get(k)) for k in circuit_keys(circuit))
    return float(np.exp(log_s))


def erm_predict_many(params: ErmParams, circuits) -> np.ndarray:
    return np.array([erm_predict(params, c) for c in circuits])


def count_matrix(circuits, keys) -> np.ndarray:
    """Occurrences of each rate key in each circuit."""
    index = {k: i for i, k in enumerate(keys)}
    out = np.zeros((len(circuits), len(keys)))
    for r, c in enumerate(circuits):
        for k in circuit_keys(c):
            if k not in index:
                raise MissingRate(f"circuit uses {_key_str(k)}, which the fit does not parameterise")
            out[r, index[k]] += 1
    return out


@dataclass
class ErmFitConfig:
    lr: float = 0.1
    max_iter: int = 20000
    tol: float = 1e-9
    init_rate: float = 1e-3
    seed: int = 0


@dataclass
class ErmFitResult:
    params: ErmParams
    loss: float
    iterations: int
    converged: bool
    history: list


def _bce_terms(counts, theta, s_hat):
    """Average BCE of the product model and its gradient w.r.t. logit rates."""
    sp = np.logaddexp(0.0, theta)  # -log(1 - sigmoid(theta))
    log_s = -(counts @ sp)
    log_1ms = np.log(-np.expm1(np.minimum(log_s, -1e-300)))
    loss = -np.mean(s_hat * log_s + (1 - s_hat) * log_1ms)
    # d loss / d log s per circuit
    g = (-s_hat + (1 - s_hat) * np.exp(log_s - log_1ms)) / len(s_hat)
    grad = -(counts.T @ g) * (1.0 / (1.0 + np.exp(-theta)))
    return float(loss), grad


def fit_erm_arrays(circuits, s_hat, device: DeviceGraph, config: ErmFitConfig | None = None) -> ErmFitResult:
    """Maximum-likelihood rates via Adam on logit-transformed parameters.

    A proposed step is accepted only when it does not increase the loss.
    On rejection the learning rate is halved and the momentum cleared, which
    makes the next proposal a preconditioned descent direction; accepted
    steps let the rate recover towards its configured value.
    """
    config = config or ErmFitConfig()
    if len(circuits) == 0:
        raise EmptyTrainingSplit("no training circuits to fit")
    keys = parameter_keys(device)
    counts = count_matrix(circuits, keys)
    used = counts.sum(axis=0) > 0
    s_hat = np.clip(np.asarray(s_hat, dtype=float), 0.0, 1.0)
    theta = np.full(len(keys), np.log(config.init_rate / (1 - config.init_rate)))
    state = AdamState(lr=config.lr)
    loss, grad = _bce_terms(counts, theta, s_hat)
    history = [loss]
    converged = False
    it = 0
    for it in range(1, config.max_iter + 1):
        if np.linalg.norm(grad[used]) < config.tol:
            converged = True
            break
        trial = theta.copy()
        trial_state = state.copy()
        adam_step(trial_state, [trial], [grad])
        new_loss, new_grad = _bce_terms(counts, trial, s_hat)
        if np.isfinite(new_loss) and new_loss <= loss:
            theta, state, loss, grad = trial, trial_state, new_loss, new_grad
            state.lr = min(state.lr * 1.1, config.lr)
            history.append(loss)
        else:
            state.lr *= 0.5
            for m in state.m:
                m[:] = 0.0
            if state.lr < 1e-12:
                converged = True
                break
    rates = 1.0 / (1.0 + np.exp(-theta))
    # operations absent from the training circuits carry no evidence of error
    params = ErmParams({k: float(r) if u else 0.0 for k, r, u in zip(keys, rates, used)}, device_hash(device))
    if not np.all(np.isfinite(theta)):
        raise NonConvergence("ERM fit produced non-finite parameters", best=params)
    return ErmFitResult(params, loss, it, converged, history)


def fit_erm(dataset, opt_config: ErmFitConfig | None = None, splits=("train",)) -> ErmParams:
    """f-ERM fit on the given splits of a CapabilityDataset."""
    part = dataset.splits(*splits)
    if len(part) == 0:
        raise EmptyTrainingSplit(f"dataset has no records in {splits}")
    return fit_erm_arrays(part.circuits(), part.s_hat(), dataset.device, opt_config).params


def save_erm(params: ErmParams, path) -> None:
    with open(path, "w") as fh:
        fh.write(params.dumps())


def load_device_erm(path) -> ErmParams:
    """d-ERM: rates supplied in a file.  Missing keys surface at prediction time."""
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}: not valid JSON ({exc})") from exc
    return ErmParams.from_dict(data)
