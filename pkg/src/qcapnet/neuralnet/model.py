"""CNN specification, construction, loss and mini-batch Adam training."""
from __future__ import annotations

import copy
from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import ConfigError, NumericalError
from .layers import ACTIVATIONS, Conv2D, Dense, Flatten, Pool2D, sigmoid
from .optim import AdamState, adam_step

CLAMP = 1e-7


@dataclass
class CnnSpec:
    """Architecture plus training settings.

    ``layers`` is a list of dicts, e.g. ``{"kind": "conv", "kernels": 16,
    "shape": [1, 4], "activation": "relu"}``, ``{"kind": "pool", "shape":
    [1, 8], "mode": "avg"}``, ``{"kind": "flatten"}`` or ``{"kind": "dense",
    "units": 32, "activation": "relu"}``.
    """

    input_shape: tuple
    layers: list
    epochs: int = 50
    batch_size: int = 32
    lr: float = 1e-3
    seed: int = 0
    patience: int | None = None
    lr_decay: float = 1.0

    def __post_init__(self):
        self.input_shape = tuple(int(v) for v in self.input_shape)
        self.layers = [dict(layer) for layer in self.layers]

    def check(self, reference: bool = False) -> None:
        if len(self.input_shape) != 3:
            raise ConfigError("input shape must be (qubits, depth, channels)")
        if not self.layers:
            raise ConfigError("a network needs at least one layer")
        flat = False
        for layer in self.layers:
            kind = layer.get("kind")
            act = layer.get("activation", "none")
            if act not in ACTIVATIONS:
                raise ConfigError(f"unknown activation {act!r}")
            if kind in ("conv", "pool"):
                if flat:
                    raise ConfigError(f"{kind} layer after flatten")
                if len(layer["shape"]) != 2 or min(layer["shape"]) < 1:
                    raise ConfigError(f"bad {kind} window {layer['shape']}")
                if kind == "conv" and layer["kernels"] < 1:
                    raise ConfigError("conv layer needs at least one kernel")
            elif kind == "flatten":
                flat = True
            elif kind == "dense":
                if not flat:
                    raise ConfigError("dense layer before flatten")
                if layer["units"] < 1:
                    raise ConfigError("dense layer needs at least one unit")
            else:
                raise ConfigError(f"unknown layer kind {kind!r}")
        last = self.layers[-1]
        if not reference and not (last["kind"] == "dense" and last["units"] == 1 and last.get("activation") == "sigmoid"):
            raise ConfigError("the network must end in a single sigmoid unit")
        if self.epochs < 0 or self.batch_size < 1 or self.lr <= 0:
            raise ConfigError("epochs, batch size and learning rate must be positive")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["input_shape"] = list(self.input_shape)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "CnnSpec":
        return cls(**data)


@dataclass
class CnnModel:
    spec: CnnSpec
    layers: list
    history: list = field(default_factory=list)
    reference: bool = False
    best_epoch: int | None = None
    meta: dict = field(default_factory=dict)

    @property
    def dtype(self):
        for layer in self.layers:
            if layer.params():
                return layer.params()[0].dtype
        return np.float64

    def params(self) -> list:
        return [p for layer in self.layers for p in layer.params()]

    def grads(self) -> list:
        return [g for layer in self.layers for g in layer.grads()]

    def parameter_count(self) -> int:
        return int(sum(p.size for p in self.params()))

    def copy(self) -> "CnnModel":
        return copy.deepcopy(self)

    def set_params(self, values) -> None:
        for p, v in zip(self.params(), values):
            p[...] = v


def build_model(spec: CnnSpec, rng=None, dtype=np.float32, reference: bool = False) -> CnnModel:
    """Layers with seeded fan-in-scaled uniform initial weights and zero biases."""
    spec.check(reference)
    rng = rng if rng is not None else np.random.default_rng(spec.seed)
    shape = spec.input_shape
    layers = []
    for desc in spec.layers:
        kind = desc["kind"]
        act = desc.get("activation", "none")
        gain = 6.0 if act == "relu" else 3.0
        if kind == "conv":
            kh, kw = desc["shape"]
            fan_in = kh * kw * shape[2]
            lim = np.sqrt(gain / fan_in)
            K = rng.uniform(-lim, lim, size=(kh, kw, shape[2], desc["kernels"])).astype(dtype)
            layer = Conv2D(K, np.zeros(desc["kernels"], dtype=dtype), act)
        elif kind == "pool":
            layer = Pool2D(desc["shape"], desc.get("mode", "avg"))
        elif kind == "flatten":
            layer = Flatten()
        else:
            lim = np.sqrt(gain / shape[0])
            W = rng.uniform(-lim, lim, size=(shape[0], desc["units"])).astype(dtype)
            layer = Dense(W, np.zeros(desc["units"], dtype=dtype), act)
        shape = layer.output_shape(shape)
        layers.append(layer)
    # the first parameterised layer never needs a gradient w.r.t. its input
    for layer in layers:
        if layer.params():
            layer.need_input_grad = False
            break
    return CnnModel(spec, layers, reference=reference)


def _forward(model: CnnModel, x, train=False, logits=False):
    a = x.astype(model.dtype, copy=False)
    last = len(model.layers) - 1
    for k, layer in enumerate(model.layers):
        if k == last and logits:
            a = layer.forward(a, train=train, linear_only=True)
        else:
            a = layer.forward(a, train=train)
    return a


def forward(model: CnnModel, x, batch: int = 256) -> np.ndarray:
    """Predicted success probabilities for a stack of encoded circuits."""
    x = np.asarray(x)
    if x.ndim == 3:
        return forward(model, x[None], batch)[0:1].reshape(())
    if x.shape[1:] != model.spec.input_shape:
        raise ValueError(f"input shape {x.shape[1:]} does not match network input {model.spec.input_shape}")
    out = [_forward(model, x[k : k + batch]).reshape(-1) for k in range(0, len(x), batch)]
    return np.concatenate(out).astype(np.float64) if out else np.zeros(0)


def bce(s_hat, s_model) -> float:
    """Average binary cross-entropy with the prediction clamped away from 0 and 1."""
    s_model = np.clip(np.asarray(s_model, dtype=np.float64), CLAMP, 1 - CLAMP)
    s_hat = np.asarray(s_hat, dtype=np.float64)
    return float(-np.mean(s_hat * np.log(s_model) + (1 - s_hat) * np.log1p(-s_model)))


def binary_entropy(s) -> float:
    """Average entropy of the per-circuit two-outcome distributions (floor of the BCE)."""
    return bce(s, s)


def loss_and_gradients(model: CnnModel, x, s_hat):
    """(average BCE, gradient list aligned with ``model.params()``)."""
    s_hat = np.asarray(s_hat, dtype=np.float64)
    if len(s_hat) == 0:
        raise ValueError("empty batch")
    z = _forward(model, x, train=True, logits=True).reshape(-1)
    s = sigmoid(z.astype(np.float64))
    loss = bce(s_hat, s)
    if not np.isfinite(loss):
        raise NumericalError("non-finite training loss")
    grad = ((s - s_hat) / len(s_hat)).astype(model.dtype).reshape(-1, 1)
    for layer in reversed(model.layers):
        grad = layer.backward(grad)
        if grad is None:
            break
    return loss, [g.copy() for g in model.grads()]


def evaluate_loss(model: CnnModel, x, s_hat) -> float:
    return bce(s_hat, forward(model, x))


def _logit(p):
    p = min(max(p, 1e-4), 1 - 1e-4)
    return float(np.log(p / (1 - p)))


def train(spec: CnnSpec, train_split, validate_split=None, epochs: int | None = None, dtype=np.float32,
          initial: CnnModel | None = None) -> CnnModel:
    """Mini-batch Adam on average BCE.

    ``train_split`` and ``validate_split`` are ``(tensors, s_hat)`` pairs.
    With ``spec.patience`` set and a validation split, training stops once
    the validation loss has not improved for ``patience`` epochs and the
    best-epoch weights are restored.
    """
    x, y = train_split
    if len(y) == 0:
        from ..errors import EmptyTrainingSplit

        raise EmptyTrainingSplit("no training records")
    y = np.asarray(y, dtype=np.float64)
    rng = np.random.default_rng(spec.seed)
    model = initial.copy() if initial is not None else build_model(spec, rng, dtype)
    if initial is None:
        model.layers[-1].b[...] = _logit(float(y.mean()))
    state = AdamState(lr=spec.lr)
    epochs = spec.epochs if epochs is None else epochs
    use_val = validate_split is not None and len(validate_split[1]) > 0
    best = (np.inf, None, 0)
    model.history = []
    for epoch in range(epochs):
        perm = rng.permutation(len(y))
        total = 0.0
        for start in range(0, len(y), spec.batch_size):
            idx = np.sort(perm[start : start + spec.batch_size])
            loss, grads = loss_and_gradients(model, x[idx], y[idx])
            adam_step(state, model.params(), grads)
            total += loss * len(idx)
        entry = {"epoch": epoch + 1, "train_loss": total / len(y)}
        if use_val:
            entry["validate_loss"] = evaluate_loss(model, *validate_split)
            if entry["validate_loss"] < best[0]:
                best = (entry["validate_loss"], [p.copy() for p in model.params()], epoch + 1)
        model.history.append(entry)
        state.lr *= spec.lr_decay
        if use_val and spec.patience is not None and epoch + 1 - best[2] >= spec.patience:
            break
    if use_val and spec.patience is not None and best[1] is not None:
        model.set_params(best[1])
        model.best_epoch = best[2]
    else:
        model.best_epoch = len(model.history)
    return model


def train_final(spec: CnnSpec, train_split, validate_split, dtype=np.float32):
    """Tune the epoch count on the validation split, then retrain on both splits."""
    probe = train(spec, train_split, validate_split, dtype=dtype)
    x = np.concatenate([train_split[0], validate_split[0]])
    y = np.concatenate([np.asarray(train_split[1]), np.asarray(validate_split[1])])
    final = train(spec, (x, y), None, epochs=probe.best_epoch, dtype=dtype)
    final.best_epoch = probe.best_epoch
    return final, probe
