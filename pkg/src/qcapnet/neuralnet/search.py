"""Random hyperparameter search scored by validation loss."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import CnnSpec, build_model, evaluate_loss, train


@dataclass
class SearchSpace:
    conv_layers: tuple = (1, 2)
    kernels: tuple = (8, 20)
    kernel_rows: tuple = (1, 5)  # upper bound is further capped by the qubit count
    kernel_cols: tuple = (2, 16)
    pool_cols: tuple = (4, 8, 16)
    dense_layers: tuple = (1, 2)
    units: tuple = (16, 128)
    lr: tuple = (3e-4, 3e-3)
    batch_size: tuple = (16, 32, 64)
    max_epochs: int = 60
    patience: int = 8

    def sample(self, input_shape, rng, seed: int = 0) -> CnnSpec:
        n = input_shape[0]
        layers = []
        for _ in range(int(rng.integers(self.conv_layers[0], self.conv_layers[1] + 1))):
            rows = int(rng.integers(self.kernel_rows[0], min(n, self.kernel_rows[1]) + 1))
            cols = int(rng.integers(self.kernel_cols[0], self.kernel_cols[1] + 1))
            layers.append({"kind": "conv", "kernels": int(rng.integers(self.kernels[0], self.kernels[1] + 1)),
                           "shape": [rows, cols], "activation": "relu"})
        layers.append({"kind": "pool", "shape": [1, int(rng.choice(self.pool_cols))], "mode": "avg"})
        layers.append({"kind": "flatten"})
        for _ in range(int(rng.integers(self.dense_layers[0], self.dense_layers[1] + 1))):
            layers.append({"kind": "dense", "units": int(rng.integers(self.units[0], self.units[1] + 1)), "activation": "relu"})
        layers.append({"kind": "dense", "units": 1, "activation": "sigmoid"})
        lr = float(np.exp(rng.uniform(np.log(self.lr[0]), np.log(self.lr[1]))))
        return CnnSpec(input_shape, layers, epochs=self.max_epochs, batch_size=int(rng.choice(self.batch_size)),
                       lr=lr, seed=seed, patience=self.patience)

    def contains(self, spec: CnnSpec) -> bool:
        convs = [l for l in spec.layers if l["kind"] == "conv"]
        denses = [l for l in spec.layers if l["kind"] == "dense"][:-1]
        pools = [l for l in spec.layers if l["kind"] == "pool"]
        n = spec.input_shape[0]
        return (
            self.conv_layers[0] <= len(convs) <= self.conv_layers[1]
            and all(self.kernels[0] <= c["kernels"] <= self.kernels[1] for c in convs)
            and all(self.kernel_rows[0] <= c["shape"][0] <= min(n, self.kernel_rows[1]) for c in convs)
            and all(self.kernel_cols[0] <= c["shape"][1] <= self.kernel_cols[1] for c in convs)
            and len(pools) == 1 and pools[0]["shape"][1] in self.pool_cols
            and self.dense_layers[0] <= len(denses) <= self.dense_layers[1]
            and all(self.units[0] <= d["units"] <= self.units[1] for d in denses)
            and self.lr[0] <= spec.lr <= self.lr[1]
            and spec.batch_size in self.batch_size
        )


@dataclass
class Candidates:
    """An explicit finite space: the search draws from these specs uniformly."""

    specs: list

    def sample(self, input_shape, rng, seed: int = 0) -> CnnSpec:
        base = self.specs[int(rng.integers(len(self.specs)))]
        return CnnSpec.from_dict({**base.to_dict(), "seed": seed})

    def contains(self, spec: CnnSpec) -> bool:
        strip = lambda s: {k: v for k, v in s.to_dict().items() if k != "seed"}
        return any(strip(spec) == strip(s) for s in self.specs)


@dataclass
class Trial:
    spec: CnnSpec
    validate_loss: float
    parameters: int
    best_epoch: int


def hyperparameter_search(space, train_split, validate_split, budget: int, rng, input_shape=None):
    """Train ``budget`` sampled specs; return (best spec, all trials).

    Lower validation loss wins; ties go to fewer parameters, then the earlier draw.
    """
    if budget < 1:
        raise ValueError("budget must be at least 1")
    input_shape = input_shape or tuple(train_split[0].shape[1:])
    trials = []
    for k in range(budget):
        spec = space.sample(input_shape, rng, seed=int(rng.integers(2**31)))
        model = train(spec, train_split, validate_split)
        loss = evaluate_loss(model, *validate_split)
        trials.append(Trial(spec, loss, build_model(spec).parameter_count(), model.best_epoch))
    best = min(range(budget), key=lambda k: (trials[k].validate_loss, trials[k].parameters, k))
    return trials[best].spec, trials
