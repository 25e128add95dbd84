"""Experiment configuration and the sample / simulate / train / evaluate / sbm commands.

Every random draw comes from ``stream(seed, name)``: a generator seeded with
``SeedSequence([seed, crc32(name)])``.  Stream names are fixed strings
("sample/<grid index>", "error_model", "splits", "shots/<n>", "nested",
"cnn/search", "sbm/pass2", ...), so adding a worker or reordering commands never shifts
another command's draws.
"""
from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import repeat
from pathlib import Path

import numpy as np

from . import plotting
from .capability_simulator import (
    CapabilityDataset, build_dataset, exact_success_probability, model_hash, nested_subsets, shots_from_json,
    shots_to_json,
)
from .device_circuit import DeviceGraph, builtin_device, load_device, parse_circuit, serialize_circuit
from .encoder import encode_batch, strip_sensitivity
from .erm import ErmParams, device_hash, erm_predict_many, fit_erm_arrays, load_device_erm, save_erm
from .errors import ConfigError, DataError, DepthExceeded, ModelKindMismatch, WidthExceeded
from .evaluation import MetricsReport, metrics_report, sbm_metrics
from .mirror_sampler import PERIODIC, RANDOMIZED, SamplerConfig, sample_mirror_circuit
from .neuralnet import CnnSpec, forward, load_model, save_model, train_final
from .neuralnet.io import MAGIC as CNN_MAGIC
from .neuralnet.search import Candidates, SearchSpace, hyperparameter_search
from .noise_models import (
    DoubleTrouble, GrowingPains, load_error_model, sample_biased_lps, sample_coherent_model, sample_uniform_lps,
    save_error_model,
)

log = logging.getLogger("qcapnet")

MODEL_MODES = ("cnn", "erm-fit", "erm-load", "sbm")
ERROR_VARIANTS = ("biased_lps", "uniform_lps", "growing_pains", "double_trouble", "coherent")


def stream(seed: int, name: str) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), zlib.crc32(name.encode())]))


def sha256_text(text) -> str:
    data = text.encode() if isinstance(text, str) else text
    return hashlib.sha256(data).hexdigest()


# -- configuration ------------------------------------------------------------

@dataclass
class SamplerGrid:
    kind: str = RANDOMIZED
    widths: list = field(default_factory=lambda: [1])
    depths: list = field(default_factory=lambda: [4])
    xi: float = 0.25
    count: int = 0
    germ_lengths: list = field(default_factory=lambda: [1])

    def check(self, device: DeviceGraph) -> None:
        if self.kind not in (RANDOMIZED, PERIODIC):
            raise ConfigError(f"unknown circuit kind {self.kind!r}")
        if self.count < 0:
            raise ConfigError("circuit count must be non-negative")
        if not self.widths or not self.depths:
            raise ConfigError("width and depth grids must be non-empty")
        for w in self.widths:
            SamplerConfig(w, 2, self.xi).check(device)
        for d in self.depths:
            SamplerConfig(1, d, self.xi).check(device)
            if self.kind == PERIODIC and not self._germs(d):
                raise ConfigError(f"no germ length in {self.germ_lengths} divides half of depth {d}")

    def _germs(self, depth):
        return [g for g in self.germ_lengths if g >= 1 and (depth // 2) % g == 0]

    def draw(self, device, rng) -> SamplerConfig:
        w = int(rng.choice(self.widths))
        d = int(rng.choice(self.depths))
        germ = int(rng.choice(self._germs(d))) if self.kind == PERIODIC else None
        return SamplerConfig(w, d, self.xi, kind=self.kind, germ_length=germ)


@dataclass
class ExperimentConfig:
    seed: int
    device: str = "t5"
    samplers: list = field(default_factory=list)
    error_model: dict = field(default_factory=lambda: {"variant": "biased_lps"})
    n_shots: list = field(default_factory=lambda: ["inf"])
    splits: list = field(default_factory=lambda: [0.7, 0.2, 0.1])
    nested_sizes: list = field(default_factory=list)
    d_max: int | None = None
    backend: str = "auto"
    model: dict = field(default_factory=lambda: {"mode": "cnn"})
    strip_sensitivity: bool = False
    noisy_test: bool = False
    dataset: str | None = None
    out: str = "out"
    base_dir: str = "."

    @classmethod
    def from_dict(cls, data: dict, base_dir=".") -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        if data.get("seed") is None:
            raise ConfigError("config needs a master seed")
        known = set(cls.__dataclass_fields__) - {"base_dir"}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        data = dict(data)
        try:
            data["samplers"] = [SamplerGrid(**g) for g in data.get("samplers", [])]
        except TypeError as exc:
            raise ConfigError(f"bad sampler entry: {exc}") from None
        cfg = cls(**data, base_dir=str(base_dir))
        cfg.check()
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file {path} does not exist")
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc})") from None
        return cls.from_dict(data, path.parent)

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__ if k != "base_dir"}
        d["samplers"] = [vars(g) for g in self.samplers]
        return d

    def digest(self) -> str:
        """Hash of everything that affects results (the output location does not)."""
        d = {k: v for k, v in self.to_dict().items() if k != "out"}
        return sha256_text(json.dumps(d, sort_keys=True))[:16]

    def resolve(self, path) -> Path:
        p = Path(path)
        return p if p.is_absolute() else Path(self.base_dir) / p

    def get_device(self) -> DeviceGraph:
        spec = self.device
        if isinstance(spec, dict):
            return DeviceGraph.from_dict(spec)
        p = self.resolve(spec)
        if p.suffix == ".json" or p.exists():
            return load_device(p)
        return builtin_device(spec)

    def shots(self) -> list:
        return [shots_from_json(n) for n in self.n_shots]

    def check(self) -> None:
        if not isinstance(self.seed, int):
            raise ConfigError("seed must be an integer")
        if isinstance(self.device, str) and self.device.endswith(".json") and not self.resolve(self.device).exists():
            raise ConfigError(f"device file {self.device} does not exist")
        try:
            device = self.get_device()
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"bad device {self.device!r}: {exc}") from None
        for g in self.samplers:
            g.check(device)
        if not self.n_shots:
            raise ConfigError("n_shots grid must be non-empty")
        for n in self.n_shots:
            if n != "inf" and (not isinstance(n, int) or n < 1):
                raise ConfigError(f"n_shots entries must be positive integers or 'inf', got {n!r}")
        if len(self.splits) != 3 or abs(sum(self.splits) - 1) > 1e-9 or min(self.splits) < 0:
            raise ConfigError("splits must be three non-negative fractions summing to 1")
        if any(n < 1 for n in self.nested_sizes):
            raise ConfigError("nested subset sizes must be positive")
        em = self.error_model
        if "file" in em:
            if not self.resolve(em["file"]).exists():
                raise ConfigError(f"error model file {em['file']} does not exist")
        elif em.get("variant") not in ERROR_VARIANTS:
            raise ConfigError(f"error model variant must be one of {ERROR_VARIANTS}")
        if self.backend not in ("auto", "analytic", "statevector"):
            raise ConfigError(f"unknown backend {self.backend!r}")
        mode = self.model.get("mode")
        if mode not in MODEL_MODES:
            raise ConfigError(f"model mode must be one of {MODEL_MODES}")
        if mode == "erm-load" and not self.resolve(self.model.get("file", "")).is_file():
            raise ConfigError("erm-load needs an existing rates file")
        if mode == "cnn" and int(self.model.get("budget", 1)) < 1:
            raise ConfigError("search budget must be at least 1")
        if self.dataset is not None and not self.resolve(self.dataset).exists():
            raise ConfigError(f"dataset file {self.dataset} does not exist")
        if self.d_max is not None and self.d_max < max((d for g in self.samplers for d in g.depths), default=0):
            raise ConfigError("d_max is smaller than the deepest sampled circuit")


# -- output directory ---------------------------------------------------------

class OutputDir:
    """Single-writer output directory guarded by a lock file, with a run.log sidecar."""

    def __init__(self, path):
        self.path = Path(path)
        self._lock = self.path / ".lock"
        self._handler = None

    def __enter__(self):
        self.path.mkdir(parents=True, exist_ok=True)
        try:
            fd = os.open(self._lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise ConfigError(f"{self.path} is locked by another run (remove {self._lock} if stale)") from None
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        self._handler = logging.FileHandler(self.path / "run.log")
        self._handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(message)s"))
        log.addHandler(self._handler)
        log.setLevel(logging.INFO)
        return self

    def __exit__(self, *exc):
        log.removeHandler(self._handler)
        self._handler.close()
        self._lock.unlink(missing_ok=True)
        return False

    def write(self, name, data) -> Path:
        p = self.path / name
        p.parent.mkdir(parents=True, exist_ok=True)
        if isinstance(data, bytes):
            p.write_bytes(data)
        else:
            p.write_text(data)
        return p


# -- sample -------------------------------------------------------------------

def sample_circuits(cfg: ExperimentConfig):
    """Circuits and their kinds, drawn from the ``sample`` stream."""
    device = cfg.get_device()
    circuits, kinds = [], []
    for k, grid in enumerate(cfg.samplers):
        rng = stream(cfg.seed, f"sample/{k}")
        for _ in range(grid.count):
            circuits.append(sample_mirror_circuit(grid.draw(device, rng), device, rng))
            kinds.append(grid.kind)
    return circuits, kinds


def dumps_circuits(circuits, kinds) -> str:
    lines = []
    for k, (c, kind) in enumerate(zip(circuits, kinds)):
        lines.append(json.dumps({"circuit_id": f"c{k:06d}", "kind": kind, "width": c.width, "depth": c.depth,
                                 "qubit_subset": list(c.qubits), "circuit": serialize_circuit(c)}, sort_keys=True))
    return "".join(ln + "\n" for ln in lines)


def loads_circuits(text: str, device: DeviceGraph):
    circuits, kinds = [], []
    for line in text.splitlines():
        if line.strip():
            rec = json.loads(line)
            circuits.append(parse_circuit(rec["circuit"], device))
            kinds.append(rec["kind"])
    return circuits, kinds


def cmd_sample(cfg: ExperimentConfig, out: OutputDir) -> dict:
    circuits, kinds = sample_circuits(cfg)
    text = dumps_circuits(circuits, kinds)
    per_width, per_kind = {}, {}
    for c, kind in zip(circuits, kinds):
        per_width[str(c.width)] = per_width.get(str(c.width), 0) + 1
        per_kind[kind] = per_kind.get(kind, 0) + 1
    manifest = {
        "seed": cfg.seed, "config_hash": cfg.digest(), "device_hash": device_hash(cfg.get_device()),
        "count": len(circuits), "per_width": dict(sorted(per_width.items(), key=lambda kv: int(kv[0]))),
        "per_kind": per_kind, "circuits_sha256": sha256_text(text),
    }
    out.write("circuits.jsonl", text)
    out.write("manifest.json", json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    log.info("sampled %d circuits", len(circuits))
    return manifest


# -- simulate -----------------------------------------------------------------

def make_error_model(cfg: ExperimentConfig, device: DeviceGraph):
    em = cfg.error_model
    if "file" in em:
        return load_error_model(cfg.resolve(em["file"]))
    rng = stream(em.get("seed", cfg.seed), "error_model")
    variant = em["variant"]
    if variant == "biased_lps":
        return sample_biased_lps(device, rng, em.get("max_1q", 0.0025), em.get("max_2q", 0.01))
    if variant == "coherent":
        return sample_coherent_model(device, rng, em.get("target_infidelity", 0.05))
    base = sample_uniform_lps(device, rng, em.get("hi", 1e-4))
    if variant == "uniform_lps":
        return base
    if variant == "growing_pains":
        return GrowingPains(base.rates, em.get("max_ratio", 9.0), em.get("tau", 1 / 350))
    return DoubleTrouble(base.rates, em.get("eps_add", 0.005))


def label_circuits(circuits, model, jobs: int = 1) -> list:
    """Exact success probabilities, optionally spread over worker processes."""
    if jobs <= 1 or len(circuits) < 2 * jobs:
        return [exact_success_probability(c, model) for c in circuits]
    with ProcessPoolExecutor(jobs) as pool:
        return list(pool.map(exact_success_probability, circuits, repeat(model), chunksize=max(1, len(circuits) // (4 * jobs))))


def shots_tag(n) -> str:
    return str(shots_to_json(n))


def simulate_datasets(cfg: ExperimentConfig, circuits, kinds, jobs: int = 1):
    """Parent dataset with exact labels, per-shot-count copies and nested subsets.

    Returns ``(error model, {file name: dataset})``.
    """
    device = cfg.get_device()
    model = make_error_model(cfg, device)
    if cfg.backend == "analytic" and not model.stochastic:
        raise ModelKindMismatch("analytic backend requested for a coherent error model")
    if cfg.backend == "statevector" and model.stochastic:
        raise ModelKindMismatch("statevector backend requested for a stochastic error model")
    d_max = cfg.d_max or max((c.depth for c in circuits), default=2)
    meta = {"seed": cfg.seed, "config_hash": cfg.digest(), "circuits_sha256": sha256_text(dumps_circuits(circuits, kinds))}
    parent = build_dataset(circuits, model, None, cfg.splits, stream(cfg.seed, "splits"), d_max=d_max, kinds=kinds,
                           backend=cfg.backend, meta=meta, device=device, labels=label_circuits(circuits, model, jobs))
    noisy = ("train", "validate", "test") if cfg.noisy_test else ("train", "validate")
    out = {}
    for n in cfg.shots():
        ds = parent if n == math.inf else parent.with_shots(n, stream(cfg.seed, f"shots/{shots_tag(n)}"), noisy)
        out[f"dataset_shots-{shots_tag(n)}.jsonl"] = ds
        if cfg.nested_sizes:
            for size, sub in nested_subsets(ds, cfg.nested_sizes, stream(cfg.seed, "nested")).items():
                sub.meta["nested_size"] = size
                out[f"dataset_n{size}_shots-{shots_tag(n)}.jsonl"] = sub
    return model, out


def cmd_simulate(cfg: ExperimentConfig, out: OutputDir, jobs: int = 1) -> dict:
    circ_path = out.path / "circuits.jsonl"
    if circ_path.exists():
        circuits, kinds = loads_circuits(circ_path.read_text(), cfg.get_device())
    else:
        cmd_sample(cfg, out)
        circuits, kinds = sample_circuits(cfg)
    model, datasets = simulate_datasets(cfg, circuits, kinds, jobs)
    save_error_model(model, out.path / "error_model.json", {"seed": cfg.seed, "config_hash": cfg.digest()})
    for name, ds in datasets.items():
        out.write(name, ds.dumps())
    log.info("wrote %d dataset files under model %s", len(datasets), model_hash(model))
    return {name: len(ds) for name, ds in datasets.items()}


# -- models -------------------------------------------------------------------

DEFAULT_ARCHITECTURE = [
    {"kind": "conv", "kernels": 16, "shape": [1, 2], "activation": "relu"},
    {"kind": "conv", "kernels": 16, "shape": [1, 1], "activation": "relu"},
    {"kind": "pool", "shape": [1, 16], "mode": "avg"},
    {"kind": "flatten"},
    {"kind": "dense", "units": 32, "activation": "relu"},
    {"kind": "dense", "units": 1, "activation": "sigmoid"},
]
DEFAULT_TRAINING = {"epochs": 200, "batch_size": 32, "lr": 0.003, "patience": 15, "lr_decay": 0.985}


def default_spec(input_shape, **overrides) -> CnnSpec:
    settings = {**DEFAULT_TRAINING, **overrides}
    return CnnSpec(input_shape, [dict(layer) for layer in settings.pop("layers", DEFAULT_ARCHITECTURE)], **settings)


def search_space(model_cfg: dict, input_shape):
    if "space" in model_cfg:
        return SearchSpace(**{k: tuple(v) if isinstance(v, list) else v for k, v in model_cfg["space"].items()})
    arch = model_cfg.get("architecture", {})
    return Candidates([default_spec(input_shape, **arch)])


def encode_dataset(dataset: CapabilityDataset, d_max: int, stripped: bool = False) -> np.ndarray:
    x = encode_batch(dataset.circuits(), d_max, dataset.device)
    return strip_sensitivity(x) if stripped else x


def leakage_audit(dataset: CapabilityDataset) -> dict:
    ids = {name: set(dataset.split(name).ids()) for name in ("train", "validate", "test")}
    overlap = (ids["train"] & ids["test"]) | (ids["validate"] & ids["test"]) | (ids["train"] & ids["validate"])
    if overlap:
        raise DataError(f"circuit ids appear in more than one split: {sorted(overlap)[:5]}")
    return {**{f"n_{k}": len(v) for k, v in ids.items()}, "overlap": 0, "evaluated_split": "test"}


def dataset_digest(dataset: CapabilityDataset) -> str:
    return sha256_text(dataset.dumps())[:16]


def train_cnn(dataset: CapabilityDataset, model_cfg: dict, seed: int, d_max=None, stripped=False):
    """Tuner over train/validate, then a final retrain on train plus validate."""
    d_max = d_max or dataset.d_max
    tr, va = dataset.split("train"), dataset.split("validate")
    xtr, xva = encode_dataset(tr, d_max, stripped), encode_dataset(va, d_max, stripped)
    train_split, val_split = (xtr, tr.s_hat()), (xva, va.s_hat())
    space = search_space(model_cfg, xtr.shape[1:])
    budget = int(model_cfg.get("budget", 1))
    spec, trials = hyperparameter_search(space, train_split, val_split, budget, stream(seed, "cnn/search"), xtr.shape[1:])
    model, _ = train_final(spec, train_split, val_split)
    model.meta = {
        "seed": seed, "dataset_hash": dataset_digest(dataset), "device_hash": device_hash(dataset.device),
        "d_max": d_max, "stripped": bool(stripped), "max_width": max((r["width"] for r in dataset.records), default=0),
        "kinds": sorted({r.get("kind", RANDOMIZED) for r in dataset.records}),
        "trials": [{"validate_loss": t.validate_loss, "parameters": t.parameters, "best_epoch": t.best_epoch} for t in trials],
    }
    return model


def fit_erm_model(dataset: CapabilityDataset) -> ErmParams:
    """f-ERM on train plus validate (it has no hyperparameters to tune)."""
    part = dataset.splits("train", "validate")
    return fit_erm_arrays(part.circuits(), part.s_hat(), dataset.device).params


def load_any_model(path):
    path = Path(path)
    blob = path.read_bytes()
    if blob[: len(CNN_MAGIC)] == CNN_MAGIC:
        return load_model(path)
    return load_device_erm(path)


def _check_cnn_fits(model, dataset: CapabilityDataset) -> None:
    n, d_max, _ = model.spec.input_shape
    deepest = max((r["depth"] for r in dataset.records), default=0)
    if deepest > d_max or dataset.d_max > d_max:
        raise DepthExceeded(f"dataset has depth up to {max(deepest, dataset.d_max)} but the network was built for "
                            f"d_max = {d_max}; re-encode and retrain at a larger d_max")
    if dataset.device.n != n:
        raise WidthExceeded(f"dataset device has {dataset.device.n} qubits, network expects {n}")


def predictor(model):
    """Callable mapping a dataset to predicted success probabilities."""
    if isinstance(model, ErmParams):
        return lambda ds: erm_predict_many(model, ds.circuits())

    def run(ds):
        _check_cnn_fits(model, ds)
        x = encode_dataset(ds, model.spec.input_shape[1], model.meta.get("stripped", False))
        return forward(model, x)

    return run


def ood_tags(model, dataset: CapabilityDataset) -> list:
    """Reasons the dataset lies outside what a CNN saw in training."""
    if isinstance(model, ErmParams):
        return []
    reasons = []
    max_w = model.meta.get("max_width")
    widest = max((r["width"] for r in dataset.records), default=0)
    if max_w is not None and widest > max_w:
        reasons.append(f"width {widest} exceeds training width {max_w}")
    seen = set(model.meta.get("kinds", []))
    new = sorted({r.get("kind", RANDOMIZED) for r in dataset.records} - seen) if seen else []
    if new:
        reasons.append(f"circuit kinds {new} absent from training data")
    return reasons


def evaluate(model, dataset: CapabilityDataset, split="test", dataset_id="", model_id="") -> MetricsReport:
    audit = leakage_audit(dataset)
    part = dataset if split == "all" else dataset.split(split)
    if len(part) == 0:
        raise DataError(f"dataset has no {split!r} records to evaluate")
    audit["evaluated_split"] = split
    reasons = ood_tags(model, dataset)
    extra = {"audit": audit, "out_of_distribution": bool(reasons), "ood_reasons": reasons}
    if not isinstance(model, ErmParams):
        extra["seed"] = model.meta.get("seed")
    return metrics_report(part, predictor(model), dataset_id, model_id, extra)


def write_report(out: OutputDir, report: MetricsReport, stem: str, fmt: str = "csv") -> None:
    out.write(f"{stem}.json", report.to_json())
    out.write(f"{stem}_predictions.{fmt}", report.to_csv() if fmt == "csv" else report.to_jsonl())
    plotting.report_figures(report, out.path / stem)


def load_dataset(cfg: ExperimentConfig, out: OutputDir) -> CapabilityDataset:
    if cfg.dataset is not None:
        return CapabilityDataset.load(cfg.resolve(cfg.dataset))
    default = out.path / f"dataset_shots-{shots_tag(cfg.shots()[0])}.jsonl"
    if not default.exists():
        raise DataError(f"no dataset given and {default} does not exist; run simulate first")
    return CapabilityDataset.load(default)


def cmd_train(cfg: ExperimentConfig, out: OutputDir, fmt: str = "csv") -> MetricsReport:
    dataset = load_dataset(cfg, out)
    mode = cfg.model["mode"]
    data_id = dataset_digest(dataset)
    if mode == "sbm":
        return cmd_sbm(cfg, out, fmt, dataset)
    if mode == "cnn":
        model = train_cnn(dataset, cfg.model, cfg.seed, cfg.d_max, cfg.strip_sensitivity)
        save_model(model, out.path / "model.qcnn")
        model_id = sha256_text((out.path / "model.qcnn").read_bytes())[:16]
    else:
        model = fit_erm_model(dataset) if mode == "erm-fit" else load_device_erm(cfg.resolve(cfg.model["file"]))
        save_erm(model, out.path / "erm.json")
        model_id = sha256_text((out.path / "erm.json").read_text())[:16]
    report = evaluate(model, dataset, "test", data_id, model_id)
    report.extra["mode"] = mode
    write_report(out, report, "report", fmt)
    log.info("%s test d_L1 = %.5f", mode, report.d_l1)
    return report


def cmd_evaluate(model_path, dataset_path, out: OutputDir, fmt: str = "csv", split: str = "test") -> MetricsReport:
    model = load_any_model(model_path)
    dataset = CapabilityDataset.load(dataset_path)
    report = evaluate(model, dataset, split, dataset_digest(dataset), sha256_text(Path(model_path).read_bytes())[:16])
    write_report(out, report, "evaluation", fmt)
    return report


def cmd_sbm(cfg: ExperimentConfig, out: OutputDir, fmt: str = "csv", dataset=None) -> MetricsReport:
    """Second measurement pass with fresh shot noise, scored against the first."""
    dataset = dataset if dataset is not None else load_dataset(cfg, out)
    n = shots_from_json(dataset.meta.get("n_shots", "inf"))
    if n == math.inf:
        n = max((s for s in cfg.shots() if s != math.inf), default=math.inf)
    pass1 = dataset if shots_from_json(dataset.meta.get("n_shots", "inf")) != math.inf else dataset.with_shots(n, stream(cfg.seed, "sbm/pass1"))
    pass2 = dataset.with_shots(n, stream(cfg.seed, "sbm/pass2"))
    pass2.meta["pass"] = 2
    out.write("sbm_pass2.jsonl", pass2.dumps())
    report = sbm_metrics(pass1.split("test"), pass2.split("test"))
    report.extra.update({"mode": "sbm", "n_shots": shots_to_json(n), "seed": cfg.seed})
    write_report(out, report, "report_sbm", fmt)
    return report
