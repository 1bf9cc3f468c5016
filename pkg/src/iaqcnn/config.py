"""Flat ``key = value`` run configuration shared by every CLI command."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

from .data import SynthConfig
from .errors import ConfigError
from .noise import NoiseSpec
from .pipeline import PreprocessConfig
from .train import GradMethod, TrainConfig


@dataclass
class RunConfig:
    # randomness
    seed: int = 42
    noise_seed: int = -1  # -1: reuse seed
    # paths
    out: str = "out"
    data: str = ""
    features: str = ""
    checkpoint: str = ""
    # synthetic data
    patients: int = 28
    slices_per_patient: int = 24
    image_size: int = 64
    contrast: float = 1.0
    # preprocessing
    modality: str = "t1gd"
    k_slices: int = 10
    score_size: int = 64
    input_size: int = 16
    pca_var: float = 0.95
    d_max: int = 18
    clip: float = 3.0
    split_train: float = 0.7
    split_val: float = 0.15
    split_test: float = 0.15
    # model / training
    levels: int = 1
    epochs: int = 60
    batch_size: int = 16
    lr_init: float = 3e-3
    lr_min: float = 2e-4
    lr_factor: float = 0.5
    lr_patience: int = 3
    early_stop_patience: int = 5
    grad_method: str = "ADJOINT"
    # noise
    image_sigma: float = 0.0
    gate_sigma: float = 0.0
    # evaluation
    eval_split: str = "test"

    @property
    def resolved_noise_seed(self) -> int:
        return self.seed if self.noise_seed < 0 else self.noise_seed

    def validate(self) -> "RunConfig":
        if self.modality not in ("t1gd", "fused", "synth"):
            raise ConfigError(f"modality must be t1gd, fused or synth, got {self.modality!r}")
        if self.eval_split not in ("train", "val", "test"):
            raise ConfigError(f"eval_split must be train, val or test, got {self.eval_split!r}")
        if self.levels < 1:
            raise ConfigError("levels must be >= 1")
        if self.k_slices < 1 or self.score_size < 1 or self.input_size < 1 or self.d_max < 1:
            raise ConfigError("k_slices, score_size, input_size and d_max must be >= 1")
        if not 0 < self.pca_var <= 1:
            raise ConfigError(f"pca_var must lie in (0, 1], got {self.pca_var}")
        if not self.clip > 0:
            raise ConfigError(f"clip must be > 0, got {self.clip}")
        fr = (self.split_train, self.split_val, self.split_test)
        if any(f <= 0 for f in fr) or abs(sum(fr) - 1) > 1e-9:
            raise ConfigError(f"split fractions must be positive and sum to 1, got {fr}")
        try:
            GradMethod(self.grad_method)
        except ValueError:
            raise ConfigError(f"unknown grad_method {self.grad_method!r}") from None
        self.noise()
        self.train_config()
        self.synth_config().validate()
        return self

    def noise(self) -> NoiseSpec:
        return NoiseSpec(self.image_sigma, self.gate_sigma, self.resolved_noise_seed)

    def train_config(self, gate_sigma: float | None = None) -> TrainConfig:
        return TrainConfig(
            epochs=self.epochs, batch_size=self.batch_size, lr_init=self.lr_init, lr_min=self.lr_min,
            lr_factor=self.lr_factor, lr_patience=self.lr_patience,
            early_stop_patience=self.early_stop_patience, seed=self.seed,
            gate_noise_sigma=self.gate_sigma if gate_sigma is None else gate_sigma,
            noise_seed=self.resolved_noise_seed, grad_method=self.grad_method,
        )

    def preprocess_config(self) -> PreprocessConfig:
        return PreprocessConfig(self.modality, self.k_slices, self.score_size, self.input_size,
                                self.pca_var, self.d_max, self.clip,
                                (self.split_train, self.split_val, self.split_test))

    def synth_config(self) -> SynthConfig:
        return SynthConfig(n_patients=self.patients, slices_per_patient=self.slices_per_patient,
                           image_size=self.image_size, contrast=self.contrast, seed=self.seed)

    # -- text form --------------------------------------------------------

    def to_text(self) -> str:
        return "".join(f"{f.name} = {getattr(self, f.name)}\n" for f in fields(self))

    def with_overrides(self, values: dict) -> "RunConfig":
        typed = {}
        kinds = {f.name: type(f.default) for f in fields(self)}
        for key, raw in values.items():
            key = key.replace("-", "_")
            if key not in kinds:
                raise ConfigError(f"unknown config key {key!r}")
            typed[key] = _coerce(key, raw, kinds[key])
        return dataclasses.replace(self, **typed)

    @classmethod
    def from_text(cls, text: str, base: "RunConfig | None" = None) -> "RunConfig":
        values = {}
        for lineno, line in enumerate(text.splitlines(), start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"config line {lineno}: expected 'key = value', got {line!r}")
            k, v = (s.strip() for s in line.split("=", 1))
            values[k] = v
        return (base or cls()).with_overrides(values)

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file {p} not found")
        return cls.from_text(p.read_text(encoding="utf-8"))


def _coerce(key: str, raw, kind):
    if not isinstance(raw, str):
        return kind(raw)
    try:
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
    except ValueError:
        raise ConfigError(f"config key {key}: cannot parse {raw!r} as {kind.__name__}") from None
    return raw
