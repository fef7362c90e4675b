"""Run configuration: defaults, presets and the flat ``key = value`` file format.

Config file grammar: one ``key = value`` pair per line; blank lines and lines
starting with ``#`` are ignored; keys are :class:`RunConfig` field names.
Later sources override earlier ones (preset < file < CLI flags).
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

from .exceptions import ConfigurationError

MODES = ("coegan", "nslc", "nsgc")
DATASETS = ("idx-images", "gaussian-mixture-2d", "synthetic-shapes-8x8")


@dataclass
class RunConfig:
    mode: str = "nslc"
    seed: int = 0
    generations: int = 50
    generator_population: int = 10
    discriminator_population: int = 10
    add_rate: float = 0.3
    remove_rate: float = 0.1
    change_rate: float = 0.1
    width_min: int = 32
    width_max: int = 256
    tournament_k: int = 2
    fid_samples: int = 1024
    genome_limit: int = 4
    species: int = 3
    neighborhood: int = 3
    archive_probability: float = 0.1
    batch_size: int = 64
    batches: int = 50
    learning_rate: float = 0.001
    adam_beta1: float = 0.5
    adam_beta2: float = 0.999
    latent_dim: int = 100
    dataset: str = "synthetic-shapes-8x8"
    dataset_path: str = ""
    image_size: int = 0
    dataset_samples: int = 2048
    mixture_components: int = 8
    mixture_radius: float = 0.8
    mixture_std: float = 0.05
    extractor: str = "flatten"
    extractor_dim: int = 64
    extractor_seed: int = 0
    out_dir: str = "runs"
    n_jobs: int = 1
    checkpoint_every: int = 0
    sample_every: int = 5

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.mode not in MODES:
            raise ConfigurationError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.dataset not in DATASETS:
            raise ConfigurationError(f"dataset must be one of {DATASETS}, got {self.dataset!r}")
        for name in ("add_rate", "remove_rate", "change_rate", "archive_probability"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigurationError(f"{name} must be a probability")
        for name in ("generator_population", "discriminator_population"):
            if getattr(self, name) < 2:
                raise ConfigurationError(f"{name} must be at least 2")
        if self.genome_limit < 1:
            raise ConfigurationError("genome_limit must be at least 1")
        for name in ("batch_size", "fid_samples", "latent_dim", "neighborhood", "species",
                     "tournament_k", "width_min", "n_jobs"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be positive")
        if self.fid_samples < 2:
            raise ConfigurationError("fid_samples must be at least 2")
        if self.width_max < self.width_min:
            raise ConfigurationError("width_max must be >= width_min")
        if self.generations < 0 or self.batches < 0:
            raise ConfigurationError("generations and batches must be non-negative")
        if not (0.0 <= self.adam_beta1 < 1.0 and 0.0 <= self.adam_beta2 < 1.0):
            raise ConfigurationError("Adam betas must lie in [0, 1)")
        if self.learning_rate <= 0:
            raise ConfigurationError("learning_rate must be positive")
        pop = min(self.generator_population, self.discriminator_population)
        if self.mode == "coegan" and self.species > 2 * pop:
            raise ConfigurationError("more species than individuals")
        if self.tournament_k > pop:
            raise ConfigurationError("tournament_k exceeds the population size")

    @property
    def width_range(self):
        return (self.width_min, self.width_max)

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def to_text(self):
        return "".join(f"{f.name} = {getattr(self, f.name)}\n" for f in fields(self))


# Laptop-scale settings; everything not listed keeps the paper-scale default.
DESK_PRESET = dict(
    generations=20,
    generator_population=5,
    discriminator_population=5,
    width_min=32,
    width_max=64,
    fid_samples=256,
    batch_size=32,
    batches=30,
    latent_dim=32,
    image_size=14,
    dataset_samples=1024,
)

PRESETS = {"paper": {}, "desk": DESK_PRESET}


def _coerce(name, raw):
    types = {f.name: f.type for f in fields(RunConfig)}
    if name not in types:
        raise ConfigurationError(f"unknown config key {name!r}")
    kind = types[name]
    try:
        if kind in ("int", int):
            return int(raw)
        if kind in ("float", float):
            return float(raw)
    except ValueError as exc:
        raise ConfigurationError(f"bad value for {name}: {raw!r}") from exc
    return str(raw)


def parse_overrides(lines):
    values = {}
    for lineno, line in enumerate(lines, 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigurationError(f"line {lineno}: expected key = value, got {line!r}")
        key, _, raw = line.partition("=")
        key = key.strip().replace("-", "_")
        values[key] = _coerce(key, raw.strip())
    return values


def load_config(path=None, preset="paper", **overrides):
    """Build a :class:`RunConfig` from a preset, an optional file and overrides."""
    if preset not in PRESETS:
        raise ConfigurationError(f"unknown preset {preset!r}")
    values = dict(PRESETS[preset])
    if path is not None:
        values.update(parse_overrides(Path(path).read_text().splitlines()))
    values.update({k: v for k, v in overrides.items() if v is not None})
    return RunConfig(**values)
