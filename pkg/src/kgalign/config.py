"""Pipeline configuration: defaults < config file < command-line flags."""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .align import TrainConfig
from .errors import ConfigError

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _to_bool(value) -> bool:
    if isinstance(value, bool):
        return value
    text = str(value).strip().lower()
    if text in _TRUE:
        return True
    if text in _FALSE:
        return False
    raise ConfigError(f"expected a boolean, got {value!r}")


@dataclass
class PipelineConfig:
    # inputs (generated under out_dir/inputs when synth is on)
    triples: str = ""
    seeds: str = ""
    extras: str = ""
    activations: str = ""
    test_activations: str = ""
    pairs: str = ""
    out_dir: str = "out"
    synth: bool = False
    # graph building
    relations: str = "HasA"
    strategy: str = "kgtocnn"
    fraction: float = 0.5
    scope: str = "all_images"
    # alignment
    dim: int = 200
    margin: float = 3.0
    learning_rate: float = 10.0
    epochs: int = 2000
    negatives_per_pair: int = 5
    distance: str = "L1"
    weighted_adjacency: bool = False
    ratio: float = 0.9
    # evaluation and projection
    k: int = 200
    threshold: float = 0.0
    label_k: int = 5
    projection: str = "tsne"
    perplexity: float = 30.0
    tsne_iterations: int = 1000
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.fraction <= 1:
            raise ConfigError(f"fraction must be in (0, 1], got {self.fraction}")

    @classmethod
    def resolve(cls, config_file: dict | None = None, flags: dict | None = None) -> "PipelineConfig":
        """Merge built-in defaults, config-file keys and non-None flags, in that order."""
        known = {f.name: f for f in fields(cls)}
        merged = {}
        for source in (config_file or {}, {k: v for k, v in (flags or {}).items() if v is not None}):
            for key, value in source.items():
                key = key.replace("-", "_")
                if key not in known:
                    raise ConfigError(f"unknown configuration key {key!r}")
                merged[key] = value
        typed = {}
        for name, value in merged.items():
            default = known[name].default
            try:
                if isinstance(default, bool):
                    typed[name] = _to_bool(value)
                else:
                    typed[name] = type(default)(value)
            except (TypeError, ValueError):
                raise ConfigError(f"bad value for {name}: {value!r}") from None
        return cls(**typed)

    def relation_set(self) -> set[str]:
        return {r.strip() for r in self.relations.split(",") if r.strip()}

    def train_config(self) -> TrainConfig:
        return TrainConfig(dim=self.dim, margin=self.margin, learning_rate=self.learning_rate,
                           epochs=self.epochs, negatives_per_pair=self.negatives_per_pair,
                           rng_seed=self.seed, distance_for_loss=self.distance,
                           weighted_adjacency=self.weighted_adjacency)

    def check_inputs(self, *names: str) -> None:
        for name in names:
            value = getattr(self, name)
            if not value:
                raise ConfigError(f"missing required input '{name}'")
            if not Path(value).exists():
                raise ConfigError(f"{name} file not found: {value}")

    def as_dict(self) -> dict:
        return asdict(self)
