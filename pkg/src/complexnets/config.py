"""Experiment configuration: YAML on disk, dataclasses in memory."""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import yaml

from .data import Dataset, gen_manifold, load_tabular, split
from .graphgen import FamilyParams, InfeasibleError, mlp_hidden_size, sbm_preset
from .train import EVAL_SEEDS, HPO_SEEDS, Family, TrainConfig

__all__ = [
    "SCHEMA_VERSION",
    "ConfigError",
    "DatasetSpec",
    "FamilySpec",
    "SweepSpec",
    "RobustnessSpec",
    "ExperimentConfig",
    "load_config",
    "default_config",
]

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    pass


def _build(cls, d: dict | None, what: str):
    d = dict(d or {})
    known = {f.name for f in fields(cls)}
    extra = set(d) - known
    if extra:
        raise ConfigError(f"{what}: unknown keys {sorted(extra)}")
    try:
        return cls(**d)
    except (TypeError, ValueError) as err:
        raise ConfigError(f"{what}: {err}") from None


@dataclass
class DatasetSpec:
    kind: str = "swiss_roll"  # swiss_roll | s_curve | tabular
    m: int = 2700
    n_classes: int = 3
    n_reps: int = 3
    sigma: float = 0.0
    seed: int = 0
    sizes: list[int] = field(default_factory=lambda: [1350, 675, 675])
    split_seed: int = 0
    shuffle_classes: bool = False
    path: str = ""  # tabular only
    label_column: str = "label"

    def __post_init__(self):
        if self.kind not in ("swiss_roll", "s_curve", "tabular"):
            raise ValueError(f"unknown dataset kind {self.kind!r}")
        if len(self.sizes) != 3:
            raise ValueError("sizes needs three entries (train, val, test)")
        self.sizes = [int(s) for s in self.sizes]

    @property
    def n_features(self) -> int:
        if self.kind == "tabular":
            return self.build().dim
        return 3

    def build(self) -> Dataset:
        if self.kind == "tabular":
            ds = load_tabular(self.path, self.label_column)
        else:
            ds = gen_manifold(
                self.kind, self.m, self.n_classes, self.n_reps, self.sigma, self.seed, self.shuffle_classes
            )
        return split(ds, tuple(self.sizes), self.split_seed)


@dataclass
class FamilySpec:
    name: str
    kind: str
    ordering: str = "random"
    p: float = 0.5
    communities: int = 4
    p_intra: float | None = None
    q_inter: float | None = None
    preset: str = ""  # sbm only: assortative | disassortative
    layer_sizes: list[int] = field(default_factory=list)

    def __post_init__(self):
        if self.preset not in ("", "assortative", "disassortative"):
            raise ValueError(f"unknown sbm preset {self.preset!r}")
        if self.kind == "sbm" and not self.preset and (self.p_intra is None or self.q_inter is None):
            raise ValueError(f"family {self.name}: sbm needs p_intra/q_inter or a preset")

    def family(self, n: int, l: int) -> Family:
        p_intra, q_inter = self.p_intra or 0.0, self.q_inter or 0.0
        if self.kind == "sbm" and self.preset:
            p_intra, q_inter = sbm_preset(n, l, self.communities, self.preset == "assortative")
        params = FamilyParams(
            self.kind,
            p=self.p,
            communities=self.communities,
            p_intra=p_intra,
            q_inter=q_inter,
            layer_sizes=list(self.layer_sizes),
        )
        return Family(self.name, params, self.ordering)


@dataclass
class SweepSpec:
    sizes: list[int] = field(default_factory=lambda: [32, 64, 128])
    densities: list[float] = field(default_factory=lambda: [0.05, 0.09, 0.15])
    lr: float = 0.03
    batch_size: int = 64
    seeds: list[int] = field(default_factory=lambda: list(range(5)))


@dataclass
class RobustnessSpec:
    fractions: list[float] = field(default_factory=lambda: [0.0, 0.1, 0.2, 0.3, 0.4, 0.5])
    trials: int = 1
    seed: int = 0


@dataclass
class ExperimentConfig:
    schema_version: int = SCHEMA_VERSION
    n: int = 128
    l: int | None = None  # None: edge count of the one-hidden-layer MLP with n nodes
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    families: list[FamilySpec] = field(default_factory=list)
    lr_grid: list[float] = field(default_factory=lambda: [0.03, 0.01, 0.003, 0.001])
    bs_grid: list[int] = field(default_factory=lambda: [32, 64])
    hpo_seeds: list[int] = field(default_factory=lambda: list(HPO_SEEDS))
    eval_seeds: list[int] = field(default_factory=lambda: list(EVAL_SEEDS))
    train: TrainConfig = field(default_factory=TrainConfig)
    sweep: SweepSpec = field(default_factory=SweepSpec)
    robustness: RobustnessSpec = field(default_factory=RobustnessSpec)
    posthoc_correction: str = "none"

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        version = d.get("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {version} (expected {SCHEMA_VERSION})")
        nested = {
            "dataset": _build(DatasetSpec, d.pop("dataset", None), "dataset"),
            "train": _build(TrainConfig, d.pop("train", None), "train"),
            "sweep": _build(SweepSpec, d.pop("sweep", None), "sweep"),
            "robustness": _build(RobustnessSpec, d.pop("robustness", None), "robustness"),
            "families": [_build(FamilySpec, f, f"family {i}") for i, f in enumerate(d.pop("families", []) or [])],
        }
        cfg = _build(cls, d, "config")
        for k, v in nested.items():
            setattr(cfg, k, v)
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        return asdict(self)

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:12]

    @property
    def n_in(self) -> int:
        return self.dataset.n_features

    @property
    def n_out(self) -> int:
        return self.dataset.n_classes

    @property
    def edges(self) -> int:
        if self.l is not None:
            return self.l
        h = mlp_hidden_size(self.n, self.n_in, self.n_out)
        return self.n_in * h + h * self.n_out

    def resolved_families(self) -> list[Family]:
        """Families bound to (n, edges); raises ConfigError if any cannot share them."""
        out = []
        for spec in self.families:
            try:
                fam = spec.family(self.n, self.edges)
            except (InfeasibleError, ValueError) as err:
                raise ConfigError(f"family {spec.name}: {err}") from None
            if spec.kind == "mlp":
                sizes = spec.layer_sizes or [self.n_in, self.n - self.n_in - self.n_out, self.n_out]
                implied = sum(a * b for a, b in zip(sizes, sizes[1:]))
                if sum(sizes) != self.n or implied != self.edges:
                    raise ConfigError(
                        f"family {spec.name}: mlp layers {sizes} give N={sum(sizes)}, L={implied}; "
                        f"config has N={self.n}, L={self.edges}"
                    )
            out.append(fam)
        return out

    def validate(self) -> None:
        names = [f.name for f in self.families]
        if len(set(names)) != len(names):
            raise ConfigError("family names must be unique")
        if self.posthoc_correction not in ("none", "holm"):
            raise ConfigError(f"unknown posthoc_correction {self.posthoc_correction!r}")
        if not self.lr_grid or not self.bs_grid:
            raise ConfigError("hyperparameter grids must be non-empty")
        if set(self.hpo_seeds) & set(self.eval_seeds):
            raise ConfigError("evaluation seeds must differ from HPO seeds")


def load_config(path) -> ExperimentConfig:
    try:
        raw = yaml.safe_load(Path(path).read_text())
    except (OSError, yaml.YAMLError) as err:
        raise ConfigError(f"cannot read config {path}: {err}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return ExperimentConfig.from_dict(raw)


def default_config() -> ExperimentConfig:
    """The six-family comparison at N = 128, L = 732."""
    fams = [
        FamilySpec("ba", "ba"),
        FamilySpec("er", "er"),
        FamilySpec("ws-p.5", "ws", p=0.5),
        FamilySpec("ws-p.7", "ws", p=0.7),
        FamilySpec("ws-p.9", "ws", p=0.9),
        FamilySpec("mlp-h1", "mlp"),
    ]
    return ExperimentConfig(families=fams)
