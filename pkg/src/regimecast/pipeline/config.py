"""Run configuration: defaults, desk-scale profile, flat text format, hashing.

Defaults follow the published hyperparameters (autoencoder 64/32 at lr 1e-3,
transformer 6x8x512 with ff 2048 and 252-day windows, SAC 256/256 at lr 3e-4
with soft updates 0.005 and a 1e5 replay buffer, stage epochs 20/60/50/20,
fine-tuning rates 1e-4 / 1e-5 / 3e-5).  The desk profile shrinks widths and
epoch counts so a full pipeline runs on a desktop CPU in minutes.
"""

from __future__ import annotations

import copy
import dataclasses
import hashlib
from dataclasses import dataclass, field, fields

from ..errors import ConfigError
from ..synthgen import SynthConfig

ABLATION_VARIANTS = ("full", "no-sac", "no-dual", "no-ae")


@dataclass
class AutoencoderSection:
    hidden_dim: int = 64
    latent_dim: int = 32
    lr: float = 1e-3
    epochs: int = 20
    batch_size: int = 64
    patience: int = 3
    val_fraction: float = 0.15


@dataclass
class PathwaySection:
    n_layers: int = 6
    n_heads: int = 8
    d_model: int = 512
    d_ff: int = 2048
    dropout: float = 0.1
    lr: float = 1e-4
    seq_len: int = 252
    stock_embed_dim: int = 16
    epochs: int = 60
    batch_size: int = 16
    window_stride: int = 1
    normal_percentile: float = 95.0
    event_percentile: float = 90.0


@dataclass
class SacSection:
    hidden_dim: int = 256
    lr: float = 3e-4
    gamma: float = 0.99
    tau_soft: float = 0.005
    buffer_capacity: int = 100_000
    batch_size: int = 256
    epochs: int = 50
    steps_per_epoch: int = 1000


@dataclass
class FinetuneSection:
    epochs: int = 20
    ae_lr: float = 1e-4
    pathway_lr: float = 1e-5
    sac_lr: float = 3e-5


@dataclass
class RunConfig:
    seed: int = 0
    train_fraction: float = 0.70
    valid_fraction: float = 0.15
    test_fraction: float = 0.15
    horizons: tuple = (1, 5, 20)
    ablation: str = "full"
    stable_vix_percentile: float = 75.0
    threshold_percentile: float = 95.0
    synth: SynthConfig = field(default_factory=SynthConfig)
    autoencoder: AutoencoderSection = field(default_factory=AutoencoderSection)
    pathway: PathwaySection = field(default_factory=PathwaySection)
    sac: SacSection = field(default_factory=SacSection)
    finetune: FinetuneSection = field(default_factory=FinetuneSection)

    def validate(self) -> "RunConfig":
        fractions = (self.train_fraction, self.valid_fraction, self.test_fraction)
        if any(f < 0 for f in fractions) or self.train_fraction <= 0:
            raise ConfigError("split fractions must be positive")
        if abs(sum(fractions) - 1.0) > 1e-9:
            raise ConfigError(f"split fractions must sum to 1, got {fractions}")
        if self.ablation not in ABLATION_VARIANTS:
            raise ConfigError(f"unknown ablation variant {self.ablation!r}")
        if not self.horizons or any(h < 1 for h in self.horizons):
            raise ConfigError("horizons must be positive")
        self.synth.validate()
        return self

    def copy(self) -> "RunConfig":
        return copy.deepcopy(self)


def desk_config(**overrides) -> RunConfig:
    """Desk-scale profile: small widths, short windows, reduced epochs."""
    cfg = RunConfig()
    cfg.pathway = PathwaySection(
        n_layers=2, n_heads=4, d_model=64, d_ff=256, dropout=0.1, lr=1e-3,
        seq_len=64, stock_embed_dim=8, epochs=8, batch_size=16, window_stride=2)
    cfg.sac = SacSection(hidden_dim=64, lr=3e-4, batch_size=64,
                         buffer_capacity=20_000, epochs=10, steps_per_epoch=300)
    cfg.finetune = FinetuneSection(epochs=2, ae_lr=1e-4, pathway_lr=1e-4,
                                   sac_lr=3e-5)
    for key, value in overrides.items():
        _assign(cfg, key, value)
    return cfg.validate()


# -------------------------------------------------------- flat text format

_SECTIONS = ("synth", "autoencoder", "pathway", "sac", "finetune")


def _format_value(value):
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    return str(value)


def _parse_value(text: str, example):
    text = text.strip()
    if isinstance(example, bool):
        return text.lower() in ("1", "true", "yes")
    if isinstance(example, int):
        return int(text)
    if isinstance(example, float):
        return float(text)
    if isinstance(example, tuple):
        parts = [p for p in text.split(",") if p.strip()]
        caster = type(example[0]) if example else int
        return tuple(caster(p) for p in parts)
    return text


def config_to_text(cfg: RunConfig) -> str:
    lines = []
    for f in fields(cfg):
        value = getattr(cfg, f.name)
        if f.name in _SECTIONS:
            for sub in fields(value):
                lines.append(f"{f.name}.{sub.name} = "
                             f"{_format_value(getattr(value, sub.name))}")
        else:
            lines.append(f"run.{f.name} = {_format_value(value)}")
    return "\n".join(sorted(lines)) + "\n"


def _assign(cfg: RunConfig, dotted: str, raw_value) -> None:
    if "." not in dotted:
        dotted = "run." + dotted
    section, _, key = dotted.partition(".")
    target = cfg if section == "run" else getattr(cfg, section, None)
    if target is None or not hasattr(target, key):
        raise ConfigError(f"unknown config key {dotted!r}")
    current = getattr(target, key)
    value = (_parse_value(raw_value, current) if isinstance(raw_value, str)
             else raw_value)
    setattr(target, key, value)


def config_from_text(text: str, base: RunConfig | None = None) -> RunConfig:
    cfg = (base or RunConfig()).copy()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected key = value")
        key, _, value = line.partition("=")
        _assign(cfg, key.strip(), value.strip())
    return cfg.validate()


def apply_overrides(cfg: RunConfig, overrides) -> RunConfig:
    """Apply `section.key=value` strings (CLI flags beat file values)."""
    cfg = cfg.copy()
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} must look like section.key=value")
        key, _, value = item.partition("=")
        _assign(cfg, key.strip(), value.strip())
    return cfg.validate()


def config_hash(cfg: RunConfig) -> str:
    return hashlib.sha256(config_to_text(cfg).encode("utf-8")).hexdigest()[:16]
