"""Model and training configuration with flat key=value file support."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

from .errors import ContractError

ABLATIONS = ("full", "no_ntm", "no_gat")


@dataclass(frozen=True)
class ModelConfig:
    d_emb: int = 64
    d_h: int = 64
    n_topics: int = 10
    d_ntm_hidden: int = 128
    d_topic: int = 64
    ntm_shared_hidden: bool = False
    d_node: int = 128
    d_attn: int = 64
    gat_layers: int = 2
    heads_sentence: int = 2
    heads_topic: int = 2
    leaky_slope: float = 0.2
    standard_gat_aggregation: bool = False
    gat_residual: bool = True
    ablation: str = "full"

    def __post_init__(self):
        if self.ablation not in ABLATIONS:
            raise ContractError(f"unknown ablation {self.ablation!r}; expected one of {ABLATIONS}")


@dataclass(frozen=True)
class TrainConfig:
    lam: float = 0.85
    ntm_pretrain_epochs: int = 200
    lr_pretrain: float = 1e-3
    lr_ntm_joint: float = 5e-4
    lr_other: float = 1e-3
    batch_size: int = 8
    epochs: int = 50
    patience: int = 10
    seed: int = 0
    select_k: int = 3
    tw_layer: int = -1
    max_select_oracle: int = 3
    max_sentences: int = 128

    def __post_init__(self):
        if self.lam < 0:
            raise ContractError(f"lambda must be >= 0, got {self.lam}")
        for name in ("lr_pretrain", "lr_ntm_joint", "lr_other"):
            if getattr(self, name) < 0:
                raise ContractError(f"{name} must be >= 0")
        if self.batch_size < 1 or self.select_k < 1:
            raise ContractError("batch_size and select_k must be positive")


def _coerce(value: str, typ):
    if typ in (bool, "bool"):
        low = value.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ContractError(f"not a boolean: {value!r}")
    if typ in (int, "int"):
        return int(value)
    if typ in (float, "float"):
        return float(value)
    return value.strip()


def field_types(cls) -> dict[str, str]:
    return {f.name: f.type if isinstance(f.type, str) else f.type.__name__ for f in fields(cls)}


def read_config_file(path: str | Path) -> dict[str, str]:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out: dict[str, str] = {}
    for n, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ContractError(f"{path}:{n}: expected key = value")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def build(cls, values: dict):
    """Instantiate a config dataclass from a mapping, ignoring unknown keys."""
    types = field_types(cls)
    kwargs = {}
    for key, value in values.items():
        if key in types and value is not None:
            kwargs[key] = _coerce(value, types[key]) if isinstance(value, str) else value
    return cls(**kwargs)


def as_dict(cfg) -> dict:
    return dataclasses.asdict(cfg)
