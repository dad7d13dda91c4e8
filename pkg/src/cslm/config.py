"""Training configuration and its key=value file format."""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass, fields
from enum import Enum
from pathlib import Path
from typing import Any, Mapping


class RegimeKind(str, Enum):
    L1_ONLY = "l1-only"
    L2_ONLY = "l2-only"
    ALTERNATE = "alternate"
    ALTERNATE_MSE = "alternate-mse"

    @property
    def label(self) -> str:
        return TABLE_LABELS[self]

    @property
    def alternating(self) -> bool:
        return self in (RegimeKind.ALTERNATE, RegimeKind.ALTERNATE_MSE)


# L1 plays English (the matrix language), L2 plays Spanish; rows in report order.
TABLE_LABELS = {
    RegimeKind.L2_ONLY: "Spanish data only",
    RegimeKind.L1_ONLY: "English data only",
    RegimeKind.ALTERNATE: "Spanish + English data (*)",
    RegimeKind.ALTERNATE_MSE: "MSE (+)",
}
REPORT_ORDER = tuple(TABLE_LABELS)


class Alignment(str, Enum):
    FREQUENCY_RANK = "frequency-rank"
    NONE = "none"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    regime: RegimeKind = RegimeKind.ALTERNATE
    epochs: int = 20
    batch_size: int = 40
    bptt_steps: int = 35
    emb_dim: int = 300
    hidden_dim: int = 650
    dropout: float = 0.3
    initial_lr: float = 20.0
    lr_halving: bool = True
    clip_norm: float = 0.25
    lambda_mse: float = 1.0
    mse_row_alignment: Alignment = Alignment.FREQUENCY_RANK
    seed: int = 0
    eval_batch_size: int = 10
    valid_fraction: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "regime", RegimeKind(self.regime))
        object.__setattr__(self, "mse_row_alignment", Alignment(self.mse_row_alignment))
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        for name in ("batch_size", "bptt_steps", "emb_dim", "hidden_dim", "eval_batch_size"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if not 0 <= self.dropout < 1:
            raise ConfigError("dropout must lie in [0, 1)")
        if self.initial_lr <= 0 or self.clip_norm <= 0:
            raise ConfigError("initial_lr and clip_norm must be positive")
        if self.lambda_mse < 0:
            raise ConfigError("lambda_mse must be >= 0")
        if not 0 <= self.valid_fraction < 1:
            raise ConfigError("valid_fraction must lie in [0, 1)")

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict[str, str]:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = v.value if isinstance(v, Enum) else str(v).lower() if isinstance(v, bool) else str(v)
        return out

    def fingerprint(self) -> str:
        text = "".join(f"{k}={v}\n" for k, v in self.to_dict().items())
        return hashlib.sha256(text.encode()).hexdigest()[:12]


_BOOL = {"true": True, "1": True, "yes": True, "false": False, "0": False, "no": False}


def _coerce(name: str, raw: Any) -> Any:
    kind = {f.name: f.type for f in fields(TrainConfig)}[name]
    if not isinstance(raw, str):
        return raw
    try:
        if kind == "bool":
            return _BOOL[raw.strip().lower()]
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "RegimeKind":
            return RegimeKind(raw.strip())
        if kind == "Alignment":
            return Alignment(raw.strip())
    except (KeyError, ValueError) as e:
        raise ConfigError(f"bad value for {name}: {raw!r}") from e
    return raw


def parse_config_text(text: str) -> dict[str, Any]:
    known = {f.name for f in fields(TrainConfig)}
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected key=value")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in known:
            raise ConfigError(f"config line {lineno}: unknown key {key!r}")
        values[key] = _coerce(key, raw)
    return values


def resolve_config(file_values: Mapping[str, Any] | None = None,
                   overrides: Mapping[str, Any] | None = None,
                   base: TrainConfig | None = None) -> TrainConfig:
    """Command-line overrides beat file values, which beat defaults (or ``base``)."""
    merged = dict(file_values or {})
    merged.update({k: v for k, v in (overrides or {}).items() if v is not None})
    try:
        return (base or TrainConfig()).replace(**{k: _coerce(k, v) for k, v in merged.items()})
    except TypeError as e:
        raise ConfigError(str(e)) from e


def load_config_file(path: str | Path) -> dict[str, Any]:
    return parse_config_text(Path(path).read_text(encoding="utf-8"))
