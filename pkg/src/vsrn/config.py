"""Training configuration and its ``key = value`` file format."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .memory import ORDERINGS


class ConfigError(ValueError):
    pass


@dataclass
class TrainConfig:
    D: int = 32
    F: int = 64
    word_dim: int = 300
    rrr_layers: int = 4
    ordering: str = "confidence"
    margin: float = 0.2
    batch_size: int = 16
    epochs: int = 30
    lr_initial: float = 0.0002
    lr_decayed: float = 0.00002
    decay_epoch: int = 15
    use_generation_loss: bool = True
    normalize_embeddings: bool = False
    grad_clip: float = 2.0
    seed: int = 0
    # stop once train R@1 is 1.0 in both directions
    stop_at_train_r1: bool = False

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        for name in ("D", "F", "word_dim", "batch_size", "epochs"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if not 0 <= self.rrr_layers <= 8:
            raise ConfigError("rrr_layers must be in 0..8")
        if self.ordering not in ORDERINGS:
            raise ConfigError(f"ordering must be one of {ORDERINGS}")
        if not 0 <= self.decay_epoch <= self.epochs:
            raise ConfigError("decay_epoch must lie in 0..epochs")
        if self.margin < 0 or self.lr_initial < 0 or self.lr_decayed < 0:
            raise ConfigError("margin and learning rates must be non-negative")
        if self.grad_clip < 0:
            raise ConfigError("grad_clip must be non-negative (0 disables)")

    def lr_at(self, epoch: int) -> float:
        """Learning rate for a 1-based epoch."""
        return self.lr_initial if epoch <= self.decay_epoch else self.lr_decayed

    def to_text(self) -> str:
        lines = []
        for key, value in asdict(self).items():
            if isinstance(value, bool):
                value = "true" if value else "false"
            lines.append(f"{key} = {value!r}" if isinstance(value, float) else f"{key} = {value}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, **overrides) -> "TrainConfig":
        types = {f.name: f.type for f in fields(cls)}
        values = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            if key not in types:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
            values[key] = _convert(key, value, types[key])
        values.update(overrides)
        return cls(**values)

    @classmethod
    def load(cls, path, **overrides) -> "TrainConfig":
        return cls.from_text(Path(path).read_text(encoding="utf-8"), **overrides)

    def save(self, path) -> None:
        Path(path).write_text(self.to_text(), encoding="utf-8")


def _convert(key: str, value: str, kind):
    kind = kind if isinstance(kind, str) else kind.__name__
    try:
        if kind == "bool":
            low = value.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(value)
            return low in ("true", "1", "yes")
        if kind == "int":
            return int(value)
        if kind == "float":
            return float(value)
        return value.lower()
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {value!r} as {kind}") from None
