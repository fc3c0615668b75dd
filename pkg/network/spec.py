"""Declarative architecture description."""

from dataclasses import asdict, dataclass, fields
from typing import Any, Dict

from utils.errors import ConfigError

VARIANTS = ('plain', 'bru')


@dataclass(frozen=True)
class NetworkSpec:
    """U-net architecture: layer variant, depth, widths and classes."""
    variant: str = 'plain'
    depth: int = 4
    base_channels: int = 16
    num_classes: int = 3
    dropout_rate: float = 0.25
    input_channels: int = 1

    def __post_init__(self):
        self.validate()

    def validate(self):
        """Raise ConfigError naming the first invalid field."""
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}, got {self.variant!r}", key='variant')
        if self.depth < 1:
            raise ConfigError(f"depth must be >= 1, got {self.depth}", key='depth')
        if self.base_channels < 1:
            raise ConfigError(f"base_channels must be >= 1, got {self.base_channels}", key='base_channels')
        if self.num_classes < 2:
            raise ConfigError(f"num_classes must be >= 2, got {self.num_classes}", key='num_classes')
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}", key='dropout_rate')
        if self.input_channels < 1:
            raise ConfigError(f"input_channels must be >= 1, got {self.input_channels}", key='input_channels')

    @property
    def divisor(self) -> int:
        """Input H and W must be multiples of this."""
        return 2 ** self.depth

    def channels(self, level: int) -> int:
        """Feature channels at a resolution level (0 = full resolution)."""
        return self.base_channels * 2 ** level

    def to_dict(self) -> Dict[str, Any]:
        """Convert to dictionary."""
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'NetworkSpec':
        """
        Create from a dictionary of (possibly string) values.

        Args:
            data: Field values; strings are cast to the field types

        Returns:
            NetworkSpec instance
        """
        kwargs = {}
        for field in fields(cls):
            if field.name not in data:
                continue
            value = data[field.name]
            try:
                kwargs[field.name] = field.type(value)
            except (TypeError, ValueError):
                raise ConfigError(f"Invalid value for '{field.name}': {value!r}", key=field.name)
        unknown = set(data) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigError(f"Unknown network spec keys: {sorted(unknown)}", key=sorted(unknown)[0])
        return cls(**kwargs)
