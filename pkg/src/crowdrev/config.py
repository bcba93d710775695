"""Review configuration and the key=value config file format."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from crowdrev.winnow import WinnowParams


class ConfigError(ValueError):
    """A configuration value violates its constraints."""


@dataclass(frozen=True)
class ReviewConfig:
    winnow: WinnowParams = field(default_factory=WinnowParams)
    delta: float = 60.0  # % of the query fingerprint that must be shared
    delta_l: float = 200.0  # size tolerance, % of the query block length
    s_threshold: int = 1
    min_code_size: int = 1000
    top_k: int = 10
    neutral_band: float = 0.2
    viewcount_weighting: bool = False
    lexicon_path: str | None = None

    def __post_init__(self) -> None:
        if not 0 < self.delta <= 100:
            raise ConfigError(f"delta must be in (0, 100], got {self.delta}")
        if self.delta_l < 0:
            raise ConfigError(f"delta_l must be >= 0, got {self.delta_l}")
        if self.top_k < 1:
            raise ConfigError(f"top_k must be >= 1, got {self.top_k}")
        if self.min_code_size < 0:
            raise ConfigError(f"min_code_size must be >= 0, got {self.min_code_size}")
        if not 0 <= self.neutral_band < 1:
            raise ConfigError(f"neutral_band must be in [0, 1), got {self.neutral_band}")

    def size_window(self, length: int) -> tuple[float, float]:
        """Candidate code-size bounds for a query block of ``length`` chars."""
        slack = self.delta_l * length / 100.0
        return max(0.0, length - slack), length + slack


def read_config_file(path: str | Path) -> dict[str, str]:
    """Parse ``key=value`` lines. ``#`` starts a comment; keys use ``_`` or ``-``."""
    values: dict[str, str] = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        values[key.strip().replace("-", "_")] = value.strip()
    return values


def parse_bool(value: str | bool) -> bool:
    if isinstance(value, bool):
        return value
    v = value.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off", ""):
        return False
    raise ConfigError(f"not a boolean: {value!r}")
