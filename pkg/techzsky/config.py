"""
Pipeline configuration.

`PipelineConfig` groups the per-module settings. It reads and writes a flat
text file of `section.key = value` lines (`#` starts a comment); list values
are comma-separated and `auto` leaves an optional value unset. Example:

    canny.sigma = 1.4
    tensor.strength_edges = 0.02, 0.05, 0.1, 0.2, 0.4
    blade.side = 9
    dp.link_weight = auto
    seed = 7
"""

from __future__ import annotations

import dataclasses
import numbers
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, Mapping, Optional, Tuple, Union

import numpy as np

from techzsky.blade import BladeConfig
from techzsky.dp import DpParams
from techzsky.edges import CannyConfig
from techzsky.errors import ConfigError, TechZSkyError
from techzsky.evaluate import EvalConfig
from techzsky.extra import as_path
from techzsky.tensor import QuantizerConfig, TensorConfig

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}
_UNSET = {"auto", "none", ""}

# keys whose default is None and which type they take when set
_OPTIONAL_TYPES = {"dp.link_weight": float, "blade.min_samples": int}


@dataclass(frozen=True)
class DpConfig:
    delta: int = 4
    tog: int = 5
    link_weight: Optional[float] = None
    dummy_cost: float = 2.0
    v: float = 0.5
    w1: float = 0.5
    l: float = 0.1
    gap_fill: bool = True

    def __post_init__(self) -> None:
        self.params  # validates delta, tog, link_weight and dummy_cost
        for name in ("v", "w1"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ConfigError(f"dp.{name} must lie in [0, 1], got {value}")
        if self.l < 0:
            raise ConfigError(f"dp.l must be >= 0, got {self.l}")

    @property
    def params(self) -> DpParams:
        return DpParams(self.delta, self.tog, self.link_weight, self.dummy_cost)


@dataclass(frozen=True)
class PipelineConfig:
    canny: CannyConfig = field(default_factory=CannyConfig)
    tensor: TensorConfig = field(default_factory=TensorConfig)
    blade: BladeConfig = field(default_factory=BladeConfig)
    dp: DpConfig = field(default_factory=DpConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    seed: int = 0
    workers: int = 1

    def __post_init__(self) -> None:
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")

    @property
    def quantizer(self) -> QuantizerConfig:
        return self.tensor.quantizer

    def flat(self) -> Dict[str, Any]:
        """All settings keyed as they appear in a config file."""
        items: Dict[str, Any] = {}
        for section in ("canny", "tensor", "blade", "dp", "eval"):
            for key, value in _section_items(getattr(self, section)):
                items[f"{section}.{key}"] = value
        items["seed"] = self.seed
        items["workers"] = self.workers
        return items

    def to_text(self) -> str:
        return "".join(f"{key} = {_format(value)}\n" for key, value in self.flat().items())

    def with_overrides(self, overrides: Mapping[str, Any]) -> "PipelineConfig":
        """
        Return a validated copy with `overrides` applied.

        String values are parsed; other values must match the type of the key.
        Integers are accepted for float keys and lists for tuple keys.

        Raises:
            ConfigError: Unknown key or a value outside its module's range.
        """
        flat = self.flat()
        for key, raw in overrides.items():
            key = key.strip()
            if key not in flat:
                raise ConfigError(f"unknown config key {key!r}")
            if isinstance(raw, str):
                flat[key] = _parse(key, raw, flat[key])
            else:
                flat[key] = _coerce(key, raw, flat[key])
        return _build(flat)

    @classmethod
    def from_text(cls, text: str, source: str = "config") -> "PipelineConfig":
        overrides: Dict[str, str] = {}
        for number, line in enumerate(text.splitlines(), start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{source}:{number}: expected 'key = value', got {line!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            overrides[key] = value
        try:
            return cls().with_overrides(overrides)
        except TechZSkyError as e:
            raise ConfigError(f"{source}: {e}") from e

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "PipelineConfig":
        path = as_path(path)
        if not path.is_file():
            raise ConfigError(f"config file {path} does not exist")
        return cls.from_text(path.read_text(), source=path.name)


def _section_items(section: Any) -> Iterable[Tuple[str, Any]]:
    for f in dataclasses.fields(section):
        value = getattr(section, f.name)
        if isinstance(value, QuantizerConfig):
            yield "orientation_bins", value.orientation_bins
            yield "strength_edges", value.strength_edges
            yield "coherence_edges", value.coherence_edges
        else:
            yield f.name, value


def _format(value: Any) -> str:
    if value is None:
        return "auto"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ", ".join(repr(v) for v in value)
    return str(value)


def _parse(key: str, raw: str, current: Any) -> Any:
    text = raw.strip()
    try:
        if key in _OPTIONAL_TYPES:
            return None if text.lower() in _UNSET else _OPTIONAL_TYPES[key](text)
        if isinstance(current, bool):
            lowered = text.lower()
            if lowered not in _TRUE | _FALSE:
                raise ValueError(f"not a boolean: {text!r}")
            return lowered in _TRUE
        if isinstance(current, tuple):
            return tuple(float(v) for v in text.split(",") if v.strip())
        if isinstance(current, int):
            return int(text)
        if isinstance(current, float):
            return float(text)
        return text
    except ValueError as e:
        raise ConfigError(f"bad value for {key}: {e}") from e


def _coerce(key: str, raw: Any, current: Any) -> Any:
    expected = _OPTIONAL_TYPES.get(key, type(current))
    if raw is None and key in _OPTIONAL_TYPES:
        return None
    is_bool = isinstance(raw, (bool, np.bool_))
    if expected is bool and is_bool:
        return bool(raw)
    if expected is int and not is_bool and isinstance(raw, numbers.Integral):
        return int(raw)
    if expected is float and not is_bool and isinstance(raw, numbers.Real):
        return float(raw)
    if expected is tuple and isinstance(raw, (tuple, list)):
        if all(isinstance(v, numbers.Real) and not isinstance(v, (bool, np.bool_)) for v in raw):
            return tuple(float(v) for v in raw)
    raise ConfigError(f"bad value for {key}: expected {expected.__name__}, got {raw!r}")


def _build(flat: Mapping[str, Any]) -> PipelineConfig:
    def section(name: str) -> Dict[str, Any]:
        prefix = name + "."
        return {k[len(prefix):]: v for k, v in flat.items() if k.startswith(prefix)}

    tensor = section("tensor")
    quantizer = QuantizerConfig(
        orientation_bins=tensor.pop("orientation_bins"),
        strength_edges=tensor.pop("strength_edges"),
        coherence_edges=tensor.pop("coherence_edges"),
    )
    return PipelineConfig(
        canny=CannyConfig(**section("canny")),
        tensor=TensorConfig(quantizer=quantizer, **tensor),
        blade=BladeConfig(**section("blade")),
        dp=DpConfig(**section("dp")),
        eval=EvalConfig(**section("eval")),
        seed=int(flat["seed"]),
        workers=int(flat["workers"]),
    )
