"""
RunConfig: every parameter block in one YAML document.

Each block is a dataclass whose defaults are the shipped values, so an empty
document is a valid config. Unknown keys are rejected by dotted path and YAML
syntax errors carry the line number. `key=value` overrides are applied to the
raw document before validation, so they go through exactly the same checks.
"""

import dataclasses
import os
import typing
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, Optional

import yaml
from dotenv import load_dotenv

from core.costs import CostParams
from core.dynamics import QuadParams
from core.mppi import MppiConfig
from core.reference import TrackingParams
from core.world import CameraIntrinsics
from tools.simulation.types import BatchConfig, EpisodeConfig

load_dotenv()

DEFAULT_OUTPUT_DIR = os.getenv("PAMPPI_OUTPUT_DIR", "runs")


class ConfigError(ValueError):
    """Malformed config document or override; the message names the line or field."""


@dataclass(frozen=True)
class MappingConfig:
    resolution: float = 0.1

    def __post_init__(self) -> None:
        if self.resolution <= 0:
            raise ValueError("resolution must be positive")


@dataclass(frozen=True)
class RunConfig:
    quad: QuadParams = field(default_factory=QuadParams)
    mppi: MppiConfig = field(default_factory=MppiConfig)
    costs: CostParams = field(default_factory=CostParams)
    camera: CameraIntrinsics = field(default_factory=CameraIntrinsics)
    mapping: MappingConfig = field(default_factory=MappingConfig)
    tracking: TrackingParams = field(default_factory=TrackingParams)
    episode: EpisodeConfig = field(default_factory=EpisodeConfig)
    batch: BatchConfig = field(default_factory=BatchConfig)


def _join(path: str, key: str) -> str:
    return f"{path}.{key}" if path else key


def _coerce(tp: Any, value: Any, path: str) -> Any:
    if dataclasses.is_dataclass(tp):
        return _build(tp, value, path)

    origin = typing.get_origin(tp)
    if origin is tuple:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{path}: expected a list, got {value!r}")
        args = typing.get_args(tp)
        if len(args) == 2 and args[1] is Ellipsis:
            return tuple(_coerce(args[0], item, f"{path}[{i}]") for i, item in enumerate(value))
        if len(value) != len(args):
            raise ConfigError(f"{path}: expected {len(args)} entries, got {len(value)}")
        return tuple(_coerce(arg, item, f"{path}[{i}]") for i, (arg, item) in enumerate(zip(args, value)))

    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected true/false, got {value!r}")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string, got {value!r}")
        return value
    return value


def _build(cls: type, data: Any, path: str = "") -> Any:
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path or 'config'}: expected a mapping, got {data!r}")

    hints = typing.get_type_hints(cls)
    names = [f.name for f in dataclasses.fields(cls)]
    for key in data:
        if key not in names:
            raise ConfigError(f"unknown key '{_join(path, str(key))}'")

    kwargs = {name: _coerce(hints[name], data[name], _join(path, name)) for name in names if name in data}
    try:
        return cls(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"{path or 'config'}: {exc}") from exc


def _parse_scene(text: str) -> Dict[str, Any]:
    parts = text.split(":")
    if not 1 <= len(parts) <= 3 or not parts[0]:
        raise ConfigError(f"scene override must look like family:size[:seed], got '{text}'")
    scene: Dict[str, Any] = {"family": parts[0]}
    try:
        if len(parts) > 1:
            scene["size"] = float(parts[1])
        if len(parts) > 2:
            scene["seed"] = int(parts[2])
    except ValueError as exc:
        raise ConfigError(f"scene override '{text}': {exc}") from exc
    return scene


def apply_overrides(document: Dict[str, Any], overrides: Iterable[str]) -> Dict[str, Any]:
    """Sets dotted keys in the raw document; values are parsed as YAML scalars."""
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override '{item}' is not key=value")
        key, raw = item.split("=", 1)
        key = key.strip()
        if key == "controller":
            key = "episode.controller"
        elif key == "scene":
            document.setdefault("episode", {})
            if not isinstance(document["episode"], dict):
                raise ConfigError("episode: expected a mapping")
            document["episode"]["scene"] = _parse_scene(raw.strip())
            continue

        try:
            value = yaml.safe_load(raw) if raw.strip() else ""
        except yaml.YAMLError as exc:
            raise ConfigError(f"override '{item}': value is not valid YAML") from exc

        node = document
        parts = key.split(".")
        for part in parts[:-1]:
            child = node.setdefault(part, {})
            if not isinstance(child, dict):
                raise ConfigError(f"override '{item}': '{part}' is not a block")
            node = child
        node[parts[-1]] = value
    return document


def parse_config(text: str, overrides: Iterable[str] = ()) -> RunConfig:
    try:
        document = yaml.safe_load(text) if text.strip() else {}
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"line {mark.line + 1}" if mark is not None else "document"
        raise ConfigError(f"YAML syntax error at {where}: {getattr(exc, 'problem', exc)}") from exc
    if document is None:
        document = {}
    if not isinstance(document, dict):
        raise ConfigError("config must be a mapping of blocks")
    return _build(RunConfig, apply_overrides(document, overrides))


def load_config(path: Optional[str] = None, overrides: Iterable[str] = ()) -> RunConfig:
    if path is None:
        return parse_config("", overrides)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config '{path}': {exc.strerror or exc}") from exc
    return parse_config(text, overrides)


def _plain(value: Any) -> Any:
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value


def dump_config(cfg: RunConfig) -> str:
    """Effective config as YAML; dumping a reloaded dump gives the same bytes."""
    return yaml.safe_dump(_plain(dataclasses.asdict(cfg)), sort_keys=True, default_flow_style=False)
