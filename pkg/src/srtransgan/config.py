"""Run configuration: one YAML document merged with command-line overrides.

Schema (every key optional)::

    seed: 0                      # drives initialisation, data order, crops
    out: runs/default            # output directory
    generator:     {GeneratorConfig fields}
    discriminator: {DiscriminatorConfig fields}
    train:         {TrainConfig fields except seed}
    data:
      dataset: path/to/dir
      layout: auto | paired | hr-only

``discriminator.image_size`` defaults to the HR crop extent
(``train.scale * train.lr_crop``) when it is not given.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path

import yaml

from .discriminator import DiscriminatorConfig
from .errors import ConfigError
from .generator import GeneratorConfig
from .training.trainer import TrainConfig

DATA_KEYS = ("dataset", "layout")
LAYOUTS = ("auto", "paired", "hr-only")


def _field_names(cls, exclude=()) -> tuple[str, ...]:
    return tuple(f.name for f in fields(cls) if f.name not in exclude)


SCHEMA: dict[str, tuple[str, ...] | None] = {
    "seed": None,
    "out": None,
    "generator": _field_names(GeneratorConfig),
    "discriminator": _field_names(DiscriminatorConfig),
    "train": _field_names(TrainConfig, exclude=("seed",)),
    "data": DATA_KEYS,
}


@dataclass
class RunConfig:
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    discriminator: DiscriminatorConfig | None = None
    train: TrainConfig = field(default_factory=TrainConfig)
    dataset: str | None = None
    layout: str = "auto"
    out: str = "runs/default"
    seed: int = 0

    def __post_init__(self):
        if self.layout not in LAYOUTS:
            raise ConfigError(f"data.layout must be one of {LAYOUTS}, got {self.layout!r}")
        self.train.seed = self.seed
        if self.discriminator is None:
            crop = self.train.lr_crop or 32
            self.discriminator = DiscriminatorConfig(image_size=self.train.scale * crop)
        if self.train.lr_crop and self.discriminator.image_size != self.train.scale * self.train.lr_crop:
            raise ConfigError(
                f"discriminator.image_size {self.discriminator.image_size} must equal "
                f"train.scale * train.lr_crop = {self.train.scale * self.train.lr_crop}"
            )

    def to_dict(self) -> dict:
        train = self.train.to_dict()
        train.pop("seed")
        return {
            "seed": self.seed,
            "out": self.out,
            "generator": self.generator.to_dict(),
            "discriminator": self.discriminator.to_dict(),
            "train": train,
            "data": {"dataset": self.dataset, "layout": self.layout},
        }

    def dump(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False, default_flow_style=None)

    def write(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.dump(), encoding="utf-8", newline="\n")
        return path


def _check_keys(node: yaml.MappingNode, allowed, where: str, source) -> None:
    for key_node, _ in node.value:
        if key_node.value not in allowed:
            prefix = f"{where}." if where else ""
            raise ConfigError(
                f"{source}:{key_node.start_mark.line + 1}: unknown config key '{prefix}{key_node.value}'"
            )


def parse_config(text: str, source="<config>") -> dict:
    """Parse and schema-check YAML text into a nested dict (no defaults applied)."""
    try:
        root = yaml.compose(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{source}: invalid YAML ({exc})") from exc
    if root is None:
        return {}
    if not isinstance(root, yaml.MappingNode):
        raise ConfigError(f"{source}: top level must be a mapping")
    _check_keys(root, SCHEMA, "", source)
    for key_node, value_node in root.value:
        allowed = SCHEMA[key_node.value]
        if allowed is None:
            continue
        if isinstance(value_node, yaml.ScalarNode) and value_node.value in ("", "~", "null"):
            continue
        if not isinstance(value_node, yaml.MappingNode):
            raise ConfigError(f"{source}:{value_node.start_mark.line + 1}: section '{key_node.value}' must be a mapping")
        _check_keys(value_node, allowed, key_node.value, source)
    return yaml.safe_load(text) or {}


def build_config(raw: dict, overrides: dict | None = None) -> RunConfig:
    """Apply flat overrides (``seed``, ``out``, ``steps``, ``scale``, ``dataset``) and construct."""
    raw = {k: (dict(v) if isinstance(v, dict) else v) for k, v in raw.items()}
    for section in ("generator", "discriminator", "train", "data"):
        raw[section] = raw.get(section) or {}
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key in ("seed", "out"):
            raw[key] = value
        elif key in ("steps", "scale"):
            raw["train"][key] = value
        elif key in DATA_KEYS:
            raw["data"][key] = value
        else:
            raise ConfigError(f"unknown override '{key}'")
    try:
        train = TrainConfig(**raw["train"])
        return RunConfig(
            generator=GeneratorConfig(**raw["generator"]),
            discriminator=DiscriminatorConfig(**raw["discriminator"]) if raw["discriminator"] else None,
            train=train,
            dataset=None if raw["data"].get("dataset") is None else str(raw["data"]["dataset"]),
            layout=raw["data"].get("layout", "auto"),
            out=str(raw.get("out", "runs/default")),
            seed=int(raw.get("seed", 0)),
        )
    except TypeError as exc:
        raise ConfigError(f"invalid config value: {exc}") from exc


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    if path is None:
        return build_config({}, overrides)
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from exc
    return build_config(parse_config(text, path), overrides)
