"""YAML-backed defaults for the pydantic config models.

Every sub-package keeps its defaults in ``config/<name>.yaml`` next to the
code; a user document passed on the command line overrides them key by key.
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Any, ClassVar, TypeVar

import yaml
from pydantic import BaseModel

logger = logging.getLogger(__name__)

T = TypeVar("T", bound="YamlConfig")


def read_yaml(path: str | Path) -> dict[str, Any]:
    with open(path, encoding="utf-8") as fh:
        data = yaml.safe_load(fh)
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ValueError(f"{path}: expected a mapping at the top level")
    return data


def deep_merge(base: dict[str, Any], override: dict[str, Any]) -> dict[str, Any]:
    out = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = deep_merge(out[key], value)
        else:
            out[key] = value
    return out


class YamlConfig(BaseModel):
    """Mixin for configs whose packaged defaults live in a YAML file."""

    default_path: ClassVar[Path | None] = None
    # Top-level key of the packaged file holding this model's fields.
    section: ClassVar[str | None] = None

    @classmethod
    def _packaged(cls) -> dict[str, Any]:
        if cls.default_path is None or not cls.default_path.exists():
            return {}
        data = read_yaml(cls.default_path)
        return data.get(cls.section, {}) if cls.section else data

    @classmethod
    def default(cls: type[T]) -> T:
        return cls.model_validate(cls._packaged())

    @classmethod
    def from_yaml(cls: type[T], path: str | Path | None = None, **overrides: Any) -> T:
        data = cls._packaged()
        if path is not None:
            user = read_yaml(path)
            if cls.section and cls.section in user:
                user = user[cls.section]
            data = deep_merge(data, user)
            logger.debug("%s: loaded overrides from %s", cls.__name__, path)
        return cls.model_validate(deep_merge(data, overrides))
