"""Cable colours shared by the renderer and the color segmentation."""

from __future__ import annotations

from pathlib import Path

import yaml
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from unweave_flow.errors import UnweaveError

PALETTE_PATH = Path(__file__).parent / "config" / "palette.yaml"

HsvBound = tuple[int, int, int]


class ColorSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    rgb: tuple[int, int, int]
    hsv: tuple[tuple[HsvBound, HsvBound], ...] = Field(min_length=1)

    @field_validator("hsv")
    @classmethod
    def _lower_below_upper(cls, ranges):
        for lower, upper in ranges:
            if any(lo > hi for lo, hi in zip(lower, upper)):
                raise ValueError(f"HSV range {lower}..{upper} is empty")
        return ranges


def _ranges_overlap(a: tuple[HsvBound, HsvBound], b: tuple[HsvBound, HsvBound]) -> bool:
    return all(max(a[0][i], b[0][i]) <= min(a[1][i], b[1][i]) for i in range(3))


class Palette(BaseModel):
    """Ordered colour name -> spec; the first entry wins on ambiguous pixels."""

    model_config = ConfigDict(frozen=True)

    background: tuple[int, int, int] = (200, 200, 200)
    colors: dict[str, ColorSpec]

    @model_validator(mode="after")
    def _disjoint_thresholds(self) -> "Palette":
        if not self.colors:
            raise ValueError("palette must name at least one colour")
        names = list(self.colors)
        for i, a in enumerate(names):
            for b in names[i + 1:]:
                for ra in self.colors[a].hsv:
                    for rb in self.colors[b].hsv:
                        if _ranges_overlap(ra, rb):
                            raise ValueError(f"HSV thresholds of {a} and {b} overlap")
        return self

    @property
    def names(self) -> list[str]:
        return list(self.colors)

    def color_for(self, index: int) -> str:
        """Colour name assigned to the ``index``-th cable."""
        if index >= len(self.colors):
            raise UnweaveError(f"palette has {len(self.colors)} colours; cable {index} has none")
        return self.names[index]

    def restricted(self, names: list[str]) -> "Palette":
        return Palette(background=self.background, colors={n: self.colors[n] for n in names})

    @classmethod
    def from_yaml(cls, path: str | Path) -> "Palette":
        with open(path, encoding="utf-8") as fh:
            return cls.model_validate(yaml.safe_load(fh))


def default_palette() -> Palette:
    return Palette.from_yaml(PALETTE_PATH)
