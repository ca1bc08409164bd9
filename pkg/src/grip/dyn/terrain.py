"""Height-field terrain: a flat plane plus axis-aligned boxes."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

TERRAIN_FORMAT = "grip-terrain"
TERRAIN_VERSION = 1


@dataclass(frozen=True)
class Box:
    center: tuple
    half_extents: tuple

    def __post_init__(self):
        if len(self.center) != 3 or len(self.half_extents) != 3:
            raise ValueError("box center and half extents need 3 components")
        if any(h <= 0 for h in self.half_extents):
            raise ValueError("box extents must be positive")

    @property
    def top(self):
        return self.center[2] + self.half_extents[2]

    def covers(self, x, y):
        cx, cy, _ = self.center
        hx, hy, _ = self.half_extents
        return (np.abs(x - cx) <= hx) & (np.abs(y - cy) <= hy)


@dataclass
class Terrain:
    plane_height: float = 0.0
    boxes: list = field(default_factory=list)

    def height(self, x, y):
        """Surface height at (x, y): the plane or the highest covering box top."""
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        h = np.full(np.broadcast(x, y).shape, float(self.plane_height))
        for b in self.boxes:
            h = np.where(b.covers(x, y), np.maximum(h, b.top), h)
        return h

    def to_dict(self):
        return {
            "format": TERRAIN_FORMAT,
            "version": TERRAIN_VERSION,
            "plane_height": self.plane_height,
            "boxes": [{"center": list(b.center), "half_extents": list(b.half_extents)} for b in self.boxes],
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("format") != TERRAIN_FORMAT:
            raise ValueError("not a terrain file")
        if d.get("version") != TERRAIN_VERSION:
            raise ValueError(f"unsupported terrain version {d.get('version')}")
        boxes = [Box(tuple(b["center"]), tuple(b["half_extents"])) for b in d.get("boxes", [])]
        return cls(float(d.get("plane_height", 0.0)), boxes)

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict()) + "\n")

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))


FLAT = Terrain()
