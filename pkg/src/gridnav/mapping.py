"""Online semantic mapping: ray projection and boolean max-pool fusion.

The map is a stack of boolean channels over the world grid:

    channel 0            explored
    channel 1            obstacle
    channel 2 + k        category k present

Channel hierarchy: category cells are obstacle cells, obstacle cells are
explored cells.  Fusion of two maps is element-wise OR, so the map only
ever accumulates evidence.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import geometry
from .errors import InvariantViolation
from .world import DEFAULT_CATEGORIES, Observation, SensorConfig

__all__ = [
    "CH_EXPLORED",
    "CH_OBSTACLE",
    "MapConfig",
    "SemanticMap",
    "LocalProjection",
    "project_observation",
    "project_with_hits",
    "fuse",
    "category_cells",
    "check_channel_hierarchy",
    "snapshot_text",
]

CH_EXPLORED = 0
CH_OBSTACLE = 1


@dataclass(frozen=True)
class MapConfig:
    height: int
    width: int
    resolution: float
    categories: tuple[str, ...] = DEFAULT_CATEGORIES
    sensor: SensorConfig = SensorConfig()

    def channel_of(self, category: str) -> int:
        try:
            return 2 + self.categories.index(category)
        except ValueError:
            raise InvariantViolation(f"unknown category {category!r}") from None


@dataclass
class SemanticMap:
    """Boolean channel stack; see module docstring for channel layout."""

    channels: np.ndarray  # (2 + N, H, W) bool
    resolution: float
    categories: tuple[str, ...]

    @classmethod
    def empty(cls, cfg: MapConfig) -> "SemanticMap":
        return cls(
            channels=np.zeros(
                (2 + len(cfg.categories), cfg.height, cfg.width), dtype=bool
            ),
            resolution=cfg.resolution,
            categories=cfg.categories,
        )

    @property
    def explored(self) -> np.ndarray:
        return self.channels[CH_EXPLORED]

    @property
    def obstacle(self) -> np.ndarray:
        return self.channels[CH_OBSTACLE]

    def category_channel(self, category: str) -> np.ndarray:
        return self.channels[2 + self.categories.index(category)]

    def same_extent(self, other: "SemanticMap") -> bool:
        return (
            self.channels.shape == other.channels.shape
            and self.resolution == other.resolution
            and self.categories == other.categories
        )

    def equals(self, other: "SemanticMap") -> bool:
        return self.same_extent(other) and np.array_equal(
            self.channels, other.channels
        )


# A local projection holds exactly the cells touched by one observation,
# in the same channel layout as the global map.
LocalProjection = SemanticMap


def project_observation(o: Observation, cfg: MapConfig) -> LocalProjection:
    """Project one sweep into map channels.

    Free cells crossed by each ray become explored; each hit cell becomes
    explored + obstacle, plus its category channel when the hit carries an
    instance label (bare walls mark obstacle only).  Cells exactly on the
    hit boundary belong to the obstacle cell the ray entered, which the
    shared DDA arithmetic reproduces from the recorded hit distance.
    """
    proj, _ = project_with_hits(o, cfg)
    return proj


def project_with_hits(
    o: Observation, cfg: MapConfig
) -> tuple[LocalProjection, np.ndarray]:
    """project_observation plus the per-ray hit cells.

    The second return value is an (n_rays, 2) int array of (row, col)
    per ray, (-1, -1) where the ray reached max range unobstructed.
    """
    if o.sensor.rays != cfg.sensor.rays or o.sensor.fov != cfg.sensor.fov:
        raise InvariantViolation("observation sensor geometry != map config")
    proj = SemanticMap.empty(cfg)
    brgs = geometry.bearings(o.pose.theta, cfg.sensor.rays, cfg.sensor.fov)
    hit_cells = np.empty((len(brgs), 2), dtype=np.int64)
    geometry.project_rays(
        o.pose.x,
        o.pose.y,
        brgs,
        o.distances,
        o.hit_flags,
        cfg.sensor.max_range,
        cfg.resolution,
        proj.channels[CH_EXPLORED],
        hit_cells,
    )
    explored = proj.channels[CH_EXPLORED]
    obstacle = proj.channels[CH_OBSTACLE]
    for k in range(len(brgs)):
        r, c = hit_cells[k]
        if r < 0:
            continue
        explored[r, c] = True
        obstacle[r, c] = True
        cid = int(o.category_ids[k])
        if cid >= 0:
            proj.channels[2 + cid, r, c] = True
    return proj, hit_cells


def fuse(global_map: SemanticMap, local: LocalProjection) -> SemanticMap:
    """Boolean max-pool (OR) fusion of a local projection into the map."""
    if not global_map.same_extent(local):
        raise InvariantViolation("map extents differ; cannot fuse")
    return SemanticMap(
        channels=global_map.channels | local.channels,
        resolution=global_map.resolution,
        categories=global_map.categories,
    )


def category_cells(m: SemanticMap, category: str) -> set[tuple[int, int]]:
    if category not in m.categories:
        raise InvariantViolation(f"unknown category {category!r}")
    rows, cols = np.nonzero(m.category_channel(category))
    return {(int(r), int(c)) for r, c in zip(rows, cols)}


def check_channel_hierarchy(m: SemanticMap) -> None:
    """Raise unless category => obstacle => explored holds cell-wise."""
    if (m.obstacle & ~m.explored).any():
        raise InvariantViolation("obstacle cell not marked explored")
    cats = m.channels[2:].any(axis=0)
    if (cats & ~m.obstacle).any():
        raise InvariantViolation("category cell not marked obstacle")


def snapshot_text(m: SemanticMap) -> str:
    """Human-readable per-channel dump for traces and debugging."""
    names = ["explored", "obstacle"] + [f"category:{c}" for c in m.categories]
    blocks = []
    for i, name in enumerate(names):
        grid = m.channels[i]
        rows = "\n".join(
            "".join("#" if grid[r, c] else "." for c in range(grid.shape[1]))
            for r in range(grid.shape[0])
        )
        blocks.append(f"channel {i} {name}\n{rows}")
    return "\n".join(blocks) + "\n"
