"""Ground-truth gridworlds: geometry, sensing, kinematics, episodes.

A world is a boolean occupancy grid at a fixed metric resolution plus a
set of labeled object instances whose footprints are obstacle cells.  The
agent is a point with a continuous pose; sensing is a planar range sweep
that also reports the category/instance of whatever each ray hits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import geometry
from .errors import InvariantViolation, WorldFormatError
from .geometry import wrap_angle

__all__ = [
    "DEFAULT_CATEGORIES",
    "MAX_LINEAR_STEP",
    "MAX_ANGULAR_STEP",
    "SUCCESS_RADIUS",
    "Instance",
    "Pose",
    "Action",
    "SensorConfig",
    "RayHit",
    "Observation",
    "GoalDescriptor",
    "Episode",
    "World",
    "load_world",
    "save_world",
    "load_episodes",
    "save_episodes",
    "sense",
    "step",
    "oracle_visible",
    "shortest_path_length",
    "wrap_angle",
]

DEFAULT_CATEGORIES = ("bed", "chair", "couch", "plant", "television", "toilet")

# kinematic caps per frame
MAX_LINEAR_STEP = 0.35
MAX_ANGULAR_STEP = math.radians(60.0)

# an episode succeeds when the agent stops this close to a visible goal
SUCCESS_RADIUS = 1.0

_COLLISION_BACKOFF = 1e-6

WORLD_MAGIC = "gridnav-world 1"
EPISODES_MAGIC = "gridnav-episodes 1"


@dataclass(frozen=True)
class Instance:
    """A labeled object occupying a 4-connected set of obstacle cells."""

    id: int
    category: str
    cells: frozenset[tuple[int, int]]

    def __post_init__(self):
        if not self.cells:
            raise InvariantViolation(f"instance {self.id} has no cells")
        if not _is_4_connected(self.cells):
            raise InvariantViolation(
                f"instance {self.id} cells are not 4-connected"
            )

    def nearest_distance(self, x: float, y: float, res: float) -> float:
        """Euclidean distance from a point to the nearest cell center."""
        best = math.inf
        for r, c in self.cells:
            cx, cy = geometry.cell_center(r, c, res)
            d = math.hypot(cx - x, cy - y)
            if d < best:
                best = d
        return best


def _is_4_connected(cells: frozenset[tuple[int, int]]) -> bool:
    todo = [next(iter(cells))]
    seen = {todo[0]}
    while todo:
        r, c = todo.pop()
        for nb in ((r + 1, c), (r - 1, c), (r, c + 1), (r, c - 1)):
            if nb in cells and nb not in seen:
                seen.add(nb)
                todo.append(nb)
    return len(seen) == len(cells)


@dataclass(frozen=True)
class Pose:
    x: float
    y: float
    theta: float


@dataclass(frozen=True)
class Action:
    """Normalized motion command; scaling to meters/radians happens in step."""

    linear: float = 0.0
    angular: float = 0.0
    stop: bool = False

    def __post_init__(self):
        if not (-1.0 <= self.linear <= 1.0):
            raise InvariantViolation(f"linear out of range: {self.linear}")
        if not (-1.0 <= self.angular <= 1.0):
            raise InvariantViolation(f"angular out of range: {self.angular}")


@dataclass(frozen=True)
class SensorConfig:
    rays: int = 90
    fov: float = math.radians(90.0)
    max_range: float = 5.0


class RayHit(NamedTuple):
    distance: float
    category: str | None
    instance: int | None


@dataclass(frozen=True)
class Observation:
    """One sensor sweep: per-ray hit distance and labels.

    distances[k] is the entry distance into the first obstacle cell along
    ray k, capped at max_range; a ray that reaches max_range unobstructed
    reports exactly max_range with no labels.  Bare walls report a hit
    distance but no category/instance.
    """

    pose: Pose
    sensor: SensorConfig
    distances: np.ndarray
    category_ids: np.ndarray
    instance_ids: np.ndarray
    categories: tuple[str, ...]

    @property
    def rays(self) -> list[RayHit]:
        out = []
        for k in range(len(self.distances)):
            cid = int(self.category_ids[k])
            iid = int(self.instance_ids[k])
            out.append(
                RayHit(
                    float(self.distances[k]),
                    self.categories[cid] if cid >= 0 else None,
                    iid if iid >= 0 else None,
                )
            )
        return out

    @property
    def hit_flags(self) -> np.ndarray:
        """Boolean mask of rays that actually struck an obstacle cell."""
        return self.distances < self.sensor.max_range


@dataclass(frozen=True)
class GoalDescriptor:
    """What the agent is looking for.

    instance_hint identifies the true goal so that matchers can score a
    candidate view; planners and policies never read it directly.
    capture_distance records how far away the goal snapshot was taken and
    is reserved for appearance models.
    """

    category: str
    instance_hint: int
    capture_distance: float


@dataclass(frozen=True)
class Episode:
    start: Pose
    goal_instance: int
    goal: GoalDescriptor
    max_steps: int = 500


class World:
    """Immutable ground-truth environment."""

    def __init__(
        self,
        resolution: float,
        occupancy: np.ndarray,
        instances: list[Instance],
        categories: tuple[str, ...] = DEFAULT_CATEGORIES,
    ):
        if resolution <= 0:
            raise InvariantViolation("resolution must be positive")
        occupancy = np.asarray(occupancy, dtype=bool)
        if occupancy.ndim != 2:
            raise InvariantViolation("occupancy must be 2-D")
        self.resolution = float(resolution)
        self.occupancy = occupancy
        self.occupancy.setflags(write=False)
        self.instances = list(instances)
        self.categories = tuple(categories)
        self._by_id = {}
        h, w = occupancy.shape
        self.instance_grid = np.full((h, w), -1, dtype=np.int64)
        self.category_grid = np.full((h, w), -1, dtype=np.int64)

        cat_index = {c: i for i, c in enumerate(self.categories)}
        for inst in self.instances:
            if inst.id in self._by_id:
                raise InvariantViolation(f"duplicate instance id {inst.id}")
            if inst.category not in cat_index:
                raise InvariantViolation(
                    f"instance {inst.id} has unknown category {inst.category!r}"
                )
            self._by_id[inst.id] = inst
            for r, c in inst.cells:
                if not (0 <= r < h and 0 <= c < w):
                    raise InvariantViolation(
                        f"instance {inst.id} cell {(r, c)} out of bounds"
                    )
                if not occupancy[r, c]:
                    raise InvariantViolation(
                        f"instance {inst.id} cell {(r, c)} is not an obstacle"
                    )
                if self.instance_grid[r, c] != -1:
                    raise InvariantViolation(
                        f"instances {self.instance_grid[r, c]} and {inst.id}"
                        f" share cell {(r, c)}"
                    )
                self.instance_grid[r, c] = inst.id
                self.category_grid[r, c] = cat_index[inst.category]
        self.instance_grid.setflags(write=False)
        self.category_grid.setflags(write=False)

        if not (~occupancy).any():
            raise InvariantViolation("world has no traversable cell")

    @property
    def shape(self) -> tuple[int, int]:
        return self.occupancy.shape

    def instance(self, instance_id: int) -> Instance:
        return self._by_id[instance_id]

    def has_instance(self, instance_id: int) -> bool:
        return instance_id in self._by_id

    def traversable(self, x: float, y: float) -> bool:
        r, c = geometry.cell_of(x, y, self.resolution)
        h, w = self.occupancy.shape
        return 0 <= r < h and 0 <= c < w and not self.occupancy[r, c]

    def instance_mask(self, instance_id: int) -> np.ndarray:
        mask = np.zeros(self.occupancy.shape, dtype=bool)
        for r, c in self.instance(instance_id).cells:
            mask[r, c] = True
        return mask

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, World)
            and self.resolution == other.resolution
            and np.array_equal(self.occupancy, other.occupancy)
            and self.categories == other.categories
            and sorted(self.instances, key=lambda i: i.id)
            == sorted(other.instances, key=lambda i: i.id)
        )


# ---------------------------------------------------------------------------
# file formats
# ---------------------------------------------------------------------------


def save_world(w: World) -> str:
    lines = [WORLD_MAGIC]
    lines.append(f"resolution {w.resolution!r}")
    h, width = w.shape
    lines.append(f"width {width}")
    lines.append(f"height {h}")
    lines.append(f"categories {','.join(w.categories)}")
    lines.append("map")
    for r in range(h):
        lines.append("".join("#" if w.occupancy[r, c] else "." for c in range(width)))
    for inst in sorted(w.instances, key=lambda i: i.id):
        cells = " ".join(f"{r},{c}" for r, c in sorted(inst.cells))
        lines.append(f"instance {inst.id} {inst.category} {cells}")
    return "\n".join(lines) + "\n"


def load_world(text: str) -> World:
    lines = text.splitlines()
    if not lines or lines[0].strip() != WORLD_MAGIC:
        raise WorldFormatError(f"expected magic line {WORLD_MAGIC!r}", line=1)

    header: dict[str, str] = {}
    i = 1
    while i < len(lines):
        stripped = lines[i].strip()
        if stripped == "map":
            i += 1
            break
        if stripped:
            parts = stripped.split(None, 1)
            if len(parts) != 2:
                raise WorldFormatError(f"bad header entry {stripped!r}", line=i + 1)
            header[parts[0]] = parts[1]
        i += 1
    else:
        raise WorldFormatError("missing 'map' section")

    try:
        resolution = float(header["resolution"])
        width = int(header["width"])
        height = int(header["height"])
    except KeyError as exc:
        raise WorldFormatError(f"missing header field {exc.args[0]!r}") from None
    except ValueError as exc:
        raise WorldFormatError(f"bad header value: {exc}") from None
    categories = (
        tuple(header["categories"].split(","))
        if "categories" in header
        else DEFAULT_CATEGORIES
    )

    occ = np.zeros((height, width), dtype=bool)
    for r in range(height):
        if i + r >= len(lines):
            raise WorldFormatError(
                f"map block ends early: expected {height} rows", line=len(lines)
            )
        row = lines[i + r].rstrip("\n")
        if len(row) != width:
            raise WorldFormatError(
                f"map row has {len(row)} columns, expected {width}", line=i + r + 1
            )
        for c, ch in enumerate(row):
            if ch == "#":
                occ[r, c] = True
            elif ch != ".":
                raise WorldFormatError(f"bad map character {ch!r}", line=i + r + 1)
    i += height

    instances: list[Instance] = []
    for j in range(i, len(lines)):
        stripped = lines[j].strip()
        if not stripped:
            continue
        parts = stripped.split()
        if parts[0] != "instance":
            raise WorldFormatError(f"expected instance record, got {parts[0]!r}", line=j + 1)
        if len(parts) < 4:
            raise WorldFormatError("instance record needs id, category, cells", line=j + 1)
        try:
            iid = int(parts[1])
            cells = []
            for tok in parts[3:]:
                r_s, c_s = tok.split(",")
                cells.append((int(r_s), int(c_s)))
        except ValueError as exc:
            raise WorldFormatError(f"bad instance record: {exc}", line=j + 1) from None
        # instance footprints are obstacles by definition
        for r, c in cells:
            if not (0 <= r < height and 0 <= c < width):
                raise WorldFormatError(
                    f"instance {iid} cell {(r, c)} out of bounds", line=j + 1
                )
            occ[r, c] = True
        instances.append(Instance(iid, parts[2], frozenset(cells)))

    return World(resolution, occ, instances, categories)


def save_episodes(episodes: list[Episode]) -> str:
    lines = [EPISODES_MAGIC]
    for e in episodes:
        lines.append(
            f"{float(e.start.x)!r} {float(e.start.y)!r} {float(e.start.theta)!r} "
            f"{e.goal_instance} {float(e.goal.capture_distance)!r} {e.max_steps}"
        )
    return "\n".join(lines) + "\n"


def load_episodes(text: str, w: World) -> list[Episode]:
    lines = text.splitlines()
    if not lines or lines[0].strip() != EPISODES_MAGIC:
        raise WorldFormatError(f"expected magic line {EPISODES_MAGIC!r}", line=1)
    episodes = []
    for j, raw in enumerate(lines[1:], start=2):
        stripped = raw.strip()
        if not stripped:
            continue
        parts = stripped.split()
        if len(parts) != 6:
            raise WorldFormatError(
                f"episode record needs 6 fields, got {len(parts)}", line=j
            )
        try:
            x, y, theta = float(parts[0]), float(parts[1]), float(parts[2])
            goal_id = int(parts[3])
            capture = float(parts[4])
            max_steps = int(parts[5])
        except ValueError as exc:
            raise WorldFormatError(f"bad episode record: {exc}", line=j) from None
        if not w.has_instance(goal_id):
            raise WorldFormatError(f"unknown goal instance {goal_id}", line=j)
        if not w.traversable(x, y):
            raise WorldFormatError(
                f"start ({x}, {y}) is not on a traversable cell", line=j
            )
        category = w.instance(goal_id).category
        episodes.append(
            Episode(
                start=Pose(x, y, wrap_angle(theta)),
                goal_instance=goal_id,
                goal=GoalDescriptor(category, goal_id, capture),
                max_steps=max_steps,
            )
        )
    return episodes


# ---------------------------------------------------------------------------
# sensing and kinematics
# ---------------------------------------------------------------------------


def sense(w: World, p: Pose, cfg: SensorConfig = SensorConfig()) -> Observation:
    brgs = geometry.bearings(p.theta, cfg.rays, cfg.fov)
    dists, inst_ids, cat_ids = geometry.sense_rays(
        w.occupancy,
        w.instance_grid,
        w.category_grid,
        p.x,
        p.y,
        brgs,
        cfg.max_range,
        w.resolution,
    )
    return Observation(
        pose=p,
        sensor=cfg,
        distances=dists,
        category_ids=cat_ids,
        instance_ids=inst_ids,
        categories=w.categories,
    )


def step(w: World, p: Pose, a: Action) -> Pose:
    """Apply one motion command: rotate, then translate with collision stop.

    A stop action leaves the pose unchanged.  Translation along the new
    heading halts just before the first obstacle boundary, so the result
    is always traversable.
    """
    if a.stop:
        return p
    theta = wrap_angle(p.theta + a.angular * MAX_ANGULAR_STEP)
    dist = a.linear * MAX_LINEAR_STEP
    if dist == 0.0:
        return Pose(p.x, p.y, theta)
    bearing = theta if dist > 0 else wrap_angle(theta + math.pi)
    span = abs(dist)
    hit_d, hit_r, _ = geometry.ray_hit(
        w.occupancy, p.x, p.y, bearing, span + w.resolution, w.resolution
    )
    travel = span
    if hit_r >= 0 and hit_d <= span:
        travel = max(0.0, hit_d - _COLLISION_BACKOFF)
    x = p.x + travel * math.cos(bearing)
    y = p.y + travel * math.sin(bearing)
    if not w.traversable(x, y):  # numeric backoff landed on a boundary
        x, y = p.x, p.y
    return Pose(x, y, theta)


def oracle_visible(
    w: World, p: Pose, instance_id: int, max_range: float = SensorConfig().max_range
) -> bool:
    """Planar 360-degree line-of-sight check against an instance.

    True when some cell center of the instance is within max_range and the
    straight segment from the agent is not blocked; the instance's own
    footprint never occludes itself.
    """
    inst = w.instance(instance_id)
    cells = sorted(inst.cells)
    cells_r = np.array([r for r, _ in cells], dtype=np.int64)
    cells_c = np.array([c for _, c in cells], dtype=np.int64)
    transparent = w.instance_mask(instance_id)
    return bool(
        geometry.visible_from(
            w.occupancy, transparent, p.x, p.y, cells_r, cells_c,
            max_range, w.resolution,
        )
    )


def goal_band_cells(
    w: World,
    instance_id: int,
    radius: float = SUCCESS_RADIUS,
    max_range: float = SensorConfig().max_range,
) -> np.ndarray:
    """Boolean mask of traversable cells that would count as a success stop:
    within ``radius`` of the instance and with line of sight to it."""
    inst = w.instance(instance_id)
    h, width = w.shape
    res = w.resolution
    mask = np.zeros((h, width), dtype=bool)
    r_lo = max(0, min(r for r, _ in inst.cells) - int(radius / res) - 1)
    r_hi = min(h, max(r for r, _ in inst.cells) + int(radius / res) + 2)
    c_lo = max(0, min(c for _, c in inst.cells) - int(radius / res) - 1)
    c_hi = min(width, max(c for _, c in inst.cells) + int(radius / res) + 2)
    for r in range(r_lo, r_hi):
        for c in range(c_lo, c_hi):
            if w.occupancy[r, c]:
                continue
            x, y = geometry.cell_center(r, c, res)
            if inst.nearest_distance(x, y, res) > radius:
                continue
            if oracle_visible(w, Pose(x, y, 0.0), instance_id, max_range):
                mask[r, c] = True
    return mask


def shortest_path_length(
    w: World,
    start: Pose,
    instance_id: int,
    radius: float = SUCCESS_RADIUS,
    max_range: float = SensorConfig().max_range,
) -> float:
    """Length in meters of the shortest 8-connected path from the start
    cell to any cell within ``radius`` of the instance that also has line
    of sight to it.  Returns 0.0 when the start already qualifies and
    +inf when no such cell is reachable."""
    band = goal_band_cells(w, instance_id, radius, max_range)
    if not band.any():
        return math.inf
    seeds = np.argwhere(band)
    free = ~w.occupancy
    field = geometry.grid_dijkstra(
        free, seeds[:, 0].astype(np.int64), seeds[:, 1].astype(np.int64), w.resolution
    )
    r, c = geometry.cell_of(start.x, start.y, w.resolution)
    return float(field[r, c])
