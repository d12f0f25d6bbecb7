"""Local planning: distance fields, waypoints, actions, anti-stuck.

The active goal map is turned into a multi-source shortest-distance
field over traversable cells (8-connected grid Dijkstra, edge costs
``resolution`` straight and ``sqrt(2)*resolution`` diagonal).  A
waypoint is the lowest-valued field cell within the agent's feasible
disc that the agent can reach along an unobstructed straight segment,
and the waypoint is reduced to a normalized rotate/translate command.

A small visit-count memory notices when the agent keeps revisiting one
cell (typically pinned against something the map has not resolved) and
lets the caller drop a virtual obstacle in front of the agent for the
next field computation.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, replace

import numpy as np

from . import geometry
from .errors import InvariantViolation, NoSeedError, UnreachableLocalError
from .geometry import cell_center, cell_of, wrap_angle
from .policy import GoalMap
from .world import MAX_ANGULAR_STEP, MAX_LINEAR_STEP, Action, Pose

__all__ = [
    "STUCK_N",
    "STUCK_WINDOW",
    "DistanceField",
    "Waypoint",
    "TrajectoryMemory",
    "fmm_field",
    "select_waypoint",
    "waypoint_to_action",
    "update_trajectory",
    "clear_stuck",
    "forward_cell",
]

STUCK_N = 8
STUCK_WINDOW = 20

_HEADING_TOL = math.radians(15.0)


@dataclass(frozen=True)
class DistanceField:
    """Shortest path distance (meters) to the goal set; +inf unreachable."""

    values: np.ndarray
    resolution: float

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


@dataclass(frozen=True)
class Waypoint:
    cell: tuple[int, int]
    position: tuple[float, float]


def fmm_field(obstacles: np.ndarray, goal: GoalMap, resolution: float) -> DistanceField:
    """Distance-to-goal field over the traversable cells.

    Goal cells that fall on obstacle cells contribute no seed (they stay
    unreachable, +inf); if every goal cell is swallowed by obstacles the
    field would be vacuous, which is reported as NoSeedError.  Callers
    working with goals painted on obstacle cells (object surfaces) are
    expected to dilate the goal mask into free space first.
    """
    if obstacles.shape != goal.grid.shape:
        raise InvariantViolation(
            f"obstacle grid {obstacles.shape} vs goal grid {goal.grid.shape}"
        )
    seeds = goal.grid & ~obstacles
    if not seeds.any():
        raise NoSeedError("every goal cell lies inside an obstacle")
    rows, cols = np.nonzero(seeds)
    values = geometry.grid_dijkstra(
        ~obstacles,
        rows.astype(np.int64),
        cols.astype(np.int64),
        float(resolution),
    )
    return DistanceField(values=values, resolution=float(resolution))


def select_waypoint(f: DistanceField, p: Pose, feasible_radius: float) -> Waypoint:
    """Best in-disc field cell reachable along a straight clear segment.

    Candidates are the finite-valued cells whose centers lie within
    feasible_radius of the agent, excluding the cell the agent already
    occupies (a motion target must actually move it); they are tried in
    order of field value, then smallest heading change, then row-major
    position, and the first whose connecting segment crosses no
    unreachable/obstacle cell wins.
    """
    h, w = f.shape
    res = f.resolution
    own = cell_of(p.x, p.y, res)
    rows, cols = np.nonzero(np.isfinite(f.values))
    if len(rows) == 0:
        raise UnreachableLocalError("distance field has no finite cell")
    cx = (cols + 0.5) * res
    cy = (rows + 0.5) * res
    dx = cx - p.x
    dy = cy - p.y
    in_disc = (np.hypot(dx, dy) <= feasible_radius) & ~(
        (rows == own[0]) & (cols == own[1])
    )
    if not in_disc.any():
        raise UnreachableLocalError(
            f"no finite field cell within {feasible_radius} m of the agent"
        )
    rows, cols = rows[in_disc], cols[in_disc]
    dx, dy = dx[in_disc], dy[in_disc]
    values = f.values[rows, cols]
    turn = np.abs(
        np.array([wrap_angle(b - p.theta) for b in np.arctan2(dy, dx)])
    )
    order = np.lexsort((cols, rows, turn, values))
    blocked = ~np.isfinite(f.values)
    for k in order:
        r, c = int(rows[k]), int(cols[k])
        x, y = cell_center(r, c, res)
        if not geometry.segment_blocked(blocked, p.x, p.y, x, y, res):
            return Waypoint(cell=(r, c), position=(x, y))
    raise UnreachableLocalError("no in-disc cell passes the clear-segment test")


def waypoint_to_action(
    p: Pose,
    wp: Waypoint,
    stop_distance: float,
    *,
    goal_distance: float | None = None,
) -> Action:
    """Rotate/translate command toward the waypoint.

    goal_distance is the agent's Euclidean distance to the nearest
    confirmed-goal cell center, when a goal has been confirmed; within
    stop_distance it wins over any motion and the action is a stop.
    Otherwise: heading error beyond 15 degrees triggers rotation only;
    aligned motion scales linear by distance (saturating at one step)
    with a proportional heading correction.
    """
    if goal_distance is not None and goal_distance <= stop_distance:
        return Action(stop=True)
    dx = wp.position[0] - p.x
    dy = wp.position[1] - p.y
    dist = math.hypot(dx, dy)
    if dist == 0.0:
        return Action()
    err = wrap_angle(math.atan2(dy, dx) - p.theta)
    angular = max(-1.0, min(1.0, err / MAX_ANGULAR_STEP))
    if abs(err) > _HEADING_TOL:
        return Action(linear=0.0, angular=angular)
    return Action(linear=min(1.0, dist / MAX_LINEAR_STEP), angular=angular)


@dataclass(frozen=True)
class TrajectoryMemory:
    """Per-episode visit counts with a sliding stuck detector."""

    counts: np.ndarray
    window: tuple[tuple[int, int], ...]
    resolution: float
    stuck: bool = False

    @classmethod
    def initial(cls, shape: tuple[int, int], resolution: float) -> "TrajectoryMemory":
        return cls(
            counts=np.zeros(shape, dtype=np.int64),
            window=(),
            resolution=float(resolution),
        )


def update_trajectory(tm: TrajectoryMemory, p: Pose) -> TrajectoryMemory:
    """Record the agent's cell; flag stuck on heavy recent revisiting.

    The flag raises when one cell collects STUCK_N visits within the
    last STUCK_WINDOW updates.  It stays up until cleared by the caller
    (after planting the virtual obstacle for the next field).
    """
    cell = cell_of(p.x, p.y, tm.resolution)
    counts = tm.counts.copy()
    counts[cell] += 1
    window = (tm.window + (cell,))[-STUCK_WINDOW:]
    stuck = tm.stuck or Counter(window)[cell] >= STUCK_N
    return replace(tm, counts=counts, window=window, stuck=stuck)


def clear_stuck(tm: TrajectoryMemory) -> TrajectoryMemory:
    return replace(tm, stuck=False)


def forward_cell(p: Pose, resolution: float) -> tuple[int, int] | None:
    """Cell one resolution step ahead of the agent, if inside no grid yet.

    Returns the candidate virtual-obstacle cell for stuck recovery; the
    caller clamps it to its grid bounds (None only for negative
    coordinates, which cannot be clamped meaningfully).
    """
    x = p.x + resolution * math.cos(p.theta)
    y = p.y + resolution * math.sin(p.theta)
    if x < 0 or y < 0:
        return None
    return cell_of(x, y, resolution)
