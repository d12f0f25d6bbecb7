"""Switch policy: explore, verify, or exploit.

The switch decision consumes three things: whether any unrejected
goal-category evidence exists in the semantic map, the distance to the
nearest such evidence, and the matched-keypoint count of the current
view.  Two distance-dependent thresholds shape the decision:

    omega >= U(d)   ->  EXPLOITATION (commit to the candidate)
    omega <  L(d)   ->  EXPLORATION  (reject the candidate)
    otherwise       ->  VERIFICATION (move closer and re-check)

U(d) grows with distance - committing from afar requires much stronger
evidence.  Wherever L(d) = U(d) the verification band is closed: a view
either clears U outright or is ignored.  The default curves only open
the band close-in, because that is where a low match count actually
means something.  Setting U(d) = L(d) = constant everywhere collapses
the policy to the classic fixed-threshold explore/exploit baseline:
verification becomes unreachable and nothing is ever rejected.

Rejection is permanent within an episode: when verification of a target
ends in rejection, the target's map cells join a grow-only mask that
candidate detection skips from then on.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import ndimage

from . import geometry
from .errors import EmptyProjectionError, InvariantViolation
from .mapping import MapConfig, SemanticMap, project_observation
from .world import Observation, Pose

__all__ = [
    "SwitchSignal",
    "ThresholdCurves",
    "DEFAULT_CURVES",
    "ee_curves",
    "PotentialTarget",
    "GoalMap",
    "SwitchState",
    "detect_potential",
    "f_switch",
    "update_switch",
    "project_goal",
    "frontier_mask",
    "frontier_goal",
    "random_goal",
]


class SwitchSignal(enum.Enum):
    EXPLORATION = "exploration"
    VERIFICATION = "verification"
    EXPLOITATION = "exploitation"


@dataclass(frozen=True)
class ThresholdCurves:
    """Piecewise-linear upper/lower thresholds over view distance.

    breakpoints is a sorted tuple of (distance_m, upper, lower); between
    breakpoints both curves interpolate linearly, outside they clamp to
    the nearest breakpoint.  Invariants: upper >= lower >= 0 everywhere,
    and both curves are non-decreasing in distance (closing in never
    raises the bar for committing, and never makes rejection harder).
    """

    breakpoints: tuple[tuple[float, float, float], ...]

    def __post_init__(self):
        if not self.breakpoints:
            raise InvariantViolation("curves need at least one breakpoint")
        ds = [b[0] for b in self.breakpoints]
        if sorted(ds) != ds or len(set(ds)) != len(ds):
            raise InvariantViolation("breakpoints must be sorted by distance")
        for d, u, l in self.breakpoints:
            if l < 0 or u < l:
                raise InvariantViolation(
                    f"need upper >= lower >= 0 at d={d}: upper={u} lower={l}"
                )
        uppers = [b[1] for b in self.breakpoints]
        if any(u2 < u1 for u1, u2 in zip(uppers, uppers[1:])):
            raise InvariantViolation("upper curve must be non-decreasing in distance")
        lowers = [b[2] for b in self.breakpoints]
        if any(l2 < l1 for l1, l2 in zip(lowers, lowers[1:])):
            raise InvariantViolation("lower curve must be non-decreasing in distance")

    def upper(self, d: float) -> float:
        ds = [b[0] for b in self.breakpoints]
        us = [b[1] for b in self.breakpoints]
        return float(np.interp(d, ds, us))

    def lower(self, d: float) -> float:
        ds = [b[0] for b in self.breakpoints]
        ls = [b[2] for b in self.breakpoints]
        return float(np.interp(d, ds, ls))


# Defaults: the commit bar rises from 24 close-in (where positives are
# reliable) through the baseline threshold 60 at 3 m to 100 at sensor
# range.  Beyond 3 m upper == lower, so distant sightings either commit
# outright or are ignored; a genuine verification band — and with it the
# possibility of rejection — only opens close-in, where a negative
# verdict is trustworthy.
DEFAULT_CURVES = ThresholdCurves(
    breakpoints=((1.0, 24.0, 8.0), (3.0, 60.0, 60.0), (5.0, 100.0, 100.0))
)


def ee_curves(threshold: float = 60.0) -> ThresholdCurves:
    """Fixed-threshold explore/exploit reduction: U = L = threshold."""
    return ThresholdCurves(breakpoints=((1.0, threshold, threshold),))


@dataclass(frozen=True)
class PotentialTarget:
    """One connected clump of unrejected goal-category map cells."""

    cells: frozenset[tuple[int, int]]
    distance: float

    def __post_init__(self):
        if not self.cells:
            raise InvariantViolation("potential target has no cells")
        if self.distance <= 0:
            raise InvariantViolation("potential target distance must be positive")


@dataclass(frozen=True)
class GoalMap:
    """Boolean navigation-goal mask over the map grid."""

    grid: np.ndarray

    def __post_init__(self):
        if not self.grid.any():
            raise InvariantViolation("goal map is empty")

    def cells(self) -> np.ndarray:
        return np.argwhere(self.grid)


@dataclass(frozen=True)
class SwitchState:
    """Episode-local switch-policy memory.

    confirmed_goal is assigned at most once: entering EXPLOITATION
    latches it for the rest of the episode.  rejected only ever grows.
    verify_target remembers what is being verified so that an
    EXPLORATION verdict can reject it.
    """

    mode: SwitchSignal
    confirmed_goal: GoalMap | None
    rejected: np.ndarray
    verify_target: PotentialTarget | None = None

    @classmethod
    def initial(cls, shape: tuple[int, int]) -> "SwitchState":
        return cls(
            mode=SwitchSignal.EXPLORATION,
            confirmed_goal=None,
            rejected=np.zeros(shape, dtype=bool),
        )


def detect_potential(
    m: SemanticMap,
    goal_category: str,
    rejected: np.ndarray,
    agent: Pose,
) -> PotentialTarget | None:
    """Nearest 8-connected clump of unrejected goal-category map cells.

    Rejection operates on cells, not objects: cells of a rejected clump
    that were mapped *after* the rejection count as fresh evidence and
    can trigger a new verification pass.  A distant, half-seen object
    that gets dismissed therefore earns another look once the agent maps
    more of it from closer in.
    """
    mask = m.category_channel(goal_category) & ~rejected
    if not mask.any():
        return None
    labels, n = ndimage.label(mask, structure=np.ones((3, 3), dtype=int))
    res = m.resolution
    rows, cols = np.nonzero(mask)
    cx = (cols + 0.5) * res
    cy = (rows + 0.5) * res
    dists = np.hypot(cx - agent.x, cy - agent.y)
    comp = labels[rows, cols]
    best_label, best_dist = None, math.inf
    for lab in range(1, n + 1):
        sel = comp == lab
        d = float(dists[sel].min())
        if d < best_dist - 1e-12:
            best_label, best_dist = lab, d
    cells = frozenset(
        (int(r), int(c)) for r, c in zip(*np.nonzero(labels == best_label))
    )
    # Category cells are obstacle cells, so the agent can never stand on
    # one; still, keep the distance strictly positive for safety.
    return PotentialTarget(cells=cells, distance=max(best_dist, 1e-9))


def f_switch(
    exists: bool, d: float, omega: int, curves: ThresholdCurves
) -> SwitchSignal:
    """Pure switch decision; see module docstring for the semantics."""
    if not exists:
        return SwitchSignal.EXPLORATION
    if d <= 0:
        raise InvariantViolation("distance must be positive when a target exists")
    if omega >= curves.upper(d):
        return SwitchSignal.EXPLOITATION
    if omega < curves.lower(d):
        return SwitchSignal.EXPLORATION
    return SwitchSignal.VERIFICATION


def update_switch(
    s: SwitchState,
    signal: SwitchSignal,
    t: PotentialTarget | None = None,
    goal_projection: GoalMap | None = None,
) -> SwitchState:
    """Fold one switch signal into the state machine.

    EXPLOITATION latches: once entered the state never changes again.
    An EXPLORATION signal that interrupts VERIFICATION rejects the
    remembered verification target (its cells join the grow-only mask).
    """
    if s.mode == SwitchSignal.EXPLOITATION:
        return s
    if signal == SwitchSignal.EXPLOITATION:
        if t is None or goal_projection is None:
            raise InvariantViolation(
                "EXPLOITATION needs a target and a goal projection"
            )
        return replace(
            s,
            mode=SwitchSignal.EXPLOITATION,
            confirmed_goal=goal_projection,
            verify_target=None,
        )
    if signal == SwitchSignal.VERIFICATION:
        if t is None or goal_projection is None:
            raise InvariantViolation(
                "VERIFICATION needs a target and a goal projection"
            )
        return replace(s, mode=SwitchSignal.VERIFICATION, verify_target=t)
    # EXPLORATION
    if s.mode == SwitchSignal.VERIFICATION and s.verify_target is not None:
        rejected = s.rejected.copy()
        for r, c in s.verify_target.cells:
            rejected[r, c] = True
        return replace(
            s, mode=SwitchSignal.EXPLORATION, rejected=rejected, verify_target=None
        )
    return replace(s, mode=SwitchSignal.EXPLORATION, verify_target=None)


def project_goal(o: Observation, goal_category: str, cfg: MapConfig) -> GoalMap:
    """Goal mask from the current view: cells hit by goal-category rays."""
    proj = project_observation(o, cfg)
    grid = proj.category_channel(goal_category).copy()
    if not grid.any():
        raise EmptyProjectionError(
            f"no {goal_category!r} cells in the current view"
        )
    return GoalMap(grid=grid)


def frontier_mask(m: SemanticMap) -> np.ndarray:
    """Boolean mask of free explored cells bordering unexplored space."""
    free = m.explored & ~m.obstacle
    unexplored = ~m.explored
    border = np.zeros_like(free)
    border[:-1, :] |= unexplored[1:, :]
    border[1:, :] |= unexplored[:-1, :]
    border[:, :-1] |= unexplored[:, 1:]
    border[:, 1:] |= unexplored[:, :-1]
    return free & border


def frontier_goal(m: SemanticMap, agent: Pose | None = None) -> GoalMap:
    """Exploration goal: free explored cells bordering unexplored space.

    Falls back to the explored free cell farthest from the agent when no
    frontier remains (fully explored maps).
    """
    free = m.explored & ~m.obstacle
    frontier = frontier_mask(m)
    if frontier.any():
        return GoalMap(grid=frontier)
    if agent is None:
        raise EmptyProjectionError("no frontier and no agent pose for fallback")
    if not free.any():
        raise EmptyProjectionError("map has no explored free cell")
    rows, cols = np.nonzero(free)
    res = m.resolution
    d = np.hypot((cols + 0.5) * res - agent.x, (rows + 0.5) * res - agent.y)
    far = int(np.argmax(d))
    grid = np.zeros_like(free)
    grid[rows[far], cols[far]] = True
    return GoalMap(grid=grid)


def random_goal(m: SemanticMap, rng: np.random.Generator) -> GoalMap:
    """Exploration goal: one uniformly random explored free cell."""
    free = m.explored & ~m.obstacle
    if not free.any():
        raise EmptyProjectionError("map has no explored free cell")
    rows, cols = np.nonzero(free)
    k = int(rng.integers(len(rows)))
    grid = np.zeros_like(free)
    grid[rows[k], cols[k]] = True
    return GoalMap(grid=grid)
