"""Shared reference implementations the tests compare the package against.

Everything in here is deliberately written the slow, obvious way —
plain-python heaps, dense ray marching, recursive flood fill — so that
agreement with the production code means two independent routes reached
the same answer.
"""

from __future__ import annotations

import heapq
import math

import numpy as np

from gridnav.world import Instance, World

SQRT2 = math.sqrt(2.0)


def dijkstra_reference(
    free: np.ndarray, seeds: list[tuple[int, int]], res: float
) -> np.ndarray:
    """Plain-python multi-source Dijkstra over an 8-connected grid.

    Matches the production field semantics: seeds start at zero even on
    blocked cells, expansion only enters free cells, straight moves cost
    ``res`` and diagonal moves ``sqrt(2) * res``, and a diagonal move is
    only allowed when both adjacent orthogonal cells are free.
    """
    h, w = free.shape
    dist = np.full((h, w), np.inf)
    heap: list[tuple[float, int, int]] = []
    for r, c in seeds:
        if 0 <= r < h and 0 <= c < w and dist[r, c] > 0.0:
            dist[r, c] = 0.0
            heapq.heappush(heap, (0.0, r, c))
    while heap:
        d0, r0, c0 = heapq.heappop(heap)
        if d0 > dist[r0, c0]:
            continue
        for dr in (-1, 0, 1):
            for dc in (-1, 0, 1):
                if dr == 0 and dc == 0:
                    continue
                r1, c1 = r0 + dr, c0 + dc
                if not (0 <= r1 < h and 0 <= c1 < w):
                    continue
                if not free[r1, c1]:
                    continue
                if dr != 0 and dc != 0:
                    if not (free[r0 + dr, c0] and free[r0, c0 + dc]):
                        continue
                nd = d0 + (SQRT2 * res if dr != 0 and dc != 0 else res)
                if nd < dist[r1, c1]:
                    dist[r1, c1] = nd
                    heapq.heappush(heap, (nd, r1, c1))
    return dist


def march_ray(
    occ: np.ndarray,
    x0: float,
    y0: float,
    bearing: float,
    max_range: float,
    res: float,
    step: float | None = None,
) -> tuple[float, int, int]:
    """Dense-sampling raycast, refined by bisection at the first hit.

    Returns (distance, row, col) of the first occupied cell other than
    the origin cell, or (max_range, -1, -1).  Accuracy is limited only
    by the bisection, so agreement with an exact DDA should be tight.
    """
    h, w = occ.shape
    if step is None:
        step = res / 200.0
    ox, oy = math.cos(bearing), math.sin(bearing)
    origin = (int(y0 / res), int(x0 / res))

    def cell_at(t: float) -> tuple[int, int]:
        return (int((y0 + t * oy) / res), int((x0 + t * ox) / res))

    def occupied(t: float) -> bool:
        r, c = cell_at(t)
        if not (0 <= r < h and 0 <= c < w):
            return False
        return bool(occ[r, c]) and (r, c) != origin

    t = step
    while t <= max_range:
        if occupied(t):
            lo, hi = t - step, t
            for _ in range(60):
                mid = (lo + hi) / 2.0
                if occupied(mid):
                    hi = mid
                else:
                    lo = mid
            r, c = cell_at(hi)
            return hi, r, c
        t += step
    return max_range, -1, -1


def flood_fill_4(free: np.ndarray, seed: tuple[int, int]) -> np.ndarray:
    """4-connected reachable set from a seed cell."""
    h, w = free.shape
    seen = np.zeros_like(free)
    if not free[seed]:
        return seen
    stack = [seed]
    seen[seed] = True
    while stack:
        r, c = stack.pop()
        for r1, c1 in ((r + 1, c), (r - 1, c), (r, c + 1), (r, c - 1)):
            if 0 <= r1 < h and 0 <= c1 < w and free[r1, c1] and not seen[r1, c1]:
                seen[r1, c1] = True
                stack.append((r1, c1))
    return seen


def ascii_world(
    rows: list[str],
    instances: dict[str, tuple[int, str]] | None = None,
    res: float = 0.25,
    categories: tuple[str, ...] | None = None,
) -> World:
    """Build a tiny world from ASCII art.

    ``#`` is a bare wall, ``.`` is free, and any other character marks
    the cells of one instance; ``instances`` maps that character to an
    (id, category) pair.
    """
    from gridnav.world import DEFAULT_CATEGORIES

    instances = instances or {}
    h = len(rows)
    w = len(rows[0])
    occ = np.zeros((h, w), dtype=bool)
    cells: dict[str, set[tuple[int, int]]] = {ch: set() for ch in instances}
    for r, line in enumerate(rows):
        assert len(line) == w, "ragged ascii map"
        for c, ch in enumerate(line):
            if ch == ".":
                continue
            occ[r, c] = True
            if ch != "#":
                cells[ch].add((r, c))
    built = [
        Instance(id=iid, category=cat, cells=frozenset(cells[ch]))
        for ch, (iid, cat) in instances.items()
    ]
    return World(
        resolution=res,
        occupancy=occ,
        instances=built,
        categories=categories or DEFAULT_CATEGORIES,
    )
