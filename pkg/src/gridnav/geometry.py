"""Grid geometry kernels: raycasting, line-of-sight, and grid Dijkstra.

Everything here operates on raw numpy arrays so the hot loops can be
compiled with numba.  Higher-level modules wrap these kernels in typed
dataclasses; tests cross-check them against slow brute-force oracles.

Conventions:
  * occupancy grids are (H, W) with row r <-> world y, col c <-> world x
  * a point (x, y) in meters lives in cell (int(y // res), int(x // res))
  * ray distances are measured to the *boundary* of the first occupied
    cell, never past ``max_range``
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

__all__ = [
    "bearings",
    "cell_of",
    "cell_center",
    "ray_hit",
    "sense_rays",
    "project_rays",
    "visible_from",
    "segment_blocked",
    "grid_dijkstra",
    "wrap_angle",
]

_EPS = 1e-9


def wrap_angle(theta: float) -> float:
    """Wrap an angle to [-pi, pi)."""
    return (theta + math.pi) % (2.0 * math.pi) - math.pi


def bearings(theta: float, n_rays: int, fov: float) -> np.ndarray:
    """Ray bearings for a sensor sweep centered on heading ``theta``.

    Ray k points at theta - fov/2 + k * fov / (n_rays - 1).  A single-ray
    sensor degenerates to the center heading.
    """
    if n_rays < 1:
        raise ValueError("n_rays must be >= 1")
    if n_rays == 1:
        return np.array([theta], dtype=np.float64)
    k = np.arange(n_rays, dtype=np.float64)
    return theta - fov / 2.0 + k * (fov / (n_rays - 1))


def cell_of(x: float, y: float, res: float) -> tuple[int, int]:
    return int(y // res), int(x // res)


def cell_center(r: int, c: int, res: float) -> tuple[float, float]:
    return (c + 0.5) * res, (r + 0.5) * res


@njit(cache=True)
def ray_hit(occ, x0, y0, bearing, max_range, res):
    """Exact DDA raycast to the first occupied cell.

    Returns (dist, r, c).  dist is the entry distance into the hit cell;
    r == -1 means no hit within max_range (dist == max_range).  The cell
    containing the origin is never reported as a hit.
    """
    h, w = occ.shape
    dx = math.cos(bearing)
    dy = math.sin(bearing)
    r = int(y0 // res)
    c = int(x0 // res)

    if dx > 0.0:
        sx = 1
        t_max_x = ((c + 1) * res - x0) / dx
        t_dx = res / dx
    elif dx < 0.0:
        sx = -1
        t_max_x = (c * res - x0) / dx
        t_dx = -res / dx
    else:
        sx = 0
        t_max_x = math.inf
        t_dx = math.inf

    if dy > 0.0:
        sy = 1
        t_max_y = ((r + 1) * res - y0) / dy
        t_dy = res / dy
    elif dy < 0.0:
        sy = -1
        t_max_y = (r * res - y0) / dy
        t_dy = -res / dy
    else:
        sy = 0
        t_max_y = math.inf
        t_dy = math.inf

    while True:
        # an exact corner crossing advances both axes at once so that the
        # hit cell is unambiguous for anyone re-walking the ray from the
        # recorded distance alone
        if t_max_x < t_max_y:
            t = t_max_x
            t_max_x += t_dx
            c += sx
        elif t_max_y < t_max_x:
            t = t_max_y
            t_max_y += t_dy
            r += sy
        else:
            t = t_max_x
            t_max_x += t_dx
            t_max_y += t_dy
            c += sx
            r += sy
        if t >= max_range:
            return max_range, -1, -1
        if r < 0 or r >= h or c < 0 or c >= w:
            return max_range, -1, -1
        if occ[r, c]:
            return t, r, c


@njit(cache=True)
def sense_rays(occ, inst_grid, cat_grid, x0, y0, brgs, max_range, res):
    """Batched raycast with instance/category labels at the hit cells.

    Returns (dists, inst_ids, cat_ids); ids are -1 where nothing was hit
    or the hit cell carries no instance (bare wall).
    """
    n = brgs.shape[0]
    dists = np.empty(n, dtype=np.float64)
    inst_ids = np.full(n, -1, dtype=np.int64)
    cat_ids = np.full(n, -1, dtype=np.int64)
    for k in range(n):
        d, r, c = ray_hit(occ, x0, y0, brgs[k], max_range, res)
        dists[k] = d
        if r >= 0:
            inst_ids[k] = inst_grid[r, c]
            cat_ids[k] = cat_grid[r, c]
    return dists, inst_ids, cat_ids


@njit(cache=True)
def project_rays(x0, y0, brgs, dists, hit_flags, max_range, res, explored, hit_cells):
    """Re-walk recorded rays, marking traversed cells in ``explored``.

    Uses the same DDA arithmetic as ray_hit, so for a hit ray the cell
    entered at exactly the recorded distance is the sensed obstacle cell.
    hit_cells[k] receives (r, c) for hit rays, (-1, -1) otherwise.
    The ray origin's cell is always marked explored.
    """
    h, w = explored.shape
    n = brgs.shape[0]
    r0 = int(y0 // res)
    c0 = int(x0 // res)
    if 0 <= r0 < h and 0 <= c0 < w:
        explored[r0, c0] = True
    for k in range(n):
        hit_cells[k, 0] = -1
        hit_cells[k, 1] = -1
        stop = dists[k]
        dx = math.cos(brgs[k])
        dy = math.sin(brgs[k])
        r = r0
        c = c0
        if dx > 0.0:
            sx = 1
            t_max_x = ((c + 1) * res - x0) / dx
            t_dx = res / dx
        elif dx < 0.0:
            sx = -1
            t_max_x = (c * res - x0) / dx
            t_dx = -res / dx
        else:
            sx = 0
            t_max_x = math.inf
            t_dx = math.inf
        if dy > 0.0:
            sy = 1
            t_max_y = ((r + 1) * res - y0) / dy
            t_dy = res / dy
        elif dy < 0.0:
            sy = -1
            t_max_y = (r * res - y0) / dy
            t_dy = -res / dy
        else:
            sy = 0
            t_max_y = math.inf
            t_dy = math.inf

        while True:
            # mirror ray_hit exactly, including the diagonal step on corner
            # ties; the arithmetic is bit-identical so the recorded hit
            # distance lines up with exactly one boundary crossing
            if t_max_x < t_max_y:
                t = t_max_x
                t_max_x += t_dx
                c += sx
            elif t_max_y < t_max_x:
                t = t_max_y
                t_max_y += t_dy
                r += sy
            else:
                t = t_max_x
                t_max_x += t_dx
                t_max_y += t_dy
                c += sx
                r += sy
            if r < 0 or r >= h or c < 0 or c >= w:
                break
            if hit_flags[k] and t >= stop:
                # entry boundary of the sensed obstacle cell
                hit_cells[k, 0] = r
                hit_cells[k, 1] = c
                break
            if t >= stop:
                break
            explored[r, c] = True


@njit(cache=True)
def _segment_clear(occ, transparent, x0, y0, x1, y1, res):
    """True when the open segment (x0,y0)->(x1,y1) crosses no blocking cell.

    Cells flagged in ``transparent`` never block.  The cell containing the
    start point and the cell containing the end point do not block.
    """
    h, w = occ.shape
    dist = math.hypot(x1 - x0, y1 - y0)
    if dist <= 0.0:
        return True
    dx = (x1 - x0) / dist
    dy = (y1 - y0) / dist
    r = int(y0 // res)
    c = int(x0 // res)
    r_end = int(y1 // res)
    c_end = int(x1 // res)

    if dx > 0.0:
        sx = 1
        t_max_x = ((c + 1) * res - x0) / dx
        t_dx = res / dx
    elif dx < 0.0:
        sx = -1
        t_max_x = (c * res - x0) / dx
        t_dx = -res / dx
    else:
        sx = 0
        t_max_x = math.inf
        t_dx = math.inf
    if dy > 0.0:
        sy = 1
        t_max_y = ((r + 1) * res - y0) / dy
        t_dy = res / dy
    elif dy < 0.0:
        sy = -1
        t_max_y = (r * res - y0) / dy
        t_dy = -res / dy
    else:
        sy = 0
        t_max_y = math.inf
        t_dy = math.inf

    while True:
        if r == r_end and c == c_end:
            return True
        if t_max_x <= t_max_y:
            t = t_max_x
            t_max_x += t_dx
            c += sx
        else:
            t = t_max_y
            t_max_y += t_dy
            r += sy
        if t >= dist:
            return True
        if r < 0 or r >= h or c < 0 or c >= w:
            return True
        if r == r_end and c == c_end:
            return True
        if occ[r, c] and not transparent[r, c]:
            return False


@njit(cache=True)
def visible_from(occ, transparent, px, py, cells_r, cells_c, max_range, res):
    """True when any target cell center is within range with clear sight.

    ``transparent`` marks cells that never occlude (the target object's
    own footprint).
    """
    n = cells_r.shape[0]
    for i in range(n):
        cx = (cells_c[i] + 0.5) * res
        cy = (cells_r[i] + 0.5) * res
        if math.hypot(cx - px, cy - py) > max_range:
            continue
        if _segment_clear(occ, transparent, px, py, cx, cy, res):
            return True
    return False


@njit(cache=True)
def segment_blocked(occ, x0, y0, x1, y1, res):
    """True when the straight segment crosses an occupied cell.

    The start cell is ignored (it contains the agent); the end cell does
    block if occupied.
    """
    h, w = occ.shape
    dist = math.hypot(x1 - x0, y1 - y0)
    if dist <= 0.0:
        return False
    r_end = int(y1 // res)
    c_end = int(x1 // res)
    if 0 <= r_end < h and 0 <= c_end < w and occ[r_end, c_end]:
        return True
    transparent = np.zeros(occ.shape, dtype=np.bool_)
    return not _segment_clear(occ, transparent, x0, y0, x1, y1, res)


@njit(cache=True)
def grid_dijkstra(free, seeds_r, seeds_c, res):
    """Multi-source 8-connected shortest-distance field.

    Straight moves cost ``res``, diagonal moves ``sqrt(2) * res``.  Seeds
    start at 0 regardless of traversability (so goals inside obstacle
    footprints still radiate into adjacent free space); expansion only
    enters cells marked in ``free``.  Unreachable cells stay +inf.
    """
    h, w = free.shape
    dist = np.full((h, w), np.inf, dtype=np.float64)
    cap = 8 * h * w + 64
    heap_d = np.empty(cap, dtype=np.float64)
    heap_i = np.empty(cap, dtype=np.int64)
    size = 0

    for s in range(seeds_r.shape[0]):
        r = seeds_r[s]
        c = seeds_c[s]
        if r < 0 or r >= h or c < 0 or c >= w:
            continue
        if dist[r, c] > 0.0:
            dist[r, c] = 0.0
            # push
            i = size
            size += 1
            heap_d[i] = 0.0
            heap_i[i] = r * w + c
            while i > 0:
                p = (i - 1) // 2
                if heap_d[p] <= heap_d[i]:
                    break
                heap_d[p], heap_d[i] = heap_d[i], heap_d[p]
                heap_i[p], heap_i[i] = heap_i[i], heap_i[p]
                i = p

    diag = math.sqrt(2.0) * res
    while size > 0:
        d0 = heap_d[0]
        idx = heap_i[0]
        size -= 1
        heap_d[0] = heap_d[size]
        heap_i[0] = heap_i[size]
        i = 0
        while True:
            l = 2 * i + 1
            rgt = l + 1
            m = i
            if l < size and heap_d[l] < heap_d[m]:
                m = l
            if rgt < size and heap_d[rgt] < heap_d[m]:
                m = rgt
            if m == i:
                break
            heap_d[m], heap_d[i] = heap_d[i], heap_d[m]
            heap_i[m], heap_i[i] = heap_i[i], heap_i[m]
            i = m

        r0 = idx // w
        c0 = idx % w
        if d0 > dist[r0, c0]:
            continue
        for dr in range(-1, 2):
            for dc in range(-1, 2):
                if dr == 0 and dc == 0:
                    continue
                r1 = r0 + dr
                c1 = c0 + dc
                if r1 < 0 or r1 >= h or c1 < 0 or c1 >= w:
                    continue
                if not free[r1, c1]:
                    continue
                if dr != 0 and dc != 0:
                    # no corner cutting: a diagonal move is allowed only
                    # when both adjacent orthogonal cells are free, so the
                    # field never claims a route a straight segment (or a
                    # physical agent) could not take through that corner
                    if not (free[r0 + dr, c0] and free[r0, c0 + dc]):
                        continue
                step = diag if (dr != 0 and dc != 0) else res
                nd = d0 + step
                if nd < dist[r1, c1]:
                    dist[r1, c1] = nd
                    i = size
                    size += 1
                    heap_d[i] = nd
                    heap_i[i] = r1 * w + c1
                    while i > 0:
                        p = (i - 1) // 2
                        if heap_d[p] <= heap_d[i]:
                            break
                        heap_d[p], heap_d[i] = heap_d[i], heap_d[p]
                        heap_i[p], heap_i[i] = heap_i[i], heap_i[p]
                        i = p
    return dist
