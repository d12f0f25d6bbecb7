"""Instance re-identification: matchers, calibration, confusion studies.

A matcher scores how strongly a candidate view resembles the goal object
by a matched-keypoint count ``omega``.  Two matchers are provided:

  * OracleMatcher - ground truth: a huge count for the true instance,
    zero otherwise.
  * SyntheticMatcher - draws omega from calibrated normal distributions,
    truncated at zero and floored to an integer:  positives use
    distance-dependent parameters fit to per-band true-positive anchors,
    negatives use a fixed distribution.  Flooring (rather than rounding)
    makes P(omega >= t) at integer thresholds equal the continuous
    normal tail exactly, so empirical rates converge on the calibration
    anchors with no integerization bias.

Difficulty bands partition view distance: easy [0.5, 2.5), medium
[2.5, 4.5), hard [4.5, 6.5).  Calibration solves band parameters so the
analytic tail probabilities reproduce the anchor TP rates exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Protocol

import numpy as np
from scipy.stats import norm

from .errors import CalibrationError, SampleExhausted
from .world import Episode, GoalDescriptor, Pose, World, oracle_visible

__all__ = [
    "OMEGA_HIGH",
    "BANDS",
    "DEFAULT_BAND_EDGES",
    "DEFAULT_ANCHORS",
    "CandidateView",
    "MatchResult",
    "Matcher",
    "OracleMatcher",
    "SyntheticMatcher",
    "SyntheticMatcherParams",
    "ReidSample",
    "ConfusionTable",
    "band_of",
    "tp_rate",
    "fp_rate",
    "calibrate_synthetic",
    "build_reid_dataset",
    "sample_band_views",
    "confusion_study",
]

OMEGA_HIGH = 10_000

BANDS = ("easy", "medium", "hard")
DEFAULT_BAND_EDGES = (0.5, 2.5, 4.5, 6.5)

# Calibration anchors for the default benchmark matcher: per-band
# true-positive rates of a keypoint matcher at fixed count thresholds.
DEFAULT_ANCHORS = (
    ("easy", 60, 0.651),
    ("medium", 60, 0.569),
    ("hard", 60, 0.380),
    ("hard", 100, 0.090),
)

# Negative (wrong-instance) distribution defaults.  Chosen so that a
# distractor exceeds the fixed decision threshold of 60 with probability
# about 0.002 per view, i.e. false confirmations are rare but real.
DEFAULT_MU_NEG = 10.0
DEFAULT_SIGMA_NEG = 17.2


@dataclass(frozen=True)
class CandidateView:
    """The object currently under the agent's gaze."""

    instance_id: int
    distance: float
    category: str


@dataclass(frozen=True)
class MatchResult:
    omega: int

    def __post_init__(self):
        if self.omega < 0:
            raise ValueError("omega must be non-negative")


class Matcher(Protocol):
    def match_count(
        self, g: GoalDescriptor, v: CandidateView, rng: np.random.Generator
    ) -> MatchResult: ...


def band_of(distance: float, edges: tuple[float, ...] = DEFAULT_BAND_EDGES) -> str | None:
    """Difficulty band containing a view distance, None outside all bands."""
    for i, name in enumerate(BANDS):
        if edges[i] <= distance < edges[i + 1]:
            return name
    return None


def band_centers(edges: tuple[float, ...] = DEFAULT_BAND_EDGES) -> tuple[float, ...]:
    return tuple((edges[i] + edges[i + 1]) / 2.0 for i in range(len(BANDS)))


@dataclass(frozen=True)
class SyntheticMatcherParams:
    """Per-band positive distributions plus one negative distribution.

    mu_pos/sigma_pos are ordered (easy, medium, hard).  Between band
    centers the positive mean and spread interpolate linearly in view
    distance and clamp outside the outer centers.
    """

    mu_pos: tuple[float, float, float]
    sigma_pos: tuple[float, float, float]
    mu_neg: float = DEFAULT_MU_NEG
    sigma_neg: float = DEFAULT_SIGMA_NEG
    band_edges: tuple[float, ...] = DEFAULT_BAND_EDGES

    def __post_init__(self):
        if len(self.band_edges) != len(BANDS) + 1:
            raise CalibrationError("band_edges must have one edge per band boundary")
        if any(s <= 0 for s in self.sigma_pos) or self.sigma_neg <= 0:
            raise CalibrationError("sigma values must be positive")
        if not all(
            self.band_edges[i] < self.band_edges[i + 1]
            for i in range(len(self.band_edges) - 1)
        ):
            raise CalibrationError("band_edges must be strictly increasing")

    def band_index(self, band: str) -> int:
        return BANDS.index(band)

    def mu_at(self, distance: float) -> float:
        centers = band_centers(self.band_edges)
        return float(np.interp(distance, centers, self.mu_pos))

    def sigma_at(self, distance: float) -> float:
        centers = band_centers(self.band_edges)
        return float(np.interp(distance, centers, self.sigma_pos))


class OracleMatcher:
    """Ground-truth matcher: OMEGA_HIGH for the goal instance, else 0."""

    def match_count(
        self, g: GoalDescriptor, v: CandidateView, rng: np.random.Generator
    ) -> MatchResult:
        return MatchResult(OMEGA_HIGH if v.instance_id == g.instance_hint else 0)


class SyntheticMatcher:
    """Stochastic matcher with calibrated error rates."""

    def __init__(self, params: SyntheticMatcherParams):
        self.params = params

    def match_count(
        self, g: GoalDescriptor, v: CandidateView, rng: np.random.Generator
    ) -> MatchResult:
        if v.instance_id == g.instance_hint:
            mu = self.params.mu_at(v.distance)
            sigma = self.params.sigma_at(v.distance)
        else:
            mu = self.params.mu_neg
            sigma = self.params.sigma_neg
        draw = rng.normal(mu, sigma)
        return MatchResult(int(max(0.0, math.floor(draw))))


def match_count(
    m: Matcher, g: GoalDescriptor, v: CandidateView, rng: np.random.Generator
) -> MatchResult:
    return m.match_count(g, v, rng)


# ---------------------------------------------------------------------------
# analytic rates and calibration
# ---------------------------------------------------------------------------


def _tail(mu: float, sigma: float, threshold: float) -> float:
    return float(norm.sf((threshold - mu) / sigma))


def tp_rate(params: SyntheticMatcherParams, band: str, threshold: float) -> float:
    """Analytic P(omega >= threshold) for a positive view at the band center.

    Continuous normal tail.  Because draws are floored, the empirical
    rate at any positive integer threshold equals this tail exactly.
    """
    i = params.band_index(band)
    return _tail(params.mu_pos[i], params.sigma_pos[i], threshold)


def fp_rate(params: SyntheticMatcherParams, threshold: float) -> float:
    """Analytic P(omega >= threshold) for a negative view."""
    return _tail(params.mu_neg, params.sigma_neg, threshold)


def calibrate_synthetic(
    anchors=DEFAULT_ANCHORS,
    *,
    band_edges: tuple[float, ...] = DEFAULT_BAND_EDGES,
    mu_neg: float = DEFAULT_MU_NEG,
    sigma_neg: float = DEFAULT_SIGMA_NEG,
    tol: float = 1e-6,
) -> SyntheticMatcherParams:
    """Solve positive band parameters from (band, threshold, tp) anchors.

    The band with two anchors pins both its mu and sigma from the two
    quantile equations; every single-anchor band inherits that sigma and
    solves its own mu.  Raises CalibrationError when the anchors are
    infeasible (non-monotone quantiles, missing/extra anchors) or when
    the fitted parameters fail to reproduce an anchor within 1e-3.
    """
    per_band: dict[str, list[tuple[float, float]]] = {b: [] for b in BANDS}
    for band, threshold, tp in anchors:
        if band not in per_band:
            raise CalibrationError(f"unknown band {band!r}")
        if not (0.0 < tp < 1.0):
            raise CalibrationError(f"anchor tp must be in (0, 1), got {tp}")
        per_band[band].append((float(threshold), float(tp)))

    two = [b for b in BANDS if len(per_band[b]) == 2]
    if len(two) != 1:
        raise CalibrationError(
            "exactly one band must carry two anchors to pin sigma; got "
            f"{[ (b, len(per_band[b])) for b in BANDS ]}"
        )
    ref = two[0]
    for b in BANDS:
        if b != ref and len(per_band[b]) != 1:
            raise CalibrationError(f"band {b!r} needs exactly one anchor")

    (t1, p1), (t2, p2) = sorted(per_band[ref])
    z1 = float(norm.ppf(1.0 - p1))
    z2 = float(norm.ppf(1.0 - p2))
    if z2 <= z1:
        raise CalibrationError(
            "reference-band anchors are infeasible: tail rates must decrease "
            "with the threshold"
        )
    sigma = (t2 - t1) / (z2 - z1)
    if sigma <= tol:
        raise CalibrationError("calibrated sigma is not positive")
    mu_ref = t1 - z1 * sigma

    mus: dict[str, float] = {ref: mu_ref}
    for b in BANDS:
        if b == ref:
            continue
        t, p = per_band[b][0]
        mus[b] = t - float(norm.ppf(1.0 - p)) * sigma

    params = SyntheticMatcherParams(
        mu_pos=tuple(mus[b] for b in BANDS),
        sigma_pos=(sigma, sigma, sigma),
        mu_neg=mu_neg,
        sigma_neg=sigma_neg,
        band_edges=band_edges,
    )
    for band, threshold, tp in anchors:
        got = tp_rate(params, band, threshold)
        if abs(got - tp) > 1e-3:
            raise CalibrationError(
                f"calibration failed to reproduce anchor ({band}, {threshold}, "
                f"{tp}): analytic rate {got:.6f}"
            )
    return params


# ---------------------------------------------------------------------------
# re-identification datasets and confusion studies
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ReidSample:
    goal: GoalDescriptor
    view: CandidateView
    positive: bool
    band: str


def _band_annulus_cells(
    w: World, instance_id: int, lo: float, hi: float
) -> list[tuple[int, int]]:
    inst = w.instance(instance_id)
    res = w.resolution
    h, width = w.shape
    out = []
    pad = int(hi / res) + 2
    r_min = max(0, min(r for r, _ in inst.cells) - pad)
    r_max = min(h, max(r for r, _ in inst.cells) + pad + 1)
    c_min = max(0, min(c for _, c in inst.cells) - pad)
    c_max = min(width, max(c for _, c in inst.cells) + pad + 1)
    for r in range(r_min, r_max):
        for c in range(c_min, c_max):
            if w.occupancy[r, c]:
                continue
            x, y = (c + 0.5) * res, (r + 0.5) * res
            if lo <= inst.nearest_distance(x, y, res) < hi:
                out.append((r, c))
    return out


def _sample_view_pose(
    w: World,
    instance_id: int,
    band: str,
    rng: np.random.Generator,
    *,
    band_edges: tuple[float, ...],
    annulus_halfwidth: float,
    max_range: float,
    max_tries: int,
) -> tuple[Pose, float] | None:
    """A pose with line of sight to the instance at a band-typical distance.

    Candidate distances concentrate in an annulus around the band center
    so that measured per-band rates reflect the band's calibration point.
    """
    i = BANDS.index(band)
    center = (band_edges[i] + band_edges[i + 1]) / 2.0
    lo = max(band_edges[i], center - annulus_halfwidth)
    hi = min(band_edges[i + 1], center + annulus_halfwidth)
    cells = _band_annulus_cells(w, instance_id, lo, hi)
    if not cells:
        return None
    inst = w.instance(instance_id)
    res = w.resolution
    for _ in range(max_tries):
        r, c = cells[rng.integers(len(cells))]
        x, y = (c + 0.5) * res, (r + 0.5) * res
        # face the object: views are taken looking at the candidate
        tr, tc = min(
            inst.cells, key=lambda rc: (rc[0] * res - y) ** 2 + (rc[1] * res - x) ** 2
        )
        theta = math.atan2((tr + 0.5) * res - y, (tc + 0.5) * res - x)
        p = Pose(x, y, theta)
        if oracle_visible(w, p, instance_id, max_range):
            return p, inst.nearest_distance(x, y, res)
    return None


def build_reid_dataset(
    w: World,
    episodes: list[Episode],
    per_anchor: int,
    rng: np.random.Generator,
    *,
    band_edges: tuple[float, ...] = DEFAULT_BAND_EDGES,
    annulus_halfwidth: float = 0.5,
    max_range: float = DEFAULT_BAND_EDGES[-1],
    max_tries: int = 200,
) -> list[ReidSample]:
    """Geometric re-identification dataset from a world and its episodes.

    Each episode's goal is an anchor.  Per anchor: ``per_anchor``
    positive views of the goal instance and ``per_anchor`` negative views
    of a different instance (same category when one exists), with bands
    cycled round-robin so every band is represented once per_anchor >= 3.

    Visibility here is ground truth, not the navigation sensor: the
    default range covers the outermost band edge, because a range capped
    below a band's annulus would make that band unsatisfiable.
    """
    samples: list[ReidSample] = []
    for e in episodes:
        goal_inst = w.instance(e.goal_instance)
        distractors = [
            i for i in w.instances
            if i.id != e.goal_instance and i.category == goal_inst.category
        ]
        if not distractors:
            distractors = [i for i in w.instances if i.id != e.goal_instance]
        for k in range(per_anchor):
            band = BANDS[k % len(BANDS)]
            got = _sample_view_pose(
                w, e.goal_instance, band, rng,
                band_edges=band_edges, annulus_halfwidth=annulus_halfwidth,
                max_range=max_range, max_tries=max_tries,
            )
            if got is None:
                raise SampleExhausted(
                    f"no visible positive pose for anchor instance "
                    f"{e.goal_instance} in band {band!r}"
                )
            _, dist = got
            samples.append(
                ReidSample(
                    goal=e.goal,
                    view=CandidateView(e.goal_instance, dist, goal_inst.category),
                    positive=True,
                    band=band_of(dist, band_edges) or band,
                )
            )
        for k in range(per_anchor):
            band = BANDS[k % len(BANDS)]
            if not distractors:
                raise SampleExhausted(
                    f"no negative instance available for anchor {e.goal_instance}"
                )
            d_inst = distractors[int(rng.integers(len(distractors)))]
            got = _sample_view_pose(
                w, d_inst.id, band, rng,
                band_edges=band_edges, annulus_halfwidth=annulus_halfwidth,
                max_range=max_range, max_tries=max_tries,
            )
            if got is None:
                raise SampleExhausted(
                    f"no visible negative pose for anchor instance "
                    f"{e.goal_instance} (viewing {d_inst.id}) in band {band!r}"
                )
            _, dist = got
            samples.append(
                ReidSample(
                    goal=e.goal,
                    view=CandidateView(d_inst.id, dist, d_inst.category),
                    positive=False,
                    band=band_of(dist, band_edges) or band,
                )
            )
    return samples


def sample_band_views(
    samples_per_band: int,
    *,
    band_edges: tuple[float, ...] = DEFAULT_BAND_EDGES,
    category: str = "bed",
) -> list[ReidSample]:
    """Distribution-level dataset: equal positives and negatives per band,
    every view taken exactly at the band-center distance.

    This is the dataset used to check a calibrated matcher against its
    anchors: at the band center the positive distribution is exactly the
    band's fitted distribution, so measured rates converge on the anchor
    values without geometric distance spread.
    """
    goal = GoalDescriptor(category=category, instance_hint=1, capture_distance=1.0)
    centers = band_centers(band_edges)
    out = []
    for band, center in zip(BANDS, centers):
        for _ in range(samples_per_band):
            out.append(
                ReidSample(goal, CandidateView(1, center, category), True, band)
            )
            out.append(
                ReidSample(goal, CandidateView(2, center, category), False, band)
            )
    return out


@dataclass
class ConfusionTable:
    """Per (band, threshold) classification rates.

    rows maps (band, threshold) -> dict with tp, fn, fp, tn rates
    normalized within the positive / negative populations of the band.
    """

    thresholds: tuple[int, ...]
    rows: dict[tuple[str, int], dict[str, float]]
    warnings: list[str] = field(default_factory=list)

    def rate(self, band: str, threshold: int, kind: str) -> float:
        return self.rows[(band, threshold)][kind]

    def to_csv(self) -> str:
        lines = ["band,threshold,tp,fn,fp,tn"]
        for band in BANDS:
            for t in self.thresholds:
                if (band, t) not in self.rows:
                    continue
                r = self.rows[(band, t)]
                lines.append(
                    f"{band},{t},{r['tp']:.6f},{r['fn']:.6f},"
                    f"{r['fp']:.6f},{r['tn']:.6f}"
                )
        return "\n".join(lines) + "\n"


def confusion_study(
    samples: list[ReidSample],
    m: Matcher,
    thresholds: tuple[int, ...],
    rng: np.random.Generator,
) -> ConfusionTable:
    """Classify samples as same-instance at each threshold.

    Each sample's omega is drawn once from a per-sample seeded stream and
    reused across thresholds, which makes TP/FP rates non-increasing in
    the threshold by construction and the whole study reproducible.
    """
    seeds = np.random.SeedSequence(int(rng.integers(2**63 - 1)))
    omegas = np.empty(len(samples), dtype=np.int64)
    for i, (s, child) in enumerate(zip(samples, seeds.spawn(len(samples)))):
        omegas[i] = m.match_count(s.goal, s.view, np.random.default_rng(child)).omega

    rows: dict[tuple[str, int], dict[str, float]] = {}
    warnings: list[str] = []
    for band in BANDS:
        pos = [omegas[i] for i, s in enumerate(samples) if s.band == band and s.positive]
        neg = [omegas[i] for i, s in enumerate(samples) if s.band == band and not s.positive]
        if not pos and not neg:
            warnings.append(f"band {band!r} has no samples; excluded")
            continue
        if not pos:
            warnings.append(f"band {band!r} has no positive samples")
        if not neg:
            warnings.append(f"band {band!r} has no negative samples")
        for t in thresholds:
            row: dict[str, float] = {}
            if pos:
                tp = sum(1 for o in pos if o >= t) / len(pos)
                row["tp"], row["fn"] = tp, 1.0 - tp
            else:
                row["tp"] = row["fn"] = math.nan
            if neg:
                fp = sum(1 for o in neg if o >= t) / len(neg)
                row["fp"], row["tn"] = fp, 1.0 - fp
            else:
                row["fp"] = row["tn"] = math.nan
            rows[(band, int(t))] = row
    return ConfusionTable(tuple(int(t) for t in thresholds), rows, warnings)
