import collections
import io
import math

import numpy as np
import pytest
from scipy.stats import chisquare

from gridnav.configio import MAGIC, dump_config, parse_config
from gridnav.errors import ConfigError, InvariantViolation
from gridnav.harness import (
    BENCHMARK_CURVES,
    EpisodeResult,
    Metrics,
    RunConfig,
    WorldGenParams,
    benchmark_matcher_params,
    compute_metrics,
    generate_episodes,
    generate_world,
    inflate_mask,
    run_benchmark,
    run_episode,
    standard_benchmark,
)
from gridnav.matching import OracleMatcher, SyntheticMatcher, calibrate_synthetic
from gridnav.policy import DEFAULT_CURVES, ThresholdCurves, ee_curves
from gridnav.world import SensorConfig, shortest_path_length

from support import flood_fill_4


# --- config ------------------------------------------------------------------


def test_runconfig_validation():
    with pytest.raises(ConfigError):
        RunConfig(policy="hover")
    with pytest.raises(ConfigError):
        RunConfig(exploration="teleport")
    with pytest.raises(ConfigError):
        RunConfig(matcher="psychic")
    with pytest.raises(ConfigError):
        RunConfig(stop_distance=0.0)
    with pytest.raises(ConfigError):
        RunConfig(field_refresh=0)
    with pytest.raises(ConfigError):
        RunConfig(inflate_cells=-1)
    with pytest.raises(ConfigError):
        RunConfig(ee_threshold=-5)


def test_runconfig_name_and_curves():
    cfg = RunConfig(policy="ee", ee_threshold=42.0)
    assert cfg.name == "ee-frontier-synthetic"
    assert RunConfig(label="mine").name == "mine"
    flat = cfg.effective_curves()
    assert flat.upper(3.0) == flat.lower(3.0) == 42.0
    eve = RunConfig(policy="eve", curves=DEFAULT_CURVES)
    assert eve.effective_curves() is DEFAULT_CURVES


def test_runconfig_build_matcher():
    assert isinstance(RunConfig(matcher="oracle").build_matcher(), OracleMatcher)
    m = RunConfig(matcher="synthetic").build_matcher()
    assert isinstance(m, SyntheticMatcher)
    custom = benchmark_matcher_params()
    m2 = RunConfig(matcher_params=custom).build_matcher()
    assert m2.params.sigma_neg == 20.0
    assert m2.params.mu_pos == calibrate_synthetic().mu_pos


# --- metrics -----------------------------------------------------------------


def _result(success=True, path=10.0, shortest=10.0, steps=50, stop=None,
            termination=None):
    return EpisodeResult(
        success=success,
        path_length=path,
        shortest_length=shortest,
        steps=steps,
        stop_called=stop if stop is not None else success,
        termination=termination or ("success" if success else "timeout"),
    )


def test_episode_result_validation():
    with pytest.raises(InvariantViolation):
        _result(path=-1.0)
    with pytest.raises(InvariantViolation):  # success without stop
        _result(success=True, stop=False)
    with pytest.raises(InvariantViolation):
        _result(termination="vaporized")
    with pytest.raises(InvariantViolation):  # flag/termination disagreement
        _result(success=True, termination="timeout")
    with pytest.raises(InvariantViolation):
        _result(success=False, termination="success")


def test_spl_unit_cases():
    assert _result(success=True, path=10.0, shortest=10.0).spl == 1.0
    assert _result(success=False, path=10.0, shortest=10.0).spl == 0.0
    assert _result(success=True, path=20.0, shortest=10.0).spl == 0.5


def test_spl_oracle_start_counts_full():
    # an episode that starts inside the goal band has shortest 0; a
    # successful stop earns full credit regardless of wandering
    assert _result(success=True, path=3.0, shortest=0.0).spl == 1.0


def test_spl_never_exceeds_one():
    # recorded path shorter than the oracle (grid quantization edge):
    # the max() clamp keeps SPL at 1
    assert _result(success=True, path=5.0, shortest=6.0).spl == 1.0


def test_metrics_validation():
    Metrics(success_rate=0.5, spl=0.25)
    with pytest.raises(InvariantViolation):
        Metrics(success_rate=0.5, spl=0.75)
    with pytest.raises(InvariantViolation):
        Metrics(success_rate=1.2, spl=0.1)


def test_compute_metrics():
    rs = [
        _result(success=True, path=10.0, shortest=10.0),
        _result(success=True, path=20.0, shortest=10.0),
        _result(success=False),
        _result(success=False),
    ]
    m = compute_metrics(rs)
    assert m.success_rate == 0.5
    assert m.spl == pytest.approx((1.0 + 0.5) / 4)
    with pytest.raises(InvariantViolation):
        compute_metrics([])


def test_inflate_mask():
    mask = np.zeros((7, 7), dtype=bool)
    mask[3, 3] = True
    one = inflate_mask(mask, 1)
    assert one.sum() == 9  # Chebyshev ball
    assert one[2, 2] and one[4, 4]
    two = inflate_mask(mask, 2)
    assert two.sum() == 25
    zero = inflate_mask(mask, 0)
    assert np.array_equal(zero, mask)
    assert zero is not mask


# --- world generation ----------------------------------------------------------


def test_generate_world_is_deterministic():
    a = generate_world(WorldGenParams(), np.random.default_rng(17))
    b = generate_world(WorldGenParams(), np.random.default_rng(17))
    assert np.array_equal(a.occupancy, b.occupancy)
    assert [i.cells for i in a.instances] == [i.cells for i in b.instances]


def test_generate_world_structure(default_world):
    w = default_world
    assert w.shape == (64, 64)
    # walled border
    assert w.occupancy[0, :].all() and w.occupancy[-1, :].all()
    assert w.occupancy[:, 0].all() and w.occupancy[:, -1].all()
    # requested instance counts per category
    per_cat = collections.Counter(i.category for i in w.instances)
    assert set(per_cat) == set(w.categories)
    assert all(n == 2 for n in per_cat.values())


def test_generate_world_free_space_is_connected(default_world):
    free = ~default_world.occupancy
    seed = tuple(np.argwhere(free)[0])
    reach = flood_fill_4(free, seed)
    assert (reach == free).all()


def test_generate_world_instances_are_obstacles(default_world):
    for inst in default_world.instances:
        for r, c in inst.cells:
            assert default_world.occupancy[r, c]


def test_generate_episodes_all_reachable(default_world, default_episodes):
    assert len(default_episodes) == 20
    for e in default_episodes:
        assert default_world.traversable(e.start.x, e.start.y)
        assert default_world.has_instance(e.goal_instance)
        assert math.isfinite(shortest_path_length(default_world, e.start,
                                                  e.goal_instance))
        assert e.goal.category == default_world.instance(e.goal_instance).category
        assert e.goal.instance_hint == e.goal_instance


def test_generate_episodes_empty():
    w = generate_world(WorldGenParams(), np.random.default_rng(2))
    assert generate_episodes(w, 0, np.random.default_rng(0)) == []


def test_generate_episodes_goal_distribution_uniform(default_world):
    """Across many draws every instance appears equally often."""
    eps = generate_episodes(default_world, 10_000, np.random.default_rng(61))
    counts = collections.Counter(e.goal_instance for e in eps)
    observed = [counts.get(i.id, 0) for i in default_world.instances]
    assert min(observed) > 0
    assert chisquare(observed).pvalue > 0.01


# --- episodes ----------------------------------------------------------------


@pytest.fixture(scope="module")
def tiny_bench():
    """One small world with a handful of episodes, reused module-wide."""
    w = generate_world(WorldGenParams(size=48), np.random.default_rng(3))
    eps = generate_episodes(w, 4, np.random.default_rng(4))
    return w, eps


def test_run_episode_is_deterministic(tiny_bench):
    w, eps = tiny_bench
    cfg = RunConfig(matcher="oracle", inflate_cells=0)
    a = run_episode(w, eps[0], cfg, np.random.default_rng(7))
    b = run_episode(w, eps[0], cfg, np.random.default_rng(7))
    assert a == b


def test_run_episode_respects_max_steps(tiny_bench):
    w, eps = tiny_bench
    from dataclasses import replace

    short = replace(eps[0], max_steps=3)
    cfg = RunConfig(matcher="oracle", inflate_cells=0)
    r = run_episode(w, short, cfg, np.random.default_rng(0))
    assert r.steps <= 3
    if not r.stop_called:
        assert r.termination == "timeout"


def test_run_episode_oracle_reaches_goal(tiny_bench):
    w, eps = tiny_bench
    cfg = RunConfig(matcher="oracle", inflate_cells=0)
    results = [run_episode(w, e, cfg, np.random.default_rng(i))
               for i, e in enumerate(eps)]
    assert any(r.success for r in results)
    for r in results:
        assert r.termination in {"success", "wrong_stop", "timeout", "error"}
        assert 0.0 <= r.spl <= 1.0
        assert r.spl <= float(r.success)


def test_run_episode_trace_accounts_for_path(tiny_bench):
    """The trace replays to the recorded path length."""
    w, eps = tiny_bench
    cfg = RunConfig(matcher="oracle", inflate_cells=0)
    buf = io.StringIO()
    r = run_episode(w, eps[0], cfg, np.random.default_rng(7), trace=buf)
    lines = buf.getvalue().strip().splitlines()
    header = lines[0].split(",")
    assert header[:5] == ["step", "x", "y", "theta", "signal"]
    assert {"d", "omega", "mode"} <= set(header)
    xs = [float(l.split(",")[1]) for l in lines[1:]]
    ys = [float(l.split(",")[2]) for l in lines[1:]]
    walked = sum(math.hypot(x1 - x0, y1 - y0)
                 for x0, x1, y0, y1 in zip(xs, xs[1:], ys, ys[1:]))
    # trace coordinates are rounded for printing; allow that much slack.
    # the episode ends on a stop (zero displacement), so the logged
    # pre-action poses cover every bit of movement
    assert r.stop_called
    assert walked == pytest.approx(r.path_length, abs=1e-3)
    assert len(lines) - 1 == r.steps  # one row per control step


# --- benchmark ---------------------------------------------------------------


def test_run_benchmark_single_config_matches_compute_metrics(tiny_bench):
    w, eps = tiny_bench
    cfg = RunConfig(matcher="oracle", inflate_cells=0, label="solo")
    report = run_benchmark([cfg], [w], [eps[:2]], master_seed=0)
    assert report.labels == ["solo"]
    assert report.errors == [""]
    assert len(report.results[0]) == 2
    assert report.metrics[0] == compute_metrics(report.results[0])
    assert report.deltas == []


def test_run_benchmark_pairs_identical_configs(tiny_bench):
    w, eps = tiny_bench
    a = RunConfig(matcher="oracle", inflate_cells=0, label="a")
    b = RunConfig(matcher="oracle", inflate_cells=0, label="b")
    report = run_benchmark([a, b], [w], [eps[:3]], master_seed=5)
    assert report.results[0] == report.results[1]
    label, dsucc, dspl, p = report.deltas[0]
    assert label == "b"
    assert dsucc == 0.0 and dspl == 0.0
    assert p == 1.0  # no unpaired wins either way


def test_run_benchmark_is_reproducible(tiny_bench):
    w, eps = tiny_bench
    cfgs = [RunConfig(matcher="oracle", inflate_cells=0, label="x")]
    r1 = run_benchmark(cfgs, [w], [eps[:2]], master_seed=9)
    r2 = run_benchmark(cfgs, [w], [eps[:2]], master_seed=9)
    assert r1.to_csv() == r2.to_csv()
    assert r1.results == r2.results


def test_run_benchmark_requires_grouped_episodes(tiny_bench):
    w, eps = tiny_bench
    with pytest.raises(ConfigError):
        run_benchmark([RunConfig()], [w], [eps, eps])


def test_run_benchmark_isolates_config_failures(tiny_bench):
    w, eps = tiny_bench

    class BrokenConfig(RunConfig):
        def build_matcher(self):
            raise ConfigError("deliberately broken matcher")

    good = RunConfig(matcher="oracle", inflate_cells=0, label="good")
    bad = BrokenConfig(matcher="oracle", inflate_cells=0, label="bad")
    report = run_benchmark([good, bad], [w], [eps[:1]], master_seed=0)
    assert report.errors[0] == ""
    assert "deliberately broken" in report.errors[1]
    assert report.metrics[1] is None
    assert report.metrics[0] is not None  # the good config still ran


def test_benchmark_report_csv_shape(tiny_bench):
    w, eps = tiny_bench
    cfgs = [RunConfig(matcher="oracle", inflate_cells=0, label="ee"),
            RunConfig(matcher="oracle", inflate_cells=0, label="eve")]
    report = run_benchmark(cfgs, [w], [eps[:2]], master_seed=1)
    csv = report.to_csv()
    lines = csv.strip().splitlines()
    assert lines[0] == "config,episodes,success_rate,spl,error"
    assert lines[1].startswith("ee,2,")
    assert lines[2].startswith("eve,2,")
    assert any(l.startswith("comparison,") for l in lines)
    assert "eve" in report.summary() and "ee" in report.summary()


def test_standard_benchmark_layout():
    worlds, episodes, cfgs = standard_benchmark("oracle", n_worlds=2,
                                                episodes_per_world=3)
    assert len(worlds) == 2
    assert [len(e) for e in episodes] == [3, 3]
    assert [c.policy for c in cfgs] == ["ee", "eve"]  # baseline first
    assert cfgs[0].label == "ee-ora"
    assert cfgs[1].curves == BENCHMARK_CURVES
    assert all(c.matcher == "oracle" for c in cfgs)
    assert all(c.inflate_cells == 0 for c in cfgs)
    syn = standard_benchmark("synthetic", n_worlds=1, episodes_per_world=1)[2]
    assert syn[0].matcher_params.sigma_neg == 20.0


# --- config file round-trips ----------------------------------------------------


def test_parse_config_defaults():
    assert parse_config(MAGIC + "\n") == RunConfig()


def test_parse_config_comments_and_blanks():
    text = MAGIC + "\n\n# a comment\npolicy = ee\n  \nee_threshold = 70\n"
    cfg = parse_config(text)
    assert cfg.policy == "ee"
    assert cfg.ee_threshold == 70.0


def test_dump_parse_roundtrip_default():
    assert parse_config(dump_config(RunConfig())) == RunConfig()


@pytest.mark.parametrize("cfg", [
    RunConfig(policy="ee", ee_threshold=35.5, label="baseline"),
    RunConfig(exploration="random", seed=1234, goal_dilation=0),
    RunConfig(curves=ThresholdCurves(breakpoints=((0.7, 31.25, 4.5),
                                                  (2.9, 66.0, 66.0)))),
    RunConfig(sensor=SensorConfig(rays=45, fov=math.radians(120), max_range=7.5)),
    RunConfig(matcher_params=benchmark_matcher_params()),
    RunConfig(matcher="oracle", inflate_cells=3, feasible_radius=2.25,
              stop_distance=1.125, exploration_refresh=7, field_refresh=3),
])
def test_dump_parse_roundtrip(cfg):
    assert parse_config(dump_config(cfg)) == cfg


def test_dump_parse_roundtrip_random_floats():
    rng = np.random.default_rng(123)
    for _ in range(25):
        cfg = RunConfig(
            ee_threshold=float(rng.uniform(0, 100)),
            feasible_radius=float(rng.uniform(0.5, 3)),
            stop_distance=float(rng.uniform(0.1, 2)),
            sensor=SensorConfig(
                rays=int(rng.integers(1, 181)),
                fov=float(rng.uniform(0.01, 2 * math.pi)),
                max_range=float(rng.uniform(1, 10)),
            ),
        )
        assert parse_config(dump_config(cfg)) == cfg


def test_parse_config_errors():
    with pytest.raises(ConfigError):  # magic
        parse_config("something else\npolicy = ee\n")
    with pytest.raises(ConfigError):  # unknown key
        parse_config(MAGIC + "\nwarp_speed = 9\n")
    with pytest.raises(ConfigError):  # duplicate key
        parse_config(MAGIC + "\npolicy = ee\npolicy = eve\n")
    with pytest.raises(ConfigError):  # bad number
        parse_config(MAGIC + "\nee_threshold = sixty\n")
    with pytest.raises(ConfigError):  # malformed curves
        parse_config(MAGIC + "\ncurves = 1:24\n")
    with pytest.raises(ConfigError):  # no '='
        parse_config(MAGIC + "\npolicy ee\n")
    with pytest.raises(ConfigError):  # sigma_pos needs one value per band
        parse_config(MAGIC + "\nmu_pos = 70, 60\nsigma_pos = 30, 30, 30\n")
    with pytest.raises(ConfigError):  # constraint violations surface as config errors
        parse_config(MAGIC + "\npolicy = slide\n")
