"""Command-line front end.

Subcommands: ``generate`` writes world and episode files, ``run``
executes one config over a world's episodes, ``eval`` runs the paired
policy benchmark, ``reid-study`` measures matcher confusion rates, and
``calibrate`` fits the synthetic matcher and prints it as config text.

Exit codes: 0 on success, 1 for usage or config problems, 2 for runtime
failures.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .configio import dump_config, parse_config
from .errors import ConfigError, GridNavError, WorldFormatError
from .harness import (
    RunConfig,
    WorldGenParams,
    compute_metrics,
    generate_episodes,
    generate_world,
    run_benchmark,
    run_episode,
    standard_benchmark,
)
from .matching import (
    SyntheticMatcher,
    calibrate_synthetic,
    confusion_study,
    sample_band_views,
)
from .world import load_episodes, load_world, save_episodes, save_world

__all__ = ["main"]


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on bad usage; our contract reserves 2 for runtime."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _build_parser() -> _Parser:
    p = _Parser(prog="gridnav", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate",
                       help="write world and episode files")
    g.add_argument("--out", type=Path, required=True, help="output directory")
    g.add_argument("--worlds", type=int, default=1)
    g.add_argument("--episodes-per-world", type=int, default=15)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--instances-per-category", type=int, default=2)
    g.add_argument("--size", type=int, default=64)

    r = sub.add_parser("run",
                       help="run one config over a world's episodes")
    r.add_argument("--config", type=Path, help="config file (defaults apply if omitted)")
    r.add_argument("--world", type=Path, required=True)
    r.add_argument("--episodes", type=Path, required=True)
    r.add_argument("--trace-dir", type=Path, help="write per-episode trace CSVs here")
    r.add_argument("--master-seed", type=int, default=0)
    r.add_argument("--out", type=Path, help="metrics JSON file (default stdout)")

    e = sub.add_parser("eval",
                       help="paired policy benchmark, comparison CSV")
    e.add_argument("--matcher", choices=("synthetic", "oracle"), default="synthetic")
    e.add_argument("--worlds", type=int, default=20)
    e.add_argument("--episodes-per-world", type=int, default=15)
    e.add_argument("--master-seed", type=int, default=0)
    e.add_argument("--out", type=Path, help="CSV file (default stdout)")

    s = sub.add_parser("reid-study",
                       help="matcher confusion rates per band and threshold")
    s.add_argument("--samples", type=int, default=10_000,
                   help="positive and negative samples per band")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--thresholds", default="20,40,60,80,100",
                   help="comma-separated integer thresholds")
    s.add_argument("--out", type=Path, help="CSV file (default stdout)")

    c = sub.add_parser("calibrate",
                       help="fit the synthetic matcher, print config text")
    c.add_argument("--anchors", type=Path,
                   help="file of 'band threshold tp' lines (default: built-in)")
    return p


def _write_or_print(text: str, out: Path | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        out.write_text(text)


def _cmd_generate(args) -> int:
    args.out.mkdir(parents=True, exist_ok=True)
    params = WorldGenParams(
        size=args.size, instances_per_category=args.instances_per_category
    )
    for wi in range(args.worlds):
        w = generate_world(params, np.random.default_rng((args.seed, wi)))
        eps = generate_episodes(
            w, args.episodes_per_world, np.random.default_rng((args.seed + 1, wi))
        )
        (args.out / f"world_{wi:03d}.txt").write_text(save_world(w))
        (args.out / f"episodes_{wi:03d}.txt").write_text(save_episodes(eps))
    print(f"wrote {args.worlds} worlds to {args.out}", file=sys.stderr)
    return 0


def _cmd_run(args) -> int:
    cfg = parse_config(args.config.read_text()) if args.config else RunConfig()
    w = load_world(args.world.read_text())
    episodes = load_episodes(args.episodes.read_text(), w)
    if args.trace_dir is not None:
        args.trace_dir.mkdir(parents=True, exist_ok=True)

    results = []
    for ei, episode in enumerate(episodes):
        rng = np.random.default_rng(np.random.SeedSequence((args.master_seed, 0, ei)))
        if args.trace_dir is not None:
            with open(args.trace_dir / f"trace_{ei:03d}.csv", "w") as fh:
                results.append(run_episode(w, episode, cfg, rng, trace=fh))
        else:
            results.append(run_episode(w, episode, cfg, rng))

    met = compute_metrics(results)
    terminations: dict[str, int] = {}
    for r in results:
        terminations[r.termination] = terminations.get(r.termination, 0) + 1
    payload = {
        "label": cfg.name,
        "episodes": len(results),
        "success_rate": met.success_rate,
        "spl": met.spl,
        "terminations": terminations,
    }
    _write_or_print(json.dumps(payload, indent=2) + "\n", args.out)
    return 0


def _cmd_eval(args) -> int:
    worlds, episodes, cfgs = standard_benchmark(
        args.matcher,
        n_worlds=args.worlds,
        episodes_per_world=args.episodes_per_world,
    )
    report = run_benchmark(cfgs, worlds, episodes, master_seed=args.master_seed)
    _write_or_print(report.to_csv(), args.out)
    print(report.summary(), file=sys.stderr)
    return 0


def _cmd_reid_study(args) -> int:
    try:
        thresholds = tuple(int(t) for t in args.thresholds.split(",") if t.strip())
    except ValueError:
        raise ConfigError(f"bad threshold list {args.thresholds!r}") from None
    if not thresholds:
        raise ConfigError("no thresholds given")
    samples = sample_band_views(args.samples)
    matcher = SyntheticMatcher(calibrate_synthetic())
    table = confusion_study(
        samples, matcher, thresholds, np.random.default_rng(args.seed)
    )
    for warning in table.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    _write_or_print(table.to_csv(), args.out)
    return 0


def _parse_anchor_file(path: Path):
    anchors = []
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        parts = stripped.split()
        if len(parts) != 3:
            raise ConfigError(
                f"{path}:{lineno}: expected 'band threshold tp', got {stripped!r}"
            )
        try:
            anchors.append((parts[0], float(parts[1]), float(parts[2])))
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: {exc}") from None
    if not anchors:
        raise ConfigError(f"{path}: no anchors found")
    return tuple(anchors)


def _cmd_calibrate(args) -> int:
    anchors = _parse_anchor_file(args.anchors) if args.anchors else None
    params = calibrate_synthetic(anchors) if anchors else calibrate_synthetic()
    sys.stdout.write(dump_config(RunConfig(matcher_params=params)))
    return 0


_COMMANDS = {
    "generate": _cmd_generate,
    "run": _cmd_run,
    "eval": _cmd_eval,
    "reid-study": _cmd_reid_study,
    "calibrate": _cmd_calibrate,
}


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, WorldFormatError) as err:
        print(f"gridnav: config error: {err}", file=sys.stderr)
        return 1
    except GridNavError as err:
        print(f"gridnav: {type(err).__name__}: {err}", file=sys.stderr)
        return 2
    except OSError as err:
        print(f"gridnav: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
