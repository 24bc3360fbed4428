"""Command-line front end for the locomotion stack.

Subcommands cover the full experiment pipeline: ``simulate`` runs one episode
and logs it, ``sweep`` builds cost-of-transport curves across velocities,
``transition`` intersects a walk and a trot curve, ``hildebrand`` renders a
footfall diagram from a log, ``optimize`` grid-searches spine parameters, and
``score`` analyses naturalness ballots.

Experiment definitions live in YAML config files whose keys mirror the
command-line flags one to one; the file is canonical and flags override it,
so a sweep can be versioned alongside its results.  Everything a command
writes lands inside its configured output directory (``--out``), which the
``SPINEQUAD_OUTPUT_ROOT`` environment variable can re-root for relative
paths.  Outputs are plain data -- CSV, JSON, SVG, PGM -- and are
bitwise-reproducible given the same inputs.

Exit codes: 0 success, 2 configuration error (also used by argparse), 3 bad
input data, 4 the run itself failed (e.g. the robot fell).
"""

from __future__ import annotations

import argparse
import json
import multiprocessing
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from spinequad import metrics, optimize, study
from spinequad.gait import load_gaits
from spinequad.metrics import CotCurve, CostWeights, fixture_curve
from spinequad.model import RobotModel
from spinequad.optimize import GridAxis, ParamGrid, SWEEP_COMMANDS
from spinequad.sim import SimLog, run_episode
from spinequad.spine import STRATEGIES, load_presets

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_RUNTIME = 4

OUTPUT_ROOT_ENV = "SPINEQUAD_OUTPUT_ROOT"


class CliError(Exception):
    """Failure with a mapped exit code; message goes to stderr."""

    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _out_dir(out) -> Path:
    """Resolve the output directory, honouring the output-root env var."""
    path = Path(out)
    root = os.environ.get(OUTPUT_ROOT_ENV)
    if root and not path.is_absolute():
        path = Path(root) / path
    return path


def _write_json(path: Path, obj) -> None:
    with open(path, "w") as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write("\n")


def _load_config(path) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as f:
            cfg = yaml.safe_load(f)
    except FileNotFoundError:
        raise CliError(EXIT_CONFIG, f"config file not found: {path}") from None
    except yaml.YAMLError as exc:
        raise CliError(EXIT_CONFIG, f"config file {path}: {exc}") from None
    if cfg is None:
        return {}
    if not isinstance(cfg, dict):
        raise CliError(EXIT_CONFIG, f"config file {path}: expected a mapping")
    return cfg


def _merged(args, keys, extra_allowed=()) -> dict:
    """Config-file values overridden by any flag the user actually passed."""
    cfg = _load_config(getattr(args, "config", None))
    unknown = set(cfg) - set(keys) - set(extra_allowed)
    if unknown:
        raise CliError(EXIT_CONFIG, f"unknown config keys: {', '.join(sorted(unknown))}")
    out = dict(cfg)
    for key in keys:
        value = getattr(args, key, None)
        if value is not None:
            out[key] = value
    return out


# ---------------------------------------------------------------------------
# experiment config


@dataclass(frozen=True)
class ExperimentConfig:
    """One episode's worth of settings (the ``simulate`` config schema)."""

    model: str | None = None
    gait: str = "walk"
    strategy: str = "fixed"
    preset: str | None = None
    command: tuple | None = None  # None -> per-gait default
    duration: float = 10.0
    out: str = "out"
    seed: int = 0

    def resolved_command(self) -> tuple:
        if self.command is not None:
            return tuple(float(c) for c in self.command)
        return SWEEP_COMMANDS.get(self.gait, (0.0, 0.0, 0.0))


_EXPERIMENT_KEYS = ("model", "gait", "strategy", "preset", "command", "duration", "out", "seed")


def _experiment_config(args) -> ExperimentConfig:
    merged = _merged(args, _EXPERIMENT_KEYS)
    cfg = ExperimentConfig(**merged)

    if cfg.gait not in load_gaits():
        raise CliError(EXIT_CONFIG, f"unknown gait {cfg.gait!r}")
    if cfg.strategy not in STRATEGIES:
        raise CliError(EXIT_CONFIG, f"unknown strategy {cfg.strategy!r}")
    if cfg.model is not None and not Path(cfg.model).is_file():
        raise CliError(EXIT_CONFIG, f"model file not found: {cfg.model}")
    if cfg.preset is not None and not Path(cfg.preset).is_file():
        raise CliError(EXIT_CONFIG, f"preset file not found: {cfg.preset}")
    if not cfg.duration > 0:
        raise CliError(EXIT_CONFIG, f"duration must be positive, got {cfg.duration}")
    cmd = cfg.resolved_command()
    if len(cmd) != 3 or not all(np.isfinite(c) for c in cmd):
        raise CliError(EXIT_CONFIG, f"command must be three finite numbers, got {cmd}")
    return cfg


def _load_model(cfg: ExperimentConfig) -> RobotModel:
    return RobotModel.from_yaml(cfg.model) if cfg.model else RobotModel.default()


def _load_preset_table(cfg: ExperimentConfig) -> dict:
    return load_presets(cfg.preset) if cfg.preset else load_presets()


def _cot_or_none(log: SimLog, include_spine: bool = True):
    try:
        return metrics.cost_of_transport(log, include_spine=include_spine)
    except (metrics.ZeroVelocityError, metrics.TooShortError):
        return None


# ---------------------------------------------------------------------------
# simulate


def cmd_simulate(args) -> int:
    cfg = _experiment_config(args)
    model = _load_model(cfg)
    presets = _load_preset_table(cfg)
    command = cfg.resolved_command()

    episode = run_episode(
        model,
        cfg.gait,
        strategy=cfg.strategy,
        command=command,
        duration=cfg.duration,
        presets=presets,
    )

    out = _out_dir(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    episode.log.write_csv(out / "log.csv")
    summary = dict(episode.meta)
    summary.update(
        stable=episode.stable,
        t_end=episode.t_end,
        seed=cfg.seed,
        cot=_cot_or_none(episode.log),
        cot_no_spine=_cot_or_none(episode.log, include_spine=False),
        mean_speed=float(
            np.hypot(episode.log.column("base_vx"), episode.log.column("base_vy")).mean()
        ),
    )
    _write_json(out / "summary.json", summary)
    print(
        f"{cfg.gait}/{cfg.strategy}: stable={episode.stable} "
        f"t_end={episode.t_end:.3f} cot={summary['cot']}"
    )
    return EXIT_OK if episode.stable else EXIT_RUNTIME


# ---------------------------------------------------------------------------
# sweep


def _parse_velocities(spec) -> tuple:
    """Either comma-separated values or a lo:hi:n linspace."""
    if isinstance(spec, (list, tuple)):
        vals = [float(v) for v in spec]
    elif ":" in str(spec):
        parts = str(spec).split(":")
        if len(parts) != 3:
            raise CliError(EXIT_CONFIG, f"velocity range must be lo:hi:n, got {spec!r}")
        lo, hi, n = float(parts[0]), float(parts[1]), int(parts[2])
        if n < 1:
            raise CliError(EXIT_CONFIG, "velocity range needs at least one point")
        vals = list(np.linspace(lo, hi, n))
    else:
        vals = [float(v) for v in str(spec).split(",") if v.strip()]
    if not vals:
        raise CliError(EXIT_CONFIG, "no velocities given")
    if any(not np.isfinite(v) or v <= 0 for v in vals):
        raise CliError(EXIT_CONFIG, f"velocities must be positive and finite: {vals}")
    if sorted(vals) != vals or len(set(vals)) != len(vals):
        raise CliError(EXIT_CONFIG, f"velocities must be strictly increasing: {vals}")
    return tuple(vals)


def _parse_names(spec, allowed, what) -> tuple:
    names = list(spec) if isinstance(spec, (list, tuple)) else [
        s.strip() for s in str(spec).split(",") if s.strip()
    ]
    bad = [n for n in names if n not in allowed]
    if bad:
        raise CliError(EXIT_CONFIG, f"unknown {what}: {', '.join(bad)}")
    if not names:
        raise CliError(EXIT_CONFIG, f"no {what} given")
    return tuple(names)


def _sweep_point(job) -> dict:
    """One (gait, strategy, velocity) episode; runs in a worker process."""
    model_path, preset_path, gait_name, strategy, velocity, duration = job
    model = RobotModel.from_yaml(model_path) if model_path else RobotModel.default()
    presets = load_presets(preset_path) if preset_path else load_presets()
    point = {"velocity": velocity, "stable": False, "cot": None, "cot_no_spine": None}
    try:
        episode = run_episode(
            model,
            gait_name,
            strategy=strategy,
            command=(velocity, 0.0, 0.0),
            duration=duration,
            presets=presets,
        )
        point["stable"] = episode.stable
        point["t_end"] = episode.t_end
        if episode.stable:
            try:
                point["cot"] = metrics.cost_of_transport(episode.log)
                point["cot_no_spine"] = metrics.cost_of_transport(
                    episode.log, include_spine=False
                )
            except (metrics.ZeroVelocityError, metrics.TooShortError) as exc:
                point["error"] = f"{type(exc).__name__}: {exc}"
    except Exception as exc:  # never lose the sweep to one bad point
        point["error"] = f"{type(exc).__name__}: {exc}"
    return point


def cmd_sweep(args) -> int:
    keys = ("model", "preset", "duration", "out", "seed", "gaits", "strategies", "velocities", "jobs")
    merged = _merged(args, keys)
    base = ExperimentConfig(
        model=merged.get("model"),
        preset=merged.get("preset"),
        duration=float(merged.get("duration", 10.0)),
        out=merged.get("out", "out"),
        seed=int(merged.get("seed", 0)),
    )
    if base.model is not None and not Path(base.model).is_file():
        raise CliError(EXIT_CONFIG, f"model file not found: {base.model}")
    if base.preset is not None and not Path(base.preset).is_file():
        raise CliError(EXIT_CONFIG, f"preset file not found: {base.preset}")
    if not base.duration > 0:
        raise CliError(EXIT_CONFIG, f"duration must be positive, got {base.duration}")

    gaits = _parse_names(merged.get("gaits", "walk,trot"), load_gaits(), "gaits")
    strategies = _parse_names(merged.get("strategies", "fixed"), STRATEGIES, "strategies")
    velocities = _parse_velocities(merged.get("velocities", "0.15:0.4:6"))
    jobs = int(merged.get("jobs", 1))

    combos = [(g, s) for g in gaits for s in strategies]
    points = [
        (base.model, base.preset, g, s, v, base.duration)
        for g, s in combos
        for v in velocities
    ]
    if jobs > 1:
        with multiprocessing.Pool(jobs) as pool:
            results = pool.map(_sweep_point, points)
    else:
        results = [_sweep_point(p) for p in points]

    out = _out_dir(base.out)
    out.mkdir(parents=True, exist_ok=True)
    curves = {}
    n_ok = 0
    for i, (g, s) in enumerate(combos):
        chunk = results[i * len(velocities) : (i + 1) * len(velocities)]
        n_ok += sum(p["cot"] is not None for p in chunk)
        good = [p for p in chunk if p["cot"] is not None]
        curve = None
        if len(good) >= 2:
            curve = CotCurve(
                gait=g,
                strategy=s,
                velocities=tuple(p["velocity"] for p in good),
                cot=tuple(p["cot"] for p in good),
                cot_no_spine=tuple(p["cot_no_spine"] for p in good),
            )
            curve.write_csv(out / f"cot_{g}_{s}.csv")
            curves[(g, s)] = curve
        _write_json(
            out / f"sweep_{g}_{s}.json",
            {
                "gait": g,
                "strategy": s,
                "duration": base.duration,
                "seed": base.seed,
                "curve": f"cot_{g}_{s}.csv" if curve else None,
                "points": chunk,
            },
        )
        print(f"sweep {g}/{s}: {len(good)}/{len(chunk)} points usable")

    if "walk" in gaits and "trot" in gaits:
        transitions = {}
        for s in strategies:
            if ("walk", s) in curves and ("trot", s) in curves:
                try:
                    transitions[s] = {
                        "velocity": metrics.gait_transition(curves[("walk", s)], curves[("trot", s)])
                    }
                except (metrics.NoCrossingError, metrics.MultipleCrossingsError) as exc:
                    transitions[s] = {"error": f"{type(exc).__name__}: {exc}"}
            else:
                transitions[s] = {"error": "missing a usable walk or trot curve"}
        _write_json(out / "transitions.json", transitions)

    return EXIT_OK if n_ok else EXIT_RUNTIME


# ---------------------------------------------------------------------------
# transition


def cmd_transition(args) -> int:
    try:
        walk = CotCurve.read_csv(args.walk) if args.walk else fixture_curve("cot_fixed_walk")
        trot = CotCurve.read_csv(args.trot) if args.trot else fixture_curve("cot_fixed_trot")
    except FileNotFoundError as exc:
        raise CliError(EXIT_CONFIG, f"curve file not found: {exc.filename}") from None
    except ValueError as exc:
        raise CliError(EXIT_DATA, f"bad curve file: {exc}") from None

    try:
        velocity = metrics.gait_transition(walk, trot, tol=args.tol)
    except metrics.NoCrossingError as exc:
        raise CliError(EXIT_DATA, f"no transition: {exc}") from None
    except metrics.MultipleCrossingsError as exc:
        raise CliError(
            EXIT_DATA, f"multiple crossings at {[round(c, 4) for c in exc.crossings]}"
        ) from None

    out = _out_dir(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(
        out / "transition.json",
        {
            "walk": str(args.walk) if args.walk else "fixture:cot_fixed_walk",
            "trot": str(args.trot) if args.trot else "fixture:cot_fixed_trot",
            "tolerance": args.tol,
            "velocity": velocity,
        },
    )
    print(f"walk-trot transition at {velocity:.4f} m/s")
    return EXIT_OK


# ---------------------------------------------------------------------------
# hildebrand


def cmd_hildebrand(args) -> int:
    try:
        log = SimLog.read_csv(args.log)
    except FileNotFoundError:
        raise CliError(EXIT_CONFIG, f"log file not found: {args.log}") from None
    except ValueError as exc:
        raise CliError(EXIT_DATA, f"bad log file: {exc}") from None
    schedule = load_gaits().get(args.gait)
    if schedule is None:
        raise CliError(EXIT_CONFIG, f"unknown gait {args.gait!r}")

    try:
        if not args.full:
            window = metrics.steady_window(log)
            log = SimLog(columns=log.columns, data=log.data[window])
        grid = metrics.hildebrand(log, args.bins, schedule)
    except metrics.TooShortError as exc:
        raise CliError(EXIT_DATA, f"log too short: {exc}") from None
    except ValueError as exc:
        raise CliError(EXIT_CONFIG, str(exc)) from None
    consistency = metrics.footfall_consistency(grid)

    out = _out_dir(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "hildebrand.pgm").write_bytes(metrics.grid_pgm(grid, scale=args.scale))
    (out / "hildebrand.svg").write_text(metrics.grid_svg(grid))
    _write_json(
        out / "hildebrand.json",
        {
            "gait": args.gait,
            "n_bins": grid.n_bins,
            "n_cycles": grid.n_cycles,
            "consistency": consistency,
        },
    )
    print(f"{args.gait}: {grid.n_cycles} cycles, consistency {consistency:.4f}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# optimize


def cmd_optimize(args) -> int:
    keys = ("model", "strategy", "gait", "duration", "out", "jobs", "seed")
    merged = _merged(args, keys, extra_allowed=("axes", "weights", "max_candidates"))
    axes_spec = merged.get("axes")
    if not axes_spec:
        raise CliError(EXIT_CONFIG, "config must define at least one grid axis")
    strategy = merged.get("strategy")
    gait_name = merged.get("gait")
    if strategy is None or gait_name is None:
        raise CliError(EXIT_CONFIG, "strategy and gait are required")
    model_path = merged.get("model")
    if model_path is not None and not Path(model_path).is_file():
        raise CliError(EXIT_CONFIG, f"model file not found: {model_path}")

    try:
        axes = tuple(
            GridAxis(name, float(ax["lo"]), float(ax["hi"]), int(ax["steps"]))
            for name, ax in axes_spec.items()
        )
        grid = ParamGrid(
            strategy=strategy,
            gait=gait_name,
            axes=axes,
            max_candidates=int(merged.get("max_candidates", 10_000)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise CliError(EXIT_CONFIG, f"bad grid definition: {exc}") from None

    weights = CostWeights.for_strategy(strategy)
    overrides = merged.get("weights") or {}
    if overrides:
        try:
            weights = CostWeights(**{**weights.as_dict(), **overrides})
        except TypeError as exc:
            raise CliError(EXIT_CONFIG, f"bad weight override: {exc}") from None

    model = RobotModel.from_yaml(model_path) if model_path else RobotModel.default()
    ranked = optimize.grid_search(
        model,
        grid,
        weights=weights,
        duration=float(merged.get("duration", 10.0)),
        n_jobs=int(merged.get("jobs", 1)),
    )

    out = _out_dir(merged.get("out", "out"))
    out.mkdir(parents=True, exist_ok=True)
    optimize.write_results_csv(ranked, out / "results.csv")
    digest = optimize.search_summary(ranked)
    digest.update(strategy=strategy, gait=gait_name, seed=int(merged.get("seed", 0)))
    _write_json(out / "search.json", digest)

    best = ranked[0]
    if best.stable:
        with open(out / "preset.yaml", "w") as f:
            yaml.safe_dump(optimize.export_preset(best, strategy, gait_name), f)
        print(f"best {strategy}/{gait_name} cost {best.cost:.4f}: {best.params}")
        return EXIT_OK
    print("no stable candidate found", file=sys.stderr)
    return EXIT_RUNTIME


# ---------------------------------------------------------------------------
# score


def cmd_score(args) -> int:
    if not Path(args.votes).is_file():
        raise CliError(EXIT_CONFIG, f"votes file not found: {args.votes}")
    try:
        records = study.parse_votes(args.votes)
    except study.SchemaError as exc:
        raise CliError(EXIT_DATA, str(exc)) from None

    kept, dropped = study.validate_participants(records, threshold=args.threshold)
    try:
        report = study.naturalness_scores(kept, args.baseline)
        match_rate = study.interact_match_rate(kept)
    except study.EmptyInputError:
        raise CliError(EXIT_DATA, "no ballots left after screening") from None
    except study.BaselineMissingError as exc:
        raise CliError(EXIT_DATA, str(exc)) from None

    out = _out_dir(args.out)
    out.mkdir(parents=True, exist_ok=True)
    blob = report.as_dict()
    blob["interact_match_rate"] = match_rate
    blob["dropped_participants"] = dropped
    _write_json(out / "report.json", blob)
    (out / "breakdown.csv").write_text(report.breakdown_csv())
    (out / "dropped.txt").write_text("".join(f"{p}\n" for p in dropped))
    print(
        f"{len(kept)} ballots ({len(dropped)} raters dropped), "
        f"interact match {match_rate:.4f}"
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _add_experiment_flags(sub) -> None:
    sub.add_argument("--config", help="YAML experiment file; flags override its keys")
    sub.add_argument("--model", help="robot parameter YAML (default: built-in)")
    sub.add_argument("--preset", help="spine preset YAML (default: built-in)")
    sub.add_argument("--duration", type=float, help="episode length, seconds")
    sub.add_argument("--out", help="output directory (default: out)")
    sub.add_argument("--seed", type=int, help="recorded in summaries for provenance")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spinequad", description="Spined-quadruped locomotion experiments."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one episode and log it")
    _add_experiment_flags(p)
    p.add_argument("--gait", help="walk, trot, or turn")
    p.add_argument("--strategy", help=f"one of {', '.join(STRATEGIES)}")
    p.add_argument(
        "--command",
        type=lambda s: tuple(float(x) for x in s.split(",")),
        help="vx,vy,wz targets (default: per-gait)",
    )
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="cost-of-transport curves over velocities")
    _add_experiment_flags(p)
    p.add_argument("--gaits", help="comma list (default: walk,trot)")
    p.add_argument("--strategies", help="comma list (default: fixed)")
    p.add_argument("--velocities", help="comma list or lo:hi:n (default: 0.15:0.4:6)")
    p.add_argument("--jobs", type=int, help="parallel episodes (default: 1)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("transition", help="walk-trot crossing of two curves")
    p.add_argument("--walk", help="walk curve CSV (default: shipped fixture)")
    p.add_argument("--trot", help="trot curve CSV (default: shipped fixture)")
    p.add_argument("--tol", type=float, default=1e-4, help="bisection tolerance")
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_transition)

    p = sub.add_parser("hildebrand", help="footfall diagram from an episode log")
    p.add_argument("--log", required=True, help="episode log CSV")
    p.add_argument("--gait", required=True, help="gait the episode ran")
    p.add_argument("--bins", type=int, default=20, help="phase bins per cycle")
    p.add_argument("--scale", type=int, default=8, help="PGM cell size in pixels")
    p.add_argument("--full", action="store_true", help="use all rows, not just steady state")
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_hildebrand)

    p = sub.add_parser("optimize", help="grid-search spine parameters")
    p.add_argument("--config", required=True, help="YAML with axes + search settings")
    p.add_argument("--model")
    p.add_argument("--strategy")
    p.add_argument("--gait")
    p.add_argument("--duration", type=float)
    p.add_argument("--jobs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("score", help="naturalness scores from ballots")
    p.add_argument("--votes", required=True, help="ballot CSV")
    p.add_argument("--baseline", default="fixed", help="baseline strategy id")
    p.add_argument("--threshold", type=int, default=2, help="contradictions before dropping a rater")
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_score)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
