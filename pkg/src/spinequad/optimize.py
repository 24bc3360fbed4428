"""Grid search over spine strategy constants.

Enumerates a lattice of per-joint constants, runs one closed-loop episode
per lattice point, and ranks candidates by the scalar strategy score.
Episodes are independent and deterministic, so the sweep parallelises
across processes; results are merged back in lattice order and sorted with
a lexicographic tie-break, which makes rankings reproducible run to run.

The shipped grids are desk-scale defaults, not a published search space.
"""

import functools
import itertools
import math
import multiprocessing
from dataclasses import dataclass, field, replace

import numpy as np

from spinequad import gait, metrics
from spinequad.metrics import CostWeights, strategy_cost
from spinequad.model import (
    LEG_ORDER,
    SPINE_JOINTS,
    BodyState,
    RobotModel,
    forward_kinematics,
)
from spinequad.sim import SimConfig, SimLog, _neutral_stance_chassis, run_episode
from spinequad.spine import (
    SPINE_ANGLE_LIMIT,
    STRATEGIES,
    StrategyParams,
    load_presets,
    resolve_preset,
    spine_command,
)

# Table-style sweep commands per gait: forward speed (m/s), lateral, yaw rate.
SWEEP_COMMANDS = {
    "walk": (0.3, 0.0, 0.0),
    "trot": (0.6, 0.0, 0.0),
    "turn": (0.3, 0.0, -0.5),
}

_TUNABLE = ("c1", "c2", "c3", "c4", "freq")


class UnstableCandidateError(ValueError):
    """Raised when exporting a candidate whose episode fell over."""


@dataclass(frozen=True)
class GridAxis:
    """One swept constant, named '<joint>.<constant>' (e.g. 'fy.c1')."""

    name: str
    lo: float
    hi: float
    steps: int

    def __post_init__(self):
        joint, _, const = self.name.partition(".")
        if joint not in SPINE_JOINTS or const not in _TUNABLE:
            raise ValueError(f"bad axis name {self.name!r}")
        if self.steps < 1:
            raise ValueError(f"{self.name}: steps must be >= 1")
        if self.lo > self.hi:
            raise ValueError(f"{self.name}: lo > hi")

    def values(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.steps)


@dataclass(frozen=True)
class ParamGrid:
    """Search lattice for one (strategy, gait) pair."""

    strategy: str
    gait: str
    axes: tuple
    max_candidates: int = 10_000

    def __post_init__(self):
        if self.strategy not in STRATEGIES or self.strategy == "fixed":
            raise ValueError(f"cannot tune strategy {self.strategy!r}")
        object.__setattr__(self, "axes", tuple(self.axes))
        n = len(self)
        if n > self.max_candidates:
            raise ValueError(f"{n} lattice points exceed the cap of {self.max_candidates}")

    def __len__(self) -> int:
        n = 1
        for ax in self.axes:
            n *= ax.steps
        return n

    def points(self):
        """Lattice points as {axis name: value} dicts, product order."""
        names = [ax.name for ax in self.axes]
        for combo in itertools.product(*(ax.values() for ax in self.axes)):
            yield dict(zip(names, (float(v) for v in combo)))


@dataclass
class Candidate:
    params: dict
    cost: float
    stable: bool
    summary: dict = field(default_factory=dict)


def apply_params(base: StrategyParams, overrides: dict) -> StrategyParams:
    """Copy of ``base`` with the named constants replaced."""
    joints = dict(base.joints)
    for name, value in overrides.items():
        joint, _, const = name.partition(".")
        joints[joint] = replace(joints[joint], **{const: float(value)})
    return StrategyParams(strategy=base.strategy, joints=joints)


def spine_target_series(
    model: RobotModel, log: SimLog, params: StrategyParams, schedule
) -> np.ndarray:
    """Per-row desired spine angles for scoring an episode after the fact.

    Open-loop strategies are recomputed from the gait phase; foot tracking
    re-derives its target from the logged pose and joint angles (forward
    kinematics per row), matching what the controller commanded up to the
    one-tick lag of logging states before stepping.
    """
    n = len(log.data)
    if params.strategy in ("fixed", "stiffness"):
        return np.zeros((n, 4))
    t = log.column("t")
    phi = (t % schedule.t_cycle) / schedule.t_cycle
    if params.strategy in ("time_real", "time_opt"):
        c1, c2 = params.arrays(("c1", "c2"))
        (freq,) = params.arrays(("freq",))
        raw = c1 * np.sin(2.0 * np.pi * freq * phi[:, None] + c2)
        return np.clip(raw, -SPINE_ANGLE_LIMIT, SPINE_ANGLE_LIMIT)
    # foot tracking
    neutral = _neutral_stance_chassis(model)
    q = log.block("q")
    R = np.stack(
        [log.column(f"base_R{i}{j}") for i in range(3) for j in range(3)], axis=1
    ).reshape(-1, 3, 3)
    r = np.stack([log.column("base_x"), log.column("base_y"), log.column("base_z")], axis=1)
    out = np.zeros((n, 4))
    for k in range(n):
        tree = forward_kinematics(model, BodyState(r=r[k], R=R[k]), q[k])
        feet = np.array([tree.foot_p[leg] for leg in LEG_ORDER])
        feet_chassis = (feet - r[k]) @ R[k]
        out[k] = spine_command(
            params, float(phi[k]), feet_chassis=feet_chassis, neutral_chassis=neutral
        ).theta_d
    return out


def _episode_summary(log: SimLog, t_end: float) -> dict:
    speed = float(np.hypot(log.column("base_vx"), log.column("base_vy")).mean())
    out = {"t_end": float(t_end), "mean_speed": speed}
    try:
        out["cot"] = metrics.cost_of_transport(log)
    except (metrics.ZeroVelocityError, metrics.TooShortError):
        out["cot"] = None
    return out


def evaluate_candidate(
    overrides: dict,
    *,
    model: RobotModel,
    strategy: str,
    gait_name: str,
    base_params: StrategyParams,
    weights: CostWeights,
    command,
    duration: float,
    config: SimConfig | None,
) -> Candidate:
    """Run one lattice point end to end; failures become +inf candidates."""
    try:
        params = apply_params(base_params, overrides)
        schedule = gait.load_gaits()[gait_name]
        ep = run_episode(
            model,
            schedule,
            strategy=strategy,
            command=command,
            duration=duration,
            config=config,
            presets={(strategy, gait_name): params},
        )
        if not ep.stable:
            return Candidate(overrides, math.inf, False, {"t_end": float(ep.t_end)})
        targets = spine_target_series(model, ep.log, params, schedule)
        cost = strategy_cost(ep.log, weights, targets, entire=True)
        summary = _episode_summary(ep.log, ep.t_end)
        summary["cost_terms"] = metrics.cost_terms(ep.log, targets, entire=True)
        return Candidate(overrides, float(cost), True, summary)
    except Exception as exc:  # never abort the sweep on one bad point
        return Candidate(overrides, math.inf, False, {"error": f"{type(exc).__name__}: {exc}"})


class _SafeEval:
    """Fence around an evaluator: any failure becomes a +inf candidate."""

    def __init__(self, fn):
        self.fn = fn

    def __call__(self, point: dict) -> Candidate:
        try:
            cand = self.fn(point)
            if not isinstance(cand, Candidate):
                raise TypeError(f"evaluator returned {type(cand).__name__}")
            return cand
        except Exception as exc:
            return Candidate(point, math.inf, False, {"error": f"{type(exc).__name__}: {exc}"})


def grid_search(
    model: RobotModel,
    grid: ParamGrid,
    weights: CostWeights | None = None,
    config: SimConfig | None = None,
    *,
    command=None,
    duration: float = 10.0,
    n_jobs: int = 1,
    evaluate=None,
    presets: dict | None = None,
) -> list:
    """Evaluate every lattice point and rank candidates, cheapest first.

    Unstable or failed episodes carry a +inf cost and sort to the back;
    exact ties break lexicographically on the parameter values, so the
    ranking is a deterministic function of the grid.  ``evaluate`` swaps
    in a custom ``dict -> Candidate`` evaluator (used by tests and dry
    runs); the default runs a full episode per point.
    """
    if weights is None:
        weights = CostWeights.for_strategy(grid.strategy)
    if command is None:
        command = SWEEP_COMMANDS.get(grid.gait, SWEEP_COMMANDS["walk"])
    if evaluate is None:
        base = resolve_preset(
            presets if presets is not None else load_presets(), grid.strategy, grid.gait
        )
        evaluate = functools.partial(
            evaluate_candidate,
            model=model,
            strategy=grid.strategy,
            gait_name=grid.gait,
            base_params=base,
            weights=weights,
            command=command,
            duration=duration,
            config=config,
        )
    points = list(grid.points())
    safe = _SafeEval(evaluate)
    if n_jobs > 1:
        with multiprocessing.Pool(n_jobs) as pool:
            results = pool.map(safe, points)
    else:
        results = [safe(p) for p in points]

    def key(c: Candidate):
        cost = c.cost if not math.isnan(c.cost) else math.inf
        return (cost, tuple(c.params.values()))

    return sorted(results, key=key)


def export_preset(
    candidate: Candidate, strategy: str, gait_name: str, presets: dict | None = None
) -> dict:
    """Preset-file section for a tuned candidate.

    The returned mapping is what a strategy preset YAML holds under
    ``{strategy: {gait: ...}}``; writing it out and reading it back through
    the preset loader reproduces the candidate's constants bit-exactly.
    """
    if not candidate.stable:
        raise UnstableCandidateError("refusing to export an unstable candidate")
    base = resolve_preset(
        presets if presets is not None else load_presets(), strategy, gait_name
    )
    tuned = apply_params(base, candidate.params)
    joints = {
        name: {k: float(getattr(tuned.joints[name], k)) for k in _TUNABLE}
        for name in SPINE_JOINTS
    }
    return {strategy: {gait_name: joints}}


def write_results_csv(candidates, path) -> None:
    """One row per candidate: swept values, cost, stability."""
    candidates = list(candidates)
    if not candidates:
        raise ValueError("no candidates to write")
    names = list(candidates[0].params)
    with open(path, "w") as f:
        f.write(",".join(names + ["cost", "stable"]) + "\n")
        for c in candidates:
            vals = [repr(float(c.params[n])) for n in names]
            f.write(",".join(vals + [repr(float(c.cost)), str(int(c.stable))]) + "\n")


def search_summary(candidates, top_k: int = 5) -> dict:
    """JSON-ready sweep digest: counts plus the best candidates."""
    candidates = list(candidates)
    stable = [c for c in candidates if c.stable]

    def entry(c: Candidate):
        return {
            "params": dict(c.params),
            "cost": c.cost if math.isfinite(c.cost) else None,
            "stable": c.stable,
            "summary": {k: v for k, v in c.summary.items() if k != "cost_terms"},
        }

    return {
        "evaluated": len(candidates),
        "stable": len(stable),
        "best": entry(candidates[0]) if candidates else None,
        "top": [entry(c) for c in candidates[:top_k]],
    }
