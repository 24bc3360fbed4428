"""Central pattern generator: gait schedules, leg phases, swing trajectories.

A gait is a shared sawtooth phase in [0, 1) plus per-leg offsets.  A leg is in
stance while its offset phase is below the duty factor and follows a Bezier
swing arc for the remainder of the cycle.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from spinequad.model import LEG_ORDER
from spinequad.resources import data_path, load_yaml


class NotInSwingError(ValueError):
    """swing_target() called while the leg is in stance."""


@dataclass(frozen=True)
class GaitSchedule:
    name: str
    t_stance: float
    t_swing: float
    offsets: np.ndarray  # cycle fractions, LEG_ORDER

    def __post_init__(self):
        if self.t_stance <= 0 or self.t_swing <= 0:
            raise ValueError("stance and swing durations must be positive")
        off = np.asarray(self.offsets, dtype=float)
        if off.shape != (4,) or np.any(off < 0.0) or np.any(off >= 1.0):
            raise ValueError("offsets must be four fractions in [0, 1)")
        object.__setattr__(self, "offsets", off)

    @property
    def t_cycle(self) -> float:
        return self.t_stance + self.t_swing

    @property
    def duty(self) -> float:
        return self.t_stance / self.t_cycle


def load_gaits(path=None) -> dict:
    """Named gait schedules from a YAML table (packaged defaults if no path)."""
    raw = load_yaml(path if path is not None else data_path("gaits.yaml"))
    out = {}
    for name, row in raw.items():
        off = row["offsets"]
        out[name] = GaitSchedule(
            name=name,
            t_stance=float(row["t_stance"]),
            t_swing=float(row["t_swing"]),
            offsets=np.array([float(off[leg]) for leg in LEG_ORDER]),
        )
    return out


def cpg_phase(t: float, schedule: GaitSchedule) -> float:
    """Shared sawtooth phase in [0, 1)."""
    return (t % schedule.t_cycle) / schedule.t_cycle


def leg_phase(phi: float, leg: int | str, schedule: GaitSchedule) -> float:
    idx = LEG_ORDER.index(leg) if isinstance(leg, str) else leg
    return (phi - schedule.offsets[idx]) % 1.0


def in_stance(phi_leg: float, schedule: GaitSchedule) -> bool:
    return phi_leg < schedule.duty


@dataclass(frozen=True)
class SwingCurve:
    """Bezier swing template.

    Control point columns: x = fraction along the start->end chord,
    y = lateral offset (m, left of the chord), z = height above ground (m).
    First and last points must lie on the ground plane.
    """

    points: np.ndarray = field(default_factory=lambda: default_swing_points(0.03))

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[0] < 2 or pts.shape[1] != 3:
            raise ValueError("control points must be (n >= 2, 3)")
        if abs(pts[0, 2]) > 1e-12 or abs(pts[-1, 2]) > 1e-12:
            raise ValueError("swing must start and end on the ground plane")
        object.__setattr__(self, "points", pts)

    @property
    def lift(self) -> float:
        return float(np.max(self.points[:, 2]))


def default_swing_points(lift: float) -> np.ndarray:
    # 6-point symmetric arc; midpoint height works out to exactly `lift`
    # ((10*0.8 + 20*1.2)/32 == 1) and take-off/touchdown are vertical.
    return np.array(
        [
            [0.0, 0.0, 0.0],
            [0.0, 0.0, 0.8 * lift],
            [0.4, 0.0, 1.2 * lift],
            [0.6, 0.0, 1.2 * lift],
            [1.0, 0.0, 0.8 * lift],
            [1.0, 0.0, 0.0],
        ]
    )


def _bernstein_eval(points, s: float) -> np.ndarray:
    n = points.shape[0] - 1
    coeff = np.zeros(n + 1)
    coeff[0] = 1.0
    for j in range(1, n + 1):
        coeff[1 : j + 1] = coeff[1 : j + 1] * (1 - s) + coeff[0:j] * s
        coeff[0] *= 1 - s
    return coeff @ points


def _world_points(curve: SwingCurve, start, end) -> np.ndarray:
    start = np.asarray(start, dtype=float)
    chord = np.asarray(end, dtype=float) - start
    horiz = np.array([chord[0], chord[1], 0.0])
    norm = np.linalg.norm(horiz)
    if norm < 1e-9:
        lateral = np.array([0.0, 1.0, 0.0])
    else:
        lateral = np.array([-horiz[1], horiz[0], 0.0]) / norm
    pts = curve.points
    up = np.array([0.0, 0.0, 1.0])
    return (
        start[None, :]
        + pts[:, 0:1] * chord[None, :]
        + pts[:, 1:2] * lateral[None, :]
        + pts[:, 2:3] * up[None, :]
    )


def swing_fraction(phi_leg: float, schedule: GaitSchedule) -> float:
    if in_stance(phi_leg, schedule):
        raise NotInSwingError(f"leg phase {phi_leg:.3f} is in stance")
    return (phi_leg - schedule.duty) / (1.0 - schedule.duty)


def swing_target(
    phi_leg: float,
    schedule: GaitSchedule,
    curve: SwingCurve,
    start,
    end,
) -> tuple[np.ndarray, np.ndarray]:
    """Swing foot position and velocity at the given leg phase.

    The template curve is anchored so the arc leaves `start` at swing onset
    and lands on `end` at touchdown; heights are absolute metres, not scaled
    by stride length.  Velocity is the phase derivative divided by the swing
    duration.

    Raises NotInSwingError during the stance window.
    """
    s = swing_fraction(phi_leg, schedule)
    pts = _world_points(curve, start, end)
    pos = _bernstein_eval(pts, s)
    n = pts.shape[0] - 1
    dpts = n * (pts[1:] - pts[:-1])
    vel = _bernstein_eval(dpts, s) / schedule.t_swing
    return pos, vel


def footfall_reference(schedule: GaitSchedule, n_bins: int) -> np.ndarray:
    """Commanded contact pattern: (4, n_bins) bool, sampled at bin centres."""
    if n_bins < 1:
        raise ValueError("need at least one bin")
    centers = (np.arange(n_bins) + 0.5) / n_bins
    out = np.zeros((4, n_bins), dtype=bool)
    for i in range(4):
        phases = (centers - schedule.offsets[i]) % 1.0
        out[i] = phases < schedule.duty
    return out


def touchdown_target(neutral_world, cmd_velocity, yaw_rate: float, base_r, t_stance: float) -> np.ndarray:
    """Ground target for the next touchdown.

    Neutral ground point under the hip, advanced by half a stance of commanded
    travel; for turning commands the hip's velocity includes the yaw-rate
    cross term about the base.
    """
    neutral = np.asarray(neutral_world, dtype=float)
    v = np.asarray(cmd_velocity, dtype=float) + np.cross(
        np.array([0.0, 0.0, yaw_rate]), neutral - np.asarray(base_r, dtype=float)
    )
    out = neutral + v * (t_stance / 2.0)
    out[2] = 0.0
    return out
