"""Spine actuation strategies.

Every strategy produces, per control tick, a desired angle and PD gain pair
for each of the four spine joints (fy, fz, ry, rz).  The baseline 'fixed'
strategy locks the spine rigid; the simulator treats it specially and never
actuates or integrates the spine joints.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from spinequad.model import SPINE_JOINTS
from spinequad.resources import data_path, load_yaml

STRATEGIES = ("fixed", "stiffness", "foot_tracking", "time_real", "time_opt")

# both spine joint classes share the same angle range
SPINE_ANGLE_LIMIT = np.pi / 12

_EY = np.array([0.0, 1.0, 0.0])


class InvalidParamsError(ValueError):
    """Strategy constants violate a validity requirement (e.g. negative Kp)."""


class DegenerateFeetError(ValueError):
    """Foot-tracking geometry is undefined (coincident feet)."""


@dataclass(frozen=True)
class JointParams:
    c1: float = 0.0
    c2: float = 0.0
    c3: float = 0.0
    c4: float = 0.0
    freq: float = 1.0


@dataclass(frozen=True)
class StrategyParams:
    strategy: str
    joints: dict = field(default_factory=dict)  # name -> JointParams

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise InvalidParamsError(f"unknown strategy {self.strategy!r}")
        if self.strategy != "fixed":
            missing = [j for j in SPINE_JOINTS if j not in self.joints]
            if missing:
                raise InvalidParamsError(f"missing joint params: {missing}")
        if self.strategy == "stiffness":
            for name in SPINE_JOINTS:
                p = self.joints[name]
                if p.c3 - abs(p.c1) < 0.0:
                    raise InvalidParamsError(
                        f"stiffness joint {name}: min Kp = {p.c3 - abs(p.c1):.3f} < 0"
                    )

    def arrays(self, fields=("c1", "c2", "c3", "c4")) -> tuple[np.ndarray, ...]:
        return tuple(
            np.array([getattr(self.joints[j], f) for j in SPINE_JOINTS]) for f in fields
        )


@dataclass
class SpineCommand:
    theta_d: np.ndarray
    kp: np.ndarray
    kd: np.ndarray


def load_presets(path=None) -> dict:
    """Strategy presets keyed by (strategy, gait); 'all' rows fan out lazily
    via resolve_preset."""
    raw = load_yaml(path if path is not None else data_path("spine_presets.yaml"))
    out = {}
    for strategy, gaits in raw.items():
        for gait, joints in gaits.items():
            params = {
                name: JointParams(**{k: float(v) for k, v in row.items()})
                for name, row in joints.items()
            }
            out[(strategy, gait)] = StrategyParams(strategy=strategy, joints=params)
    return out


def resolve_preset(presets: dict, strategy: str, gait: str) -> StrategyParams:
    if strategy == "fixed":
        return StrategyParams(strategy="fixed")
    if (strategy, gait) in presets:
        return presets[(strategy, gait)]
    if (strategy, "all") in presets:
        return presets[(strategy, "all")]
    raise KeyError(f"no preset for strategy {strategy!r}, gait {gait!r}")


def fixed_command() -> SpineCommand:
    z = np.zeros(4)
    return SpineCommand(theta_d=z.copy(), kp=z.copy(), kd=z.copy())


def stiffness_command(phi: float, params: StrategyParams) -> SpineCommand:
    """Zero target, gait-phase-modulated stiffness."""
    c1, c2, c3, c4 = params.arrays()
    kp = c1 * np.sin(2.0 * np.pi * phi + c2) + c3
    if np.any(kp < 0.0):
        raise InvalidParamsError("phase-modulated Kp dipped below zero")
    return SpineCommand(theta_d=np.zeros(4), kp=kp, kd=c4.copy())


def foot_tracking_command(
    params: StrategyParams, feet_chassis: np.ndarray, neutral_chassis: np.ndarray
) -> SpineCommand:
    """Bend the spine toward the feet: pitch follows the mean fore-aft foot
    error of the adjacent pair, yaw follows the angle of the pair's
    connecting line.

    Args:
        feet_chassis: (4, 3) current foot positions, chassis frame, LEG_ORDER.
        neutral_chassis: (4, 3) neutral stance foot positions, same frame.
    """
    p = np.asarray(feet_chassis, dtype=float).reshape(4, 3)
    c = np.asarray(neutral_chassis, dtype=float).reshape(4, 3)
    c1, kp, kd, _ = params.arrays()

    theta = np.zeros(4)
    # pitch: mean x error of the pair carried by that end of the spine
    theta[0] = c1[0] * 0.5 * ((p[0, 0] - c[0, 0]) + (p[1, 0] - c[1, 0]))
    theta[2] = c1[2] * 0.5 * ((p[2, 0] - c[2, 0]) + (p[3, 0] - c[3, 0]))
    # yaw: signed angle of the left-right foot line against the lateral axis
    theta[1] = c1[1] * _pair_yaw(p[0] - p[1])
    theta[3] = c1[3] * _pair_yaw(p[2] - p[3])

    theta = np.clip(theta, -SPINE_ANGLE_LIMIT, SPINE_ANGLE_LIMIT)
    return SpineCommand(theta_d=theta, kp=kp.copy(), kd=kd.copy())


def _pair_yaw(diff: np.ndarray) -> float:
    norm = np.linalg.norm(diff)
    if norm < 1e-6:
        raise DegenerateFeetError("left and right feet coincide")
    u = diff / norm
    ang = float(np.arccos(min(1.0, max(-1.0, float(u @ _EY)))))
    return float(np.sign(u[0])) * ang  # left foot forward -> positive yaw


def time_varying_command(phi: float, params: StrategyParams) -> SpineCommand:
    """Open-loop sinusoids: pitch runs at twice the yaw frequency by default
    (two pitch peaks per stride, one yaw sweep)."""
    c1, c2, kp, kd = params.arrays()
    (freq,) = params.arrays(("freq",))
    theta = c1 * np.sin(2.0 * np.pi * freq * phi + c2)
    theta = np.clip(theta, -SPINE_ANGLE_LIMIT, SPINE_ANGLE_LIMIT)
    return SpineCommand(theta_d=theta, kp=kp.copy(), kd=kd.copy())


def spine_command(
    params: StrategyParams,
    phi: float,
    feet_chassis=None,
    neutral_chassis=None,
) -> SpineCommand:
    """Dispatch to the strategy the params were built for."""
    if params.strategy == "fixed":
        return fixed_command()
    if params.strategy == "stiffness":
        return stiffness_command(phi, params)
    if params.strategy == "foot_tracking":
        if feet_chassis is None or neutral_chassis is None:
            raise ValueError("foot_tracking needs current and neutral foot positions")
        return foot_tracking_command(params, feet_chassis, neutral_chassis)
    if params.strategy in ("time_real", "time_opt"):
        return time_varying_command(phi, params)
    raise InvalidParamsError(f"unknown strategy {params.strategy!r}")
