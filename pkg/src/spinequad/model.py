"""Robot description, kinematics, analytic leg IK and actuator models.

The robot is three rigid bodies (front / middle / back) chained by two
universal joints, each a pitch hinge followed by a yaw hinge: joints
(fy, fz) between middle and front, (ry, rz) between middle and back.
Four 3-DoF legs (hip roll, hip pitch, knee pitch) hang off the front and
back bodies; their links are treated as massless.

Frames: every body frame sits at that body's COM.  The floating base is the
middle body; ``BodyState.r`` is its world position.  Canonical joint order is
(fy, fz, ry, rz) then (roll, pitch, knee) per leg in LEG_ORDER.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from spinequad.lie import rot_x, rot_y, rot_z
from spinequad.resources import data_path, load_yaml

GRAVITY = 9.81

SPINE_JOINTS = ("fy", "fz", "ry", "rz")
LEG_ORDER = ("fl", "fr", "rl", "rr")
JOINT_NAMES = SPINE_JOINTS + tuple(
    f"{leg}_{part}" for leg in LEG_ORDER for part in ("roll", "pitch", "knee")
)
N_JOINTS = len(JOINT_NAMES)  # 16

_EY = np.array([0.0, 1.0, 0.0])
_EZ = np.array([0.0, 0.0, 1.0])


def leg_joint_indices(leg: str) -> tuple[int, int, int]:
    base = 4 + 3 * LEG_ORDER.index(leg)
    return base, base + 1, base + 2


class UnreachableError(ValueError):
    """Foot target outside the leg workspace."""


class OutOfLimitsError(ValueError):
    """IK solution exists but violates a joint limit."""


@dataclass
class BodyState:
    """Floating-base state in world frame (angular velocity in world frame)."""

    r: np.ndarray = field(default_factory=lambda: np.zeros(3))
    R: np.ndarray = field(default_factory=lambda: np.eye(3))
    v: np.ndarray = field(default_factory=lambda: np.zeros(3))
    omega: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def copy(self) -> "BodyState":
        return BodyState(self.r.copy(), self.R.copy(), self.v.copy(), self.omega.copy())


@dataclass
class JointState:
    """Actuated joint state; arrays are length N_JOINTS in canonical order."""

    theta: np.ndarray = field(default_factory=lambda: np.zeros(N_JOINTS))
    dtheta: np.ndarray = field(default_factory=lambda: np.zeros(N_JOINTS))
    tau: np.ndarray = field(default_factory=lambda: np.zeros(N_JOINTS))

    def copy(self) -> "JointState":
        return JointState(self.theta.copy(), self.dtheta.copy(), self.tau.copy())


@dataclass(frozen=True)
class ActuatorParams:
    max_speed: float
    max_torque: float
    lo: float
    hi: float
    gear: float
    kv_eff: float  # joint torque -> motor current, A/(N m)
    winding_resistance: float


@dataclass(frozen=True)
class LegGeometry:
    body: str  # 'front' or 'back'
    mount: np.ndarray  # body frame origin -> hip-roll origin
    lateral: np.ndarray  # hip-roll -> hip-pitch (pure y)
    thigh: np.ndarray  # hip-pitch -> knee (pure -z)
    shank: np.ndarray  # knee -> foot (pure -z)

    @property
    def d(self) -> float:
        return float(self.lateral[1])

    @property
    def l1(self) -> float:
        return float(-self.thigh[2])

    @property
    def l2(self) -> float:
        return float(-self.shank[2])


@dataclass(frozen=True)
class RobotModel:
    name: str
    body_mass: dict
    body_inertia: dict  # local 3x3
    joint_offset: dict  # middle frame -> universal joint, for 'front'/'back'
    com_offset: dict  # universal joint -> body origin, for 'front'/'back'
    com_middle: np.ndarray
    legs: dict
    actuators: tuple  # ActuatorParams per joint, canonical order
    stand_height: float
    swing_kp: float
    swing_kd: float
    swing_reflected_inertia: float

    @property
    def total_mass(self) -> float:
        return sum(self.body_mass.values())

    @classmethod
    def from_yaml(cls, path) -> "RobotModel":
        raw = load_yaml(path)
        try:
            bodies = raw["bodies"]
            motor = raw["motor"]
            act_rows = raw["actuators"]
            legs_raw = raw["legs"]
        except KeyError as e:
            raise ValueError(f"robot config missing section {e}") from e

        body_mass = {k: float(bodies[k]["mass"]) for k in ("middle", "front", "back")}
        body_inertia = {
            k: np.diag(np.asarray(bodies[k]["inertia"], dtype=float))
            for k in ("middle", "front", "back")
        }
        joint_offset = {
            "front": np.asarray(bodies["front"]["joint_offset"], dtype=float),
            "back": np.asarray(bodies["back"]["joint_offset"], dtype=float),
        }
        com_offset = {
            "front": np.asarray(bodies["front"]["com_offset"], dtype=float),
            "back": np.asarray(bodies["back"]["com_offset"], dtype=float),
        }

        legs = {}
        for leg in LEG_ORDER:
            row = legs_raw[leg]
            geom = LegGeometry(
                body=row["body"],
                mount=np.asarray(row["mount"], dtype=float),
                lateral=np.asarray(row["lateral"], dtype=float),
                thigh=np.asarray(row["thigh"], dtype=float),
                shank=np.asarray(row["shank"], dtype=float),
            )
            if abs(geom.lateral[0]) > 1e-12 or abs(geom.lateral[2]) > 1e-12:
                raise ValueError(f"leg {leg}: lateral link must be pure y")
            for name, v in (("thigh", geom.thigh), ("shank", geom.shank)):
                if abs(v[0]) > 1e-12 or abs(v[1]) > 1e-12 or v[2] >= 0:
                    raise ValueError(f"leg {leg}: {name} link must be pure -z")
            legs[leg] = geom

        kv_si = float(motor["kv_rpm_per_volt"]) * 2.0 * np.pi / 60.0
        r_w = float(motor["winding_resistance"])
        gear_pitch = float(motor["gear_pitch"])
        gear_yaw = float(motor["gear_yaw"])

        def make(row_name, gear):
            row = act_rows[row_name]
            return ActuatorParams(
                max_speed=float(row[0]),
                max_torque=float(row[1]),
                lo=float(row[2]),
                hi=float(row[3]),
                gear=gear,
                kv_eff=kv_si / gear,
                winding_resistance=r_w,
            )

        actuators = [
            make("spine_pitch", gear_pitch),  # fy
            make("spine_yaw", gear_yaw),  # fz
            make("spine_pitch", gear_pitch),  # ry
            make("spine_yaw", gear_yaw),  # rz
        ]
        for leg in LEG_ORDER:
            roll_row = "hip_roll_left" if leg.endswith("l") else "hip_roll_right"
            actuators.append(make(roll_row, gear_yaw))
            actuators.append(make("hip_pitch", gear_pitch))
            actuators.append(make("knee_pitch", gear_pitch))

        swing = raw.get("swing", {})
        return cls(
            name=str(raw.get("name", "robot")),
            body_mass=body_mass,
            body_inertia=body_inertia,
            joint_offset=joint_offset,
            com_offset=com_offset,
            com_middle=np.asarray(bodies["middle"].get("com", [0, 0, 0]), dtype=float),
            legs=legs,
            actuators=tuple(actuators),
            stand_height=float(raw.get("stand_height", 0.15)),
            swing_kp=float(swing.get("kp", 20.0)),
            swing_kd=float(swing.get("kd", 0.5)),
            swing_reflected_inertia=float(swing.get("reflected_inertia", 0.004)),
        )

    @classmethod
    def default(cls) -> "RobotModel":
        return cls.from_yaml(data_path("robot.yaml"))


@dataclass
class FrameTree:
    """World-frame poses of the bodies plus per-leg hip frames and feet."""

    body_R: dict
    body_p: dict  # frame origin == COM
    joint_p: dict  # universal joint positions, 'front'/'back'
    axes: dict  # world axes of fy/fz/ry/rz
    hip_R: dict
    hip_p: dict
    foot_p: dict


def forward_kinematics(model: RobotModel, base: BodyState, joints) -> FrameTree:
    """Compose the full kinematic tree for one configuration.

    Args:
        model: robot description.
        base: floating-base pose (only r and R are used).
        joints: JointState or a length-16 angle array in canonical order.

    Returns:
        FrameTree with world poses of all bodies, hip frames and feet.
    """
    theta = joints.theta if isinstance(joints, JointState) else np.asarray(joints, dtype=float)
    r, R = base.r, base.R

    fy, fz, ry, rz = theta[0], theta[1], theta[2], theta[3]

    p_fj = r + R @ model.joint_offset["front"]
    R_fpitch = R @ rot_y(fy)
    R_f = R_fpitch @ rot_z(fz)
    p_front = p_fj + R_f @ model.com_offset["front"]

    p_bj = r + R @ model.joint_offset["back"]
    R_bpitch = R @ rot_y(ry)
    R_b = R_bpitch @ rot_z(rz)
    p_back = p_bj + R_b @ model.com_offset["back"]

    body_R = {"middle": R, "front": R_f, "back": R_b}
    body_p = {"middle": r + R @ model.com_middle, "front": p_front, "back": p_back}
    axes = {
        "fy": R @ _EY,
        "fz": R_fpitch @ _EZ,
        "ry": R @ _EY,
        "rz": R_bpitch @ _EZ,
    }

    hip_R, hip_p, foot_p = {}, {}, {}
    for leg in LEG_ORDER:
        geom = model.legs[leg]
        Rb = body_R[geom.body]
        hip_R[leg] = Rb
        hip_p[leg] = body_p[geom.body] + Rb @ geom.mount
        i0, _, _ = leg_joint_indices(leg)
        q = theta[i0 : i0 + 3]
        foot_p[leg] = hip_p[leg] + Rb @ _leg_local_foot(geom, q)

    return FrameTree(
        body_R=body_R,
        body_p=body_p,
        joint_p={"front": p_fj, "back": p_bj},
        axes=axes,
        hip_R=hip_R,
        hip_p=hip_p,
        foot_p=foot_p,
    )


def _leg_local_foot(geom: LegGeometry, q) -> np.ndarray:
    return rot_x(q[0]) @ (geom.lateral + rot_y(q[1]) @ (geom.thigh + rot_y(q[2]) @ geom.shank))


def leg_ik(model: RobotModel, leg: str, hip_R, hip_p, target_world) -> np.ndarray:
    """Closed-form leg IK for a world-frame foot target.

    Selects the knee-backward (digitigrade) branch: the knee angle is taken in
    [0, pi], folding the shank backward relative to the thigh.

    Raises:
        UnreachableError: target outside the workspace annulus.
        OutOfLimitsError: solution violates an actuator angle limit.
    """
    geom = model.legs[leg]
    s = np.asarray(hip_R).T @ (np.asarray(target_world, dtype=float) - np.asarray(hip_p))
    d, l1, l2 = geom.d, geom.l1, geom.l2

    rho = float(np.hypot(s[1], s[2]))
    if rho < abs(d) - 1e-9:
        raise UnreachableError(f"leg {leg}: target inside the roll-axis cylinder")
    if rho < 1e-12:
        q0 = 0.0
        z_p = 0.0
    else:
        arg = min(1.0, max(-1.0, d / rho))
        q0 = float(np.arctan2(s[2], s[1])) + float(np.arccos(arg))
        z_p = -float(np.sqrt(max(rho * rho - d * d, 0.0)))
    if q0 > np.pi:
        q0 -= 2.0 * np.pi
    elif q0 <= -np.pi:
        q0 += 2.0 * np.pi

    x_p = float(s[0])
    D2 = x_p * x_p + z_p * z_p
    c2 = (D2 - l1 * l1 - l2 * l2) / (2.0 * l1 * l2)
    if c2 > 1.0 + 1e-9 or c2 < -1.0 - 1e-9:
        raise UnreachableError(f"leg {leg}: target outside reach annulus")
    c2 = min(1.0, max(-1.0, c2))
    q2 = float(np.arccos(c2))
    q1 = float(np.arctan2(-x_p, -z_p) - np.arctan2(l2 * np.sin(q2), l1 + l2 * c2))
    if q1 > np.pi:
        q1 -= 2.0 * np.pi
    elif q1 <= -np.pi:
        q1 += 2.0 * np.pi

    q = np.array([q0, q1, q2])
    for offset, val in enumerate(q):
        idx = leg_joint_indices(leg)[offset]
        act = model.actuators[idx]
        if val < act.lo - 1e-9 or val > act.hi + 1e-9:
            raise OutOfLimitsError(
                f"leg {leg}: joint {JOINT_NAMES[idx]} = {val:.4f} outside "
                f"[{act.lo:.4f}, {act.hi:.4f}]"
            )
    return q


def leg_jacobian(model: RobotModel, base: BodyState, joints, leg: str) -> np.ndarray:
    """3x3 world-frame Jacobian: leg joint rates -> foot linear velocity."""
    theta = joints.theta if isinstance(joints, JointState) else np.asarray(joints, dtype=float)
    tree = forward_kinematics(model, base, theta)
    return _leg_jacobian_from_tree(model, tree, theta, leg)


def _leg_jacobian_from_tree(model: RobotModel, tree: FrameTree, theta, leg: str) -> np.ndarray:
    geom = model.legs[leg]
    Rh, ph = tree.hip_R[leg], tree.hip_p[leg]
    i0, _, _ = leg_joint_indices(leg)
    q = theta[i0 : i0 + 3]

    Rx0 = rot_x(q[0])
    p_pitch = ph + Rh @ (Rx0 @ geom.lateral)
    p_knee = p_pitch + Rh @ (Rx0 @ (rot_y(q[1]) @ geom.thigh))
    p_foot = tree.foot_p[leg]

    a_roll = Rh @ np.array([1.0, 0.0, 0.0])
    a_pitch = Rh @ (Rx0 @ _EY)

    J = np.empty((3, 3))
    J[:, 0] = np.cross(a_roll, p_foot - ph)
    J[:, 1] = np.cross(a_pitch, p_foot - p_pitch)
    J[:, 2] = np.cross(a_pitch, p_foot - p_knee)
    return J


def joint_torques_from_force(jacobian, force) -> np.ndarray:
    """Static map from a foot contact force to the three leg joint torques."""
    return np.asarray(jacobian).T @ np.asarray(force, dtype=float)


def spine_feedforward_torque(
    model: RobotModel, base: BodyState, joints, foot_forces, gravity: float = GRAVITY
) -> np.ndarray:
    """Spine torques that statically balance gravity and stance-foot loads.

    Args:
        foot_forces: (4, 3) world-frame ground reaction forces in LEG_ORDER;
            zero rows for unloaded feet.

    Returns:
        (4,) torques in (fy, fz, ry, rz) order, equal to the gradient of the
        distal-body potential energy plus the transmitted foot-force moment.
    """
    theta = joints.theta if isinstance(joints, JointState) else np.asarray(joints, dtype=float)
    tree = forward_kinematics(model, base, theta)
    f = np.asarray(foot_forces, dtype=float).reshape(4, 3)
    g_vec = np.array([0.0, 0.0, -gravity])

    out = np.zeros(4)
    for j, name in enumerate(SPINE_JOINTS):
        side = "front" if name in ("fy", "fz") else "back"
        pivot = tree.joint_p[side]
        axis = tree.axes[name]
        moment = np.cross(tree.body_p[side] - pivot, model.body_mass[side] * g_vec)
        for leg in LEG_ORDER:
            if model.legs[leg].body == side:
                moment = moment + np.cross(tree.foot_p[leg] - pivot, f[LEG_ORDER.index(leg)])
        out[j] = -float(axis @ moment)
    return out


def clamp_actuator(model: RobotModel, joint_index: int, tau: float, dtheta: float) -> float:
    """Torque/speed envelope: saturate torque, zero assisting torque past
    max speed (opposing torque is still allowed)."""
    act = model.actuators[joint_index]
    if abs(dtheta) >= act.max_speed and tau * dtheta > 0.0:
        return 0.0
    return float(min(act.max_torque, max(-act.max_torque, tau)))


def electrical_power(model: RobotModel, joint_index: int, tau: float, dtheta: float) -> float:
    """Electrical power draw of one joint: copper loss plus mechanical power."""
    act = model.actuators[joint_index]
    current = tau * act.kv_eff
    return current * current * act.winding_resistance + tau * dtheta


def electrical_power_all(model: RobotModel, tau, dtheta) -> np.ndarray:
    """electrical_power for all 16 joints at once."""
    tau = np.asarray(tau, dtype=float)
    dtheta = np.asarray(dtheta, dtype=float)
    kv = np.array([a.kv_eff for a in model.actuators])
    rw = np.array([a.winding_resistance for a in model.actuators])
    current = tau * kv
    return current * current * rw + tau * dtheta
