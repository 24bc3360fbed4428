"""Closed-loop locomotion simulator.

The chassis (middle body, two spine-linked end bodies) integrates as a
10-dof articulated system: six floating-base coordinates plus the four
spine joints.  Legs are massless transmissions.  A stance foot is welded
to a ground anchor -- its joint angles follow from IK every step and the
commanded ground reaction force, filtered through the actuator torque
limits and the friction pyramid, is applied to the chassis at the foot
point.  Swing legs integrate a reflected-rotor model per joint and exert
nothing on the chassis.

Control runs at a fixed divisor of the physics rate; everything the
controller produces (torques, forces, contact flags, command echo) is held
between ticks.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from spinequad import gait
from spinequad.lie import exp_so3, hat, rot_z
from spinequad.model import (
    GRAVITY,
    JOINT_NAMES,
    LEG_ORDER,
    N_JOINTS,
    BodyState,
    JointState,
    OutOfLimitsError,
    RobotModel,
    UnreachableError,
    _leg_jacobian_from_tree,
    clamp_actuator,
    electrical_power_all,
    forward_kinematics,
    joint_torques_from_force,
    leg_ik,
    spine_feedforward_torque,
)
from spinequad.mpc import MpcConfig, MpcController
from spinequad.spine import StrategyParams, load_presets, resolve_preset, spine_command

# generalized coordinate layout: (v, omega, spine rates) = 3 + 3 + 4
_SPINE_COLS = {"front": (0, 1), "back": (2, 3)}
_SIDE_AXES = {"front": ("fy", "fz"), "back": ("ry", "rz")}

STATUS_CODE = {"optimal": 0.0, "degraded": 1.0, "fallback": 2.0}


@dataclass(frozen=True)
class SimConfig:
    dt: float = 0.0025
    control_divisor: int = 2  # physics steps per control tick
    gravity: float = GRAVITY
    spine_damping: float = 0.6  # gearmotor viscous drag, N m s/rad per spine joint
    lift_height: float = 0.03
    max_accel: float = 0.5  # command ramp, m/s^2
    max_yaw_accel: float = 1.0  # rad/s^2
    roll_pitch_limit: float = 0.5  # rad; beyond this the run counts as a fall
    min_height_ratio: float = 0.5  # fraction of stand height
    log_timing: bool = False  # planner wall time in the log (breaks replay equality)
    mpc: MpcConfig = field(default_factory=MpcConfig)

    @property
    def control_dt(self) -> float:
        return self.dt * self.control_divisor


def _make_columns() -> tuple:
    cols = ["t", "base_x", "base_y", "base_z"]
    cols += [f"base_R{i}{j}" for i in range(3) for j in range(3)]
    cols += ["base_vx", "base_vy", "base_vz", "base_wx", "base_wy", "base_wz"]
    for prefix in ("q", "dq", "tau"):
        cols += [f"{prefix}_{name}" for name in JOINT_NAMES]
    for leg in LEG_ORDER:
        cols += [f"f_{leg}_x", f"f_{leg}_y", f"f_{leg}_z"]
    cols += [f"contact_{leg}" for leg in LEG_ORDER]
    cols += [f"power_{name}" for name in JOINT_NAMES]
    cols += ["cmd_vx", "cmd_vy", "cmd_wz", "mpc_status", "mpc_iterations", "mpc_wall_ms"]
    return tuple(cols)


LOG_COLUMNS = _make_columns()


@dataclass
class SimLog:
    """Episode time series, one row per physics step."""

    columns: tuple
    data: np.ndarray

    def column(self, name: str) -> np.ndarray:
        return self.data[:, self.columns.index(name)]

    def block(self, prefix: str) -> np.ndarray:
        """All columns named '<prefix>_*', in log order."""
        idx = [i for i, c in enumerate(self.columns) if c.startswith(prefix + "_")]
        if not idx:
            raise KeyError(f"no columns with prefix {prefix!r}")
        return self.data[:, idx]

    def write_csv(self, path) -> None:
        with open(path, "w") as f:
            f.write(",".join(self.columns) + "\n")
            np.savetxt(f, self.data, fmt="%.17g", delimiter=",")

    @classmethod
    def read_csv(cls, path) -> "SimLog":
        with open(path) as f:
            header = f.readline().strip().split(",")
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(columns=tuple(header), data=data)


class _BodyPart:
    __slots__ = ("mass", "p", "inertia_w", "jv", "jw")

    def __init__(self, mass, p, inertia_w, jv, jw):
        self.mass = mass
        self.p = p
        self.inertia_w = inertia_w
        self.jv = jv
        self.jw = jw


def _chassis_dynamics(model: RobotModel, tree, base: BodyState, spine_rates, gravity=GRAVITY):
    """Mass matrix, velocity bias and gravity force of the 10-dof chassis.

    Bias terms come from the velocity-product accelerations: the linear and
    angular acceleration each body would have if the generalized
    accelerations were all zero.  The yaw axis of each spine pair rides on
    the pitched frame, which is where the cross terms below come from.
    """
    g_vec = np.array([0.0, 0.0, -gravity])
    r, w = base.r, base.omega
    M = np.zeros((10, 10))
    bias = np.zeros(10)
    grav = np.zeros(10)
    parts = []

    for name in ("middle", "front", "back"):
        m_b = model.body_mass[name]
        R_b = tree.body_R[name]
        p_b = tree.body_p[name]
        I_w = R_b @ model.body_inertia[name] @ R_b.T

        jv = np.zeros((3, 10))
        jw = np.zeros((3, 10))
        jv[:, 0:3] = np.eye(3)
        jv[:, 3:6] = -hat(p_b - r)
        jw[:, 3:6] = np.eye(3)

        if name == "middle":
            w_b = w
            alpha0 = np.zeros(3)
            a0 = np.cross(w, np.cross(w, p_b - r))
        else:
            pj = tree.joint_p[name]
            c_pitch, c_yaw = _SPINE_COLS[name]
            a_p = tree.axes[_SIDE_AXES[name][0]]
            a_y = tree.axes[_SIDE_AXES[name][1]]
            dq_p, dq_y = spine_rates[c_pitch], spine_rates[c_yaw]
            arm = p_b - pj
            jv[:, 6 + c_pitch] = np.cross(a_p, arm)
            jv[:, 6 + c_yaw] = np.cross(a_y, arm)
            jw[:, 6 + c_pitch] = a_p
            jw[:, 6 + c_yaw] = a_y
            w_pitched = w + dq_p * a_p
            w_b = w_pitched + dq_y * a_y
            alpha0 = dq_p * np.cross(w, a_p) + dq_y * np.cross(w_pitched, a_y)
            a0 = (
                np.cross(w, np.cross(w, pj - r))
                + np.cross(alpha0, arm)
                + np.cross(w_b, np.cross(w_b, arm))
            )

        M += m_b * jv.T @ jv + jw.T @ I_w @ jw
        bias += jv.T @ (m_b * a0) + jw.T @ (I_w @ alpha0 + np.cross(w_b, I_w @ w_b))
        grav += jv.T @ (m_b * g_vec)
        parts.append(_BodyPart(m_b, p_b, I_w, jv, jw))

    return M, bias, grav, parts


def _point_jacobian(model: RobotModel, tree, base_r, leg: str) -> np.ndarray:
    """(3, 10) chassis rates -> world velocity of the foot point, leg rigid."""
    p = tree.foot_p[leg]
    J = np.zeros((3, 10))
    J[:, 0:3] = np.eye(3)
    J[:, 3:6] = -hat(p - base_r)
    side = model.legs[leg].body
    pj = tree.joint_p[side]
    c_pitch, c_yaw = _SPINE_COLS[side]
    J[:, 6 + c_pitch] = np.cross(tree.axes[_SIDE_AXES[side][0]], p - pj)
    J[:, 6 + c_yaw] = np.cross(tree.axes[_SIDE_AXES[side][1]], p - pj)
    return J


def _pyramid_project(f, mu: float) -> np.ndarray:
    """Clip a world-frame contact force into the friction pyramid (+z normal)."""
    out = np.array(f, dtype=float)
    if out[2] <= 0.0:
        return np.zeros(3)
    cap = mu * out[2]
    tan = max(abs(out[0]), abs(out[1]))
    if tan > cap:
        out[0:2] *= cap / tan
    return out


def _neutral_stance_chassis(model: RobotModel) -> np.ndarray:
    """Standing foot positions in the chassis frame (under the hips)."""
    tree = forward_kinematics(model, BodyState(), np.zeros(N_JOINTS))
    out = np.array([tree.foot_p[leg] for leg in LEG_ORDER])
    out[:, 2] = -model.stand_height
    return out


class Simulator:
    """Physics state and integrator; knows nothing about gaits or control."""

    def __init__(self, model: RobotModel, config: SimConfig | None = None):
        self.model = model
        self.cfg = config or SimConfig()
        self.base = BodyState()
        self.joints = JointState()
        self.anchors = np.zeros((4, 3))
        self.anchored = np.zeros(4, dtype=bool)
        self.lock_spine = False
        self.t = 0.0

    def reset_standing(self) -> None:
        """Level stand at nominal height, all feet anchored under the hips."""
        model = self.model
        self.base = BodyState(r=np.array([0.0, 0.0, model.stand_height]))
        self.joints = JointState()
        tree = forward_kinematics(model, self.base, self.joints.theta)
        self.anchors = np.array([tree.foot_p[leg] for leg in LEG_ORDER])
        self.anchors[:, 2] = 0.0
        self.anchored = np.ones(4, dtype=bool)
        self.t = 0.0
        self._slave_anchored()

    def advance(self, foot_forces, tau) -> None:
        """One physics step under held actuator outputs.

        Args:
            foot_forces: (4, 3) world ground reaction forces; only rows of
                currently anchored legs are applied.
            tau: length-16 joint torques.  Spine entries drive the spine
                unless it is locked; leg entries drive swing legs only
                (stance legs are kinematically slaved).
        """
        model, dt = self.model, self.cfg.dt
        theta, dtheta = self.joints.theta, self.joints.dtheta
        f = np.asarray(foot_forces, dtype=float).reshape(4, 3)
        tau = np.asarray(tau, dtype=float)

        tree = forward_kinematics(model, self.base, theta)
        M, bias, grav, _ = _chassis_dynamics(model, tree, self.base, dtheta[0:4], self.cfg.gravity)
        Q = grav - bias
        for i, leg in enumerate(LEG_ORDER):
            if self.anchored[i] and (f[i] != 0.0).any():
                Q += _point_jacobian(model, tree, self.base.r, leg).T @ f[i]

        if self.lock_spine:
            udot = np.zeros(10)
            udot[0:6] = np.linalg.solve(M[0:6, 0:6], Q[0:6])
        else:
            # spine gearmotor drag, backward Euler so large coefficients stay
            # stable at this step size
            b = self.cfg.spine_damping
            Q[6:10] += tau[0:4] - b * dtheta[0:4]
            lhs = M
            if b != 0.0:
                lhs = M.copy()
                lhs[np.arange(6, 10), np.arange(6, 10)] += dt * b
            udot = np.linalg.solve(lhs, Q)

        # semi-implicit: bump velocities first, move poses with the new rates
        self.base.v = self.base.v + dt * udot[0:3]
        self.base.omega = self.base.omega + dt * udot[3:6]
        self.base.r = self.base.r + dt * self.base.v
        self.base.R = exp_so3(dt * self.base.omega) @ self.base.R

        if not self.lock_spine:
            dtheta[0:4] += dt * udot[6:10]
            theta[0:4] += dt * dtheta[0:4]
            for j in range(4):
                self._joint_stop(j)

        for i in range(4):
            if self.anchored[i]:
                continue
            i0 = 4 + 3 * i
            for j in range(i0, i0 + 3):
                act = model.actuators[j]
                dtheta[j] += dt * tau[j] / model.swing_reflected_inertia
                dtheta[j] = min(act.max_speed, max(-act.max_speed, dtheta[j]))
                theta[j] += dt * dtheta[j]
                self._joint_stop(j)

        self._slave_anchored()
        self.t += dt

    def _joint_stop(self, j: int) -> None:
        """Inelastic angle-limit stop: clamp position, kill outward velocity."""
        act = self.model.actuators[j]
        theta, dtheta = self.joints.theta, self.joints.dtheta
        if theta[j] < act.lo:
            theta[j] = act.lo
            dtheta[j] = max(dtheta[j], 0.0)
        elif theta[j] > act.hi:
            theta[j] = act.hi
            dtheta[j] = min(dtheta[j], 0.0)

    def _slave_anchored(self) -> None:
        """Pin anchored feet: angles from IK against the anchor, rates from
        cancelling the chassis-side point velocity.  A leg whose anchor has
        drifted out of reach is released and coasts as a swing leg."""
        model = self.model
        theta, dtheta = self.joints.theta, self.joints.dtheta
        tree = forward_kinematics(model, self.base, theta)  # hip frames only
        for i, leg in enumerate(LEG_ORDER):
            if not self.anchored[i]:
                continue
            i0 = 4 + 3 * i
            try:
                q = leg_ik(model, leg, tree.hip_R[leg], tree.hip_p[leg], self.anchors[i])
            except (UnreachableError, OutOfLimitsError):
                self.anchored[i] = False
                dtheta[i0:i0 + 3] = 0.0
                continue
            theta[i0:i0 + 3] = q

        if not self.anchored.any():
            return
        tree = forward_kinematics(model, self.base, theta)
        u = np.concatenate([self.base.v, self.base.omega, dtheta[0:4]])
        for i, leg in enumerate(LEG_ORDER):
            if not self.anchored[i]:
                continue
            i0 = 4 + 3 * i
            J = _leg_jacobian_from_tree(model, tree, theta, leg)
            v_pt = _point_jacobian(model, tree, self.base.r, leg) @ u
            try:
                dtheta[i0:i0 + 3] = np.linalg.solve(J, -v_pt)
            except np.linalg.LinAlgError:
                self.anchored[i] = False
                dtheta[i0:i0 + 3] = 0.0

    # --- diagnostics used by the conservation tests and the metrics layer ---

    def com(self) -> np.ndarray:
        tree = forward_kinematics(self.model, self.base, self.joints.theta)
        _, _, _, parts = _chassis_dynamics(self.model, tree, self.base, self.joints.dtheta[0:4])
        return sum(p.mass * p.p for p in parts) / self.model.total_mass

    def com_velocity(self) -> np.ndarray:
        tree = forward_kinematics(self.model, self.base, self.joints.theta)
        _, _, _, parts = _chassis_dynamics(self.model, tree, self.base, self.joints.dtheta[0:4])
        u = np.concatenate([self.base.v, self.base.omega, self.joints.dtheta[0:4]])
        return sum(p.mass * (p.jv @ u) for p in parts) / self.model.total_mass

    def energy(self) -> tuple[float, float]:
        """(kinetic, potential); potential is zero at ground level."""
        tree = forward_kinematics(self.model, self.base, self.joints.theta)
        M, _, _, parts = _chassis_dynamics(self.model, tree, self.base, self.joints.dtheta[0:4])
        u = np.concatenate([self.base.v, self.base.omega, self.joints.dtheta[0:4]])
        kinetic = 0.5 * float(u @ M @ u)
        potential = self.cfg.gravity * sum(p.mass * p.p[2] for p in parts)
        return kinetic, float(potential)

    def angular_momentum(self) -> np.ndarray:
        """About the instantaneous chassis COM, world frame."""
        tree = forward_kinematics(self.model, self.base, self.joints.theta)
        _, _, _, parts = _chassis_dynamics(self.model, tree, self.base, self.joints.dtheta[0:4])
        u = np.concatenate([self.base.v, self.base.omega, self.joints.dtheta[0:4]])
        c = sum(p.mass * p.p for p in parts) / self.model.total_mass
        L = np.zeros(3)
        for p in parts:
            L += p.mass * np.cross(p.p - c, p.jv @ u) + p.inertia_w @ (p.jw @ u)
        return L


def _ramp(target: float, t: float, accel: float) -> float:
    """Command shaping: constant-acceleration ramp from rest toward target."""
    return math.copysign(min(abs(target), accel * t), target)


def _tipped(base: BodyState, model: RobotModel, cfg: SimConfig) -> bool:
    R = base.R
    roll = np.arctan2(R[2, 1], R[2, 2])
    pitch = np.arcsin(min(1.0, max(-1.0, -R[2, 0])))
    return (
        abs(roll) > cfg.roll_pitch_limit
        or abs(pitch) > cfg.roll_pitch_limit
        or base.r[2] < cfg.min_height_ratio * model.stand_height
    )


class _Driver:
    """Control stack, evaluated once per control tick; outputs are held."""

    def __init__(self, sim: Simulator, schedule, params: StrategyParams, command):
        self.sim = sim
        self.model = sim.model
        self.cfg = sim.cfg
        self.sched = schedule
        self.params = params
        self.command = np.asarray(command, dtype=float)
        self.stand = schedule is None or not self.command.any()
        self.mpc = MpcController(sim.model, sim.cfg.mpc)
        self.curve = gait.SwingCurve(gait.default_swing_points(sim.cfg.lift_height))
        self.neutral_chassis = _neutral_stance_chassis(sim.model)
        self.neutral_ground = self.neutral_chassis.copy()
        self.neutral_ground[:, 2] = 0.0
        self.plan_prev = np.ones(4, dtype=bool)
        self.swing_start = np.zeros((4, 3))
        self.theta_des = np.array(
            [sim.joints.theta[4 + 3 * i : 7 + 3 * i] for i in range(4)]
        )
        self.tau = np.zeros(N_JOINTS)
        self.forces = np.zeros((4, 3))
        self.contact = np.zeros(4, dtype=bool)
        self.cmd_now = np.zeros(3)
        self.status = "optimal"
        self.iterations = 0
        self.wall_ms = 0.0
        if params.strategy == "fixed":
            sim.lock_spine = True

    def tick(self, t: float) -> None:
        sim, model, cfg = self.sim, self.model, self.cfg
        theta, dtheta = sim.joints.theta, sim.joints.dtheta

        if self.stand:
            vx = vy = wz = 0.0
        else:
            vx = _ramp(self.command[0], t, cfg.max_accel)
            vy = _ramp(self.command[1], t, cfg.max_accel)
            wz = _ramp(self.command[2], t, cfg.max_yaw_accel)
        self.cmd_now[:] = (vx, vy, wz)

        phi = 0.0 if self.stand else gait.cpg_phase(t, self.sched)
        tree = forward_kinematics(model, sim.base, theta)
        feet = np.array([tree.foot_p[leg] for leg in LEG_ORDER])

        if not self.stand:
            plan = np.array(
                [gait.in_stance(gait.leg_phase(phi, i, self.sched), self.sched) for i in range(4)]
            )
            for i in np.flatnonzero(self.plan_prev & ~plan):
                sim.anchored[i] = False
                self.swing_start[i] = feet[i]
                self.theta_des[i] = theta[4 + 3 * i : 7 + 3 * i]
            for i in np.flatnonzero(~self.plan_prev & plan):
                sim.anchors[i] = np.array([feet[i, 0], feet[i, 1], 0.0])
                sim.anchored[i] = True
            self.plan_prev = plan

        t0 = time.perf_counter() if cfg.log_timing else 0.0
        res = self.mpc.step(
            sim.base,
            feet,
            sim.anchored.copy(),
            t=t,
            schedule=None if self.stand else self.sched,
            cmd_vxy=(vx, vy),
            yaw_rate=wz,
        )
        self.wall_ms = (time.perf_counter() - t0) * 1e3 if cfg.log_timing else 0.0
        self.status = res.status
        self.iterations = res.iterations

        tau = np.zeros(N_JOINTS)
        forces = np.zeros((4, 3))
        contact = np.zeros(4, dtype=bool)
        for i, leg in enumerate(LEG_ORDER):
            i0 = 4 + 3 * i
            if sim.anchored[i]:
                J = _leg_jacobian_from_tree(model, tree, theta, leg)
                tl = joint_torques_from_force(J, -res.forces[i])
                for k in range(3):
                    tl[k] = clamp_actuator(model, i0 + k, tl[k], dtheta[i0 + k])
                try:
                    realized = np.linalg.solve(J.T, -tl)
                except np.linalg.LinAlgError:
                    realized = res.forces[i]
                forces[i] = _pyramid_project(realized, cfg.mpc.mu)
                tau[i0:i0 + 3] = tl
                contact[i] = forces[i, 2] > 0.0
            else:
                q_des, dq_des = self._swing_refs(i, leg, phi, tree, theta, vx, vy, wz)
                for k in range(3):
                    raw = model.swing_kp * (q_des[k] - theta[i0 + k]) + model.swing_kd * (
                        dq_des[k] - dtheta[i0 + k]
                    )
                    tau[i0 + k] = clamp_actuator(model, i0 + k, raw, dtheta[i0 + k])

        if self.params.strategy != "fixed":
            feet_chassis = (feet - sim.base.r) @ sim.base.R
            cmd = spine_command(
                self.params, phi, feet_chassis=feet_chassis, neutral_chassis=self.neutral_chassis
            )
            tau_ff = spine_feedforward_torque(model, sim.base, theta, forces)
            for j in range(4):
                raw = cmd.kp[j] * (cmd.theta_d[j] - theta[j]) - cmd.kd[j] * dtheta[j] + tau_ff[j]
                tau[j] = clamp_actuator(model, j, raw, dtheta[j])

        self.tau = tau
        self.forces = forces
        self.contact = contact
        sim.joints.tau[:] = tau

    def _swing_refs(self, i, leg, phi, tree, theta, vx, vy, wz):
        """Desired leg angles and rates for a foot that is off the ground."""
        sim, model = self.sim, self.model
        if self.stand:
            return self.theta_des[i], np.zeros(3)
        phi_leg = gait.leg_phase(phi, i, self.sched)
        if gait.in_stance(phi_leg, self.sched):
            # anchor was lost mid-stance; hold the last pose until lift-off
            return self.theta_des[i], np.zeros(3)

        R = sim.base.R
        Rz = rot_z(float(np.arctan2(R[1, 0], R[0, 0])))
        neutral = sim.base.r + Rz @ self.neutral_ground[i]
        neutral[2] = 0.0
        end = gait.touchdown_target(
            neutral, Rz @ np.array([vx, vy, 0.0]), wz, sim.base.r, self.sched.t_stance
        )
        pos, vel = gait.swing_target(phi_leg, self.sched, self.curve, self.swing_start[i], end)
        try:
            q_des = leg_ik(model, leg, tree.hip_R[leg], tree.hip_p[leg], pos)
            self.theta_des[i] = q_des
        except (UnreachableError, OutOfLimitsError):
            q_des = self.theta_des[i]
        try:
            dq_des = np.linalg.solve(_leg_jacobian_from_tree(model, tree, theta, leg), vel)
        except np.linalg.LinAlgError:
            dq_des = np.zeros(3)
        return q_des, dq_des


@dataclass
class EpisodeResult:
    log: SimLog
    stable: bool
    t_end: float
    meta: dict


def run_episode(
    model: RobotModel,
    gait_name=None,
    strategy: str = "fixed",
    command=(0.0, 0.0, 0.0),
    duration: float = 10.0,
    config: SimConfig | None = None,
    presets: dict | None = None,
) -> EpisodeResult:
    """Closed-loop episode from a standing start.

    Args:
        gait_name: name from the gait table, a GaitSchedule, or None to
            stand; an all-zero command also stands.
        strategy: spine strategy name; presets are resolved per gait.
        command: (vx, vy, yaw rate) targets, reached along accel-limited
            ramps.

    Returns:
        EpisodeResult; the log has one row per physics step and stops early
        if the robot falls.
    """
    cfg = config or SimConfig()
    if gait_name is None:
        sched = None
    elif isinstance(gait_name, gait.GaitSchedule):
        sched = gait_name
    else:
        sched = gait.load_gaits()[gait_name]
    params = resolve_preset(
        presets if presets is not None else load_presets(),
        strategy,
        sched.name if sched is not None else "walk",
    )

    sim = Simulator(model, cfg)
    sim.reset_standing()
    driver = _Driver(sim, sched, params, command)

    n_steps = int(round(duration / cfg.dt))
    rows = np.empty((n_steps, len(LOG_COLUMNS)))
    count = 0
    stable = True
    for k in range(n_steps):
        if k % cfg.control_divisor == 0:
            driver.tick(sim.t)
        _fill_row(rows[count], sim, driver)
        count += 1
        sim.advance(driver.forces, driver.tau)
        if _tipped(sim.base, model, cfg):
            stable = False
            break

    data = rows[:count].copy()
    _tick_average_power(data, count, cfg.control_divisor)

    meta = {
        "gait": sched.name if sched is not None else None,
        "strategy": strategy,
        "command": tuple(float(c) for c in command),
        "duration": duration,
        "dt": cfg.dt,
    }
    return EpisodeResult(
        log=SimLog(columns=LOG_COLUMNS, data=data),
        stable=stable,
        t_end=sim.t,
        meta=meta,
    )


def _tick_average_power(data, count: int, divisor: int) -> None:
    """Replace per-row power with its mean over each control tick.

    Torques are held across a tick while joint speeds keep integrating, so
    instantaneous electrical power has systematic sub-tick structure (the
    second half of a tick runs faster than the first).  Averaging within
    the tick keeps the logged energy unbiased no matter how a consumer
    decimates the rows.
    """
    if divisor <= 1 or count == 0:
        return
    full = (count // divisor) * divisor
    if full:
        blk = data[:full, 83:99].reshape(-1, divisor, 16)
        data[:full, 83:99] = blk.mean(axis=1).repeat(divisor, axis=0)
    if count > full:
        data[full:count, 83:99] = data[full:count, 83:99].mean(axis=0)


def _fill_row(row, sim: Simulator, driver: _Driver) -> None:
    b, j = sim.base, sim.joints
    row[0] = sim.t
    row[1:4] = b.r
    row[4:13] = b.R.reshape(-1)
    row[13:16] = b.v
    row[16:19] = b.omega
    row[19:35] = j.theta
    row[35:51] = j.dtheta
    row[51:67] = driver.tau
    row[67:79] = driver.forces.reshape(-1)
    row[79:83] = driver.contact
    row[83:99] = electrical_power_all(sim.model, driver.tau, j.dtheta)
    row[99:102] = driver.cmd_now
    row[102] = STATUS_CODE[driver.status]
    row[103] = driver.iterations
    row[104] = driver.wall_ms
