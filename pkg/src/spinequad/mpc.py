"""Body-level force planner: condensed QP over a short prediction horizon.

The chassis (three linked bodies, spine held at its commanded posture) is
approximated as one rigid body pushed around by stance-foot ground reaction
forces.  Each control tick we linearize the discrete prediction model around
a kinematic reference, condense the horizon into a dense QP on the stacked
forces, and hand the first-stage solution to the leg layer.

Variation coordinates are (dr, eta, dv, domega) with R = exp(hat(eta)) R_ref,
everything in world frame.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from spinequad import gait
from spinequad.lie import (
    NearPiRotationError,
    exp_so3,
    hat,
    left_jacobian,
    log_so3,
    rot_z,
)
from spinequad.model import GRAVITY, LEG_ORDER, BodyState, RobotModel, forward_kinematics
from spinequad.qp import QpInfeasibleError, QpProblem, solve_qp

EZ = np.array([0.0, 0.0, 1.0])


@dataclass(frozen=True)
class MpcConfig:
    horizon: int = 10
    dt: float = 0.025
    w_pos: float = 50.0
    w_orient: float = 50.0
    w_linvel: float = 10.0
    w_angvel: float = 5.0
    r_force: float = 1e-4
    mu: float = 1.0  # friction coefficient, pyramid approximation
    fz_min: float = 0.0
    fz_max: float = 60.0

    def state_weights(self) -> np.ndarray:
        return np.repeat([self.w_pos, self.w_orient, self.w_linvel, self.w_angvel], 3)


@dataclass
class ReferenceTrajectory:
    r: np.ndarray  # (horizon+1, 3)
    R: np.ndarray  # (horizon+1, 3, 3)
    v: np.ndarray  # (horizon+1, 3)
    omega: np.ndarray  # (horizon+1, 3)


@dataclass
class MpcResult:
    forces: np.ndarray  # (4, 3) world frame, zero rows for swing legs
    status: str  # 'optimal' | 'degraded' | 'fallback'
    iterations: int
    qp_residual: float
    reference: ReferenceTrajectory
    stance: np.ndarray  # (horizon, 4) planned contact mask


def composite_inertia(model: RobotModel) -> np.ndarray:
    """Chassis inertia about the total COM, bodies rigid at the zero posture."""
    pos = {
        "middle": model.com_middle,
        "front": model.joint_offset["front"] + model.com_offset["front"],
        "back": model.joint_offset["back"] + model.com_offset["back"],
    }
    com = sum(model.body_mass[k] * pos[k] for k in pos) / model.total_mass
    inertia = np.zeros((3, 3))
    for k in pos:
        d = pos[k] - com
        m = model.body_mass[k]
        inertia += model.body_inertia[k] + m * ((d @ d) * np.eye(3) - np.outer(d, d))
    return inertia


def predict_step(r, R, v, omega, forces, arms, mass, inertia, dt, gravity=GRAVITY):
    """One step of the prediction model.

    Semi-implicit Euler; the gyroscopic term is evaluated at the
    torque-kicked angular velocity, so the map is quadratic in the forces
    rather than affine.  ``arms`` are lever vectors from the stage anchor to
    the contact points, treated as constants of the stage.
    """
    forces = np.asarray(forces, dtype=float).reshape(-1, 3)
    arms = np.asarray(arms, dtype=float).reshape(-1, 3)
    v_next = v + dt * (forces.sum(axis=0) / mass - gravity * EZ)
    tau = np.cross(arms, forces).sum(axis=0)
    iinv = np.linalg.inv(inertia)
    w_kick = omega + dt * (iinv @ tau)
    w_next = w_kick - dt * (iinv @ np.cross(w_kick, inertia @ w_kick))
    return r + dt * v_next, exp_so3(dt * w_next) @ R, v_next, w_next


def _stage_transition(omega_ref, inertia, iinv, dt):
    """State transition A plus the pieces the force columns reuse."""
    gyro = np.eye(3) - dt * iinv @ (hat(omega_ref) @ inertia - hat(inertia @ omega_ref))
    jl_dt = dt * left_jacobian(dt * omega_ref)
    A = np.zeros((12, 12))
    A[0:3, 0:3] = np.eye(3)
    A[0:3, 6:9] = dt * np.eye(3)
    A[3:6, 3:6] = exp_so3(dt * omega_ref)
    A[3:6, 9:12] = jl_dt @ gyro
    A[6:9, 6:9] = np.eye(3)
    A[9:12, 9:12] = gyro
    return A, gyro, jl_dt


def _add_force_block(blk, arm, gyro, jl_dt, iinv, mass, dt):
    """Write one foot's 12x3 input-Jacobian block into ``blk`` (in place)."""
    bw = gyro @ (dt * (iinv @ hat(arm)))
    blk[0:3] += (dt * dt / mass) * np.eye(3)
    blk[3:6] += jl_dt @ bw
    blk[6:9] += (dt / mass) * np.eye(3)
    blk[9:12] += bw


def linearize_step(omega_ref, arms, mass, inertia, dt):
    """Jacobians (A, B) of predict_step at zero force along the reference.

    A is exact to first order in the variation coordinates; B is the exact
    derivative in the forces at u = 0 (the gyroscopic term contributes
    nothing there, which is what makes the model's curvature measurable).
    """
    arms = np.asarray(arms, dtype=float).reshape(-1, 3)
    iinv = np.linalg.inv(inertia)
    A, gyro, jl_dt = _stage_transition(np.asarray(omega_ref, dtype=float), inertia, iinv, dt)
    B = np.zeros((12, 3 * arms.shape[0]))
    for i in range(arms.shape[0]):
        _add_force_block(B[:, 3 * i:3 * i + 3], arms[i], gyro, jl_dt, iinv, mass, dt)
    return A, B


def build_reference(base: BodyState, cmd_vxy, yaw_rate, height, horizon, dt):
    """Kinematic reference rolled out from the current pose.

    Orientations are yaw-only, advancing at the commanded turn rate from the
    current heading; the velocity command is body-frame and rotates with the
    reference yaw; target height is constant.
    """
    cmd = np.asarray(cmd_vxy, dtype=float)
    psi0 = float(np.arctan2(base.R[1, 0], base.R[0, 0]))
    r = np.zeros((horizon + 1, 3))
    R = np.zeros((horizon + 1, 3, 3))
    v = np.zeros((horizon + 1, 3))
    w = np.zeros((horizon + 1, 3))
    r[0] = [base.r[0], base.r[1], height]
    for k in range(horizon + 1):
        R[k] = rot_z(psi0 + k * dt * yaw_rate)
        v[k] = R[k] @ [cmd[0], cmd[1], 0.0]
        w[k, 2] = yaw_rate
        if k:
            r[k] = r[k - 1] + dt * v[k]
    return ReferenceTrajectory(r, R, v, w)


def plan_stance(t, schedule, horizon, dt):
    """Planned contact mask (horizon, 4) at stage start times.

    No schedule means standing: everything down.
    """
    if schedule is None:
        return np.ones((horizon, 4), dtype=bool)
    out = np.zeros((horizon, 4), dtype=bool)
    for k in range(horizon):
        phi = gait.cpg_phase(t + k * dt, schedule)
        for leg in range(4):
            out[k, leg] = gait.in_stance(gait.leg_phase(phi, leg, schedule), schedule)
    return out


def _neutral_footprint(model: RobotModel) -> np.ndarray:
    """Foot position under each hip at the zero posture, chassis frame, z=0."""
    tree = forward_kinematics(model, BodyState(), np.zeros(16))
    out = np.zeros((4, 3))
    for i, leg in enumerate(LEG_ORDER):
        out[i, :2] = tree.foot_p[leg][:2]
    return out


def _reference_defects(ref: ReferenceTrajectory, inertia, iinv, dt):
    """Force-free prediction gaps along the reference, all stages at once.

    Exploits how build_reference is put together: the angular rate is
    constant and consecutive orientations differ by exp(dt*hat(omega_ref)),
    so the orientation and angular-velocity gaps are shared by every stage.
    Must match predict_step evaluated stage by stage (tested).
    """
    w_ref = ref.omega[0]
    w_next = w_ref - dt * (iinv @ np.cross(w_ref, inertia @ w_ref))
    v_next = ref.v[:-1] - dt * GRAVITY * EZ
    out = np.empty((ref.r.shape[0] - 1, 12))
    out[:, 0:3] = ref.r[:-1] + dt * v_next - ref.r[1:]
    out[:, 3:6] = log_so3(exp_so3(dt * w_next) @ exp_so3(dt * w_ref).T)
    out[:, 6:9] = v_next - ref.v[1:]
    out[:, 9:12] = w_next - ref.omega[1:]
    return out


class MpcController:
    """Receding-horizon ground-force planner for the chassis."""

    def __init__(self, model: RobotModel, config: MpcConfig | None = None):
        self.model = model
        self.config = config or MpcConfig()
        self.inertia_body = composite_inertia(model)
        self._neutral = _neutral_footprint(model)
        self._last_forces = None

    def step(
        self,
        state: BodyState,
        feet,
        stance_now,
        t: float = 0.0,
        schedule=None,
        cmd_vxy=(0.0, 0.0),
        yaw_rate: float = 0.0,
        height: float | None = None,
    ) -> MpcResult:
        """Plan ground forces; returns the first-stage solution.

        ``feet`` are current world foot positions (4, 3); ``stance_now`` is
        the measured contact state and overrides the schedule at stage 0.
        """
        cfg = self.config
        if height is None:
            height = self.model.stand_height
        stance = plan_stance(t, schedule, cfg.horizon, cfg.dt)
        stance[0] = np.asarray(stance_now, dtype=bool)
        ref = build_reference(state, cmd_vxy, yaw_rate, height, cfg.horizon, cfg.dt)

        try:
            eta0 = log_so3(state.R @ ref.R[0].T)
        except NearPiRotationError:
            # body has tumbled; planning is pointless, keep pushing the old way
            return self._fallback(ref, stance)

        feet = np.asarray(feet, dtype=float).reshape(4, 3)
        footholds = self._plan_footholds(feet, stance, ref, schedule)

        mass = self.model.total_mass
        inertia = state.R @ self.inertia_body @ state.R.T
        widths = 3 * stance.sum(axis=1)
        starts = np.concatenate([[0], np.cumsum(widths)]).astype(int)
        nu = int(starts[-1])
        if nu == 0:
            return MpcResult(np.zeros((4, 3)), "optimal", 0, 0.0, ref, stance)

        dx0 = np.concatenate(
            [state.r - ref.r[0], eta0, state.v - ref.v[0], state.omega - ref.omega[0]]
        )

        dt = cfg.dt
        iinv = np.linalg.inv(inertia)
        A, gyro, jl_dt = _stage_transition(ref.omega[0], inertia, iinv, dt)
        defects = _reference_defects(ref, inertia, iinv, dt)

        # condense: stack the input maps of every predicted state, then form
        # the cost in two matrix products
        P = np.zeros((12, nu))
        aff = dx0.copy()
        S = np.empty((12 * cfg.horizon, nu))
        affs = np.empty(12 * cfg.horizon)
        for k in range(cfg.horizon):
            P = A @ P
            arms = footholds[k][stance[k]] - ref.r[k]
            for i in range(arms.shape[0]):
                c0 = starts[k] + 3 * i
                _add_force_block(P[:, c0:c0 + 3], arms[i], gyro, jl_dt, iinv, mass, dt)
            aff = A @ aff + defects[k]
            S[12 * k:12 * (k + 1)] = P
            affs[12 * k:12 * (k + 1)] = aff
        qfull = np.tile(cfg.state_weights(), cfg.horizon)
        H = S.T @ (qfull[:, None] * S)
        H[np.diag_indices(nu)] += cfg.r_force
        grad = S.T @ (qfull * affs)

        # friction pyramid rows for every planned contact
        pattern = np.array(
            [
                [0.0, 0.0, -1.0],  # -fz <= -fz_min
                [0.0, 0.0, 1.0],  # fz <= fz_max
                [1.0, 0.0, -cfg.mu],  # |fx| <= mu fz
                [-1.0, 0.0, -cfg.mu],
                [0.0, 1.0, -cfg.mu],  # |fy| <= mu fz
                [0.0, -1.0, -cfg.mu],
            ]
        )
        n_contacts = nu // 3
        G = np.zeros((6 * n_contacts, nu))
        rows = 6 * np.arange(n_contacts)[:, None, None] + np.arange(6)[None, :, None]
        cols = 3 * np.arange(n_contacts)[:, None, None] + np.arange(3)[None, None, :]
        G[rows, cols] = pattern
        hv = np.tile([-cfg.fz_min, cfg.fz_max, 0.0, 0.0, 0.0, 0.0], n_contacts)

        try:
            sol = solve_qp(QpProblem(H, grad, G, hv))
        except QpInfeasibleError:
            return self._fallback(ref, stance)

        forces = np.zeros((4, 3))
        for i, leg in enumerate(np.flatnonzero(stance[0])):
            forces[leg] = sol.x[3 * i:3 * i + 3]
        self._last_forces = forces.copy()
        return MpcResult(
            forces,
            "degraded" if sol.degraded else "optimal",
            sol.iterations,
            sol.residual,
            ref,
            stance,
        )

    def _plan_footholds(self, feet, stance, ref, schedule):
        """Contact points per stage: measured positions while the current
        stance lasts, predicted touchdown targets after the next lift-off."""
        n = stance.shape[0]
        t_st = schedule.duty * schedule.t_cycle if schedule is not None else 0.0
        out = np.zeros((n, 4, 3))
        for leg in range(4):
            cur = feet[leg]
            for k in range(n):
                if not stance[k, leg]:
                    continue
                if k and not stance[k - 1, leg]:
                    neutral = ref.r[k] + ref.R[k] @ self._neutral[leg]
                    neutral[2] = 0.0
                    cur = gait.touchdown_target(
                        neutral, ref.v[k], ref.omega[k][2], ref.r[k], t_st
                    )
                out[k, leg] = cur
        return out

    def _fallback(self, ref, stance) -> MpcResult:
        """Last resort when the QP has no answer: reuse the previous solution,
        or spread the weight evenly over whatever is on the ground."""
        mask = np.asarray(stance[0], dtype=bool)
        forces = np.zeros((4, 3))
        if self._last_forces is not None:
            forces[mask] = self._last_forces[mask]
        elif mask.any():
            forces[mask, 2] = self.model.total_mass * GRAVITY / mask.sum()
        return MpcResult(forces, "fallback", 0, np.inf, ref, stance)
