"""Whole-body differential inverse kinematics QP.

Maps task references (planar CoM velocity, both feet twists, torso height
and orientation, posture) to a reference system velocity. CoM and feet are
hard equality constraints, joint velocities are box constrained, torso and
posture enter the cost.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import Pose, so3_log
from .model import Kinematics, frame_jacobian, model_com_jacobian
from .qp import QpError, solve_qp


@dataclass
class QpGains:
    k_foot: float
    k_foot_rot: float
    k_com_p: float
    k_torso_z: float
    k_torso_rot: float

    def as_array(self) -> np.ndarray:
        return np.array([self.k_foot, self.k_foot_rot, self.k_com_p,
                         self.k_torso_z, self.k_torso_rot])

    @classmethod
    def from_array(cls, a) -> "QpGains":
        a = np.asarray(a, dtype=float).ravel()
        if a.size != 5:
            raise ValueError("expected 5 QP gains")
        return cls(*a)


@dataclass
class WbqpConfig:
    """Fixed (non-tuned) parts of the kinematic QP."""

    n_joints: int = 12
    postural_weight: np.ndarray = None      # Lambda, diagonal
    postural_gain: np.ndarray = None        # K_s, diagonal
    desired_posture: np.ndarray = None      # s^d
    torso_weight: np.ndarray = None         # K_T, 4 channels (z + angular)
    sdot_min: np.ndarray = None
    sdot_max: np.ndarray = None

    def __post_init__(self):
        n = self.n_joints
        if self.postural_weight is None:
            self.postural_weight = np.ones(n)
        if self.postural_gain is None:
            self.postural_gain = 2.0 * np.ones(n)
        if self.desired_posture is None:
            self.desired_posture = np.zeros(n)
        if self.torso_weight is None:
            self.torso_weight = 5.0 * np.ones(4)
        if self.sdot_min is None:
            self.sdot_min = -5.0 * np.ones(n)
        if self.sdot_max is None:
            self.sdot_max = 5.0 * np.ones(n)
        for name in ("postural_weight", "postural_gain", "desired_posture",
                     "torso_weight", "sdot_min", "sdot_max"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float).ravel())
        if np.any(self.sdot_min >= self.sdot_max):
            raise ValueError("joint velocity bounds must satisfy min < max")
        if np.any(self.postural_weight <= 0) or np.any(self.torso_weight <= 0):
            raise ValueError("task weights must be positive")


def foot_velocity_reference(desired: Pose, desired_vel, measured: Pose,
                            gains: QpGains) -> np.ndarray:
    """Feedforward twist plus proportional pose correction for one foot."""
    dv = np.asarray(desired_vel, dtype=float).reshape(6)
    e_p = measured.position - desired.position
    e_r = so3_log(measured.rotation @ desired.rotation.T)
    out = np.empty(6)
    out[:3] = dv[:3] - gains.k_foot * e_p
    out[3:] = dv[3:] - gains.k_foot_rot * e_r
    return out


def torso_velocity_reference(desired_z: float, desired_zvel: float,
                             desired_rot: np.ndarray, desired_omega,
                             measured: Pose, gains: QpGains) -> np.ndarray:
    """4-channel torso reference: height velocity plus angular velocity."""
    e_z = measured.position[2] - desired_z
    e_r = so3_log(measured.rotation @ np.asarray(desired_rot, dtype=float).T)
    out = np.empty(4)
    out[0] = desired_zvel - gains.k_torso_z * e_z
    out[1:] = np.asarray(desired_omega, dtype=float).reshape(3) - gains.k_torso_rot * e_r
    return out


def postural_reference(s, s_desired, gain) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    s_desired = np.asarray(s_desired, dtype=float)
    if s.shape != s_desired.shape:
        raise ValueError("posture dimension mismatch")
    return -np.asarray(gain, dtype=float) * (s - s_desired)


def integrate_velocity(state, nu, dt: float):
    """Integrate a system velocity: joints explicitly, base orientation with
    the rotation exponential on the world angular part."""
    from .geometry import so3_exp
    from .model import RobotState

    if dt <= 0:
        raise ValueError("dt must be positive")
    nu = np.asarray(nu, dtype=float).ravel()
    n = state.n
    if nu.size != 6 + n:
        raise ValueError("velocity dimension mismatch")
    return RobotState(
        state.base_pos + dt * nu[:3],
        so3_exp(dt * nu[3:6]) @ state.base_rot,
        state.joint_pos + dt * nu[6:],
        nu[:6].copy(),
        nu[6:].copy(),
    )


class WbqpInfeasibleError(RuntimeError):
    pass


@dataclass
class WbqpSolution:
    nu: np.ndarray
    residual: float
    iterations: int


def solve_wbqp(kin: Kinematics, model, com_velocity_ref, foot_refs, torso_ref,
               posture_ref, config: WbqpConfig) -> WbqpSolution:
    """Solve (torso + posture cost) subject to CoM-xy and feet equalities and
    joint velocity bounds.

    kin: current Kinematics sweep; foot_refs: (left 6-vec, right 6-vec);
    torso_ref: 4-vec; com_velocity_ref: planar 2-vec.
    """
    n = kin.n
    nv = 6 + n

    J_com = model_com_jacobian(model, kin)[:2]
    J_lf = frame_jacobian(kin, "left_foot")
    J_rf = frame_jacobian(kin, "right_foot")
    J_t = frame_jacobian(kin, "torso")
    J_torso = np.vstack([J_t[2:3], J_t[3:]])          # z + angular rows

    A = np.vstack([J_com, J_lf, J_rf])
    b = np.concatenate([np.asarray(com_velocity_ref, dtype=float).reshape(2),
                        np.asarray(foot_refs[0], dtype=float).reshape(6),
                        np.asarray(foot_refs[1], dtype=float).reshape(6)])

    KT = config.torso_weight
    lam = config.postural_weight
    tref = np.asarray(torso_ref, dtype=float).reshape(4)
    pref = np.asarray(posture_ref, dtype=float).reshape(n)

    # cost: ||t_ref - J_torso nu||^2_KT + ||sdot - pref||^2_lam
    H = 2.0 * (J_torso.T * KT[None, :]) @ J_torso
    H[6:, 6:] += 2.0 * np.diag(lam)
    g = -2.0 * J_torso.T @ (KT * tref)
    g[6:] += -2.0 * lam * pref

    C = np.zeros((2 * n, nv))
    C[:n, 6:] = np.eye(n)
    C[n:, 6:] = -np.eye(n)
    d = np.concatenate([config.sdot_max, -config.sdot_min])

    try:
        res = solve_qp(H, g, A=A, b=b, C=C, d=d)
    except QpError as e:
        raise WbqpInfeasibleError(str(e)) from e

    nu = res.x
    # bounds are hard: snap active-bound joints exactly onto the bound
    sdot = np.clip(nu[6:], config.sdot_min, config.sdot_max)
    nu = np.concatenate([nu[:6], sdot])
    residual = float(np.max(np.abs(A @ nu - b)))
    if residual > 1e-6:
        raise WbqpInfeasibleError(f"equality residual {residual:.3e}")
    return WbqpSolution(nu, residual, res.iterations)
