"""Desk-scale plant: centroidal dynamics driven by commanded forces plus a
velocity-tracked kinematic body, with injected model mismatch.

Mismatch knobs: first-order actuator lag and additive noise on the joint
velocities, jittered contact switching times, and scheduled push forces at
the CoM. The base channel follows its command exactly (it is not an
actuator). Dynamics are defined on the dt_sim grid; one control tick runs
dt_ctrl / dt_sim substeps.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .gait import RealizedSchedule
from .geometry import so3_exp
from .model import (LEFT, RIGHT, BipedModel, Kinematics, RobotState,
                    evaluate_kinematics, frame_jacobian, gravity_torques)
from .mpc import CentroidalState


@dataclass
class PushEvent:
    time: float
    force: np.ndarray
    duration: float

    def __post_init__(self):
        self.force = np.asarray(self.force, dtype=float).reshape(3)


@dataclass
class PlantParams:
    mass: float = 50.0
    gravity: float = 9.81
    dt_sim: float = 1e-3
    actuator_lag: float = 0.03
    velocity_noise_std: float = 0.01
    contact_jitter_std: float = 0.01
    pushes: list = field(default_factory=lambda: [PushEvent(8.0, np.array([0.0, 20.0, 0.0]), 0.1)])

    def __post_init__(self):
        if self.dt_sim <= 0:
            raise ValueError("dt_sim must be positive")
        if self.velocity_noise_std < 0 or self.contact_jitter_std < 0 or self.actuator_lag < 0:
            raise ValueError("noise, jitter, and lag must be non-negative")
        self.pushes = [p if isinstance(p, PushEvent) else PushEvent(*p) for p in self.pushes]

    @property
    def g_vec(self) -> np.ndarray:
        return np.array([0.0, 0.0, -self.gravity])

    def mismatch_free(self) -> "PlantParams":
        import dataclasses
        return dataclasses.replace(self, actuator_lag=0.0, velocity_noise_std=0.0,
                                   contact_jitter_std=0.0, pushes=[])


@dataclass
class PlantState:
    robot: RobotState
    centroidal: CentroidalState
    applied_forces: np.ndarray        # (2, 3) forces realized last substep
    time: float = 0.0

    def copy(self) -> "PlantState":
        return PlantState(self.robot.copy(), self.centroidal.copy(),
                          self.applied_forces.copy(), self.time)


def push_force(params: PlantParams, t: float) -> np.ndarray:
    f = np.zeros(3)
    for p in params.pushes:
        if p.time <= t < p.time + p.duration:
            f = f + p.force
    return f


def plant_step(state: PlantState, nu_cmd, forces_cmd, contact_vel_cmd, t_end: float,
               params: PlantParams, realized: RealizedSchedule, rng) -> PlantState:
    """Advance the plant from state.time to t_end on the dt_sim grid.

    nu_cmd: commanded system velocity (held over the tick); forces_cmd:
    commanded contact forces (2, 3), gated by the realized activation;
    contact_vel_cmd: commanded contact-point velocities (2, 3), applied to
    contacts the realized schedule marks inactive.
    """
    dt = params.dt_sim
    m_sub = int(round((t_end - state.time) / dt))
    nu_cmd = np.asarray(nu_cmd, dtype=float)
    forces_cmd = np.asarray(forces_cmd, dtype=float).reshape(2, 3)
    contact_vel_cmd = np.asarray(contact_vel_cmd, dtype=float).reshape(2, 3)
    n = state.robot.n

    alpha = np.exp(-dt / params.actuator_lag) if params.actuator_lag > 0 else 0.0
    sigma = params.velocity_noise_std
    noise = rng.standard_normal((m_sub, n)) if (sigma > 0 and n > 0) else None

    robot = state.robot.copy()
    cent = state.centroidal.copy()
    v_joint = robot.joint_vel.copy()
    s = robot.joint_pos.copy()
    p_base = robot.base_pos.copy()
    R_base = robot.base_rot.copy()
    v_base = nu_cmd[:6]
    cmd_joint = nu_cmd[6:]
    com = cent.com.copy()
    h = cent.momentum.copy()
    contacts = cent.contacts.copy()
    applied = state.applied_forces.copy()
    g_lin = params.mass * params.g_vec
    dR = so3_exp(dt * v_base[3:])

    t = state.time
    for j in range(m_sub):
        gam = realized.gamma(t)
        f_ext = push_force(params, t)
        applied = gam[:, None] * forces_cmd
        # centroidal block (Eq-style Euler: CoM uses the pre-update momentum)
        com_new = com + dt * h[:3] / params.mass
        dh_lin = g_lin + applied[0] + applied[1] + f_ext
        dh_ang = (np.cross(contacts[0] - com, applied[0])
                  + np.cross(contacts[1] - com, applied[1]))
        h = h + dt * np.concatenate([dh_lin, dh_ang])
        com = com_new
        contacts = contacts + dt * (1.0 - gam)[:, None] * contact_vel_cmd
        # joints: exact first-order lag plus additive velocity noise
        v_joint = alpha * v_joint + (1.0 - alpha) * cmd_joint
        if noise is not None:
            v_joint = v_joint + sigma * noise[j]
        s = s + dt * v_joint
        # base follows its command exactly
        p_base = p_base + dt * v_base[:3]
        R_base = dR @ R_base
        t += dt

    robot.joint_pos = s
    robot.joint_vel = v_joint
    robot.base_pos = p_base
    robot.base_rot = R_base
    robot.base_vel = v_base.copy()
    cent.com = com
    cent.momentum = h
    cent.contacts = contacts
    return PlantState(robot, cent, applied, t_end)


# ---------------------------------------------------------------------------
# support polygon and fall rules

def convex_hull(points: np.ndarray) -> np.ndarray:
    """Andrew monotone chain; returns CCW hull vertices (k, 2)."""
    pts = np.unique(np.asarray(points, dtype=float).reshape(-1, 2), axis=0)
    if len(pts) <= 2:
        return pts
    pts = pts[np.lexsort((pts[:, 1], pts[:, 0]))]

    def half(iterable):
        out = []
        for p in iterable:
            while len(out) >= 2 and np.cross(out[-1] - out[-2], p - out[-2]) <= 0:
                out.pop()
            out.append(p)
        return out

    lower = half(pts)
    upper = half(pts[::-1])
    return np.array(lower[:-1] + upper[:-1])


def support_polygon(foot_poses, active, model: BipedModel) -> np.ndarray:
    """CCW hull of the active feet footprints projected on the ground."""
    half_l, half_w = 0.5 * model.foot_length, 0.5 * model.foot_width
    corners_local = np.array([[half_l, half_w, 0.0], [half_l, -half_w, 0.0],
                              [-half_l, -half_w, 0.0], [-half_l, half_w, 0.0]])
    pts = []
    for i in (LEFT, RIGHT):
        if active[i]:
            pose = foot_poses[i]
            world = (pose.rotation @ corners_local.T).T + pose.position
            pts.append(world[:, :2])
    if not pts:
        return np.zeros((0, 2))
    return convex_hull(np.vstack(pts))


def signed_distance_to_polygon(point, hull: np.ndarray) -> float:
    """Positive inside a CCW convex hull, negative outside."""
    p = np.asarray(point, dtype=float).reshape(2)
    k = len(hull)
    if k == 0:
        return -np.inf
    if k == 1:
        return -float(np.linalg.norm(p - hull[0]))
    if k == 2:
        e = hull[1] - hull[0]
        t = np.clip((p - hull[0]) @ e / (e @ e), 0.0, 1.0)
        return -float(np.linalg.norm(p - (hull[0] + t * e)))
    dmin = np.inf
    outside = False
    for a in range(k):
        v0, v1 = hull[a], hull[(a + 1) % k]
        e = v1 - v0
        le = np.linalg.norm(e)
        c = float(np.cross(e, p - v0)) / le
        if c < 0:
            outside = True
        dmin = min(dmin, c)
    if not outside:
        return float(dmin)
    # outside: true distance to the boundary
    best = np.inf
    for a in range(k):
        v0, v1 = hull[a], hull[(a + 1) % k]
        e = v1 - v0
        t = np.clip((p - v0) @ e / (e @ e), 0.0, 1.0)
        best = min(best, float(np.linalg.norm(p - (v0 + t * e))))
    return -best


FALL_ZMP = "zmp"
FALL_HEIGHT = "height"
FALL_NONFINITE = "nonfinite"
FALL_CONTROLLER = "controller_failure"


@dataclass
class FallRules:
    zmp_margin: float = 0.02
    zmp_window: float = 0.05
    height_fraction: float = 0.6
    z0: float = 0.7


class FallMonitor:
    """Stateful tracker for the ZMP-persistence rule."""

    def __init__(self, rules: FallRules):
        self.rules = rules
        self.outside_since = None

    def update(self, t: float, zmp, hull, com_z: float, finite: bool):
        r = self.rules
        if not finite:
            return FALL_NONFINITE
        if com_z < r.height_fraction * r.z0:
            return FALL_HEIGHT
        if zmp is None or len(hull) == 0:
            outside = True
        else:
            outside = signed_distance_to_polygon(zmp, hull) < -r.zmp_margin
        if outside:
            if self.outside_since is None:
                self.outside_since = t
            elif t - self.outside_since > r.zmp_window:
                return FALL_ZMP
        else:
            self.outside_since = None
        return None


def fall_check(zmp, hull, com_z: float, rules: FallRules, outside_time: float = 0.0,
               finite: bool = True):
    """Single-shot version of the fall rules: outside_time is how long the
    ZMP has already been outside the inflated polygon."""
    if not finite:
        return FALL_NONFINITE
    if com_z < rules.height_fraction * rules.z0:
        return FALL_HEIGHT
    if zmp is not None and len(hull) > 0:
        if signed_distance_to_polygon(zmp, hull) < -rules.zmp_margin and outside_time > rules.zmp_window:
            return FALL_ZMP
        return None
    return FALL_ZMP if outside_time > rules.zmp_window else None


def estimate_torques(model: BipedModel, kin: Kinematics, contact_forces,
                     g_vec) -> np.ndarray:
    """Quasi-static joint load: gravity term plus contact-force term through
    the foot Jacobians (joint rows)."""
    contact_forces = np.asarray(contact_forces, dtype=float).reshape(2, 3)
    tau = gravity_torques(model, kin, g_vec)
    if kin.n == 0:
        return tau
    for i, frame in ((LEFT, "left_foot"), (RIGHT, "right_foot")):
        J = frame_jacobian(kin, frame)
        tau = tau + J[:3, 6:].T @ contact_forces[i]
    return tau
