"""Reduced biped: fixed-topology kinematics, Jacobians, and mass model.

The plant is a 3D biped with a 6-DoF floating base and two 6-DoF legs
(hip yaw/roll/pitch, knee pitch, ankle pitch/roll) ending in massless
rectangular feet. Geometry and mass fractions come from a structured text
model file (see data/reduced_biped.txt for the schema).
"""

from __future__ import annotations

import importlib.resources
from dataclasses import dataclass, field

import numpy as np

from .geometry import Pose, rot_x, rot_y, rot_z, skew

LEFT, RIGHT = 0, 1
FOOT_FRAMES = ("left_foot", "right_foot")
FRAMES = ("left_foot", "right_foot", "torso", "com")

# per-leg joint order
JOINT_NAMES = ("hip_yaw", "hip_roll", "hip_pitch", "knee_pitch", "ankle_pitch", "ankle_roll")


class UnknownFrameError(KeyError):
    pass


@dataclass
class RobotState:
    """Floating-base configuration and velocity.

    base_vel is the mixed representation (world linear velocity, world
    angular velocity).
    """

    base_pos: np.ndarray
    base_rot: np.ndarray
    joint_pos: np.ndarray
    base_vel: np.ndarray = None
    joint_vel: np.ndarray = None

    def __post_init__(self):
        self.base_pos = np.asarray(self.base_pos, dtype=float).reshape(3)
        self.base_rot = np.asarray(self.base_rot, dtype=float).reshape(3, 3)
        self.joint_pos = np.asarray(self.joint_pos, dtype=float).ravel()
        n = self.joint_pos.size
        if self.base_vel is None:
            self.base_vel = np.zeros(6)
        if self.joint_vel is None:
            self.joint_vel = np.zeros(n)
        self.base_vel = np.asarray(self.base_vel, dtype=float).reshape(6)
        self.joint_vel = np.asarray(self.joint_vel, dtype=float).reshape(n)

    @property
    def n(self) -> int:
        return self.joint_pos.size

    @property
    def nu(self) -> np.ndarray:
        return np.concatenate([self.base_vel, self.joint_vel])

    def copy(self) -> "RobotState":
        return RobotState(self.base_pos.copy(), self.base_rot.copy(),
                          self.joint_pos.copy(), self.base_vel.copy(),
                          self.joint_vel.copy())


@dataclass
class BipedModel:
    total_mass: float = 50.0
    hip_offset_y: float = 0.09
    thigh_length: float = 0.35
    shank_length: float = 0.35
    ankle_height: float = 0.06
    foot_length: float = 0.20
    foot_width: float = 0.10
    torso_offset_z: float = 0.25
    base_com_offset: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 0.15]))
    mass_fraction_base: float = 0.60
    mass_fraction_thigh: float = 0.12
    mass_fraction_shank: float = 0.08
    joint_limit_lower: np.ndarray = None
    joint_limit_upper: np.ndarray = None
    rest_posture: np.ndarray = None
    locked: bool = False  # legs frozen at rest posture; n = 0

    def __post_init__(self):
        self.base_com_offset = np.asarray(self.base_com_offset, dtype=float).reshape(3)
        if self.rest_posture is None:
            self.rest_posture = np.tile([0.0, 0.0, -0.2, 0.4, -0.2, 0.0], 2)
        self.rest_posture = np.asarray(self.rest_posture, dtype=float).reshape(12)
        if self.joint_limit_lower is None:
            self.joint_limit_lower = np.tile([-0.8, -0.6, -1.5, 0.0, -1.2, -0.6], 2)
        if self.joint_limit_upper is None:
            self.joint_limit_upper = np.tile([0.8, 0.6, 1.2, 2.0, 1.2, 0.6], 2)
        self.joint_limit_lower = np.asarray(self.joint_limit_lower, dtype=float).reshape(12)
        self.joint_limit_upper = np.asarray(self.joint_limit_upper, dtype=float).reshape(12)
        frac = self.mass_fraction_base + 2 * (self.mass_fraction_thigh + self.mass_fraction_shank)
        if abs(frac - 1.0) > 1e-9:
            raise ValueError(f"mass fractions sum to {frac}, expected 1.0")

    @property
    def n(self) -> int:
        return 0 if self.locked else 12

    @property
    def mass_base(self) -> float:
        return self.total_mass * self.mass_fraction_base

    @property
    def mass_thigh(self) -> float:
        return self.total_mass * self.mass_fraction_thigh

    @property
    def mass_shank(self) -> float:
        return self.total_mass * self.mass_fraction_shank

    def locked_copy(self) -> "BipedModel":
        import dataclasses
        return dataclasses.replace(self, locked=True)


@dataclass
class Kinematics:
    """Everything one sweep of the chain produces for the current state."""

    foot_pose: list          # [Pose, Pose]
    torso_pose: Pose
    com: np.ndarray
    # per leg: (6,3) world joint axes and origins
    joint_axes: list
    joint_origins: list
    # per leg: [(mass, com_world, n_ancestor_joints)]
    link_coms: list
    base_pos: np.ndarray
    n: int


_EX = np.array([1.0, 0.0, 0.0])
_EY = np.array([0.0, 1.0, 0.0])
_EZ = np.array([0.0, 0.0, 1.0])
_AXES_LOCAL = (_EZ, _EX, _EY, _EY, _EY, _EX)
_ROTS = (rot_z, rot_x, rot_y, rot_y, rot_y, rot_x)


def evaluate_kinematics(model: BipedModel, state: RobotState) -> Kinematics:
    pB = state.base_pos
    RB = state.base_rot
    s = model.rest_posture if model.locked else state.joint_pos

    foot_pose = [None, None]
    joint_axes = [np.zeros((6, 3)), np.zeros((6, 3))]
    joint_origins = [np.zeros((6, 3)), np.zeros((6, 3))]
    link_coms = [[], []]

    for leg, sign in ((LEFT, 1.0), (RIGHT, -1.0)):
        q = s[6 * leg:6 * leg + 6]
        p = pB + RB @ np.array([0.0, sign * model.hip_offset_y, 0.0])
        R = RB
        # hip yaw, roll, pitch share one origin
        for j in range(3):
            joint_axes[leg][j] = R @ _AXES_LOCAL[j]
            joint_origins[leg][j] = p
            R = R @ _ROTS[j](q[j])
        link_coms[leg].append((model.mass_thigh, p + R @ np.array([0.0, 0.0, -0.5 * model.thigh_length]), 3))
        p = p + R @ np.array([0.0, 0.0, -model.thigh_length])
        joint_axes[leg][3] = R @ _EY
        joint_origins[leg][3] = p
        R = R @ rot_y(q[3])
        link_coms[leg].append((model.mass_shank, p + R @ np.array([0.0, 0.0, -0.5 * model.shank_length]), 4))
        p = p + R @ np.array([0.0, 0.0, -model.shank_length])
        joint_axes[leg][4] = R @ _EY
        joint_origins[leg][4] = p
        R = R @ rot_y(q[4])
        joint_axes[leg][5] = R @ _EX
        joint_origins[leg][5] = p
        R = R @ rot_x(q[5])
        p = p + R @ np.array([0.0, 0.0, -model.ankle_height])
        foot_pose[leg] = Pose(p, R)

    torso_pose = Pose(pB + RB @ np.array([0.0, 0.0, model.torso_offset_z]), RB)

    m = model.total_mass
    com = model.mass_base * (pB + RB @ model.base_com_offset)
    for leg in (LEFT, RIGHT):
        for ml, cl, _ in link_coms[leg]:
            com = com + ml * cl
    com = com / m

    return Kinematics(foot_pose, torso_pose, com, joint_axes, joint_origins,
                      link_coms, pB, model.n)


def forward_kinematics(model: BipedModel, state: RobotState, frame_id: str) -> Pose:
    if frame_id not in FRAMES:
        raise UnknownFrameError(frame_id)
    kin = evaluate_kinematics(model, state)
    return frame_pose(kin, frame_id)


def frame_pose(kin: Kinematics, frame_id: str) -> Pose:
    if frame_id == "left_foot":
        return kin.foot_pose[LEFT]
    if frame_id == "right_foot":
        return kin.foot_pose[RIGHT]
    if frame_id == "torso":
        return kin.torso_pose
    if frame_id == "com":
        # convention: the CoM frame does not rotate
        return Pose(kin.com, np.eye(3))
    raise UnknownFrameError(frame_id)


def _base_block(p_target: np.ndarray, p_base: np.ndarray) -> np.ndarray:
    B = np.zeros((6, 6))
    B[:3, :3] = np.eye(3)
    B[:3, 3:] = -skew(p_target - p_base)
    B[3:, 3:] = np.eye(3)
    return B


def frame_jacobian(kin: Kinematics, frame_id: str) -> np.ndarray:
    """6 x (n+6) mixed-representation Jacobian; columns [base(6) | joints(n)]."""
    n = kin.n
    pose = frame_pose(kin, frame_id)
    J = np.zeros((6, 6 + n))
    J[:, :6] = _base_block(pose.position, kin.base_pos)
    if n == 0:
        return J
    if frame_id in FOOT_FRAMES:
        leg = LEFT if frame_id == "left_foot" else RIGHT
        axes = kin.joint_axes[leg]
        orgs = kin.joint_origins[leg]
        cols = np.cross(axes, pose.position[None, :] - orgs)
        J[:3, 6 + 6 * leg:12 + 6 * leg] = cols.T
        J[3:, 6 + 6 * leg:12 + 6 * leg] = axes.T
    # torso is rigid on the base: joint columns stay zero
    return J


def jacobian(model: BipedModel, state: RobotState, frame_id: str) -> np.ndarray:
    if frame_id not in FRAMES:
        raise UnknownFrameError(frame_id)
    kin = evaluate_kinematics(model, state)
    if frame_id == "com":
        J = np.zeros((6, 6 + model.n))
        J[:3] = model_com_jacobian(model, kin)
        return J
    return frame_jacobian(kin, frame_id)


def model_com_jacobian(model: BipedModel, kin: Kinematics) -> np.ndarray:
    n = kin.n
    M = model.total_mass
    J = np.zeros((3, 6 + n))
    c_base = kin.base_pos + (kin.torso_pose.rotation @ model.base_com_offset)

    def add_point(mass, c, leg=None, nj=0):
        w = mass / M
        J[:, :3] += w * np.eye(3)
        J[:, 3:6] += w * (-skew(c - kin.base_pos))
        if leg is not None and n > 0:
            axes = kin.joint_axes[leg][:nj]
            orgs = kin.joint_origins[leg][:nj]
            cols = np.cross(axes, c[None, :] - orgs)
            J[:, 6 + 6 * leg:6 + 6 * leg + nj] += w * cols.T

    add_point(model.mass_base, c_base)
    for leg in (LEFT, RIGHT):
        for ml, cl, nj in kin.link_coms[leg]:
            add_point(ml, cl, leg, nj)
    return J


def gravity_torques(model: BipedModel, kin: Kinematics, g_vec) -> np.ndarray:
    """Static joint load from link weights (joint rows of sum m_l J_l^T g)."""
    n = kin.n
    g_vec = np.asarray(g_vec, dtype=float)
    tau = np.zeros(n)
    if n == 0:
        return tau
    for leg in (LEFT, RIGHT):
        for ml, cl, nj in kin.link_coms[leg]:
            axes = kin.joint_axes[leg][:nj]
            orgs = kin.joint_origins[leg][:nj]
            cols = np.cross(axes, cl[None, :] - orgs)  # (nj, 3)
            tau[6 * leg:6 * leg + nj] += ml * (cols @ g_vec)
    return tau


# ---------------------------------------------------------------------------
# model file IO

_SCALARS = ("total_mass", "hip_offset_y", "thigh_length", "shank_length",
            "ankle_height", "foot_length", "foot_width", "torso_offset_z",
            "mass_fraction_base", "mass_fraction_thigh", "mass_fraction_shank")
_VECTORS = {"base_com_offset": 3, "joint_limit_lower": 12,
            "joint_limit_upper": 12, "rest_posture": 12}


def load_model(path) -> BipedModel:
    """Parse the structured text model description (key value... lines)."""
    kwargs = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            key, vals = parts[0], parts[1:]
            if key in _SCALARS:
                if len(vals) != 1:
                    raise ValueError(f"{path}:{lineno}: {key} expects 1 value")
                kwargs[key] = float(vals[0])
            elif key in _VECTORS:
                if len(vals) != _VECTORS[key]:
                    raise ValueError(f"{path}:{lineno}: {key} expects {_VECTORS[key]} values")
                kwargs[key] = np.array([float(v) for v in vals])
            else:
                raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
    return BipedModel(**kwargs)


_default_model = None


def default_model() -> BipedModel:
    global _default_model
    if _default_model is None:
        ref = importlib.resources.files("walktune.data").joinpath("reduced_biped.txt")
        with importlib.resources.as_file(ref) as p:
            _default_model = load_model(p)
    return _default_model
