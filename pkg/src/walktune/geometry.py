"""SO(3) utilities and rigid poses.

Rotations are plain 3x3 numpy arrays (world-from-body convention). The log
branch near pi picks the axis from the largest diagonal entry so reruns are
bit-identical.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ORTHONORMALITY_TOL = 1e-8


class NotARotationError(ValueError):
    """Input matrix is not orthonormal with determinant +1."""


def skew(v) -> np.ndarray:
    """Matrix A with A @ u == v x u."""
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def vee(A) -> np.ndarray:
    """Inverse of skew for a skew-symmetric matrix."""
    return np.array([A[2, 1], A[0, 2], A[1, 0]])


def is_rotation(R, tol: float = ORTHONORMALITY_TOL) -> bool:
    R = np.asarray(R)
    if R.shape != (3, 3) or not np.all(np.isfinite(R)):
        return False
    if np.max(np.abs(R @ R.T - np.eye(3))) > tol:
        return False
    return np.linalg.det(R) > 0.0


def check_rotation(R, tol: float = ORTHONORMALITY_TOL) -> np.ndarray:
    R = np.asarray(R, dtype=float)
    if not is_rotation(R, tol):
        raise NotARotationError("matrix is not a valid rotation")
    return R


def rot_x(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def so3_exp(w) -> np.ndarray:
    """Rodrigues formula; series expansion below 1e-8 rad."""
    w = np.asarray(w, dtype=float)
    th = np.linalg.norm(w)
    K = skew(w)
    if th < 1e-8:
        return np.eye(3) + K + 0.5 * (K @ K)
    a = np.sin(th) / th
    b = (1.0 - np.cos(th)) / (th * th)
    return np.eye(3) + a * K + b * (K @ K)


_PI_BRANCH_TOL = 1e-6


def so3_log(R, *, validate: bool = True) -> np.ndarray:
    """Axis-angle vector of R with angle in [0, pi].

    Near pi the axis is extracted from the column with the largest diagonal
    entry of R + I, which keeps the branch deterministic.
    """
    R = np.asarray(R, dtype=float)
    if validate:
        check_rotation(R)
    tr = R[0, 0] + R[1, 1] + R[2, 2]
    c = min(1.0, max(-1.0, 0.5 * (tr - 1.0)))
    th = np.arccos(c)
    if th < 1e-12:
        return 0.5 * vee(R - R.T)
    if th > np.pi - _PI_BRANCH_TOL:
        # R + I = 2 axis axis^T at exactly pi; largest diagonal picks the
        # best-conditioned column. arccos is ill-conditioned here, so the
        # angle is recovered from the skew part instead.
        B = R + np.eye(3)
        k = int(np.argmax(np.diag(B)))
        axis = B[:, k]
        axis = axis / np.linalg.norm(axis)
        s = 0.5 * float(vee(R - R.T) @ axis)
        if s < 0.0:
            axis, s = -axis, -s
        th = np.pi - np.arcsin(min(1.0, s))
        return th * axis
    return (th / (2.0 * np.sin(th))) * vee(R - R.T)


@dataclass
class Pose:
    """Rigid transform: position [m] plus rotation (world-from-frame)."""

    position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float).reshape(3)
        self.rotation = np.asarray(self.rotation, dtype=float).reshape(3, 3)

    def transform(self, p) -> np.ndarray:
        return self.rotation @ np.asarray(p, dtype=float) + self.position

    def compose(self, other: "Pose") -> "Pose":
        return Pose(self.transform(other.position), self.rotation @ other.rotation)

    def inverse(self) -> "Pose":
        Rt = self.rotation.T
        return Pose(-Rt @ self.position, Rt)

    def copy(self) -> "Pose":
        return Pose(self.position.copy(), self.rotation.copy())
