"""ZMP-CoM control law and zero-moment-point arithmetic.

The control law turns ZMP and CoM tracking errors into a reference CoM
velocity on the walking plane. Gains act componentwise with x = y by
symmetry; the admissible ranges follow from the linear inverted pendulum:
0 < k_zmp < omega and k_com > omega, omega = sqrt(g / z0).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import Pose


@dataclass
class LipmParams:
    z0: float = 0.7
    g: float = 9.81

    def __post_init__(self):
        if self.z0 <= 0 or self.g <= 0:
            raise ValueError("z0 and g must be positive")

    @property
    def omega(self) -> float:
        return float(np.sqrt(self.g / self.z0))


@dataclass
class ZmpGains:
    k_zmp: float
    k_com: float


@dataclass
class GainValidation:
    ok: bool
    violations: list

    def __bool__(self) -> bool:
        return self.ok


def validate_gains(gains: ZmpGains, lipm: LipmParams) -> GainValidation:
    """Check both LIPM-derived inequality chains; strict at every bound."""
    w = lipm.omega
    violations = []
    if not (0.0 < gains.k_zmp < w):
        violations.append(f"k_zmp={gains.k_zmp} outside (0, {w})")
    if not (gains.k_com > w):
        violations.append(f"k_com={gains.k_com} not greater than {w}")
    return GainValidation(not violations, violations)


def com_velocity_reference(xdot_ref, x_ref, x, r_zmp_ref, r_zmp, gains: ZmpGains) -> np.ndarray:
    """Planar reference CoM velocity from feedforward plus ZMP/CoM feedback."""
    xdot_ref = np.asarray(xdot_ref, dtype=float).reshape(2)
    e_zmp = np.asarray(r_zmp_ref, dtype=float).reshape(2) - np.asarray(r_zmp, dtype=float).reshape(2)
    e_com = np.asarray(x_ref, dtype=float).reshape(2) - np.asarray(x, dtype=float).reshape(2)
    return xdot_ref - gains.k_zmp * e_zmp + gains.k_com * e_com


class ZmpUndefinedError(RuntimeError):
    """Total vertical force below the validity threshold (airborne)."""


FZ_THRESHOLD = 10.0


def compute_zmp(wrenches, poses, fz_min: float = FZ_THRESHOLD) -> np.ndarray:
    """Planar point where the horizontal moment of the summed contact wrench
    vanishes.

    wrenches: iterable of 6-vectors (force, moment about the pose origin,
    both world-aligned); poses: matching iterable of Pose (or 3-vectors).
    """
    F = np.zeros(3)
    tau = np.zeros(3)
    for wr, pose in zip(wrenches, poses):
        wr = np.asarray(wr, dtype=float).reshape(6)
        p = pose.position if isinstance(pose, Pose) else np.asarray(pose, dtype=float).reshape(3)
        F += wr[:3]
        tau += np.cross(p, wr[:3]) + wr[3:]
    if F[2] < fz_min:
        raise ZmpUndefinedError(f"vertical force {F[2]:.3f} N below threshold")
    return np.array([-tau[1] / F[2], tau[0] / F[2]])
