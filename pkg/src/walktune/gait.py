"""Contact scheduling: activation flags, nominal footholds, swing targets.

A schedule is a pair of per-contact activation timelines plus the foothold
pose active in each window. Forward and turning plans share the same
construction; both keep at least one contact active at every instant.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import Pose, rot_z
from .model import LEFT, RIGHT


@dataclass
class FootholdWindow:
    contact: int          # LEFT or RIGHT
    pose: Pose
    t_on: float
    t_off: float          # np.inf on the last window


@dataclass
class ContactSchedule:
    windows: list               # per contact: list[FootholdWindow], time ordered
    step_duration: float
    double_support_ratio: float
    duration: float             # t*
    kind: str = "forward"

    def active(self, contact: int, t: float) -> bool:
        for w in self.windows[contact]:
            if w.t_on <= t < w.t_off:
                return True
        # hold the final window beyond t*
        return t >= self.windows[contact][-1].t_on

    def gamma(self, t: float) -> np.ndarray:
        return np.array([1.0 if self.active(c, t) else 0.0 for c in (LEFT, RIGHT)])

    def foothold(self, contact: int, t: float) -> Pose:
        """Nominal foothold at time t: the active window's pose, or during a
        swing gap the pose of the upcoming window."""
        ws = self.windows[contact]
        for w in ws:
            if t < w.t_off:
                return w.pose
        return ws[-1].pose

    def window_at(self, contact: int, t: float) -> FootholdWindow:
        ws = self.windows[contact]
        for w in ws:
            if t < w.t_off:
                return w
        return ws[-1]

    def swing_interval(self, contact: int, t: float):
        """(t_liftoff, t_touchdown, prev_pose, next_pose) of the swing gap
        containing t, or None if the contact is active at t."""
        ws = self.windows[contact]
        for k, w in enumerate(ws):
            if t < w.t_on:
                prev = ws[k - 1] if k > 0 else w
                return prev.t_off, w.t_on, prev.pose, w.pose
            if t < w.t_off:
                return None
        return None

    def transitions(self):
        """All (contact, time, new_state) activation edges, time ordered."""
        ev = []
        for c in (LEFT, RIGHT):
            for k, w in enumerate(self.windows[c]):
                if k > 0:
                    ev.append((c, w.t_on, 1))
                if np.isfinite(w.t_off):
                    ev.append((c, w.t_off, 0))
        ev.sort(key=lambda e: (e[1], e[0], e[2]))
        return ev


def _build_schedule(foot_targets, step_duration, double_support_ratio,
                    n_steps, initial_stand, final_stand, start_poses, kind):
    ds = double_support_ratio * step_duration
    ss = step_duration - ds
    windows = [[], []]
    t_lift = [None, None]
    pose = [start_poses[0], start_poses[1]]
    open_t = [0.0, 0.0]
    for j in range(n_steps):
        foot = LEFT if j % 2 == 0 else RIGHT
        t0 = initial_stand + j * step_duration
        # swing occupies the first part of the step, then double support
        windows[foot].append(FootholdWindow(foot, pose[foot], open_t[foot], t0))
        pose[foot] = foot_targets[j]
        open_t[foot] = t0 + ss
    duration = initial_stand + n_steps * step_duration + final_stand
    for foot in (LEFT, RIGHT):
        windows[foot].append(FootholdWindow(foot, pose[foot], open_t[foot], np.inf))
    return ContactSchedule(windows, step_duration, double_support_ratio, duration, kind)


def make_schedule(step_length: float, step_duration: float, n_steps: int,
                  double_support_ratio: float, stance_width: float = 0.06,
                  initial_stand: float = 1.0, final_stand: float = 1.0) -> ContactSchedule:
    """Alternating forward plan starting with the left foot.

    Each step advances the swing foot by step_length beyond its previous
    foothold, so after k steps of one foot that foothold sits k*step_length
    ahead.
    """
    if step_length < 0:
        raise ValueError("step_length must be >= 0")
    if step_duration <= 0:
        raise ValueError("step_duration must be > 0")
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    if not (0.0 < double_support_ratio < 1.0):
        raise ValueError("double_support_ratio must be in (0, 1)")

    x = [0.0, 0.0]
    targets = []
    for j in range(n_steps):
        foot = LEFT if j % 2 == 0 else RIGHT
        x[foot] += step_length
        y = stance_width if foot == LEFT else -stance_width
        targets.append(Pose(np.array([x[foot], y, 0.0]), np.eye(3)))
    start = [Pose(np.array([0.0, stance_width, 0.0]), np.eye(3)),
             Pose(np.array([0.0, -stance_width, 0.0]), np.eye(3))]
    return _build_schedule(targets, step_duration, double_support_ratio,
                           n_steps, initial_stand, final_stand, start, "forward")


def make_turning_schedule(step_length: float, step_duration: float, n_steps: int,
                          double_support_ratio: float, turn_per_step: float = 0.06,
                          stance_width: float = 0.06, initial_stand: float = 1.0,
                          final_stand: float = 1.0) -> ContactSchedule:
    """Arc walking plan: heading advances by turn_per_step each step."""
    if step_duration <= 0 or n_steps < 1:
        raise ValueError("invalid turning schedule parameters")
    if not (0.0 < double_support_ratio < 1.0):
        raise ValueError("double_support_ratio must be in (0, 1)")
    center = np.zeros(2)
    heading = 0.0
    targets = []
    for j in range(n_steps):
        foot = LEFT if j % 2 == 0 else RIGHT
        heading += turn_per_step
        if j > 0:
            center = center + 0.5 * step_length * np.array([np.cos(heading), np.sin(heading)])
        R = rot_z(heading)
        lat = stance_width if foot == LEFT else -stance_width
        p = center + R[:2, :2] @ np.array([0.0, lat])
        targets.append(Pose(np.array([p[0], p[1], 0.0]), R))
    start = [Pose(np.array([0.0, stance_width, 0.0]), np.eye(3)),
             Pose(np.array([0.0, -stance_width, 0.0]), np.eye(3))]
    return _build_schedule(targets, step_duration, double_support_ratio,
                           n_steps, initial_stand, final_stand, start, "turning")


def standing_schedule(duration: float, stance_width: float = 0.06) -> ContactSchedule:
    """Both feet planted for the whole horizon (equilibrium experiments)."""
    if duration < 0:
        raise ValueError("duration must be >= 0")
    windows = [
        [FootholdWindow(LEFT, Pose(np.array([0.0, stance_width, 0.0]), np.eye(3)), 0.0, np.inf)],
        [FootholdWindow(RIGHT, Pose(np.array([0.0, -stance_width, 0.0]), np.eye(3)), 0.0, np.inf)],
    ]
    return ContactSchedule(windows, max(duration, 1e-9), 0.5, duration, "standing")


def _smoothstep(u: float):
    """Quintic 0->1 ease with zero end velocity; returns (value, derivative)."""
    u = min(1.0, max(0.0, u))
    v = u * u * u * (10.0 - 15.0 * u + 6.0 * u * u)
    dv = 30.0 * u * u * (1.0 - u) * (1.0 - u)
    return v, dv


def swing_reference(schedule: ContactSchedule, contact: int, t: float,
                    target_xy=None, target_yaw=None, apex: float = 0.04):
    """Desired pose and velocity for a foot.

    During stance this is the nominal foothold with zero velocity. During a
    swing gap the xy/yaw channels follow a quintic ease between footholds and
    z follows a sine arc with the given apex. target_xy/target_yaw override
    the landing pose (used to follow the predictive layer's adjusted contact
    location).
    """
    gap = schedule.swing_interval(contact, t)
    if gap is None:
        pose = schedule.foothold(contact, t)
        return pose, np.zeros(6)
    t0, t1, p_prev, p_next = gap
    T = max(t1 - t0, 1e-9)
    u = (t - t0) / T
    tgt = np.array(p_next.position[:2]) if target_xy is None else np.asarray(target_xy, dtype=float)
    yaw0 = float(np.arctan2(p_prev.rotation[1, 0], p_prev.rotation[0, 0]))
    yaw1 = float(np.arctan2(p_next.rotation[1, 0], p_next.rotation[0, 0])) if target_yaw is None else float(target_yaw)
    v, dv = _smoothstep(u)
    xy = p_prev.position[:2] + v * (tgt - p_prev.position[:2])
    dxy = dv / T * (tgt - p_prev.position[:2])
    z = apex * np.sin(np.pi * min(1.0, max(0.0, u)))
    dz = apex * np.pi / T * np.cos(np.pi * min(1.0, max(0.0, u))) if 0.0 <= u <= 1.0 else 0.0
    yaw = yaw0 + v * (yaw1 - yaw0)
    dyaw = dv / T * (yaw1 - yaw0)
    pose = Pose(np.array([xy[0], xy[1], z]), rot_z(yaw))
    vel = np.array([dxy[0], dxy[1], dz, 0.0, 0.0, dyaw])
    return pose, vel


def nominal_com_plan(schedule: ContactSchedule, dt: float, z0: float,
                     tau: float = 0.1, sway_scale: float = 0.6):
    """Smooth CoM plan sampled on a dt grid over [0, t*].

    The target rides a piecewise-linear path knotted on the stance feet at
    single-support midpoints, pulled toward the both-feet centroid path by
    (1 - sway_scale); a critically damped second-order filter makes it C1.
    Heading interpolates the same knots for the torso yaw reference.
    """
    n = int(round(schedule.duration / dt)) + 1
    pos = np.zeros((n, 3))
    vel = np.zeros((n, 3))
    acc = np.zeros((n, 3))
    yaw = np.zeros(n)
    dyaw = np.zeros(n)

    def centroids(t):
        pts = []
        yaws = []
        allpts = []
        for c in (LEFT, RIGHT):
            fh = schedule.foothold(c, t)
            allpts.append(fh.position[:2])
            yaws.append(np.arctan2(fh.rotation[1, 0], fh.rotation[0, 0]))
            if schedule.active(c, t):
                pts.append(fh.position[:2])
        act = np.mean(pts, axis=0) if pts else np.mean(allpts, axis=0)
        return np.mean(allpts, axis=0), act, float(np.mean(yaws))

    # Knot the path on single-support midpoints at the stance foot position:
    # the CoM then passes over each stance foot at mid-stance and the
    # support moment integrates to zero over a cycle. Double support and
    # stand phases interpolate between those knots.
    knot_t, knot_xy, knot_c, knot_yaw = [0.0], [centroids(0.0)[0]], [centroids(0.0)[0]], [centroids(0.0)[2]]
    edges = sorted({tt for _, tt, _ in schedule.transitions() if np.isfinite(tt)})
    for a, b in zip([0.0] + edges, edges + [schedule.duration]):
        if b <= a:
            continue
        mid = 0.5 * (a + b)
        act = [c for c in (LEFT, RIGHT) if schedule.active(c, mid)]
        if len(act) == 1:
            center, _, yw = centroids(mid)
            knot_t.append(mid)
            knot_xy.append(schedule.foothold(act[0], mid).position[:2])
            knot_c.append(center)
            knot_yaw.append(yw)
    t_end = schedule.duration + 10.0
    center_end, _, yaw_end = centroids(t_end)
    knot_t.append(t_end)
    knot_xy.append(center_end)
    knot_c.append(center_end)
    knot_yaw.append(yaw_end)
    knot_t = np.array(knot_t)
    knot_xy = np.array(knot_xy).reshape(-1, 2)
    knot_c = np.array(knot_c).reshape(-1, 2)
    knot_yaw = np.unwrap(np.array(knot_yaw))

    def target(t):
        p = np.array([np.interp(t, knot_t, knot_xy[:, 0]),
                      np.interp(t, knot_t, knot_xy[:, 1])])
        c = np.array([np.interp(t, knot_t, knot_c[:, 0]),
                      np.interp(t, knot_t, knot_c[:, 1])])
        yaw_now = float(np.interp(t, knot_t, knot_yaw))
        return c + sway_scale * (p - c), yaw_now

    x, _ = target(0.0)
    v = np.zeros(2)
    psi, dpsi = target(0.0)[1], 0.0
    w = 1.0 / tau
    pos[0, :2] = x
    pos[0, 2] = z0
    yaw[0] = psi
    for k in range(1, n):
        t = k * dt
        g, gpsi = target(t)
        # critically damped tracking of g
        a = w * w * (g - x) - 2.0 * w * v
        v = v + dt * a
        x = x + dt * v
        apsi = w * w * (gpsi - psi) - 2.0 * w * dpsi
        dpsi = dpsi + dt * apsi
        psi = psi + dt * dpsi
        pos[k, :2] = x
        pos[k, 2] = z0
        vel[k, :2] = v
        acc[k, :2] = a
        yaw[k] = psi
        dyaw[k] = dpsi
    return ComPlan(pos, vel, acc, yaw, dyaw, dt)


@dataclass
class ComPlan:
    pos: np.ndarray
    vel: np.ndarray
    acc: np.ndarray
    yaw: np.ndarray
    dyaw: np.ndarray
    dt: float

    def __iter__(self):  # (pos, vel, yaw, dyaw) unpacking
        return iter((self.pos, self.vel, self.yaw, self.dyaw))


def plan_angular_momentum(schedule: ContactSchedule, plan: ComPlan, mass: float,
                          gravity: float = 9.81) -> np.ndarray:
    """Angular momentum profile consistent with the nominal plan.

    At each instant the total contact force implied by the plan acceleration
    is split evenly over the scheduled active contacts at their nominal
    footholds; the resulting moment about the planned CoM integrates into
    the angular momentum the gait cannot avoid. Referencing this profile
    instead of zero keeps the momentum task from fighting walking itself.
    """
    n = len(plan.pos)
    h = np.zeros((n, 3))
    g_vec = np.array([0.0, 0.0, -gravity])
    cur = np.zeros(3)
    for k in range(n - 1):
        t = k * plan.dt
        f_total = mass * (plan.acc[k] - g_vec)
        pts = [schedule.foothold(c, t).position for c in (LEFT, RIGHT)
               if schedule.active(c, t)]
        if pts:
            # apply the total force at the point of the support segment
            # closest to the CoM projection: zero torque whenever the ZMP
            # can sit under the CoM, the pendulum torque otherwise
            if len(pts) == 1:
                zmp = pts[0]
            else:
                a, b = pts[0], pts[1]
                e = (b - a)[:2]
                denom = float(e @ e)
                lam = 0.0 if denom < 1e-12 else float(
                    np.clip((plan.pos[k][:2] - a[:2]) @ e / denom, 0.0, 1.0))
                zmp = a + lam * (b - a)
            torque = np.cross(zmp - plan.pos[k], f_total)
        else:
            torque = np.zeros(3)
        cur = cur + plan.dt * torque
        h[k + 1] = cur
    return h


@dataclass
class RealizedSchedule:
    """Nominal schedule with jittered transition times (the plant's truth)."""

    nominal: ContactSchedule
    shifts: dict = field(default_factory=dict)  # (contact, nominal_time) -> shifted time

    def active(self, contact: int, t: float) -> bool:
        state = True  # all schedules start with every contact active
        for c, tn, new in self.nominal.transitions():
            if c != contact:
                continue
            ts = self.shifts.get((c, tn), tn)
            if ts <= t:
                state = bool(new)
            else:
                break
        return state

    def gamma(self, t: float) -> np.ndarray:
        return np.array([1.0 if self.active(c, t) else 0.0 for c in (LEFT, RIGHT)])

    def edges_in(self, contact: int, t0: float, t1: float):
        """Realized activation edges for one contact inside (t0, t1]."""
        out = []
        for c, tn, new in self.nominal.transitions():
            if c != contact:
                continue
            ts = self.shifts.get((c, tn), tn)
            if t0 < ts <= t1:
                out.append((ts, bool(new)))
        out.sort()
        return out


def realize_schedule(schedule: ContactSchedule, jitter_std: float, rng) -> RealizedSchedule:
    """Draw one jittered realization; shifts are clamped to 3 sigma and to a
    quarter of the double-support window so contacts never all drop out."""
    shifts = {}
    ds = schedule.double_support_ratio * schedule.step_duration
    lim = min(3.0 * jitter_std, 0.25 * ds) if jitter_std > 0 else 0.0
    for c, tn, new in schedule.transitions():
        d = float(np.clip(rng.normal(0.0, jitter_std), -lim, lim)) if jitter_std > 0 else 0.0
        shifts[(c, tn)] = tn + d
    return RealizedSchedule(schedule, shifts)
