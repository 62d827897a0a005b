"""Closed-loop rollout: predictive layer at 10 Hz, ZMP-CoM and kinematic QP
at 100 Hz, plant at 1 kHz. Produces walked time, mean joint torques, and an
optional time-series log.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import gait
from .gait import (ContactSchedule, nominal_com_plan, plan_angular_momentum,
                   realize_schedule, swing_reference)
from .geometry import rot_z
from .model import (LEFT, RIGHT, BipedModel, RobotState, default_model,
                    evaluate_kinematics)
from .mpc import (CentroidalState, MpcConfig, MpcInfeasibleError, MpcWeights,
                  symmetric_force_targets, solve_mpc, window_from_schedule)
from .plant import (FALL_CONTROLLER, FallMonitor, FallRules, PlantParams,
                    PlantState, estimate_torques, plant_step, push_force,
                    support_polygon)
from .wbqp import (QpGains, WbqpConfig, WbqpInfeasibleError,
                   foot_velocity_reference, postural_reference, solve_wbqp,
                   torso_velocity_reference)
from .zmp import (LipmParams, ZmpGains, ZmpUndefinedError,
                  com_velocity_reference, compute_zmp, validate_gains)

OUTCOME_COMPLETED = "completed"
OUTCOME_FELL = "fell"
OUTCOME_INFEASIBLE = "infeasible"


@dataclass
class RolloutConfig:
    model: BipedModel = None
    lipm: LipmParams = field(default_factory=LipmParams)
    mpc: MpcConfig = field(default_factory=MpcConfig)
    wbqp: WbqpConfig = None
    ctrl_period: float = 0.01
    swing_apex: float = 0.04
    # momentum reference: h_ref(t+k dT) = m xdot_nom(t+k dT)
    #                                   + m com_plan_gain (x_nom(t) - x(t)).
    # The position term pins the otherwise-unregulated centroidal CoM; it is
    # held constant over the horizon so the solver does not pre-accelerate
    # toward future plan positions.
    com_plan_gain: float = 3.0
    sway_scale: float = 0.8
    # reference-generator footstep adjustment: upcoming landings shift by
    # capture_gain times the instantaneous-capture-point error, capped at
    # capture_limit [m]. With frozen lever arms the solver itself cannot
    # trade contact placement against momentum, so the adjustment happens
    # here and the contact-location task pulls the landing onto it.
    capture_gain: float = 1.0
    capture_limit: float = 0.10
    # angular reference decays from the measured value back to the plan
    # profile (per predictive step); asking for gradual return keeps large
    # transients from dominating the cost trade at any weight setting
    angular_decay: float = 0.85

    def __post_init__(self):
        if self.model is None:
            self.model = default_model()
        if self.wbqp is None:
            self.wbqp = WbqpConfig(n_joints=self.model.n,
                                   desired_posture=self.model.rest_posture[:self.model.n]
                                   if self.model.n else np.zeros(0))


@dataclass
class RolloutLog:
    time: np.ndarray
    com: np.ndarray
    zmp: np.ndarray
    momentum: np.ndarray
    forces: np.ndarray
    torques: np.ndarray
    fall: np.ndarray

    def rows(self) -> int:
        return len(self.time)


@dataclass
class RolloutResult:
    walked_time: float
    mean_torques: np.ndarray
    outcome: str
    fall_reason: str = None
    fall_time: float = None
    log: RolloutLog = None
    fall_detail: str = None

    @property
    def completed(self) -> bool:
        return self.outcome == OUTCOME_COMPLETED


LOG_COLUMNS = ("time", "com_x", "com_y", "com_z", "zmp_x", "zmp_y",
               "h_px", "h_py", "h_pz", "h_wx", "h_wy", "h_wz",
               "f_left_x", "f_left_y", "f_left_z", "f_right_x", "f_right_y", "f_right_z")


def write_log_csv(log: RolloutLog, path):
    n = log.torques.shape[1]
    cols = list(LOG_COLUMNS) + [f"tau_{j}" for j in range(n)] + ["fall"]
    with open(path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for k in range(log.rows()):
            row = ([log.time[k]] + list(log.com[k]) + list(log.zmp[k])
                   + list(log.momentum[k]) + list(log.forces[k])
                   + list(log.torques[k]) + [log.fall[k]])
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def initial_pose(model: BipedModel) -> RobotState:
    """Rest posture with foot soles exactly on the ground plane."""
    probe = RobotState(np.zeros(3), np.eye(3), model.rest_posture[:model.n] if model.n
                       else np.zeros(0))
    kin = evaluate_kinematics(model, probe)
    z = -0.5 * (kin.foot_pose[LEFT].position[2] + kin.foot_pose[RIGHT].position[2])
    return RobotState(np.array([0.0, 0.0, z]), np.eye(3), probe.joint_pos.copy())


def rollout(weights: MpcWeights, zmp_gains: ZmpGains, qp_gains: QpGains,
            schedule: ContactSchedule, plant_params: PlantParams,
            config: RolloutConfig, seed, collect_log: bool = True,
            t_max: float = None) -> RolloutResult:
    model = config.model
    n = model.n
    lipm = config.lipm

    check = validate_gains(zmp_gains, lipm)
    if not check.ok:
        return RolloutResult(0.0, np.zeros(n), OUTCOME_INFEASIBLE,
                             fall_reason="; ".join(check.violations))

    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    realized = realize_schedule(schedule, plant_params.contact_jitter_std, rng)

    dt = config.ctrl_period
    mpc_cfg = config.mpc
    mpc_every = int(round(mpc_cfg.dt / dt))
    duration = schedule.duration if t_max is None else min(schedule.duration, t_max)
    n_ticks = int(round(duration / dt))
    mass = plant_params.mass
    g_vec = plant_params.g_vec

    robot = initial_pose(model)
    kin = evaluate_kinematics(model, robot)

    # nominal plan extended past t* so horizon lookups stay defined; planned
    # height is the actual rest CoM height (the LIPM z0 is only the
    # controller's time-constant approximation)
    ext_sched = _extended(schedule, mpc_cfg.horizon * mpc_cfg.dt + 1.0)
    plan = nominal_com_plan(ext_sched, dt, kin.com[2], sway_scale=config.sway_scale)
    plan_pos, plan_vel, plan_yaw, plan_dyaw = plan
    plan_h_ang = plan_angular_momentum(ext_sched, plan, mass, plant_params.gravity)
    contacts0 = np.array([kin.foot_pose[LEFT].position, kin.foot_pose[RIGHT].position])
    cent = CentroidalState(kin.com.copy(), np.zeros(6), contacts0)
    f_init = symmetric_force_targets(np.ones((1, 2)), mass, plant_params.gravity)[0]
    plant = PlantState(robot, cent, f_init.copy(), 0.0)
    f_prev = f_init.copy()
    torso_z_rest = kin.torso_pose.position[2]

    monitor = FallMonitor(FallRules(z0=lipm.z0))
    x_star = kin.com[:2].copy()

    if collect_log:
        log = RolloutLog(np.zeros(n_ticks), np.zeros((n_ticks, 3)), np.zeros((n_ticks, 2)),
                         np.zeros((n_ticks, 6)), np.zeros((n_ticks, 6)),
                         np.zeros((n_ticks, n)), np.zeros(n_ticks))
    else:
        log = None

    tau_sum = np.zeros(n)
    tau_count = 0
    sol = None
    t_solve = 0.0
    fall_reason = None
    fall_time = None
    fall_detail = None
    ticks_done = 0

    for k in range(n_ticks):
        t = k * dt
        kin = evaluate_kinematics(model, plant.robot)

        if k % mpc_every == 0:
            window = window_from_schedule(schedule, t, mpc_cfg)
            _adjust_landings(window, plant.centroidal, schedule, t, plan_pos, plan_vel,
                             mass, lipm.omega, dt, config)
            h_ref = np.zeros((mpc_cfg.horizon, 6))
            idx_now = min(k, len(plan_pos) - 1)
            correction = config.com_plan_gain * (plan_pos[idx_now] - plant.centroidal.com)
            ang_dev = plant.centroidal.momentum[3:] - plan_h_ang[idx_now]
            for kk in range(mpc_cfg.horizon):
                idx = min(int(round((t + (kk + 1) * mpc_cfg.dt) / dt)), len(plan_vel) - 1)
                h_ref[kk, :3] = mass * (plan_vel[idx] + correction)
                h_ref[kk, 3:] = plan_h_ang[idx] + ang_dev * config.angular_decay ** (kk + 1)
            meas = plant.centroidal.copy()
            try:
                sol = solve_mpc(meas, window, h_ref, weights, mpc_cfg, f_prev)
            except MpcInfeasibleError as err:
                fall_reason, fall_time = FALL_CONTROLLER, t
                fall_detail = f"mpc: {err}"
                break
            f_prev = sol.output.forces.copy()
            t_solve = t

        f_des = sol.output.forces
        v_des = sol.output.velocities

        # --- ZMP-CoM layer ---
        try:
            r_zmp = compute_zmp([np.concatenate([plant.applied_forces[i], np.zeros(3)])
                                 for i in (LEFT, RIGHT)], plant.centroidal.contacts)
            zmp_ref = compute_zmp([np.concatenate([f_des[i], np.zeros(3)])
                                   for i in (LEFT, RIGHT)],
                                  np.array([kin.foot_pose[LEFT].position,
                                            kin.foot_pose[RIGHT].position]))
        except ZmpUndefinedError as err:
            fall_reason, fall_time = FALL_CONTROLLER, t
            fall_detail = f"zmp: {err}"
            break
        s_frac = min(1.0, (t - t_solve + dt) / mpc_cfg.dt)
        x_ref = ((1 - s_frac) * sol.com_pred[0] + s_frac * sol.com_pred[1])[:2]
        xd_ref = ((1 - s_frac) * sol.h_pred[0, :2] + s_frac * sol.h_pred[1, :2]) / mass
        x_meas = plant.centroidal.com[:2]
        xdot_star = com_velocity_reference(xd_ref, x_ref, x_meas, zmp_ref, r_zmp, zmp_gains)

        # --- whole-body layer ---
        # position feedback on the kinematic CoM: that is the quantity this
        # QP can steer, and it anchors the tracked body to the same
        # integrated reference the balance loop uses
        v_com_ref = xdot_star - qp_gains.k_com_p * (kin.com[:2] - x_star)
        x_star = x_star + dt * xdot_star

        foot_refs = []
        for i in (LEFT, RIGHT):
            target_xy = None
            gap = schedule.swing_interval(i, t)
            if gap is not None:
                k_td = int(round((gap[1] - t_solve) / mpc_cfg.dt))
                if 0 < k_td <= mpc_cfg.horizon:
                    target_xy = sol.contacts_pred[k_td, i, :2]
            pose_d, vel_d = swing_reference(schedule, i, t, target_xy=target_xy,
                                            apex=config.swing_apex)
            foot_refs.append(foot_velocity_reference(pose_d, vel_d, kin.foot_pose[i], qp_gains))

        idx = min(k, len(plan_yaw) - 1)
        torso_ref = torso_velocity_reference(
            torso_z_rest, 0.0, rot_z(plan_yaw[idx]),
            np.array([0.0, 0.0, plan_dyaw[idx]]), kin.torso_pose, qp_gains)
        posture_ref = postural_reference(plant.robot.joint_pos, config.wbqp.desired_posture,
                                         config.wbqp.postural_gain)
        try:
            wb = solve_wbqp(kin, model, v_com_ref, foot_refs, torso_ref, posture_ref,
                            config.wbqp)
        except WbqpInfeasibleError as err:
            fall_reason, fall_time = FALL_CONTROLLER, t
            fall_detail = f"wbqp: {err}"
            break

        # --- log current tick ---
        tau = estimate_torques(model, kin, plant.applied_forces, g_vec)
        tau_sum += np.abs(tau)
        tau_count += 1
        zmp_dyn = _dynamic_zmp(plant, plant_params, t)
        if collect_log:
            log.time[k] = t
            log.com[k] = plant.centroidal.com
            log.zmp[k] = zmp_dyn if zmp_dyn is not None else np.nan
            log.momentum[k] = plant.centroidal.momentum
            log.forces[k] = plant.applied_forces.ravel()
            log.torques[k] = tau
        ticks_done = k + 1

        # --- plant ---
        plant = plant_step(plant, wb.nu, f_des, v_des, t + dt, plant_params,
                           realized, rng)

        # --- fall rules at the post-step instant ---
        t_next = t + dt
        kin_next = evaluate_kinematics(model, plant.robot)
        active = [realized.active(i, t_next) for i in (LEFT, RIGHT)]
        hull = support_polygon(kin_next.foot_pose, active, model)
        zmp_dyn = _dynamic_zmp(plant, plant_params, t_next)
        finite = bool(np.all(np.isfinite(plant.centroidal.momentum))
                      and np.all(np.isfinite(plant.centroidal.com))
                      and np.all(np.isfinite(plant.robot.joint_pos)))
        reason = monitor.update(t_next, zmp_dyn, hull, plant.centroidal.com[2], finite)
        if reason is not None:
            fall_reason, fall_time = reason, t_next
            break

    if fall_reason is None:
        walked = duration
        outcome = OUTCOME_COMPLETED
    else:
        walked = fall_time
        outcome = OUTCOME_FELL
        if collect_log and ticks_done < n_ticks and ticks_done > 0:
            log.fall[ticks_done - 1] = 1.0

    mean_tau = tau_sum / max(tau_count, 1)
    if collect_log:
        log = RolloutLog(log.time[:ticks_done], log.com[:ticks_done], log.zmp[:ticks_done],
                         log.momentum[:ticks_done], log.forces[:ticks_done],
                         log.torques[:ticks_done], log.fall[:ticks_done])
    return RolloutResult(walked, mean_tau, outcome, fall_reason, fall_time, log,
                         fall_detail)


def _adjust_landings(window, cent: CentroidalState, schedule, t, plan_pos, plan_vel,
                     mass, omega, dt, config: RolloutConfig):
    """Shift upcoming nominal landings by the capture-point error.

    The instantaneous capture point x + xdot/omega is compared with the
    plan's capture point at the touchdown time; the landing windows inside
    the horizon move by the clipped difference.
    """
    if config.capture_gain == 0.0:
        return
    icp = cent.com[:2] + cent.momentum[:2] / (mass * omega)
    N = window.gamma.shape[0]
    for i in (LEFT, RIGHT):
        g = window.gamma[:, i]
        for kk in range(1, N):
            if g[kk] > 0.5 and g[kk - 1] < 0.5:
                td = t + kk * config.mpc.dt
                idx = min(int(round(td / dt)), len(plan_pos) - 1)
                icp_nom = plan_pos[idx, :2] + plan_vel[idx, :2] / omega
                shift = np.clip(config.capture_gain * (icp - icp_nom),
                                -config.capture_limit, config.capture_limit)
                end = kk
                while end < N and g[end] > 0.5:
                    end += 1
                window.p_nominal[kk - 1:end, i, 0] += shift[0]
                window.p_nominal[kk - 1:end, i, 1] += shift[1]
                break
    return


def _dynamic_zmp(plant: PlantState, params: PlantParams, t: float):
    """ZMP of the total non-gravity wrench (contact forces plus pushes at the
    CoM); None when the vertical force is below the validity threshold."""
    wrenches = [np.concatenate([plant.applied_forces[i], np.zeros(3)]) for i in (LEFT, RIGHT)]
    poses = [plant.centroidal.contacts[0], plant.centroidal.contacts[1]]
    fp = push_force(params, t)
    if np.any(fp != 0.0):
        wrenches.append(np.concatenate([fp, np.zeros(3)]))
        poses.append(plant.centroidal.com)
    try:
        return compute_zmp(wrenches, poses)
    except ZmpUndefinedError:
        return None


def _extended(schedule: ContactSchedule, extra: float) -> ContactSchedule:
    import dataclasses
    return dataclasses.replace(schedule, duration=schedule.duration + extra)
