"""Receding-horizon centroidal controller.

State: CoM position, 6D centroidal momentum, contact positions. Inputs:
per-contact forces and contact-point velocities. The product of lever arm
and force is made linear by freezing lever arms at their measured values
over the horizon, which turns each solve into a convex QP. Forces and
contact velocities then decouple: forces drive the momentum/regularization
terms under friction-pyramid constraints, velocities drive the
contact-location term under box bounds, and the solver handles the two
blocks separately.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .gait import ContactSchedule
from .qp import QpResult, solve_qp

N_CONTACTS = 2


@dataclass
class CentroidalState:
    com: np.ndarray                   # (3,) [m]
    momentum: np.ndarray              # (6,) linear + angular [kg m/s, kg m^2/s]
    contacts: np.ndarray              # (2, 3) [m]

    def __post_init__(self):
        self.com = np.asarray(self.com, dtype=float).reshape(3)
        self.momentum = np.asarray(self.momentum, dtype=float).reshape(6)
        self.contacts = np.asarray(self.contacts, dtype=float).reshape(N_CONTACTS, 3)

    def copy(self) -> "CentroidalState":
        return CentroidalState(self.com.copy(), self.momentum.copy(), self.contacts.copy())


@dataclass
class ControlOutput:
    forces: np.ndarray                # (2, 3) [N]
    velocities: np.ndarray            # (2, 3) [m/s]

    def __post_init__(self):
        self.forces = np.asarray(self.forces, dtype=float).reshape(N_CONTACTS, 3)
        self.velocities = np.asarray(self.velocities, dtype=float).reshape(N_CONTACTS, 3)


@dataclass
class MpcWeights:
    w_f: float
    w_fdot_xy: float
    w_fdot_z: float
    w_hp_xy: float
    w_hp_z: float
    w_homega: float
    w_p: float

    def __post_init__(self):
        if min(self.as_array()) <= 0.0:
            raise ValueError("MPC weights must be strictly positive")

    def as_array(self) -> np.ndarray:
        return np.array([self.w_f, self.w_fdot_xy, self.w_fdot_z, self.w_hp_xy,
                         self.w_hp_z, self.w_homega, self.w_p])

    @classmethod
    def from_array(cls, a) -> "MpcWeights":
        a = np.asarray(a, dtype=float).ravel()
        if a.size != 7:
            raise ValueError("expected 7 MPC weights")
        return cls(*a)

    @property
    def momentum_diag(self) -> np.ndarray:
        return np.array([self.w_hp_xy, self.w_hp_xy, self.w_hp_z,
                         self.w_homega, self.w_homega, self.w_homega])

    @property
    def force_rate_diag(self) -> np.ndarray:
        return np.array([self.w_fdot_xy, self.w_fdot_xy, self.w_fdot_z])


@dataclass
class MpcConfig:
    horizon: int = 15
    dt: float = 0.1
    friction: float = 0.7
    cone_facets: int = 4
    mass: float = 50.0
    gravity: float = 9.81
    fz_max: float = None          # default 4 m g
    v_max: float = 1.0
    # fixed quadratic effort on contact velocities; gives the tunable
    # contact-location weight a rate-vs-accuracy trade to act against
    v_effort: float = 1.0

    def __post_init__(self):
        if self.horizon < 2 or self.dt <= 0 or self.friction <= 0:
            raise ValueError("invalid MPC configuration")
        if self.cone_facets != 4:
            raise ValueError("only the 4-facet pyramid is implemented")
        if self.fz_max is None:
            self.fz_max = 4.0 * self.mass * self.gravity

    @property
    def g_vec(self) -> np.ndarray:
        return np.array([0.0, 0.0, -self.gravity])


@dataclass
class MpcWindow:
    """Schedule slice the solver sees: activations for input steps 0..N-1 and
    nominal contact positions for state steps 1..N."""

    gamma: np.ndarray                 # (N, 2) in {0, 1}
    p_nominal: np.ndarray             # (N, 2, 3)

    def __post_init__(self):
        self.gamma = np.asarray(self.gamma, dtype=float)
        self.p_nominal = np.asarray(self.p_nominal, dtype=float)
        if np.any(self.gamma.sum(axis=1) < 1):
            raise ValueError("schedule window leaves all contacts inactive")


def window_from_schedule(schedule: ContactSchedule, t: float, config: MpcConfig) -> MpcWindow:
    N = config.horizon
    gamma = np.zeros((N, N_CONTACTS))
    p_nom = np.zeros((N, N_CONTACTS, 3))
    for k in range(N):
        gamma[k] = schedule.gamma(t + k * config.dt)
        for i in range(N_CONTACTS):
            p_nom[k, i] = schedule.foothold(i, t + (k + 1) * config.dt).position
    return MpcWindow(gamma, p_nom)


def integrate_centroidal(state: CentroidalState, control: ControlOutput, dt: float,
                         gamma, mass: float, gravity: float = 9.81,
                         external_force=None) -> CentroidalState:
    """One Euler step of the discretized centroidal/contact/CoM dynamics.

    CoM advances with the pre-update momentum; momentum collects gravity and
    the contact wrenches about the current CoM; inactive contacts drift with
    their commanded velocities.
    """
    gamma = np.asarray(gamma, dtype=float).reshape(N_CONTACTS)
    g_vec = np.array([0.0, 0.0, -gravity])
    com_new = state.com + dt * state.momentum[:3] / mass
    dh = np.zeros(6)
    dh[:3] = mass * g_vec
    for i in range(N_CONTACTS):
        f = control.forces[i]
        dh[:3] += f
        dh[3:] += np.cross(state.contacts[i] - state.com, f)
    if external_force is not None:
        dh[:3] += np.asarray(external_force, dtype=float)
    h_new = state.momentum + dt * dh
    contacts_new = state.contacts + dt * ((1.0 - gamma)[:, None] * control.velocities)
    return CentroidalState(com_new, h_new, contacts_new)


def symmetric_force_targets(gamma: np.ndarray, mass: float, gravity: float) -> np.ndarray:
    """(N, 2, 3) per-step regularization targets: gravity split evenly over
    the active contacts (zero rows for inactive ones)."""
    gamma = np.asarray(gamma, dtype=float)
    n_act = gamma.sum(axis=1)
    fbar = np.zeros((gamma.shape[0], N_CONTACTS, 3))
    fbar[:, :, 2] = gamma * (mass * gravity / n_act)[:, None]
    return fbar


def cost_terms(forces, velocities, window: MpcWindow, state: CentroidalState,
               h_ref, weights: MpcWeights, config: MpcConfig, f_prev=None) -> dict:
    """Direct evaluation of every cost component for a full input sequence.

    Forces/velocities are (N, 2, 3); h_ref is (N, 6) for state steps 1..N.
    Used both as the reporting path and as the independent check of the QP
    objective.
    """
    forces = np.asarray(forces, dtype=float)
    velocities = np.asarray(velocities, dtype=float)
    h_ref = np.asarray(h_ref, dtype=float)
    N = config.horizon
    if forces.shape != (N, N_CONTACTS, 3) or velocities.shape != (N, N_CONTACTS, 3):
        raise ValueError("input sequence length does not match the horizon")
    if h_ref.shape != (N, 6) or window.gamma.shape[0] != N:
        raise ValueError("reference length does not match the horizon")

    fbar = symmetric_force_targets(window.gamma, config.mass, config.gravity)
    if f_prev is None:
        f_prev = fbar[0]
    f_prev = np.asarray(f_prev, dtype=float).reshape(N_CONTACTS, 3)

    wd = weights.force_rate_diag
    wh = weights.momentum_diag

    psi_f = float(weights.w_f * np.sum(window.gamma[:, :, None] * (forces - fbar) ** 2))
    prev = np.concatenate([f_prev[None], forces[:-1]], axis=0)
    psi_fdot = float(np.sum(wd[None, None, :] * (forces - prev) ** 2))

    # roll the frozen-lever momentum model forward
    r = state.contacts - state.com[None, :]
    psi_h = 0.0
    h = state.momentum.copy()
    g6 = np.zeros(6)
    g6[:3] = config.mass * config.g_vec
    for k in range(N):
        dh = g6.copy()
        for i in range(N_CONTACTS):
            f = window.gamma[k, i] * forces[k, i]
            dh[:3] += f
            dh[3:] += np.cross(r[i], f)
        h = h + config.dt * dh
        e = h - h_ref[k]
        psi_h += float(np.sum(wh * e * e))

    psi_p = 0.0
    p = state.contacts.copy()
    for k in range(N):
        p = p + config.dt * (1.0 - window.gamma[k])[:, None] * velocities[k]
        psi_p += float(weights.w_p * np.sum((p - window.p_nominal[k]) ** 2))
        psi_p += float(config.v_effort * np.sum(((1.0 - window.gamma[k])[:, None]
                                                 * velocities[k]) ** 2))

    total = psi_f + psi_fdot + psi_h + psi_p
    return {"psi_f": psi_f, "psi_fdot": psi_fdot, "psi_h": psi_h,
            "psi_p": psi_p, "total": total}


@dataclass
class MpcSolution:
    output: ControlOutput
    forces: np.ndarray                # (N, 2, 3)
    velocities: np.ndarray            # (N, 2, 3)
    h_pred: np.ndarray                # (N+1, 6), index 0 = measured
    com_pred: np.ndarray              # (N+1, 3)
    contacts_pred: np.ndarray         # (N+1, 2, 3)
    cost: float
    kkt_residual: float
    iterations: int
    qp_force: QpResult = None
    qp_velocity: list = field(default_factory=list)


class MpcQpMatrices:
    """Assembled condensed QP (diagnostics and invariant checks)."""

    def __init__(self, H, g, C, d, const, f_slots, v_slots):
        self.H, self.g, self.C, self.d = H, g, C, d
        self.constant = const
        self.f_slots = f_slots        # list of (k, i) per 3-slot force block
        self.v_slots = v_slots


def _force_qp(state, window, h_ref, weights, config, f_prev):
    N = config.horizon
    gam = window.gamma
    slots = [(k, i) for k in range(N) for i in range(N_CONTACTS) if gam[k, i] > 0.5]
    nf = 3 * len(slots)
    slot_of = {ki: 3 * n for n, ki in enumerate(slots)}

    fbar = symmetric_force_targets(gam, config.mass, config.gravity)
    if f_prev is None:
        f_prev = fbar[0]
    f_prev = np.asarray(f_prev, dtype=float).reshape(N_CONTACTS, 3)

    Q = np.zeros((nf, nf))
    c = np.zeros(nf)
    const = 0.0

    I3 = np.eye(3)
    wd = weights.force_rate_diag
    Wd = np.diag(wd)

    for (k, i) in slots:
        a = slot_of[(k, i)]
        Q[a:a + 3, a:a + 3] += weights.w_f * I3
        c[a:a + 3] += -2.0 * weights.w_f * fbar[k, i]
        const += weights.w_f * float(fbar[k, i] @ fbar[k, i])

    for k in range(N):
        for i in range(N_CONTACTS):
            cur = slot_of.get((k, i))
            if k == 0:
                prev = None
                pf = f_prev[i]
            else:
                prev = slot_of.get((k - 1, i))
                pf = None
            if cur is not None and prev is not None:
                Q[cur:cur + 3, cur:cur + 3] += Wd
                Q[prev:prev + 3, prev:prev + 3] += Wd
                Q[cur:cur + 3, prev:prev + 3] += -Wd
                Q[prev:prev + 3, cur:cur + 3] += -Wd
            elif cur is not None:
                Q[cur:cur + 3, cur:cur + 3] += Wd
                if pf is not None:
                    c[cur:cur + 3] += -2.0 * wd * pf
                    const += float(wd @ (pf * pf))
            elif prev is not None:
                Q[prev:prev + 3, prev:prev + 3] += Wd
            elif pf is not None:
                const += float(wd @ (pf * pf))

    # momentum tracking through the cumulative frozen-lever map
    r = state.contacts - state.com[None, :]
    B = np.zeros((N_CONTACTS, 6, 3))
    for i in range(N_CONTACTS):
        B[i, :3] = I3
        B[i, 3, 1] = -r[i, 2]
        B[i, 3, 2] = r[i, 1]
        B[i, 4, 0] = r[i, 2]
        B[i, 4, 2] = -r[i, 0]
        B[i, 5, 0] = -r[i, 1]
        B[i, 5, 1] = r[i, 0]

    M = np.zeros((6 * N, nf))
    for (j, i) in slots:
        a = slot_of[(j, i)]
        M[6 * j:, a:a + 3] = np.tile(config.dt * B[i], (N - j, 1))
    g6 = np.zeros(6)
    g6[:3] = config.mass * config.g_vec
    ks = np.arange(1, N + 1)
    e0 = (state.momentum[None, :] + ks[:, None] * config.dt * g6[None, :]
          - np.asarray(h_ref, dtype=float))
    wh = weights.momentum_diag
    Wfull = np.tile(wh, N)
    Q += (M * Wfull[:, None]).T @ M
    c += 2.0 * M.T @ (Wfull * e0.ravel())
    const += float(np.sum(wh[None, :] * e0 * e0))

    # friction pyramid, unilateral bound, and ceiling per active (k, i)
    mu = config.friction
    rows = []
    rhs = []
    for (k, i) in slots:
        a = slot_of[(k, i)]
        base = np.zeros((6, nf))
        base[0, a] = 1.0
        base[0, a + 2] = -mu
        base[1, a] = -1.0
        base[1, a + 2] = -mu
        base[2, a + 1] = 1.0
        base[2, a + 2] = -mu
        base[3, a + 1] = -1.0
        base[3, a + 2] = -mu
        base[4, a + 2] = -1.0
        base[5, a + 2] = 1.0
        rows.append(base)
        rhs.extend([0.0, 0.0, 0.0, 0.0, 0.0, config.fz_max])
    C = np.vstack(rows) if rows else np.zeros((0, nf))
    d = np.array(rhs)
    return Q, c, C, d, const, slots


def _velocity_qp(state, window, weights, config):
    """Per-contact contact-location QPs (fully decoupled from the forces)."""
    N = config.horizon
    gam = window.gamma
    parts = []
    for i in range(N_CONTACTS):
        ks = [k for k in range(N) if gam[k, i] < 0.5]
        nv = 3 * len(ks)
        slot_of = {k: 3 * n for n, k in enumerate(ks)}
        Q = np.zeros((nv, nv))
        c = np.zeros(nv)
        const = 0.0
        M = np.zeros((3 * N, nv))
        for k in ks:
            a = slot_of[k]
            M[3 * k:, a:a + 3] = np.tile(config.dt * np.eye(3), (N - k, 1))
        e0 = state.contacts[i][None, :] - window.p_nominal[:, i, :]
        Q += weights.w_p * M.T @ M
        c += 2.0 * weights.w_p * M.T @ e0.ravel()
        const += weights.w_p * float(np.sum(e0 * e0))
        Q += config.v_effort * np.eye(nv)
        C = np.vstack([np.eye(nv), -np.eye(nv)]) if nv else np.zeros((0, 0))
        d = np.full(2 * nv, config.v_max)
        parts.append((Q, c, C, d, const, ks, slot_of))
    return parts


def assemble_qp(state: CentroidalState, window: MpcWindow, h_ref,
                weights: MpcWeights, config: MpcConfig, f_prev=None) -> MpcQpMatrices:
    """Full condensed QP in standard form (block-diagonal across the force
    and per-contact velocity groups)."""
    Qf, cf, Cf, df, kf, slots = _force_qp(state, window, h_ref, weights, config, f_prev)
    parts = _velocity_qp(state, window, weights, config)
    sizes = [Qf.shape[0]] + [p[0].shape[0] for p in parts]
    n = sum(sizes)
    H = np.zeros((n, n))
    g = np.zeros(n)
    const = kf
    Cs, ds = [], []
    off = 0
    blocks = [(Qf, cf, Cf, df)] + [(p[0], p[1], p[2], p[3]) for p in parts]
    for bn, (Q, c, C, d) in enumerate(blocks):
        m = Q.shape[0]
        H[off:off + m, off:off + m] = 2.0 * Q
        g[off:off + m] = c
        if C.shape[0]:
            Cw = np.zeros((C.shape[0], n))
            Cw[:, off:off + m] = C
            Cs.append(Cw)
            ds.append(d)
        off += m
    for p in parts:
        const += p[4]
    Cfull = np.vstack(Cs) if Cs else np.zeros((0, n))
    dfull = np.concatenate(ds) if ds else np.zeros(0)
    v_slots = [(k, i) for i, p in enumerate(parts) for k in p[5]]
    return MpcQpMatrices(H, g, Cfull, dfull, const, slots, v_slots)


class MpcInfeasibleError(RuntimeError):
    """Raised when a solve fails; the rollout treats it as controller failure."""


def solve_mpc(state: CentroidalState, window: MpcWindow, h_ref,
              weights: MpcWeights, config: MpcConfig, f_prev=None) -> MpcSolution:
    from .qp import QpError, kkt_residual

    N = config.horizon
    h_ref = np.asarray(h_ref, dtype=float).reshape(N, 6)
    Qf, cf, Cf, df, _, slots = _force_qp(state, window, h_ref, weights, config, f_prev)

    forces = np.zeros((N, N_CONTACTS, 3))
    velocities = np.zeros((N, N_CONTACTS, 3))
    total_iter = 0
    try:
        rf = solve_qp(2.0 * Qf, cf, C=Cf, d=df)
    except QpError as e:
        raise MpcInfeasibleError(f"force QP failed: {e}") from e
    total_iter += rf.iterations
    for nslot, (k, i) in enumerate(slots):
        forces[k, i] = rf.x[3 * nslot:3 * nslot + 3]
    resid = kkt_residual(2.0 * Qf, cf, None, None, Cf, df, rf)

    vparts = _velocity_qp(state, window, weights, config)
    qvs = []
    for i, (Qv, cv, Cv, dv, _, ks, slot_of) in enumerate(vparts):
        if Qv.shape[0] == 0:
            qvs.append(None)
            continue
        try:
            rv = solve_qp(2.0 * Qv, cv, C=Cv, d=dv)
        except QpError as e:
            raise MpcInfeasibleError(f"velocity QP failed: {e}") from e
        total_iter += rv.iterations
        qvs.append(rv)
        resid = max(resid, kkt_residual(2.0 * Qv, cv, None, None, Cv, dv, rv))
        for k in ks:
            velocities[k, i] = rv.x[slot_of[k]:slot_of[k] + 3]

    # predictions under the same frozen-lever model the QP used
    h_pred = np.zeros((N + 1, 6))
    com_pred = np.zeros((N + 1, 3))
    contacts_pred = np.zeros((N + 1, N_CONTACTS, 3))
    h_pred[0] = state.momentum
    com_pred[0] = state.com
    contacts_pred[0] = state.contacts
    r = state.contacts - state.com[None, :]
    g6 = np.zeros(6)
    g6[:3] = config.mass * config.g_vec
    for k in range(N):
        dh = g6.copy()
        for i in range(N_CONTACTS):
            f = window.gamma[k, i] * forces[k, i]
            dh[:3] += f
            dh[3:] += np.cross(r[i], f)
        com_pred[k + 1] = com_pred[k] + config.dt * h_pred[k, :3] / config.mass
        h_pred[k + 1] = h_pred[k] + config.dt * dh
        contacts_pred[k + 1] = contacts_pred[k] + config.dt * (
            (1.0 - window.gamma[k])[:, None] * velocities[k])

    cost = cost_terms(forces, velocities, window, state, h_ref, weights, config, f_prev)
    out = ControlOutput(forces[0].copy(), velocities[0].copy())
    return MpcSolution(out, forces, velocities, h_pred, com_pred, contacts_pred,
                       cost["total"], resid, total_iter, rf, qvs)
