"""Episodic PI2 policy improvement with certified Gaussian-manifold sampling.

The learnable vector concatenates the DMP forcing weights and the two slack
channels.  Exploration noise is drawn once per episode and held constant
over time; every rollout evaluates gains through the slack construction, so
the stability certificate holds for every sample by construction.  The
torque governor contracts the gains per control step when the affine torque
command would leave the actuator box.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import plants
from .dmp import DmpParams, DmpState, fit_min_jerk, min_jerk, rollout_reference
from .errors import CertifiedFloorError, InfeasibleFloorError
from .gains import (
    CertificateReport,
    GainSchedule,
    SlackParams,
    constant_slack_params,
    integrate_cholesky_flow,
    slack_trace,
    tri_dim,
    vec_triangle_inverse,
)
from .governor import AffineTorqueSplit, TorqueLimits, beta_star_detail
from .plants import PlantModel, ReferenceSample

MODE_CERTIFIED = "certified"
MODE_UNCERTIFIED_AFTER_VIA = "uncertified-after-via"

MAX_RESAMPLE_ATTEMPTS = 100


# ---------------------------------------------------------------------------
# Parameter vector
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PolicyParams:
    """Learnable blocks: trajectory forcing weights and slack weights."""

    theta_traj: np.ndarray   # (M_traj, D)
    theta_d: np.ndarray      # (M_s, d_tri)
    theta_k: np.ndarray      # (M_s, d_tri)

    def flatten(self):
        return np.concatenate([self.theta_traj.ravel(), self.theta_d.ravel(),
                               self.theta_k.ravel()])

    def unflatten(self, v):
        """Rebuild a PolicyParams from a flat vector with this layout."""
        v = np.asarray(v, float)
        sizes = [self.theta_traj.size, self.theta_d.size, self.theta_k.size]
        if len(v) != sum(sizes):
            raise ValueError("flat vector length mismatch")
        a, b = sizes[0], sizes[0] + sizes[1]
        return PolicyParams(
            theta_traj=v[:a].reshape(self.theta_traj.shape),
            theta_d=v[a:b].reshape(self.theta_d.shape),
            theta_k=v[b:].reshape(self.theta_k.shape))

    def add(self, xi):
        return PolicyParams(theta_traj=self.theta_traj + xi.theta_traj,
                            theta_d=self.theta_d + xi.theta_d,
                            theta_k=self.theta_k + xi.theta_k)

    def to_dict(self):
        return {
            "layout": {
                "blocks": ["theta_traj", "theta_d", "theta_k"],
                "shapes": {
                    "theta_traj": list(self.theta_traj.shape),
                    "theta_d": list(self.theta_d.shape),
                    "theta_k": list(self.theta_k.shape),
                },
            },
            "theta_traj": self.theta_traj.tolist(),
            "theta_d": self.theta_d.tolist(),
            "theta_k": self.theta_k.tolist(),
        }

    @staticmethod
    def from_dict(d):
        return PolicyParams(theta_traj=np.array(d["theta_traj"], float),
                            theta_d=np.array(d["theta_d"], float),
                            theta_k=np.array(d["theta_k"], float))


@dataclass(frozen=True)
class ExplorationNoise:
    """Per-block exploration standard deviations and their decay."""

    sigma_traj: float = 8.0
    sigma_k: float = 1.3
    sigma_d: float = 0.6
    decay: float = 0.98
    seed: int = 0


def sample_noise(noise, policy, update, rollout_index, attempt=0):
    """Zero-mean Gaussian blocks, deterministic in (seed, update, rollout,
    attempt); the same episode noise is applied at every timestep."""
    rng = np.random.default_rng(
        [int(noise.seed), int(update), int(rollout_index), int(attempt)])
    return PolicyParams(
        theta_traj=noise.sigma_traj * rng.standard_normal(policy.theta_traj.shape),
        theta_d=noise.sigma_d * rng.standard_normal(policy.theta_d.shape),
        theta_k=noise.sigma_k * rng.standard_normal(policy.theta_k.shape))


def decay_covariance(noise):
    """Scale the exploration covariance by the decay factor (std by its root)."""
    r = math.sqrt(noise.decay)
    return replace(noise, sigma_traj=noise.sigma_traj * r,
                   sigma_k=noise.sigma_k * r, sigma_d=noise.sigma_d * r)


# ---------------------------------------------------------------------------
# Cost
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CostWeights:
    """Via-point tracking cost: stiffness and acceleration regularizers plus
    a Gaussian-kernel tracking weight centered at the via time."""

    lam_k: float = 15e-7
    lam_acc: float = 1e-3
    w0: float = 0.2
    gamma_via: float = 5e4
    t_hat: float = 0.0
    x_via: np.ndarray = field(default_factory=lambda: np.zeros(3))
    sigma_via: float = 0.25


def via_weight(t, weights):
    """w0 + gamma * exp(-(t - t_hat)^2 / (2 sigma^2))."""
    if weights.sigma_via <= 0:
        raise ValueError("sigma_via must be positive")
    g = np.exp(-((np.asarray(t, float) - weights.t_hat) ** 2)
               / (2.0 * weights.sigma_via ** 2))
    return weights.w0 + weights.gamma_via * g


def trajectory_cost(t, x, x_ref, accel, K_trace, weights):
    """Total cost and per-term breakdown over aligned traces."""
    n = len(t)
    if not (len(x) == len(x_ref) == len(accel) == len(K_trace) == n):
        raise ValueError("trace lengths differ")
    if n == 0:
        return 0.0, {"cost_K": 0.0, "cost_acc": 0.0, "cost_track": 0.0}
    cost_k = weights.lam_k * float(np.trace(K_trace, axis1=1, axis2=2).sum())
    cost_acc = weights.lam_acc * float((accel ** 2).sum())
    w = via_weight(t, weights)
    cost_track = float((w * ((x - x_ref) ** 2).sum(axis=1)).sum())
    total = cost_k + cost_acc + cost_track
    return total, {"cost_K": cost_k, "cost_acc": cost_acc,
                   "cost_track": cost_track}


# ---------------------------------------------------------------------------
# Task setup and rollout
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TaskSetup:
    """Compiled, policy-independent description of one learning task."""

    model: PlantModel
    H: np.ndarray
    alpha: float
    tgrid: np.ndarray
    dmp: DmpParams                  # theta_traj unused; carries tau/k/d/basis
    slack_basis: object
    start: np.ndarray
    goal: np.ndarray
    limits: TorqueLimits
    weights: CostWeights
    x_ref: np.ndarray               # via-substituted reference for the cost
    k_init: float = 200.0
    d_init: float = 30.0
    mode: str = MODE_CERTIFIED

    @property
    def m(self):
        return self.model.m

    @property
    def dt(self):
        return float(self.tgrid[1] - self.tgrid[0])


def build_setup(model, H, alpha, T, dt, start, goal, x_via, dmp_basis,
                slack_basis, limits, weights=None, k_init=200.0, d_init=30.0,
                mode=MODE_CERTIFIED, dmp_k=150.0, sigma_via_frac=0.05,
                via_window_sigmas=2.0):
    """Assemble a TaskSetup: nominal min-jerk reference, via time at the
    closest nominal approach, and the via-substituted cost reference."""
    tgrid = np.arange(0.0, T + dt / 2, dt)
    start = np.asarray(start, float)
    goal = np.asarray(goal, float)
    x_via = np.asarray(x_via, float)
    x_nom, _, _ = min_jerk(start, goal, T, tgrid)
    t_hat = float(tgrid[np.argmin(np.linalg.norm(x_nom - x_via, axis=1))])
    sigma_via = sigma_via_frac * T
    base = weights or CostWeights()
    weights = replace(base, t_hat=t_hat, x_via=x_via, sigma_via=sigma_via)
    x_ref = x_nom.copy()
    window = np.abs(tgrid - t_hat) <= via_window_sigmas * sigma_via
    x_ref[window] = x_via
    dmp = DmpParams(tau=T, k=dmp_k, goal=goal,
                    theta_traj=np.zeros((dmp_basis.count, len(start))),
                    basis=dmp_basis)
    return TaskSetup(model=model, H=np.asarray(H, float), alpha=alpha,
                     tgrid=tgrid, dmp=dmp, slack_basis=slack_basis,
                     start=start, goal=goal, limits=limits, weights=weights,
                     x_ref=x_ref, k_init=k_init, d_init=d_init, mode=mode)


def initial_policy(setup):
    """Min-jerk trajectory fit plus slack weights reproducing the constant
    isotropic stiffness/damping initialization."""
    theta_traj = fit_min_jerk(setup.start, setup.goal, setup.tgrid[-1],
                              setup.dmp.basis, setup.dmp, dt=setup.dt)
    sp = constant_slack_params(setup.slack_basis, setup.m, setup.d_init,
                               setup.k_init, setup.alpha, setup.H)
    return PolicyParams(theta_traj=theta_traj, theta_d=sp.theta_d,
                        theta_k=sp.theta_k)


@dataclass(frozen=True)
class Rollout:
    """One simulated episode with its certificate and cost breakdown."""

    policy: PolicyParams
    xi: PolicyParams | None
    t: np.ndarray
    x: np.ndarray
    x_d: np.ndarray
    torque: np.ndarray
    beta: np.ndarray
    K: np.ndarray
    D: np.ndarray
    lam_A: np.ndarray
    lam_C: np.ndarray
    cost: float
    cost_terms: dict
    certificate: CertificateReport
    saturation_events: list

    @property
    def beta_min(self):
        return float(self.beta.min()) if len(self.beta) else 1.0


def _gain_products(setup, policy, xi):
    """Per-step slack products and damping rate at beta = 1.

    Returns (G_D, G_K, Ddot) stacks where D1 = alpha H + G_D and
    B1 = -alpha Ddot - G_K.  In certified mode G = S S^T >= 0 always; in
    uncertified-after-via mode the quadratic map is linearized about the
    noise-free slack at the via time for t > t_hat, so the products become
    sign-indefinite (unconstrained Gaussian sampling in gain space).
    """
    tau = setup.dmp.tau
    s_all = 1.0 - setup.tgrid / tau
    sp = SlackParams(theta_d=policy.theta_d, theta_k=policy.theta_k,
                     basis=setup.slack_basis, m=setup.m)
    xi_d = None if xi is None else xi.theta_d
    xi_k = None if xi is None else xi.theta_k
    S_D, S_K, Sd_D, _ = slack_trace(sp, s_all, xi_d, xi_k)
    Sd_D = Sd_D * (-1.0 / tau)
    SDt = np.swapaxes(S_D, 1, 2)
    G_D = S_D @ SDt
    G_K = S_K @ np.swapaxes(S_K, 1, 2)
    Ddot = Sd_D @ SDt + S_D @ np.swapaxes(Sd_D, 1, 2)
    if setup.mode == MODE_UNCERTIFIED_AFTER_VIA:
        after = setup.tgrid > setup.weights.t_hat
        if np.any(after):
            s_hat = 1.0 - setup.weights.t_hat / tau
            phi = setup.slack_basis.eval(s_hat)
            Sn_D = vec_triangle_inverse(phi @ policy.theta_d, setup.m)
            Sn_K = vec_triangle_inverse(phi @ policy.theta_k, setup.m)
            lin = lambda Sn, S: Sn @ np.swapaxes(S, 1, 2) + S @ Sn.T - Sn @ Sn.T
            G_D = np.where(after[:, None, None], lin(Sn_D, S_D), G_D)
            G_K = np.where(after[:, None, None], lin(Sn_K, S_K), G_K)
            Ddot_lin = Sn_D @ np.swapaxes(Sd_D, 1, 2) + Sd_D @ Sn_D.T
            Ddot = np.where(after[:, None, None], Ddot_lin, Ddot)
    return G_D, G_K, Ddot


def rollout(policy, xi, setup, f_e=None):
    """Simulate one governed episode of the closed loop.

    Pipeline: DMP reference -> slack products -> stiffness flow at the
    sampled (beta = 1) and floor (beta = 0) gains -> per-step torque split,
    governor, and plant step -> certificate trace and cost.
    """
    tg = setup.tgrid
    n = len(tg)
    m = setup.m
    dt = setup.dt
    alpha, H = setup.alpha, setup.H
    if n == 0:
        empty = np.zeros((0, m))
        zero_eig = np.zeros(0)
        return Rollout(policy=policy, xi=xi, t=tg, x=empty, x_d=empty,
                       torque=np.zeros((0, setup.model.n)), beta=np.zeros(0),
                       K=np.zeros((0, m, m)), D=np.zeros((0, m, m)),
                       lam_A=zero_eig, lam_C=zero_eig, cost=0.0,
                       cost_terms={"cost_K": 0.0, "cost_acc": 0.0,
                                   "cost_track": 0.0},
                       certificate=CertificateReport(
                           lam_A=np.array([-np.inf]), lam_C=np.array([-np.inf]),
                           alpha=alpha),
                       saturation_events=[])

    dmp = replace(setup.dmp, theta_traj=policy.theta_traj)
    xi_traj = None if xi is None else xi.theta_traj
    x_d, xd_d, xdd_d = rollout_reference(dmp, setup.start, xi_traj, tg)

    G_D, G_K, Ddot = _gain_products(setup, policy, xi)
    D1 = alpha * H + G_D
    B1 = -alpha * Ddot - G_K
    K0_mat = setup.k_init * np.eye(m)
    clamp = setup.mode == MODE_UNCERTIFIED_AFTER_VIA
    K1 = integrate_cholesky_flow(B1, alpha, K0_mat, dt, clamp=clamp)
    K_floor = np.exp(2.0 * alpha * tg)[:, None, None] * K0_mat
    D_floor = alpha * H

    # Eigenvalues of the two certificate matrices at beta = 1; the executed
    # values scale linearly with the per-step beta.
    lamA1 = np.linalg.eigvalsh(-G_D)[..., -1]
    lamC1 = np.linalg.eigvalsh(-G_K)[..., -1]

    fe = np.zeros(m) if f_e is None else np.asarray(f_e, float)
    Hinv = np.linalg.inv(H)
    state = plants.initial_state(setup.model, *_joint_coords(setup.model,
                                                            setup.start))
    x_trace = np.empty((n, m))
    a_trace = np.empty((n, m))
    tau_trace = np.empty((n, setup.model.n))
    beta_trace = np.empty(n)
    K_exec = np.empty((n, m, m))
    D_exec = np.empty((n, m, m))
    events = []
    tmin, tmax = setup.limits.tau_min, setup.limits.tau_max
    static = setup.model.kind == plants.POINT_MASS
    if static:
        # Constant task-space terms: hoist them and fold the control law
        # into per-step matrices so the loop body is two small matvecs.
        Lam, mu, p, J = plants.operational_space_terms(setup.model, state)
        Minv = np.linalg.inv(Lam)
        ff = Lam @ (Hinv @ fe) - fe
        A = J.T @ Lam
        c_vec = J.T @ (mu + p + ff)
        u_ff = xdd_d @ A.T + c_vec                    # (n, n_joints)
        AHi = A @ Hinv
        AD1 = AHi @ D1                                # batched (n, ., m)
        AK1 = AHi @ K1
        AD0 = AHi @ D_floor
        AK0 = AHi @ K_floor
        a_bias = Minv @ (fe - np.asarray(setup.model.gravity_wrench, float))
        x_cur, v_cur = state.x, state.xdot
        for i in range(n):
            xt = x_cur - x_d[i]
            xtd = v_cur - xd_d[i]
            tau = u_ff[i] - AD1[i] @ xtd - AK1[i] @ xt
            if ((tau < tmin) | (tau > tmax)).any():
                tau0 = u_ff[i] - AD0 @ xtd - AK0[i] @ xt
                split = AffineTorqueSplit(tau0=tau0, tau1=tau - tau0)
                beta, binding = beta_star_detail(split, setup.limits)
                if binding is not None:
                    events.append({"t": float(tg[i]), "joint": binding,
                                   "beta_star": beta, "limited": True})
                tau = split.at(beta)
                K_exec[i] = K_floor[i] + beta * (K1[i] - K_floor[i])
                D_exec[i] = D_floor + beta * (D1[i] - D_floor)
                beta_trace[i] = beta
            else:
                # Unsaturated fast path: the sampled gains run as drawn.
                K_exec[i] = K1[i]
                D_exec[i] = D1[i]
                beta_trace[i] = 1.0
            x_trace[i] = x_cur
            tau_trace[i] = tau
            a = Minv @ tau + a_bias
            a_trace[i] = a
            v_cur = v_cur + a * dt
            x_cur = x_cur + v_cur * dt
    else:
        for i in range(n):
            Lam, mu, p, J = plants.operational_space_terms(setup.model, state)
            xt = state.x - x_d[i]
            xtd = state.xdot - xd_d[i]
            ff = Lam @ (Hinv @ fe) - fe
            acc1 = xdd_d[i] - Hinv @ (D1[i] @ xtd + K1[i] @ xt)
            tau = J.T @ (Lam @ acc1 + mu + p + ff)
            if ((tau < tmin) | (tau > tmax)).any():
                acc0 = xdd_d[i] - Hinv @ (D_floor @ xtd + K_floor[i] @ xt)
                tau0 = J.T @ (Lam @ acc0 + mu + p + ff)
                split = AffineTorqueSplit(tau0=tau0, tau1=tau - tau0)
                beta, binding = beta_star_detail(split, setup.limits)
                if binding is not None:
                    events.append({"t": float(tg[i]), "joint": binding,
                                   "beta_star": beta, "limited": True})
                tau = split.at(beta)
                K_exec[i] = K_floor[i] + beta * (K1[i] - K_floor[i])
                D_exec[i] = D_floor + beta * (D1[i] - D_floor)
                beta_trace[i] = beta
            else:
                K_exec[i] = K1[i]
                D_exec[i] = D1[i]
                beta_trace[i] = 1.0
            x_trace[i] = state.x
            tau_trace[i] = tau
            prev_xdot = state.xdot
            state = plants.plant_step(setup.model, state, tau, fe, dt)
            a_trace[i] = (state.xdot - prev_xdot) / dt
    if not np.all(np.isfinite(x_trace)):
        raise plants.IntegrationDivergedError("rollout state diverged")

    lam_A = beta_trace * lamA1
    lam_C = beta_trace * lamC1
    report = CertificateReport(lam_A=lam_A, lam_C=lam_C, alpha=alpha)
    cost, terms = trajectory_cost(tg, x_trace, setup.x_ref, a_trace, K_exec,
                                  setup.weights)
    return Rollout(policy=policy, xi=xi, t=tg, x=x_trace, x_d=x_d,
                   torque=tau_trace,
                   beta=beta_trace, K=K_exec, D=D_exec, lam_A=lam_A,
                   lam_C=lam_C, cost=cost, cost_terms=terms,
                   certificate=report, saturation_events=events)


def _joint_coords(model, x_start):
    """Joint coordinates placing the end effector at x_start (rest)."""
    if model.kind == plants.POINT_MASS:
        return np.asarray(x_start, float), np.zeros(model.n)
    # Two-link analytic IK, elbow-up branch.
    l1, l2 = model.link_lengths
    x, y = x_start
    r2 = x * x + y * y
    c2 = (r2 - l1 * l1 - l2 * l2) / (2 * l1 * l2)
    c2 = min(1.0, max(-1.0, c2))
    q2 = math.acos(c2)
    q1 = math.atan2(y, x) - math.atan2(l2 * math.sin(q2), l1 + l2 * c2)
    return np.array([q1, q2]), np.zeros(2)


def schedule_from_rollout(ro, setup):
    """Executed gain schedule of a rollout as a GainSchedule value object.

    Executed rates correspond to the per-step frozen beta; the jump terms
    from the stepwise beta changes are not part of the pointwise certificate.
    """
    G_D, G_K, Ddot1 = _gain_products(setup, ro.policy, ro.xi)
    beta = ro.beta[:, None, None]
    Ddot = beta * Ddot1
    B1 = -setup.alpha * Ddot1 - G_K
    Kdot = 2.0 * setup.alpha * ro.K + beta * B1
    return GainSchedule(t=ro.t, K=ro.K, D=ro.D, Kdot=Kdot, Ddot=Ddot,
                        lam_A=ro.lam_A, lam_C=ro.lam_C, alpha=setup.alpha,
                        H=setup.H)


# ---------------------------------------------------------------------------
# PI2 update and training loop
# ---------------------------------------------------------------------------

def pi2_weights(costs, beta_softmax=20.0):
    """Min-max normalized exponential weights, decreasing in cost."""
    costs = np.asarray(costs, float)
    jmin, jmax = costs.min(), costs.max()
    w = np.exp(-beta_softmax * (costs - jmin) / (jmax - jmin + 1e-12))
    return w / w.sum()


def pi2_update(policy, rollouts, beta_softmax=20.0):
    """Episodic PI2 (PI-BB) parameter update from certified rollouts."""
    if not rollouts:
        raise ValueError("need at least one rollout")
    w = pi2_weights([r.cost for r in rollouts], beta_softmax)
    flat = policy.flatten()
    step = np.zeros_like(flat)
    for wi, r in zip(w, rollouts):
        step += wi * r.xi.flatten()
    return policy.unflatten(flat + step), w


@dataclass
class UpdateRecord:
    update: int
    costs: list
    cost_terms: list
    lam_A_max: float
    lam_C_max: float
    beta_min: float
    theta: PolicyParams
    rollout_rows: list


@dataclass
class TrainResult:
    records: list
    policy: PolicyParams
    initial_mean_cost: float
    final_mean_cost: float
    saturation_events: list

    def trace_rows(self):
        """Flat per-rollout rows for the learning-trace CSV."""
        rows = []
        for rec in self.records:
            rows.extend(rec.rollout_rows)
        return rows


def train(setup, policy=None, noise=None, updates=50, rollouts_per_update=12,
          beta_softmax=20.0, rollout_hook=None):
    """Run the full learning protocol; deterministic per noise seed.

    Rollouts rejected by the certified floor or the infeasible torque floor
    are resampled with the next attempt index, never dropped.  rollout_hook,
    when given, is called with (update, rollout_index, rollout) for every
    accepted rollout.
    """
    policy = policy if policy is not None else initial_policy(setup)
    noise = noise or ExplorationNoise()
    records = []
    all_events = []
    initial_mean = None
    for u in range(updates + 1):
        evaluate_only = u == updates
        ros = []
        rows = []
        count = 1 if evaluate_only else rollouts_per_update
        for r_idx in range(count):
            ro = None
            for attempt in range(MAX_RESAMPLE_ATTEMPTS):
                xi = (None if evaluate_only
                      else sample_noise(noise, policy, u, r_idx, attempt))
                try:
                    ro = rollout(policy, xi, setup)
                    break
                except (CertifiedFloorError, InfeasibleFloorError):
                    if evaluate_only:
                        raise
                    continue
            if ro is None:
                raise CertifiedFloorError(
                    f"update {u} rollout {r_idx}: no certified sample in "
                    f"{MAX_RESAMPLE_ATTEMPTS} attempts")
            ros.append(ro)
            if rollout_hook is not None:
                rollout_hook(u, r_idx, ro)
            all_events.extend(ro.saturation_events)
            rows.append({
                "update": u, "rollout": r_idx, "cost": ro.cost,
                "cost_K": ro.cost_terms["cost_K"],
                "cost_acc": ro.cost_terms["cost_acc"],
                "cost_track": ro.cost_terms["cost_track"],
                "lamA_max": float(ro.lam_A.max()),
                "lamC_max": float(ro.lam_C.max()),
                "beta_star_min": ro.beta_min,
            })
        costs = [ro.cost for ro in ros]
        records.append(UpdateRecord(
            update=u, costs=costs,
            cost_terms=[ro.cost_terms for ro in ros],
            lam_A_max=max(float(ro.lam_A.max()) for ro in ros),
            lam_C_max=max(float(ro.lam_C.max()) for ro in ros),
            beta_min=min(ro.beta_min for ro in ros),
            theta=policy, rollout_rows=rows))
        if initial_mean is None:
            initial_mean = float(np.mean(costs))
        if evaluate_only:
            break
        policy, _ = pi2_update(policy, ros, beta_softmax)
        noise = decay_covariance(noise)
    # Mean cost of the last sampled update; falls back to the noise-free
    # evaluation when no updates were run.
    final_mean = (float(np.mean(records[-2].costs)) if len(records) > 1
                  else float(np.mean(records[-1].costs)))
    return TrainResult(records=records, policy=policy,
                       initial_mean_cost=initial_mean,
                       final_mean_cost=final_mean,
                       saturation_events=all_events)
