"""Canonical phase, normalized RBF bases, DMP transformation dynamics, and
fitting to a minimum-jerk demonstration.

The transformation dynamics are

    tau^2 m xdd = k (g - x) - tau d xd + gamma(t) f,
    f = Phi(s_t) (theta + xi),    s_t = 1 - t / tau,

with gamma(t) = s_t so the forcing vanishes at the end of the motion and
the system converges to the goal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateBasisError

ACTIVATION_FLOOR = 1e-300


def phase(t, tau):
    """Canonical phase s = 1 - t/tau on the horizon [0, tau]."""
    if not 0.0 <= t <= tau:
        raise ValueError(f"t={t} outside horizon [0, {tau}]")
    return 1.0 - t / tau


@dataclass(frozen=True)
class RbfBasis:
    """Normalized Gaussian basis over the phase interval [0, 1]."""

    centers: np.ndarray
    widths: np.ndarray
    lam_reg: float = 1e-6

    @property
    def count(self):
        return len(self.centers)

    def raw(self, s):
        """Unnormalized activations Psi_j(s); s scalar or array."""
        s = np.asarray(s, float)[..., None]
        return np.exp(-((s - self.centers) ** 2) / (2.0 * self.widths ** 2))

    def eval(self, s):
        """Normalized activation vector(s); rows sum to one."""
        psi = self.raw(s)
        total = psi.sum(axis=-1, keepdims=True)
        if np.any(total < ACTIVATION_FLOOR):
            raise DegenerateBasisError("all activations underflowed")
        return psi / total

    def eval_deriv(self, s):
        """Analytic d(Phi)/ds of the normalized vector(s)."""
        s_arr = np.asarray(s, float)[..., None]
        psi = self.raw(s)
        total = psi.sum(axis=-1, keepdims=True)
        if np.any(total < ACTIVATION_FLOOR):
            raise DegenerateBasisError("all activations underflowed")
        dpsi = psi * (self.centers - s_arr) / self.widths ** 2
        phi = psi / total
        return (dpsi - phi * dpsi.sum(axis=-1, keepdims=True)) / total


def build_basis(M, intersection_height, lam_reg=1e-6):
    """Uniform centers on [0, 1]; widths chosen so adjacent unnormalized
    Gaussians intersect at the requested height h:

        sigma = dc / (2 sqrt(2 ln(1/h))).
    """
    if M < 1:
        raise ValueError("need at least one basis function")
    if not 0.0 < intersection_height < 1.0:
        raise ValueError("intersection height must lie in (0, 1)")
    if M == 1:
        centers = np.array([0.5])
        widths = np.array([0.5])
    else:
        centers = np.linspace(0.0, 1.0, M)
        dc = centers[1] - centers[0]
        sigma = dc / (2.0 * math.sqrt(2.0 * math.log(1.0 / intersection_height)))
        widths = np.full(M, sigma)
    return RbfBasis(centers=centers, widths=widths, lam_reg=lam_reg)


@dataclass(frozen=True)
class DmpParams:
    """Transformation-system parameters and forcing weights."""

    tau: float
    k: float = 150.0
    d: float | None = None          # None -> critically damped 2 sqrt(k m)
    m_dmp: float = 1.0
    goal: np.ndarray = field(default_factory=lambda: np.zeros(3))
    theta_traj: np.ndarray | None = None   # (M, D)
    basis: RbfBasis | None = None

    def __post_init__(self):
        if min(self.tau, self.k, self.m_dmp) <= 0:
            raise ValueError("tau, k, m must be positive")
        if self.d is None:
            object.__setattr__(self, "d", 2.0 * math.sqrt(self.k * self.m_dmp))

    def goal_at(self, t):
        g = np.asarray(self.goal, float)
        if g.ndim == 1:
            return g
        idx = min(int(round(t / self.tau * (len(g) - 1))), len(g) - 1)
        return g[idx]


@dataclass(frozen=True)
class DmpState:
    x: np.ndarray
    xdot: np.ndarray
    t: float


def dmp_accel(params, state, xi_traj=None):
    """Right-hand side acceleration of the transformation dynamics."""
    s = phase(state.t, params.tau)
    theta = params.theta_traj
    if xi_traj is not None:
        theta = theta + xi_traj
    forcing = params.basis.eval(s) @ theta
    g = params.goal_at(state.t)
    rhs = (params.k * (g - state.x) - params.tau * params.d * state.xdot
           + s * forcing)
    return rhs / (params.tau ** 2 * params.m_dmp)


def dmp_step(params, state, xi_traj, dt):
    """Semi-implicit Euler step; returns (new state, reference accel)."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    xdd = dmp_accel(params, state, xi_traj)
    xdot = state.xdot + xdd * dt
    x = state.x + xdot * dt
    if not np.all(np.isfinite(x)):
        raise ValueError("DMP state diverged")
    return DmpState(x=x, xdot=xdot, t=state.t + dt), xdd


def rollout_reference(params, start, xi_traj, tgrid):
    """Integrate the DMP over tgrid; returns (x_d, xdot_d, xddot_d) arrays.

    Sample i holds the state at tgrid[i]; the acceleration is the RHS
    evaluated there.  The basis matrix over all phases is evaluated once.
    For a constant goal the semi-implicit update is a constant-coefficient
    second-order recurrence and is evaluated as an IIR filter.
    """
    n = len(tgrid)
    D = len(start)
    dt = tgrid[1] - tgrid[0] if n > 1 else 0.0
    s_all = 1.0 - np.asarray(tgrid) / params.tau
    theta = params.theta_traj if xi_traj is None else params.theta_traj + xi_traj
    forcing = s_all[:, None] * (params.basis.eval(s_all) @ theta)   # (n, D)
    scale = params.tau ** 2 * params.m_dmp
    g = np.asarray(params.goal, float)
    if g.ndim == 1 and n >= 3:
        return _reference_filtered(params, np.array(start, float), g,
                                   forcing, dt, scale, n, D)
    x = np.empty((n, D))
    xd = np.empty((n, D))
    xdd = np.empty((n, D))
    xi, vi = np.array(start, float), np.zeros(D)
    for i in range(n):
        gi = params.goal_at(tgrid[i])
        a = (params.k * (gi - xi) - params.tau * params.d * vi
             + forcing[i]) / scale
        x[i], xd[i], xdd[i] = xi, vi, a
        vi = vi + a * dt
        xi = xi + vi * dt
    return x, xd, xdd


def _reference_filtered(params, start, g, forcing, dt, scale, n, D):
    # Eliminating the velocity from the semi-implicit update gives
    # x[i+1] = a1 x[i] + a2 x[i-1] + (dt^2/scale)(k g + gamma f)[i].
    from scipy.signal import lfilter, lfiltic

    kd = params.tau * params.d * dt / scale
    kk = params.k * dt * dt / scale
    a1 = 2.0 - kk - kd
    a2 = kd - 1.0
    w = (dt * dt / scale) * (params.k * g + forcing)
    x = np.empty((n, D))
    x[0] = start
    x[1] = start + w[0] - kk * start
    a_coef = np.array([1.0, -a1, -a2])
    b_coef = np.array([1.0])
    for j in range(D):
        zi = lfiltic(b_coef, a_coef, y=[x[1, j], x[0, j]])
        x[2:, j], _ = lfilter(b_coef, a_coef, w[1:-1, j], zi=zi)
    xd = np.empty((n, D))
    xd[0] = 0.0
    xd[1:] = (x[1:] - x[:-1]) / dt
    xdd = (params.k * (g - x) - params.tau * params.d * xd + forcing) / scale
    return x, xd, xdd


def min_jerk(start, goal, T, t):
    """Closed-form minimum-jerk profile; returns (x, xd, xdd) at times t."""
    start = np.asarray(start, float)
    goal = np.asarray(goal, float)
    u = (np.asarray(t, float) / T)[..., None]
    p = 10 * u ** 3 - 15 * u ** 4 + 6 * u ** 5
    pd = (30 * u ** 2 - 60 * u ** 3 + 30 * u ** 4) / T
    pdd = (60 * u - 180 * u ** 2 + 120 * u ** 3) / T ** 2
    delta = goal - start
    return start + delta * p, delta * pd, delta * pdd


def fit_min_jerk(start, goal, T, basis, params, dt=1e-3):
    """Regularized least-squares fit of the forcing weights to a minimum-jerk
    demonstration from start to goal over [0, T].

    The regression uses the design matrix gamma(t) Phi(s_t), avoiding the
    division by the vanishing phase at t = T.
    """
    if T <= 0:
        raise ValueError("T must be positive")
    start = np.asarray(start, float)
    goal = np.asarray(goal, float)
    t = np.arange(0.0, T + dt / 2, dt)
    x, xd, xdd = min_jerk(start, goal, T, t)
    s = 1.0 - t / T
    scale = params.tau ** 2 * params.m_dmp
    target = scale * xdd + params.tau * params.d * xd - params.k * (goal - x)
    A = s[:, None] * basis.eval(s)
    gram = A.T @ A + basis.lam_reg * np.eye(basis.count)
    return np.linalg.solve(gram, A.T @ target)
