"""Certificate-aware gain contraction under actuator box constraints.

The control law is affine in (K, D), and the slack-scaled gains are affine
in beta, so the commanded torque is tau(beta) = tau0 + beta tau1.  The
governor picks the largest beta in [0, 1] keeping tau(beta) inside the
per-joint box; scaling the slacks by sqrt(beta) preserves the Lyapunov
certificate pointwise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleFloorError, ModelingBugError
from .plants import ReferenceSample, commanded_accel, osid_wrench, wrench_to_torque

ZERO_SLOPE_TOL = 1e-12
AFFINITY_CHECK_TOL = 1e-6

FR3_TORQUE_LIMITS = np.array([87.0, 87.0, 87.0, 87.0, 12.0, 12.0, 12.0])


@dataclass(frozen=True)
class TorqueLimits:
    """Per-joint actuator box."""

    tau_min: np.ndarray
    tau_max: np.ndarray

    def __post_init__(self):
        if not np.all(self.tau_min < self.tau_max):
            raise ValueError("tau_min must be elementwise below tau_max")

    @staticmethod
    def box(limit, n):
        lim = np.full(n, float(limit))
        return TorqueLimits(tau_min=-lim, tau_max=lim)

    @staticmethod
    def fr3_default():
        return TorqueLimits(tau_min=-FR3_TORQUE_LIMITS,
                            tau_max=FR3_TORQUE_LIMITS)

    @staticmethod
    def fr3_half():
        return TorqueLimits(tau_min=-FR3_TORQUE_LIMITS / 2,
                            tau_max=FR3_TORQUE_LIMITS / 2)

    def contains(self, tau, tol=0.0):
        return bool(np.all(tau >= self.tau_min - tol)
                    and np.all(tau <= self.tau_max + tol))


@dataclass(frozen=True)
class AffineTorqueSplit:
    """Torque command decomposed as tau(beta) = tau0 + beta tau1."""

    tau0: np.ndarray
    tau1: np.ndarray

    def at(self, beta):
        return self.tau0 + beta * self.tau1


def governed_torque(Lam, mu, p, J, H, state, ref, f_e, D0, K0, D1, K1):
    """Affine torque split from the gain endpoints beta = 0 and beta = 1.

    The beta = 0 gains are the certified floor (D0 = alpha H, K0 from the
    zero-slack flow); beta = 1 are the sampled gains.  A midpoint check
    guards against a non-affine term leaking into the chain.
    """
    def torque(D, K):
        acc = commanded_accel(state, ref, D, K, H)
        fc = osid_wrench(Lam, mu, p, f_e, H, acc)
        return wrench_to_torque(J, fc)

    tau0 = torque(D0, K0)
    tau1 = torque(D1, K1) - tau0
    mid = torque(0.5 * (D0 + D1), 0.5 * (K0 + K1))
    err = np.abs(mid - (tau0 + 0.5 * tau1)).max()
    if err > AFFINITY_CHECK_TOL:
        raise ModelingBugError(f"torque not affine in beta (midpoint err {err:.3e})")
    return AffineTorqueSplit(tau0=tau0, tau1=tau1)


# Backwards-friendly alias matching the operation name used in docs.
torque_split = governed_torque


def beta_star_detail(split, limits):
    """Largest beta in [0, 1] keeping tau0 + beta tau1 inside the box,
    plus the binding joint (None when beta = 1).

    Joints with zero slope impose no bound.  An infeasible tau0 (the beta=0
    floor already saturates) raises rather than clamping.
    """
    tau0, tau1 = split.tau0, split.tau1
    if not limits.contains(tau0, tol=1e-12):
        raise InfeasibleFloorError("torque at beta = 0 violates the box limits")
    beta, joint = 1.0, None
    for i in range(len(tau0)):
        if tau1[i] > ZERO_SLOPE_TOL:
            bound = (limits.tau_max[i] - tau0[i]) / tau1[i]
        elif tau1[i] < -ZERO_SLOPE_TOL:
            bound = (limits.tau_min[i] - tau0[i]) / tau1[i]
        else:
            continue
        if bound < beta:
            beta, joint = bound, i
    return float(min(max(beta, 0.0), 1.0)), joint


def beta_star(split, limits):
    """Largest admissible uniform gain scaling; see beta_star_detail."""
    return beta_star_detail(split, limits)[0]


def apply_governor(S_D, S_K, beta):
    """Uniformly scale the slack pair by sqrt(beta)."""
    if not 0.0 <= beta <= 1.0:
        raise ValueError("beta must lie in [0, 1]")
    root = np.sqrt(beta)
    return root * S_D, root * S_K
