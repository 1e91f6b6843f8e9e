"""Boundedness constants, the dissipation inequality, and the ultimate bound."""

import numpy as np
import pytest

from cgms.dmp import build_basis
from cgms.errors import MarginTooSmallError
from cgms.gains import SlackParams, build_gain_schedule, vec_triangle
from cgms.robustness import (
    RobustnessInputs,
    dissipation_check,
    inputs_from_schedule,
    simulate_error_dynamics,
    standard_residuals,
    uub_constants,
    uub_empirical,
)

ALPHA = 0.05
H3 = np.eye(3)

WORKED = dict(alpha=0.05, h_min=1.0, h_max=1.0, k_lower=200.0, k_upper=200.0,
              d_upper=30.0, eps_D=1.0, eps_K=25.0, gamma=0.5, eta=0.25,
              u_bar=0.01)


def certified_schedule(rng, T=2.0, dt=1e-4):
    """A random schedule with strict margins large enough for the theorem.

    Moderate stiffness (about 50 N/m) with generously sized stiffness
    slack keeps eps_K well above the 2 alpha k_upper floor; the damping
    slack sets eps_D of a few Ns/m.
    """
    basis = build_basis(7, 0.7)
    k0 = rng.uniform(40.0, 60.0)
    d0 = rng.uniform(6.0, 10.0)
    rho = rng.uniform(0.5, 1.0)
    row_d = vec_triangle(np.sqrt(d0 - ALPHA) * np.eye(3))
    row_k = vec_triangle(np.sqrt(2 * ALPHA * k0 * (1 + rho)) * np.eye(3))
    theta_d = np.tile(row_d, (7, 1)) + 0.05 * rng.standard_normal((7, 6))
    theta_k = np.tile(row_k, (7, 1)) + 0.05 * rng.standard_normal((7, 6))
    sp = SlackParams(theta_d=theta_d, theta_k=theta_k, basis=basis, m=3)
    tgrid = np.arange(0.0, T + dt / 2, dt)
    return build_gain_schedule(sp, ALPHA, H3, T, k0 * np.eye(3), tgrid)


@pytest.fixture(scope="module")
def schedules():
    rng = np.random.default_rng(99)
    return [certified_schedule(rng) for _ in range(20)]


# ---------------------------------------------------------------------------
# Constant chain
# ---------------------------------------------------------------------------

def test_worked_constant_chain():
    res = uub_constants(RobustnessInputs(**WORKED))
    assert abs(res.c1 - 0.25) < 1e-12
    assert res.c2 == 1.0
    assert res.m1p == 0.5
    assert res.m2p == 100.75
    assert abs(res.radius - np.sqrt(806.0) * 0.01) < 1e-12
    assert abs(res.radius - 0.284) < 1e-3


def test_precondition_boundary():
    bad = dict(WORKED, eps_K=24.0)    # needs eps_K > 24.5
    with pytest.raises(MarginTooSmallError):
        uub_constants(RobustnessInputs(**bad))


def test_young_parameter_ranges():
    with pytest.raises(MarginTooSmallError):
        uub_constants(RobustnessInputs(**dict(WORKED, gamma=1.5)))
    with pytest.raises(MarginTooSmallError):
        uub_constants(RobustnessInputs(**dict(WORKED, eta=0.6)))
    with pytest.raises(MarginTooSmallError):
        uub_constants(RobustnessInputs(**dict(WORKED, eps_D=-1.0)))


def test_radius_monotone_in_margins_and_linear_in_ubar():
    base = uub_constants(RobustnessInputs(**WORKED))
    # Larger margins never increase the radius (gamma, eta rescaled with
    # eps_D to stay admissible).
    better = dict(WORKED, eps_D=2.0, eps_K=50.0, gamma=1.0, eta=0.5)
    assert uub_constants(RobustnessInputs(**better)).radius <= base.radius
    doubled = uub_constants(RobustnessInputs(**dict(WORKED, u_bar=0.02)))
    assert abs(doubled.radius - 2.0 * base.radius) < 1e-15


def test_inputs_from_schedule_bounds(schedules):
    sched = schedules[0]
    inp = inputs_from_schedule(sched, 0.01)
    k_eigs = np.linalg.eigvalsh(sched.K)
    assert abs(inp.k_lower - k_eigs.min()) < 1e-12
    assert abs(inp.k_upper - k_eigs.max()) < 1e-12
    assert inp.h_min == inp.h_max == 1.0
    rep = sched.report()
    assert inp.eps_D == rep.eps_D
    assert inp.eps_K == rep.eps_K
    assert inp.gamma == rep.eps_D / 2
    opt = inputs_from_schedule(sched, 0.01, optimize=True)
    c_def = uub_constants(inp).c1
    c_opt = uub_constants(opt).c1
    assert c_opt >= c_def - 1e-12


# ---------------------------------------------------------------------------
# Simulation checks
# ---------------------------------------------------------------------------

def test_unforced_storage_nonincreasing(schedules):
    sched = schedules[0]
    inp = inputs_from_schedule(sched, 0.01, optimize=True)
    m = sched.m
    report = dissipation_check(sched, inp, lambda t: np.zeros(m),
                               z0=np.array([0.1, -0.05, 0.08, 0.02, 0.0, -0.03]))
    assert report["passes"]
    assert report["max_violation"] < 1e-6


def test_dissipation_inequality_sinusoid(schedules):
    for sched in schedules[:5]:
        inp = inputs_from_schedule(sched, 0.01, optimize=True)
        residual = standard_residuals(0.01, sched.m)[2]
        report = dissipation_check(sched, inp, residual)
        assert report["passes"], report


def test_negative_control_inflated_c1(schedules):
    sched = schedules[0]
    inp = inputs_from_schedule(sched, 0.01, optimize=True)
    res = uub_constants(inp)
    m = sched.m
    z0 = np.array([0.3, -0.2, 0.25, 0.05, -0.02, 0.04])
    report = dissipation_check(sched, inp, lambda t: np.zeros(m),
                               c1=10.0 * res.c1, z0=z0)
    assert not report["passes"]
    assert report["max_violation"] > 1e-5


def test_uub_zero_residual(schedules):
    sched = schedules[0]
    inp = inputs_from_schedule(sched, 0.01, optimize=True)
    inside, margin = uub_empirical(sched, inp, [lambda t: np.zeros(sched.m)])
    assert inside
    assert margin > 0


def test_uub_constant_residual_steady_state(schedules):
    # Constant residual at the bound: the measured trajectory stays inside
    # the radius, and the constant-gain steady state xt = K^-1 u is a
    # lower-bound oracle for where it settles.
    sched = schedules[1]
    inp = inputs_from_schedule(sched, 0.01, optimize=True)
    res = uub_constants(inp)
    u = np.zeros(sched.m)
    u[0] = 0.01
    tgrid, XT, XTD = simulate_error_dynamics(sched, lambda t: u)
    znorm = np.sqrt((XT ** 2 + XTD ** 2).sum(axis=1))
    assert znorm.max() <= res.radius
    x_ss = np.linalg.solve(sched.K[-1], u)
    assert np.abs(XT[-1] - x_ss).max() < 5e-3


def test_uub_linearity_in_ubar(schedules):
    sched = schedules[2]
    direction = np.array([1.0, 0.0, 0.0])

    def peak(u_bar):
        _, XT, XTD = simulate_error_dynamics(
            sched, lambda t: u_bar * np.sin(2 * np.pi * t) * direction)
        return np.sqrt((XT ** 2 + XTD ** 2).sum(axis=1)).max()

    p1, p2 = peak(0.01), peak(0.02)
    assert abs(p2 / p1 - 2.0) < 0.05 * 2.0


def test_bound_soundness_ensemble(schedules):
    # 20 schedules x 3 residuals: the dissipation inequality and the
    # ultimate bound hold everywhere.
    for i, sched in enumerate(schedules):
        inp = inputs_from_schedule(sched, 0.01, optimize=True)
        residuals = standard_residuals(0.01, sched.m, seed=i)
        report = dissipation_check(sched, inp, residuals[2])
        assert report["passes"], (i, report)
        inside, margin = uub_empirical(sched, inp, residuals)
        assert inside, (i, margin)


def test_strict_margin_precondition_enforced():
    # A schedule sitting on the certificate boundary (eps_D = 0) is not
    # admissible for the dissipation argument.
    basis = build_basis(7, 0.7)
    sp = SlackParams(theta_d=np.zeros((7, 6)), theta_k=np.zeros((7, 6)),
                     basis=basis, m=3)
    tgrid = np.arange(0.0, 1.0, 1e-3)
    sched = build_gain_schedule(sp, ALPHA, H3, 1.0, 50.0 * np.eye(3), tgrid)
    inp = RobustnessInputs(alpha=ALPHA, h_min=1.0, h_max=1.0, k_lower=40.0,
                           k_upper=50.0, d_upper=0.05, eps_D=1.0, eps_K=6.0,
                           gamma=0.5, eta=0.25, u_bar=0.01)
    with pytest.raises(MarginTooSmallError):
        dissipation_check(sched, inp, lambda t: np.zeros(3))
