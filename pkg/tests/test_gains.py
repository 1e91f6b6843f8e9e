"""Slack parametrization, the stiffness flow, and certificate margins."""

import io

import numpy as np
import pytest

from cgms.dmp import build_basis
from cgms.errors import CertifiedFloorError, ContractViolationError
from cgms.gains import (
    GainSchedule,
    SlackParams,
    build_gain_schedule,
    certificate_margins,
    cholesky_flow_step,
    constant_slack_params,
    damping_from_slack,
    damping_rate,
    integrate_cholesky_flow,
    slack_eval,
    slack_trace,
    tri_dim,
    vec_triangle,
    vec_triangle_inverse,
)

ALPHA = 0.05
H3 = np.eye(3)


def random_slack_params(rng, m=3, scale=1.0, basis=None):
    basis = basis or build_basis(7, 0.7)
    d = tri_dim(m)
    return SlackParams(theta_d=scale * rng.standard_normal((basis.count, d)),
                       theta_k=scale * rng.standard_normal((basis.count, d)),
                       basis=basis, m=m)


# ---------------------------------------------------------------------------
# vec_triangle
# ---------------------------------------------------------------------------

def test_vec_triangle_scalar_and_zero():
    assert np.array_equal(vec_triangle_inverse(np.array([3.0])), [[3.0]])
    assert np.array_equal(vec_triangle_inverse(np.zeros(6)), np.zeros((3, 3)))


def test_vec_triangle_round_trip(rng):
    for m in (1, 2, 3, 5):
        v = rng.standard_normal(tri_dim(m))
        L = vec_triangle_inverse(v)
        assert np.array_equal(vec_triangle(L), v)
        assert np.array_equal(np.triu(L, 1), np.zeros((m, m)))


def test_vec_triangle_ordering():
    # Diagonal entries first, then strict lower triangle column-major.
    v = np.arange(1.0, 7.0)
    L = vec_triangle_inverse(v)
    expected = np.array([[1.0, 0.0, 0.0],
                         [4.0, 2.0, 0.0],
                         [5.0, 6.0, 3.0]])
    assert np.array_equal(L, expected)


def test_vec_triangle_wrong_length():
    with pytest.raises(ValueError):
        vec_triangle_inverse(np.zeros(5))


# ---------------------------------------------------------------------------
# slack evaluation
# ---------------------------------------------------------------------------

def test_slack_zero_params():
    basis = build_basis(7, 0.7)
    sp = SlackParams(theta_d=np.zeros((7, 6)), theta_k=np.zeros((7, 6)),
                     basis=basis, m=3)
    sample = slack_eval(sp, 0.4)
    assert np.array_equal(sample.S_D, np.zeros((3, 3)))
    assert np.array_equal(sample.S_K, np.zeros((3, 3)))


def test_slack_constant_single_basis(rng):
    basis = build_basis(1, 0.5)
    row = vec_triangle(np.tril(rng.standard_normal((3, 3))))
    sp = SlackParams(theta_d=row[None], theta_k=row[None], basis=basis, m=3)
    for s in (0.0, 0.5, 1.0):
        sample = slack_eval(sp, s)
        assert np.allclose(vec_triangle(sample.S_D), row, atol=1e-14)


def test_slack_derivative_finite_difference(rng):
    sp = random_slack_params(rng)
    h = 1e-6
    for s in (0.2, 0.55, 0.9):
        plus = slack_eval(sp, s + h).S_D
        minus = slack_eval(sp, s - h).S_D
        fd = (plus - minus) / (2 * h)
        _, _, Sd_D, _ = slack_trace(sp, np.array([s]))
        assert np.abs(Sd_D[0] - fd).max() < 1e-5


def test_slack_noise_pairing(rng):
    sp = random_slack_params(rng)
    xi_d = rng.standard_normal(sp.theta_d.shape)
    sample = slack_eval(sp, 0.3, xi_d=xi_d)
    shifted = SlackParams(theta_d=sp.theta_d + xi_d, theta_k=sp.theta_k,
                          basis=sp.basis, m=3)
    ref = slack_eval(shifted, 0.3)
    assert np.allclose(sample.S_D, ref.S_D, atol=1e-15)
    assert np.allclose(sample.S_K, ref.S_K, atol=1e-15)


def test_damping_from_slack():
    D = damping_from_slack(np.zeros((3, 3)), ALPHA, H3)
    assert np.allclose(D, 0.05 * np.eye(3))
    S = np.sqrt(29.95) * np.eye(3)
    D = damping_from_slack(S, ALPHA, H3)
    assert np.allclose(D, 30.0 * np.eye(3), atol=1e-12)


def test_damping_lmi_by_construction(rng):
    for _ in range(20):
        S = np.tril(rng.standard_normal((3, 3)))
        D = damping_from_slack(S, ALPHA, H3)
        lam = np.linalg.eigvalsh(ALPHA * H3 - D).max()
        assert lam <= 1e-12


def test_damping_rate_finite_difference(rng):
    sp = random_slack_params(rng)
    tau = 5.0
    sdot = -1.0 / tau
    h = 1e-6
    for s in (0.3, 0.7):
        Dd = damping_rate(sp, s, sdot)
        assert np.abs(Dd - Dd.T).max() < 1e-12
        D_plus = damping_from_slack(slack_eval(sp, s + h * sdot).S_D, ALPHA, H3)
        D_minus = damping_from_slack(slack_eval(sp, s - h * sdot).S_D, ALPHA, H3)
        fd = (D_plus - D_minus) / (2 * h)
        assert np.abs(Dd - fd).max() < 1e-5


def test_constant_slack_rate_is_zero(rng):
    basis = build_basis(1, 0.5)
    sp = random_slack_params(rng, basis=basis)
    assert np.allclose(damping_rate(sp, 0.4, -0.2), 0.0, atol=1e-12)
    sp0 = SlackParams(theta_d=np.zeros((7, 6)), theta_k=np.zeros((7, 6)),
                      basis=build_basis(7, 0.7), m=3)
    assert np.array_equal(damping_rate(sp0, 0.4, -0.2), np.zeros((3, 3)))


# ---------------------------------------------------------------------------
# Cholesky flow
# ---------------------------------------------------------------------------

def test_flow_step_zero_b_is_exponential():
    Q = np.sqrt(200.0) * np.eye(3)
    Qn = cholesky_flow_step(Q, np.zeros((3, 3)), np.zeros((3, 3)), ALPHA, 1e-3)
    K_expected = np.exp(2 * ALPHA * 1e-3) * 200.0 * np.eye(3)
    assert np.abs(Qn.T @ Qn - K_expected).max() / 200.0 < 1e-12


def test_flow_zero_slack_certificate_boundary():
    # S_K = 0, Ddot = 0 gives Kdot - 2 alpha K = 0 exactly.
    tgrid = np.arange(0.0, 1.0, 1e-3)
    B = np.zeros((len(tgrid), 3, 3))
    K = integrate_cholesky_flow(B, ALPHA, 200.0 * np.eye(3), 1e-3)
    expected = np.exp(2 * ALPHA * tgrid)[:, None, None] * 200.0 * np.eye(3)
    assert np.abs(K - expected).max() / 200.0 < 1e-12
    lam_C = np.linalg.eigvalsh(2 * ALPHA * K + B - 2 * ALPHA * K)[..., -1]
    assert np.abs(lam_C).max() == 0.0


def test_flow_kdot_identity_finite_difference(rng):
    # Kdot = 2 alpha K + B along the integrated flow at dt = 1e-4.
    dt = 1e-4
    tgrid = np.arange(0.0, 1.0, dt)
    sp = random_slack_params(rng, scale=0.5)
    tau = 1.0
    s_all = 1.0 - tgrid / tau
    S_D, S_K, Sd_D, _ = slack_trace(sp, s_all)
    Sd_D = Sd_D * (-1.0 / tau)
    SDt = np.swapaxes(S_D, 1, 2)
    Ddot = Sd_D @ SDt + S_D @ np.swapaxes(Sd_D, 1, 2)
    B = -ALPHA * Ddot - S_K @ np.swapaxes(S_K, 1, 2)
    K = integrate_cholesky_flow(B, ALPHA, 200.0 * np.eye(3), dt)
    fd = (K[2:] - K[:-2]) / (2 * dt)
    target = 2 * ALPHA * K[1:-1] + B[1:-1]
    rel = np.abs(fd - target).max() / max(np.abs(target).max(), 1.0)
    assert rel < 1e-3
    assert np.linalg.eigvalsh(K)[..., 0].min() > 0


def test_flow_rejects_lost_definiteness():
    # Strongly negative B drives K through zero; must reject, not clamp.
    n = 2000
    B = np.tile(-50.0 * np.eye(2), (n, 1, 1))
    with pytest.raises(CertifiedFloorError):
        integrate_cholesky_flow(B, ALPHA, 1.0 * np.eye(2), 1e-3)


def test_flow_clamp_mode_stays_finite():
    n = 2000
    B = np.tile(-50.0 * np.eye(2), (n, 1, 1))
    K = integrate_cholesky_flow(B, ALPHA, 1.0 * np.eye(2), 1e-3, clamp=True)
    assert np.all(np.isfinite(K))
    assert np.linalg.eigvalsh(K)[..., 0].min() >= 0.0


def test_flow_step_rejects_floor():
    # A factor at 1e-13 keeps the post-step Cholesky diagonal below the
    # 1e-12 positivity floor, which must reject rather than continue.
    Q = 1e-13 * np.eye(2)
    with pytest.raises(CertifiedFloorError):
        cholesky_flow_step(Q, np.zeros((2, 2)), np.zeros((2, 2)), ALPHA, 1e-3)
    with pytest.raises(ValueError):
        cholesky_flow_step(np.eye(2), np.zeros((2, 2)), np.zeros((2, 2)),
                           ALPHA, 0.0)


# ---------------------------------------------------------------------------
# certificate margins
# ---------------------------------------------------------------------------

def test_margins_constant_init():
    D = 30.0 * np.eye(3)
    K = 200.0 * np.eye(3)
    zero = np.zeros((3, 3))
    # Constant gains: Kdot = Ddot = 0, so lam_C = -2 alpha k = -20.
    rep = certificate_margins(H3, ALPHA, D, zero, K, zero)
    assert abs(rep.lam_A.max() + 29.95) < 1e-12
    assert abs(rep.lam_C.max() + 20.0) < 1e-12
    assert rep.passes and rep.passes_strict
    assert abs(rep.eps_D - 29.95) < 1e-12
    assert abs(rep.eps_K - 20.0) < 1e-12


def test_margins_zero_slack_boundary():
    D = ALPHA * H3
    K = 200.0 * np.eye(3)
    zero = np.zeros((3, 3))
    rep = certificate_margins(H3, ALPHA, D, zero, K, 2 * ALPHA * K)
    assert abs(rep.lam_A.max()) < 1e-14
    assert rep.passes
    assert not rep.passes_strict


def test_margins_asymmetric_rejected():
    D = 30.0 * np.eye(3)
    D[0, 1] = 1e-6
    zero = np.zeros((3, 3))
    with pytest.raises(ContractViolationError):
        certificate_margins(H3, ALPHA, D, zero, 200 * np.eye(3), zero)


def test_schedule_certified_by_construction(rng):
    # 100 random parameter draws: both eigenvalue traces nonpositive and
    # the algebraic residual (Kdot + alpha Ddot - 2 alpha K) + S_K S_K^T
    # vanishes.
    basis = build_basis(7, 0.7)
    tgrid = np.arange(0.0, 1.0, 1e-3)
    tau = 1.0
    for _ in range(100):
        sp = random_slack_params(rng, scale=0.8, basis=basis)
        sched = build_gain_schedule(sp, ALPHA, H3, tau, 200 * np.eye(3), tgrid)
        assert sched.lam_A.max() <= 1e-12
        assert sched.lam_C.max() <= 1e-12
        assert np.linalg.eigvalsh(sched.K)[..., 0].min() > 0
        s_all = 1.0 - tgrid / tau
        _, S_K, _, _ = slack_trace(sp, s_all)
        SSK = S_K @ np.swapaxes(S_K, 1, 2)
        residual = sched.Kdot + ALPHA * sched.Ddot - 2 * ALPHA * sched.K + SSK
        assert np.abs(residual).max() < 1e-8


def test_scale_beta_closure(rng):
    basis = build_basis(7, 0.7)
    tgrid = np.arange(0.0, 1.0, 1e-3)
    for beta in (0.0, 0.25, 0.5, 1.0):
        sp = random_slack_params(rng, scale=0.8, basis=basis)
        sched = build_gain_schedule(sp, ALPHA, H3, 1.0, 200 * np.eye(3),
                                    tgrid, beta=beta)
        assert sched.report().passes
    # beta = 0 is the certified floor: D = alpha H, K = exp(2 alpha t) K0.
    sp = random_slack_params(rng, scale=0.8, basis=basis)
    sched0 = build_gain_schedule(sp, ALPHA, H3, 1.0, 200 * np.eye(3),
                                 tgrid, beta=0.0)
    assert np.abs(sched0.D - ALPHA * H3).max() < 1e-14
    expected = np.exp(2 * ALPHA * tgrid)[:, None, None] * 200 * np.eye(3)
    assert np.abs(sched0.K - expected).max() / 200.0 < 1e-10


def test_constant_slack_params_reproduce_init():
    basis = build_basis(7, 0.7)
    sp = constant_slack_params(basis, 3, 30.0, 200.0, ALPHA, H3)
    tgrid = np.arange(0.0, 5.0, 1e-3)
    sched = build_gain_schedule(sp, ALPHA, H3, 5.0, 200 * np.eye(3), tgrid)
    assert np.abs(sched.D - 30.0 * np.eye(3)).max() < 1e-9
    assert np.abs(sched.K - 200.0 * np.eye(3)).max() < 1e-6
    assert abs(sched.lam_A.max() + 29.95) < 1e-9
    assert abs(sched.lam_C.max() + 20.0) < 1e-6


def test_schedule_csv_round_trip(rng):
    basis = build_basis(7, 0.7)
    sp = random_slack_params(rng, scale=0.5, basis=basis)
    tgrid = np.arange(0.0, 0.1, 1e-3)
    sched = build_gain_schedule(sp, ALPHA, H3, 1.0, 200 * np.eye(3), tgrid)
    buf = io.StringIO()
    sched.to_csv(buf)
    text = buf.getvalue()
    header = text.splitlines()[0]
    assert header.startswith("t,K11,K12,K13,K21")
    assert header.endswith("lamA,lamC")
    buf.seek(0)
    back = GainSchedule.from_csv(buf, ALPHA, H3)
    assert np.allclose(back.t, sched.t)
    assert np.allclose(back.K, sched.K)
    assert np.allclose(back.D, sched.D)
    assert np.allclose(back.lam_A, sched.lam_A)
