"""The certified gain manifold: slack-variable damping, the Cholesky flow
for the stiffness schedule, analytic gain rates, and certificate margins.

The two stability inequalities

    alpha H - D(t)                        <= 0
    Kdot(t) + alpha Ddot(t) - 2 alpha K(t) <= 0

are enforced by construction: D = alpha H + S_D S_D^T and K evolves through
its Cholesky factor so that Kdot = 2 alpha K + B with
B = -alpha Ddot - S_K S_K^T.  Any slack sample therefore yields a schedule
with both left-hand sides equal to -S S^T <= 0.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .dmp import RbfBasis
from .errors import CertifiedFloorError, ContractViolationError

Q_DIAG_FLOOR = 1e-6
SYMMETRY_TOL = 1e-9


# ---------------------------------------------------------------------------
# Lower-triangle vectorization
# ---------------------------------------------------------------------------

def tri_dim(m):
    """Number of free entries of an m x m lower-triangular matrix."""
    return m * (m + 1) // 2


def _tri_index_arrays(m):
    # Ordering: the m diagonal entries first, then the strictly-lower
    # entries column-major ((1,0), (2,0), ..., (m-1,0), (2,1), ...).
    rows = list(range(m))
    cols = list(range(m))
    for j in range(m):
        for i in range(j + 1, m):
            rows.append(i)
            cols.append(j)
    return np.array(rows), np.array(cols)


def vec_triangle(L):
    """Vectorize a lower-triangular matrix (diagonal first, then the strict
    lower triangle column-major)."""
    m = L.shape[-1]
    rows, cols = _tri_index_arrays(m)
    return np.asarray(L)[..., rows, cols]


def vec_triangle_inverse(v, m=None):
    """Inverse of vec_triangle; accepts a batch of vectors."""
    v = np.asarray(v, float)
    d = v.shape[-1]
    if m is None:
        m = int((np.sqrt(8 * d + 1) - 1) / 2)
    if tri_dim(m) != d:
        raise ValueError(f"vector length {d} does not match m={m}")
    rows, cols = _tri_index_arrays(m)
    L = np.zeros(v.shape[:-1] + (m, m))
    L[..., rows, cols] = v
    return L


# ---------------------------------------------------------------------------
# Slack parametrization
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SlackParams:
    """RBF weights for the damping and stiffness slack channels."""

    theta_d: np.ndarray     # (M_s, d_tri)
    theta_k: np.ndarray     # (M_s, d_tri)
    basis: RbfBasis
    m: int                  # task dimension

    def __post_init__(self):
        d = tri_dim(self.m)
        if self.theta_d.shape != (self.basis.count, d):
            raise ValueError("theta_d shape mismatch")
        if self.theta_k.shape != (self.basis.count, d):
            raise ValueError("theta_k shape mismatch")


@dataclass(frozen=True)
class SlackSample:
    """Lower-triangular slack matrices at one phase."""

    S_D: np.ndarray
    S_K: np.ndarray
    s: float


def slack_eval(sp, s, xi_d=None, xi_k=None):
    """Evaluate both slack channels at phase s.

    vec(S_D) = Phi(s) (theta_d + xi_d) and likewise for S_K; the noise is
    paired with its own channel.
    """
    td = sp.theta_d if xi_d is None else sp.theta_d + xi_d
    tk = sp.theta_k if xi_k is None else sp.theta_k + xi_k
    ph = sp.basis.eval(s)
    return SlackSample(S_D=vec_triangle_inverse(ph @ td, sp.m),
                       S_K=vec_triangle_inverse(ph @ tk, sp.m), s=float(s))


def slack_trace(sp, s_all, xi_d=None, xi_k=None):
    """Vectorized slack evaluation over an array of phases.

    Returns (S_D, S_K, Sdot_D, Sdot_K) with shape (n, m, m); the rates use
    the analytic basis derivative times ds/dt = -1/tau (tau supplied by the
    caller through sdot).
    """
    td = sp.theta_d if xi_d is None else sp.theta_d + xi_d
    tk = sp.theta_k if xi_k is None else sp.theta_k + xi_k
    ph = sp.basis.eval(s_all)
    dph = sp.basis.eval_deriv(s_all)
    return (vec_triangle_inverse(ph @ td, sp.m),
            vec_triangle_inverse(ph @ tk, sp.m),
            vec_triangle_inverse(dph @ td, sp.m),
            vec_triangle_inverse(dph @ tk, sp.m))


def damping_from_slack(S_D, alpha, H):
    """D = alpha H + S_D S_D^T; alpha H - D = -S_D S_D^T <= 0 by construction."""
    return alpha * H + S_D @ S_D.T


def damping_rate(sp, s, sdot, xi_d=None):
    """Analytic Ddot = Sdot S^T + S Sdot^T at phase s."""
    td = sp.theta_d if xi_d is None else sp.theta_d + xi_d
    S = vec_triangle_inverse(sp.basis.eval(s) @ td, sp.m)
    Sdot = vec_triangle_inverse(sp.basis.eval_deriv(s) @ td, sp.m) * sdot
    return Sdot @ S.T + S @ Sdot.T


# ---------------------------------------------------------------------------
# Cholesky flow
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GainState:
    """Stiffness Cholesky factor plus the damping pair at time t."""

    Q: np.ndarray        # upper triangular, K = Q^T Q
    D: np.ndarray
    Ddot: np.ndarray
    t: float

    @property
    def K(self):
        return self.Q.T @ self.Q


def _q_rhs(Q, B, alpha):
    return alpha * Q + 0.5 * np.linalg.solve(Q.T, B)


def cholesky_flow_step(Q, S_K, Ddot, alpha, dt):
    """Advance the stiffness Cholesky factor one RK4 step.

    B = -alpha Ddot - S_K S_K^T is held over the step.  The result is
    re-triangularized through a Cholesky retraction of K = Q^T Q (K is
    invariant under it); a diagonal below the positivity floor rejects the
    schedule rather than clamping it.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    B = -alpha * Ddot - S_K @ S_K.T
    k1 = _q_rhs(Q, B, alpha)
    k2 = _q_rhs(Q + 0.5 * dt * k1, B, alpha)
    k3 = _q_rhs(Q + 0.5 * dt * k2, B, alpha)
    k4 = _q_rhs(Q + dt * k3, B, alpha)
    Qn = Q + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    K = Qn.T @ Qn
    try:
        L = np.linalg.cholesky(0.5 * (K + K.T))
    except np.linalg.LinAlgError as exc:
        raise CertifiedFloorError("stiffness lost positive definiteness") from exc
    if np.diag(L).min() < Q_DIAG_FLOOR:
        raise CertifiedFloorError(
            f"Cholesky diagonal below floor {Q_DIAG_FLOOR}")
    return L.T


# ---------------------------------------------------------------------------
# Certificates and schedules
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CertificateReport:
    """Per-timestep maximum eigenvalues of the two stability inequalities
    and the resulting global margins."""

    lam_A: np.ndarray       # max eig of alpha H - D(t)
    lam_C: np.ndarray       # max eig of Kdot + alpha Ddot - 2 alpha K
    alpha: float

    @property
    def eps_D(self):
        return -float(self.lam_A.max())

    @property
    def eps_K(self):
        return -float(self.lam_C.max())

    @property
    def passes(self):
        """Bare stability condition: both inequalities nonstrict."""
        return bool(self.lam_A.max() <= 0.0 and self.lam_C.max() <= 0.0)

    @property
    def passes_strict(self):
        """Strict margins, as required by the boundedness theorem."""
        return bool(self.eps_D > 0.0 and self.eps_K >= 0.0 and self.passes)

    def to_dict(self):
        return {
            "alpha": self.alpha,
            "eps_D": self.eps_D,
            "eps_K": self.eps_K,
            "lam_A_max": float(self.lam_A.max()),
            "lam_C_max": float(self.lam_C.max()),
            "passes": self.passes,
            "passes_strict": self.passes_strict,
        }


def _check_symmetric(name, A):
    err = np.abs(A - np.swapaxes(A, -1, -2)).max()
    if err > SYMMETRY_TOL:
        raise ContractViolationError(f"{name} asymmetric by {err:.3e}")


def certificate_margins(H, alpha, D, Ddot, K, Kdot):
    """Eigenvalue audit of the two stability inequalities over a schedule.

    All matrix arguments are (n, m, m) stacks (or single matrices).
    """
    D, Ddot, K, Kdot = (np.asarray(a, float)[None] if np.asarray(a).ndim == 2
                        else np.asarray(a, float) for a in (D, Ddot, K, Kdot))
    for name, A in (("D", D), ("Ddot", Ddot), ("K", K), ("Kdot", Kdot)):
        _check_symmetric(name, A)
    lam_A = np.linalg.eigvalsh(alpha * H - D)[..., -1]
    lam_C = np.linalg.eigvalsh(Kdot + alpha * Ddot - 2.0 * alpha * K)[..., -1]
    return CertificateReport(lam_A=lam_A, lam_C=lam_C, alpha=alpha)


@dataclass(frozen=True)
class GainSchedule:
    """Time series of the executed impedance gains and certificate trace."""

    t: np.ndarray
    K: np.ndarray        # (n, m, m)
    D: np.ndarray
    Kdot: np.ndarray
    Ddot: np.ndarray
    lam_A: np.ndarray
    lam_C: np.ndarray
    alpha: float
    H: np.ndarray

    @property
    def m(self):
        return self.K.shape[-1]

    def report(self):
        return CertificateReport(lam_A=self.lam_A, lam_C=self.lam_C,
                                 alpha=self.alpha)

    def to_csv(self, path_or_buf):
        """Columns: t, K11..Kmm (row-major), D11..Dmm, lamA, lamC."""
        m = self.m
        names = ["t"]
        names += [f"K{i + 1}{j + 1}" for i in range(m) for j in range(m)]
        names += [f"D{i + 1}{j + 1}" for i in range(m) for j in range(m)]
        names += ["lamA", "lamC"]
        n = len(self.t)
        data = np.column_stack([
            self.t, self.K.reshape(n, -1), self.D.reshape(n, -1),
            self.lam_A, self.lam_C,
        ])
        _write_csv(path_or_buf, names, data)

    @staticmethod
    def from_csv(path, alpha, H):
        raw = np.genfromtxt(path, delimiter=",", names=True)
        names = raw.dtype.names
        m = int(np.sqrt((len(names) - 3) / 2))
        n = len(raw)
        arr = np.column_stack([raw[c] for c in names])
        t = arr[:, 0]
        K = arr[:, 1:1 + m * m].reshape(n, m, m)
        D = arr[:, 1 + m * m:1 + 2 * m * m].reshape(n, m, m)
        lam_A, lam_C = arr[:, -2], arr[:, -1]
        zeros = np.zeros_like(K)
        return GainSchedule(t=t, K=K, D=D, Kdot=zeros, Ddot=zeros,
                            lam_A=lam_A, lam_C=lam_C, alpha=alpha,
                            H=np.asarray(H, float))


def _write_csv(path_or_buf, names, data):
    header = ",".join(names)
    rows = "\n".join(",".join(format(v, ".17g") for v in row) for row in data)
    text = header + "\n" + rows + "\n"
    if hasattr(path_or_buf, "write"):
        path_or_buf.write(text)
    else:
        with open(path_or_buf, "w") as fh:
            fh.write(text)


def integrate_cholesky_flow(B, alpha, K0, dt, clamp=False):
    """Integrate the stiffness flow over a stack of B(t) samples.

    Returns the (n, m, m) stiffness trace.  With B held constant over each
    step the flow Kdot = 2 alpha K + B has the exact update
    K_next = r K + c B with r = exp(2 alpha dt) and c = (r - 1) / (2 alpha),
    which matches the per-step Cholesky factor integration to round-off and
    vectorizes over the grid.  A minimum eigenvalue below the positivity
    floor rejects the schedule; with clamp=True it is floored pointwise
    instead, a path that exists only for explicitly uncertified (ablation)
    runs.
    """
    B = np.asarray(B, float)
    n, m = B.shape[0], B.shape[-1]
    K0 = np.asarray(K0, float)
    if n == 0:
        return np.empty((0, m, m))
    r = np.exp(2.0 * alpha * dt)
    c = (r - 1.0) / (2.0 * alpha) if alpha != 0.0 else dt
    # K_n = r^n (K0 + c sum_{i<n} r^{-(i+1)} B_i), evaluated by cumulative sum.
    idx = np.arange(n)
    acc = np.zeros((n, m, m))
    if n > 1:
        acc[1:] = np.cumsum(r ** (-idx[1:, None, None]) * B[:-1], axis=0)
    K = r ** idx[:, None, None] * (K0 + c * acc)
    K = 0.5 * (K + np.swapaxes(K, 1, 2))
    eigs = np.linalg.eigvalsh(K)
    if eigs[..., 0].min() < Q_DIAG_FLOOR ** 2:
        if not clamp:
            raise CertifiedFloorError(
                f"stiffness eigenvalue below positivity floor "
                f"{Q_DIAG_FLOOR ** 2}")
        w, V = np.linalg.eigh(K)
        w = np.maximum(w, Q_DIAG_FLOOR ** 2)
        K = np.einsum("nij,nj,nkj->nik", V, w, V)
        K = 0.5 * (K + np.swapaxes(K, 1, 2))
    return K


def build_gain_schedule(sp, alpha, H, tau, K0, tgrid, xi_d=None, xi_k=None,
                        beta=1.0):
    """Integrate the slack construction into an executed gain schedule.

    The slacks may be uniformly scaled by sqrt(beta) (the governor
    contraction); beta = 0 yields the certified floor D = alpha H,
    K(t) = exp(2 alpha t) K0.
    """
    tgrid = np.asarray(tgrid, float)
    n = len(tgrid)
    dt = tgrid[1] - tgrid[0]
    s_all = 1.0 - tgrid / tau
    S_D, S_K, Sd_D, _ = slack_trace(sp, s_all, xi_d, xi_k)
    if beta != 1.0:
        S_D = np.sqrt(beta) * S_D
        S_K = np.sqrt(beta) * S_K
        Sd_D = np.sqrt(beta) * Sd_D
    Sd_D = Sd_D * (-1.0 / tau)
    D = alpha * H + S_D @ np.swapaxes(S_D, 1, 2)
    Ddot = Sd_D @ np.swapaxes(S_D, 1, 2) + S_D @ np.swapaxes(Sd_D, 1, 2)
    SSK = S_K @ np.swapaxes(S_K, 1, 2)
    B = -alpha * Ddot - SSK
    K = integrate_cholesky_flow(B, alpha, K0, dt)
    Kdot = 2.0 * alpha * K + B
    lam_A = np.linalg.eigvalsh(alpha * H - D)[..., -1]
    lam_C = np.linalg.eigvalsh(Kdot + alpha * Ddot - 2.0 * alpha * K)[..., -1]
    return GainSchedule(t=tgrid, K=K, D=D, Kdot=Kdot, Ddot=Ddot,
                        lam_A=lam_A, lam_C=lam_C, alpha=alpha,
                        H=np.asarray(H, float))


def constant_slack_params(basis, m, d_init, k_init, alpha, H):
    """Slack weights reproducing constant gains D = d_init I, K = k_init I.

    Solves alpha H + S_D S_D^T = d_init I for a constant S_D and picks
    S_K = sqrt(2 alpha k_init) I so the stiffness flow holds K constant.
    """
    H = np.asarray(H, float)
    Sd = np.linalg.cholesky(d_init * np.eye(m) - alpha * H)
    Sk = np.sqrt(2.0 * alpha * k_init) * np.eye(m)
    row_d = vec_triangle(Sd)
    row_k = vec_triangle(Sk)
    return SlackParams(theta_d=np.tile(row_d, (basis.count, 1)),
                       theta_k=np.tile(row_k, (basis.count, 1)),
                       basis=basis, m=m)
