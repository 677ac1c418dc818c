"""One-bit precoders: the penalty-continuation BCD solver with an LSE-smoothed
FISTA inner loop, plus zero-forcing and quantized zero-forcing baselines.

The design variable is the lifted real block Xbar (2N x T, column t is the
lifted transmit vector at symbol time t) together with the receive gain d.
The binary alphabet {+-sqrt(P/2N)} is relaxed to a box, coupled to a
ball-constrained auxiliary vector v through the penalty lam * (PT - xbar.v);
increasing lam drives xbar to the box corners.  For fixed v the (xbar, d)
subproblem is convex and solved by projected FISTA on the smoothed objective

    f(xbar, d) = sqrt(sigma * log sum_i exp(r_i^2 / sigma)) - d
                 + lam * (PT - xbar.v),      r_i = hhat_i.xbar - d*sbar_i,

where the log-sum-exp is always evaluated in max-shifted form (with
sigma = 0.01, direct exponentiation overflows once |r| > 0.84).  The v
subproblem has the closed-form solution v = sqrt(PT) * xbar / ||xbar||.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError
from .mimo import (
    ChannelRealization,
    RealLiftedProblem,
    SymbolBlock,
    TransmitBlock,
    lift_vector,
    real_lift,
    unlift_matrix,
)
from .ser import MinimaxValue, minimax_objective

__all__ = [
    "BcdConfig",
    "SolverState",
    "BcdIteration",
    "PrecodeResult",
    "zf_precode",
    "one_bit_quantize",
    "onebit_zf_precode",
    "estimate_gain_ls",
    "smoothed_objective",
    "smoothed_gradient",
    "project_feasible",
    "fista_solve",
    "v_update",
    "lipschitz_estimate",
    "refit_gain_minimax",
    "bcd_precode",
]

_MAX_BACKTRACKS = 60
_CONVERGED_STREAK = 5


@dataclass(frozen=True)
class BcdConfig:
    """Tuning knobs for the BCD / FISTA solver.

    ``lambda0`` and ``gamma0`` default to instance-dependent values
    (0.01 * L_hat / sqrt(2NT) and 1 / L_hat^2) when left as None.
    """

    lambda0: float | None = None
    delta: float = 2.0
    period_M: int = 5
    sigma_smooth: float = 0.01
    fista_max_iters: int = 500
    fista_tol: float = 1e-6
    bcd_max_iters: int = 500
    bt_shrink: float = 0.5
    bt_grow: float = 1.1
    gamma0: float | None = None

    def __post_init__(self):
        if self.lambda0 is not None and not self.lambda0 > 0:
            raise ValueError("lambda0 must be positive")
        if not self.delta > 1:
            raise ValueError("delta must exceed 1")
        if self.period_M < 1:
            raise ValueError("period_M must be >= 1")
        if not self.sigma_smooth > 0:
            raise ValueError("sigma_smooth must be positive")
        if self.fista_max_iters < 1 or self.bcd_max_iters < 1:
            raise ValueError("iteration limits must be >= 1")
        if not self.fista_tol > 0:
            raise ValueError("fista_tol must be positive")
        if not 0 < self.bt_shrink < 1:
            raise ValueError("bt_shrink must lie in (0, 1)")
        if not self.bt_grow >= 1:
            raise ValueError("bt_grow must be >= 1")
        if self.gamma0 is not None and not self.gamma0 > 0:
            raise ValueError("gamma0 must be positive")


@dataclass(frozen=True)
class BcdIteration:
    """Per-iteration trace entry recorded by bcd_precode."""

    index: int
    lam: float
    f_smooth_after_xd: float
    f_smooth_after_v: float
    f_exact_after_v: float
    minimax_value: float
    penalty_gap: float
    fista_iters: int


@dataclass
class SolverState:
    """Live state of the BCD solver (feasible at every recorded iteration)."""

    xbar: np.ndarray
    d: float
    v: np.ndarray
    lambda_current: float
    objective_trace: list = field(default_factory=list)
    log_w: float = 0.0

    def assert_feasible(self, lifted: RealLiftedProblem):
        rad = lifted.box_radius
        tol = 1e-12 * max(1.0, rad)
        if np.max(np.abs(self.xbar)) > rad + tol:
            raise AssertionError("xbar left the box constraint")
        if self.d < 0:
            raise AssertionError("gain d became negative")
        if np.dot(self.v, self.v) > lifted.ball_radius_sq * (1 + 1e-12):
            raise AssertionError("v left the ball constraint")


@dataclass(frozen=True)
class PrecodeResult:
    """Output of a precoder run.

    ``d_before_rounding`` and ``minimax_before_rounding`` describe the relaxed
    iterate the BCD solver held before sign rounding; they are None for the
    baselines, which never round.
    """

    X: TransmitBlock
    d: float
    final_objective: MinimaxValue
    bcd_iterations: int
    fista_iterations_total: int
    binarity_gap: float | None
    trace: tuple = ()
    d_before_rounding: float | None = None
    minimax_before_rounding: float | None = None


# ---------------------------------------------------------------------------
# baselines


def zf_precode(H: ChannelRealization, S: SymbolBlock, P: float) -> PrecodeResult:
    """Zero-forcing precoding X = beta * H^H (H H^H)^-1 S.

    beta is chosen so that E[||x_t||^2] = P under i.i.d. symbols with the
    constellation's mean energy; the users then see H x_t = beta * s_t.
    """
    Hc = H.entries
    G = Hc @ Hc.conj().T
    cond = float(np.linalg.cond(G))
    if not np.isfinite(cond) or cond >= 1e12:
        raise NumericalError(f"channel Gram matrix is ill conditioned (cond={cond:.3e})")
    A = Hc.conj().T @ np.linalg.inv(G)
    es = S.constellation.mean_energy
    beta = float(np.sqrt(P / (es * np.sum(np.abs(A) ** 2))))
    X = TransmitBlock(entries=beta * (A @ S.entries), power_budget=P, onebit=False)
    lifted = real_lift(H, S, P)
    obj = minimax_objective(lifted, lift_vector(X.entries), beta)
    return PrecodeResult(
        X=X,
        d=beta,
        final_objective=obj,
        bcd_iterations=0,
        fista_iterations_total=0,
        binarity_gap=None,
    )


def one_bit_quantize(X: TransmitBlock) -> TransmitBlock:
    """Quantize each entry to sqrt(P/2N) * (sign(Re) + j sign(Im)), sign(0) = +1."""
    rad = np.sqrt(X.power_budget / (2 * X.N))
    E = X.entries
    q = rad * (np.where(E.real >= 0, 1.0, -1.0) + 1j * np.where(E.imag >= 0, 1.0, -1.0))
    return TransmitBlock(entries=q, power_budget=X.power_budget, onebit=True)


def estimate_gain_ls(H: ChannelRealization, X: TransmitBlock, S: SymbolBlock) -> float:
    """Least-squares receive gain: argmin_d ||H X - d S||_F, clamped at 0."""
    energy = float(np.sum(np.abs(S.entries) ** 2))
    if energy == 0.0:
        raise ValueError("symbol block has zero energy")
    Y = H.entries @ X.entries
    return max(0.0, float(np.real(np.vdot(S.entries, Y))) / energy)


def onebit_zf_precode(H: ChannelRealization, S: SymbolBlock, P: float) -> PrecodeResult:
    """Quantized zero-forcing: sign-quantize the ZF block, refit d by LS."""
    zf = zf_precode(H, S, P)
    Xq = one_bit_quantize(zf.X)
    d = estimate_gain_ls(H, Xq, S)
    lifted = real_lift(H, S, P)
    obj = minimax_objective(lifted, lift_vector(Xq.entries), d)
    return PrecodeResult(
        X=Xq,
        d=d,
        final_objective=obj,
        bcd_iterations=0,
        fista_iterations_total=0,
        binarity_gap=0.0,
    )


# ---------------------------------------------------------------------------
# smoothed objective and gradient (matrix-form internals)


def _smooth_parts(Hbar, Sbar, Xbar, d, sigma):
    """Residual matrix, shifted LSE value and the exact residual sup-norm."""
    R = Hbar @ Xbar - d * Sbar
    A = (R * R) / sigma
    m = float(A.max())
    E = np.exp(A - m)
    sum_e = float(E.sum())
    log_w = m + np.log(sum_e)
    r_inf = np.sqrt(sigma * m)
    smooth = np.sqrt(sigma * log_w)
    # LSE sandwich: ||r||_inf <= smooth <= sqrt(||r||_inf^2 + sigma*log(2KT))
    assert r_inf <= smooth * (1 + 1e-12) + 1e-300
    assert smooth <= np.sqrt(r_inf * r_inf + sigma * np.log(R.size)) + 1e-12
    return R, E, sum_e, log_w, smooth, r_inf


def _objective_mat(Hbar, Sbar, Xbar, d, Vmat, lam, sigma, pt):
    _, _, _, log_w, smooth, _ = _smooth_parts(Hbar, Sbar, Xbar, d, sigma)
    f = smooth - d + lam * (pt - float(np.vdot(Xbar, Vmat)))
    return float(f), float(log_w)


def _gradient_mat(Hbar, Sbar, Xbar, d, Vmat, lam, sigma, pt):
    R, E, sum_e, log_w, smooth, _ = _smooth_parts(Hbar, Sbar, Xbar, d, sigma)
    f = float(smooth - d + lam * (pt - float(np.vdot(Xbar, Vmat))))
    denom = smooth  # sqrt(sigma * log_w)
    if denom <= 1e-300:
        # subgradient limit when every residual vanishes; keep only the
        # penalty and -d terms (cannot occur for 2KT >= 2, kept as a guard)
        warnings.warn("all residuals vanished; using subgradient limit", RuntimeWarning)
        gX = -lam * Vmat
        gd = -1.0
        return f, gX, gd, float(log_w)
    G = (E / sum_e) * R  # softmax-weighted residuals
    gX = (Hbar.T @ G) / denom
    gX -= lam * Vmat
    gd = -float(np.sum(G * Sbar)) / denom - 1.0
    return f, gX, gd, float(log_w)


def _as_mat(vec, N, T):
    return np.asarray(vec, dtype=float).reshape((2 * N, T), order="F")


def smoothed_objective(lifted, xbar, d, v, lam, sigma_smooth):
    """Smoothed penalty objective at (xbar, d, v); returns (value, log W)."""
    if not sigma_smooth > 0:
        raise ValueError("smoothing parameter must be positive")
    Xbar = _as_mat(xbar, lifted.N, lifted.T)
    Vmat = _as_mat(v, lifted.N, lifted.T)
    return _objective_mat(
        lifted.Hbar, lifted.Sbar, Xbar, float(d), Vmat, float(lam), float(sigma_smooth),
        lifted.ball_radius_sq,
    )


def smoothed_gradient(lifted, xbar, d, v, lam, sigma_smooth):
    """Analytic gradient of the smoothed objective w.r.t. (xbar, d)."""
    if not sigma_smooth > 0:
        raise ValueError("smoothing parameter must be positive")
    Xbar = _as_mat(xbar, lifted.N, lifted.T)
    Vmat = _as_mat(v, lifted.N, lifted.T)
    _, gX, gd, _ = _gradient_mat(
        lifted.Hbar, lifted.Sbar, Xbar, float(d), Vmat, float(lam), float(sigma_smooth),
        lifted.ball_radius_sq,
    )
    return gX.flatten(order="F"), gd


def project_feasible(xbar, d, box_radius):
    """Euclidean projection onto the box x [0, inf) feasible set."""
    return np.clip(xbar, -box_radius, box_radius), max(float(d), 0.0)


def v_update(xbar, P, T):
    """Closed-form maximizer of xbar.v over the ball ||v||^2 <= PT."""
    xbar = np.asarray(xbar, dtype=float)
    norm = float(np.linalg.norm(xbar))
    if norm == 0.0:
        return np.zeros_like(xbar)
    return (np.sqrt(P * T) / norm) * xbar


def lipschitz_estimate(lifted: RealLiftedProblem) -> float:
    """Lipschitz constant of the exact minimax objective in (xbar, d).

    Each residual row has gradient (hhat_i, -sbar_i); the -d term adds 1.
    """
    row_sq = np.sum(lifted.Hbar * lifted.Hbar, axis=1)
    s_sq_max = np.max(lifted.Sbar * lifted.Sbar, axis=1)
    return float(np.sqrt(np.max(row_sq + s_sq_max)) + 1.0)


# ---------------------------------------------------------------------------
# inner FISTA solver


def _fista_mat(lifted, Vmat, lam, Xbar0, d0, cfg, gamma0):
    """Monotone projected FISTA on the smoothed subproblem (fixed v, lam)."""
    Hbar, Sbar = lifted.Hbar, lifted.Sbar
    sigma = cfg.sigma_smooth
    pt = lifted.ball_radius_sq
    rad = lifted.box_radius

    Z = np.clip(Xbar0, -rad, rad)
    zd = max(float(d0), 0.0)
    Z_prev, zd_prev = Z, zd
    f_z, _ = _objective_mat(Hbar, Sbar, Z, zd, Vmat, lam, sigma, pt)
    if not np.isfinite(f_z):
        raise NumericalError(f"non-finite warm-start objective (lam={lam:.3e})")
    f_start = f_z

    gamma = gamma0
    t = 1.0
    streak = 0
    iters = 0

    def _step_from(W, wd, f_w, gX, gd, gamma):
        for _ in range(_MAX_BACKTRACKS):
            Zc = np.clip(W - gamma * gX, -rad, rad)
            zdc = max(wd - gamma * gd, 0.0)
            f_c, _ = _objective_mat(Hbar, Sbar, Zc, zdc, Vmat, lam, sigma, pt)
            if not np.isfinite(f_c):
                raise NumericalError(
                    f"non-finite objective during line search (lam={lam:.3e}, gamma={gamma:.3e})"
                )
            dX = Zc - W
            dd = zdc - wd
            rhs = f_w + float(np.vdot(gX, dX)) + gd * dd
            rhs += (float(np.vdot(dX, dX)) + dd * dd) / (2.0 * gamma)
            if f_c <= rhs + 1e-12 * max(1.0, abs(f_w)):
                return Zc, zdc, f_c, gamma
            gamma *= cfg.bt_shrink
        raise NumericalError(
            f"backtracking failed after {_MAX_BACKTRACKS} halvings (lam={lam:.3e})"
        )

    for _ in range(cfg.fista_max_iters):
        iters += 1
        gamma *= cfg.bt_grow
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        coef = (t - 1.0) / t_next
        W = Z + coef * (Z - Z_prev)
        wd = zd + coef * (zd - zd_prev)
        f_w, gX, gd, _ = _gradient_mat(Hbar, Sbar, W, wd, Vmat, lam, sigma, pt)
        if not np.isfinite(f_w):
            raise NumericalError(f"non-finite objective at momentum point (lam={lam:.3e})")
        Z_new, zd_new, f_new, gamma = _step_from(W, wd, f_w, gX, gd, gamma)

        if f_new > f_z:
            # momentum overshoot: restart and take a plain projected-gradient
            # step from the current iterate, which cannot ascend
            t_next = 1.0
            f_w, gX, gd, _ = _gradient_mat(Hbar, Sbar, Z, zd, Vmat, lam, sigma, pt)
            Z_new, zd_new, f_new, gamma = _step_from(Z, zd, f_w, gX, gd, gamma)

        Z_prev, zd_prev = Z, zd
        Z, zd = Z_new, zd_new
        t = t_next

        if abs(f_new - f_z) <= cfg.fista_tol * (1.0 + abs(f_z)):
            streak += 1
        else:
            streak = 0
        f_z = f_new
        if streak >= _CONVERGED_STREAK:
            break

    assert f_z <= f_start + 1e-12 * max(1.0, abs(f_start))
    return Z, zd, iters, f_z


def fista_solve(lifted, v, lam, warm, cfg: BcdConfig):
    """Solve the smoothed (xbar, d) subproblem from a feasible warm start.

    Returns (xbar, d, iterations); the result is feasible and its objective
    never exceeds the warm start's.
    """
    xbar0, d0 = warm
    Xbar0 = _as_mat(xbar0, lifted.N, lifted.T)
    Vmat = _as_mat(v, lifted.N, lifted.T)
    gamma0 = cfg.gamma0 if cfg.gamma0 is not None else 1.0 / lipschitz_estimate(lifted) ** 2
    Z, zd, iters, _ = _fista_mat(lifted, Vmat, float(lam), Xbar0, float(d0), cfg, gamma0)
    return Z.flatten(order="F"), zd, iters


# ---------------------------------------------------------------------------
# exact 1-D gain refit


def refit_gain_minimax(lifted: RealLiftedProblem, Xbar: np.ndarray) -> float:
    """Exact minimizer over d >= 0 of max_i |c_i - d*sbar_i| - d for fixed Xbar.

    The objective is the upper envelope of the 4KT affine pieces
    +-(c_i - d*sbar_i) - d; its minimum sits at d = 0 or at an envelope
    vertex, all of which are enumerated.
    """
    c = (lifted.Hbar @ np.asarray(Xbar, dtype=float)).flatten(order="F")
    s = lifted.sbar
    slopes = np.concatenate([-s - 1.0, s - 1.0])
    intercepts = np.concatenate([c, -c])

    order = np.lexsort((-intercepts, slopes))
    a = slopes[order]
    b = intercepts[order]
    keep = np.ones(a.size, dtype=bool)
    keep[1:] = a[1:] != a[:-1]  # per slope keep the largest intercept
    a, b = a[keep], b[keep]

    hull_a: list[float] = []
    hull_b: list[float] = []
    for ai, bi in zip(a, b):
        while len(hull_a) >= 2:
            # drop the last hull line once the new line overtakes it no later
            # than the previous one did
            x_prev = (hull_b[-1] - hull_b[-2]) / (hull_a[-2] - hull_a[-1])
            x_new = (bi - hull_b[-2]) / (hull_a[-2] - ai)
            if x_new <= x_prev:
                hull_a.pop()
                hull_b.pop()
            else:
                break
        hull_a.append(ai)
        hull_b.append(bi)

    ha = np.array(hull_a)
    hb = np.array(hull_b)
    vertices = (hb[:-1] - hb[1:]) / (ha[1:] - ha[:-1])
    candidates = np.concatenate([[0.0], vertices[vertices > 0.0]])
    values = np.max(slopes[None, :] * candidates[:, None] + intercepts[None, :], axis=1)
    return float(candidates[int(np.argmin(values))])


# ---------------------------------------------------------------------------
# outer BCD loop


def bcd_precode(
    H: ChannelRealization,
    S: SymbolBlock,
    P: float,
    cfg: BcdConfig | None = None,
) -> PrecodeResult:
    """One-bit precoding by penalty continuation.

    Alternates the FISTA (xbar, d) update with the closed-form v update,
    multiplying lam by delta every period_M iterations, and stops once lam
    exceeds twice the Lipschitz constant of the exact objective.  The final
    xbar is sign-rounded to the one-bit alphabet and d is refit exactly.
    """
    if cfg is None:
        cfg = BcdConfig()
    lifted = real_lift(H, S, P)
    l_hat = lipschitz_estimate(lifted)
    n_vars = lifted.n_vars
    lam = float(cfg.lambda0 if cfg.lambda0 is not None else 0.01 * l_hat / np.sqrt(n_vars))
    gamma0 = float(cfg.gamma0 if cfg.gamma0 is not None else 1.0 / l_hat**2)
    pt = lifted.ball_radius_sq
    rad = lifted.box_radius
    sigma = cfg.sigma_smooth

    Xbar = np.zeros((2 * lifted.N, lifted.T))
    d = 1.0
    Vmat = np.zeros_like(Xbar)
    state = SolverState(
        xbar=Xbar.flatten(order="F"), d=d, v=Vmat.flatten(order="F"), lambda_current=lam
    )

    fista_total = 0
    m = 0
    while m < cfg.bcd_max_iters and lam <= 2.0 * l_hat:
        Xbar, d, iters, f_after_xd = _fista_mat(lifted, Vmat, lam, Xbar, d, cfg, gamma0)
        fista_total += iters

        v_flat = v_update(Xbar.flatten(order="F"), P, lifted.T)
        Vmat = v_flat.reshape(Xbar.shape, order="F")
        f_after_v, log_w = _objective_mat(
            lifted.Hbar, lifted.Sbar, Xbar, d, Vmat, lam, sigma, pt
        )
        penalty_gap = pt - float(np.vdot(Xbar, Vmat))
        # Cauchy-Schwarz over the feasible set guarantees PT - xbar.v >= 0
        assert penalty_gap >= -1e-9 * max(1.0, pt)
        exact = minimax_objective(lifted, Xbar, d)
        f_exact = float(exact.value + lam * penalty_gap)

        m += 1
        state.xbar = Xbar.flatten(order="F")
        state.d = d
        state.v = v_flat
        state.lambda_current = lam
        state.log_w = log_w
        state.assert_feasible(lifted)
        state.objective_trace.append(
            BcdIteration(
                index=m,
                lam=lam,
                f_smooth_after_xd=f_after_xd,
                f_smooth_after_v=f_after_v,
                f_exact_after_v=f_exact,
                minimax_value=exact.value,
                penalty_gap=penalty_gap,
                fista_iters=iters,
            )
        )
        if m % cfg.period_M == 0:
            lam *= cfg.delta

    minimax_before = minimax_objective(lifted, Xbar, d)
    binarity_gap = float(np.max(np.abs(np.abs(Xbar) - rad)) / rad)
    Xq_complex = unlift_matrix(Xbar)
    q = rad * (
        np.where(Xq_complex.real >= 0, 1.0, -1.0) + 1j * np.where(Xq_complex.imag >= 0, 1.0, -1.0)
    )
    Xbar_round = lift_vector(q)
    d_final = refit_gain_minimax(lifted, Xbar_round)
    final_obj = minimax_objective(lifted, Xbar_round, d_final)
    X = TransmitBlock(entries=q, power_budget=P, onebit=True)
    return PrecodeResult(
        X=X,
        d=d_final,
        final_objective=final_obj,
        bcd_iterations=m,
        fista_iterations_total=fista_total,
        binarity_gap=binarity_gap,
        trace=tuple(state.objective_trace),
        d_before_rounding=d,
        minimax_before_rounding=minimax_before.value,
    )
