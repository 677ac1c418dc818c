"""Gaussian tail function, per-user symbol-error bounds and the exact
minimax residual objective used for solver evaluation and reporting.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special

from .mimo import RealLiftedProblem

__all__ = [
    "SepBound",
    "MinimaxValue",
    "SepChainReport",
    "q_function",
    "sep_bounds",
    "minimax_objective",
    "sep_chain_check",
]


@dataclass(frozen=True)
class SepBound:
    """Upper bounds 2*Q(.) on the in-phase / quadrature symbol error of one
    user at one symbol time.  Each member lies in [0, 2]; the deep tail can
    underflow to exactly 0 in double precision.
    """

    m_r: float
    m_i: float

    def __post_init__(self):
        for v in (self.m_r, self.m_i):
            if not (0.0 <= v <= 2.0):
                raise ValueError(f"bound component {v} outside [0, 2]")

    @property
    def total(self) -> float:
        """The combined bound 2*max(m_r, m_i) on the symbol error probability."""
        return 2.0 * max(self.m_r, self.m_i)


@dataclass(frozen=True)
class MinimaxValue:
    """Worst lifted residual minus gain, with its argmax location.

    ``row`` indexes the 2K lifted user dimensions (0..K-1 in-phase, K..2K-1
    quadrature), ``col`` the symbol time.  Ties resolve to the lowest row,
    then the lowest column.
    """

    value: float
    row: int
    col: int


@dataclass(frozen=True)
class SepChainReport:
    """Outcome of the statistical empirical-SEP vs bound comparison."""

    empirical_sep: float
    bound: float
    std_error: float
    trials: int
    passed: bool


def q_function(x):
    """Gaussian tail probability Q(x) = P(Z > x), Z standard normal.

    Uses 0.5*erfc(x/sqrt(2)) on the right half line and the reflection
    1 - Q(-x) on the left, which keeps full relative accuracy in both tails.
    """
    x = np.asarray(x, dtype=float)
    if np.any(np.isnan(x)):
        raise ValueError("q_function input must not be NaN")
    tail = 0.5 * special.erfc(np.abs(x) / np.sqrt(2.0))
    out = np.where(x >= 0, tail, 1.0 - tail)
    return out if out.ndim else float(out)


def sep_bounds(h_i, x_t, d: float, s, sigma_n_sq: float) -> SepBound:
    """Per-dimension error bounds 2*Q((d - |residual|) / (sigma_n/sqrt(2))).

    h_i and x_t are the complex channel row and transmit vector; the residual
    is h_i^T x_t - d*s split into real and imaginary parts.
    """
    if d < 0:
        raise ValueError("gain d must be >= 0")
    if not sigma_n_sq > 0:
        raise ValueError("noise variance must be positive")
    r = np.dot(np.asarray(h_i, dtype=complex), np.asarray(x_t, dtype=complex)) - d * complex(s)
    denom = np.sqrt(sigma_n_sq) / np.sqrt(2.0)
    m_r = 2.0 * q_function((d - abs(r.real)) / denom)
    m_i = 2.0 * q_function((d - abs(r.imag)) / denom)
    return SepBound(m_r=float(m_r), m_i=float(m_i))


def minimax_objective(lifted: RealLiftedProblem, Xbar: np.ndarray, d: float) -> MinimaxValue:
    """Exact value of max_{i,t} |hbar_i^T xbar_t - d*sbar_{i,t}| - d."""
    if d < 0:
        raise ValueError("gain d must be >= 0")
    Xbar = np.asarray(Xbar, dtype=float)
    if Xbar.shape != (2 * lifted.N, lifted.T):
        raise ValueError(f"Xbar must be {2 * lifted.N} x {lifted.T}, got {Xbar.shape}")
    R = np.abs(lifted.Hbar @ Xbar - d * lifted.Sbar)
    flat = int(np.argmax(R))  # row-major: lowest row index wins, then lowest column
    row, col = divmod(flat, lifted.T)
    return MinimaxValue(value=float(R.flat[flat] - d), row=row, col=col)


def sep_chain_check(empirical_sep: float, bound: SepBound, trials: int) -> SepChainReport:
    """Compare an empirical SEP estimate against 2*max(m_r, m_i).

    The comparison allows three binomial standard errors of the estimate, so
    it is a statistical check rather than a hard inequality.
    """
    if trials < 1:
        raise ValueError("need at least one trial")
    if not 0.0 <= empirical_sep <= 1.0:
        raise ValueError("empirical SEP must be a probability")
    p = empirical_sep
    std_error = float(np.sqrt(p * (1.0 - p) / trials))
    limit = bound.total + 3.0 * std_error
    return SepChainReport(
        empirical_sep=p,
        bound=bound.total,
        std_error=std_error,
        trials=trials,
        passed=p <= limit,
    )
