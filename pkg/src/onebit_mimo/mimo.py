"""Channel model, square-QAM constellations, modulation/detection and the
complex-to-real lifting used by the precoder and the simulation harness.

Conventions: the downlink channel is a K x N complex matrix H whose rows are
the per-user channels h_i^T (plain transpose, no conjugation anywhere).  A
transmit block is N x T, a symbol block K x T.  All randomness flows through
explicit ``numpy.random.Generator`` handles so that every draw is replayable.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ChannelRealization",
    "QamConstellation",
    "SymbolBlock",
    "TransmitBlock",
    "RealLiftedProblem",
    "NoiseModel",
    "gen_rayleigh_channel",
    "make_constellation",
    "real_lift",
    "lift_vector",
    "unlift_matrix",
    "detect",
    "map_bits",
    "unmap_symbols",
    "apply_channel_awgn",
]


@dataclass(frozen=True)
class ChannelRealization:
    """One block-fading downlink channel H (K users x N BS antennas)."""

    entries: np.ndarray

    def __post_init__(self):
        H = np.asarray(self.entries, dtype=complex)
        if H.ndim != 2 or H.shape[0] < 1 or H.shape[1] < 1:
            raise ValueError(f"channel must be a K x N matrix with K,N >= 1, got shape {H.shape}")
        if not np.all(np.isfinite(H.real)) or not np.all(np.isfinite(H.imag)):
            raise ValueError("channel entries must be finite")
        if H.shape[0] > H.shape[1]:
            raise ValueError(f"K={H.shape[0]} users exceed N={H.shape[1]} antennas; K <= N is required")
        object.__setattr__(self, "entries", H)

    @property
    def K(self) -> int:
        return self.entries.shape[0]

    @property
    def N(self) -> int:
        return self.entries.shape[1]


@dataclass(frozen=True)
class QamConstellation:
    """Square QAM of order L: per-dimension levels +-1, +-3, ..., +-(2L-1).

    Points are unnormalized (the gain factor d absorbs all scaling) and carry
    reflected-Gray bit labels, one label per point, I bits first.
    """

    order: int
    points: np.ndarray = field(repr=False)
    bit_labels: tuple = field(repr=False)
    per_dim_levels: np.ndarray = field(repr=False)

    @property
    def bits_per_symbol(self) -> int:
        return 2 * int(np.log2(2 * self.order))

    @property
    def mean_energy(self) -> float:
        """Average |s|^2 over the constellation: 2*(4L^2-1)/3."""
        return float(np.mean(np.abs(self.points) ** 2))

    def contains(self, symbols) -> bool:
        s = np.asarray(symbols)
        lv = self.per_dim_levels
        return bool(np.all(np.isin(s.real, lv)) and np.all(np.isin(s.imag, lv)))


@dataclass(frozen=True)
class SymbolBlock:
    """K x T matrix of constellation symbols with its constellation attached."""

    entries: np.ndarray
    constellation: QamConstellation

    def __post_init__(self):
        S = np.asarray(self.entries, dtype=complex)
        if S.ndim != 2:
            raise ValueError("symbol block must be a K x T matrix")
        if not self.constellation.contains(S):
            raise ValueError("symbol block contains entries outside the constellation")
        object.__setattr__(self, "entries", S)

    @property
    def K(self) -> int:
        return self.entries.shape[0]

    @property
    def T(self) -> int:
        return self.entries.shape[1]


@dataclass(frozen=True)
class TransmitBlock:
    """N x T transmit signal with total BS power budget P.

    With ``onebit=True`` every entry must be exactly sqrt(P/2N)*(+-1 +- j).
    Infinite-resolution blocks (ZF) satisfy the power budget only in
    expectation over symbols, which is not checkable per instance.
    """

    entries: np.ndarray
    power_budget: float
    onebit: bool

    def __post_init__(self):
        X = np.asarray(self.entries, dtype=complex)
        if X.ndim != 2:
            raise ValueError("transmit block must be an N x T matrix")
        if not self.power_budget > 0:
            raise ValueError("power budget must be positive")
        if self.onebit:
            rad = np.sqrt(self.power_budget / (2 * X.shape[0]))
            if not (np.all(np.abs(X.real) == rad) and np.all(np.abs(X.imag) == rad)):
                raise ValueError("one-bit block entries must equal sqrt(P/2N)*(+-1 +- j) exactly")
        object.__setattr__(self, "entries", X)

    @property
    def N(self) -> int:
        return self.entries.shape[0]

    @property
    def T(self) -> int:
        return self.entries.shape[1]


@dataclass(frozen=True)
class RealLiftedProblem:
    """Real-valued form of one precoding instance.

    Hbar is the 2K x 2N block lifting [[Re H, -Im H], [Im H, Re H]], Sbar the
    2K x T stack [Re S; Im S] and sbar its column-major vectorization.  The
    T-fold block-diagonal matrix I_T (x) Hbar is never materialized; products
    against it are evaluated column-block-wise as Hbar @ Xbar.
    """

    Hbar: np.ndarray
    Sbar: np.ndarray
    sbar: np.ndarray
    box_radius: float
    ball_radius_sq: float
    K: int
    N: int
    T: int

    @property
    def n_vars(self) -> int:
        return 2 * self.N * self.T


@dataclass(frozen=True)
class NoiseModel:
    """Circularly symmetric complex AWGN with per-complex-dimension variance
    sigma_n_sq (each real component has variance sigma_n_sq / 2).

    sigma_n_sq = 0 is allowed and makes the channel deterministic.
    """

    sigma_n_sq: float

    def __post_init__(self):
        if not self.sigma_n_sq >= 0:
            raise ValueError("noise variance must be >= 0")


def gen_rayleigh_channel(K: int, N: int, rng: np.random.Generator) -> ChannelRealization:
    """Draw H with i.i.d. CN(0, 1) entries (block Rayleigh fading)."""
    if K < 1 or N < 1:
        raise ValueError(f"need K >= 1 and N >= 1, got K={K}, N={N}")
    H = (rng.standard_normal((K, N)) + 1j * rng.standard_normal((K, N))) / np.sqrt(2.0)
    return ChannelRealization(H)


def _gray(i: int) -> int:
    return i ^ (i >> 1)


def _gray_decode(g: int) -> int:
    n = g
    g >>= 1
    while g:
        n ^= g
        g >>= 1
    return n


def make_constellation(L: int) -> QamConstellation:
    """Build the order-L square QAM with reflected-Gray per-dimension labels.

    L must be a power of two; L=1 is QPSK, L=2 is 16-QAM, L=4 is 64-QAM.
    """
    if L < 1 or (L & (L - 1)) != 0:
        raise ValueError(f"QAM order L must be a power of two, got {L}")
    n_levels = 2 * L
    levels = np.arange(-(2 * L - 1), 2 * L, 2, dtype=float)  # ascending odd levels
    bits_per_dim = int(np.log2(n_levels))
    points = np.empty(n_levels * n_levels, dtype=complex)
    labels = []
    for a in range(n_levels):
        for b in range(n_levels):
            points[a * n_levels + b] = levels[a] + 1j * levels[b]
            lab = format(_gray(a), f"0{bits_per_dim}b") + format(_gray(b), f"0{bits_per_dim}b")
            labels.append(lab)
    return QamConstellation(order=L, points=points, bit_labels=tuple(labels), per_dim_levels=levels)


def real_lift(H: ChannelRealization, S: SymbolBlock, P: float) -> RealLiftedProblem:
    """Lift a complex instance (H, S, P) to its real block form."""
    if not P > 0:
        raise ValueError("power budget must be positive")
    Hc = H.entries
    Sc = S.entries
    if Sc.shape[0] != H.K:
        raise ValueError(f"symbol block has {Sc.shape[0]} rows but channel has K={H.K}")
    Hbar = np.block([[Hc.real, -Hc.imag], [Hc.imag, Hc.real]])
    Sbar = np.vstack([Sc.real, Sc.imag])
    sbar = Sbar.flatten(order="F")
    return RealLiftedProblem(
        Hbar=np.ascontiguousarray(Hbar),
        Sbar=np.ascontiguousarray(Sbar),
        sbar=sbar,
        box_radius=float(np.sqrt(P / (2 * H.N))),
        ball_radius_sq=float(P * S.T),
        K=H.K,
        N=H.N,
        T=S.T,
    )


def lift_vector(x: np.ndarray) -> np.ndarray:
    """Complex vector/matrix -> stacked real form [Re x; Im x]."""
    x = np.asarray(x)
    return np.concatenate([x.real, x.imag], axis=0)


def unlift_matrix(Xbar: np.ndarray) -> np.ndarray:
    """Inverse of lift_vector for a 2N x T real matrix."""
    n2 = Xbar.shape[0]
    if n2 % 2 != 0:
        raise ValueError("lifted matrix must have an even number of rows")
    N = n2 // 2
    return Xbar[:N] + 1j * Xbar[N:]


def detect(y, d: float, c: QamConstellation):
    """Map received samples to the nearest constellation point of y/d.

    The decision is taken independently per real dimension with clamping to
    the outermost level.  Accepts scalars or arrays.
    """
    if not d > 0:
        raise ValueError(f"gain d must be positive, got {d}")
    y = np.asarray(y, dtype=complex) / d
    top = 2 * c.order - 1

    def _nearest(v):
        idx = np.clip(np.rint((v + top) / 2.0), 0, 2 * c.order - 1)
        return 2.0 * idx - top

    out = _nearest(y.real) + 1j * _nearest(y.imag)
    return out if out.ndim else complex(out)


def map_bits(bits, c: QamConstellation) -> np.ndarray:
    """Gray-map a 0/1 bit array onto constellation symbols (flat array)."""
    bits = np.asarray(bits, dtype=np.int64)
    bps = c.bits_per_symbol
    if bits.ndim != 1 or bits.size % bps != 0:
        raise ValueError(f"bit count must be a multiple of {bps}")
    if bits.size and not np.all((bits == 0) | (bits == 1)):
        raise ValueError("bits must be 0 or 1")
    half = bps // 2
    groups = bits.reshape(-1, bps)
    weights = 1 << np.arange(half - 1, -1, -1)
    g_i = groups[:, :half] @ weights
    g_q = groups[:, half:] @ weights
    decode = np.array([_gray_decode(g) for g in range(2 * c.order)])
    levels = c.per_dim_levels
    return levels[decode[g_i]] + 1j * levels[decode[g_q]]


def unmap_symbols(symbols, c: QamConstellation) -> np.ndarray:
    """Inverse of map_bits: constellation symbols -> flat 0/1 bit array."""
    s = np.asarray(symbols, dtype=complex).ravel()
    top = 2 * c.order - 1
    half = c.bits_per_symbol // 2

    def _indices(v):
        idx = np.rint((v + top) / 2.0).astype(np.int64)
        return np.clip(idx, 0, 2 * c.order - 1)

    gray = np.array([_gray(i) for i in range(2 * c.order)])
    g_i = gray[_indices(s.real)]
    g_q = gray[_indices(s.imag)]
    shifts = np.arange(half - 1, -1, -1)
    bits_i = (g_i[:, None] >> shifts) & 1
    bits_q = (g_q[:, None] >> shifts) & 1
    return np.hstack([bits_i, bits_q]).ravel()


def apply_channel_awgn(
    H: ChannelRealization,
    X: TransmitBlock,
    noise: NoiseModel,
    rng: np.random.Generator,
) -> np.ndarray:
    """Received block Y = H @ X + N with circularly symmetric AWGN."""
    if X.N != H.N:
        raise ValueError(f"transmit block has N={X.N} but channel has N={H.N}")
    shape = (H.K, X.T)
    scale = np.sqrt(noise.sigma_n_sq / 2.0)
    noise_block = scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
    return H.entries @ X.entries + noise_block
