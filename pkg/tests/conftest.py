import numpy as np
import pytest

from onebit_mimo import SymbolBlock, gen_rayleigh_channel, make_constellation, map_bits


def draw_instance(N, K, T, L, seed):
    """Seeded (channel, symbol block) pair for solver tests."""
    rng = np.random.default_rng(np.random.SeedSequence((seed, N, K, T, L)))
    c = make_constellation(L)
    H = gen_rayleigh_channel(K, N, rng)
    bits = rng.integers(0, 2, size=K * T * c.bits_per_symbol, dtype=np.int64)
    S = SymbolBlock(map_bits(bits, c).reshape(K, T), c)
    return H, S


@pytest.fixture(scope="session")
def qam16():
    return make_constellation(2)


@pytest.fixture(scope="session")
def qpsk():
    return make_constellation(1)
