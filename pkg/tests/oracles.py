"""Independent reference computations shared by the test modules.

These deliberately avoid the library's own solution paths: the gain fit
enumerates pairwise line crossings instead of building an envelope, and the
one-bit optimum enumerates the full sign alphabet.
"""

import numpy as np


def refit_oracle(lifted, Xbar):
    """Brute-force pairwise line-crossing minimizer for the 1-D gain fit."""
    c = (lifted.Hbar @ Xbar).flatten(order="F")
    s = lifted.sbar
    slopes = np.concatenate([-s - 1.0, s - 1.0])
    inter = np.concatenate([c, -c])
    cands = [0.0]
    n = len(slopes)
    for i in range(n):
        for j in range(i + 1, n):
            if slopes[i] != slopes[j]:
                x = (inter[j] - inter[i]) / (slopes[i] - slopes[j])
                if x > 0:
                    cands.append(float(x))
    values = [float(np.max(slopes * d + inter)) for d in cands]
    k = int(np.argmin(values))
    return cands[k], values[k]


def exhaustive_onebit_optimum(lifted):
    """Best exact minimax value over every one-bit block with per-point gain fit."""
    rad = lifted.box_radius
    n = lifted.n_vars
    best = np.inf
    for mask in range(2**n):
        x = rad * np.array([1.0 if (mask >> j) & 1 else -1.0 for j in range(n)])
        Xbar = x.reshape(2 * lifted.N, lifted.T, order="F")
        _, val = refit_oracle(lifted, Xbar)
        best = min(best, val)
    return best
