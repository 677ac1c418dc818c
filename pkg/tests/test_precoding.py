import numpy as np
import pytest

from conftest import draw_instance
from oracles import exhaustive_onebit_optimum, refit_oracle
from onebit_mimo import (
    BcdConfig,
    ChannelRealization,
    NumericalError,
    SymbolBlock,
    TransmitBlock,
    bcd_precode,
    estimate_gain_ls,
    fista_solve,
    lift_vector,
    lipschitz_estimate,
    make_constellation,
    minimax_objective,
    one_bit_quantize,
    onebit_zf_precode,
    project_feasible,
    real_lift,
    refit_gain_minimax,
    smoothed_gradient,
    smoothed_objective,
    v_update,
    zf_precode,
)


class TestZeroForcing:
    def test_scalar_closed_form(self, qpsk):
        H = ChannelRealization(np.array([[2.0 + 0j]]))
        S = SymbolBlock(np.array([[1 + 1j]]), qpsk)
        res = zf_precode(H, S, P=1.0)
        # A = 1/2, ||A||_F^2 = 1/4, E_s = 2 -> beta = sqrt(1 / (2 * 1/4)) = sqrt(2)
        assert np.isclose(res.d, np.sqrt(2.0))
        np.testing.assert_allclose(res.X.entries, np.array([[np.sqrt(2) / 2 * (1 + 1j)]]))
        resid = H.entries @ res.X.entries - res.d * S.entries
        assert np.max(np.abs(resid)) <= 1e-12

    def test_zero_forcing_residual(self, qam16):
        for seed in range(5):
            H, S = draw_instance(8, 3, 4, 2, seed)
            res = zf_precode(H, S, P=1.0)
            resid = H.entries @ res.X.entries - res.d * S.entries
            assert np.max(np.abs(resid)) <= 1e-10 * res.d * np.max(np.abs(S.entries))

    def test_power_normalization_uses_mean_energy(self, qam16):
        H, S = draw_instance(6, 2, 3, 2, 11)
        res = zf_precode(H, S, P=4.0)
        G = H.entries @ H.entries.conj().T
        A = H.entries.conj().T @ np.linalg.inv(G)
        beta = np.sqrt(4.0 / (10.0 * np.sum(np.abs(A) ** 2)))  # E_s = 10 for 16-QAM
        assert np.isclose(res.d, beta)

    def test_rank_deficient_channel_raises(self, qpsk):
        H = ChannelRealization(np.array([[1.0 + 0j, 1.0], [1.0, 1.0]]))
        S = SymbolBlock(np.full((2, 1), 1 + 1j), qpsk)
        with pytest.raises(NumericalError, match="cond"):
            zf_precode(H, S, P=1.0)

    def test_exact_objective_is_minus_gain(self, qam16):
        H, S = draw_instance(8, 2, 2, 2, 3)
        res = zf_precode(H, S, P=1.0)
        assert np.isclose(res.final_objective.value, -res.d, atol=1e-10)
        assert res.binarity_gap is None


class TestOneBitQuantize:
    def test_signs(self):
        X = TransmitBlock(np.array([[0.3 - 7.0j]]), power_budget=2.0, onebit=False)
        q = one_bit_quantize(X)  # rad = sqrt(2/2) = 1
        assert q.entries[0, 0] == 1 - 1j
        assert q.onebit

    def test_zero_ties_to_plus(self):
        X = TransmitBlock(np.array([[0.0 + 0.0j]]), power_budget=8.0, onebit=False)
        q = one_bit_quantize(X)
        rad = np.sqrt(8.0 / 2.0)
        assert q.entries[0, 0] == rad * (1 + 1j)

    def test_idempotent(self):
        rng = np.random.default_rng(4)
        X = TransmitBlock(
            rng.standard_normal((4, 3)) + 1j * rng.standard_normal((4, 3)),
            power_budget=1.0,
            onebit=False,
        )
        q1 = one_bit_quantize(X)
        q2 = one_bit_quantize(q1)
        np.testing.assert_array_equal(q1.entries, q2.entries)


class TestGainEstimate:
    def test_exact_scaling(self, qam16):
        H, S = draw_instance(6, 2, 3, 2, 9)
        X = np.linalg.lstsq(H.entries, 3.0 * S.entries, rcond=None)[0]
        Xb = TransmitBlock(X, power_budget=1.0, onebit=False)
        assert np.isclose(estimate_gain_ls(H, Xb, S), 3.0)

    def test_clamps_at_zero(self, qam16):
        H, S = draw_instance(6, 2, 3, 2, 10)
        X = np.linalg.lstsq(H.entries, -S.entries, rcond=None)[0]
        Xb = TransmitBlock(X, power_budget=1.0, onebit=False)
        assert estimate_gain_ls(H, Xb, S) == 0.0

    def test_against_scalar_ls_oracle(self, qam16):
        rng = np.random.default_rng(12)
        H, S = draw_instance(5, 2, 3, 2, 13)
        X = TransmitBlock(
            rng.standard_normal((5, 3)) + 1j * rng.standard_normal((5, 3)),
            power_budget=1.0,
            onebit=False,
        )
        Y = H.entries @ X.entries
        num = np.sum(S.entries.real * Y.real + S.entries.imag * Y.imag)
        oracle = max(0.0, num / np.sum(np.abs(S.entries) ** 2))
        assert np.isclose(estimate_gain_ls(H, X, S), oracle)

    def test_rejects_zero_symbols(self, qam16):
        H = ChannelRealization(np.ones((1, 2)))
        X = TransmitBlock(np.ones((2, 1), dtype=complex), power_budget=1.0, onebit=False)
        S = SymbolBlock(np.full((1, 1), 1 + 1j), qam16)
        zero_S = SymbolBlock.__new__(SymbolBlock)  # bypass membership check for the 0 block
        object.__setattr__(zero_S, "entries", np.zeros((1, 1), dtype=complex))
        object.__setattr__(zero_S, "constellation", qam16)
        with pytest.raises(ValueError):
            estimate_gain_ls(H, X, zero_S)


class TestSmoothedObjective:
    def test_zero_residuals_analytic(self, qam16):
        H, S = draw_instance(4, 2, 3, 2, 1)
        lifted = real_lift(H, S, 1.0)
        n = lifted.n_vars
        sigma = 0.25
        f, log_w = smoothed_objective(lifted, np.zeros(n), 0.0, np.zeros(n), 0.0, sigma)
        assert np.isclose(f, np.sqrt(sigma * np.log(2 * 2 * 3)))
        assert np.isclose(log_w, np.log(12))

    def test_single_residual_sandwich(self, qpsk):
        H = ChannelRealization(np.array([[1.0 + 0j]]))
        S = SymbolBlock(np.array([[1 + 1j]]), qpsk)
        lifted = real_lift(H, S, 1.0)
        sigma = 0.05
        r = 0.4
        xbar = np.array([r, 0.0])
        f, _ = smoothed_objective(lifted, xbar, 0.0, np.zeros(2), 0.0, sigma)
        assert r <= f <= np.sqrt(r * r + sigma * np.log(2.0)) + 1e-12

    def test_penalty_term(self, qam16):
        H, S = draw_instance(4, 2, 2, 2, 2)
        lifted = real_lift(H, S, 1.0)
        rng = np.random.default_rng(0)
        xbar = rng.uniform(-lifted.box_radius, lifted.box_radius, lifted.n_vars)
        v = v_update(xbar, 1.0, 2)
        f0, _ = smoothed_objective(lifted, xbar, 0.5, v, 0.0, 0.1)
        f1, _ = smoothed_objective(lifted, xbar, 0.5, v, 2.0, 0.1)
        gap = lifted.ball_radius_sq - float(xbar @ v)
        assert np.isclose(f1 - f0, 2.0 * gap)

    def test_rejects_bad_sigma(self, qam16):
        H, S = draw_instance(4, 2, 2, 2, 2)
        lifted = real_lift(H, S, 1.0)
        with pytest.raises(ValueError):
            smoothed_objective(lifted, np.zeros(lifted.n_vars), 0.0, np.zeros(lifted.n_vars), 0.0, 0.0)

    def test_overflow_safe_large_residuals(self, qam16):
        # with sigma = 0.01 naive exp overflows once |r| > 0.84
        H, S = draw_instance(4, 2, 2, 2, 5)
        lifted = real_lift(H, S, 1.0)
        xbar = np.full(lifted.n_vars, lifted.box_radius)
        f, log_w = smoothed_objective(lifted, xbar, 30.0, np.zeros(lifted.n_vars), 0.0, 0.01)
        assert np.isfinite(f) and np.isfinite(log_w)


def _fd_gradient(lifted, xbar, d, v, lam, sigma, step=1e-5):
    n = len(xbar)
    g = np.zeros(n + 1)
    for j in range(n):
        e = np.zeros(n)
        e[j] = step
        fp, _ = smoothed_objective(lifted, xbar + e, d, v, lam, sigma)
        fm, _ = smoothed_objective(lifted, xbar - e, d, v, lam, sigma)
        g[j] = (fp - fm) / (2 * step)
    fp, _ = smoothed_objective(lifted, xbar, d + step, v, lam, sigma)
    fm, _ = smoothed_objective(lifted, xbar, d - step, v, lam, sigma)
    g[n] = (fp - fm) / (2 * step)
    return g


class TestSmoothedGradient:
    def test_matches_finite_differences(self, qam16):
        rng = np.random.default_rng(77)
        H, S = draw_instance(4, 2, 2, 2, 77)
        lifted = real_lift(H, S, 1.0)
        xbar = rng.uniform(-0.8, 0.8, lifted.n_vars) * lifted.box_radius
        v = v_update(rng.standard_normal(lifted.n_vars), 1.0, 2) * 0.6
        gx, gd = smoothed_gradient(lifted, xbar, 0.9, v, 0.7, 1.0)
        fd = _fd_gradient(lifted, xbar, 0.9, v, 0.7, 1.0)
        analytic = np.concatenate([gx, [gd]])
        assert np.linalg.norm(analytic - fd) <= 1e-5 * np.linalg.norm(fd)

    def test_lambda_term_vanishes_with_zero_v(self, qam16):
        rng = np.random.default_rng(6)
        H, S = draw_instance(4, 2, 2, 2, 6)
        lifted = real_lift(H, S, 1.0)
        xbar = rng.uniform(-0.5, 0.5, lifted.n_vars) * lifted.box_radius
        zero_v = np.zeros(lifted.n_vars)
        gx_a, gd_a = smoothed_gradient(lifted, xbar, 0.5, zero_v, 5.0, 0.3)
        gx_b, gd_b = smoothed_gradient(lifted, xbar, 0.5, zero_v, 0.0, 0.3)
        np.testing.assert_array_equal(gx_a, gx_b)
        assert gd_a == gd_b

    def test_odd_symmetry_in_x_and_s(self, qam16):
        rng = np.random.default_rng(15)
        H, S = draw_instance(4, 2, 2, 2, 15)
        S_neg = SymbolBlock(-S.entries, qam16)
        lifted = real_lift(H, S, 1.0)
        lifted_neg = real_lift(H, S_neg, 1.0)
        xbar = rng.uniform(-0.5, 0.5, lifted.n_vars) * lifted.box_radius
        zero_v = np.zeros(lifted.n_vars)
        gx, gd = smoothed_gradient(lifted, xbar, 0.4, zero_v, 0.0, 0.2)
        gx_n, gd_n = smoothed_gradient(lifted_neg, -xbar, 0.4, zero_v, 0.0, 0.2)
        np.testing.assert_allclose(gx_n, -gx, atol=1e-12)
        assert np.isclose(gd_n, gd, atol=1e-12)


class TestProjection:
    def test_interior_unchanged(self):
        x = np.array([0.1, -0.2])
        px, pd = project_feasible(x, 0.5, 0.3)
        np.testing.assert_array_equal(px, x)
        assert pd == 0.5

    def test_clamps_box(self):
        px, _ = project_feasible(np.array([10.0 * 0.3]), 0.0, 0.3)
        assert px[0] == 0.3

    def test_clamps_gain(self):
        _, pd = project_feasible(np.zeros(2), -0.3, 1.0)
        assert pd == 0.0


def _grid_zoom_minimum(lifted, sigma, d_max, stages=4, pts=9):
    """Independent dense-grid oracle with successive zooming."""
    rad = lifted.box_radius
    lo = np.array([-rad] * lifted.n_vars + [0.0])
    hi = np.array([rad] * lifted.n_vars + [d_max])
    best_f, best_p = np.inf, None
    for _ in range(stages):
        axes = [np.linspace(lo[j], hi[j], pts) for j in range(len(lo))]
        mesh = np.meshgrid(*axes, indexing="ij")
        pts_flat = np.stack([m.ravel() for m in mesh], axis=1)
        # column-major lifting: coordinates [0, 2N) belong to column t=0, etc.
        G = pts_flat.shape[0]
        R = np.empty((2 * lifted.K, lifted.T, G))
        for t in range(lifted.T):
            cols = pts_flat[:, 2 * lifted.N * t : 2 * lifted.N * (t + 1)].T
            R[:, t, :] = lifted.Hbar @ cols
        R -= pts_flat[:, -1][None, None, :] * lifted.Sbar[:, :, None]
        A = (R * R) / sigma
        m = A.max(axis=(0, 1))
        f = np.sqrt(sigma * (m + np.log(np.exp(A - m).sum(axis=(0, 1))))) - pts_flat[:, -1]
        j = int(np.argmin(f))
        if f[j] < best_f:
            best_f, best_p = float(f[j]), pts_flat[j]
        width = (hi - lo) / (pts - 1)
        lo = np.maximum(best_p - width, np.array([-rad] * lifted.n_vars + [0.0]))
        hi = np.minimum(best_p + width, np.array([rad] * lifted.n_vars + [d_max]))
    return best_f


class TestFista:
    def _tiny_lifted(self):
        c = make_constellation(2)
        H = ChannelRealization(np.array([[0.8 - 0.3j]]))
        S = SymbolBlock(np.array([[3 + 1j, 1 - 3j]]), c)
        return real_lift(H, S, 1.0)

    def test_matches_grid_oracle(self):
        lifted = self._tiny_lifted()
        sigma = 0.5
        cfg = BcdConfig(sigma_smooth=sigma, fista_tol=1e-11, fista_max_iters=4000)
        zero_v = np.zeros(lifted.n_vars)
        xbar, d, _ = fista_solve(lifted, zero_v, 0.0, (np.zeros(lifted.n_vars), 1.0), cfg)
        f, _ = smoothed_objective(lifted, xbar, d, zero_v, 0.0, sigma)
        f_grid = _grid_zoom_minimum(lifted, sigma, d_max=2.0)
        assert abs(f - f_grid) <= 1e-4

    def test_warm_start_at_optimum_stops_fast(self):
        lifted = self._tiny_lifted()
        cfg = BcdConfig(sigma_smooth=0.5, fista_tol=1e-9, fista_max_iters=2000)
        zero_v = np.zeros(lifted.n_vars)
        xbar, d, _ = fista_solve(lifted, zero_v, 0.0, (np.zeros(lifted.n_vars), 1.0), cfg)
        f_opt, _ = smoothed_objective(lifted, xbar, d, zero_v, 0.0, 0.5)
        xbar2, d2, iters = fista_solve(lifted, zero_v, 0.0, (xbar, d), cfg)
        f2, _ = smoothed_objective(lifted, xbar2, d2, zero_v, 0.0, 0.5)
        assert iters <= 5
        assert f2 <= f_opt + 1e-12

    def test_objective_monotone_in_iteration_budget(self):
        lifted = self._tiny_lifted()
        zero_v = np.zeros(lifted.n_vars)
        warm = (np.zeros(lifted.n_vars), 1.0)
        values = []
        for k in range(1, 12):
            cfg = BcdConfig(sigma_smooth=0.2, fista_tol=1e-14, fista_max_iters=k)
            xbar, d, _ = fista_solve(lifted, zero_v, 0.3, warm, cfg)
            f, _ = smoothed_objective(lifted, xbar, d, zero_v, 0.3, 0.2)
            values.append(f)
        assert all(b <= a + 1e-12 for a, b in zip(values, values[1:]))

    def test_result_feasible(self):
        lifted = self._tiny_lifted()
        rng = np.random.default_rng(2)
        v = v_update(rng.standard_normal(lifted.n_vars), 1.0, lifted.T)
        cfg = BcdConfig()
        xbar, d, _ = fista_solve(lifted, v, 1.5, (np.zeros(lifted.n_vars), 1.0), cfg)
        assert np.max(np.abs(xbar)) <= lifted.box_radius + 1e-15
        assert d >= 0


class TestVUpdate:
    def test_axis_vector(self):
        v = v_update(np.array([1.0, 0, 0, 0]), P=2.0, T=2)
        np.testing.assert_allclose(v, [2.0, 0, 0, 0])

    def test_zero_stays_zero(self):
        v = v_update(np.zeros(6), P=1.0, T=3)
        np.testing.assert_array_equal(v, np.zeros(6))

    def test_maximizes_inner_product(self):
        rng = np.random.default_rng(44)
        xbar = rng.standard_normal(12)
        pt = 3.0 * 2
        v = v_update(xbar, P=3.0, T=2)
        assert np.isclose(xbar @ v, np.sqrt(pt) * np.linalg.norm(xbar))
        for _ in range(1000):
            u = rng.standard_normal(12)
            u *= rng.uniform() ** (1 / 12) * np.sqrt(pt) / np.linalg.norm(u)
            assert xbar @ u <= xbar @ v + 1e-12


class TestLipschitz:
    def test_identity_channel(self, qpsk):
        H = ChannelRealization(np.array([[1.0 + 0j]]))
        S = SymbolBlock(np.array([[1 + 1j]]), qpsk)
        lifted = real_lift(H, S, 1.0)  # Hbar = I_2, sbar = (1, 1)
        assert np.isclose(lipschitz_estimate(lifted), np.sqrt(2.0) + 1.0)

    def test_row_norm_scaling(self, qpsk):
        H = ChannelRealization(np.array([[1.0 + 0j]]))
        S = SymbolBlock(np.array([[1 + 1j]]), qpsk)
        for c in [0.5, 2.0, 7.0]:
            Hc = ChannelRealization(c * H.entries)
            lifted = real_lift(Hc, S, 1.0)
            assert np.isclose(lipschitz_estimate(lifted), np.sqrt(c * c + 1.0) + 1.0)

    def test_bounds_objective_variation(self, qam16):
        H, S = draw_instance(4, 2, 2, 2, 19)
        lifted = real_lift(H, S, 1.0)
        l_hat = lipschitz_estimate(lifted)
        rng = np.random.default_rng(23)
        for _ in range(1000):
            Xa, Xb = rng.uniform(-1, 1, size=(2, 2 * 4, 2))
            da, db = rng.uniform(0, 2, size=2)
            va = minimax_objective(lifted, Xa, da).value
            vb = minimax_objective(lifted, Xb, db).value
            dist = np.sqrt(np.sum((Xa - Xb) ** 2) + (da - db) ** 2)
            assert abs(va - vb) <= l_hat * dist + 1e-12


class TestGainRefit:
    @pytest.mark.parametrize("seed", range(8))
    def test_matches_crossing_oracle(self, seed, qam16):
        H, S = draw_instance(3, 2, 2, 2, seed)
        lifted = real_lift(H, S, 1.0)
        rng = np.random.default_rng(seed)
        Xbar = rng.choice([-1.0, 1.0], size=(6, 2)) * lifted.box_radius
        d = refit_gain_minimax(lifted, Xbar)
        _, oracle_val = refit_oracle(lifted, Xbar)
        got = minimax_objective(lifted, Xbar, d).value
        assert got <= oracle_val + 1e-12

    def test_qpsk_flat_tail(self, qpsk):
        # all |sbar| = 1 makes the envelope flat for large d; the refit must
        # still return a finite minimizer
        H, S = draw_instance(2, 1, 1, 1, 0)
        lifted = real_lift(H, S, 1.0)
        Xbar = np.full((4, 1), lifted.box_radius)
        d = refit_gain_minimax(lifted, Xbar)
        assert np.isfinite(d) and d >= 0


class TestBcdPrecode:
    def test_tiny_instance_matches_exhaustive(self, qpsk):
        H = ChannelRealization(np.array([[0.9 + 0.4j]]))
        S = SymbolBlock(np.array([[1 + 1j]]), qpsk)
        lifted = real_lift(H, S, 1.0)
        res = bcd_precode(H, S, 1.0)
        best = exhaustive_onebit_optimum(lifted)
        assert res.final_objective.value <= best + 1e-3
        assert res.final_objective.value >= best - 1e-9

    def test_output_is_exactly_one_bit(self, qam16):
        H, S = draw_instance(6, 2, 3, 2, 31)
        res = bcd_precode(H, S, 1.0)
        rad = np.sqrt(1.0 / 12.0)
        assert np.all(np.abs(res.X.entries.real) == rad)
        assert np.all(np.abs(res.X.entries.imag) == rad)

    def test_trace_penalty_gap_nonnegative(self, qam16):
        H, S = draw_instance(8, 2, 2, 2, 40)
        res = bcd_precode(H, S, 1.0)
        assert len(res.trace) == res.bcd_iterations
        for it in res.trace:
            assert it.penalty_gap >= -1e-9

    def test_per_lambda_monotonicity_small(self, qam16):
        H, S = draw_instance(8, 2, 2, 2, 41)
        res = bcd_precode(H, S, 1.0)
        by_lam = {}
        for it in res.trace:
            by_lam.setdefault(it.lam, []).append(it)
        for its in by_lam.values():
            seq = []
            for it in its:
                seq.extend([it.f_smooth_after_xd, it.f_smooth_after_v])
            for a, b in zip(seq, seq[1:]):
                assert b <= a + 1e-8 * max(1.0, abs(a))

    def test_stops_by_lipschitz_rule(self, qam16):
        H, S = draw_instance(6, 2, 2, 2, 42)
        lifted = real_lift(H, S, 1.0)
        l_hat = lipschitz_estimate(lifted)
        res = bcd_precode(H, S, 1.0)
        assert res.trace[-1].lam <= 2.0 * l_hat
        # one more lambda bump would have crossed the threshold
        cfg = BcdConfig()
        assert res.trace[-1].lam * cfg.delta > 2.0 * l_hat or res.bcd_iterations == cfg.bcd_max_iters

    def test_beats_quantized_zero_forcing(self, qam16):
        wins = 0
        trials = 50
        for seed in range(trials):
            H, S = draw_instance(64, 8, 10, 2, 1000 + seed)
            bcd = bcd_precode(H, S, 1.0)
            baseline = onebit_zf_precode(H, S, 1.0)
            wins += bcd.final_objective.value < baseline.final_objective.value
        assert wins >= int(0.9 * trials)

    def test_binary_attraction_small_instances(self):
        # P = 2N makes the box radius exactly 1, the scaling of the +-1
        # reformulation whose limit behavior this checks
        rng = np.random.default_rng(2024)
        ok_gap = 0
        runs = 100
        for _ in range(runs):
            N = int(rng.integers(1, 5))
            K = int(rng.integers(1, min(N, 2) + 1))
            T = int(rng.integers(1, 3))
            P = 2.0 * N
            H, S = draw_instance(N, K, T, 2, int(rng.integers(0, 10**6)))
            lifted = real_lift(H, S, P)
            res = bcd_precode(H, S, P)
            gap = res.binarity_gap
            if gap > 0.05:
                continue
            ok_gap += 1
            l_hat = lipschitz_estimate(lifted)
            after = minimax_objective(
                lifted, lift_vector(res.X.entries), res.d_before_rounding
            ).value
            change = abs(after - res.minimax_before_rounding)
            assert change <= 0.1 * l_hat * gap * np.sqrt(lifted.n_vars) + 1e-9
        assert ok_gap >= int(0.9 * runs)


class TestBcdConfig:
    @pytest.mark.parametrize(
        "kwargs",
        [
            {"lambda0": -1.0},
            {"delta": 1.0},
            {"period_M": 0},
            {"sigma_smooth": 0.0},
            {"fista_tol": 0.0},
            {"bt_shrink": 1.0},
            {"bt_grow": 0.9},
            {"gamma0": 0.0},
            {"fista_max_iters": 0},
            {"bcd_max_iters": 0},
        ],
    )
    def test_rejects_bad_values(self, kwargs):
        with pytest.raises(ValueError):
            BcdConfig(**kwargs)
