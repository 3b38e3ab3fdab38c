import numpy as np
import pytest

from csiauth.channel import (ChannelParams, ChannelSession, ChannelState,
                             apply_spatial_correlation, complex_gaussian,
                             compose_rician, correlation_sqrt,
                             exp_correlation_matrix, init_channel, observe,
                             step_los, step_whitened)
from csiauth.errors import ConfigError


def make_state(params, seed=0):
    return init_channel(params, "alice", seed)


class TestExpCorrelation:
    def test_zero_correlation_is_identity(self):
        assert np.array_equal(exp_correlation_matrix(3, 0.0), np.eye(3))

    def test_two_by_two(self):
        expected = np.array([[1.0, 0.5], [0.5, 1.0]])
        assert np.allclose(exp_correlation_matrix(2, 0.5), expected)

    def test_positive_definite(self):
        # Eigendecomposition oracle for positive definiteness.
        eigvals = np.linalg.eigvalsh(exp_correlation_matrix(4, 0.7))
        assert eigvals.min() > 0

    @pytest.mark.parametrize("r", [-0.1, 1.0, 1.5])
    def test_rejects_bad_coefficient(self, r):
        with pytest.raises(ConfigError):
            exp_correlation_matrix(3, r)

    def test_sqrt_factor_squares_back(self):
        root = correlation_sqrt(4, 0.6)
        assert np.allclose(root @ root, exp_correlation_matrix(4, 0.6), atol=1e-12)


class TestStepWhitened:
    def test_full_correlation_keeps_state(self):
        params = ChannelParams(rho_t=1.0)
        state = make_state(params)
        new = step_whitened(state, params, np.random.default_rng(7))
        assert np.array_equal(new.h_w, state.h_w)

    def test_memoryless_draws_fresh(self):
        params = ChannelParams(rho_t=0.0)
        state = make_state(params)
        new = step_whitened(state, params, np.random.default_rng(7))
        fresh = complex_gaussian(np.random.default_rng(7), state.h_w.shape, 1.0)
        assert np.array_equal(new.h_w, fresh)

    def test_lag1_autocorrelation(self):
        # Empirical autocorrelation oracle over a long scalar trajectory.
        params = ChannelParams(m_t=1, m_r=1, rho_t=0.7)
        rng = np.random.default_rng(11)
        state = make_state(params, seed=3)
        xs = np.empty(100_000, dtype=np.complex128)
        for i in range(xs.size):
            state = step_whitened(state, params, rng)
            xs[i] = state.h_w[0, 0]
        num = np.mean((xs[1:] * xs[:-1].conj()).real)
        den = np.mean(np.abs(xs) ** 2)
        assert num / den == pytest.approx(0.7, abs=0.02)
        # Stationarity: per-entry variance stays within 2% of 1.
        assert den == pytest.approx(1.0, abs=0.02)


class TestSpatialCorrelation:
    def test_identity_passthrough(self, rng):
        h = complex_gaussian(rng, (3, 2))
        out = apply_spatial_correlation(h, np.eye(3), np.eye(2))
        assert np.allclose(out, h)

    def test_single_entry_gives_outer_product(self):
        rr = correlation_sqrt(3, 0.4)
        rt = correlation_sqrt(2, 0.6)
        h = np.zeros((3, 2), dtype=np.complex128)
        h[1, 0] = 1.0
        out = apply_spatial_correlation(h, rr, rt)
        assert np.allclose(out, np.outer(rr[:, 1], rt[0, :]))

    def test_kronecker_covariance_monte_carlo(self):
        # vec identity oracle: Cov(vec H) = R_t^T kron R_r for column-major vec.
        n, m = 100_000, 2
        rng = np.random.default_rng(5)
        rr = correlation_sqrt(m, 0.5)
        rt = correlation_sqrt(m, 0.5)
        h_w = complex_gaussian(rng, (n, m, m))
        h = apply_spatial_correlation(h_w, rr, rt)
        vecs = h.transpose(0, 2, 1).reshape(n, -1)  # column-major vec
        emp = (vecs[:, :, None] * vecs[:, None, :].conj()).mean(axis=0)
        want = np.kron(exp_correlation_matrix(m, 0.5).T, exp_correlation_matrix(m, 0.5))
        assert np.max(np.abs(emp - want)) < 0.02

    def test_dimension_mismatch(self):
        with pytest.raises(ConfigError):
            apply_spatial_correlation(np.zeros((2, 2)), np.eye(3), np.eye(2))


class TestStepLos:
    def test_zero_drift_keeps_los(self):
        params = ChannelParams(sigma_phi=0.0)
        state = make_state(params)
        new = step_los(state, params, np.random.default_rng(1))
        assert np.array_equal(new.h_los, state.h_los)

    def test_norm_preserved(self):
        params = ChannelParams(sigma_phi=0.3)
        state = make_state(params)
        rng = np.random.default_rng(2)
        for _ in range(50):
            state = step_los(state, params, rng)
        assert np.linalg.norm(state.h_los) == pytest.approx(4.0, rel=1e-12)

    def test_accumulated_phase_variance(self):
        # Phase-unwrapping oracle: squared increments sum to n * sigma_phi^2.
        params = ChannelParams(m_t=1, m_r=1, sigma_phi=0.1)
        state = make_state(params)
        rng = np.random.default_rng(3)
        angles = [np.angle(state.h_los[0, 0])]
        for _ in range(10_000):
            state = step_los(state, params, rng)
            angles.append(np.angle(state.h_los[0, 0]))
        increments = np.diff(np.unwrap(angles))
        assert np.sum(increments ** 2) == pytest.approx(10_000 * 0.01, rel=0.05)


class TestComposeRician:
    def test_blocked_slot_is_nlos_only(self):
        params = ChannelParams(blockage=((5, 3),))
        state = make_state(params)
        nlos = apply_spatial_correlation(state.h_w,
                                         correlation_sqrt(4, params.r_rx),
                                         correlation_sqrt(4, params.r_tx))
        for t in (5, 6, 8):
            assert np.array_equal(compose_rician(state, t, params), nlos)
        assert not np.allclose(compose_rician(state, 4, params), nlos)

    def test_los_power_fraction(self):
        params = ChannelParams(k0=10.0)
        state = make_state(params)
        state.h_w = np.zeros_like(state.h_w)
        out = compose_rician(state, 1, params)
        assert np.allclose(out, np.sqrt(10 / 11) * state.h_los)

    def test_large_k_limit(self):
        params = ChannelParams(k0=1e9)
        state = make_state(params)
        out = compose_rician(state, 1, params)
        assert np.linalg.norm(out - state.h_los) / np.linalg.norm(state.h_los) < 1e-4

    def test_power_conserved_across_k(self):
        # Unit-power LoS and NLoS parts: E ||H||_F^2 == m_t * m_r for any K.
        rng = np.random.default_rng(9)
        n = 20_000
        h_w = complex_gaussian(rng, (n, 4, 4))
        rr = correlation_sqrt(4, 0.5)
        rt = correlation_sqrt(4, 0.5)
        nlos = apply_spatial_correlation(h_w, rr, rt)
        state = make_state(ChannelParams())
        for k in (0.0, 10.0):
            h = (np.sqrt(k / (k + 1)) * state.h_los + np.sqrt(1 / (k + 1)) * nlos)
            power = np.mean(np.sum(np.abs(h) ** 2, axis=(1, 2)))
            assert power == pytest.approx(16.0, rel=0.03)


class TestObserve:
    def test_noiseless(self, rng):
        h = complex_gaussian(rng, (4, 4))
        assert np.array_equal(observe(h, 0.0, rng, t=3).h_hat, h)

    def test_noise_variance(self):
        rng = np.random.default_rng(4)
        h = np.zeros((4, 4), dtype=np.complex128)
        draws = np.array([observe(h, 1.0, rng).h_hat for _ in range(6_250)])
        assert np.mean(np.abs(draws) ** 2) == pytest.approx(1.0, abs=0.02)

    def test_table_snr_default(self):
        # 5 dB SNR on a unit-power channel.
        assert ChannelParams().noise_var == pytest.approx(10 ** -0.5, rel=1e-12)
        assert ChannelParams().noise_var == pytest.approx(0.3162, abs=5e-5)

    def test_rejects_negative_variance(self, rng):
        with pytest.raises(ConfigError):
            observe(np.zeros((2, 2)), -1.0, rng)


class TestInitChannel:
    def test_single_antenna_scalar_los(self):
        state = init_channel(ChannelParams(m_t=1, m_r=1), "alice", 0)
        assert state.h_los.shape == (1, 1)
        assert abs(state.h_los[0, 0]) == pytest.approx(1.0)

    def test_los_norm_contract(self):
        state = init_channel(ChannelParams(los_angles=(0.7, -1.1)), "alice", 0)
        assert np.sum(np.abs(state.h_los) ** 2) == pytest.approx(16.0, rel=1e-12)

    def test_seed_determinism(self):
        a = init_channel(ChannelParams(), "alice", 42)
        b = init_channel(ChannelParams(), "alice", 42)
        assert np.array_equal(a.h_w, b.h_w) and np.array_equal(a.h_los, b.h_los)

    def test_identities_differ(self):
        a = init_channel(ChannelParams(), "alice", 42)
        e = init_channel(ChannelParams(), "eve", 42)
        assert not np.array_equal(a.h_w, e.h_w)


class TestBlockage:
    def test_intervals_merge(self):
        params = ChannelParams(blockage=((10, 5), (12, 8), (30, 0)))
        assert params.blockage == ((10, 10), (30, 0))

    def test_rejects_bad_start(self):
        with pytest.raises(ConfigError):
            ChannelParams(blockage=((0, 5),))

    def test_rician_factor_schedule(self):
        params = ChannelParams(k0=10.0, blockage=((5, 2),))
        assert [params.rician_factor(t) for t in (4, 5, 7, 8)] == [10.0, 0.0, 0.0, 10.0]


class TestChannelSession:
    def test_trajectory_determinism(self):
        params = ChannelParams(sigma_phi=0.01, blockage=((3, 2),))
        runs = []
        for _ in range(2):
            session = ChannelSession(params, "alice", seed=7)
            runs.append(np.stack([o.h_hat for o in session.run(10)]))
        assert np.array_equal(runs[0], runs[1])

    def test_time_indexing(self):
        session = ChannelSession(ChannelParams(), "alice", seed=1)
        obs = session.run(3)
        assert [o.t for o in obs] == [1, 2, 3]
