import numpy as np
import pytest
from hypothesis import given, strategies as st

from subnyquist.errors import BoundsError, ConfigurationError, StructuralError
from subnyquist.multicoset import (
    DelayFilterBank,
    MultiCosetConfig,
    build_gamma,
    build_psi,
    build_psi_breve,
    channel_pairs,
    correlogram,
    delay_channels,
    design_delay_filters,
    estimate_power,
    estimate_rz,
    filter_energy,
    lagrange_taps,
    random_offsets,
    sample_signal,
    segment_indices,
    white_gaussian,
)

from oracles import lagrange_by_solve, rz_loops


@st.composite
def sampler_configs(draw, max_L=41):
    L = draw(st.integers(1, (max_L - 1) // 2)) * 2 + 1
    # a margin over the 2Q >= L floor keeps full-rank offset sets easy to find
    q_min = min(L - 1, next((q for q in range(1, L) if q * (q - 1) >= 2 * L), L) + 1)
    q = draw(st.integers(q_min, L - 1))
    seed = draw(st.integers(0, 2**32 - 1))
    offsets = random_offsets(np.random.default_rng(seed), L, q)
    W = draw(st.sampled_from([1.0, 3.0, 1000.0]))
    N = draw(st.integers(8, 40))
    return MultiCosetConfig(W, L, offsets, N)


class TestConfig:
    def test_derived_sizes(self):
        c = MultiCosetConfig(1000.0, 5, (0, 1, 3), 64)
        assert (c.q, c.Q, c.nyquist_length) == (3, 4, 320)
        assert c.integer_delay == 1
        assert c.average_rate == pytest.approx(600.0)

    @pytest.mark.parametrize(
        "L, offsets",
        [(4, (0, 1)), (5, (0, 0, 1)), (5, (0, 5, 1)), (5, (-1, 2, 3)), (7, (0, 1))],
    )
    def test_rejects_invalid(self, L, offsets):
        with pytest.raises(ConfigurationError):
            MultiCosetConfig(1.0, L, offsets, 10)

    def test_rejects_rank_deficient_offsets(self):
        # differences {0, -1, -2} give only 5 independent real rows for 7 segments
        with pytest.raises(ConfigurationError, match="rank-deficient"):
            MultiCosetConfig(1.0, 7, (0, 1, 2), 10)

    def test_random_offsets_are_valid_and_seeded(self):
        a = random_offsets(np.random.default_rng(3), 51, 12)
        b = random_offsets(np.random.default_rng(3), 51, 12)
        assert a == b and len(set(a)) == 12 and max(a) < 51
        MultiCosetConfig(1000.0, 51, a, 16)


class TestMatrices:
    def test_pair_order(self):
        assert channel_pairs(3) == [(0, 0), (0, 1), (0, 2), (1, 2)]

    def test_gamma_small(self):
        g = build_gamma(MultiCosetConfig(3.0, 3, (0, 1), 4))
        assert segment_indices(3).tolist() == [-1, 0, 1]
        w = np.exp(2j * np.pi / 3)
        assert np.allclose(g, [[1, 1, 1], [w, 1, np.conj(w)]])

    def test_psi_breve_first_row_and_layout(self):
        c = MultiCosetConfig(3.0, 3, (0, 1), 4)
        pb = build_psi_breve(c)
        assert pb.shape == (4, 3)
        assert np.allclose(pb[0], 1.0) and np.allclose(pb[2], 0.0)
        # direct evaluation of the (0, 1) pair: (W/L)^2 exp(-j 2 pi (0 - 1) m / 3)
        direct = np.exp(2j * np.pi * np.array([-1, 0, 1]) / 3)
        assert np.allclose(pb[1], direct.real) and np.allclose(pb[3], direct.imag)

    def test_psi_is_gamma_products(self):
        c = MultiCosetConfig(2.0, 7, (0, 2, 3, 6), 4)
        g = build_gamma(c)
        psi = build_psi(c)
        for k, (a, b) in enumerate(c.pairs):
            assert np.allclose(psi[k], g[a] * g[b].conj())

    @given(sampler_configs())
    def test_pinv_first_column_identity(self, cfg):
        col = cfg.psi_pinv[:, 0]
        L, W = cfg.segments, cfg.nyquist_rate
        assert np.allclose(col * W**2 / L, 1.0, rtol=0, atol=1e-8)


class TestDelayFilters:
    def test_integer_delay_is_impulse(self):
        cfg = MultiCosetConfig(1.0, 5, (0, 1, 3), 10, filter_len=4)
        fb = design_delay_filters(cfg)
        assert np.allclose(fb.taps[0], [0, 1, 0, 0])
        assert fb.energies[0] == pytest.approx((10 - 1) / 10)

    def test_energy_two_tap(self):
        assert filter_energy(np.array([0.6, 0.8]), 10) == pytest.approx(0.936)

    def test_energy_tends_to_one(self):
        h = lagrange_taps(1.3, 4)
        h /= np.linalg.norm(h)
        assert abs(filter_energy(h, 10**7) - 1.0) < 1e-6

    def test_energy_clipped_for_short_records(self):
        h = np.array([0.6, 0.8])
        assert filter_energy(h, 1) == pytest.approx(0.36)

    @given(st.floats(0.0, 5.0), st.integers(2, 6))
    def test_lagrange_matches_polynomial_exactness(self, delay, length):
        delay = min(delay, length - 1)
        assert np.allclose(lagrange_taps(delay, length), lagrange_by_solve(delay, length), atol=1e-9)

    @given(sampler_configs())
    def test_unit_norm(self, cfg):
        fb = design_delay_filters(cfg)
        assert np.allclose(np.sum(fb.taps**2, axis=1), 1.0)
        assert np.all((fb.energies > 0) & (fb.energies <= 1))

    def test_delay_outside_span(self):
        cfg = MultiCosetConfig(1.0, 5, (0, 1, 3), 10, filter_len=3, integer_delay=2)
        with pytest.raises(ConfigurationError, match="outside"):
            design_delay_filters(cfg)

    def test_single_tap_rejected(self):
        cfg = MultiCosetConfig(1.0, 5, (0, 1, 3), 10, filter_len=1)
        with pytest.raises(ConfigurationError):
            design_delay_filters(cfg)


class TestSampling:
    def test_even_decimation(self):
        cfg = MultiCosetConfig(1.0, 3, (0, 1), 2)
        x = np.arange(10.0)
        assert np.array_equal(sample_signal(x, cfg), [[0, 3], [1, 4]])

    def test_decimate_by_two_like(self):
        # one channel of a 3-segment sampler reproduces every third sample
        cfg = MultiCosetConfig(1.0, 3, (1, 2), 3)
        assert np.array_equal(sample_signal(np.arange(9.0), cfg)[0], [1, 4, 7])

    def test_too_short(self):
        cfg = MultiCosetConfig(1.0, 5, (0, 1, 3), 10)
        with pytest.raises(BoundsError) as info:
            sample_signal(np.zeros(40), cfg)
        assert info.value.required == 49

    @given(sampler_configs())
    def test_samples_are_nyquist_subset(self, cfg):
        x = np.arange(cfg.nyquist_length, dtype=float)
        y = sample_signal(x, cfg)
        for i, c in enumerate(cfg.offsets):
            assert np.array_equal(y[i], x[c :: cfg.segments][: cfg.samples_per_channel])


class TestEstimation:
    def test_zero_input(self):
        cfg = MultiCosetConfig(1000.0, 5, (0, 1, 3), 16)
        est = correlogram(np.zeros(cfg.nyquist_length), cfg)
        assert np.all(est.rz_hat == 0) and np.all(est.p_hat == 0)

    def test_rz_matches_loop_oracle(self, rng):
        cfg = MultiCosetConfig(1000.0, 7, (0, 2, 3, 5), 12)
        fb = design_delay_filters(cfg)
        x = white_gaussian(rng, cfg.nyquist_length, 2.0)
        y = sample_signal(x, cfg)
        assert np.allclose(estimate_rz(y, fb, cfg), rz_loops(y, fb.taps, 1000.0, 7), atol=1e-10)

    @given(sampler_configs(), st.integers(0, 2**32 - 1))
    def test_rz_hermitian_real_diagonal(self, cfg, seed):
        fb = design_delay_filters(cfg)
        x = white_gaussian(np.random.default_rng(seed), cfg.nyquist_length, 1.0)
        r = estimate_rz(sample_signal(x, cfg), fb, cfg)
        assert np.array_equal(r, r.conj().T)
        assert np.all(np.diag(r).imag == 0)

    def test_batched_equals_single(self, rng):
        cfg = MultiCosetConfig(1000.0, 5, (0, 1, 3), 16)
        fb = design_delay_filters(cfg)
        x = white_gaussian(rng, (3, cfg.nyquist_length), 4.0)
        batch = correlogram(x, cfg, fb).p_hat
        for i in range(3):
            assert np.allclose(batch[i], correlogram(x[i], cfg, fb).p_hat)

    def test_delay_is_causal_and_truncated(self):
        fb = DelayFilterBank(taps=np.array([[0.5, 0.5]]), energies=np.ones(1), delays=np.zeros(1))
        out = delay_channels(np.array([[2.0, 4.0, 6.0]]), fb)
        assert np.allclose(out, [[1.0, 3.0, 5.0]])

    def test_estimate_power_rejects_wrong_shape(self):
        cfg = MultiCosetConfig(1000.0, 5, (0, 1, 3), 16)
        with pytest.raises(StructuralError):
            estimate_power(np.zeros((2, 2)), cfg, design_delay_filters(cfg))

    def test_white_noise_moments(self, rng):
        cfg = MultiCosetConfig(1000.0, 5, (0, 1, 3), 32)
        fb = design_delay_filters(cfg)
        sigma2 = 4.0
        x = white_gaussian(rng, (10000, cfg.nyquist_length), sigma2)
        r = estimate_rz(sample_signal(x, cfg), fb, cfg)
        mean = r.mean(axis=0)
        expect = 2 * np.pi * (cfg.nyquist_rate / cfg.segments) * fb.energies[0] * sigma2
        assert mean[0, 0].real == pytest.approx(expect, rel=0.02)
        spread = np.abs(r[:, 0, 1]).std() / np.sqrt(r.shape[0])
        assert abs(mean[0, 1]) < 5 * spread
        p = estimate_power(r, cfg, fb).p_hat.mean(axis=0)
        assert np.allclose(p, sigma2, rtol=0.03)

    def test_complex_noise_variance(self, rng):
        x = white_gaussian(rng, 200000, 3.0)
        assert np.mean(np.abs(x) ** 2) == pytest.approx(3.0, rel=0.01)
        assert abs(np.mean(x * x)) < 0.02
        assert np.var(white_gaussian(rng, 200000, 3.0, complex_valued=False)) == pytest.approx(3.0, rel=0.01)
