import numpy as np
import pytest

from fbmc_uplink.fbmc import (
    ROLE_GUARD,
    BasebandSignal,
    FbmcConfig,
    TfGrid,
    analyze,
    basis_function,
    basis_matrix,
    build_prototype,
    demodulate,
    synthesize,
)
from fbmc_uplink.streams import complex_normal
from fbmc_uplink.system import TOL_ORTH

import oracles


def _grid(M, N_t, entries):
    s = np.zeros((M, N_t))
    for (m, n), v in entries.items():
        s[m, n] = v
    return TfGrid(s)


class TestPrototype:
    def test_length_and_unit_energy(self):
        g = build_prototype(4, 128)
        assert g.shape == (512,)
        assert abs(np.sum(g**2) - 1.0) < 1e-12

    @pytest.mark.parametrize("kappa", [2, 3, 4])
    def test_matches_inverse_dft_design(self, kappa):
        np.testing.assert_allclose(build_prototype(kappa, 32), oracles.prototype_by_idft(kappa, 32), atol=1e-13)

    def test_symmetric_about_centre(self):
        # taps are centred on kappa*M/2: g[k] = g[kappa*M - k]
        g = build_prototype(4, 4)
        assert g.shape == (16,)
        np.testing.assert_allclose(g[1:], g[1:][::-1], atol=1e-12)

    def test_stopband_two_subcarriers_out(self):
        g = build_prototype(4, 64)
        dc = abs(oracles.polyval_response(g, 0.0))
        at = abs(oracles.polyval_response(g, 2.0 / 64))
        assert 20 * np.log10(at / dc) < -55
        # the design's own DFT agrees with the polynomial evaluation
        resp = np.fft.fft(g, 64 * 8)
        assert abs(abs(resp[16]) - at) < 1e-12

    @pytest.mark.parametrize("kappa,M", [(1, 8), (5, 8), (4, 7), (4, 0)])
    def test_rejects_unsupported(self, kappa, M):
        with pytest.raises(ValueError):
            build_prototype(kappa, M)

    def test_config_checks_prototype(self):
        with pytest.raises(ValueError):
            FbmcConfig(8, 4, np.ones(31))


class TestBasis:
    def test_origin_is_prototype(self, cfg16):
        g = basis_function(cfg16, 0, 0)
        assert g.sample_offset == 0
        np.testing.assert_allclose(g.samples, cfg16.prototype, atol=0)

    def test_one_slot_shift_times_j(self, cfg16):
        g = basis_function(cfg16, 0, 1)
        assert g.sample_offset == cfg16.M // 2
        np.testing.assert_allclose(g.samples, 1j * cfg16.prototype, atol=0)

    def test_elementwise_formula(self):
        cfg = FbmcConfig.phydyas(8, 4)
        k = np.arange(32)
        expected = cfg.prototype * np.exp(2j * np.pi * k / 8) * 1j
        np.testing.assert_allclose(basis_function(cfg, 1, 0).samples, expected, atol=1e-15)

    def test_subcarrier_range(self, cfg16):
        with pytest.raises(ValueError):
            basis_function(cfg16, 16, 0)
        with pytest.raises(ValueError):
            basis_function(cfg16, -1, 0)


class TestSynthesize:
    def test_zero_grid(self, cfg16):
        x = synthesize(cfg16, TfGrid.zeros(16, 3))
        assert len(x) == cfg16.signal_length(3) == 2 * 8 + 64
        assert not np.any(x.samples)

    def test_single_symbol_is_basis(self, cfg16):
        x = synthesize(cfg16, _grid(16, 1, {(0, 0): 1.0}))
        np.testing.assert_allclose(x.samples, basis_function(cfg16, 0, 0).samples, atol=1e-14)

    def test_two_symbol_superposition(self, cfg16):
        grid = _grid(16, 4, {(3, 1): 0.7, (11, 3): -1.3})
        x = synthesize(cfg16, grid)
        ref = np.zeros(len(x), dtype=complex)
        for (m, n), v in {(3, 1): 0.7, (11, 3): -1.3}.items():
            g = basis_function(cfg16, m, n)
            ref[g.sample_offset:g.stop] += v * g.samples
        np.testing.assert_allclose(x.samples, ref, atol=1e-14)

    def test_matches_basis_matrix(self, cfg16, rng):
        s = rng.standard_normal((16, 5))
        x = synthesize(cfg16, TfGrid(s))
        slots = [(m, n) for n in range(5) for m in range(16)]
        G = basis_matrix(cfg16, slots, 0, len(x))
        np.testing.assert_allclose(x.samples, G @ s.T.ravel(), atol=1e-12)

    def test_grid_dimension_mismatch(self, cfg16):
        with pytest.raises(ValueError):
            synthesize(cfg16, TfGrid.zeros(8, 2))

    def test_length_invariant(self, cfg128):
        for n_t in (1, 2, 7):
            assert len(synthesize(cfg128, TfGrid.zeros(128, n_t))) == (n_t - 1) * 64 + 512

    def test_shift_by_four_slots_is_exact_delay(self, cfg16, rng):
        s = rng.standard_normal((16, 3))
        padded = np.concatenate([np.zeros((16, 4)), s], axis=1)
        a = synthesize(cfg16, TfGrid(s)).samples
        b = synthesize(cfg16, TfGrid(padded)).samples
        shift = 4 * cfg16.symbol_advance
        assert not np.any(b[:shift])
        np.testing.assert_allclose(b[shift:], a, atol=1e-13)

    def test_shift_by_one_slot_rotates_subcarriers(self, cfg16, rng):
        # g_{m,n+1}[k + M/2] = j (-1)^m g_{m,n}[k]
        s = rng.standard_normal((16, 2))
        padded = np.concatenate([np.zeros((16, 1)), s], axis=1)
        b = synthesize(cfg16, TfGrid(padded)).samples[cfg16.symbol_advance:]
        slots = [(m, n) for n in range(2) for m in range(16)]
        G = basis_matrix(cfg16, slots, 0, len(b))
        rot = np.tile(1j * (-1.0) ** np.arange(16), 2)
        np.testing.assert_allclose(b, G @ (rot * s.T.ravel()), atol=1e-13)


class TestGrid:
    def test_guard_must_be_zero(self):
        roles = np.full((4, 2), ROLE_GUARD)
        with pytest.raises(ValueError):
            TfGrid(np.ones((4, 2)), roles)

    def test_pilot_labels(self):
        roles = np.full((4, 2), ROLE_GUARD)
        roles[1, 0] = 0
        roles[2, 1] = 1
        s = np.zeros((4, 2))
        s[1, 0] = 1.0
        s[2, 1] = -1.0
        grid = TfGrid(s, roles)
        assert grid.pilot_slots(0) == [(1, 0)]
        assert grid.pilot_slots(1) == [(2, 1)]


class TestAnalyze:
    def test_same_slot_real_part_is_one(self, cfg128):
        for m, n in [(0, 0), (5, 3), (127, 6)]:
            x = synthesize(cfg128, _grid(128, 8, {(m, n): 1.0}))
            z = analyze(cfg128, x, [(m, n)])[0]
            assert abs(z.real - 1.0) <= TOL_ORTH

    def test_next_slot_is_imaginary(self, cfg128):
        x = synthesize(cfg128, _grid(128, 8, {(10, 3): 1.0}))
        z = analyze(cfg128, x, [(10, 4)])[0]
        assert abs(z.real) <= TOL_ORTH
        assert abs(z.imag) > 0.1  # intrinsic interference is present

    def test_is_inner_product(self, cfg16, rng):
        y = BasebandSignal(complex_normal(rng, 200), sample_offset=-20)
        slots = [(0, 0), (3, 2), (15, 5)]
        z = analyze(cfg16, y, slots)
        for (m, n), val in zip(slots, z):
            g = basis_function(cfg16, m, n)
            lo = g.sample_offset - y.sample_offset
            ref = np.sum(y.samples[lo:lo + len(g)] * np.conj(g.samples))
            assert abs(val - ref) < 1e-12

    def test_batch_dimensions(self, cfg16, rng):
        y = complex_normal(rng, (3, 2, 100))
        z = demodulate(cfg16, y, 0, [(1, 0), (2, 1)])
        assert z.shape == (3, 2, 2)
        np.testing.assert_allclose(z[2, 1], demodulate(cfg16, y[2, 1], 0, [(1, 0), (2, 1)]))

    def test_support_outside_signal(self, cfg16):
        y = BasebandSignal(np.zeros(64), 0)
        with pytest.raises(ValueError):
            analyze(cfg16, y, [(0, 1)])
        with pytest.raises(ValueError):
            analyze(cfg16, BasebandSignal(np.zeros(64), 1), [(0, 0)])

    def test_linearity(self, cfg16, rng):
        a, b = rng.standard_normal((2, 16, 4))
        alpha, beta = 0.3, -2.1
        slots = [(m, n) for n in range(4) for m in range(16)]
        za = analyze(cfg16, synthesize(cfg16, TfGrid(a)), slots)
        zb = analyze(cfg16, synthesize(cfg16, TfGrid(b)), slots)
        zc = analyze(cfg16, synthesize(cfg16, TfGrid(alpha * a + beta * b)), slots)
        np.testing.assert_allclose(zc, alpha * za + beta * zb, atol=1e-12)

    def test_noise_variance(self, cfg16):
        rng = np.random.default_rng(7)
        sigma2 = 2.5
        z = np.concatenate(
            [demodulate(cfg16, complex_normal(rng, (20000, 64), sigma2), 0, [(3, 0)])[:, 0] for _ in range(5)]
        )
        var = np.mean(np.abs(z) ** 2)
        se = np.std(np.abs(z) ** 2) / np.sqrt(z.size)
        assert abs(var - sigma2 * np.sum(cfg16.prototype**2)) < 3 * se


def test_real_field_orthogonality_small_M():
    cfg = FbmcConfig.phydyas(16, 4)
    ref = (4, 8)
    worst = 0.0
    for dm in range(-2, 3):
        for dn in range(-8, 9):
            other = (ref[0] + dm, ref[1] + dn)
            want = 1.0 if (dm, dn) == (0, 0) else 0.0
            worst = max(worst, abs(oracles.inner(cfg, ref, other).real - want))
    assert worst <= TOL_ORTH
