import numpy as np
import pytest

from offgrid_demix import (
    Channel,
    Codebook,
    GridSpec,
    Message,
    build_certificate,
    dual_polynomial,
    fejer_squared_closed_form,
    g_weights,
    kernel_matrix,
    kernel_scalar,
)


class TestGWeights:
    def test_m2_center_value(self):
        w = g_weights(2)
        assert w.g[4] == pytest.approx(0.75, abs=1e-15)  # n = 0 at index 2M

    @pytest.mark.parametrize("M", [1, 2, 3, 8, 16])
    def test_even_symmetry(self, M):
        g = g_weights(M).g
        assert np.allclose(g, g[::-1], atol=1e-15)

    @pytest.mark.parametrize("M", [2, 4, 8])
    def test_boundary_vanishes(self, M):
        g = g_weights(M).g
        assert g[0] == 0.0 and g[-1] == 0.0

    @pytest.mark.parametrize("M", [1, 2, 5, 12, 32])
    def test_weights_sum_to_m(self, M):
        g = g_weights(M).g
        assert abs(np.sum(g) / M - 1.0) < 1e-12


class TestKernelScalar:
    def test_value_one_at_origin(self):
        for M in (2, 5, 16):
            assert kernel_scalar(0.0, 0, M).real == pytest.approx(1.0, abs=1e-12)

    def test_fourier_matches_closed_form(self):
        for M in (2, 4, 9):
            taus = (np.arange(512) + 0.5) / 512
            four = kernel_scalar(taus, 0, M)
            closed = fejer_squared_closed_form(taus, M)
            assert np.max(np.abs(four.imag)) < 1e-12
            assert np.max(np.abs(four.real - closed)) < 1e-10

    @pytest.mark.parametrize("M", [2, 8, 32])
    def test_second_derivative_at_origin(self, M):
        expect = -4.0 * np.pi ** 2 * (M ** 2 - 1) / 3.0
        got = kernel_scalar(0.0, 2, M).real
        assert abs(got - expect) <= 1e-10 * abs(expect)

    def test_odd_derivative_vanishes_at_origin(self):
        assert abs(kernel_scalar(0.0, 1, 8)) < 1e-12 * (2 * np.pi * 8)


class TestKernelMatrix:
    def test_scalar_reduction_with_ones(self):
        grid = GridSpec(3)
        w = g_weights(grid.M)
        cb = Codebook(0, np.ones((grid.N, 1), dtype=complex))
        for tau in (0.0, 0.21, 0.9):
            Km = kernel_matrix(tau, 0, cb, cb, w)
            assert Km.shape == (1, 1)
            assert abs(Km[0, 0] - kernel_scalar(tau, 0, grid.M, w)) < 1e-13

    def test_reflection_transposes_users(self):
        rng = np.random.default_rng(0)
        grid = GridSpec(3)
        w = g_weights(grid.M)
        cb_a = Codebook(0, rng.standard_normal((grid.N, 2)).astype(complex))
        cb_b = Codebook(1, rng.standard_normal((grid.N, 3)).astype(complex))
        for tau in (0.13, 0.62):
            left = kernel_matrix(-tau, 0, cb_a, cb_b, w)
            right = kernel_matrix(tau, 0, cb_b, cb_a, w).conj().T
            assert np.max(np.abs(left - right)) < 1e-12

    def test_against_double_loop(self):
        rng = np.random.default_rng(1)
        grid = GridSpec(2)
        w = g_weights(grid.M)
        cb_a = Codebook(0, (rng.standard_normal((grid.N, 2))
                            + 1j * rng.standard_normal((grid.N, 2))))
        cb_b = Codebook(1, (rng.standard_normal((grid.N, 2))
                            + 1j * rng.standard_normal((grid.N, 2))))
        tau, order = 0.37, 1
        ref = np.zeros((2, 2), dtype=complex)
        for pos, n in enumerate(grid.n_indices):
            ref += (w.g[pos] * (-2j * np.pi * n) ** order
                    * np.exp(-2j * np.pi * n * tau) / grid.M
                    * np.outer(cb_a.entries[pos], np.conj(cb_b.entries[pos])))
        got = kernel_matrix(tau, order, cb_a, cb_b, w)
        assert np.max(np.abs(got - ref)) < 1e-12 * max(1.0, np.max(np.abs(ref)))


class TestBuildCertificate:
    def test_single_spike_all_ones(self):
        for M in (4, 8):
            grid = GridSpec(M)
            cb = Codebook(0, np.ones((grid.N, 1), dtype=complex))
            ch = Channel(np.array([np.exp(0.4j)]), np.array([0.35]))
            msg = Message(np.array([1.0 + 0j]))
            rep = build_certificate([ch], [msg], [cb], grid)
            assert rep.max_interp_error <= 1e-10
            assert rep.sup_offsupport_norm < 1.0
            assert rep.valid

    def test_certificate_polynomial_is_dual_polynomial(self):
        # the kernel-form polynomial and the materialized dual vector agree
        rng = np.random.default_rng(2)
        grid = GridSpec(8)
        cb = Codebook(0, rng.standard_normal((grid.N, 2)).astype(complex))
        ch = Channel(np.array([1.0 + 0j, -0.5 + 0.5j]), np.array([0.2, 0.6]))
        msg = Message(rng.standard_normal(2) + 1j * rng.standard_normal(2))
        rep = build_certificate([ch], [msg], [cb], grid)
        from offgrid_demix.certificate import g_weights as gw, kernel_matrix as km
        w = gw(grid.M)
        for tau in (0.05, 0.44, 0.81):
            q_kernel = np.zeros(2, dtype=complex)
            for p in range(ch.s):
                q_kernel += km(ch.delays[p] - tau, 0, cb, cb, w) @ rep.alpha[0][p]
                q_kernel += km(ch.delays[p] - tau, 1, cb, cb, w) @ rep.beta[0][p]
            q_lam = dual_polynomial(rep.lam, cb, tau)
            assert np.max(np.abs(q_kernel - q_lam)) < 1e-10

    def test_interpolation_targets_met(self):
        rng = np.random.default_rng(3)
        grid = GridSpec(16)
        cbs = [Codebook(i, rng.standard_normal((grid.N, 3)).astype(complex))
               for i in range(2)]
        chs = [Channel(rng.standard_normal(2) + 1j * rng.standard_normal(2),
                       np.array([0.2, 0.5])),
               Channel(np.array([0.9 - 0.1j]), np.array([0.8]))]
        msgs = [Message(rng.standard_normal(3) + 1j * rng.standard_normal(3))
                for _ in range(2)]
        rep = build_certificate(chs, msgs, cbs, grid)
        assert rep.max_interp_error <= 1e-8
        assert rep.max_support_deriv <= 1e-6 * grid.M

    def test_separation_violation_invalid(self):
        rng = np.random.default_rng(4)
        grid = GridSpec(8)
        M = grid.M
        cb = Codebook(0, rng.standard_normal((grid.N, 2)).astype(complex))
        ch = Channel(np.array([1.0 + 0j, 1.0 + 0j]),
                     np.array([0.3, 0.3 + 1.0 / (20 * M)]))
        msg = Message(rng.standard_normal(2) + 1j * rng.standard_normal(2))
        with pytest.warns(UserWarning):
            rep = build_certificate([ch], [msg], [cb], grid)
        assert not rep.valid

    @pytest.mark.slow
    def test_monte_carlo_validity_rate(self):
        # M=32, r=2, s=(2,1), k=(3,3), separation 2/M: valid on >= 95 of 100
        from offgrid_demix.harness import InstanceSpec, gen_instance
        ok = 0
        for seed in range(100):
            spec = InstanceSpec(r=2, k=(3, 3), s=(2, 1), M=32,
                                min_sep=2.0 / 32, seed=900 + seed)
            inst = gen_instance(spec)
            rep = build_certificate(inst.channels, inst.messages,
                                    inst.codebooks, inst.grid)
            ok += int(rep.valid)
        assert ok >= 95
