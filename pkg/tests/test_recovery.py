import numpy as np
import pytest

from offgrid_demix import (
    Channel,
    Codebook,
    GridSpec,
    Message,
    OverParameterizedError,
    RecoverOptions,
    decode_messages,
    delays_by_grid,
    delays_by_roots,
    dual_polynomial,
    gram_coefficients,
    least_squares_amplitudes,
    synthesize_direct,
)
from offgrid_demix.recovery import DelayEstimate
from offgrid_demix.oracle import naive_least_squares


def rand_codebook(rng, grid, k, user_id=0):
    return Codebook(user_id, rng.standard_normal((grid.N, k))
                    + 1j * rng.standard_normal((grid.N, k)))


class TestDualPolynomial:
    def test_dc_coordinate_gives_constant(self):
        rng = np.random.default_rng(0)
        grid = GridSpec(2)
        cb = rand_codebook(rng, grid, 3)
        lam = np.zeros(grid.N, dtype=complex)
        lam[grid.pos(0)] = 1.0
        for tau in (0.0, 0.3, 0.77):
            q = dual_polynomial(lam, cb, tau)
            assert np.allclose(q, cb.entries[grid.pos(0)], atol=1e-14)

    def test_derivative_matches_finite_difference(self):
        rng = np.random.default_rng(1)
        grid = GridSpec(3)
        cb = rand_codebook(rng, grid, 2)
        lam = rng.standard_normal(grid.N) + 1j * rng.standard_normal(grid.N)
        tau = 0.37
        h = 1e-7
        _q, dq = dual_polynomial(lam, cb, tau, derivative=True)
        fd = (dual_polynomial(lam, cb, tau + h) - dual_polynomial(lam, cb, tau - h)) / (2 * h)
        assert np.max(np.abs(dq - fd)) < 1e-4 * max(1.0, np.max(np.abs(dq)))

    def test_norm_identity_with_gram_polynomial(self):
        # ||q(tau)||^2 + p(e^{2j pi tau}) = 1 on a 1024 grid
        rng = np.random.default_rng(2)
        for trial in range(5):
            grid = GridSpec(int(rng.integers(2, 6)))
            cb = rand_codebook(rng, grid, int(rng.integers(1, 4)))
            lam = rng.standard_normal(grid.N) + 1j * rng.standard_normal(grid.N)
            lam /= np.linalg.norm(lam)
            gram = gram_coefficients(lam, cb)
            taus = np.arange(1024) / 1024
            q = dual_polynomial(lam, cb, taus)
            norm2 = np.linalg.norm(q, axis=1) ** 2
            z = np.exp(2j * np.pi * taus)
            p = 1.0 - np.array([
                np.sum(gram.coefficients * z_i ** gram.orders) for z_i in z
            ])
            assert np.max(np.abs(p.imag)) < 1e-10
            assert np.max(np.abs((1.0 - norm2) - p.real)) < 1e-10


class TestGramCoefficients:
    def test_unit_coordinate(self):
        rng = np.random.default_rng(3)
        grid = GridSpec(2)
        cb = rand_codebook(rng, grid, 3)
        n = -1
        lam = np.zeros(grid.N, dtype=complex)
        lam[grid.pos(n)] = 1.0
        gram = gram_coefficients(lam, cb)
        expect = np.zeros_like(gram.coefficients)
        expect[gram.M * 4] = np.linalg.norm(cb.entries[grid.pos(n)]) ** 2
        assert np.allclose(gram.coefficients, expect, atol=1e-13)

    def test_hermitian_symmetry_exact(self):
        rng = np.random.default_rng(4)
        grid = GridSpec(3)
        cb = rand_codebook(rng, grid, 2)
        lam = rng.standard_normal(grid.N) + 1j * rng.standard_normal(grid.N)
        u = gram_coefficients(lam, cb).coefficients
        assert np.array_equal(u, np.conj(u[::-1]))
        assert u[4 * grid.M].imag == 0.0 and u[4 * grid.M].real >= 0.0

    def test_against_brute_force_double_sum(self):
        rng = np.random.default_rng(5)
        grid = GridSpec(2)
        cb = rand_codebook(rng, grid, 2)
        lam = rng.standard_normal(grid.N) + 1j * rng.standard_normal(grid.N)
        u = gram_coefficients(lam, cb).coefficients
        M, N = grid.M, grid.N
        ref = np.zeros_like(u)
        for k in range(-4 * M, 4 * M + 1):
            acc = 0.0 + 0.0j
            for li in range(N):
                lj = li - k
                if 0 <= lj < N:
                    acc += (lam[li] * np.conj(lam[lj])
                            * np.vdot(cb.entries[lj], cb.entries[li]))
            ref[k + 4 * M] = acc
        assert np.max(np.abs(u - ref)) < 1e-12 * max(1.0, np.max(np.abs(ref)))


class TestDelayExtraction:
    def test_zero_lambda_empty(self):
        rng = np.random.default_rng(6)
        grid = GridSpec(3)
        cb = rand_codebook(rng, grid, 2)
        lam = np.zeros(grid.N, dtype=complex)
        est = delays_by_roots(gram_coefficients(lam, cb))
        assert est.delays.size == 0
        est_g = delays_by_grid(lam, cb)
        assert est_g.delays.size == 0

    def test_methods_agree_on_planted_polynomial(self):
        # build a lambda whose dual polynomial provably peaks at tau0:
        # scalar codebook of ones, lambda = a(tau0)^*/N so q(tau) is the
        # normalized Dirichlet kernel with q(tau0) = 1
        grid = GridSpec(4)
        cb = Codebook(0, np.ones((grid.N, 1), dtype=complex))
        tau0 = 0.3125
        n = grid.n_indices
        lam = np.exp(-2j * np.pi * n * tau0) / grid.N
        est_r = delays_by_roots(gram_coefficients(lam, cb))
        est_g = delays_by_grid(lam, cb, grid_size=4096, threshold=1e-3)
        assert est_r.delays.size == 1 and est_g.delays.size == 1
        assert abs(est_r.delays[0] - tau0) < 1e-9
        assert abs(est_r.delays[0] - est_g.delays[0]) < 1e-4
        assert est_r.scores[0] == pytest.approx(1.0, abs=1e-9)

    def test_grid_size_floor_enforced(self):
        grid = GridSpec(3)
        cb = Codebook(0, np.ones((grid.N, 1), dtype=complex))
        with pytest.raises(ValueError):
            delays_by_grid(np.zeros(grid.N, dtype=complex), cb, grid_size=16)


class TestLeastSquares:
    def _planted(self, rng, grid, ks, ss):
        cbs = [rand_codebook(rng, grid, k, i) for i, k in enumerate(ks)]
        chs = []
        msgs = []
        for k, s in zip(ks, ss):
            taus = np.sort(rng.uniform(0, 1, size=s))
            while np.min(np.diff(np.concatenate([taus, [taus[0] + 1]]))) < 0.05:
                taus = np.sort(rng.uniform(0, 1, size=s))
            chs.append(Channel(rng.standard_normal(s) + 1j * rng.standard_normal(s), taus))
            msgs.append(Message(rng.standard_normal(k) + 1j * rng.standard_normal(k)))
        y = synthesize_direct(chs, msgs, cbs, grid)
        return cbs, chs, msgs, y

    def test_exact_delays_recover_blocks(self):
        rng = np.random.default_rng(7)
        grid = GridSpec(4)
        cbs, chs, msgs, y = self._planted(rng, grid, [2, 3], [2, 1])
        ests = [DelayEstimate(i, ch.delays, np.ones(ch.s)) for i, ch in enumerate(chs)]
        blocks, resid, deficient = least_squares_amplitudes(y, cbs, ests, grid)
        assert resid <= 1e-9
        assert not deficient
        for i, (ch, msg) in enumerate(zip(chs, msgs)):
            for l, (c, _tau) in enumerate(ch.paths):
                expect = c * msg.coeffs
                assert np.max(np.abs(blocks[i][l] - expect)) < 1e-8

    def test_matches_normal_equations_oracle(self):
        rng = np.random.default_rng(8)
        grid = GridSpec(3)
        cbs, chs, _msgs, y = self._planted(rng, grid, [2], [2])
        ests = [DelayEstimate(0, chs[0].delays, np.ones(2))]
        blocks, _resid, _ = least_squares_amplitudes(y, cbs, ests, grid)
        x_oracle, _ = naive_least_squares(y, cbs, [chs[0].delays], grid)
        stacked = np.concatenate([b for ub in blocks for b in ub])
        assert np.max(np.abs(stacked - x_oracle)) < 1e-8

    def test_overparameterized_rejected(self):
        rng = np.random.default_rng(9)
        grid = GridSpec(2)  # N = 9
        cbs = [rand_codebook(rng, grid, 5)]
        ests = [DelayEstimate(0, np.array([0.1, 0.5]), np.ones(2))]  # 10 unknowns
        with pytest.raises(OverParameterizedError):
            least_squares_amplitudes(np.zeros(grid.N, dtype=complex), cbs, ests, grid)


class TestDecodeMessages:
    def test_single_block_magnitudes(self):
        rng = np.random.default_rng(10)
        grid = GridSpec(2)
        cb = rand_codebook(rng, grid, 3)
        f = Message(rng.standard_normal(3) + 1j * rng.standard_normal(3)).coeffs
        users = decode_messages([[2.0 * f]], [cb])
        assert users[0].amplitude_magnitudes[0] == pytest.approx(2.0, abs=1e-12)
        assert np.allclose(users[0].message_magnitudes, np.abs(f), atol=1e-12)
        lead = np.argmax(np.abs(users[0].message_estimate))
        assert abs(users[0].message_estimate[lead].imag) < 1e-12
        assert users[0].message_estimate[lead].real >= 0

    def test_two_block_rank_one_consolidation(self):
        rng = np.random.default_rng(11)
        grid = GridSpec(2)
        cb = rand_codebook(rng, grid, 4)
        f = Message(rng.standard_normal(4) + 1j * rng.standard_normal(4)).coeffs
        c1, c2 = 1.5 * np.exp(0.3j), 0.7 * np.exp(-1.2j)
        users = decode_messages([[c1 * f, c2 * f]], [cb])
        assert np.allclose(sorted(users[0].amplitude_magnitudes),
                           sorted([abs(c1), abs(c2)]), atol=1e-10)
        # message recovered up to phase
        s = np.vdot(users[0].message_estimate, f)
        assert abs(abs(s) - 1.0) < 1e-10

    def test_global_phase_invariance(self):
        rng = np.random.default_rng(12)
        grid = GridSpec(2)
        cb = rand_codebook(rng, grid, 3)
        f = Message(rng.standard_normal(3) + 1j * rng.standard_normal(3)).coeffs
        blocks = [[1.3 * f, 0.4 * np.exp(0.9j) * f]]
        a = decode_messages(blocks, [cb], constellation=4)[0]
        rot = [[np.exp(2.1j) * b for b in blocks[0]]]
        b = decode_messages(rot, [cb], constellation=4)[0]
        assert np.allclose(a.amplitude_magnitudes, b.amplitude_magnitudes, atol=1e-10)
        assert np.allclose(a.message_magnitudes, b.message_magnitudes, atol=1e-10)
        assert np.array_equal(a.symbols, b.symbols)

    def test_ask_exhaustive_decode(self):
        rng = np.random.default_rng(13)
        grid = GridSpec(2)
        cb = rand_codebook(rng, grid, 3)
        sym = np.array([1, 0, 3])
        f = sym / np.linalg.norm(sym)
        users = decode_messages([[0.8 * np.exp(0.5j) * f]], [cb], constellation=4)
        assert np.array_equal(users[0].symbols, sym)

    def test_ask_tie_breaks_to_primitive(self):
        rng = np.random.default_rng(14)
        grid = GridSpec(2)
        cb = rand_codebook(rng, grid, 3)
        sym = np.array([1, 1, 1])  # collinear with (2,2,2) and (3,3,3)
        f = sym / np.linalg.norm(sym)
        users = decode_messages([[f]], [cb], constellation=4)
        assert np.array_equal(users[0].symbols, sym)

    def test_all_zero_blocks_degenerate(self):
        grid = GridSpec(2)
        cb = Codebook(0, np.ones((grid.N, 2), dtype=complex))
        users = decode_messages([[np.zeros(2, dtype=complex)]], [cb], constellation=4)
        assert users[0].degenerate
        assert np.all(users[0].message_magnitudes == 0)
        assert np.all(users[0].amplitude_magnitudes == 0)
