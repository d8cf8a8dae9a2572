import numpy as np
import pytest
from scipy.linalg import subspace_angles

from cqamimo.channel import ChannelSet
from cqamimo.errors import InfeasibleError
from cqamimo.power import cqa_maas, waterfilling
from cqamimo.precoder import (assemble_precoder, bd_first_factor, build_cqa_precoder,
                              complement_channel, effective_channel, factors_spectrum,
                              numeric_rank, precoder_factors, rbd_first_factor)
from cqamimo.rate import sum_rate_bussgang

from conftest import cn


def leakage(channels, p):
    worst = 0.0
    offs = channels.user_offsets
    for i, (a, b) in enumerate(offs):
        for j, (c, d) in enumerate(offs):
            if i != j:
                worst = max(worst, np.linalg.norm(channels.h[a:b] @ p[:, c:d]))
    return worst / np.linalg.norm(channels.h)


class TestComplement:
    def test_two_users(self, random_channels):
        c = random_channels(n_rx=(2, 3))
        assert np.array_equal(complement_channel(c, 0), c.block(1))

    def test_order_kept(self, random_channels):
        c = random_channels(n_rx=(2, 2, 2))
        assert np.array_equal(complement_channel(c, 2), c.h[:4])

    def test_round_trip(self, random_channels):
        c = random_channels(n_rx=(1, 2, 3, 2))
        for j, (a, b) in enumerate(c.user_offsets):
            bar = complement_channel(c, j)
            assert np.array_equal(np.vstack([bar[:a], c.block(j), bar[a:]]), c.h)

    def test_bad_index(self, random_channels):
        with pytest.raises(IndexError):
            complement_channel(random_channels(), 4)


class TestFirstFactors:
    def test_axis_null_space(self):
        w = bd_first_factor(np.array([[1, 0, 0, 0], [0, 1, 0, 0]], dtype=complex))
        assert w.shape == (4, 2)
        assert np.allclose(np.abs(w[:2]), 0)
        assert np.allclose(w.conj().T @ w, np.eye(2))

    def test_random_orthonormal(self, rng):
        hb = cn(rng, (30, 64))
        w = bd_first_factor(hb)
        assert w.shape == (64, 34)
        assert np.max(np.abs(w.conj().T @ w - np.eye(34))) < 1e-12
        assert np.linalg.norm(hb @ w) < 1e-12 * np.linalg.norm(hb)

    def test_rank_deficient(self, rng):
        rows = cn(rng, (3, 8))
        hb = np.vstack([rows, rows[:2]])
        assert bd_first_factor(hb).shape == (8, 5)

    def test_no_null_space(self, rng):
        with pytest.raises(InfeasibleError):
            bd_first_factor(cn(rng, (4, 4)))

    def test_single_user_identity(self):
        assert np.array_equal(bd_first_factor(np.zeros((0, 3))), np.eye(3))

    def test_phase_convention(self, rng):
        w = bd_first_factor(cn(rng, (2, 6)))
        piv = w[np.argmax(np.abs(w), axis=0), np.arange(w.shape[1])]
        assert np.allclose(piv.imag, 0) and np.all(piv.real > 0)

    def test_rbd_diagonal_scaling(self):
        hb = np.array([[2, 0, 0, 0], [0, 1, 0, 0]], dtype=complex)
        # chi = N_u N_0 / P = 1
        f = rbd_first_factor(hb, noise_power=0.5, total_power=4.0, n_rx_total=8)
        assert np.allclose(np.linalg.norm(f, axis=0), [1 / np.sqrt(5), 1 / np.sqrt(2), 1, 1])

    def test_rbd_inverse_sqrt_residual(self, rng):
        hb = cn(rng, (6, 10))
        chi = 0.3
        f = rbd_first_factor(hb, chi, 1.0, 1)
        _, s, vh = np.linalg.svd(hb)
        w = vh.conj().T
        s2 = np.zeros(10)
        s2[:6] = s ** 2
        # column phases do not matter: compare through the Gram matrix
        g = f.conj().T @ f
        assert np.allclose(np.sort(np.linalg.eigvalsh(g)), np.sort(1 / (s2 + chi)), atol=1e-10)
        m = np.diag(np.sqrt(s2 + chi)) @ (w.conj().T @ f)
        assert np.allclose(np.abs(m), np.eye(10), atol=1e-10)

    def test_rbd_large_chi_shrinks(self, rng):
        hb = cn(rng, (2, 5))
        f = rbd_first_factor(hb, 1e12, 1.0, 1)
        assert np.allclose(np.linalg.norm(f, axis=0), 1e-6, rtol=1e-6)

    def test_numeric_rank(self):
        assert numeric_rank(np.array([1.0, 1e-20]), (2, 2)) == 1
        assert numeric_rank(np.zeros(2), (2, 2)) == 0


class TestEffectiveChannel:
    def test_rank_one(self, rng):
        pc = bd_first_factor(cn(rng, (2, 5)))
        h = np.zeros((1, 5), dtype=complex)
        h[0, 0] = 1
        e = effective_channel(h, pc)
        assert e.rank == 1
        assert e.sv[0] == pytest.approx(np.linalg.norm(pc[0]))

    def test_full_rank_bd(self, rng):
        for _ in range(100):
            c = ChannelSet.from_matrix(cn(rng, (4, 8)), (2, 2))
            for f in precoder_factors(c, "BD"):
                assert f.sv_effective.size == 2

    def test_svd_round_trip(self, rng):
        h, pc = cn(rng, (3, 9)), bd_first_factor(cn(rng, (3, 9)))
        e = effective_channel(h, pc)
        rebuilt = (e.u * e.sv) @ e.w1.conj().T
        assert np.linalg.norm(rebuilt - e.h_e) < 1e-12 * np.linalg.norm(e.h_e)

    def test_basis_invariance(self, rng):
        h, hb = cn(rng, (2, 12)), cn(rng, (6, 12))
        pc = bd_first_factor(hb)
        q, _ = np.linalg.qr(cn(rng, (6, 6)))
        a = effective_channel(h, pc).sv
        b = effective_channel(h, pc @ q).sv
        assert np.allclose(a, b, rtol=1e-9)


class TestAssembly:
    def test_equal_loading_orthonormal(self, random_channels):
        c = random_channels()
        r = build_cqa_precoder(c, "BD")
        for a, b in c.user_offsets:
            pj = r.p[:, a:b]
            assert np.allclose(pj.conj().T @ pj, np.eye(b - a), atol=1e-12)
        assert np.trace(r.p.conj().T @ r.p).real == pytest.approx(8)

    def test_zero_loading(self, random_channels):
        f = precoder_factors(random_channels(), "BD")
        assert np.array_equal(assemble_precoder(f, np.zeros(8)).p, np.zeros((16, 8)))

    def test_negative_loading(self, random_channels):
        f = precoder_factors(random_channels(), "BD")
        with pytest.raises(ValueError):
            assemble_precoder(f, -np.ones(8))
        with pytest.raises(ValueError):
            assemble_precoder(f, np.ones(7))

    def test_zero_interference(self, rng):
        for _ in range(5):
            c = ChannelSet.from_matrix(cn(rng, (8, 12)), (2,) * 4)
            p = build_cqa_precoder(c, "BD").p
            assert leakage(c, p) < 1e-9

    def test_power_accounting(self, random_channels, rng):
        c = random_channels()
        f = precoder_factors(c, "BD")
        omega = rng.uniform(0, 2, 8)
        p = assemble_precoder(f, omega).p
        assert np.trace(p.conj().T @ p).real == pytest.approx(omega.sum(), rel=1e-10)

    def test_rbd_power_accounting(self, random_channels, rng):
        c = random_channels()
        f = precoder_factors(c, "RBD", noise_power=0.5, total_power=8)
        omega = rng.uniform(0, 2, 8)
        p = assemble_precoder(f, omega, "RBD").p
        assert np.linalg.norm(p) ** 2 == pytest.approx(omega.sum(), rel=1e-10)

    def test_orthogonal_users(self):
        h = np.eye(4, dtype=complex)
        c = ChannelSet.from_matrix(h, (2, 2))
        r = build_cqa_precoder(c, "BD")
        assert np.allclose(r.spectrum().phi, 1)

    def test_allocator_does_not_touch_geometry(self, random_channels):
        c = random_channels()
        a = build_cqa_precoder(c, "BD")
        b = build_cqa_precoder(c, "BD", allocator=lambda s: cqa_maas(s, 10.0, 0.94, 8.0))
        for ua, ub in zip(a.per_user, b.per_user):
            assert np.array_equal(ua.p_c, ub.p_c)

    def test_classical_bd_rate(self, random_channels):
        # CQA-BD at full resolution is BD: same rate as a hand-built precoder
        c = random_channels()
        r = build_cqa_precoder(c, "BD")
        blocks = []
        for j in range(c.users):
            pc = bd_first_factor(complement_channel(c, j))
            _, _, vh = np.linalg.svd(c.block(j) @ pc, full_matrices=False)
            blocks.append(pc @ vh.conj().T)
        ref = np.hstack(blocks)
        assert sum_rate_bussgang(c.h, r.p, 1.0, 10.0, 8) == pytest.approx(
            sum_rate_bussgang(c.h, ref, 1.0, 10.0, 8), rel=1e-12)

    def test_rbd_approaches_bd(self, random_channels):
        c = random_channels()
        bd = build_cqa_precoder(c, "BD").p
        prev = np.inf
        for n0 in (1e-1, 1e-3, 1e-6):
            rbd = build_cqa_precoder(c, "RBD", noise_power=n0, total_power=8).p
            ang = 0.0
            for a, b in c.user_offsets:
                ang = max(ang, np.max(subspace_angles(bd[:, a:b], rbd[:, a:b])))
            assert ang < prev
            prev = ang
        assert prev < 1e-3

    def test_spectrum_owner(self, random_channels):
        s = factors_spectrum(precoder_factors(random_channels(n_rx=(1, 2, 3)), "BD"))
        assert list(s.owner) == [0, 1, 1, 2, 2, 2]

    def test_waterfilled_bd(self, random_channels):
        c = random_channels()
        r = build_cqa_precoder(c, "BD", allocator=lambda s: waterfilling(s, 0.8, 8.0))
        assert np.linalg.norm(r.p) ** 2 == pytest.approx(8.0)
        assert leakage(c, r.p) < 1e-9

    def test_rbd_needs_noise(self, random_channels):
        with pytest.raises(ValueError):
            precoder_factors(random_channels(), "RBD")
        with pytest.raises(ValueError):
            precoder_factors(random_channels(), "ZF")
