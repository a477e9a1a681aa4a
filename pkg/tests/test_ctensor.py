import math

import numpy as np
import pytest

from zetadp.ctensor import (
    Rng,
    add,
    circularity_report,
    conj,
    ctensor,
    dft_1d,
    l2_norm,
    magnitude,
    matmul,
    mul,
    phase,
    reshape,
    sample_circular_gaussian,
    scale,
    sub,
)
from zetadp.errors import DomainError

from oracles import naive_dft


class TestSampler:
    def test_component_variance_halves_total(self):
        # total variance 2 => each component has variance 1
        z = sample_circular_gaussian((200_000,), 2.0, Rng(1))
        se = math.sqrt(2.0 / z.size)  # Var(re^2) = 2 for component variance 1
        assert abs(np.mean(z.real**2) - 1.0) < 4 * se
        assert abs(np.mean(z.imag**2) - 1.0) < 4 * se

    def test_degenerate_variance_limit(self):
        z = sample_circular_gaussian((16,), 1e-300, Rng(2))
        assert np.all(np.abs(z) < 1e-140)

    def test_law_of_large_numbers_audit(self):
        n = 1_000_000
        z = sample_circular_gaussian((n,), 1.0, Rng(3))
        bound = 4.0 / math.sqrt(n)
        assert abs(np.mean(z**2)) < bound
        assert abs(np.mean(np.abs(z) ** 2) - 1.0) < bound

    def test_circularity_within_four_se(self):
        n = 1_000_000
        z = sample_circular_gaussian((n,), 1.0, Rng(4))
        report = circularity_report(z, 1.0)
        assert report.passed, report.failures
        assert abs(report.var_re - 0.5) < 4 * math.sqrt(0.5 / n)
        assert abs(report.var_im - 0.5) < 4 * math.sqrt(0.5 / n)
        assert abs(report.cov) < 4 * 0.5 / math.sqrt(n)

    def test_determinism_same_seed_and_stream(self):
        a = sample_circular_gaussian((64, 3), 1.7, Rng(99, 5))
        b = sample_circular_gaussian((64, 3), 1.7, Rng(99, 5))
        assert a.tobytes() == b.tobytes()

    def test_streams_are_distinct(self):
        a = sample_circular_gaussian((64,), 1.0, Rng(99, 5))
        b = sample_circular_gaussian((64,), 1.0, Rng(99, 6))
        assert not np.array_equal(a, b)

    def test_nonpositive_variance_rejected(self):
        with pytest.raises(DomainError):
            sample_circular_gaussian((4,), 0.0, Rng(0))
        with pytest.raises(DomainError):
            sample_circular_gaussian((4,), -1.0, Rng(0))


class TestNorm:
    def test_three_four_five(self):
        assert l2_norm(ctensor([3 + 4j])) == pytest.approx(5.0, abs=0)

    def test_sqrt_two(self):
        assert l2_norm(ctensor([1 + 0j, 0 + 1j])) == pytest.approx(math.sqrt(2), rel=1e-15)

    def test_componentwise_oracle(self):
        rng = Rng(5)
        for _ in range(20):
            t = sample_circular_gaussian((37,), 2.3, rng)
            expected_sq = float(np.sum(t.real**2 + t.imag**2))
            assert l2_norm(t) ** 2 == pytest.approx(expected_sq, rel=1e-12)

    def test_nonnegative_zero_iff_zero(self):
        assert l2_norm(ctensor(np.zeros(5))) == 0.0
        assert l2_norm(ctensor([1e-18 + 0j])) > 0.0

    def test_phase_invariance(self):
        rng = Rng(6)
        t = sample_circular_gaussian((15,), 1.0, rng)
        for theta in (0.3, 1.2, -2.8):
            u = complex(np.exp(1j * theta))
            assert l2_norm(scale(t, u)) == pytest.approx(l2_norm(t), rel=1e-12)


class TestElementwise:
    def test_conj(self):
        assert conj(ctensor([1 + 2j]))[0] == 1 - 2j

    def test_complex_product(self):
        out = mul(ctensor([1 + 1j]), ctensor([1 - 1j]))
        assert out[0] == 2 + 0j

    def test_matmul_hand_oracle(self):
        a = ctensor([[1j, 1 + 0j]])      # 1x2
        b = ctensor([[1 + 0j], [1j]])    # 2x1
        out = matmul(a, b)
        assert out.shape == (1, 1)
        assert out[0, 0] == 2j

    def test_add_sub(self):
        a = ctensor([1 + 1j, 2 + 0j])
        b = ctensor([0 + 1j, 1 + 1j])
        assert np.array_equal(add(a, b), np.array([1 + 2j, 3 + 1j]))
        assert np.array_equal(sub(a, b), np.array([1 + 0j, 1 - 1j]))

    def test_shape_mismatch_raises(self):
        with pytest.raises(DomainError):
            add(ctensor([1]), ctensor([1, 2]))
        with pytest.raises(DomainError):
            mul(ctensor([[1, 2]]), ctensor([1, 2]))
        with pytest.raises(DomainError):
            matmul(ctensor([[1, 2]]), ctensor([[1, 2]]))

    def test_magnitude_and_phase(self):
        t = ctensor([3 + 4j, 0 + 0j, -1 + 0j])
        assert np.allclose(magnitude(t), [5.0, 0.0, 1.0])
        assert phase(t)[1] == 0.0  # arg(0) is defined as 0
        assert phase(t)[2] == pytest.approx(math.pi)

    def test_phase_of_negative_zero_complex(self):
        t = np.array([complex(-0.0, 0.0)])
        assert phase(t)[0] == 0.0

    def test_reshape(self):
        t = ctensor(np.arange(6) + 0j)
        assert reshape(t, (2, 3)).shape == (2, 3)
        with pytest.raises(DomainError):
            reshape(t, (4, 2))

    def test_outputs_are_immutable(self):
        t = add(ctensor([1 + 0j]), ctensor([2 + 0j]))
        with pytest.raises(ValueError):
            t[0] = 0

    def test_ctensor_validation(self):
        with pytest.raises(DomainError):
            ctensor([1, 2, 3], shape=(2,))
        with pytest.raises(DomainError):
            ctensor([np.nan])
        with pytest.raises(DomainError):
            ctensor([1.0], shape=(0,))


class TestDft:
    def test_constant_signal(self):
        out = dft_1d(ctensor([1, 1, 1, 1]), 2)
        assert np.allclose(out, [4 + 0j, 0 + 0j], atol=1e-14)

    def test_unit_impulse(self):
        out = dft_1d(ctensor([1, 0, 0, 0]), 4)
        assert np.allclose(out, np.ones(4), atol=1e-14)

    def test_random_against_naive_oracle(self):
        rng = Rng(7)
        x = sample_circular_gaussian((8,), 1.0, rng)
        got = dft_1d(x, 8)
        expected = naive_dft(x, 8)
        assert np.max(np.abs(got - expected)) < 1e-10

    def test_keep_validation(self):
        with pytest.raises(DomainError):
            dft_1d(ctensor([1, 2]), 3)
        with pytest.raises(DomainError):
            dft_1d(ctensor([[1, 2]]), 1)


class TestRng:
    def test_normal_stream_deterministic(self):
        a = Rng(11, 3).normal(101)
        b = Rng(11, 3).normal(101)
        assert np.array_equal(a, b)

    def test_normal_moments(self):
        g = Rng(12).normal(400_000)
        assert abs(np.mean(g)) < 4 / math.sqrt(g.size)
        assert abs(np.var(g) - 1.0) < 4 * math.sqrt(2.0 / g.size)

    def test_seed_range_validation(self):
        with pytest.raises(DomainError):
            Rng(-1)
        with pytest.raises(DomainError):
            Rng(0, 2**64)
