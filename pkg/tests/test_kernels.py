"""Kernel dictionary construction and combination."""

import numpy as np
import pytest

from graphkern import (
    GAUSSIAN,
    LINEAR,
    KernelDictionary,
    KernelSpec,
    build_dictionary,
    combine,
    kernel_eval,
    kernel_vector,
)


class TestKernelEval:
    def test_gaussian_at_zero_distance(self):
        spec = KernelSpec(GAUSSIAN, 2.5)
        x = np.array([1.0, -2.0, 3.0])
        assert kernel_eval(spec, x, x) == pytest.approx(1.0)

    def test_gaussian_known_value(self):
        # ||x - x2||^2 = 2 with variance 1 gives exp(-1)
        spec = KernelSpec(GAUSSIAN, 1.0)
        assert kernel_eval(spec, np.array([1.0, 0.0]), np.array([0.0, 1.0])) == (
            pytest.approx(np.exp(-1.0))
        )

    def test_linear_inner_product(self):
        spec = KernelSpec(LINEAR)
        assert kernel_eval(spec, np.array([1.0, 2.0]), np.array([3.0, 4.0])) == 11.0

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="shape"):
            kernel_eval(KernelSpec(LINEAR), np.ones(2), np.ones(3))

    def test_invalid_specs(self):
        with pytest.raises(ValueError, match="family"):
            KernelSpec("polynomial")
        with pytest.raises(ValueError, match="positive"):
            KernelSpec(GAUSSIAN, 0.0)


class TestBuildDictionary:
    def test_grid_endpoints_and_step(self):
        x = np.zeros((2, 1))
        d = build_dictionary(x, span=(0.01, 10.0), count=100)
        params = np.array([s.parameter for s in d.specs])
        assert params[0] == pytest.approx(0.01)
        assert params[-1] == pytest.approx(10.0)
        np.testing.assert_allclose(np.diff(params), 9.99 / 99, rtol=1e-12)

    def test_single_kernel_grid(self):
        d = build_dictionary(np.zeros((2, 1)), span=(0.25, 10.0), count=1)
        assert d.num_kernels == 1
        assert d.specs[0].parameter == pytest.approx(0.25)

    def test_one_sample_unit_matrices(self):
        d = build_dictionary(np.array([[1.0, 2.0]]), span=(0.5, 2.0), count=3)
        np.testing.assert_allclose(d.matrices, np.ones((3, 1, 1)))

    def test_matrices_match_pointwise_eval(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(4, 3))
        d = build_dictionary(x, span=(0.3, 3.0), count=5)
        for s, spec in enumerate(d.specs):
            for m in range(4):
                for n in range(4):
                    assert d.matrices[s, m, n] == pytest.approx(
                        kernel_eval(spec, x[m], x[n]), abs=1e-12
                    )

    def test_invalid_span(self):
        with pytest.raises(ValueError, match="span"):
            build_dictionary(np.zeros((2, 1)), span=(0.0, 1.0), count=2)
        with pytest.raises(ValueError, match="span"):
            build_dictionary(np.zeros((2, 1)), span=(2.0, 1.0), count=2)

    def test_empty_training_set(self):
        with pytest.raises(ValueError, match="empty"):
            build_dictionary(np.zeros((0, 2)), count=2)

    def test_matrices_symmetric_psd_with_unit_diagonal(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=(6, 2))
        d = build_dictionary(x, span=(0.2, 4.0), count=7)
        for s in range(7):
            mat = d.matrices[s]
            np.testing.assert_allclose(mat, mat.T, atol=1e-9)
            np.testing.assert_allclose(np.diag(mat), np.ones(6), atol=1e-12)
            assert np.linalg.eigvalsh(mat).min() >= -1e-8


class TestCombine:
    @pytest.fixture
    def dictionary(self):
        rng = np.random.default_rng(2)
        return build_dictionary(rng.normal(size=(5, 2)), span=(0.3, 3.0), count=4)

    def test_zero_weights(self, dictionary):
        np.testing.assert_array_equal(
            combine(dictionary, np.zeros(4)), np.zeros((5, 5))
        )

    def test_one_hot_selects_matrix(self, dictionary):
        e2 = np.zeros(4)
        e2[2] = 1.0
        np.testing.assert_array_equal(combine(dictionary, e2), dictionary.matrices[2])

    def test_half_half_average(self, dictionary):
        d2 = KernelDictionary(
            dictionary.specs[:2],
            dictionary.training_inputs,
            dictionary.matrices[:2].copy(),
        )
        avg = combine(d2, np.array([0.5, 0.5]))
        np.testing.assert_allclose(
            avg, 0.5 * (d2.matrices[0] + d2.matrices[1]), atol=1e-15
        )

    def test_linearity(self, dictionary):
        rng = np.random.default_rng(3)
        r1, r2 = rng.uniform(0, 2, size=(2, 4))
        lhs = combine(dictionary, r1 + r2)
        rhs = combine(dictionary, r1) + combine(dictionary, r2)
        np.testing.assert_allclose(lhs, rhs, atol=1e-12)

    def test_loewner_monotonicity(self, dictionary):
        # adding nonnegative mass keeps the difference PSD
        rng = np.random.default_rng(4)
        for _ in range(20):
            r1 = rng.uniform(0, 1, size=4)
            r2 = r1 + rng.uniform(0, 1, size=4)
            diff = combine(dictionary, r2) - combine(dictionary, r1)
            assert np.linalg.eigvalsh(diff).min() >= -1e-10

    def test_errors(self, dictionary):
        with pytest.raises(ValueError, match="shape"):
            combine(dictionary, np.ones(3))
        with pytest.raises(ValueError, match="nonnegative"):
            combine(dictionary, np.array([1.0, -0.1, 0.0, 0.0]))


class TestKernelVector:
    def test_training_point_recovers_unit_entry(self):
        rng = np.random.default_rng(5)
        x = rng.normal(size=(4, 3))
        d = build_dictionary(x, span=(0.5, 2.0), count=3)
        e1 = np.zeros(3)
        e1[1] = 1.0
        v = kernel_vector(d, e1, x[2])
        assert v[2] == pytest.approx(1.0)

    def test_zero_weights_zero_vector(self):
        d = build_dictionary(np.ones((3, 2)) * np.arange(3)[:, None], count=4)
        np.testing.assert_array_equal(
            kernel_vector(d, np.zeros(4), np.array([0.5, 0.5])), np.zeros(3)
        )

    def test_matches_augmented_dictionary_column(self):
        # appending x to the training set must reproduce the kernel vector
        # as the final column of the combined matrix
        rng = np.random.default_rng(6)
        x = rng.normal(size=(5, 2))
        x_new = rng.normal(size=2)
        rho = rng.uniform(0, 1, size=6)
        d = build_dictionary(x, span=(0.4, 4.0), count=6)
        d_aug = build_dictionary(np.vstack([x, x_new]), span=(0.4, 4.0), count=6)
        expected = combine(d_aug, rho)[:5, 5]
        np.testing.assert_allclose(kernel_vector(d, rho, x_new), expected, atol=1e-12)

    def test_mixed_families(self):
        rng = np.random.default_rng(7)
        x = rng.normal(size=(3, 2))
        d = KernelDictionary.from_specs(
            x, [KernelSpec(LINEAR), KernelSpec(GAUSSIAN, 1.5)]
        )
        rho = np.array([0.5, 2.0])
        z = rng.normal(size=2)
        expected = np.array(
            [
                0.5 * kernel_eval(KernelSpec(LINEAR), x[n], z)
                + 2.0 * kernel_eval(KernelSpec(GAUSSIAN, 1.5), x[n], z)
                for n in range(3)
            ]
        )
        np.testing.assert_allclose(kernel_vector(d, rho, z), expected, atol=1e-12)
