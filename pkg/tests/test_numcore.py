import numpy as np
import pytest

from src.errors import ConfigError, ContractError, DimensionError
from src.numcore import (
    AttentionWeights,
    DiffArray,
    Rng,
    backward,
    broadcast_to,
    concat,
    finite_diff_check,
    gelu,
    l2_norm,
    layer_norm,
    linear,
    log_softmax,
    masked_attention,
    no_grad,
    normalize,
    sigmoid,
    softmax,
    tanh,
)


def leaf(rng, *shape):
    return DiffArray(rng.normal(shape), requires_grad=True)


class TestDiffArray:
    def test_broadcast_add_reduces_gradient_to_operand_shape(self, rng):
        a, b = leaf(rng, 3, 4), leaf(rng, 4)
        backward((a + b).sum())
        np.testing.assert_allclose(a.grad, np.ones((3, 4)))
        np.testing.assert_allclose(b.grad, np.full(4, 3.0))

    def test_gradients_accumulate_until_zeroed(self, rng):
        x = leaf(rng, 3)
        backward((x * x).sum())
        backward((x * x).sum())
        np.testing.assert_allclose(x.grad, 4 * x.values)
        x.zero_grad()
        assert x.grad is None

    def test_shared_subexpression_gets_both_paths(self, rng):
        x = leaf(rng, 2)
        y = tanh(x)
        backward((y * y + y).sum())
        expected = (2 * np.tanh(x.values) + 1) * (1 - np.tanh(x.values) ** 2)
        np.testing.assert_allclose(x.grad, expected)

    def test_indexing_scatters_repeated_rows(self, rng):
        x = leaf(rng, 4, 2)
        backward(x[np.array([0, 0, 3])].sum())
        np.testing.assert_allclose(x.grad[:, 0], [2.0, 0.0, 0.0, 1.0])

    def test_backward_requires_scalar(self, rng):
        with pytest.raises(ContractError):
            backward(leaf(rng, 3) * 2.0)

    def test_backward_without_graph_fails(self):
        with pytest.raises(ContractError):
            backward(DiffArray(np.ones(1)))

    def test_matmul_shape_mismatch_names_both_shapes(self, rng):
        with pytest.raises(DimensionError) as info:
            leaf(rng, 2, 3) @ leaf(rng, 4, 5)
        assert "(2, 3)" in str(info.value) and "(4, 5)" in str(info.value)

    def test_no_grad_records_nothing(self, rng):
        x = leaf(rng, 3)
        with no_grad():
            y = (x * 2.0).sum()
        assert not y.requires_grad
        assert y.node is None
        assert (x * 2.0).sum().requires_grad


class TestKernels:
    def test_softmax_rows_sum_to_one(self, rng):
        p = softmax(DiffArray(rng.normal((3, 7))), axis=-1).values
        np.testing.assert_allclose(p.sum(axis=-1), 1.0)

    def test_log_softmax_is_stable_for_large_logits(self):
        out = log_softmax(DiffArray(np.array([[1000.0, 0.0]]))).values
        assert np.all(np.isfinite(out))
        assert out[0, 0] == pytest.approx(0.0)

    def test_l2_norm_gradient_at_zero_vector_is_zero(self):
        x = DiffArray(np.zeros(3), requires_grad=True)
        backward(l2_norm(x))
        np.testing.assert_array_equal(x.grad, np.zeros(3))

    def test_normalize_produces_unit_rows(self, rng):
        out = normalize(DiffArray(rng.normal((5, 4)))).values
        np.testing.assert_allclose(np.linalg.norm(out, axis=-1), 1.0)

    def test_layer_norm_output_statistics(self, rng):
        out = layer_norm(DiffArray(rng.normal((4, 8)) * 3 + 2), DiffArray(np.ones(8)), DiffArray(np.zeros(8))).values
        np.testing.assert_allclose(out.mean(axis=-1), 0.0, atol=1e-12)
        np.testing.assert_allclose(out.var(axis=-1), 1.0, atol=1e-4)

    def test_linear_rejects_bad_bias(self, rng):
        with pytest.raises(DimensionError):
            linear(leaf(rng, 2, 3), leaf(rng, 3, 4), leaf(rng, 3))

    def test_concat_and_broadcast_gradients(self, rng):
        a, b = leaf(rng, 2, 1), leaf(rng, 2, 3)
        out = concat([broadcast_to(a, (2, 2)), b], axis=1)
        assert out.shape == (2, 5)
        backward(out.sum())
        np.testing.assert_allclose(a.grad, np.full((2, 1), 2.0))

    def test_masked_keys_get_zero_weight(self, rng):
        d = 4
        q = DiffArray(rng.normal((3, d)))
        weights = AttentionWeights(*[DiffArray(rng.normal((d, d) if i % 2 == 0 else (d,))) for i in range(6)])
        mask = np.array([[True, False, False], [True, True, False], [True, True, True]])
        _, attn = masked_attention(q, q, mask, 2, weights, return_weights=True)
        assert np.all(attn[..., ~mask] == 0.0)
        np.testing.assert_allclose(attn.sum(axis=-1), 1.0)

    def test_masked_attention_rejects_empty_row(self, rng):
        d = 4
        q = DiffArray(rng.normal((2, d)))
        weights = AttentionWeights(*[DiffArray(rng.normal((d, d) if i % 2 == 0 else (d,))) for i in range(6)])
        with pytest.raises(ConfigError):
            masked_attention(q, q, np.array([[True, True], [False, False]]), 2, weights)


class TestFiniteDifferences:
    @pytest.mark.parametrize("kernel", [tanh, sigmoid, gelu, normalize, softmax, log_softmax])
    def test_kernels_match_central_differences(self, rng, kernel):
        x = leaf(rng, 3, 5)
        w = DiffArray(rng.normal((3, 5)))
        assert finite_diff_check(lambda: (kernel(x) * w).sum(), [x], floor=1e-6) < 1e-5

    def test_layer_norm_all_inputs(self, rng):
        x, g, b = leaf(rng, 2, 6), leaf(rng, 6), leaf(rng, 6)
        w = DiffArray(rng.normal((2, 6)))
        assert finite_diff_check(lambda: (layer_norm(x, g, b) * w).sum(), [x, g, b], floor=1e-6) < 1e-5

    def test_wrong_backward_is_detected(self, rng):
        x = leaf(rng, 4)

        def doubled_wrong(a):
            return DiffArray.from_op(2.0 * a.values, (a,), lambda g: (g,), "wrong")

        assert finite_diff_check(lambda: doubled_wrong(x).sum(), [x]) > 0.1

    def test_component_subset(self, rng):
        x = leaf(rng, 50)
        err = finite_diff_check(lambda: (tanh(x) ** 2).sum(), [x], max_components=5, rng=Rng(3))
        assert err < 1e-5

    def test_magnitude_subset_checks_the_largest_components(self, rng):
        x = leaf(rng, 50)
        w = np.arange(1.0, 51.0)
        wrong = w.copy()
        wrong[-1] *= 2.0

        def scaled(a):
            return DiffArray.from_op(a.values * w, (a,), lambda g: (g * wrong,), "scaled")

        assert finite_diff_check(lambda: scaled(x).sum(), [x], max_components=1, by_magnitude=True) > 0.1
        assert finite_diff_check(lambda: (tanh(x) ** 2).sum(), [x], max_components=5, by_magnitude=True) < 1e-5


class TestRng:
    def test_same_seed_same_stream(self):
        np.testing.assert_array_equal(Rng(5).normal(4), Rng(5).normal(4))

    def test_children_are_deterministic_and_distinct(self):
        a, b = Rng(5).child("basis"), Rng(5).child("basis")
        np.testing.assert_array_equal(a.normal(3), b.normal(3))
        assert not np.array_equal(Rng(5).child("x").normal(3), Rng(5).child("y").normal(3))
