"""Per-primitive reverse sweeps against central finite differences."""

import numpy as np
import pytest

from src.autodiff import tape as ad
from src.autodiff.tape import Tape

EPS = 1e-6


def fd_check(build, inputs, rng, rtol=1e-5, atol=1e-7):
    """Compare tape gradients of sum(weights * build(*inputs)) with central differences."""
    tape = Tape(recording=True)
    leaves = [tape.leaf(x) for x in inputs]
    out = build(*leaves)
    weights = rng.standard_normal(out.shape)
    grads = tape.backward({out: weights})

    def objective(arrays) -> float:
        const = Tape(recording=False)
        return float(np.sum(weights * build(*[const.constant(a) for a in arrays]).value))

    for k, (leaf, x) in enumerate(zip(leaves, inputs)):
        numeric = np.zeros_like(x)
        for index in np.ndindex(x.shape):
            plus = [a.copy() for a in inputs]
            minus = [a.copy() for a in inputs]
            plus[k][index] += EPS
            minus[k][index] -= EPS
            numeric[index] = (objective(plus) - objective(minus)) / (2 * EPS)
        np.testing.assert_allclose(grads[leaf], numeric, rtol=rtol, atol=atol)


class TestElementwise:
    def test_add_mul_with_broadcast(self, rng):
        a, b = rng.standard_normal((3, 4)), rng.standard_normal((1, 4))
        fd_check(lambda x, y: ad.mul(ad.add(x, y), y), [a, b], rng)

    def test_relu_away_from_the_kink(self, rng):
        a = rng.uniform(0.1, 1.0, (3, 3)) * rng.choice([-1.0, 1.0], (3, 3))
        fd_check(ad.relu, [a], rng)

    def test_log_of_positive_entries(self, rng):
        fd_check(ad.log, [rng.uniform(0.5, 2.0, (4,))], rng)

    def test_scale_and_neg(self, rng):
        fd_check(lambda x: ad.neg(ad.scale(x, 2.5)), [rng.standard_normal((2, 3))], rng)


class TestStructural:
    def test_matmul_and_affine(self, rng):
        x, w, b = rng.standard_normal((3, 4)), rng.standard_normal((4, 2)), rng.standard_normal((2,))
        fd_check(lambda x, w, b: ad.matmul(ad.affine(x, w, b), ad.transpose(w)), [x, w, b], rng)

    def test_reshape_expand_reduce(self, rng):
        x = rng.standard_normal((2, 6))
        fd_check(lambda x: ad.reduce_sum(ad.expand(ad.reshape(x, (3, 4)), 0), axis=2), [x], rng)

    def test_gather_accumulates_repeated_indices(self):
        tape = Tape()
        x = tape.leaf(np.array([1.0, 2.0, 3.0]))
        y = ad.getitem(x, (np.array([0, 0, 1]),))
        grads = tape.backward({y: np.ones(3)})
        np.testing.assert_array_equal(grads[x], [2.0, 1.0, 0.0])

    def test_slice_concat_stack(self, rng):
        a, b = rng.standard_normal((2, 3)), rng.standard_normal((2, 2))
        fd_check(
            lambda a, b: ad.stack([ad.concat([a, b], axis=1), ad.concat([b, a], axis=1)], axis=0),
            [a, b], rng,
        )
        fd_check(lambda a: ad.getitem(a, (slice(None), slice(1, 3))), [a], rng)

    def test_unused_leaf_gets_zero_gradient(self):
        tape = Tape()
        x, unused = tape.leaf(np.ones(2)), tape.leaf(np.ones(3))
        y = ad.scale(x, 2.0)
        grads = tape.backward({y: np.ones(2)})
        assert unused not in grads
        np.testing.assert_array_equal(grads[unused], np.zeros(3))


class TestSoftmax:
    def test_gradient(self, rng):
        fd_check(lambda x: ad.softmax(x, axis=0), [rng.standard_normal((4, 3))], rng)
        fd_check(lambda x: ad.softmax(x, axis=1), [rng.standard_normal((4, 3))], rng)

    def test_large_logits_do_not_overflow(self):
        tape = Tape(recording=False)
        y = ad.softmax(tape.constant(np.array([1000.0, 1000.0])), axis=0)
        np.testing.assert_allclose(y.value, [0.5, 0.5])

    def test_minus_infinity_gets_zero_probability(self):
        tape = Tape(recording=False)
        y = ad.softmax(tape.constant(np.array([0.0, -np.inf])), axis=0)
        np.testing.assert_array_equal(y.value, [1.0, 0.0])


class TestLogDomain:
    def test_logsumexp(self, rng):
        fd_check(lambda x: ad.logsumexp(x, axis=1), [rng.standard_normal((3, 4))], rng)

    def test_logaddexp(self, rng):
        fd_check(ad.logaddexp, [rng.standard_normal((2, 3)), rng.standard_normal((2, 3))], rng)

    def test_log_project(self, rng):
        x = rng.standard_normal((3, 4))
        kernel = rng.uniform(0.1, 1.0, (2, 4))
        fd_check(ad.log_project, [x, kernel], rng)

    def test_log_pair_project(self, rng):
        left, right = rng.standard_normal((3, 2)), rng.standard_normal((4, 2))
        kernel = rng.uniform(0.1, 1.0, (3, 2))
        index = np.array([[0, 1], [2, 3], [1, 1]])
        mask = np.zeros((3, 2))
        fd_check(lambda lf, rt, k: ad.log_pair_project(lf, rt, index, k, mask), [left, right, kernel], rng)

    def test_all_minus_infinity_gives_zero_gradient(self):
        tape = Tape()
        x = tape.leaf(np.array([[-np.inf, -np.inf], [0.0, 1.0]]))
        y = ad.logsumexp(x, axis=1)
        assert y.value[0] == -np.inf
        grads = tape.backward({y: np.ones(2)})
        assert np.all(np.isfinite(grads[x]))
        np.testing.assert_array_equal(grads[x][0], [0.0, 0.0])

    def test_masked_pairs_contribute_nothing(self, rng):
        tape = Tape()
        left, right = tape.leaf(rng.standard_normal((1, 2))), tape.leaf(rng.standard_normal((2, 2)))
        kernel = tape.constant(np.ones((1, 2)))
        mask = np.array([[0.0, -np.inf]])
        y = ad.log_pair_project(left, right, np.array([[0, 1]]), kernel, mask)
        assert y.value[0, 1, 0] == -np.inf
        grads = tape.backward({y: np.array([[[1.0], [0.0]]])})
        np.testing.assert_array_equal(grads[right][1], [0.0, 0.0])

    @pytest.mark.parametrize("dtype", [np.float32, np.float64])
    def test_dtype_is_preserved(self, dtype):
        tape = Tape()
        x = tape.leaf(np.zeros((2, 3), dtype=dtype))
        y = ad.log_project(x, tape.constant(np.ones((2, 3), dtype=dtype)))
        assert y.value.dtype == dtype
        assert tape.backward({y: np.ones((2, 2))})[x].dtype == dtype
