import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from cotlab.numerics import DimensionError, InputError, Rng, log_sum_exp, matmul, softmax


def naive_matmul(a, b):
    m, p = a.shape
    q = b.shape[1]
    out = np.zeros((m, q))
    for i in range(m):
        for j in range(q):
            s = 0.0
            for k in range(p):
                s += a[i, k] * b[k, j]
            out[i, j] = s
    return out


def test_matmul_identity():
    assert matmul([[1, 0], [0, 1]], [[3, 4], [5, 6]]).tolist() == [[3, 4], [5, 6]]


def test_matmul_dot():
    assert matmul([[1, 2]], [[3], [4]]).tolist() == [[11]]


@pytest.mark.parametrize("shape", [(3, 3, 3), (1, 7, 2), (32, 32, 32), (5, 1, 9)])
def test_matmul_matches_triple_loop(shape):
    m, p, q = shape
    rng = np.random.default_rng(sum(shape))
    a, b = rng.normal(size=(m, p)), rng.normal(size=(p, q))
    ref = naive_matmul(a, b)
    got = matmul(a, b)
    assert np.max(np.abs(got - ref)) <= 1e-12 * max(1.0, np.max(np.abs(ref)))


def test_matmul_shape_error_names_shapes():
    with pytest.raises(DimensionError, match=r"\(2, 3\).*\(2, 3\)"):
        matmul(np.ones((2, 3)), np.ones((2, 3)))


def test_softmax_uniform():
    np.testing.assert_allclose(softmax([[0.0, 0.0, 0.0]]), [[1 / 3] * 3], atol=1e-15)


def test_softmax_against_mpmath():
    mpmath.mp.dps = 30
    e = [mpmath.e**i for i in (1, 2, 3)]
    ref = [float(x / sum(e)) for x in e]
    got = softmax([[1.0, 2.0, 3.0]])[0]
    np.testing.assert_allclose(got, ref, atol=1e-12)
    np.testing.assert_allclose(got, [0.090031, 0.244728, 0.665241], atol=1e-6)


def test_softmax_rejects_nonfinite_and_k1():
    with pytest.raises(InputError):
        softmax([[0.0, np.nan]])
    with pytest.raises(InputError):
        softmax([[1.0]])


def test_softmax_large_logits_stable():
    p = softmax([[1000.0, 1000.0, -1000.0]])
    np.testing.assert_allclose(p, [[0.5, 0.5, 0.0]], atol=1e-15)


def test_log_sum_exp_cases():
    assert log_sum_exp([0.0]) == 0.0
    assert log_sum_exp([2.5, 2.5]) == pytest.approx(2.5 + math.log(2), abs=1e-15)
    assert log_sum_exp([1000.0, 1000.0]) == pytest.approx(1000 + math.log(2), abs=1e-12)
    with pytest.raises(InputError):
        log_sum_exp([])


logit_rows = arrays(
    np.float64,
    st.tuples(st.integers(1, 6), st.integers(2, 12)),
    elements=st.floats(-50, 50, allow_nan=False),
)


@settings(max_examples=200, deadline=None)
@given(logit_rows, st.floats(-100, 100))
def test_softmax_shift_invariance_and_argmax(z, c):
    p = softmax(z)
    np.testing.assert_allclose(softmax(z + c), p, atol=1e-12, rtol=0)
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(p >= 0) and np.all(p <= 1)
    # argmax preserved wherever the top logit wins by a float64-resolvable gap
    top2 = np.sort(z, axis=1)[:, -2:]
    unique = top2[:, 1] - top2[:, 0] > 1e-9
    assert np.array_equal(np.argmax(p, axis=1)[unique], np.argmax(z, axis=1)[unique])


def test_rng_reproducible_bytes():
    a = Rng(123).child("init").normal((50,)).tobytes()
    b = Rng(123).child("init").normal((50,)).tobytes()
    assert a == b
    assert Rng(124).child("init").normal((50,)).tobytes() != a


def test_rng_substreams_independent_of_creation_order():
    r1 = Rng(7)
    r1.child("shuffle").permutation(10)
    first = r1.child("init").normal((5,))
    second = Rng(7).child("init").normal((5,))
    assert first.tobytes() == second.tobytes()
    assert Rng(7).child("data").normal((5,)).tobytes() != second.tobytes()


def test_rng_rejects_bad_seed():
    with pytest.raises(InputError):
        Rng(-1)
    Rng(2**64 - 1)
