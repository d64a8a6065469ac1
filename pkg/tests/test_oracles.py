import numpy as np
import pytest

from cotflow import oracles


def test_brute_assignment_examples():
    assert oracles.brute_assignment([[0.0]]) == ((0,), 0.0)
    assert oracles.brute_assignment([[1.0, 2.0], [2.0, 1.0]]) == ((0, 1), 2.0)
    # ties resolved to the lexicographically first permutation
    assert oracles.brute_assignment(np.ones((3, 3)))[0] == (0, 1, 2)
    with pytest.raises(ValueError):
        oracles.brute_assignment(np.zeros((9, 9)))


def test_brute_dtw_examples():
    assert oracles.brute_dtw([[1.0]], [[1.0]]) == 0.0
    # a singleton against two points has exactly one alignment
    assert oracles.brute_dtw([[0.0]], [[1.0], [2.0]]) == pytest.approx(np.sqrt(1.0 + 4.0))
    with pytest.raises(ValueError):
        oracles.brute_dtw(np.zeros((5, 1)), np.zeros((2, 1)))


def test_fd_gradient_examples():
    assert oracles.fd_gradient(lambda th: float(th[0] ** 2), [3.0])[0] == pytest.approx(6.0, abs=1e-6)
    assert not oracles.fd_gradient(lambda th: 1.0, np.ones(4)).any()
    rng = np.random.default_rng(0)
    a = rng.normal(size=(4, 4))
    a = a + a.T
    th = rng.normal(size=4)
    g = oracles.fd_gradient(lambda x: float(x @ a @ x), th)
    np.testing.assert_allclose(g, 2 * a @ th, rtol=1e-6, atol=1e-8)


def test_covariance_trace():
    v = np.random.default_rng(1).normal(size=(30, 3))
    assert oracles.covariance_trace(v) == pytest.approx(np.trace(np.cov(v, rowvar=False, bias=True)))
