import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from btquant.polynomial import MAX_WICK_DEGREE, Polynomial, WickEngine, gaussian_expectation


def matchings(items):
    """All perfect matchings of a list (independent of the recursion under test)."""
    if not items:
        yield []
        return
    a = items[0]
    for k in range(1, len(items)):
        rest = items[1:k] + items[k + 1:]
        for m in matchings(rest):
            yield [(a, items[k])] + m


def isserlis(alpha, Sigma):
    idx = [i for i, e in enumerate(alpha) for _ in range(e)]
    if len(idx) % 2:
        return 0j
    return sum(np.prod([Sigma[i, j] for i, j in m]) for m in matchings(idx)) if idx else 1 + 0j


def test_no_zero_coefficients_stored():
    p = Polynomial(2, {(1, 0): 1.0, (0, 1): 0.0})
    assert list(p.terms) == [(1, 0)]
    q = p - p
    assert q.is_zero() and q.degree == 0


def test_arithmetic_and_evaluation():
    x = Polynomial.variable(2, 0)
    y = Polynomial.variable(2, 1)
    p = (x + 2 * y) ** 2 - 3
    pts = np.array([[0.5, -1.0], [2.0, 0.25 + 1j]])
    expect = (pts[:, 0] + 2 * pts[:, 1]) ** 2 - 3
    assert np.allclose(p(pts), expect)
    assert p.degree == 2 and p.parity() == 0
    assert (p + x).parity() is None


def test_derivative_and_directional():
    x = Polynomial.variable(2, 0)
    y = Polynomial.variable(2, 1)
    p = x ** 3 * y
    assert np.allclose(p.derivative(0)([[2.0, 3.0]]), 3 * 4 * 3)
    assert np.allclose(p.directional([1.0, 1j])([[2.0, 3.0]]), 36 + 1j * 8)


def test_substitute_and_embed():
    x = Polynomial.variable(1, 0)
    p = x ** 2 + x
    u = Polynomial.variable(2, 0)
    v = Polynomial.variable(2, 1)
    q = p.substitute([u + v])
    assert np.allclose(q([[1.0, 2.0]]), 12.0)
    assert np.allclose(p.embed(3, [2])([[9.0, 9.0, 2.0]]), 6.0)


def test_quadratic_form():
    B = np.array([[1.0, 2.0], [0.0, 3.0]])
    L = np.eye(2)
    q = Polynomial.quadratic_form(B, L)
    X = np.array([0.3, -0.7])
    assert abs(q(X[None])[0] - X @ B @ X) < 1e-14


def test_real_moments_against_gauss_hermite():
    Sigma = np.array([[1.3, 0.4], [0.4, 0.7]])
    L = np.linalg.cholesky(Sigma)
    x, w = np.polynomial.hermite_e.hermegauss(20)
    w = w / w.sum()
    X, Y = np.meshgrid(x, x, indexing="ij")
    W = np.outer(w, w).ravel()
    pts = np.stack([X.ravel(), Y.ravel()], axis=-1) @ L.T
    eng = WickEngine(Sigma)
    for alpha in [(2, 0), (1, 1), (4, 0), (2, 2), (3, 1), (3, 3), (6, 2)]:
        ref = np.sum(W * pts[:, 0] ** alpha[0] * pts[:, 1] ** alpha[1])
        assert abs(eng.moment(alpha) - ref) < 1e-10 * max(1.0, abs(ref))


@given(st.integers(0, 2**32 - 1))
def test_complex_moments_match_isserlis(seed):
    rng = np.random.default_rng(seed)
    S = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    Sigma = S + S.T
    eng = WickEngine(Sigma)
    for alpha in itertools.product(range(4), repeat=3):
        if sum(alpha) <= 6:
            ref = isserlis(alpha, Sigma)
            assert abs(eng.moment(alpha) - ref) < 1e-9 * max(1.0, abs(ref))


def test_degree_cap():
    with pytest.raises(ValueError):
        WickEngine(np.eye(1)).moment((MAX_WICK_DEGREE + 2,))


def test_gaussian_expectation_integrates_trailing_variables():
    # p(x, w) = x w^2 + w -> x * Sigma
    p = Polynomial(2, {(1, 2): 1.0, (0, 1): 1.0})
    out = gaussian_expectation(p, 1, np.array([[0.5]]))
    assert out.terms == {(1,): 0.5}


@given(st.integers(0, 2**32 - 1), st.integers(0, 1))
def test_random_respects_parity(seed, parity):
    p = Polynomial.random(4, 5, np.random.default_rng(seed), parity=parity)
    assert all(sum(k) % 2 == parity for k in p.terms)
