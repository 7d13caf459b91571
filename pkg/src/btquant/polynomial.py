"""Sparse multivariate polynomials with complex coefficients, and Gaussian moments."""

from __future__ import annotations

from functools import lru_cache
from itertools import combinations_with_replacement

import numpy as np

MAX_WICK_DEGREE = 8
_ZERO = 1e-300


class Polynomial:
    """Sum of c * X^alpha stored as {alpha: c} with alpha a tuple of exponents."""

    __slots__ = ("n_vars", "terms")

    def __init__(self, n_vars: int, terms: dict | None = None):
        self.n_vars = n_vars
        self.terms = {}
        for k, v in (terms or {}).items():
            if len(k) != n_vars:
                raise ValueError(f"exponent {k} does not have {n_vars} entries")
            if abs(v) > _ZERO:
                self.terms[tuple(int(e) for e in k)] = complex(v)

    @classmethod
    def constant(cls, n_vars: int, c: complex = 1.0) -> "Polynomial":
        return cls(n_vars, {(0,) * n_vars: c})

    @classmethod
    def variable(cls, n_vars: int, k: int) -> "Polynomial":
        e = [0] * n_vars
        e[k] = 1
        return cls(n_vars, {tuple(e): 1.0})

    @classmethod
    def linear(cls, coeffs, const: complex = 0.0) -> "Polynomial":
        coeffs = np.asarray(coeffs)
        n = len(coeffs)
        p = cls.constant(n, const)
        for k, a in enumerate(coeffs):
            e = [0] * n
            e[k] = 1
            p.terms[tuple(e)] = p.terms.get(tuple(e), 0) + complex(a)
        return cls(n, p.terms)

    @classmethod
    def quadratic_form(cls, B, L) -> "Polynomial":
        """<B u, u> with u = L X (L has one row per component of u)."""
        B = np.asarray(B)
        L = np.asarray(L)
        u = [cls.linear(row) for row in L]
        n = L.shape[1]
        out = cls(n)
        for i in range(len(u)):
            for j in range(len(u)):
                if B[i, j] != 0:
                    out = out + (u[i] * u[j]).scale(B[i, j])
        return out

    @classmethod
    def random(cls, n_vars: int, degree: int, rng: np.random.Generator,
               n_terms: int = 6, parity: int | None = None) -> "Polynomial":
        monos = [m for d in range(degree + 1)
                 for m in _monomials(n_vars, d)
                 if parity is None or d % 2 == parity]
        idx = rng.choice(len(monos), size=min(n_terms, len(monos)), replace=False)
        terms = {monos[i]: complex(rng.normal(), rng.normal()) for i in idx}
        return cls(n_vars, terms)

    def copy(self) -> "Polynomial":
        return Polynomial(self.n_vars, dict(self.terms))

    @property
    def degree(self) -> int:
        return max((sum(k) for k in self.terms), default=0)

    def is_zero(self) -> bool:
        return not self.terms

    def parity(self) -> int | None:
        """0 or 1 if all monomials share a parity, None otherwise (or if zero)."""
        ps = {sum(k) % 2 for k in self.terms}
        return ps.pop() if len(ps) == 1 else None

    def scale(self, c: complex) -> "Polynomial":
        return Polynomial(self.n_vars, {k: c * v for k, v in self.terms.items()})

    def __add__(self, other):
        if not isinstance(other, Polynomial):
            other = Polynomial.constant(self.n_vars, other)
        self._check(other)
        out = dict(self.terms)
        for k, v in other.terms.items():
            out[k] = out.get(k, 0) + v
        return Polynomial(self.n_vars, out)

    __radd__ = __add__

    def __neg__(self):
        return self.scale(-1.0)

    def __sub__(self, other):
        return self + (-other if isinstance(other, Polynomial) else -complex(other))

    def __mul__(self, other):
        if not isinstance(other, Polynomial):
            return self.scale(complex(other))
        self._check(other)
        out: dict = {}
        for k1, v1 in self.terms.items():
            for k2, v2 in other.terms.items():
                k = tuple(a + b for a, b in zip(k1, k2))
                out[k] = out.get(k, 0) + v1 * v2
        return Polynomial(self.n_vars, out)

    __rmul__ = __mul__

    def __pow__(self, e: int):
        out = Polynomial.constant(self.n_vars)
        for _ in range(e):
            out = out * self
        return out

    def _check(self, other):
        if other.n_vars != self.n_vars:
            raise ValueError(f"variable count mismatch: {self.n_vars} vs {other.n_vars}")

    def __call__(self, X):
        """Evaluate at points X of shape (..., n_vars); complex points allowed."""
        X = np.asarray(X)
        if X.shape[-1] != self.n_vars:
            raise ValueError(f"expected last axis {self.n_vars}, got {X.shape}")
        out = np.zeros(X.shape[:-1], dtype=complex)
        for k, v in self.terms.items():
            term = np.full(X.shape[:-1], v, dtype=complex)
            for j, e in enumerate(k):
                if e:
                    term = term * X[..., j] ** e
            out += term
        return out

    def derivative(self, j: int) -> "Polynomial":
        out = {}
        for k, v in self.terms.items():
            if k[j]:
                kk = list(k)
                kk[j] -= 1
                out[tuple(kk)] = v * k[j]
        return Polynomial(self.n_vars, out)

    def directional(self, v) -> "Polynomial":
        out = Polynomial(self.n_vars)
        for j, c in enumerate(v):
            if c != 0:
                out = out + self.derivative(j).scale(c)
        return out

    def substitute(self, images: list) -> "Polynomial":
        """Replace variable k by the polynomial images[k] (all in a common ring)."""
        if len(images) != self.n_vars:
            raise ValueError("one image per variable required")
        m = images[0].n_vars
        cache: dict = {}

        def power(k, e):
            if (k, e) not in cache:
                cache[(k, e)] = images[k] ** e
            return cache[(k, e)]

        out = Polynomial(m)
        for key, v in self.terms.items():
            term = Polynomial.constant(m, v)
            for k, e in enumerate(key):
                if e:
                    term = term * power(k, e)
            out = out + term
        return out

    def embed(self, n_new: int, positions) -> "Polynomial":
        """View as a polynomial in n_new variables, variable k going to positions[k]."""
        out = {}
        for k, v in self.terms.items():
            e = [0] * n_new
            for j, ej in zip(positions, k):
                e[j] += ej
            out[tuple(e)] = out.get(tuple(e), 0) + v
        return Polynomial(n_new, out)

    def __repr__(self):
        return f"Polynomial(n_vars={self.n_vars}, terms={len(self.terms)}, degree={self.degree})"


def _monomials(n_vars: int, degree: int):
    for combo in combinations_with_replacement(range(n_vars), degree):
        e = [0] * n_vars
        for j in combo:
            e[j] += 1
        yield tuple(e)


class WickEngine:
    """Moments E[W^alpha] of the centered Gaussian with complex covariance Sigma.

    Uses the pairing recursion E[W_i W^b] = sum_j Sigma_ij b_j E[W^(b - e_j)],
    which sums over pair partitions; results are memoized per exponent.
    """

    def __init__(self, Sigma):
        self.Sigma = np.asarray(Sigma, dtype=complex)
        self.moment = lru_cache(maxsize=None)(self._moment)

    def _moment(self, alpha: tuple) -> complex:
        d = sum(alpha)
        if d == 0:
            return 1.0 + 0j
        if d % 2:
            return 0j
        if d > MAX_WICK_DEGREE:
            raise ValueError(f"moment of degree {d} exceeds the supported {MAX_WICK_DEGREE}")
        i = next(k for k, e in enumerate(alpha) if e)
        rest = list(alpha)
        rest[i] -= 1
        total = 0j
        for j, bj in enumerate(rest):
            if bj and self.Sigma[i, j] != 0:
                r = list(rest)
                r[j] -= 1
                total += self.Sigma[i, j] * bj * self.moment(tuple(r))
        return total


def gaussian_expectation(poly: Polynomial, outer: int, Sigma) -> Polynomial:
    """Integrate out the trailing variables of poly against N(0, Sigma).

    poly lives in outer + dim(Sigma) variables; the result lives in the
    first `outer` variables.
    """
    engine = WickEngine(Sigma)
    out: dict = {}
    for k, v in poly.terms.items():
        m = engine.moment(k[outer:])
        if m != 0:
            key = k[:outer]
            out[key] = out.get(key, 0) + v * m
    return Polynomial(outer, out)
