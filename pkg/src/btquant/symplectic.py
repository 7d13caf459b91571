"""Linear symplectic algebra on R^{2n} with compatible complex structures.

Coordinates are interleaved, Z = (x_1, y_1, ..., x_n, y_n), and the standard
complex structure J0 rotates each (x_j, y_j) plane: J0 e_x = e_y, J0 e_y = -e_x.
The symplectic form is Omega(u, v) = <J0 u, v>, i.e. the matrix J0^T.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import (
    BranchJump,
    DimensionMismatch,
    NotAlmostComplex,
    NotPositive,
    NotSymplectic,
    SingularInterpolation,
    ZeroDeterminant,
)

TAU_ALG = 1e-10
MAX_BRANCH_STEPS = 2**14


def _rel_residual(a: np.ndarray, b: np.ndarray) -> float:
    scale = max(1.0, np.linalg.norm(b))
    return float(np.linalg.norm(a - b) / scale)


def standard_J(n: int) -> np.ndarray:
    if n < 1:
        raise ValueError(f"half-dimension must be positive, got {n}")
    return np.kron(np.eye(n), np.array([[0.0, -1.0], [1.0, 0.0]]))


@dataclass(frozen=True, eq=False)
class SymplecticSpace:
    n: int
    Omega: np.ndarray
    J0: np.ndarray

    def omega(self, u, v):
        return u @ self.Omega @ v


def standard_space(n: int) -> SymplecticSpace:
    J0 = standard_J(n)
    return SymplecticSpace(n=n, Omega=J0.T.copy(), J0=J0)


@dataclass(frozen=True, eq=False)
class CompatibleStructure:
    """A complex structure J compatible with Omega, with metric G = -J0 J."""

    J: np.ndarray
    G: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return self.J.shape[0] // 2

    def inner(self, u, v):
        return u @ self.G @ v


def validate_compatible(J, tol: float = TAU_ALG) -> CompatibleStructure:
    J = np.array(J, dtype=float)
    if J.ndim != 2 or J.shape[0] != J.shape[1] or J.shape[0] % 2:
        raise DimensionMismatch(f"expected a square matrix of even size, got {J.shape}")
    n = J.shape[0] // 2
    I = np.eye(2 * n)
    if _rel_residual(J @ J, -I) > tol:
        raise NotAlmostComplex("J^2 != -I")
    Omega = standard_J(n).T
    if _rel_residual(J.T @ Omega @ J, Omega) > tol:
        raise NotSymplectic("Omega is not J-invariant")
    G = -standard_J(n) @ J
    G = 0.5 * (G + G.T)
    if np.linalg.eigvalsh(G).min() <= 0:
        raise NotPositive("Omega(., J .) is not positive definite")
    return CompatibleStructure(J=J, G=G)


def structure_from_metric(G) -> CompatibleStructure:
    """The structure J = J0 G attached to a positive symplectic metric G."""
    G = np.asarray(G, dtype=float)
    return validate_compatible(standard_J(G.shape[0] // 2) @ G)


@dataclass(frozen=True, eq=False)
class ComplexProjector:
    P: np.ndarray

    @property
    def rank(self) -> int:
        return int(round(np.trace(self.P).real))

    def conj(self) -> "ComplexProjector":
        return ComplexProjector(self.P.conj())

    def is_idempotent(self, tol: float = TAU_ALG) -> bool:
        return _rel_residual(self.P @ self.P, self.P) <= tol


def projector_holo(J: CompatibleStructure) -> ComplexProjector:
    """Projection (I - iJ)/2 onto the +i eigenspace V^(1,0)."""
    I = np.eye(J.J.shape[0])
    return ComplexProjector(0.5 * (I - 1j * J.J))


def projector_antiholo(J: CompatibleStructure) -> ComplexProjector:
    I = np.eye(J.J.shape[0])
    return ComplexProjector(0.5 * (I + 1j * J.J))


def interpolation_operators(J_t: CompatibleStructure, J_ref: CompatibleStructure):
    """Return (A, Pi) with A = ((I - J_ref J_t)/2)^-1 and Pi = A P_ref^(1,0).

    Pi projects onto V_t^(1,0) along V_ref^(0,1).  When J_ref = J0, A is the
    symmetric positive matrix of the local model.
    """
    if J_t.J.shape != J_ref.J.shape:
        raise DimensionMismatch("structures live on different spaces")
    I = np.eye(J_t.J.shape[0])
    H = 0.5 * (I - J_ref.J @ J_t.J)
    if np.linalg.cond(H) > 1e12:
        raise SingularInterpolation("I - J_ref J_t is numerically singular")
    A = np.linalg.inv(H)
    Pi = A @ projector_holo(J_ref).P
    return A, ComplexProjector(Pi)


@dataclass(frozen=True, eq=False)
class BranchedValue:
    value: complex
    samples: list

    def is_continuous(self) -> bool:
        s = np.asarray(self.samples)
        if len(s) < 2:
            return True
        return bool(np.all(np.abs(np.angle(s[1:] / s[:-1])) < np.pi / 2))


def _tracked_sqrt(dets: np.ndarray, start_arg: float) -> tuple[np.ndarray, float]:
    incr = np.angle(dets[1:] / dets[:-1])
    args = start_arg + np.concatenate([[0.0], np.cumsum(incr)])
    roots = np.sqrt(np.abs(dets)) * np.exp(0.5j * args)
    return roots, float(np.abs(incr).max(initial=0.0))


def sqrt_det_tracked(path: Callable[[float], np.ndarray], steps: int = 64) -> BranchedValue:
    """det^(1/2) of path(1) by continuation of arg(det) along t in [0, 1].

    The branch at t = 0 is the positive root when det(path(0)) is real
    positive, otherwise the principal root.  Sampling is refined by doubling
    until every argument increment is below pi/2.
    """
    steps = max(int(steps), 1)
    while True:
        ts = np.linspace(0.0, 1.0, steps + 1)
        dets = np.array([np.linalg.det(np.asarray(path(t), dtype=complex)) for t in ts])
        scale = max(np.abs(dets).max(), 1e-300)
        if np.abs(dets).min() <= 1e-14 * scale:
            raise ZeroDeterminant("determinant vanishes along the continuation path")
        d0 = dets[0]
        start = 0.0 if (abs(d0.imag) <= 1e-13 * abs(d0) and d0.real > 0) else float(np.angle(d0))
        roots, worst = _tracked_sqrt(dets, start)
        if worst < np.pi / 2:
            return BranchedValue(value=complex(roots[-1]), samples=[complex(r) for r in roots])
        if steps >= MAX_BRANCH_STEPS:
            raise BranchJump(f"argument increment {worst:.3f} >= pi/2 at {steps} steps")
        steps *= 2


def sqrt_det_convention(M, steps: int = 64) -> BranchedValue:
    """det^(1/2)(A + iB) continued along A + s iB, A = Re M positive symmetric."""
    M = np.asarray(M, dtype=complex)
    A, B = M.real, M.imag
    return sqrt_det_tracked(lambda s: A + 1j * s * B, steps)


def sqrt_det_eigen(M) -> complex:
    """Product of principal roots of the eigenvalues.

    For a complex symmetric matrix with positive definite real part the
    eigenvalues stay in the right half-plane along A + s iB, so this agrees
    with the continuation convention; used as an independent check.
    """
    return complex(np.prod(np.sqrt(np.linalg.eigvals(np.asarray(M, dtype=complex)))))


def is_symplectic(S, tol: float = TAU_ALG) -> bool:
    S = np.asarray(S, dtype=float)
    Omega = standard_J(S.shape[0] // 2).T
    return _rel_residual(S.T @ Omega @ S, Omega) <= tol


def standard_frame(J: CompatibleStructure) -> np.ndarray:
    """Symplectic S with S^-1 J S = J0, namely S = G^(-1/2)."""
    w, V = np.linalg.eigh(J.G)
    return (V / np.sqrt(w)) @ V.T


# Siegel upper half space: J <-> T = X + iY with holomorphic coordinates x + T y.

def _interleave(n: int) -> np.ndarray:
    """Permutation sending block coordinates (x, y) to interleaved ones."""
    P = np.zeros((2 * n, 2 * n))
    for j in range(n):
        P[2 * j, j] = 1.0
        P[2 * j + 1, n + j] = 1.0
    return P


def structure_from_siegel(T) -> CompatibleStructure:
    T = np.atleast_2d(np.asarray(T, dtype=complex))
    n = T.shape[0]
    X, Y = T.real, T.imag
    Yi = np.linalg.inv(Y)
    block = np.block([[-X @ Yi, -(X @ Yi @ X + Y)], [Yi, Yi @ X]])
    P = _interleave(n)
    return validate_compatible(P @ block @ P.T)


def siegel_from_structure(J: CompatibleStructure) -> np.ndarray:
    n = J.n
    P = _interleave(n)
    block = P.T @ J.J @ P
    a, c = block[:n, :n], block[n:, :n]
    Y = np.linalg.inv(c)
    X = -a @ Y
    return X + 1j * 0.5 * (Y + Y.T)


def structure_from_tau(tau: complex) -> CompatibleStructure:
    if complex(tau).imag <= 0:
        raise ValueError("modulus must lie in the upper half-plane")
    return structure_from_siegel([[tau]])


def tau_from_structure(J: CompatibleStructure) -> complex:
    if J.n != 1:
        raise DimensionMismatch("a modulus exists only for n = 1")
    return complex(siegel_from_structure(J)[0, 0])


def push_structure(dphi, J: CompatibleStructure) -> CompatibleStructure:
    """The structure dphi J dphi^-1 transported by a symplectic map."""
    dphi = np.asarray(dphi, dtype=float)
    return validate_compatible(dphi @ J.J @ np.linalg.inv(dphi))


def act_on_modulus(A, tau: complex) -> complex:
    """Modulus of A J_tau A^-1, i.e. (a tau - b) / (-c tau + d) for A = [[a, b], [c, d]]."""
    (a, b), (c, d) = np.asarray(A, dtype=float)
    return complex((a * tau - b) / (-c * tau + d))


def random_compatible(n: int, rng: np.random.Generator, spread: float = 0.6) -> CompatibleStructure:
    """A random compatible structure drawn through its Siegel matrix."""
    X = rng.normal(scale=spread, size=(n, n))
    X = 0.5 * (X + X.T)
    R = rng.normal(scale=spread, size=(n, n))
    Y = R @ R.T + 0.5 * np.eye(n)
    return structure_from_siegel(X + 1j * Y)


def random_symplectic(n: int, rng: np.random.Generator, scale: float = 0.5) -> np.ndarray:
    """exp(J0 H) for a random symmetric H, which is symplectic."""
    from scipy.linalg import expm

    H = rng.normal(scale=scale, size=(2 * n, 2 * n))
    H = 0.5 * (H + H.T)
    return expm(standard_J(n) @ H)
