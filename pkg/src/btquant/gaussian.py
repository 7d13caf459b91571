"""Gaussian model kernels c exp(-pi[<M(Z-Z'),(Z-Z')> + i Omega(Z,Z')]) and their calculus.

Two independent routes are provided for every composition: a closed form
(completing the square plus Wick moments) and tensor-grid quadrature.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from numpy.polynomial.legendre import leggauss

from .errors import DimensionMismatch, TailBoundViolated
from .polynomial import Polynomial, gaussian_expectation
from .symplectic import (
    CompatibleStructure,
    interpolation_operators,
    sqrt_det_eigen,
    standard_J,
)

TAIL = 1e-12


def _sym(M):
    M = np.asarray(M, dtype=complex)
    return 0.5 * (M + M.T)


@dataclass(frozen=True, eq=False)
class ModelKernel:
    """K(Z, Z') = c exp(-pi[<M(Z - Z'), Z - Z'> + i Omega(Z, Z')]).

    Only the symmetric part of M is stored.  `structures` records (J_t, J_ref)
    for kernels built from compatible structures, None otherwise.
    """

    n: int
    M: np.ndarray
    c: complex = 1.0
    structures: tuple | None = field(default=None, repr=False)

    def __post_init__(self):
        M = _sym(self.M)
        if M.shape != (2 * self.n, 2 * self.n):
            raise DimensionMismatch(f"M has shape {M.shape} for n={self.n}")
        if np.linalg.eigvalsh(M.real).min() <= 0:
            raise ValueError("real part of M must be positive definite")
        object.__setattr__(self, "M", M)
        object.__setattr__(self, "c", complex(self.c))

    @property
    def Omega(self):
        return standard_J(self.n).T

    def __call__(self, Z, Zp):
        Z = np.asarray(Z, dtype=float)
        Zp = np.asarray(Zp, dtype=float)
        d = Z - Zp
        quad = np.einsum("...i,ij,...j->...", d, self.M, d)
        omega = np.einsum("...i,ij,...j->...", Z, self.Omega, Zp)
        return self.c * np.exp(-np.pi * (quad + 1j * omega))

    def log_value(self, Z, Zp):
        """Exponent divided by -pi (for stable comparisons)."""
        d = np.asarray(Z) - np.asarray(Zp)
        return d @ self.M @ d + 1j * (np.asarray(Z) @ self.Omega @ np.asarray(Zp))


@dataclass(frozen=True, eq=False)
class PolyKernel:
    """weight(Z, Z') * base(Z, Z') with weight a polynomial in the 4n variables (Z, Z')."""

    base: ModelKernel
    weight: Polynomial

    def __post_init__(self):
        if self.weight.n_vars != 4 * self.base.n:
            raise DimensionMismatch("weight must be a polynomial in (Z, Z')")

    @property
    def n(self):
        return self.base.n

    def __call__(self, Z, Zp):
        Z = np.asarray(Z, dtype=float)
        Zp = np.asarray(Zp, dtype=float)
        Z, Zp = np.broadcast_arrays(Z, Zp)
        return self.weight(np.concatenate([Z, Zp], axis=-1)) * self.base(Z, Zp)


def kernel_of(J: CompatibleStructure) -> ModelKernel:
    """The model Bergman kernel of J: c = 1 and M = G/2."""
    return ModelKernel(n=J.n, M=0.5 * J.G, c=1.0, structures=(J, J))


def _as_polykernel(K) -> PolyKernel:
    if isinstance(K, PolyKernel):
        return K
    return PolyKernel(K, Polynomial.constant(4 * K.n))


@dataclass(frozen=True, eq=False)
class _Completion:
    """Completing the square in the middle variable of K1(Z, W) K2(W, Z').

    The W-exponent is -pi[W^T S W - 2 b^T W + c0] with b = B X, X = (Z, Z').
    """

    S: np.ndarray
    B: np.ndarray
    Q: np.ndarray
    c: complex

    @property
    def mean_map(self):
        return np.linalg.solve(self.S, self.B)

    @property
    def covariance(self):
        return np.linalg.inv(2 * np.pi * self.S)


def _complete(K1: ModelKernel, K2: ModelKernel) -> _Completion:
    if K1.n != K2.n:
        raise DimensionMismatch("kernels on different spaces")
    Om = K1.Omega
    S = K1.M + K2.M
    B = np.hstack([K1.M + 0.5j * Om, K2.M - 0.5j * Om])
    C = np.zeros((4 * K1.n, 4 * K1.n), dtype=complex)
    m = 2 * K1.n
    C[:m, :m] = K1.M
    C[m:, m:] = K2.M
    Q = _sym(C - B.T @ np.linalg.solve(S, B))
    c = K1.c * K2.c / sqrt_det_eigen(S)
    return _Completion(S=S, B=B, Q=Q, c=c)


def compose_gaussian(K1: ModelKernel, K2: ModelKernel, tol: float = 1e-9) -> ModelKernel:
    """Composition of two arbitrary model kernels by completing the square."""
    comp = _complete(K1, K2)
    m = 2 * K1.n
    M = comp.Q[:m, :m]
    target = np.block([[M, -M + 0.5j * K1.Omega], [-M - 0.5j * K1.Omega, M]])
    if np.abs(comp.Q - target).max() > tol * max(1.0, np.abs(M).max()):
        raise ArithmeticError("composition left the model-kernel family")
    return ModelKernel(n=K1.n, M=M, c=comp.c)


def compose(K_t: ModelKernel, K_0: ModelKernel) -> ModelKernel:
    """Closed form of K_t K_0 for pure kernels: c = det(A_t^0)^(1/2), M = Pi_0^t."""
    if K_t.n != K_0.n:
        raise DimensionMismatch("kernels on different spaces")
    if K_t.structures is None or K_0.structures is None or K_t.c != 1 or K_0.c != 1:
        raise ValueError("compose expects pure kernels built by kernel_of")
    J_t, J_0 = K_t.structures[0], K_0.structures[0]
    A_t0, _ = interpolation_operators(J_t, J_0)
    _, Pi_0t = interpolation_operators(J_0, J_t)
    # A_t^0 is symmetric positive, so the positive root is the convention's value.
    c = np.sqrt(np.linalg.det(A_t0))
    # G_0 converts the endomorphism Pi_0^t into a bilinear form; G_0 = I when J_0 = J0.
    return ModelKernel(n=K_t.n, M=J_0.G @ Pi_0t.P, c=c, structures=(J_t, J_0))


def compose_poly(K_t, F: Polynomial, K_0) -> PolyKernel:
    """(K_t F K_0)(Z, Z') = Q(F)(Z, Z') (K_t K_0)(Z, Z').

    F is a polynomial in the middle variable (2n variables) or in
    (Z, W, Z') (6n variables).  K_t, K_0 may themselves carry weights, which
    are multiplied into F.  Q(F) is obtained by shifting W by the stationary
    point and taking Wick moments with covariance (2 pi S)^-1.
    """
    P1, P2 = _as_polykernel(K_t), _as_polykernel(K_0)
    n = P1.n
    if P2.n != n:
        raise DimensionMismatch("kernels on different spaces")
    m = 2 * n
    if F.n_vars == m:
        F6 = F.embed(3 * m, range(m, 2 * m))
    elif F.n_vars == 3 * m:
        F6 = F
    else:
        raise DimensionMismatch(f"weight has {F.n_vars} variables, expected {m} or {3 * m}")
    F6 = F6 * P1.weight.embed(3 * m, range(2 * m)) * P2.weight.embed(3 * m, range(m, 3 * m))

    comp = _complete(P1.base, P2.base)
    mean = comp.mean_map  # W = mean @ X + fluctuation
    # Variables of the substituted polynomial: X = (Z, Z') then the fluctuation.
    nv = 3 * m
    images = []
    for k in range(m):
        images.append(Polynomial.variable(nv, k))
    for k in range(m):
        coeffs = np.zeros(nv, dtype=complex)
        coeffs[: 2 * m] = mean[k]
        coeffs[2 * m + k] = 1.0
        images.append(Polynomial.linear(coeffs))
    for k in range(m):
        images.append(Polynomial.variable(nv, m + k))
    weight = gaussian_expectation(F6.substitute(images), 2 * m, comp.covariance)

    if P1.base.structures is not None and P2.base.structures is not None \
            and P1.base.c == 1 and P2.base.c == 1:
        base = compose(P1.base, P2.base)
    else:
        base = compose_gaussian(P1.base, P2.base)
    return PolyKernel(base, weight)


class Side(Enum):
    Left = "left"
    Right = "right"


def quadratic_moment(K_t: ModelKernel, B, side: Side, K_0: ModelKernel) -> PolyKernel:
    """Weight of K_t F K_0 for F(W) = <B(Z - W), Z - W> (Left) or <B(Z' - W), Z' - W> (Right).

    Left: <B conj(Pi_t^0) d, conj(Pi_t^0) d> + Tr[A_t^0 B] / 2pi, d = Z - Z'.
    Right: <B Pi_0^t d, Pi_0^t d> + Tr[A_t^0 B] / 2pi.  The constant is the
    second moment of the middle Gaussian, the same on both sides; for B with
    Tr[A_t^0 B] = Tr[A_0^t B] (B = I for instance) it can be written with A_0^t.
    With a reference structure J_0 other than J0, the trace reads
    Tr[A_t^0 G_0^-1 B].
    """
    if isinstance(side, str):
        side = Side(side.lower())
    B = np.asarray(B, dtype=complex)
    m = 2 * K_t.n
    if B.shape != (m, m):
        raise DimensionMismatch("B must be 2n x 2n")
    J_t, J_0 = K_t.structures[0], K_0.structures[0]
    D = np.hstack([np.eye(m), -np.eye(m)])  # Z - Z'
    A_t0, Pi_t0 = interpolation_operators(J_t, J_0)
    if side is Side.Left:
        L = Pi_t0.P.conj() @ D
    else:
        L = interpolation_operators(J_0, J_t)[1].P @ D
    const = np.trace(A_t0 @ np.linalg.solve(J_0.G, B)) / (2 * np.pi)
    weight = Polynomial.quadratic_form(B, L) + const
    return PolyKernel(compose(K_t, K_0), weight)


def quadratic_weight(B, side: Side, n: int) -> Polynomial:
    """The polynomial F in (Z, W, Z') matching quadratic_moment's side."""
    if isinstance(side, str):
        side = Side(side.lower())
    m = 2 * n
    I = np.eye(m)
    O = np.zeros((m, m))
    L = np.hstack([I, -I, O]) if side is Side.Left else np.hstack([O, I, -I])
    return Polynomial.quadratic_form(np.asarray(B, dtype=complex), L)


@dataclass(frozen=True)
class QuadratureSpec:
    """Tensor grid for the middle variable.

    With L given, the box is [-L, L]^(2n) and must satisfy the tail bound.
    Otherwise the box follows the eigen-directions of the real quadratic
    envelope, each axis sized for the same tail bound.
    """

    N: int | None = None
    L: float | None = None
    rule: str = "trapezoid"
    chunk: int = 1 << 18

    def nodes(self, n: int) -> int:
        if self.N is not None:
            return self.N
        # Trapezoid is spectrally accurate on Gaussians; 30^4 nodes keep n = 2 near a second.
        return 96 if n == 1 else 30


def _rule(N: int, rule: str):
    if rule == "gauss":
        x, w = leggauss(N)
    elif rule == "trapezoid":
        x = np.linspace(-1.0, 1.0, N)
        w = np.full(N, 2.0 / (N - 1))
        w[[0, -1]] *= 0.5
    else:
        raise ValueError(f"unknown rule {rule!r}")
    return x, w


def _tensor(x, w, dim):
    grids = np.meshgrid(*([x] * dim), indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=-1)
    wg = np.meshgrid(*([w] * dim), indexing="ij")
    wts = np.prod(np.stack([g.ravel() for g in wg], axis=-1), axis=-1)
    return pts, wts


def quadrature_grid(envelope, center, spec: QuadratureSpec, n: int, radius: float = 0.0,
                    degree: int = 0):
    """Nodes and weights for integrals against exp(-pi (W - center)^T envelope (W - center))."""
    m = 2 * n
    R = envelope
    lam, V = np.linalg.eigh(R)
    lam_min = lam.min()
    need = np.log(1 / TAIL) + 0.5 * degree * np.log(max(2.0, degree + 1.0))
    x, w = _rule(spec.nodes(n), spec.rule)
    if spec.L is not None:
        margin = spec.L - radius
        if margin <= 0 or np.exp(-np.pi * lam_min * margin**2) >= TAIL:
            raise TailBoundViolated(
                f"half-width {spec.L} too small: need pi*lam_min*(L-|Z|-|Z'|)^2 > {np.log(1 / TAIL):.1f}")
        pts, wts = _tensor(x, w, m)
        return spec.L * pts, wts * spec.L**m
    half = np.sqrt((need + 3.0) / (np.pi * lam)) + 0.5 / np.sqrt(lam)
    pts, wts = _tensor(x, w, m)
    nodes = center + (pts * half) @ V.T
    return nodes, wts * np.prod(half)


def _integrate(fun, nodes, wts, chunk):
    total = 0j
    for s in range(0, len(wts), chunk):
        total += np.sum(fun(nodes[s:s + chunk]) * wts[s:s + chunk])
    return complex(total)


def _middle_integral(left, right, env_t: ModelKernel, env_0: ModelKernel, Z, Zp,
                     grid: QuadratureSpec, degree: int = 0) -> complex:
    """Integral of left(W) * right(W) with the box sized by the envelope of env_t, env_0."""
    n = env_t.n
    R = (env_t.M + env_0.M).real
    b = env_t.M @ Z + env_0.M @ Zp + 0.5j * env_t.Omega @ (Z - Zp)
    center = np.linalg.solve(R, b.real)
    nodes, wts = quadrature_grid(R, center, grid, n, np.linalg.norm(Z) + np.linalg.norm(Zp), degree)
    return _integrate(lambda W: left(W) * right(W), nodes, wts, grid.chunk)


def _base(K) -> ModelKernel:
    return K.base if isinstance(K, PolyKernel) else K


def quadrature_compose(K_t, F, K_0, Z, Zp, grid: QuadratureSpec | None = None) -> complex:
    """Brute-force integral of K_t(Z, W) F(W) K_0(W, Z') over W in R^(2n).

    F is a Polynomial in W (2n variables), in (Z, W, Z') (6n variables), or
    None for F = 1.  Kernels are evaluated pointwise.
    """
    grid = grid or QuadratureSpec()
    m = 2 * K_t.n
    Z = np.asarray(Z, dtype=float)
    Zp = np.asarray(Zp, dtype=float)
    if Z.shape != (m,) or Zp.shape != (m,) or K_0.n != K_t.n:
        raise DimensionMismatch("points and kernels must share the dimension 2n")
    degree = 0
    if F is None:
        def left(W):
            return K_t(Z, W)
    elif isinstance(F, Polynomial) and F.n_vars in (m, 3 * m):
        degree = F.degree
        if F.n_vars == m:
            def left(W):
                return K_t(Z, W) * F(W)
        else:
            def left(W):
                return K_t(Z, W) * F(np.concatenate(np.broadcast_arrays(Z, W, Zp), axis=-1))
    else:
        raise DimensionMismatch("weight must be a Polynomial in W or in (Z, W, Z')")
    return _middle_integral(left, lambda W: K_0(W, Zp), _base(K_t), _base(K_0), Z, Zp, grid, degree)


class Coords(Enum):
    Holo_t = "holo_t"
    AntiHolo_0 = "antiholo_0"


SAMPLE_POINTS = 20


def _sample_points(n: int, count: int, seed: int = 20240611):
    rng = np.random.default_rng(seed)
    return rng.uniform(-0.8, 0.8, size=(count, 2 * n)), rng.uniform(-0.8, 0.8, size=(count, 2 * n))


def holomorphy_residual(Q: Polynomial, J_t: CompatibleStructure, J_0: CompatibleStructure,
                        coords: Coords, Z, Zp, h: float = 1e-4) -> float:
    """Finite-difference derivative of Q(Z, Z') along V_t^(0,1) in Z or V_0^(1,0) in Z'.

    A weight depending only on the z_t coordinates of Z and the conj(z)
    coordinates of Z' is annihilated by both families of directions.
    """
    if isinstance(coords, str):
        coords = Coords(coords.lower())
    n = J_t.n
    m = 2 * n
    X = np.concatenate([Z, Zp]).astype(complex)
    if coords is Coords.Holo_t:
        dirs = [np.concatenate([(np.eye(m) + 1j * J_t.J)[:, 2 * j] / 2, np.zeros(m)]) for j in range(n)]
    else:
        dirs = [np.concatenate([np.zeros(m), (np.eye(m) - 1j * J_0.J)[:, 2 * j] / 2]) for j in range(n)]
    scale = max(1.0, abs(Q(X)))
    worst = 0.0
    for v in dirs:
        fd = (Q(X + h * v) - Q(X - h * v)) / (2 * h)
        worst = max(worst, abs(fd) / scale)
    return float(worst)


def _inner_batch(inner: PolyKernel, K_0: ModelKernel, Ws, Zp, grid: QuadratureSpec, chunk: int = 64):
    """Quadrature of inner(W, Y) K_0(Y, Z') over Y for every row W of Ws.

    The envelope matrix does not depend on W, so one set of offsets serves
    every W; only the box center moves.
    """
    n = K_0.n
    env_t, env_0 = inner.base, K_0
    R = (env_t.M + env_0.M).real
    offs, wts = quadrature_grid(R, np.zeros(2 * n), grid, n, 0.0, inner.weight.degree)
    Om = env_t.Omega
    out = np.empty(len(Ws), dtype=complex)
    for s in range(0, len(Ws), chunk):
        W = Ws[s:s + chunk]
        b = W @ env_t.M.T + env_0.M @ Zp + 0.5j * (W - Zp) @ Om.T
        centers = np.linalg.solve(R, b.real.T).T
        Y = centers[:, None, :] + offs[None, :, :]
        Wb = np.broadcast_to(W[:, None, :], Y.shape)
        vals = inner(Wb, Y) * K_0(Y, np.broadcast_to(Zp, Y.shape))
        out[s:s + chunk] = vals @ wts
    return out


def reproducing_check(K_t: ModelKernel, F: Polynomial, coords: Coords = Coords.Holo_t,
                      K_0: ModelKernel | None = None, grid: QuadratureSpec | None = None,
                      points: int = SAMPLE_POINTS) -> float:
    """Max deviation between K_t (F K_t K_0) K_0 computed by quadrature and Q_t(F) K_t K_0.

    F is a weight in (Z, Z') (4n variables), or in a single point (2n
    variables, read as a function of the first argument).  For n = 1 both
    compositions are done by nested quadrature; for n = 2 the inner one uses
    the closed form (an 8-dimensional grid is out of reach) and is checked
    separately by quadrature at the sample points.  The residual also covers
    the finite-difference probe that Q_t(F) depends only on z_t of Z
    (Holo_t) and on conj(z) of Z' (AntiHolo_0); Holo_t probes both.
    """
    n = K_t.n
    m = 2 * n
    if K_0 is None:
        K_0 = kernel_of(CompatibleStructure(J=standard_J(n), G=np.eye(m)))
    if isinstance(coords, str):
        coords = Coords(coords.lower())
    if F.n_vars == m:
        F = F.embed(2 * m, range(m))
    if F.n_vars != 2 * m:
        raise DimensionMismatch("F must be a weight in (Z, Z')")
    inner = PolyKernel(compose(K_t, K_0), F)
    right = compose_poly(inner, Polynomial.constant(m), K_0)
    closed = compose_poly(K_t, Polynomial.constant(m), right)

    grid = grid or QuadratureSpec(N=26 if n == 1 else 28)
    env_right = right.base
    Zs, Zps = _sample_points(n, points)
    worst = 0.0
    for Z, Zp in zip(Zs, Zps):
        if n == 1:
            def right_fun(Ws, Zp=Zp):
                return _inner_batch(inner, K_0, Ws, Zp, grid)
        else:
            def right_fun(Ws, Zp=Zp):
                return right(Ws, np.broadcast_to(Zp, Ws.shape))
            W = Z  # spot check of the closed inner step at one point
            worst = max(worst, abs(quadrature_compose(inner, None, K_0, W, Zp, grid) - right(W, Zp))
                        / max(1.0, abs(right(W, Zp))))
        val = _middle_integral(lambda W, Z=Z: K_t(Z, W), right_fun, K_t, env_right, Z, Zp, grid,
                               F.degree)
        ref = complex(closed(Z, Zp))
        worst = max(worst, abs(val - ref) / max(1.0, abs(ref)))
    J_t, J_0 = K_t.structures[0], K_0.structures[0]
    probes = [Coords.Holo_t, Coords.AntiHolo_0] if coords is Coords.Holo_t else [coords]
    for Z, Zp in zip(Zs, Zps):
        for c in probes:
            worst = max(worst, holomorphy_residual(closed.weight, J_t, J_0, c, Z, Zp))
    return float(worst)
