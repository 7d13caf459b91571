"""Exact quantization of the flat torus R^2/Z^2 at level p.

Conventions.  Z = (x, y), omega = dx ^ dy, holomorphic coordinate
z = x + tau y.  The connection on L^p is d - 2 pi i p alpha with
alpha = (x dy - y dx)/2, so the curvature is -2 pi i p omega.  Sections are
functions on R^2 with psi(Z + e) = m_e(Z) psi(Z), where

    m_e(Z) = c_e^p exp(i pi p Omega(e, Z)),   c_e = (-1)^(ab + a + b),  e = (a, b).

The sign c_e is the quadratic refinement of Omega mod 2 that is invariant
under SL(2, Z), so every linear map Z -> AZ lifts by plain pullback.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ConvergenceFailure,
    GridTooCoarse,
    HolomorphyFailure,
    LiftInconsistent,
    PeriodicityFailure,
    TruncationTooSmall,
)
from .fixed_point import (
    FixedComponentDatum,
    FixedPointDatum,
    leading_coeff_isolated,
    leading_density_component,
    trace_prediction,
)
from .paths import ConstantPath, UpperHalfPlaneSegment
from .symplectic import act_on_modulus, structure_from_tau
from .transport import DEFAULT_DISC, PathDiscretization, TAU_ODE

SERIES_TAIL = 1e-14


def omega(u, v):
    u = np.asarray(u)
    v = np.asarray(v)
    return u[..., 0] * v[..., 1] - u[..., 1] * v[..., 0]


@dataclass(frozen=True)
class TorusGeometry:
    p: int
    tau: complex

    def __post_init__(self):
        if self.p < 1:
            raise ValueError("level must be positive")
        if complex(self.tau).imag <= 0:
            raise ValueError("modulus must have positive imaginary part")
        object.__setattr__(self, "tau", complex(self.tau))

    @property
    def dimension(self) -> int:
        """Riemann-Roch on the torus: Todd class 1, volume 1, so dim H_p = p."""
        return self.p


@dataclass(frozen=True)
class LineBundleGauge:
    p: int

    @staticmethod
    def sign(e) -> int:
        a, b = int(e[0]), int(e[1])
        return -1 if (a * b + a + b) % 2 else 1

    def multiplier(self, e, Z):
        """m_e(Z) with psi(Z + e) = m_e(Z) psi(Z)."""
        return self.sign(e) ** self.p * np.exp(1j * np.pi * self.p * omega(e, Z))

    def m1(self, x, y):
        return self.multiplier((1, 0), np.stack([x, y], axis=-1))

    def m2(self, x, y):
        return self.multiplier((0, 1), np.stack([x, y], axis=-1))

    @staticmethod
    def alpha(x, y):
        return -0.5 * np.asarray(y), 0.5 * np.asarray(x)

    @property
    def characteristic(self) -> tuple[float, float]:
        """Shifts (a, b) of the theta series: 1/2 where c_e^p = -1."""
        return (0.5, 0.5) if self.p % 2 else (0.0, 0.0)

    def curvature_residual(self, h: float = 1e-3, points: int = 20, seed: int = 3) -> float:
        """|d_x alpha_2 - d_y alpha_1 - 1| by centered differences (alpha is linear, so exact)."""
        rng = np.random.default_rng(seed)
        x, y = rng.uniform(0, 1, (2, points))
        dx_a2 = (self.alpha(x + h, y)[1] - self.alpha(x - h, y)[1]) / (2 * h)
        dy_a1 = (self.alpha(x, y + h)[0] - self.alpha(x, y - h)[0]) / (2 * h)
        return float(np.abs(dx_a2 - dy_a1 - 1.0).max())

    def cocycle_residual(self, points: int = 20, seed: int = 4) -> float:
        """Both orders of going around the corner agree: m_1(Z + e_2) m_2(Z) = m_2(Z + e_1) m_1(Z)."""
        rng = np.random.default_rng(seed)
        Z = rng.uniform(0, 1, (points, 2))
        e1, e2 = np.array([1, 0]), np.array([0, 1])
        lhs = self.multiplier(e1, Z + e2) * self.multiplier(e2, Z)
        rhs = self.multiplier(e2, Z + e1) * self.multiplier(e1, Z)
        return float(np.abs(lhs - rhs).max())

    def transition_connection_residual(self, points: int = 20, seed: int = 5, h: float = 1e-5) -> float:
        """d log m_e = 2 pi i p (alpha(Z + e) - alpha(Z)) for e = e_1, e_2."""
        rng = np.random.default_rng(seed)
        Z = rng.uniform(0, 1, (points, 2))
        worst = 0.0
        for e in ((1, 0), (0, 1)):
            e = np.array(e)
            for k in range(2):
                dZ = np.zeros(2)
                dZ[k] = h
                dlog = (np.log(self.multiplier(e, Z + dZ) / self.multiplier(e, Z - dZ))) / (2 * h)
                a_shift = np.array(self.alpha(*(Z + e).T))[k] - np.array(self.alpha(*Z.T))[k]
                worst = max(worst, float(np.abs(dlog - 2j * np.pi * self.p * a_shift).max()))
        return worst


def truncation_for(p: int, tau: complex) -> int:
    v = complex(tau).imag
    return int(np.ceil(np.sqrt(np.log(1 / SERIES_TAIL) / (np.pi * p * v)))) + 1


@dataclass(frozen=True, eq=False)
class ThetaBasis:
    """psi_j(x, y) = sum_k exp(i pi p x y + i pi p tau u^2 + 2 pi i m x + 2 pi i b m / p),

    m = j + a + k p, u = m/p + y, (a, b) the characteristic, j = 0..p-1.
    """

    geometry: TorusGeometry
    gauge: LineBundleGauge
    K: int

    @property
    def p(self):
        return self.geometry.p

    @property
    def tau(self):
        return self.geometry.tau

    def _modes(self):
        a, _ = self.gauge.characteristic
        return np.arange(self.p) + a

    def evaluate(self, Z, derivative: bool = False, chunk: int = 8192):
        """Values at arbitrary points, shape (len(Z), p); d/dtau instead if derivative."""
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        p, tau = self.p, self.tau
        _, b = self.gauge.characteristic
        ja = self._modes()
        ks = np.arange(-self.K, self.K + 1)
        out = np.empty((len(Z), p), dtype=complex)
        for s in range(0, len(Z), chunk):
            x = Z[s:s + chunk, 0][:, None, None]
            y = Z[s:s + chunk, 1][:, None, None]
            k0 = -np.round(y + ja[None, :, None] / p)
            m = ja[None, :, None] + p * (k0 + ks[None, None, :])
            u = m / p + y
            ph = (1j * np.pi * p * x * y + 1j * np.pi * p * tau * u**2
                  + 2j * np.pi * m * x + 2j * np.pi * b * m / p)
            terms = np.exp(ph)
            if derivative:
                terms = terms * (1j * np.pi * p * u**2)
            out[s:s + chunk] = terms.sum(axis=-1)
        return out

    def grid_values(self, N: int, derivative: bool = False, tau=None):
        """Values on the uniform N x N grid of [0,1)^2, shape (p, N*N) with y the slow index.

        Separable evaluation: the x and y factors of each series term are
        tabulated once and combined by a batched matrix product.
        """
        p = self.p
        tau = self.tau if tau is None else complex(tau)
        _, b = self.gauge.characteristic
        g = np.arange(N) / N
        ja = self._modes()
        reach = np.sqrt(np.log(1 / SERIES_TAIL) / (np.pi * p * tau.imag))
        ks = np.arange(-int(np.ceil(reach)) - 2, int(np.ceil(reach)) + 2)
        m = ja[:, None] + p * ks[None, :]  # (p, nk)
        u = m[:, :, None] / p + g[None, None, :]  # (p, nk, Ny)
        yfac = np.exp(1j * np.pi * p * tau * u**2 + 2j * np.pi * b * m[:, :, None] / p)
        if derivative:
            yfac = yfac * (1j * np.pi * p * u**2)
        xfac = np.exp(2j * np.pi * m[:, :, None] * g[None, None, :])  # (p, nk, Nx)
        vals = np.matmul(yfac.transpose(0, 2, 1), xfac)  # (p, Ny, Nx)
        vals *= np.exp(1j * np.pi * p * np.outer(g, g))[None]
        return vals.reshape(p, N * N)

    def holomorphy_residual(self, points: int = 50, seed: int = 7, h: float | None = None) -> float:
        """(tau d_x - d_y) psi + i pi p z psi by fourth-order differences, relative to the terms."""
        rng = np.random.default_rng(seed)
        Z = rng.uniform(0.05, 0.95, (points, 2))
        h = h or 1e-4 / np.sqrt(self.p)
        tau, p = self.tau, self.p

        def d(k):
            e = np.zeros(2)
            e[k] = h
            f = self.evaluate
            return (-f(Z + 2 * e) + 8 * f(Z + e) - 8 * f(Z - e) + f(Z - 2 * e)) / (12 * h)

        psi = self.evaluate(Z)
        dx, dy = d(0), d(1)
        z = (Z[:, 0] + tau * Z[:, 1])[:, None]
        res = tau * dx - dy + 1j * np.pi * p * z * psi
        scale = np.abs(tau * dx) + np.abs(dy) + np.abs(np.pi * p * z * psi) + np.abs(psi)
        return float((np.abs(res) / scale).max())

    def periodicity_residual(self, points: int = 50, seed: int = 8) -> float:
        rng = np.random.default_rng(seed)
        Z = rng.uniform(0, 1, (points, 2))
        Z[: points // 2, 0] = 0.0
        Z[points // 2:, 1] = 0.0
        psi = self.evaluate(Z)
        worst = 0.0
        for e in ((1, 0), (0, 1)):
            shifted = self.evaluate(Z + np.array(e))
            mult = self.gauge.multiplier(e, Z)[:, None]
            worst = max(worst, float((np.abs(shifted - mult * psi) / np.maximum(np.abs(psi), 1e-300)).max()))
        return worst


def theta_basis(p: int, tau: complex, K: int | None = None, validate: bool = True) -> ThetaBasis:
    geom = TorusGeometry(p, tau)
    need = truncation_for(p, tau)
    if K is None:
        K = need
    elif K < need - 1:
        raise TruncationTooSmall(f"K={K} leaves a series tail above {SERIES_TAIL} (need {need})")
    basis = ThetaBasis(geom, LineBundleGauge(p), K)
    if validate:
        hr = basis.holomorphy_residual()
        if hr > 1e-8:
            raise HolomorphyFailure(f"holomorphy residual {hr:.2e}")
        pr = basis.periodicity_residual()
        if pr > 1e-10:
            raise PeriodicityFailure(f"quasi-periodicity residual {pr:.2e}")
    return basis


@dataclass(frozen=True)
class QuadratureGrid:
    N: int

    @classmethod
    def for_level(cls, p: int) -> "QuadratureGrid":
        return cls(max(64, 8 * p))

    def check(self, p: int):
        if self.N < max(64, 8 * p):
            raise GridTooCoarse(f"N={self.N} below max(64, 8p) for p={p}")

    @property
    def points(self):
        g = np.arange(self.N) / self.N
        X, Y = np.meshgrid(g, g)
        return np.stack([X.ravel(), Y.ravel()], axis=-1)


def _bracket(A, B, N):
    """<a_i, b_j> = int conj(a_i) b_j by the periodic trapezoid rule."""
    return (A.conj() @ B.T) / (N * N)


def gram(basis: ThetaBasis, grid: QuadratureGrid | None = None, check: bool = False) -> np.ndarray:
    grid = grid or QuadratureGrid.for_level(basis.p)
    grid.check(basis.p)
    V = basis.grid_values(grid.N)
    G = _bracket(V, V, grid.N)
    G = 0.5 * (G + G.conj().T)
    if check:
        V2 = basis.grid_values(2 * grid.N)
        G2 = _bracket(V2, V2, 2 * grid.N)
        if np.abs(G2 - G).max() > 1e-9 * max(1.0, np.abs(G).max()):
            raise GridTooCoarse("Gram matrix changed under grid doubling")
    return G


def _sqrtm_h(G):
    w, V = np.linalg.eigh(G)
    return (V * np.sqrt(w)) @ V.conj().T, (V / np.sqrt(w)) @ V.conj().T


@dataclass(frozen=True, eq=False)
class OperatorMatrix:
    matrix: np.ndarray
    domain_tau: complex
    codomain_tau: complex
    gram_domain: np.ndarray = field(repr=False)
    gram_codomain: np.ndarray = field(repr=False)

    def whitened(self) -> np.ndarray:
        half_cod, _ = _sqrtm_h(self.gram_codomain)
        _, inv_half_dom = _sqrtm_h(self.gram_domain)
        return half_cod @ self.matrix @ inv_half_dom

    def singular_values(self) -> np.ndarray:
        return np.linalg.svd(self.whitened(), compute_uv=False)

    def norm(self) -> float:
        return float(self.singular_values().max())

    def __matmul__(self, other: "OperatorMatrix") -> "OperatorMatrix":
        return OperatorMatrix(self.matrix @ other.matrix, other.domain_tau, self.codomain_tau,
                              other.gram_domain, self.gram_codomain)

    def __sub__(self, other: "OperatorMatrix") -> "OperatorMatrix":
        return OperatorMatrix(self.matrix - other.matrix, self.domain_tau, self.codomain_tau,
                              self.gram_domain, self.gram_codomain)

    def scaled(self, c: complex) -> "OperatorMatrix":
        return OperatorMatrix(c * self.matrix, self.domain_tau, self.codomain_tau,
                              self.gram_domain, self.gram_codomain)


def toeplitz_matrix(f, basis_b: ThetaBasis, basis_a: ThetaBasis, grid: QuadratureGrid | None = None) -> OperatorMatrix:
    """Matrix of P_b f P_a: G_b^-1 <psi_b, f psi_a>.  f is a callable of (x, y), or None for 1."""
    if basis_a.p != basis_b.p:
        raise ValueError("bases of different levels")
    grid = grid or QuadratureGrid.for_level(basis_a.p)
    grid.check(basis_a.p)
    Va = basis_a.grid_values(grid.N)
    Vb = basis_b.grid_values(grid.N)
    Ga = _bracket(Va, Va, grid.N)
    Gb = _bracket(Vb, Vb, grid.N)
    if f is not None:
        pts = grid.points
        Va = Va * np.asarray(f(pts[:, 0], pts[:, 1]))[None, :]
    M = np.linalg.solve(Gb, _bracket(Vb, Va, grid.N))
    return OperatorMatrix(M, basis_a.tau, basis_b.tau, Ga, Gb)


def _tau_path(path):
    if isinstance(path, UpperHalfPlaneSegment):
        return path.tau, (lambda t: path.tau1 - path.tau0)
    if isinstance(path, tuple):
        return path
    raise TypeError("path must be an UpperHalfPlaneSegment or a (tau(t), dtau/dt(t)) pair")


class _Connection:
    """C(t) = G_t^-1 <psi_t, d/dt psi_t>, cached per t."""

    def __init__(self, p, tau_of, dtau_of, grid, fd_step=None):
        self.p, self.tau_of, self.dtau_of, self.grid = p, tau_of, dtau_of, grid
        self.fd_step = fd_step
        self.cache = {}
        self.basis = ThetaBasis(TorusGeometry(p, tau_of(0.0)), LineBundleGauge(p), 0)

    def gram_at(self, t):
        V = self.basis.grid_values(self.grid.N, tau=self.tau_of(t))
        return _bracket(V, V, self.grid.N)

    def __call__(self, t):
        key = round(t, 12)
        if key not in self.cache:
            N = self.grid.N
            tau = self.tau_of(t)
            V = self.basis.grid_values(N, tau=tau)
            G = _bracket(V, V, N)
            if self.fd_step:
                h = self.fd_step
                dV = (self.basis.grid_values(N, tau=self.tau_of(t + h))
                      - self.basis.grid_values(N, tau=self.tau_of(t - h))) / (2 * h)
            else:
                dV = self.basis.grid_values(N, derivative=True, tau=tau) * self.dtau_of(t)
            self.cache[key] = np.linalg.solve(G, _bracket(V, dV, N))
        return self.cache[key]


def _rk4_transport(conn, steps):
    p = conn.p
    U = np.eye(p, dtype=complex)
    h = 1.0 / steps
    for k in range(steps):
        t = k * h
        k1 = -conn(t) @ U
        k2 = -conn(t + h / 2) @ (U + h / 2 * k1)
        k3 = -conn(t + h / 2) @ (U + h / 2 * k2)
        k4 = -conn(t + h) @ (U + h * k3)
        U = U + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return U


def l2_transport(p: int, path, grid: QuadratureGrid | None = None,
                 disc: PathDiscretization = DEFAULT_DISC, fd_step: float | None = None,
                 witness: dict | None = None) -> OperatorMatrix:
    """Parallel transport H_p(tau_0) -> H_p(tau_1) for the L^2 connection P_t d/dt.

    Coefficients in the moving theta basis obey c' = -C(t) c.  The tau
    derivative of the basis is analytic unless fd_step is given, in which
    case it is a centered difference in t.  The half-step solution is
    compared as a convergence witness (it reuses the same nodes).
    """
    grid = grid or QuadratureGrid.for_level(p)
    grid.check(p)
    tau_of, dtau_of = _tau_path(path)
    conn = _Connection(p, tau_of, dtau_of, grid, fd_step)
    U = _rk4_transport(conn, disc.steps)
    G0, G1 = conn.gram_at(0.0), conn.gram_at(1.0)
    if disc.richardson:
        Uh = _rk4_transport(conn, disc.steps // 2)
        diff = OperatorMatrix(U - Uh, tau_of(0.0), tau_of(1.0), G0, G1).norm()
        if witness is not None:
            witness["halving_change"] = diff
        if diff > disc.tol:
            raise ConvergenceFailure(f"transport changed by {diff:.2e} under step halving")
    return OperatorMatrix(U, tau_of(0.0), tau_of(1.0), G0, G1)


def pullback_matrix(A, basis_target: ThetaBasis, basis_source: ThetaBasis,
                    grid: QuadratureGrid | None = None, check: bool = True) -> OperatorMatrix:
    """Matrix of psi -> psi o A from H_p(A.tau) to H_p(tau).

    With the symmetric potential alpha, A^* alpha = alpha for A in SL(2, Z),
    so the lift preserving the connection is the plain pullback (phase 1 at
    the origin).  The pullback is verified to land in H_p(tau).
    """
    A = np.asarray(A, dtype=float)
    p = basis_target.p
    grid = grid or QuadratureGrid.for_level(p)
    grid.check(p)
    pts = grid.points
    Vt = basis_target.grid_values(grid.N)
    Vs = basis_source.evaluate(pts @ A.T).T  # (p, N^2)
    Gt = _bracket(Vt, Vt, grid.N)
    Gs = gram(basis_source, grid)
    M = np.linalg.solve(Gt, _bracket(Vt, Vs, grid.N))
    if check:
        resid = Vs - M.T @ Vt
        rel = np.sqrt((np.abs(resid) ** 2).mean(axis=1) / (np.abs(Vs) ** 2).mean(axis=1)).max()
        if rel > 1e-6:
            raise LiftInconsistent(f"pullback leaves H_p(tau) by {rel:.2e}")
        if lift_connection_residual(A, p) > 1e-6:
            raise LiftInconsistent("lift does not preserve the connection")
    return OperatorMatrix(M, basis_source.tau, basis_target.tau, Gs, Gt)


def lift_connection_residual(A, p: int, points: int = 20, seed: int = 9) -> float:
    """|A^* alpha - alpha| at sample points: zero means the plain pullback preserves the connection."""
    A = np.asarray(A, dtype=float)
    rng = np.random.default_rng(seed)
    Z = rng.uniform(0, 1, (points, 2))
    a = np.stack(LineBundleGauge.alpha(Z[:, 0], Z[:, 1]), axis=-1)
    AZ = Z @ A.T
    aA = np.stack(LineBundleGauge.alpha(AZ[:, 0], AZ[:, 1]), axis=-1) @ A  # pullback of the 1-form
    return float(np.abs(aA - a).max())


def fixed_points(A) -> list:
    """Fixed points of Z -> AZ on R^2/Z^2 with the lattice vector e, AZ = Z + e (det(A - I) != 0)."""
    A = np.asarray(A, dtype=float)
    B = A - np.eye(2)
    det = round(np.linalg.det(B))
    if det == 0:
        raise ValueError("fixed points are not isolated")
    Bi = np.linalg.inv(B)
    span = abs(det) + 1
    found = {}
    for a in range(-span, span + 1):
        for b in range(-span, span + 1):
            x = Bi @ np.array([a, b], dtype=float)
            xr = np.mod(np.round(x * abs(det)) / abs(det), 1.0)
            key = tuple(np.round(xr, 9))
            if key not in found:
                e = np.round(B @ xr).astype(int)
                found[key] = (xr, e)
    pts = list(found.values())
    assert len(pts) == abs(det)
    return pts


def lift_eigenvalue_power(p: int, x, e) -> complex:
    """lambda_x^p: the lift of Z -> AZ acts on the fibre at a fixed point x by m_e(x), AZ = x + e."""
    return complex(LineBundleGauge(p).multiplier(e, np.asarray(x, dtype=float)))


def lift_eigenvalue(x, e) -> complex:
    """lambda_x with lambda_x^p = m_e(x) at every level p."""
    return complex(LineBundleGauge.sign(e) * np.exp(1j * np.pi * omega(e, np.asarray(x, dtype=float))))


def _moduli_path(A, tau):
    tau1 = act_on_modulus(A, tau)
    if abs(tau1 - tau) < 1e-14:
        return ConstantPath(structure_from_tau(tau))
    return UpperHalfPlaneSegment(tau, tau1)


def torus_fixed_data(A, tau: complex, disc: PathDiscretization = DEFAULT_DISC) -> list:
    """(FixedComponentDatum, leading coefficient) pairs for Z -> AZ on R^2/Z^2.

    Isolated fixed points when det(A - I) != 0; for a shear [[1, s], [0, 1]]
    the fixed set is the s circles y = k/|s|, each of length 1.
    """
    A = np.asarray(A, dtype=float)
    J0 = structure_from_tau(tau)
    path = _moduli_path(A, tau)
    out = []
    if round(np.linalg.det(A - np.eye(2))) != 0:
        for x, e in fixed_points(A):
            datum = FixedPointDatum(dphi=A, J0=J0, path=path, lam=lift_eigenvalue(x, e), disc=disc)
            comp = FixedComponentDatum(datum, np.zeros((2, 0)), np.eye(2))
            out.append((comp, leading_coeff_isolated(datum, disc).value))
        return out
    s = int(round(A[0, 1]))
    if not (np.array_equal(A, [[1, s], [0, 1]]) and s != 0):
        raise ValueError("only isolated fixed points and shears [[1, s], [0, 1]] are supported")
    for k in range(abs(s)):
        y = k / abs(s)
        e = (int(np.sign(s)) * k, 0)
        datum = FixedPointDatum(dphi=A, J0=J0, path=path, lam=lift_eigenvalue((0.0, y), e), disc=disc)
        comp = FixedComponentDatum(datum, np.array([[1.0], [0.0]]), np.array([[0.0], [1.0]]))
        out.append((comp, leading_density_component(comp, disc).value))
    return out


@dataclass
class TraceRecord:
    p: int
    trace: complex
    prediction: complex
    witness: dict = field(default_factory=dict)

    @property
    def residual(self) -> complex:
        return self.trace - self.prediction


@dataclass
class TraceSeries:
    A: np.ndarray
    tau: complex
    records: list

    def slope(self, scale=None) -> float:
        ps = np.array([r.p for r in self.records], dtype=float)
        res = np.array([abs(r.residual) for r in self.records])
        if scale is not None:
            res = res / np.array([scale(r.p) for r in self.records])
        return float(np.polyfit(np.log(ps), np.log(res), 1)[0])


def fit_slope(ps, values) -> tuple[float, float]:
    """Least-squares slope of log|values| against log p and its standard error."""
    x = np.log(np.asarray(ps, dtype=float))
    y = np.log(np.abs(np.asarray(values)))
    (b, a), cov = np.polyfit(x, y, 1, cov=True) if len(x) > 2 else (np.polyfit(x, y, 1), np.zeros((2, 2)))
    return float(b), float(np.sqrt(max(cov[0, 0], 0.0)))


def fixed_exponent_misfit(ps, values, exponent: float) -> float:
    """RMS misfit of log|values| to C p^(-exponent) with the best constant C."""
    x = np.log(np.asarray(ps, dtype=float))
    y = np.log(np.abs(np.asarray(values))) + exponent * x
    return float(np.sqrt(np.mean((y - y.mean()) ** 2)))


def translation_matrix(v, basis: ThetaBasis, grid: QuadratureGrid | None = None) -> OperatorMatrix:
    """Lift of Z -> Z + v: psi -> exp(-i pi p Omega(v, Z)) psi(Z + v); needs p v integral."""
    v = np.asarray(v, dtype=float)
    p = basis.p
    if not np.allclose(p * v, np.round(p * v)):
        raise LiftInconsistent("translation does not lift at this level (p v not integral)")
    grid = grid or QuadratureGrid.for_level(p)
    pts = grid.points
    V = basis.grid_values(grid.N)
    chi = np.exp(-1j * np.pi * p * omega(v, pts))
    Vs = basis.evaluate(pts + v).T * chi[None, :]
    G = _bracket(V, V, grid.N)
    M = np.linalg.solve(G, _bracket(V, Vs, grid.N))
    resid = Vs - M.T @ V
    if np.sqrt((np.abs(resid) ** 2).mean() / (np.abs(Vs) ** 2).mean()) > 1e-6:
        raise LiftInconsistent("translated sections leave the holomorphic space")
    return OperatorMatrix(M, basis.tau, basis.tau, G, G)


def composite_trace(A, tau: complex, p: int, disc: PathDiscretization = DEFAULT_DISC,
                    grid: QuadratureGrid | None = None, witness: dict | None = None) -> complex:
    """Tr[phi_p^* T_p] with T_p the L^2 transport along the segment tau -> A.tau."""
    A = np.asarray(A, dtype=float)
    tau1 = act_on_modulus(A, tau)
    grid = grid or QuadratureGrid.for_level(p)
    b0 = theta_basis(p, tau, validate=False)
    if abs(tau1 - tau) < 1e-14:
        b1 = b0
        T = None
    else:
        b1 = theta_basis(p, tau1, validate=False)
        T = l2_transport(p, UpperHalfPlaneSegment(tau, tau1), grid, disc, witness=witness)
    phi = pullback_matrix(A, b0, b1, grid)
    M = phi.matrix if T is None else phi.matrix @ T.matrix
    if witness is not None:
        G0 = phi.gram_codomain
        h, hi = _sqrtm_h(G0)
        witness["whitened_trace_gap"] = float(abs(np.trace(M) - np.trace(h @ M @ hi)))
        witness["pullback_unitarity"] = float(np.abs(phi.singular_values() - 1).max())
        if T is not None:
            witness["transport_unitarity"] = float(np.abs(T.singular_values() - 1).max())
    return complex(np.trace(M))


def trace_study(A, tau: complex, p_list, predict=None, disc: PathDiscretization = DEFAULT_DISC,
                grid_rule=QuadratureGrid.for_level) -> TraceSeries:
    """Traces of phi_p^* T_p for each p against predict(p) (default: leading fixed-point terms)."""
    if predict is None:
        data = torus_fixed_data(A, tau, disc)
        predict = lambda p: trace_prediction(data, p)  # noqa: E731
    records = []
    for p in p_list:
        w = {}
        tr = composite_trace(A, tau, p, disc, grid_rule(p), w)
        records.append(TraceRecord(p=p, trace=tr, prediction=complex(predict(p)), witness=w))
    return TraceSeries(np.asarray(A), complex(tau), records)


def translation_trace_study(v, tau: complex, p_list, grid_rule=QuadratureGrid.for_level) -> TraceSeries:
    """Traces of the lifted translation by v (fixed-point free, prediction 0)."""
    records = []
    for p in p_list:
        basis = theta_basis(p, tau, validate=False)
        M = translation_matrix(v, basis, grid_rule(p))
        records.append(TraceRecord(p=p, trace=complex(np.trace(M.matrix)), prediction=0j,
                                   witness={"unitarity": float(np.abs(M.singular_values() - 1).max())}))
    return TraceSeries(np.eye(2), complex(tau), records)


def approx_theorem_check(p_list, path: UpperHalfPlaneSegment, g0: complex,
                         grid_rule=QuadratureGrid.for_level, disc: PathDiscretization = DEFAULT_DISC,
                         controls=()):
    """Whitened norms of T_{p,1} - g0 P_{p,1} P_{p,0} for each p.

    Returns (p, deviation) pairs, or (p, deviation, [deviations for each
    control coefficient]) when controls are given; the transport is computed
    once per p.
    """
    out = []
    for p in p_list:
        grid = grid_rule(p)
        b0 = theta_basis(p, path.tau0, validate=False)
        b1 = theta_basis(p, path.tau1, validate=False)
        T = l2_transport(p, path, grid, disc)
        P10 = toeplitz_matrix(None, b1, b0, grid)
        dev = (T - P10.scaled(g0)).norm()
        if controls:
            out.append((p, dev, [(T - P10.scaled(c)).norm() for c in controls]))
        else:
            out.append((p, dev))
    return out


__all__ = [
    "TorusGeometry", "LineBundleGauge", "ThetaBasis", "QuadratureGrid", "OperatorMatrix",
    "theta_basis", "gram", "toeplitz_matrix", "l2_transport", "pullback_matrix",
    "translation_matrix", "fixed_points", "lift_eigenvalue", "lift_eigenvalue_power", "torus_fixed_data",
    "translation_trace_study", "composite_trace",
    "trace_study", "approx_theorem_check", "fit_slope", "fixed_exponent_misfit", "TAU_ODE",
]
