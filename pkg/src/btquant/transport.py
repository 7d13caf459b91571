"""Transport factors along a path of compatible structures.

All quantities are anchored at the start J_0 = path(0) of the path:
mu_t = exp(int_0^t 1/4 Tr[Pi_u^0 d/du(-J_0 J_u)] du).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceFailure
from .gaussian import QuadratureSpec, compose, kernel_of, quadrature_grid
from .paths import StructurePath
from .symplectic import CompatibleStructure, interpolation_operators

TAU_ODE = 1e-7
MAX_STEPS = 1 << 14
FD_KERNEL_STEP = 1e-4


@dataclass(frozen=True)
class PathDiscretization:
    steps: int = 256
    scheme: str = "RK4Fixed"
    richardson: bool = True
    tol: float = TAU_ODE

    def __post_init__(self):
        if self.steps < 16:
            raise ValueError("at least 16 steps are required")
        if self.scheme != "RK4Fixed":
            raise ValueError(f"unknown scheme {self.scheme!r}")


DEFAULT_DISC = PathDiscretization()


@dataclass(frozen=True)
class TransportFactors:
    t: float
    mu: complex
    tauK: complex
    detPiBar: complex
    g0: complex

    @property
    def tau_identity_residual(self) -> float:
        return float(abs(np.conj(self.mu) ** -2 * self.tauK - self.detPiBar))

    @property
    def g0_identity_residual(self) -> float:
        return float(abs(np.conj(self.g0) ** 2 * self.detPiBar - self.tauK))


def _start(path: StructurePath) -> CompatibleStructure:
    return path.at(0.0)


def mu_integrand(path: StructurePath, u: float, J_start: CompatibleStructure | None = None) -> complex:
    """1/4 Tr[Pi_u^0 d/du(-J_0 J_u)]."""
    J_start = J_start or _start(path)
    _, Pi = interpolation_operators(path.at(u), J_start)
    return complex(0.25 * np.trace(Pi.P @ (-J_start.J @ path.dJ(u))))


def _log_mu(path, t, steps, J_start):
    """Composite RK4 (Simpson) quadrature of the integrand over [0, t]."""
    if t == 0:
        return 0j
    h = t / steps
    f = lambda u: mu_integrand(path, u, J_start)  # noqa: E731
    nodes = [f(k * h / 2) for k in range(2 * steps + 1)]
    ends = np.array(nodes[0::2])
    mids = np.array(nodes[1::2])
    return complex(h / 6 * (ends[:-1].sum() + ends[1:].sum() + 4 * mids.sum()))


def mu(path: StructurePath, t: float, disc: PathDiscretization = DEFAULT_DISC) -> complex:
    """mu_t, refined by step doubling until two resolutions agree to disc.tol."""
    if not 0.0 <= t <= 1.0:
        raise ValueError("t must lie in [0, 1]")
    J_start = _start(path)
    steps = disc.steps
    val = _log_mu(path, t, steps, J_start)
    if not disc.richardson:
        return complex(np.exp(val))
    coarse = _log_mu(path, t, steps // 2, J_start)
    while abs(np.exp(val) - np.exp(coarse)) > disc.tol:
        if steps >= MAX_STEPS:
            raise ConvergenceFailure(f"mu did not converge with {steps} steps")
        steps *= 2
        coarse, val = val, _log_mu(path, t, steps, J_start)
    return complex(np.exp(val))


def _mu_shift(path, t, h, J_start):
    """mu_{t+h} / mu_{t-h} by Gauss-Legendre on the short interval."""
    x, w = np.polynomial.legendre.leggauss(8)
    vals = [mu_integrand(path, t + h * xi, J_start) for xi in x]
    return complex(np.exp(h * np.dot(w, vals)))


def _closed_composition(path, t, J_start):
    return compose(kernel_of(path.at(t)), kernel_of(J_start))


def ptloc_residuals(path: StructurePath, t: float, disc: PathDiscretization = DEFAULT_DISC,
                    grid: QuadratureSpec | None = None, pairs: int = 10, seed: int = 11):
    """Residuals of the two local transport identities at time t.

    mut:    P_t (d/dt P_t P_0) + 1/4 Tr[Pi_t^0 d/dt(-J_0 J_t)] P_t P_0 = 0
    tilmut: P_t d/dt (mu_t P_t P_0) = 0
    The time derivative is a centered difference of the closed-form kernel,
    the outer composition is quadrature.  Max over `pairs` point pairs.
    """
    if not 0.0 < t < 1.0:
        raise ValueError("t must lie in the open interval (0, 1)")
    J_start = _start(path)
    n = path.n
    h = min(FD_KERNEL_STEP, t / 2, (1 - t) / 2)
    K_t = kernel_of(path.at(t))
    C0 = _closed_composition(path, t, J_start)
    Cp = _closed_composition(path, t + h, J_start)
    Cm = _closed_composition(path, t - h, J_start)
    coef = mu_integrand(path, t, J_start)
    mu_m = mu(path, t - h, disc)
    mu_p = mu_m * _mu_shift(path, t, h, J_start)
    rng = np.random.default_rng(seed)
    worst_mut = worst_til = 0.0
    grid = grid or QuadratureSpec()
    R = (K_t.M + C0.M).real
    for _ in range(pairs):
        Z, Zp = rng.uniform(-0.7, 0.7, size=(2, 2 * n))
        b = K_t.M @ Z + C0.M @ Zp + 0.5j * K_t.Omega @ (Z - Zp)
        nodes, wts = quadrature_grid(R, np.linalg.solve(R, b.real), grid, n,
                                     np.linalg.norm(Z) + np.linalg.norm(Zp))
        a = c = 0j
        for s in range(0, len(wts), grid.chunk):
            W = nodes[s:s + grid.chunk]
            w = wts[s:s + grid.chunk] * K_t(Z, W)
            vp, vm = Cp(W, Zp), Cm(W, Zp)
            a += np.sum(w * (vp - vm)) / (2 * h)
            c += np.sum(w * (mu_p * vp - mu_m * vm)) / (2 * h)
        worst_mut = max(worst_mut, abs(a + coef * C0(Z, Zp)))
        worst_til = max(worst_til, abs(c))
    return float(worst_mut), float(worst_til)


def mut_identity_residual(path: StructurePath, t: float, disc: PathDiscretization = DEFAULT_DISC,
                          grid: QuadratureSpec | None = None, variant: str = "mut") -> float:
    mut, til = ptloc_residuals(path, t, disc, grid)
    if variant == "mut":
        return mut
    if variant == "tilmut":
        return til
    raise ValueError(f"unknown variant {variant!r}")


def barmut_check(path: StructurePath, t: float, disc: PathDiscretization = DEFAULT_DISC) -> float:
    """|mu_t (P_t P_0)(0, 0) - conj(mu_t)^-1| with the closed-form prefactor."""
    m = mu(path, t, disc)
    c = _closed_composition(path, t, _start(path)).c
    return float(abs(m * c - 1 / np.conj(m)))


def _hermitian_volume(V: np.ndarray, G: np.ndarray) -> float:
    """Norm of v_1 ^ ... ^ v_n for the Hermitian extension of the metric G."""
    return float(np.sqrt(abs(np.linalg.det(V.conj().T @ G @ V))))


def base_antiholo_frame(J: CompatibleStructure) -> np.ndarray:
    """Columns conj(d/dz_j) = P^(0,1) e_(2j) of V^(0,1)."""
    P01 = 0.5 * (np.eye(2 * J.n) + 1j * J.J)
    return P01[:, 0::2]


def _transport_frame(path, t, steps, V0):
    """RK4 for V' = (I - P_u^(0,1)) (d/du P_u^(0,1)) V."""
    I = np.eye(2 * path.n)

    def rhs(u, V):
        P01 = 0.5 * (I + 1j * path.J(u))
        dP01 = 0.5j * path.dJ(u)
        return (I - P01) @ dP01 @ V

    V = V0.astype(complex)
    h = t / steps
    for k in range(steps):
        u = k * h
        k1 = rhs(u, V)
        k2 = rhs(u + h / 2, V + h / 2 * k1)
        k3 = rhs(u + h / 2, V + h / 2 * k2)
        k4 = rhs(u + h, V + h * k3)
        V = V + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return V


def _frames(path, t, steps):
    J_start = _start(path)
    J_t = path.at(t)
    V0 = base_antiholo_frame(J_start)
    _, Pi = interpolation_operators(J_t, J_start)
    target = Pi.P.conj() @ V0
    detPiBar = _hermitian_volume(target, J_t.G) / _hermitian_volume(V0, J_start.G)
    V = _transport_frame(path, t, steps, V0) if t > 0 else V0.astype(complex)
    C, *_ = np.linalg.lstsq(target, V, rcond=None)
    return complex(np.linalg.det(C) * detPiBar), complex(detPiBar)


def canonical_transport(path: StructurePath, t: float, disc: PathDiscretization = DEFAULT_DISC):
    """(tauK, detPiBar) at time t.

    The frame of det V_t^(0,1) is the wedge of conj(Pi_t^0) applied to the
    base frame, rescaled to the norm of the base wedge; tauK is the parallel
    transport of the base wedge expressed in it, and detPiBar is the factor
    by which conj(Pi_t^0) multiplies the base wedge in these frames.
    """
    steps = disc.steps
    tau, dpb = _frames(path, t, steps)
    if disc.richardson and t > 0:
        coarse, _ = _frames(path, t, steps // 2)
        while abs(tau - coarse) > disc.tol:
            if steps >= MAX_STEPS:
                raise ConvergenceFailure(f"frame transport did not converge with {steps} steps")
            steps *= 2
            coarse, (tau, dpb) = tau, _frames(path, t, steps)
    return tau, dpb


def g0(path: StructurePath, t: float, disc: PathDiscretization = DEFAULT_DISC) -> complex:
    """First coefficient of the transport for the trivial auxiliary bundle: mu_t."""
    return mu(path, t, disc)


def transport_factors(path: StructurePath, t: float, disc: PathDiscretization = DEFAULT_DISC) -> TransportFactors:
    m = mu(path, t, disc)
    tau, dpb = canonical_transport(path, t, disc)
    return TransportFactors(t=t, mu=m, tauK=tau, detPiBar=dpb, g0=g0(path, t, disc))


def g0_ode_crosscheck(path: StructurePath, disc: PathDiscretization = DEFAULT_DISC) -> float:
    """max_t |g(t) - mu_t| with g' = 1/4 Tr[Pi_t^0 d/dt(-J_0 J_t)] g solved by RK4 in g."""
    J_start = _start(path)
    steps = disc.steps
    h = 1.0 / steps
    f = lambda u: mu_integrand(path, u, J_start)  # noqa: E731
    g = 1.0 + 0j
    log_mu = 0j
    worst = 0.0
    for k in range(steps):
        u = k * h
        fa, fm, fb = f(u), f(u + h / 2), f(u + h)
        k1 = fa * g
        k2 = fm * (g + h / 2 * k1)
        k3 = fm * (g + h / 2 * k2)
        k4 = fb * (g + h * k3)
        g = g + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        log_mu += h / 6 * (fa + 4 * fm + fb)
        worst = max(worst, abs(g - np.exp(log_mu)))
    if not np.isfinite(worst):
        raise ConvergenceFailure("transport ODE diverged")
    return float(worst)
