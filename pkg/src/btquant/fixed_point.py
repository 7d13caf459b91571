"""Leading coefficients of trace asymptotics at fixed points of a symplectic map.

Everything is computed after moving J_0 to the standard structure by the
symplectic change of frame S = G_0^(-1/2), where the quadratic form of the
local Gaussian model is a symmetric matrix.  The frame change preserves
Lebesgue measure (det S = 1) and all determinants involved.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateFixedPoint, DegenerateOnN, DimensionMismatch, NotSymplectic, TailBoundViolated
from .gaussian import TAIL, QuadratureSpec, _integrate, quadrature_grid
from .paths import ConstantPath, SiegelSegment, StructurePath
from .symplectic import (
    TAU_ALG,
    BranchedValue,
    CompatibleStructure,
    interpolation_operators,
    is_symplectic,
    push_structure,
    siegel_from_structure,
    sqrt_det_convention,
    sqrt_det_eigen,
    standard_frame,
)
from .transport import (
    DEFAULT_DISC,
    PathDiscretization,
    _hermitian_volume,
    base_antiholo_frame,
    canonical_transport,
    mu as transport_mu,
)

MIN_SINGULAR = 1e-6


def default_path(dphi, J0: CompatibleStructure) -> StructurePath:
    """Straight Siegel segment from J0 to dphi J0 dphi^-1 (constant if they agree)."""
    J1 = push_structure(dphi, J0)
    if np.allclose(J1.J, J0.J, atol=1e-13):
        return ConstantPath(J0)
    return SiegelSegment(siegel_from_structure(J0), siegel_from_structure(J1))


@dataclass(frozen=True, eq=False)
class FixedPointDatum:
    dphi: np.ndarray
    J0: CompatibleStructure
    path: StructurePath
    lam: complex = 1.0
    phiE_tauE: complex = 1.0
    mu: complex | None = None
    disc: PathDiscretization = field(default=DEFAULT_DISC, repr=False)

    def __post_init__(self):
        dphi = np.asarray(self.dphi, dtype=float)
        object.__setattr__(self, "dphi", dphi)
        if dphi.shape != self.J0.J.shape:
            raise DimensionMismatch("dphi and J0 differ in size")
        if not is_symplectic(dphi):
            raise NotSymplectic("dphi does not preserve Omega")
        if abs(abs(self.lam) - 1) > TAU_ALG:
            raise ValueError("lambda must have unit modulus")
        J1 = push_structure(dphi, self.J0)
        if np.linalg.norm(self.path.J(1.0) - J1.J) > TAU_ALG * max(1.0, np.linalg.norm(J1.J)):
            raise ValueError("path does not end at dphi J0 dphi^-1")
        if np.linalg.norm(self.path.J(0.0) - self.J0.J) > TAU_ALG * max(1.0, np.linalg.norm(self.J0.J)):
            raise ValueError("path does not start at J0")
        if self.mu is None:
            object.__setattr__(self, "mu", transport_mu(self.path, 1.0, self.disc))

    @property
    def n(self) -> int:
        return self.J0.n

    @property
    def J1(self) -> CompatibleStructure:
        return push_structure(self.dphi, self.J0)

    @classmethod
    def build(cls, dphi, J0: CompatibleStructure, lam: complex = 1.0,
              path: StructurePath | None = None, disc: PathDiscretization = DEFAULT_DISC):
        path = path if path is not None else default_path(dphi, J0)
        return cls(dphi=dphi, J0=J0, path=path, lam=lam, disc=disc)


@dataclass(frozen=True, eq=False)
class FixedComponentDatum:
    base: FixedPointDatum
    fixed_subspace: np.ndarray
    N_subspace: np.ndarray
    volume: float = 1.0

    def __post_init__(self):
        F = np.asarray(self.fixed_subspace, dtype=float).reshape(2 * self.base.n, -1)
        N = np.asarray(self.N_subspace, dtype=float).reshape(2 * self.base.n, -1)
        if F.shape[1] == 0:
            F = np.zeros((2 * self.base.n, 0))
        object.__setattr__(self, "fixed_subspace", F)
        object.__setattr__(self, "N_subspace", N)
        if F.shape[1] + N.shape[1] != 2 * self.base.n:
            raise DimensionMismatch("fixed and transverse dimensions must add up to 2n")
        if np.linalg.matrix_rank(np.hstack([F, N]), tol=1e-10) != 2 * self.base.n:
            raise DegenerateFixedPoint("N is not transverse to the fixed subspace")
        if F.shape[1] and np.abs(self.base.dphi @ F - F).max() > 1e-10 * max(1.0, np.abs(F).max()):
            raise DegenerateFixedPoint("dphi is not the identity on the fixed subspace")
        kernel_dim = 2 * self.base.n - np.linalg.matrix_rank(np.eye(2 * self.base.n) - self.base.dphi, tol=1e-9)
        if kernel_dim != F.shape[1]:
            raise DegenerateFixedPoint("fixed subspace is not all of ker(I - dphi)")

    @property
    def d(self) -> int:
        return self.fixed_subspace.shape[1]

    @property
    def density_ratio(self) -> float:
        """|dv|_X(N, F) / |dv|_N(N): the quotient density evaluated on the fixed basis."""
        F, N = self.fixed_subspace, self.N_subspace
        G = self.base.J0.G
        vol_x = abs(np.linalg.det(np.hstack([N, F])))  # det G0 = 1, so metric volume is Lebesgue
        vol_n = np.sqrt(np.linalg.det(N.T @ G @ N))
        return float(vol_x / vol_n)


@dataclass(frozen=True, eq=False)
class CoefficientReport:
    value: complex
    branch_samples: BranchedValue
    sign_class: int
    kind: str = "a0"
    eigen_check: complex | None = None

    @property
    def a0(self):
        return self.value

    @property
    def nu0(self):
        return self.value


def _standardized(datum: FixedPointDatum):
    """S^-1 dphi S and S^-1 J_1 S in the frame where J_0 is standard, with S."""
    S = standard_frame(datum.J0)
    Si = np.linalg.inv(S)
    dphi = Si @ datum.dphi @ S
    J0s = CompatibleStructure(J=Si @ datum.J0.J @ S, G=np.eye(2 * datum.n))
    J1 = push_structure(dphi, J0s)
    return S, dphi, J0s, J1


def interpolated_difference(datum: FixedPointDatum) -> np.ndarray:
    """Pi_0^1 - dphi^-1 conj(Pi_1^0) in the standard frame."""
    _, dphi, J0s, J1 = _standardized(datum)
    _, Pi01 = interpolation_operators(J0s, J1)
    _, Pi10 = interpolation_operators(J1, J0s)
    return Pi01.P - np.linalg.solve(dphi, Pi10.P.conj())


def fixed_point_form(datum: FixedPointDatum) -> np.ndarray:
    """(Pi_0^1 - dphi^-1 conj(Pi_1^0))(I - dphi) in the standard frame.

    Symmetric with positive definite real part; the check is made here.
    """
    _, dphi, _, _ = _standardized(datum)
    M = interpolated_difference(datum) @ (np.eye(2 * datum.n) - dphi)
    scale = max(1.0, np.abs(M).max())
    if np.abs(M - M.T).max() > 1e-9 * scale:
        raise ArithmeticError("fixed-point quadratic form is not symmetric")
    M = 0.5 * (M + M.T)
    if np.linalg.eigvalsh(M.real).min() <= 0:
        raise ArithmeticError("fixed-point quadratic form has no positive real part")
    return M


def _guard(mat, err):
    if mat.size and np.linalg.svd(mat, compute_uv=False).min() < MIN_SINGULAR:
        raise err("matrix is numerically singular at a fixed point")


def _sign_class(value: complex) -> int:
    return int(np.round(np.angle(value) / (np.pi / 2))) % 4


def leading_coeff_isolated(datum: FixedPointDatum, disc: PathDiscretization = DEFAULT_DISC) -> CoefficientReport:
    """a0 = conj(mu)^-1 phiE_tauE det^(-1/2)[(Pi_0^1 - dphi^-1 conj(Pi_1^0))(I - dphi)]."""
    _guard(np.eye(2 * datum.n) - datum.dphi, DegenerateFixedPoint)
    M = fixed_point_form(datum)
    root = sqrt_det_convention(M)
    a0 = datum.phiE_tauE / (np.conj(datum.mu) * root.value)
    eig = datum.phiE_tauE / (np.conj(datum.mu) * sqrt_det_eigen(M))
    return CoefficientReport(value=complex(a0), branch_samples=root, sign_class=_sign_class(1 / root.value),
                             kind="a0", eigen_check=complex(eig))


def gaussian_fixed_point_oracle(datum: FixedPointDatum, disc: PathDiscretization = DEFAULT_DISC,
                                grid: QuadratureSpec | None = None, max_nodes: int = 3_000_000) -> complex:
    """Quadrature of conj(mu)^-1 phiE_tauE int exp(-pi <M Z, Z>) dZ over R^(2n).

    Without an explicit grid, a trapezoid grid is sized from the integrand:
    each eigen-axis of Re M gets the half-width of the tail bound, and the
    spacing is set by the decay exp(-pi xi^T M^-1 xi) of the Fourier
    transform, which controls the aliasing error of the trapezoid rule.
    """
    M = fixed_point_form(datum)
    n = datum.n
    if grid is not None:
        nodes, wts = quadrature_grid(M.real, np.zeros(2 * n), grid, n)
    else:
        lam, V = np.linalg.eigh(M.real)
        half = np.sqrt(np.log(1 / TAIL) / (np.pi * lam)) + 1.0 / np.sqrt(lam)
        decay = np.linalg.eigvalsh(np.linalg.inv(M).real).min()
        h = np.sqrt(np.pi * decay / np.log(1e14))
        counts = np.maximum(8, np.ceil(2 * half / h).astype(int) + 1)
        if np.prod(counts.astype(float)) > max_nodes:
            raise TailBoundViolated(f"oscillatory Gaussian needs {int(np.prod(counts.astype(float)))} nodes")
        axes = [np.linspace(-hk, hk, k) for hk, k in zip(half, counts)]
        weights = []
        for hk, k in zip(half, counts):
            w = np.full(k, 2 * hk / (k - 1))
            w[[0, -1]] *= 0.5
            weights.append(w)
        grids = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([g.ravel() for g in grids], axis=-1)
        wts = np.prod(np.stack([g.ravel() for g in np.meshgrid(*weights, indexing="ij")], axis=-1), axis=-1)
        nodes = pts @ V.T
    val = _integrate(lambda Z: np.exp(-np.pi * np.einsum("...i,ij,...j->...", Z, M, Z)), nodes, wts, 1 << 18)
    return complex(datum.phiE_tauE * val / np.conj(datum.mu))


def phi_K(datum: FixedPointDatum) -> complex:
    """dphi acting from det V_0^(0,1) to det V_1^(0,1) in the transport frames."""
    J0, J1 = datum.J0, datum.J1
    V0 = base_antiholo_frame(J0)
    _, Pi = interpolation_operators(J1, J0)
    target = Pi.P.conj() @ V0
    D, *_ = np.linalg.lstsq(target, datum.dphi @ V0, rcond=None)
    scale = _hermitian_volume(target, J1.G) / _hermitian_volume(V0, J0.G)
    return complex(np.linalg.det(D) * scale)


def geometric_identity_check(datum: FixedPointDatum, disc: PathDiscretization = DEFAULT_DISC) -> float:
    """|conj(mu)^-2 det(Pi_0^1 - dphi^-1 conj(Pi_1^0))^-1 - (-1)^n phiK / tauK|.

    The difference D = Pi_0^1 - dphi^-1 conj(Pi_1^0) sends w to w and
    dphi conj(w) to -conj(w) for w in V_0^(1,0), so det(D)^-1 compares the
    wedges of dphi conj(w) and conj(Pi_1^0) conj(w); combined with
    conj(mu)^-2 tauK = detPiBar this gives the identity above.
    """
    tauK, _ = canonical_transport(datum.path, 1.0, disc)
    lhs = np.conj(datum.mu) ** -2 / np.linalg.det(interpolated_difference(datum))
    rhs = (-1) ** datum.n * phi_K(datum) / tauK
    return float(abs(lhs - rhs))


def rank_fact_residual(datum: FixedPointDatum) -> float:
    """(Pi_0^1 - dphi^-1 conj(Pi_1^0)) is +1 on V_0^(1,0) and sends dphi v to -v for v in V_0^(0,1)."""
    S, dphi, J0s, _ = _standardized(datum)
    D = interpolated_difference(datum)
    m = 2 * datum.n
    P10 = 0.5 * (np.eye(m) - 1j * J0s.J)
    P01 = P10.conj()
    r1 = np.abs(D @ P10 - P10).max()
    r2 = np.abs(D @ dphi @ P01 + P01).max()
    return float(max(r1, r2))


def restricted_endomorphism(M, N, G):
    """Matrix of P^N M on N in the basis N, with P^N the G-orthogonal projection."""
    return np.linalg.solve(N.T @ G @ N, N.T @ G @ M @ N)


def leading_density_component(comp: FixedComponentDatum, disc: PathDiscretization = DEFAULT_DISC) -> CoefficientReport:
    """nu0 = conj(mu)^-1 phiE_tauE det_N^(-1/2)[P^N M P^N] density_ratio on the fixed basis."""
    datum = comp.base
    if comp.d == 0:
        rep = leading_coeff_isolated(datum, disc)
        return CoefficientReport(value=rep.value, branch_samples=rep.branch_samples,
                                 sign_class=rep.sign_class, kind="nu0", eigen_check=rep.eigen_check)
    S, dphi, _, _ = _standardized(datum)
    Si = np.linalg.inv(S)
    N = Si @ comp.N_subspace
    m = 2 * datum.n
    I = np.eye(m)
    M = interpolated_difference(datum) @ (I - dphi)
    E = restricted_endomorphism(M, N, I)
    _guard(E, DegenerateOnN)
    # Congruent symmetric version W^-1 N^T M N W^-T, same determinant as E.
    W = np.linalg.cholesky(N.T @ N)
    Es = np.linalg.solve(W, np.linalg.solve(W, (N.T @ M @ N).T).T)
    Es = 0.5 * (Es + Es.T)
    if np.linalg.eigvalsh(Es.real).min() <= 0:
        raise ArithmeticError("restricted quadratic form has no positive real part")
    root = sqrt_det_convention(Es)
    if abs(root.value ** 2 - np.linalg.det(E)) > 1e-8 * max(1.0, abs(root.value) ** 2):
        raise ArithmeticError("restricted determinant mismatch")
    nu0 = datum.phiE_tauE * comp.density_ratio / (np.conj(datum.mu) * root.value)
    eig = datum.phiE_tauE * comp.density_ratio / (np.conj(datum.mu) * sqrt_det_eigen(Es))
    return CoefficientReport(value=complex(nu0), branch_samples=root, sign_class=_sign_class(1 / root.value),
                             kind="nu0", eigen_check=complex(eig))


def simplified_form_squared(comp: FixedComponentDatum, disc: PathDiscretization = DEFAULT_DISC) -> complex:
    """Square of (-1)^((n-d)/2) (phiK/tauK)^(1/2) |det_N(I - dphi|_N)|^(-1/2) density_ratio.

    Valid when dphi and J_0 preserve N; the square removes the choice of roots
    and the sign of det_N(I - dphi|_N), leaving
    (-1)^(n-d) phiK / tauK / det_N(I - dphi|_N) * density_ratio^2.
    """
    datum = comp.base
    tauK, _ = canonical_transport(datum.path, 1.0, disc)
    N = comp.N_subspace
    restricted = np.linalg.solve(N.T @ N, N.T @ (np.eye(2 * datum.n) - datum.dphi) @ N)
    if comp.d % 2:
        raise ValueError("the simplified form needs a complex (even-dimensional) fixed subspace")
    sign = (-1) ** (datum.n - comp.d // 2)
    return complex(sign * phi_K(datum) / tauK / np.linalg.det(restricted) * comp.density_ratio ** 2
                   * datum.phiE_tauE ** 2)


def trace_prediction(data, p: int) -> complex:
    """Leading-order trace: sum over components of p^(d/2) lambda^p (nu0 x volume).

    `data` holds FixedComponentDatum items or (FixedComponentDatum, nu0) pairs.
    """
    if p < 1:
        raise ValueError("p must be positive")
    total = 0j
    for item in data:
        if isinstance(item, tuple):
            comp, value = item
        else:
            comp, value = item, leading_density_component(item).value
        total += p ** (comp.d / 2) * comp.base.lam ** p * value * comp.volume
    return complex(total)
