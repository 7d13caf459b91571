"""Parametrized families t -> J_t of compatible structures on [0, 1]."""

from __future__ import annotations

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import DimensionMismatch
from .symplectic import (
    CompatibleStructure,
    siegel_from_structure,
    standard_J,
    validate_compatible,
    _interleave,
)

FD_STEP = 1e-5


class StructurePath:
    """Base class; subclasses provide J(t) and dJ(t) as real matrices."""

    n: int
    kind: str = "abstract"

    def J(self, t: float) -> np.ndarray:
        raise NotImplementedError

    def dJ(self, t: float) -> np.ndarray:
        h = FD_STEP
        return (self.J(t + h) - self.J(t - h)) / (2 * h)

    def at(self, t: float) -> CompatibleStructure:
        return validate_compatible(self.J(t))

    def describe(self) -> dict:
        return {"kind": self.kind}


class ConstantPath(StructurePath):
    kind = "constant"

    def __init__(self, J: CompatibleStructure):
        self._J = J.J.copy()
        self.n = J.n

    def J(self, t):
        return self._J

    def dJ(self, t):
        return np.zeros_like(self._J)


class DiagonalScaling(StructurePath):
    """Metric diag(e^(-2st), e^(2st)) in every (x_j, y_j) plane."""

    kind = "scaling"

    def __init__(self, s: float, n: int = 1):
        self.s = float(s)
        self.n = n
        self._J0 = standard_J(n)

    def _diag(self, t):
        e = np.exp(2 * self.s * t)
        return np.tile([1.0 / e, e], self.n)

    def J(self, t):
        return self._J0 @ np.diag(self._diag(t))

    def dJ(self, t):
        d = self._diag(t) * np.tile([-2 * self.s, 2 * self.s], self.n)
        return self._J0 @ np.diag(d)

    def describe(self):
        return {"kind": self.kind, "s": self.s, "n": self.n}


def _siegel_blocks(X, Y, dX, dY):
    Yi = np.linalg.inv(Y)
    dYi = -Yi @ dY @ Yi
    XYi = X @ Yi
    dXYi = dX @ Yi + X @ dYi
    J = np.block([[-XYi, -(XYi @ X + Y)], [Yi, Yi @ X]])
    dJ = np.block([
        [-dXYi, -(dXYi @ X + XYi @ dX + dY)],
        [dYi, dYi @ X + Yi @ dX],
    ])
    return J, dJ


class SiegelSegment(StructurePath):
    """Straight segment T(t) = (1 - t) T0 + t T1 in the Siegel upper half space."""

    kind = "siegel"

    def __init__(self, T0, T1):
        T0 = np.atleast_2d(np.asarray(T0, dtype=complex))
        T1 = np.atleast_2d(np.asarray(T1, dtype=complex))
        if T0.shape != T1.shape:
            raise DimensionMismatch("endpoints of different size")
        for T in (T0, T1):
            if np.linalg.eigvalsh(0.5 * (T.imag + T.imag.T)).min() <= 0:
                raise ValueError("imaginary part must be positive definite")
        self.T0, self.T1 = T0, T1
        self.n = T0.shape[0]
        self._P = _interleave(self.n)

    def T(self, t):
        return self.T0 + t * (self.T1 - self.T0)

    def _both(self, t):
        T = self.T(t)
        D = self.T1 - self.T0
        J, dJ = _siegel_blocks(T.real, T.imag, D.real, D.imag)
        P = self._P
        return P @ J @ P.T, P @ dJ @ P.T

    def J(self, t):
        return self._both(t)[0]

    def dJ(self, t):
        return self._both(t)[1]

    def describe(self):
        return {"kind": self.kind, "T0": _cplx_list(self.T0), "T1": _cplx_list(self.T1)}


class UpperHalfPlaneSegment(SiegelSegment):
    kind = "segment"

    def __init__(self, tau0: complex, tau1: complex):
        super().__init__([[tau0]], [[tau1]])
        self.tau0, self.tau1 = complex(tau0), complex(tau1)

    def tau(self, t: float) -> complex:
        return self.tau0 + t * (self.tau1 - self.tau0)

    def describe(self):
        return {"kind": self.kind, "tau0": [self.tau0.real, self.tau0.imag],
                "tau1": [self.tau1.real, self.tau1.imag]}


class Sampled(StructurePath):
    """Smooth interpolation of sampled structures.

    Samples are mapped to Siegel matrices T = X + iY; X is splined entrywise
    and Y through its Cholesky factor with log-diagonal, so every interpolated
    point is again a compatible structure.  The derivative is a centered
    difference in t.
    """

    kind = "sampled"

    def __init__(self, samples):
        ts = np.array([float(t) for t, _ in samples])
        if len(ts) < 2 or np.any(np.diff(ts) <= 0):
            raise ValueError("sample times must be increasing")
        Js = [J if isinstance(J, CompatibleStructure) else validate_compatible(J) for _, J in samples]
        self.n = Js[0].n
        if any(J.n != self.n for J in Js):
            raise DimensionMismatch("samples of different dimensions")
        self.ts = ts
        n = self.n
        iu = np.triu_indices(n)
        il = np.tril_indices(n)
        rows = []
        for J in Js:
            T = siegel_from_structure(J)
            L = np.linalg.cholesky(T.imag)
            Lf = L.copy()
            Lf[np.diag_indices(n)] = np.log(np.diag(L))
            rows.append(np.concatenate([T.real[iu], Lf[il]]))
        self._spline = CubicSpline(ts, np.array(rows), axis=0)
        self._iu, self._il = iu, il
        self._P = _interleave(n)

    def T(self, t):
        n = self.n
        v = self._spline(t)
        k = len(self._iu[0])
        X = np.zeros((n, n))
        X[self._iu] = v[:k]
        X = X + np.triu(X, 1).T
        L = np.zeros((n, n))
        L[self._il] = v[k:]
        L[np.diag_indices(n)] = np.exp(np.diag(L))
        return X + 1j * (L @ L.T)

    def J(self, t):
        T = self.T(t)
        J, _ = _siegel_blocks(T.real, T.imag, np.zeros_like(T.real), np.zeros_like(T.real))
        return self._P @ J @ self._P.T

    def describe(self):
        return {"kind": self.kind, "samples": len(self.ts)}


class Reparametrized(StructurePath):
    """The path u -> base(f(u)) with f an increasing map of [0, 1] onto itself."""

    kind = "reparametrized"

    def __init__(self, base: StructurePath, f, df):
        self.base, self.f, self.df = base, f, df
        self.n = base.n

    def J(self, t):
        return self.base.J(self.f(t))

    def dJ(self, t):
        return self.df(t) * self.base.dJ(self.f(t))


def _cplx_list(T):
    return [[[z.real, z.imag] for z in row] for row in np.asarray(T)]


def load_sampled(path: str) -> Sampled:
    """Read a path file: one sample per line, 't j11 j12 ... ' row-major."""
    samples = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            vals = [float(v) for v in line.replace(",", " ").split()]
            m = int(round(np.sqrt(len(vals) - 1)))
            if m * m != len(vals) - 1:
                raise ValueError(f"bad path row with {len(vals)} numbers")
            samples.append((vals[0], np.array(vals[1:]).reshape(m, m)))
    return Sampled(samples)
