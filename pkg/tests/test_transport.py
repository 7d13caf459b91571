import numpy as np
import pytest

from btquant.errors import ConvergenceFailure
from btquant.gaussian import QuadratureSpec
from btquant.paths import ConstantPath, DiagonalScaling, Reparametrized, UpperHalfPlaneSegment
from btquant.symplectic import structure_from_tau
from btquant.transport import (
    PathDiscretization,
    _frames,
    _log_mu,
    barmut_check,
    canonical_transport,
    g0,
    g0_ode_crosscheck,
    mu,
    mut_identity_residual,
    ptloc_residuals,
    transport_factors,
)

from regression import regression_paths, sampled_path

CONST = ConstantPath(structure_from_tau(0.4 + 0.9j))
SQRT_COSH1 = np.sqrt(np.cosh(1.0))


def test_discretization_validation():
    with pytest.raises(ValueError):
        PathDiscretization(steps=4)
    with pytest.raises(ValueError):
        PathDiscretization(scheme="Euler")


@pytest.mark.parametrize("t", [0.0, 0.3, 1.0])
def test_constant_path_factors(t):
    tf = transport_factors(CONST, t)
    assert tf.mu == 1 and tf.tauK == pytest.approx(1) and tf.detPiBar == pytest.approx(1)
    assert g0(CONST, t) == 1


@pytest.mark.parametrize("s,t", [(1.0, 1.0), (0.5, 0.8), (-0.7, 0.4)])
def test_scaling_closed_form(s, t):
    assert abs(mu(DiagonalScaling(s), t) - np.sqrt(np.cosh(s * t))) < 1e-10


def test_scaling_headline_value():
    assert abs(mu(DiagonalScaling(1.0), 1.0) - SQRT_COSH1) < 1e-8
    assert round(SQRT_COSH1, 6) == 1.242208


def test_scaling_canonical_transport():
    tauK, dpb = canonical_transport(DiagonalScaling(1.0), 1.0)
    assert abs(dpb - 1 / np.cosh(1.0)) < 1e-10
    assert abs(tauK - 1) < 1e-9


def test_segment_self_convergence():
    p = UpperHalfPlaneSegment(0.2 + 1j, -0.5 + 2.5j)
    a = mu(p, 1.0, PathDiscretization(steps=256, richardson=False))
    b = mu(p, 1.0, PathDiscretization(steps=512, richardson=False))
    assert abs(a - b) / abs(b) < 1e-8


def test_mut_constant_path():
    assert mut_identity_residual(CONST, 0.5) <= 1e-8


def test_mut_scaling():
    assert mut_identity_residual(DiagonalScaling(1.0), 0.5) <= 1e-5
    assert mut_identity_residual(DiagonalScaling(1.0), 0.5, variant="tilmut") <= 1e-5


def test_barmut_examples():
    assert barmut_check(CONST, 0.7) == 0.0
    assert barmut_check(DiagonalScaling(1.0), 1.0) <= 1e-9
    assert barmut_check(UpperHalfPlaneSegment(1j, 1 + 1j), 1.0) <= 1e-7


def test_g0_ode():
    assert g0_ode_crosscheck(CONST) == 0
    assert g0_ode_crosscheck(DiagonalScaling(1.0)) <= 1e-8
    assert g0_ode_crosscheck(sampled_path()) <= 1e-6


@pytest.mark.parametrize("name", sorted(regression_paths()))
def test_identities_on_regression_paths(name):
    path = regression_paths()[name]
    for t in (0.5, 1.0):
        tf = transport_factors(path, t)
        assert tf.tau_identity_residual <= 1e-7
        assert tf.g0_identity_residual <= 1e-7
        assert barmut_check(path, t) <= 1e-7


@pytest.mark.parametrize("name", ["segment", "hyperbolic", "siegel_n2"])
def test_ptloc_on_regression_paths(name):
    path = regression_paths()[name]
    grid = QuadratureSpec(N=24) if path.n == 2 else None
    mut, til = ptloc_residuals(path, 0.5, grid=grid, pairs=4)
    assert mut <= 1e-5 and til <= 1e-5


def test_anchoring_under_reparametrization():
    base = UpperHalfPlaneSegment(1j, 1.5 + 0.7j)
    rep = Reparametrized(base, lambda u: u * u, lambda u: 2 * u)
    for t in (0.5, 1.0):
        assert abs(mu(rep, t) - mu(base, t * t)) < 1e-7


def test_rk4_order():
    """Halving the step cuts the error by about 16 for both integrators."""
    p = UpperHalfPlaneSegment(1j, 2 + 3j)
    J_start = p.at(0.0)
    ref = _log_mu(p, 1.0, 1024, J_start)
    e = [abs(_log_mu(p, 1.0, s, J_start) - ref) for s in (8, 16)]
    assert 12 < e[0] / e[1] < 20
    fref = _frames(p, 1.0, 1024)[0]
    f = [abs(_frames(p, 1.0, s)[0] - fref) for s in (8, 16)]
    assert 12 < f[0] / f[1] < 20


def test_convergence_failure_is_reported():
    p = UpperHalfPlaneSegment(1j, 40 + 1j)
    with pytest.raises(ConvergenceFailure):
        mu(p, 1.0, PathDiscretization(steps=16, tol=1e-300))
