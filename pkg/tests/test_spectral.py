"""Distorted Fourier theory: exact Bessel oracle, sphere operator, norms."""

import numpy as np
import pytest
from scipy.special import j1

from wmlab.errors import AmplitudeExtraction
from wmlab.geometry import make_sphere
from wmlab.ground_state import solve_ground_state
from wmlab.spectral import (build_operator, distorted_ft, distorted_ift,
                            free_operator, generalized_eigenfunction,
                            plancherel_error, resonance_function,
                            resonance_residual, spectral_density, bump_profile,
                            transference_diagnostic, weighted_norm)

XI = np.geomspace(1e-3, 120.0, 128)
BUMPS = [(4, 1.0), (5, 1.2), (8, 2.0), (10, 2.5), (12, 3.0)]


@pytest.fixture(scope="module")
def gs():
    return solve_ground_state(make_sphere())


@pytest.fixture(scope="module")
def op(gs):
    return build_operator(gs)


@pytest.fixture(scope="module")
def basis(op):
    return spectral_density(op, XI)


@pytest.fixture(scope="module")
def free_basis():
    return spectral_density(free_operator(), XI)


# -- operator ----------------------------------------------------------------

def test_sphere_potential_closed_form(op, gs):
    # 1 - f'(Q) = 8R^2/(1+R^2)^2 via cos(4 arctan R), so V = -8/(1+R^2)^2
    R = gs.grid.r
    m = gs.grid.window(1e-3, 1e3)
    ref = -8.0 / (1.0 + R**2) ** 2
    assert np.max(np.abs(op.V[m] - ref[m])) < 1e-8
    assert op.V_at(1.0) == pytest.approx(-2.0, abs=1e-9)
    assert abs(op.V_at(op.grid.r[2]) + 8.0) < 1e-4


def test_potential_decay_slope(op, gs):
    m = gs.grid.window(1e1, 1e3)
    slope = np.polyfit(np.log(gs.grid.r[m]), np.log(-op.V[m]), 1)[0]
    assert -4.2 < slope < -3.8


def test_resonance_residual(op):
    assert resonance_residual(op) < 1e-6


def test_conjugation_identity(op, gs):
    """L(sqrt(R) h) = -sqrt(R) (interior operator h) for test h; this is
    the change of function that produces the half-power operator."""
    grid = gs.grid
    R = grid.r
    h = np.exp(-((np.log(R / 3.0)) ** 2))         # smooth bump, decays
    lhs = op.apply_fd(np.sqrt(R) * h)
    h_ss = grid.d_s(h, 2, acc=6)
    h_s = grid.d_s(h, 1, acc=6)
    interior = (h_ss - gs.fprime_Q() * h) / R**2  # d^2 + d/R - f'(Q)/R^2
    m = grid.window(1e-1, 1e2)
    assert np.max(np.abs(lhs + np.sqrt(R) * interior)[m]) < 1e-8


# -- eigenfunctions ----------------------------------------------------------

def test_free_eigenfunctions_match_bessel(free_basis):
    # exact generalized eigenfunctions: (2/sqrt(xi)) sqrt(R) J1(sqrt(xi) R)
    r = free_basis.r_t
    for ix in (0, 64, 127):
        k = np.sqrt(XI[ix])
        ref = (2.0 / k) * np.sqrt(r) * j1(k * r)
        err = np.max(np.abs(free_basis.phi[:, ix] - ref)) / np.max(np.abs(ref))
        assert err < 1e-6


def test_free_density_is_xi_over_eight(free_basis):
    assert np.max(np.abs(free_basis.rho / (XI / 8.0) - 1.0)) < 5e-3


def test_free_plancherel_tight(free_basis):
    for b in BUMPS:
        assert plancherel_error(free_basis, bump_profile(*b)) < 1e-3


def test_eigen_residual_per_column(basis):
    assert np.all(basis.eig_residual < 1e-5 * (1.0 + basis.xi))


def test_rho_positive(basis):
    assert np.all(basis.rho > 0.0)


def test_wavelength_wkb(basis):
    # local wavelength approaches 2 pi / sqrt(xi) in the wave zone
    good = np.isfinite(basis.wavelength)
    ratio = basis.wavelength[good] * np.sqrt(basis.xi[good]) / (2 * np.pi)
    assert np.max(np.abs(ratio - 1.0)) < 0.01


def test_zero_energy_limit_matches_resonance(op, gs):
    """phi(., xi=0) is the unique regular solution, so it must match
    sqrt(R) R Q' after a one-point scale match."""
    phi = generalized_eigenfunction(op, 0.0, r_span=(1e-4, 10.0))
    res = resonance_function(op)
    m = gs.grid.window(1e-2, 1.0)
    scale = phi.values[m][0] / res.values[m][0]
    rel = np.abs(phi.values[m] - scale * res.values[m]) / np.abs(scale * res.values[m])
    assert np.max(rel) < 1e-5


def test_eigenfunction_continuity_in_xi(op, gs):
    lo = generalized_eigenfunction(op, 0.0, r_span=(1e-4, 1.0))
    hi = generalized_eigenfunction(op, 1e-4, r_span=(1e-4, 1.0))
    m = gs.grid.window(2e-4, 1.0)
    rel = np.abs(hi.values[m] - lo.values[m]) / np.abs(lo.values[m])
    assert np.max(rel) < 1e-3


def test_amplitude_extraction_guard(op):
    with pytest.raises(AmplitudeExtraction):
        spectral_density(op, np.array([1e-6, 1e-5]))


# -- transform pair ----------------------------------------------------------

def test_plancherel_on_bump_family(basis):
    errs = [plancherel_error(basis, bump_profile(*b)) for b in BUMPS]
    assert max(errs) < 1e-2


def test_calibration_idempotence(basis):
    from wmlab.spectral import _plancherel_constant
    c2 = _plancherel_constant(basis, bump_profile(8, 2.0)) * basis.c_norm
    assert abs(c2 - basis.c_norm) / basis.c_norm < 0.01


def test_zero_transforms_to_zero(basis):
    xh = distorted_ft(basis, np.zeros_like(basis.r_t))
    assert np.all(xh == 0.0)
    assert np.all(distorted_ift(basis, np.zeros_like(basis.xi)) == 0.0)


def test_round_trip_nonresonant_oracle():
    """ift(ft(h)) = h at quadrature accuracy whenever the potential has no
    zero-energy resonance; operator-range inputs h = L g are bandlimited
    from below (Fh = xi Fg) and from above (g smooth)."""
    from wmlab.grids import LogGrid
    from wmlab.spectral import LinearizedOperator
    g = LogGrid.make(1e-6, 3e4, 8192)
    for amp in (-3.0, 8.0):
        op2 = LinearizedOperator(grid=g, V=amp / (1.0 + g.r**2) ** 2)
        b = spectral_density(op2, np.geomspace(1e-3, 120.0, 128))
        bp = bump_profile(8, 2.0)
        r = b.r_t
        hv = -bp.d2(r) + 0.75 / r**2 * bp.val(r) + op2.V_at(r) * bp.val(r)
        rec = distorted_ift(b, distorted_ft(b, hv))
        assert np.linalg.norm(rec - hv) / np.linalg.norm(hv) < 1e-3


def test_round_trip_sphere_documented_limit(basis, op):
    """The sphere potential carries a zero-energy resonance whose
    spectral weight concentrates at xi -> 0 (rho ~ 1/(xi log^2 xi)); a
    finite frequency band reproduces norms (Plancherel above) but cannot
    invert the resonance block pointwise, and the deficit is resolution
    independent.  Pin the measured behaviour so a regression (or a fix)
    is visible."""
    bp = bump_profile(8, 2.0)
    r = basis.r_t
    hv = -bp.d2(r) + 0.75 / r**2 * bp.val(r) + op.V_at(r) * bp.val(r)
    rec = distorted_ift(basis, distorted_ft(basis, hv))
    rel = np.linalg.norm(rec - hv) / np.linalg.norm(hv)
    assert rel < 0.35
    # the recovered field stays parallel to the input: the defect acts
    # like a near-constant factor on band content, not like noise
    corr = np.dot(rec, hv) / np.linalg.norm(rec) / np.linalg.norm(hv)
    assert corr > 0.999


def test_mode_concentration(basis):
    """Transforming a windowed eigenfunction concentrates its weighted
    mass near the seed frequency."""
    ix = 96
    xi0 = basis.xi[ix]
    r = basis.r_t
    window = np.exp(-((r - 25.0) ** 2) / (2 * 8.0**2))
    h = basis.phi[:, ix] * window
    xh = distorted_ft(basis, h)
    w = basis.xi_weights()
    mass = xh**2 * basis.rho * w
    band = (basis.xi > xi0 / 2.5) & (basis.xi < xi0 * 2.5)
    assert np.sum(mass[band]) / np.sum(mass) > 0.9


def test_weighted_norm_monotone_in_alpha(basis):
    rng = np.random.default_rng(7)
    x = rng.normal(size=len(basis.xi)) * np.exp(-basis.xi / 10.0)
    n0 = weighted_norm(basis, x, 0.0)
    n1 = weighted_norm(basis, x, 0.5)
    n2 = weighted_norm(basis, x, 1.0)
    assert 0.0 < n0 <= n1 <= n2
    assert weighted_norm(basis, np.zeros_like(x), 0.3) == 0.0


# -- transference ------------------------------------------------------------

def test_free_transference_diagonal(free_basis):
    """For the exactly solvable operator rho ~ xi, so the diagonal is
    3/2 + 1 = 5/2 and the smoothing remainder nearly vanishes."""
    rep = transference_diagnostic(free_basis, bump_profile(6, 1.5))
    mid = np.abs(free_basis.xi - 1.0).argmin()
    assert rep["diag"][mid] == pytest.approx(2.5, abs=0.01)
    assert rep["reduction_factor"] > 20.0


def test_sphere_diagonal_subtraction_reduces(basis):
    wins = 0
    for b in BUMPS:
        rep = transference_diagnostic(basis, bump_profile(*b))
        if rep["reduction_factor"] >= 2.0:
            wins += 1
    assert wins >= 4


def test_smoothing_ratio_finite(basis):
    rep = transference_diagnostic(basis, bump_profile(8, 2.0))
    assert 0.0 < rep["smoothing_ratio_a0"] < 10.0
    assert 0.0 < rep["smoothing_ratio_a0.5"] < 10.0
