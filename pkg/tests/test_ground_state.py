import numpy as np
import pytest

from wmlab.errors import NonConvergence
from wmlab.geometry import make_deformed_sphere, make_flat, make_sphere
from wmlab.ground_state import GridSpec, solve_ground_state, zero_mode


@pytest.fixture(scope="module")
def gs_sphere():
    return solve_ground_state(make_sphere())


def test_sphere_matches_two_arctan(gs_sphere):
    # RQ' = sin Q is solved by 2 arctan R: sin(2 arctan R) = 2R/(1+R^2)
    gs = gs_sphere
    m = gs.grid.window(1e-3, 1e3)
    err = np.max(np.abs(gs.Q[m] - 2.0 * np.arctan(gs.grid.r[m])))
    assert err < 1e-8


def test_normalization_at_equator(gs_sphere):
    assert gs_sphere.q_at(1.0) == pytest.approx(np.pi / 2, abs=1e-10)


def test_static_residual_second_order_route(gs_sphere):
    m = gs_sphere.grid.window(1e-3, 1e3)
    assert np.max(gs_sphere.static_residual()[m]) < 1e-8


def test_deformed_static_residual():
    gs = solve_ground_state(make_deformed_sphere(0.1))
    m = gs.grid.window(1e-3, 1e3)
    assert np.max(gs.static_residual()[m]) < 1e-8
    assert np.all(np.diff(gs.Q) > 0)


def test_endpoints(gs_sphere):
    gs = gs_sphere
    assert gs.Q[0] < 1e-4
    assert np.pi - gs.Q[-1] < 1e-4


def test_zero_mode_closed_form(gs_sphere):
    # phi0 = R Q' = 2R/(1+R^2) on the sphere
    phi0 = zero_mode(gs_sphere)
    R = gs_sphere.grid.r
    m = gs_sphere.grid.window(1e-3, 1e3)
    assert np.max(np.abs(phi0.values[m] - 2 * R[m] / (1 + R[m] ** 2))) < 1e-9
    assert phi0(1.0) == pytest.approx(1.0, abs=1e-9)


def test_zero_mode_annihilated(gs_sphere):
    gs = gs_sphere
    phi0 = zero_mode(gs)
    grid = gs.grid
    lphi = (grid.d_s(phi0.values, 2, acc=6)
            - gs.fprime_Q() * phi0.values) / grid.r**2
    m = grid.window(1e-2, 1e2)
    assert np.max(np.abs(lphi[m])) < 1e-6


def test_zero_mode_vanishes_at_ends(gs_sphere):
    phi0 = zero_mode(gs_sphere)
    assert abs(phi0.values[0]) < 1e-4
    assert abs(phi0.values[-1]) < 1e-3


def test_scaling_covariance():
    # autonomy in log R: moving the gauge point to mu rescales Q exactly
    gs1 = solve_ground_state(make_sphere())
    gs2 = solve_ground_state(make_sphere(),
                             GridSpec(r_min=1e-6, r_max=1e5, n=8192),
                             norm_point=2.0)
    R = np.geomspace(1e-3, 1e3, 200)
    assert np.max(np.abs(gs2.q_at(R) - gs1.q_at(R / 2.0))) < 1e-8


def test_grid_refinement_improves_residual():
    # coarse enough that the differencing error dominates roundoff
    coarse = solve_ground_state(make_sphere(), GridSpec(n=512))
    fine = solve_ground_state(make_sphere(), GridSpec(n=1024))
    mc = coarse.grid.window(1e-2, 1e2)
    mf = fine.grid.window(1e-2, 1e2)
    rc = np.max(coarse.static_residual()[mc])
    rf = np.max(fine.static_residual()[mf])
    assert rc / rf > 4.0


def test_flat_profile_does_not_converge():
    with pytest.raises(NonConvergence):
        solve_ground_state(make_flat())
