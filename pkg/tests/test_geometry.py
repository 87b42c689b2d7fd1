import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wmlab.errors import InvalidProfile
from wmlab.geometry import (make_deformed_sphere, make_flat, make_sphere,
                            profile_from_key, validate_profile)


def test_sphere_pole_conditions():
    p = make_sphere()
    assert abs(p.g(0.0)) < 1e-12
    assert abs(p.g1(0.0) - 1.0) < 1e-12


def test_sphere_equator_zero_of_f():
    p = make_sphere()
    assert abs(p.f(np.pi / 2)) < 1e-12
    assert p.zero_D == pytest.approx(np.pi)
    assert p.turning == pytest.approx(np.pi / 2)


def test_sphere_fprime_is_cos2u():
    # f = sin u cos u, so f' = cos 2u; confirm against finite differences
    p = make_sphere()
    u = np.linspace(0.0, np.pi, 41)
    assert np.allclose(p.f1(u), np.cos(2 * u), atol=1e-12)
    hstep = 1e-6
    fd = (p.f(u + hstep) - p.f(u - hstep)) / (2 * hstep)
    assert np.max(np.abs(fd - p.f1(u))) < 1e-8
    assert p.f1(0.0) == pytest.approx(1.0)
    assert p.f1(np.pi / 2) == pytest.approx(-1.0)


def test_deformed_matches_sphere_at_c0():
    p0 = make_sphere()
    p = make_deformed_sphere(0.0)
    u = np.linspace(-1.0, np.pi, 301)
    assert np.allclose(p.g(u), p0.g(u), atol=1e-15)
    assert np.allclose(p.g2(u), p0.g2(u), atol=1e-15)


def test_deformed_equator_value():
    p = make_deformed_sphere(0.1)
    assert p.g(np.pi / 2) == pytest.approx(1.1, abs=1e-14)
    assert abs(p.g(np.pi)) < 1e-12


def test_deformed_rejects_large_c():
    with pytest.raises(InvalidProfile):
        make_deformed_sphere(0.35)


def test_validate_profile_sphere_and_deformed():
    assert validate_profile(make_sphere()).ok
    assert validate_profile(make_deformed_sphere(0.15)).ok


def test_validate_profile_flat_fails_antipode():
    rep = validate_profile(make_flat())
    assert not rep.ok
    failed = [c.name for c in rep.checks if not c.passed]
    assert "g(D) = 0" in failed


def test_profile_from_key():
    assert profile_from_key("sphere").name == "sphere"
    assert profile_from_key("deformed:0.1").g(np.pi / 2) == pytest.approx(1.1)
    with pytest.raises(InvalidProfile):
        profile_from_key("torus")


@settings(max_examples=30, deadline=None)
@given(c=st.floats(-0.2, 0.2), rho=st.floats(0.05, 3.0))
def test_deformed_family_invariants(c, rho):
    p = make_deformed_sphere(c)
    # oddness and endpoint zeros survive any admissible deformation
    assert abs(p.g(rho) + p.g(-rho)) < 1e-12
    assert abs(p.f(0.0)) < 1e-10 and abs(p.f(np.pi)) < 1e-10
    # derivative consistency at the sampled point
    hstep = 1e-5
    fd = (p.g(rho + hstep) - p.g(rho - hstep)) / (2 * hstep)
    assert abs(fd - p.g1(rho)) < 1e-6 * (1 + abs(p.g1(rho)))


@settings(max_examples=20, deadline=None)
@given(c=st.floats(-0.2, 0.2))
def test_deformed_positive_up_to_antipode(c):
    p = make_deformed_sphere(c)
    rho = np.linspace(1e-3, np.pi - 1e-3, 500)
    assert np.all(p.g(rho) > 0.0)
