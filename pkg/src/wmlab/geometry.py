"""Targets of revolution and the induced wave-map nonlinearity.

A surface of revolution with metric d rho^2 + g(rho)^2 d theta^2 enters the
co-rotational wave map equation only through the scalar nonlinearity

    f(u) = g(u) g'(u),

so a target is specified by the warping function g and its first three
derivatives (closed-form callables; the correction solvers need third-order
accuracy that tabulated data cannot deliver).
"""

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import InvalidProfile

__all__ = [
    "SurfaceProfile",
    "ValidationReport",
    "make_sphere",
    "make_deformed_sphere",
    "make_flat",
    "profile_from_key",
    "validate_profile",
]


@dataclass(frozen=True)
class SurfaceProfile:
    """Immutable description of the target geometry.

    g, g1, g2, g3 are vectorised callables of the arc parameter rho.
    zero_D is the smallest D > 0 with g(D) = 0 (the antipode), turning the
    smallest rho* > 0 with g'(rho*) = 0 (the equator).  A profile with no
    antipode (e.g. the flat benchmark target) stores zero_D = inf.
    """

    name: str
    g: Callable = field(repr=False)
    g1: Callable = field(repr=False)
    g2: Callable = field(repr=False)
    g3: Callable = field(repr=False)
    zero_D: float = np.pi
    turning: float = np.pi / 2

    def f(self, u):
        """Wave-map nonlinearity f(u) = g(u) g'(u)."""
        return self.g(u) * self.g1(u)

    def f1(self, u):
        """f'(u) = g'(u)^2 + g(u) g''(u)."""
        return self.g1(u) ** 2 + self.g(u) * self.g2(u)

    def f2(self, u):
        """f''(u) = 3 g'(u) g''(u) + g(u) g'''(u)."""
        return 3.0 * self.g1(u) * self.g2(u) + self.g(u) * self.g3(u)


def make_sphere() -> SurfaceProfile:
    """Round sphere: g = sin, f(u) = sin(2u)/2, antipode at pi."""
    return SurfaceProfile(
        name="sphere",
        g=np.sin,
        g1=np.cos,
        g2=lambda u: -np.sin(u),
        g3=lambda u: -np.cos(u),
        zero_D=np.pi,
        turning=np.pi / 2,
    )


def make_deformed_sphere(c: float) -> SurfaceProfile:
    """Deformed sphere g(rho) = sin(rho) (1 + c sin^2 rho), |c| <= 0.2.

    The deformation keeps every structural property the construction
    needs: g odd, g(0) = 0, g'(0) = 1, zeros exactly at 0 and pi, and
    (because 1 + 3c sin^2 rho > 0 for |c| <= 0.2) the equator stays at
    pi/2.  Only the curvature changes.
    """
    c = float(c)
    if abs(c) > 0.2:
        raise InvalidProfile(f"deformation c={c} outside |c| <= 0.2")
    rho = np.linspace(1e-3, np.pi - 1e-3, 2001)
    if np.any(np.sin(rho) * (1.0 + c * np.sin(rho) ** 2) <= 0.0):
        raise InvalidProfile(f"g nonpositive on (0, pi) for c={c}")

    def g(u):
        return np.sin(u) * (1.0 + c * np.sin(u) ** 2)

    def g1(u):
        return np.cos(u) * (1.0 + 3.0 * c * np.sin(u) ** 2)

    def g2(u):
        s, co = np.sin(u), np.cos(u)
        return -s + 6.0 * c * s * co**2 - 3.0 * c * s**3

    def g3(u):
        s, co = np.sin(u), np.cos(u)
        return -co + 6.0 * c * co**3 - 21.0 * c * s**2 * co

    return SurfaceProfile(
        name=f"deformed:{c:g}", g=g, g1=g1, g2=g2, g3=g3,
        zero_D=np.pi, turning=np.pi / 2,
    )


def make_flat() -> SurfaceProfile:
    """Flat cone g(rho) = rho, f(u) = u: the linear benchmark target.

    Not an admissible blow-up target (g never returns to zero);
    validate_profile reports the failure.  Used by the evolver tests as
    the exactly-conservative m = 1 linear wave equation.
    """
    one = lambda u: np.ones_like(np.asarray(u, dtype=float))
    zero = lambda u: np.zeros_like(np.asarray(u, dtype=float))
    return SurfaceProfile(
        name="flat", g=lambda u: np.asarray(u, dtype=float) * 1.0,
        g1=one, g2=zero, g3=zero,
        zero_D=np.inf, turning=np.inf,
    )


def profile_from_key(key: str) -> SurfaceProfile:
    """Config-key lookup: "sphere", "deformed:<c>", or "flat"."""
    if key == "sphere":
        return make_sphere()
    if key == "flat":
        return make_flat()
    if key.startswith("deformed:"):
        return make_deformed_sphere(float(key.split(":", 1)[1]))
    raise InvalidProfile(f"unknown target key {key!r}")


@dataclass
class CheckResult:
    name: str
    passed: bool
    residual: float


@dataclass
class ValidationReport:
    profile_name: str
    checks: list

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)

    def __str__(self):
        lines = [f"profile {self.profile_name}:"]
        for c in self.checks:
            lines.append(
                f"  [{'pass' if c.passed else 'FAIL'}] {c.name}"
                f" (residual {c.residual:.3e})"
            )
        return "\n".join(lines)


def validate_profile(p: SurfaceProfile, rng_seed: int = 0) -> ValidationReport:
    """Report-only check of the computable admissibility conditions.

    These are necessary conditions, not a sufficiency proof: pole
    normalisation g(0) = 0, g'(0) = 1, oddness, positivity up to the
    antipode, a genuine zero at the antipode, and consistency of the
    supplied derivatives with finite differences.
    """
    checks = []

    r0 = abs(float(p.g(0.0)))
    checks.append(CheckResult("g(0) = 0", r0 < 1e-12, r0))
    r1 = abs(float(p.g1(0.0)) - 1.0)
    checks.append(CheckResult("g'(0) = 1", r1 < 1e-12, r1))

    rho_test = np.linspace(0.1, min(p.zero_D, 4.0) * 0.9, 17)
    odd = float(np.max(np.abs(p.g(rho_test) + p.g(-rho_test))))
    checks.append(CheckResult("g odd", odd < 1e-12, odd))

    if np.isfinite(p.zero_D):
        interior = np.linspace(1e-3, p.zero_D - 1e-3, 1001)
        pos = float(np.min(p.g(interior)))
        checks.append(CheckResult("g > 0 on (0, D)", pos > 0.0, -min(pos, 0.0)))
        rz = abs(float(p.g(p.zero_D)))
        checks.append(CheckResult("g(D) = 0", rz < 1e-10, rz))
        rf0 = abs(float(p.f(0.0)))
        rfD = abs(float(p.f(p.zero_D)))
        checks.append(CheckResult("f(0) = 0", rf0 < 1e-10, rf0))
        checks.append(CheckResult("f(D) = 0", rfD < 1e-10, rfD))
    else:
        # No antipode: the orbit of the ground-state reduction cannot close.
        checks.append(CheckResult("g(D) = 0", False, np.inf))

    # Derivative consistency against centered differences at random points.
    rng = np.random.default_rng(rng_seed)
    hi = min(p.zero_D, 4.0) - 0.2
    u = rng.uniform(0.1, hi, size=100)
    h = 1e-5
    h2 = 1e-4   # wider step for the second difference (roundoff ~ eps/h^2)
    fd_g1 = (p.g(u + h) - p.g(u - h)) / (2 * h)
    fd_g2 = (p.g(u + h2) - 2 * p.g(u) + p.g(u - h2)) / h2**2
    fd_f1 = (p.f(u + h) - p.f(u - h)) / (2 * h)
    scale = 1.0 + np.abs(p.g1(u))
    e_g1 = float(np.max(np.abs(fd_g1 - p.g1(u)) / scale))
    e_g2 = float(np.max(np.abs(fd_g2 - p.g2(u)) / (1.0 + np.abs(p.g2(u)))))
    e_f1 = float(np.max(np.abs(fd_f1 - p.f1(u)) / (1.0 + np.abs(p.f1(u)))))
    checks.append(CheckResult("g1 matches FD", e_g1 < 1e-6, e_g1))
    checks.append(CheckResult("g2 matches FD", e_g2 < 1e-6, e_g2))
    checks.append(CheckResult("f' matches FD", e_f1 < 1e-6, e_f1))

    return ValidationReport(profile_name=p.name, checks=checks)
