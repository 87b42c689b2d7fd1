"""Separable cone fields and exact chain-rule differentiation.

Every piece of the approximate solution lives inside the backward light
cone and factors as

    c * (t lam)^(-m) * t^(-p) * Phi(R) * Psi(a),

with lam(t) = t^(-1-nu), R = lam r, a = r/t (so t lam = t^(-nu) = R/a).
On such terms the scaled derivatives act separably and exactly:

    t d_t : (m nu - p) - (1+nu) R d_R - a d_a
    r d_r : R d_R + a d_a

and the full wave operator contracts to

    t^2 (-d_t^2 + d_r^2 + (1/r) d_r) F = -((t d_t)^2 - t d_t) F
                                          + (r d_r)^2 F / a^2 .

Sums of such terms are closed under these operations, which is how all
time derivatives of ansatz pieces are taken analytically; numerical
t-differentiation of nearly singular profiles is reserved for the
independent cross-checks.
"""

from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import LightConeViolation

__all__ = [
    "Profile1D", "ell_profile", "ell_power", "kappa_profile", "pmul",
    "x_d1", "Term", "SeparableField", "WaveOperatorEvaluator", "cone_coords",
]


class Profile1D:
    """Scalar function of one variable with first and second derivatives.

    d2 may be None for derived profiles whose second derivative is never
    needed (the operator algebra nests at most two first-order actions).
    """

    def __init__(self, val: Callable, d1: Callable, d2: Optional[Callable]):
        self.val = val
        self.d1 = d1
        self.d2 = d2

    @classmethod
    def from_spline(cls, x, y):
        sp = CubicSpline(np.asarray(x, float), np.asarray(y, float))
        return cls(sp, sp.derivative(1), sp.derivative(2))

    @classmethod
    def from_samples_with_deriv(cls, x, y, y1, y2_fn=None):
        """Spline the values and the sampled first derivative separately;
        the second derivative is an explicit callable when supplied
        (e.g. from an ODE right-hand side), else the y1-spline slope."""
        x = np.asarray(x, float)
        spv = CubicSpline(x, np.asarray(y, float))
        spd = CubicSpline(x, np.asarray(y1, float))
        d2 = y2_fn if y2_fn is not None else spd.derivative(1)
        return cls(spv, spd, d2)


def pmul(p: Profile1D, q: Profile1D) -> Profile1D:
    d2 = None
    if p.d2 is not None and q.d2 is not None:
        d2 = lambda x: p.d2(x) * q.val(x) + 2 * p.d1(x) * q.d1(x) + p.val(x) * q.d2(x)
    return Profile1D(
        lambda x: p.val(x) * q.val(x),
        lambda x: p.d1(x) * q.val(x) + p.val(x) * q.d1(x),
        d2,
    )


def x_d1(p: Profile1D) -> Profile1D:
    """x * p'(x); its own slope needs p'', its curvature is never used."""
    d1 = None
    if p.d2 is not None:
        d1 = lambda x: p.d1(x) + x * p.d2(x)
    return Profile1D(lambda x: x * p.d1(x), d1, None)


def ell_profile() -> Profile1D:
    """ell(R) = (1/2) log(1 + R^2), the regularised log R."""
    return Profile1D(
        lambda R: 0.5 * np.log1p(R**2),
        lambda R: R / (1.0 + R**2),
        lambda R: (1.0 - R**2) / (1.0 + R**2) ** 2,
    )


def ell_power(j: int) -> Optional[Profile1D]:
    """ell(R)^j with exact derivatives; None means the constant 1."""
    if j == 0:
        return None
    ell = ell_profile()
    if j == 1:
        return ell
    def val(R):
        return ell.val(R) ** j
    def d1(R):
        return j * ell.val(R) ** (j - 1) * ell.d1(R)
    def d2(R):
        e, e1, e2 = ell.val(R), ell.d1(R), ell.d2(R)
        return j * (j - 1) * e ** (j - 2) * e1**2 + j * e ** (j - 1) * e2
    return Profile1D(val, d1, d2)


def kappa_profile() -> Profile1D:
    """kappa(R) = R (1+R^2)^(-1/2); fixes the vanishing order at the axis."""
    return Profile1D(
        lambda R: R / np.sqrt(1.0 + R**2),
        lambda R: (1.0 + R**2) ** -1.5,
        lambda R: -3.0 * R * (1.0 + R**2) ** -2.5,
    )


@dataclass(frozen=True)
class Term:
    coef: float
    m: float          # power in (t lam)^(-m)
    p: float = 0.0    # power in t^(-p)
    fR: Optional[Profile1D] = None   # None = constant 1
    fa: Optional[Profile1D] = None


def _ev(prof, x):
    return 1.0 if prof is None else prof.val(x)


def cone_coords(t, r, nu):
    """(R, a, tlam) for points (t, r); raises outside the light cone."""
    t = np.asarray(t, float)
    r = np.asarray(r, float)
    if np.any(t <= 0):
        raise LightConeViolation("t must be positive")
    a = r / t
    if np.any(a > 1.0 + 1e-12):
        raise LightConeViolation("evaluation outside the light cone r <= t")
    tlam = t ** (-nu)
    return r * t ** (-1.0 - nu), a, tlam


class SeparableField:
    """Finite sum of separable cone terms, closed under t d_t and r d_r."""

    def __init__(self, nu: float, terms):
        self.nu = float(nu)
        self.terms = [tm for tm in terms if tm.coef != 0.0]

    # -- evaluation ---------------------------------------------------------
    def eval_Ra(self, R, a):
        R = np.asarray(R, float)
        a = np.asarray(a, float)
        with np.errstate(divide="ignore"):
            tlam = np.where(a > 0, R / np.where(a > 0, a, 1.0), np.inf)
        out = 0.0
        for tm in self.terms:
            pw = tm.m + tm.p / self.nu   # t^(-p) = (t lam)^(p/nu)
            if pw == 0.0:
                fac = np.ones_like(tlam)
            else:
                fac = np.where(np.isinf(tlam), 0.0 if pw > 0 else np.inf,
                               tlam ** (-pw))
            out = out + tm.coef * fac * _ev(tm.fR, R) * _ev(tm.fa, a)
        return out

    def eval_tr(self, t, r):
        R, a, _ = cone_coords(t, r, self.nu)
        return self.eval_Ra(R, a)

    # -- operator algebra ---------------------------------------------------
    def Dt(self):
        """t d_t."""
        nu = self.nu
        new = []
        for tm in self.terms:
            c0 = tm.coef * (tm.m * nu - tm.p)
            if c0 != 0.0:
                new.append(replace(tm, coef=c0))
            if tm.fR is not None:
                new.append(replace(tm, coef=-tm.coef * (1.0 + nu), fR=x_d1(tm.fR)))
            if tm.fa is not None:
                new.append(replace(tm, coef=-tm.coef, fa=x_d1(tm.fa)))
        return SeparableField(nu, new)

    def Dr(self):
        """r d_r."""
        new = []
        for tm in self.terms:
            if tm.fR is not None:
                new.append(replace(tm, fR=x_d1(tm.fR)))
            if tm.fa is not None:
                new.append(replace(tm, fa=x_d1(tm.fa)))
        return SeparableField(self.nu, new)

    def ddt(self):
        """d_t = t^(-1) (t d_t): same terms with one more explicit t power."""
        shifted = [replace(tm, p=tm.p + 1.0) for tm in self.Dt().terms]
        return SeparableField(self.nu, shifted)

    def __add__(self, other):
        return SeparableField(self.nu, self.terms + other.terms)

    def __neg__(self):
        return SeparableField(self.nu, [replace(t, coef=-t.coef) for t in self.terms])

    def scaled(self, c):
        return SeparableField(self.nu, [replace(t, coef=c * t.coef) for t in self.terms])

    def t2_d2t(self):
        """Evaluator of t^2 d_t^2 F = ((t d_t)^2 - t d_t) F."""
        dd = self.Dt().Dt()
        d = self.Dt()
        return lambda R, a: dd.eval_Ra(R, a) - d.eval_Ra(R, a)


class WaveOperatorEvaluator:
    """t^2 (-d_t^2 + d_r^2 + r^(-1) d_r - r^(-2)) applied to a separable
    field; the trailing -1/r^2 is the free Sturm-Liouville weight of the
    even-step equation."""

    def __init__(self, field: SeparableField, include_inverse_square=True):
        self.field = field
        self._t2d2t = field.t2_d2t()
        self._drr = field.Dr().Dr()
        self.include_inverse_square = include_inverse_square

    def eval_Ra(self, R, a):
        a = np.asarray(a, float)
        out = -self._t2d2t(R, a) + self._drr.eval_Ra(R, a) / a**2
        if self.include_inverse_square:
            out = out - self.field.eval_Ra(R, a) / a**2
        return out
