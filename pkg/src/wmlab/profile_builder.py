"""Iterative construction of approximate blow-up solutions.

Starting from u0 = Q(lam(t) r) with lam(t) = t^(-1-nu), each double step
adds an interior correction (an ODE solve in R by variation of
parameters) and a self-similar correction (a family of singular
Sturm-Liouville solves in a = r/t), improving the backward-light-cone
error by a factor (t lam)^(-2).  Concretely, with tl := t lam = t^(-nu):

  step 0   t^2 e0(R) = -(1+nu)(2+nu) R Q' - (1+nu)^2 R^2 Q''
  step 1   w solves L w = -t^2 e0,  L = d_R^2 + R^(-1) d_R - f'(Q)/R^2,
           and v1 = tl^(-2) w(R)
  step 2   t^2 e1 = -t^2 d_t^2 v1 + t^2 N1(v1); its principal part is the
           top two R-degrees of the large-R expansion, read off by
           least squares against an ell(R)-polynomial basis at fixed a
           (ell = (1/2) log(1+R^2), the regularised log)
  step 3   matching powers of ell and tl converts the free wave equation
           for v2 into one-dimensional systems  L_b W = rhs  on a in
           [0, 1), singular at both ends; v2 is reassembled from the W's
           with the axis regularisation kappa(R) = R(1+R^2)^(-1/2)
  step 4   t^2 e2 = t^2 e1 + t^2 Ltilde v2 + t^2 N2(v2), evaluated through
           the exact chain-rule algebra and cross-checked against direct
           finite differencing of the assembled u2.

The operator family of step 3 is generated mechanically by substituting
separable pieces t^(-b) W(a) ell(R)^j into the wave operator (see the
coefficients in _lb_coeffs/_b_coupling/_c_coupling); nothing is
transcribed from elsewhere, and the step-4 residual check validates the
generated coefficients end to end.
"""

from dataclasses import dataclass, field as dfield

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicSpline

from .errors import LightConeViolation, QuadratureFailure, SingularEndpoint
from .fields import (Profile1D, SeparableField, Term, WaveOperatorEvaluator,
                     cone_coords, ell_power, ell_profile, kappa_profile, pmul)
from .geometry import SurfaceProfile
from .grids import RadialField
from .ground_state import GroundState, GridSpec, solve_ground_state, zero_mode

__all__ = [
    "SymbolTriple", "CorrectionField", "ErrorField", "PrincipalPart",
    "ApproxSolution", "initial_error", "green_solve", "step1_correction",
    "step2_error", "step3_correction", "step4_error", "assemble_data",
    "build_approx_solution", "fit_power_logpower",
]

# Default (t lam) sweep for dyadic-in-t diagnostics; tl >= 50 keeps the
# expansion parameter 1/tl^2 below 4e-4.
TLAM_SWEEP = tuple(50.0 * 2.0 ** (0.5 * j) for j in range(7))
DELTA_A = 1e-4


def t_of_tlam(tlam, nu):
    return np.asarray(tlam, float) ** (-1.0 / nu)


# ---------------------------------------------------------------------------
# symbols
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SymbolTriple:
    """b = log^2(1+R^2)/tl^2, b1 = log(1+R^2)/tl^2, b2 = 1/tl^2."""

    b: float
    b1: float
    b2: float

    @classmethod
    def at(cls, t, R, nu):
        inv_tl2 = np.asarray(t, float) ** (2.0 * nu)
        L = np.log1p(np.asarray(R, float) ** 2)
        return cls(b=L**2 * inv_tl2, b1=L * inv_tl2, b2=inv_tl2 + 0.0 * L)


# ---------------------------------------------------------------------------
# step 0
# ---------------------------------------------------------------------------

def initial_error(gs: GroundState, nu: float, t: float | None = None) -> RadialField:
    """t^2 e0 as a function of R alone.

    Plugging u0 = Q(lam(t) r) into the equation kills the static part, so
    only the two chain-rule time derivatives survive:

        t^2 e0 = -(1+nu)(2+nu) R Q'(R) - (1+nu)^2 R^2 Q''(R),

    with R Q' = g(Q) and R^2 Q'' = g(Q)(g'(Q)-1) along the reduction.
    The t argument is accepted for interface symmetry; the profile does
    not depend on it.
    """
    p = gs.profile_ref
    gQ = p.g(gs.Q)
    vals = -(1 + nu) * (2 + nu) * gQ - (1 + nu) ** 2 * gQ * (p.g1(gs.Q) - 1.0)
    return RadialField(gs.grid, vals, name="t2e0")


# ---------------------------------------------------------------------------
# step 1: interior Green solve
# ---------------------------------------------------------------------------

def green_solve(gs: GroundState, rhs: RadialField) -> RadialField:
    """Solve L w = rhs with w = O(R^3) at the axis by variation of
    parameters from the zero mode phi0 = R Q' and its reduced-order
    conjugate theta0 = phi0 * int_1^R ds/(s phi0(s)^2).

    The pair has Wronskian phi0 theta0' - phi0' theta0 = 1/R, so

        w = theta0 * int_0^R phi0 rhs s ds - phi0 * int_0^R theta0 rhs s ds.

    Anchoring theta0 at R = 1 keeps all intermediates O(1); changing the
    anchor shifts theta0 by a multiple of phi0, which drops out of w.
    """
    grid = gs.grid
    phi0 = gs.profile_ref.g(gs.Q)
    J = grid.cumint_from(1.0 / (grid.r * phi0**2), 1.0)
    theta0 = phi0 * J

    h = rhs.values
    B = grid.cumint(phi0 * h * grid.r)   # int phi0 h s ds
    A = grid.cumint(theta0 * h * grid.r)
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(B))):
        raise QuadratureFailure("Green integrals diverged")
    return RadialField(grid, theta0 * B - phi0 * A, name="w")


def _decay_slope(rf: RadialField, lo=1e2, hi=1e4):
    m = rf.grid.window(lo, min(hi, rf.grid.r[-1]))
    y = np.abs(rf.values[m])
    if np.all(y == 0.0):
        return 0.0
    fit = np.polyfit(np.log(rf.grid.r[m]), np.log(np.maximum(y, 1e-300)), 1)
    return float(fit[0])


def step1_residual(gs: GroundState, w: RadialField, rhs: RadialField):
    """|L w - rhs| with L applied by finite differences in s = log R
    (independent of the quadrature route):  L = R^(-2) (d_s^2 - f'(Q))."""
    grid = gs.grid
    w_ss = grid.d_s(w.values, order=2, acc=6)
    lw = (w_ss - gs.fprime_Q() * w.values) / grid.r**2
    return np.abs(lw - rhs.values)


def step1_correction(e0_principal: RadialField, gs: GroundState, nu: float,
                     t: float | None = None) -> RadialField:
    """Interior correction: w with L w = -t^2 e0^0; v1 = tl^(-2) w.

    Preconditions are enforced: the input must decay like R^(-1) (up to
    logs) or the Green integrals lose meaning.  Post-checks: ODE residual
    below 1e-6 on [1e-2, 1e2] and cubic vanishing at the axis.
    """
    if np.all(e0_principal.values == 0.0):
        return RadialField(gs.grid, np.zeros(gs.grid.n), name="w")
    slope = _decay_slope(e0_principal)
    if not (-1.8 < slope < -0.4):
        raise QuadratureFailure(
            f"input decays like R^{slope:.2f}, expected ~ R^-1")
    rhs = RadialField(gs.grid, -e0_principal.values)
    w = green_solve(gs, rhs)

    res = step1_residual(gs, w, rhs)
    m = gs.grid.window(1e-2, 1e2)
    worst = float(np.max(res[m]))
    if worst > 1e-6:
        raise QuadratureFailure(f"Green-solve residual {worst:.2e} > 1e-6")
    axis = gs.grid.window(gs.grid.r[2], 0.1)
    cubic = np.abs(w.values[axis]) / gs.grid.r[axis] ** 3
    ref = abs(float(w(0.1))) / 1e-3
    if ref > 0 and float(np.max(cubic)) > 10.0 * ref:
        raise QuadratureFailure("w does not vanish cubically at the axis")
    return w


def w_profile(gs: GroundState, w: RadialField, rhs: RadialField) -> Profile1D:
    """Profile1D for w with the curvature taken from the ODE identity
    w'' = rhs - w'/R + f'(Q) w / R^2 (exact given w, w')."""
    grid = gs.grid
    spw = CubicSpline(grid.s, w.values)
    sph = CubicSpline(grid.s, rhs.values)
    spq = CubicSpline(grid.s, gs.Q)
    f1 = gs.profile_ref.f1

    def val(R):
        return spw(np.log(R))

    def d1(R):
        return spw(np.log(R), 1) / R

    def d2(R):
        s = np.log(R)
        return sph(s) - spw(s, 1) / R**2 + f1(spq(s)) * spw(s) / R**2

    return Profile1D(val, d1, d2)


def v1_field(gs: GroundState, w: RadialField, e0: RadialField, nu: float) -> SeparableField:
    """v1 = (t lam)^(-2) w(R) as a separable cone field."""
    prof = w_profile(gs, w, RadialField(gs.grid, -e0.values))
    return SeparableField(nu, [Term(1.0, 2.0, 0.0, prof, None)])


# ---------------------------------------------------------------------------
# error fields
# ---------------------------------------------------------------------------

class ErrorField:
    """t^2 e_k on the backward light cone.

    Composed of separable pieces (exact chain-rule algebra) and pointwise
    nonlinear closures.  Any evaluation at (t, r) outside r <= t raises
    LightConeViolation; (R, a) access guards a <= 1 likewise.
    """

    def __init__(self, nu, sep_parts=(), pw_parts=(), name="", principal=None):
        self.nu = float(nu)
        self.sep_parts = list(sep_parts)
        self.pw_parts = list(pw_parts)
        self.name = name
        self.principal = principal   # PrincipalPart or None
        self.meta = {}

    def t2_Ra(self, R, a):
        R = np.asarray(R, float)
        a = np.asarray(a, float)
        if np.any(a > 1.0 + 1e-12) or np.any(a < 0.0):
            raise LightConeViolation("error field sampled outside the cone")
        out = 0.0
        for s in self.sep_parts:
            out = out + (s.eval_Ra(R, a) if isinstance(s, SeparableField)
                         else s.eval_Ra(R, a))
        for f in self.pw_parts:
            out = out + f(R, a)
        return out

    def t2_tr(self, t, r):
        R, a, _ = cone_coords(t, r, self.nu)
        return self.t2_Ra(R, a)

    def sup_cone(self, t, a_max=0.5, n=600):
        """sup over r <= a_max * t of |t^2 e| at time t."""
        tlam = float(t) ** (-self.nu)
        a = np.geomspace(3e-5, a_max, n)
        return float(np.max(np.abs(self.t2_Ra(a * tlam, a))))


@dataclass
class CorrectionField:
    """A correction v_j plus the data that produced it."""

    kind: str
    field: SeparableField
    diagnostics: dict = dfield(default_factory=dict)
    w: RadialField | None = None          # interior corrections
    w_solutions: dict | None = None       # self-similar corrections

    def eval_tr(self, t, r):
        return self.field.eval_tr(t, r)

    def eval_Ra(self, R, a):
        return self.field.eval_Ra(R, a)


# ---------------------------------------------------------------------------
# step 2: first error and its principal part
# ---------------------------------------------------------------------------

def _nl1_closure(gs: GroundState, wprof: Profile1D, nu: float):
    """t^2 N1(v1) = -a^(-2) [f(Q+v1) - f(Q) - f'(Q) v1], v1 = (a/R)^2 w."""
    p = gs.profile_ref
    qf = gs.q_field()

    def nl(R, a):
        R = np.asarray(R, float)
        a = np.asarray(a, float)
        Q = qf(R)
        v1 = (a / R) ** 2 * wprof.val(R)
        return -(a ** -2.0) * (p.f(Q + v1) - p.f(Q) - p.f1(Q) * v1)

    return nl


class PrincipalPart:
    """Leading component of an odd-step error in q-coefficient form.

    t^2 e^0 = tl^(-(2k-1)) sum_j a q_j(a) ell^j + tl^(-2k) sum_j qt_j(a) ell^j

    with ell = (1/2) log(1+R^2) as the matching variable (asymptotically
    log R, but regular at the axis, so the remainder e^1 = e - e^0 stays
    bounded there).  At the first round the coefficients are exactly
    a-independent; they are stored as callables so higher rounds could
    swap in genuine a-profiles without touching the solvers.
    """

    def __init__(self, nu, k, q_funcs, qt_funcs, table):
        self.nu = nu
        self.k = k
        self.q = q_funcs        # list over j = 0..2k-1
        self.qt = qt_funcs      # list over j = 0..2k
        self.table = table      # per-a refit diagnostics
        self._ell = ell_profile()

    def q_at(self, j, a):
        return self.q[j](np.asarray(a, float))

    def qt_at(self, j, a):
        return self.qt[j](np.asarray(a, float))

    def t2_Ra(self, R, a):
        R = np.asarray(R, float)
        a = np.asarray(a, float)
        ell = self._ell.val(R)
        inv_tl = a / R
        odd = sum(self.q_at(j, a) * ell**j for j in range(len(self.q)))
        even = sum(self.qt_at(j, a) * ell**j for j in range(len(self.qt)))
        return inv_tl ** (2 * self.k - 1) * a * odd + inv_tl ** (2 * self.k) * even


def fit_principal_part(err: ErrorField, nu: float, k: int = 1,
                       R_window=(20.0, 2.0e4), n_R: int = 72, n_a: int = 41,
                       delta_a: float = DELTA_A) -> PrincipalPart:
    """Read off the q-coefficients by polynomial-in-ell least squares.

    One joint fit over an (a, R) mesh: the principal columns {R, R ell,
    1, ell, ell^2} carry the two top R-degrees, while R^(-1)(1+ell)^j
    nuisance columns, once static and once with the a^2 prefactor the
    higher-order error terms actually carry, absorb the next order of the
    expansion.  Varying a is what separates the two nuisance families;
    per-a refits of the same model are kept as a scatter diagnostic.
    All rows are weighted by 1/R so the R^0 block is not drowned by the
    R^1 block.
    """
    if k != 1:
        raise NotImplementedError("desk-scale truncation: k = 1")
    a_nodes = np.linspace(0.02, 1.0 - delta_a, n_a)
    R_m = np.geomspace(*R_window, n_R)
    A_, R_ = np.meshgrid(a_nodes, R_m, indexing="ij")
    ell = ell_profile().val(R_)
    z = err.t2_Ra(R_, A_) * (R_ / A_) ** 2
    cols = [R_, R_ * ell, np.ones_like(R_), ell, ell**2]
    cols += [(1.0 + ell) ** j / R_ for j in range(4)]
    cols += [A_**2 * (1.0 + ell) ** j / R_ for j in range(4)]
    X = np.column_stack([c.ravel() for c in cols]) / R_.ravel()[:, None]
    y = (z / R_).ravel()
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    q0, q1, qt0, qt1, qt2 = (float(c) for c in coef[:5])

    # per-a refits: the coefficient scatter across a measures how well the
    # a-independence of the first-round principal part holds numerically
    per_a = np.empty((len(a_nodes), 5))
    nX = X.shape[1] - 4          # drop the a^2 columns, degenerate at fixed a
    Xa = X[:, :nX].reshape(len(a_nodes), len(R_m), nX)
    ya = y.reshape(len(a_nodes), len(R_m))
    for i in range(len(a_nodes)):
        ca, *_ = np.linalg.lstsq(Xa[i], ya[i], rcond=None)
        per_a[i] = ca[:5]
    table = {"a": a_nodes, "per_a": per_a,
             "global": np.array([q0, q1, qt0, qt1, qt2])}

    const = lambda v: (lambda a: v + 0.0 * np.asarray(a, float))
    return PrincipalPart(nu, k, [const(q0), const(q1)],
                         [const(qt0), const(qt1), const(qt2)], table)


def step2_error(v1: CorrectionField, gs: GroundState, nu: float,
                t_grid=None) -> ErrorField:
    """Assemble t^2 e1 = -t^2 d_t^2 v1 + t^2 N1(v1) and record the split
    e1 = e1^0 + e1^1 via the principal-part fit.

    For the first round e0^1 = 0, so these two terms are the whole error;
    the time derivative is taken exactly on the separable representation.
    """
    f = v1.field
    sep = (f.Dt().Dt() + f.Dt().scaled(-1.0)).scaled(-1.0)   # -t^2 d_t^2 v1
    wprof = f.terms[0].fR
    nl = _nl1_closure(gs, wprof, nu)
    err = ErrorField(nu, sep_parts=[sep], pw_parts=[nl], name="t2e1")
    err.principal = fit_principal_part(err, nu, k=1)

    # dyadic-in-t weight diagnostic: sup over r <= t/2 of |t^2 e1| tl^2 / (R (1+ell)),
    # which the declared class requires to stay uniformly bounded.
    t_list = t_of_tlam(np.array(TLAM_SWEEP), nu) if t_grid is None else np.asarray(t_grid)
    sups = []
    ellp = ell_profile()
    for t in t_list:
        tlam = float(t) ** (-nu)
        a = np.geomspace(1e-4, 0.5, 400)
        R = a * tlam
        wgt = R * (1.0 + ellp.val(R))
        sups.append(float(np.max(np.abs(err.t2_Ra(R, a)) * tlam**2 / wgt)))
    err.meta["weight_sup"] = {"t": list(map(float, t_list)), "sup": sups}
    return err


# ---------------------------------------------------------------------------
# step 3: self-similar solves
# ---------------------------------------------------------------------------

def _lb_coeffs(beta, nu):
    """L_b W = (1-a^2) W'' + (1/a - 2(b+1) a) W' - (b(b+1) + a^-2) W."""
    def p_coef(a):
        return 1.0 / a - 2.0 * (beta + 1.0) * a

    def q_coef(a):
        return -(beta * (beta + 1.0) + a ** -2.0)

    return p_coef, q_coef


def _b_coupling(beta, nu, W: Profile1D):
    """B_b W = 2 (1/a - (1+nu) a) W' - (1+nu)(2b+1) W: the one-lower
    ell-power coupling produced by the log-matching."""
    def val(a):
        return (2.0 * (1.0 / a - (1.0 + nu) * a) * W.d1(a)
                - (1.0 + nu) * (2.0 * beta + 1.0) * W.val(a))
    return val

def _c_coupling(nu, W: Profile1D):
    """C W = (a^-2 - (1+nu)^2) W: the two-lower ell-power coupling."""
    def val(a):
        return (a ** -2.0 - (1.0 + nu) ** 2) * W.val(a)
    return val


def _solve_lb(beta, nu, rhs, parity, a0=1e-3, a_end=1.0 - DELTA_A,
              rtol=1e-10, atol=1e-13):
    """Integrate L_b W = rhs(a) from the axis with the particular-series
    Cauchy data (the indicial roots at a = 0 are +-1, so W(0) = W'(0) = 0
    picks W ~ a^3 for odd forcing and W ~ a^2 for even forcing).

    Returns a Profile1D valid on (0, a_end] with the leading power used
    below a0 and the curvature supplied by the ODE itself.
    """
    p_coef, q_coef = _lb_coeffs(beta, nu)
    if parity == "odd":
        sigma, denom = 3.0, 8.0
        lead = (rhs(a0) / a0) / denom
    else:
        sigma, denom = 2.0, 3.0
        lead = rhs(a0) / denom

    def ode(a, y):
        W, Wp = y
        Wpp = (rhs(a) - p_coef(a) * Wp - q_coef(a) * W) / (1.0 - a * a)
        return (Wp, Wpp)

    y0 = (lead * a0**sigma, sigma * lead * a0 ** (sigma - 1.0))
    sol = solve_ivp(ode, (a0, a_end), y0, method="DOP853", dense_output=True,
                    rtol=rtol, atol=atol)
    if not sol.success:
        raise SingularEndpoint(f"self-similar solve failed: {sol.message}")

    # dense sampling, geometric refinement toward the singular endpoint
    a_lin = np.linspace(a0, 0.9, 600)
    a_sing = 1.0 - np.geomspace(DELTA_A, 0.1, 400)[::-1]
    a_samp = np.unique(np.concatenate([a_lin, a_sing]))
    a_samp = a_samp[a_samp <= a_end]
    Wv, Wp = sol.sol(a_samp)
    spv = CubicSpline(a_samp, Wv)
    spd = CubicSpline(a_samp, Wp)

    def val(a):
        a = np.asarray(a, float)
        inside = np.clip(a, a0, a_end)
        return np.where(a < a0, lead * a**sigma, spv(inside))

    def d1(a):
        a = np.asarray(a, float)
        inside = np.clip(a, a0, a_end)
        return np.where(a < a0, sigma * lead * a ** (sigma - 1.0), spd(inside))

    def d2(a):
        a = np.asarray(a, float)
        small = sigma * (sigma - 1.0) * lead * a ** (sigma - 2.0)
        inside = np.clip(a, a0, a_end)
        with np.errstate(divide="ignore", invalid="ignore"):
            big = ((rhs(inside) - p_coef(inside) * spd(inside)
                    - q_coef(inside) * spv(inside)) / (1.0 - inside**2))
        return np.where(a < a0, small, big)

    prof = Profile1D(val, d1, d2)
    prof.ode = {"sigma": sigma, "lead": lead, "a0": a0, "a_end": a_end}
    return prof


def singular_exponent(W: Profile1D, x_lo=DELTA_A, x_hi=1e-2, n=40,
                      a_end=1.0 - DELTA_A):
    """Local exponent of the dominant singular branch of W at a = 1.

    The analytic branch has bounded curvature while the singular branch
    (1-a)^p has W'' ~ (1-a)^(p-2), so the log-log slope of |W''| near the
    endpoint reads off p - 2 with the analytic part suppressed.
    """
    x = np.geomspace(x_lo, x_hi, n)
    a = np.minimum(1.0 - x, a_end)
    w2 = np.abs(W.d2(a))
    if np.all(w2 < 1e-14):
        return np.nan
    slope = np.polyfit(np.log(x), np.log(np.maximum(w2, 1e-300)), 1)[0]
    return float(slope + 2.0)


def step3_correction(e1_principal: PrincipalPart, nu: float, k: int = 1,
                     delta_a: float = DELTA_A) -> CorrectionField:
    """Solve the matched one-dimensional systems and reassemble v2.

    For k = 1 the ansatz v2 = tl^(-1) [W0 + W1 ell] + tl^(-2) kappa
    [Wt0 + Wt1 ell + Wt2 ell^2] turns the even-step wave equation into

        L_{-nu}   W1  = -a q1              L_{-2nu} Wt2 = -qt2
        L_{-nu}   W0  = -a q0 - B W1       L_{-2nu} Wt1 = -qt1 - 2 B Wt2
                                           L_{-2nu} Wt0 = -qt0 - B Wt1 - 2 C Wt2

    solved in that order with Cauchy data at the axis.  The endpoint
    behaviour is verified by a local exponent fit: the homogeneous
    singular branch carries (1-a)^(nu + 1/2); anything blowing up faster
    than (1-a)^(nu - 1/2) signals broken exponent bookkeeping.
    """
    if k != 1:
        raise NotImplementedError("desk-scale truncation: k = 1")
    pp = e1_principal
    a_end = 1.0 - delta_a

    W1 = _solve_lb(-nu, nu, lambda a: -a * pp.q_at(1, a), "odd", a_end=a_end)
    bW1 = _b_coupling(-nu, nu, W1)
    W0 = _solve_lb(-nu, nu, lambda a: -a * pp.q_at(0, a) - bW1(a), "odd",
                   a_end=a_end)

    Wt2 = _solve_lb(-2 * nu, nu, lambda a: -pp.qt_at(2, a), "even", a_end=a_end)
    bWt2 = _b_coupling(-2 * nu, nu, Wt2)
    Wt1 = _solve_lb(-2 * nu, nu, lambda a: -pp.qt_at(1, a) - 2.0 * bWt2(a),
                    "even", a_end=a_end)
    bWt1 = _b_coupling(-2 * nu, nu, Wt1)
    cWt2 = _c_coupling(nu, Wt2)
    Wt0 = _solve_lb(-2 * nu, nu,
                    lambda a: -pp.qt_at(0, a) - bWt1(a) - 2.0 * cWt2(a),
                    "even", a_end=a_end)

    sols = {"W0": W0, "W1": W1, "Wt0": Wt0, "Wt1": Wt1, "Wt2": Wt2}
    diag = {"singular_exponent": {}, "axis_order": {}}
    for name, W in sols.items():
        expo = singular_exponent(W, x_lo=delta_a, a_end=a_end)
        diag["singular_exponent"][name] = expo
        order = 3.0 if name in ("W0", "W1") else 2.0
        a_small = np.geomspace(2e-3, 0.08, 60)
        ratio = np.abs(W.val(a_small)) / a_small**order
        ref = abs(float(W.val(0.1))) / 0.1**order
        diag["axis_order"][name] = {
            "order": order,
            "bounded": bool(ref == 0.0 or float(np.max(ratio)) <= 10.0 * max(ref, 1e-14)),
        }
        if np.isfinite(expo) and expo < nu - 0.5 - 0.05:
            raise SingularEndpoint(
                f"{name} blows up like (1-a)^{expo - 0.5:.2f}, "
                f"faster than (1-a)^{nu - 0.5:.2f}")

    kap = kappa_profile()
    terms = [
        Term(1.0, 1.0, 0.0, None, W0),
        Term(1.0, 1.0, 0.0, ell_power(1), W1),
        Term(1.0, 2.0, 0.0, kap, Wt0),
        Term(1.0, 2.0, 0.0, pmul(kap, ell_power(1)), Wt1),
        Term(1.0, 2.0, 0.0, pmul(kap, ell_power(2)), Wt2),
    ]
    return CorrectionField(kind="v2", field=SeparableField(nu, terms),
                           diagnostics=diag, w_solutions=sols)


# ---------------------------------------------------------------------------
# approximate solutions and step 4
# ---------------------------------------------------------------------------

@dataclass
class ApproxSolution:
    """Q plus the correction stack with its error bookkeeping.

    lam_scale is the family constant K in lam(t) = K t^(-1-nu): a scaling
    gauge (the PDE maps家族 members into each other by u -> u(sigma t,
    sigma r)), so the rate exponent is K-independent, but K sets the
    dimensionless depth t lam = K t^(-nu) at which a given absolute time
    sits.  All cone fields evaluate through (R, a) with t lam = R/a, so
    only this coordinate map carries K.
    """

    nu: float
    k_steps: int
    profile: SurfaceProfile
    gs: GroundState
    corrections: list          # CorrectionField, in order v1, v2, ...
    errors: list               # t^2 e0 (RadialField), then ErrorFields
    t_ref: float = 0.01
    lam_scale: float = 1.0
    constants: dict = dfield(default_factory=dict)
    diagnostics: dict = dfield(default_factory=dict)

    def lam(self, t):
        return self.lam_scale * np.asarray(t, float) ** (-1.0 - self.nu)

    def cone_Ra(self, t, r):
        t = np.asarray(t, float)
        r = np.asarray(r, float)
        a = r / t
        if np.any(a > 1.0 + 1e-12) or np.any(t <= 0.0):
            raise LightConeViolation("outside the backward light cone")
        return self.lam(t) * r, a

    def u_tr(self, t, r):
        """Full ansatz u_k(t, r) = Q(lam r) + sum v_j."""
        R, a = self.cone_Ra(t, r)
        out = self.gs.q_at(R)
        for c in self.corrections:
            out = out + c.eval_Ra(R, a)
        return out

    def ut_tr(self, t, r):
        """Exact d_t of the ansatz: -(1+nu) g(Q)/t for the soliton part
        plus the chain-rule derivative (t d_t)/t of each correction."""
        R, a = self.cone_Ra(t, r)
        out = -(1.0 + self.nu) * self.profile.g(self.gs.q_at(R)) / t
        for c in self.corrections:
            out = out + c.field.Dt().eval_Ra(R, a) / t
        return out


def _nl2_closure(approx: ApproxSolution):
    """t^2 N2(v2) = a^(-2) [v2 - f(u1+v2) + f(u1)] plus its three-part
    split: I quadratic-and-higher in v2, II the potential shift from the
    accumulated corrections, III the deviation of f'(u0) from the free
    endpoint value 1."""
    p = approx.profile
    gs = approx.gs
    v1 = approx.corrections[0]
    v2 = approx.corrections[1]
    qf = gs.q_field()

    def pieces(R, a):
        R = np.asarray(R, float)
        a = np.asarray(a, float)
        Q = qf(R)
        u1 = Q + v1.eval_Ra(R, a)
        vv = v2.eval_Ra(R, a)
        inv_a2 = a ** -2.0
        part_I = inv_a2 * (p.f(u1 + vv) - p.f(u1) - p.f1(u1) * vv)
        part_II = inv_a2 * (p.f1(u1) - p.f1(Q)) * vv
        part_III = inv_a2 * (p.f1(Q) - 1.0) * vv
        return part_I, part_II, part_III

    def nl(R, a):
        pI, pII, pIII = pieces(R, a)
        return -(pI + pII + pIII)

    return nl, pieces


def step4_error(approx: ApproxSolution, t_grid=None) -> ErrorField:
    """t^2 e2 for u2 = u1 + v2, assembled from the exact algebra:

        t^2 e2 = t^2 e1 + t^2 Ltilde v2 + t^2 N2(v2),

    identical to the bookkeeping split (e1 - e1^0) + (e1^0 + Ltilde v2)
    + N2 but free of the intermediate log-singular pieces.  The result
    carries a pointwise finite-difference cross-check (t2_direct) that
    applies the full wave operator to the assembled u2 numerically.
    """
    if len(approx.corrections) < 2:
        raise ValueError("step 4 needs v1 and v2")
    e1 = approx.errors[1]
    v2 = approx.corrections[1]
    nu = approx.nu
    wave_v2 = WaveOperatorEvaluator(v2.field, include_inverse_square=True)
    nl2, nl2_pieces = _nl2_closure(approx)

    err = ErrorField(nu, sep_parts=e1.sep_parts,
                     pw_parts=list(e1.pw_parts) + [wave_v2.eval_Ra, nl2],
                     name="t2e2")
    err.meta["nl2_pieces"] = nl2_pieces
    err.meta["e1_ref"] = e1

    def t2_direct(t, r, rel=1e-3):
        """Independent check: 5-point finite differences in t and r on the
        assembled u2, times t^2, minus t^2 f(u2)/r^2."""
        t = float(t)
        r = np.asarray(r, float)
        dt = rel * t
        dr = rel * t
        u = approx.u_tr
        c = np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / 12.0
        off = np.array([-2, -1, 0, 1, 2])
        d2t = sum(ci * u(t + oi * dt, r) for ci, oi in zip(c, off)) / dt**2
        d2r = sum(ci * u(t, r + oi * dr) for ci, oi in zip(c, off)) / dr**2
        c1 = np.array([1.0, -8.0, 8.0, -1.0]) / 12.0
        off1 = np.array([-2, -1, 1, 2])
        d1r = sum(ci * u(t, r + oi * dr) for ci, oi in zip(c1, off1)) / dr
        return t**2 * (-d2t + d2r + d1r / r - approx.profile.f(u(t, r)) / r**2)

    err.t2_direct = t2_direct

    t_list = t_of_tlam(np.array(TLAM_SWEEP), nu) if t_grid is None else np.asarray(t_grid)
    err.meta["decay"] = {
        "t": list(map(float, t_list)),
        "sup_half_cone": [err.sup_cone(t) for t in t_list],
    }
    return err


# ---------------------------------------------------------------------------
# data assembly
# ---------------------------------------------------------------------------

def _smoothstep(x):
    """C^2 ramp: 0 for x <= 0, 1 for x >= 1, quintic in between."""
    x = np.clip(x, 0.0, 1.0)
    return x**3 * (10.0 - 15.0 * x + 6.0 * x**2)


def assemble_data(approx: ApproxSolution, t0: float, r_grid,
                  cutoff_width: float = 0.25):
    """Cauchy data at t0: the full ansatz inside r <= t0 (1 - cutoff_width),
    blended by a C^2 cutoff to the pure soliton part Q(lam(t0) r) before
    the light cone, and Q alone outside.  Time derivatives come from the
    exact chain rule, never from differencing.
    """
    r = np.asarray(r_grid, float)
    nu = approx.nu
    R = approx.lam(t0) * r
    gs = approx.gs

    pos = r > 0.0
    u = np.zeros_like(r)
    u[pos] = gs.q_at(R[pos])
    ut = -(1.0 + nu) * approx.profile.g(u) / t0

    if approx.corrections:
        a = r / t0
        a_in = 1.0 - cutoff_width
        a_out = 1.0 - max(5.0 * DELTA_A, 2e-3)
        chi = 1.0 - _smoothstep((a - a_in) / (a_out - a_in))
        live = (chi > 0.0) & (a > 0.0)
        dv = np.zeros_like(r)
        dvt = np.zeros_like(r)
        for c in approx.corrections:
            dv[live] += c.field.eval_Ra(R[live], a[live])
            dvt[live] += c.field.Dt().eval_Ra(R[live], a[live]) / t0
        u = u + chi * dv
        ut = ut + chi * dvt
    return u, ut


# ---------------------------------------------------------------------------
# diagnostics and the pipeline
# ---------------------------------------------------------------------------

def fit_power_logpower(r, y, lo=1e2, hi=1e4):
    """Two-parameter asymptotic fit |y| ~ C R^p (log R)^q on [lo, hi];
    returns (p, q) with q also rounded to the nearest integer."""
    r = np.asarray(r, float)
    y = np.asarray(y, float)
    m = (r >= lo) & (r <= hi) & (np.abs(y) > 0)
    lr = np.log(r[m])
    X = np.column_stack([np.ones_like(lr), lr, np.log(lr)])
    coef, *_ = np.linalg.lstsq(X, np.log(np.abs(y[m])), rcond=None)
    return float(coef[1]), float(coef[2]), int(round(coef[2]))


def fit_rloglike_coefficient(w: RadialField, lo=1e2, hi=1e4):
    """Fit w ~ c R ell(R) + c2 R on [lo, hi] and measure the drift of c
    between the two half-windows (in decades)."""
    def fit_on(lo_, hi_):
        m = w.grid.window(lo_, hi_)
        R = w.grid.r[m]
        ell = ell_profile().val(R)
        X = np.column_stack([R * ell, R])
        coef, *_ = np.linalg.lstsq(X, w.values[m], rcond=None)
        return coef

    c_full, c2_full = fit_on(lo, hi)
    mid = np.sqrt(lo * hi)
    c_lo, _ = fit_on(lo, mid)
    c_hi, _ = fit_on(mid, hi)
    drift = abs(c_hi - c_lo) / max(abs(c_full), 1e-300)
    return {"c": float(c_full), "c2": float(c2_full), "drift": float(drift)}


def build_approx_solution(profile: SurfaceProfile, nu: float, k_steps: int = 1,
                          grid_spec: GridSpec | None = None,
                          t_ref: float | None = None,
                          gs: GroundState | None = None,
                          lam_scale: float = 1.0) -> ApproxSolution:
    """Run the construction through k_steps double steps (0 or 1).

    k_steps = 0 returns the bare rescaled soliton ansatz (used both as a
    degenerate test case and as the comparison profile for the local
    energy of the deviation).  The construction itself lives in the
    (R, a) variables and is gauge-covariant; lam_scale only repositions
    absolute time (see ApproxSolution).
    """
    if nu <= 0:
        raise ValueError("nu must be positive")
    if k_steps not in (0, 1):
        raise NotImplementedError("desk-scale truncation: k_steps <= 1")
    gs = gs or solve_ground_state(profile, grid_spec)
    t_ref = t_ref if t_ref is not None else float(t_of_tlam(TLAM_SWEEP[0], nu))
    e0 = initial_error(gs, nu)
    approx = ApproxSolution(nu=nu, k_steps=k_steps, profile=profile, gs=gs,
                            corrections=[], errors=[e0], t_ref=t_ref,
                            lam_scale=lam_scale)
    p_e0, q_e0, _ = fit_power_logpower(gs.grid.r, e0.values)
    approx.diagnostics["e0_power"] = (p_e0, q_e0)
    if k_steps == 0:
        return approx

    w = step1_correction(e0, gs, nu)
    wfit = fit_rloglike_coefficient(w)
    v1 = CorrectionField(kind="v1", field=v1_field(gs, w, e0, nu),
                         diagnostics={"rlog_fit": wfit}, w=w)
    approx.corrections.append(v1)
    # leading Theorem-style constants of u1 = Q + c_k R log(1+R^2)/tl^2 + ...
    approx.constants["c_k"] = wfit["c"] / 2.0
    approx.constants["c_tilde_k"] = wfit["c2"]

    e1 = step2_error(v1, gs, nu)
    approx.errors.append(e1)

    v2 = step3_correction(e1.principal, nu, k=1)
    approx.corrections.append(v2)

    e2 = step4_error(approx)
    approx.errors.append(e2)
    return approx
