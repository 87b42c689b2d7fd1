"""The stationary harmonic map Q(R) and its scaling zero mode.

The static co-rotational equation R^2 Q'' + R Q' = f(Q) is solved through
its first-order reduction

    R Q' = g(Q)   i.e.   dQ/ds = g(Q),  s = log R,

which is autonomous in s, so the scaling gauge is fixed simply by placing
the equator value at R = 1: Q(1) = rho* with g'(rho*) = 0.  (For the
sphere this is the familiar Q = 2 arctan R with Q(1) = pi/2.)  The
second-order equation is then checked a posteriori by finite differences,
so no structure of the reduction is taken on faith.
"""

from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .errors import NonConvergence
from .geometry import SurfaceProfile
from .grids import LogGrid, RadialField

__all__ = ["GridSpec", "GroundState", "solve_ground_state", "zero_mode"]


@dataclass(frozen=True)
class GridSpec:
    r_min: float = 1e-6
    r_max: float = 3e4
    n: int = 8192


@dataclass
class GroundState:
    grid: LogGrid
    Q: np.ndarray
    Q1: np.ndarray
    Q2: np.ndarray
    profile_ref: SurfaceProfile
    norm_point: float = 1.0

    @property
    def R_grid(self):
        return self.grid.r

    def q_at(self, R):
        """Q at arbitrary radii (spline through the log-grid samples)."""
        return RadialField(self.grid, self.Q)(R)

    def q_field(self):
        return RadialField(self.grid, self.Q, name="Q")

    def static_residual(self):
        """|R^2 Q'' + R Q' - f(Q)| with the left side from finite
        differences in s = log R (independent of the first-order route)."""
        q_ss = self.grid.d_s(self.Q, order=2, acc=6)
        return np.abs(q_ss - self.profile_ref.f(self.Q))

    def fprime_Q(self):
        """Potential ingredient f'(Q(R)) on the grid."""
        return self.profile_ref.f1(self.Q)


def solve_ground_state(p: SurfaceProfile, grid_spec: GridSpec | None = None,
                       norm_point: float = 1.0) -> GroundState:
    """Integrate dQ/ds = g(Q) with Q(norm_point) = turning.

    Raises NonConvergence when the orbit fails to connect 0 to zero_D
    within the grid span (non-admissible profile, e.g. no antipode).
    """
    spec = grid_spec or GridSpec()
    if not np.isfinite(p.zero_D) or not np.isfinite(p.turning):
        raise NonConvergence(f"profile {p.name} has no antipode to connect to")

    grid = LogGrid.make(spec.r_min, spec.r_max, spec.n)
    s0 = np.log(norm_point)

    def rhs(_s, q):
        return p.g(q)

    # max_step keeps the dense-output interpolant at the same accuracy as
    # the steps themselves; the orbit is cheap either way.
    sol_up = solve_ivp(rhs, (s0, grid.s[-1]), [p.turning], method="DOP853",
                       dense_output=True, rtol=1e-13, atol=1e-14, max_step=0.1)
    sol_dn = solve_ivp(rhs, (s0, grid.s[0]), [p.turning], method="DOP853",
                       dense_output=True, rtol=1e-13, atol=1e-14, max_step=0.1)
    if not (sol_up.success and sol_dn.success):
        raise NonConvergence("ground-state integration failed")

    Q = np.empty(grid.n)
    lo = grid.s < s0
    Q[lo] = sol_dn.sol(grid.s[lo])[0]
    Q[~lo] = sol_up.sol(grid.s[~lo])[0]

    end_lo, end_hi = Q[0], Q[-1]
    if not (0.0 < end_lo < end_hi < p.zero_D):
        raise NonConvergence("orbit left the strip (0, zero_D)")
    if end_lo > 1e-4 or (p.zero_D - end_hi) > 1e-4:
        raise NonConvergence(
            f"orbit does not connect the poles: Q(R_min)={end_lo:.2e}, "
            f"D - Q(R_max)={p.zero_D - end_hi:.2e}")
    if np.any(np.diff(Q) <= 0.0):
        raise NonConvergence("Q not strictly increasing")

    # Exact derivative formulas along the reduction:
    #   Q' = g(Q)/R,   Q'' = g(Q)(g'(Q) - 1)/R^2.
    gQ = p.g(Q)
    Q1 = gQ / grid.r
    Q2 = gQ * (p.g1(Q) - 1.0) / grid.r**2
    return GroundState(grid=grid, Q=Q, Q1=Q1, Q2=Q2, profile_ref=p,
                       norm_point=norm_point)


def zero_mode(gs: GroundState) -> RadialField:
    """Scaling mode phi0(R) = R Q'(R) = g(Q(R)); annihilated by
    L = d^2/dR^2 + (1/R) d/dR - f'(Q)/R^2."""
    return RadialField(gs.grid, gs.profile_ref.g(gs.Q), name="zero_mode")
