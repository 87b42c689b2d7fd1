"""Experiment configuration, exponent fitting and artifact output.

Binds the pipeline (ground state -> corrections -> spectral theory ->
evolution -> fits) into reproducible runs: plain-text JSON configs in,
tidy CSV fields plus a JSON manifest out.  Identical configs produce
byte-identical manifests; every number in a manifest is keyed by the
operation that produced it.
"""

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field as dfield
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError, DegenerateFit, NumericalError
from .evolver import (CauchyData, EvolveParams, eps_energy_series, evolve,
                      extract_lambda)
from .geometry import profile_from_key, validate_profile
from .ground_state import GridSpec, solve_ground_state
from .profile_builder import assemble_data, build_approx_solution, fit_power_logpower
from .spectral import (build_operator, plancherel_error, resonance_residual,
                       spectral_density, bump_profile, transference_diagnostic)

__all__ = ["ExperimentConfig", "FitResult", "fit_exponent", "run_experiment",
           "output_root"]

_POW2 = {2**k for k in range(8, 21)}


@dataclass(frozen=True)
class ExperimentConfig:
    target: str = "sphere"
    nu: float = 0.5
    k_steps: int = 1
    t0: float = 0.1
    tlam0: float = 0.0           # gauge depth t0*lam(t0)^{nu/(1+nu)}; 0 = auto
    n_r: int = 2**14
    n_R: int = 2**13
    n_a: int = 2**9
    n_xi: int = 2**8
    cfl: float = 0.4
    cutoff_width: float = 0.1
    n_snapshots: int = 56
    seed: int = 0
    run_spectral: bool = False
    out_dir: str = ""

    def validate(self):
        if not (self.nu > 0.0):
            raise ConfigError("nu must be positive")
        if not (self.t0 > 0.0):
            raise ConfigError("t0 must be positive")
        for name in ("n_r", "n_R", "n_a", "n_xi"):
            if getattr(self, name) not in _POW2:
                raise ConfigError(f"{name} must be a power of two in [2^8, 2^20]")
        if not (0.0 < self.cfl <= 0.5):
            raise ConfigError("cfl must be in (0, 0.5]")
        if self.tlam0 < 0.0:
            raise ConfigError("tlam0 must be nonnegative (0 selects auto)")
        try:
            profile_from_key(self.target)
        except Exception as exc:
            raise ConfigError(str(exc)) from exc
        return self

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        try:
            payload = json.loads(text)
            return cls(**payload).validate()
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad config: {exc}") from exc

    def digest(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()[:16]


@dataclass
class FitResult:
    slope: float
    intercept: float
    stderr: float
    window: tuple
    n_points: int
    log_coef: float | None = None    # coefficient of the log log correction

    def as_dict(self):
        d = asdict(self)
        d["window"] = list(self.window)
        return d


def fit_exponent(x, y, window=None, log_correction=False) -> FitResult:
    """Least squares of log y on log x, optionally with a log log x term.

    The extra term captures x^p (log x)^q asymptotics: a pure power fit
    on such data reads a biased p, while the corrected fit separates the
    power from the log weight (the returned log_coef estimates q).
    """
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    if window is not None:
        m = (x >= window[0]) & (x <= window[1])
        x, y = x[m], y[m]
    else:
        window = (float(np.min(x)), float(np.max(x)))
    if len(x) < 8:
        raise DegenerateFit("need at least 8 points in the window")
    if np.max(x) / np.min(x) < 2.0:
        raise DegenerateFit("x-spread below a factor 2")
    if np.any(y <= 0.0) or np.any(x <= 0.0):
        raise DegenerateFit("fit requires positive data")
    lx, ly = np.log(x), np.log(y)
    cols = [lx, np.ones_like(lx)]
    if log_correction:
        if np.any(lx <= 0.0):
            raise DegenerateFit("log-corrected fit needs x > 1 throughout")
        cols.insert(1, np.log(lx))
    A = np.column_stack(cols)
    coef, res, *_ = np.linalg.lstsq(A, ly, rcond=None)
    dof = max(len(lx) - A.shape[1], 1)
    s2 = (res[0] / dof) if len(res) else 0.0
    sxx = np.sum((lx - lx.mean()) ** 2)
    return FitResult(slope=float(coef[0]),
                     intercept=float(coef[-1]),
                     stderr=float(np.sqrt(max(s2, 0.0) / sxx)),
                     window=(float(window[0]), float(window[1])),
                     n_points=len(lx),
                     log_coef=float(coef[1]) if log_correction else None)


def output_root() -> Path:
    return Path(os.environ.get("WMLAB_OUT", "out"))


def _write_csv(path: Path, header, columns):
    cols = [np.asarray(c) for c in columns]
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in zip(*cols):
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def run_experiment(cfg: ExperimentConfig) -> dict:
    """Ground state -> profile construction -> (optional spectral) ->
    evolution -> fits; returns the manifest and writes the CSV bundle."""
    cfg.validate()
    out = (Path(cfg.out_dir) if cfg.out_dir else
           output_root() / f"{cfg.target.replace(':', '_')}-nu{cfg.nu:g}-{cfg.digest()}")
    out.mkdir(parents=True, exist_ok=True)

    manifest = {
        "config": json.loads(cfg.to_json()),
        "config_sha256": cfg.digest(),
        "versions": {"wmlab": __version__, "numpy": np.__version__},
    }

    profile = profile_from_key(cfg.target)
    manifest["validate_profile.ok"] = validate_profile(profile).ok

    # family-constant gauge: deep enough that the expansion variables are
    # small at t0, shallow enough that the initial scale stays resolved
    tlam0 = cfg.tlam0 if cfg.tlam0 > 0 else (25.0 if cfg.nu <= 0.625 else 40.0)
    K = tlam0 * cfg.t0 ** cfg.nu
    approx = build_approx_solution(profile, cfg.nu, k_steps=cfg.k_steps,
                                   grid_spec=GridSpec(n=cfg.n_R),
                                   lam_scale=K)
    gs = approx.gs
    m = gs.grid.window(1e-3, 1e3)
    manifest["solve_ground_state.static_residual"] = float(
        np.max(gs.static_residual()[m]))
    e0 = approx.errors[0]
    p_e0 = fit_exponent(gs.grid.r, np.abs(e0.values), window=(1e2, 1e4))
    manifest["initial_error.decay_slope"] = p_e0.slope
    _write_csv(out / "ground_state.csv", ["R", "Q", "Q1", "residual"],
               [gs.grid.r, gs.Q, gs.Q1, gs.static_residual()])

    if cfg.k_steps >= 1:
        v1, v2 = approx.corrections
        manifest["step1_correction.rlog_coef"] = v1.diagnostics["rlog_fit"]["c"]
        manifest["step1_correction.rlog_drift"] = v1.diagnostics["rlog_fit"]["drift"]
        manifest["build_approx.c_k"] = approx.constants["c_k"]
        manifest["build_approx.c_tilde_k"] = approx.constants["c_tilde_k"]
        manifest["step3_correction.singular_exponents"] = {
            k: (None if not np.isfinite(v) else float(v))
            for k, v in v2.diagnostics["singular_exponent"].items()}
        e2 = approx.errors[2]
        d = e2.meta["decay"]
        tl = np.array(d["t"]) ** (-cfg.nu)
        gain = fit_exponent(tl, np.array(d["sup_half_cone"]))
        manifest["step4_error.decay_slope_tlam"] = gain.slope
        a_grid = np.linspace(0.02, 0.9, 64)
        t_ref = approx.t_ref
        R_ref = a_grid * t_ref ** (-cfg.nu)
        _write_csv(out / "corrections.csv", ["R", "a", "v1", "v2"],
                   [R_ref, a_grid,
                    v1.field.eval_Ra(R_ref, a_grid),
                    v2.field.eval_Ra(R_ref, a_grid)])

    if cfg.run_spectral:
        op = build_operator(gs)
        xi = np.geomspace(1e-3, 120.0, cfg.n_xi)
        basis = spectral_density(op, xi)
        manifest["resonance_residual"] = resonance_residual(op)
        manifest["spectral_density.c_norm"] = basis.c_norm
        bumps = [(4, 1.0), (5, 1.2), (8, 2.0), (10, 2.5), (12, 3.0)]
        manifest["distorted_ft.plancherel_errors"] = [
            plancherel_error(basis, bump_profile(*b)) for b in bumps]
        rep = transference_diagnostic(basis, bump_profile(8, 2.0))
        manifest["transference_diagnostic.smoothing_ratio_a0"] = rep["smoothing_ratio_a0"]
        manifest["transference_diagnostic.reduction_factor"] = rep["reduction_factor"]
        _write_csv(out / "spectral.csv", ["xi", "rho", "A"],
                   [basis.xi, basis.rho, basis.A])

    # evolution toward the singularity
    r = np.linspace(0.0, 2.0 * cfg.t0, cfg.n_r + 1)
    u0, ut0 = assemble_data(approx, cfg.t0, r, cutoff_width=cfg.cutoff_width)
    params = EvolveParams(profile=profile, nu=cfg.nu, cfl=cfg.cfl,
                          n_snapshots=cfg.n_snapshots, lam_scale=K)
    traj = evolve(CauchyData(t0=cfg.t0, r=r, u=u0, ut=ut0), params)
    manifest["evolve.stop_reason"] = traj.stop_reason
    manifest["evolve.t_end"] = float(traj.states[-1].t)
    manifest["energy.initial"] = float(traj.energy_E[0])
    manifest["energy.final"] = float(traj.energy_E[-1])

    try:
        rates = extract_lambda(traj, gs)
    except NumericalError as exc:
        manifest["extract_lambda.error"] = str(exc)
        rates = None
    if rates is not None:
        for key in ("level", "lsq", "level_shifted", "lsq_shifted"):
            fit = rates.fits[key]
            manifest[f"extract_lambda.{key}.slope"] = fit["slope"]
            manifest[f"extract_lambda.{key}.stderr"] = fit["stderr"]
            if "tstar" in fit:
                manifest[f"extract_lambda.{key}.tstar"] = fit["tstar"]
        manifest["extract_lambda.agreement"] = rates.agreement
        manifest["extract_lambda.struwe_increasing"] = rates.struwe_increasing
        _write_csv(out / "rate_series.csv", ["t", "lam_level", "lam_lsq"],
                   [rates.t, rates.lam_level, rates.lam_lsq])

    # local energy of the deviation from the soliton at the measured scale
    ts, els = eps_energy_series(traj, gs, window=0.5)
    good = els > 0
    manifest["local_energy_eps.series_len"] = int(good.sum())
    try:
        efit = fit_exponent(1.0 / ts[good], els[good], log_correction=True)
        # measured against 1/t so the log-corrected basis stays valid
        manifest["local_energy_eps.power_in_t"] = -efit.slope
        manifest["local_energy_eps.log_coef"] = efit.log_coef
    except DegenerateFit:
        manifest["local_energy_eps.power_in_t"] = None
    _write_csv(out / "eps_energy.csv", ["t", "E_loc"], [ts, els])
    snaps = traj.states
    _write_csv(out / "final_snapshot.csv", ["r", "u", "ut"],
               [snaps[-1].r_grid, snaps[-1].u, snaps[-1].ut])

    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    manifest["out_dir"] = str(out)
    return manifest
