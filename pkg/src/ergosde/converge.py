"""Ergodic-error studies over step-size grids and convergence-order fits.

A study measures |pi_tau(phi) - pi(phi)| by stationary time averaging at each
tau against the 1-d oracle mean, then fits the log-log slope by weighted
least squares.  Budgets are set from a pilot run at the largest tau: the
predicted O(tau) error at each row determines how many steps keep the
statistical error a documented factor below it.  Rows whose measured error
is not resolved above noise (error <= 3 stderr) are excluded from the fit;
when fewer than three rows carry signal the report says so instead of
fitting noise.
"""

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.stats import t as student_t

from .ergodic import ensemble_time_average
from .model import SdeProblem, TestFunction
from .oracle1d import StationaryDensity1d, pi_of, stationary_density
from .schemes import SchemeSpec

__all__ = [
    "StudyBudget",
    "ConvergenceRow",
    "ConvergenceReport",
    "ergodic_error_study",
    "fit_order",
]

DEFAULT_TAU_GRID = (0.04, 0.02, 0.01, 0.005, 0.0025)


@dataclass(frozen=True)
class StudyBudget:
    """Sampling budget for one tau-grid study.

    ``stderr_factor`` is the target ratio |predicted error| / stderr per row
    (the documented default keeps stderr at most a fifth of the expected
    bias); ``row_factors`` may override it per tau.  ``max_row_steps`` caps
    the total chain-steps any single row may spend; rows hitting the cap can
    end up noise-dominated and are then excluded from the fit.
    """

    n_chains: int = 2048
    pilot_steps: int = 60_000_000
    stderr_factor: float = 5.0
    row_factors: dict = field(default_factory=dict)
    max_row_steps: float = 2.5e9
    min_row_steps: float = 2.0e7
    burn_time: float = 40.0
    seed: int = 0


@dataclass(frozen=True)
class ConvergenceRow:
    tau: float
    abs_error: float
    stderr: float
    signed_error: float
    n_steps_total: int
    included: bool  # abs_error > 3 stderr (signal above noise)


@dataclass(frozen=True)
class ConvergenceReport:
    rows: tuple
    slope: float
    slope_ci: tuple
    status: str  # "ok" | "inconclusive - increase budget"
    scheme: str
    problem: str
    phi: str
    seed: int
    pi_phi: float

    def summary(self) -> str:
        lines = [
            f"tau={r.tau:<8g} error={r.abs_error:.3e} stderr={r.stderr:.3e} "
            f"steps={r.n_steps_total:.2e} {'fit' if r.included else 'excluded'}"
            for r in self.rows
        ]
        if self.status == "ok":
            lines.append(
                f"slope {self.slope:.3f}  95% CI [{self.slope_ci[0]:.3f}, {self.slope_ci[1]:.3f}]"
            )
        else:
            lines.append(self.status)
        return "\n".join(lines)


def fit_order(rows: Sequence) -> tuple:
    """Weighted log-log slope with a 95% CI from at least three rows.

    Rows are (tau, abs_error, stderr) triples.  Weights follow the delta
    method, 1 / (stderr / error)^2; rows with zero stderr (analytic values)
    get effectively infinite weight, and if every row is exact the CI falls
    back to the residual-based t interval.
    """
    rows = [r for r in rows]
    if len(rows) < 3:
        raise ValueError("need at least 3 rows with signal to fit an order")
    taus = np.array([r[0] for r in rows], dtype=float)
    errs = np.array([r[1] for r in rows], dtype=float)
    ses = np.array([r[2] for r in rows], dtype=float)
    if np.any(errs <= 0.0):
        raise ValueError("rows must have positive error magnitudes")
    x = np.log(taus)
    y = np.log(errs)
    se_log = np.where(errs > 0, ses / errs, np.inf)
    exact = se_log < 1e-9
    if exact.all():
        slope, intercept = np.polyfit(x, y, 1)
        resid = y - (slope * x + intercept)
        dof = len(rows) - 2
        sxx = float(np.sum((x - x.mean()) ** 2))
        se_slope = math.sqrt(float(np.sum(resid**2)) / max(dof, 1) / sxx)
        half = float(student_t.ppf(0.975, max(dof, 1)) * se_slope) if dof > 0 else 0.0
        return float(slope), (float(slope) - half, float(slope) + half)
    w = 1.0 / np.clip(se_log, 1e-9, np.inf) ** 2
    xbar = float(np.sum(w * x) / np.sum(w))
    ybar = float(np.sum(w * y) / np.sum(w))
    sxx = float(np.sum(w * (x - xbar) ** 2))
    slope = float(np.sum(w * (x - xbar) * (y - ybar)) / sxx)
    # measurement variances are known (batch-means stderrs), so the slope
    # uncertainty propagates directly; no residual-variance estimate needed
    se_slope = math.sqrt(1.0 / sxx)
    half = 1.96 * se_slope
    return slope, (slope - half, slope + half)


def run_study_row(
    problem: SdeProblem,
    scheme_kind: str,
    scheme_opts: dict,
    phi: TestFunction,
    tau: float,
    total_steps: float,
    n_chains: int,
    burn_time: float,
    seed: int,
    traj_start: int,
):
    """One tau row of a study: (ErgodicEstimate, total steps actually spent).

    Exposed so CLI workers can execute rows in separate processes; results
    are identical to the in-process path because the computation is shared.
    """
    n_steps = int(math.ceil(total_steps / n_chains))
    burn = min(n_steps // 2, max(1, int(math.ceil(burn_time / tau))))
    est = ensemble_time_average(
        problem,
        SchemeSpec(scheme_kind, tau, **scheme_opts),
        phi,
        np.zeros(problem.dim_state),
        seed=seed,
        n_chains=n_chains,
        n_steps=n_steps,
        burn_in=burn,
        traj_start=traj_start,
    )
    if est.diverged:
        raise RuntimeError(
            f"chain divergence at tau={tau} (step {est.diverged_step}); "
            "this scheme/step-size pair cannot be studied"
        )
    return est, n_steps * n_chains


def ergodic_error_study(
    problem: SdeProblem,
    scheme_kind: str,
    phi: TestFunction,
    tau_grid: Sequence[float] = DEFAULT_TAU_GRID,
    budget: Optional[StudyBudget] = None,
    density: Optional[StationaryDensity1d] = None,
    scheme_opts: Optional[dict] = None,
    row_mapper=None,
) -> ConvergenceReport:
    """Measure |pi_tau(phi) - pi(phi)| over a tau grid and fit the order.

    ``row_mapper(tasks)`` may execute the per-tau rows elsewhere (CLI worker
    pool); each task is (tau, total_steps, traj_start) and results must come
    back in task order.
    """
    budget = budget or StudyBudget()
    if density is None:
        density = stationary_density(problem)
    pi_phi = pi_of(density, phi)
    taus = sorted(set(float(t) for t in tau_grid), reverse=True)
    if len(taus) < 3:
        raise ValueError("tau_grid needs at least three distinct step sizes")
    opts = scheme_opts or {}

    def run_row(tau, total_steps, traj_start):
        return run_study_row(
            problem, scheme_kind, opts, phi, tau, total_steps,
            budget.n_chains, budget.burn_time, budget.seed, traj_start,
        )

    # pilot at the largest tau: noise scale, and bias signal if resolvable
    tau0 = taus[0]
    pilot_total = budget.pilot_steps
    est0, used0 = run_row(tau0, pilot_total, traj_start=0)
    for _ in range(3):
        if abs(est0.phi_mean - pi_phi) > 5.0 * est0.stderr:
            break
        if 2 * used0 > budget.max_row_steps:
            break
        pilot_total *= 2
        est0, used0 = run_row(tau0, pilot_total, traj_start=0)
    err0 = abs(est0.phi_mean - pi_phi)
    # noise scale: stderr^2 * averaging time is roughly constant per problem
    noise_scale = est0.stderr**2 * (used0 * tau0)

    tasks = []
    traj_start = budget.n_chains  # fresh trajectory ids per row
    for tau in taus[1:]:
        factor = budget.row_factors.get(tau, budget.stderr_factor)
        err_pred = err0 * tau / tau0
        if err_pred > 0 and math.isfinite(err_pred):
            target_se = err_pred / factor
            total_time = noise_scale / target_se**2
            total_steps = total_time / tau
        else:
            total_steps = budget.max_row_steps
        total_steps = min(budget.max_row_steps, max(budget.min_row_steps, total_steps))
        tasks.append((tau, total_steps, traj_start))
        traj_start += budget.n_chains

    if row_mapper is None:
        results = [run_row(*t) for t in tasks]
    else:
        results = row_mapper(tasks)

    rows = []
    for tau, (est, used) in zip(taus, [(est0, used0)] + list(results)):
        signed = est.phi_mean - pi_phi
        rows.append(
            ConvergenceRow(
                tau=tau,
                abs_error=abs(signed),
                stderr=est.stderr,
                signed_error=signed,
                n_steps_total=used,
                included=abs(signed) > 3.0 * est.stderr,
            )
        )

    signal = [(r.tau, r.abs_error, r.stderr) for r in rows if r.included]
    if len(signal) >= 3:
        slope, ci = fit_order(signal)
        status = "ok"
    else:
        slope, ci = math.nan, (math.nan, math.nan)
        status = "inconclusive - increase budget"
    return ConvergenceReport(
        rows=tuple(rows),
        slope=slope,
        slope_ci=ci,
        status=status,
        scheme=scheme_kind,
        problem=problem.name,
        phi=phi.name,
        seed=budget.seed,
        pi_phi=pi_phi,
    )


def analytic_em_ou_rows(tau_grid: Sequence[float] = DEFAULT_TAU_GRID):
    """Exact ergodic errors of explicit Euler on the OU benchmark, phi = x^2.

    The chain Y' = (1 - tau) Y + sqrt(2 tau) Z has stationary variance
    2/(2 - tau), so the ergodic error against the unit-variance stationary
    law is tau/(2 - tau) exactly; these rows exercise the fit path without
    simulation.
    """
    return [(float(t), float(t / (2.0 - t)), 0.0) for t in sorted(tau_grid, reverse=True)]
