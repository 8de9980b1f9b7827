"""Long-run simulation and invariant-measure statistics.

The workhorse is a vectorized ensemble runner: chains occupy array lanes,
noise comes addressed per (trajectory, step) from :mod:`ergosde.noise`, and
lanes that cross the divergence threshold are frozen with the offending step
recorded.  Aggregations reduce in fixed trajectory order, so estimates are
bitwise reproducible for a given (seed, config) regardless of scheduling.
"""

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import noise
from .model import SdeProblem, TestFunction, SampleSpec, check_monotonicity
from .schemes import BemSolverError, SchemeSpec, _stepper, step_ensemble

__all__ = [
    "ErgodicEstimate",
    "MomentTrace",
    "DecayFit",
    "Trajectory",
    "simulate_chain",
    "time_average",
    "ensemble_time_average",
    "ensemble_expectation",
    "moment_trace",
    "first_variation_decay",
    "run_ensemble",
]

DIVERGENCE_THRESHOLD = 1e100


@dataclass(frozen=True)
class ErgodicEstimate:
    """Monte-Carlo estimate of a stationary average with batch-means stderr."""

    phi_mean: float
    stderr: float
    n_steps: int
    burn_in: int
    n_batches: int
    seed: int
    diverged: bool = False
    diverged_step: Optional[int] = None
    diverged_fraction: float = 0.0


@dataclass(frozen=True)
class MomentTrace:
    """Ensemble means of |Y_k|^(2p) at geometrically spaced checkpoints."""

    exponent: float
    running_sup: float
    checkpoints: tuple  # ((k, mean), ...)

    @property
    def finite(self) -> bool:
        return math.isfinite(self.running_sup)


@dataclass(frozen=True)
class DecayFit:
    """Least-squares decay rate of log E|eta_t|^(2q) versus t."""

    lambda_hat: float
    r_squared: float
    series: tuple  # ((t, log mean), ...)
    note: str = ""


@dataclass
class Trajectory:
    """Stored (possibly thinned) states of a single simulated chain."""

    problem: str
    scheme: str
    tau: float
    seed: int
    trajectory_id: int
    n_steps: int
    thin: int
    ks: np.ndarray
    states: np.ndarray
    diverged: bool
    diverged_step: Optional[int]


def run_ensemble(
    problem: SdeProblem,
    scheme: SchemeSpec,
    y0,
    n_chains: int,
    n_steps: int,
    seed: int,
    traj_start: int = 0,
    callback: Optional[Callable] = None,
    block_steps: int = 1024,
    divergence_threshold: float = DIVERGENCE_THRESHOLD,
):
    """Advance n_chains lanes n_steps; returns (states, active, diverged_step).

    ``callback(k, states, active)`` fires after every step with k the number
    of completed steps.  Diverged lanes freeze at their first state beyond the
    threshold; ``diverged_step`` holds that k per lane (-1 when none).
    """
    d, m = problem.dim_state, problem.dim_noise
    states = np.broadcast_to(np.asarray(y0, dtype=float), (n_chains, d)).copy()
    ids = np.arange(traj_start, traj_start + n_chains, dtype=np.uint64)
    active = np.ones(n_chains, dtype=bool)
    any_frozen = False
    diverged_step = np.full(n_chains, -1, dtype=np.int64)
    stepper = _stepper(problem, scheme)
    active_col = active[:, None]
    for k0 in range(0, n_steps, block_steps):
        nb = min(block_steps, n_steps - k0)
        dws = noise.step_block(seed, ids, k0, nb, m, scheme.tau)
        for i in range(nb):
            k = k0 + i
            safe = np.where(active_col, states, 0.0) if any_frozen else states
            try:
                with np.errstate(over="ignore", invalid="ignore"):
                    stepped = stepper(safe, dws[i])
            except BemSolverError as exc:
                raise RuntimeError(
                    f"implicit step failed at step {k} "
                    f"(residual {exc.residual:.3e})"
                ) from exc
            states = np.where(active_col, stepped, states) if any_frozen else stepped
            with np.errstate(over="ignore", invalid="ignore"):
                norm = np.abs(states[:, 0]) if d == 1 else np.linalg.norm(states, axis=-1)
                newly = active & ~(norm <= divergence_threshold)
            if newly.any():
                diverged_step[newly] = k + 1
                active &= ~newly
                active_col = active[:, None]
                any_frozen = True
            if callback is not None:
                callback(k + 1, states, active)
    return states, active, diverged_step


def simulate_chain(
    problem: SdeProblem,
    scheme: SchemeSpec,
    y0,
    n_steps: int,
    stream: noise.NoiseStream,
    thin: int = 1,
) -> Trajectory:
    """Iterate one chain, storing every ``thin``-th state (k = 0 included)."""
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    if thin < 1:
        raise ValueError("thin must be >= 1")
    n_stored = n_steps // thin + 1
    d = problem.dim_state
    ks = np.empty(n_stored, dtype=np.int64)
    states = np.empty((n_stored, d), dtype=float)
    ks[0] = 0
    states[0] = np.asarray(y0, dtype=float)
    pos = 1

    def record(k, current, active):
        nonlocal pos
        if k % thin == 0:
            ks[pos] = k
            states[pos] = current[0]
            pos += 1

    final, active, div = run_ensemble(
        problem,
        scheme,
        np.asarray(y0, dtype=float),
        1,
        n_steps,
        stream.seed,
        traj_start=stream.trajectory_id,
        callback=record,
    )
    return Trajectory(
        problem=problem.name,
        scheme=scheme.kind,
        tau=scheme.tau,
        seed=stream.seed,
        trajectory_id=stream.trajectory_id,
        n_steps=n_steps,
        thin=thin,
        ks=ks[:pos],
        states=states[:pos],
        diverged=bool(~active[0]),
        diverged_step=int(div[0]) if div[0] >= 0 else None,
    )


def _batch_stats(values, n_batches):
    """Mean and batch-means standard error of a 1-d sample sequence."""
    n = values.shape[0]
    if n < n_batches:
        raise ValueError(f"need at least n_batches={n_batches} samples, got {n}")
    blen = n // n_batches
    used = values[n - blen * n_batches :]
    batches = used.reshape(n_batches, blen).mean(axis=1)
    mean = float(used.mean())
    stderr = float(batches.std(ddof=1) / math.sqrt(n_batches))
    return mean, stderr


def time_average(
    phi: TestFunction,
    trajectory: Trajectory,
    burn_in: int,
    n_batches: int = 32,
) -> ErgodicEstimate:
    """Stationary average of phi along one chain, batch-means standard error."""
    if burn_in >= trajectory.n_steps:
        raise ValueError("burn_in must be smaller than the trajectory length")
    if n_batches < 8:
        raise ValueError("need at least 8 batches for a usable stderr")
    if trajectory.diverged:
        return ErgodicEstimate(
            phi_mean=math.nan,
            stderr=math.nan,
            n_steps=trajectory.n_steps,
            burn_in=burn_in,
            n_batches=n_batches,
            seed=trajectory.seed,
            diverged=True,
            diverged_step=trajectory.diverged_step,
            diverged_fraction=1.0,
        )
    keep = trajectory.ks > burn_in
    values = phi.value(trajectory.states[keep])
    mean, stderr = _batch_stats(values, n_batches)
    return ErgodicEstimate(
        phi_mean=mean,
        stderr=stderr,
        n_steps=trajectory.n_steps,
        burn_in=burn_in,
        n_batches=n_batches,
        seed=trajectory.seed,
    )


def ensemble_time_average(
    problem: SdeProblem,
    scheme: SchemeSpec,
    phi: TestFunction,
    y0,
    seed: int,
    n_chains: int,
    n_steps: int,
    burn_in: Optional[int] = None,
    n_batches: int = 32,
    traj_start: int = 0,
) -> ErgodicEstimate:
    """Stationary average pooled over independent chains (vectorized lanes).

    Each chain burns in separately; chain means are grouped into n_batches
    contiguous batches for the standard error, which is valid because chains
    are independent by construction of the noise streams.
    """
    if burn_in is None:
        burn_in = n_steps // 5
    if not 0 <= burn_in < n_steps:
        raise ValueError("burn_in must lie in [0, n_steps)")
    if n_chains % n_batches != 0:
        raise ValueError("n_chains must be divisible by n_batches")
    sums = np.zeros(n_chains)

    def accumulate(k, states, active):
        if k > burn_in:
            sums[:] += phi.value(states)

    final, active, div = run_ensemble(
        problem, scheme, y0, n_chains, n_steps, seed,
        traj_start=traj_start, callback=accumulate,
    )
    n_avg = n_steps - burn_in
    chain_means = sums / n_avg
    any_div = bool((~active).any())
    if any_div:
        first = int(div[div >= 0].min())
        return ErgodicEstimate(
            phi_mean=math.nan,
            stderr=math.nan,
            n_steps=n_steps,
            burn_in=burn_in,
            n_batches=n_batches,
            seed=seed,
            diverged=True,
            diverged_step=first,
            diverged_fraction=float((~active).mean()),
        )
    batches = chain_means.reshape(n_batches, -1).mean(axis=1)
    return ErgodicEstimate(
        phi_mean=float(chain_means.mean()),
        stderr=float(batches.std(ddof=1) / math.sqrt(n_batches)),
        n_steps=n_steps,
        burn_in=burn_in,
        n_batches=n_batches,
        seed=seed,
    )


def ensemble_expectation(
    problem: SdeProblem,
    scheme: Optional[SchemeSpec],
    phi: TestFunction,
    x0,
    T: float,
    n_traj: int,
    seed: int,
    fine_tau: float = 1e-3,
):
    """Monte-Carlo estimate of E phi(X_T^x0): (mean, stderr, diverged_fraction).

    With scheme=None a fine tamed-Euler reference discretization is used.
    """
    if T < 0:
        raise ValueError("T must be nonnegative")
    x0 = np.asarray(x0, dtype=float)
    if T == 0:
        return float(phi.value(x0[None, :])[0]), 0.0, 0.0
    if scheme is None:
        scheme = SchemeSpec("tem", fine_tau)
    n_steps = max(1, round(T / scheme.tau))
    final, active, div = run_ensemble(problem, scheme, x0, n_traj, n_steps, seed)
    vals = phi.value(final[active])
    frac = float((~active).mean())
    if vals.size == 0:
        return math.nan, math.nan, frac
    mean = float(vals.mean())
    stderr = float(vals.std(ddof=1) / math.sqrt(vals.size)) if vals.size > 1 else math.nan
    return mean, stderr, frac


def _geometric_checkpoints(n_steps):
    ks = {1 << i for i in range(int(math.log2(n_steps)) + 1) if (1 << i) <= n_steps}
    ks.add(n_steps)
    return sorted(ks)


def moment_trace(
    problem: SdeProblem,
    scheme: SchemeSpec,
    p: float,
    n_traj: int,
    n_steps: int,
    seed: int = 0,
    y0=None,
) -> MomentTrace:
    """Track ensemble means of |Y_k|^(2p); divergence shows up as inf."""
    if y0 is None:
        y0 = np.zeros(problem.dim_state)
    marks = set(_geometric_checkpoints(n_steps))
    y0_arr = np.broadcast_to(np.asarray(y0, dtype=float), (1, problem.dim_state))
    rows = [(0, float(np.linalg.norm(y0_arr, axis=-1)[0] ** (2.0 * p)))]

    def observe(k, states, active):
        if k in marks:
            with np.errstate(over="ignore", invalid="ignore"):
                v = np.linalg.norm(states, axis=-1) ** (2.0 * p)
            v = np.where(np.isfinite(v) & active, v, np.inf)
            rows.append((k, float(v.mean())))

    run_ensemble(problem, scheme, y0, n_traj, n_steps, seed, callback=observe)
    sup = max(m for _, m in rows) if rows else math.inf
    return MomentTrace(exponent=p, running_sup=sup, checkpoints=tuple(rows))


def first_variation_decay(
    problem: SdeProblem,
    x,
    v,
    q: float,
    T: float,
    n_traj: int,
    seed: int = 0,
    fine_tau: float = 1e-4,
    n_checkpoints: int = 40,
    monotonicity_probe: Optional[SampleSpec] = None,
) -> DecayFit:
    """Fit the exponential decay rate of E|eta_t|^(2q) along the flow.

    Simulates the pair (X, eta) with a fine tamed-Euler grid, freezing the
    linearized coefficients over each step:
        eta' = eta + grad b(X) eta tau + sum_j grad sigma_j(X) eta dW_j.
    Returns lambda_hat = -slope / (2q) from least squares on log E|eta|^(2q).
    """
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    if np.linalg.norm(v) == 0.0:
        return DecayFit(
            lambda_hat=math.nan,
            r_squared=math.nan,
            series=(),
            note="zero direction vector; fit skipped",
        )
    note = ""
    probe = monotonicity_probe or SampleSpec(n_samples=2000, seed=101)
    mon = check_monotonicity(problem, probe)
    if mon.violation_found:
        note = (
            "monotonicity violation found on probe set; exponential decay is "
            "not guaranteed"
        )
    scheme = SchemeSpec("tem", fine_tau)
    d, m = problem.dim_state, problem.dim_noise
    n_steps = max(1, round(T / fine_tau))
    stride = max(1, n_steps // n_checkpoints)
    ids = np.arange(n_traj, dtype=np.uint64)
    X = np.broadcast_to(x, (n_traj, d)).copy()
    eta = np.broadcast_to(v, (n_traj, d)).copy()
    rows = [(0.0, math.log(float(np.mean(np.linalg.norm(eta, axis=-1) ** (2 * q)))))]
    block = 1024
    for k0 in range(0, n_steps, block):
        nb = min(block, n_steps - k0)
        dws = noise.step_block(seed, ids, k0, nb, m, fine_tau)
        for i in range(nb):
            dw = dws[i]
            db_eta = problem.drift_deriv(1, X, eta)
            ds = np.zeros_like(eta)
            for j in range(m):
                ds += problem.diffusion_deriv(1, j, X, eta) * dw[:, j : j + 1]
            eta = eta + db_eta * fine_tau + ds
            X = step_ensemble(problem, scheme, X, dw)
            k = k0 + i + 1
            if k % stride == 0 or k == n_steps:
                mean = float(np.mean(np.linalg.norm(eta, axis=-1) ** (2 * q)))
                if mean > 0.0 and math.isfinite(mean):
                    rows.append((k * fine_tau, math.log(mean)))
    t = np.array([r[0] for r in rows])
    y = np.array([r[1] for r in rows])
    slope, intercept = np.polyfit(t, y, 1)
    resid = y - (slope * t + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return DecayFit(
        lambda_hat=float(-slope / (2.0 * q)),
        r_squared=r2,
        series=tuple(rows),
        note=note,
    )
