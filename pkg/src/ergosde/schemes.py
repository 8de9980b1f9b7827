"""One-step kernels: Euler-Maruyama and its tamed/projected/implicit variants.

Each scheme is described by a modification of the explicit Euler update
    Y' = P(Y) + b_tau(P(Y)) * tau + sigma_tau(P(Y)) dW
(with P the identity for EM/TEM and a radial truncation for PEM, and taming
applied to the coefficients for TEM), or by the implicit update
    Y' = Y + b(Y') * tau + sigma(Y) dW                      (BEM).

The continuous interpolation of one step freezes coefficients at the start of
the step; its per-scheme initial-datum and coefficient-freezing maps (g, g~)
are what the discrete-generator machinery consumes.  All kernels are pure
functions of (state, increment) and vectorize over leading batch dimensions.
"""

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np

from .model import SdeProblem

__all__ = [
    "SchemeSpec",
    "ModificationMaps",
    "tame_drift",
    "tame_diffusion",
    "project",
    "step",
    "step_ensemble",
    "modification_maps",
    "interpolate",
]

SCHEME_KINDS = ("em", "tem", "pem", "bem")


@dataclass(frozen=True)
class SchemeSpec:
    """Scheme selection plus step size and implicit-solver settings."""

    kind: str
    tau: float
    bem_tol: float = 1e-12
    bem_max_iter: int = 50

    def __post_init__(self):
        if self.kind not in SCHEME_KINDS:
            raise ValueError(f"unknown scheme kind {self.kind!r}; use one of {SCHEME_KINDS}")
        if not 0.0 < self.tau < 1.0:
            raise ValueError(f"tau must lie in (0, 1), got {self.tau}")
        if self.bem_tol <= 0.0 or self.bem_max_iter < 1:
            raise ValueError("bad implicit-solver settings")


@dataclass(frozen=True)
class ModificationMaps:
    """Per-scheme maps: projection P, tamed coefficients, and (g, g~).

    ``drift_coefficient``/``diffusion_coefficient`` evaluate the frozen
    interpolation coefficients as functions of the pre-step chain state, i.e.
    b_hat(g~(x)) and sigma_hat(g~(x)).
    """

    projection: Callable
    tamed_drift: Callable
    tamed_diffusion: Callable
    g_tau: Callable
    g_tilde_tau: Callable
    drift_coefficient: Callable
    diffusion_coefficient: Callable


def _taming_scale(x, tau, gamma):
    """(1 + tau |x|^(4(gamma-1)))^(-1/4), computed in log space.

    Direct evaluation overflows once |x|^(4(gamma-1)) leaves double range,
    which blow-up demos reach; the log form stays finite up to the point
    where the scale itself underflows.
    """
    norm = np.linalg.norm(x, axis=-1)
    with np.errstate(divide="ignore"):
        t = np.log(tau) + 4.0 * (gamma - 1.0) * np.log(norm, where=norm > 0.0, out=np.full(norm.shape, -np.inf))
    log_denom = np.where(t < 500.0, np.log1p(np.exp(np.minimum(t, 500.0))), t)
    return np.exp(-0.25 * log_denom)


def tame_drift(problem: SdeProblem, x, tau: float):
    """Tamed drift b(x) / (1 + tau |x|^(4(gamma-1)))^(1/4)."""
    x = np.asarray(x, dtype=float)
    scale = _taming_scale(x, tau, problem.params.gamma)
    return problem.drift(x) * scale[..., None]


def tame_diffusion(problem: SdeProblem, x, tau: float):
    """Tamed diffusion sigma(x) / (1 + tau |x|^(4(gamma-1)))^(1/4)."""
    x = np.asarray(x, dtype=float)
    scale = _taming_scale(x, tau, problem.params.gamma)
    return problem.diffusion(x) * scale[..., None, None]


def project(x, tau: float, gamma: float):
    """Radial truncation of the state to norm tau^(-1/(2 gamma)); fixes 0."""
    x = np.asarray(x, dtype=float)
    norm = np.linalg.norm(x, axis=-1)
    cap = tau ** (-1.0 / (2.0 * gamma))
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(norm > 0.0, np.minimum(1.0, cap / norm), 0.0)
    return x * scale[..., None]


def modification_maps(problem: SdeProblem, scheme: SchemeSpec) -> ModificationMaps:
    """The maps (P, b_tau, sigma_tau, g, g~) for the chosen scheme."""
    tau = scheme.tau
    gamma = problem.params.gamma
    identity = lambda x: np.asarray(x, dtype=float) + 0.0
    if scheme.kind == "bem":
        g = lambda x: np.asarray(x, dtype=float) - problem.drift(np.asarray(x, dtype=float)) * tau
        return ModificationMaps(
            projection=identity,
            tamed_drift=problem.drift,
            tamed_diffusion=problem.diffusion,
            g_tau=g,
            g_tilde_tau=identity,
            drift_coefficient=problem.drift,
            diffusion_coefficient=problem.diffusion,
        )
    if scheme.kind == "em":
        proj = identity
        b_tau = problem.drift
        s_tau = problem.diffusion
    elif scheme.kind == "tem":
        proj = identity
        b_tau = lambda x: tame_drift(problem, x, tau)
        s_tau = lambda x: tame_diffusion(problem, x, tau)
    else:  # pem
        proj = lambda x: project(x, tau, gamma)
        b_tau = problem.drift
        s_tau = problem.diffusion
    return ModificationMaps(
        projection=proj,
        tamed_drift=lambda x: b_tau(proj(x)),
        tamed_diffusion=lambda x: s_tau(proj(x)),
        g_tau=proj,
        g_tilde_tau=proj,
        drift_coefficient=lambda x: b_tau(proj(x)),
        diffusion_coefficient=lambda x: s_tau(proj(x)),
    )


# ---------------------------------------------------------------------------
# implicit solve for the backward Euler step
# ---------------------------------------------------------------------------


class BemSolverError(RuntimeError):
    """Implicit step did not meet tolerance; carries the worst residual."""

    def __init__(self, residual, iterations):
        self.residual = float(residual)
        self.iterations = int(iterations)
        super().__init__(
            f"backward Euler solve did not converge after {iterations} iterations "
            f"(residual {residual:.3e})"
        )


def _bem_solve_1d(problem, scheme, y, rhs):
    """Solve z = rhs + tau*b(z) for batched scalar states.

    Newton with damping; under one-sided Lipschitz drift F(z) = z - tau b(z)
    - rhs is strictly increasing for tau * sup b' < 1, so a guarded bisection
    fallback always terminates.
    """
    tau, tol = scheme.tau, scheme.bem_tol
    b = lambda z: problem.drift(z[..., None])[..., 0]
    db = lambda z: problem.drift_deriv(1, z[..., None], np.ones(z.shape + (1,)))[..., 0]
    r = rhs[..., 0]
    z = r + tau * b(y[..., 0])  # explicit predictor
    F = z - tau * b(z) - r
    for _ in range(scheme.bem_max_iter):
        live = ~(np.abs(F) <= tol)  # non-finite residuals stay live
        if not live.any():
            return z[..., None]
        J = 1.0 - tau * db(z)
        J = np.where(np.abs(J) < 1e-12, 1e-12, J)
        dz = np.where(live, F / J, 0.0)
        alpha = np.ones_like(z)
        for _ in range(40):
            z_new = z - alpha * dz
            F_new = z_new - tau * b(z_new) - r
            worse = live & (np.abs(F_new) > np.abs(F)) & (alpha > 1e-12)
            if not worse.any():
                break
            alpha = np.where(worse, 0.5 * alpha, alpha)
        z, F = z_new, F_new
    live = ~(np.abs(F) <= tol)
    if live.any():
        z = _bem_bisect_1d(b, tau, r, z, live, tol)
        F = z - tau * b(z) - r
        if (~(np.abs(F) <= tol)).any():
            worst = np.abs(F).max() if np.isfinite(F).all() else math.inf
            raise BemSolverError(worst, scheme.bem_max_iter)
    return z[..., None]


def _bem_bisect_1d(b, tau, r, z, live, tol):
    """Guarded bisection for lanes Newton left unconverged."""
    F = lambda w: w - tau * b(w) - r
    lo = np.where(live, z - 1.0, z)
    hi = np.where(live, z + 1.0, z)
    for _ in range(200):
        bad_lo = live & (F(lo) > 0.0)
        bad_hi = live & (F(hi) < 0.0)
        if not (bad_lo.any() or bad_hi.any()):
            break
        width = hi - lo
        lo = np.where(bad_lo, lo - width, lo)
        hi = np.where(bad_hi, hi + width, hi)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        fm = F(mid)
        done = np.abs(fm) <= tol
        if (done | ~live).all():
            return np.where(live, mid, z)
        lo = np.where(live & (fm < 0.0), mid, lo)
        hi = np.where(live & (fm >= 0.0), mid, hi)
    return np.where(live, 0.5 * (lo + hi), z)


def _bem_solve_nd(problem, scheme, y, rhs):
    """Per-sample Newton with full Jacobian for d > 1 states."""
    tau, tol = scheme.tau, scheme.bem_tol
    d = problem.dim_state
    flat_rhs = rhs.reshape(-1, d)
    flat_y = y.reshape(-1, d)
    out = np.empty_like(flat_rhs)
    eye = np.eye(d)
    basis = [np.broadcast_to(eye[i], (1, d)) for i in range(d)]
    for n in range(flat_rhs.shape[0]):
        r = flat_rhs[n]
        z = r + tau * problem.drift(flat_y[n][None, :])[0]
        for _ in range(scheme.bem_max_iter):
            F = z - tau * problem.drift(z[None, :])[0] - r
            if np.abs(F).max() <= tol:
                break
            jac = eye - tau * np.stack(
                [problem.drift_deriv(1, z[None, :], basis[i])[0] for i in range(d)],
                axis=1,
            )
            dz = np.linalg.solve(jac, F)
            alpha = 1.0
            base = np.abs(F).max()
            for _ in range(40):
                z_new = z - alpha * dz
                F_new = z_new - tau * problem.drift(z_new[None, :])[0] - r
                if np.abs(F_new).max() <= base or alpha <= 1e-12:
                    break
                alpha *= 0.5
            z = z_new
        F = z - tau * problem.drift(z[None, :])[0] - r
        if np.abs(F).max() > tol:
            raise BemSolverError(np.abs(F).max(), scheme.bem_max_iter)
        out[n] = z
    return out.reshape(rhs.shape)


@lru_cache(maxsize=128)
def _stepper(problem: SdeProblem, scheme: SchemeSpec):
    """Specialized one-step closure for repeated stepping (hot loops)."""
    tau = scheme.tau
    gamma = problem.params.gamma
    scalar_noise = problem.dim_noise == 1

    def noise_term(sig, dW):
        if scalar_noise:
            return sig[..., 0] * dW
        return np.einsum("...dm,...m->...d", sig, dW)

    if scheme.kind == "bem":
        if problem.dim_state == 1:
            return lambda y, dW: _bem_solve_1d(
                problem, scheme, y, y + noise_term(problem.diffusion(y), dW)
            )
        return lambda y, dW: _bem_solve_nd(
            problem, scheme, y, y + noise_term(problem.diffusion(y), dW)
        )
    if scheme.kind == "tem":

        def tem_step(y, dW):
            scale = _taming_scale(y, tau, gamma)[..., None]
            return y + problem.drift(y) * (tau * scale) + noise_term(
                problem.diffusion(y), dW
            ) * scale

        return tem_step
    if scheme.kind == "pem":

        def pem_step(y, dW):
            py = project(y, tau, gamma)
            return py + problem.drift(py) * tau + noise_term(problem.diffusion(py), dW)

        return pem_step

    def em_step(y, dW):
        return y + problem.drift(y) * tau + noise_term(problem.diffusion(y), dW)

    return em_step


def step_ensemble(problem: SdeProblem, scheme: SchemeSpec, y, dW):
    """One scheme iterate for a batch of states y (..., d) with noise (..., m)."""
    y = np.asarray(y, dtype=float)
    dW = np.asarray(dW, dtype=float)
    if dW.shape[-1] != problem.dim_noise:
        raise ValueError(
            f"noise dimension {dW.shape[-1]} != problem dim_noise {problem.dim_noise}"
        )
    return _stepper(problem, scheme)(y, dW)


def step(problem: SdeProblem, scheme: SchemeSpec, y, dW):
    """Single-state convenience wrapper around :func:`step_ensemble`."""
    y = np.atleast_1d(np.asarray(y, dtype=float))
    dW = np.atleast_1d(np.asarray(dW, dtype=float))
    return step_ensemble(problem, scheme, y[None, :], dW[None, :])[0]


def interpolate(problem: SdeProblem, scheme: SchemeSpec, y0, s_grid, refined):
    """Continuous interpolation of one step, evaluated on substep times.

    ``refined`` holds n_sub increments from :func:`ergosde.noise.refine` for
    the step's coarse increment; ``s_grid`` times must sit on the refinement
    grid {i * tau / n_sub}.  Returns the path values, one row per s.

    At s = tau the path reproduces the step output for explicit kinds and
    g_tau(step output) for the implicit kind.
    """
    y0 = np.atleast_1d(np.asarray(y0, dtype=float))
    s_grid = np.asarray(s_grid, dtype=float)
    refined = np.asarray(refined, dtype=float)
    if refined.ndim != 2 or refined.shape[1] != problem.dim_noise:
        raise ValueError("refined noise must have shape (n_sub, dim_noise)")
    n_sub = refined.shape[0]
    h = scheme.tau / n_sub
    idx = np.rint(s_grid / h).astype(int)
    if (
        s_grid.size
        and (
            np.any(np.diff(s_grid) < 0)
            or s_grid[0] < -1e-12
            or s_grid[-1] > scheme.tau * (1 + 1e-12)
            or np.max(np.abs(idx * h - s_grid)) > 1e-9 * max(scheme.tau, 1.0)
        )
    ):
        raise ValueError("s_grid must be sorted within [0, tau] on the refinement grid")
    maps = modification_maps(problem, scheme)
    start = maps.g_tau(y0[None, :])[0]
    bvec = maps.drift_coefficient(y0[None, :])[0]
    sig = maps.diffusion_coefficient(y0[None, :])[0]
    w_partial = np.vstack([np.zeros((1, problem.dim_noise)), np.cumsum(refined, axis=0)])
    w_at = w_partial[idx]
    return start[None, :] + s_grid[:, None] * bvec[None, :] + w_at @ sig.T
