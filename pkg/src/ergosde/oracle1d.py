"""Quadrature-grade ground truth for scalar problems (d = m = 1).

The stationary density of dX = b(X) dt + sigma(X) dW with nondegenerate
sigma is p(x) proportional to sigma(x)^-2 exp(int_0^x 2 b / sigma^2 dy).
Everything downstream (the stationary mean pi(phi), and the solution of
phi - pi(phi) = A f with its derivatives) reduces to one-dimensional
integrals against p, evaluated here with per-cell Gauss-Legendre panels and
log-space accumulation: the exponent int 2b/sigma^2 reaches thousands at the
truncation boundary, so densities and their partial integrals are carried as
(sign, log magnitude) pairs and only ratios ever return to linear scale.

The solver's own error is controlled by an independent residual: first and
second derivatives are re-derived from the tabulated f by finite differences
and plugged into b f' + (sigma^2/2) f'' - (phi - pi(phi)), whose sup must
sit below 1e-8 before a table is returned.
"""

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.interpolate import CubicSpline

from . import noise as noise_mod
from .ergodic import run_ensemble
from .model import SdeProblem, TestFunction
from .schemes import SchemeSpec

__all__ = [
    "StationaryDensity1d",
    "SteinSolution1d",
    "SemigroupCheck",
    "stationary_density",
    "pi_of",
    "stein_solution",
    "verify_semigroup_route",
    "derivative_growth_fit",
]

_GL_MAIN = 12  # per-cell nodes for all density integrals
_GL_SUB = 6    # nodes for the in-cell antiderivative of 2b/sigma^2
_GL_ERR = 6    # embedded lower-order rule for quadrature error estimates
_TAIL_TOL = 1e-12
_RESIDUAL_TOL = 1e-8
_R_LADDER = (8.0, 12.0, 16.0, 24.0)
_CELLS_PER_UNIT = 1024  # ~4.9e-4 grid spacing


def _as_scalar_fn(problem: SdeProblem, which: str) -> Callable:
    """Scalar-argument views of a 1-d problem's coefficients."""
    if which == "b":
        return lambda u: problem.drift(u[..., None])[..., 0]
    if which == "db":
        return lambda u: problem.drift_deriv(1, u[..., None], np.ones(u.shape + (1,)))[..., 0]
    if which == "d2b":
        one = lambda u: np.ones(u.shape + (1,))
        return lambda u: problem.drift_deriv(2, u[..., None], one(u), one(u))[..., 0]
    if which == "s":
        return lambda u: problem.diffusion(u[..., None])[..., 0, 0]
    if which == "ds":
        return lambda u: problem.diffusion_deriv(1, 0, u[..., None], np.ones(u.shape + (1,)))[..., 0]
    if which == "d2s":
        one = lambda u: np.ones(u.shape + (1,))
        return lambda u: problem.diffusion_deriv(2, 0, u[..., None], one(u), one(u))[..., 0]
    raise KeyError(which)


@dataclass
class StationaryDensity1d:
    """Normalized log-density table on [-R, R] with certified tail bound.

    Construction happens on a wider internal grid (a few decay lengths past
    each boundary) so that downstream flux integrals effectively include the
    tail; the public table is the core [-R, R] slice.
    """

    problem: str
    grid: np.ndarray
    log_density: np.ndarray      # log of the normalized density at grid points
    normalizer: float            # log integral of the unnormalized density
    tail_mass_bound: float
    # extended-grid quadrature internals shared by pi_of / stein_solution
    full_grid: np.ndarray = field(repr=False)
    full_log_density: np.ndarray = field(repr=False)
    core: slice = field(repr=False)                  # core indices in full_grid
    nodes: np.ndarray = field(repr=False)            # (n_cells, g) abscissae
    node_weights: np.ndarray = field(repr=False)     # (n_cells, g)
    node_logp: np.ndarray = field(repr=False)        # unnormalized log p at nodes
    err_nodes: np.ndarray = field(repr=False)
    err_weights: np.ndarray = field(repr=False)
    err_logp: np.ndarray = field(repr=False)
    decay_rate_right: float = field(repr=False, default=0.0)
    decay_rate_left: float = field(repr=False, default=0.0)

    @property
    def radius(self) -> float:
        return float(self.grid[-1])

    def pdf(self, x) -> np.ndarray:
        """Density at arbitrary points inside the table (log-linear interp)."""
        x = np.asarray(x, dtype=float)
        if np.any(x < self.grid[0]) or np.any(x > self.grid[-1]):
            raise ValueError("point outside the density table domain")
        return np.exp(np.interp(x, self.grid, self.log_density))


def _cell_quadrature(lo_edges, h, order):
    """Nodes/weights of per-cell Gauss-Legendre rules, shape (n_cells, order)."""
    z, w = leggauss(order)
    nodes = lo_edges[:, None] + (z[None, :] + 1.0) * (h / 2.0)
    weights = np.broadcast_to(w * (h / 2.0), nodes.shape)
    return nodes, weights


def _antiderivative_at(fn, anchors, targets):
    """int_anchor^target fn for matching arrays, via a small GL rule."""
    z, w = leggauss(_GL_SUB)
    half = (targets - anchors) / 2.0
    mid = (targets + anchors) / 2.0
    pts = mid[..., None] + half[..., None] * z
    vals = fn(pts)
    return half * np.sum(vals * w, axis=-1)


def _signed_log_cumsum(signs, logabs):
    """Prefix sums of signed values in (sign, log magnitude) representation."""
    pos = np.where(signs > 0, logabs, -np.inf)
    neg = np.where(signs < 0, logabs, -np.inf)
    cpos = np.logaddexp.accumulate(pos)
    cneg = np.logaddexp.accumulate(neg)
    return cpos, cneg


def _signed_log_diff(cpos, cneg):
    """Combine positive/negative log parts into (sign, log |sum|)."""
    with np.errstate(invalid="ignore", divide="ignore"):
        big = np.maximum(cpos, cneg)
        small = np.minimum(cpos, cneg)
        mag = big + np.log1p(-np.exp(np.minimum(small - big, -1e-18)))
    sign = np.where(cpos > cneg, 1.0, np.where(cneg > cpos, -1.0, 0.0))
    mag = np.where(sign == 0.0, -np.inf, mag)
    both_empty = np.isneginf(cpos) & np.isneginf(cneg)
    mag = np.where(both_empty, -np.inf, mag)
    return sign, mag


def stationary_density(
    problem: SdeProblem,
    R: Optional[float] = None,
    n_grid: Optional[int] = None,
) -> StationaryDensity1d:
    """Stationary density table for a scalar problem.

    With R = None the truncation radius walks the ladder {8, 12, 16, 24}
    until the certified tail bound drops below 1e-12.  n_grid defaults to
    about 1024 cells per unit length (odd count, so 0 is a grid point).
    """
    if problem.dim_state != 1 or problem.dim_noise != 1:
        raise ValueError("the exact oracle requires d = m = 1")
    if R is not None:
        return _density_at_radius(problem, float(R), n_grid)
    last_exc = None
    for radius in _R_LADDER:
        try:
            return _density_at_radius(problem, radius, n_grid)
        except ValueError as exc:
            if "tail mass bound" not in str(exc):
                raise
            last_exc = exc
    raise ValueError(
        f"no radius in {_R_LADDER} certifies the tail (last: {last_exc}); "
        "the problem's coercivity may be too weak for the oracle"
    )


def _density_at_radius(problem, R, n_grid):
    if n_grid is None:
        cells_per_unit = _CELLS_PER_UNIT
    else:
        if n_grid < 129:
            raise ValueError("n_grid too small for a certified table")
        cells_per_unit = max(64, (n_grid - 1) // int(2 * R))
    h = 1.0 / cells_per_unit
    b = _as_scalar_fn(problem, "b")
    sig = _as_scalar_fn(problem, "s")
    dsig = _as_scalar_fn(problem, "ds")
    probe = sig(np.linspace(-R - 3.0, R + 3.0, 257))
    if np.min(probe**2) < 1e-12:
        raise ValueError("degenerate diffusion on the grid; the oracle needs sigma^2 > 0")
    integrand = lambda u: 2.0 * b(u) / sig(u) ** 2

    # boundary decay rates of log p; they certify the tail bound and set how
    # far the internal grid must extend so truncating there is harmless
    rate_right = -(integrand(np.array([R]))[0] - 2.0 * dsig(np.array([R]))[0] / sig(np.array([R]))[0])
    rate_left = integrand(np.array([-R]))[0] - 2.0 * dsig(np.array([-R]))[0] / sig(np.array([-R]))[0]
    if rate_right <= 0.0 or rate_left <= 0.0:
        raise ValueError(
            f"tail mass bound unavailable at R = {R}: log-density not decaying "
            "at the boundary; enlarge R"
        )
    ext_right = min(3.0, max(0.25, 30.0 / rate_right))
    ext_left = min(3.0, max(0.25, 30.0 / rate_left))
    n_core = 2 * int(round(R * cells_per_unit))
    n_left = int(math.ceil(ext_left * cells_per_unit))
    n_right = int(math.ceil(ext_right * cells_per_unit))
    n_cells = n_left + n_core + n_right
    lo = -R - n_left * h
    grid = lo + h * np.arange(n_cells + 1)
    core = slice(n_left, n_left + n_core + 1)
    center = n_left + n_core // 2  # grid[center] == 0

    sig_grid = sig(grid)
    if np.min(sig_grid**2) < 1e-12:
        raise ValueError("degenerate diffusion on the grid; the oracle needs sigma^2 > 0")

    nodes, weights = _cell_quadrature(grid[:-1], h, _GL_MAIN)
    err_nodes, err_weights = _cell_quadrature(grid[:-1], h, _GL_ERR)

    # antiderivative s(x) = int_0^x 2b/sigma^2, anchored at the center point
    cell_inc = np.sum(weights * integrand(nodes), axis=-1)
    s_grid = np.concatenate([[0.0], np.cumsum(cell_inc)])
    s_grid = s_grid - s_grid[center]
    s_nodes = s_grid[:-1, None] + np.cumsum(
        np.concatenate(
            [
                _antiderivative_at(integrand, grid[:-1], nodes[:, 0])[:, None],
                _antiderivative_at(integrand, nodes[:, :-1], nodes[:, 1:]),
            ],
            axis=1,
        ),
        axis=1,
    )
    s_err_nodes = s_grid[:-1, None] + np.cumsum(
        np.concatenate(
            [
                _antiderivative_at(integrand, grid[:-1], err_nodes[:, 0])[:, None],
                _antiderivative_at(integrand, err_nodes[:, :-1], err_nodes[:, 1:]),
            ],
            axis=1,
        ),
        axis=1,
    )

    grid_logp_un = s_grid - 2.0 * np.log(np.abs(sig_grid))
    node_logp = s_nodes - 2.0 * np.log(np.abs(sig(nodes)))
    err_logp = s_err_nodes - 2.0 * np.log(np.abs(sig(err_nodes)))

    peak = float(np.max(node_logp))
    log_norm = peak + math.log(float(np.sum(weights * np.exp(node_logp - peak))))
    full_logp = grid_logp_un - log_norm

    # mass(|x| > R) <= p(R)/rate(R) per side (log-density decays at least at
    # the boundary rate under coercive drift)
    tail = math.exp(full_logp[core][-1]) / rate_right
    tail += math.exp(full_logp[core][0]) / rate_left
    if tail > _TAIL_TOL:
        raise ValueError(
            f"tail mass bound {tail:.3e} above {_TAIL_TOL} at R = {R}; enlarge R"
        )

    return StationaryDensity1d(
        problem=problem.name,
        grid=grid[core],
        log_density=full_logp[core],
        normalizer=log_norm,
        tail_mass_bound=tail,
        full_grid=grid,
        full_log_density=full_logp,
        core=core,
        nodes=nodes,
        node_weights=np.ascontiguousarray(weights),
        node_logp=node_logp,
        err_nodes=err_nodes,
        err_weights=np.ascontiguousarray(err_weights),
        err_logp=err_logp,
        decay_rate_right=float(rate_right),
        decay_rate_left=float(rate_left),
    )


def _phi_values(phi, x):
    if isinstance(phi, TestFunction):
        return phi.value(x[..., None])
    return phi(x)


def _integrate_against(density: StationaryDensity1d, values_fn, order="main", core_only=False):
    """sum of w * f * p over quadrature nodes, in scaled space."""
    if order == "main":
        nodes, weights, logp = density.nodes, density.node_weights, density.node_logp
    else:
        nodes, weights, logp = density.err_nodes, density.err_weights, density.err_logp
    if core_only:
        cells = slice(density.core.start, density.core.stop - 1)
        nodes, weights, logp = nodes[cells], weights[cells], logp[cells]
    scaled = np.exp(logp - density.normalizer)
    return float(np.sum(weights * values_fn(nodes) * scaled))


def pi_of(density: StationaryDensity1d, phi) -> float:
    """Stationary mean of phi with an embedded quadrature error estimate.

    ``phi`` may be a TestFunction (integrated over the full internal grid,
    with a growth gate against the tail decay) or a plain callable defined on
    the core table domain only.
    """
    value, err = pi_of_with_error(density, phi)
    return value


def pi_of_with_error(density: StationaryDensity1d, phi):
    core_only = not isinstance(phi, TestFunction)
    if isinstance(phi, TestFunction):
        deg = phi.growth_degree
        rate = min(density.decay_rate_right, density.decay_rate_left)
        if deg > 0 and rate * density.radius <= deg + 2.0:
            raise ValueError(
                f"test function growth degree {deg} incompatible with the "
                f"density's boundary decay rate {rate:.3g} at R = {density.radius}"
            )
    fn = (lambda u: _phi_values(phi, u))
    value = _integrate_against(density, fn, "main", core_only)
    coarse = _integrate_against(density, fn, "err", core_only)
    return value, abs(value - coarse)


@dataclass
class SteinSolution1d:
    """Tabulated solution of b f' + (sigma^2/2) f'' = phi - pi(phi)."""

    problem: str
    phi: str
    grid: np.ndarray
    f: np.ndarray
    f1: np.ndarray
    f2: np.ndarray
    f3: np.ndarray
    f4: np.ndarray
    pi_phi: float
    residual_sup: float
    _splines: dict = field(default_factory=dict, repr=False)

    def eval(self, x, order: int = 0) -> np.ndarray:
        """Spline evaluation of f or a derivative table at points inside the grid."""
        x = np.asarray(x, dtype=float)
        if np.any(x < self.grid[0]) or np.any(x > self.grid[-1]):
            worst = float(x.flat[np.argmax(np.abs(x))])
            raise ValueError(
                f"evaluation point {worst:.6g} outside table domain "
                f"[{self.grid[0]:.6g}, {self.grid[-1]:.6g}]"
            )
        if order not in self._splines:
            table = {0: self.f, 1: self.f1, 2: self.f2, 3: self.f3, 4: self.f4}[order]
            self._splines[order] = CubicSpline(self.grid, table)
        return self._splines[order](x)


def _central_fd(f, h):
    """4th-order central first/second derivatives on the interior [2, n-2)."""
    d1 = (f[:-4] - 8 * f[1:-3] + 8 * f[3:-1] - f[4:]) / (12 * h)
    d2 = (-f[:-4] + 16 * f[1:-3] - 30 * f[2:-2] + 16 * f[3:-1] - f[4:]) / (12 * h**2)
    return d1, d2


def stein_solution(
    problem: SdeProblem,
    density: StationaryDensity1d,
    phi: TestFunction,
) -> SteinSolution1d:
    """Solve the 1-d generator equation by flux integration against p.

    The first derivative is f'(x) = 2 F(x) / (sigma^2(x) p(x)) with
    F(x) = int_{-R}^x (phi - pi(phi)) p dy; accumulating F from the left of
    the density peak and from the right elsewhere keeps the ratio accurate in
    both tails.  Higher derivatives follow by differentiating the equation.
    The gauge is f(0) = 0; the flux construction itself selects the decaying
    solution (no component along exp(int -2b/sigma^2)).
    """
    grid = density.full_grid
    h = grid[1] - grid[0]
    pi_phi, _ = pi_of_with_error(density, phi)

    psi_nodes = _phi_values(phi, density.nodes) - pi_phi
    scaled = np.exp(density.node_logp - density.normalizer)
    terms = density.node_weights * psi_nodes * scaled
    cell_vals = np.sum(terms, axis=-1)
    cell_signs = np.sign(cell_vals)
    with np.errstate(divide="ignore"):
        cell_log = np.where(
            cell_signs != 0.0, np.log(np.abs(cell_vals)), -np.inf
        )

    # left-accumulated F at interior grid points, right-accumulated suffix
    lpos, lneg = _signed_log_cumsum(cell_signs, cell_log)
    rpos, rneg = _signed_log_cumsum(cell_signs[::-1], cell_log[::-1])
    sl, ml = _signed_log_diff(lpos, lneg)
    sr, mr = _signed_log_diff(rpos, rneg)

    n_pts = grid.shape[0]
    log_p = density.full_log_density
    switch = int(np.argmax(log_p))
    signF = np.zeros(n_pts)
    logF = np.full(n_pts, -np.inf)
    # F(grid[i]) from the left for i <= switch (prefix over cells < i)
    signF[1 : switch + 1] = sl[:switch]
    logF[1 : switch + 1] = ml[:switch]
    # F(grid[i]) = -int_{x_i}^{edge} for i > switch (suffix over cells >= i)
    signF[switch + 1 : -1] = -sr[::-1][switch + 1 :]
    logF[switch + 1 : -1] = mr[::-1][switch + 1 :]

    sig = _as_scalar_fn(problem, "s")(grid)
    b = _as_scalar_fn(problem, "b")(grid)
    db = _as_scalar_fn(problem, "db")(grid)
    d2b = _as_scalar_fn(problem, "d2b")(grid)
    ds = _as_scalar_fn(problem, "ds")(grid)
    d2s = _as_scalar_fn(problem, "d2s")(grid)
    sig2 = sig**2

    f1 = 2.0 * signF * np.exp(logF - np.log(sig2) - log_p)

    psi = _phi_values(phi, grid) - pi_phi
    one = np.ones(grid.shape + (1,))
    xcol = grid[:, None]
    dphi = phi.deriv(1, xcol, one)
    d2phi = phi.deriv(2, xcol, one, one)

    f2 = (2.0 / sig2) * (psi - b * f1)
    f3 = (2.0 / sig2) * (dphi - db * f1 - (b + sig * ds) * f2)
    f4 = (2.0 / sig2) * (
        d2phi - d2b * f1 - (2.0 * db + ds**2 + sig * d2s) * f2 - (b + 2.0 * sig * ds) * f3
    )

    # f by corrected-trapezoid integration of f1 (uses f2 at the endpoints),
    # anchored at the center grid point: gauge f(0) = 0
    inc = 0.5 * h * (f1[:-1] + f1[1:]) + (h**2 / 12.0) * (f2[:-1] - f2[1:])
    center = int(np.argmin(np.abs(grid)))
    f = np.concatenate([[0.0], np.cumsum(inc)])
    f = f - f[center]

    # independent residual: re-derive f', f'' from the tabulated f by central
    # finite differences and plug them into the generator equation; judged on
    # the reported core only (every core point is interior to the full grid)
    fd1, fd2 = _central_fd(f, h)
    residual = b[2:-2] * fd1 + 0.5 * sig2[2:-2] * fd2 - psi[2:-2]
    core = density.core
    core_interior = slice(core.start - 2, core.stop - 2)
    residual_sup = float(np.max(np.abs(residual[core_interior])))
    if residual_sup >= _RESIDUAL_TOL:
        raise ValueError(
            f"Stein residual {residual_sup:.3e} above {_RESIDUAL_TOL}; refine the "
            "grid (larger n_grid) or enlarge R"
        )
    return SteinSolution1d(
        problem=problem.name,
        phi=phi.name,
        grid=density.grid,
        f=f[core],
        f1=f1[core],
        f2=f2[core],
        f3=f3[core],
        f4=f4[core],
        pi_phi=pi_phi,
        residual_sup=residual_sup,
    )


# ---------------------------------------------------------------------------
# semigroup cross-validation of the generator-inversion construction
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SemigroupProbe:
    x: float
    integral: float
    mc_error: float
    tail_bound: float
    f_reference: float
    gap: float
    status: str  # "pass" | "fail" | "inconclusive"


@dataclass(frozen=True)
class SemigroupCheck:
    probes: tuple
    decay_rate: float
    decay_r2: float
    status: str

    def summary(self) -> str:
        lines = [
            f"x={p.x:+.3f}: integral {p.integral:+.6f} vs f {p.f_reference:+.6f} "
            f"(gap {p.gap:.2e}, tol {3 * (p.mc_error + p.tail_bound):.2e}) {p.status}"
            for p in self.probes
        ]
        return "\n".join(lines + [f"overall: {self.status}"])


def verify_semigroup_route(
    problem: SdeProblem,
    phi: TestFunction,
    f_table: SteinSolution1d,
    T_max: float = 8.0,
    n_traj: int = 4000,
    probe_points=(-2.0, -1.0, 0.0, 1.0, 2.0),
    seed: int = 2,
    fine_tau: float = 5e-4,
    density: Optional[StationaryDensity1d] = None,
) -> SemigroupCheck:
    """Cross-validate the table against -int_0^T [P_t phi - pi(phi)] dt.

    The time integral is a Monte-Carlo estimate over fine tamed-Euler paths;
    the tail beyond T_max is bounded by the fitted exponential decay of
    |P_t phi - pi(phi)|.  The flux-built table is compared after removing the
    gauge: the semigroup solution is the one with stationary mean zero, so
    the reference is f - pi(f).
    """
    if density is None:
        density = stationary_density(problem)
    pi_phi = f_table.pi_phi
    pi_f = pi_of(density, lambda u: f_table.eval(u, 0))

    n_steps = max(2, round(T_max / fine_tau))
    probes = []
    series_for_fit = None
    for idx, x0 in enumerate(probe_points):
        means = np.empty(n_steps + 1)
        means[0] = _phi_values(phi, np.array([x0]))[0] - pi_phi
        integ = np.zeros(n_traj)  # per-trajectory running trapezoid of phi - pi
        prev = np.full(n_traj, means[0])
        last_se = [0.0]

        def observe(k, states, active, integ=integ, means=means, prev=prev):
            vals = _phi_values(phi, states[:, 0]) - pi_phi
            integ += 0.5 * fine_tau * (prev + vals)
            prev[:] = vals
            means[k] = float(vals.mean())
            if k == n_steps:
                last_se[0] = float(vals.std(ddof=1) / math.sqrt(vals.shape[0]))

        run_ensemble(
            problem,
            SchemeSpec("tem", fine_tau),
            np.array([x0]),
            n_traj,
            n_steps,
            seed,
            traj_start=idx * n_traj,
            callback=observe,
        )
        value = -float(integ.mean())
        mc_err = float(integ.std(ddof=1) / math.sqrt(n_traj))
        probes.append((x0, value, mc_err, means, last_se[0]))
        if series_for_fit is None or abs(x0) > abs(series_for_fit[0]):
            series_for_fit = (x0, means)

    # decay fit on the probe with the largest |x0| (strongest signal)
    t = np.arange(n_steps + 1) * fine_tau
    m = np.abs(series_for_fit[1])
    se_floor = 3.0 / math.sqrt(n_traj) * max(1.0, float(np.max(m)))
    mask = (m > se_floor) & (t < 0.75 * T_max) & (m > 0)
    lam, r2 = math.nan, 0.0
    if mask.sum() >= 6:
        slope, intercept = np.polyfit(t[mask], np.log(m[mask]), 1)
        lam = -float(slope)
        resid = np.log(m[mask]) - (slope * t[mask] + intercept)
        tot = float(np.sum((np.log(m[mask]) - np.log(m[mask]).mean()) ** 2))
        r2 = 1.0 - float(np.sum(resid**2)) / tot if tot > 0 else 1.0
    fit_ok = math.isfinite(lam) and lam > 0.0 and r2 >= 0.8

    rows = []
    worst = "pass"
    for x0, value, mc_err, means, se_last in probes:
        if fit_ok:
            # mass beyond T_max under the fitted decay, inflated by the noise
            # floor of the final-point estimate
            tail = (abs(means[-1]) + 3.0 * se_last) / lam
        else:
            tail = math.inf
        ref = float(f_table.eval(np.array([x0]), 0)[0] - pi_f)
        gap = abs(value - ref)
        if not fit_ok:
            status = "inconclusive"
        elif gap <= 3.0 * (mc_err + tail):
            status = "pass"
        else:
            status = "fail"
        rows.append(
            SemigroupProbe(
                x=float(x0),
                integral=value,
                mc_error=mc_err,
                tail_bound=float(tail),
                f_reference=ref,
                gap=gap,
                status=status,
            )
        )
        if status == "fail":
            worst = "fail"
        elif status == "inconclusive" and worst == "pass":
            worst = "inconclusive"
    return SemigroupCheck(probes=tuple(rows), decay_rate=lam, decay_r2=r2, status=worst)


def write_table_csv(path, density: StationaryDensity1d, solution: Optional[SteinSolution1d] = None):
    """Export (x, p[, f, f1..f4]) rows for plotting."""
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        if solution is None:
            writer.writerow(["x", "p"])
            for x, lp in zip(density.grid, density.log_density):
                writer.writerow([repr(float(x)), repr(math.exp(lp))])
        else:
            writer.writerow(["x", "p", "f", "f1", "f2", "f3", "f4"])
            for i, x in enumerate(solution.grid):
                writer.writerow(
                    [repr(float(x)), repr(math.exp(density.log_density[i]))]
                    + [repr(float(t[i])) for t in (solution.f, solution.f1, solution.f2, solution.f3, solution.f4)]
                )


def derivative_growth_fit(f_table: SteinSolution1d, orders=(1, 2, 3, 4)):
    """Fit log |f^(i)| ~ gamma_1 log(1 + |x|) on the outer half of the grid.

    Diagnostic for the polynomial-growth envelope of the solution's
    derivatives; near-constant magnitudes report exponent 0.
    """
    grid = f_table.grid
    R = grid[-1]
    outer = np.abs(grid) > R / 2.0
    out = {}
    tables = {1: f_table.f1, 2: f_table.f2, 3: f_table.f3, 4: f_table.f4}
    for i in orders:
        vals = np.abs(tables[i][outer])
        x = np.log1p(np.abs(grid[outer]))
        floor = 1e-13 * max(1.0, float(np.max(np.abs(tables[i]))))
        keep = vals > floor
        if keep.sum() < 8:
            out[i] = (0.0, 1.0)
            continue
        y = np.log(vals[keep])
        if float(np.std(y)) < 1e-6:
            out[i] = (0.0, 1.0)
            continue
        slope, intercept = np.polyfit(x[keep], y, 1)
        resid = y - (slope * x[keep] + intercept)
        tot = float(np.sum((y - y.mean()) ** 2))
        r2 = 1.0 - float(np.sum(resid**2)) / tot if tot > 0 else 1.0
        out[i] = (float(slope), r2)
    return out
