"""SDE problem definitions, test functions, and assumption checkers.

A problem bundles drift/diffusion callables with their derivative evaluators
up to order four and the dissipativity/growth constants they are claimed to
satisfy.  Checkers probe those claims on randomized point sets; they are
samplers, not provers, so a clean report means "no violation found among
n_samples probes", never "verified".

All evaluators are pure and accept leading batch dimensions: ``drift`` maps
``(..., d) -> (..., d)``, ``diffusion`` maps ``(..., d) -> (..., d, m)``, and
the k-th derivative evaluators return the k-linear forms applied to supplied
direction vectors.  Immutability plus purity make every object safe to share
across worker processes.
"""

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.special import ndtri

from . import noise

__all__ = [
    "AssumptionParams",
    "SdeProblem",
    "TestFunction",
    "SampleSpec",
    "AssumptionReport",
    "check_monotonicity",
    "check_coercivity",
    "check_growth_bounds",
    "drift_derivative_errors",
    "test_function_derivative_errors",
    "make_linear",
    "make_cubic",
    "get_problem",
    "get_test_function",
    "PROBLEMS",
    "TEST_FUNCTIONS",
]

# uniform channels used by SampleSpec (channel 0 is trajectory noise)
_CH_BOX = 1
_CH_RADIUS = 2
_CH_DIR = 3
_CH_PAIR_MODE = 4
_CH_OFFSET = 5
_CH_PROBE = 6


@dataclass(frozen=True)
class AssumptionParams:
    """Claimed dissipativity and growth constants for a problem.

    gamma is the superlinear growth exponent, L1 the one-sided Lipschitz
    (monotonicity) constant, (L2, L3) the coercivity constants, p_star the
    moment exponent, and growth_const the derivative-bound constant.  When
    ``rate_target`` is set the problem is meant for first-order ergodic rate
    studies, which additionally require 2*p_star >= max(5*gamma-4, 4*gamma+1).
    """

    gamma: float
    L1: float
    L2: float
    L3: float
    p_star: float
    growth_const: float
    rate_target: bool = False

    def __post_init__(self):
        if not self.gamma > 1.0:
            raise ValueError(f"gamma must satisfy gamma > 1, got {self.gamma}")
        if not self.L1 > 0.0:
            raise ValueError(f"L1 must be positive, got {self.L1}")
        if not self.L2 > 0.0:
            raise ValueError(f"L2 must be positive, got {self.L2}")
        if not self.L3 > 0.0:
            raise ValueError(f"L3 must be positive, got {self.L3}")
        if not self.p_star >= 2.0:
            raise ValueError(f"p_star must satisfy p_star >= 2, got {self.p_star}")
        if not self.growth_const > 0.0:
            raise ValueError(f"growth_const must be positive, got {self.growth_const}")
        if self.rate_target:
            need = max(5.0 * self.gamma - 4.0, 4.0 * self.gamma + 1.0)
            if 2.0 * self.p_star < need:
                raise ValueError(
                    f"rate-target problems need 2*p_star >= {need}, got {2 * self.p_star}"
                )


@dataclass(frozen=True)
class SdeProblem:
    """An SDE dX = b(X) dt + sigma(X) dW with derivative evaluators.

    ``drift_deriv(k, x, v1, .., vk)`` returns the k-linear form of the k-th
    drift derivative; ``diffusion_deriv(k, j, x, v1, .., vk)`` the analogue
    for diffusion column j.  Orders 1..4 must be present.
    """

    name: str
    dim_state: int
    dim_noise: int
    drift: Callable
    diffusion: Callable
    drift_deriv: Callable
    diffusion_deriv: Callable
    params: AssumptionParams
    notes: str = ""

    def sigma_columns(self, x):
        """Diffusion columns as an iterable of (..., d) arrays."""
        sig = self.diffusion(x)
        return [sig[..., j] for j in range(self.dim_noise)]


@dataclass(frozen=True)
class TestFunction:
    """Observable phi: R^d -> R with derivative forms up to order four.

    ``deriv(k, x, v1, .., vk)`` returns the scalar k-linear form.
    ``seminorm_bound`` bounds the C^4 seminorm |phi|_4 (sum over orders of the
    sup of the derivative norms); ``growth_degree`` is the polynomial growth
    order used to gate quadrature against a density's tail decay.
    """

    __test__ = False  # not a pytest collection target

    name: str
    value: Callable
    deriv: Callable
    seminorm_bound: float
    growth_degree: int = 0


@dataclass(frozen=True)
class SampleSpec:
    """Randomized probe-point specification for the assumption checkers.

    Points are drawn half from Uniform[-box_radius, box_radius]^d and half
    radially with radius min(tail_scale * |Cauchy|, tail_cap), which probes
    the asymptotic conditions far outside the box.  Pairs mix independent
    draws with near-diagonal perturbations so that local violations of the
    monotonicity condition are found as reliably as global ones.
    """

    n_samples: int = 10_000
    box_radius: float = 10.0
    tail_scale: float = 10.0
    tail_cap: float = 1_000.0
    seed: int = 0

    def points(self, d: int, lane: int = 0) -> np.ndarray:
        n = self.n_samples
        n_box = n // 2
        u = noise.uniforms(self.seed, _CH_BOX, n_box * d, start=lane * n * d)
        box = self.box_radius * (2.0 * u.reshape(n_box, d) - 1.0)
        n_tail = n - n_box
        ur = noise.uniforms(self.seed, _CH_RADIUS, n_tail, start=lane * n)
        radius = np.minimum(self.tail_scale * np.abs(np.tan(np.pi * (ur - 0.5))), self.tail_cap)
        ud = noise.uniforms(self.seed, _CH_DIR, n_tail * d, start=lane * n * d)
        direction = ndtri(ud.reshape(n_tail, d))
        norms = np.linalg.norm(direction, axis=1, keepdims=True)
        norms[norms == 0.0] = 1.0
        tail = radius[:, None] * direction / norms
        return np.concatenate([box, tail], axis=0)

    def pairs(self, d: int):
        x = self.points(d, lane=0)
        y = self.points(d, lane=1)
        n = self.n_samples
        um = noise.uniforms(self.seed, _CH_PAIR_MODE, n)
        uo = noise.uniforms(self.seed, _CH_OFFSET, n * (d + 1)).reshape(n, d + 1)
        # half the pairs become near-diagonal: y = x + delta with log-uniform scale
        near = um < 0.5
        scale = self.box_radius * 10.0 ** (-4.0 * uo[:, 0])
        delta = scale[:, None] * (2.0 * uo[:, 1:] - 1.0)
        y = np.where(near[:, None], x + delta, y)
        return x, y

    def directions(self, d: int, count: int, lane: int = 0) -> np.ndarray:
        u = noise.uniforms(self.seed, _CH_PROBE, count * d, start=lane * count * d)
        v = ndtri(u.reshape(count, d))
        norms = np.linalg.norm(v, axis=1, keepdims=True)
        norms[norms == 0.0] = 1.0
        return v / norms


@dataclass(frozen=True)
class AssumptionReport:
    """Outcome of probing one condition; worst_margin < 0 means a violation."""

    checked_condition: str
    problem: str
    n_samples: int
    worst_margin: float
    witness: tuple

    @property
    def violation_found(self) -> bool:
        return self.worst_margin < 0.0

    def summary(self) -> str:
        verdict = (
            "violation found" if self.violation_found else "no violation found"
        )
        return (
            f"{self.checked_condition} on {self.problem}: {verdict} "
            f"(n={self.n_samples}, worst margin {self.worst_margin:.6g})"
        )


def _require_finite(name, values, points):
    bad = ~np.isfinite(values.reshape(values.shape[0], -1)).all(axis=1)
    if bad.any():
        i = int(np.argmax(bad))
        raise ValueError(f"non-finite {name} at sample point {points[i].tolist()}")


def _hs_norm_sq(sig):
    return np.sum(sig * sig, axis=(-2, -1))


def check_monotonicity(problem: SdeProblem, sampler: SampleSpec) -> AssumptionReport:
    """Probe the one-sided Lipschitz condition on sampled pairs.

    The slack at a pair is
    -L1|x-y|^2 - [<x-y, b(x)-b(y)> + (2p*-1)/2 * ||sigma(x)-sigma(y)||_HS^2];
    nonnegative slack everywhere is consistent with the claimed L1.
    """
    p = problem.params
    x, y = sampler.pairs(problem.dim_state)
    bx, by = problem.drift(x), problem.drift(y)
    _require_finite("drift", bx, x)
    _require_finite("drift", by, y)
    sx, sy = problem.diffusion(x), problem.diffusion(y)
    _require_finite("diffusion", sx, x)
    _require_finite("diffusion", sy, y)
    diff = x - y
    inner = np.sum(diff * (bx - by), axis=-1)
    coef = (2.0 * p.p_star - 1.0) / 2.0
    slack = -p.L1 * np.sum(diff * diff, axis=-1) - (inner + coef * _hs_norm_sq(sx - sy))
    i = int(np.argmin(slack))
    return AssumptionReport(
        checked_condition="Monotonicity",
        problem=problem.name,
        n_samples=sampler.n_samples,
        worst_margin=float(slack[i]),
        witness=(x[i].tolist(), y[i].tolist()),
    )


def check_coercivity(problem: SdeProblem, sampler: SampleSpec) -> AssumptionReport:
    """Probe the coercivity condition on sampled points.

    Slack: L2 - L3|x|^(gamma+1) - [<x, b(x)> + p*(2p*-1)/2 * ||sigma(x)||_HS^2].
    """
    p = problem.params
    x = sampler.points(problem.dim_state)
    bx = problem.drift(x)
    _require_finite("drift", bx, x)
    sx = problem.diffusion(x)
    _require_finite("diffusion", sx, x)
    norm = np.linalg.norm(x, axis=-1)
    coef = p.p_star * (2.0 * p.p_star - 1.0) / 2.0
    lhs = np.sum(x * bx, axis=-1) + coef * _hs_norm_sq(sx)
    slack = p.L2 - p.L3 * norm ** (p.gamma + 1.0) - lhs
    i = int(np.argmin(slack))
    return AssumptionReport(
        checked_condition="Coercivity",
        problem=problem.name,
        n_samples=sampler.n_samples,
        worst_margin=float(slack[i]),
        witness=(x[i].tolist(),),
    )


def check_growth_bounds(problem: SdeProblem, sampler: SampleSpec) -> AssumptionReport:
    """Probe the polynomial derivative bounds of orders 1..4.

    Drift margin at order k: C*[1 or (1+|x|^(gamma-k))] - |D^k b(x)(v_1..v_k)|
    with unit directions; diffusion columns use the squared form with exponent
    gamma - (2k - 1).
    """
    p = problem.params
    d = problem.dim_state
    x = sampler.points(d)
    norm = np.linalg.norm(x, axis=-1)
    worst = math.inf
    witness = None
    for k in range(1, 5):
        vs = [sampler.directions(d, sampler.n_samples, lane=4 * k + i) for i in range(k)]
        try:
            db = problem.drift_deriv(k, x, *vs)
        except (KeyError, NotImplementedError) as exc:
            raise ValueError(f"missing drift derivative evaluator of order {k}") from exc
        _require_finite(f"drift derivative {k}", db, x)
        envelope = 1.0 if p.gamma <= k else 1.0 + norm ** (p.gamma - k)
        margin = p.growth_const * envelope - np.linalg.norm(db, axis=-1)
        i = int(np.argmin(margin))
        if margin[i] < worst:
            worst, witness = float(margin[i]), (x[i].tolist(), f"drift order {k}")
        env_sig = 1.0 if p.gamma <= 2 * k - 1 else 1.0 + norm ** (p.gamma - (2 * k - 1))
        for j in range(problem.dim_noise):
            try:
                ds = problem.diffusion_deriv(k, j, x, *vs)
            except (KeyError, NotImplementedError) as exc:
                raise ValueError(
                    f"missing diffusion derivative evaluator of order {k}"
                ) from exc
            _require_finite(f"diffusion derivative {k}", ds, x)
            margin = p.growth_const * env_sig - np.sum(ds * ds, axis=-1)
            i = int(np.argmin(margin))
            if margin[i] < worst:
                worst, witness = float(margin[i]), (x[i].tolist(), f"sigma_{j} order {k}")
    return AssumptionReport(
        checked_condition="GrowthBounds",
        problem=problem.name,
        n_samples=sampler.n_samples,
        worst_margin=worst,
        witness=witness,
    )


# ---------------------------------------------------------------------------
# derivative consistency probes (finite-difference cross-checks)
# ---------------------------------------------------------------------------


def _central_diff(f, x, v, h):
    return (f(x + h[:, None] * v) - f(x - h[:, None] * v)) / (2.0 * h[:, None])


def drift_derivative_errors(problem: SdeProblem, n_probes: int = 100, seed: int = 1234):
    """Max relative FD mismatch of each derivative order, drift and diffusion.

    Order k is checked against a central difference of the order k-1 form, so
    an error at order k localizes the inconsistent evaluator.
    """
    d = problem.dim_state
    spec = SampleSpec(n_samples=n_probes, box_radius=3.0, tail_cap=8.0, seed=seed)
    x = spec.points(d)
    vs = [spec.directions(d, n_probes, lane=20 + i) for i in range(4)]
    h = 6e-6 * (1.0 + np.linalg.norm(x, axis=-1))
    errors = {}
    for k in range(1, 5):
        if k == 1:
            fd = _central_diff(problem.drift, x, vs[0], h)
        else:
            lower = lambda y: problem.drift_deriv(k - 1, y, *vs[: k - 1])
            fd = _central_diff(lower, x, vs[k - 1], h)
        exact = problem.drift_deriv(k, x, *vs[:k])
        scale = np.maximum(np.linalg.norm(exact, axis=-1), 1.0)
        errors[f"drift_{k}"] = float(
            np.max(np.linalg.norm(fd - exact, axis=-1) / scale)
        )
        for j in range(problem.dim_noise):
            col = lambda y: problem.diffusion(y)[..., j]
            if k == 1:
                fd = _central_diff(col, x, vs[0], h)
            else:
                lower = lambda y: problem.diffusion_deriv(k - 1, j, y, *vs[: k - 1])
                fd = _central_diff(lower, x, vs[k - 1], h)
            exact = problem.diffusion_deriv(k, j, x, *vs[:k])
            scale = np.maximum(np.linalg.norm(exact, axis=-1), 1.0)
            errors[f"sigma{j}_{k}"] = float(
                np.max(np.linalg.norm(fd - exact, axis=-1) / scale)
            )
    return errors


def test_function_derivative_errors(phi: TestFunction, d: int = 1, n_probes: int = 100, seed: int = 99):
    """Max relative FD mismatch of phi's derivative orders 1..4."""
    spec = SampleSpec(n_samples=n_probes, box_radius=3.0, tail_cap=8.0, seed=seed)
    x = spec.points(d)
    vs = [spec.directions(d, n_probes, lane=40 + i) for i in range(4)]
    h = 6e-6 * (1.0 + np.linalg.norm(x, axis=-1))
    errors = {}
    for k in range(1, 5):
        if k == 1:
            fd = (phi.value(x + h[:, None] * vs[0]) - phi.value(x - h[:, None] * vs[0])) / (2.0 * h)
        else:
            lower = lambda y: phi.deriv(k - 1, y, *vs[: k - 1])
            fd = (lower(x + h[:, None] * vs[k - 1]) - lower(x - h[:, None] * vs[k - 1])) / (2.0 * h)
        exact = phi.deriv(k, x, *vs[:k])
        scale = np.maximum(np.abs(exact), 1.0)
        errors[k] = float(np.max(np.abs(fd - exact) / scale))
    return errors


def sampled_seminorm(phi: TestFunction, d: int = 1, n_probes: int = 2000, seed: int = 7) -> float:
    """Sampled lower bound on |phi|_4 (sum over orders of sup derivative norms)."""
    spec = SampleSpec(n_samples=n_probes, seed=seed)
    x = spec.points(d)
    total = 0.0
    for k in range(1, 5):
        vs = [spec.directions(d, n_probes, lane=60 + 4 * k + i) for i in range(k)]
        total += float(np.max(np.abs(phi.deriv(k, x, *vs))))
    return total


# ---------------------------------------------------------------------------
# built-in problem gallery
# ---------------------------------------------------------------------------


def _problem_from_scalar(name, b_funcs, s_funcs, params, notes=""):
    """Assemble a 1-d problem from scalar b, b', .., b'''' and sigma lists."""
    b0, b1, b2, b3, b4 = b_funcs
    s0, s1, s2, s3, s4 = s_funcs
    sd = {1: s1, 2: s2, 3: s3, 4: s4}
    bd = {1: b1, 2: b2, 3: b3, 4: b4}

    def drift(x):
        return b0(x[..., 0])[..., None]

    def diffusion(x):
        return s0(x[..., 0])[..., None, None]

    def drift_deriv(k, x, *vs):
        prod = np.ones(x.shape[:-1])
        for v in vs:
            prod = prod * v[..., 0]
        return (bd[k](x[..., 0]) * prod)[..., None]

    def diffusion_deriv(k, j, x, *vs):
        if j != 0:
            raise IndexError("1-d problems have a single diffusion column")
        prod = np.ones(x.shape[:-1])
        for v in vs:
            prod = prod * v[..., 0]
        return (sd[k](x[..., 0]) * prod)[..., None]

    return SdeProblem(
        name=name,
        dim_state=1,
        dim_noise=1,
        drift=drift,
        diffusion=diffusion,
        drift_deriv=drift_deriv,
        diffusion_deriv=diffusion_deriv,
        params=params,
        notes=notes,
    )


def make_cubic(
    c0: float,
    c1: float,
    c3: float,
    noise_kind: str = "const",
    noise_scale: float = math.sqrt(2.0),
    params: Optional[AssumptionParams] = None,
    name: str = "cubic",
    notes: str = "",
) -> SdeProblem:
    """1-d problem with drift c0 + c1*x + c3*x^3.

    noise_kind "const" gives sigma(x) = noise_scale; "sqrt1px2" gives the
    multiplicative nondegenerate sigma(x) = noise_scale * sqrt(1 + x^2).
    """
    b_funcs = (
        lambda x: c0 + c1 * x + c3 * x**3,
        lambda x: c1 + 3.0 * c3 * x**2,
        lambda x: 6.0 * c3 * x,
        lambda x: np.full_like(np.asarray(x, dtype=float), 6.0 * c3),
        lambda x: np.zeros_like(np.asarray(x, dtype=float)),
    )
    if noise_kind == "const":
        s_funcs = (
            lambda x: np.full_like(np.asarray(x, dtype=float), noise_scale),
            lambda x: np.zeros_like(np.asarray(x, dtype=float)),
            lambda x: np.zeros_like(np.asarray(x, dtype=float)),
            lambda x: np.zeros_like(np.asarray(x, dtype=float)),
            lambda x: np.zeros_like(np.asarray(x, dtype=float)),
        )
    elif noise_kind == "sqrt1px2":
        nu = noise_scale

        def q(x):
            return np.sqrt(1.0 + x * x)

        s_funcs = (
            lambda x: nu * q(x),
            lambda x: nu * x / q(x),
            lambda x: nu / q(x) ** 3,
            lambda x: -3.0 * nu * x / q(x) ** 5,
            lambda x: nu * (12.0 * x * x - 3.0) / q(x) ** 7,
        )
    else:
        raise ValueError(f"unknown noise_kind {noise_kind!r}")
    if params is None:
        params = AssumptionParams(
            gamma=3.0, L1=1.0, L2=10.0, L3=0.5, p_star=2.0, growth_const=6.0
        )
    return _problem_from_scalar(name, b_funcs, s_funcs, params, notes)


def make_linear(
    theta: float = 1.0,
    sigma: float = math.sqrt(2.0),
    dim: int = 1,
    params: Optional[AssumptionParams] = None,
    name: str = "ou",
    notes: str = "",
) -> SdeProblem:
    """Ornstein-Uhlenbeck problem b = -theta*x, sigma = const, in any dimension."""
    if params is None:
        # gamma is formal here: the linear drift satisfies the coercivity
        # condition only with gamma = 1, which the parameter gate excludes;
        # checkers on this problem will honestly report the tail violation.
        params = AssumptionParams(
            gamma=2.0, L1=theta, L2=4.0 * sigma**2, L3=0.25, p_star=2.0, growth_const=max(theta, 1.0)
        )

    def drift(x):
        return -theta * x

    def diffusion(x):
        eye = np.eye(dim)
        return np.broadcast_to(sigma * eye, x.shape[:-1] + (dim, dim)).copy()

    def drift_deriv(k, x, *vs):
        if k == 1:
            return -theta * vs[0]
        return np.zeros_like(x)

    def diffusion_deriv(k, j, x, *vs):
        if not 0 <= j < dim:
            raise IndexError("diffusion column out of range")
        return np.zeros_like(x)

    return SdeProblem(
        name=name,
        dim_state=dim,
        dim_noise=dim,
        drift=drift,
        diffusion=diffusion,
        drift_deriv=drift_deriv,
        diffusion_deriv=diffusion_deriv,
        params=params,
        notes=notes,
    )


def _p1():
    return make_linear(
        theta=1.0,
        sigma=math.sqrt(2.0),
        name="p1",
        notes="Lipschitz sanity case; exact stationary law is standard normal. "
        "Coercivity with gamma > 1 fails in the far tail (linear drift).",
    )


def _p2():
    # Tilted dissipative cubic.  The constant drift term breaks the x -> -x
    # symmetry; without it every odd observable has zero ergodic error under
    # every scheme here, and rate fits on such observables are unidentifiable.
    params = AssumptionParams(
        gamma=3.0,
        L1=1.0,
        L2=70.0,
        L3=0.5,
        p_star=7.0,
        growth_const=6.5,
        rate_target=True,
    )
    return make_cubic(
        1.0,
        -1.0,
        -1.0,
        noise_kind="sqrt1px2",
        noise_scale=0.5,
        params=params,
        name="p2",
        notes="fully dissipative superlinear benchmark with multiplicative noise",
    )


def _p3():
    # Noise scale 4: large enough that the explicit Euler chain at tau = 0.1
    # actually reaches the instability region |x| > sqrt(21) from the basin
    # within ~10^3 steps (with sqrt(2) noise that is a ~7 sigma event per step
    # and blow-up demos starting at x0 = 3 never fire).
    params = AssumptionParams(
        gamma=3.0, L1=0.5, L2=50.0, L3=0.5, p_star=2.0, growth_const=6.5
    )
    return make_cubic(
        0.0,
        1.0,
        -1.0,
        noise_kind="const",
        noise_scale=4.0,
        params=params,
        name="p3",
        notes="A1-partial: satisfies coercivity but not global monotonicity "
        "with positive L1; used for blow-up demos and qualitative runs.",
    )


PROBLEMS = {
    "p1": _p1,
    "ou": _p1,
    "p2": _p2,
    "dissipative_cubic": _p2,
    "p3": _p3,
    "double_well": _p3,
}


def get_problem(name: str) -> SdeProblem:
    try:
        return PROBLEMS[name]()
    except KeyError:
        raise ValueError(
            f"unknown problem {name!r}; available: {sorted(set(PROBLEMS))}"
        ) from None


# ---------------------------------------------------------------------------
# built-in test functions (1-d)
# ---------------------------------------------------------------------------


def _phi_from_scalar(name, funcs, seminorm_bound, growth_degree=0):
    f0, f1, f2, f3, f4 = funcs
    fd = {1: f1, 2: f2, 3: f3, 4: f4}

    def value(x):
        return f0(x[..., 0])

    def deriv(k, x, *vs):
        prod = np.ones(x.shape[:-1])
        for v in vs:
            prod = prod * v[..., 0]
        return fd[k](x[..., 0]) * prod

    return TestFunction(
        name=name, value=value, deriv=deriv,
        seminorm_bound=seminorm_bound, growth_degree=growth_degree,
    )


def _tanh():
    def t(x):
        return np.tanh(x)

    return _phi_from_scalar(
        "tanh",
        (
            t,
            lambda x: 1.0 - t(x) ** 2,
            lambda x: -2.0 * t(x) * (1.0 - t(x) ** 2),
            lambda x: (1.0 - t(x) ** 2) * (6.0 * t(x) ** 2 - 2.0),
            lambda x: t(x) * (1.0 - t(x) ** 2) * (16.0 - 24.0 * t(x) ** 2),
        ),
        seminorm_bound=7.9,
    )


def _rational_bump():
    def q(x):
        return 1.0 + x * x

    return _phi_from_scalar(
        "rational_bump",
        (
            lambda x: x * x / q(x),
            lambda x: 2.0 * x / q(x) ** 2,
            lambda x: (2.0 - 6.0 * x * x) / q(x) ** 3,
            lambda x: 24.0 * x * (x * x - 1.0) / q(x) ** 4,
            lambda x: 24.0 * (-5.0 * x**4 + 10.0 * x * x - 1.0) / q(x) ** 5,
        ),
        seminorm_bound=31.5,
    )


def _square():
    return _phi_from_scalar(
        "square",
        (
            lambda x: x * x,
            lambda x: 2.0 * x,
            lambda x: np.full_like(np.asarray(x, dtype=float), 2.0),
            lambda x: np.zeros_like(np.asarray(x, dtype=float)),
            lambda x: np.zeros_like(np.asarray(x, dtype=float)),
        ),
        seminorm_bound=math.inf,
        growth_degree=2,
    )


def _identity():
    return _phi_from_scalar(
        "identity",
        (
            lambda x: np.asarray(x, dtype=float) + 0.0,
            lambda x: np.ones_like(np.asarray(x, dtype=float)),
            lambda x: np.zeros_like(np.asarray(x, dtype=float)),
            lambda x: np.zeros_like(np.asarray(x, dtype=float)),
            lambda x: np.zeros_like(np.asarray(x, dtype=float)),
        ),
        seminorm_bound=math.inf,
        growth_degree=1,
    )


def constant_phi(c: float = 1.0) -> TestFunction:
    return _phi_from_scalar(
        "constant",
        (
            lambda x: np.full_like(np.asarray(x, dtype=float), c),
            lambda x: np.zeros_like(np.asarray(x, dtype=float)),
            lambda x: np.zeros_like(np.asarray(x, dtype=float)),
            lambda x: np.zeros_like(np.asarray(x, dtype=float)),
            lambda x: np.zeros_like(np.asarray(x, dtype=float)),
        ),
        seminorm_bound=0.0,
    )


TEST_FUNCTIONS = {
    "tanh": _tanh,
    "rational_bump": _rational_bump,
    "square": _square,
    "identity": _identity,
    "constant": constant_phi,
}


def get_test_function(name: str) -> TestFunction:
    try:
        return TEST_FUNCTIONS[name]()
    except KeyError:
        raise ValueError(
            f"unknown test function {name!r}; available: {sorted(TEST_FUNCTIONS)}"
        ) from None
