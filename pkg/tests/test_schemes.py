"""Tests for the one-step scheme kernels and their modification maps."""

import numpy as np
import pytest

from ergosde import model, noise
from ergosde.model import AssumptionParams, SampleSpec
from ergosde.schemes import (
    BemSolverError,
    SchemeSpec,
    interpolate,
    modification_maps,
    project,
    step,
    step_ensemble,
    tame_diffusion,
    tame_drift,
)

P1 = model.get_problem("p1")
P2 = model.get_problem("p2")
P3 = model.get_problem("p3")


def test_scheme_spec_gates():
    with pytest.raises(ValueError):
        SchemeSpec("em", 1.0)
    with pytest.raises(ValueError):
        SchemeSpec("em", 0.0)
    with pytest.raises(ValueError):
        SchemeSpec("heun", 0.1)


# --- taming -------------------------------------------------------------------


def test_tame_drift_at_origin():
    out = tame_drift(P3, np.array([[0.0]]), 0.25)
    assert out[0, 0] == P3.drift(np.array([[0.0]]))[0, 0]


def test_tame_drift_closed_form():
    # b(2) = -6, denominator (1 + 0.25 * 2^8)^(1/4) = 65^(1/4)
    out = tame_drift(P3, np.array([[2.0]]), 0.25)
    assert abs(out[0, 0] - (-6.0 / 65.0**0.25)) < 1e-12


def test_tame_drift_small_tau_limit():
    # the deviation from b at fixed x shrinks like |b| tau |x|^8 / 4
    b5 = P3.drift(np.array([[5.0]]))[0, 0]
    for tau in (1e-12, 1e-14):
        out = tame_drift(P3, np.array([[5.0]]), tau)
        gap = abs(out[0, 0] - b5)
        assert gap <= abs(b5) * tau * 5.0**8 / 4.0 * 1.0001
    assert abs(tame_drift(P3, np.array([[5.0]]), 1e-14)[0, 0] - b5) < 1e-6


def test_tame_drift_huge_state_stays_finite():
    # log-space taming denominator: tau |x|^(4(gamma-1)) = 1e799 would
    # overflow in linear space, while b(x) itself is still representable
    x = np.array([[1e100]])
    out = tame_drift(P3, x, 0.1)
    assert np.isfinite(out).all()
    # scale ~ tau^(-1/4) |x|^(-2), so b_tau ~ -|x| tau^(-1/4)
    assert abs(out[0, 0] / (-1e100 * 0.1**-0.25) - 1.0) < 1e-6


def test_tame_diffusion_matches_drift_scale():
    x = np.array([[2.0]])
    ratio_b = tame_drift(P3, x, 0.25)[0, 0] / P3.drift(x)[0, 0]
    ratio_s = tame_diffusion(P3, x, 0.25)[0, 0, 0] / P3.diffusion(x)[0, 0, 0]
    assert abs(ratio_b - ratio_s) < 1e-14


# --- projection ---------------------------------------------------------------


def test_project_examples():
    assert np.array_equal(project(np.array([0.0, 0.0]), 1e-4, 2.0), np.zeros(2))
    np.testing.assert_array_equal(project(np.array([3.0, 4.0]), 1e-4, 2.0), [3.0, 4.0])
    np.testing.assert_allclose(
        project(np.array([12.0, 16.0]), 1e-4, 2.0), [6.0, 8.0], rtol=1e-14
    )


def test_projection_contraction_property():
    # |P(x)| <= min(|x|, tau^(-1/(2 gamma))) exactly, over randomized probes
    pts = SampleSpec(n_samples=2000, seed=21).points(3)
    for tau, gamma in [(1e-4, 2.0), (0.05, 3.0), (0.5, 1.5)]:
        out = project(pts, tau, gamma)
        norms = np.linalg.norm(out, axis=-1)
        cap = tau ** (-1.0 / (2.0 * gamma))
        assert np.all(norms <= np.minimum(np.linalg.norm(pts, axis=-1), cap) * (1 + 1e-14))


# --- one-step kernels ---------------------------------------------------------


def test_em_step_linear():
    assert step(P1, SchemeSpec("em", 0.5), [1.0], [0.0])[0] == 0.5


def test_bem_step_linear_closed_form():
    # implicit equation Y = 1 - 0.5 Y  ->  Y = 2/3
    out = step(P1, SchemeSpec("bem", 0.5), [1.0], [0.0])
    assert abs(out[0] - 2.0 / 3.0) < 1e-12


def test_bem_step_linear_with_noise_closed_form():
    # z = (y + sigma dW) / (1 + tau) for b = -x
    rng_pts = np.linspace(-3, 3, 11)
    tau = 0.25
    sch = SchemeSpec("bem", tau)
    for y in rng_pts:
        for dw in (-0.7, 0.0, 1.3):
            out = step(P1, sch, [y], [dw])
            expected = (y + np.sqrt(2.0) * dw) / (1.0 + tau)
            assert abs(out[0] - expected) < 1e-12


def test_bem_residual_within_tolerance():
    sch = SchemeSpec("bem", 0.1)
    s = noise.NoiseStream(5, 0)
    y = np.array([1.7])
    for k in range(20):
        dw = noise.increment(s, k, 1, sch.tau)
        z = step(P3, sch, y, dw)
        resid = z - y - P3.drift(z[None, :])[0] * sch.tau - P3.diffusion(y[None, :])[0, :, 0] * dw
        assert np.abs(resid).max() <= sch.bem_tol * 10
        y = z


def test_bem_solver_failure_raises_with_residual():
    bad = model.make_cubic(0.0, -1.0, -1.0, name="bad")
    bad = model.SdeProblem(
        name="nanprob",
        dim_state=1,
        dim_noise=1,
        drift=lambda x: np.full_like(x, np.nan),
        diffusion=bad.diffusion,
        drift_deriv=lambda k, x, *v: np.zeros(x.shape[:-1] + (1,)),
        diffusion_deriv=bad.diffusion_deriv,
        params=bad.params,
    )
    with pytest.raises(BemSolverError):
        step(bad, SchemeSpec("bem", 0.1), [1.0], [0.0])


def test_tem_step_composes_tamed_drift():
    out = step(P3, SchemeSpec("tem", 0.25), [2.0], [0.0])
    assert abs(out[0] - (2.0 + 0.25 * (-6.0 / 65.0**0.25))) < 1e-12


def test_step_rejects_noise_dim_mismatch():
    with pytest.raises(ValueError, match="dim_noise"):
        step(P1, SchemeSpec("em", 0.1), [1.0], [0.0, 0.0])


def test_multidimensional_bem_matches_scalar_structure():
    ou2 = model.make_linear(theta=1.0, dim=2, name="ou2")
    out = step(ou2, SchemeSpec("bem", 0.5), [1.0, -2.0], [0.0, 0.0])
    np.testing.assert_allclose(out, [2.0 / 3.0, -4.0 / 3.0], rtol=1e-12)


# --- modification maps --------------------------------------------------------


def test_maps_em_identity():
    maps = modification_maps(P1, SchemeSpec("em", 0.1))
    x = SampleSpec(n_samples=100, seed=2).points(1)
    np.testing.assert_array_equal(maps.g_tau(x), x)
    np.testing.assert_array_equal(maps.g_tilde_tau(x), x)


def test_maps_bem_g():
    maps = modification_maps(P1, SchemeSpec("bem", 0.5))
    assert maps.g_tau(np.array([[1.0]]))[0, 0] == 1.5
    x = np.array([[0.3]])
    np.testing.assert_array_equal(maps.g_tilde_tau(x), x)


def test_maps_pem_projects():
    ou2 = model.make_linear(theta=1.0, dim=2, name="ou2")
    maps = modification_maps(ou2, SchemeSpec("pem", 1e-4))
    np.testing.assert_allclose(
        maps.g_tau(np.array([[12.0, 16.0]]))[0], [6.0, 8.0], rtol=1e-14
    )


def test_maps_contraction_and_coefficient_bounds():
    # |P(x)| <= |x|; |b_tau(P x)| <= C |b(x)|; column-wise sigma analogue
    pts = SampleSpec(n_samples=10_000, seed=11).points(1)
    for kind in ("em", "tem", "pem"):
        maps = modification_maps(P2, SchemeSpec(kind, 0.02))
        px = maps.projection(pts)
        assert np.all(
            np.linalg.norm(px, axis=-1) <= np.linalg.norm(pts, axis=-1) + 1e-14
        )
        bt = np.linalg.norm(maps.tamed_drift(pts), axis=-1)
        b = np.linalg.norm(P2.drift(pts), axis=-1)
        assert np.all(bt <= 1.0 * b + 1e-12)
        st = np.abs(maps.tamed_diffusion(pts)[:, 0, 0])
        sg = np.abs(P2.diffusion(pts)[:, 0, 0])
        assert np.all(st <= 1.0 * sg + 1e-12)


def test_tem_taming_deviation_bound():
    # |b_tau(Px) - b(Px)| + sum_j |sigma_j,tau(Px) - sigma_j(Px)|
    #   <= C tau (1 + |x|^alpha1) with alpha1 = 5 gamma - 4 = 11 and C = 4.
    pts = SampleSpec(n_samples=10_000, seed=13).points(1)
    tau = 0.02
    maps = modification_maps(P2, SchemeSpec("tem", tau))
    lhs = np.linalg.norm(maps.tamed_drift(pts) - P2.drift(pts), axis=-1)
    lhs = lhs + np.abs(maps.tamed_diffusion(pts)[:, 0, 0] - P2.diffusion(pts)[:, 0, 0])
    xn = np.linalg.norm(pts, axis=-1)
    bound = 4.0 * tau * (1.0 + xn**11)
    assert np.all(lhs <= bound)
    # TEM projection is the identity, so its displacement vanishes exactly
    assert np.all(maps.projection(pts) == pts)


def test_pem_projection_displacement_bound():
    # |P(x) - x| <= C tau^2 |x|^alpha2 with alpha2 = 4 gamma + 1 = 13, C = 1;
    # PEM leaves coefficients untamed so the taming deviation is exactly zero.
    pts = SampleSpec(n_samples=10_000, seed=17).points(1)
    tau = 0.05
    maps = modification_maps(P2, SchemeSpec("pem", tau))
    disp = np.linalg.norm(maps.projection(pts) - pts, axis=-1)
    xn = np.linalg.norm(pts, axis=-1)
    assert np.all(disp <= 1.0 * tau**2 * xn**13 + 1e-14)
    px = maps.projection(pts)
    np.testing.assert_array_equal(maps.tamed_drift(pts), P2.drift(px))


# --- interpolation ------------------------------------------------------------


def test_interpolate_at_zero_is_g():
    ref = np.zeros((4, 1))
    for kind in ("em", "tem", "pem", "bem"):
        sch = SchemeSpec(kind, 0.25)
        maps = modification_maps(P3, sch)
        path = interpolate(P3, sch, [0.8], np.array([0.0]), ref)
        assert abs(path[0, 0] - maps.g_tau(np.array([[0.8]]))[0, 0]) < 1e-14


def test_interpolate_em_deterministic_endpoint():
    sch = SchemeSpec("em", 0.25)
    path = interpolate(P3, sch, [0.8], np.array([0.25]), np.zeros((4, 1)))
    assert abs(path[0, 0] - (0.8 + 0.25 * P3.drift(np.array([[0.8]]))[0, 0])) < 1e-14


@pytest.mark.parametrize("kind", ["em", "tem", "pem"])
def test_interpolation_endpoint_identity_explicit(kind):
    sch = SchemeSpec(kind, 0.25)
    s = noise.NoiseStream(31, 4)
    for k in range(30):
        y0 = np.array([0.4 * (k - 15)])
        dw = noise.increment(s, k, 1, sch.tau)
        ref = noise.refine(s, k, 8, 1, sch.tau)
        path = interpolate(P3, sch, y0, np.array([sch.tau]), ref)
        y1 = step(P3, sch, y0, dw)
        assert abs(path[-1, 0] - y1[0]) < 1e-12 * max(1.0, abs(y1[0]))


def test_interpolation_endpoint_identity_bem():
    # BEM linear closed-form case: Y_hat(tau) = 1.0 and g(Y1) = 1.0
    sch = SchemeSpec("bem", 0.5)
    path = interpolate(P1, sch, [1.0], np.array([0.0, 0.5]), np.zeros((4, 1)))
    assert abs(path[0, 0] - 1.5) < 1e-14
    assert abs(path[-1, 0] - 1.0) < 1e-14
    maps = modification_maps(P1, sch)
    y1 = step(P1, sch, [1.0], [0.0])
    assert abs(path[-1, 0] - maps.g_tau(y1[None, :])[0, 0]) < 1e-12
    # and with actual noise on the superlinear problem
    sch = SchemeSpec("bem", 0.25)
    maps = modification_maps(P3, sch)
    s = noise.NoiseStream(77, 1)
    for k in range(20):
        y0 = np.array([0.3 * (k - 10)])
        dw = noise.increment(s, k, 1, sch.tau)
        ref = noise.refine(s, k, 16, 1, sch.tau)
        path = interpolate(P3, sch, y0, np.array([sch.tau]), ref)
        y1 = step(P3, sch, y0, dw)
        gap = abs(path[-1, 0] - maps.g_tau(y1[None, :])[0, 0])
        assert gap < 1e-11


def test_interpolate_rejects_off_grid_times():
    sch = SchemeSpec("em", 0.25)
    with pytest.raises(ValueError, match="refinement grid"):
        interpolate(P3, sch, [0.0], np.array([0.1]), np.zeros((4, 1)))


def test_step_ensemble_matches_scalar_steps():
    sch = SchemeSpec("tem", 0.1)
    ys = np.linspace(-2, 2, 7)[:, None]
    dws = np.linspace(-0.3, 0.3, 7)[:, None]
    batch = step_ensemble(P2, sch, ys, dws)
    for i in range(7):
        one = step(P2, sch, ys[i], dws[i])
        np.testing.assert_array_equal(batch[i], one)
