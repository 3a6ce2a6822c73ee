import math

import numpy as np
import pytest

from oulab import mehler
from oulab.covariance import accumulated
from oulab.evolution import propagator_matrix
from oulab.mehler import (
    CylindricalFunction,
    TrigPolynomial,
    apply_exact,
    apply_mc,
    check_differentiation,
    check_gradient_bound,
    generator_apply,
    propagate_trig,
    transition_of_generator,
)
from oulab.rng import seed_stream

DC_HALF_K = (1.0 - math.exp(-2.0)) / 4.0  # half the mode kernel at gap 1


def test_equal_times_is_identity(dc8):
    poly = TrigPolynomial.plane_wave(np.eye(8)[0], 2.0 - 1.0j)
    x = np.ones(8)
    assert apply_exact(dc8, 1.0, 1.0, poly, x) == poly.evaluate(x)


def test_constant_model_damping(dc8):
    poly = TrigPolynomial.plane_wave(np.eye(8)[0])
    val = apply_exact(dc8, 0.0, 1.0, poly, np.zeros(8))
    assert math.exp(-DC_HALF_K) == pytest.approx(0.8056014165577624, abs=1e-16)
    assert val.real == pytest.approx(math.exp(-DC_HALF_K), abs=1e-12)
    assert val.imag == pytest.approx(0.0, abs=1e-15)


def test_propagated_frequencies_follow_adjoint(rational4):
    gen = seed_stream(2, "freqs")
    freqs = gen.standard_normal((3, 4))
    poly = TrigPolynomial(gen.standard_normal(3) + 0j, freqs)
    s, t = -0.5, 1.0
    out = propagate_trig(rational4, s, t, poly)
    u = propagator_matrix(rational4, s, t)
    np.testing.assert_allclose(out.freqs, freqs @ u, atol=1e-12)
    damp = np.exp(-0.5 * np.einsum("ij,jk,ik->i", freqs,
                                   accumulated(rational4, s, t).matrix, freqs))
    np.testing.assert_allclose(out.coeffs, poly.coeffs * damp, atol=1e-12)


def test_composition_matches_single_step(dc8, rational4):
    gen = seed_stream(8, "compose")
    for model in (dc8, rational4):
        freqs = gen.standard_normal((3, model.dim))
        poly = TrigPolynomial(gen.standard_normal(3) + 1j * gen.standard_normal(3), freqs)
        s, r, t = -0.5, 0.4, 1.3
        direct = propagate_trig(model, s, t, poly).canonical()
        stepped = propagate_trig(model, s, r, propagate_trig(model, r, t, poly)).canonical()
        np.testing.assert_allclose(direct.coeffs, stepped.coeffs, atol=1e-10)
        np.testing.assert_allclose(direct.freqs, stepped.freqs, atol=1e-10)


def test_product_closure():
    p1 = TrigPolynomial.cosine(np.array([1.0, 0.0]))
    p2 = TrigPolynomial.sine(np.array([0.0, 2.0]))
    prod = p1 * p2
    x = np.array([0.3, -0.7])
    assert prod.evaluate(x) == pytest.approx(p1.evaluate(x) * p2.evaluate(x), abs=1e-14)


def test_term_list_roundtrip():
    import json

    poly = TrigPolynomial(np.array([1.0 + 2.0j, -0.5j]),
                          np.array([[1.0, 0.0], [0.25, -3.0]]))
    text = json.dumps(poly.to_term_list())
    back = TrigPolynomial.from_term_list(json.loads(text))
    np.testing.assert_array_equal(back.coeffs, poly.coeffs)
    np.testing.assert_array_equal(back.freqs, poly.freqs)


def test_apply_mc_constant_observable(dc8):
    est = apply_mc(dc8, 0.0, 1.0, lambda ys: np.full(len(ys), 3.25), np.zeros(8),
                   count=500, seed=3)
    assert est.value == pytest.approx(3.25)
    assert est.stderr == 0.0


def test_apply_mc_matches_exact_cosine(dc8):
    poly = TrigPolynomial.cosine(np.eye(8)[0])
    exact = apply_exact(dc8, 0.0, 1.0, poly, np.zeros(8)).real
    est = apply_mc(dc8, 0.0, 1.0, lambda ys: np.cos(ys[:, 0]), np.zeros(8),
                   count=100_000, seed=5)
    assert abs(est.value.real - exact) <= 4.0 * est.stderr


def test_apply_mc_second_moment_identity(dc8):
    x = np.ones(8)
    s, t = 0.0, 1.0
    expected = np.trace(accumulated(dc8, s, t).matrix) + \
        float(np.linalg.norm(propagator_matrix(dc8, s, t) @ x) ** 2)
    est = apply_mc(dc8, s, t, lambda ys: (ys**2).sum(axis=1), x, count=200_000, seed=9)
    assert abs(est.value.real - expected) <= 4.0 * est.stderr


def test_mc_exactness_sweep(dc4):
    gen = seed_stream(17, "sweep")
    for k in range(100):
        freq = gen.standard_normal(4)
        poly = TrigPolynomial.plane_wave(freq)
        x = gen.standard_normal(4)
        exact = apply_exact(dc4, 0.0, 1.0, poly, x)
        est = apply_mc(dc4, 0.0, 1.0, poly.evaluate, x, count=4000, seed=k)
        assert abs(est.value - exact) <= 4.0 * est.stderr + 1e-12


def test_generator_on_plane_wave(dc8):
    poly = TrigPolynomial.plane_wave(np.eye(8)[0])
    val = generator_apply(dc8, 0.0, poly, np.zeros(8))
    assert val == pytest.approx(-0.5 + 0.0j, abs=1e-14)


def test_generator_on_constant(dc8):
    one = TrigPolynomial.constant(8, 1.0)
    assert generator_apply(dc8, 0.3, one, np.ones(8)) == pytest.approx(0.0, abs=1e-15)


def test_generator_cylindrical_quadratic(dc8):
    # psi(u) = u^2 along e_1: generator gives 1 - 2 x_1^2 for the constant model
    phi = CylindricalFunction(
        profile=lambda u: u[..., 0] ** 2,
        gradient=lambda u: 2.0 * u,
        hessian=lambda u: np.broadcast_to(2.0, u.shape + (1,)).reshape(u.shape[:-1] + (1, 1)),
        directions=np.eye(8)[:1],
    )
    for x1 in (0.0, 0.7, -1.3):
        x = x1 * np.eye(8)[0]
        assert generator_apply(dc8, 0.0, phi, x) == pytest.approx(1.0 - 2.0 * x1**2, abs=1e-12)


def test_transition_of_generator_against_mc(dc4):
    # independent route: average L(t) phi over the transition law directly
    s, t = 0.0, 1.0
    h = np.eye(4)[0]
    poly = TrigPolynomial.plane_wave(h)
    closed = transition_of_generator(dc4, s, t, poly, np.ones(4))
    a_h = dc4.drift_adjoint(t) @ h
    q_hh = float(h @ dc4.diffusion_matrix(t) @ h)

    def l_phi(ys):
        return (1j * (ys @ a_h) - 0.5 * q_hh) * np.exp(1j * (ys @ h))

    est = apply_mc(dc4, s, t, l_phi, np.ones(4), count=200_000, seed=21)
    assert abs(est.value - closed) <= 4.0 * est.stderr


def test_differentiation_formulas_constant_model(dc8):
    poly = TrigPolynomial.plane_wave(np.eye(8)[0])
    rep = check_differentiation(dc8, 0.0, 1.0, poly, np.eye(8)[0], fd_step=1e-4)
    assert rep.start_discrepancy <= 1e-7
    assert rep.end_discrepancy <= 1e-7
    assert 3.5 <= rep.start_order_ratio <= 4.5
    assert 3.5 <= rep.end_order_ratio <= 4.5


def test_differentiation_trivial_constant(dc8):
    one = TrigPolynomial.constant(8, 1.0)
    rep = check_differentiation(dc8, 0.0, 1.0, one, np.ones(8), fd_step=1e-4)
    assert rep.start_discrepancy <= 1e-14
    assert rep.end_discrepancy <= 1e-14


def test_differentiation_formulas_rational(rational2):
    gen = seed_stream(6, "diff-rational")
    worst = 0.0
    for _ in range(5):
        poly = TrigPolynomial.plane_wave(gen.standard_normal(2))
        x = gen.standard_normal(2)
        rep = check_differentiation(rational2, -0.3, 0.9, poly, x, fd_step=1e-4)
        worst = max(worst, rep.start_discrepancy, rep.end_discrepancy)
    assert worst <= 1e-6


def test_gradient_bound_constant_observable(dc8):
    phi = CylindricalFunction(
        profile=lambda u: np.full(u.shape[:-1], 2.0),
        gradient=lambda u: np.zeros_like(u),
        hessian=lambda u: np.zeros(u.shape[:-1] + (1, 1)),
        directions=np.eye(8)[:1],
    )
    rep = check_gradient_bound(dc8, 0.0, 1.0, phi, np.zeros(8), count=2000, seed=3)
    assert rep.lhs == 0.0 and rep.rhs == 0.0 and rep.passed


def test_gradient_bound_sine(dc8):
    phi = CylindricalFunction(
        profile=lambda u: np.sin(u[..., 0]),
        gradient=lambda u: np.stack([np.cos(u[..., 0])], axis=-1),
        hessian=lambda u: -np.sin(u[..., 0])[..., None, None],
        directions=np.eye(8)[:1],
    )
    rep = check_gradient_bound(dc8, 0.0, 1.0, phi, np.zeros(8), count=50_000, seed=13)
    assert rep.passed
    assert rep.lhs < rep.rhs  # strict Jensen gap for this probe


def test_gradient_bound_rational_sweep(rational4):
    gen = seed_stream(29, "grad-sweep")
    for k in range(20):
        freq = gen.standard_normal()
        shift = gen.standard_normal()
        phi = CylindricalFunction(
            profile=lambda u, a=freq, b=shift: np.sin(a * u[..., 0] + b),
            gradient=lambda u, a=freq, b=shift: np.stack(
                [a * np.cos(a * u[..., 0] + b)], axis=-1),
            hessian=lambda u, a=freq, b=shift: (
                -a * a * np.sin(a * u[..., 0] + b))[..., None, None],
            directions=np.eye(4)[:1],
        )
        x = gen.standard_normal(4)
        rep = check_gradient_bound(rational4, 0.0, 1.0, phi, x, count=20_000, seed=100 + k)
        assert rep.passed, (k, rep)
