import math

import numpy as np
import pytest

from oulab import evolution as evo
from oulab.models import make_diagonal_constant
from oulab.rng import seed_stream


def test_evolve_at_equal_times_is_identity(dc8, rational4, parabolic5, scalar4):
    for model in (dc8, rational4, parabolic5, scalar4):
        np.testing.assert_allclose(evo.evolve(model, 0.5, 0.5).matrix,
                                   np.eye(model.dim), atol=1e-14)


def test_constant_model_closed_form(dc8):
    u = evo.evolve(dc8, 0.0, 1.0)
    assert u.method == "closed-form"
    np.testing.assert_allclose(u.matrix, math.exp(-1.0) * np.eye(8), atol=1e-14)
    assert u.matrix[0, 0] == pytest.approx(0.36787944117144233, abs=1e-15)


def test_rational_mode_one_arctangent(rational4):
    # integral of -2/(1+u^2) over [0, 1] is -2 arctan 1 = -pi/2
    expected = math.exp(-math.pi / 2.0)
    assert expected == pytest.approx(0.20787957635076193, abs=1e-15)
    assert evo.evolve(rational4, 0.0, 1.0).matrix[0, 0] == pytest.approx(expected, abs=1e-12)


def test_chain_law_all_kinds(dc8, rational4, scalar4, parabolic5, nonunique3):
    gen = seed_stream(5, "chain-test")
    for model in (dc8, rational4, scalar4, parabolic5, nonunique3):
        for _ in range(5):
            base = -2.0 + 3.0 * gen.random()
            d1, d2 = np.sort(gen.random(2)) * 2.0
            s, r, t = base, base + d1, base + d2
            whole = evo.propagator_matrix(model, s, t)
            parts = evo.propagator_matrix(model, r, t) @ evo.propagator_matrix(model, s, r)
            denom = max(1.0, np.linalg.norm(whole, 2))
            assert np.linalg.norm(whole - parts, 2) <= 1e-8 * denom


def test_finite_difference_generator_first_order(parabolic5):
    s, t = 0.0, 0.6
    u = evo.propagator_matrix(parabolic5, s, t)
    a = parabolic5.drift_matrix(t)
    errs = []
    for h in (1e-3, 1e-4):
        fd = (evo.propagator_matrix(parabolic5, s, t + h) - u) / h
        errs.append(np.abs(fd - a @ u).max())
    assert errs[1] < errs[0] / 5.0  # one-sided difference: O(h)


def test_adjoint_is_transpose_for_diagonal(dc8):
    u = evo.evolve(dc8, 0.0, 2.0).matrix
    np.testing.assert_allclose(evo.adjoint_evolve(dc8, 0.0, 2.0).matrix, u, atol=1e-15)


def test_adjoint_against_dual_integration(parabolic5):
    s, t = 0.1, 1.2
    direct = evo.adjoint_evolve(parabolic5, s, t).matrix
    dual = evo.adjoint_by_integration(parabolic5, s, t)
    assert np.abs(direct - dual).max() <= 1e-8


def test_adjoint_identity_at_equal_times(parabolic5):
    np.testing.assert_allclose(evo.adjoint_evolve(parabolic5, 0.3, 0.3).matrix,
                               np.eye(5), atol=1e-15)


def _grid_pairs():
    return [(s, t) for s in np.linspace(-2.0, 2.0, 5) for t in np.linspace(-1.5, 3.0, 5)
            if t > s + 0.05]


def test_fit_decay_constant_model_exact(dc8):
    cert = evo.fit_decay(dc8, _grid_pairs(), mode="cameron-martin")
    assert cert.scale == pytest.approx(1.0, abs=1e-6)
    assert cert.rate == pytest.approx(1.0, abs=1e-6)
    assert cert.power == 0.0
    assert cert.residual < 1e-6


def test_fit_decay_operator_mode(dc8):
    cert = evo.fit_decay(dc8, _grid_pairs(), mode="operator")
    assert cert.mode == "operator"
    assert cert.rate == pytest.approx(1.0, abs=1e-6)
    d = cert.as_dict()
    assert "M" in d and "zeta" in d and "alpha" not in d


def test_fit_decay_single_pair_interpolates(dc8):
    cert = evo.fit_decay(dc8, [(0.0, 1.0)], mode="operator")
    assert cert.residual == 0.0
    assert cert.bound(0.0, 1.0) == pytest.approx(math.exp(-1.0), rel=1e-12)


def test_certificate_majorizes_every_sample(rational4):
    pairs = _grid_pairs()
    cert = evo.fit_decay(rational4, pairs, mode="operator")
    for s, t in pairs:
        measured = evo.measured_norm(rational4, s, t, "operator")
        assert measured <= cert.bound(s, t) * (1.0 + cert.slack)


def test_fit_decay_rejects_zero_norms():
    silent = make_diagonal_constant(2, -1.0, 0.0)  # zero diffusion: zero range norm
    with pytest.raises(evo.FitFailedError):
        evo.fit_decay(silent, [(0.0, 1.0), (0.0, 2.0)], mode="cameron-martin")


def test_fit_decay_rejects_degenerate_pairs(dc8):
    with pytest.raises(ValueError):
        evo.fit_decay(dc8, [(0.0, 0.0)], mode="operator")


def test_range_norm_matches_operator_norm_for_identity_noise(parabolic5):
    # B = I makes the range metric the ambient one
    s, t = 0.0, 0.5
    assert evo.cm_operator_norm(parabolic5, s, t) == pytest.approx(
        evo.measured_norm(parabolic5, s, t, "operator"), rel=1e-9)
