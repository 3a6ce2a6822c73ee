"""Entropy inequality and norm-contraction checks.

From a range-metric decay certificate (scale C, rate eta, power alpha) the
inequality constant is

    kappa = C * (2 eta)^(2 alpha - 1) * Gamma(1 - 2 alpha),

finite for alpha in [0, 1/2).  Two families of checks use it:

  * entropy gap: for smooth positive cylindrical observables phi and
    exponents p in (1, inf),

      E[ |phi|^p log |phi|^p ] - m log m
          <= kappa p^2 E[ |phi|^{p-2} |R grad phi|^2 ; phi != 0 ],

    with m = E|phi|^p, R the PSD root of the diffusion at the test time, and
    both sides taken under the system measure at that time;

  * norm contraction across the exponent curve

      p_max(q, t - s) = (q - 1) exp((t - s) / (2 kappa)) + 1,

    i.e. the p-norm of the propagated observable at the start measure stays
    below the q-norm at the end measure whenever p <= p_max.

Expectations over at most two active directions are done by tensor
Gauss-Hermite quadrature (64 nodes per dimension, error estimated against a
coarser rule); everything else is Monte Carlo with delta-method errors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .evolution import DecayCertificate
from .measures import EvolutionSystem, GaussianMeasure, gaussian_system, sample
from .mehler import CylindricalFunction, TrigPolynomial, propagate_trig
from .models import OperatorFamily

GH_NODES = 64
GH_NODES_COARSE = 48


class BadCertificateError(ValueError):
    """Certificate outside the admissible (rate, power) region."""


class NonPositiveMeanError(RuntimeError):
    """E|phi|^p came out non-positive: a numerical failure by definition."""


def log_sobolev_constant(cert: DecayCertificate) -> float:
    """kappa from a cameron-martin decay certificate."""
    if cert.mode != "cameron-martin":
        raise BadCertificateError("kappa needs a cameron-martin certificate")
    c, eta, alpha = cert.scale, cert.rate, cert.power
    if eta <= 0.0:
        raise BadCertificateError(f"rate must be positive, got {eta}")
    if not 0.0 <= alpha < 0.5:
        raise BadCertificateError(f"power must lie in [0, 1/2), got {alpha}")
    return c * (2.0 * eta) ** (2.0 * alpha - 1.0) * math.gamma(1.0 - 2.0 * alpha)


def exponent_curve(q: float, gap: float, kappa: float) -> float:
    """Largest admissible p for a given start norm q over a time gap."""
    if q <= 1.0:
        raise ValueError("need q > 1")
    if gap < 0.0:
        raise ValueError("need a nonnegative time gap")
    return (q - 1.0) * math.exp(gap / (2.0 * kappa)) + 1.0


# -- Gauss-Hermite machinery ---------------------------------------------------

def _gh_grid(cov: np.ndarray, nodes: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes (rows) and normalized weights for E under N(0, cov), cov k x k
    with k <= 2."""
    k = cov.shape[0]
    x, w = np.polynomial.hermite.hermgauss(nodes)
    if k == 1:
        pts = (math.sqrt(2.0 * cov[0, 0]) * x)[:, None]
        return pts, w / math.sqrt(math.pi)
    xs = np.stack(np.meshgrid(x, x, indexing="ij"), axis=-1).reshape(-1, 2)
    ws = np.multiply.outer(w, w).reshape(-1) / math.pi
    chol = np.linalg.cholesky(cov + 1e-300 * np.eye(k))
    return math.sqrt(2.0) * xs @ chol.T, ws


def _entropy_pieces(u: np.ndarray, w: np.ndarray, phi: CylindricalFunction,
                    p: float, q_proj: np.ndarray, regularization: float):
    vals = np.asarray(phi.profile(u), dtype=float)
    grads = np.asarray(phi.gradient(u), dtype=float)
    if regularization > 0.0:
        reg = np.sqrt(vals**2 + regularization**2)
        grads = grads * (vals / reg)[..., None]
        vals = reg
    av = np.abs(vals)
    pos = av > 0.0
    vp = np.where(pos, av, 1.0) ** p
    vp = np.where(pos, vp, 0.0)
    m = float(w @ vp)
    ent = float(w @ np.where(pos, vp * np.log(np.where(pos, vp, 1.0)), 0.0))
    energy_density = np.einsum("ni,ij,nj->n", grads, q_proj, grads)
    pw = np.where(pos, np.where(pos, av, 1.0) ** (p - 2.0), 0.0)
    energy = float(w @ (pw * energy_density))
    return m, ent, energy


@dataclass(frozen=True)
class LogSobolevReport:
    t: float
    p: float
    label: str
    lhs: float
    rhs: float
    slack: float
    lhs_err: float
    rhs_err: float
    kappa: float
    method: str
    passed: bool


def entropy_gap(model: OperatorFamily, t: float, phi: CylindricalFunction,
                p: float, kappa: float,
                system: EvolutionSystem | None = None,
                method: str = "quadrature",
                count: int = 100_000, seed: int = 0,
                regularization: float = 0.0) -> LogSobolevReport:
    """Entropy versus weighted gradient energy at time t.

    Quadrature handles cylindrical observables over at most two directions;
    Monte Carlo works for any number.  The verdict allows slack down to
    minus three combined errors.
    """
    if not p > 1.0:
        raise ValueError("need p > 1")
    if system is None:
        system = gaussian_system(model)
    mu = system(t)
    h = phi.directions
    q_proj = h @ model.diffusion_matrix(t) @ h.T
    marginal = h @ mu.cov.entries @ h.T

    if method == "quadrature":
        if phi.n_dirs > 2:
            raise ValueError("quadrature path handles at most 2 active directions")
        u, w = _gh_grid(marginal, GH_NODES)
        m, ent, energy = _entropy_pieces(u, w, phi, p, q_proj, regularization)
        uc, wc = _gh_grid(marginal, GH_NODES_COARSE)
        mc, entc, energyc = _entropy_pieces(uc, wc, phi, p, q_proj, regularization)
        if m <= 0.0:
            raise NonPositiveMeanError(f"E|phi|^p = {m}")
        lhs = ent - m * math.log(m)
        lhs_c = entc - mc * math.log(mc) if mc > 0 else lhs
        rhs = kappa * p * p * energy
        rhs_c = kappa * p * p * energyc
        lhs_err, rhs_err = abs(lhs - lhs_c), abs(rhs - rhs_c)
    elif method == "mc":
        xs = sample(mu, count, seed, label="entropy-gap")
        u = phi.coords(xs)
        w = np.full(len(u), 1.0 / len(u))
        m, ent, energy = _entropy_pieces(u, w, phi, p, q_proj, regularization)
        if m <= 0.0:
            raise NonPositiveMeanError(f"E|phi|^p = {m}")
        lhs = ent - m * math.log(m)
        rhs = kappa * p * p * energy
        # delta method: d(m log m) = (1 + log m) dm
        vals = np.abs(np.asarray(phi.profile(u), dtype=float)) ** p
        ent_terms = np.where(vals > 0, vals * np.log(np.where(vals > 0, vals, 1.0)), 0.0)
        se = lambda a: float(np.std(a, ddof=1)) / math.sqrt(len(a))
        lhs_err = se(ent_terms) + abs(1.0 + math.log(m)) * se(vals)
        grads = np.asarray(phi.gradient(u), dtype=float)
        dens = np.einsum("ni,ij,nj->n", grads, q_proj, grads)
        pw = np.where(np.abs(vals) > 0, np.abs(np.asarray(phi.profile(u))) ** (p - 2.0), 0.0)
        rhs_err = kappa * p * p * se(pw * dens)
    else:
        raise ValueError(f"unknown method {method!r}")

    slack = rhs - lhs
    passed = slack >= -3.0 * (lhs_err + rhs_err)
    return LogSobolevReport(t, p, phi.label, lhs, rhs, slack, lhs_err, rhs_err,
                            kappa, method, passed)


# -- norm contraction -----------------------------------------------------------

def _p_norm_and_err(values: np.ndarray, p: float) -> tuple[float, float]:
    """Monte Carlo p-norm with the delta-method standard error."""
    vp = np.abs(values) ** p
    m = float(vp.mean())
    se = float(np.std(vp, ddof=1)) / math.sqrt(len(vp))
    if m <= 0.0:
        return 0.0, se
    norm = m ** (1.0 / p)
    return norm, (m ** (1.0 / p - 1.0) / p) * se


@dataclass(frozen=True)
class HyperReport:
    s: float
    t: float
    q: float
    p: float
    p_max: float
    lhs: float
    rhs: float
    lhs_err: float
    rhs_err: float
    kappa: float
    passed: bool


def hypercontractivity_check(model: OperatorFamily, s: float, t: float,
                             q: float, p: float, phi, kappa: float,
                             count: int, seed: int,
                             system: EvolutionSystem | None = None,
                             inner_count: int = 1000) -> HyperReport:
    """p-norm of the propagated observable at nu_s against its q-norm at nu_t.

    Trig observables propagate exactly (one Monte Carlo layer over nu_s);
    other callables get an inner Monte Carlo transition average per outer
    sample.  PASS requires p on or under the exponent curve and the norm
    inequality to hold within three combined standard errors.
    """
    if system is None:
        system = gaussian_system(model)
    mu_s, mu_t = system(s), system(t)
    xs = sample(mu_s, count, seed, label="hyper-outer")
    if isinstance(phi, TrigPolynomial):
        prop = propagate_trig(model, s, t, phi)
        vals = np.asarray(prop.evaluate(xs))
        if np.abs(vals.imag).max(initial=0.0) > 1e-8:
            raise ValueError("observable must be real for norm checks")
        vals = vals.real
        phi_eval = lambda ys: np.asarray(phi.evaluate(ys)).real
    else:
        from .mehler import apply_mc
        vals = np.empty(count)
        for i, x in enumerate(xs):
            vals[i] = apply_mc(model, s, t, phi, x, inner_count, seed,
                               label=f"hyper-inner-{i}").value.real
        phi_eval = lambda ys: np.asarray(phi(ys), dtype=float)

    lhs, lhs_err = _p_norm_and_err(vals, p)
    ys = sample(mu_t, count, seed + 1, label="hyper-rhs")
    rhs, rhs_err = _p_norm_and_err(phi_eval(ys), q)
    p_max = exponent_curve(q, t - s, kappa)
    passed = (p <= p_max + 1e-12) and (lhs <= rhs + 3.0 * (lhs_err + rhs_err))
    return HyperReport(s, t, q, p, p_max, lhs, rhs, lhs_err, rhs_err, kappa, passed)


@dataclass(frozen=True)
class SharpnessRow:
    p: float
    label: str
    ratio: float
    ratio_err: float
    violates: bool


def _ratio_1d(model: OperatorFamily, s: float, t: float, q: float, p: float,
              phi: CylindricalFunction, system: EvolutionSystem,
              nodes: int) -> float:
    """Norm ratio for a single-direction observable, by nested 1-D
    Gauss-Hermite: the propagated observable is again a function of one
    coordinate, so both norms reduce to scalar Gaussian integrals."""
    h = phi.directions[0]
    from .covariance import accumulated
    from .evolution import propagator_matrix

    u_mat = propagator_matrix(model, s, t)
    g = u_mat.T @ h
    v_inner = float(h @ accumulated(model, s, t).matrix @ h)
    v_outer = float(g @ system(s).cov.entries @ g)
    v_end = float(h @ system(t).cov.entries @ h)

    x1, w1 = np.polynomial.hermite.hermgauss(nodes)
    w1 = w1 / math.sqrt(math.pi)
    inner_pts = math.sqrt(2.0 * v_inner) * x1 if v_inner > 0 else np.zeros_like(x1)
    outer_pts = math.sqrt(2.0 * v_outer) * x1 if v_outer > 0 else np.zeros_like(x1)
    end_pts = math.sqrt(2.0 * v_end) * x1 if v_end > 0 else np.zeros_like(x1)

    prof = lambda arr: np.asarray(phi.profile(arr[:, None]), dtype=float)
    propagated = np.array([float(w1 @ prof(wpt + inner_pts)) for wpt in outer_pts])
    lhs = float(w1 @ np.abs(propagated) ** p) ** (1.0 / p)
    rhs = float(w1 @ np.abs(prof(end_pts)) ** q) ** (1.0 / q)
    return lhs / rhs


def sharpness_probe(model: OperatorFamily, s: float, t: float, q: float,
                    p_grid, family, kappa: float,
                    system: EvolutionSystem | None = None,
                    nodes: int = 96) -> list[SharpnessRow]:
    """Norm ratios beyond the exponent curve, reported as evidence.

    Every observable in ``family`` must be cylindrical over one direction;
    the nested quadrature makes the ratios deterministic, with the error
    taken from a coarser node count.  Rows flag ratio > 1 + 3 err; whether
    any p actually produces a violation depends on where the model's true
    contraction threshold sits relative to the certified curve.
    """
    if system is None:
        system = gaussian_system(model)
    rows = []
    for p in p_grid:
        for phi in family:
            if phi.n_dirs != 1:
                raise ValueError("sharpness probes must have one active direction")
            r = _ratio_1d(model, s, t, q, p, phi, system, nodes)
            r_coarse = _ratio_1d(model, s, t, q, p, phi, system, nodes - 16)
            err = abs(r - r_coarse)
            rows.append(SharpnessRow(float(p), phi.label, r, err, r > 1.0 + 3.0 * err))
    return rows


def capped_exponential_family(dim: int, rates=(0.5, 1.0, 1.5, 2.0, 2.5),
                              cap: float = 6.0) -> list[CylindricalFunction]:
    """exp(rate * clip(u, -cap, cap)) along the first coordinate: bounded
    ramps that approximate the extremal exponentials of Gaussian smoothing."""
    e1 = np.eye(dim)[:1]
    fam = []
    for lam in rates:
        fam.append(CylindricalFunction(
            profile=lambda u, lam=lam: np.exp(lam * np.clip(u[..., 0], -cap, cap)),
            directions=e1,
            label=f"capped-exp({lam:g})",
        ))
    return fam


def default_entropy_probes(dim: int) -> list[CylindricalFunction]:
    """Twelve smooth probes over one or two directions, with closed-form
    gradients and Hessians, mostly bounded away from zero."""
    e1 = np.eye(dim)[:1]
    e12 = np.eye(dim)[:2]
    probes = []

    def one_d(label, f, g, h):
        probes.append(CylindricalFunction(
            profile=lambda u: f(u[..., 0]),
            gradient=lambda u: g(u[..., 0])[..., None],
            hessian=lambda u: h(u[..., 0])[..., None, None],
            directions=e1, label=label))

    one_d("2+cos", lambda x: 2 + np.cos(x), lambda x: -np.sin(x), lambda x: -np.cos(x))
    one_d("2+sin", lambda x: 2 + np.sin(x), lambda x: np.cos(x), lambda x: -np.sin(x))
    one_d("3+cos2", lambda x: 3 + np.cos(2 * x), lambda x: -2 * np.sin(2 * x),
          lambda x: -4 * np.cos(2 * x))
    one_d("exp-sin", lambda x: np.exp(np.sin(x)),
          lambda x: np.cos(x) * np.exp(np.sin(x)),
          lambda x: (np.cos(x) ** 2 - np.sin(x)) * np.exp(np.sin(x)))
    one_d("exp-cos", lambda x: np.exp(np.cos(x)),
          lambda x: -np.sin(x) * np.exp(np.cos(x)),
          lambda x: (np.sin(x) ** 2 - np.cos(x)) * np.exp(np.cos(x)))
    one_d("2+tanh", lambda x: 2 + np.tanh(x), lambda x: 1 - np.tanh(x) ** 2,
          lambda x: -2 * np.tanh(x) * (1 - np.tanh(x) ** 2))
    one_d("gauss-bump", lambda x: np.exp(-x**2 / 4), lambda x: -(x / 2) * np.exp(-x**2 / 4),
          lambda x: (x**2 / 4 - 0.5) * np.exp(-x**2 / 4))
    one_d("1+gauss", lambda x: 1 + np.exp(-x**2 / 2), lambda x: -x * np.exp(-x**2 / 2),
          lambda x: (x**2 - 1) * np.exp(-x**2 / 2))

    def sig(x):
        return 1.0 / (1.0 + np.exp(-x))

    one_d("1+sigmoid", lambda x: 1 + sig(x), lambda x: sig(x) * (1 - sig(x)),
          lambda x: sig(x) * (1 - sig(x)) * (1 - 2 * sig(x)))

    def two_d(label, f, g, h):
        probes.append(CylindricalFunction(
            profile=lambda u: f(u[..., 0], u[..., 1]),
            gradient=lambda u: np.stack(g(u[..., 0], u[..., 1]), axis=-1),
            hessian=lambda u: _stack_hess(h(u[..., 0], u[..., 1])),
            directions=e12, label=label))

    def _stack_hess(entries):
        (a, b), (c, d) = entries
        row1 = np.stack([a, b], axis=-1)
        row2 = np.stack([c, d], axis=-1)
        return np.stack([row1, row2], axis=-2)

    two_d("2+cos*sin",
          lambda x, y: 2 + np.cos(x) * np.sin(y),
          lambda x, y: (-np.sin(x) * np.sin(y), np.cos(x) * np.cos(y)),
          lambda x, y: ((-np.cos(x) * np.sin(y), -np.sin(x) * np.cos(y)),
                        (-np.sin(x) * np.cos(y), -np.cos(x) * np.sin(y))))
    two_d("1+gauss2",
          lambda x, y: 1 + np.exp(-(x**2 + y**2) / 8),
          lambda x, y: (-(x / 4) * np.exp(-(x**2 + y**2) / 8),
                        -(y / 4) * np.exp(-(x**2 + y**2) / 8)),
          lambda x, y: (((x**2 / 16 - 0.25) * np.exp(-(x**2 + y**2) / 8),
                         (x * y / 16) * np.exp(-(x**2 + y**2) / 8)),
                        ((x * y / 16) * np.exp(-(x**2 + y**2) / 8),
                         (y**2 / 16 - 0.25) * np.exp(-(x**2 + y**2) / 8))))
    two_d("2.5+sin-sum",
          lambda x, y: 2.5 + 0.5 * np.sin(x + y),
          lambda x, y: (0.5 * np.cos(x + y), 0.5 * np.cos(x + y)),
          lambda x, y: ((-0.5 * np.sin(x + y), -0.5 * np.sin(x + y)),
                        (-0.5 * np.sin(x + y), -0.5 * np.sin(x + y))))
    return probes
