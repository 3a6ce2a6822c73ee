"""Gaussian measures, evolution systems, and the invariance verifier.

A family of probability measures nu_t is an evolution system for the model's
transition operators when averaging a propagated observable against nu_s
equals averaging the observable against nu_t.  On characteristic functions
this is the single identity

    nu_t^(h) = exp(-<K(t,s) h, h>/2) * nu_s^(U(t,s)^T h),

checked here on finite probe sets.  Gaussian systems come in two flavours:

  * anchored at -inf: nu_t = N(0, K(t, -inf)) via the certified tail
    truncation of ``covariance.steady_state`` (needs decay);
  * anchored at a finite time S: nu_t = N(0, K(t, S)), an exact evolution
    system on [S, infinity) regardless of decay.  This is the natural
    realization for models whose infinite-horizon covariance diverges.

Shifting a system by a point mass along a flow-invariant curve produces a
second, distinct system, which is how non-uniqueness is demonstrated.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .covariance import accumulated, steady_state
from .linalg import SymOperator, spectral_factor
from .mehler import TrigPolynomial, propagate_trig
from .models import OperatorFamily
from .rng import chunked_normals, seed_stream


@dataclass(frozen=True)
class GaussianMeasure:
    mean: np.ndarray
    cov: SymOperator
    _factor: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        m = np.array(self.mean, dtype=float)
        if m.ndim != 1 or m.shape[0] != self.cov.dim:
            raise ValueError("mean must be a vector matching the covariance")
        m.setflags(write=False)
        object.__setattr__(self, "mean", m)
        object.__setattr__(self, "_factor", spectral_factor(self.cov))

    @property
    def dim(self) -> int:
        return self.cov.dim


def characteristic(mu: GaussianMeasure, h: np.ndarray) -> complex:
    """exp(i<m, h> - <Q h, h>/2)."""
    h = np.asarray(h, dtype=float)
    return cmath.exp(1j * float(mu.mean @ h) - 0.5 * mu.cov.quadratic_form(h))


def sample(mu: GaussianMeasure, count: int, seed: int, label: str = "sample") -> np.ndarray:
    """(count, dim) i.i.d. draws; deterministic in (seed, label) and
    independent of any chunking of the work."""
    if count < 1:
        raise ValueError("count must be >= 1")
    z = chunked_normals(seed, label, count, mu.dim)
    return mu.mean + z @ mu._factor.T


def mean_functional(mu: GaussianMeasure, phi: TrigPolynomial) -> complex:
    """Exact mean of a trig polynomial: term coefficients against the
    characteristic function at the term frequencies."""
    return complex(sum(c * characteristic(mu, h) for c, h in zip(phi.coeffs, phi.freqs)))


@dataclass
class EvolutionSystem:
    """A labelled family t -> GaussianMeasure (with memoized lookups)."""

    label: str
    factory: Callable[[float], GaussianMeasure]
    _cache: dict = field(default_factory=dict, repr=False)

    def __call__(self, t: float) -> GaussianMeasure:
        if t not in self._cache:
            self._cache[t] = self.factory(t)
        return self._cache[t]


def gaussian_system(model: OperatorFamily, anchor: float = -math.inf,
                    tol_tail: float = 1e-10,
                    s_star: float | None = None) -> EvolutionSystem:
    """Zero-mean Gaussian evolution system for the model.

    ``anchor=-inf`` uses the truncated infinite-horizon covariance (decay or
    explicit ``s_star`` required).  A finite anchor S uses K(t, S), exact for
    t >= S; times before the anchor are rejected.
    """
    zero = np.zeros(model.dim)
    if anchor == -math.inf:
        def factory(t: float) -> GaussianMeasure:
            return GaussianMeasure(zero, steady_state(model, t, tol_tail, s_star=s_star).op)
        return EvolutionSystem("gaussian(-inf)", factory)

    def factory(t: float) -> GaussianMeasure:
        if t < anchor:
            raise ValueError(f"time {t} precedes the system anchor {anchor}")
        return GaussianMeasure(zero, accumulated(model, anchor, t).op)
    return EvolutionSystem(f"gaussian(anchor={anchor:g})", factory)


def point_shifted_system(base: EvolutionSystem, shift: Callable[[float], np.ndarray],
                         label: str | None = None) -> EvolutionSystem:
    """Convolve each measure with a point mass at shift(t) (a mean shift).

    The result is again an evolution system exactly when the shift follows
    the propagator flow: shift(t) = U(t, s) shift(s).
    """
    def factory(t: float) -> GaussianMeasure:
        mu = base(t)
        return GaussianMeasure(mu.mean + np.asarray(shift(t), dtype=float), mu.cov)
    return EvolutionSystem(label or f"{base.label}+shift", factory)


def default_probes(dim: int, seed: int, random_count: int = 16) -> list[np.ndarray]:
    """Basis vectors, adjacent-pair sums, and seeded random directions."""
    probes = [np.eye(dim)[i] for i in range(dim)]
    probes += [np.eye(dim)[i] + np.eye(dim)[(i + 1) % dim] for i in range(min(dim, 4))]
    gen = seed_stream(seed, "probes")
    for _ in range(random_count):
        v = gen.standard_normal(dim)
        probes.append(v / np.linalg.norm(v))
    return probes


@dataclass(frozen=True)
class InvarianceReport:
    """Probe-set evidence for the characteristic-function identity.

    ``rows`` carry (s, t, probe index, |lhs - rhs|); ``dual_max`` is the
    agreement between the identity and its dual form (propagated observable
    against nu_s versus plain observable against nu_t) on trig probes.
    Finite probes give evidence, not proof; ``probe_count`` records how much.
    """

    label: str
    rows: tuple
    max_discrepancy: float
    dual_max: float
    tol: float
    probe_count: int

    @property
    def passed(self) -> bool:
        return self.max_discrepancy <= self.tol


def verify_invariance(system: EvolutionSystem, model: OperatorFamily,
                      pairs, probes, tol: float | None = None) -> InvarianceReport:
    """Check nu_t^(h) = e^{-<K(t,s)h,h>/2} nu_s^(U^T h) over pairs x probes.

    The default tolerance is 1e-8 for models with closed-form propagators
    and 1e-6 for integrated ones.  A handful of multi-term trig polynomials
    cross-check the dual form through the exact propagation of terms.
    """
    if tol is None:
        tol = 1e-8 if model.closed_form else 1e-6
    from .evolution import propagator_matrix

    rows = []
    worst = 0.0
    for s, t in pairs:
        mu_s, mu_t = system(s), system(t)
        u = propagator_matrix(model, s, t)
        k = accumulated(model, s, t)
        for j, h in enumerate(probes):
            h = np.asarray(h, dtype=float)
            lhs = characteristic(mu_t, h)
            rhs = cmath.exp(-0.5 * k.op.quadratic_form(h)) * characteristic(mu_s, u.T @ h)
            d = abs(lhs - rhs)
            worst = max(worst, d)
            rows.append((float(s), float(t), j, d))

    dual_max = 0.0
    gen = seed_stream(0, "invariance-dual")
    for s, t in list(pairs)[:3]:
        freqs = gen.standard_normal((3, model.dim))
        coeffs = gen.standard_normal(3) + 1j * gen.standard_normal(3)
        poly = TrigPolynomial(coeffs, freqs)
        lhs = mean_functional(system(s), propagate_trig(model, s, t, poly))
        rhs = mean_functional(system(t), poly)
        dual_max = max(dual_max, abs(lhs - rhs))

    return InvarianceReport(system.label, tuple(rows), worst, dual_max, tol, len(probes))


@dataclass(frozen=True)
class LongTimeLimitReport:
    """|P_{s,t} phi (x0) - limit| along a sequence of start times."""

    s_values: tuple
    differences: tuple
    limit_value: complex
    schedule_bound: tuple
    monotone: bool
    final_below: bool
    tol_final: float


def verify_long_time_limit(model: OperatorFamily, t: float, x0: np.ndarray,
                           s_values, phi: TrigPolynomial,
                           system: EvolutionSystem | None = None,
                           tol_final: float = 1e-3) -> LongTimeLimitReport:
    """Convergence of the propagated observable to its system mean as the
    start time recedes.  Requires a positive decay rate; the differences are
    also compared against the schedule const * e^{-zeta (t - s)}.
    """
    from .mehler import apply_exact

    if system is None:
        system = gaussian_system(model)
    if model.decay is None or model.decay[1] <= 0:
        raise ValueError("long-time limit check needs a positive decay rate")
    zeta = model.decay[1]
    limit = mean_functional(system(t), phi)
    s_values = tuple(float(s) for s in s_values)
    diffs = tuple(abs(apply_exact(model, s, t, phi, x0) - limit) for s in s_values)
    const = 2.0 * max(d * math.exp(zeta * (t - s)) for s, d in zip(s_values, diffs))
    schedule = tuple(const * math.exp(-zeta * (t - s)) for s in s_values)
    monotone = all(b <= a * (1.0 + 1e-9) for a, b in zip(diffs, diffs[1:]))
    return LongTimeLimitReport(
        s_values, diffs, limit, schedule, monotone, diffs[-1] <= tol_final, tol_final)
