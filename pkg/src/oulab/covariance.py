"""Accumulated noise covariances and their derivative identities.

Between times s <= t the noise accumulates the covariance

    K(t, s) = integral over [s, t] of U(t, r) B(r) B(r)^T U(t, r)^T dr,

which is the covariance of the Gaussian transition law started at s and read
at t.  Diagonal models reduce to one scalar integral per mode,

    k_i(t, s) = integral of exp(2 integral_sigma^t a_i) b_i(sigma)^2 dsigma,

evaluated with an exact drift antiderivative when the model carries one and
a cached dense interpolant otherwise.  Dense models use composite
Gauss-Legendre panels chained right-to-left so each propagator solve only
spans a single panel.

The infinite-horizon limit K(t, -inf) is realized by truncating at a start
time s* whose neglected tail is controlled either by the model's decay
certificate or by an explicit caller-supplied cutoff; the truncation is
always recorded, never silent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate
from scipy.integrate import solve_ivp

from .evolution import propagator_matrix, scalar_drift_integral
from .linalg import NotPSDError, SymOperator
from .models import OperatorFamily, WindowExceededError

MODE_TOL = 1e-11
DENSE_TOL = 1e-9
PSD_CLAMP = 1e-10


class NoDecayError(RuntimeError):
    """No usable decay rate and no explicit tail cutoff was supplied."""


class QuadratureStalledError(RuntimeError):
    """Panel refinement stopped improving before reaching tolerance."""


@dataclass(frozen=True)
class CovarianceKernel:
    """An accumulated covariance with its quadrature provenance.

    ``s`` is -inf for truncated infinite-horizon kernels; the actual cutoff
    and the bound used to pick it live in ``meta``.
    """

    s: float
    t: float
    op: SymOperator
    meta: dict = field(default_factory=dict)

    @property
    def matrix(self) -> np.ndarray:
        return self.op.entries


def _ensure_psd(mat: np.ndarray) -> SymOperator:
    """Clamp eigenvalues in [-PSD_CLAMP, 0) to zero; reject worse."""
    sym = 0.5 * (mat + mat.T)
    w = np.linalg.eigvalsh(sym)
    lo = float(w.min())
    if lo < -PSD_CLAMP:
        raise NotPSDError(f"quadrature produced eigenvalue {lo:.3e}")
    if lo < 0.0:
        w2, v = np.linalg.eigh(sym)
        sym = (v * np.clip(w2, 0.0, None)) @ v.T
    return SymOperator(sym)


# -- per-mode machinery ------------------------------------------------------

def _drift_cumulative(model: OperatorFamily, idx: int):
    """Callable giving the cumulative drift integral of mode idx from the
    window start; built once per (model, mode) on a dense interpolant."""
    cache = model.meta.setdefault("_drift_cumulative", {})
    if idx not in cache:
        mode = model.modes[idx]
        lo, hi = model.window
        sol = solve_ivp(lambda u, y: [float(mode.drift(u))], (lo, hi), [0.0],
                        method="DOP853", dense_output=True, rtol=1e-13, atol=1e-14)
        cache[idx] = lambda u, s=sol: float(s.sol(u)[0])
    return cache[idx]


def mode_accumulated(model: OperatorFamily, idx: int, s: float, t: float,
                     tol: float = MODE_TOL) -> float:
    """Scalar accumulated covariance of one diagonal mode over [s, t]."""
    if t == s:
        return 0.0
    mode = model.modes[idx]
    if mode.drift_antideriv is not None:
        anti = mode.drift_antideriv
        at = float(anti(t))
        inner = lambda sigma: at - float(anti(sigma))
    else:
        cum = _drift_cumulative(model, idx)
        at = cum(t)
        inner = lambda sigma: at - cum(sigma)
    f = lambda sigma: math.exp(2.0 * inner(sigma)) * float(mode.diffusion(sigma)) ** 2
    val, _ = integrate.quad(f, s, t, epsabs=tol, epsrel=tol, limit=400)
    return val


# -- dense and scalar quadrature ---------------------------------------------

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(16)


def _scalar_panels(model: OperatorFamily, s: float, t: float, panels: int) -> np.ndarray:
    bounds = np.linspace(s, t, panels + 1)
    acc = np.zeros((model.dim, model.dim))
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
        for x, w in zip(_GL_NODES, _GL_WEIGHTS):
            r = mid + half * x
            weight = math.exp(2.0 * scalar_drift_integral(model, r, t))
            b = model.noise_matrix(r)
            acc += (w * half * weight) * (b @ b.T)
    return acc


def _right_edge_propagators(model: OperatorFamily, lo: float, hi: float,
                            points) -> dict[float, np.ndarray]:
    """U(hi, r) for every r in points, via one sequential backward sweep.

    W(sigma) := U(hi, hi - sigma) solves W' = W A(hi - sigma), W(0) = I, so
    a single adaptive pass with stops at the sorted targets covers all the
    nodes of a panel."""
    from .evolution import _integrate_matrix_ode, drift_evaluator

    out = {}
    w = np.eye(model.dim)
    sigma = 0.0
    drift = drift_evaluator(model)
    f = lambda sig, m: m @ drift(hi - sig)
    for r in sorted(points, reverse=True):
        target = hi - r
        if target > sigma:
            w = _integrate_matrix_ode(f, sigma, target, w)
            sigma = target
        out[r] = w.copy()
    return out


def _dense_panels(model: OperatorFamily, s: float, t: float, panels: int) -> np.ndarray:
    """One composite pass: propagators are chained panel by panel so no
    solve spans more than one panel."""
    bounds = np.linspace(s, t, panels + 1)
    acc = np.zeros((model.dim, model.dim))
    carry = np.eye(model.dim)  # U(t, bounds[i+1]) while processing panel i
    for i in range(panels - 1, -1, -1):
        lo, hi = bounds[i], bounds[i + 1]
        mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
        rs = mid + half * _GL_NODES
        props = _right_edge_propagators(model, lo, hi, list(rs) + [lo])
        for r, w in zip(rs, _GL_WEIGHTS):
            u = carry @ props[r]
            q = model.diffusion_matrix(r)
            acc += (w * half) * (u @ q @ u.T)
        carry = carry @ props[lo]
    return acc


def _refine(panel_fn, s, t, tol) -> tuple[np.ndarray, dict]:
    prev = None
    for panels in (2, 4, 8, 16, 32, 64, 128):
        cur = panel_fn(s, t, panels)
        if prev is not None:
            delta = float(np.abs(cur - prev).max())
            if delta <= tol:
                return cur, {"panels": panels, "richardson_delta": delta}
        prev = cur
    raise QuadratureStalledError(f"no convergence to {tol} after 128 panels on [{s}, {t}]")


def accumulated(model: OperatorFamily, s: float, t: float) -> CovarianceKernel:
    """The covariance K(t, s) accumulated by the noise between s and t.

    Results are memoized per model: the kernel is a pure function of
    (s, t) and call sites (finite differences, norm checks, repeated
    propagations) hit the same pairs many times over.
    """
    if t < s:
        raise ValueError(f"need s <= t, got s={s}, t={t}")
    model.require_window(s, t)
    cache = model.meta.setdefault("_kernel_cache", {})
    key = (float(s), float(t))
    if key in cache:
        return cache[key]
    if t == s:
        kern = CovarianceKernel(s, t, SymOperator.zero(model.dim), {"method": "exact-zero"})
    elif model.kind == "diagonal":
        diag = [mode_accumulated(model, i, s, t) for i in range(model.dim)]
        kern = CovarianceKernel(s, t, _ensure_psd(np.diag(diag)),
                                {"method": "per-mode quad", "tol": MODE_TOL})
    elif model.kind == "scalar":
        mat, info = _refine(lambda a, b, p: _scalar_panels(model, a, b, p), s, t, DENSE_TOL)
        kern = CovarianceKernel(s, t, _ensure_psd(mat), {"method": "gauss-legendre", **info})
    else:
        mat, info = _refine(lambda a, b, p: _dense_panels(model, a, b, p), s, t, DENSE_TOL)
        kern = CovarianceKernel(s, t, _ensure_psd(mat), {"method": "gauss-legendre", **info})
    cache[key] = kern
    return kern


def steady_state(model: OperatorFamily, t: float, tol_tail: float = 1e-10,
                 s_star: float | None = None,
                 tail_bound: float | None = None) -> CovarianceKernel:
    """Infinite-horizon covariance K(t, -inf), truncated at a certified s*.

    Without an explicit ``s_star`` the cutoff comes from the model's decay
    certificate (scale M, rate zeta > 0) and noise bound K:

        neglected trace <= dim * M^2 K^2 * exp(-2 zeta (t - s*)) / (2 zeta),

    pushed below ``tol_tail``.  With an explicit cutoff the caller owns the
    tail estimate; pass ``tail_bound`` to record it.
    """
    model.require_window(t)
    if s_star is None:
        if model.decay is None or model.decay[1] <= 0.0:
            raise NoDecayError(
                "model has no positive decay rate; supply an explicit s_star")
        big_m, zeta = model.decay
        k_sup = float(model.meta.get("noise_sup", 1.0))
        lead = model.dim * big_m**2 * k_sup**2 / (2.0 * zeta)
        gap = math.log(max(lead, tol_tail) / tol_tail) / (2.0 * zeta)
        gap = max(gap, 1.0)
        s_star = t - gap
        tail_bound = lead * math.exp(-2.0 * zeta * gap)
    if s_star < model.window[0]:
        raise WindowExceededError(
            f"tail cutoff {s_star:.3f} falls before window start {model.window[0]}; "
            "widen the window or pass an explicit s_star")
    kern = accumulated(model, s_star, t)
    meta = dict(kern.meta)
    meta.update({"s_star": s_star, "tail_trace_bound": tail_bound, "tol_tail": tol_tail})
    return CovarianceKernel(-math.inf, t, kern.op, meta)


# -- derivative identities ----------------------------------------------------

@dataclass(frozen=True)
class DerivativeReport:
    fd_value: float
    formula_value: float
    fd_step: float
    abs_discrepancy: float
    rel_discrepancy: float


def _quad_form(model: OperatorFamily, s: float, t: float, v: np.ndarray) -> float:
    return accumulated(model, s, t).op.quadratic_form(v)


def check_forward_derivative(model: OperatorFamily, s: float, t: float,
                             h: np.ndarray, fd_step: float = 1e-4) -> DerivativeReport:
    """d/dtau <K(tau, s) h, h> at tau = t against its closed form

        <Q(t) h, h> + 2 <K(t, s) A(t)^T h, h>,

    with Q(t) = B(t) B(t)^T.  Central finite difference on the left.
    """
    if not s < t:
        raise ValueError("need s < t")
    h = np.asarray(h, dtype=float)
    fd = (_quad_form(model, s, t + fd_step, h) - _quad_form(model, s, t - fd_step, h)) / (2 * fd_step)
    q_t = model.diffusion_matrix(t)
    ah = model.drift_adjoint(t) @ h
    formula = float(h @ q_t @ h) + 2.0 * float(h @ accumulated(model, s, t).matrix @ ah)
    diff = abs(fd - formula)
    return DerivativeReport(fd, formula, fd_step, diff, diff / max(1.0, abs(formula)))


def check_backward_derivative(model: OperatorFamily, s: float, t: float,
                              x: np.ndarray, fd_step: float = 1e-4) -> DerivativeReport:
    """d/dsigma <K(t, sigma) x, x> at sigma = s against

        - <U(t, s) Q(s) U(t, s)^T x, x>.
    """
    if not s < t:
        raise ValueError("need s < t")
    x = np.asarray(x, dtype=float)
    fd = (_quad_form(model, s + fd_step, t, x) - _quad_form(model, s - fd_step, t, x)) / (2 * fd_step)
    u = propagator_matrix(model, s, t)
    formula = -float(x @ u @ model.diffusion_matrix(s) @ u.T @ x)
    diff = abs(fd - formula)
    return DerivativeReport(fd, formula, fd_step, diff, diff / max(1.0, abs(formula)))
