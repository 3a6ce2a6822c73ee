"""Time-dependent drift/noise families on an n-dimensional truncation.

A model is the pair of maps t -> A(t) (drift) and t -> B(t) (noise) on a
finite truncation of the state space, together with a query window
[t_min, t_max] on which all coefficient bounds are checked.  Three kinds are
supported:

  diagonal   A(t) e_k = a_k(t) e_k,  B(t) e_k = b_k(t) e_k
  scalar     A(t) = a(t) I with an arbitrary bounded noise map B(t)
  dense      A(t), B(t) arbitrary matrix-valued callables

The factories below ship the concrete families used throughout the test
suite: constant diagonal coefficients, a rational-in-time diagonal drift with
oscillating diffusion, the scalar non-autonomous analogue of the classical
Ornstein-Uhlenbeck operator, a 1-D finite-difference discretization of a
divergence-form parabolic operator with Dirichlet boundary, and a two-mode
family engineered so that more than one evolution system of measures exists.

All boundedness checks are window-relative: numerics cannot verify suprema
over the whole real line.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate

from .linalg import operator_norm


class BadParameterError(ValueError):
    """Model construction parameters violate the factory's contract."""


class WindowExceededError(ValueError):
    """A query time falls outside the model's window."""


SUP_GRID_STEP = 1e-3
SUP_GRID_HALF_WIDTH = 50.0


def _golden_max(f: Callable[[float], float], lo: float, hi: float, tol: float = 1e-12) -> tuple[float, float]:
    """Golden-section maximization of f on [lo, hi]."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    x = 0.5 * (a + b)
    return x, f(x)


def sup_on_window(f: Callable, window: tuple[float, float], step: float = SUP_GRID_STEP) -> float:
    """sup of f over the window: dense grid scan refined by golden section."""
    lo = max(window[0], -SUP_GRID_HALF_WIDTH)
    hi = min(window[1], SUP_GRID_HALF_WIDTH)
    grid = np.arange(lo, hi + step, step)
    with np.errstate(over="ignore"):
        vals = np.asarray(f(grid), dtype=float)
    i = int(np.argmax(vals))
    a = grid[max(i - 1, 0)]
    b = grid[min(i + 1, len(grid) - 1)]
    if a == b:
        return float(vals[i])
    _, best = _golden_max(lambda t: float(f(t)), float(a), float(b))
    return max(best, float(vals[i]))


@dataclass(frozen=True)
class ModeCoefficients:
    """Scalar drift/diffusion coefficients of one diagonal mode.

    ``drift_antideriv``, when supplied, is an exact antiderivative of the
    drift; propagator entries then avoid quadrature altogether.
    """

    drift: Callable
    diffusion: Callable
    drift_antideriv: Callable | None = None


@dataclass(frozen=True)
class OperatorFamily:
    name: str
    dim: int
    window: tuple[float, float]
    kind: str  # "diagonal" | "scalar" | "dense"
    modes: tuple[ModeCoefficients, ...] = ()
    scalar_drift: Callable | None = None
    scalar_drift_antideriv: Callable | None = None
    noise_fn: Callable | None = None  # t -> (dim, dim), scalar/dense kinds
    drift_fn: Callable | None = None  # t -> (dim, dim), dense kind
    decay: tuple[float, float] | None = None  # (M, zeta): ||U(t,s)|| <= M e^{-zeta (t-s)}
    hr_decay: tuple[float, float, float] | None = None  # (C, eta, alpha) range-norm bound
    lambda_sup: tuple[float, ...] | None = None  # per-mode drift suprema on the window
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.window[0] >= self.window[1]:
            raise BadParameterError(f"empty window {self.window}")
        if self.dim < 1:
            raise BadParameterError("dim must be >= 1")

    # -- queries ----------------------------------------------------------

    def require_window(self, *times: float) -> None:
        lo, hi = self.window
        for t in times:
            if not (lo <= t <= hi):
                raise WindowExceededError(f"time {t} outside window [{lo}, {hi}]")

    def drift_matrix(self, t: float) -> np.ndarray:
        self.require_window(t)
        if self.kind == "diagonal":
            return np.diag([float(m.drift(t)) for m in self.modes])
        if self.kind == "scalar":
            return float(self.scalar_drift(t)) * np.eye(self.dim)
        return np.asarray(self.drift_fn(t), dtype=float)

    def drift_adjoint(self, t: float) -> np.ndarray:
        return self.drift_matrix(t).T

    def noise_matrix(self, t: float) -> np.ndarray:
        self.require_window(t)
        if self.kind == "diagonal":
            return np.diag([float(m.diffusion(t)) for m in self.modes])
        return np.asarray(self.noise_fn(t), dtype=float)

    def diffusion_matrix(self, t: float) -> np.ndarray:
        """Q(t) = B(t) B(t)^T."""
        b = self.noise_matrix(t)
        return b @ b.T

    @property
    def closed_form(self) -> bool:
        """True when the propagator is an entrywise exponential."""
        return self.kind in ("diagonal", "scalar")


def _diag_common_meta(modes, window) -> dict:
    """Window suprema of |b_k| plus the mode-sum trace diagnostic.

    The diagnostic sum_k ||b_k||_inf^2 / |lambda_k| controls the trace
    hypothesis in the non-truncated setting; on a finite truncation it is
    automatically finite unless some lambda_k = 0, and it is recorded for
    inspection, never asserted.
    """
    b_sup = [sup_on_window(lambda u, m=m: np.abs(m.diffusion(u)), window) for m in modes]
    lam = [sup_on_window(lambda u, m=m: m.drift(u), window) for m in modes]
    diag_terms = [
        (b * b / abs(l)) if l != 0.0 else math.inf for b, l in zip(b_sup, lam)
    ]
    return {
        "noise_sup": max(b_sup),
        "mode_noise_sup": tuple(b_sup),
        "mode_trace_diagnostic": sum(diag_terms),
        "lambda": tuple(lam),
    }


def make_diagonal_constant(n: int, lam: float, b: float,
                           window: tuple[float, float] = (-50.0, 50.0)) -> OperatorFamily:
    """Constant diagonal model: a_k = lam < 0, b_k = b.

    The propagator is exp(lam (t-s)) I, so the decay certificate (M, zeta) =
    (1, -lam) and the range-norm certificate (C, eta, alpha) = (1, -lam, 0)
    are exact, not fitted.
    """
    if lam >= 0:
        raise BadParameterError(f"need lam < 0, got {lam}")
    if n < 1:
        raise BadParameterError("n must be >= 1")
    lam = float(lam)
    b = float(b)
    modes = tuple(
        ModeCoefficients(
            drift=lambda t, l=lam: l * np.ones_like(np.asarray(t, dtype=float)),
            diffusion=lambda t, v=b: v * np.ones_like(np.asarray(t, dtype=float)),
            drift_antideriv=lambda t, l=lam: l * t,
        )
        for _ in range(n)
    )
    meta = _diag_common_meta(modes, window)
    return OperatorFamily(
        name="diag-constant", dim=n, window=window, kind="diagonal", modes=modes,
        decay=(1.0, -lam), hr_decay=(1.0, -lam, 0.0),
        lambda_sup=tuple([lam] * n), meta=meta,
    )


def make_diagonal_rational(n: int, c1: float, c2: float,
                           window: tuple[float, float] = (-50.0, 50.0)) -> OperatorFamily:
    """Diagonal model with rational-in-time drift and oscillating diffusion:

        a_k(t) = -(k^2 + c1) / (t^{2k} + 1),   b_k(t) = sin(k t) + c2,

    k = 1..n, with c1 > 0 and c2 > 1 so every b_k stays >= c2 - 1 > 0.
    Each a_k is strictly negative but tends to 0 at infinity; the recorded
    per-mode suprema are therefore window-relative and tiny in magnitude.
    Note mode 1 has integrable drift, so the propagator does NOT vanish as
    s -> -infinity and no infinite-horizon covariance exists: evolution
    systems for this model must be anchored at a finite start time.
    """
    if c1 <= 0:
        raise BadParameterError(f"need c1 > 0, got {c1}")
    if c2 <= 1:
        raise BadParameterError(f"need c2 > 1, got {c2}")

    def drift_k(k):
        def a(t, k=k):
            t = np.asarray(t, dtype=float)
            with np.errstate(over="ignore"):
                return -(k * k + c1) / (t ** (2 * k) + 1.0)
        return a

    def diff_k(k):
        return lambda t, k=k: np.sin(k * np.asarray(t, dtype=float)) + c2

    modes = []
    for k in range(1, n + 1):
        anti = None
        if k == 1:
            anti = lambda t, c=c1: -(1.0 + c) * math.atan(t)
        modes.append(ModeCoefficients(drift=drift_k(k), diffusion=diff_k(k), drift_antideriv=anti))
    modes = tuple(modes)
    meta = _diag_common_meta(modes, window)
    lam = meta["lambda"]
    return OperatorFamily(
        name="diag-rational", dim=n, window=window, kind="diagonal", modes=modes,
        lambda_sup=lam, meta=meta,
    )


def make_scalar(a: Callable, n: int,
                noise: Callable | None = None,
                window: tuple[float, float] = (-50.0, 50.0),
                drift_antideriv: Callable | None = None,
                require_decay: bool = False) -> OperatorFamily:
    """Scalar model A(t) = a(t) I with noise map B(t).

    ``noise`` maps t to an (n, n) matrix; None means B = I.  When
    a0 := sup a over the window is negative a decay certificate
    (1, -a0) is recorded; inequality experiments need that, so
    ``require_decay=True`` turns a0 >= 0 into an error.
    """
    if n < 1:
        raise BadParameterError("n must be >= 1")
    a0 = sup_on_window(lambda t: np.asarray(a(t), dtype=float), window)
    if require_decay and a0 >= 0:
        raise BadParameterError(f"sup of drift coefficient is {a0} >= 0")
    if noise is None:
        noise = lambda t, n=n: np.eye(n)
    grid = np.linspace(window[0], window[1], 201)
    noise_sup = max(operator_norm(np.asarray(noise(t), dtype=float)) for t in grid)
    meta = {"noise_sup": noise_sup, "drift_sup": a0}
    decay = (1.0, -a0) if a0 < 0 else None
    return OperatorFamily(
        name="scalar", dim=n, window=window, kind="scalar",
        scalar_drift=a, scalar_drift_antideriv=drift_antideriv, noise_fn=noise,
        decay=decay, meta=meta,
    )


def make_parabolic_1d(m: int, a: Callable, a0: Callable,
                      window: tuple[float, float] = (-50.0, 50.0),
                      noise: Callable | None = None) -> OperatorFamily:
    """Second-order finite-difference drift on (0, 1) with Dirichlet rows.

    A(t) discretizes u -> (a(t, x) u')' + a0(t, x) u on m interior points,
    x_i = i h with h = 1/(m+1), using midpoint coefficients:

        (A u)_i = [a(t, x_i + h/2)(u_{i+1} - u_i)
                   - a(t, x_i - h/2)(u_i - u_{i-1})] / h^2 + a0(t, x_i) u_i.

    Ellipticity a >= nu > 0 and non-positivity of a0 are checked on a sample
    grid of the window times the spatial nodes.  B defaults to the identity.
    """
    if m < 1:
        raise BadParameterError("m must be >= 1")
    h = 1.0 / (m + 1)
    xs = np.arange(1, m + 1) * h
    t_grid = np.linspace(window[0], window[1], 101)
    a_min = min(float(a(t, x)) for t in t_grid for x in np.arange(0.5, m + 1) * h)
    if a_min <= 0:
        raise BadParameterError(f"ellipticity violated: min a = {a_min}")
    a0_max = max(float(a0(t, x)) for t in t_grid for x in xs)
    if a0_max > 0:
        raise BadParameterError(f"zero-order coefficient must be <= 0, max is {a0_max}")

    mids = np.arange(0.5, m + 1) * h  # staggered coefficient nodes

    def drift_fn(t):
        am = np.array([a(t, x) for x in mids]) / h**2  # am[i] couples x_i to x_{i-1}
        zero = np.array([a0(t, x) for x in xs])
        mat = np.diag(-(am[:-1] + am[1:]) + zero)
        off = am[1:-1]
        mat[np.arange(m - 1), np.arange(1, m)] = off
        mat[np.arange(1, m), np.arange(m - 1)] = off
        return mat

    if noise is None:
        noise = lambda t, m=m: np.eye(m)
    noise_sup = max(operator_norm(np.asarray(noise(t), dtype=float)) for t in t_grid)
    meta = {"noise_sup": noise_sup, "grid_h": h, "interior_points": m}
    # the drift matrices are symmetric, so the logarithmic-norm bound
    # ||U(t,s)|| <= exp(integral of lambda_max(A)) holds and a sampled
    # negative top eigenvalue certifies exponential decay
    top = max(float(np.linalg.eigvalsh(drift_fn(t)).max()) for t in t_grid)
    meta["drift_top_eigenvalue"] = top
    decay = (1.0, -top) if top < 0 else None
    return OperatorFamily(
        name="parabolic-1d", dim=m, window=window, kind="dense",
        drift_fn=drift_fn, noise_fn=noise, decay=decay, meta=meta,
    )


def _rational_quartic_tail(u: float) -> float:
    """integral of 1/(1+w^4) dw over [0, u], for the substituted far tail."""
    val, _ = integrate.quad(lambda w: 1.0 / (1.0 + w**4), 0.0, u, epsabs=1e-13, epsrel=1e-13)
    return val


def make_nonunique_demo(n: int, window: tuple[float, float] = (-250.0, 50.0)) -> OperatorFamily:
    """Two-regime diagonal model admitting several evolution systems.

    Mode 1 has drift a_1(t) = -t^2/(1 + t^4): non-positive with supremum 0
    (attained at t = 0) and integrable over the line, so the mode-1
    propagator entry converges to a positive constant as s -> -infinity
    instead of vanishing.  Modes k >= 2 decay hard with a_k = -k^2.  The
    diffusion is b_1(t) = 1/(1 + t^2) (square integrable, keeping the
    infinite-horizon covariance finite) and b_k = 1 for k >= 2.

    The factory records m(t) = exp(integral of a_1 over (-inf, t]).  Since
    m solves the mode-1 flow, m(t) e_1 is carried along by the propagator,
    and shifting any zero-mean evolution system by m(t) e_1 produces a
    second, distinct system.  The far tail of the integral, below tau = -1,
    is folded in exactly via the substitution tau = -1/u, and the crossover
    point is recorded.
    """
    if n < 2:
        raise BadParameterError("need n >= 2 to separate the two regimes")

    def a1(t):
        t = np.asarray(t, dtype=float)
        return -(t * t) / (1.0 + t**4)

    def b1(t):
        t = np.asarray(t, dtype=float)
        return 1.0 / (1.0 + t * t)

    modes = [ModeCoefficients(drift=a1, diffusion=b1)]
    for k in range(2, n + 1):
        modes.append(
            ModeCoefficients(
                drift=lambda t, k=k: -float(k * k) * np.ones_like(np.asarray(t, dtype=float)),
                diffusion=lambda t: np.ones_like(np.asarray(t, dtype=float)),
                drift_antideriv=lambda t, k=k: -float(k * k) * t,
            )
        )
    modes = tuple(modes)

    head = _rational_quartic_tail(1.0)  # integral of |a1| over (-inf, -1]

    def mode1_cumulative(t: float) -> float:
        if t <= -1.0:
            return -_rational_quartic_tail(-1.0 / t)
        mid, _ = integrate.quad(a1, -1.0, t, epsabs=1e-13, epsrel=1e-13, limit=200)
        return -head + mid

    def mean_scale(t: float) -> float:
        return math.exp(mode1_cumulative(t))

    meta = _diag_common_meta(modes, window)
    meta.update({
        "mean_scale": mean_scale,
        "mode1_cumulative": mode1_cumulative,
        "mt_tail_crossover": -1.0,
    })
    return OperatorFamily(
        name="nonunique-demo", dim=n, window=window, kind="diagonal", modes=modes,
        lambda_sup=meta["lambda"], meta=meta,
    )


# -- catalog ---------------------------------------------------------------

@dataclass(frozen=True)
class CatalogEntry:
    name: str
    builder: Callable
    defaults: dict
    doc: str


def _build_scalar_osc(n: int = 4, offset: float = -1.0, amp: float = -0.5,
                      window: tuple[float, float] = (-50.0, 50.0)) -> OperatorFamily:
    a = lambda t: offset + amp * np.sin(np.asarray(t, dtype=float))
    anti = lambda t: offset * t - amp * math.cos(t)
    return make_scalar(a, n, window=window, drift_antideriv=anti, require_decay=True)


def _build_parabolic(m: int = 5, nu: float = 1.0, omega: float = 1.0,
                     window: tuple[float, float] = (-50.0, 50.0)) -> OperatorFamily:
    return make_parabolic_1d(
        m,
        a=lambda t, x: nu,
        a0=lambda t, x: -omega,
        window=window,
    )


CATALOG: dict[str, CatalogEntry] = {
    "diag-constant": CatalogEntry(
        "diag-constant", make_diagonal_constant,
        {"n": 8, "lam": -1.0, "b": 1.0},
        "constant diagonal coefficients; every quantity has a closed form",
    ),
    "diag-rational": CatalogEntry(
        "diag-rational", make_diagonal_rational,
        {"n": 4, "c1": 1.0, "c2": 2.0},
        "rational-in-time drift with oscillating diffusion",
    ),
    "scalar-osc": CatalogEntry(
        "scalar-osc", _build_scalar_osc,
        {"n": 4, "offset": -1.0, "amp": -0.5},
        "scalar drift a(t) = offset + amp sin t times the identity",
    ),
    "parabolic-1d": CatalogEntry(
        "parabolic-1d", _build_parabolic,
        {"m": 5, "nu": 1.0, "omega": 1.0},
        "1-D divergence-form finite-difference drift, Dirichlet boundary",
    ),
    "nonunique-demo": CatalogEntry(
        "nonunique-demo", make_nonunique_demo,
        {"n": 3},
        "integrable mode-1 drift; admits several evolution systems",
    ),
}


def build_model(name: str, params: dict | None = None) -> OperatorFamily:
    """Construct a catalog model by name, overriding default parameters."""
    if name not in CATALOG:
        raise BadParameterError(f"unknown model {name!r}; catalog: {sorted(CATALOG)}")
    entry = CATALOG[name]
    kwargs = dict(entry.defaults)
    if params:
        kwargs.update(params)
    return entry.builder(**kwargs)
