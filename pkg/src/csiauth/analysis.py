"""Analytical performance characterizations of the sequential detectors.

Everything here works on the affine reduction of the Gaussian log-likelihood
ratio: moments of quadratic forms, the closed-form affine statistics under
equal covariances, the density/CDF recursion of the 2-state posterior ratio,
its AR(1) steady-state approximation, the bivariate representation of the
3-state statistic, and grid-averaged detection/false-alarm curves.  Each
result is meant to be validated against a Monte Carlo oracle; the module
ships those simulators too.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.linalg import cho_factor, cho_solve
from scipy.optimize import brentq
from scipy.special import ndtr  # standard normal CDF, vectorized

from .detector import HmmModel
from .embedding import EmissionStats
from .errors import ConfigError, NumericFault

LOG_2PI = math.log(2.0 * math.pi)


# ---------------------------------------------------------------------------
# Moments of Gaussian quadratic forms and of the instantaneous LLR
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class QuadFormMoments:
    mean: float
    variance: float


def quad_form_moments(a_mat: np.ndarray, mu_a: np.ndarray, mu_b: np.ndarray,
                      sigma_b: np.ndarray) -> QuadFormMoments:
    """Mean and variance of (z - mu_a)^T A (z - mu_a) for z ~ N(mu_b, Sigma_b)."""
    a_mat = np.asarray(a_mat, dtype=np.float64)
    d = a_mat.shape[0]
    if a_mat.shape != (d, d) or sigma_b.shape != (d, d) or mu_a.shape != (d,) or mu_b.shape != (d,):
        raise ConfigError("quad_form_moments: shape mismatch")
    delta = mu_b - mu_a
    asig = a_mat @ sigma_b
    mean = float(np.trace(asig) + delta @ a_mat @ delta)
    var = float(2.0 * np.trace(asig @ asig) + 4.0 * delta @ a_mat @ sigma_b @ a_mat @ delta)
    return QuadFormMoments(mean=mean, variance=var)


def quad_form_covariance(a_mat: np.ndarray, mu_a: np.ndarray, c_mat: np.ndarray,
                         mu_c: np.ndarray, mu_b: np.ndarray, sigma_b: np.ndarray) -> float:
    """Covariance of two quadratic forms of the same Gaussian vector.

    Cov(Q_A, Q_C) = 2 tr(A S C S) + 4 (mu_b-mu_a)^T A S C (mu_b-mu_c).
    """
    da = mu_b - mu_a
    dc = mu_b - mu_c
    s = sigma_b
    return float(2.0 * np.trace(a_mat @ s @ c_mat @ s) + 4.0 * da @ a_mat @ s @ c_mat @ dc)


def _regularized(stats: EmissionStats) -> tuple[np.ndarray, np.ndarray, float]:
    """(mu, precision, logdet) of the regularized covariance."""
    cov = stats.sigma + stats.reg_eps * np.eye(stats.d)
    try:
        c, low = cho_factor(cov)
    except np.linalg.LinAlgError as exc:
        raise ConfigError("covariance is not positive definite") from exc
    prec = cho_solve((c, low), np.eye(stats.d))
    logdet = 2.0 * float(np.sum(np.log(np.diag(c))))
    return stats.mu, prec, logdet


def llr_moments(stats0: EmissionStats, stats1: EmissionStats,
                under_state: int) -> tuple[float, float]:
    """Mean and variance of the per-sample LLR when z follows ``under_state``."""
    if under_state not in (0, 1):
        raise ConfigError("under_state must be 0 or 1")
    mu0, p0, logdet0 = _regularized(stats0)
    mu1, p1, logdet1 = _regularized(stats1)
    mu_b = (mu0, mu1)[under_state]
    sigma_b = ((stats0.sigma + stats0.reg_eps * np.eye(stats0.d)),
               (stats1.sigma + stats1.reg_eps * np.eye(stats1.d)))[under_state]
    q0 = quad_form_moments(p0, mu0, mu_b, sigma_b)
    q1 = quad_form_moments(p1, mu1, mu_b, sigma_b)
    cov01 = quad_form_covariance(p0, mu0, p1, mu1, mu_b, sigma_b)
    mean = 0.5 * (logdet1 - logdet0 - q0.mean + q1.mean)
    var = 0.25 * (q0.variance + q1.variance - 2.0 * cov01)
    return mean, max(var, 0.0)


# ---------------------------------------------------------------------------
# Equal-covariance (affine) regime
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AffineLlrParams:
    """Per-sample LLR as w^T z + kappa, with its conditional Gaussian law."""

    w: np.ndarray
    kappa: float
    m0: float
    m1: float
    v: float


def affine_llr_params(mu0: np.ndarray, mu1: np.ndarray, sigma: np.ndarray) -> AffineLlrParams:
    """Affine form of log p0(z) - log p1(z) under a shared covariance.

    The weight vector is Sigma^{-1}(mu0 - mu1); with this sign the identity
    w^T z + kappa == log p0(z) - log p1(z) holds exactly.
    """
    try:
        c, low = cho_factor(np.asarray(sigma, dtype=np.float64))
    except np.linalg.LinAlgError as exc:
        raise ConfigError("shared covariance must be positive definite") from exc
    w = cho_solve((c, low), mu0 - mu1)
    kappa = 0.5 * float(mu1 @ cho_solve((c, low), mu1) - mu0 @ cho_solve((c, low), mu0))
    m0 = float(w @ mu0 + kappa)
    m1 = float(w @ mu1 + kappa)
    v = float(w @ sigma @ w)
    return AffineLlrParams(w=w, kappa=kappa, m0=m0, m1=m1, v=v)


def transition_warp(x, a: np.ndarray):
    """f(x): how the previous log-posterior ratio feeds the next one.

    Vectorized over x; saturates at log(a00/a01) and log(a10/a11).
    """
    a = np.asarray(a, dtype=np.float64)
    if a.shape != (2, 2) or np.max(np.abs(a.sum(axis=1) - 1.0)) > 1e-12:
        raise ConfigError("transition matrix must be 2x2 row-stochastic")
    x = np.asarray(x, dtype=np.float64)
    s = _sigmoid_np(x)
    with np.errstate(divide="ignore"):
        out = np.log(a[0, 0] * s + a[1, 0] * (1.0 - s)) - np.log(a[0, 1] * s + a[1, 1] * (1.0 - s))
    return out if out.shape else float(out)


def transition_warp_slope(x: float, a: np.ndarray) -> float:
    """Analytic derivative of the warp at x."""
    s = float(_sigmoid_np(np.asarray(x)))
    ds = s * (1.0 - s)
    num = a[0, 0] * s + a[1, 0] * (1.0 - s)
    den = a[0, 1] * s + a[1, 1] * (1.0 - s)
    return ds * ((a[0, 0] - a[1, 0]) / num - (a[0, 1] - a[1, 1]) / den)


def _sigmoid_np(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def stationary_distribution(a: np.ndarray) -> np.ndarray:
    """Left eigenvector of the transition matrix for eigenvalue 1."""
    n = a.shape[0]
    m = np.vstack([a.T - np.eye(n), np.ones((1, n))])
    rhs = np.concatenate([np.zeros(n), [1.0]])
    sol, *_ = np.linalg.lstsq(m, rhs, rcond=None)
    sol = np.clip(sol, 0.0, None)
    return sol / sol.sum()


# ---------------------------------------------------------------------------
# 2-state density / CDF recursion
# ---------------------------------------------------------------------------

@dataclass
class GridDensity:
    """Joint (sub-probability) densities of the running statistic per state.

    ``values[k]`` integrates to the state's marginal probability ``masses[k]``
    after per-step renormalization; ``deficit[k]`` records the raw quadrature
    leakage that was compensated.
    """

    grid: np.ndarray
    weights: np.ndarray
    values: np.ndarray      # (n_states, n_grid)
    masses: np.ndarray      # (n_states,)
    deficit: np.ndarray     # (n_states,)

    def joint_cdf(self, gamma: float, state: int) -> float:
        c = cumulative_trapezoid(self.values[state], self.grid, initial=0.0)
        return float(np.interp(gamma, self.grid, c))

    def conditional_cdf(self, gamma: float, state: int) -> float:
        mass = self.masses[state]
        return self.joint_cdf(gamma, state) / mass if mass > 0 else 0.0


@dataclass
class Recursion2State:
    grid: np.ndarray
    densities: list[GridDensity]   # index t-1
    p_fa: np.ndarray               # (T,)
    p_d: np.ndarray                # (T,)
    max_deficit: float

    def cdf(self, t: int, gamma: float, state: int) -> float:
        return self.densities[t - 1].conditional_cdf(gamma, state)


def _affine_from_model(model: HmmModel) -> AffineLlrParams:
    sig0 = model.emissions[0].sigma
    for e in model.emissions[1:]:
        if not np.allclose(e.sigma, sig0, atol=1e-10):
            raise ConfigError("analysis requires equal emission covariances")
    return affine_llr_params(model.emissions[0].mu, model.emissions[1].mu, sig0)


def pdf_cdf_recursion_2state(model: HmmModel, thresholds, horizon: int,
                             n_grid: int = 2048, span_sigmas: float = 8.0,
                             deficit_tol: float = 0.01) -> Recursion2State:
    """Propagate the law of the 2-state log-posterior ratio by quadrature.

    Joint densities over (statistic, hidden state) evolve through the
    transition-mixed Gaussian kernel; false-alarm and detection curves are
    the conditional CDFs at the lower threshold.  Leakage past the grid ends
    beyond ``deficit_tol`` (relative) raises a fault.
    """
    if model.n_states != 2:
        raise ConfigError("pdf_cdf_recursion_2state needs a 2-state model")
    if np.any(model.pi <= 0):
        raise ConfigError("initial distribution must be strictly positive here")
    aff = _affine_from_model(model)
    gamma0 = thresholds.gamma0 if hasattr(thresholds, "gamma0") else float(thresholds)
    a = model.a
    m = np.array([aff.m0, aff.m1])
    v, sd = aff.v, math.sqrt(aff.v)
    lam0 = math.log(model.pi[0] / model.pi[1])

    # Range of the deterministic part of the recursion, then Gaussian tails.
    lo = hi = lam0
    gmin = gmax = lam0
    for _ in range(horizon):
        flo, fhi = transition_warp(np.array([lo, hi]), a)
        lo, hi = m.min() + min(flo, fhi), m.max() + max(flo, fhi)
        gmin, gmax = min(gmin, lo), max(gmax, hi)
    tail = span_sigmas * sd * math.sqrt(horizon)
    grid = np.linspace(gmin - tail, gmax + tail, n_grid)
    dx = grid[1] - grid[0]
    weights = np.full(n_grid, dx)
    weights[0] = weights[-1] = dx / 2.0

    fx = transition_warp(grid, a)
    kernels = [
        np.exp(-0.5 * ((grid[:, None] - fx[None, :] - m[k]) ** 2) / v) / (sd * math.sqrt(2 * math.pi))
        for k in range(2)
    ]

    rho = model.pi.copy()
    q = np.stack([
        rho[k] * np.exp(-0.5 * ((grid - m[k] - lam0) ** 2) / v) / (sd * math.sqrt(2 * math.pi))
        for k in range(2)
    ])
    densities = []
    p_fa = np.empty(horizon)
    p_d = np.empty(horizon)
    max_deficit = 0.0

    def _store(qcur, rho_now):
        nonlocal max_deficit
        raw = np.trapezoid(qcur, grid, axis=1)
        deficit = np.where(rho_now > 0, 1.0 - raw / np.where(rho_now > 0, rho_now, 1.0), 0.0)
        if np.max(np.abs(deficit)) > deficit_tol:
            raise NumericFault(
                f"density mass leaked past the grid (relative deficit {np.max(np.abs(deficit)):.3g})")
        max_deficit = max(max_deficit, float(np.max(np.abs(deficit))))
        scale = np.where(raw > 0, rho_now / np.where(raw > 0, raw, 1.0), 0.0)
        qn = qcur * scale[:, None]
        gd = GridDensity(grid=grid, weights=weights, values=qn, masses=rho_now.copy(),
                         deficit=deficit)
        densities.append(gd)
        return qn

    q = _store(q, rho)
    p_fa[0] = densities[-1].conditional_cdf(gamma0, 0)
    p_d[0] = densities[-1].conditional_cdf(gamma0, 1)

    for t in range(2, horizon + 1):
        mixed = a.T @ q                     # row k: sum_i a_ik q_i
        qnew = np.stack([kernels[k] @ (weights * mixed[k]) for k in range(2)])
        rho = rho @ a
        q = _store(qnew, rho)
        p_fa[t - 1] = densities[-1].conditional_cdf(gamma0, 0)
        p_d[t - 1] = densities[-1].conditional_cdf(gamma0, 1)

    return Recursion2State(grid=grid, densities=densities, p_fa=p_fa, p_d=p_d,
                           max_deficit=max_deficit)


# ---------------------------------------------------------------------------
# AR(1) steady-state approximation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Ar1SteadyState:
    c0: float
    c1: float
    mu_lambda: float
    var_lambda: float


def ar1_steady_state(model: HmmModel | np.ndarray, affine: AffineLlrParams) -> Ar1SteadyState:
    """Linearize the warp at the self-consistent mean of the statistic.

    The fixed point solves mu = m_bar + f(mu); the statistic is then an
    AR(1) process with slope c1 = f'(mu), which must be contractive.
    """
    a = model.a if isinstance(model, HmmModel) else np.asarray(model, dtype=np.float64)
    rho_inf = stationary_distribution(a)
    m = np.array([affine.m0, affine.m1])
    m_bar = float(rho_inf @ m)
    var_ell = float(rho_inf @ (affine.v + (m - m_bar) ** 2))

    def h(x):
        return x - m_bar - transition_warp(x, a)

    f_lo = transition_warp(-np.inf, a)
    f_hi = transition_warp(np.inf, a)
    if math.isfinite(f_lo) and math.isfinite(f_hi):
        lo, hi = m_bar + min(f_lo, f_hi) - 1e-9, m_bar + max(f_lo, f_hi) + 1e-9
        if h(lo) > 0 or h(hi) < 0:
            raise ConfigError("no steady-state fixed point in the warp range")
        mu = brentq(h, lo, hi, xtol=1e-12)
    else:
        # Unbounded warp (some transition entry is 0): damped iteration.
        mu = m_bar
        for _ in range(500):
            nxt = m_bar + transition_warp(mu, a)
            if abs(nxt - mu) < 1e-12:
                break
            mu = 0.5 * (mu + nxt)
    c1 = transition_warp_slope(mu, a)
    if abs(c1) >= 1.0:
        raise ConfigError(f"linearized recursion is not contractive (c1 = {c1:.4f})")
    c0 = transition_warp(mu, a) - c1 * mu
    return Ar1SteadyState(c0=c0, c1=c1, mu_lambda=(m_bar + c0) / (1.0 - c1),
                          var_lambda=var_ell / (1.0 - c1 * c1))


# ---------------------------------------------------------------------------
# 3-state representation and region integrals
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BivariateLlrParams:
    """Joint Gaussian law of the two pairwise LLRs plus transition priors."""

    m_by_state: np.ndarray   # (3, 2): mean of (l02, l12) given each state
    v: np.ndarray            # (2, 2)
    t_weights: np.ndarray    # (3,)


def bivariate_llr_params(mu0: np.ndarray, mu1: np.ndarray, mu2: np.ndarray,
                         sigma: np.ndarray, u_prev: np.ndarray,
                         a: np.ndarray) -> BivariateLlrParams:
    """Everything the 3-state statistic needs at one step, under equal
    covariances: affine pairwise LLRs against the spoofer state, their
    conditional bivariate normal law, and the transition-weighted priors."""
    u_prev = np.asarray(u_prev, dtype=np.float64)
    a = np.asarray(a, dtype=np.float64)
    if u_prev.shape != (3,) or np.any(u_prev < 0) or abs(u_prev.sum() - 1.0) > 1e-9:
        raise ConfigError("u_prev must be a distribution over 3 states")
    if a.shape != (3, 3) or np.max(np.abs(a.sum(axis=1) - 1.0)) > 1e-12:
        raise ConfigError("transition matrix must be 3x3 row-stochastic")
    try:
        c, low = cho_factor(np.asarray(sigma, dtype=np.float64))
    except np.linalg.LinAlgError as exc:
        raise ConfigError("shared covariance must be positive definite") from exc

    mus = [np.asarray(mu0), np.asarray(mu1), np.asarray(mu2)]
    sinv = lambda x: cho_solve((c, low), x)
    w = [sinv(mus[k] - mus[2]) for k in range(2)]
    kappa = [0.5 * float(mus[2] @ sinv(mus[2]) - mus[k] @ sinv(mus[k])) for k in range(2)]
    m_by_state = np.array([[w[0] @ mus[s] + kappa[0], w[1] @ mus[s] + kappa[1]]
                           for s in range(3)])
    v = np.array([[w[i] @ sigma @ w[j] for j in range(2)] for i in range(2)])
    t_weights = a.T @ u_prev
    return BivariateLlrParams(m_by_state=m_by_state, v=v, t_weights=t_weights)


def lambda_3state(ell02, ell12, t_weights) -> float | np.ndarray:
    """Log-posterior ratio from the pairwise LLRs and transition priors."""
    t0, t1, t2 = (float(x) for x in t_weights)
    if t2 == 0.0:
        warnings.warn("T2 is zero: statistic is +inf", RuntimeWarning)
        shape = np.broadcast(np.asarray(ell02), np.asarray(ell12)).shape
        return float("inf") if shape == () else np.full(shape, np.inf)
    if isinstance(ell02, float) and isinstance(ell12, float):
        a0 = math.log(t0) + ell02 if t0 > 0 else -math.inf
        a1 = math.log(t1) + ell12 if t1 > 0 else -math.inf
        m = max(a0, a1)
        if m == -math.inf:
            return -math.inf
        return m + math.log(math.exp(a0 - m) + math.exp(a1 - m)) - math.log(t2)
    with np.errstate(divide="ignore"):
        out = np.logaddexp(np.log(t0) + np.asarray(ell02),
                           np.log(t1) + np.asarray(ell12)) - math.log(t2)
    return float(out) if out.shape == () else out


def _canonical_region_cdf(mu_x: np.ndarray, mu_y: np.ndarray, v: np.ndarray,
                          n_gl: int = 12, n_uniform: int = 14,
                          refine_depth: int = 42) -> np.ndarray:
    """P(e^X + e^Y <= 1) for (X, Y) ~ N((mu_x, mu_y), v), batched over means.

    Outer Gauss-Legendre panels over x < 0 (geometrically refined toward the
    boundary at 0 where the inner CDF decays non-smoothly), closed-form
    normal CDF in y.
    """
    mu_x = np.atleast_1d(np.asarray(mu_x, dtype=np.float64))
    mu_y = np.atleast_1d(np.asarray(mu_y, dtype=np.float64))
    v11, v12, v22 = float(v[0, 0]), float(v[0, 1]), float(v[1, 1])
    out = np.zeros_like(mu_x)

    if v11 <= 1e-14:
        feasible = mu_x < 0
        sy = math.sqrt(max(v22, 0.0))
        if sy <= 1e-14:
            out[feasible] = (np.log1p(-np.exp(mu_x[feasible])) >= mu_y[feasible]).astype(float)
        else:
            out[feasible] = ndtr((np.log1p(-np.exp(mu_x[feasible])) - mu_y[feasible]) / sy)
        return out

    sx = math.sqrt(v11)
    beta = v12 / v11
    sy_c = math.sqrt(max(v22 - v12 * v12 / v11, 1e-24))

    lo = mu_x - 9.0 * sx
    hi = np.minimum(0.0, mu_x + 9.0 * sx)
    active = lo < np.minimum(hi, 0.0)
    active &= lo < 0.0
    if not np.any(active):
        return out
    lo_a, hi_a, mux_a, muy_a = lo[active], hi[active], mu_x[active], mu_y[active]
    n = lo_a.shape[0]
    n_panels = n_uniform + refine_depth

    # Breakpoints: boundary-touching instances refine geometrically toward 0.
    bps = np.empty((n, n_panels + 1))
    touches = hi_a >= 0.0
    if np.any(touches):
        lo_t = lo_a[touches]
        delta = np.minimum(sx, -lo_t / 4.0)
        uni = np.linspace(0.0, 1.0, n_uniform + 1)[None, :]
        left = lo_t[:, None] * (1 - uni) + (-delta)[:, None] * uni
        geo = -delta[:, None] * (2.0 ** -np.arange(1, refine_depth + 1))[None, :]
        bps[touches] = np.concatenate([left, geo], axis=1)
    if np.any(~touches):
        uni = np.linspace(0.0, 1.0, n_panels + 1)[None, :]
        bps[~touches] = lo_a[~touches, None] * (1 - uni) + hi_a[~touches, None] * uni

    nodes_ref, w_ref = np.polynomial.legendre.leggauss(n_gl)
    mids = 0.5 * (bps[:, 1:] + bps[:, :-1])
    halfs = 0.5 * (bps[:, 1:] - bps[:, :-1])
    x = (mids[:, :, None] + halfs[:, :, None] * nodes_ref).reshape(n, -1)
    wq = (halfs[:, :, None] * w_ref).reshape(n, -1)

    dens = np.exp(-0.5 * ((x - mux_a[:, None]) / sx) ** 2) / (sx * math.sqrt(2 * math.pi))
    ybound = np.log1p(-np.exp(np.minimum(x, -1e-300)))
    inner = ndtr((ybound - (muy_a[:, None] + beta * (x - mux_a[:, None]))) / sy_c)
    out[active] = np.clip(np.sum(wq * dens * inner, axis=1), 0.0, 1.0)
    return out


def region_cdf_3state(gamma: float, params: BivariateLlrParams, state: int,
                      n_gl: int = 12) -> float:
    """P(statistic <= gamma) conditioned on the hidden state, by quadrature
    over the region T0 e^x + T1 e^y <= e^gamma T2 of the bivariate normal."""
    t0, t1, t2 = (float(x) for x in params.t_weights)
    m = params.m_by_state[state]
    v = params.v
    if t2 == 0.0:
        return 1.0 if (t0 == 0.0 and t1 == 0.0) else 0.0
    if t0 == 0.0 and t1 == 0.0:
        return 1.0
    if t0 == 0.0:
        sy = math.sqrt(max(v[1, 1], 0.0))
        arg = gamma + math.log(t2 / t1) - m[1]
        return float(ndtr(arg / sy)) if sy > 0 else float(arg >= 0)
    if t1 == 0.0:
        sxx = math.sqrt(max(v[0, 0], 0.0))
        arg = gamma + math.log(t2 / t0) - m[0]
        return float(ndtr(arg / sxx)) if sxx > 0 else float(arg >= 0)
    shift = gamma + math.log(t2)
    mu_x = m[0] + math.log(t0) - shift
    mu_y = m[1] + math.log(t1) - shift
    return float(_canonical_region_cdf(np.array([mu_x]), np.array([mu_y]), v, n_gl=n_gl)[0])


def delta_method_moments(params: BivariateLlrParams, state: int) -> tuple[float, float]:
    """Second-order mean and first-order variance of the 3-state statistic."""
    t0, t1, t2 = (float(x) for x in params.t_weights)
    m = params.m_by_state[state]
    v = params.v
    with np.errstate(divide="ignore"):
        a0 = math.log(t0) + m[0] if t0 > 0 else -math.inf
        a1 = math.log(t1) + m[1] if t1 > 0 else -math.inf
    g = float(np.logaddexp(a0, a1)) - math.log(t2)
    p = float(np.exp(a0 - np.logaddexp(a0, a1)))
    h = p * (1.0 - p)
    mean = g + 0.5 * h * (v[0, 0] - 2.0 * v[0, 1] + v[1, 1])
    var = p * p * v[0, 0] + 2.0 * p * (1.0 - p) * v[0, 1] + (1.0 - p) ** 2 * v[1, 1]
    return mean, float(var)


# ---------------------------------------------------------------------------
# Grid-averaged 3-state detection / false alarm curves
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class UGridSpec:
    """Discretization of the previous posterior: log-odds of the legitimate
    mass on a uniform grid, crossed with the within-legitimate share."""

    lam_lo: float
    lam_hi: float
    n_lam: int = 401
    n_omega: int = 21


@dataclass
class Pfa3StateResult:
    t: np.ndarray
    p_fa: np.ndarray
    p_d: np.ndarray
    rho: np.ndarray          # (T, 3) marginal state probabilities


def _model_affine3(model: HmmModel) -> tuple[np.ndarray, np.ndarray]:
    sig0 = model.emissions[0].sigma + model.emissions[0].reg_eps * np.eye(model.emissions[0].d)
    for e in model.emissions[1:]:
        cov = e.sigma + e.reg_eps * np.eye(e.d)
        if not np.allclose(cov, sig0, atol=1e-10):
            raise ConfigError("3-state analysis requires equal emission covariances")
    params = bivariate_llr_params(model.emissions[0].mu, model.emissions[1].mu,
                                  model.emissions[2].mu, sig0,
                                  np.array([1 / 3, 1 / 3, 1 / 3]), model.a)
    return params.m_by_state, params.v


def _auto_ugrid(model: HmmModel, horizon: int) -> UGridSpec:
    m_by_state, v = _model_affine3(model)
    drift = float(np.max(np.abs(m_by_state))) + 4.0 * math.sqrt(float(np.max(np.diag(v))))
    lam_max = drift * horizon + 20.0
    n_lam = min(1601, int(2 * lam_max / 0.5) + 1)
    return UGridSpec(lam_lo=-lam_max, lam_hi=lam_max, n_lam=n_lam)


def _gh_points_2d(m: np.ndarray, v: np.ndarray, n_gh: int) -> tuple[np.ndarray, np.ndarray]:
    """Tensor Gauss-Hermite points/weights for N(m, v) on the plane."""
    xi, wi = np.polynomial.hermite.hermgauss(n_gh)
    pts = np.array([[x, y] for x in xi for y in xi]) * math.sqrt(2.0)
    wts = np.array([a * b for a in wi for b in wi]) / math.pi
    try:
        lv = np.linalg.cholesky(v)
    except np.linalg.LinAlgError:
        vals, vecs = np.linalg.eigh(v)
        lv = vecs @ np.diag(np.sqrt(np.clip(vals, 0, None)))
    return m + pts @ lv.T, wts


def pfa_pd_3state(gamma0: float, model: HmmModel, horizon: int,
                  u_grid: UGridSpec | None = None, n_gh: int = 12,
                  weight_floor: float = 1e-12,
                  check_refinement: float | None = None) -> Pfa3StateResult:
    """Grid-averaged false-alarm / detection curves for the 3-state chain.

    Maintains a discretized joint law of (hidden state, previous posterior),
    evaluates the conditional region CDF at every retained grid point and
    conditioning state, and aggregates with the transition-propagated state
    marginals.  The posterior grid lives on (log-odds of the legitimate mass,
    within-legitimate share) with bilinear mass assignment.

    With ``check_refinement`` set, the curves are recomputed on a grid with
    half the resolution; if any point moves by more than the given tolerance
    the resolution is reported as insufficient.
    """
    if check_refinement is not None:
        fine = pfa_pd_3state(gamma0, model, horizon, u_grid, n_gh, weight_floor)
        spec = u_grid or _auto_ugrid(model, horizon)
        coarse_spec = UGridSpec(spec.lam_lo, spec.lam_hi,
                                max(3, spec.n_lam // 2 + 1),
                                max(3, spec.n_omega // 2 + 1))
        coarse = pfa_pd_3state(gamma0, model, horizon, coarse_spec, n_gh, weight_floor)
        drift = max(float(np.max(np.abs(fine.p_fa - coarse.p_fa))),
                    float(np.max(np.abs(fine.p_d - coarse.p_d))))
        if drift > check_refinement:
            raise NumericFault(
                f"posterior-grid resolution insufficient: halving it moves "
                f"results by {drift:.4f} > {check_refinement}")
        return fine
    if model.n_states != 3:
        raise ConfigError("pfa_pd_3state needs a 3-state model")
    m_by_state, v = _model_affine3(model)
    a = model.a
    pi = model.pi

    if u_grid is None:
        u_grid = _auto_ugrid(model, horizon)
    lam_axis = np.linspace(u_grid.lam_lo, u_grid.lam_hi, u_grid.n_lam)
    om_axis = np.linspace(0.0, 1.0, u_grid.n_omega)

    # Quadrature of the emission law per conditioning state.
    gh = [_gh_points_2d(m_by_state[s], v, n_gh) for s in range(3)]

    n_lam, n_om = u_grid.n_lam, u_grid.n_omega
    n_cells = n_lam * n_om

    def u_components(lam, om):
        s_a = _sigmoid_np(np.asarray(lam, dtype=np.float64))
        return s_a * om, s_a * (1.0 - om), 1.0 - s_a

    def bin_mass(lam, om, w):
        """Bilinear scatter onto the flat (lam, omega) grid."""
        lam = np.clip(lam, lam_axis[0], lam_axis[-1])
        om = np.clip(om, 0.0, 1.0)
        fi = (lam - lam_axis[0]) / (lam_axis[1] - lam_axis[0])
        fj = om * (n_om - 1)
        i0 = np.clip(fi.astype(np.int64), 0, n_lam - 2)
        j0 = np.clip(fj.astype(np.int64), 0, n_om - 2)
        di, dj = fi - i0, fj - j0
        base = i0 * n_om + j0
        out = np.bincount(base, w * (1 - di) * (1 - dj), minlength=n_cells)
        out += np.bincount(base + n_om, w * di * (1 - dj), minlength=n_cells)
        out += np.bincount(base + 1, w * (1 - di) * dj, minlength=n_cells)
        out += np.bincount(base + n_om + 1, w * di * dj, minlength=n_cells)
        return out.reshape(n_lam, n_om)

    def region_batch(t_w: np.ndarray, s: int) -> np.ndarray:
        """Conditional region CDF for a batch of T-weight triples."""
        t0, t1, t2 = t_w[:, 0], t_w[:, 1], t_w[:, 2]
        res = np.zeros(t_w.shape[0])
        general = (t0 > 0) & (t1 > 0) & (t2 > 0)
        if np.any(general):
            shift = gamma0 + np.log(t2[general])
            mu_x = m_by_state[s][0] + np.log(t0[general]) - shift
            mu_y = m_by_state[s][1] + np.log(t1[general]) - shift
            res[general] = _canonical_region_cdf(mu_x, mu_y, v)
        special = ~general
        if np.any(special):
            params_like = [
                region_cdf_3state(gamma0, BivariateLlrParams(m_by_state, v, t_w[idx]), s)
                for idx in np.nonzero(special)[0]
            ]
            res[special] = params_like
        return res

    # t = 1: prior pi plays the role of the transition-weighted priors.
    rho = [pi.copy()]
    p_fa = np.empty(horizon)
    p_d = np.empty(horizon)
    t_pi = np.tile(pi, (1, 1))
    joint = np.array([pi[s] * region_batch(t_pi, s)[0] for s in range(3)])
    p_fa[0] = (joint[0] + joint[1]) / (pi[0] + pi[1])
    p_d[0] = joint[2] / pi[2] if pi[2] > 0 else 0.0

    # Initialize the posterior-grid law from the first observation.
    w_grid = np.zeros((3, n_lam, n_om))
    with np.errstate(divide="ignore"):
        log_pi = np.log(pi)
    for s in range(3):
        pts, wts = gh[s]
        l0 = log_pi[0] + pts[:, 0]
        l1 = log_pi[1] + pts[:, 1]
        lam_new = np.logaddexp(l0, l1) - log_pi[2]
        om_new = _sigmoid_np(l0 - l1)
        w_grid[s] = bin_mass(lam_new, om_new, pi[s] * wts)

    for t in range(2, horizon + 1):
        rho.append(rho[-1] @ a)
        # Mass arriving in next-state s from each posterior node, with the
        # previous conditioning state summed out (the node's u already holds
        # everything the transition priors need).
        ws = np.einsum("inm,is->snm", w_grid, a)
        joint = np.zeros(3)
        rho_check = ws.sum(axis=(1, 2))
        new_grid = np.zeros_like(w_grid)
        for s in range(3):
            mask = ws[s] > weight_floor
            if not np.any(mask):
                continue
            idx_l, idx_o = np.nonzero(mask)
            w_s = ws[s][mask]
            u0, u1, u2 = u_components(lam_axis[idx_l], om_axis[idx_o])
            t_w = np.stack([u0, u1, u2], axis=1) @ a    # (n_nodes, 3)
            joint[s] = float(w_s @ region_batch(t_w, s))
            pts, wq = gh[s]
            with np.errstate(divide="ignore"):
                lt = np.log(t_w)
            l0 = lt[:, 0:1] + pts[:, 0][None, :]
            l1 = lt[:, 1:2] + pts[:, 1][None, :]
            lam_new = np.logaddexp(l0, l1) - lt[:, 2:3]
            om_new = _sigmoid_np(l0 - l1)
            new_grid[s] = bin_mass(lam_new.ravel(), om_new.ravel(),
                                   (w_s[:, None] * wq[None, :]).ravel())
        total = rho_check.sum()
        new_total = new_grid.sum()
        if total <= 0 or new_total <= 0:
            raise NumericFault("posterior-grid mass vanished")
        joint /= total
        rho_here = rho_check / total
        alice = rho_here[0] + rho_here[1]
        p_fa[t - 1] = (joint[0] + joint[1]) / alice if alice > 0 else 0.0
        p_d[t - 1] = joint[2] / rho_here[2] if rho_here[2] > 0 else 0.0
        w_grid = new_grid / new_total

    return Pfa3StateResult(t=np.arange(1, horizon + 1), p_fa=p_fa, p_d=p_d,
                           rho=np.array(rho))


# ---------------------------------------------------------------------------
# Monte Carlo oracles for the recursions above
# ---------------------------------------------------------------------------

def simulate_chain(pi: np.ndarray, a: np.ndarray, horizon: int, n: int,
                   rng: np.random.Generator) -> np.ndarray:
    """(n, horizon) hidden-state paths."""
    n_states = pi.shape[0]
    states = np.empty((n, horizon), dtype=np.int64)
    states[:, 0] = rng.choice(n_states, size=n, p=pi)
    cum = np.cumsum(a, axis=1)
    for t in range(1, horizon):
        u = rng.random(n)
        states[:, t] = (u[:, None] > cum[states[:, t - 1]]).sum(axis=1)
    return states


def simulate_lambda_2state(model_pi, model_a, affine: AffineLlrParams, horizon: int,
                           n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Trajectories of the 2-state statistic under its generative law.

    Returns (lambdas, states), each (n, horizon).
    """
    pi = np.asarray(model_pi, dtype=np.float64)
    a = np.asarray(model_a, dtype=np.float64)
    states = simulate_chain(pi, a, horizon, n, rng)
    m = np.array([affine.m0, affine.m1])
    sd = math.sqrt(affine.v)
    lams = np.empty((n, horizon))
    lam = np.full(n, math.log(pi[0] / pi[1]))
    for t in range(horizon):
        ell = m[states[:, t]] + sd * rng.standard_normal(n)
        if t == 0:
            lam = ell + lam
        else:
            lam = ell + transition_warp(lam, a)
        lams[:, t] = lam
    return lams, states


def simulate_lambda_3state(pi, a, m_by_state: np.ndarray, v: np.ndarray, horizon: int,
                           n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Trajectories of the 3-state statistic in the equal-covariance regime.

    Propagates full posteriors through the pairwise-LLR representation.
    Returns (lambdas, states), each (n, horizon).
    """
    pi = np.asarray(pi, dtype=np.float64)
    a = np.asarray(a, dtype=np.float64)
    states = simulate_chain(pi, a, horizon, n, rng)
    lv = np.linalg.cholesky(v + 1e-15 * np.eye(2))
    lams = np.empty((n, horizon))
    with np.errstate(divide="ignore"):
        log_u = np.tile(np.log(pi), (n, 1))
    for t in range(horizon):
        ells = m_by_state[states[:, t]] + rng.standard_normal((n, 2)) @ lv.T
        if t == 0:
            log_t = log_u
        else:
            mx = log_u.max(axis=1, keepdims=True)
            log_t = np.log(np.exp(log_u - mx) @ a) + mx
        la = np.stack([log_t[:, 0] + ells[:, 0], log_t[:, 1] + ells[:, 1], log_t[:, 2]], axis=1)
        lams[:, t] = np.logaddexp(la[:, 0], la[:, 1]) - la[:, 2]
        log_u = la - np.logaddexp.reduce(la, axis=1, keepdims=True)
    return lams, states
