"""Moments of the conditional STP and the beta-approximated meta distribution.

The conditional STP (CSTP) of a file given the BS locations is replaced by
its Alzer-type upper bound

    P^u = sum_theta P_theta sum_{i=1}^{K} (-1)^(i+1) C(K, i)
          prod_x 1 / (1 + i beta_K tau Z^alpha |x|^-alpha),   K = M - theta,

with ``beta_K = (K!)^(-1/K)``.  Its first two moments over the point process
give a beta approximation of the CSTP distribution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .analytic import (
    QUAD_TOL,
    _layout,
    _serving_quad,
    load_stats,
    tail_laplace,
    tail_moment,
)
from .model import Fixed, Flexible, NetworkConfig
from .specfun import adaptive_quad, reg_inc_beta

__all__ = [
    "MetaCurve",
    "MomentSummary",
    "beta_meta",
    "h_ij",
    "h_ij_closed",
    "m1",
    "m1_fixed",
    "m1_flexible",
    "m2",
    "meta_curve",
    "meta_file",
    "meta_total",
    "moments",
    "upper_bound_cstp",
    "variance_file",
    "variance_total",
]

DEGENERATE_VAR = 1e-12
_NEAR_EQUAL = 1e-5


def _beta_factor(K: int) -> float:
    return math.exp(-math.lgamma(K + 1) / K)


def _alt_binom(K: int) -> np.ndarray:
    i = np.arange(1, K + 1)
    return np.array([(-1) ** (k + 1) * math.comb(K, k) for k in i], dtype=float)


def _terms(cfg: NetworkConfig, pmf: np.ndarray):
    """Flattened ``(c, weight)`` over all ``(theta, i)`` pairs.

    ``c = i beta_K`` scales ``tau Z^alpha`` and ``weight`` carries
    ``P_theta (-1)^(i+1) C(K, i)``.
    """
    cs, ws = [], []
    for theta, p in enumerate(pmf):
        if p == 0:
            continue
        K = cfg.M - theta
        b = _beta_factor(K)
        cs.append(b * np.arange(1, K + 1))
        ws.append(p * _alt_binom(K))
    return np.concatenate(cs), np.concatenate(ws)


def upper_bound_cstp(radii, z: float, theta: int, tau: float, cfg: NetworkConfig) -> float:
    """Upper bound on the CSTP for one realisation.

    ``radii`` are the distances of the active interferers, ``z`` the serving
    distance and ``theta`` the number of nulled users at the serving BS.
    """
    K = cfg.M - theta
    if K < 1:
        raise ValueError("theta must be < M")
    radii = np.asarray(radii, dtype=float)
    c = _beta_factor(K) * np.arange(1, K + 1)
    s = c[:, None] * tau * z ** cfg.alpha * radii[None, :] ** (-cfg.alpha)
    prods = np.exp(-np.sum(np.log1p(s), axis=1))
    return float(_alt_binom(K) @ prods)


# ---------------------------------------------------------------------------
# First moment
# ---------------------------------------------------------------------------


def _band_laplace(c, z, tau, cfg, stats):
    """``sum_k lambda_k int_{Omega_k} (1 - 1/(1 + c tau z^a v^-a)) v dv``.

    ``c`` has shape ``(n_c,)`` and ``z`` shape ``(n,)``; returns ``(n_c, n)``.
    """
    lo, hi, dens = _layout(cfg, stats, z)
    s = np.asarray(c)[:, None] * tau * np.asarray(z)[None, :] ** cfg.alpha
    out = np.zeros(s.shape)
    for k in range(3):
        diff = tail_laplace(s, lo[k][None, :], cfg.alpha) - tail_laplace(s, hi[k][None, :], cfg.alpha)
        out += dens[k][None, :] * diff
    return out


def m1_fixed(tau: float, cfg: NetworkConfig, *, tol: float = QUAD_TOL) -> float:
    """First moment of the CSTP bound under the fixed scheme."""
    if not isinstance(cfg.scheme, Fixed):
        raise ValueError("m1_fixed needs a Fixed scheme config")
    return _m1_quadrature(tau, cfg, tol)


def _m1_quadrature(tau, cfg, tol):
    stats = load_stats(cfg)
    if tau == 0:
        return 1.0
    c, wt = _terms(cfg, stats.theta_i_pmf)

    def integrand(z):
        return wt @ np.exp(-2 * np.pi * _band_laplace(c, z, tau, cfg, stats))

    return float(np.clip(_serving_quad(integrand, cfg, tol), 0.0, 1.0))


def m1_flexible(tau: float, cfg: NetworkConfig) -> float:
    """First moment of the CSTP bound under the flexible scheme (closed form)."""
    if not isinstance(cfg.scheme, Flexible):
        raise ValueError("m1_flexible needs a Flexible scheme config")
    stats = load_stats(cfg)
    if tau == 0:
        return 1.0
    c, wt = _terms(cfg, stats.theta_i_pmf)
    # exponent is 2 pi z^2 e, averaged over Z: 1 / (1 + 2 xi e / lambda)
    e = _band_laplace(c, np.array([1.0]), tau, cfg, stats)[:, 0]
    val = float(wt @ (1.0 / (1.0 + 2.0 * cfg.xi * e / cfg.lambda_bs)))
    return min(max(val, 0.0), 1.0)


def m1(tau: float, cfg: NetworkConfig) -> float:
    """First moment ``M_1`` of the per-file CSTP bound."""
    if isinstance(cfg.scheme, Fixed):
        return m1_fixed(tau, cfg)
    return m1_flexible(tau, cfg)


# ---------------------------------------------------------------------------
# Second moment
# ---------------------------------------------------------------------------


def h_ij(omega, x: float, y: float, i: int, j: int, *, alpha: float = 4.0,
         tol: float = 1e-10) -> float:
    """``int_Omega (1 - 1/((1 + i x v^-a)(1 + j y v^-a))) v dv`` by quadrature.

    ``omega = (lo, hi)`` with ``hi`` possibly infinite.  Reference route for
    :func:`h_ij_closed`.
    """
    lo, hi = omega
    if not 0 <= lo <= hi:
        raise ValueError("need 0 <= lo <= hi")
    if lo == hi:
        return 0.0
    p, q = i * x, j * y

    def f(v):
        v = np.asarray(v, dtype=float)
        with np.errstate(divide="ignore"):
            u = np.where(v > 0, v ** (-alpha), np.inf)
        # 1 - 1/((1+pu)(1+qu)) = (pu + qu + pq u^2) / ((1+pu)(1+qu)), written
        # through the small-u branch to keep the tail accurate
        with np.errstate(invalid="ignore", over="ignore"):
            num = p * u + q * u + p * q * u * u
            val = num / ((1 + p * u) * (1 + q * u))
        return np.where(np.isfinite(u), val, 1.0) * v

    return float(adaptive_quad(f, float(lo), float(hi), tol))


def h_ij_closed(omega, x: float, y: float, i: int, j: int, *, alpha: float = 4.0) -> float:
    """Closed form of :func:`h_ij` by partial fractions in ``v^-alpha``."""
    lo, hi = omega
    p, q = float(i * x), float(j * y)
    c = np.array([p, q])
    a = _interval(tail_laplace, c, lo, hi, alpha)
    g = _interval(lambda s, r, al: tail_moment(1, s, r, al), c, lo, hi, alpha)
    return float(_combine(c[:, None], a[:, None], g[:, None])[0, 1, 0])


def _interval(prim, s, lo, hi, alpha):
    return prim(s, lo, alpha) - prim(s, hi, alpha)


def _combine(c, a, g):
    """Pairwise ``H`` from per-coefficient band integrals.

    ``c``, ``a`` (tail Laplace) and ``g`` (first tail moment) have shape
    ``(n_c, n)``; the result has shape ``(n_c, n_c, n)``.  For ``p != q``

        H(p, q) = (p A(p) - q A(q)) / (p - q),

    and on the diagonal ``H(p, p) = A(p) + G_1(p)``.  Nearly equal pairs use
    the mean of the two diagonal values, which is second-order accurate since
    ``H`` is symmetric.
    """
    diag = a + g
    ci, cj = c[:, None, :], c[None, :, :]
    num = ci * a[:, None, :] - cj * a[None, :, :]
    den = ci - cj
    scale = np.maximum(np.abs(ci), np.abs(cj))
    close = np.abs(den) <= _NEAR_EQUAL * scale
    with np.errstate(invalid="ignore", divide="ignore"):
        h = num / np.where(close, 1.0, den)
    avg = 0.5 * (diag[:, None, :] + diag[None, :, :])
    return np.where(close, avg, h)


def _pair_exponent(c, z, tau, cfg, stats):
    """``sum_k lambda_k H(Omega_k)`` for all coefficient pairs; ``(n_c, n_c, n)``."""
    lo, hi, dens = _layout(cfg, stats, z)
    s = np.asarray(c)[:, None] * tau * np.asarray(z)[None, :] ** cfg.alpha
    out = np.zeros((len(c), len(c), s.shape[1]))
    for k in range(3):
        a = _interval(tail_laplace, s, lo[k][None, :], hi[k][None, :], cfg.alpha)
        g = _interval(lambda s_, r_, al: tail_moment(1, s_, r_, al), s,
                      lo[k][None, :], hi[k][None, :], cfg.alpha)
        out += dens[k][None, None, :] * _combine(s, a, g)
    return out


def _m2_quadrature(tau, cfg, tol=QUAD_TOL):
    stats = load_stats(cfg)
    if tau == 0:
        return 1.0
    c, wt = _terms(cfg, stats.theta_i_pmf)
    W = np.outer(wt, wt)

    def integrand(z):
        e = _pair_exponent(c, z, tau, cfg, stats)
        return np.einsum("ij,ijn->n", W, np.exp(-2 * np.pi * e))

    return float(np.clip(_serving_quad(integrand, cfg, tol), 0.0, 1.0))


def _m2_flexible_closed(tau, cfg):
    stats = load_stats(cfg)
    if tau == 0:
        return 1.0
    c, wt = _terms(cfg, stats.theta_i_pmf)
    e = _pair_exponent(c, np.array([1.0]), tau, cfg, stats)[:, :, 0]
    val = float(wt @ (1.0 / (1.0 + 2.0 * cfg.xi * e / cfg.lambda_bs)) @ wt)
    return min(max(val, 0.0), 1.0)


def m2(tau: float, cfg: NetworkConfig) -> float:
    """Second moment ``M_2`` of the per-file CSTP bound."""
    if isinstance(cfg.scheme, Flexible):
        return _m2_flexible_closed(tau, cfg)
    return _m2_quadrature(tau, cfg)


# ---------------------------------------------------------------------------
# Beta approximation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MomentSummary:
    """First two moments of the per-file CSTP bound and the fitted beta shape."""

    m1: float
    m2: float
    tau: float = float("nan")

    @property
    def variance(self) -> float:
        return max(self.m2 - self.m1 ** 2, 0.0)

    @property
    def degenerate(self) -> bool:
        return (self.m2 - self.m1 ** 2 < DEGENERATE_VAR
                or not 0 < self.m1 < 1 or self.m2 <= self.m1 ** 2)

    @property
    def kappa(self) -> float:
        if self.degenerate:
            return float("nan")
        return (self.m1 - self.m2) * (1 - self.m1) / (self.m2 - self.m1 ** 2)

    @property
    def beta_params(self) -> tuple[float, float]:
        k = self.kappa
        return self.m1 * k / (1 - self.m1), k


def moments(tau: float, cfg: NetworkConfig) -> MomentSummary:
    return MomentSummary(m1(tau, cfg), m2(tau, cfg), tau)


def beta_meta(ms: MomentSummary, x):
    """Beta approximation of ``P[CSTP > x]``.

    A (near-)zero variance collapses the distribution to a point mass at
    ``m1``, giving a step function.
    """
    x = np.asarray(x, dtype=float)
    if ms.degenerate:
        out = np.where(x < ms.m1, 1.0, 0.0)
    else:
        a, b = ms.beta_params
        xc = np.clip(x, 0.0, 1.0)
        out = 1.0 - np.asarray(reg_inc_beta(xc, a, b))
        out = np.where(x < 0, 1.0, np.where(x >= 1, 0.0, out))
    return out if out.ndim else float(out)


def variance_file(tau: float, cfg: NetworkConfig) -> float:
    return moments(tau, cfg).variance


def variance_total(tau: float, cfg: NetworkConfig) -> float:
    """CSTP variance scaled by the cache hit mass (sum over cached files)."""
    return cfg.hit_mass * variance_file(tau, cfg)


def meta_file(x, tau: float, cfg: NetworkConfig):
    return beta_meta(moments(tau, cfg), x)


def meta_total(x, tau: float, cfg: NetworkConfig):
    """Meta distribution summed over cached files (hit mass times per-file value)."""
    return cfg.hit_mass * np.asarray(meta_file(x, tau, cfg))


@dataclass(frozen=True)
class MetaCurve:
    x: np.ndarray
    fbar: np.ndarray
    moments: MomentSummary
    total: bool


def meta_curve(tau: float, cfg: NetworkConfig, *, n_points: int = 201,
               total: bool = False) -> MetaCurve:
    """Meta distribution sampled on an even grid of reliability thresholds."""
    ms = moments(tau, cfg)
    x = np.linspace(0.0, 1.0, n_points)
    f = np.asarray(beta_meta(ms, x), dtype=float)
    if total:
        f = cfg.hit_mass * f
    return MetaCurve(x, f, ms, total)
