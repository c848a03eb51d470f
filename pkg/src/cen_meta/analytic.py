"""IN load statistics, interferer geometry and the STP of both IN schemes.

Interference at the typical user is split into three radial bands (a, b, c)
with their own thinned densities.  Every Laplace-transform quantity is built
from two per-band primitives:

``tail_laplace(s, r)``
    ``int_r^inf (1 - 1/(1 + s v^-alpha)) v dv``
``tail_moment(m, s, r)``
    ``int_r^inf s^m v^(1 - alpha m) / (1 + s v^-alpha)^(m+1) dv``

A band ``[lo, hi)`` contributes the difference of the primitive at ``lo`` and
``hi``.  Both are written in forms that stay finite for ``r -> 0`` and
``r -> inf``, so empty bands and ``R_c = 0`` / ``mu = 0`` need no special
casing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import Fixed, Flexible, NetworkConfig
from .specfun import (
    adaptive_quad,
    gauss_2f1,
    gauss_2f1_neg,
    lt_toeplitz_exp_column,
    lt_toeplitz_inv_column,
    reg_lower_gamma,
    sinc,
)

__all__ = [
    "Band",
    "INLoadStats",
    "InterfererBands",
    "f_func",
    "f_tilde",
    "in_missing_prob",
    "interferer_bands",
    "load_stats",
    "match_fixed_range",
    "match_flexible_coefficient",
    "mean_in_requests",
    "q_vector",
    "stp_file",
    "stp_fixed_file",
    "stp_flexible_file",
    "stp_total",
    "tail_laplace",
    "tail_moment",
    "theta_i_pmf",
    "theta_r_pmf",
    "w_vector",
]

QUAD_TOL = 1e-8


# ---------------------------------------------------------------------------
# IN load
# ---------------------------------------------------------------------------


def _theta_bar_fixed(r_c: float, lambda_bs: float, xi: float) -> float:
    x = math.pi * lambda_bs * r_c * r_c
    # x + exp(-x/xi) - 1, accurate for small x
    return x + math.expm1(-x / xi)


def _theta_bar_flexible(mu: float, xi: float) -> float:
    return xi * mu * mu - min(mu * mu, 1.0)


def mean_in_requests(cfg: NetworkConfig) -> float:
    """Mean number of IN requests received by a BS."""
    if isinstance(cfg.scheme, Fixed):
        val = _theta_bar_fixed(cfg.scheme.r_c, cfg.lambda_bs, cfg.xi)
    else:
        val = _theta_bar_flexible(cfg.scheme.mu, cfg.xi)
    return max(val, 0.0)


def theta_r_pmf(theta_bar: float, theta: int) -> float:
    """Poisson approximation of P[Theta_r = theta]."""
    if theta < 0:
        return 0.0
    if theta_bar == 0:
        return 1.0 if theta == 0 else 0.0
    return math.exp(theta * math.log(theta_bar) - theta_bar - math.lgamma(theta + 1))


def theta_i_pmf(theta_bar: float, L: int) -> np.ndarray:
    """PMF of the number of satisfied IN requests, ``theta = 0..L``."""
    pmf = np.array([theta_r_pmf(theta_bar, t) for t in range(L + 1)])
    if L == 0:
        pmf[0] = 1.0
    elif theta_bar == 0:
        pmf[L] = 0.0
    else:
        pmf[L] = reg_lower_gamma(L, theta_bar)
    return pmf


def in_missing_prob(theta_bar: float, L: int, *, max_terms: int = 200) -> float:
    """Probability that a BS receiving the typical user's request ignores it."""
    if L == 0:
        return 1.0
    if theta_bar == 0:
        return 0.0
    total = 0.0
    log_tb = math.log(theta_bar)
    for theta in range(L, L + max_terms):
        term = (theta + 1 - L) * math.exp(
            theta * log_tb - theta_bar - math.lgamma(theta + 2))
        total += term
        if term < 1e-14 and theta > theta_bar:
            break
    return min(max(total, 0.0), 1.0)


@dataclass(frozen=True)
class INLoadStats:
    theta_bar: float
    epsilon: float
    theta_i_pmf: np.ndarray


def load_stats(cfg: NetworkConfig) -> INLoadStats:
    tb = mean_in_requests(cfg)
    return INLoadStats(tb, in_missing_prob(tb, cfg.L), theta_i_pmf(tb, cfg.L))


# ---------------------------------------------------------------------------
# Interferer bands
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Band:
    tag: str
    lo: float
    hi: float
    density: float


@dataclass(frozen=True)
class InterfererBands:
    bands: tuple
    a_coef: float
    b_coef: float

    def __iter__(self):
        return iter(self.bands)


def _coefficients(cfg: NetworkConfig, eps: float, z):
    """(a, b) coefficients; arrays over ``z`` for the fixed scheme."""
    inv_xi = 1.0 / cfg.xi
    if isinstance(cfg.scheme, Fixed):
        near = np.asarray(z) < cfg.scheme.r_c
        a = np.where(near, eps, 1.0)
        b = np.where(near, 1.0, 1.0 - inv_xi)
        return a, b
    if cfg.scheme.mu < 1:
        return 1.0 - inv_xi, 1.0
    return 1.0, eps


def _layout(cfg: NetworkConfig, stats: INLoadStats, z):
    """Band edges and densities, each of shape ``(3,) + z.shape``."""
    z = np.asarray(z, dtype=float)
    lam = cfg.lambda_bs
    eps = stats.epsilon
    if isinstance(cfg.scheme, Fixed):
        r = np.full_like(z, cfg.scheme.r_c)
    else:
        r = cfg.scheme.mu * z
    inner = np.minimum(z, r)
    outer = np.maximum(z, r)
    a, b = _coefficients(cfg, eps, z)
    a = np.broadcast_to(a, z.shape)
    b = np.broadcast_to(b, z.shape)
    lo = np.stack([np.zeros_like(z), inner, outer])
    hi = np.stack([inner, outer, np.full_like(z, np.inf)])
    dens = np.stack([
        np.full_like(z, eps * lam * (1.0 - 1.0 / cfg.xi)),
        a * b * lam,
        np.full_like(z, lam),
    ])
    return lo, hi, dens


def interferer_bands(cfg: NetworkConfig, stats: INLoadStats, z: float) -> InterfererBands:
    """Densities and radial intervals of the three interferer groups at serving distance ``z``."""
    if not z > 0:
        raise ValueError(f"serving distance must be > 0, got {z}")
    lo, hi, dens = _layout(cfg, stats, np.array(z))
    a, b = _coefficients(cfg, stats.epsilon, np.array(z))
    bands = tuple(Band(t, float(lo[i]), float(hi[i]), float(dens[i]))
                  for i, t in enumerate("abc"))
    return InterfererBands(bands, float(a), float(b))


# ---------------------------------------------------------------------------
# Hypergeometric building blocks
# ---------------------------------------------------------------------------


def f_func(x, alpha: float):
    """``F(x) = 2F1(-2/alpha, 1; 1 - 2/alpha; -x) - 1``."""
    d = 2.0 / alpha
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    small = x <= 0.5
    if np.any(small):
        # sum_{n>=1} d (-1)^(n+1) x^n / (n - d); avoids the "- 1" cancellation
        xs = x[small]
        acc = np.zeros_like(xs)
        power = np.ones_like(xs)
        for n in range(1, 80):
            power = power * xs
            acc += (-1) ** (n + 1) * d * power / (n - d)
        out[small] = acc
    if np.any(~small):
        out[~small] = gauss_2f1_neg(-d, 1.0, 1.0 - d, x[~small]) - 1.0
    return out if out.ndim else float(out)


def f_tilde(m: int, x, alpha: float):
    """``2F1(1 + m, m - 2/alpha; m - 2/alpha + 1; -x) / (alpha m - 2)``."""
    if m < 1:
        raise ValueError("f_tilde needs m >= 1")
    d = 2.0 / alpha
    val = np.asarray(gauss_2f1_neg(1.0 + m, m - d, m - d + 1.0, x)) / (alpha * m - 2.0)
    return val if val.ndim else float(val)


def tail_laplace(s, r, alpha: float):
    """``int_r^inf (1 - 1/(1 + s v^-alpha)) v dv`` for ``s >= 0``, ``0 <= r <= inf``."""
    d = 2.0 / alpha
    s, r = np.broadcast_arrays(np.asarray(s, dtype=float), np.asarray(r, dtype=float))
    out = np.zeros(s.shape)
    finite = np.isfinite(r) & (s > 0)
    ra = np.where(finite, r, 1.0) ** alpha
    # s r^-alpha <= 1: r^2/2 F(x) through the small-argument path
    near = finite & (s <= ra)
    if np.any(near):
        x = s[near] / ra[near]
        out[near] = 0.5 * r[near] ** 2 * f_func(x, alpha)
    far = finite & ~near
    if np.any(far):
        # (r^a + s)^d 2F1(-d, -d; 1-d; w) - r^2, stable down to r = 0
        ss, rr, raf = s[far], r[far], ra[far]
        w = ss / (ss + raf)
        out[far] = 0.5 * ((raf + ss) ** d * gauss_2f1(-d, -d, 1.0 - d, w) - rr * rr)
    return out if out.ndim else float(out)


def tail_moment(m: int, s, r, alpha: float):
    """``int_r^inf s^m v^(1 - alpha m) (1 + s v^-alpha)^-(m+1) dv`` for ``m >= 1``."""
    d = 2.0 / alpha
    s, r = np.broadcast_arrays(np.asarray(s, dtype=float), np.asarray(r, dtype=float))
    out = np.zeros(s.shape)
    live = np.isfinite(r) & (s > 0)
    if np.any(live):
        ss = s[live]
        w = ss / (ss + r[live] ** alpha)
        # r^2 x^m F~_m(x) = s^d w^(m-d) 2F1(-d, m-d; m-d+1; w) / (alpha m - 2)
        out[live] = (ss ** d * w ** (m - d) * gauss_2f1(-d, m - d, m - d + 1.0, w)
                     / (alpha * m - 2.0))
    return out if out.ndim else float(out)


def _band_diff(prim, s, lo, hi):
    return prim(s, lo) - prim(s, hi)


def q_vector(z, tau: float, cfg: NetworkConfig, stats: INLoadStats, D: int) -> np.ndarray:
    """Toeplitz generator ``q_0..q_{D-1}`` at serving distance(s) ``z``.

    ``q_0`` is the log-Laplace transform of the interference at
    ``s = tau z^alpha`` and ``q_m = (-s)^m / m! * d^m/ds^m`` of it.  Returns an
    array of shape ``z.shape + (D,)``.
    """
    if D < 1:
        raise ValueError("D must be >= 1")
    z = np.asarray(z, dtype=float)
    alpha = cfg.alpha
    lo, hi, dens = _layout(cfg, stats, z)
    s = tau * z ** alpha
    out = np.zeros(z.shape + (D,))
    if tau == 0:
        return out
    lap = lambda s_, r_: tail_laplace(s_, r_, alpha)  # noqa: E731
    out[..., 0] = -2 * np.pi * np.sum(dens * _band_diff(lap, s, lo, hi), axis=0)
    for m in range(1, D):
        mom = lambda s_, r_, m=m: tail_moment(m, s_, r_, alpha)  # noqa: E731
        out[..., m] = 2 * np.pi * np.sum(dens * _band_diff(mom, s, lo, hi), axis=0)
    return out


def w_vector(tau: float, cfg: NetworkConfig, stats: INLoadStats, D: int):
    """``(w_0, [w_1, ..., w_{D-1}])`` for the flexible scheme.

    Under the flexible scheme ``q_0 = -pi lambda z^2 w_0`` and
    ``q_m = pi lambda z^2 w_m``, so the coefficients are read off at ``z = 1``.
    """
    if not isinstance(cfg.scheme, Flexible):
        raise ValueError("w_vector is defined for the flexible scheme only")
    q = q_vector(np.array(1.0), tau, cfg, stats, D)
    scale = np.pi * cfg.lambda_bs
    return -q[0] / scale, q[1:] / scale


# ---------------------------------------------------------------------------
# STP
# ---------------------------------------------------------------------------


def _diversity_orders(cfg: NetworkConfig) -> np.ndarray:
    return cfg.M - np.arange(cfg.L + 1)


def _u_to_z(u, cfg: NetworkConfig):
    """Serving distance from the normalised variable ``u = pi lambda z^2 / xi``."""
    return np.sqrt(np.asarray(u) * cfg.xi / (np.pi * cfg.lambda_bs))


def _serving_quad(integrand, cfg: NetworkConfig, tol: float):
    """``E_Z[integrand(z)]`` integrated over ``u`` with the ``exp(-u)`` weight.

    Splits at ``z = R_c`` for the fixed scheme, where the band layout changes.
    """
    def g(u):
        u = np.asarray(u, dtype=float)
        vals = np.asarray(integrand(_u_to_z(u, cfg)))
        return vals * np.exp(-u).reshape(u.shape + (1,) * (vals.ndim - 1))

    if isinstance(cfg.scheme, Fixed) and cfg.scheme.r_c > 0:
        u_c = np.pi * cfg.lambda_bs * cfg.scheme.r_c ** 2 / cfg.xi
        return adaptive_quad(g, 0.0, u_c, tol) + adaptive_quad(g, u_c, np.inf, tol)
    return adaptive_quad(g, 0.0, np.inf, tol)


def stp_fixed_file(tau: float, cfg: NetworkConfig, *, tol: float = QUAD_TOL) -> float:
    """Per-file STP of the fixed IN scheme."""
    if not isinstance(cfg.scheme, Fixed):
        raise ValueError("stp_fixed_file needs a Fixed scheme config")
    stats = load_stats(cfg)
    if tau == 0:
        return 1.0
    orders = _diversity_orders(cfg)
    pmf = stats.theta_i_pmf

    def integrand(z):
        q = q_vector(z, tau, cfg, stats, cfg.M)
        cols = np.cumsum(lt_toeplitz_exp_column(q, cfg.M), axis=-1)
        return cols[..., orders - 1] @ pmf

    return float(np.clip(_serving_quad(integrand, cfg, tol), 0.0, 1.0))


def stp_flexible_file(tau: float, cfg: NetworkConfig) -> float:
    """Per-file STP of the flexible IN scheme (closed form, no quadrature)."""
    if not isinstance(cfg.scheme, Flexible):
        raise ValueError("stp_flexible_file needs a Flexible scheme config")
    stats = load_stats(cfg)
    w0, wsub = w_vector(tau, cfg, stats, cfg.M)
    d = 1.0 / cfg.xi + w0
    col = np.cumsum(lt_toeplitz_inv_column(d, wsub, cfg.M))
    val = float(col[_diversity_orders(cfg) - 1] @ stats.theta_i_pmf) / cfg.xi
    return min(max(val, 0.0), 1.0)


def stp_file(tau: float, cfg: NetworkConfig) -> float:
    """Per-file STP ``p_{s,n}`` (identical for every cached file)."""
    if isinstance(cfg.scheme, Fixed):
        return stp_fixed_file(tau, cfg)
    return stp_flexible_file(tau, cfg)


def stp_total(tau: float, cfg: NetworkConfig) -> float:
    """Network STP: per-file STP weighted by the cache hit mass."""
    return cfg.hit_mass * stp_file(tau, cfg)


# ---------------------------------------------------------------------------
# Fair comparison between the schemes
# ---------------------------------------------------------------------------


def match_fixed_range(mu: float, lambda_bs: float, xi: float, *, rtol: float = 1e-10) -> float:
    """R_c giving the same mean IN load as the flexible scheme with ``mu``."""
    if mu < 0:
        raise ValueError("mu must be >= 0")
    target = _theta_bar_flexible(mu, xi)
    if target <= 0:
        return 0.0
    hi = 10.0 * math.sqrt(xi * mu * mu / (math.pi * lambda_bs))
    while _theta_bar_fixed(hi, lambda_bs, xi) < target:
        hi *= 2.0
    lo = 0.0
    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        if _theta_bar_fixed(mid, lambda_bs, xi) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def match_flexible_coefficient(r_c: float, lambda_bs: float, xi: float) -> float:
    """Inverse of :func:`match_fixed_range`: the ``mu`` matching a given ``R_c``.

    For ``xi == 1`` every ``mu < 1`` gives zero load; the smallest matching
    ``mu`` is returned.
    """
    if r_c < 0:
        raise ValueError("r_c must be >= 0")
    target = _theta_bar_fixed(r_c, lambda_bs, xi)
    if target <= 0:
        return 0.0
    if xi > 1 and target <= xi - 1:
        return math.sqrt(target / (xi - 1))
    return math.sqrt((target + 1) / xi)
