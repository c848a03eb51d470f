"""Special functions and structured linear algebra used by the analytic model.

Only the parameter regimes that occur in the STP / meta-distribution formulas
are supported.  Everything here is pure and vectorised over the argument.
"""

from __future__ import annotations

import math
import warnings

import numpy as np
from scipy import special

__all__ = [
    "AccuracyWarning",
    "NumericalFailure",
    "adaptive_quad",
    "beta_fn",
    "gauss_2f1",
    "gauss_2f1_neg",
    "lt_toeplitz_exp_column",
    "lt_toeplitz_inv_column",
    "reg_inc_beta",
    "reg_lower_gamma",
    "sinc",
]


class NumericalFailure(ArithmeticError):
    """A numerical routine did not converge for the given parameters."""


class AccuracyWarning(UserWarning):
    """Quadrature stopped before reaching the requested tolerance."""


# ---------------------------------------------------------------------------
# Gauss hypergeometric function
# ---------------------------------------------------------------------------

_SERIES_SWITCH = 0.5
_MAX_TERMS = 400


def _is_nonpositive_int(v: float) -> bool:
    return v <= 0 and abs(v - round(v)) < 1e-12


def _series(a, b, c, w, max_terms=_MAX_TERMS):
    """Plain Gauss series, vectorised over ``w`` (|w| <= 0.5 in practice)."""
    w = np.asarray(w, dtype=float)
    term = np.ones_like(w)
    total = np.ones_like(w)
    for n in range(max_terms):
        term = term * ((a + n) * (b + n) / ((c + n) * (n + 1.0))) * w
        total = total + term
        ratio = abs((a + n + 1) * (b + n + 1) / ((c + n + 1) * (n + 2.0)))
        if n > 2 and ratio * np.max(np.abs(w), initial=0.0) < 1.0:
            if np.all(np.abs(term) <= 1e-17 * np.abs(total)):
                return total
    raise NumericalFailure(
        f"2F1 series did not converge: a={a}, b={b}, c={c}, max|w|={np.max(np.abs(w))}"
    )


def gauss_2f1(a: float, b: float, c: float, w):
    """Gauss hypergeometric function ``2F1(a, b; c; w)`` for ``0 <= w <= 1``.

    Uses the power series for ``w <= 0.5`` and the ``w -> 1 - w`` connection
    formula otherwise.  At ``w == 1`` Gauss's summation theorem is used, which
    requires ``c - a - b > 0``.
    """
    w = np.asarray(w, dtype=float)
    if _is_nonpositive_int(c):
        raise NumericalFailure(f"2F1 undefined for c={c} (nonpositive integer)")
    if np.any((w < 0) | (w > 1)) or np.any(np.isnan(w)):
        raise ValueError("gauss_2f1 requires 0 <= w <= 1")

    out = np.empty_like(w)
    low = w <= _SERIES_SWITCH
    if np.any(low):
        out[low] = _series(a, b, c, w[low])
    high = ~low
    if np.any(high):
        s = c - a - b
        if abs(s - round(s)) < 1e-8:
            raise NumericalFailure(
                f"2F1 connection formula degenerate (c-a-b={s}): a={a}, b={b}, c={c}"
            )
        wh = w[high]
        v = 1.0 - wh
        g1 = special.gamma(c) * special.gamma(s) * special.rgamma(c - a) * special.rgamma(c - b)
        g2 = special.gamma(c) * special.gamma(-s) * special.rgamma(a) * special.rgamma(b)
        first = g1 * _series(a, b, 1.0 - s, v) if g1 != 0.0 else 0.0
        with np.errstate(divide="ignore", invalid="ignore"):
            vs = np.power(v, s)
        if s > 0:
            vs = np.where(v == 0.0, 0.0, vs)
        elif np.any(v == 0.0):
            raise NumericalFailure(f"2F1 diverges at w=1 for c-a-b={s}: a={a}, b={b}, c={c}")
        second = g2 * vs * _series(c - a, c - b, 1.0 + s, v) if g2 != 0.0 else 0.0
        out[high] = first + second
    if not np.all(np.isfinite(out)):
        raise NumericalFailure(f"2F1 produced non-finite values: a={a}, b={b}, c={c}")
    return out if out.ndim else float(out)


def gauss_2f1_neg(a: float, b: float, c: float, x):
    """``2F1(a, b; c; -x)`` for ``x >= 0``.

    The Pfaff transformation maps ``-x`` onto ``w = x / (1 + x)`` in ``[0, 1)``;
    the prefactor exponent is taken as ``min(a, b)`` so that the transformed
    function stays bounded as ``w -> 1``.
    """
    x = np.asarray(x, dtype=float)
    if np.any(x < 0) or np.any(np.isnan(x)):
        raise ValueError("gauss_2f1_neg requires x >= 0")
    lo, hi = (a, b) if a <= b else (b, a)
    w = x / (1.0 + x)
    w = np.where(np.isinf(x), 1.0, w)
    # 2F1(lo, hi; c; -x) = (1+x)^(-lo) 2F1(lo, c-hi; c; x/(1+x))
    val = np.power(1.0 + x, -lo) * gauss_2f1(lo, c - hi, c, w)
    return val if np.ndim(val) else float(val)


# ---------------------------------------------------------------------------
# Gamma / Beta family
# ---------------------------------------------------------------------------


def beta_fn(a: float, b: float) -> float:
    """Complete Beta function ``B(a, b)``."""
    if a <= 0 or b <= 0:
        raise ValueError(f"beta_fn requires a, b > 0 (got a={a}, b={b})")
    val = float(special.beta(a, b))
    if not math.isfinite(val) or val == 0.0:
        raise OverflowError(f"B({a}, {b}) is out of floating point range")
    return val


def reg_inc_beta(x, a: float, b: float):
    """Regularized incomplete Beta function ``I_x(a, b)``."""
    if a <= 0 or b <= 0:
        raise ValueError(f"reg_inc_beta requires a, b > 0 (got a={a}, b={b})")
    xa = np.asarray(x, dtype=float)
    if np.any((xa < 0) | (xa > 1)) or np.any(np.isnan(xa)):
        raise ValueError("reg_inc_beta requires 0 <= x <= 1")
    val = special.betainc(a, b, xa)
    return val if np.ndim(val) else float(val)


def reg_lower_gamma(s: float, x):
    """Regularized lower incomplete Gamma function ``gamma(s, x) / Gamma(s)``."""
    if s <= 0:
        raise ValueError(f"reg_lower_gamma requires s > 0 (got {s})")
    xa = np.asarray(x, dtype=float)
    if np.any(xa < 0):
        raise ValueError("reg_lower_gamma requires x >= 0")
    val = special.gammainc(s, xa)
    return val if np.ndim(val) else float(val)


def sinc(x):
    """Normalised sinc, ``sin(pi x) / (pi x)`` with the limit 1 at 0."""
    val = np.sinc(x)
    return val if np.ndim(val) else float(val)


# ---------------------------------------------------------------------------
# Lower-triangular Toeplitz matrices, first-column only
# ---------------------------------------------------------------------------


def lt_toeplitz_exp_column(q, D: int) -> np.ndarray:
    """First column of ``expm(Q_D)`` for the lower-triangular Toeplitz ``Q_D``.

    ``q[..., k]`` is the k-th subdiagonal (``q[..., 0]`` the diagonal).  Leading
    axes are treated as a batch.  The L1 induced norm of ``expm(Q_D)`` is the
    sum of the returned column.
    """
    if D < 1:
        raise ValueError("Toeplitz dimension D must be >= 1")
    q = np.asarray(q, dtype=float)
    if q.shape[-1] < D:
        raise ValueError(f"need at least D={D} coefficients, got {q.shape[-1]}")
    x = np.empty(q.shape[:-1] + (D,))
    x[..., 0] = np.exp(q[..., 0])
    for m in range(1, D):
        k = np.arange(m)
        coef = (m - k) / m * q[..., m - k]
        x[..., m] = np.sum(coef * x[..., :m], axis=-1)
    return x


def lt_toeplitz_inv_column(d, w, D: int) -> np.ndarray:
    """First column of ``W_D^{-1}`` where ``W_D = d I - (strict lower Toeplitz)``.

    ``w[..., k - 1]`` holds the k-th strict subdiagonal of the subtracted
    Toeplitz part (so ``W[m, k] = -w_{m-k}`` for ``m > k``); ``d`` is the net
    diagonal.  Solved by forward substitution.
    """
    if D < 1:
        raise ValueError("Toeplitz dimension D must be >= 1")
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0) or np.any(np.isnan(d)):
        raise ValueError("Toeplitz inverse needs a positive diagonal (matrix singular or invalid)")
    w = np.asarray(w, dtype=float)
    if w.ndim == 0:
        w = np.full(d.shape + (max(D - 1, 0),), float(w))
    if w.shape[-1] < D - 1:
        raise ValueError(f"need at least D-1={D - 1} subdiagonals, got {w.shape[-1]}")
    x = np.empty(np.broadcast_shapes(d.shape, w.shape[:-1]) + (D,))
    x[..., 0] = 1.0 / d
    for m in range(1, D):
        k = np.arange(m)
        x[..., m] = np.sum(w[..., m - k - 1] * x[..., :m], axis=-1) / d
    return x


# ---------------------------------------------------------------------------
# Adaptive Gauss-Kronrod quadrature
# ---------------------------------------------------------------------------

# 15-point Kronrod extension of the 7-point Gauss rule (QUADPACK qk15).
_XGK = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
])
_WGK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])
_NODES = np.concatenate([-_XGK[:-1], _XGK[::-1]])
_KWEIGHTS = np.concatenate([_WGK[:-1], _WGK[::-1]])
_GWEIGHTS = np.zeros(15)
_GWEIGHTS[1:7:2] = _WG[:3]
_GWEIGHTS[7] = _WG[3]
_GWEIGHTS[9:14:2] = _WG[2::-1]


def _gk15(f, a, b):
    """Apply G7/K15 on every interval [a_i, b_i]; returns (estimate, error)."""
    half = 0.5 * (b - a)
    mid = 0.5 * (b + a)
    t = mid[:, None] + half[:, None] * _NODES[None, :]
    vals = np.asarray(f(t.ravel()), dtype=float)
    vals = vals.reshape(t.shape + vals.shape[1:])
    extra = (None,) * (vals.ndim - 2)
    kron = np.einsum("ij...,j->i...", vals, _KWEIGHTS) * half[(slice(None),) + extra]
    gauss = np.einsum("ij...,j->i...", vals, _GWEIGHTS) * half[(slice(None),) + extra]
    err = np.abs(kron - gauss)
    if err.ndim > 1:
        err = err.reshape(err.shape[0], -1).max(axis=1)
    return kron, err


def adaptive_quad(f, lo: float, hi: float, tol: float = 1e-8, *,
                  max_intervals: int = 2000, initial_intervals: int = 8):
    """Globally adaptive Gauss-Kronrod quadrature of ``f`` over ``[lo, hi]``.

    ``f`` must accept a 1-D array of abscissae and return either an array of
    the same length or an array of shape ``(n, ...)`` for vector-valued
    integrands (all components are refined together).  ``hi`` may be
    ``np.inf``; the range is then mapped with ``v = lo + t / (1 - t)``.

    Stops when the summed error estimate is below ``tol * (1 + |result|)``.
    If the interval budget runs out first, an :class:`AccuracyWarning` is
    issued and the best estimate is returned.
    """
    if hi < lo:
        raise ValueError("adaptive_quad requires lo <= hi")
    if hi == lo:
        probe = np.asarray(f(np.array([lo], dtype=float)), dtype=float)
        res = np.zeros(probe.shape[1:])
        return res if res.ndim else 0.0

    if math.isinf(hi):
        g = f

        def f(t, g=g):
            t = np.asarray(t, dtype=float)
            jac = 1.0 / (1.0 - t) ** 2
            vals = np.asarray(g(lo + t / (1.0 - t)), dtype=float)
            return vals * jac.reshape(jac.shape + (1,) * (vals.ndim - 1))

        a, b = 0.0, 1.0
    else:
        a, b = float(lo), float(hi)

    edges = np.linspace(a, b, initial_intervals + 1)
    left, right = edges[:-1], edges[1:]
    est, err = _gk15(f, left, right)
    while True:
        total = est.sum(axis=0)
        total_err = err.sum()
        target = tol * (1.0 + np.max(np.abs(total)))
        if total_err <= target:
            break
        if left.size >= max_intervals:
            warnings.warn(
                f"adaptive_quad reached {left.size} intervals with error estimate "
                f"{total_err:.3g} > {target:.3g}",
                AccuracyWarning,
                stacklevel=2,
            )
            break
        share = target / left.size
        split = err > share
        order = np.argsort(err)[::-1]
        budget = max_intervals - left.size
        if split.sum() > budget:
            split = np.zeros_like(split)
            split[order[:max(budget, 1)]] = True
        if not split.any():
            split[order[0]] = True
        mid = 0.5 * (left[split] + right[split])
        new_left = np.concatenate([left[split], mid])
        new_right = np.concatenate([mid, right[split]])
        new_est, new_err = _gk15(f, new_left, new_right)
        keep = ~split
        left = np.concatenate([left[keep], new_left])
        right = np.concatenate([right[keep], new_right])
        est = np.concatenate([est[keep], new_est])
        err = np.concatenate([err[keep], new_err])
    total = est.sum(axis=0)
    return total if np.ndim(total) else float(total)
