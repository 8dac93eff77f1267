"""Bessel functions of the first kind and their positive zeros.

``J_nu(x)`` is evaluated for real order ``nu > -1`` (negative integer orders
through reflection) and real ``x >= 0``:

* ``x <= SERIES_CUTOFF``: the ascending power series, summed in double-double
  arithmetic so that the alternating terms cancel without losing digits;
* ``x > SERIES_CUTOFF``: Hankel's large-argument expansion, truncated at its
  smallest term.

Both branches agree to ~1e-15 at the crossover.  Zeros are bracketed by a
global sign scan (so none is skipped or repeated), bisected, then polished
with Newton steps.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ConvergenceError, DomainError, RangeError

SERIES_CUTOFF = 25.0
X_MAX = 1.0e5
NU_MAX = 6.0

_SPLITTER = 134217729.0  # 2**27 + 1
_SERIES_EPS = 1e-17
_MAX_SERIES_TERMS = 400
_SCAN_STEP = math.pi / 8


# --- double-double helpers (arrays of hi/lo pairs) -------------------------

def _two_sum(a, b):
    s = a + b
    bb = s - a
    err = (a - (s - bb)) + (b - bb)
    return s, err


def _quick_two_sum(a, b):
    s = a + b
    return s, b - (s - a)


def _split(a):
    c = _SPLITTER * a
    hi = c - (c - a)
    return hi, a - hi


def _two_prod(a, b):
    p = a * b
    ah, al = _split(a)
    bh, bl = _split(b)
    err = ((ah * bh - p) + ah * bl + al * bh) + al * bl
    return p, err


def _dd_add(ah, al, bh, bl):
    s, e = _two_sum(ah, bh)
    e = e + (al + bl)
    return _quick_two_sum(s, e)


def _dd_mul(ah, al, bh, bl):
    p, e = _two_prod(ah, bh)
    e = e + (ah * bl + al * bh)
    return _quick_two_sum(p, e)


def _dd_div(ah, al, bh, bl):
    q1 = ah / bh
    ph, pl = _dd_mul(bh, bl, q1, 0.0)
    rh, rl = _dd_add(ah, al, -ph, -pl)
    q2 = rh / bh
    ph, pl = _dd_mul(bh, bl, q2, 0.0)
    rh, rl = _dd_add(rh, rl, -ph, -pl)
    q3 = rh / bh
    qh, ql = _quick_two_sum(q1, q2)
    return _dd_add(qh, ql, q3, 0.0)


# --- validation ------------------------------------------------------------

def _is_negative_integer(nu: float) -> bool:
    return nu < 0 and float(nu).is_integer()


def _check_order(nu: float) -> None:
    if not math.isfinite(nu):
        raise DomainError(f"Bessel order must be finite, got {nu!r}")
    if nu <= -1 and not _is_negative_integer(nu):
        raise DomainError(f"Bessel order must satisfy nu > -1, got {nu!r}")
    if abs(nu) > NU_MAX:
        raise RangeError(f"|nu| = {abs(nu)} exceeds the supported maximum {NU_MAX}")


def _as_argument(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if np.any(np.isnan(x)) or np.any(x < 0):
        raise DomainError("Bessel argument must be a nonnegative real")
    if np.any(x > X_MAX):
        raise RangeError(f"Bessel argument exceeds the supported maximum {X_MAX:g}")
    return x


# --- the two evaluation branches ------------------------------------------

def _series_scaled(nu: float, x: np.ndarray) -> np.ndarray:
    """``sum_k (-x^2/4)^k / (k! Gamma(nu+k+1))`` times ``Gamma(nu+1)``, in double-double."""
    qh, ql = _two_prod(x, x)
    qh, ql = -0.25 * qh, -0.25 * ql
    th = np.ones_like(x)
    tl = np.zeros_like(x)
    sh = np.ones_like(x)
    sl = np.zeros_like(x)
    active = np.ones(x.shape, dtype=bool)
    for k in range(_MAX_SERIES_TERMS):
        if not active.any():
            break
        # t_{k+1} = t_k * q / ((k+1)(nu+k+1)); all exact inputs go through dd ops
        dh, dl = _two_sum(nu, float(k + 1))
        dh, dl = _dd_mul(dh, dl, float(k + 1), 0.0)
        th, tl = _dd_mul(th, tl, qh, ql)
        th, tl = _dd_div(th, tl, dh, dl)
        th = np.where(active, th, 0.0)
        tl = np.where(active, tl, 0.0)
        sh, sl = _dd_add(sh, sl, th, tl)
        # the terms only decay once k exceeds x/2
        done = (np.abs(th) <= _SERIES_EPS * np.abs(sh)) & (k + 1 > 0.5 * x)
        active &= ~done
    else:
        raise ConvergenceError("power series for J_nu did not converge")
    return sh + sl


def _hankel(nu: float, x: np.ndarray) -> np.ndarray:
    mu = 4.0 * nu * nu
    p = np.ones_like(x)
    q = np.zeros_like(x)
    term = np.ones_like(x)
    active = np.ones(x.shape, dtype=bool)
    k = 0
    while active.any():
        k += 1
        new = term * (mu - (2 * k - 1) ** 2) / (8.0 * k * x)
        # stop at the smallest term: the expansion is only asymptotic
        growing = np.abs(new) >= np.abs(term)
        active &= ~growing
        term = np.where(active, new, 0.0)
        sign = -1.0 if (k // 2) % 2 else 1.0
        if k % 2:
            q = q + sign * term
        else:
            p = p + sign * term
        active &= np.abs(term) > _SERIES_EPS * np.abs(p)
        if k > 4 * SERIES_CUTOFF + 200:
            raise ConvergenceError("Hankel expansion failed to reach its smallest term")
    phase = (0.5 * nu + 0.25) * math.pi
    cphi, sphi = math.cos(phase), math.sin(phase)
    cx, sx = np.cos(x), np.sin(x)
    cos_w = cx * cphi + sx * sphi
    sin_w = sx * cphi - cx * sphi
    return np.sqrt(2.0 / (math.pi * x)) * (p * cos_w - q * sin_w)


def _scaled(nu: float, x: np.ndarray) -> np.ndarray:
    """``J_nu(x) / x**nu`` for ``nu > -1``; finite at ``x = 0``."""
    out = np.empty_like(x)
    small = x <= SERIES_CUTOFF
    if small.any():
        lead = 2.0 ** (-nu) / math.gamma(nu + 1.0)
        out[small] = lead * _series_scaled(nu, x[small])
    if (~small).any():
        xl = x[~small]
        out[~small] = _hankel(nu, xl) / xl**nu
    return out


def _unscaled(nu: float, x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    small = x <= SERIES_CUTOFF
    if small.any():
        xs = x[small]
        lead = 1.0 / math.gamma(nu + 1.0)
        with np.errstate(divide="ignore"):
            power = (0.5 * xs) ** nu
        out[small] = lead * power * _series_scaled(nu, xs)
    if (~small).any():
        out[~small] = _hankel(nu, x[~small])
    return out


def _finish(values: np.ndarray, scalar: bool):
    return float(values) if scalar else values


def besselj(nu: float, x):
    """Bessel function of the first kind ``J_nu(x)``.

    Parameters
    ----------
    nu : float
        Order, ``nu > -1``.  Negative integers are also accepted and handled
        through ``J_{-n} = (-1)^n J_n``.
    x : float or array_like
        Nonnegative argument(s), at most ``X_MAX``.

    Returns
    -------
    float or ndarray
        Same shape as ``x``.  ``J_nu(0)`` is ``inf`` for ``-1 < nu < 0``.
    """
    nu = float(nu)
    _check_order(nu)
    scalar = np.ndim(x) == 0
    xa = np.atleast_1d(_as_argument(x))
    if _is_negative_integer(nu):
        n = int(-nu)
        return _finish((-1.0) ** n * _unscaled(float(n), xa).reshape(np.shape(x)), scalar)
    return _finish(_unscaled(nu, xa).reshape(np.shape(x)), scalar)


def besselj_scaled(nu: float, x):
    """``J_nu(x) / x**nu``, an entire function of ``x`` for ``nu > -1``.

    At ``x = 0`` it equals ``2**-nu / Gamma(nu + 1)``.  Eigenfunctions built
    from ``J_nu`` use this form to avoid ``0 * inf`` at the origin.
    """
    nu = float(nu)
    _check_order(nu)
    if _is_negative_integer(nu):
        raise DomainError("besselj_scaled is defined for nu > -1 only")
    scalar = np.ndim(x) == 0
    xa = np.atleast_1d(_as_argument(x))
    return _finish(_scaled(nu, xa).reshape(np.shape(x)), scalar)


def besselj_derivative(nu: float, x):
    """``d/dx J_nu(x) = (nu/x) J_nu(x) - J_{nu+1}(x)`` for ``x > 0``."""
    x = np.asarray(x, dtype=float)
    return nu / x * besselj(nu, x) - besselj(nu + 1.0, x)


# --- zeros -----------------------------------------------------------------

@dataclass(frozen=True)
class BesselZero:
    """The ``k``-th positive zero ``z`` of ``J_nu``."""

    nu: float
    k: int
    z: float


def mcmahon(nu: float, k):
    """Leading large-``k`` location of the ``k``-th zero, ``(k + (nu - 1/2)/2) pi``."""
    return (np.asarray(k, dtype=float) + 0.5 * (nu - 0.5)) * math.pi


def _sign_scan(nu: float, upper: float) -> tuple[np.ndarray, np.ndarray]:
    grid = np.arange(_SCAN_STEP, upper + _SCAN_STEP, _SCAN_STEP)
    # the scaled function has the sign of J_nu on (0, inf) and is finite at 0
    grid = np.concatenate(([0.0], grid))
    neg = np.signbit(_scaled(nu, grid))
    cells = np.flatnonzero(neg[1:] != neg[:-1])
    return grid[cells], grid[cells + 1]


def _refine(nu: float, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    lo = lo.copy()
    hi = hi.copy()
    neg_lo = np.signbit(_scaled(nu, lo))
    while np.max(hi - lo) > 1e-6:
        mid = 0.5 * (lo + hi)
        same = np.signbit(_scaled(nu, mid)) == neg_lo
        lo = np.where(same, mid, lo)
        hi = np.where(same, hi, mid)
    z = 0.5 * (lo + hi)
    for _ in range(50):
        f = _unscaled(nu, z)
        df = nu / z * f - _unscaled(nu + 1.0, z)
        step = f / df
        z_new = np.clip(z - step, lo, hi)
        delta = np.abs(z_new - z)
        z = z_new
        if np.all(delta <= 1e-15 * z):
            break
    else:
        raise ConvergenceError(
            f"Newton refinement of zeros of J_{nu} stalled", residual=float(np.max(delta / z))
        )
    return z


_zero_lock = threading.Lock()


@lru_cache(maxsize=128)
def _zeros_block(nu: float, count: int) -> np.ndarray:
    upper = float(mcmahon(nu, count)) + math.pi
    for _ in range(4):
        lo, hi = _sign_scan(nu, upper)
        if lo.size >= count:
            break
        upper += math.pi * (count - lo.size + 2)
    else:
        raise ConvergenceError(
            f"sign scan found only {lo.size} of {count} zeros of J_{nu} below {upper:.6g}"
        )
    z = _refine(nu, lo[:count], hi[:count])
    z.setflags(write=False)
    return z


def bessel_zeros(nu: float, count: int) -> np.ndarray:
    """The first ``count`` positive zeros of ``J_nu`` as a new array.

    Results are memoised in blocks whose size is a power of two, so asking
    for more zeros later reuses earlier work.
    """
    nu = float(nu)
    _check_order(nu)
    if _is_negative_integer(nu):
        nu = -nu
    if count < 1:
        raise ValueError("count must be a positive integer")
    block = max(16, 1 << (int(count) - 1).bit_length())
    if mcmahon(nu, block) > X_MAX - 2 * math.pi:
        raise RangeError(f"zero number {count} of J_{nu} lies beyond the supported range")
    with _zero_lock:
        zeros = _zeros_block(nu, block)
    return np.array(zeros[:count])


def bessel_zero(nu: float, k: int) -> BesselZero:
    """The ``k``-th positive zero of ``J_nu`` (``k >= 1``)."""
    if int(k) != k or k < 1:
        raise ValueError(f"zero index must be a positive integer, got {k!r}")
    k = int(k)
    return BesselZero(float(nu), k, float(bessel_zeros(nu, k)[-1]))


@dataclass(frozen=True)
class DerivativeCheck:
    """Two evaluations of ``d/dx {x^rho J_rho(x)}``."""

    finite_difference: float
    identity: float

    @property
    def discrepancy(self) -> float:
        return abs(self.finite_difference - self.identity)


def besselj_weighted_derivative_check(rho: float, x: float, step: float = 1e-5) -> DerivativeCheck:
    """Compare a central difference of ``x^rho J_rho(x)`` with ``x^rho J_{rho-1}(x)``."""
    if rho <= 0 or x <= 0:
        raise DomainError("rho and x must be positive")

    def f(u):
        return u**rho * besselj(rho, u)

    fd = (f(x + step) - f(x - step)) / (2.0 * step)
    return DerivativeCheck(fd, x**rho * besselj(rho - 1.0, x))
