"""Law of the squared L2 norm ``sum_k lambda_k omega_k^2`` of a Gaussian process."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np
from scipy import special

from .errors import DomainError
from .spectra import Spectrum, TailEstimate

if TYPE_CHECKING:
    from .sampler import RandomStream

DEFAULT_TRUNCATION = 512
_CHUNK = 4096


class QuadLaw:
    """``sum_{k <= K} lambda_k omega_k^2`` plus bookkeeping for the discarded tail."""

    def __init__(self, spectrum: Spectrum | None = None, truncation: int = DEFAULT_TRUNCATION,
                 *, eigenvalues=None):
        if (spectrum is None) == (eigenvalues is None):
            raise ValueError("give exactly one of a spectrum or an explicit eigenvalue list")
        self.spectrum = spectrum
        if spectrum is None:
            self.eigenvalues = np.sort(np.asarray(eigenvalues, dtype=float))[::-1]
            self.truncation = self.eigenvalues.size
            self.tail = TailEstimate(0.0, 0.0, 0.0)
        else:
            if truncation < 1:
                raise ValueError("truncation must be positive")
            self.truncation = int(truncation)
            self.eigenvalues = spectrum.eigenvalues(self.truncation)
            self.tail = spectrum.trace_tail(self.truncation)

    @classmethod
    def from_eigenvalues(cls, eigenvalues) -> "QuadLaw":
        """An exactly finite law, e.g. a single chi-squared(1) term."""
        return cls(eigenvalues=eigenvalues)

    @property
    def tail_mean(self) -> float:
        return self.tail.estimate

    def tail_power(self, power: int) -> float:
        if self.spectrum is None:
            return 0.0
        if power == 1:
            return self.tail.estimate
        return self.spectrum.power_sum_tail(power, self.truncation)

    @property
    def max_z(self) -> float:
        """Upper end of the real domain of the mgf, ``1 / (2 lambda_1)``."""
        lam1 = self.eigenvalues[0] if self.eigenvalues.size else 0.0
        return math.inf if lam1 <= 0 else 1.0 / (2.0 * lam1)


def _log_parts(law: QuadLaw, z: float) -> tuple[float, float]:
    z = float(z)
    if not z < law.max_z:
        raise DomainError(f"mgf needs z < {law.max_z:.6g}, got {z}")
    if z == 0.0:
        return 0.0, 0.0
    log_head = -0.5 * float(np.sum(np.log1p(-2.0 * z * law.eigenvalues)))
    log_tail = 0.0
    for m in range(1, 200):
        term = (2.0 * z) ** m / (2.0 * m) * law.tail_power(m)
        log_tail += term
        if abs(term) <= 1e-18 * max(1.0, abs(log_head)):
            break
    return log_head, log_tail


def mgf(law: QuadLaw, z: float) -> float:
    """``E exp(z Q) = prod_k (1 - 2 z lambda_k)^(-1/2)`` for real ``z < 1/(2 lambda_1)``.

    Beyond the truncation the log-product is expanded as
    ``sum_m (2z)^m / (2m) * sum_{k>K} lambda_k^m`` using the spectrum's tail
    power sums.

    Raises
    ------
    DomainError
        If ``z >= 1 / (2 lambda_1)``.
    """
    log_head, log_tail = _log_parts(law, z)
    return math.exp(log_head + log_tail)


def mgf_tail_correction(law: QuadLaw, z: float) -> float:
    """Size of the tail factor's contribution, ``|mgf(z) - prod_{k <= K}(...)|``."""
    log_head, log_tail = _log_parts(law, z)
    return abs(math.exp(log_head) * math.expm1(log_tail))


@dataclass(frozen=True)
class Moments:
    """Mean and variance of the quadratic functional, with a bracket on the mean."""

    mean: float
    variance: float
    mean_lower: float
    mean_upper: float

    def __iter__(self):
        yield self.mean
        yield self.variance


def moments(law: QuadLaw) -> Moments:
    """Mean ``sum lambda_k`` and variance ``2 sum lambda_k^2``, tails included."""
    head = float(np.sum(law.eigenvalues))
    var = 2.0 * (float(np.sum(law.eigenvalues**2)) + law.tail_power(2))
    return Moments(head + law.tail.estimate, var, head + law.tail.lower, head + law.tail.upper)


def sample_quad(law: QuadLaw, stream: RandomStream, n: int) -> np.ndarray:
    """``n`` draws of the truncated sum ``sum_{k <= K} lambda_k omega_k^2``."""
    if n < 1:
        raise ValueError("n must be positive")
    lams = law.eigenvalues
    out = np.empty(n)
    for start in range(0, n, _CHUNK):
        stop = min(start + _CHUNK, n)
        omega = stream.normal((stop - start, lams.size))
        out[start:stop] = (omega * omega) @ lams
    return out


@dataclass(frozen=True)
class QuadReport:
    """Two-sample Kolmogorov-Smirnov comparison of two samples of L2 norms."""

    statistic: float
    p_value: float
    n_left: int
    n_right: int
    mean_left: float
    var_left: float
    mean_right: float
    var_right: float

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def ks_two_sample(a, b) -> QuadReport:
    """Exact two-sample KS distance with its asymptotic Kolmogorov p-value."""
    a = np.sort(np.asarray(a, dtype=float).ravel())
    b = np.sort(np.asarray(b, dtype=float).ravel())
    n, m = a.size, b.size
    if n == 0 or m == 0:
        raise ValueError("both samples must be nonempty")
    pooled = np.concatenate([a, b])
    cdf_a = np.searchsorted(a, pooled, side="right") / n
    cdf_b = np.searchsorted(b, pooled, side="right") / m
    d = float(np.max(np.abs(cdf_a - cdf_b)))
    p = float(special.kolmogorov(math.sqrt(n * m / (n + m)) * d))
    return QuadReport(
        d, min(max(p, 0.0), 1.0), n, m,
        float(a.mean()), float(a.var(ddof=1)) if n > 1 else 0.0,
        float(b.mean()), float(b.var(ddof=1)) if m > 1 else 0.0,
    )


def eigen_multiset_equal(s1: Spectrum, s2: Spectrum, count: int, tol: float) -> bool:
    """True when the ``count`` leading eigenvalues agree pairwise to relative ``tol``."""
    if count < 1:
        raise ValueError("count must be positive")
    a = np.sort(s1.eigenvalues(count))[::-1]
    b = np.sort(s2.eigenvalues(count))[::-1]
    return bool(np.all(np.abs(a - b) <= tol * np.maximum(np.abs(a), np.abs(b))))
