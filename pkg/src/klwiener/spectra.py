"""Analytic Karhunen-Loeve eigen-systems.

One-dimensional families:

=============  ====================  ======================================
family         eigenvalue            eigenfunction
=============  ====================  ======================================
W_0            1 / (k pi)^2          sqrt(2) cos(k pi t)
bridge B       1 / (k pi)^2          sqrt(2) sin(k pi t)
t^g B(t)       (2 nu / z_k)^2        t^(g+1/2) J_nu(z_k t^(1+g)) / c_k
W_g            (2 nu / z_k)^2        t^(g+1/2) J_(nu-1)(z_k t^(1+g)) / c_k
=============  ====================  ======================================

with ``nu = 1 / (2 (1 + g))``, ``z_k`` the k-th positive zero of ``J_nu`` and
``c_k = sqrt(nu) J_(nu-1)(z_k)`` (absolute value for the bridge, so that the
first lobe is positive; signed for ``W_g``, so that ``e_k(1) = 1/sqrt(nu)``).
Multivariate spectra are tensor products, enumerated by decreasing product
eigenvalue with lexicographic tie-breaking.
"""

from __future__ import annotations

import heapq
import math
import threading
from collections.abc import Callable, Sequence
from dataclasses import dataclass

import numpy as np
from scipy import special

from .bessel import bessel_zeros, besselj, besselj_scaled
from .errors import DomainError, UnsupportedProcessError
from .kernels import Family, ProcessSpec

_TAIL_REFERENCE = 256


@dataclass(frozen=True)
class EigenPair:
    """One eigenvalue ``lam`` with its eigenfunction, indexed by ``k``."""

    k: int | tuple[int, ...]
    lam: float
    efun: Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class TailEstimate:
    """``sum_{k > K} lambda_k``: a point estimate and a bracket around it."""

    estimate: float
    lower: float
    upper: float


class Spectrum:
    """Ordered eigenvalues and evaluable orthonormal eigenfunctions.

    Subclasses implement ``eigenvalues``, ``evaluate`` and the tail sums.
    Everything is computed on demand up to the requested count and is safe
    to share between threads.
    """

    spec: ProcessSpec
    dim: int = 1

    def eigenvalues(self, count: int) -> np.ndarray:
        raise NotImplementedError

    def evaluate(self, count: int, t) -> np.ndarray:
        """Values of the first ``count`` eigenfunctions, shape ``(count, *points)``."""
        raise NotImplementedError

    def power_sum_tail(self, power: int, count: int) -> float:
        """Estimate of ``sum_{k > count} lambda_k ** power``."""
        raise NotImplementedError

    def trace_tail(self, count: int) -> TailEstimate:
        raise NotImplementedError

    def indices(self, count: int) -> list:
        return list(range(1, count + 1))

    def eigenfunction(self, k) -> Callable[[np.ndarray], np.ndarray]:
        pos = self._position(k)

        def efun(t):
            return self.evaluate(pos, t)[pos - 1]

        return efun

    def pairs(self, count: int) -> list[EigenPair]:
        lams = self.eigenvalues(count)
        return [
            EigenPair(k, float(lam), self.eigenfunction(k))
            for k, lam in zip(self.indices(count), lams)
        ]

    def total_power(self, power: int) -> float:
        """``sum_k lambda_k ** power`` over the whole spectrum."""
        head = np.sum(self.eigenvalues(_TAIL_REFERENCE) ** power)
        return float(head + self.power_sum_tail(power, _TAIL_REFERENCE))

    def _position(self, k) -> int:
        if int(k) != k or k < 1:
            raise ValueError(f"eigen index must be a positive integer, got {k!r}")
        return int(k)

    def __repr__(self):
        return f"{type(self).__name__}({self.spec})"


def _check_count(count: int) -> int:
    if int(count) != count or count < 1:
        raise ValueError(f"count must be a positive integer, got {count!r}")
    return int(count)


class _TrigSpectrum(Spectrum):
    def __init__(self, spec: ProcessSpec, trig):
        self.spec = spec
        self._trig = trig

    def eigenvalues(self, count):
        k = np.arange(1, _check_count(count) + 1, dtype=float)
        return 1.0 / (k * math.pi) ** 2

    def evaluate(self, count, t):
        k = np.arange(1, _check_count(count) + 1, dtype=float)
        t = np.asarray(t, dtype=float)
        arg = np.multiply.outer(k * math.pi, t)
        vals = math.sqrt(2.0) * self._trig(arg)
        if self.spec.family is Family.BRIDGE:
            # sin(k pi) is only zero up to rounding
            vals = np.where(t == 1.0, 0.0, vals)
        return vals

    def power_sum_tail(self, power, count):
        return float(special.zeta(2.0 * power, count + 1.0) / math.pi ** (2 * power))

    def total_power(self, power):
        return float(special.zeta(2.0 * power) / math.pi ** (2 * power))

    def trace_tail(self, count):
        tail = self.power_sum_tail(1, count)
        return TailEstimate(tail, tail, tail)


class BesselSpectrum(Spectrum):
    """Spectrum of ``W_gamma`` (``kind='wgamma'``) or ``t^gamma B(t)`` (``kind='wbridge'``)."""

    def __init__(self, spec: ProcessSpec):
        self.spec = spec
        self.kind = spec.family
        self.gamma = spec.gamma[0]
        self.nu = spec.nu

    def zeros(self, count: int) -> np.ndarray:
        return bessel_zeros(self.nu, _check_count(count))

    def eigenvalues(self, count):
        return (2.0 * self.nu / self.zeros(count)) ** 2

    def evaluate(self, count, t):
        nu, g = self.nu, self.gamma
        z = self.zeros(count)
        t = np.asarray(t, dtype=float)
        arg = np.multiply.outer(z, t ** (1.0 + g))
        zshape = (count,) + (1,) * t.ndim
        norm = math.sqrt(nu) * besselj(nu - 1.0, z)
        if self.kind is Family.WEIGHTED_MEAN_CENTERED:
            # t^(g+1/2) J_{nu-1}(z t^(1+g)) == z^(nu-1) * scaled(nu-1, z t^(1+g)) exactly
            vals = besselj_scaled(nu - 1.0, arg) * (z ** (nu - 1.0) / norm).reshape(zshape)
        else:
            vals = besselj_scaled(nu, arg) * (z**nu / np.abs(norm)).reshape(zshape)
            vals = np.where(t == 1.0, 0.0, vals * t ** (1.0 + g))
        return vals

    def _shifts(self):
        return 0.5 * self.nu - 0.25, 4.0 * self.nu**2

    def power_sum_tail(self, power, count):
        # z_k = b - (mu-1)/(8b) + O(b^-3) with b = (k + delta) pi
        delta, mu = self._shifts()
        q = count + 1.0 + delta
        scale = (2.0 * self.nu / math.pi) ** (2 * power)
        lead = special.zeta(2.0 * power, q)
        corr = power * (mu - 1.0) / (4.0 * math.pi**2) * special.zeta(2.0 * power + 2.0, q)
        return float(scale * (lead + corr))

    def trace_tail(self, count):
        delta, _ = self._shifts()
        scale = (2.0 * self.nu / math.pi) ** 2
        lo = scale * special.zeta(2.0, count + 1.5 + delta)
        hi = scale * special.zeta(2.0, count + 0.5 + delta)
        return TailEstimate(self.power_sum_tail(1, count), float(lo), float(hi))


class TensorSpectrum(Spectrum):
    """Product spectrum of one-dimensional factors, one per coordinate."""

    def __init__(self, spec: ProcessSpec, factors: Sequence[Spectrum]):
        self.spec = spec
        self.factors = tuple(factors)
        self.dim = len(self.factors)
        self._order: list[tuple[int, ...]] = []
        self._lams: list[float] = []
        self._lock = threading.Lock()

    def _enumerate(self, count):
        with self._lock:
            if len(self._order) >= count:
                return
            fvals = [f.eigenvalues(count) for f in self.factors]

            def key(idx):
                lam = math.prod(sorted(v[i - 1] for v, i in zip(fvals, idx)))
                # 12 significant digits: equal products from different factorings tie
                return -float(f"{lam:.12e}"), idx, lam

            start = (1,) * self.dim
            heap = [key(start)]
            seen = {start}
            order, lams = [], []
            while len(order) < count:
                _, idx, lam = heapq.heappop(heap)
                order.append(idx)
                lams.append(lam)
                for axis in range(self.dim):
                    nxt = idx[:axis] + (idx[axis] + 1,) + idx[axis + 1:]
                    if nxt[axis] <= count and nxt not in seen:
                        seen.add(nxt)
                        heapq.heappush(heap, key(nxt))
            self._order, self._lams = order, lams

    def indices(self, count):
        count = _check_count(count)
        self._enumerate(count)
        return list(self._order[:count])

    def eigenvalues(self, count):
        count = _check_count(count)
        self._enumerate(count)
        return np.array(self._lams[:count])

    def evaluate(self, count, t):
        idx = self.indices(count)
        t = np.asarray(t, dtype=float)
        if t.shape[-1] != self.dim:
            raise ValueError(f"points must have a trailing axis of length {self.dim}")
        out = np.ones((count,) + t.shape[:-1])
        for axis, factor in enumerate(self.factors):
            kmax = max(i[axis] for i in idx)
            vals = factor.evaluate(kmax, t[..., axis])
            out *= vals[[i[axis] - 1 for i in idx]]
        return out

    def _position(self, k):
        k = tuple(int(i) for i in k)
        if len(k) != self.dim or min(k) < 1:
            raise ValueError(f"expected a {self.dim}-tuple of positive indices, got {k!r}")
        count = 1
        while True:
            idx = self.indices(count)
            if k in idx:
                return idx.index(k) + 1
            count *= 2

    def total_power(self, power):
        return math.prod(f.total_power(power) for f in self.factors)

    def power_sum_tail(self, power, count):
        head = float(np.sum(self.eigenvalues(count) ** power))
        return max(self.total_power(power) - head, 0.0)

    def trace_tail(self, count):
        head = float(np.sum(self.eigenvalues(count)))
        lo = hi = 1.0
        for f in self.factors:
            ref = float(np.sum(f.eigenvalues(_TAIL_REFERENCE)))
            tail = f.trace_tail(_TAIL_REFERENCE)
            lo *= ref + tail.lower
            hi *= ref + tail.upper
        est = self.power_sum_tail(1, count)
        return TailEstimate(est, max(lo - head, 0.0), max(hi - head, 0.0))


def spectrum_w0() -> Spectrum:
    """``W(t) - int_0^1 W``: ``lambda_k = 1/(k pi)^2``, ``e_k = sqrt(2) cos(k pi t)``."""
    return _TrigSpectrum(ProcessSpec(Family.MEAN_CENTERED), np.cos)


def spectrum_bridge() -> Spectrum:
    """Brownian bridge: ``lambda_k = 1/(k pi)^2``, ``e_k = sqrt(2) sin(k pi t)``."""
    return _TrigSpectrum(ProcessSpec(Family.BRIDGE), np.sin)


def spectrum_weighted_bridge(gamma: float) -> BesselSpectrum:
    """Spectrum of ``t^gamma B(t)`` for ``gamma > -1``."""
    return BesselSpectrum(ProcessSpec(Family.WEIGHTED_BRIDGE, (gamma,)))


def spectrum_wgamma(gamma: float) -> BesselSpectrum:
    """Spectrum of the weighted mean-centered Wiener process, ``gamma > -1/2``."""
    return BesselSpectrum(ProcessSpec(Family.WEIGHTED_MEAN_CENTERED, (gamma,)))


def spectrum_sheet_mean_centered(d: int) -> Spectrum:
    """Tensor spectrum of the ``d``-variate mean-centered sheet."""
    if d == 1:
        return spectrum_w0()
    return TensorSpectrum(ProcessSpec(Family.MEAN_CENTERED, d=d), [spectrum_w0()] * d)


def spectrum_for(spec: ProcessSpec) -> Spectrum:
    """Analytic spectrum of ``spec``.

    Raises
    ------
    UnsupportedProcessError
        For families without a closed-form spectrum (the Wiener sheet, the
        standard bridge sheet for ``d >= 2``, the raw upper-tail sheet).
    """
    fam, d = spec.family, spec.d

    def per_axis(make):
        if d == 1:
            return make(spec.gamma[0])
        return TensorSpectrum(spec, [make(g) for g in spec.gamma])

    if fam is Family.MEAN_CENTERED:
        return spectrum_sheet_mean_centered(d)
    if fam is Family.BRIDGE or (fam is Family.STD_BRIDGE_SHEET and d == 1):
        return spectrum_bridge()
    if fam is Family.TIED_DOWN_SHEET:
        return per_axis(lambda g: spectrum_bridge())
    if fam is Family.WEIGHTED_MEAN_CENTERED:
        return spectrum_wgamma(spec.gamma[0])
    if fam is Family.WEIGHTED_BRIDGE:
        return per_axis(spectrum_weighted_bridge)
    if fam is Family.UPPER_TAIL_MEAN_CENTERED:
        return per_axis(spectrum_wgamma)
    raise UnsupportedProcessError(f"no closed-form spectrum for {spec}")


def partial_trace(s: Spectrum, K: int, *, tail: bool = True) -> float:
    """``sum_{k <= K} lambda_k``, plus the asymptotic estimate of the rest unless ``tail=False``."""
    if K < 1:
        raise DomainError("K must be at least 1")
    head = float(np.sum(s.eigenvalues(K)))
    return head + s.power_sum_tail(1, K) if tail else head
