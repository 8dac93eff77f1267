"""Closed-form covariance kernels and the centering operators acting on them.

Every built-in kernel is a finite sum of tensor products of one-dimensional
kernels.  The operators

* ``DELTA_i``: ``f(t) - t_i f(t | t_i = 1)`` (tie down at 1),
* ``SIGMA_i``: ``f(t) - int_0^1 f dt_i`` (subtract the mean along axis i),
* ``THETA_i``: ``f(t) - f(t | t_i = 1)``,

are linear maps on paths; on a covariance they act in both arguments.  For a
separable kernel they only touch the ``i``-th factor of each term, so the
multivariate case reduces to one-dimensional transforms.
"""

from __future__ import annotations

import enum
import math
import threading
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .errors import DomainError, QuadratureError, UnsupportedProcessError

QUAD_TOL = 1e-10


class Family(str, enum.Enum):
    """Process families; the value is the name used on the command line."""

    WIENER = "wiener"
    BRIDGE = "bridge"
    MEAN_CENTERED = "w0"
    WEIGHTED_MEAN_CENTERED = "wgamma"
    WEIGHTED_BRIDGE = "wbridge"
    TIED_DOWN_SHEET = "tied"
    STD_BRIDGE_SHEET = "stdbridge"
    UPPER_TAIL = "uppertail"
    UPPER_TAIL_MEAN_CENTERED = "uppertail_mc"


_ONE_DIMENSIONAL = {Family.BRIDGE, Family.WEIGHTED_MEAN_CENTERED}
_WEIGHTED = {
    Family.WEIGHTED_MEAN_CENTERED,
    Family.WEIGHTED_BRIDGE,
    Family.UPPER_TAIL,
    Family.UPPER_TAIL_MEAN_CENTERED,
}


@dataclass(frozen=True)
class ProcessSpec:
    """A process family together with its weights and dimension.

    ``gamma`` may be given as a single value, which is repeated over all
    ``d`` axes.  Unweighted families carry zero weights.
    """

    family: Family
    gamma: tuple[float, ...] = ()
    d: int = 1

    def __post_init__(self):
        family = Family(self.family)
        object.__setattr__(self, "family", family)
        d = int(self.d)
        if d < 1 or d != self.d:
            raise DomainError(f"dimension must be a positive integer, got {self.d!r}")
        gamma = tuple(float(g) for g in np.atleast_1d(self.gamma)) if np.size(self.gamma) else ()
        if not gamma:
            gamma = (0.0,) * d
        elif len(gamma) == 1:
            gamma = gamma * d
        if len(gamma) != d:
            raise DomainError(f"expected {d} weights, got {len(gamma)}")
        object.__setattr__(self, "gamma", gamma)
        if family in _ONE_DIMENSIONAL and d != 1:
            raise UnsupportedProcessError(f"{family.value} is defined for d = 1 only")
        if family not in _WEIGHTED and any(g != 0.0 for g in gamma):
            raise DomainError(f"{family.value} takes no weights")
        if family is Family.WEIGHTED_BRIDGE:
            floor = -1.0
        else:
            floor = -0.5
        if any(not math.isfinite(g) or g <= floor for g in gamma):
            raise DomainError(f"{family.value} requires every gamma > {floor}, got {gamma}")

    @property
    def nu(self) -> float:
        """Bessel order ``1 / (2 (1 + gamma))`` of a one-dimensional weighted family."""
        if self.d != 1:
            raise UnsupportedProcessError("nu is defined for one-dimensional processes")
        return 1.0 / (2.0 * (1.0 + self.gamma[0]))

    def __str__(self):
        text = self.family.value
        if self.family in _WEIGHTED:
            text += ":" + ",".join(f"{g:g}" for g in self.gamma)
        if self.d != 1:
            text += f" (d={self.d})"
        return text


Term = tuple[float, tuple["Kernel", ...]]


@dataclass(frozen=True, eq=False)
class Kernel:
    """A symmetric covariance function on ``[0,1]^d x [0,1]^d``.

    For ``dim == 1`` the arguments are arrays of coordinates (any broadcastable
    shapes).  For ``dim >= 2`` the last axis of each argument holds the ``d``
    coordinates.  Separable kernels store ``terms``, a sum of
    ``coef * prod_i factor_i(s_i, t_i)`` with one-dimensional factors.
    """

    dim: int
    fn: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None
    terms: tuple[Term, ...] | None = None
    name: str = "kernel"

    def __post_init__(self):
        if self.fn is None and self.terms is None:
            raise ValueError("a kernel needs an evaluator or separable terms")
        if self.dim == 1 and self.fn is None:
            raise ValueError("one-dimensional kernels need an evaluator")

    @property
    def separable(self) -> bool:
        return self.terms is not None

    def __call__(self, s, t):
        s = np.asarray(s, dtype=float)
        t = np.asarray(t, dtype=float)
        if self.dim == 1:
            return self.fn(s, t)
        if s.shape[-1] != self.dim or t.shape[-1] != self.dim:
            raise ValueError(f"points must have a trailing axis of length {self.dim}")
        if self.terms is None:
            return self.fn(s, t)
        total = 0.0
        for coef, parts in self.terms:
            prod = coef
            for i, part in enumerate(parts):
                prod = prod * part.fn(s[..., i], t[..., i])
            total = total + prod
        return total

    def __repr__(self):
        return f"Kernel(dim={self.dim}, name={self.name!r})"


# --- one-dimensional closed forms -----------------------------------------

def _wiener(s, t):
    return np.minimum(s, t)


def _bridge(s, t):
    return np.minimum(s, t) - s * t


def _mean_centered(s, t):
    # symmetric groupings keep K(s,t) == K(t,s) bit for bit
    return np.minimum(s, t) - (s + t) + 0.5 * (s * s + t * t) + 1.0 / 3.0


def _weighted_mean_centered(gamma: float):
    a = 1.0 + 2.0 * gamma
    b = 2.0 + 2.0 * gamma
    const = 2.0 / (b * (3.0 + 2.0 * gamma))

    def fn(s, t):
        return (
            np.minimum(s, t) ** a - (s**a + t**a) + (a / b) * (s**b + t**b) + const
        ) / a

    return fn


def _weighted_bridge(gamma: float):
    def fn(s, t):
        s, t = np.broadcast_arrays(s, t)
        inside = (s > 0) & (t > 0)
        with np.errstate(divide="ignore", invalid="ignore"):
            val = (s * t) ** gamma * (np.minimum(s, t) - s * t)
        return np.where(inside, val, 0.0)

    return fn


def _upper_tail(gamma: float):
    a = 1.0 + 2.0 * gamma

    def fn(s, t):
        return (1.0 - np.maximum(s, t) ** a) / a

    return fn


def _atom(fn, name: str) -> Kernel:
    return Kernel(1, fn, name=name)


def tensor_kernel(parts: Sequence[Kernel]) -> Kernel:
    """Product kernel ``prod_i parts[i](s_i, t_i)`` on ``[0,1]^len(parts)``."""
    parts = tuple(parts)
    if not parts:
        raise ValueError("tensor_kernel needs at least one factor")
    if any(p.dim != 1 for p in parts):
        raise ValueError("tensor factors must be one-dimensional")
    if len(parts) == 1:
        return parts[0]
    name = " x ".join(p.name for p in parts)
    return Kernel(len(parts), terms=((1.0, parts),), name=name)


def kernel_for(spec: ProcessSpec) -> Kernel:
    """Closed-form covariance of the process named by ``spec``."""
    fam, d, gamma = spec.family, spec.d, spec.gamma
    if fam is Family.WIENER:
        return tensor_kernel([_atom(_wiener, "wiener")] * d)
    if fam is Family.BRIDGE:
        return _atom(_bridge, "bridge")
    if fam is Family.MEAN_CENTERED:
        return tensor_kernel([_atom(_mean_centered, "w0")] * d)
    if fam is Family.WEIGHTED_MEAN_CENTERED:
        return _atom(_weighted_mean_centered(gamma[0]), f"wgamma({gamma[0]:g})")
    if fam is Family.WEIGHTED_BRIDGE:
        return tensor_kernel([_atom(_weighted_bridge(g), f"wbridge({g:g})") for g in gamma])
    if fam is Family.TIED_DOWN_SHEET:
        return tensor_kernel([_atom(_bridge, "bridge")] * d)
    if fam is Family.STD_BRIDGE_SHEET:
        if d == 1:
            return _atom(_bridge, "bridge")
        mins = tuple([_atom(_wiener, "wiener")] * d)
        prods = tuple([_atom(lambda s, t: s * t, "st")] * d)
        return Kernel(d, terms=((1.0, mins), (-1.0, prods)), name="stdbridge")
    if fam is Family.UPPER_TAIL:
        return tensor_kernel([_atom(_upper_tail(g), f"uppertail({g:g})") for g in gamma])
    if fam is Family.UPPER_TAIL_MEAN_CENTERED:
        # centering the time-reversed Wiener path gives -W_gamma, hence K_{W_gamma}
        return tensor_kernel(
            [_atom(_weighted_mean_centered(g), f"uppertail_mc({g:g})") for g in gamma]
        )
    raise UnsupportedProcessError(f"no kernel for {spec}")


# --- centering operators ---------------------------------------------------

class OpKind(str, enum.Enum):
    DELTA = "delta"
    SIGMA = "sigma"
    THETA = "theta"


@dataclass(frozen=True)
class CenterOp:
    """An operator acting on coordinate ``axis`` (1-based, as in ``t_1..t_d``)."""

    kind: OpKind
    axis: int = 1

    def __post_init__(self):
        object.__setattr__(self, "kind", OpKind(self.kind))
        if self.axis < 1:
            raise ValueError("axis is 1-based")


def _delta_1d(k: Kernel) -> Kernel:
    f = k.fn

    def fn(s, t):
        return f(s, t) - t * f(s, 1.0) - s * f(1.0, t) + s * t * f(1.0, 1.0)

    return Kernel(1, fn, name=f"delta({k.name})")


def _theta_1d(k: Kernel) -> Kernel:
    f = k.fn

    def fn(s, t):
        return f(s, t) - f(s, 1.0) - f(1.0, t) + f(1.0, 1.0)

    return Kernel(1, fn, name=f"theta({k.name})")


@dataclass(eq=False)
class _AxisMeans:
    """Row means ``m(x) = int_0^1 K(x, v) dv`` and the grand mean of a 1-d kernel."""

    kernel: Kernel
    _memo: dict = field(default_factory=dict)
    _grand: float | None = None
    _lock: threading.Lock = field(default_factory=threading.Lock)

    def _quad(self, f, breaks=()):
        pts = [b for b in breaks if 0.0 < b < 1.0]
        val, err, info = integrate.quad(
            f, 0.0, 1.0, points=pts or None, epsabs=1e-13, epsrel=1e-12, limit=200,
            full_output=1,
        )[:3]
        if not (err <= QUAD_TOL) or not math.isfinite(val):
            raise QuadratureError(
                f"quadrature of {self.kernel.name} reached error {err:.2e} > {QUAD_TOL:g}",
                residual=err,
            )
        return val

    def row_mean(self, x: float) -> float:
        cached = self._memo.get(x)
        if cached is not None:
            return cached
        f = self.kernel.fn
        val = self._quad(lambda v: float(f(x, v)), (x,))
        with self._lock:
            self._memo[x] = val
        return val

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        uniq, inv = np.unique(x, return_inverse=True)
        vals = np.array([self.row_mean(float(u)) for u in uniq])
        return vals[inv].reshape(x.shape)

    @property
    def grand(self) -> float:
        if self._grand is None:
            val = self._quad(self.row_mean)
            with self._lock:
                self._grand = val
        return self._grand


def _sigma_1d(k: Kernel) -> Kernel:
    f = k.fn
    means = _AxisMeans(k)

    def fn(s, t):
        s, t = np.broadcast_arrays(np.asarray(s, dtype=float), np.asarray(t, dtype=float))
        return f(s, t) - means(s) - means(t) + means.grand

    return Kernel(1, fn, name=f"sigma({k.name})")


_ONE_D = {OpKind.DELTA: _delta_1d, OpKind.SIGMA: _sigma_1d, OpKind.THETA: _theta_1d}


def _substitute(x: np.ndarray, i: int) -> np.ndarray:
    y = np.array(x, dtype=float, copy=True)
    y[..., i] = 1.0
    return y


def apply_center_op(k: Kernel, op: CenterOp) -> Kernel:
    """Covariance of ``op`` applied to a process with covariance ``k``.

    Raises
    ------
    UnsupportedProcessError
        For ``SIGMA`` on a non-separable kernel of dimension two or more.
    QuadratureError
        When a ``SIGMA`` quadrature misses its tolerance (raised lazily, at
        evaluation time).
    """
    if op.axis > k.dim:
        raise ValueError(f"axis {op.axis} exceeds kernel dimension {k.dim}")
    if k.dim == 1:
        return _ONE_D[op.kind](k)
    i = op.axis - 1
    if k.separable:
        transformed = {}
        terms = []
        for coef, parts in k.terms:
            key = id(parts[i])
            if key not in transformed:
                transformed[key] = _ONE_D[op.kind](parts[i])
            terms.append((coef, parts[:i] + (transformed[key],) + parts[i + 1:]))
        return Kernel(k.dim, terms=tuple(terms), name=f"{op.kind.value}{op.axis}({k.name})")
    if op.kind is OpKind.SIGMA:
        raise UnsupportedProcessError("SIGMA needs a separable kernel when d >= 2")
    f = k.fn
    if op.kind is OpKind.THETA:
        def fn(s, t):
            s1, t1 = _substitute(s, i), _substitute(t, i)
            return f(s, t) - f(s, t1) - f(s1, t) + f(s1, t1)
    else:
        def fn(s, t):
            s1, t1 = _substitute(s, i), _substitute(t, i)
            si, ti = s[..., i], t[..., i]
            return f(s, t) - ti * f(s, t1) - si * f(s1, t) + si * ti * f(s1, t1)
    return Kernel(k.dim, fn, name=f"{op.kind.value}{op.axis}({k.name})")


def apply_center_ops(k: Kernel, ops: Sequence[CenterOp]) -> Kernel:
    """Apply ``ops`` right to left, as in the composition ``ops[0] o ops[1] o ...``."""
    for op in reversed(list(ops)):
        k = apply_center_op(k, op)
    return k
