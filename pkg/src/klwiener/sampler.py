"""Sample paths on uniform grids, by truncated KL series or from Wiener increments.

Grid paths use the nodes ``t_i = i / (n - 1)``, ``i = 0..n-1``, on every axis.
A :class:`SamplePath` always holds a batch: ``values`` has shape
``(n_paths, n)`` for ``d = 1`` and ``(n_paths, n, n)`` for ``d = 2``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, UnsupportedProcessError
from .kernels import Family, ProcessSpec
from .quadform import QuadLaw, ks_two_sample, sample_quad
from .spectra import Spectrum, spectrum_for

DEFAULT_K = 512
_CHUNK_ELEMENTS = 1 << 22


class RandomStream:
    """Reproducible normal variates from a counter-based Philox generator.

    The key is derived from ``seed`` and the substream path with
    :class:`numpy.random.SeedSequence`, so ``spawn(i)`` gives streams that are
    independent of their parent and of each other.
    """

    def __init__(self, seed: int, substream: tuple[int, ...] | int = ()):
        if int(seed) != seed or not 0 <= seed < 2**64:
            raise DomainError("seed must be an integer in [0, 2**64)")
        self.seed = int(seed)
        self.substream = (int(substream),) if np.isscalar(substream) else tuple(substream)
        seq = np.random.SeedSequence(self.seed, spawn_key=self.substream)
        self._gen = np.random.Generator(np.random.Philox(seq))

    def spawn(self, index: int) -> "RandomStream":
        return RandomStream(self.seed, self.substream + (int(index),))

    def normal(self, shape) -> np.ndarray:
        return self._gen.standard_normal(shape)

    def uniform(self, shape) -> np.ndarray:
        return self._gen.random(shape)

    @property
    def state(self) -> dict:
        """JSON-serializable generator state."""
        st = self._gen.bit_generator.state
        return {
            "seed": self.seed,
            "substream": list(self.substream),
            "counter": [int(c) for c in st["state"]["counter"]],
            "buffer_pos": int(st["buffer_pos"]),
        }

    def __repr__(self):
        return f"RandomStream(seed={self.seed}, substream={self.substream})"


@dataclass(frozen=True)
class SamplePath:
    """A batch of paths on the uniform grid ``grid`` (per axis).

    ``tail`` is the variance discarded by KL truncation (trace of the
    remainder).  ``time_exponent`` is ``a`` when the values are ``W(t^a)``.
    """

    grid: np.ndarray
    values: np.ndarray
    spec: ProcessSpec
    tail: float = 0.0
    time_exponent: float = 1.0
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def d(self) -> int:
        return self.values.ndim - 1

    @property
    def n_paths(self) -> int:
        return self.values.shape[0]

    def __len__(self):
        return self.n_paths


def uniform_grid(n_grid: int) -> np.ndarray:
    if int(n_grid) != n_grid or n_grid < 2:
        raise DomainError("n_grid must be an integer >= 2")
    return np.linspace(0.0, 1.0, int(n_grid))


def trapezoid_weights(n_grid: int) -> np.ndarray:
    w = np.full(n_grid, 1.0 / (n_grid - 1))
    w[[0, -1]] *= 0.5
    return w


# --- KL series ----------------------------------------------------------------

def sample_kl(spectrum: Spectrum, n_grid: int, K: int, stream: RandomStream,
              n_paths: int = 1) -> SamplePath:
    """``sum_{k <= K} omega_k sqrt(lambda_k) e_k`` on the uniform grid."""
    if K < 1:
        raise DomainError("K must be at least 1")
    t = uniform_grid(n_grid)
    d = spectrum.dim
    if d == 1:
        pts = t
    elif d == 2:
        pts = np.stack(np.meshgrid(t, t, indexing="ij"), axis=-1)
    else:
        raise UnsupportedProcessError("grid sampling supports d <= 2")
    basis = spectrum.evaluate(K, pts).reshape(K, -1)
    basis *= np.sqrt(spectrum.eigenvalues(K))[:, None]
    omega = stream.normal((n_paths, K))
    values = (omega @ basis).reshape((n_paths,) + (n_grid,) * d)
    tail = spectrum.trace_tail(K).estimate
    return SamplePath(t, values, spectrum.spec, tail=tail)


# --- direct grid construction -------------------------------------------------

def _axis_variances(t: np.ndarray, exponent: float) -> np.ndarray:
    """Lengths of the warped cells ``t_{i+1}^a - t_i^a``."""
    return np.diff(t**exponent)


def sample_wiener_grid(n_grid: int, d: int, stream: RandomStream, n_paths: int = 1,
                       time_exponent: float = 1.0) -> SamplePath:
    """Exact Wiener process (``d = 1``) or sheet (``d = 2``) at the grid nodes.

    With ``time_exponent = a`` the values are ``W(t^a)`` (per axis), built from
    independent increments over the warped partition.
    """
    if d not in (1, 2):
        raise UnsupportedProcessError("grid sampling supports d = 1 or 2")
    if time_exponent <= 0:
        raise DomainError("time_exponent must be positive")
    t = uniform_grid(n_grid)
    sd = np.sqrt(_axis_variances(t, time_exponent))
    values = np.zeros((n_paths,) + (n_grid,) * d)
    if d == 1:
        inc = stream.normal((n_paths, n_grid - 1)) * sd
        np.cumsum(inc, axis=1, out=values[:, 1:])
    else:
        inc = stream.normal((n_paths, n_grid - 1, n_grid - 1)) * np.outer(sd, sd)
        values[:, 1:, 1:] = np.cumsum(np.cumsum(inc, axis=1), axis=2)
    return SamplePath(t, values, ProcessSpec(Family.WIENER, d=d), time_exponent=time_exponent)


def sample_upper_tail_grid(n_grid: int, gamma, stream: RandomStream, n_paths: int = 1) -> SamplePath:
    """``int_{[t,1]} u^gamma dW(u)`` at the grid nodes, exact in law.

    The weighted increment over each cell has variance ``int_cell u^(2 gamma) du``.
    """
    gamma = tuple(np.atleast_1d(gamma))
    spec = ProcessSpec(Family.UPPER_TAIL, gamma, d=len(gamma))
    t = uniform_grid(n_grid)
    sds = [np.sqrt(_axis_variances(t, 1.0 + 2.0 * g) / (1.0 + 2.0 * g)) for g in spec.gamma]
    values = np.zeros((n_paths,) + (n_grid,) * spec.d)
    if spec.d == 1:
        inc = stream.normal((n_paths, n_grid - 1)) * sds[0]
        values[:, :-1] = np.cumsum(inc[:, ::-1], axis=1)[:, ::-1]
    elif spec.d == 2:
        inc = stream.normal((n_paths, n_grid - 1, n_grid - 1)) * np.outer(*sds)
        rev = np.cumsum(np.cumsum(inc[:, ::-1, ::-1], axis=1), axis=2)[:, ::-1, ::-1]
        values[:, :-1, :-1] = rev
    else:
        raise UnsupportedProcessError("grid sampling supports d = 1 or 2")
    return SamplePath(t, values, spec)


def _at_one(x: np.ndarray, axis: int) -> np.ndarray:
    return np.take(x, [-1], axis=axis)


def _coord(t: np.ndarray, axis: int, ndim: int) -> np.ndarray:
    shape = [1] * ndim
    shape[axis] = t.size
    return t.reshape(shape)


def _delta(x, t, axis):
    return x - _coord(t, axis, x.ndim) * _at_one(x, axis)


def _sigma(x, t, axis):
    w = _coord(trapezoid_weights(t.size), axis, x.ndim)
    return x - np.sum(x * w, axis=axis, keepdims=True)


def _each_axis(op, x, t):
    for axis in range(1, x.ndim):
        x = op(x, t, axis)
    return x


def _warped(w: SamplePath, exponent: float) -> np.ndarray:
    """Values ``W(t^a)``: exact when ``w`` was drawn on that warp, else interpolated."""
    if exponent == w.time_exponent:
        return w.values
    if w.d != 1:
        raise UnsupportedProcessError("time changes of sheets are not supported")
    src = w.grid**w.time_exponent
    dst = w.grid**exponent
    return np.stack([np.interp(dst, src, row) for row in w.values])


def transform_path(w: SamplePath, target: ProcessSpec) -> SamplePath:
    """Build ``target`` pathwise from a Wiener grid path ``w``.

    Grid integrals use the trapezoid rule, so the mean-centered results
    integrate to zero up to rounding.

    Raises
    ------
    UnsupportedProcessError
        If ``w`` is not a Wiener path or ``target`` cannot be built from it.
    """
    if w.spec.family is not Family.WIENER:
        raise UnsupportedProcessError("transform_path needs a Wiener grid path")
    fam, t = target.family, w.grid
    if target.d != w.d:
        raise UnsupportedProcessError(f"{target} has dimension {target.d}, path has {w.d}")
    gamma = target.gamma
    exponent = 1.0

    if fam is Family.WIENER:
        vals = _warped(w, 1.0)
    elif fam is Family.MEAN_CENTERED:
        vals = _each_axis(_sigma, _warped(w, 1.0), t)
    elif fam in (Family.BRIDGE, Family.TIED_DOWN_SHEET):
        vals = _each_axis(_delta, _warped(w, 1.0), t)
    elif fam is Family.STD_BRIDGE_SHEET:
        x = _warped(w, 1.0)
        corner = x[(slice(None),) + (slice(-1, None),) * w.d]
        prod_t = math.prod(_coord(t, ax, x.ndim) for ax in range(1, x.ndim))
        vals = x - prod_t * corner
    elif fam is Family.WEIGHTED_MEAN_CENTERED:
        exponent = 1.0 + 2.0 * gamma[0]
        vals = _sigma(_warped(w, exponent) / math.sqrt(exponent), t, 1)
    elif fam is Family.WEIGHTED_BRIDGE:
        vals = _each_axis(_delta, _warped(w, 1.0), t)
        for axis, g in enumerate(gamma, start=1):
            weight = np.zeros_like(t)
            weight[1:] = t[1:] ** g
            vals = vals * _coord(weight, axis, vals.ndim)
    elif fam in (Family.UPPER_TAIL, Family.UPPER_TAIL_MEAN_CENTERED) and not any(gamma):
        # int_{[t,1]} dW is W with every axis reversed through inclusion-exclusion
        x = _warped(w, 1.0)
        for axis in range(1, x.ndim):
            x = _at_one(x, axis) - x
        vals = _each_axis(_sigma, x, t) if fam is Family.UPPER_TAIL_MEAN_CENTERED else x
    else:
        raise UnsupportedProcessError(f"cannot build {target} from a Wiener path")
    return SamplePath(t, vals, target, time_exponent=exponent)


def sample_grid(spec: ProcessSpec, n_grid: int, stream: RandomStream, n_paths: int = 1) -> SamplePath:
    """Direct grid construction of ``spec`` with exact warped increments where needed."""
    if spec.family in (Family.UPPER_TAIL, Family.UPPER_TAIL_MEAN_CENTERED):
        path = sample_upper_tail_grid(n_grid, spec.gamma, stream, n_paths)
        if spec.family is Family.UPPER_TAIL:
            return path
        return SamplePath(path.grid, _each_axis(_sigma, path.values, path.grid), spec)
    exponent = 1.0 + 2.0 * spec.gamma[0] if spec.family is Family.WEIGHTED_MEAN_CENTERED else 1.0
    w = sample_wiener_grid(n_grid, spec.d, stream, n_paths, time_exponent=exponent)
    return transform_path(w, spec)


def sample_change_of_variables(gamma: float, n_grid: int, stream: RandomStream,
                               n_paths: int = 1) -> np.ndarray:
    """Squared-norm draws of ``W_gamma`` written in the un-warped time ``u = t^(1+2 gamma)``.

    ``a^-2 int u^(-2g/a) {W(u) - a^-1 int s^(-2g/a) W(s) ds}^2 du`` with
    ``a = 1 + 2 gamma``.  The weight is singular at 0 for ``gamma > 0``, so the
    integrals use open product integration on ``n_grid`` cells: ``W`` is drawn
    exactly at the midpoints (first node ``1/(2n)``) and the weight is
    integrated exactly over each cell.
    """
    a = 1.0 + 2.0 * float(gamma)
    if a <= 0:
        raise DomainError("gamma must exceed -1/2")
    u = (np.arange(n_grid) + 0.5) / n_grid
    sd = np.sqrt(np.diff(u, prepend=0.0))
    out = np.empty(n_paths)
    rows = max(1, _CHUNK_ELEMENTS // n_grid)
    edges = np.linspace(0.0, 1.0, n_grid + 1)
    # int over each cell of u^(-2g/a), antiderivative a u^(1/a)
    weight = np.diff(a * edges ** (1.0 / a))
    for start in range(0, n_paths, rows):
        stop = min(start + rows, n_paths)
        wv = np.cumsum(stream.normal((stop - start, n_grid)) * sd, axis=1)
        centered = wv - (wv @ weight)[:, None] / a
        out[start:stop] = (centered**2 @ weight) / a**2
    return out


# --- functionals ---------------------------------------------------------------

def l2_norm_sq(p) -> np.ndarray:
    """Trapezoid (product trapezoid for ``d = 2``) squared L2 norm of each path.

    Accepts a :class:`SamplePath` (returns one value per path) or a bare array
    of values on the uniform grid of ``[0,1]`` or ``[0,1]^2`` (returns a float).
    """
    if isinstance(p, SamplePath):
        vals = p.values
        batched = True
    else:
        vals = np.asarray(p, dtype=float)[None]
        batched = False
    n = vals.shape[1]
    sq = vals * vals
    w = trapezoid_weights(n)
    for _ in range(vals.ndim - 1):
        sq = sq @ w
    return sq if batched else float(sq[0])


class Method(str, enum.Enum):
    KL = "kl"
    GRID = "grid"
    CHANGE_OF_VARIABLES = "cv"


def sample_norms(spec: ProcessSpec, method: Method | str, n_paths: int, n_grid: int,
                 K: int, stream: RandomStream) -> np.ndarray:
    """``n_paths`` draws of ``int zeta^2`` for ``spec`` by the named method.

    ``kl`` draws ``sum_{k <= K} lambda_k omega_k^2`` directly, which is the
    exact squared norm of the truncated series by orthonormality.
    """
    method = Method(method)
    if method is Method.KL:
        return sample_quad(QuadLaw(spectrum_for(spec), K), stream, n_paths)
    if method is Method.CHANGE_OF_VARIABLES:
        if spec.family is not Family.WEIGHTED_MEAN_CENTERED:
            raise UnsupportedProcessError("the change-of-variables form exists for wgamma only")
        return sample_change_of_variables(spec.gamma[0], n_grid, stream, n_paths)
    out = np.empty(n_paths)
    rows = max(1, _CHUNK_ELEMENTS // n_grid**spec.d)
    for i, start in enumerate(range(0, n_paths, rows)):
        stop = min(start + rows, n_paths)
        path = sample_grid(spec, n_grid, stream.spawn(i), stop - start)
        out[start:stop] = l2_norm_sq(path)
    return out


def mc_quad_identity(left: ProcessSpec, right: ProcessSpec, n_paths: int, n_grid: int,
                     K: int, stream: RandomStream, methods=("grid", "kl")):
    """Two-sample KS comparison of squared L2 norms of ``left`` and ``right``.

    The two sides use independent substreams 0 and 1 of ``stream``.
    """
    a = sample_norms(left, methods[0], n_paths, n_grid, K, stream.spawn(0))
    b = sample_norms(right, methods[1], n_paths, n_grid, K, stream.spawn(1))
    return ks_two_sample(a, b)
