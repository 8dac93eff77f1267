"""Nystrom discretization of covariance operators.

The integral operator ``h -> int K(s, .) h(s) ds`` is replaced by Gauss-Legendre
quadrature on interior nodes; symmetrizing with the square roots of the
weights gives a symmetric matrix with the same eigenvalues as the discrete
operator.  This is the independent check on every analytic spectrum.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError
from .kernels import Kernel
from .spectra import Spectrum

MAX_ROWS = 4096


@dataclass(frozen=True)
class DiscretizedOperator:
    """Quadrature nodes, product weights and ``sqrt(w_i) K(x_i, x_j) sqrt(w_j)``."""

    nodes: np.ndarray
    weights: np.ndarray
    matrix: np.ndarray

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    def eigenfunction_values(self, vectors: np.ndarray) -> np.ndarray:
        """Map orthonormal eigenvectors to L2-normalized function values at the nodes."""
        return vectors / np.sqrt(self.weights)[:, None]


def gauss_legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights mapped to ``(0, 1)``; weights sum to 1."""
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def _symmetric(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.T)


def discretize(k: Kernel, n_per_axis: int) -> DiscretizedOperator:
    """Nystrom matrix of ``k`` on an ``n_per_axis ** d`` tensor Gauss grid."""
    if n_per_axis < 2:
        raise ValueError("need at least two nodes per axis")
    rows = n_per_axis**k.dim
    if rows > MAX_ROWS:
        raise ValueError(f"{rows} rows exceed the guard of {MAX_ROWS}")
    x, w = gauss_legendre(n_per_axis)
    sw = np.sqrt(w)
    if k.dim == 1:
        a = sw[:, None] * k(x[:, None], x[None, :]) * sw[None, :]
        return DiscretizedOperator(x, w, _symmetric(a))

    grid = np.array(list(itertools.product(x, repeat=k.dim)))
    weights = np.prod(np.array(list(itertools.product(w, repeat=k.dim))), axis=1)
    if k.separable:
        # product grid + product weights: each term is a Kronecker product
        cache = {}
        a = np.zeros((rows, rows))
        for coef, parts in k.terms:
            block = np.array([[coef]])
            for part in parts:
                if id(part) not in cache:
                    cache[id(part)] = sw[:, None] * part(x[:, None], x[None, :]) * sw[None, :]
                block = np.kron(block, cache[id(part)])
            a += block
    else:
        root = np.sqrt(weights)
        a = root[:, None] * k(grid[:, None, :], grid[None, :, :]) * root[None, :]
    return DiscretizedOperator(grid, weights, _symmetric(a))


def sym_eigen(op, count: int, *, check: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Leading ``count`` eigenpairs of a symmetric matrix, in decreasing order.

    Parameters
    ----------
    op : DiscretizedOperator or array_like
        The operator, or a bare symmetric matrix.
    count : int
        Number of pairs to return.
    check : bool
        Verify ``||A v - lam v|| <= 1e-10 ||A||`` for every returned pair.

    Returns
    -------
    values : ndarray, shape (count,)
    vectors : ndarray, shape (n, count)
        Orthonormal columns.

    Raises
    ------
    ConvergenceError
        If LAPACK fails or a residual exceeds the bound; ``residual`` holds the
        worst relative residual.
    """
    a = op.matrix if isinstance(op, DiscretizedOperator) else np.asarray(op, dtype=float)
    n = a.shape[0]
    if a.ndim != 2 or a.shape[1] != n:
        raise ValueError("expected a square matrix")
    if not 1 <= count <= n:
        raise ValueError(f"count must lie in 1..{n}")
    try:
        vals, vecs = np.linalg.eigh(a)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceError(f"symmetric eigensolver failed: {exc}") from exc
    scale = max(float(np.max(np.abs(vals))), 1e-300)
    order = np.argsort(vals)[::-1][:count]
    vals, vecs = vals[order], vecs[:, order]
    if check:
        res = np.linalg.norm(a @ vecs - vecs * vals, axis=0) / scale
        worst = float(res.max())
        if not worst <= 1e-10:  # also catches NaN
            raise ConvergenceError(f"eigen residual {worst:.2e} exceeds 1e-10", residual=worst)
    return vals, vecs


@dataclass(frozen=True)
class SpectrumComparison:
    """Per-index relative errors between analytic and numeric eigenvalues."""

    analytic: np.ndarray
    numeric: np.ndarray
    rel_errors: np.ndarray
    tol: float | None = None

    @property
    def max_rel_error(self) -> float:
        return float(np.max(self.rel_errors))

    @property
    def passed(self) -> bool | None:
        if self.tol is None:
            return None
        return self.max_rel_error <= self.tol


def compare_spectra(analytic, numeric, count: int, tol: float | None = None) -> SpectrumComparison:
    """Compare the ``count`` leading eigenvalues of two lists.

    ``analytic`` may be a :class:`Spectrum` or any sequence of eigenvalues.
    Both lists are sorted in decreasing order before comparison.
    """
    if isinstance(analytic, Spectrum):
        lam_a = analytic.eigenvalues(count)
    else:
        lam_a = np.asarray(analytic, dtype=float)
    lam_n = np.asarray(numeric, dtype=float)
    if count > min(lam_a.size, lam_n.size):
        raise ValueError("count exceeds the length of an input")
    lam_a = np.sort(lam_a)[::-1][:count]
    lam_n = np.sort(lam_n)[::-1][:count]
    denom = np.where(lam_a != 0, np.abs(lam_a), 1.0)
    return SpectrumComparison(lam_a, lam_n, np.abs(lam_n - lam_a) / denom, tol)
