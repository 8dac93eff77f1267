"""Karhunen-Loeve expansions of mean-centered and weighted Wiener processes.

Analytic eigen-systems (``spectra``), closed-form kernels (``kernels``), a
Nystrom oracle (``nystrom``), laws of squared L2 norms (``quadform``) and
Monte Carlo path samplers (``sampler``).
"""

from .bessel import (
    BesselZero,
    bessel_zero,
    bessel_zeros,
    besselj,
    besselj_derivative,
    besselj_scaled,
    besselj_weighted_derivative_check,
    mcmahon,
)
from .errors import (
    ConvergenceError,
    DomainError,
    KLError,
    QuadratureError,
    RangeError,
    UnsupportedProcessError,
)
from .kernels import (
    CenterOp,
    Family,
    Kernel,
    OpKind,
    ProcessSpec,
    apply_center_op,
    apply_center_ops,
    kernel_for,
    tensor_kernel,
)
from .nystrom import compare_spectra, discretize, gauss_legendre, sym_eigen
from .quadform import (
    QuadLaw,
    QuadReport,
    eigen_multiset_equal,
    ks_two_sample,
    mgf,
    moments,
    sample_quad,
)
from .sampler import (
    RandomStream,
    SamplePath,
    l2_norm_sq,
    mc_quad_identity,
    sample_grid,
    sample_kl,
    sample_wiener_grid,
    transform_path,
)
from .spectra import (
    Spectrum,
    partial_trace,
    spectrum_bridge,
    spectrum_for,
    spectrum_sheet_mean_centered,
    spectrum_w0,
    spectrum_weighted_bridge,
    spectrum_wgamma,
)

__version__ = "0.1.0"
